use dai_core::certify::{
    assemble_phi, assemble_psi_affine, gain_basis, hull_vertices, psi_dim, psi_matrix,
    remark2_bound, CertifyOptions, CertifySetup, ChannelMode, Decision, DecisionLayout,
    DelayBounds, InteriorPoint, Psi44Coupling, PsiData,
};
use dai_core::linalg::{max_abs, min_eigenvalue};
use dai_core::reduction::build_reduction;
use dai_core::synth::{random_case, SynthRanges};
use dai_core::{DaiParams, Graph, TopologySet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pd(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(r, r) * 0.1
}

fn random_decision(rng: &mut ChaCha8Rng, r: usize, channels: usize) -> Decision {
    Decision {
        s: (0..channels).map(|_| random_pd(rng, r)).collect(),
        r: (0..channels).map(|_| random_pd(rng, r)).collect(),
        s12: (0..channels)
            .map(|_| DMatrix::from_fn(r, r, |_, _| rng.random_range(-0.5..0.5)))
            .collect(),
    }
}

fn unit_dai(n: usize) -> DaiParams {
    DaiParams::new(
        DVector::from_element(n, 1.0),
        DVector::from_element(n, 1.0),
        1.0,
    )
    .unwrap()
}

fn setup_for(seed: u64, h: f64, coupling: Psi44Coupling) -> CertifySetup {
    let case = random_case(seed, 3, &SynthRanges::default());
    let channels = case.ts.channel_count();
    CertifySetup {
        damping: case.net.damping.clone(),
        dai: case.dai.clone(),
        ts: case.ts,
        bounds: DelayBounds::uniform(h, channels).unwrap(),
        options: CertifyOptions {
            coupling,
            ..Default::default()
        },
    }
}

/// Scalar construction of `Ψ` for two nodes (one reduced coordinate, two
/// directed channels), written out entry by entry.
fn two_node_psi_by_hand(
    kw: [f64; 2],
    d: [f64; 2],
    l: f64,
    t: [f64; 2],
    h: [f64; 2],
    s: [f64; 2],
    r: [f64; 2],
    s12: [f64; 2],
) -> DMatrix<f64> {
    let rb = h[0] * h[0] * r[0] + h[1] * h[1] * r[1];
    let (p, e1, e2) = (2, [3, 4], [5, 6]);
    let mut m = DMatrix::zeros(7, 7);
    let mut set = |i: usize, j: usize, v: f64| {
        m[(i, j)] += v;
        if i != j {
            m[(j, i)] += v;
        }
    };
    for i in 0..2 {
        for j in i..2 {
            set(i, j, -kw[i] * rb * kw[j]);
        }
        set(i, i, d[i]);
        set(i, p, kw[i] * rb * l);
        for c in 0..2 {
            set(i, e2[c], -kw[i] * rb * t[c]);
        }
    }
    set(p, p, l - l * rb * l);
    for c in 0..2 {
        set(p, e1[c], -s[c]);
        set(p, e2[c], l * rb * t[c] - s[c] - 0.5 * t[c]);
        set(e1[c], e1[c], r[c] + s[c]);
        set(e1[c], e2[c], s12[c] + s[c]);
        set(e2[c], e2[c], r[c] + s[c] - t[c] * rb * t[c]);
    }
    set(e2[0], e2[1], -t[0] * rb * t[1]);
    m
}

#[test]
fn two_node_psi_matches_hand_construction() {
    let dai = DaiParams::new(
        DVector::from_row_slice(&[1.0, 1.5]),
        DVector::from_row_slice(&[0.8, 1.2]),
        0.7,
    )
    .unwrap();
    let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
    let rs = build_reduction(&dai, &ts).unwrap();
    let kw = gain_basis(&rs, &dai);
    let damping = DVector::from_row_slice(&[0.9, 1.3]);
    let h = [0.4, 0.7];
    let vertex = &hull_vertices(&rs, &[])[0];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dec = random_decision(&mut rng, 1, 2);
    let data = PsiData {
        kw: &kw,
        damping: &damping,
        vertex,
        h: &h,
        coupling: Psi44Coupling::Full,
    };
    let got = psi_matrix(&data, &dec, true);
    let want = two_node_psi_by_hand(
        [kw[(0, 0)], kw[(1, 0)]],
        [damping[0], damping[1]],
        vertex.lbar[(0, 0)],
        [vertex.tbar[0][(0, 0)], vertex.tbar[1][(0, 0)]],
        h,
        [dec.s[0][(0, 0)], dec.s[1][(0, 0)]],
        [dec.r[0][(0, 0)], dec.r[1][(0, 0)]],
        [dec.s12[0][(0, 0)], dec.s12[1][(0, 0)]],
    );
    assert!(max_abs(&(got - want)) < 1e-14);
}

#[test]
fn zero_delay_bounds_drop_every_delay_term() {
    let case = random_case(3, 4, &SynthRanges::default());
    let dai = case.dai.with_kappa(0.8);
    let rs = build_reduction(&dai, &case.ts).unwrap();
    let kw = gain_basis(&rs, &dai);
    let c = case.ts.channel_count();
    let h = vec![0.0; c];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dec = random_decision(&mut rng, 3, c);
    let vertex = &hull_vertices(&rs, &[])[1];
    let data = PsiData {
        kw: &kw,
        damping: &case.net.damping,
        vertex,
        h: &h,
        coupling: Psi44Coupling::Full,
    };
    let psi = psi_matrix(&data, &dec, true);
    let (n, r) = (4, 3);
    let oe2 = n + r + c * r;
    assert_eq!(psi.nrows(), psi_dim(n, c));
    assert_eq!(
        psi.view((0, 0), (n, n)),
        DMatrix::from_diagonal(&case.net.damping)
    );
    assert!(max_abs(&(psi.view((n, n), (r, r)).into_owned() - &vertex.lbar)) < 1e-15);
    assert!(psi.view((0, n), (n, r)).iter().all(|&x| x == 0.0));
    assert!(psi.view((0, oe2), (n, c * r)).iter().all(|&x| x == 0.0));
    for m in 0..c {
        for j in 0..c {
            let block = psi.view((oe2 + m * r, oe2 + j * r), (r, r)).into_owned();
            let want = if m == j {
                &dec.r[m] + &dec.s[m]
            } else {
                DMatrix::zeros(r, r)
            };
            assert!(max_abs(&(block - want)) < 1e-15);
        }
    }
}

#[test]
fn affine_form_reproduces_dense_psi() {
    let case = random_case(8, 3, &SynthRanges::default());
    let rs = build_reduction(&case.dai, &case.ts).unwrap();
    let kw = gain_basis(&rs, &case.dai);
    let c = case.ts.channel_count();
    let h: Vec<f64> = (0..c).map(|m| 0.1 + 0.05 * m as f64).collect();
    let layout = DecisionLayout {
        dim: 2,
        channels: c,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dec = random_decision(&mut rng, 2, c);
    for coupling in [Psi44Coupling::Full, Psi44Coupling::BlockDiagonal] {
        let vertex = &hull_vertices(&rs, &[])[0];
        let data = PsiData {
            kw: &kw,
            damping: &case.net.damping,
            vertex,
            h: &h,
            coupling,
        };
        let affine = assemble_psi_affine(&data, &layout).unwrap();
        let dense = psi_matrix(&data, &dec, true);
        assert!(max_abs(&(affine.eval(&layout.flatten(&dec)) - &dense)) < 1e-12);
        assert!(max_abs(&(&dense - dense.transpose())) == 0.0);
    }
}

#[test]
fn phi_split_matches_psi() {
    let case = random_case(21, 3, &SynthRanges::default());
    let kappa = 0.37;
    let h = 0.6;
    let hat = case.dai.with_kappa(1.0);
    let rs_hat = build_reduction(&hat, &case.ts).unwrap();
    let rs = build_reduction(&case.dai.with_kappa(kappa), &case.ts).unwrap();
    let kw_hat = gain_basis(&rs_hat, &hat);
    let kw = gain_basis(&rs, &case.dai.with_kappa(kappa));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for mode in [ChannelMode::Directed, ChannelMode::PerLink] {
        let c = mode.count(case.ts.channel_count());
        let bounds = DelayBounds::uniform(h, c).unwrap();
        let dec_hat = random_decision(&mut rng, 2, c);
        let dec = Decision {
            s: dec_hat.s.iter().map(|s| s * kappa).collect(),
            ..dec_hat.clone()
        };
        for coupling in [Psi44Coupling::Full, Psi44Coupling::BlockDiagonal] {
            for ell in 0..case.ts.len() {
                let v_hat = hull_vertices(&rs_hat, &[])[ell].with_mode(mode);
                let v = hull_vertices(&rs, &[])[ell].with_mode(mode);
                let split = assemble_phi(
                    &kw_hat,
                    &case.net.damping,
                    &v_hat,
                    &bounds,
                    kappa,
                    &dec_hat,
                    coupling,
                )
                .unwrap();
                let data = PsiData {
                    kw: &kw,
                    damping: &case.net.damping,
                    vertex: &v,
                    h: &bounds.h,
                    coupling,
                };
                let psi = psi_matrix(&data, &dec, true);
                assert!(max_abs(&(split.psi(kappa) - psi)) < 1e-12);
            }
        }
    }
}

#[test]
fn phi_needs_uniform_bounds() {
    let dai = unit_dai(2);
    let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
    let rs = build_reduction(&dai, &ts).unwrap();
    let kw = gain_basis(&rs, &dai);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dec = random_decision(&mut rng, 1, 2);
    let bounds = DelayBounds::new(vec![0.1, 0.2]).unwrap();
    let v = &hull_vertices(&rs, &[])[0];
    assert!(assemble_phi(
        &kw,
        &DVector::from_element(2, 1.0),
        v,
        &bounds,
        0.5,
        &dec,
        Psi44Coupling::Full
    )
    .is_err());
}

#[test]
fn remark2_bound_separates_definiteness() {
    let case = random_case(2, 4, &SynthRanges::default());
    let hat = case.dai.with_kappa(1.0);
    let rs = build_reduction(&hat, &case.ts).unwrap();
    let kw = gain_basis(&rs, &hat);
    let c = case.ts.channel_count();
    let h = 0.8;
    let bounds = DelayBounds::uniform(h, c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dec = random_decision(&mut rng, 3, c);
    let r_sum = dec.r.iter().fold(DMatrix::zeros(3, 3), |a, m| a + m);
    for (ell, v) in hull_vertices(&rs, &[]).iter().enumerate() {
        let bound = remark2_bound(&v.lbar, &r_sum, h);
        for step in 1..60 {
            let kappa = bound * step as f64 / 30.0;
            if (kappa - bound).abs() < 1e-9 * bound {
                continue;
            }
            let split = assemble_phi(
                &kw,
                &case.net.damping,
                v,
                &bounds,
                kappa,
                &dec,
                Psi44Coupling::Full,
            )
            .unwrap();
            let phi22 = split.phi.view((4, 4), (3, 3)).into_owned();
            assert_eq!(
                min_eigenvalue(&phi22) > 0.0,
                kappa < bound,
                "topology {ell}, kappa {kappa}, bound {bound}"
            );
        }
    }
}

#[test]
fn vertex_convexity_holds_at_midpoints() {
    for seed in [1, 2, 3] {
        let setup = setup_for(seed, 0.3, Psi44Coupling::Full);
        let kappa = 0.2;
        let res = setup.check(kappa, &InteriorPoint).unwrap();
        assert!(res.feasible, "seed {seed}");
        let mid = setup.midpoint_margin(kappa, &res.witness).unwrap();
        assert!(mid >= res.delta / 2.0, "seed {seed}: {mid}");
    }
}

#[test]
fn hull_counts_and_singleton() {
    let case = random_case(
        4,
        4,
        &SynthRanges {
            topologies: 4,
            ..Default::default()
        },
    );
    let rs = build_reduction(&case.dai, &case.ts).unwrap();
    assert_eq!(hull_vertices(&rs, &[]).len(), 4);
    let extra = hull_vertices(&rs, &[])[0]
        .blend(&hull_vertices(&rs, &[])[1], 0.3)
        .unwrap();
    assert_eq!(hull_vertices(&rs, &[extra]).len(), 5);

    let single = TopologySet::new(vec![case.ts.graphs()[0].clone()]).unwrap();
    let c = single.channel_count();
    let setup = CertifySetup {
        damping: case.net.damping.clone(),
        dai: case.dai.clone(),
        ts: single,
        bounds: DelayBounds::uniform(0.4, c).unwrap(),
        options: CertifyOptions::default(),
    };
    for kappa in [0.3, 5.0] {
        let res = setup.check(kappa, &InteriorPoint).unwrap();
        let mid = setup.midpoint_margin(kappa, &res.witness).unwrap();
        assert!((mid - res.margin).abs() < 1e-10 * (1.0 + res.margin.abs()));
    }
}

#[test]
fn extra_vertices_can_only_tighten() {
    let setup = setup_for(6, 0.3, Psi44Coupling::Full);
    let base = setup.max_gain(&InteriorPoint, 1.0, 1e-2).unwrap();
    let (_, rs, _) = setup.vertices(1.0).unwrap();
    let v = hull_vertices(&rs, &[]);
    let mut extra = v[0].blend(&v[1], 0.5).unwrap();
    extra.lbar *= 1.3;
    let mut tightened = setup.clone();
    tightened.options.extra_vertices = vec![extra];
    let more = tightened.max_gain(&InteriorPoint, 1.0, 1e-2).unwrap();
    assert!(more.kappa_feas <= base.kappa_feas + 1e-2);
}

#[test]
fn delay_free_search_reaches_the_cap() {
    let setup = setup_for(5, 0.0, Psi44Coupling::Full);
    let g = setup.max_gain(&InteriorPoint, 0.5, 1e-2).unwrap();
    assert!(g.capped);
    assert_eq!(g.kappa_feas, 512.0);
    assert_eq!(g.kappa_infeas, None);
}

#[test]
fn feasibility_is_monotone_in_gain() {
    for seed in 0..10 {
        let setup = setup_for(100 + seed, 0.5, Psi44Coupling::Full);
        let g = setup.max_gain(&InteriorPoint, 2.0, 1e-2).unwrap();
        assert!(!g.capped);
        for f in [0.5, 0.25] {
            let k = f * g.kappa_feas;
            let res = setup.check(k, &InteriorPoint).unwrap();
            assert!(
                res.feasible,
                "seed {seed}: {k} infeasible below {}",
                g.kappa_feas
            );
        }
    }
}

#[test]
fn larger_delay_bounds_certify_less() {
    let mut last = f64::INFINITY;
    for h in [0.1, 0.5, 1.5] {
        let setup = setup_for(7, h, Psi44Coupling::Full);
        let k = setup
            .max_gain(&InteriorPoint, 2.0, 1e-3)
            .unwrap()
            .kappa_feas;
        assert!(k <= last + 1e-3, "h={h}: {k} > {last}");
        last = k;
    }
}

#[test]
fn witness_is_verified_by_eigenvalues() {
    let setup = setup_for(12, 0.4, Psi44Coupling::Full);
    let res = setup.check(0.3, &InteriorPoint).unwrap();
    assert!(res.feasible);
    let problem = setup.problem(0.3).unwrap();
    let check = problem.verify(&res.witness);
    assert!(check.pass);
    assert!(check.psi_min.iter().all(|&x| x >= res.delta / 2.0));
    assert!(check.s_min >= res.delta / 2.0 && check.r_min >= res.delta / 2.0);
    assert!(check.rs12_min >= 0.0);
    let json: serde_json::Value =
        serde_json::from_str(&dai_core::certify::witness_json(&res, 0.3).unwrap()).unwrap();
    assert_eq!(
        json["channels"].as_array().unwrap().len(),
        setup.ts.channel_count()
    );
}
