//! Delay-dependent LMI certificate over all topologies with one common set of
//! decision matrices, its SDP feasibility check, and the gain search.

pub mod lmi;
pub mod phi;
pub mod sdp;
pub mod search;
pub mod witness;

use nalgebra::{DMatrix, DVector};

pub use lmi::{
    assemble_psi_affine, psi_dim, psi_matrix, rs12_matrix, AffineMatrix, ChannelMode, Decision,
    DecisionLayout, DelayBounds, Psi44Coupling, PsiData, Vertex,
};
pub use phi::{assemble_phi, remark2_bound, PhiDecomposition};
pub use sdp::{InteriorPoint, LmiBlock, SdpOptions, SdpOracle, SdpProblem, SdpSolution, SdpStatus};
pub use search::{max_gain_search, GainProbe, GainSearch};
pub use witness::{witness_json, write_witness};

use crate::error::{check_len, Error, Result};
use crate::graph::TopologySet;
use crate::linalg::min_eigenvalue;
use crate::netmodel::DaiParams;
use crate::reduction::{build_reduction, gain_sqrt, ReducedSystem};

/// The given topologies as vertices, followed by `extra`.
pub fn hull_vertices(rs: &ReducedSystem, extra: &[Vertex]) -> Vec<Vertex> {
    rs.lbar
        .iter()
        .zip(&rs.tbar)
        .map(|(l, t)| Vertex {
            lbar: l.clone(),
            tbar: t.clone(),
        })
        .chain(extra.iter().cloned())
        .collect()
}

/// `K^{½}W`.
pub fn gain_basis(rs: &ReducedSystem, dai: &DaiParams) -> DMatrix<f64> {
    let ks = gain_sqrt(dai);
    let mut kw = rs.w.clone();
    for i in 0..kw.nrows() {
        kw.row_mut(i).scale_mut(ks[i]);
    }
    kw
}

/// Assembled certificate: one affine `Ψ` per vertex plus the strictness margin.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub layout: DecisionLayout,
    pub psi: Vec<AffineMatrix>,
    pub bounds: DelayBounds,
    /// `Ψ ⪰ δI`, `S_m ⪰ δI`, `R_m ⪰ δI` stand in for the strict inequalities.
    pub delta: f64,
}

pub fn build_problem(
    rs: &ReducedSystem,
    damping: &DVector<f64>,
    dai: &DaiParams,
    bounds: &DelayBounds,
    vertices: &[Vertex],
    coupling: Psi44Coupling,
    delta_rel: f64,
) -> Result<LmiProblem> {
    let n = rs.w.nrows();
    check_len("damping", damping.len(), n)?;
    if vertices.is_empty() {
        return Err(Error::InvalidParameter("no vertices to certify".into()));
    }
    let channels = vertices[0].tbar.len();
    check_len("delay bounds", bounds.len(), channels)?;
    let layout = DecisionLayout {
        dim: n - 1,
        channels,
    };
    let kw = gain_basis(rs, dai);
    let psi = vertices
        .iter()
        .map(|v| {
            let data = PsiData {
                kw: &kw,
                damping,
                vertex: v,
                h: &bounds.h,
                coupling,
            };
            assemble_psi_affine(&data, &layout)
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = psi
        .iter()
        .map(|p| crate::linalg::max_abs(&p.constant))
        .fold(0.0, f64::max);
    Ok(LmiProblem {
        layout,
        psi,
        bounds: bounds.clone(),
        delta: delta_rel * scale,
    })
}

impl LmiProblem {
    /// Index of the margin variable `t` in the SDP.
    pub fn margin_var(&self) -> usize {
        self.layout.len()
    }

    /// `max t` s.t. `Ψ_ℓ − (δ+t)I ⪰ 0`, `S_m, R_m − (δ+t)I ⪰ 0`, `rs12_m − tI ⪰ 0`.
    pub fn to_sdp(&self) -> SdpProblem {
        let nv = self.layout.len() + 1;
        let t = self.margin_var();
        let ident = |d: usize| (0..d).map(|i| (i, i, -1.0)).collect::<Vec<_>>();
        let mut blocks = Vec::new();
        for p in &self.psi {
            let d = p.constant.nrows();
            let mut terms: Vec<_> = p
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_empty())
                .map(|(i, c)| (i, c.clone()))
                .collect();
            terms.push((t, ident(d)));
            blocks.push(LmiBlock {
                constant: &p.constant - DMatrix::identity(d, d) * self.delta,
                terms,
            });
        }
        let r = self.layout.dim;
        let sym_terms = |offset: usize, shift: usize| {
            let mut terms = Vec::new();
            let mut idx = offset;
            for c in 0..r {
                for row in 0..=c {
                    let mut trip = vec![(row + shift, c + shift, 1.0)];
                    if row != c {
                        trip.push((c + shift, row + shift, 1.0));
                    }
                    terms.push((idx, trip));
                    idx += 1;
                }
            }
            terms
        };
        for m in 0..self.layout.channels {
            for offset in [self.layout.s_offset(m), self.layout.r_offset(m)] {
                let mut terms = sym_terms(offset, 0);
                terms.push((t, ident(r)));
                blocks.push(LmiBlock {
                    constant: DMatrix::identity(r, r) * -self.delta,
                    terms,
                });
            }
            // rs12: R_m on both diagonal blocks, S12_m off-diagonal.
            let mut terms: Vec<(usize, Vec<(usize, usize, f64)>)> =
                sym_terms(self.layout.r_offset(m), 0)
                    .into_iter()
                    .zip(sym_terms(self.layout.r_offset(m), r))
                    .map(|((i, mut a), (_, b))| {
                        a.extend(b);
                        (i, a)
                    })
                    .collect();
            let o = self.layout.s12_offset(m);
            for col in 0..r {
                for row in 0..r {
                    terms.push((
                        o + col * r + row,
                        vec![(row, r + col, 1.0), (r + col, row, 1.0)],
                    ));
                }
            }
            terms.push((t, ident(2 * r)));
            blocks.push(LmiBlock {
                constant: DMatrix::zeros(2 * r, 2 * r),
                terms,
            });
        }
        let mut objective = DVector::zeros(nv);
        objective[t] = 1.0;
        SdpProblem {
            num_vars: nv,
            objective,
            blocks,
        }
    }

    /// Solver-independent eigenvalue check of a candidate.
    pub fn verify(&self, dec: &Decision) -> WitnessCheck {
        let x = self.layout.flatten(dec);
        let psi_min: Vec<f64> = self
            .psi
            .iter()
            .map(|p| min_eigenvalue(&p.eval(&x)))
            .collect();
        let fold = |v: &mut dyn Iterator<Item = f64>| v.fold(f64::INFINITY, f64::min);
        let s_min = fold(&mut dec.s.iter().map(min_eigenvalue));
        let r_min = fold(&mut dec.r.iter().map(min_eigenvalue));
        let rs12_min =
            fold(&mut (0..self.layout.channels).map(|m| min_eigenvalue(&rs12_matrix(dec, m))));
        let half = 0.5 * self.delta;
        let pass =
            psi_min.iter().all(|&l| l >= half) && s_min >= half && r_min >= half && rs12_min >= 0.0;
        WitnessCheck {
            psi_min,
            s_min,
            r_min,
            rs12_min,
            pass,
        }
    }
}

/// Smallest eigenvalues of every constraint at a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCheck {
    pub psi_min: Vec<f64>,
    pub s_min: f64,
    pub r_min: f64,
    pub rs12_min: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertResult {
    pub feasible: bool,
    /// Decision matrices from the solver's final iterate.
    pub witness: Decision,
    pub check: WitnessCheck,
    /// `min_ℓ λ_min(Ψ_ℓ)` at the witness.
    pub margin: f64,
    /// Optimal (or early-exit) value of the margin variable.
    pub t: f64,
    pub delta: f64,
    pub status: SdpStatus,
    pub iterations: usize,
}

/// Solves the certificate SDP; `feasible` requires `t ≥ 0` and a passing
/// eigenvalue check.
pub fn check_feasibility(
    problem: &LmiProblem,
    oracle: &dyn SdpOracle,
    options: &SdpOptions,
) -> Result<CertResult> {
    let sdp = problem.to_sdp();
    let opts = SdpOptions {
        target: options.target.or(Some(0.0)),
        ..*options
    };
    let sol = oracle.solve(&sdp, &opts)?;
    if sol.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Oracle("solver returned non-finite values".into()));
    }
    let t = sol.y[problem.margin_var()];
    let witness = problem.layout.decision(sol.y.as_slice());
    let check = problem.verify(&witness);
    let margin = check.psi_min.iter().cloned().fold(f64::INFINITY, f64::min);
    let decided = matches!(
        sol.status,
        SdpStatus::Optimal | SdpStatus::TargetReached | SdpStatus::BelowTarget
    );
    if !decided && !check.pass {
        return Err(Error::Oracle(format!(
            "solver stopped after {} iterations without a verdict",
            sol.iterations
        )));
    }
    Ok(CertResult {
        feasible: t >= 0.0 && check.pass && sol.status != SdpStatus::BelowTarget,
        witness,
        margin,
        t,
        delta: problem.delta,
        status: sol.status,
        iterations: sol.iterations,
        check,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub delta_rel: f64,
    pub coupling: Psi44Coupling,
    pub channels: ChannelMode,
    /// Additional vertices given at unit gain (`κ = 1`) with one channel per
    /// delay of `channels`; scaled by `κ`.
    pub extra_vertices: Vec<Vertex>,
    pub sdp: SdpOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            delta_rel: 1e-7,
            coupling: Psi44Coupling::default(),
            channels: ChannelMode::default(),
            extra_vertices: Vec::new(),
            sdp: SdpOptions::default(),
        }
    }
}

/// Everything needed to certify a given gain `κ`.
#[derive(Debug, Clone)]
pub struct CertifySetup {
    pub damping: DVector<f64>,
    /// Cost and base gain; its `kappa` is ignored.
    pub dai: DaiParams,
    pub ts: TopologySet,
    pub bounds: DelayBounds,
    pub options: CertifyOptions,
}

impl CertifySetup {
    /// Controller at `kappa`, its reduction, and the vertices to certify.
    pub fn vertices(&self, kappa: f64) -> Result<(DaiParams, ReducedSystem, Vec<Vertex>)> {
        let dai = self.dai.with_kappa(kappa);
        let rs = build_reduction(&dai, &self.ts)?;
        let mode = self.options.channels;
        let extra = self.options.extra_vertices.iter().map(|v| Vertex {
            lbar: &v.lbar * kappa,
            tbar: v.tbar.iter().map(|t| t * kappa).collect(),
        });
        let vertices = hull_vertices(&rs, &[])
            .iter()
            .map(|v| v.with_mode(mode))
            .chain(extra)
            .collect();
        Ok((dai, rs, vertices))
    }

    pub fn problem(&self, kappa: f64) -> Result<LmiProblem> {
        let (dai, rs, vertices) = self.vertices(kappa)?;
        build_problem(
            &rs,
            &self.damping,
            &dai,
            &self.bounds,
            &vertices,
            self.options.coupling,
            self.options.delta_rel,
        )
    }

    /// Smallest eigenvalue of `Ψ` at `witness` over all pairwise midpoints of
    /// the vertices (the single vertex when there is only one).
    pub fn midpoint_margin(&self, kappa: f64, witness: &Decision) -> Result<f64> {
        let (dai, rs, vertices) = self.vertices(kappa)?;
        let kw = gain_basis(&rs, &dai);
        let eval = |v: &Vertex| {
            let data = PsiData {
                kw: &kw,
                damping: &self.damping,
                vertex: v,
                h: &self.bounds.h,
                coupling: self.options.coupling,
            };
            min_eigenvalue(&psi_matrix(&data, witness, true))
        };
        if vertices.len() == 1 {
            return Ok(eval(&vertices[0]));
        }
        let mut worst = f64::INFINITY;
        for i in 0..vertices.len() {
            for j in i + 1..vertices.len() {
                worst = worst.min(eval(&vertices[i].blend(&vertices[j], 0.5)?));
            }
        }
        Ok(worst)
    }

    pub fn check(&self, kappa: f64, oracle: &dyn SdpOracle) -> Result<CertResult> {
        check_feasibility(&self.problem(kappa)?, oracle, &self.options.sdp)
    }

    /// Largest certified gain, see [`max_gain_search`].
    pub fn max_gain(
        &self,
        oracle: &dyn SdpOracle,
        kappa_init: f64,
        tol: f64,
    ) -> Result<GainSearch> {
        max_gain_search(
            |k| self.check(k, oracle).map(|r| r.feasible),
            kappa_init,
            tol,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn two_node_setup(h: f64) -> (ReducedSystem, DaiParams, DVector<f64>, DelayBounds) {
        let dai = DaiParams::new(
            DVector::from_element(2, 1.0),
            DVector::from_element(2, 1.0),
            1.0,
        )
        .unwrap();
        let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
        let rs = build_reduction(&dai, &ts).unwrap();
        (
            rs,
            dai,
            DVector::from_element(2, 1.0),
            DelayBounds::uniform(h, 2).unwrap(),
        )
    }

    #[test]
    fn psi_dimension() {
        assert_eq!(psi_dim(4, 8), 55);
        let (rs, dai, d, b) = two_node_setup(0.5);
        let p = build_problem(
            &rs,
            &d,
            &dai,
            &b,
            &hull_vertices(&rs, &[]),
            Psi44Coupling::Full,
            1e-7,
        )
        .unwrap();
        assert_eq!(p.psi[0].constant.nrows(), psi_dim(2, 2));
        assert_eq!(p.layout.len(), 2 * 3);
    }

    #[test]
    fn hand_witness_is_feasible() {
        let (rs, dai, d, b) = two_node_setup(0.0);
        let p = build_problem(
            &rs,
            &d,
            &dai,
            &b,
            &hull_vertices(&rs, &[]),
            Psi44Coupling::BlockDiagonal,
            1e-7,
        )
        .unwrap();
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let dec = Decision {
            s: vec![one(0.1); 2],
            r: vec![one(1.0); 2],
            s12: vec![one(0.0); 2],
        };
        let check = p.verify(&dec);
        assert!(check.pass, "{check:?}");
        let res = check_feasibility(&p, &InteriorPoint, &SdpOptions::default()).unwrap();
        assert!(res.feasible);
        assert!(res.check.pass);
    }

    #[test]
    fn bounds_mismatch_rejected() {
        let (rs, dai, d, _) = two_node_setup(0.0);
        let b = DelayBounds::uniform(0.1, 3).unwrap();
        assert!(build_problem(
            &rs,
            &d,
            &dai,
            &b,
            &hull_vertices(&rs, &[]),
            Psi44Coupling::Full,
            1e-7
        )
        .is_err());
        assert!(DelayBounds::new(vec![-1.0]).is_err());
    }

    #[test]
    fn sdp_translation_matches_affine_form() {
        let (rs, dai, d, b) = two_node_setup(0.3);
        let p = build_problem(
            &rs,
            &d,
            &dai,
            &b,
            &hull_vertices(&rs, &[]),
            Psi44Coupling::Full,
            1e-7,
        )
        .unwrap();
        let sdp = p.to_sdp();
        let x: Vec<f64> = (0..p.layout.len()).map(|i| 0.1 + 0.07 * i as f64).collect();
        let y = DVector::from_column_slice(&x).push(0.02);
        let dec = p.layout.decision(&x);
        let psi = p.psi[0].eval(&x);
        let dim = psi.nrows();
        let want = &psi - DMatrix::identity(dim, dim) * (p.delta + 0.02);
        assert!((sdp.blocks[0].eval(&y) - want).amax() < 1e-14);
        let rs12 = rs12_matrix(&dec, 1) - DMatrix::identity(2, 2) * 0.02;
        assert!((sdp.blocks.last().unwrap().eval(&y) - rs12).amax() < 1e-14);
    }
}
