//! Orthogonal reduction of the integral states and error coordinates.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::graph::{self, TopologySet};
use crate::netmodel::{grad_potential, DaiParams, GridState, Line, PowerNetwork};

/// Everything the reduced error dynamics and the LMI consume.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    /// n × (n−1), orthonormal columns spanning the complement of `K^{-½}A⁻¹1`.
    pub w: DMatrix<f64>,
    /// `‖K^{-½}A⁻¹1‖²`.
    pub mu: f64,
    /// Reduced Laplacians `L̄_ℓ`.
    pub lbar: Vec<DMatrix<f64>>,
    /// Reduced channel matrices `𝒯_{ℓ,m}`.
    pub tbar: Vec<Vec<DMatrix<f64>>>,
}

/// Error coordinates around the synchronized motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub theta: DVector<f64>,
    pub omega: DVector<f64>,
    /// Reduced integral error, length n−1.
    pub p: DVector<f64>,
}

impl ErrorState {
    pub fn zeros(n: usize) -> Self {
        Self {
            theta: DVector::zeros(n),
            omega: DVector::zeros(n),
            p: DVector::zeros(n.saturating_sub(1)),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.theta
            .iter()
            .chain(self.omega.iter())
            .chain(self.p.iter())
            .copied()
            .collect()
    }

    pub fn from_slice(n: usize, y: &[f64]) -> Self {
        Self {
            theta: DVector::from_column_slice(&y[..n]),
            omega: DVector::from_column_slice(&y[n..2 * n]),
            p: DVector::from_column_slice(&y[2 * n..3 * n - 1]),
        }
    }
}

/// Householder complement of the direction `v`: columns 2..n of the reflector
/// mapping `v/‖v‖` to `e1`.
pub fn complement_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let mut u = v / v.norm();
    if u[0] < 0.0 {
        u.neg_mut();
    }
    let tail: f64 = u.iter().skip(1).map(|x| x * x).sum();
    let mut h = DMatrix::identity(n, n);
    if tail > 0.0 {
        let mut w = u.clone();
        // u1 - 1 without cancellation.
        w[0] = -tail / (u[0] + 1.0);
        let scale = 2.0 / w.norm_squared();
        h -= &w * w.transpose() * scale;
    }
    h.columns(1, n - 1).into_owned()
}

pub(crate) fn gain_sqrt(dai: &DaiParams) -> DVector<f64> {
    dai.gain().map(f64::sqrt)
}

pub fn build_reduction(dai: &DaiParams, ts: &TopologySet) -> Result<ReducedSystem> {
    let n = dai.n();
    check_len("topology nodes", ts.n(), n)?;
    if !(dai.kappa > 0.0) {
        return Err(Error::InvalidParameter(
            "kappa must be > 0 for the reduction".into(),
        ));
    }
    let diag = graph::validate_topology_set(ts);
    if let Some(index) = diag.first_disconnected() {
        return Err(Error::Disconnected { index });
    }
    let ks = gain_sqrt(dai);
    let a_inv = dai.cost_inv_ones();
    let v = a_inv.component_div(&ks);
    let mu = v.norm_squared();
    let w = complement_basis(&v);
    // G = A K^{½} W
    let mut g = w.clone();
    for i in 0..n {
        g.row_mut(i).scale_mut(dai.cost[i] * ks[i]);
    }
    let gt = g.transpose();
    let tbar: Vec<Vec<DMatrix<f64>>> = graph::channel_matrices(ts)?
        .iter()
        .map(|ts_ell| ts_ell.iter().map(|t| &gt * t * &g).collect())
        .collect();
    let lbar = ts
        .graphs()
        .iter()
        .map(|gr| crate::linalg::symmetrize(&(&gt * graph::laplacian(gr) * &g)))
        .collect();
    Ok(ReducedSystem { w, mu, lbar, tbar })
}

/// `(p̄, ζ)` with `p̄ = WᵀK^{-½}p` and `ζ = μ^{-½} 1ᵀA⁻¹K⁻¹p`.
pub fn to_reduced_p(
    rs: &ReducedSystem,
    dai: &DaiParams,
    p: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    check_len("p", p.len(), rs.w.nrows())?;
    let ks = gain_sqrt(dai);
    let q = p.component_div(&ks);
    let v = dai.cost_inv_ones().component_div(&ks);
    Ok((rs.w.tr_mul(&q), v.dot(&q) / rs.mu.sqrt()))
}

/// Inverse of [`to_reduced_p`].
pub fn from_reduced_p(
    rs: &ReducedSystem,
    dai: &DaiParams,
    pbar: &DVector<f64>,
    zeta: f64,
) -> Result<DVector<f64>> {
    check_len("pbar", pbar.len(), rs.w.ncols())?;
    let ks = gain_sqrt(dai);
    let v = dai.cost_inv_ones().component_div(&ks);
    let q = &rs.w * pbar + v * (zeta / rs.mu.sqrt());
    Ok(q.component_mul(&ks))
}

/// The conserved quantity `ζ̄₀ = μ^{-½} 1ᵀA⁻¹(K⁻¹p₀ − θ₀)`.
///
/// Conservation holds when both directions of every edge share a delay.
pub fn zeta0(rs: &ReducedSystem, dai: &DaiParams, theta0: &DVector<f64>, p0: &DVector<f64>) -> f64 {
    let a = dai.cost_inv_ones();
    let kp = p0.component_div(&dai.gain());
    a.dot(&(kp - theta0)) / rs.mu.sqrt()
}

/// Shifts `theta_star` uniformly so that
/// `1ᵀA⁻¹θ* = 1ᵀA⁻¹θ₀ + 1ᵀA⁻¹K⁻¹(p* − p₀)`, which makes the error
/// coordinates of `(θ₀, ·, p₀)` consistent with the reconstruction map.
pub fn align_gauge(
    dai: &DaiParams,
    theta_star: &DVector<f64>,
    p_star: &DVector<f64>,
    theta0: &DVector<f64>,
    p0: &DVector<f64>,
) -> DVector<f64> {
    let a = dai.cost_inv_ones();
    let target = a.dot(theta0) + a.dot(&(p_star - p0).component_div(&dai.gain()));
    let shift = (target - a.dot(theta_star)) / a.sum();
    theta_star.add_scalar(shift)
}

/// Reference point for the error coordinates: `θ*₀` (gauge aligned), `p*`,
/// and `ω^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub theta_star: DVector<f64>,
    pub p_star: DVector<f64>,
    pub omega_nom: f64,
}

/// Original state at time `t` → error state.
pub fn to_error_state(
    rs: &ReducedSystem,
    dai: &DaiParams,
    op: &OperatingPoint,
    state: &GridState,
    t: f64,
) -> Result<ErrorState> {
    let n = rs.w.nrows();
    check_len("theta", state.theta.len(), n)?;
    let theta = &state.theta - &op.theta_star - DVector::from_element(n, op.omega_nom * t);
    let (p, _) = to_reduced_p(rs, dai, &(&state.p - &op.p_star))?;
    Ok(ErrorState {
        theta,
        omega: state.omega.add_scalar(-op.omega_nom),
        p,
    })
}

/// Error state at time `t` → original state:
/// `p = p* + K^{½}Wp̃ + μ⁻¹A⁻¹1 1ᵀA⁻¹θ̃`.
pub fn from_error_state(
    rs: &ReducedSystem,
    dai: &DaiParams,
    op: &OperatingPoint,
    x: &ErrorState,
    t: f64,
) -> Result<GridState> {
    let n = rs.w.nrows();
    check_len("theta", x.theta.len(), n)?;
    check_len("p", x.p.len(), rs.w.ncols())?;
    let a = dai.cost_inv_ones();
    let p =
        &op.p_star + (&rs.w * &x.p).component_mul(&gain_sqrt(dai)) + &a * (a.dot(&x.theta) / rs.mu);
    Ok(GridState {
        theta: &x.theta + &op.theta_star + DVector::from_element(n, op.omega_nom * t),
        omega: x.omega.add_scalar(op.omega_nom),
        p,
    })
}

/// Precomputed reduced error vector field on the flat state `[θ̃, ω̃, p̃]`.
#[derive(Debug, Clone)]
pub struct ReducedLoop {
    n: usize,
    lines: Vec<Line>,
    theta_star: Vec<f64>,
    grad_star: Vec<f64>,
    inv_inertia: Vec<f64>,
    damping: Vec<f64>,
    /// `K^{½}W`, n × (n−1).
    kw: DMatrix<f64>,
    a: DVector<f64>,
    mu: f64,
    /// Per topology: `(m, 𝒯_{ℓ,m})` for present channels.
    channels: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl ReducedLoop {
    pub fn new(
        net: &PowerNetwork,
        dai: &DaiParams,
        rs: &ReducedSystem,
        ts: &TopologySet,
        theta_star: &DVector<f64>,
    ) -> Result<Self> {
        let n = net.n();
        check_len("theta_star", theta_star.len(), n)?;
        check_len("reduction", rs.w.nrows(), n)?;
        let ks = gain_sqrt(dai);
        let mut kw = rs.w.clone();
        for i in 0..n {
            kw.row_mut(i).scale_mut(ks[i]);
        }
        let channels = (0..ts.len())
            .map(|ell| {
                ts.present_channels(ell)
                    .into_iter()
                    .map(|m| (m, rs.tbar[ell][m].clone()))
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            lines: net.lines().to_vec(),
            theta_star: theta_star.iter().copied().collect(),
            grad_star: grad_potential(net, theta_star).iter().copied().collect(),
            inv_inertia: net.inertia.iter().map(|m| 1.0 / m).collect(),
            damping: net.damping.iter().copied().collect(),
            kw,
            a: dai.cost_inv_ones(),
            mu: rs.mu,
            channels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn topologies(&self) -> usize {
        self.channels.len()
    }

    /// `delayed(m, j)` must return `p̃_j(t − τ_m)`.
    pub fn eval(
        &self,
        y: &[f64],
        ell: usize,
        delayed: impl Fn(usize, usize) -> f64,
        dy: &mut [f64],
    ) {
        let n = self.n;
        let r = n - 1;
        let (theta, rest) = y.split_at(n);
        let (omega, p) = rest.split_at(n);
        let (dtheta, drest) = dy.split_at_mut(n);
        let (domega, dp) = drest.split_at_mut(n);
        let avg = (0..n).map(|i| self.a[i] * theta[i]).sum::<f64>() / self.mu;
        for i in 0..n {
            dtheta[i] = omega[i];
            let mut acc = -self.damping[i] * omega[i] + self.grad_star[i] - self.a[i] * avg;
            for j in 0..r {
                acc -= self.kw[(i, j)] * p[j];
            }
            domega[i] = acc;
        }
        for l in &self.lines {
            let f = l.weight
                * (theta[l.i] + self.theta_star[l.i] - theta[l.k] - self.theta_star[l.k]).sin();
            domega[l.i] -= f;
            domega[l.k] += f;
        }
        for i in 0..n {
            domega[i] *= self.inv_inertia[i];
        }
        for j in 0..r {
            dp[j] = (0..n).map(|i| self.kw[(i, j)] * omega[i]).sum();
        }
        for (m, t) in &self.channels[ell] {
            for j in 0..r {
                let mut acc = 0.0;
                for c in 0..r {
                    acc += t[(j, c)] * delayed(*m, c);
                }
                dp[j] -= acc;
            }
        }
    }
}

/// Reduced error dynamics; `delayed_pt[m]` is `p̃(t − τ_m)` for every channel.
pub fn error_rhs(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    ts: &TopologySet,
    state: &ErrorState,
    delayed_pt: &[DVector<f64>],
    ell: usize,
    theta_star: &DVector<f64>,
) -> Result<ErrorState> {
    let n = net.n();
    check_len("theta", state.theta.len(), n)?;
    check_len("omega", state.omega.len(), n)?;
    check_len("p", state.p.len(), n - 1)?;
    check_len("delayed_pt", delayed_pt.len(), ts.channel_count())?;
    for d in delayed_pt {
        check_len("delayed_pt entry", d.len(), n - 1)?;
    }
    if ell >= ts.len() {
        return Err(Error::InvalidParameter(format!(
            "topology index {ell} out of range"
        )));
    }
    let rl = ReducedLoop::new(net, dai, rs, ts, theta_star)?;
    let mut dy = vec![0.0; 3 * n - 1];
    rl.eval(&state.to_vec(), ell, |m, j| delayed_pt[m][j], &mut dy);
    Ok(ErrorState::from_slice(n, &dy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{laplacian, Graph};
    use crate::linalg::min_eigenvalue;

    fn unit(n: usize) -> DaiParams {
        DaiParams::new(
            DVector::from_element(n, 1.0),
            DVector::from_element(n, 1.0),
            1.0,
        )
        .unwrap()
    }

    fn kundur_like() -> DaiParams {
        let s = DVector::from_row_slice(&[700.0, 700.0, 719.0, 700.0]) / 900.0;
        DaiParams::new(s.clone(), s.map(|a| 0.05 / a), 1.544).unwrap()
    }

    fn gammas() -> TopologySet {
        let ring = Graph::ring(4);
        TopologySet::new(vec![
            ring.clone(),
            ring.without_edge(0, 1),
            ring.without_edge(1, 2),
            ring.without_edge(2, 3),
        ])
        .unwrap()
    }

    #[test]
    fn two_node_basis_and_mu() {
        let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
        let rs = build_reduction(&unit(2), &ts).unwrap();
        assert_eq!(rs.mu, 2.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((rs.w[(0, 0)].abs() - s).abs() < 1e-15);
        assert!((rs.w[(0, 0)] + rs.w[(1, 0)]).abs() < 1e-15);
        assert!((rs.lbar[0][(0, 0)] - 2.0).abs() < 1e-14);
        assert!((rs.tbar[0][0][(0, 0)] - 1.0).abs() < 1e-14);
        assert!((rs.tbar[0][1][(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn structural_invariants() {
        let dai = kundur_like();
        let ts = gammas();
        let rs = build_reduction(&dai, &ts).unwrap();
        let n = 4;
        assert!((rs.w.tr_mul(&rs.w) - DMatrix::identity(n - 1, n - 1)).amax() < 1e-12);
        let v = dai.cost_inv_ones().component_div(&gain_sqrt(&dai));
        assert!(rs.w.tr_mul(&v).amax() < 1e-12);
        let mut full = DMatrix::zeros(n, n);
        full.column_mut(0).copy_from(&(&v / v.norm()));
        full.columns_mut(1, n - 1).copy_from(&rs.w);
        assert!((&full * full.transpose() - DMatrix::identity(n, n)).amax() < 1e-12);
        for (ell, l) in rs.lbar.iter().enumerate() {
            assert!(min_eigenvalue(l) > 0.0);
            let sum = rs.tbar[ell]
                .iter()
                .fold(DMatrix::zeros(n - 1, n - 1), |acc, t| acc + t);
            assert!((sum - l).amax() < 1e-12);
        }
    }

    #[test]
    fn reduced_laplacian_matches_direct_formula() {
        let dai = kundur_like();
        let ts = gammas();
        let rs = build_reduction(&dai, &ts).unwrap();
        let ks = DMatrix::from_diagonal(&gain_sqrt(&dai));
        let a = DMatrix::from_diagonal(&dai.cost);
        let oracle = rs.w.transpose() * &ks * &a * laplacian(&ts.graphs()[1]) * &a * &ks * &rs.w;
        assert!((oracle - &rs.lbar[1]).amax() < 1e-14);
    }

    #[test]
    fn reflector_sign_is_fixed() {
        let v = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(complement_basis(&v), complement_basis(&(-&v)));
        assert_eq!(
            complement_basis(&DVector::from_element(1, 2.0)).shape(),
            (1, 0)
        );
        let e1 = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        assert_eq!(
            complement_basis(&e1),
            DMatrix::identity(3, 3).columns(1, 2).into_owned()
        );
    }

    #[test]
    fn reduced_p_cases() {
        let dai = unit(3);
        let ts = TopologySet::new(vec![Graph::ring(3)]).unwrap();
        let rs = build_reduction(&dai, &ts).unwrap();
        let (pb, _) = to_reduced_p(&rs, &dai, &DVector::from_element(3, 0.7)).unwrap();
        assert!(pb.amax() < 1e-15);
        let (pb0, z0) = to_reduced_p(&rs, &dai, &DVector::zeros(3)).unwrap();
        assert!(pb0.amax() == 0.0 && z0 == 0.0);
        assert_eq!(
            from_reduced_p(&rs, &dai, &DVector::zeros(2), 0.0).unwrap(),
            DVector::zeros(3)
        );

        let dai = kundur_like();
        let rs = build_reduction(&dai, &gammas()).unwrap();
        let p = DVector::from_row_slice(&[0.3, -1.2, 0.8, 0.05]);
        let (pb, z) = to_reduced_p(&rs, &dai, &p).unwrap();
        assert!((from_reduced_p(&rs, &dai, &pb, z).unwrap() - &p).amax() < 1e-13);
        let dir = from_reduced_p(&rs, &dai, &DVector::zeros(3), 1.0).unwrap();
        let ratio = dir.component_mul(&dai.cost);
        assert!((ratio.max() - ratio.min()).abs() < 1e-14);
    }

    #[test]
    fn error_rhs_zero_state() {
        let net = crate::synth::two_node_network(0.5);
        let dai = unit(2);
        let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
        let rs = build_reduction(&dai, &ts).unwrap();
        let eq = crate::netmodel::equilibrium_solve(&net, &dai, &DVector::zeros(2)).unwrap();
        let d = error_rhs(
            &net,
            &dai,
            &rs,
            &ts,
            &ErrorState::zeros(2),
            &[DVector::zeros(1), DVector::zeros(1)],
            0,
            &eq.theta,
        )
        .unwrap();
        assert!(d.theta.amax() == 0.0 && d.omega.amax() < 1e-15 && d.p.amax() == 0.0);
    }

    #[test]
    fn error_state_round_trip_and_gauge() {
        let net = crate::synth::two_node_network(0.3);
        let dai = DaiParams::new(
            DVector::from_row_slice(&[1.5, 0.5]),
            DVector::from_row_slice(&[2.0, 1.0]),
            0.7,
        )
        .unwrap();
        let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
        let rs = build_reduction(&dai, &ts).unwrap();
        let eq = crate::netmodel::equilibrium_solve(&net, &dai, &DVector::zeros(2)).unwrap();
        let ps = crate::netmodel::p_star(&net, &dai);
        let x0 = GridState {
            theta: DVector::from_row_slice(&[0.4, -0.1]),
            omega: DVector::from_row_slice(&[0.02, -0.01]),
            p: DVector::from_row_slice(&[0.1, 0.3]),
        };
        let op = OperatingPoint {
            theta_star: align_gauge(&dai, &eq.theta, &ps, &x0.theta, &x0.p),
            p_star: ps,
            omega_nom: net.omega_nom,
        };
        let e = to_error_state(&rs, &dai, &op, &x0, 0.0).unwrap();
        let back = from_error_state(&rs, &dai, &op, &e, 0.0).unwrap();
        assert!((back.p - &x0.p).amax() < 1e-13);
        assert!((back.theta - &x0.theta).amax() < 1e-13);
        assert!((back.omega - &x0.omega).amax() < 1e-15);
    }
}
