//! Lossless power network with distributed averaging integral (DAI) control.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::graph::{self, TopologySet};

/// A line `{i, k}` with coupling weight `|B_ik| V_i V_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub i: usize,
    pub k: usize,
    pub weight: f64,
}

/// Kron-reduced network on the system base.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    pub inertia: DVector<f64>,
    pub damping: DVector<f64>,
    pub voltage: DVector<f64>,
    pub susceptance: DMatrix<f64>,
    pub p_set: DVector<f64>,
    pub g_load: DVector<f64>,
    pub omega_nom: f64,
    lines: Vec<Line>,
}

impl PowerNetwork {
    pub fn new(
        inertia: DVector<f64>,
        damping: DVector<f64>,
        voltage: DVector<f64>,
        susceptance: DMatrix<f64>,
        p_set: DVector<f64>,
        g_load: DVector<f64>,
        omega_nom: f64,
    ) -> Result<Self> {
        let n = inertia.len();
        check_len("damping", damping.len(), n)?;
        check_len("voltage", voltage.len(), n)?;
        check_len("p_set", p_set.len(), n)?;
        check_len("g_load", g_load.len(), n)?;
        if susceptance.shape() != (n, n) {
            return Err(Error::Dimension(format!("susceptance must be {n}x{n}")));
        }
        let positive = |name: &str, v: &DVector<f64>| match v
            .iter()
            .position(|&x| !(x > 0.0 && x.is_finite()))
        {
            Some(i) => Err(Error::InvalidParameter(format!(
                "{name}[{i}] must be positive"
            ))),
            None => Ok(()),
        };
        positive("inertia", &inertia)?;
        positive("damping", &damping)?;
        positive("voltage", &voltage)?;
        if let Some(i) = g_load.iter().position(|&g| g < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "g_load[{i}] must be non-negative"
            )));
        }
        let mut lines = Vec::new();
        for i in 0..n {
            if susceptance[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "susceptance[{i}][{i}] must be zero"
                )));
            }
            for k in i + 1..n {
                let (b, bt) = (susceptance[(i, k)], susceptance[(k, i)]);
                if b != bt {
                    return Err(Error::InvalidParameter(format!(
                        "susceptance not symmetric at ({i}, {k})"
                    )));
                }
                if b > 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "susceptance[{i}][{k}] must be <= 0"
                    )));
                }
                if b != 0.0 {
                    lines.push(Line {
                        i,
                        k,
                        weight: b.abs() * voltage[i] * voltage[k],
                    });
                }
            }
        }
        let electrical = graph::Graph::new(n, lines.iter().map(|l| (l.i, l.k)))?;
        if !graph::is_connected(&electrical) {
            return Err(Error::InvalidParameter(
                "electrical network is not connected".into(),
            ));
        }
        Ok(Self {
            inertia,
            damping,
            voltage,
            susceptance,
            p_set,
            g_load,
            omega_nom,
            lines,
        })
    }

    pub fn n(&self) -> usize {
        self.inertia.len()
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// `P_net = P_set - G V^2`.
    pub fn p_net(&self) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| {
            self.p_set[i] - self.g_load[i] * self.voltage[i] * self.voltage[i]
        })
    }
}

/// Converts a damping coefficient given on the machine rating to the system base.
pub fn machine_to_system_damping(d_machine: f64, s_rated: f64, s_base: f64) -> f64 {
    d_machine * s_rated / s_base
}

/// Controller data: cost weights `A`, base gain `𝒦`, and scalar gain `κ`
/// (the integral gain is `K = κ𝒦`).
#[derive(Debug, Clone, PartialEq)]
pub struct DaiParams {
    pub cost: DVector<f64>,
    pub base_gain: DVector<f64>,
    pub kappa: f64,
}

impl DaiParams {
    pub fn new(cost: DVector<f64>, base_gain: DVector<f64>, kappa: f64) -> Result<Self> {
        check_len("base_gain", base_gain.len(), cost.len())?;
        if cost
            .iter()
            .chain(base_gain.iter())
            .any(|&x| !(x > 0.0 && x.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "cost and base gain must be positive".into(),
            ));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be >= 0, got {kappa}"
            )));
        }
        Ok(Self {
            cost,
            base_gain,
            kappa,
        })
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self {
            kappa,
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.cost.len()
    }

    /// Diagonal of `K`.
    pub fn gain(&self) -> DVector<f64> {
        &self.base_gain * self.kappa
    }

    /// `A^{-1} 1`.
    pub fn cost_inv_ones(&self) -> DVector<f64> {
        self.cost.map(|a| 1.0 / a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub theta: DVector<f64>,
    pub omega: DVector<f64>,
    pub p: DVector<f64>,
}

impl GridState {
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
            p: DVector::from_column_slice(&y[2 * n..3 * n]),
        }
    }
}

/// `U(θ) = -Σ_{i<k} |B_ik| V_i V_k cos(θ_i - θ_k)`.
pub fn potential(net: &PowerNetwork, theta: &DVector<f64>) -> f64 {
    -net.lines
        .iter()
        .map(|l| l.weight * (theta[l.i] - theta[l.k]).cos())
        .sum::<f64>()
}

/// Line flows `P_i(θ)`, the gradient of [`potential`].
pub fn grad_potential(net: &PowerNetwork, theta: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(net.n());
    for l in &net.lines {
        let f = l.weight * (theta[l.i] - theta[l.k]).sin();
        g[l.i] += f;
        g[l.k] -= f;
    }
    g
}

/// Cosine-weighted Laplacian `∇²U(θ)`.
pub fn hessian_potential(net: &PowerNetwork, theta: &DVector<f64>) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(net.n(), net.n());
    for l in &net.lines {
        let c = l.weight * (theta[l.i] - theta[l.k]).cos();
        h[(l.i, l.i)] += c;
        h[(l.k, l.k)] += c;
        h[(l.i, l.k)] -= c;
        h[(l.k, l.i)] -= c;
    }
    h
}

/// Identical-marginal-cost injections `p* = α A^{-1} 1`.
pub fn p_star_from(p_net: &DVector<f64>, cost: &DVector<f64>) -> DVector<f64> {
    let inv = cost.map(|a| 1.0 / a);
    let alpha = p_net.sum() / inv.sum();
    inv * alpha
}

pub fn p_star(net: &PowerNetwork, dai: &DaiParams) -> DVector<f64> {
    p_star_from(&net.p_net(), &dai.cost)
}

/// Copy of `net` with setpoints moved so that `theta_star` is the equilibrium
/// angle vector, keeping the total net injection.
pub fn with_equilibrium(
    net: &PowerNetwork,
    dai: &DaiParams,
    theta_star: &DVector<f64>,
) -> Result<PowerNetwork> {
    let n = net.n();
    check_len("theta_star", theta_star.len(), n)?;
    check_len("dai", dai.n(), n)?;
    let target = grad_potential(net, theta_star) + p_star(net, dai);
    let mut out = net.clone();
    for i in 0..n {
        out.p_set[i] = target[i] + net.g_load[i] * net.voltage[i] * net.voltage[i];
    }
    Ok(out)
}

/// Frequency of the synchronized motion for a constant input `u*`.
pub fn sync_frequency(net: &PowerNetwork, u_star: &DVector<f64>) -> f64 {
    net.omega_nom + (net.p_net() + u_star).sum() / net.damping.sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub theta: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Largest `|θ_i - θ_k|` (wrapped to `(-π, π]`) over electrical lines.
    pub max_angle_diff: f64,
    /// `max_angle_diff < π/2`.
    pub secure: bool,
}

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_HALVINGS: usize = 10;

/// Solves `∇U(θ*) = P_net - p*` by Newton's method, keeping `1ᵀA⁻¹θ` at its
/// value in `theta_guess`.
pub fn equilibrium_solve(
    net: &PowerNetwork,
    dai: &DaiParams,
    theta_guess: &DVector<f64>,
) -> Result<Equilibrium> {
    let n = net.n();
    check_len("theta_guess", theta_guess.len(), n)?;
    check_len("dai", dai.n(), n)?;
    let target = net.p_net() - p_star(net, dai);
    let gauge = dai.cost_inv_ones();
    let residual_of = |th: &DVector<f64>| grad_potential(net, th) - &target;

    let mut theta = theta_guess.clone();
    let mut res = residual_of(&theta);
    let mut res_norm = res.amax();
    let mut iterations = 0;
    while res_norm > NEWTON_TOL {
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::NoConvergence {
                iterations,
                residual: res_norm,
            });
        }
        iterations += 1;
        // Bordered system removes the uniform-shift null direction of ∇²U.
        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n))
            .copy_from(&hessian_potential(net, &theta));
        for i in 0..n {
            kkt[(i, n)] = gauge[i];
            kkt[(n, i)] = gauge[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-&res));
        let step = kkt.lu().solve(&rhs).ok_or(Error::NoConvergence {
            iterations,
            residual: res_norm,
        })?;
        let delta = step.rows(0, n).into_owned();

        let mut scale = 1.0;
        let mut halvings = 0;
        loop {
            let trial = &theta + &delta * scale;
            let trial_res = residual_of(&trial);
            let trial_norm = trial_res.amax();
            if trial_norm < res_norm || halvings == NEWTON_MAX_HALVINGS {
                theta = trial;
                res = trial_res;
                res_norm = trial_norm;
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
    }
    let max_angle_diff = net
        .lines
        .iter()
        .map(|l| wrap_angle(theta[l.i] - theta[l.k]).abs())
        .fold(0.0, f64::max);
    Ok(Equilibrium {
        theta,
        residual: res_norm,
        iterations,
        max_angle_diff,
        secure: max_angle_diff < FRAC_PI_2,
    })
}

fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = x.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r - two_pi
    } else {
        r
    }
}

/// Precomputed closed-loop vector field on the flat state `[θ, ω, p]`.
///
/// Delayed values are pulled through a callback so integrators can serve
/// them from interpolated history without materializing per-channel vectors.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    n: usize,
    lines: Vec<Line>,
    inv_inertia: Vec<f64>,
    damping: Vec<f64>,
    p_net: Vec<f64>,
    omega_nom: f64,
    gain: Vec<f64>,
    cost: Vec<f64>,
    /// Per topology: `(m, i, k)` for each present channel.
    present: Vec<Vec<(usize, usize, usize)>>,
}

impl ClosedLoop {
    pub fn new(net: &PowerNetwork, dai: &DaiParams, ts: &TopologySet) -> Result<Self> {
        let n = net.n();
        check_len("dai", dai.n(), n)?;
        check_len("topology nodes", ts.n(), n)?;
        let present = (0..ts.len())
            .map(|ell| {
                ts.present_channels(ell)
                    .into_iter()
                    .map(|m| (m, ts.channels()[m].i, ts.channels()[m].k))
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            lines: net.lines.clone(),
            inv_inertia: net.inertia.iter().map(|m| 1.0 / m).collect(),
            damping: net.damping.iter().copied().collect(),
            p_net: net.p_net().iter().copied().collect(),
            omega_nom: net.omega_nom,
            gain: dai.gain().iter().copied().collect(),
            cost: dai.cost.iter().copied().collect(),
            present,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn topologies(&self) -> usize {
        self.present.len()
    }

    /// `delayed(m, j)` must return `p_j(t - τ_m)`.
    pub fn eval(
        &self,
        y: &[f64],
        ell: usize,
        delayed: impl Fn(usize, usize) -> f64,
        dy: &mut [f64],
    ) {
        let n = self.n;
        let (theta, rest) = y.split_at(n);
        let (omega, p) = rest.split_at(n);
        let (dtheta, drest) = dy.split_at_mut(n);
        let (domega, dp) = drest.split_at_mut(n);
        for i in 0..n {
            let w = omega[i] - self.omega_nom;
            dtheta[i] = omega[i];
            domega[i] = -self.damping[i] * w + self.p_net[i] - p[i];
            dp[i] = self.gain[i] * w;
        }
        for l in &self.lines {
            let f = l.weight * (theta[l.i] - theta[l.k]).sin();
            domega[l.i] -= f;
            domega[l.k] += f;
        }
        for i in 0..n {
            domega[i] *= self.inv_inertia[i];
        }
        for &(m, i, k) in &self.present[ell] {
            let err = self.cost[i] * delayed(m, i) - self.cost[k] * delayed(m, k);
            dp[i] -= self.gain[i] * self.cost[i] * err;
        }
    }
}

/// Right-hand side of the switched delayed closed loop; `delayed_p[m]` is
/// `p(t - τ_m)` for every channel of `ts`.
pub fn closed_loop_rhs(
    net: &PowerNetwork,
    dai: &DaiParams,
    ts: &TopologySet,
    state: &GridState,
    delayed_p: &[DVector<f64>],
    ell: usize,
) -> Result<GridState> {
    let n = net.n();
    check_len("theta", state.theta.len(), n)?;
    check_len("omega", state.omega.len(), n)?;
    check_len("p", state.p.len(), n)?;
    check_len("delayed_p", delayed_p.len(), ts.channel_count())?;
    for d in delayed_p {
        check_len("delayed_p entry", d.len(), n)?;
    }
    if ell >= ts.len() {
        return Err(Error::InvalidParameter(format!(
            "topology index {ell} out of range"
        )));
    }
    let cl = ClosedLoop::new(net, dai, ts)?;
    let y = state.to_vec();
    let mut dy = vec![0.0; 3 * n];
    cl.eval(&y, ell, |m, j| delayed_p[m][j], &mut dy);
    Ok(GridState::from_slice(n, &dy))
}
