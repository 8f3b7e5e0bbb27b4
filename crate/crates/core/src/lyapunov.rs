//! Strict Lyapunov function for the nominal loop and the Lyapunov–Krasovskii
//! functional used as a diagnostic along delayed trajectories.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::graph::TopologySet;
use crate::linalg::{is_positive_definite, put, put_sym};
use crate::netmodel::{hessian_potential, DaiParams, PowerNetwork};
use crate::reduction::{gain_sqrt, ErrorState, ReducedLoop, ReducedSystem};
use crate::simulate::{run_dde, Control, DelayRealization, Interpolation, SwitchSchedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovConfig {
    pub epsilon: f64,
    pub gamma: f64,
}

/// LKF weights per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LkfWeights {
    pub s: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub s12: Vec<DMatrix<f64>>,
    pub h: Vec<f64>,
}

fn cost_inertia(net: &PowerNetwork, dai: &DaiParams) -> DVector<f64> {
    dai.cost.component_mul(&net.inertia)
}

/// `∇U(θ̃ + θ*) − ∇U(θ*)` in a form that stays accurate for small `θ̃`.
pub fn flow_increment(
    net: &PowerNetwork,
    theta_t: &DVector<f64>,
    theta_star: &DVector<f64>,
) -> DVector<f64> {
    let mut g = DVector::zeros(net.n());
    for l in net.lines() {
        let a = theta_star[l.i] - theta_star[l.k];
        let d = theta_t[l.i] - theta_t[l.k];
        let f = l.weight * 2.0 * (a + 0.5 * d).cos() * (0.5 * d).sin();
        g[l.i] += f;
        g[l.k] -= f;
    }
    g
}

/// `U(θ̃ + θ*) − U(θ*) − θ̃ᵀ∇U(θ*)`.
pub fn potential_bregman(
    net: &PowerNetwork,
    theta_t: &DVector<f64>,
    theta_star: &DVector<f64>,
) -> f64 {
    net.lines()
        .iter()
        .map(|l| {
            let a = theta_star[l.i] - theta_star[l.k];
            let d = theta_t[l.i] - theta_t[l.k];
            let s = (0.5 * d).sin();
            l.weight * (2.0 * a.cos() * s * s + a.sin() * (d.sin() - d))
        })
        .sum()
}

/// `V` centered so that it vanishes at the equilibrium.
pub fn eval_v(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    cfg: &LyapunovConfig,
    x: &ErrorState,
    theta_star: &DVector<f64>,
) -> f64 {
    let a = dai.cost_inv_ones();
    let avg = a.dot(&x.theta);
    let kinetic = 0.5 * x.omega.dot(&net.inertia.component_mul(&x.omega));
    let cross = if cfg.epsilon == 0.0 {
        0.0
    } else {
        let g = flow_increment(net, &x.theta, theta_star);
        cfg.epsilon * x.omega.component_mul(&cost_inertia(net, dai)).dot(&g)
    };
    potential_bregman(net, &x.theta, theta_star)
        + kinetic
        + 0.5 * avg * avg / rs.mu
        + 0.5 * x.p.norm_squared()
        + cross
}

/// Exact Hessian of [`eval_v`] at the equilibrium, ordered `(θ̃, ω̃, p̃)`.
pub fn hessian_at_eq(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    cfg: &LyapunovConfig,
    theta_star: &DVector<f64>,
) -> DMatrix<f64> {
    let n = net.n();
    let h = hessian_potential(net, theta_star);
    let a = dai.cost_inv_ones();
    let mut out = DMatrix::zeros(3 * n - 1, 3 * n - 1);
    put(&mut out, 0, 0, &(&h + &a * a.transpose() / rs.mu));
    put(&mut out, n, n, &DMatrix::from_diagonal(&net.inertia));
    put(&mut out, 2 * n, 2 * n, &DMatrix::identity(n - 1, n - 1));
    let mut am_h = h;
    let am = cost_inertia(net, dai);
    for i in 0..n {
        am_h.row_mut(i).scale_mut(am[i] * cfg.epsilon);
    }
    put_sym(&mut out, n, 0, &am_h);
    out
}

/// Hessian with the symmetrized cross block `(ε/2)(AM∇²U* + ∇²U*MA)`.
/// Agrees with [`hessian_at_eq`] when `AM` is a multiple of the identity.
pub fn hessian_at_eq_symmetrized(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    cfg: &LyapunovConfig,
    theta_star: &DVector<f64>,
) -> DMatrix<f64> {
    let n = net.n();
    let mut out = hessian_at_eq(net, dai, rs, cfg, theta_star);
    let block = crate::linalg::symmetrize(&out.view((n, 0), (n, n)).into_owned());
    put_sym(&mut out, n, 0, &block);
    out
}

/// `E22(θ) = AM∇²U(θ) + ∇²U(θ)MA`.
pub fn e22(net: &PowerNetwork, dai: &DaiParams, theta: &DVector<f64>) -> DMatrix<f64> {
    let h = hessian_potential(net, theta);
    let am = DMatrix::from_diagonal(&cost_inertia(net, dai));
    &am * &h + &h * &am
}

fn vdot_with_e22(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    epsilon: f64,
    e22: &DMatrix<f64>,
    ell: usize,
) -> DMatrix<f64> {
    let n = net.n();
    let mut out = DMatrix::zeros(3 * n - 1, 3 * n - 1);
    let a = DMatrix::from_diagonal(&dai.cost);
    let d = DMatrix::from_diagonal(&net.damping);
    let mut akw = rs.w.clone();
    let ks = gain_sqrt(dai);
    for i in 0..n {
        akw.row_mut(i).scale_mut(dai.cost[i] * ks[i]);
    }
    put(&mut out, 0, 0, &(&a * epsilon));
    put_sym(&mut out, 0, n, &(&a * &d * (0.5 * epsilon)));
    put_sym(&mut out, 0, 2 * n, &(akw * (0.5 * epsilon)));
    put(&mut out, n, n, &(d - e22 * (0.5 * epsilon)));
    put(&mut out, 2 * n, 2 * n, &rs.lbar[ell]);
    out
}

/// Matrix `Ξ(θ)` with `V̇ = −ξᵀΞξ` on the delay-free loop in topology `ell`,
/// where `ξ = (∇U(θ) − ∇U(θ*), ω̃, p̃)` and `theta` is the absolute angle.
pub fn vdot_matrix_nominal(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    cfg: &LyapunovConfig,
    theta: &DVector<f64>,
    ell: usize,
) -> DMatrix<f64> {
    vdot_with_e22(net, dai, rs, cfg.epsilon, &e22(net, dai, theta), ell)
}

/// Worst case of [`vdot_matrix_nominal`] over all angles: `E22` replaced by `γI`.
pub fn vdot_matrix_worst(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    cfg: &LyapunovConfig,
    ell: usize,
) -> DMatrix<f64> {
    let n = net.n();
    vdot_with_e22(
        net,
        dai,
        rs,
        cfg.epsilon,
        &(DMatrix::identity(n, n) * cfg.gamma),
        ell,
    )
}

/// `γ` with `E22(θ) ⪯ γI` for all `θ`, from Gershgorin row sums of `∇²U`.
pub fn gamma_bound(net: &PowerNetwork, dai: &DaiParams) -> f64 {
    let mut row = vec![0.0; net.n()];
    for l in net.lines() {
        row[l.i] += l.weight;
        row[l.k] += l.weight;
    }
    let hess_bound = 2.0 * row.iter().cloned().fold(0.0, f64::max);
    let am = cost_inertia(net, dai).max();
    2.0 * am * hess_bound
}

const MAX_HALVINGS: usize = 60;

/// Largest `ε = 2^{-j}`, `j ≤ 60`, with `base + ε·perturbation ≻ 0`.
pub fn regularization_epsilon(base: &DMatrix<f64>, perturbation: &DMatrix<f64>) -> Option<f64> {
    let mut eps = 1.0;
    for _ in 0..=MAX_HALVINGS {
        if is_positive_definite(&(base + perturbation * eps)) {
            return Some(eps);
        }
        eps *= 0.5;
    }
    None
}

const EPSILON_SAMPLES: usize = 20;
const EPSILON_SAMPLE_RADIUS: f64 = 0.1;

/// Halves `ε` from 1 until the Hessian at the equilibrium and the worst-case
/// derivative matrix are positive definite for every topology; angles sampled
/// around `θ*` are checked as well.
pub fn find_epsilon(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    theta_star: &DVector<f64>,
) -> Result<LyapunovConfig> {
    check_len("theta_star", theta_star.len(), net.n())?;
    let gamma = gamma_bound(net, dai);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let samples: Vec<DVector<f64>> = (0..EPSILON_SAMPLES)
        .map(|_| {
            theta_star.map(|t| t + rng.random_range(-EPSILON_SAMPLE_RADIUS..EPSILON_SAMPLE_RADIUS))
        })
        .collect();
    let mut cfg = LyapunovConfig {
        epsilon: 1.0,
        gamma,
    };
    for _ in 0..=MAX_HALVINGS {
        let ok = is_positive_definite(&hessian_at_eq(net, dai, rs, &cfg, theta_star))
            && (0..rs.lbar.len()).all(|ell| {
                is_positive_definite(&vdot_matrix_worst(net, dai, rs, &cfg, ell))
                    && samples.iter().all(|th| {
                        is_positive_definite(&vdot_matrix_nominal(net, dai, rs, &cfg, th, ell))
                    })
            });
        if ok {
            return Ok(cfg);
        }
        cfg.epsilon *= 0.5;
    }
    Err(Error::EpsilonNotFound(MAX_HALVINGS))
}

/// Lyapunov–Krasovskii functional at the last sample of `history`.
///
/// `history` holds `(t, x)` pairs in increasing time and must reach back at
/// least `max h_m`. The integral-state derivative is the backward difference
/// on the history grid; the `S` integrals use the trapezoid rule and the `R`
/// integrals are exact for the piecewise-linear interpolant.
pub fn eval_lkf(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    cfg: &LyapunovConfig,
    weights: &LkfWeights,
    history: &[(f64, ErrorState)],
    theta_star: &DVector<f64>,
) -> Result<f64> {
    let (t, current) = history.last().ok_or(Error::InsufficientHistory {
        needed: 0.0,
        available: 0.0,
    })?;
    let h_max = weights.h.iter().cloned().fold(0.0, f64::max);
    let available = t - history[0].0;
    if available + 1e-12 < h_max {
        return Err(Error::InsufficientHistory {
            needed: h_max,
            available,
        });
    }
    check_len("R weights", weights.r.len(), weights.s.len())?;
    check_len("delay bounds", weights.h.len(), weights.s.len())?;
    let mut total = eval_v(net, dai, rs, cfg, current, theta_star);
    for m in 0..weights.s.len() {
        let h = weights.h[m];
        if h <= 0.0 {
            continue;
        }
        let start = t - h;
        let (s, r) = (&weights.s[m], &weights.r[m]);
        let quad = |mat: &DMatrix<f64>, v: &DVector<f64>| v.dot(&(mat * v));
        for j in (1..history.len()).rev() {
            let (t1, x1) = (&history[j].0, &history[j].1);
            let (t0, x0) = (&history[j - 1].0, &history[j - 1].1);
            if *t1 <= start {
                break;
            }
            let dt = t1 - t0;
            if dt <= 0.0 {
                continue;
            }
            let deriv = (&x1.p - &x0.p) / dt;
            let lo = t0.max(start);
            let p_lo = if lo > *t0 {
                &x0.p + &deriv * (lo - t0)
            } else {
                x0.p.clone()
            };
            let span = t1 - lo;
            total += 0.5 * span * (quad(s, &p_lo) + quad(s, &x1.p));
            let mid = 0.5 * (lo + t1);
            total += h * quad(r, &deriv) * span * (h + mid - t);
        }
    }
    Ok(total)
}

/// Outcome of [`nominal_decrease`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    /// `V` dropped between every pair of consecutive samples above the floor.
    pub monotone: bool,
    /// `V` fell below the floor before `t_max`.
    pub reached_floor: bool,
    pub v0: f64,
    pub v_final: f64,
    pub t_final: f64,
    pub first_violation: Option<f64>,
}

/// Samples `V` every `sample` seconds along the delay-free reduced loop in
/// topology `ell`, starting from `x0`, until `V < floor` or `t_max`.
#[allow(clippy::too_many_arguments)]
pub fn nominal_decrease(
    net: &PowerNetwork,
    dai: &DaiParams,
    rs: &ReducedSystem,
    ts: &TopologySet,
    cfg: &LyapunovConfig,
    theta_star: &DVector<f64>,
    x0: &ErrorState,
    ell: usize,
    sample: f64,
    t_max: f64,
    floor: f64,
) -> Result<DecreaseReport> {
    let n = net.n();
    let sys = ReducedLoop::new(net, dai, rs, ts, theta_star)?;
    let dt = sample / SUBSTEPS as f64;
    let delays = vec![DelayRealization::constant(0.0); ts.channel_count()];
    let v_of = |y: &[f64]| eval_v(net, dai, rs, cfg, &ErrorState::from_slice(n, y), theta_star);
    let v0 = v_of(&x0.to_vec());
    let mut report = DecreaseReport {
        monotone: true,
        reached_floor: v0 < floor,
        v0,
        v_final: v0,
        t_final: 0.0,
        first_violation: None,
    };
    if report.reached_floor {
        return Ok(report);
    }
    let mut prev = v0;
    run_dde(
        &sys,
        &x0.to_vec(),
        &delays,
        &SwitchSchedule::fixed(ell),
        dt,
        t_max,
        Interpolation::Cubic,
        |view| {
            if view.step == 0 || view.step % SUBSTEPS != 0 {
                return Control::Continue;
            }
            let v = v_of(view.y);
            report.v_final = v;
            report.t_final = view.t;
            if v >= prev && report.first_violation.is_none() {
                report.monotone = false;
                report.first_violation = Some(view.t);
            }
            prev = v;
            if v < floor {
                report.reached_floor = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    Ok(report)
}

/// `count` error states with every component uniform in `[−radius, radius]`,
/// deterministic in `seed`.
pub fn random_error_states(n: usize, count: usize, radius: f64, seed: u64) -> Vec<ErrorState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| DVector::from_fn(len, |_, _| rng.random_range(-radius..=radius));
    (0..count)
        .map(|_| ErrorState {
            theta: draw(n),
            omega: draw(n),
            p: draw(n - 1),
        })
        .collect()
}

/// Integration steps per `V` sample in [`nominal_decrease`].
const SUBSTEPS: usize = 10;
