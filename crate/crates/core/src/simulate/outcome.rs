//! Convergence and oscillation verdicts on recorded trajectories.

use crate::netmodel::{DaiParams, PowerNetwork};

use super::integrate::{Trajectory, Verdict};

/// Relative change in oscillation amplitude tolerated between windows for a
/// limit cycle.
const STEADY_AMPLITUDE: f64 = 0.1;

pub(crate) fn freq_error(omega: &[f64], omega_nom: f64) -> f64 {
    omega
        .iter()
        .map(|w| (w - omega_nom).abs())
        .fold(0.0, f64::max)
}

/// `max_{i,k} |A_ii p_i − A_kk p_k|`.
pub(crate) fn cost_spread(p: &[f64], cost: &[f64]) -> f64 {
    let (lo, hi) = p
        .iter()
        .zip(cost)
        .map(|(p, a)| p * a)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo
}

/// Peak-to-peak frequency swing over the rows, maximized over nodes.
fn omega_swing(traj: &Trajectory, rows: &[usize]) -> f64 {
    let n = traj.n;
    (0..n)
        .map(|i| {
            let vals = rows.iter().map(|&r| traj.states[r][n + i]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            });
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// Classifies a trajectory by its final `window` seconds.
///
/// Converged when frequency and marginal-cost errors stay inside tolerance
/// over the whole window. Otherwise the frequency swing of the final window is
/// compared with the one before it: steady means limit cycle, growing means
/// diverged, and anything else is a timeout.
pub fn detect_outcome(
    traj: &Trajectory,
    net: &PowerNetwork,
    dai: &DaiParams,
    tol_freq: f64,
    tol_cost: f64,
    window: f64,
) -> Verdict {
    let n = traj.n;
    if traj.states.iter().any(|y| y.iter().any(|x| !x.is_finite())) {
        return Verdict::Diverged;
    }
    let Some(&t_last) = traj.times.last() else {
        return Verdict::Timeout;
    };
    if t_last - traj.times[0] < window {
        return Verdict::Timeout;
    }
    let cost: Vec<f64> = dai.cost.iter().copied().collect();
    let last: Vec<usize> = (0..traj.len())
        .filter(|&r| traj.times[r] >= t_last - window)
        .collect();
    let converged = last.iter().all(|&r| {
        let y = &traj.states[r];
        freq_error(&y[n..2 * n], net.omega_nom) < tol_freq
            && cost_spread(&y[2 * n..], &cost) < tol_cost
    });
    if converged {
        return Verdict::Converged;
    }
    let prev: Vec<usize> = (0..traj.len())
        .filter(|&r| traj.times[r] >= t_last - 2.0 * window && traj.times[r] < t_last - window)
        .collect();
    if prev.is_empty() || traj.times[0] > t_last - 2.0 * window + 1e-9 {
        return Verdict::Timeout;
    }
    let a_last = omega_swing(traj, &last);
    let a_prev = omega_swing(traj, &prev);
    if a_prev == 0.0 {
        return if a_last == 0.0 {
            Verdict::LimitCycle
        } else {
            Verdict::Diverged
        };
    }
    let ratio = a_last / a_prev;
    if (ratio - 1.0).abs() < STEADY_AMPLITUDE {
        Verdict::LimitCycle
    } else if ratio > 1.0 {
        Verdict::Diverged
    } else {
        Verdict::Timeout
    }
}
