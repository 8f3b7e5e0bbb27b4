//! Closed-loop simulation in original coordinates.

use std::fmt;

use crate::error::{check_len, Error, Result};
use crate::graph::TopologySet;
use crate::netmodel::{ClosedLoop, DaiParams, GridState, PowerNetwork};

use super::dde::{run_dde, Control, Interpolation};
use super::outcome::{cost_spread, detect_outcome, freq_error};
use super::signals::{DelayRealization, SwitchSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    /// Delay sample period.
    pub ts: f64,
    pub dwell: f64,
    pub tol_freq: f64,
    pub tol_cost: f64,
    pub window: f64,
    pub t_end: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    /// End the run once the convergence test has held for a full window.
    pub stop_on_convergence: bool,
    pub interpolation: Interpolation,
    /// Frequency deviation or input magnitude treated as divergence.
    pub blowup: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            ts: 2e-3,
            dwell: 0.5,
            tol_freq: 1e-3,
            tol_cost: 1e-3,
            window: 10.0,
            t_end: 200.0,
            stride: 10,
            stop_on_convergence: true,
            interpolation: Interpolation::Cubic,
            blowup: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Converged,
    LimitCycle,
    Diverged,
    Timeout,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Converged => "converged",
            Verdict::LimitCycle => "limit-cycle",
            Verdict::Diverged => "diverged",
            Verdict::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recorded samples; `states[r]` is the flat `[θ, ω, p]` at `times[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub ell: Vec<usize>,
    pub taus: Vec<Vec<f64>>,
    pub verdict: Verdict,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, r: usize) -> GridState {
        GridState::from_slice(self.n, &self.states[r])
    }

    pub fn last(&self) -> Option<GridState> {
        self.states.last().map(|y| GridState::from_slice(self.n, y))
    }
}

/// Simulates the switched delayed closed loop from a constant history at `x0`.
pub fn integrate(
    net: &PowerNetwork,
    dai: &DaiParams,
    ts: &TopologySet,
    delays: &[DelayRealization],
    schedule: &SwitchSchedule,
    x0: &GridState,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = net.n();
    check_len("delay signals", delays.len(), ts.channel_count())?;
    if let Some(r) = delays.iter().find(|r| opts.dt > r.ts) {
        return Err(Error::InvalidParameter(format!(
            "step {} exceeds delay sample period {}",
            opts.dt, r.ts
        )));
    }
    if opts.stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let cl = ClosedLoop::new(net, dai, ts)?;
    let y0 = x0.to_vec();
    check_len("initial state", y0.len(), 3 * n)?;
    let cost: Vec<f64> = dai.cost.iter().copied().collect();
    let total = (opts.t_end / opts.dt).round() as usize;

    let mut traj = Trajectory {
        n,
        times: Vec::new(),
        states: Vec::new(),
        ell: Vec::new(),
        taus: Vec::new(),
        verdict: Verdict::Timeout,
    };
    let mut last_violation = 0.0;
    let mut blew_up = false;
    let mut converged_early = false;
    run_dde(
        &cl,
        &y0,
        delays,
        schedule,
        opts.dt,
        opts.t_end,
        opts.interpolation,
        |v| {
            let omega = &v.y[n..2 * n];
            let p = &v.y[2 * n..];
            let fe = freq_error(omega, net.omega_nom);
            let bad = !v.y.iter().all(|x| x.is_finite())
                || fe > opts.blowup
                || p.iter().any(|x| x.abs() > opts.blowup);
            let stop_conv = if fe < opts.tol_freq && cost_spread(p, &cost) < opts.tol_cost {
                opts.stop_on_convergence && v.t - last_violation >= opts.window
            } else {
                last_violation = v.t;
                false
            };
            if v.step % opts.stride == 0 || v.step == total || bad || stop_conv {
                traj.times.push(v.t);
                traj.states.push(v.y.to_vec());
                traj.ell.push(v.ell);
                traj.taus.push(v.taus.to_vec());
            }
            if bad {
                blew_up = true;
                Control::Stop
            } else if stop_conv {
                converged_early = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    )?;
    traj.verdict = if blew_up {
        Verdict::Diverged
    } else if converged_early {
        Verdict::Converged
    } else {
        detect_outcome(&traj, net, dai, opts.tol_freq, opts.tol_cost, opts.window)
    };
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::netmodel::{equilibrium_solve, p_star};
    use crate::simulate::signals::{make_delays, make_schedule, DelayPairing};
    use crate::synth::two_node_network;
    use nalgebra::DVector;

    fn setup() -> (PowerNetwork, DaiParams, TopologySet, GridState) {
        let net = two_node_network(0.2);
        let dai = DaiParams::new(
            DVector::from_element(2, 1.0),
            DVector::from_element(2, 1.0),
            1.0,
        )
        .unwrap();
        let ts = TopologySet::new(vec![Graph::path(2)]).unwrap();
        let eq = equilibrium_solve(&net, &dai, &DVector::zeros(2)).unwrap();
        let x = GridState {
            theta: eq.theta,
            omega: DVector::from_element(2, net.omega_nom),
            p: p_star(&net, &dai),
        };
        (net, dai, ts, x)
    }

    #[test]
    fn equilibrium_is_kept() {
        let (net, dai, ts, x) = setup();
        let opts = SimOptions {
            t_end: 10.0,
            stop_on_convergence: false,
            ..Default::default()
        };
        let delays = make_delays(
            &[0.5, 0.5],
            opts.ts,
            3,
            opts.t_end,
            DelayPairing::Independent,
        )
        .unwrap();
        let sched = make_schedule(1, opts.dwell, 3, opts.t_end).unwrap();
        let tr = integrate(&net, &dai, &ts, &delays, &sched, &x, &opts).unwrap();
        let end = tr.last().unwrap();
        assert!((end.omega.add_scalar(-net.omega_nom)).amax() < 1e-9);
        assert!((end.p - &x.p).amax() < 1e-9);
        assert_eq!(tr.verdict, Verdict::Converged);
        assert_eq!(tr.len(), 1001);
    }

    #[test]
    fn perturbation_converges_and_stops_early() {
        let (net, dai, ts, mut x) = setup();
        x.omega[0] += 0.05;
        x.p[1] -= 0.05;
        let opts = SimOptions {
            window: 2.0,
            ..Default::default()
        };
        let delays = vec![DelayRealization::constant(0.1); 2];
        let tr = integrate(
            &net,
            &dai,
            &ts,
            &delays,
            &SwitchSchedule::fixed(0),
            &x,
            &opts,
        )
        .unwrap();
        assert_eq!(tr.verdict, Verdict::Converged);
        assert!(*tr.times.last().unwrap() < opts.t_end);
    }

    #[test]
    fn input_checks() {
        let (net, dai, ts, x) = setup();
        let opts = SimOptions::default();
        let one = vec![DelayRealization::constant(0.0)];
        assert!(integrate(&net, &dai, &ts, &one, &SwitchSchedule::fixed(0), &x, &opts).is_err());
        let coarse = make_delays(&[0.1, 0.1], 1e-4, 1, 1.0, DelayPairing::Independent).unwrap();
        assert!(integrate(
            &net,
            &dai,
            &ts,
            &coarse,
            &SwitchSchedule::fixed(0),
            &x,
            &opts
        )
        .is_err());
    }
}
