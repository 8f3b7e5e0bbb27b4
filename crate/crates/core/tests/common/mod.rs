//! Helpers shared by the integration tests.

#![allow(dead_code)]

use dai_core::netmodel::{p_star, ClosedLoop};
use dai_core::reduction::{
    align_gauge, build_reduction, from_error_state, to_error_state, OperatingPoint, ReducedLoop,
};
use dai_core::simulate::{
    run_dde, Control, DelayRealization, DelaySystem, Interpolation, SwitchSchedule,
};
use dai_core::synth::SynthCase;
use dai_core::{GridState, Result};
use nalgebra::DVector;

/// States every `every` steps, with their times.
pub fn sample_run(
    sys: &dyn DelaySystem,
    y0: &[f64],
    delays: &[DelayRealization],
    schedule: &SwitchSchedule,
    dt: f64,
    t_end: f64,
    every: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut out = Vec::new();
    run_dde(
        sys,
        y0,
        delays,
        schedule,
        dt,
        t_end,
        Interpolation::Cubic,
        |v| {
            if v.step % every == 0 {
                out.push((v.t, v.y.to_vec()));
            }
            Control::Continue
        },
    )?;
    Ok(out)
}

/// Simulates the original and the reduced loop from matched initial data
/// and returns the largest deviation of the mapped reduced trajectory.
pub fn reduced_original_gap(
    case: &SynthCase,
    x0: &GridState,
    delays: &[DelayRealization],
    schedule: &SwitchSchedule,
    dt: f64,
    t_end: f64,
) -> Result<f64> {
    let n = case.net.n();
    let rs = build_reduction(&case.dai, &case.ts)?;
    let ps = p_star(&case.net, &case.dai);
    let op = OperatingPoint {
        theta_star: align_gauge(&case.dai, &case.theta_star, &ps, &x0.theta, &x0.p),
        p_star: ps,
        omega_nom: case.net.omega_nom,
    };
    let original = ClosedLoop::new(&case.net, &case.dai, &case.ts)?;
    let reduced = ReducedLoop::new(&case.net, &case.dai, &rs, &case.ts, &op.theta_star)?;
    let e0 = to_error_state(&rs, &case.dai, &op, x0, 0.0)?;
    let every = 50;
    let a = sample_run(&original, &x0.to_vec(), delays, schedule, dt, t_end, every)?;
    let b = sample_run(&reduced, &e0.to_vec(), delays, schedule, dt, t_end, every)?;
    assert_eq!(a.len(), b.len());
    let mut worst: f64 = 0.0;
    for ((t, ya), (_, yb)) in a.iter().zip(&b) {
        let e = dai_core::ErrorState::from_slice(n, yb);
        let back = from_error_state(&rs, &case.dai, &op, &e, *t)?;
        let direct = GridState::from_slice(n, ya);
        worst = worst
            .max((back.theta - direct.theta).amax())
            .max((back.omega - direct.omega).amax())
            .max((back.p - direct.p).amax());
    }
    Ok(worst)
}

/// Equilibrium plus a deterministic perturbation of size `scale`.
pub fn perturbed_start(case: &SynthCase, scale: f64) -> GridState {
    let n = case.net.n();
    let wiggle = |k: usize| DVector::from_fn(n, |i, _| scale * ((3 * i + k) as f64 * 1.7).sin());
    GridState {
        theta: &case.theta_star + wiggle(1),
        omega: wiggle(2).add_scalar(case.net.omega_nom),
        p: p_star(&case.net, &case.dai) + wiggle(3),
    }
}

/// Constant delays shared by both directions of each link.
pub fn per_link_constant(channels: usize, base: f64) -> Vec<DelayRealization> {
    (0..channels)
        .map(|m| DelayRealization::constant(base * (1.0 + 0.5 * (m / 2) as f64)))
        .collect()
}
