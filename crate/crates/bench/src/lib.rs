//! Benchmark fixtures.

use dai_core::certify::CertifySetup;
use dai_core::config::kundur_preset;
use dai_core::simulate::{
    make_delays, make_schedule, DelayPairing, DelayRealization, SimOptions, SwitchSchedule,
};
use dai_core::synth::{random_case, SynthCase, SynthRanges};
use dai_core::GridState;

/// Certificate setup of the four-machine preset.
pub fn kundur_setup() -> CertifySetup {
    kundur_preset().certify_setup().expect("preset is valid")
}

/// A small synthetic network with its delay and switching signals.
pub struct SimFixture {
    pub case: SynthCase,
    pub x0: GridState,
    pub delays: Vec<DelayRealization>,
    pub schedule: SwitchSchedule,
    pub options: SimOptions,
}

pub fn sim_fixture(n: usize, t_end: f64) -> SimFixture {
    let case = random_case(11, n, &SynthRanges::default());
    let options = SimOptions {
        t_end,
        stop_on_convergence: false,
        ..Default::default()
    };
    let bounds = vec![0.5; case.ts.channel_count()];
    let delays = make_delays(&bounds, options.ts, 11, t_end, DelayPairing::Independent)
        .expect("valid delay bounds");
    let schedule = make_schedule(case.ts.len(), 0.5, 11, t_end).expect("valid schedule");
    let mut x0 = GridState {
        theta: case.theta_star.clone(),
        omega: nalgebra::DVector::from_element(n, case.net.omega_nom),
        p: dai_core::netmodel::p_star(&case.net, &case.dai),
    };
    x0.theta.iter_mut().for_each(|t| *t += 0.05);
    SimFixture {
        case,
        x0,
        delays,
        schedule,
        options,
    }
}
