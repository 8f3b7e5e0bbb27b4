//! Time-domain simulation of the switched delayed closed loop.

pub mod dde;
pub mod empirical;
pub mod export;
pub mod integrate;
pub mod outcome;
pub mod signals;

pub use dde::{run_dde, Control, DdeEnd, DelaySystem, Interpolation, StepView};
pub use empirical::{
    empirical_max_gain, parallel_map, worker_threads, EmpiricalGain, Scenario, StabilityProbe,
};
pub use export::{csv_header, write_csv, write_csv_file};
pub use integrate::{integrate, SimOptions, Trajectory, Verdict};
pub use outcome::detect_outcome;
pub use signals::{
    make_delay, make_delays, make_schedule, DelayPairing, DelayRealization, SwitchSchedule,
};
