//! Certifies the four-machine preset at a few gains under both damping bases
//! and searches the largest certified gain.

use std::time::Instant;

use dai_core::certify::InteriorPoint;
use dai_core::config::{kundur_preset, DampingBase};

fn main() {
    for base in [DampingBase::System, DampingBase::Machine] {
        let mut cfg = kundur_preset();
        cfg.network.damping_base = base;
        let setup = cfg.certify_setup().expect("preset is valid");
        let start = Instant::now();
        for k in [1.5, 1.544, 2.0] {
            let r = setup.check(k, &InteriorPoint).unwrap();
            println!(
                "{base:?} kappa={k}: feasible={} t={:.3e} ({:.1?})",
                r.feasible,
                r.t,
                start.elapsed()
            );
        }
        let g = setup.max_gain(&InteriorPoint, 2.0, 1e-3).unwrap();
        println!(
            "{base:?}: kappa_feas={:.4} probes={}",
            g.kappa_feas,
            g.probes.len()
        );
    }
}
