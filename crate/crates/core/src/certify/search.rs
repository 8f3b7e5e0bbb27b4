//! Bracketing and bisection for the largest certified gain.

use crate::error::{Error, Result};

const KAPPA_MIN: f64 = 1e-6;
const CAP_FACTOR: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainProbe {
    pub kappa: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSearch {
    /// Largest gain found feasible.
    pub kappa_feas: f64,
    /// Smallest gain found infeasible, if any.
    pub kappa_infeas: Option<f64>,
    /// The upward search stopped at `1024·κ_init` while still feasible.
    pub capped: bool,
    pub probes: Vec<GainProbe>,
}

/// Finds a feasible/infeasible bracket by doubling (up to `1024·κ_init`) or
/// halving (down to `1e-6`) from `kappa_init`, then bisects to width `tol`.
pub fn max_gain_search(
    mut feasible: impl FnMut(f64) -> Result<bool>,
    kappa_init: f64,
    tol: f64,
) -> Result<GainSearch> {
    if !(kappa_init > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(
            "kappa_init and tol must be positive".into(),
        ));
    }
    let mut probes = Vec::new();
    let mut probe = |k: f64, probes: &mut Vec<GainProbe>| -> Result<bool> {
        let ok = feasible(k)?;
        probes.push(GainProbe {
            kappa: k,
            feasible: ok,
        });
        Ok(ok)
    };
    let cap = CAP_FACTOR * kappa_init;
    let (mut lo, mut hi);
    if probe(kappa_init, &mut probes)? {
        lo = kappa_init;
        hi = None;
        while hi.is_none() {
            let next = (2.0 * lo).min(cap);
            if probe(next, &mut probes)? {
                lo = next;
                if lo >= cap {
                    return Ok(GainSearch {
                        kappa_feas: lo,
                        kappa_infeas: None,
                        capped: true,
                        probes,
                    });
                }
            } else {
                hi = Some(next);
            }
        }
    } else {
        hi = Some(kappa_init);
        let mut k = 0.5 * kappa_init;
        loop {
            if k < KAPPA_MIN {
                return Err(Error::NoFeasibleGain(KAPPA_MIN));
            }
            if probe(k, &mut probes)? {
                lo = k;
                break;
            }
            hi = Some(k);
            k *= 0.5;
        }
    }
    let mut hi_v = hi.expect("upper bracket set");
    while hi_v - lo > tol {
        let mid = 0.5 * (lo + hi_v);
        if probe(mid, &mut probes)? {
            lo = mid;
        } else {
            hi_v = mid;
        }
    }
    Ok(GainSearch {
        kappa_feas: lo,
        kappa_infeas: Some(hi_v),
        capped: false,
        probes,
    })
}
