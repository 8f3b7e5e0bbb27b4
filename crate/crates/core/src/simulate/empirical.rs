//! Simulation-based stability threshold in the gain.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::graph::TopologySet;
use crate::netmodel::{equilibrium_solve, p_star, DaiParams, GridState, PowerNetwork};

use super::integrate::{integrate, SimOptions, Trajectory, Verdict};
use super::signals::{make_delays, make_schedule, DelayPairing};

const INITIAL_STREAM: u64 = 2 << 32;
const KAPPA_MIN: f64 = 1e-6;
const CAP_FACTOR: f64 = 64.0;
/// Gains below the result, as fractions of it, re-probed for monotonicity.
const VERIFY_FRACTIONS: [f64; 2] = [0.5, 0.75];

/// Worker count from `DAI_THREADS`, else the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("DAI_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Applies `f` to every item on up to `threads` scoped workers, keeping order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let mut parts: Vec<Vec<(usize, R)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                s.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(threads)
                        .map(|(i, x)| (i, f(x)))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out: Vec<(usize, R)> = parts.drain(..).flatten().collect();
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

/// Everything needed to run seeded trials at any gain.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: PowerNetwork,
    pub dai: DaiParams,
    pub ts: TopologySet,
    pub bounds: Vec<f64>,
    pub pairing: DelayPairing,
    pub options: SimOptions,
    pub theta_star: DVector<f64>,
    /// Half-width of the uniform box of initial data around the equilibrium.
    pub radius: f64,
}

impl Scenario {
    pub fn new(
        net: PowerNetwork,
        dai: DaiParams,
        ts: TopologySet,
        bounds: Vec<f64>,
        options: SimOptions,
    ) -> Result<Self> {
        check_len("delay bounds", bounds.len(), ts.channel_count())?;
        let eq = equilibrium_solve(&net, &dai, &DVector::zeros(net.n()))?;
        if !eq.secure {
            return Err(Error::InvalidParameter(format!(
                "equilibrium is not secure (max angle difference {:.4})",
                eq.max_angle_diff
            )));
        }
        Ok(Self {
            net,
            dai,
            ts,
            bounds,
            pairing: DelayPairing::Independent,
            options,
            theta_star: eq.theta,
            radius: 0.1,
        })
    }

    pub fn equilibrium(&self) -> GridState {
        let n = self.net.n();
        GridState {
            theta: self.theta_star.clone(),
            omega: DVector::from_element(n, self.net.omega_nom),
            p: p_star(&self.net, &self.dai),
        }
    }

    /// Equilibrium plus a uniform perturbation of every component.
    pub fn initial_state(&self, seed: u64) -> GridState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INITIAL_STREAM);
        let mut x = self.equilibrium();
        let r = self.radius;
        for v in [&mut x.theta, &mut x.omega, &mut x.p] {
            for e in v.iter_mut() {
                *e += rng.random_range(-r..=r);
            }
        }
        x
    }

    pub fn trial(&self, kappa: f64, seed: u64) -> Result<Trajectory> {
        let o = &self.options;
        let delays = make_delays(&self.bounds, o.ts, seed, o.t_end, self.pairing)?;
        let schedule = make_schedule(self.ts.len(), o.dwell, seed, o.t_end)?;
        let dai = self.dai.with_kappa(kappa);
        integrate(
            &self.net,
            &dai,
            &self.ts,
            &delays,
            &schedule,
            &self.initial_state(seed),
            o,
        )
    }

    /// True when every seed converges. Stops scheduling new trials after the
    /// first failure.
    pub fn stable(&self, kappa: f64, seeds: &[u64], threads: usize) -> Result<bool> {
        let failed = AtomicBool::new(false);
        let threads = threads.clamp(1, seeds.len().max(1));
        let worker = |w: usize| -> Result<()> {
            for &seed in seeds.iter().skip(w).step_by(threads) {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                if self.trial(kappa, seed)?.verdict != Verdict::Converged {
                    failed.store(true, Ordering::Relaxed);
                }
            }
            Ok(())
        };
        if threads == 1 {
            worker(0)?;
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..threads).map(|w| s.spawn(move || worker(w))).collect();
                handles
                    .into_iter()
                    .try_for_each(|h| h.join().expect("trial worker panicked"))
            })?;
        }
        Ok(!failed.load(Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityProbe {
    pub kappa: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGain {
    /// Bracket midpoint.
    pub kappa: f64,
    pub stable_below: f64,
    /// `None` when the upward search hit its cap while still stable.
    pub unstable_above: Option<f64>,
    pub probes: Vec<StabilityProbe>,
}

/// Bisects on the gain where `stable(κ)` flips from true to false.
///
/// The bracket is widened by halving `kappa_lo` or doubling `kappa_hi` (up to
/// 64 times its initial value) when needed. Afterwards the gains at 50% and
/// 75% of the stable end are probed again; any probe that was unstable below a
/// stable one makes the result indeterminate.
pub fn empirical_max_gain(
    mut stable: impl FnMut(f64) -> Result<bool>,
    kappa_lo: f64,
    kappa_hi: f64,
    tol: f64,
) -> Result<EmpiricalGain> {
    if !(kappa_lo > 0.0 && kappa_hi > kappa_lo && tol > 0.0) {
        return Err(Error::InvalidParameter(
            "need 0 < kappa_lo < kappa_hi and tol > 0".into(),
        ));
    }
    let mut probes = Vec::new();
    let mut probe = |k: f64, probes: &mut Vec<StabilityProbe>| -> Result<bool> {
        let ok = stable(k)?;
        probes.push(StabilityProbe {
            kappa: k,
            stable: ok,
        });
        Ok(ok)
    };
    let mut lo = kappa_lo;
    let mut hi = None;
    while !probe(lo, &mut probes)? {
        hi = Some(lo);
        lo *= 0.5;
        if lo < KAPPA_MIN {
            return Err(Error::NoFeasibleGain(KAPPA_MIN));
        }
    }
    if hi.is_none() {
        let cap = CAP_FACTOR * kappa_hi;
        let mut k = kappa_hi;
        loop {
            if !probe(k, &mut probes)? {
                hi = Some(k);
                break;
            }
            lo = k;
            if k >= cap {
                break;
            }
            k = (2.0 * k).min(cap);
        }
    }
    if let Some(mut h) = hi {
        while h - lo > tol {
            let mid = 0.5 * (lo + h);
            if probe(mid, &mut probes)? {
                lo = mid;
            } else {
                h = mid;
            }
        }
        hi = Some(h);
    }
    for f in VERIFY_FRACTIONS {
        probe(f * lo, &mut probes)?;
    }
    let contradiction = probes
        .iter()
        .any(|a| !a.stable && probes.iter().any(|b| b.stable && b.kappa > a.kappa));
    if contradiction {
        let data: Vec<String> = probes
            .iter()
            .map(|p| format!("{:.6}:{}", p.kappa, p.stable))
            .collect();
        return Err(Error::Indeterminate(data.join(", ")));
    }
    let kappa = hi.map_or(lo, |h| 0.5 * (lo + h));
    Ok(EmpiricalGain {
        kappa,
        stable_below: lo,
        unstable_above: hi,
        probes,
    })
}
