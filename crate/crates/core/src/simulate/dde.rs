//! Fixed-step RK4 for delay systems with sampled delays and switching.

use std::ops::Range;

use crate::error::{check_len, Error, Result};
use crate::netmodel::ClosedLoop;
use crate::reduction::ReducedLoop;

use super::signals::{DelayRealization, SwitchSchedule};

/// A vector field whose right-hand side reads delayed copies of a contiguous
/// slice of its own state, one copy per channel.
pub trait DelaySystem {
    fn dim(&self) -> usize;

    /// State components that are transmitted with delay.
    fn delayed_range(&self) -> Range<usize>;

    /// `delayed[m * d + j]` holds component `j` of the delayed slice as seen
    /// through channel `m`, where `d` is the length of `delayed_range`.
    fn rhs(&self, y: &[f64], ell: usize, delayed: &[f64], dy: &mut [f64]);
}

impl DelaySystem for ClosedLoop {
    fn dim(&self) -> usize {
        3 * self.n()
    }

    fn delayed_range(&self) -> Range<usize> {
        2 * self.n()..3 * self.n()
    }

    fn rhs(&self, y: &[f64], ell: usize, delayed: &[f64], dy: &mut [f64]) {
        let n = self.n();
        self.eval(y, ell, |m, j| delayed[m * n + j], dy);
    }
}

impl DelaySystem for ReducedLoop {
    fn dim(&self) -> usize {
        3 * self.n() - 1
    }

    fn delayed_range(&self) -> Range<usize> {
        2 * self.n()..3 * self.n() - 1
    }

    fn rhs(&self, y: &[f64], ell: usize, delayed: &[f64], dy: &mut [f64]) {
        let d = self.n() - 1;
        self.eval(y, ell, |m, j| delayed[m * d + j], dy);
    }
}

/// How the stored history is evaluated between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Linear,
    /// Four-point Lagrange stencil; keeps the scheme fourth order for
    /// constant delays.
    #[default]
    Cubic,
}

/// What the observer wants after seeing a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Snapshot handed to the observer after every step (and once at `t = 0`).
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub y: &'a [f64],
    /// Topology and delays that will be applied on the next step.
    pub ell: usize,
    pub taus: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdeEnd {
    pub steps: usize,
    pub t: f64,
    pub y: Vec<f64>,
    pub stopped_early: bool,
}

/// Ring buffer of the delayed slice on the step grid.
struct History {
    d: usize,
    len: usize,
    data: Vec<f64>,
    /// Value for `t <= 0`.
    initial: Vec<f64>,
    /// Index of the newest stored grid point.
    newest: usize,
}

impl History {
    fn new(initial: &[f64], len: usize) -> Self {
        let d = initial.len();
        Self {
            d,
            len,
            data: vec![0.0; d * len],
            initial: initial.to_vec(),
            newest: 0,
        }
    }

    fn push(&mut self, step: usize, values: &[f64]) {
        let slot = step % self.len;
        self.data[slot * self.d..(slot + 1) * self.d].copy_from_slice(values);
        self.newest = step;
    }

    fn at(&self, k: isize, j: usize) -> f64 {
        if k <= 0 {
            return self.initial[j];
        }
        let slot = k as usize % self.len;
        self.data[slot * self.d + j]
    }

    /// Delayed slice at `s = (k + f)·dt` with `k + 1 <= newest`.
    fn interpolate(&self, k: isize, f: f64, interp: Interpolation, out: &mut [f64]) {
        match interp {
            Interpolation::Linear => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = (1.0 - f) * self.at(k, j) + f * self.at(k + 1, j);
                }
            }
            Interpolation::Cubic => {
                if k < 0 {
                    out.copy_from_slice(&self.initial);
                    return;
                }
                // Stencil k0..k0+3 around [k, k+1], shifted left at the front
                // and right at t = 0, where the constant history ends with a kink.
                let newest = self.newest as isize;
                let mut k0 = (k - 1).min(newest - 3).min(k);
                if k0 < 0 && newest >= 3 {
                    k0 = 0;
                }
                let x = (k - k0) as f64 + f;
                let w = [
                    -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
                    x * (x - 2.0) * (x - 3.0) / 2.0,
                    -x * (x - 1.0) * (x - 3.0) / 2.0,
                    x * (x - 1.0) * (x - 2.0) / 6.0,
                ];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = (0..4).map(|q| w[q] * self.at(k0 + q as isize, j)).sum();
                }
            }
        }
    }
}

/// Integrates `sys` from a constant initial history equal to `y0`.
///
/// Delays and topology are sampled at the start of each step and held over
/// it. Delayed values that fall inside the current step are interpolated
/// linearly between the step start and the stage state.
pub fn run_dde<S: DelaySystem + ?Sized>(
    sys: &S,
    y0: &[f64],
    delays: &[DelayRealization],
    schedule: &SwitchSchedule,
    dt: f64,
    t_end: f64,
    interp: Interpolation,
    mut observer: impl FnMut(&StepView<'_>) -> Control,
) -> Result<DdeEnd> {
    let dim = sys.dim();
    check_len("initial state", y0.len(), dim)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step must be > 0, got {dt}"
        )));
    }
    let range = sys.delayed_range();
    let d = range.len();
    let channels = delays.len();
    let h_max = delays.iter().map(|r| r.h).fold(0.0, f64::max);
    let mut hist = History::new(&y0[range.clone()], (h_max / dt).ceil() as usize + 4);

    let steps = (t_end / dt).round() as usize;
    let mut y = y0.to_vec();
    let mut k = [
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    ];
    let mut stage = vec![0.0; dim];
    let mut delayed = vec![0.0; channels * d];
    let mut taus = vec![0.0; channels];

    let sample = |t: f64, taus: &mut [f64]| {
        for (tau, r) in taus.iter_mut().zip(delays) {
            *tau = r.at(t);
        }
        schedule.at(t)
    };

    let mut ell = sample(0.0, &mut taus);
    if observer(&StepView {
        step: 0,
        t: 0.0,
        y: &y,
        ell,
        taus: &taus,
    }) == Control::Stop
    {
        return Ok(DdeEnd {
            steps: 0,
            t: 0.0,
            y,
            stopped_early: true,
        });
    }

    for n in 0..steps {
        let stages: [(f64, Option<usize>); 4] =
            [(0.0, None), (0.5, Some(0)), (0.5, Some(1)), (1.0, Some(2))];
        for (si, &(c, prev)) in stages.iter().enumerate() {
            match prev {
                None => stage.copy_from_slice(&y),
                Some(p) => {
                    for ((s, yi), ki) in stage.iter_mut().zip(&y).zip(&k[p]) {
                        *s = yi + c * dt * ki;
                    }
                }
            }
            for m in 0..channels {
                let lag = taus[m] / dt;
                let out = &mut delayed[m * d..(m + 1) * d];
                if lag >= c {
                    let pos = n as f64 + c - lag;
                    let kk = pos.floor();
                    let kk_i = kk as isize;
                    if kk_i >= n as isize {
                        out.copy_from_slice(&y[range.clone()]);
                    } else {
                        hist.interpolate(kk_i, pos - kk, interp, out);
                    }
                } else {
                    // Inside the current step.
                    let g = (c - lag) / c;
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = (1.0 - g) * y[range.start + j] + g * stage[range.start + j];
                    }
                }
            }
            sys.rhs(&stage, ell, &delayed, &mut k[si]);
        }
        for i in 0..dim {
            y[i] += dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        hist.push(n + 1, &y[range.clone()]);
        let t = (n + 1) as f64 * dt;
        ell = sample(t, &mut taus);
        if observer(&StepView {
            step: n + 1,
            t,
            y: &y,
            ell,
            taus: &taus,
        }) == Control::Stop
        {
            return Ok(DdeEnd {
                steps: n + 1,
                t,
                y,
                stopped_early: true,
            });
        }
    }
    Ok(DdeEnd {
        steps,
        t: steps as f64 * dt,
        y,
        stopped_early: false,
    })
}
