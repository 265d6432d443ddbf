//! Time series of lattice states and the finite-difference / quadrature
//! helpers shared by the action functionals and residual checks.

use crate::error::{Error, Result};
use crate::lattice::GridFn;

pub trait Timed {
    fn time(&self) -> f64;
}

/// Relative tolerance on step uniformity.
const UNIFORM_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    states: Vec<S>,
}

impl<S> Default for Trajectory<S> {
    fn default() -> Self {
        Self { states: Vec::new() }
    }
}

impl<S: Timed> Trajectory<S> {
    pub fn new(states: Vec<S>) -> Self {
        Self { states }
    }

    pub fn push(&mut self, state: S) {
        self.states.push(state);
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn into_states(self) -> Vec<S> {
        self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(Timed::time).collect()
    }

    /// Returns the common step, requiring at least `min_samples` states.
    pub fn uniform_step(&self, min_samples: usize) -> Result<f64> {
        if self.states.len() < min_samples {
            return Err(Error::TooFewSamples {
                needed: min_samples,
                found: self.states.len(),
            });
        }
        let times = self.times();
        if times.len() < 2 {
            return Ok(0.0);
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::NonUniformStep);
        }
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > UNIFORM_REL_TOL * dt {
                return Err(Error::NonUniformStep);
            }
        }
        Ok(dt)
    }

    pub fn map<T>(&self, f: impl FnMut(&S) -> Result<T>) -> Result<Trajectory<T>> {
        Ok(Trajectory {
            states: self.states.iter().map(f).collect::<Result<_>>()?,
        })
    }
}

/// Central-difference order used for time derivatives of sampled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeStencil {
    /// Three-point, `O(dt²)`.
    Second,
    /// Five-point, `O(dt⁴)`.
    Fourth,
}

impl TimeStencil {
    pub fn half_width(self) -> usize {
        match self {
            TimeStencil::Second => 1,
            TimeStencil::Fourth => 2,
        }
    }

    /// Derivative at sample `k`, which must be at least `half_width` away
    /// from either end.
    pub fn derivative(self, samples: &[&GridFn], k: usize, dt: f64) -> GridFn {
        match self {
            TimeStencil::Second => (samples[k + 1] - samples[k - 1]) / (2.0 * dt),
            TimeStencil::Fourth => {
                (samples[k - 2] - samples[k - 1] * 8.0 + samples[k + 1] * 8.0 - samples[k + 2])
                    / (12.0 * dt)
            }
        }
    }
}

/// First derivative at every sample: central in the interior, one-sided
/// second-order at the two ends. Needs at least three samples.
pub fn time_derivative(samples: &[&GridFn], dt: f64) -> Vec<GridFn> {
    let m = samples.len();
    debug_assert!(m >= 3);
    (0..m)
        .map(|k| {
            if k == 0 {
                (samples[0] * -3.0 + samples[1] * 4.0 - samples[2]) / (2.0 * dt)
            } else if k == m - 1 {
                (samples[m - 1] * 3.0 - samples[m - 2] * 4.0 + samples[m - 3]) / (2.0 * dt)
            } else {
                (samples[k + 1] - samples[k - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Three-point second derivative at interior sample `k`.
pub fn second_time_derivative(samples: &[&GridFn], k: usize, dt: f64) -> GridFn {
    (samples[k + 1] - samples[k] * 2.0 + samples[k - 1]) / (dt * dt)
}

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        m => {
            let inner: f64 = values[1..m - 1].iter().sum();
            dt * (0.5 * (values[0] + values[m - 1]) + inner)
        }
    }
}

/// Running trapezoid integral `∫₀^{t_k} f`, one entry per sample.
pub fn cumulative_trapezoid(samples: &[&GridFn], dt: f64) -> Vec<GridFn> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(first) = samples.first() {
        let mut acc = GridFn::zeros(first.len());
        out.push(acc.clone());
        for w in samples.windows(2) {
            acc += (w[0] + w[1]) * (0.5 * dt);
            out.push(acc.clone());
        }
    }
    out
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
