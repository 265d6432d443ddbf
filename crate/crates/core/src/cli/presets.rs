//! Preset potentials and initial wave functions. All are pure functions
//! of their parameters and the grid.

use crate::error::{check_len, Error, Result};
use crate::lattice::{Grid, GridFn, Operator, Potential, Spectrum};
use crate::schrodinger::WaveFunction;

use super::config::{InitialSpec, PotentialSpec};

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

pub fn potential(spec: &PotentialSpec, grid: &Grid, mass: f64) -> Result<Potential> {
    match *spec {
        PotentialSpec::Free => Ok(Potential::zero(grid)),
        PotentialSpec::Harmonic { omega } => {
            positive("omega", omega)?;
            Potential::from_fn(grid, |x| 0.5 * mass * omega * omega * x * x)
        }
        PotentialSpec::SquareWell {
            depth,
            width,
            center,
        } => {
            positive("width", width)?;
            Potential::from_fn(grid, |x| if (x - center).abs() < 0.5 * width { -depth } else { 0.0 })
        }
        PotentialSpec::GaussianBarrier {
            height,
            width,
            center,
        } => {
            positive("width", width)?;
            Potential::from_fn(grid, |x| height * (-(x - center).powi(2) / (2.0 * width * width)).exp())
        }
        PotentialSpec::Inline { ref values } => Potential::new(GridFn::from_column_slice(values), grid),
    }
}

/// Checks an initial-state spec without needing the spectrum.
pub fn check_initial(spec: &InitialSpec, n: usize) -> Result<()> {
    let in_range = |i: usize| {
        if i >= n {
            return Err(Error::Config(format!("mode index {i} out of range for {n} points")));
        }
        Ok(())
    };
    match spec {
        InitialSpec::Eigenstate { index } => in_range(*index),
        InitialSpec::Gaussian { width, .. } => positive("width", *width),
        InitialSpec::Modes { modes } => {
            if modes.is_empty() {
                return Err(Error::Config("mode list is empty".into()));
            }
            modes.iter().try_for_each(|m| in_range(m.index))
        }
        InitialSpec::Inline { re, im } => {
            check_len(n, re.len())?;
            check_len(n, im.len())
        }
    }
}

/// Builds the initial wave function at `t = 0`. Mode indices count from
/// the ground state upward.
pub fn initial_state(spec: &InitialSpec, op: &Operator, spectrum: &Spectrum) -> Result<WaveFunction> {
    let n = op.len();
    check_initial(spec, n)?;
    let grid = op.grid();
    match spec {
        InitialSpec::Eigenstate { index } => {
            let u = spectrum.mode(spectrum.energy_index(*index)).clone_owned();
            WaveFunction::new(u, GridFn::zeros(n), 0.0)
        }
        InitialSpec::Gaussian {
            center,
            width,
            momentum,
        } => {
            let k = momentum / op.hbar();
            let envelope = grid.sample(|x| (-(x - center).powi(2) / (4.0 * width * width)).exp());
            let phase = grid.sample(|x| k * x);
            let re = envelope.zip_map(&phase, |a, t| a * t.cos());
            let im = envelope.zip_map(&phase, |a, t| a * t.sin());
            let norm = (grid.inner(&re, &re)? + grid.inner(&im, &im)?).sqrt();
            if !(norm > 0.0) {
                return Err(Error::Config("gaussian packet vanishes on the grid".into()));
            }
            WaveFunction::new(re / norm, im / norm, 0.0)
        }
        InitialSpec::Modes { modes } => {
            let mut a = GridFn::zeros(n);
            let mut b = GridFn::zeros(n);
            for m in modes {
                let i = spectrum.energy_index(m.index);
                a[i] += m.re;
                b[i] += m.im;
            }
            WaveFunction::new(spectrum.synthesize(&a)?, spectrum.synthesize(&b)?, 0.0)
        }
        InitialSpec::Inline { re, im } => WaveFunction::new(
            GridFn::from_column_slice(re),
            GridFn::from_column_slice(im),
            0.0,
        ),
    }
}
