//! The map between Schrödinger-field states and wave functions,
//! `Ψ = −Kφ + iħφ̇ = −Kφ + i p`, and its inverse.
//!
//! Going back ("dequantizing") a Schrödinger solution means solving
//! `Kφ = −re` at `t = 0` for an integration constant `C`, then
//! integrating `φ̇ = im/ħ` in time. The constant is the minimum-norm
//! elliptic solution; the kernel of `K` is reported separately by
//! [`kernel_basis`].

use std::f64::consts::PI;

use crate::error::{check_len, Result};
use crate::field::{energy_densities, FieldState, FieldTrajectory};
use crate::lattice::{solve_elliptic, GridFn, Operator, Spectrum};
use crate::schrodinger::{WaveFunction, WaveTrajectory};
use crate::trajectory::{cumulative_trapezoid, Trajectory};

/// Relative density below which the phase is treated as undefined.
pub const PROBABILITY_FLOOR: f64 = 1e-8;

/// `Ψ = −Kφ + i p`.
pub fn quantize(op: &Operator, s: &FieldState) -> Result<WaveFunction> {
    check_len(s.phi.len(), s.p.len())?;
    Ok(WaveFunction {
        re: -op.apply(&s.phi)?,
        im: s.p.clone(),
        time: s.time,
    })
}

pub fn quantize_trajectory(op: &Operator, traj: &FieldTrajectory) -> Result<WaveTrajectory> {
    traj.map(|s| quantize(op, s))
}

/// Field state whose image under [`quantize`] is the Schrödinger
/// evolution of `psi0` after time `t`.
///
/// `C` solves `K C = −re(psi0)`; `φ(t) = C + (1/ħ)∫₀ᵗ im dτ` with the time
/// integral taken in closed form per eigenmode.
pub fn dequantize(
    spec: &Spectrum,
    op: &Operator,
    psi0: &WaveFunction,
    t: f64,
    tol: f64,
) -> Result<FieldState> {
    check_len(op.len(), psi0.len())?;
    let c = integration_constant(spec, psi0, tol)?;
    let a = spec.coefficients(&psi0.re)?;
    let b = spec.coefficients(&psi0.im)?;
    let hbar = spec.hbar();
    let n = spec.len();
    let mut drift = GridFn::zeros(n);
    let mut p = GridFn::zeros(n);
    for i in 0..n {
        let kappa = spec.eigenvalue(i);
        let (s, co) = (kappa * t / hbar).sin_cos();
        p[i] = a[i] * s + b[i] * co;
        drift[i] = if spec.is_zero_mode(i) {
            b[i] * t / hbar
        } else {
            (a[i] * (1.0 - co) + b[i] * s) / kappa
        };
    }
    Ok(FieldState {
        phi: c + spec.synthesize(&drift)?,
        p: spec.synthesize(&p)?,
        time: psi0.time + t,
    })
}

/// `C` with `K C = −re(psi0)`, minimum norm.
pub fn integration_constant(spec: &Spectrum, psi0: &WaveFunction, tol: f64) -> Result<GridFn> {
    solve_elliptic(spec, &-&psi0.re, tol)
}

/// Reconstruction from raw samples: `φ_k = C + (1/ħ)·cumtrapz(im)`,
/// `p_k = im_k`. Works for output of any integrator.
pub fn dequantize_quadrature(
    spec: &Spectrum,
    traj: &WaveTrajectory,
    tol: f64,
) -> Result<FieldTrajectory> {
    let dt = traj.uniform_step(2)?;
    let first = &traj.states()[0];
    let c = integration_constant(spec, first, tol)?;
    let ims: Vec<&GridFn> = traj.states().iter().map(|s| &s.im).collect();
    let integrals = cumulative_trapezoid(&ims, dt);
    let hbar = spec.hbar();
    let states = traj
        .states()
        .iter()
        .zip(integrals)
        .map(|(s, int)| FieldState {
            phi: &c + int / hbar,
            p: s.im.clone(),
            time: s.time,
        })
        .collect();
    Ok(Trajectory::new(states))
}

/// Correspondence a): `(φ, p) = (re, −K im)`.
pub fn map_a(op: &Operator, psi: &WaveFunction) -> Result<FieldState> {
    check_len(op.len(), psi.len())?;
    Ok(FieldState {
        phi: psi.re.clone(),
        p: -op.apply(&psi.im)?,
        time: psi.time,
    })
}

/// Correspondence b): `Ψ = −Kφ + i p`. Same formula as [`quantize`].
pub fn map_b(op: &Operator, s: &FieldState) -> Result<WaveFunction> {
    quantize(op, s)
}

/// Orthonormal basis of `ker K`.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    pub modes: Vec<GridFn>,
    pub tolerance: f64,
    dx: f64,
}

impl KernelBasis {
    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    /// Removes the kernel component of `f`.
    pub fn project_out(&self, f: &GridFn) -> GridFn {
        let mut out = f.clone();
        for m in &self.modes {
            let c = self.dx * m.dot(f);
            out.axpy(-c, m, 1.0);
        }
        out
    }
}

pub fn kernel_basis(spec: &Spectrum) -> KernelBasis {
    KernelBasis {
        modes: spec
            .zero_modes()
            .iter()
            .map(|&i| spec.mode(i).clone_owned())
            .collect(),
        tolerance: spec.kappa_tol(),
        dx: spec.dx(),
    }
}

/// `P = p² + (Kφ)²` and the quadrant-correct phase `S = ħ·atan2(p, −Kφ)`.
pub fn probability_and_phase(op: &Operator, s: &FieldState) -> Result<(GridFn, GridFn)> {
    check_len(op.len(), s.phi.len())?;
    check_len(op.len(), s.p.len())?;
    let re = -op.apply_unchecked(&s.phi);
    let prob = s.p.component_mul(&s.p) + re.component_mul(&re);
    let hbar = op.hbar();
    let phase = s.p.zip_map(&re, |im, re| hbar * im.atan2(re));
    Ok((prob, phase))
}

/// `∫ P dx`.
pub fn total_probability(op: &Operator, s: &FieldState) -> Result<f64> {
    let (prob, _) = probability_and_phase(op, s)?;
    Ok(op.grid().dx() * prob.sum())
}

/// Removes jumps larger than `πħ` between neighbouring phase samples.
pub fn unwrap_phase(phase: &GridFn, hbar: f64) -> GridFn {
    let period = 2.0 * PI * hbar;
    let mut out = phase.clone();
    let mut offset = 0.0;
    for j in 1..phase.len() {
        let jump = phase[j] - phase[j - 1];
        offset -= period * (jump / period).round();
        out[j] = phase[j] + offset;
    }
    out
}

/// Residual of `∂ₜE + ∇·(2ħ⁻²E∇S)` at one time sample.
#[derive(Debug, Clone)]
pub struct CurrentSample {
    pub time: f64,
    /// Residual per grid point; zero where masked.
    pub values: GridFn,
    /// True where the stencil stays clear of the edges and `P` exceeds the floor.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct CurrentResidual {
    pub samples: Vec<CurrentSample>,
}

impl CurrentResidual {
    /// Largest unmasked residual over all samples.
    pub fn max_abs(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| {
                s.values
                    .iter()
                    .zip(&s.mask)
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| v.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// `(1/m)∂ₓ(E ∂ₓS)` with nested central differences, and the mask of
/// points where it is defined: clear of the edges by two points and with
/// `P` above the floor across the whole stencil.
///
/// With `∇ = (ħ/√2m)∂ₓ` this is the flux term `∇·(2ħ⁻²E∇S)`.
pub fn energy_flux_divergence(op: &Operator, s: &FieldState) -> Result<(GridFn, Vec<bool>)> {
    let n = op.len();
    let dx = op.grid().dx();
    let (prob, phase) = probability_and_phase(op, s)?;
    let floor = PROBABILITY_FLOOR * prob.amax();
    let phase = unwrap_phase(&phase, op.hbar());
    let e = energy_densities(op, s)?.total;
    let mut flux = GridFn::zeros(n);
    for j in 1..n - 1 {
        flux[j] = e[j] * (phase[j + 1] - phase[j - 1]) / (2.0 * dx) / op.mass();
    }
    let mut div = GridFn::zeros(n);
    let mut mask = vec![false; n];
    for j in 2..n.saturating_sub(2) {
        if (j - 2..=j + 2).all(|i| prob[i] > floor) {
            div[j] = (flux[j + 1] - flux[j - 1]) / (2.0 * dx);
            mask[j] = true;
        }
    }
    Ok((div, mask))
}

/// Discrete residual of the field energy current equation, `∂ₜE` central
/// in time, evaluated at interior samples.
pub fn current_residual(op: &Operator, traj: &FieldTrajectory) -> Result<CurrentResidual> {
    let dt = traj.uniform_step(3)?;
    let energies = traj
        .states()
        .iter()
        .map(|s| Ok(energy_densities(op, s)?.total))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(traj.len().saturating_sub(2));
    for k in 1..traj.len() - 1 {
        let s = &traj.states()[k];
        let (div, mask) = energy_flux_divergence(op, s)?;
        let de_dt = (&energies[k + 1] - &energies[k - 1]) / (2.0 * dt);
        let values = GridFn::from_fn(op.len(), |j, _| if mask[j] { de_dt[j] + div[j] } else { 0.0 });
        samples.push(CurrentSample {
            time: s.time,
            values,
            mask,
        });
    }
    Ok(CurrentResidual { samples })
}
