//! The real Schrödinger field: `ħ²φ̈ + K²φ = 0`, in first-order form
//! `ħφ̇ = p`, `ħṗ = −K²φ`, with action density
//! `(ħ/2)φ̇² − (1/2ħ)(Kφ)²`.

use crate::error::{check_len, Error, Result};
use crate::lattice::{Grid, GridFn, Operator, Potential, Spectrum};
use crate::trajectory::{time_derivative, trapezoid, Timed, Trajectory};

/// Field `φ` with its conjugate momentum `p = ħφ̇`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub phi: GridFn,
    pub p: GridFn,
    pub time: f64,
}

pub type FieldTrajectory = Trajectory<FieldState>;

impl FieldState {
    pub fn new(phi: GridFn, p: GridFn, time: f64) -> Result<Self> {
        check_len(phi.len(), p.len())?;
        if phi.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field state"));
        }
        Ok(Self { phi, p, time })
    }

    pub fn zeros(n: usize, time: f64) -> Self {
        Self {
            phi: GridFn::zeros(n),
            p: GridFn::zeros(n),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn max_diff(&self, other: &FieldState) -> f64 {
        (&self.phi - &other.phi)
            .amax()
            .max((&self.p - &other.p).amax())
    }
}

impl Timed for FieldState {
    fn time(&self) -> f64 {
        self.time
    }
}

fn check_state(op: &Operator, s: &FieldState) -> Result<()> {
    check_len(op.len(), s.phi.len())?;
    check_len(op.len(), s.p.len())
}

/// `(φ̇, ṗ) = (p/ħ, −K²φ/ħ)`.
pub fn field_rhs(op: &Operator, s: &FieldState) -> Result<(GridFn, GridFn)> {
    check_state(op, s)?;
    let hbar = op.hbar();
    let kkphi = op.apply_unchecked(&op.apply_unchecked(&s.phi));
    Ok((&s.p / hbar, kkphi * (-1.0 / hbar)))
}

/// Largest stable leapfrog step, `2ħ / max|κ|`.
pub fn leapfrog_bound(op: &Operator) -> f64 {
    2.0 * op.hbar() / op.spectral_radius()
}

/// Kick–drift–kick step under the force `−K²φ/ħ`. Negative `dt` runs
/// the scheme backwards; `|dt|` must stay below [`leapfrog_bound`].
pub fn step_leapfrog(op: &Operator, s: &FieldState, dt: f64) -> Result<FieldState> {
    check_state(op, s)?;
    let bound = leapfrog_bound(op);
    if !(dt != 0.0 && dt.abs() < bound) {
        return Err(Error::Unstable { dt, bound });
    }
    Ok(leapfrog_unchecked(op, s, dt))
}

pub(crate) fn leapfrog_unchecked(op: &Operator, s: &FieldState, dt: f64) -> FieldState {
    let hbar = op.hbar();
    let force = |phi: &GridFn| op.apply_unchecked(&op.apply_unchecked(phi)) * (-1.0 / hbar);
    let p_half = &s.p + force(&s.phi) * (0.5 * dt);
    let phi = &s.phi + &p_half * (dt / hbar);
    let p = p_half + force(&phi) * (0.5 * dt);
    FieldState {
        phi,
        p,
        time: s.time + dt,
    }
}

/// Quadratic form conserved exactly by [`step_leapfrog`] at step `dt`:
/// `(1/2ħ)[⟨p,p⟩ + ⟨Kφ,Kφ⟩ − (dt/2ħ)²⟨K²φ,K²φ⟩]`.
pub fn leapfrog_shadow_energy(op: &Operator, s: &FieldState, dt: f64) -> Result<f64> {
    check_state(op, s)?;
    let g = op.grid();
    let hbar = op.hbar();
    let kphi = op.apply_unchecked(&s.phi);
    let kkphi = op.apply_unchecked(&kphi);
    let shrink = (dt / (2.0 * hbar)).powi(2);
    Ok((g.inner(&s.p, &s.p)? + g.inner(&kphi, &kphi)? - shrink * g.inner(&kkphi, &kkphi)?)
        / (2.0 * hbar))
}

/// Exact per-mode evolution with `ωₙ = |κₙ|/ħ`; zero modes drift
/// linearly, `φₙ(t) = φₙ(0) + pₙ(0)t/ħ`.
pub fn propagate_spectral_field(spec: &Spectrum, s0: &FieldState, t: f64) -> Result<FieldState> {
    let a = spec.coefficients(&s0.phi)?;
    let b = spec.coefficients(&s0.p)?;
    let hbar = spec.hbar();
    let n = spec.len();
    let mut phi = GridFn::zeros(n);
    let mut p = GridFn::zeros(n);
    for i in 0..n {
        if spec.is_zero_mode(i) {
            phi[i] = a[i] + b[i] * t / hbar;
            p[i] = b[i];
        } else {
            let omega = spec.eigenvalue(i).abs() / hbar;
            let (s, c) = (omega * t).sin_cos();
            phi[i] = a[i] * c + b[i] / (hbar * omega) * s;
            p[i] = -hbar * omega * a[i] * s + b[i] * c;
        }
    }
    Ok(FieldState {
        phi: spec.synthesize(&phi)?,
        p: spec.synthesize(&p)?,
        time: s0.time + t,
    })
}

pub fn spectral_field_trajectory(
    spec: &Spectrum,
    s0: &FieldState,
    dt: f64,
    steps: usize,
) -> Result<FieldTrajectory> {
    let states = (0..=steps)
        .map(|k| propagate_spectral_field(spec, s0, k as f64 * dt))
        .collect::<Result<_>>()?;
    Ok(Trajectory::new(states))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDensities {
    /// `T = p²/2ħ`
    pub kinetic: GridFn,
    /// `U = (Kφ)²/2ħ`
    pub potential: GridFn,
    /// `E = T + U`
    pub total: GridFn,
}

pub fn energy_densities(op: &Operator, s: &FieldState) -> Result<EnergyDensities> {
    check_state(op, s)?;
    let two_hbar = 2.0 * op.hbar();
    let kphi = op.apply_unchecked(&s.phi);
    let kinetic = s.p.component_mul(&s.p) / two_hbar;
    let potential = kphi.component_mul(&kphi) / two_hbar;
    let total = &kinetic + &potential;
    Ok(EnergyDensities {
        kinetic,
        potential,
        total,
    })
}

/// `(1/2ħ)[⟨p,p⟩ + ⟨Kφ,Kφ⟩]`.
pub fn field_hamiltonian(op: &Operator, s: &FieldState) -> Result<f64> {
    check_state(op, s)?;
    let g = op.grid();
    let kphi = op.apply_unchecked(&s.phi);
    Ok((g.inner(&s.p, &s.p)? + g.inner(&kphi, &kphi)?) / (2.0 * op.hbar()))
}

/// `∫dt dx [(ħ/2)φ̇² − (1/2ħ)(Kφ)²]` with `φ̇` from finite differences of
/// the stored `φ` samples.
pub fn evaluate_field_action(traj: &FieldTrajectory, op: &Operator) -> Result<f64> {
    let dt = traj.uniform_step(3)?;
    let phis: Vec<&GridFn> = traj.states().iter().map(|s| &s.phi).collect();
    for phi in &phis {
        check_len(op.len(), phi.len())?;
    }
    let phi_dot = time_derivative(&phis, dt);
    let density = field_action_density(op, &phis, &phi_dot)?;
    Ok(trapezoid(&density, dt))
}

pub(crate) fn field_action_density(
    op: &Operator,
    phis: &[&GridFn],
    phi_dot: &[GridFn],
) -> Result<Vec<f64>> {
    let g = op.grid();
    let hbar = op.hbar();
    phis.iter()
        .zip(phi_dot)
        .map(|(phi, pd)| {
            let kphi = op.apply(phi)?;
            Ok(0.5 * hbar * g.inner(pd, pd)? - g.inner(&kphi, &kphi)? / (2.0 * hbar))
        })
        .collect()
}

/// Per interior sample, `max(|ħφ̇ − p|, |ħṗ + K²φ|)` with central
/// differences.
pub fn field_equation_residual(op: &Operator, traj: &FieldTrajectory) -> Result<Vec<(f64, f64)>> {
    let dt = traj.uniform_step(3)?;
    let hbar = op.hbar();
    let states = traj.states();
    (1..states.len() - 1)
        .map(|k| {
            let s = &states[k];
            let phi_dot = (&states[k + 1].phi - &states[k - 1].phi) / (2.0 * dt);
            let p_dot = (&states[k + 1].p - &states[k - 1].p) / (2.0 * dt);
            let r1 = phi_dot * hbar - &s.p;
            let kk = op.apply(&op.apply(&s.phi)?)?;
            let r2 = p_dot * hbar + kk;
            Ok((s.time, r1.amax().max(r2.amax())))
        })
        .collect()
}

/// Relabels a field solution under `t = ħτ`, `x = ħξ`, `φ = √ħ ψ`.
///
/// The returned state holds `ψ = φ/√ħ` (and `ψ_τ = p/√ħ`) on the grid
/// with spacing `dx/ħ`, time label `t/ħ`. In the new variables the field
/// equation has unit `ħ` and background `V(ħξ)`; see
/// [`rescaled_operator`]. The action picks up the Jacobian
/// [`rescale_action_factor`].
pub fn rescale_state(s: &FieldState, grid: &Grid, hbar: f64) -> Result<(FieldState, Grid)> {
    if !(hbar.is_finite() && hbar > 0.0) {
        return Err(Error::InvalidParameter(format!("hbar must be > 0, got {hbar}")));
    }
    check_len(grid.len(), s.phi.len())?;
    let new_grid = Grid::with_spacing(
        grid.len(),
        grid.dx() / hbar,
        grid.x_min() / hbar,
        grid.boundary(),
    )?;
    let scale = 1.0 / hbar.sqrt();
    Ok((
        FieldState {
            phi: &s.phi * scale,
            p: &s.p * scale,
            time: s.time / hbar,
        },
        new_grid,
    ))
}

/// Unit-`ħ` operator on the rescaled grid with background `V(ħξ)`.
pub fn rescaled_operator(op: &Operator, potential: impl Fn(f64) -> f64) -> Result<Operator> {
    let hbar = op.hbar();
    let (_, grid) = rescale_state(&FieldState::zeros(op.len(), 0.0), op.grid(), hbar)?;
    let v = Potential::from_fn(&grid, |xi| potential(hbar * xi))?;
    Operator::new(grid, v, 1.0, op.mass())
}

/// `S_original = ħ² · S_rescaled` in one spatial dimension
/// (`dt dx = ħ² dτ dξ`).
pub fn rescale_action_factor(hbar: f64) -> f64 {
    hbar * hbar
}
