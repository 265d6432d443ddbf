//! Singular four-field theory with Lagrangian density
//! `(ħ/2)φ̇² + (1/2ħ)ϕ² + (1/ħ)ϕ·Kφ`, where `ϕ` (here `varphi`) carries no
//! velocity. Its phase space `(φ, p, ϕ, π)` is cut down by the
//! second-class pair `π = 0`, `ϕ + Kφ = 0`; the multiplier that keeps them
//! is `v = −Kp/ħ`, substituted analytically everywhere below.

use crate::error::{check_len, Error, Result};
use crate::field::FieldState;
use crate::lattice::{GridFn, Operator};
use crate::schrodinger::WaveFunction;
use crate::trajectory::{second_time_derivative, time_derivative, trapezoid, Timed, Trajectory};

/// Reductions reject states whose constraint residual exceeds this
/// fraction of the state's scale.
pub const ON_SHELL_REL_TOL: f64 = 1e-6;
/// RK4 stability limit on `dt·max|κ|/ħ`.
pub const RK4_STABILITY: f64 = 2.8;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedState {
    pub phi: GridFn,
    pub p: GridFn,
    pub varphi: GridFn,
    pub pi: GridFn,
    pub time: f64,
}

pub type ConstrainedTrajectory = Trajectory<ConstrainedState>;

impl Timed for ConstrainedState {
    fn time(&self) -> f64 {
        self.time
    }
}

impl ConstrainedState {
    pub fn new(phi: GridFn, p: GridFn, varphi: GridFn, pi: GridFn, time: f64) -> Result<Self> {
        let n = phi.len();
        check_len(n, p.len())?;
        check_len(n, varphi.len())?;
        check_len(n, pi.len())?;
        if [&phi, &p, &varphi, &pi]
            .iter()
            .any(|f| f.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("constrained state"));
        }
        Ok(Self {
            phi,
            p,
            varphi,
            pi,
            time,
        })
    }

    pub fn zeros(n: usize, time: f64) -> Self {
        Self {
            phi: GridFn::zeros(n),
            p: GridFn::zeros(n),
            varphi: GridFn::zeros(n),
            pi: GridFn::zeros(n),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    fn axpy(&self, h: f64, d: &ConstrainedRates) -> Self {
        Self {
            phi: &self.phi + &d.phi * h,
            p: &self.p + &d.p * h,
            varphi: &self.varphi + &d.varphi * h,
            pi: &self.pi + &d.pi * h,
            time: self.time + h,
        }
    }
}

/// Time derivatives of the four fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedRates {
    pub phi: GridFn,
    pub p: GridFn,
    pub varphi: GridFn,
    pub pi: GridFn,
}

fn check_state(op: &Operator, s: &ConstrainedState) -> Result<()> {
    let n = op.len();
    check_len(n, s.phi.len())?;
    check_len(n, s.p.len())?;
    check_len(n, s.varphi.len())?;
    check_len(n, s.pi.len())
}

/// `v = −Kp/ħ`.
pub fn multiplier_v(op: &Operator, s: &ConstrainedState) -> Result<GridFn> {
    check_state(op, s)?;
    Ok(op.apply_unchecked(&s.p) * (-1.0 / op.hbar()))
}

/// `φ̇ = p/ħ`, `ṗ = Kϕ/ħ`, `ϕ̇ = v`, `π̇ = 0`.
pub fn constrained_rhs(op: &Operator, s: &ConstrainedState) -> Result<ConstrainedRates> {
    let v = multiplier_v(op, s)?;
    let hbar = op.hbar();
    Ok(ConstrainedRates {
        phi: &s.p / hbar,
        p: op.apply_unchecked(&s.varphi) / hbar,
        varphi: v,
        pi: GridFn::zeros(op.len()),
    })
}

/// As [`constrained_rhs`] but with `π̇ = −δH/δϕ = (ϕ + Kφ)/ħ` read off
/// the Hamiltonian without imposing the constraints.
pub fn constrained_rhs_offshell(op: &Operator, s: &ConstrainedState) -> Result<ConstrainedRates> {
    let mut rates = constrained_rhs(op, s)?;
    rates.pi = (&s.varphi + op.apply_unchecked(&s.phi)) / op.hbar();
    Ok(rates)
}

/// `H = ∫[(p² − ϕ²)/2ħ − ϕKφ/ħ + vπ]` with `v` substituted.
pub fn constrained_hamiltonian(op: &Operator, s: &ConstrainedState) -> Result<f64> {
    let v = multiplier_v(op, s)?;
    let g = op.grid();
    let hbar = op.hbar();
    let kphi = op.apply_unchecked(&s.phi);
    Ok((g.inner(&s.p, &s.p)? - g.inner(&s.varphi, &s.varphi)?) / (2.0 * hbar)
        - g.inner(&s.varphi, &kphi)? / hbar
        + g.inner(&v, &s.pi)?)
}

/// `(ϕ + Kφ, π)`.
pub fn constraint_residuals(op: &Operator, s: &ConstrainedState) -> Result<(GridFn, GridFn)> {
    check_state(op, s)?;
    Ok((&s.varphi + op.apply_unchecked(&s.phi), s.pi.clone()))
}

/// Sup norm of both constraint residuals.
pub fn constraint_violation(op: &Operator, s: &ConstrainedState) -> Result<f64> {
    let (c1, c2) = constraint_residuals(op, s)?;
    Ok(c1.amax().max(c2.amax()))
}

pub fn rk4_bound(op: &Operator) -> f64 {
    RK4_STABILITY * op.hbar() / op.spectral_radius()
}

/// Classical fourth-order Runge–Kutta on the full four-field system.
pub fn step_rk4(op: &Operator, s: &ConstrainedState, dt: f64) -> Result<ConstrainedState> {
    check_state(op, s)?;
    let bound = rk4_bound(op);
    if !(dt != 0.0 && dt.abs() < bound) {
        return Err(Error::Unstable { dt, bound });
    }
    rk4_unchecked(op, s, dt)
}

pub(crate) fn rk4_unchecked(op: &Operator, s: &ConstrainedState, dt: f64) -> Result<ConstrainedState> {
    let k1 = constrained_rhs(op, s)?;
    let k2 = constrained_rhs(op, &s.axpy(0.5 * dt, &k1))?;
    let k3 = constrained_rhs(op, &s.axpy(0.5 * dt, &k2))?;
    let k4 = constrained_rhs(op, &s.axpy(dt, &k3))?;
    let w = dt / 6.0;
    let combine = |a: &GridFn, b: &GridFn, c: &GridFn, d: &GridFn, x: &GridFn| {
        x + (a + b * 2.0 + c * 2.0 + d) * w
    };
    Ok(ConstrainedState {
        phi: combine(&k1.phi, &k2.phi, &k3.phi, &k4.phi, &s.phi),
        p: combine(&k1.p, &k2.p, &k3.p, &k4.p, &s.p),
        varphi: combine(&k1.varphi, &k2.varphi, &k3.varphi, &k4.varphi, &s.varphi),
        pi: combine(&k1.pi, &k2.pi, &k3.pi, &k4.pi, &s.pi),
        time: s.time + dt,
    })
}

/// Lifts `(φ, p)` onto the constraint surface: `ϕ = −Kφ`, `π = 0`.
pub fn make_onshell(op: &Operator, phi: &GridFn, p: &GridFn, time: f64) -> Result<ConstrainedState> {
    check_len(op.len(), phi.len())?;
    check_len(op.len(), p.len())?;
    Ok(ConstrainedState {
        phi: phi.clone(),
        p: p.clone(),
        varphi: -op.apply_unchecked(phi),
        pi: GridFn::zeros(op.len()),
        time,
    })
}

fn require_onshell(op: &Operator, s: &ConstrainedState) -> Result<()> {
    let residual = constraint_violation(op, s)?;
    let scale = s
        .phi
        .amax()
        .max(s.p.amax())
        .max(s.varphi.amax())
        .max(op.apply_unchecked(&s.phi).amax());
    let tolerance = ON_SHELL_REL_TOL * scale;
    if residual > tolerance {
        return Err(Error::OffShell {
            residual,
            tolerance,
        });
    }
    Ok(())
}

/// `(ϕ, p)` parameterization: the wave function `Ψ = ϕ + ip`.
pub fn reduce_to_wave(op: &Operator, s: &ConstrainedState) -> Result<WaveFunction> {
    require_onshell(op, s)?;
    Ok(WaveFunction {
        re: s.varphi.clone(),
        im: s.p.clone(),
        time: s.time,
    })
}

/// `(φ, p)` parameterization: the Schrödinger field.
pub fn reduce_to_field(op: &Operator, s: &ConstrainedState) -> Result<FieldState> {
    require_onshell(op, s)?;
    Ok(FieldState {
        phi: s.phi.clone(),
        p: s.p.clone(),
        time: s.time,
    })
}

#[derive(Debug, Clone)]
pub struct LagrangianResidual {
    pub time: f64,
    /// `ħ²φ̈ − Kϕ`
    pub r1: GridFn,
    /// `ϕ + Kφ`
    pub r2: GridFn,
}

/// Residuals of the Euler–Lagrange equations at interior samples.
pub fn lagrangian_residuals(
    op: &Operator,
    traj: &ConstrainedTrajectory,
) -> Result<Vec<LagrangianResidual>> {
    let dt = traj.uniform_step(3)?;
    let hbar = op.hbar();
    let phis: Vec<&GridFn> = traj.states().iter().map(|s| &s.phi).collect();
    (1..traj.len() - 1)
        .map(|k| {
            let s = &traj.states()[k];
            check_state(op, s)?;
            let acc = second_time_derivative(&phis, k, dt);
            Ok(LagrangianResidual {
                time: s.time,
                r1: acc * (hbar * hbar) - op.apply_unchecked(&s.varphi),
                r2: &s.varphi + op.apply_unchecked(&s.phi),
            })
        })
        .collect()
}

/// `∫dt dx [(ħ/2)φ̇² + ϕ²/2ħ + ϕKφ/ħ]`, trapezoid in time.
pub fn evaluate_singular_action(traj: &ConstrainedTrajectory, op: &Operator) -> Result<f64> {
    let dt = traj.uniform_step(3)?;
    let g = op.grid();
    let hbar = op.hbar();
    let phis: Vec<&GridFn> = traj.states().iter().map(|s| &s.phi).collect();
    let phi_dot = time_derivative(&phis, dt);
    let density = traj
        .states()
        .iter()
        .zip(&phi_dot)
        .map(|(s, pd)| {
            check_state(op, s)?;
            let kphi = op.apply_unchecked(&s.phi);
            Ok(0.5 * hbar * g.inner(pd, pd)?
                + g.inner(&s.varphi, &s.varphi)? / (2.0 * hbar)
                + g.inner(&s.varphi, &kphi)? / hbar)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(trapezoid(&density, dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::field_hamiltonian;
    use crate::lattice::{eigendecompose, Boundary, Grid, Potential};
    use crate::schrodinger::norm_hprime;

    fn harmonic(n: usize) -> Operator {
        let grid = Grid::new(n, -6.0, 6.0, Boundary::Dirichlet).unwrap();
        let pot = Potential::from_fn(&grid, |x| 0.5 * x * x).unwrap();
        Operator::new(grid, pot, 1.0, 1.0).unwrap()
    }

    fn sample_state(op: &Operator) -> ConstrainedState {
        let g = *op.grid();
        ConstrainedState::new(
            g.sample(|x| (-x * x).exp()),
            g.sample(|x| x.sin() * (-x * x / 4.0).exp()),
            g.sample(|x| (0.5 * x).cos()),
            g.sample(|x| 0.1 * x),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn multiplier_cases() {
        let op = harmonic(40);
        let spec = eigendecompose(&op).unwrap();
        assert_eq!(multiplier_v(&op, &ConstrainedState::zeros(40, 0.0)).unwrap().amax(), 0.0);
        let i = spec.energy_index(2);
        let u = spec.mode(i).clone_owned();
        let mut s = ConstrainedState::zeros(40, 0.0);
        s.p = u.clone();
        let v = multiplier_v(&op, &s).unwrap();
        assert!((v + &u * spec.eigenvalue(i)).amax() < 1e-10);
        let s = sample_state(&op);
        let dense = op.matrix() * &s.p * -1.0;
        assert!((multiplier_v(&op, &s).unwrap() - dense).amax() < 1e-12);
    }

    #[test]
    fn rhs_on_shell_eigenmode() {
        let op = harmonic(40);
        let spec = eigendecompose(&op).unwrap();
        let i = spec.energy_index(1);
        let kappa = spec.eigenvalue(i);
        let u = spec.mode(i).clone_owned();
        let s = make_onshell(&op, &(&u / kappa.abs()), &GridFn::zeros(40), 0.0).unwrap();
        let r = constrained_rhs(&op, &s).unwrap();
        assert_eq!(r.phi.amax(), 0.0);
        // ϕ = −Kφ = −κ u/|κ|, so ṗ = Kϕ = −κ² u/|κ|
        assert!((&r.p + &u * kappa.abs()).amax() < 1e-10);
        let dc1 = &r.varphi + op.apply(&r.phi).unwrap();
        assert!(dc1.amax() < 1e-12);
        assert_eq!(r.pi.amax(), 0.0);
    }

    #[test]
    fn offshell_pi_rate_is_minus_hamiltonian_gradient() {
        let op = harmonic(20);
        let s = sample_state(&op);
        let rates = constrained_rhs_offshell(&op, &s).unwrap();
        let dx = op.grid().dx();
        let h = 1e-6;
        for j in [0, 7, 13] {
            let mut plus = s.clone();
            plus.varphi[j] += h;
            let mut minus = s.clone();
            minus.varphi[j] -= h;
            let dh = (constrained_hamiltonian(&op, &plus).unwrap()
                - constrained_hamiltonian(&op, &minus).unwrap())
                / (2.0 * h);
            assert_close!(rates.pi[j], -dh / dx, 1e-6);
        }
    }

    #[test]
    fn onshell_hamiltonian_agrees_with_reduced_forms() {
        let op = harmonic(50);
        let g = *op.grid();
        let s = make_onshell(&op, &g.sample(|x| (-x * x).exp()), &g.sample(|x| x.cos() * (-x * x).exp()), 0.0).unwrap();
        let h = constrained_hamiltonian(&op, &s).unwrap();
        let hf = field_hamiltonian(&op, &reduce_to_field(&op, &s).unwrap()).unwrap();
        let hw = norm_hprime(&op, &reduce_to_wave(&op, &s).unwrap()).unwrap();
        assert_close!(h, hf, 1e-10 * h.abs());
        assert_close!(h, hw, 1e-10 * h.abs());
        assert_eq!(constrained_hamiltonian(&op, &ConstrainedState::zeros(50, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn residuals_track_perturbations() {
        let op = harmonic(30);
        let spec = eigendecompose(&op).unwrap();
        let g = *op.grid();
        let mut s = make_onshell(&op, &g.sample(f64::cos), &g.sample(f64::sin), 0.0).unwrap();
        let (c1, c2) = constraint_residuals(&op, &s).unwrap();
        assert_eq!(c1.amax(), 0.0);
        assert_eq!(c2.amax(), 0.0);
        let u = spec.mode(4).clone_owned();
        s.varphi += &u * 1e-3;
        let (c1, _) = constraint_residuals(&op, &s).unwrap();
        assert!((c1 - &u * 1e-3).amax() < 1e-15);
        assert!(matches!(reduce_to_wave(&op, &s), Err(Error::OffShell { .. })));
        assert!(matches!(reduce_to_field(&op, &s), Err(Error::OffShell { .. })));
    }

    #[test]
    fn make_onshell_round_trips_through_field_reduction() {
        let op = harmonic(25);
        let g = *op.grid();
        let (phi, p) = (g.sample(f64::sin), g.sample(|x| x * 0.1));
        let s = make_onshell(&op, &phi, &p, 1.5).unwrap();
        let f = reduce_to_field(&op, &s).unwrap();
        assert_eq!((f.phi, f.p, f.time), (phi, p, 1.5));
        let z = make_onshell(&op, &GridFn::zeros(25), &GridFn::zeros(25), 0.0).unwrap();
        assert_eq!(z, ConstrainedState::zeros(25, 0.0));
    }

    #[test]
    fn rk4_keeps_pi_zero_and_rejects_unstable() {
        let op = harmonic(40);
        let g = *op.grid();
        let mut s = make_onshell(&op, &g.sample(|x| (-x * x).exp()), &GridFn::zeros(40), 0.0).unwrap();
        let dt = 0.5 * rk4_bound(&op);
        for _ in 0..200 {
            s = step_rk4(&op, &s, dt).unwrap();
        }
        assert_eq!(s.pi.amax(), 0.0);
        assert!(constraint_violation(&op, &s).unwrap() < 1e-10);
        assert!(matches!(
            step_rk4(&op, &s, 1.1 * rk4_bound(&op)),
            Err(Error::Unstable { .. })
        ));
        let z = step_rk4(&op, &ConstrainedState::zeros(40, 0.0), dt).unwrap();
        assert_eq!(z.phi.amax() + z.p.amax() + z.varphi.amax(), 0.0);
    }

    #[test]
    fn lagrangian_residual_reports_injected_violation() {
        let op = harmonic(20);
        let g = *op.grid();
        let base = make_onshell(&op, &g.sample(f64::cos), &GridFn::zeros(20), 0.0).unwrap();
        let bump = g.sample(|x| (-x * x).exp());
        let states = (0..3)
            .map(|k| {
                let mut s = base.clone();
                s.time = k as f64 * 0.1;
                s.varphi += &bump * 0.25;
                s
            })
            .collect();
        let res = lagrangian_residuals(&op, &Trajectory::new(states)).unwrap();
        assert_eq!(res.len(), 1);
        assert!((&res[0].r2 - &bump * 0.25).amax() < 1e-15);

        let zero = Trajectory::new((0..4).map(|k| ConstrainedState::zeros(20, k as f64)).collect());
        let res = lagrangian_residuals(&op, &zero).unwrap();
        assert!(res.iter().all(|r| r.r1.amax() == 0.0 && r.r2.amax() == 0.0));
        assert_eq!(evaluate_singular_action(&zero, &op).unwrap(), 0.0);
    }
}
