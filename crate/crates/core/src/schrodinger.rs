//! The Schrödinger equation `iħΨ̇ = −KΨ` as a real pair system:
//! `ħ ṙe = −K im`, `ħ i̇m = K re`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{check_len, Error, Result};
use crate::lattice::{GridFn, Operator, Spectrum};
use crate::trajectory::{time_derivative, trapezoid, TimeStencil, Timed, Trajectory};

/// `Ψ = re + i·im` on the lattice at a time label.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub re: GridFn,
    pub im: GridFn,
    pub time: f64,
}

pub type WaveTrajectory = Trajectory<WaveFunction>;

impl WaveFunction {
    pub fn new(re: GridFn, im: GridFn, time: f64) -> Result<Self> {
        check_len(re.len(), im.len())?;
        if re.iter().chain(im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("wave function"));
        }
        Ok(Self { re, im, time })
    }

    pub fn zeros(n: usize, time: f64) -> Self {
        Self {
            re: GridFn::zeros(n),
            im: GridFn::zeros(n),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// `|Ψ|²` pointwise.
    pub fn density(&self) -> GridFn {
        self.re.component_mul(&self.re) + self.im.component_mul(&self.im)
    }

    /// Largest pointwise modulus `|Ψ|`.
    pub fn max_modulus(&self) -> f64 {
        self.density().amax().sqrt()
    }

    /// `max |Ψ − other|` over the grid.
    pub fn max_diff(&self, other: &WaveFunction) -> f64 {
        let dr = &self.re - &other.re;
        let di = &self.im - &other.im;
        (dr.component_mul(&dr) + di.component_mul(&di)).amax().sqrt()
    }
}

impl Timed for WaveFunction {
    fn time(&self) -> f64 {
        self.time
    }
}

/// `(ṙe, i̇m) = (−K im / ħ, K re / ħ)`.
pub fn schrodinger_rhs(op: &Operator, psi: &WaveFunction) -> Result<(GridFn, GridFn)> {
    let hbar = op.hbar();
    let dre = op.apply(&psi.im)? * (-1.0 / hbar);
    let dim = op.apply(&psi.re)? / hbar;
    Ok((dre, dim))
}

/// Crank–Nicolson stepper with the linear system factored once per `dt`.
///
/// The Cayley update `(1 − i a K) Ψ' = (1 + i a K) Ψ`, `a = dt/2ħ`, is
/// solved in real arithmetic by eliminating `re'`:
/// `(I + a²K²) im' = b_im + a K b_re`, `re' = b_re − a K im'`.
pub struct CrankNicolson<'a> {
    op: &'a Operator,
    dt: f64,
    half: f64,
    factor: Cholesky<f64, Dyn>,
}

impl<'a> CrankNicolson<'a> {
    pub fn new(op: &'a Operator, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidParameter(format!("bad time step {dt}")));
        }
        let half = dt / (2.0 * op.hbar());
        let k = op.matrix();
        let n = op.len();
        let system = DMatrix::identity(n, n) + (&k * &k) * (half * half);
        let factor = Cholesky::new(system).ok_or(Error::LinearSolve(
            "Crank-Nicolson system is not positive definite",
        ))?;
        Ok(Self {
            op,
            dt,
            half,
            factor,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &WaveFunction) -> Result<WaveFunction> {
        let op = self.op;
        let a = self.half;
        let b_re = &psi.re - op.apply(&psi.im)? * a;
        let b_im = &psi.im + op.apply(&psi.re)? * a;
        let im = self.factor.solve(&(b_im + op.apply_unchecked(&b_re) * a));
        let re = b_re - op.apply_unchecked(&im) * a;
        Ok(WaveFunction {
            re,
            im,
            time: psi.time + self.dt,
        })
    }
}

pub fn step_crank_nicolson(op: &Operator, psi: &WaveFunction, dt: f64) -> Result<WaveFunction> {
    if dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("time step must be > 0, got {dt}")));
    }
    CrankNicolson::new(op, dt)?.step(psi)
}

/// Exact evolution in the eigenbasis: each complex coefficient picks up
/// `exp(i κₙ t / ħ)`. `t` is measured from `psi0.time`.
pub fn propagate_spectral(spec: &Spectrum, psi0: &WaveFunction, t: f64) -> Result<WaveFunction> {
    let a = spec.coefficients(&psi0.re)?;
    let b = spec.coefficients(&psi0.im)?;
    let hbar = spec.hbar();
    let n = spec.len();
    let mut ca = GridFn::zeros(n);
    let mut cb = GridFn::zeros(n);
    for i in 0..n {
        let (s, c) = (spec.eigenvalue(i) * t / hbar).sin_cos();
        ca[i] = a[i] * c - b[i] * s;
        cb[i] = a[i] * s + b[i] * c;
    }
    Ok(WaveFunction {
        re: spec.synthesize(&ca)?,
        im: spec.synthesize(&cb)?,
        time: psi0.time + t,
    })
}

/// Samples `propagate_spectral` at `t = k·dt`, `k = 0..=steps`.
pub fn spectral_trajectory(
    spec: &Spectrum,
    psi0: &WaveFunction,
    dt: f64,
    steps: usize,
) -> Result<WaveTrajectory> {
    let states = (0..=steps)
        .map(|k| propagate_spectral(spec, psi0, k as f64 * dt))
        .collect::<Result<_>>()?;
    Ok(Trajectory::new(states))
}

/// `H = (1/2ħ)[⟨re, −K re⟩ + ⟨im, −K im⟩]`, the summation-by-parts form of
/// `(1/2ħ)∫(∇φ∇φ + ∇p∇p + V(φ² + p²))`.
pub fn hamiltonian_h(psi: &WaveFunction, op: &Operator) -> Result<f64> {
    let g = op.grid();
    let kre = op.apply(&psi.re)?;
    let kim = op.apply(&psi.im)?;
    Ok(-(g.inner(&psi.re, &kre)? + g.inner(&psi.im, &kim)?) / (2.0 * op.hbar()))
}

/// `H′ = ∫ Ψ*Ψ / 2ħ`.
pub fn norm_hprime(op: &Operator, psi: &WaveFunction) -> Result<f64> {
    let g = op.grid();
    Ok((g.inner(&psi.re, &psi.re)? + g.inner(&psi.im, &psi.im)?) / (2.0 * op.hbar()))
}

/// `S_H = ∫dt [⟨im, ṙe⟩ − H]`, trapezoid in time, `ṙe` by finite differences.
pub fn evaluate_hamiltonian_action(traj: &WaveTrajectory, op: &Operator) -> Result<f64> {
    let dt = traj.uniform_step(3)?;
    let g = op.grid();
    let re: Vec<&GridFn> = traj.states().iter().map(|s| &s.re).collect();
    let re_dot = time_derivative(&re, dt);
    let density = traj
        .states()
        .iter()
        .zip(&re_dot)
        .map(|(s, rd)| Ok(g.inner(&s.im, rd)? - hamiltonian_h(s, op)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(trapezoid(&density, dt))
}

/// Per interior sample, `max |iħΨ̇ + KΨ|` with `Ψ̇` from the given stencil.
pub fn schrodinger_residual(
    op: &Operator,
    traj: &WaveTrajectory,
    stencil: TimeStencil,
) -> Result<Vec<(f64, f64)>> {
    let w = stencil.half_width();
    let dt = traj.uniform_step(2 * w + 1)?;
    let hbar = op.hbar();
    let re: Vec<&GridFn> = traj.states().iter().map(|s| &s.re).collect();
    let im: Vec<&GridFn> = traj.states().iter().map(|s| &s.im).collect();
    (w..traj.len() - w)
        .map(|k| {
            let s = &traj.states()[k];
            let rd = stencil.derivative(&re, k, dt);
            let id = stencil.derivative(&im, k, dt);
            // iħ(ṙe + i i̇m) + K(re + i im)
            let real = op.apply(&s.re)? - id * hbar;
            let imag = op.apply(&s.im)? + rd * hbar;
            let sup = (real.component_mul(&real) + imag.component_mul(&imag))
                .amax()
                .sqrt();
            Ok((s.time, sup))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{eigendecompose, Boundary, Grid, Potential};

    fn harmonic(n: usize) -> Operator {
        let grid = Grid::new(n, -8.0, 8.0, Boundary::Dirichlet).unwrap();
        let pot = Potential::from_fn(&grid, |x| 0.5 * x * x).unwrap();
        Operator::new(grid, pot, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rhs_zero_and_eigen() {
        let op = harmonic(80);
        let spec = eigendecompose(&op).unwrap();
        let (a, b) = schrodinger_rhs(&op, &WaveFunction::zeros(80, 0.0)).unwrap();
        assert_eq!(a.amax(), 0.0);
        assert_eq!(b.amax(), 0.0);
        let i0 = spec.energy_index(0);
        let u0 = spec.mode(i0).clone_owned();
        let psi = WaveFunction::new(u0.clone(), GridFn::zeros(80), 0.0).unwrap();
        let (a, b) = schrodinger_rhs(&op, &psi).unwrap();
        assert_eq!(a.amax(), 0.0);
        assert!((b - u0 * spec.eigenvalue(i0)).amax() < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let op = harmonic(20);
        let psi = WaveFunction::zeros(19, 0.0);
        assert!(matches!(
            schrodinger_rhs(&op, &psi),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(WaveFunction::new(GridFn::zeros(3), GridFn::zeros(4), 0.0).is_err());
    }

    #[test]
    fn crank_nicolson_applies_cayley_phase_on_eigenline() {
        let op = harmonic(120);
        let spec = eigendecompose(&op).unwrap();
        let i0 = spec.energy_index(0);
        let e0 = -spec.eigenvalue(i0);
        let u0 = spec.mode(i0).clone_owned();
        let dt = 0.05;
        let psi = WaveFunction::new(u0.clone(), GridFn::zeros(120), 0.0).unwrap();
        let next = step_crank_nicolson(&op, &psi, dt).unwrap();
        // (1 − i dt E/2ħ)/(1 + i dt E/2ħ)
        let h = dt * e0 / 2.0;
        let denom = 1.0 + h * h;
        let (cr, ci) = ((1.0 - h * h) / denom, -2.0 * h / denom);
        assert!((next.re - &u0 * cr).amax() < 1e-10);
        assert!((next.im - &u0 * ci).amax() < 1e-10);
        assert_close!(next.time, dt, 1e-15);
    }

    #[test]
    fn crank_nicolson_preserves_norm_any_dt() {
        let op = harmonic(100);
        let g = *op.grid();
        let psi = WaveFunction::new(
            g.sample(|x| (-(x - 1.0).powi(2)).exp() * (2.0 * x).cos()),
            g.sample(|x| (-(x - 1.0).powi(2)).exp() * (2.0 * x).sin()),
            0.0,
        )
        .unwrap();
        for dt in [1e-3, 0.1, 5.0] {
            let before = norm_hprime(&op, &psi).unwrap();
            let after = norm_hprime(&op, &step_crank_nicolson(&op, &psi, dt).unwrap()).unwrap();
            assert!(((after - before) / before).abs() < 1e-12);
        }
        assert!(step_crank_nicolson(&op, &psi, 0.0).is_err());
    }

    #[test]
    fn spectral_single_mode_closed_form() {
        let op = harmonic(100);
        let spec = eigendecompose(&op).unwrap();
        let i0 = spec.energy_index(0);
        let e0 = -spec.eigenvalue(i0);
        let u0 = spec.mode(i0).clone_owned();
        let psi0 = WaveFunction::new(u0.clone(), GridFn::zeros(100), 0.0).unwrap();
        assert!(propagate_spectral(&spec, &psi0, 0.0).unwrap().max_diff(&psi0) < 1e-13);
        let t = 1.7;
        let got = propagate_spectral(&spec, &psi0, t).unwrap();
        let want = WaveFunction::new(&u0 * (e0 * t).cos(), &u0 * -(e0 * t).sin(), t).unwrap();
        assert!(got.max_diff(&want) < 1e-12);
    }

    #[test]
    fn hamiltonian_of_normalized_eigenstate() {
        let grid = Grid::new(400, -10.0, 10.0, Boundary::Dirichlet).unwrap();
        let pot = Potential::from_fn(&grid, |x| 0.5 * x * x).unwrap();
        let op = Operator::new(grid, pot, 1.0, 1.0).unwrap();
        let spec = eigendecompose(&op).unwrap();
        let i0 = spec.energy_index(0);
        let u0 = spec.mode(i0).clone_owned();
        let psi = WaveFunction::new(u0, GridFn::zeros(400), 0.0).unwrap();
        // H = E₀‖Ψ‖²/2ħ, with E₀ ≈ 0.5
        let h = hamiltonian_h(&psi, &op).unwrap();
        assert_close!(h, -spec.eigenvalue(i0) / 2.0, 1e-12);
        assert_close!(h, 0.25, 1e-3);
        assert_close!(norm_hprime(&op, &psi).unwrap(), 0.5, 1e-12);
        assert_eq!(hamiltonian_h(&WaveFunction::zeros(400, 0.0), &op).unwrap(), 0.0);
    }

    #[test]
    fn action_of_stationary_state() {
        // On Ψ = u e^{−iEt/ħ}: ⟨im, ṙe⟩ − H = −(E/2ħ) cos(2Et/ħ), so
        // S_H(T) = −sin(2ET/ħ)/4 for a normalized state.
        let op = harmonic(80);
        let spec = eigendecompose(&op).unwrap();
        let i0 = spec.energy_index(0);
        let e0 = -spec.eigenvalue(i0);
        let u0 = spec.mode(i0).clone_owned();
        let psi0 = WaveFunction::new(u0, GridFn::zeros(80), 0.0).unwrap();
        let (dt, steps) = (1e-3, 3000);
        let traj = spectral_trajectory(&spec, &psi0, dt, steps).unwrap();
        let s = evaluate_hamiltonian_action(&traj, &op).unwrap();
        let t_end = dt * steps as f64;
        assert_close!(s, -(2.0 * e0 * t_end).sin() / 4.0, 1e-6);

        let zero = Trajectory::new(vec![WaveFunction::zeros(80, 0.0), WaveFunction::zeros(80, 1.0), WaveFunction::zeros(80, 2.0)]);
        assert_eq!(evaluate_hamiltonian_action(&zero, &op).unwrap(), 0.0);
        let short = Trajectory::new(vec![WaveFunction::zeros(80, 0.0)]);
        assert!(matches!(
            evaluate_hamiltonian_action(&short, &op),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
