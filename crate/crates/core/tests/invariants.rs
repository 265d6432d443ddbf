use nalgebra::DMatrix;
use proptest::prelude::*;

use wavefield::brackets::{dirac_structure, dirac_structure_generic, PhaseLayout};
use wavefield::constrained::{evaluate_singular_action, ConstrainedState};
use wavefield::field::{evaluate_field_action, step_leapfrog, FieldState};
use wavefield::lattice::{eigendecompose, solve_elliptic};
use wavefield::schrodinger::{step_crank_nicolson, WaveFunction};
use wavefield::trajectory::{trapezoid, Trajectory};
use wavefield::{Boundary, Grid, GridFn, Operator, Potential};

fn operator(values: &[f64], periodic: bool, hbar: f64) -> Operator {
    let boundary = if periodic { Boundary::Periodic } else { Boundary::Dirichlet };
    let grid = Grid::new(values.len(), -3.0, 3.0, boundary).unwrap();
    let pot = Potential::new(GridFn::from_column_slice(values), &grid).unwrap();
    Operator::new(grid, pot, hbar, 1.0).unwrap()
}

fn lattice() -> impl Strategy<Value = (Vec<f64>, bool, f64)> {
    (prop::collection::vec(-2.0..2.0f64, 4..12), any::<bool>(), 0.3..2.0f64)
}

fn field(n: usize) -> impl Strategy<Value = GridFn> {
    prop::collection::vec(-1.0..1.0f64, n).prop_map(GridFn::from_vec)
}

/// `{F, G}` for quadratic `F = ½zᵀAz`, `G = ½zᵀBz` is again quadratic with
/// matrix `AJB − BJA`.
fn quadratic_bracket(a: &DMatrix<f64>, b: &DMatrix<f64>, j: &DMatrix<f64>) -> DMatrix<f64> {
    a * j * b - b * j * a
}

fn symmetric(n: usize, seed: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |r, c| seed[(r * 7 + c * 3) % seed.len()] * ((r + 2 * c) as f64).sin());
    &m + m.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_is_symmetric((v, periodic, hbar) in lattice()) {
        let k = operator(&v, periodic, hbar).matrix();
        prop_assert_eq!(&k, &k.transpose());
    }

    #[test]
    fn modes_are_complete((v, periodic, hbar) in lattice(), seed in any::<u64>()) {
        let op = operator(&v, periodic, hbar);
        let spec = eigendecompose(&op).unwrap();
        let f = GridFn::from_fn(op.len(), |j, _| ((j as u64 ^ seed) % 97) as f64 / 97.0 - 0.5);
        let back = spec.synthesize(&spec.coefficients(&f).unwrap()).unwrap();
        prop_assert!((back - &f).amax() <= 1e-12 * f.amax().max(1.0));
    }

    #[test]
    fn elliptic_solve_inverts_k((v, _, hbar) in lattice(), f in field(11)) {
        let op = operator(&v, false, hbar);
        let spec = eigendecompose(&op).unwrap();
        let f = f.rows(0, op.len()).clone_owned();
        if spec.zero_modes().is_empty() {
            let c = solve_elliptic(&spec, &op.apply(&f).unwrap(), 1e-8).unwrap();
            let kc = op.apply(&c).unwrap();
            prop_assert!((kc - op.apply(&f).unwrap()).amax() <= 1e-9 * op.spectral_radius() * f.amax().max(1.0));
        }
    }

    #[test]
    fn dirac_structure_is_antisymmetric_and_matches_generic((v, periodic, hbar) in lattice()) {
        let op = operator(&v, periodic, hbar);
        let layout = PhaseLayout::for_operator(&op);
        let jd = dirac_structure(&op, &layout).unwrap();
        prop_assert_eq!(jd.antisymmetry_violation(), 0.0);
        let generic = dirac_structure_generic(&op, &layout).unwrap();
        let scale = op.spectral_radius().max(1.0);
        prop_assert!((&jd.j - &generic.j).amax() <= 1e-10 * scale);
    }

    #[test]
    fn jacobi_identity_on_quadratic_functionals((v, periodic, hbar) in lattice(), s in prop::collection::vec(-1.0..1.0f64, 5..9)) {
        let op = operator(&v, periodic, hbar);
        let layout = PhaseLayout::for_operator(&op);
        let j = dirac_structure(&op, &layout).unwrap().j;
        let d = layout.dim();
        let a = symmetric(d, &s);
        let b = symmetric(d, &s[1..]);
        let c = symmetric(d, &s[2..]);
        let cyclic = quadratic_bracket(&a, &quadratic_bracket(&b, &c, &j), &j)
            + quadratic_bracket(&b, &quadratic_bracket(&c, &a, &j), &j)
            + quadratic_bracket(&c, &quadratic_bracket(&a, &b, &j), &j);
        let scale = a.amax() * b.amax() * c.amax() * j.amax().powi(2) * (d * d) as f64;
        prop_assert!(cyclic.amax() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn shifted_multiplier_decouples_the_action((v, periodic, hbar) in lattice(), seed in 0.0..6.0f64) {
        // with χ = ϕ + Kφ the singular action is the field action plus ∫χ²/2ħ
        let op = operator(&v, periodic, hbar);
        let n = op.len();
        let g = *op.grid();
        let dt = 0.05;
        let states: Vec<ConstrainedState> = (0..6)
            .map(|k| {
                let t = k as f64 * dt;
                let phi = g.sample(|x| (x + seed + t).sin() * (1.0 + t));
                let varphi = g.sample(|x| (x * t - seed).cos());
                ConstrainedState::new(phi, GridFn::zeros(n), varphi, GridFn::zeros(n), t).unwrap()
            })
            .collect();
        let fields = Trajectory::new(
            states.iter().map(|s| FieldState::new(s.phi.clone(), s.p.clone(), s.time).unwrap()).collect(),
        );
        let chi: Vec<f64> = states
            .iter()
            .map(|s| {
                let chi = &s.varphi + op.apply(&s.phi).unwrap();
                g.inner(&chi, &chi).unwrap() / (2.0 * hbar)
            })
            .collect();
        let singular = evaluate_singular_action(&Trajectory::new(states), &op).unwrap();
        let split = evaluate_field_action(&fields, &op).unwrap() + trapezoid(&chi, dt);
        prop_assert!((singular - split).abs() <= 1e-11 * singular.abs().max(1.0));
    }

    #[test]
    fn leapfrog_is_time_reversible((v, periodic, hbar) in lattice(), phi in field(11), p in field(11)) {
        let op = operator(&v, periodic, hbar);
        let n = op.len();
        let s0 = FieldState::new(phi.rows(0, n).clone_owned(), p.rows(0, n).clone_owned(), 0.0).unwrap();
        let dt = 0.01 * hbar;
        let mut s = s0.clone();
        for _ in 0..20 {
            s = step_leapfrog(&op, &s, dt).unwrap();
        }
        for _ in 0..20 {
            s = step_leapfrog(&op, &s, -dt).unwrap();
        }
        prop_assert!(s.max_diff(&s0) <= 1e-12);
    }

    #[test]
    fn crank_nicolson_preserves_probability((v, periodic, hbar) in lattice(), re in field(11), im in field(11), dt in 0.001..1.0f64) {
        let op = operator(&v, periodic, hbar);
        let n = op.len();
        let g = *op.grid();
        let psi = WaveFunction::new(re.rows(0, n).clone_owned(), im.rows(0, n).clone_owned(), 0.0).unwrap();
        let mass = |w: &WaveFunction| g.inner(&w.re, &w.re).unwrap() + g.inner(&w.im, &w.im).unwrap();
        let next = step_crank_nicolson(&op, &psi, dt).unwrap();
        prop_assert!((mass(&next) - mass(&psi)).abs() <= 1e-12 * mass(&psi).max(1e-300));
    }
}
