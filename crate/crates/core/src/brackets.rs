//! Poisson, non-canonical and Dirac brackets as dense matrices on the
//! flattened phase vector `(φ | p | ϕ | π)`.
//!
//! A `BracketMatrix` stores `J` with `{z_a, z_b} = J_ab/dx`, the lattice
//! image of `δ(x−y) ↦ I/dx`. Flows are `ż = J·∇H` where `∇` is the
//! functional gradient, i.e. the partial derivative divided by `dx`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::constrained::{constrained_rhs, make_onshell, ConstrainedState};
use crate::error::{check_len, Error, Result};
use crate::field::{field_rhs, FieldState};
use crate::lattice::{GridFn, Operator};
use crate::schrodinger::{schrodinger_rhs, WaveFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Phi = 0,
    P = 1,
    Varphi = 2,
    Pi = 3,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Phi, Block::P, Block::Varphi, Block::Pi];

    pub fn name(self) -> &'static str {
        match self {
            Block::Phi => "phi",
            Block::P => "p",
            Block::Varphi => "varphi",
            Block::Pi => "pi",
        }
    }
}

/// Fixed block ordering `phi | p | varphi | pi`, each of length `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseLayout {
    n: usize,
    dx: f64,
}

impl PhaseLayout {
    pub fn new(n: usize, dx: f64) -> Result<Self> {
        if n == 0 || !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::InvalidParameter(format!("phase layout n={n}, dx={dx}")));
        }
        Ok(Self { n, dx })
    }

    pub fn for_operator(op: &Operator) -> Self {
        Self {
            n: op.len(),
            dx: op.grid().dx(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dim(&self) -> usize {
        4 * self.n
    }

    pub fn offset(&self, b: Block) -> usize {
        b as usize * self.n
    }

    pub fn index(&self, b: Block, j: usize) -> usize {
        self.offset(b) + j
    }

    /// Converts partial derivatives `∂F/∂z` into functional ones.
    pub fn functional_weight(&self) -> f64 {
        1.0 / self.dx
    }

    pub fn flatten(&self, s: &ConstrainedState) -> Result<DVector<f64>> {
        check_len(self.n, s.len())?;
        let mut z = DVector::zeros(self.dim());
        for (b, f) in Block::ALL.iter().zip([&s.phi, &s.p, &s.varphi, &s.pi]) {
            z.rows_mut(self.offset(*b), self.n).copy_from(f);
        }
        Ok(z)
    }

    pub fn unflatten(&self, z: &DVector<f64>, time: f64) -> Result<ConstrainedState> {
        check_len(self.dim(), z.len())?;
        let block = |b| z.rows(self.offset(b), self.n).clone_owned();
        Ok(ConstrainedState {
            phi: block(Block::Phi),
            p: block(Block::P),
            varphi: block(Block::Varphi),
            pi: block(Block::Pi),
            time,
        })
    }

    fn check(&self, op: &Operator) -> Result<()> {
        check_len(self.n, op.len())?;
        if (self.dx - op.grid().dx()).abs() > 1e-14 * self.dx {
            return Err(Error::InvalidParameter(format!(
                "layout spacing {} does not match grid spacing {}",
                self.dx,
                op.grid().dx()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketMatrix {
    pub j: DMatrix<f64>,
    pub dx: f64,
}

impl BracketMatrix {
    /// `{z_a, z_b}`.
    pub fn bracket(&self, a: usize, b: usize) -> f64 {
        self.j[(a, b)] / self.dx
    }

    /// `n×n` sub-block of bracket values `{x_i, y_j}`.
    pub fn block(&self, layout: &PhaseLayout, x: Block, y: Block) -> DMatrix<f64> {
        let n = layout.n();
        self.j.view((layout.offset(x), layout.offset(y)), (n, n)) / self.dx
    }

    /// `2n×2n` restriction of `J` to two blocks.
    pub fn sector(&self, layout: &PhaseLayout, x: Block, y: Block) -> DMatrix<f64> {
        let n = layout.n();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        for (r, br) in [x, y].into_iter().enumerate() {
            for (c, bc) in [x, y].into_iter().enumerate() {
                out.view_mut((r * n, c * n), (n, n)).copy_from(
                    &self.j.view((layout.offset(br), layout.offset(bc)), (n, n)),
                );
            }
        }
        out
    }

    pub fn antisymmetry_violation(&self) -> f64 {
        (&self.j + self.j.transpose()).amax()
    }

    /// `J·∇H` for a functional gradient `∇H`.
    pub fn flow(&self, grad: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.j.ncols(), grad.len())?;
        Ok(&self.j * grad)
    }
}

/// Identity couplings `φ↔p` and `ϕ↔π`.
pub fn canonical_structure(layout: &PhaseLayout) -> BracketMatrix {
    let mut j = DMatrix::zeros(layout.dim(), layout.dim());
    for (q, p) in [(Block::Phi, Block::P), (Block::Varphi, Block::Pi)] {
        for i in 0..layout.n() {
            j[(layout.index(q, i), layout.index(p, i))] = 1.0;
            j[(layout.index(p, i), layout.index(q, i))] = -1.0;
        }
    }
    BracketMatrix { j, dx: layout.dx() }
}

/// Partial derivatives of `χ1 = ϕ + Kφ` (first `n` rows) and `χ2 = π`.
pub fn constraint_gradient_matrix(op: &Operator, layout: &PhaseLayout) -> Result<DMatrix<f64>> {
    layout.check(op)?;
    let n = layout.n();
    let mut g = DMatrix::zeros(2 * n, layout.dim());
    g.view_mut((0, layout.offset(Block::Phi)), (n, n)).copy_from(&op.matrix());
    for i in 0..n {
        g[(i, layout.index(Block::Varphi, i))] = 1.0;
        g[(n + i, layout.index(Block::Pi, i))] = 1.0;
    }
    Ok(g)
}

/// `C_ij = {χ_i, χ_j}` under the canonical structure.
pub fn constraint_bracket_matrix(op: &Operator, layout: &PhaseLayout) -> Result<DMatrix<f64>> {
    let g = constraint_gradient_matrix(op, layout)?;
    let j = canonical_structure(layout);
    Ok(&g * &j.j * g.transpose() / layout.dx())
}

/// `[[0, I/dx], [−I/dx, 0]]`, the form `C` must take.
pub fn expected_constraint_brackets(layout: &PhaseLayout) -> DMatrix<f64> {
    let n = layout.n();
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        c[(i, n + i)] = 1.0 / layout.dx();
        c[(n + i, i)] = -1.0 / layout.dx();
    }
    c
}

fn dirac_from_inverse(
    j: &BracketMatrix,
    g: &DMatrix<f64>,
    c_inv: &DMatrix<f64>,
    dx: f64,
) -> BracketMatrix {
    // {z,z}_D = J/dx − (JGᵀ/dx) C⁻¹ (GJ/dx)
    let jg = &j.j * g.transpose();
    let gj = -jg.transpose();
    let correction = &jg * c_inv * gj / dx;
    BracketMatrix {
        j: &j.j - correction,
        dx,
    }
}

/// Dirac structure, inverting `C` through its known block form. Fails if
/// the assembled `C` has drifted from that form.
pub fn dirac_structure(op: &Operator, layout: &PhaseLayout) -> Result<BracketMatrix> {
    let c = constraint_bracket_matrix(op, layout)?;
    let expected = expected_constraint_brackets(layout);
    if (&c - &expected).amax() > 1e-12 * expected.amax() {
        return Err(Error::LinearSolve("constraint bracket matrix is not in block form"));
    }
    // the inverse of [[0, I],[−I, 0]]/dx is dx·[[0, −I],[I, 0]]
    let c_inv = -expected * (layout.dx() * layout.dx());
    let g = constraint_gradient_matrix(op, layout)?;
    Ok(dirac_from_inverse(&canonical_structure(layout), &g, &c_inv, layout.dx()))
}

/// Same as [`dirac_structure`] through a general LU inverse of `C`.
pub fn dirac_structure_generic(op: &Operator, layout: &PhaseLayout) -> Result<BracketMatrix> {
    let c = constraint_bracket_matrix(op, layout)?;
    let c_inv = c
        .lu()
        .try_inverse()
        .ok_or(Error::LinearSolve("constraint bracket matrix is singular"))?;
    let g = constraint_gradient_matrix(op, layout)?;
    Ok(dirac_from_inverse(&canonical_structure(layout), &g, &c_inv, layout.dx()))
}

/// Non-canonical structure on the `(ϕ, p)` sector: `J′ = [[0, −K], [K, 0]]`.
pub fn noncanonical_structure(op: &Operator) -> BracketMatrix {
    let n = op.len();
    let k = op.matrix();
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).copy_from(&(-&k));
    j.view_mut((n, 0), (n, n)).copy_from(&k);
    BracketMatrix {
        j,
        dx: op.grid().dx(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<IdentityCheck>,
}

impl Report {
    /// Records `violation` against `tol` relative to `scale` (floored at 1).
    pub fn record(&mut self, name: impl Into<String>, violation: f64, tol: f64, scale: f64) {
        let tolerance = tol * scale.max(1.0);
        self.checks.push(IdentityCheck {
            name: name.into(),
            violation,
            tolerance,
            passed: violation <= tolerance,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }
}

/// Builds the Dirac structure and checks every block identity.
pub fn verify_dirac_relations(op: &Operator, layout: &PhaseLayout, tol: f64) -> Result<Report> {
    let jd = dirac_structure(op, layout)?;
    check_dirac_relations(&jd, op, layout, tol)
}

/// The block identities of a given structure, so that a corrupted matrix
/// can be fed to the detector.
pub fn check_dirac_relations(
    jd: &BracketMatrix,
    op: &Operator,
    layout: &PhaseLayout,
    tol: f64,
) -> Result<Report> {
    layout.check(op)?;
    check_len(layout.dim(), jd.j.nrows())?;
    let n = layout.n();
    let dx = layout.dx();
    let scale = jd.j.amax() / dx;
    let k = op.matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut r = Report::default();
    let diff = |x, y, expected: &DMatrix<f64>| (jd.block(layout, x, y) - expected).amax();
    let zero = DMatrix::<f64>::zeros(n, n);

    r.record("phi_p", diff(Block::Phi, Block::P, &(&eye / dx)), tol, scale);
    r.record("varphi_p", diff(Block::Varphi, Block::P, &(-&k / dx)), tol, scale);
    for (name, b) in [("phi_phi", Block::Phi), ("p_p", Block::P), ("varphi_varphi", Block::Varphi)] {
        r.record(name, diff(b, b, &zero), tol, scale);
    }
    r.record("phi_varphi", diff(Block::Phi, Block::Varphi, &zero), tol, scale);
    let pi = layout.offset(Block::Pi);
    let pi_rows = jd.j.rows(pi, n).amax().max(jd.j.columns(pi, n).amax()) / dx;
    r.record("pi_brackets", pi_rows, tol, scale);
    r.record("antisymmetry", jd.antisymmetry_violation() / dx, tol, scale);
    let g = constraint_gradient_matrix(op, layout)?;
    r.record(
        "constraint_casimirs",
        (&jd.j * g.transpose()).amax() / dx,
        tol,
        scale * g.amax(),
    );
    let canonical = canonical_structure(layout);
    r.record(
        "canonical_coincidence",
        (jd.sector(layout, Block::Phi, Block::P) - canonical.sector(layout, Block::Phi, Block::P))
            .amax()
            / dx,
        tol,
        scale,
    );
    let reference = noncanonical_structure(op);
    r.record(
        "noncanonical_coincidence",
        (jd.sector(layout, Block::Varphi, Block::P) - &reference.j).amax() / dx,
        tol,
        scale,
    );
    Ok(r)
}

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> GridFn {
    GridFn::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Gradient of `H′ = (1/2ħ)∫(ϕ² + p²)` on the `(ϕ, p)` sector.
fn hprime_gradient(psi: &WaveFunction, hbar: f64) -> DVector<f64> {
    let n = psi.len();
    let mut g = DVector::zeros(2 * n);
    g.rows_mut(0, n).copy_from(&(&psi.re / hbar));
    g.rows_mut(n, n).copy_from(&(&psi.im / hbar));
    g
}

/// Checks that `J′∇H′` reproduces the Schrödinger right-hand side and
/// conserves `H′`, over `samples` random states.
pub fn generalized_hamiltonian_check(
    op: &Operator,
    layout: &PhaseLayout,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    layout.check(op)?;
    let n = layout.n();
    let hbar = op.hbar();
    let jp = noncanonical_structure(op);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut flow_err, mut flow_scale) = (0.0_f64, 0.0_f64);
    let (mut cons_err, mut cons_scale) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let psi = WaveFunction::new(random_field(&mut rng, n), random_field(&mut rng, n), 0.0)?;
        let grad = hprime_gradient(&psi, hbar);
        let z = jp.flow(&grad)?;
        let (d_re, d_im) = schrodinger_rhs(op, &psi)?;
        flow_err = flow_err
            .max((z.rows(0, n) - &d_re).amax())
            .max((z.rows(n, n) - &d_im).amax());
        flow_scale = flow_scale.max(d_re.amax()).max(d_im.amax());
        cons_err = cons_err.max(grad.dot(&z).abs());
        cons_scale = cons_scale.max(grad.norm() * z.norm());
    }
    let mut r = Report::default();
    r.record("flow_matches_schrodinger", flow_err, tol, flow_scale);
    r.record("hprime_conserved", cons_err, tol, cons_scale);
    r.record("antisymmetry", jp.antisymmetry_violation(), tol, jp.j.amax());
    Ok(r)
}

/// Checks that the Dirac flow of the on-shell Hamiltonian, written in
/// either pair of dynamical variables, gives the corresponding reduced
/// equations (and the full constrained equations) for random on-shell
/// states.
pub fn dirac_flow_check(
    op: &Operator,
    layout: &PhaseLayout,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    let jd = dirac_structure(op, layout)?;
    dirac_flow_check_with(&jd, op, layout, tol, samples, seed)
}

pub fn dirac_flow_check_with(
    jd: &BracketMatrix,
    op: &Operator,
    layout: &PhaseLayout,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    layout.check(op)?;
    let n = layout.n();
    let hbar = op.hbar();
    let g = constraint_gradient_matrix(op, layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0_f64; 4];
    let mut scale = [0.0_f64; 4];
    let mut bump = |i: usize, err: f64, s: f64| {
        worst[i] = worst[i].max(err);
        scale[i] = scale[i].max(s);
    };
    for _ in 0..samples {
        let s = make_onshell(op, &random_field(&mut rng, n), &random_field(&mut rng, n), 0.0)?;

        // H = (1/2ħ)∫(ϕ² + p²) in the (ϕ, p) parameterization
        let mut grad_wave = DVector::zeros(layout.dim());
        grad_wave.rows_mut(layout.offset(Block::P), n).copy_from(&(&s.p / hbar));
        grad_wave.rows_mut(layout.offset(Block::Varphi), n).copy_from(&(&s.varphi / hbar));
        let zw = jd.flow(&grad_wave)?;
        let psi = WaveFunction::new(s.varphi.clone(), s.p.clone(), 0.0)?;
        let (d_re, d_im) = schrodinger_rhs(op, &psi)?;
        let err = (zw.rows(layout.offset(Block::Varphi), n) - &d_re)
            .amax()
            .max((zw.rows(layout.offset(Block::P), n) - &d_im).amax());
        bump(0, err, d_re.amax().max(d_im.amax()));

        // H = (1/2ħ)∫(p² + (Kφ)²) in the (φ, p) parameterization
        let kk_phi = op.apply(&op.apply(&s.phi)?)?;
        let mut grad_field = DVector::zeros(layout.dim());
        grad_field.rows_mut(layout.offset(Block::Phi), n).copy_from(&(&kk_phi / hbar));
        grad_field.rows_mut(layout.offset(Block::P), n).copy_from(&(&s.p / hbar));
        let zf = jd.flow(&grad_field)?;
        let f = FieldState::new(s.phi.clone(), s.p.clone(), 0.0)?;
        let (d_phi, d_p) = field_rhs(op, &f)?;
        let err = (zf.rows(layout.offset(Block::Phi), n) - &d_phi)
            .amax()
            .max((zf.rows(layout.offset(Block::P), n) - &d_p).amax());
        bump(1, err, d_phi.amax().max(d_p.amax()));

        let full = layout.flatten(&rates_as_state(op, &s)?)?;
        bump(2, (&zw - &full).amax().max((&zf - &full).amax()), full.amax());
        bump(3, (&g * &zw).amax().max((&g * &zf).amax()), zw.amax().max(zf.amax()) * g.amax());
    }
    let mut r = Report::default();
    r.record("wave_sector_matches_schrodinger", worst[0], tol, scale[0]);
    r.record("field_sector_matches_field_equations", worst[1], tol, scale[1]);
    r.record("full_flow_matches_constrained_equations", worst[2], tol, scale[2]);
    r.record("constraints_preserved", worst[3], tol, scale[3]);
    Ok(r)
}

fn rates_as_state(op: &Operator, s: &ConstrainedState) -> Result<ConstrainedState> {
    let r = constrained_rhs(op, s)?;
    Ok(ConstrainedState {
        phi: r.phi,
        p: r.p,
        varphi: r.varphi,
        pi: r.pi,
        time: s.time,
    })
}

/// Smallest singular values of the `(φ, p)` and `(ϕ, p)` sectors of `J`.
/// The second equals `min|κ|` and vanishes exactly when `K` has a kernel.
pub fn sector_min_singular_values(jd: &BracketMatrix, layout: &PhaseLayout) -> (f64, f64) {
    let smin = |m: DMatrix<f64>| m.singular_values().min();
    (
        smin(jd.sector(layout, Block::Phi, Block::P)),
        smin(jd.sector(layout, Block::Varphi, Block::P)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{eigendecompose, Boundary, Grid, Potential};

    fn free3() -> Operator {
        let grid = Grid::new(3, 0.0, 4.0, Boundary::Dirichlet).unwrap();
        Operator::new(grid, Potential::zero(&grid), 1.0, 0.5).unwrap()
    }

    fn harmonic(n: usize) -> Operator {
        let grid = Grid::new(n, -5.0, 5.0, Boundary::Dirichlet).unwrap();
        let pot = Potential::from_fn(&grid, |x| 0.5 * x * x).unwrap();
        Operator::new(grid, pot, 1.0, 1.0).unwrap()
    }

    #[test]
    fn canonical_entries() {
        let l = PhaseLayout::new(3, 0.5).unwrap();
        let j = canonical_structure(&l);
        assert_eq!(j.antisymmetry_violation(), 0.0);
        assert_eq!(j.bracket(l.index(Block::Phi, 1), l.index(Block::P, 1)), 2.0);
        assert_eq!(j.bracket(l.index(Block::Phi, 1), l.index(Block::P, 2)), 0.0);
        assert_eq!(j.bracket(l.index(Block::Phi, 0), l.index(Block::Varphi, 0)), 0.0);
        assert_eq!(j.bracket(l.index(Block::Pi, 2), l.index(Block::Varphi, 2)), -2.0);
    }

    #[test]
    fn flatten_round_trip() {
        let op = harmonic(5);
        let l = PhaseLayout::for_operator(&op);
        let g = *op.grid();
        let s = ConstrainedState::new(g.sample(f64::sin), g.sample(f64::cos), g.points(), g.sample(|x| x * x), 0.3).unwrap();
        let z = l.flatten(&s).unwrap();
        assert_eq!(z[l.index(Block::Varphi, 4)], g.x(4));
        assert_eq!(l.unflatten(&z, 0.3).unwrap(), s);
    }

    #[test]
    fn hand_assembled_small_structures() {
        // K = [[−2,1,0],[1,−2,1],[0,1,−2]], dx = 1
        let op = free3();
        let l = PhaseLayout::for_operator(&op);
        let g = constraint_gradient_matrix(&op, &l).unwrap();
        assert_eq!(g[(0, 0)], -2.0);
        assert_eq!(g[(0, 1)], 1.0);
        assert_eq!(g[(1, l.index(Block::Varphi, 1))], 1.0);
        assert_eq!(g[(5, l.index(Block::Pi, 2))], 1.0);
        assert_eq!(g.row(3).sum(), 1.0);

        let c = constraint_bracket_matrix(&op, &l).unwrap();
        assert_eq!(c, expected_constraint_brackets(&l));
        assert_close!(c.singular_values().min(), 1.0, 1e-14);

        let jd = dirac_structure(&op, &l).unwrap();
        let mut hand = DMatrix::<f64>::zeros(12, 12);
        let k = op.matrix();
        for i in 0..3 {
            hand[(i, 3 + i)] = 1.0;
            hand[(3 + i, i)] = -1.0;
            for j in 0..3 {
                hand[(6 + i, 3 + j)] = -k[(i, j)];
                hand[(3 + i, 6 + j)] = k[(i, j)];
            }
        }
        assert_eq!(jd.j, hand);
        let generic = dirac_structure_generic(&op, &l).unwrap();
        assert!((generic.j - hand).amax() < 1e-14);
    }

    #[test]
    fn constraint_gradients_match_finite_differences() {
        let op = harmonic(6);
        let l = PhaseLayout::for_operator(&op);
        let g = constraint_gradient_matrix(&op, &l).unwrap();
        let g0 = *op.grid();
        let s = ConstrainedState::new(g0.sample(f64::sin), g0.sample(f64::cos), g0.points(), g0.sample(|x| 0.2 * x), 0.0).unwrap();
        let z = l.flatten(&s).unwrap();
        let chi = |z: &DVector<f64>| {
            let s = l.unflatten(z, 0.0).unwrap();
            let (c1, c2) = crate::constrained::constraint_residuals(&op, &s).unwrap();
            let mut out = DVector::zeros(12);
            out.rows_mut(0, 6).copy_from(&c1);
            out.rows_mut(6, 6).copy_from(&c2);
            out
        };
        let h = 1e-6;
        for b in 0..l.dim() {
            let mut zp = z.clone();
            zp[b] += h;
            let mut zm = z.clone();
            zm[b] -= h;
            let col = (chi(&zp) - chi(&zm)) / (2.0 * h);
            assert!((col - g.column(b)).amax() < 1e-8);
        }
    }

    #[test]
    fn constraint_brackets_do_not_see_the_potential() {
        let a = harmonic(8);
        let grid = *a.grid();
        let b = Operator::new(grid, Potential::from_fn(&grid, |x| x.sin() * 3.0).unwrap(), 1.0, 1.0).unwrap();
        let l = PhaseLayout::for_operator(&a);
        assert_eq!(
            constraint_bracket_matrix(&a, &l).unwrap(),
            constraint_bracket_matrix(&b, &l).unwrap()
        );
    }

    #[test]
    fn small_grid_identities_pass() {
        let op = free3();
        let l = PhaseLayout::for_operator(&op);
        let r = verify_dirac_relations(&op, &l, 1e-10).unwrap();
        assert!(r.all_passed(), "{:?}", r.failed());
        assert_eq!(r.checks.len(), 11);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"name\":\"varphi_p\""));
    }

    #[test]
    fn detector_flags_only_perturbed_blocks() {
        let op = harmonic(10);
        let l = PhaseLayout::for_operator(&op);
        let clean = dirac_structure(&op, &l).unwrap();

        let mut jd = clean.clone();
        let (a, b) = (l.index(Block::Phi, 2), l.index(Block::Phi, 5));
        jd.j[(a, b)] += 1e-6;
        jd.j[(b, a)] -= 1e-6;
        let r = check_dirac_relations(&jd, &op, &l, 1e-10).unwrap();
        assert_eq!(r.failed(), vec!["phi_phi", "constraint_casimirs", "canonical_coincidence"]);

        let mut jd = clean.clone();
        jd.j[(l.index(Block::Varphi, 3), l.index(Block::P, 4))] += 1e-6;
        let r = check_dirac_relations(&jd, &op, &l, 1e-10).unwrap();
        assert_eq!(r.failed(), vec!["varphi_p", "antisymmetry", "noncanonical_coincidence"]);

        let mut jd = clean;
        jd.j[(l.index(Block::Pi, 0), l.index(Block::Pi, 1))] += 1e-6;
        jd.j[(l.index(Block::Pi, 1), l.index(Block::Pi, 0))] -= 1e-6;
        let r = check_dirac_relations(&jd, &op, &l, 1e-10).unwrap();
        assert_eq!(r.failed(), vec!["pi_brackets", "constraint_casimirs"]);
    }

    #[test]
    fn generalized_hamiltonian_and_dirac_flows() {
        let op = free3();
        let l = PhaseLayout::for_operator(&op);
        let r = generalized_hamiltonian_check(&op, &l, 1e-13, 16, 7).unwrap();
        assert!(r.all_passed(), "{r:?}");
        let r = dirac_flow_check(&op, &l, 1e-12, 16, 11).unwrap();
        assert!(r.all_passed(), "{r:?}");
        let op = harmonic(30);
        let l = PhaseLayout::for_operator(&op);
        let r = dirac_flow_check(&op, &l, 1e-12, 8, 3).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn eigenstate_flow_and_zero_state() {
        let op = harmonic(20);
        let spec = eigendecompose(&op).unwrap();
        let i = spec.energy_index(0);
        let u = spec.mode(i).clone_owned();
        let jp = noncanonical_structure(&op);
        let psi = WaveFunction::new(u.clone(), GridFn::zeros(20), 0.0).unwrap();
        let z = jp.flow(&hprime_gradient(&psi, 1.0)).unwrap();
        assert!(z.rows(0, 20).amax() < 1e-13);
        assert!((z.rows(20, 20) - &u * spec.eigenvalue(i)).amax() < 1e-10);

        let l = PhaseLayout::for_operator(&op);
        let jd = dirac_structure(&op, &l).unwrap();
        assert_eq!(jd.flow(&DVector::zeros(80)).unwrap().amax(), 0.0);
    }

    #[test]
    fn structural_invariants() {
        let op = harmonic(12);
        let l = PhaseLayout::for_operator(&op);
        let jd = dirac_structure(&op, &l).unwrap();
        let g = constraint_gradient_matrix(&op, &l).unwrap();
        // constraints are Casimirs
        assert!((&jd.j * g.transpose()).amax() < 1e-12 * jd.j.amax());
        let canon = canonical_structure(&l);
        assert_eq!(
            jd.sector(&l, Block::Phi, Block::P),
            canon.sector(&l, Block::Phi, Block::P)
        );
        let spec = eigendecompose(&op).unwrap();
        let (s_phi, s_varphi) = sector_min_singular_values(&jd, &l);
        assert_close!(s_phi, 1.0, 1e-12);
        let min_kappa = spec.eigenvalues().iter().fold(f64::INFINITY, |m, k| m.min(k.abs()));
        assert_close!(s_varphi, min_kappa, 1e-9);
    }

    #[test]
    fn periodic_kernel_makes_wave_sector_degenerate() {
        let grid = Grid::new(8, 0.0, 8.0, Boundary::Periodic).unwrap();
        let op = Operator::new(grid, Potential::zero(&grid), 1.0, 0.5).unwrap();
        let l = PhaseLayout::for_operator(&op);
        let jd = dirac_structure(&op, &l).unwrap();
        let (_, s) = sector_min_singular_values(&jd, &l);
        assert!(s < 1e-12);
    }

    #[test]
    fn layout_mismatch_rejected() {
        let op = free3();
        let l = PhaseLayout::new(4, 1.0).unwrap();
        assert!(matches!(
            constraint_gradient_matrix(&op, &l),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(PhaseLayout::new(3, 0.0).is_err());
    }
}
