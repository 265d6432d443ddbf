//! One-dimensional spatial lattice and the symmetric operator `K = Δ − V`.
//!
//! `Δ` carries the physical prefactor, `Δ = (ħ²/2m) ∂²/∂x²`, and is
//! discretized with the three-point central stencil. Grid functions are
//! plain `DVector<f64>` values; integrals over space are `dx · Σ`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Real function sampled on the lattice points.
pub type GridFn = DVector<f64>;

const EIGEN_EPS: f64 = 1.0e-15;
const EIGEN_MAX_ITER: usize = 10_000;
/// Zero modes are eigenvalues with `|κ| ≤ ZERO_MODE_REL_TOL · max|κ|`.
pub const ZERO_MODE_REL_TOL: f64 = 1.0e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Field pinned to zero at the ghost points just outside the interval.
    Dirichlet,
    /// Point `n` is identified with point `0`.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    dx: f64,
    x_min: f64,
    boundary: Boundary,
}

impl Grid {
    /// Builds a grid of `n` stored points on `[x_min, x_max]`.
    ///
    /// Dirichlet grids store interior points only, so `dx = L/(n+1)`;
    /// periodic grids store `n` distinct points with `dx = L/n`.
    pub fn new(n: usize, x_min: f64, x_max: f64, boundary: Boundary) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need n >= 3, got {n}")));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max}) must exceed x_min ({x_min})"
            )));
        }
        let cells = match boundary {
            Boundary::Dirichlet => n + 1,
            Boundary::Periodic => n,
        };
        Ok(Self {
            n,
            dx: (x_max - x_min) / cells as f64,
            x_min,
            boundary,
        })
    }

    /// Grid with an explicit spacing; used when relabelling coordinates.
    pub fn with_spacing(n: usize, dx: f64, x_min: f64, boundary: Boundary) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need n >= 3, got {n}")));
        }
        if !(dx.is_finite() && dx > 0.0) || !x_min.is_finite() {
            return Err(Error::InvalidGrid(format!("bad spacing {dx}")));
        }
        Ok(Self {
            n,
            dx,
            x_min,
            boundary,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn x(&self, j: usize) -> f64 {
        match self.boundary {
            Boundary::Dirichlet => self.x_min + (j + 1) as f64 * self.dx,
            Boundary::Periodic => self.x_min + j as f64 * self.dx,
        }
    }

    pub fn points(&self) -> GridFn {
        GridFn::from_fn(self.n, |j, _| self.x(j))
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn::from_fn(self.n, |j, _| f(self.x(j)))
    }

    /// `dx · Σ f g`.
    pub fn inner(&self, f: &GridFn, g: &GridFn) -> Result<f64> {
        check_len(self.n, f.len())?;
        check_len(self.n, g.len())?;
        Ok(self.dx * f.dot(g))
    }

    pub fn norm(&self, f: &GridFn) -> Result<f64> {
        Ok(self.inner(f, f)?.sqrt())
    }
}

/// Free-function form of [`Grid::inner`].
pub fn inner_product(f: &GridFn, g: &GridFn, grid: &Grid) -> Result<f64> {
    grid.inner(f, g)
}

/// External background `V(x)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    values: GridFn,
}

impl Potential {
    pub fn new(values: GridFn, grid: &Grid) -> Result<Self> {
        check_len(grid.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential"));
        }
        Ok(Self { values })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self {
            values: GridFn::zeros(grid.len()),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid.sample(f), grid)
    }

    pub fn values(&self) -> &GridFn {
        &self.values
    }
}

/// The symmetric lattice operator `K = (ħ²/2m) L − diag(V)`.
///
/// Stored as a stencil (diagonal plus a constant off-diagonal coupling);
/// [`Operator::matrix`] materializes the dense form.
#[derive(Debug, Clone)]
pub struct Operator {
    grid: Grid,
    potential: Potential,
    hbar: f64,
    mass: f64,
    coupling: f64,
    diag: GridFn,
    radius: OnceLock<f64>,
}

impl Operator {
    pub fn new(grid: Grid, potential: Potential, hbar: f64, mass: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar must be > 0, got {hbar}")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be > 0, got {mass}")));
        }
        check_len(grid.len(), potential.values.len())?;
        let coupling = hbar * hbar / (2.0 * mass * grid.dx * grid.dx);
        let diag = potential.values.map(|v| -2.0 * coupling - v);
        Ok(Self {
            grid,
            potential,
            hbar,
            mass,
            coupling,
            diag,
            radius: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Off-diagonal stencil weight `ħ²/(2m dx²)`.
    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// `K f` through the stencil.
    pub fn apply(&self, f: &GridFn) -> Result<GridFn> {
        check_len(self.len(), f.len())?;
        Ok(self.apply_unchecked(f))
    }

    pub(crate) fn apply_unchecked(&self, f: &GridFn) -> GridFn {
        let n = self.len();
        let c = self.coupling;
        let periodic = self.grid.boundary == Boundary::Periodic;
        GridFn::from_fn(n, |j, _| {
            let left = if j > 0 {
                f[j - 1]
            } else if periodic {
                f[n - 1]
            } else {
                0.0
            };
            let right = if j + 1 < n {
                f[j + 1]
            } else if periodic {
                f[0]
            } else {
                0.0
            };
            self.diag[j] * f[j] + c * (left + right)
        })
    }

    /// Dense symmetric matrix of `K`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::from_diagonal(&self.diag);
        for j in 0..n - 1 {
            m[(j, j + 1)] += self.coupling;
            m[(j + 1, j)] += self.coupling;
        }
        if self.grid.boundary == Boundary::Periodic {
            m[(0, n - 1)] += self.coupling;
            m[(n - 1, 0)] += self.coupling;
        }
        m
    }

    /// `max|κ|`, computed once from the dense eigenvalues.
    pub fn spectral_radius(&self) -> f64 {
        *self.radius.get_or_init(|| {
            self.matrix()
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0_f64, |acc, k| acc.max(k.abs()))
        })
    }
}

/// Full eigendecomposition of `K`, eigenvalues ascending.
///
/// Eigenvectors are normalized under the `dx`-weighted inner product.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: GridFn,
    vectors: DMatrix<f64>,
    dx: f64,
    hbar: f64,
    zero_modes: Vec<usize>,
    kappa_tol: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &GridFn {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.eigenvalues[i]
    }

    /// Columns are the eigenvectors `uₙ`.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn mode(&self, i: usize) -> DVectorView<'_, f64> {
        self.vectors.column(i)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// ħ of the operator this spectrum came from.
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn zero_modes(&self) -> &[usize] {
        &self.zero_modes
    }

    pub fn is_zero_mode(&self, i: usize) -> bool {
        self.zero_modes.binary_search(&i).is_ok()
    }

    pub fn kappa_tol(&self) -> f64 {
        self.kappa_tol
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |a, k| a.max(k.abs()))
    }

    /// Index of the `k`-th lowest energy `E = −κ` (k = 0 is the ground state).
    pub fn energy_index(&self, k: usize) -> usize {
        self.len() - 1 - k
    }

    /// Energies `−κ` in ascending order.
    pub fn energies(&self) -> Vec<f64> {
        self.eigenvalues.iter().rev().map(|k| -k).collect()
    }

    /// Mode coefficients `cₙ = ⟨uₙ, f⟩`.
    pub fn coefficients(&self, f: &GridFn) -> Result<GridFn> {
        check_len(self.len(), f.len())?;
        Ok(self.vectors.tr_mul(f) * self.dx)
    }

    /// `Σₙ cₙ uₙ`.
    pub fn synthesize(&self, coeffs: &GridFn) -> Result<GridFn> {
        check_len(self.len(), coeffs.len())?;
        Ok(&self.vectors * coeffs)
    }
}

pub fn eigendecompose(op: &Operator) -> Result<Spectrum> {
    let n = op.len();
    let dx = op.grid().dx();
    let eig = SymmetricEigen::try_new(op.matrix(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(
        Error::EigenNonConvergence {
            max_iter: EIGEN_MAX_ITER,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let scale = 1.0 / dx.sqrt();
    let eigenvalues = GridFn::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src) * scale;
        // Fix the sign so the largest-magnitude entry is positive.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }

    let max_abs = eigenvalues.iter().fold(0.0_f64, |a, k| a.max(k.abs()));
    let kappa_tol = ZERO_MODE_REL_TOL * max_abs;
    let zero_modes = (0..n)
        .filter(|&i| eigenvalues[i].abs() <= kappa_tol)
        .collect();
    Ok(Spectrum {
        eigenvalues,
        vectors,
        dx,
        hbar: op.hbar(),
        zero_modes,
        kappa_tol,
    })
}

/// Minimum-norm solution of `K C = rhs`.
///
/// Fails when the right-hand side has kernel content whose size relative
/// to `‖rhs‖` exceeds `tol`.
pub fn solve_elliptic(spec: &Spectrum, rhs: &GridFn, tol: f64) -> Result<GridFn> {
    let mut coeffs = spec.coefficients(rhs)?;
    let total = coeffs.norm();
    let kernel = spec
        .zero_modes
        .iter()
        .map(|&i| coeffs[i] * coeffs[i])
        .sum::<f64>()
        .sqrt();
    let magnitude = if total > 0.0 { kernel / total } else { 0.0 };
    if magnitude > tol {
        return Err(Error::EllipticObstruction {
            magnitude,
            tolerance: tol,
        });
    }
    for i in 0..spec.len() {
        coeffs[i] = if spec.is_zero_mode(i) {
            0.0
        } else {
            coeffs[i] / spec.eigenvalues[i]
        };
    }
    spec.synthesize(&coeffs)
}
