//! Matrix Lie groups and algebras.
//!
//! A [`LieContext`] fixes a matrix realization: the algebra is the real span of
//! a list of basis matrices inside `gl(d)`, the group is described by a
//! membership predicate, and the chart around the identity is `g ↦ g − 1`.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::norms::operator_norm;

pub type Matrix = DMatrix<f64>;

/// Relative tolerance for membership in the span of the basis.
pub const SPAN_TOLERANCE: f64 = 1e-12;
/// Tolerance for the group membership predicates.
pub const GROUP_TOLERANCE: f64 = 1e-9;
/// Default radius (operator norm) of the chart ball around the identity.
pub const DEFAULT_CHART_RADIUS: f64 = 0.9;

/// Group membership predicate of a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    GeneralLinear,
    SpecialLinear,
    SpecialOrthogonal,
    Unitriangular,
    Diagonal,
}

impl Membership {
    pub fn tag(self) -> &'static str {
        match self {
            Membership::GeneralLinear => "general-linear",
            Membership::SpecialLinear => "special-linear",
            Membership::SpecialOrthogonal => "special-orthogonal",
            Membership::Unitriangular => "unitriangular",
            Membership::Diagonal => "diagonal",
        }
    }

    /// Largest violation of the predicate (0 for exact members).
    fn defect(self, g: &Matrix) -> f64 {
        let d = g.nrows();
        let scale = g.abs().max().max(1.0);
        match self {
            Membership::GeneralLinear => 0.0,
            Membership::SpecialLinear => (g.determinant() - 1.0).abs() / scale.powi(d as i32),
            Membership::SpecialOrthogonal => {
                let gram = g.transpose() * g - Matrix::identity(d, d);
                let det = g.determinant();
                gram.abs().max().max(if det > 0.0 { 0.0 } else { 1.0 })
            }
            Membership::Unitriangular => {
                let mut worst: f64 = 0.0;
                for i in 0..d {
                    worst = worst.max((g[(i, i)] - 1.0).abs());
                    for j in 0..i {
                        worst = worst.max(g[(i, j)].abs());
                    }
                }
                worst / scale
            }
            Membership::Diagonal => {
                let mut worst: f64 = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        if i != j {
                            worst = worst.max(g[(i, j)].abs());
                        }
                    }
                }
                worst / scale
            }
        }
    }
}

/// On-disk description of a context (row-major basis matrices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextFile {
    pub name: String,
    pub dim: usize,
    pub basis: Vec<Vec<f64>>,
    pub membership: Membership,
    pub chart_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nilpotency_class: Option<usize>,
}

/// A matrix Lie group together with its algebra and chart.
#[derive(Clone)]
pub struct LieContext {
    name: String,
    dim: usize,
    basis: Vec<Matrix>,
    membership: Membership,
    nilpotency_class: Option<usize>,
    chart_radius: f64,
    /// Columns are the vectorized basis matrices.
    basis_columns: Matrix,
    gram_inverse: Matrix,
    spans_gl: bool,
}

impl fmt::Debug for LieContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LieContext")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("basis_len", &self.basis.len())
            .field("membership", &self.membership)
            .field("nilpotency_class", &self.nilpotency_class)
            .field("chart_radius", &self.chart_radius)
            .finish()
    }
}

/// Element of the Lie algebra of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement(Matrix);

/// Element of the group of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement(Matrix);

impl AlgebraElement {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl GroupElement {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Unit matrix `E_ij` (zero-based indices).
pub fn unit(d: usize, i: usize, j: usize) -> Matrix {
    let mut m = Matrix::zeros(d, d);
    m[(i, j)] = 1.0;
    m
}

/// `XY − YX` without projection.
pub fn commutator(x: &Matrix, y: &Matrix) -> Matrix {
    x * y - y * x
}

/// `g Y g⁻¹` given both `g` and its inverse.
pub fn conjugate(g: &Matrix, g_inv: &Matrix, y: &Matrix) -> Matrix {
    g * y * g_inv
}

pub fn invert(g: &Matrix) -> Result<Matrix> {
    g.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or(LabError::Singular { at: None })
}

impl LieContext {
    pub fn new(
        name: impl Into<String>,
        basis: Vec<Matrix>,
        membership: Membership,
        nilpotency_class: Option<usize>,
        chart_radius: f64,
    ) -> Result<Self> {
        let name = name.into();
        let first = basis
            .first()
            .ok_or_else(|| LabError::Argument("context basis is empty".into()))?;
        let dim = first.nrows();
        if dim == 0 {
            return Err(LabError::Argument("matrix size must be positive".into()));
        }
        for b in &basis {
            if b.nrows() != dim || b.ncols() != dim {
                return Err(LabError::Dimension {
                    expected: dim,
                    rows: b.nrows(),
                    cols: b.ncols(),
                });
            }
        }
        if !(chart_radius > 0.0 && chart_radius.is_finite()) {
            return Err(LabError::Argument(format!(
                "chart radius must be positive, got {chart_radius}"
            )));
        }
        if nilpotency_class == Some(0) {
            return Err(LabError::Argument("nilpotency class must be positive".into()));
        }
        let k = basis.len();
        let mut basis_columns = Matrix::zeros(dim * dim, k);
        for (c, b) in basis.iter().enumerate() {
            for i in 0..dim {
                for j in 0..dim {
                    basis_columns[(i * dim + j, c)] = b[(i, j)];
                }
            }
        }
        let gram = basis_columns.transpose() * &basis_columns;
        let gram_inverse = gram
            .try_inverse()
            .ok_or_else(|| LabError::Argument("basis matrices are linearly dependent".into()))?;
        let spans_gl = k == dim * dim;
        let ctx = LieContext {
            name,
            dim,
            basis,
            membership,
            nilpotency_class,
            chart_radius,
            basis_columns,
            gram_inverse,
            spans_gl,
        };
        ctx.check_closure()?;
        ctx.check_nilpotency()?;
        Ok(ctx)
    }

    fn check_closure(&self) -> Result<()> {
        for a in &self.basis {
            for b in &self.basis {
                let c = commutator(a, b);
                let (_, residual) = self.project_raw(&c);
                if residual > 1e-12 {
                    return Err(LabError::NotInAlgebra {
                        what: format!("bracket of basis elements leaves the span in '{}'", self.name),
                        distance: residual,
                        matrix: c,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_nilpotency(&self) -> Result<()> {
        let Some(class) = self.nilpotency_class else {
            return Ok(());
        };
        // Chains of length `class` over basis elements must vanish.
        let k = self.basis.len();
        let mut idx = vec![0usize; class + 1];
        loop {
            let mut acc = self.basis[idx[class]].clone();
            for &i in idx[..class].iter().rev() {
                acc = commutator(&self.basis[i], &acc);
            }
            if acc.iter().any(|v| *v != 0.0) {
                return Err(LabError::Argument(format!(
                    "declared nilpotency class {class} of '{}' is violated by a basis chain",
                    self.name
                )));
            }
            let mut pos = 0;
            loop {
                if pos > class {
                    return Ok(());
                }
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn membership(&self) -> Membership {
        self.membership
    }

    pub fn nilpotency_class(&self) -> Option<usize> {
        self.nilpotency_class
    }

    pub fn chart_radius(&self) -> f64 {
        self.chart_radius
    }

    pub fn identity(&self) -> Matrix {
        Matrix::identity(self.dim, self.dim)
    }

    pub fn zero(&self) -> Matrix {
        Matrix::zeros(self.dim, self.dim)
    }

    /// Coordinates of the least-squares projection and the Frobenius residual.
    fn project_raw(&self, m: &Matrix) -> (Matrix, f64) {
        if self.spans_gl {
            return (m.clone(), 0.0);
        }
        let d = self.dim;
        let v = Matrix::from_fn(d * d, 1, |r, _| m[(r / d, r % d)]);
        let coords = &self.gram_inverse * (self.basis_columns.transpose() * &v);
        let back = &self.basis_columns * &coords;
        let residual = (&back - &v).norm();
        (Matrix::from_fn(d, d, |i, j| back[(i * d + j, 0)]), residual)
    }

    /// Coordinates of an algebra element in the basis.
    pub fn coordinates(&self, x: &Matrix) -> Vec<f64> {
        let d = self.dim;
        let v = Matrix::from_fn(d * d, 1, |r, _| x[(r / d, r % d)]);
        let coords = &self.gram_inverse * (self.basis_columns.transpose() * v);
        coords.iter().copied().collect()
    }

    pub fn from_coordinates(&self, coords: &[f64]) -> Matrix {
        let mut m = self.zero();
        for (c, b) in coords.iter().zip(&self.basis) {
            m += b * *c;
        }
        m
    }

    fn check_shape(&self, m: &Matrix) -> Result<()> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(LabError::Dimension {
                expected: self.dim,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        Ok(())
    }

    /// Projects `m` onto the algebra, rejecting matrices farther than the span tolerance.
    pub fn project(&self, m: &Matrix) -> Result<Matrix> {
        self.check_shape(m)?;
        let (p, residual) = self.project_raw(m);
        let scale = m.norm().max(1.0);
        if residual > SPAN_TOLERANCE * scale {
            return Err(LabError::NotInAlgebra {
                what: format!("matrix is not in the algebra of '{}'", self.name),
                distance: residual,
                matrix: m.clone(),
            });
        }
        Ok(p)
    }

    pub fn element(&self, m: Matrix) -> Result<AlgebraElement> {
        self.project(&m).map(AlgebraElement)
    }

    pub fn is_algebra_member(&self, m: &Matrix) -> bool {
        self.project(m).is_ok()
    }

    /// Membership defect of `g`; `Err` if `g` is singular or fails the predicate.
    pub fn check_group(&self, g: &Matrix) -> Result<()> {
        self.check_shape(g)?;
        if g.iter().any(|v| !v.is_finite()) || g.determinant() == 0.0 {
            return Err(LabError::Singular { at: None });
        }
        let defect = self.membership.defect(g);
        if defect > GROUP_TOLERANCE {
            return Err(LabError::NotInGroup {
                predicate: self.membership.tag().into(),
                defect,
            });
        }
        Ok(())
    }

    pub fn group_element(&self, g: Matrix) -> Result<GroupElement> {
        self.check_group(&g)?;
        Ok(GroupElement(g))
    }

    /// Lie bracket `XY − YX`, projected into the algebra.
    pub fn bracket(&self, x: &AlgebraElement, y: &AlgebraElement) -> Result<AlgebraElement> {
        self.element(commutator(&x.0, &y.0))
    }

    /// `ad_{X₁} ∘ … ∘ ad_{Xₙ}(Y)`.
    pub fn ad_chain(&self, xs: &[AlgebraElement], y: &AlgebraElement) -> Result<AlgebraElement> {
        if xs.is_empty() {
            return Err(LabError::Argument("ad chain needs at least one operator".into()));
        }
        let mut acc = y.clone();
        for x in xs.iter().rev() {
            acc = self.bracket(x, &acc)?;
        }
        Ok(acc)
    }

    /// `Ad_g(Y) = g Y g⁻¹`.
    pub fn adjoint(&self, g: &GroupElement, y: &AlgebraElement) -> Result<AlgebraElement> {
        let inv = invert(&g.0)?;
        self.element(conjugate(&g.0, &inv, &y.0))
    }

    /// Matrix exponential of an algebra element.
    pub fn exponential(&self, x: &AlgebraElement) -> GroupElement {
        GroupElement(self.exp_matrix(&x.0))
    }

    /// Matrix exponential used by every stepper of this context.
    ///
    /// Unitriangular contexts use the terminating power series and diagonal
    /// contexts the entrywise exponential; everything else goes through
    /// scaling and squaring.
    pub fn exp_matrix(&self, x: &Matrix) -> Matrix {
        match self.membership {
            Membership::Unitriangular => {
                terminating_exp(x).unwrap_or_else(|| x.clone().exp())
            }
            Membership::Diagonal if is_diagonal(x) => {
                Matrix::from_fn(self.dim, self.dim, |i, j| if i == j { x[(i, i)].exp() } else { 0.0 })
            }
            _ => x.clone().exp(),
        }
    }

    fn check_chart_point(&self, x: &Matrix) -> Result<()> {
        self.check_shape(x)?;
        let norm = operator_norm(x);
        if !(norm < self.chart_radius) {
            return Err(LabError::ChartDomain {
                norm,
                radius: self.chart_radius,
            });
        }
        Ok(())
    }

    /// Chart `Ξ(g) = g − 1` on the ball `‖g − 1‖ < chart_radius`.
    pub fn chart(&self, g: &Matrix) -> Result<Matrix> {
        let x = g - self.identity();
        self.check_chart_point(&x)?;
        Ok(x)
    }

    /// Inverse chart `x ↦ 1 + x`.
    pub fn chart_inverse(&self, x: &Matrix) -> Result<Matrix> {
        self.check_chart_point(x)?;
        Ok(self.identity() + x)
    }

    /// `Ω(x, X) = X (1 + x)⁻¹`, the right logarithmic derivative in chart coordinates.
    pub fn chart_omega(&self, x: &Matrix, v: &Matrix) -> Result<Matrix> {
        self.check_chart_point(x)?;
        self.check_shape(v)?;
        let inv = invert(&(self.identity() + x))?;
        Ok(v * inv)
    }

    /// `ω̃(x, X) = X (1 + x)`, the chart velocity of a curve with log-derivative `X`.
    pub fn chart_omega_inv(&self, x: &Matrix, v: &Matrix) -> Result<Matrix> {
        self.check_chart_point(x)?;
        self.check_shape(v)?;
        Ok(v * (self.identity() + x))
    }

    pub fn to_file(&self) -> ContextFile {
        ContextFile {
            name: self.name.clone(),
            dim: self.dim,
            basis: self
                .basis
                .iter()
                .map(|b| (0..self.dim * self.dim).map(|r| b[(r / self.dim, r % self.dim)]).collect())
                .collect(),
            membership: self.membership,
            chart_radius: self.chart_radius,
            nilpotency_class: self.nilpotency_class,
        }
    }

    pub fn from_file(file: &ContextFile) -> Result<Self> {
        let d = file.dim;
        let basis = file
            .basis
            .iter()
            .map(|row| {
                if row.len() != d * d {
                    return Err(LabError::Parse(format!(
                        "basis matrix has {} entries, expected {}",
                        row.len(),
                        d * d
                    )));
                }
                Ok(Matrix::from_row_slice(d, d, row))
            })
            .collect::<Result<Vec<_>>>()?;
        LieContext::new(
            file.name.clone(),
            basis,
            file.membership,
            file.nilpotency_class,
            file.chart_radius,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ContextFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Three-dimensional Heisenberg group of unitriangular matrices.
    pub fn heisenberg() -> Self {
        LieContext::new(
            "heisenberg",
            vec![unit(3, 0, 1), unit(3, 1, 2), unit(3, 0, 2)],
            Membership::Unitriangular,
            Some(2),
            DEFAULT_CHART_RADIUS,
        )
        .expect("heisenberg context is valid")
    }

    /// Rotation group SO(3) with generators `L_x, L_y, L_z`, `[L_i, L_j] = ε_ijk L_k`.
    pub fn so3() -> Self {
        LieContext::new(
            "so3",
            vec![so3_generator(0), so3_generator(1), so3_generator(2)],
            Membership::SpecialOrthogonal,
            None,
            DEFAULT_CHART_RADIUS,
        )
        .expect("so3 context is valid")
    }

    /// Full general linear group GL(d).
    pub fn gl(d: usize) -> Self {
        let basis = (0..d)
            .flat_map(|i| (0..d).map(move |j| unit(d, i, j)))
            .collect();
        LieContext::new(format!("gl{d}"), basis, Membership::GeneralLinear, None, DEFAULT_CHART_RADIUS)
            .expect("gl context is valid")
    }

    /// Abelian subgroup of invertible diagonal 2x2 matrices.
    pub fn diag2() -> Self {
        LieContext::new(
            "diag2",
            vec![unit(2, 0, 0), unit(2, 1, 1)],
            Membership::Diagonal,
            Some(1),
            DEFAULT_CHART_RADIUS,
        )
        .expect("diag2 context is valid")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "heisenberg" => Some(Self::heisenberg()),
            "so3" => Some(Self::so3()),
            "gl2" => Some(Self::gl(2)),
            "gl3" => Some(Self::gl(3)),
            "diag2" => Some(Self::diag2()),
            _ => None,
        }
    }

    pub const BUILTIN_NAMES: [&'static str; 5] = ["heisenberg", "so3", "gl2", "gl3", "diag2"];
}

/// Generator of rotations about the `axis`-th coordinate axis.
pub fn so3_generator(axis: usize) -> Matrix {
    let mut m = Matrix::zeros(3, 3);
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        2 => (0, 1),
        _ => panic!("so3 axis index out of range: {axis}"),
    };
    m[(b, a)] = 1.0;
    m[(a, b)] = -1.0;
    m
}

fn is_diagonal(x: &Matrix) -> bool {
    (0..x.nrows()).all(|i| (0..x.ncols()).all(|j| i == j || x[(i, j)] == 0.0))
}

/// Power series that stops once a power vanishes exactly; `None` if it does not within `d` terms.
fn terminating_exp(x: &Matrix) -> Option<Matrix> {
    let d = x.nrows();
    let mut result = Matrix::identity(d, d);
    let mut term = Matrix::identity(d, d);
    for k in 1..=d {
        term = &term * x / k as f64;
        if term.iter().all(|v| *v == 0.0) {
            return Some(result);
        }
        result += &term;
    }
    None
}
