//! Constraint algorithm for linear implicit systems on a constant-anchor
//! algebroid: `S_{k+1} = S_k ∩ ρ⁻¹(T C_k)` with `C_k` the base projection of
//! `S_k`, iterated until it stops changing.
//!
//! Points are `(x, y)` with base coordinates `x ∈ R^m` first and fiber
//! coordinates `y ∈ R^n` second. With a constant anchor `R` the condition
//! `ρ(y) ∈ T C_k` reads `R y ∈ lin(C_k)`.
//!
//! # Matrix files
//!
//! A plain-text matrix is a header line `rows cols` followed by `rows·cols`
//! whitespace-separated entries in row-major order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::algebroid::{state_vars, Chart, DEFAULT_SEED};
use crate::expr::{Expr, ExprError};
use crate::linalg::{self, RANK_RTOL};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilizeError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{0}")]
    Dimension(String),
    #[error("structure functions must vanish identically")]
    NonAbelian,
    #[error("anchor must be constant")]
    VariableAnchor,
    #[error(
        "Lagrangian is not quadratic: Hessian differs by {deviation:.3e} between sample points"
    )]
    NotQuadratic { deviation: f64 },
    #[error("matrix file: {0}")]
    MatrixFormat(String),
}

/// An affine subspace `offset + span(basis)` or the empty set.
///
/// The basis is orthonormal and the offset is orthogonal to the span.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient: usize,
    basis: DMatrix<f64>,
    offset: DVector<f64>,
    empty: bool,
}

impl Subspace {
    pub fn full(ambient: usize) -> Self {
        Self::linear(DMatrix::identity(ambient, ambient))
    }

    pub fn zero(ambient: usize) -> Self {
        Self::linear(DMatrix::zeros(ambient, 0))
    }

    pub fn empty(ambient: usize) -> Self {
        Self {
            ambient,
            basis: DMatrix::zeros(ambient, 0),
            offset: DVector::zeros(ambient),
            empty: true,
        }
    }

    pub fn linear(spanning: DMatrix<f64>) -> Self {
        let ambient = spanning.nrows();
        Self::affine(spanning, DVector::zeros(ambient))
    }

    /// `offset + span(spanning)`, canonicalized.
    pub fn affine(spanning: DMatrix<f64>, offset: DVector<f64>) -> Self {
        Self::affine_scaled(spanning, offset, 0.0)
    }

    fn affine_scaled(spanning: DMatrix<f64>, offset: DVector<f64>, scale: f64) -> Self {
        let ambient = spanning.nrows();
        assert_eq!(
            offset.len(),
            ambient,
            "offset length must match the ambient dimension"
        );
        let basis = linalg::range_basis_scaled(&spanning, RANK_RTOL, scale);
        let offset = &offset - &basis * (basis.transpose() * &offset);
        Self {
            ambient,
            basis,
            offset,
            empty: false,
        }
    }

    /// `{z : A z = b}`; empty when the system is inconsistent.
    pub fn from_equations(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let ambient = a.ncols();
        if a.nrows() == 0 {
            return Self::full(ambient);
        }
        let (x, res) = linalg::least_squares(a, b, RANK_RTOL);
        let scale = a.abs().max().max(1.0) * (x.norm() + b.norm()).max(1.0);
        if res > 1e-10 * scale {
            return Self::empty(ambient);
        }
        Self::affine(linalg::null_space(a, RANK_RTOL), x)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// `None` for the empty set.
    pub fn dim(&self) -> Option<usize> {
        (!self.empty).then(|| self.basis.ncols())
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// Orthonormal basis of the orthogonal complement of the span.
    pub fn complement(&self) -> DMatrix<f64> {
        if self.basis.ncols() == 0 {
            return DMatrix::identity(self.ambient, self.ambient);
        }
        linalg::null_space(&self.basis.transpose(), RANK_RTOL)
    }

    /// Defining equations `A z = b` with orthonormal rows.
    pub fn equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let a = self.complement().transpose();
        let b = &a * &self.offset;
        (a, b)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        assert_eq!(self.ambient, other.ambient, "ambient dimensions differ");
        if self.empty || other.empty {
            return Self::empty(self.ambient);
        }
        let (a1, b1) = self.equations();
        let (a2, b2) = other.equations();
        let a = stack_rows(&a1, &a2);
        let b = DVector::from_iterator(b1.len() + b2.len(), b1.iter().chain(b2.iter()).copied());
        Self::from_equations(&a, &b)
    }

    /// Image under `z ↦ P z`.
    pub fn map(&self, p: &DMatrix<f64>) -> Self {
        if self.empty {
            return Self::empty(p.nrows());
        }
        // the basis is orthonormal, so directions are judged against |P|
        Self::affine_scaled(p * &self.basis, p * &self.offset, p.norm())
    }

    /// Distance from `z` to the subspace (infinite for the empty set).
    pub fn distance(&self, z: &DVector<f64>) -> f64 {
        if self.empty {
            return f64::INFINITY;
        }
        let d = z - &self.offset;
        (&d - &self.basis * (self.basis.transpose() * &d)).norm()
    }

    /// `max |f·z|` over the offset and basis directions: zero iff the linear
    /// functional `f` vanishes on the whole subspace.
    pub fn functional_residual(&self, f: &DVector<f64>) -> f64 {
        if self.empty {
            return 0.0;
        }
        let mut r = f.dot(&self.offset).abs();
        for c in self.basis.column_iter() {
            r = r.max(f.dot(&c).abs());
        }
        r
    }

    /// Equality of sets at tolerance.
    pub fn same_as(&self, other: &Self, tol: f64) -> bool {
        if self.empty || other.empty {
            return self.empty == other.empty;
        }
        self.dim() == other.dim()
            && linalg::max_principal_angle(&self.basis, &other.basis) < tol
            && (&self.offset - &other.offset).norm() < tol * self.offset.norm().max(1.0)
    }

    pub fn contains(&self, other: &Self, tol: f64) -> bool {
        if other.empty {
            return true;
        }
        if self.empty {
            return false;
        }
        let (a, b) = self.equations();
        let off = (&a * &other.offset - b).amax();
        let dirs = if other.basis.ncols() == 0 {
            0.0
        } else {
            (&a * &other.basis).amax()
        };
        off.max(dirs) < tol
    }
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// Constant-anchor linear implicit system: `R` is `m × n`, `S₀ ⊂ R^{m+n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImplicitSystem {
    m: usize,
    n: usize,
    anchor: DMatrix<f64>,
    s0: Subspace,
    labels: Vec<String>,
}

impl LinearImplicitSystem {
    pub fn new(anchor: DMatrix<f64>, s0: Subspace) -> Result<Self, StabilizeError> {
        let (m, n) = anchor.shape();
        if s0.ambient() != m + n {
            return Err(StabilizeError::Dimension(format!(
                "initial subspace lives in R^{}, anchor needs R^{}",
                s0.ambient(),
                m + n
            )));
        }
        let labels = (1..=m)
            .map(|i| format!("b{i}"))
            .chain((1..=n).map(|a| format!("f{a}")))
            .collect();
        Ok(Self {
            m,
            n,
            anchor,
            s0,
            labels,
        })
    }

    /// `S₀ = {z : A z = b}` with `equations = [A | b]`.
    pub fn from_augmented(
        anchor: DMatrix<f64>,
        equations: &DMatrix<f64>,
    ) -> Result<Self, StabilizeError> {
        let dim = anchor.nrows() + anchor.ncols();
        if equations.nrows() > 0 && equations.ncols() != dim + 1 {
            return Err(StabilizeError::Dimension(format!(
                "equations need {} columns ([A | b]), found {}",
                dim + 1,
                equations.ncols()
            )));
        }
        let a = equations
            .columns(0, dim.min(equations.ncols()))
            .into_owned();
        let a = if equations.nrows() == 0 {
            DMatrix::zeros(0, dim)
        } else {
            a
        };
        let b = if equations.nrows() == 0 {
            DVector::zeros(0)
        } else {
            equations.column(dim).into_owned()
        };
        Self::new(anchor, Subspace::from_equations(&a, &b))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.m + self.n);
        self.labels = labels;
        self
    }

    pub fn with_initial(&self, s0: Subspace) -> Self {
        Self { s0, ..self.clone() }
    }

    pub fn base_dim(&self) -> usize {
        self.m
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    pub fn anchor(&self) -> &DMatrix<f64> {
        &self.anchor
    }

    pub fn initial(&self) -> &Subspace {
        &self.s0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Column index of a coordinate label.
    pub fn coordinate(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn base_projection(&self) -> DMatrix<f64> {
        DMatrix::from_fn(
            self.m,
            self.m + self.n,
            |i, j| if i == j { 1.0 } else { 0.0 },
        )
    }

    /// `{(x, y) : R y ∈ lin(C)}`.
    pub fn anchor_preimage(&self, c: &Subspace) -> Subspace {
        let dim = self.m + self.n;
        if c.is_empty() {
            return Subspace::empty(dim);
        }
        let nc = c.complement();
        let raw = nc.transpose() * &self.anchor;
        // rows that are round-off relative to |R| impose nothing
        let cond =
            linalg::range_basis_scaled(&raw.transpose(), RANK_RTOL, self.anchor.norm()).transpose();
        let mut a = DMatrix::zeros(cond.nrows(), dim);
        a.view_mut((0, self.m), cond.shape()).copy_from(&cond);
        Subspace::from_equations(&a, &DVector::zeros(cond.nrows()))
    }
}

pub fn project_base(sys: &LinearImplicitSystem, s: &Subspace) -> Subspace {
    s.map(&sys.base_projection())
}

pub fn step(sys: &LinearImplicitSystem, s_k: &Subspace, c_k: &Subspace) -> Subspace {
    s_k.intersect(&sys.anchor_preimage(c_k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizeReport {
    pub s_inf: Subspace,
    pub c_inf: Subspace,
    pub iterations: usize,
    /// `dim S_k` for `k = 0..=iterations`; `None` marks the empty set.
    pub history: Vec<Option<usize>>,
}

impl StabilizeReport {
    /// `max |N_Cᵀ R y|` over the offset and basis of `S_∞`, where `N_C`
    /// spans the normal space of `C_∞`.
    pub fn certificate(&self, sys: &LinearImplicitSystem) -> f64 {
        if self.s_inf.is_empty() {
            return 0.0;
        }
        let nc = self.c_inf.complement();
        let m = sys.base_dim();
        let n = sys.fiber_dim();
        let cond = nc.transpose() * sys.anchor();
        let fiber = |z: DVector<f64>| (&cond * z.rows(m, n)).amax();
        let mut r = fiber(self.s_inf.offset().clone());
        for c in self.s_inf.basis().column_iter() {
            r = r.max(fiber(c.into_owned()));
        }
        let p = sys.base_projection();
        r.max(self.c_inf.distance(&(&p * self.s_inf.offset())))
    }
}

pub fn stabilize(sys: &LinearImplicitSystem) -> StabilizeReport {
    let tol = 1e-9;
    let mut s = sys.s0.clone();
    let mut history = vec![s.dim()];
    let mut iterations = 0;
    let cap = sys.m + sys.n + 2;
    loop {
        let c = project_base(sys, &s);
        let next = step(sys, &s, &c);
        iterations += 1;
        history.push(next.dim());
        let done = next.is_empty() || next.same_as(&s, tol) || iterations >= cap;
        s = next;
        if done {
            break;
        }
    }
    let c_inf = project_base(sys, &s);
    StabilizeReport {
        s_inf: s,
        c_inf,
        iterations,
        history,
    }
}

/// Encodes `S_L` for a quadratic Lagrangian on an abelian, constant-anchor
/// chart as a linear implicit system.
///
/// Base coordinates are `(x, y, p, p̄)` (dimension `m + 3n`), fiber
/// coordinates `(q, q̄, l, l̄)` (dimension `4n`), and the anchor is
/// `blockdiag(ρ, I, I, I)` so that `ẋ = ρq`, `ẏ = q̄`, `ṗ = l`, `ṗ̄ = l̄`.
/// The equations are
///
/// ```text
/// l − ρᵀ ∂L/∂x = 0,   l̄ + p − ∂L/∂y = 0,   p̄ − ∂L/∂v = 0
/// ```
///
/// with `L` evaluated at `(x, y, v = q̄)`. With `admissibility` the rows
/// `y − q = 0` are appended.
pub fn build_linear_system(
    chart: &Chart,
    lagrangian: &Expr,
    admissibility: bool,
) -> Result<LinearImplicitSystem, StabilizeError> {
    if !chart.is_abelian() {
        return Err(StabilizeError::NonAbelian);
    }
    if !chart.has_constant_anchor() {
        return Err(StabilizeError::VariableAnchor);
    }
    let (m, n) = (chart.base_dim(), chart.rank());
    let nz = m + 2 * n;
    if lagrangian.vars() != state_vars(m, n).as_slice() {
        return Err(StabilizeError::Dimension(format!(
            "Lagrangian must be declared over [{}]",
            state_vars(m, n).join(", ")
        )));
    }
    let zero = vec![0.0; nz];
    let d0 = lagrangian.derivatives(&zero)?;
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut deviation: f64 = 0.0;
    for _ in 0..3 {
        let z: Vec<f64> = (0..nz).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let h = lagrangian.hessian(&z)?;
        deviation = deviation.max((&h - &d0.hessian).amax());
    }
    if deviation > 1e-10 * d0.hessian.amax().max(1.0) {
        return Err(StabilizeError::NotQuadratic { deviation });
    }
    let rho = chart
        .anchor_at(&vec![0.0; m])
        .map_err(|e| StabilizeError::Dimension(e.to_string()))?;
    let h = &d0.hessian;
    let g = &d0.grad;

    // combined coordinates
    let bx = 0;
    let by = m;
    let bp = m + n;
    let bpb = m + 2 * n;
    let fq = m + 3 * n;
    let fqb = fq + n;
    let fl = fq + 2 * n;
    let flb = fq + 3 * n;
    let dim = m + 7 * n;
    // column in the combined space of each Lagrangian variable (x, y, v = q̄)
    let zcol = |k: usize| {
        if k < m {
            bx + k
        } else if k < m + n {
            by + (k - m)
        } else {
            fqb + (k - m - n)
        }
    };

    let rows = 3 * n + if admissibility { n } else { 0 };
    let mut a = DMatrix::zeros(rows, dim);
    let mut b = DVector::zeros(rows);
    // ∂L/∂z_r = Σ_k H[r,k] z_k + g[r]
    let sub_grad = |row: usize, r: usize, w: f64, a: &mut DMatrix<f64>, b: &mut DVector<f64>| {
        for k in 0..nz {
            a[(row, zcol(k))] -= w * h[(r, k)];
        }
        b[row] += w * g[r];
    };
    for al in 0..n {
        a[(al, fl + al)] = 1.0;
        for i in 0..m {
            let w = rho[(i, al)];
            if w != 0.0 {
                sub_grad(al, i, w, &mut a, &mut b);
            }
        }
        let r2 = n + al;
        a[(r2, flb + al)] = 1.0;
        a[(r2, bp + al)] = 1.0;
        sub_grad(r2, m + al, 1.0, &mut a, &mut b);
        let r3 = 2 * n + al;
        a[(r3, bpb + al)] = 1.0;
        sub_grad(r3, m + n + al, 1.0, &mut a, &mut b);
        if admissibility {
            let r4 = 3 * n + al;
            a[(r4, by + al)] = 1.0;
            a[(r4, fq + al)] = -1.0;
        }
    }

    let mut anchor = DMatrix::zeros(m + 3 * n, 4 * n);
    anchor.view_mut((0, 0), (m, n)).copy_from(&rho);
    for k in 0..3 * n {
        anchor[(m + k, n + k)] = 1.0;
    }
    let mut labels: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
    for block in ["y", "p", "pbar", "q", "qbar", "l", "lbar"] {
        labels.extend((1..=n).map(|a| format!("{block}{a}")));
    }
    Ok(LinearImplicitSystem::new(anchor, Subspace::from_equations(&a, &b))?.with_labels(labels))
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, StabilizeError> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize, StabilizeError> {
        tokens
            .next()
            .ok_or_else(|| StabilizeError::MatrixFormat(format!("missing {what} in header")))?
            .parse()
            .map_err(|_| StabilizeError::MatrixFormat(format!("bad {what} in header")))
    };
    let rows = dim("rows")?;
    let cols = dim("cols")?;
    let vals = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| StabilizeError::MatrixFormat(format!("bad entry `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() != rows * cols {
        return Err(StabilizeError::MatrixFormat(format!(
            "expected {} entries, found {}",
            rows * cols,
            vals.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

pub fn format_matrix(a: &DMatrix<f64>) -> String {
    let mut s = format!("{} {}\n", a.nrows(), a.ncols());
    for r in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols())
            .map(|c| format!("{:.17e}", a[(r, c)]))
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// JSON-friendly summary of a stabilization run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizeSummary {
    pub iterations: usize,
    pub history: Vec<Option<usize>>,
    pub s_inf_dim: Option<usize>,
    pub c_inf_dim: Option<usize>,
    pub s_inf_basis: Vec<Vec<f64>>,
    pub s_inf_offset: Vec<f64>,
    pub certificate: f64,
    pub labels: Vec<String>,
}

impl StabilizeSummary {
    pub fn new(sys: &LinearImplicitSystem, r: &StabilizeReport) -> Self {
        let b = r.s_inf.basis();
        Self {
            iterations: r.iterations,
            history: r.history.clone(),
            s_inf_dim: r.s_inf.dim(),
            c_inf_dim: r.c_inf.dim(),
            s_inf_basis: b
                .column_iter()
                .map(|c| c.iter().map(|v| clean(*v)).collect())
                .collect(),
            s_inf_offset: r.s_inf.offset().iter().map(|v| clean(*v)).collect(),
            certificate: r.certificate(sys),
            labels: sys.labels().to_vec(),
        }
    }

    pub fn history_text(&self) -> String {
        self.history
            .iter()
            .map(|d| d.map_or("empty".to_string(), |d| d.to_string()))
            .collect::<Vec<_>>()
            .join("→")
    }
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-14 {
        0.0
    } else {
        v
    }
}

/// The two-dimensional demo: `R = I₂`, `S₀ = {x₁ = 0, y₂ = 0}`.
pub fn demo_system() -> LinearImplicitSystem {
    let eq = DMatrix::from_row_slice(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    LinearImplicitSystem::from_augmented(DMatrix::identity(2, 2), &eq).expect("demo system")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    fn e(n: usize, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        v
    }

    fn eqs(rows: usize, cols: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, vals)
    }

    #[test]
    fn projection_examples() {
        let sys = demo_system();
        let c = project_base(&sys, sys.initial());
        assert_eq!(c.dim(), Some(1));
        assert!(c.functional_residual(&e(2, 0)) < 1e-14);
        let full = sys.with_initial(Subspace::full(4));
        assert_eq!(project_base(&full, full.initial()).dim(), Some(2));
        let zero = sys.with_initial(Subspace::zero(4));
        assert_eq!(project_base(&zero, zero.initial()).dim(), Some(0));
    }

    #[test]
    fn step_examples() {
        let sys = demo_system();
        let c0 = project_base(&sys, sys.initial());
        let s1 = step(&sys, sys.initial(), &c0);
        assert_eq!(s1.dim(), Some(1));
        for k in [0, 2, 3] {
            assert!(s1.functional_residual(&e(4, k)) < 1e-14);
        }
        let c1 = project_base(&sys, &s1);
        assert!(step(&sys, &s1, &c1).same_as(&s1, 1e-12));

        let affine = LinearImplicitSystem::from_augmented(
            DMatrix::identity(2, 2),
            &eqs(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
        )
        .unwrap();
        let c = project_base(&affine, affine.initial());
        assert!(step(&affine, affine.initial(), &c).is_empty());
    }

    #[test]
    fn demo_stabilizes_in_two() {
        let sys = demo_system();
        let r = stabilize(&sys);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.history, vec![Some(2), Some(1), Some(1)]);
        assert_eq!(r.c_inf.dim(), Some(1));
        assert!(r.certificate(&sys) < 1e-10);
        assert_eq!(StabilizeSummary::new(&sys, &r).history_text(), "2→1→1");
    }

    #[test]
    fn full_space_is_fixed() {
        let sys = demo_system().with_initial(Subspace::full(4));
        let r = stabilize(&sys);
        assert_eq!(
            (r.iterations, r.history.clone()),
            (1, vec![Some(4), Some(4)])
        );
        let again = stabilize(&sys.with_initial(r.s_inf.clone()));
        assert_eq!(again.iterations, 1);
    }

    #[test]
    fn inconsistent_is_empty_not_error() {
        let sys = LinearImplicitSystem::from_augmented(
            DMatrix::identity(2, 2),
            &eqs(2, 5, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
        )
        .unwrap();
        let r = stabilize(&sys);
        assert!(r.s_inf.is_empty());
        assert_eq!(r.history, vec![Some(2), None]);
    }

    #[test]
    fn regular_lagrangian_keeps_full_flow() {
        let c = systems::trivial_rn(1);
        let l = Expr::parse("v1^2/2", &state_vars(1, 1)).unwrap();
        let sys = build_linear_system(&c, &l, false).unwrap();
        assert_eq!(sys.initial().ambient(), 8);
        assert_eq!(sys.initial().dim(), Some(5));
        let r = stabilize(&sys);
        assert_eq!(r.history, vec![Some(5), Some(5)]);
    }

    #[test]
    fn singular_lagrangian_constraints() {
        let c = systems::trivial_rn(2);
        let l = Expr::parse("v1^2/2", &state_vars(2, 2)).unwrap();
        let sys = build_linear_system(&c, &l, false).unwrap();
        let r = stabilize(&sys);
        assert_eq!(r.history, vec![Some(10), Some(9), Some(9)]);
        assert!(r.iterations <= 3);
        let p2 = sys.coordinate("p2").unwrap();
        let pbar2 = sys.coordinate("pbar2").unwrap();
        assert!(r.c_inf.functional_residual(&e(8, p2)) < 1e-10);
        assert!(r.c_inf.functional_residual(&e(8, pbar2)) < 1e-10);
        assert!(
            r.c_inf
                .functional_residual(&e(8, sys.coordinate("p1").unwrap()))
                > 0.1
        );
    }

    #[test]
    fn zero_lagrangian() {
        let c = systems::trivial_rn(1);
        let l = Expr::parse("0", &state_vars(1, 1)).unwrap();
        let sys = build_linear_system(&c, &l, false).unwrap();
        let r = stabilize(&sys);
        for name in ["l1", "lbar1", "p1", "pbar1"] {
            let k = sys.coordinate(name).unwrap();
            assert!(r.s_inf.functional_residual(&e(8, k)) < 1e-10, "{name}");
        }
    }

    #[test]
    fn build_preconditions() {
        let l = Expr::parse("(v1^2+v2^2+v3^2)/2", &state_vars(0, 3)).unwrap();
        assert_eq!(
            build_linear_system(&systems::so3(), &l, false),
            Err(StabilizeError::NonAbelian)
        );
        let cubic = Expr::parse("v1^3", &state_vars(1, 1)).unwrap();
        assert!(matches!(
            build_linear_system(&systems::trivial_rn(1), &cubic, false),
            Err(StabilizeError::NotQuadratic { .. })
        ));
        let var = crate::algebroid::ChartBuilder::new("v", 1, 1)
            .anchor(0, 0, "x1")
            .build()
            .unwrap();
        let l1 = Expr::parse("v1^2", &state_vars(1, 1)).unwrap();
        assert_eq!(
            build_linear_system(&var, &l1, false),
            Err(StabilizeError::VariableAnchor)
        );
    }

    #[test]
    fn matrix_files_round_trip() {
        let a = eqs(2, 3, &[1.0, -2.5, 3.0, 0.1, 1e-300, -0.0]);
        assert_eq!(parse_matrix(&format_matrix(&a)).unwrap(), a);
        assert!(parse_matrix("2 2\n1 2 3").is_err());
        assert!(parse_matrix("x").is_err());
    }
}
