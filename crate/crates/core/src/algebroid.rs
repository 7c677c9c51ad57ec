//! Lie algebroids in local coordinates.
//!
//! A [`Chart`] stores the anchor entries `ρ^i_α(x)` and the structure
//! functions `C^γ_{αβ}(x)` of the bracket `[e_α, e_β] = C^γ_{αβ} e_γ` as
//! expressions in the base coordinates `x1..xm`. Only pairs `α < β` are
//! stored, so antisymmetry holds by construction. A base point (`m = 0`)
//! is an empty coordinate vector, which covers plain Lie algebras.
//!
//! All indices in this module are 0-based; expression variables are 1-based
//! names (`x1`, `y1`, `v1`, ...).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{Expr, ExprError};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebroidError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid index: {0}")]
    Index(String),
}

pub fn base_vars(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// Variable names `x1..xm, y1..yn, v1..vn` used by Lagrangians.
pub fn state_vars(m: usize, n: usize) -> Vec<String> {
    let mut v = base_vars(m);
    v.extend((1..=n).map(|a| format!("y{a}")));
    v.extend((1..=n).map(|a| format!("v{a}")));
    v
}

pub(crate) fn check_len(what: &str, v: &[f64], expected: usize) -> Result<(), AlgebroidError> {
    if v.len() != expected {
        return Err(AlgebroidError::Dimension {
            what: what.to_string(),
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Full structure tensor `C^γ_{αβ}` at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureTensor {
    n: usize,
    data: Vec<f64>,
}

impl StructureTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, gamma: usize, alpha: usize, beta: usize) -> usize {
        (gamma * self.n + alpha) * self.n + beta
    }

    /// `C^γ_{αβ}`.
    #[inline]
    pub fn get(&self, gamma: usize, alpha: usize, beta: usize) -> f64 {
        self.data[self.idx(gamma, alpha, beta)]
    }

    fn set_pair(&mut self, gamma: usize, alpha: usize, beta: usize, value: f64) {
        let i = self.idx(gamma, alpha, beta);
        self.data[i] = value;
        let j = self.idx(gamma, beta, alpha);
        self.data[j] = -value;
    }

    /// `(Σ_{β,γ} C^γ_{αβ} p_γ q^β)_α`.
    pub fn contract(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|alpha| {
                let mut s = 0.0;
                for beta in 0..n {
                    if q[beta] == 0.0 {
                        continue;
                    }
                    for gamma in 0..n {
                        s += self.get(gamma, alpha, beta) * p[gamma] * q[beta];
                    }
                }
                s
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&c| c == 0.0)
    }
}

/// A Lie algebroid of rank `n` over an `m`-dimensional base, in one chart.
#[derive(Debug, Clone)]
pub struct Chart {
    name: String,
    m: usize,
    n: usize,
    labels: Vec<String>,
    /// Row-major `m × n`, entry `(i, α)` is `ρ^i_α`.
    rho: Vec<Expr>,
    /// `structure[pair(α, β) * n + γ]` is `C^γ_{αβ}` for `α < β`.
    structure: Vec<Expr>,
}

/// Builder with zero defaults for every anchor and structure entry.
#[derive(Debug, Clone)]
pub struct ChartBuilder {
    name: String,
    m: usize,
    n: usize,
    labels: Option<Vec<String>>,
    rho: Vec<Option<String>>,
    structure: Vec<Option<(String, bool)>>,
    errors: Vec<AlgebroidError>,
}

fn pair_index(n: usize, alpha: usize, beta: usize) -> usize {
    debug_assert!(alpha < beta && beta < n);
    // row-major enumeration of the strict upper triangle
    alpha * n - alpha * (alpha + 1) / 2 + (beta - alpha - 1)
}

impl ChartBuilder {
    pub fn new(name: impl Into<String>, m: usize, n: usize) -> Self {
        let pairs = n * n.saturating_sub(1) / 2;
        Self {
            name: name.into(),
            m,
            n,
            labels: None,
            rho: vec![None; m * n],
            structure: vec![None; pairs * n],
            errors: Vec::new(),
        }
    }

    pub fn labels(mut self, labels: Vec<String>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Sets `ρ^i_α`.
    pub fn anchor(mut self, i: usize, alpha: usize, expr: impl Into<String>) -> Self {
        if i >= self.m || alpha >= self.n {
            self.errors.push(AlgebroidError::Index(format!(
                "anchor entry ({i}, {alpha}) outside {}x{}",
                self.m, self.n
            )));
        } else {
            self.rho[i * self.n + alpha] = Some(expr.into());
        }
        self
    }

    /// Sets `C^γ_{αβ}` (and therefore `C^γ_{βα} = -C^γ_{αβ}`).
    pub fn structure(
        mut self,
        gamma: usize,
        alpha: usize,
        beta: usize,
        expr: impl Into<String>,
    ) -> Self {
        let n = self.n;
        if gamma >= n || alpha >= n || beta >= n || alpha == beta {
            self.errors.push(AlgebroidError::Index(format!(
                "structure entry C^{gamma}_({alpha},{beta}) invalid for rank {n}"
            )));
            return self;
        }
        let (a, b, negate) = if alpha < beta {
            (alpha, beta, false)
        } else {
            (beta, alpha, true)
        };
        self.structure[pair_index(n, a, b) * n + gamma] = Some((expr.into(), negate));
        self
    }

    pub fn build(self) -> Result<Chart, AlgebroidError> {
        if let Some(e) = self.errors.into_iter().next() {
            return Err(e);
        }
        let vars = base_vars(self.m);
        let parse = |slot: &Option<String>| -> Result<Expr, AlgebroidError> {
            match slot {
                Some(t) => Ok(Expr::parse(t, &vars)?),
                None => Ok(Expr::constant(0.0, &vars)),
            }
        };
        let rho = self.rho.iter().map(parse).collect::<Result<Vec<_>, _>>()?;
        let structure = self
            .structure
            .iter()
            .map(|slot| match slot {
                Some((t, false)) => Ok(Expr::parse(t, &vars)?),
                Some((t, true)) => Ok(Expr::parse(&format!("-({t})"), &vars)?),
                None => Ok(Expr::constant(0.0, &vars)),
            })
            .collect::<Result<Vec<_>, AlgebroidError>>()?;
        let labels = match self.labels {
            Some(l) if l.len() == self.m => l,
            Some(l) => {
                return Err(AlgebroidError::Dimension {
                    what: "labels".into(),
                    expected: self.m,
                    got: l.len(),
                })
            }
            None => vars.clone(),
        };
        Ok(Chart {
            name: self.name,
            m: self.m,
            n: self.n,
            labels,
            rho,
            structure,
        })
    }
}

/// A point `(x, y, v)` of the admissible set: `y` is the fiber point and
/// `v` the fiber velocity (the `z = y` leg is not stored).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdmState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, v: Vec<f64>) -> Self {
        Self { x, y, v }
    }

    pub fn validate(&self, chart: &Chart) -> Result<(), AlgebroidError> {
        check_len("x", &self.x, chart.base_dim())?;
        check_len("y", &self.y, chart.rank())?;
        check_len("v", &self.v, chart.rank())?;
        Ok(())
    }

    /// Concatenated `(x, y, v)`, the argument order of a Lagrangian.
    pub fn point(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.x.len() + 2 * self.y.len());
        p.extend_from_slice(&self.x);
        p.extend_from_slice(&self.y);
        p.extend_from_slice(&self.v);
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub chart: String,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub anchor_residual: f64,
    pub jacobi_residual: f64,
    pub pass: bool,
}

impl Chart {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base_dim(&self) -> usize {
        self.m
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn anchor_expr(&self, i: usize, alpha: usize) -> &Expr {
        &self.rho[i * self.n + alpha]
    }

    /// `C^γ_{αβ}` as an expression, for `α ≠ β`.
    pub fn structure_expr(&self, gamma: usize, alpha: usize, beta: usize) -> Option<(&Expr, f64)> {
        use std::cmp::Ordering;
        match alpha.cmp(&beta) {
            Ordering::Less => Some((
                &self.structure[pair_index(self.n, alpha, beta) * self.n + gamma],
                1.0,
            )),
            Ordering::Greater => Some((
                &self.structure[pair_index(self.n, beta, alpha) * self.n + gamma],
                -1.0,
            )),
            Ordering::Equal => None,
        }
    }

    pub fn has_constant_anchor(&self) -> bool {
        self.rho.iter().all(Expr::is_constant)
    }

    pub fn has_constant_structure(&self) -> bool {
        self.structure.iter().all(Expr::is_constant)
    }

    /// True when every structure function is identically the constant 0.
    pub fn is_abelian(&self) -> bool {
        self.structure
            .iter()
            .all(|e| e.is_constant() && e.eval(&vec![0.0; self.m]).is_ok_and(|c| c == 0.0))
    }

    fn check_x(&self, x: &[f64]) -> Result<(), AlgebroidError> {
        check_len("x", x, self.m)
    }

    /// Anchor matrix with entry `(i, α) = ρ^i_α(x)`.
    pub fn anchor_at(&self, x: &[f64]) -> Result<DMatrix<f64>, AlgebroidError> {
        self.check_x(x)?;
        let mut r = DMatrix::zeros(self.m, self.n);
        for i in 0..self.m {
            for a in 0..self.n {
                r[(i, a)] = self.rho[i * self.n + a].eval(x)?;
            }
        }
        Ok(r)
    }

    /// `∂ρ^i_α/∂x^j`, indexed `[j][(i, α)]`.
    pub fn anchor_jacobian(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, AlgebroidError> {
        self.check_x(x)?;
        let mut out = vec![DMatrix::zeros(self.m, self.n); self.m];
        for i in 0..self.m {
            for a in 0..self.n {
                let e = &self.rho[i * self.n + a];
                if e.is_constant() {
                    continue;
                }
                let g = e.grad(x)?;
                for (j, gj) in g.into_iter().enumerate() {
                    out[j][(i, a)] = gj;
                }
            }
        }
        Ok(out)
    }

    pub fn structure_at(&self, x: &[f64]) -> Result<StructureTensor, AlgebroidError> {
        self.check_x(x)?;
        let n = self.n;
        let mut t = StructureTensor::zeros(n);
        for alpha in 0..n {
            for beta in alpha + 1..n {
                let base = pair_index(n, alpha, beta) * n;
                for gamma in 0..n {
                    let c = self.structure[base + gamma].eval(x)?;
                    t.set_pair(gamma, alpha, beta, c);
                }
            }
        }
        Ok(t)
    }

    /// `∂C^γ_{αβ}/∂x^j`, indexed `[j]`.
    pub fn structure_jacobian(&self, x: &[f64]) -> Result<Vec<StructureTensor>, AlgebroidError> {
        self.check_x(x)?;
        let n = self.n;
        let mut out = vec![StructureTensor::zeros(n); self.m];
        for alpha in 0..n {
            for beta in alpha + 1..n {
                let base = pair_index(n, alpha, beta) * n;
                for gamma in 0..n {
                    let e = &self.structure[base + gamma];
                    if e.is_constant() {
                        continue;
                    }
                    for (j, gj) in e.grad(x)?.into_iter().enumerate() {
                        out[j].set_pair(gamma, alpha, beta, gj);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Max residuals of anchor compatibility and the Jacobi identity at `x`.
    pub fn structure_residuals_at(&self, x: &[f64]) -> Result<(f64, f64), AlgebroidError> {
        let (m, n) = (self.m, self.n);
        let rho = self.anchor_at(x)?;
        let drho = self.anchor_jacobian(x)?;
        let c = self.structure_at(x)?;
        let dc = self.structure_jacobian(x)?;

        let mut anchor_res: f64 = 0.0;
        for alpha in 0..n {
            for beta in 0..n {
                for i in 0..m {
                    let mut r = 0.0;
                    for j in 0..m {
                        r += rho[(j, alpha)] * drho[j][(i, beta)]
                            - rho[(j, beta)] * drho[j][(i, alpha)];
                    }
                    for gamma in 0..n {
                        r -= rho[(i, gamma)] * c.get(gamma, alpha, beta);
                    }
                    anchor_res = anchor_res.max(r.abs());
                }
            }
        }

        // Σ_cyc [ρ^i_α ∂_i C^ν_{βγ} + C^ν_{αμ} C^μ_{βγ}]
        let term = |nu: usize, a: usize, b: usize, g: usize| -> f64 {
            let mut s = 0.0;
            for i in 0..m {
                s += rho[(i, a)] * dc[i].get(nu, b, g);
            }
            for mu in 0..n {
                s += c.get(nu, a, mu) * c.get(mu, b, g);
            }
            s
        };
        let mut jacobi_res: f64 = 0.0;
        for nu in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for g in 0..n {
                        let r = term(nu, a, b, g) + term(nu, b, g, a) + term(nu, g, a, b);
                        jacobi_res = jacobi_res.max(r.abs());
                    }
                }
            }
        }
        Ok((anchor_res, jacobi_res))
    }

    /// Samples `x ∈ [-1, 1]^m` with a seeded generator and reports the largest
    /// anchor-compatibility and Jacobi residuals. Evaluation failures count as
    /// infinite residuals.
    pub fn check_structure(&self, n_samples: usize, seed: u64, tol: f64) -> StructureReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut anchor_residual: f64 = 0.0;
        let mut jacobi_residual: f64 = 0.0;
        for _ in 0..n_samples.max(1) {
            let x: Vec<f64> = (0..self.m).map(|_| rng.random_range(-1.0..=1.0)).collect();
            match self.structure_residuals_at(&x) {
                Ok((a, j)) => {
                    anchor_residual = anchor_residual.max(a);
                    jacobi_residual = jacobi_residual.max(j);
                }
                Err(_) => {
                    anchor_residual = f64::INFINITY;
                    jacobi_residual = f64::INFINITY;
                }
            }
        }
        StructureReport {
            chart: self.name.clone(),
            samples: n_samples.max(1),
            seed,
            tol,
            anchor_residual,
            jacobi_residual,
            pass: anchor_residual < tol && jacobi_residual < tol,
        }
    }

    /// `ẋ − ρ(x)·y`; zero iff the velocity is admissible.
    pub fn admissibility_residual(
        &self,
        x: &[f64],
        y: &[f64],
        xdot: &[f64],
    ) -> Result<Vec<f64>, AlgebroidError> {
        check_len("y", y, self.n)?;
        check_len("xdot", xdot, self.m)?;
        let rho = self.anchor_at(x)?;
        Ok((0..self.m)
            .map(|i| xdot[i] - (0..self.n).map(|a| rho[(i, a)] * y[a]).sum::<f64>())
            .collect())
    }

    /// `ρ(x)·y`.
    pub fn anchor_apply(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, AlgebroidError> {
        check_len("y", y, self.n)?;
        let rho = self.anchor_at(x)?;
        Ok((0..self.m)
            .map(|i| (0..self.n).map(|a| rho[(i, a)] * y[a]).sum())
            .collect())
    }

    /// `ρ(x)ᵀ·g`, i.e. `(ρ^i_α g_i)_α`.
    pub fn anchor_transpose_apply(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>, AlgebroidError> {
        check_len("covector", g, self.m)?;
        let rho = self.anchor_at(x)?;
        Ok((0..self.n)
            .map(|a| (0..self.m).map(|i| rho[(i, a)] * g[i]).sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;

    #[test]
    fn pair_index_enumerates_upper_triangle() {
        let n = 4;
        let mut seen = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                seen.push(pair_index(n, a, b));
            }
        }
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn trivial_anchor_is_identity() {
        let c = systems::trivial_rn(3);
        assert_eq!(
            c.anchor_at(&[0.2, -0.1, 5.0]).unwrap(),
            DMatrix::identity(3, 3)
        );
        assert!(c.structure_at(&[0.0, 0.0, 0.0]).unwrap().is_zero());
    }

    #[test]
    fn point_base_has_empty_anchor() {
        let c = systems::so3();
        let r = c.anchor_at(&[]).unwrap();
        assert_eq!((r.nrows(), r.ncols()), (0, 3));
    }

    #[test]
    fn anchor_entry_evaluates() {
        let c = ChartBuilder::new("t", 2, 1)
            .anchor(0, 0, "x2")
            .build()
            .unwrap();
        assert_eq!(c.anchor_at(&[0.0, 5.0]).unwrap()[(0, 0)], 5.0);
    }

    #[test]
    fn so3_structure_is_levi_civita() {
        let c = systems::so3().structure_at(&[]).unwrap();
        let eps = |a: usize, b: usize, g: usize| -> f64 {
            let perm = [a, b, g];
            match perm {
                [0, 1, 2] | [1, 2, 0] | [2, 0, 1] => 1.0,
                [0, 2, 1] | [2, 1, 0] | [1, 0, 2] => -1.0,
                _ => 0.0,
            }
        };
        for g in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    assert_eq!(c.get(g, a, b), eps(a, b, g));
                    assert_eq!(c.get(g, a, b) + c.get(g, b, a), 0.0);
                }
            }
        }
    }

    #[test]
    fn builder_accepts_reversed_pairs() {
        let c = ChartBuilder::new("t", 0, 2)
            .structure(1, 1, 0, "3")
            .build()
            .unwrap();
        let t = c.structure_at(&[]).unwrap();
        assert_eq!(t.get(1, 0, 1), -3.0);
        assert_eq!(t.get(1, 1, 0), 3.0);
    }

    #[test]
    fn builder_rejects_diagonal_pairs() {
        let r = ChartBuilder::new("t", 0, 2).structure(0, 1, 1, "3").build();
        assert!(matches!(r, Err(AlgebroidError::Index(_))));
    }

    #[test]
    fn trivial_structure_residuals_vanish() {
        let r = systems::trivial_rn(3).check_structure(100, DEFAULT_SEED, 1e-10);
        assert_eq!(r.anchor_residual, 0.0);
        assert_eq!(r.jacobi_residual, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn so3_passes_jacobi() {
        let r = systems::so3().check_structure(10, DEFAULT_SEED, 1e-10);
        assert_eq!(r.jacobi_residual, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn rescaled_so3_is_still_a_lie_algebra() {
        // [e1,e2] = 2 e3 with the other so(3) brackets unchanged is a rescaled
        // so(3): every cyclic sum C^ν_{αμ}C^μ_{βγ} still vanishes.
        let c = ChartBuilder::new("so3-rescaled", 0, 3)
            .structure(2, 0, 1, "2")
            .structure(0, 1, 2, "1")
            .structure(1, 2, 0, "1")
            .build()
            .unwrap();
        assert!(c.check_structure(10, DEFAULT_SEED, 1e-10).pass);
    }

    #[test]
    fn jacobi_violation_detected() {
        let r = systems::so3_corrupted().check_structure(10, DEFAULT_SEED, 1e-10);
        assert!(!r.pass);
        assert!(r.jacobi_residual > 0.5);
    }

    #[test]
    fn anchor_violation_detected() {
        // [ρ1, ρ2] = ∂2 but the bracket claims [e1, e2] = 0.
        let c = ChartBuilder::new("bad", 2, 2)
            .anchor(0, 0, "1")
            .anchor(1, 1, "x1")
            .build()
            .unwrap();
        let r = c.check_structure(20, DEFAULT_SEED, 1e-10);
        assert!(r.anchor_residual > 0.5);
        assert!(!r.pass);
    }

    #[test]
    fn variable_anchor_chart_passes() {
        assert!(
            systems::affine_action()
                .check_structure(100, DEFAULT_SEED, 1e-10)
                .pass
        );
    }

    #[test]
    fn admissibility_examples() {
        let t = systems::trivial_rn(2);
        assert_eq!(
            t.admissibility_residual(&[0.0, 0.0], &[1.0, 2.0], &[1.0, 2.0])
                .unwrap(),
            vec![0.0, 0.0]
        );
        assert!(systems::so3()
            .admissibility_residual(&[], &[1.0, 2.0, 3.0], &[])
            .unwrap()
            .is_empty());
        let c = ChartBuilder::new("t", 2, 1)
            .anchor(0, 0, "x2")
            .build()
            .unwrap();
        assert_eq!(
            c.admissibility_residual(&[0.0, 2.0], &[3.0], &[6.0, 0.0])
                .unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            c.admissibility_residual(&[0.0, 2.0], &[3.0], &[5.0, 0.0])
                .unwrap()[0],
            -1.0
        );
    }

    #[test]
    fn admissibility_dimension_errors() {
        let t = systems::trivial_rn(2);
        assert!(matches!(
            t.admissibility_residual(&[0.0], &[1.0, 2.0], &[1.0, 2.0]),
            Err(AlgebroidError::Dimension { .. })
        ));
    }
}
