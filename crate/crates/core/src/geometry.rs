//! Coordinate-level Tulczyjew machinery.
//!
//! # Coordinate dictionary
//!
//! A [`DualPoint`] holds eight blocks `(x, y, p, p̄; q, q̄, l, l̄)`. Read as a
//! point of the prolongation of `E` over `A*` the blocks carry their field
//! names. The same storage reads as a point of the dual of the prolongation of
//! `E` over `A` after [`alpha_map`], positionally. The second-order display
//! names the last four blocks `(z, v, l, l̄)`; the engine aliases `z ≡ q` and
//! `v ≡ q̄`.
//!
//! The image `α_E(d) = (x, y, q, q̄; l + C p q, l̄, p, p̄)` is read as a point of
//! the Lagrangian subbundle `Σ` by
//!
//! | position | 1 | 2 | 3 | 4 | 5 | 6 | 7 | 8 |
//! |----------|---|---|---|---|---|---|---|---|
//! | meaning  | `x` | `y` | `z` | `v` | `μ` | `μ̄` | `μ̌` | `μ̃` |
//!
//! so that [`sigma_residual`] at `α_E(d)` and [`sl_residual`] at `d` agree.
//!
//! Fibers of `E*` are written in the `{𝒴_α, 𝒫^α}` components `(b, ṗ)` plus the
//! base velocity `ẋ = ρ(x)·b`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebroid::{base_vars, check_len, AdmState, AlgebroidError, Chart};
use crate::expr::{Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Algebroid(#[from] AlgebroidError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("Lagrangian must be declared over {expected} state variables, found {got}")]
    Lagrangian { expected: usize, got: usize },
    #[error("function must depend only on the base variables x1..x{m}")]
    NotBaseFunction { m: usize },
}

impl GeometryError {
    fn dim(what: &str, expected: usize, got: usize) -> Self {
        GeometryError::Algebroid(AlgebroidError::Dimension {
            what: what.into(),
            expected,
            got,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub pbar: Vec<f64>,
    pub q: Vec<f64>,
    pub qbar: Vec<f64>,
    pub l: Vec<f64>,
    pub lbar: Vec<f64>,
}

impl DualPoint {
    pub fn zeros(m: usize, n: usize) -> Self {
        let z = vec![0.0; n];
        Self {
            x: vec![0.0; m],
            y: z.clone(),
            p: z.clone(),
            pbar: z.clone(),
            q: z.clone(),
            qbar: z.clone(),
            l: z.clone(),
            lbar: z,
        }
    }

    pub fn validate(&self, chart: &Chart) -> Result<(), GeometryError> {
        let n = chart.rank();
        check_len("x", &self.x, chart.base_dim())?;
        for (name, b) in self.fiber_blocks() {
            check_len(name, b, n)?;
        }
        Ok(())
    }

    fn fiber_blocks(&self) -> [(&'static str, &Vec<f64>); 7] {
        [
            ("y", &self.y),
            ("p", &self.p),
            ("pbar", &self.pbar),
            ("q", &self.q),
            ("qbar", &self.qbar),
            ("l", &self.l),
            ("lbar", &self.lbar),
        ]
    }

    /// Flat coordinates in block order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        for (_, b) in self.fiber_blocks() {
            v.extend_from_slice(b);
        }
        v
    }

    pub fn from_slice(m: usize, n: usize, v: &[f64]) -> Result<Self, GeometryError> {
        if v.len() != m + 7 * n {
            return Err(GeometryError::dim("dual point", m + 7 * n, v.len()));
        }
        let block = |k: usize| v[m + k * n..m + (k + 1) * n].to_vec();
        Ok(Self {
            x: v[..m].to_vec(),
            y: block(0),
            p: block(1),
            pbar: block(2),
            q: block(3),
            qbar: block(4),
            l: block(5),
            lbar: block(6),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Components `(μ, μ̄, μ̌, μ̃)` of a covector over an admissible state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCovector {
    pub mu: Vec<f64>,
    pub mubar: Vec<f64>,
    pub mucheck: Vec<f64>,
    pub mutilde: Vec<f64>,
}

impl SigmaCovector {
    pub fn zeros(n: usize) -> Self {
        Self {
            mu: vec![0.0; n],
            mubar: vec![0.0; n],
            mucheck: vec![0.0; n],
            mutilde: vec![0.0; n],
        }
    }
}

/// Reads `α_E(d)` through the positional dictionary in the module docs.
pub fn sigma_coordinates(image: &DualPoint) -> (AdmState, SigmaCovector) {
    (
        AdmState::new(image.x.clone(), image.y.clone(), image.pbar.clone()),
        SigmaCovector {
            mu: image.q.clone(),
            mubar: image.qbar.clone(),
            mucheck: image.l.clone(),
            mutilde: image.lbar.clone(),
        },
    )
}

/// A fiber element `(b, ẋ, ṗ)` of `E*` over some base point `(x, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EStarFiber {
    pub b: Vec<f64>,
    pub xdot: Vec<f64>,
    pub pdot: Vec<f64>,
}

impl EStarFiber {
    /// Fiber element with `ẋ = ρ(x)·b`.
    pub fn anchored(
        chart: &Chart,
        x: &[f64],
        b: Vec<f64>,
        pdot: Vec<f64>,
    ) -> Result<Self, GeometryError> {
        check_len("pdot", &pdot, chart.rank())?;
        let xdot = chart.anchor_apply(x, &b)?;
        Ok(Self { b, xdot, pdot })
    }
}

/// A point of `E*`: base `(x, p) ∈ A*` and fiber `(b, ẋ, ṗ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub fiber: EStarFiber,
}

impl CotangentPoint {
    /// `max |ẋ − ρ(x)·b|`.
    pub fn anchor_defect(&self, chart: &Chart) -> Result<f64, GeometryError> {
        let r = chart.admissibility_residual(&self.x, &self.fiber.b, &self.fiber.xdot)?;
        Ok(r.iter().fold(0.0, |a, v| a.max(v.abs())))
    }
}

pub fn alpha_map(chart: &Chart, d: &DualPoint) -> Result<DualPoint, GeometryError> {
    d.validate(chart)?;
    let c = chart.structure_at(&d.x)?;
    let cpq = c.contract(&d.p, &d.q);
    Ok(DualPoint {
        x: d.x.clone(),
        y: d.y.clone(),
        p: d.q.clone(),
        pbar: d.qbar.clone(),
        q: d.l.iter().zip(&cpq).map(|(l, t)| l + t).collect(),
        qbar: d.lbar.clone(),
        l: d.p.clone(),
        lbar: d.pbar.clone(),
    })
}

pub fn alpha_inverse(chart: &Chart, d: &DualPoint) -> Result<DualPoint, GeometryError> {
    d.validate(chart)?;
    let c = chart.structure_at(&d.x)?;
    // positional blocks: (x, y, q, q̄; l', l̄, p, p̄)
    let (q, qbar, lprime, lbar, p, pbar) = (&d.p, &d.pbar, &d.q, &d.qbar, &d.l, &d.lbar);
    let cpq = c.contract(p, q);
    Ok(DualPoint {
        x: d.x.clone(),
        y: d.y.clone(),
        p: p.clone(),
        pbar: pbar.clone(),
        q: q.clone(),
        qbar: qbar.clone(),
        l: lprime.iter().zip(&cpq).map(|(l, t)| l - t).collect(),
        lbar: lbar.clone(),
    })
}

/// Liouville section: `λ(x, p)(b, ẋ, ṗ) = p·b`.
pub fn liouville(pt: &CotangentPoint) -> f64 {
    pt.p.iter().zip(&pt.fiber.b).map(|(p, b)| p * b).sum()
}

/// Canonical symplectic section on `E*`:
/// `Ω(w1, w2) = b1·ṗ2 − b2·ṗ1 + C^γ_{αβ}(x) p_γ b1^α b2^β`.
pub fn omega_a(
    chart: &Chart,
    x: &[f64],
    p: &[f64],
    w1: &EStarFiber,
    w2: &EStarFiber,
) -> Result<f64, GeometryError> {
    let n = chart.rank();
    check_len("p", p, n)?;
    for w in [w1, w2] {
        check_len("b", &w.b, n)?;
        check_len("pdot", &w.pdot, n)?;
    }
    let c = chart.structure_at(x)?;
    let canonical: f64 = (0..n)
        .map(|a| w1.b[a] * w2.pdot[a] - w2.b[a] * w1.pdot[a])
        .sum();
    let cp = c.contract(p, &w2.b);
    let twist: f64 = (0..n).map(|a| cp[a] * w1.b[a]).sum();
    Ok(canonical + twist)
}

/// Matrix of `Ω` on the coordinate basis ordered `(b_1..b_n, ṗ_1..ṗ_n)`.
pub fn omega_matrix(chart: &Chart, x: &[f64], p: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    let n = chart.rank();
    check_len("p", p, n)?;
    let c = chart.structure_at(x)?;
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        w[(a, n + a)] = 1.0;
        w[(n + a, a)] = -1.0;
        for b in 0..n {
            w[(a, b)] = (0..n).map(|g| c.get(g, a, b) * p[g]).sum();
        }
    }
    Ok(w)
}

/// First and second partials of `L` split into `(x, y, v)` blocks.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    pub lv: Vec<f64>,
}

pub(crate) fn check_lagrangian(chart: &Chart, lagrangian: &Expr) -> Result<(), GeometryError> {
    let expected = chart.base_dim() + 2 * chart.rank();
    if lagrangian.vars().len() != expected {
        return Err(GeometryError::Lagrangian {
            expected,
            got: lagrangian.vars().len(),
        });
    }
    Ok(())
}

pub(crate) fn lagrangian_gradients(
    chart: &Chart,
    lagrangian: &Expr,
    state: &AdmState,
) -> Result<Gradients, GeometryError> {
    check_lagrangian(chart, lagrangian)?;
    state.validate(chart)?;
    let (m, n) = (chart.base_dim(), chart.rank());
    let g = lagrangian.grad(&state.point())?;
    Ok(Gradients {
        lx: g[..m].to_vec(),
        ly: g[m..m + n].to_vec(),
        lv: g[m + n..].to_vec(),
    })
}

/// Residuals `[μ − ρᵀ∂L/∂x; μ̄ + μ̌ − ∂L/∂y; μ̃ − ∂L/∂v]`.
pub fn sigma_residual(
    chart: &Chart,
    lagrangian: &Expr,
    state: &AdmState,
    mu: &SigmaCovector,
) -> Result<Vec<f64>, GeometryError> {
    let n = chart.rank();
    for (name, b) in [
        ("mu", &mu.mu),
        ("mubar", &mu.mubar),
        ("mucheck", &mu.mucheck),
        ("mutilde", &mu.mutilde),
    ] {
        check_len(name, b, n)?;
    }
    let g = lagrangian_gradients(chart, lagrangian, state)?;
    let rlx = chart.anchor_transpose_apply(&state.x, &g.lx)?;
    let mut r = Vec::with_capacity(3 * n);
    r.extend((0..n).map(|a| mu.mu[a] - rlx[a]));
    r.extend((0..n).map(|a| mu.mubar[a] + mu.mucheck[a] - g.ly[a]));
    r.extend((0..n).map(|a| mu.mutilde[a] - g.lv[a]));
    Ok(r)
}

/// Residuals of `S_L` at `d`, with `L` evaluated at `(x, y, v = q̄)`:
/// `[l + C p q − ρᵀ∂L/∂x; l̄ + p − ∂L/∂y; p̄ − ∂L/∂v]`.
///
/// The admissibility leg `y = q` is reported separately by [`sl_admissibility`].
pub fn sl_residual(
    chart: &Chart,
    lagrangian: &Expr,
    d: &DualPoint,
) -> Result<Vec<f64>, GeometryError> {
    d.validate(chart)?;
    let n = chart.rank();
    let state = AdmState::new(d.x.clone(), d.y.clone(), d.qbar.clone());
    let g = lagrangian_gradients(chart, lagrangian, &state)?;
    let c = chart.structure_at(&d.x)?;
    let cpq = c.contract(&d.p, &d.q);
    let rlx = chart.anchor_transpose_apply(&d.x, &g.lx)?;
    let mut r = Vec::with_capacity(3 * n);
    r.extend((0..n).map(|a| (d.l[a] + cpq[a]) - rlx[a]));
    r.extend((0..n).map(|a| d.lbar[a] + d.p[a] - g.ly[a]));
    r.extend((0..n).map(|a| d.pbar[a] - g.lv[a]));
    Ok(r)
}

/// `y − q`.
pub fn sl_admissibility(d: &DualPoint) -> Vec<f64> {
    d.y.iter().zip(&d.q).map(|(y, q)| y - q).collect()
}

/// The subbundle `F_γ` for `γ = d^A f` at a base point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FGamma {
    pub x: Vec<f64>,
    /// `p_α = ρ^i_α ∂f/∂x^i`.
    pub p: Vec<f64>,
    /// One fiber vector per basis direction `b = e_β`.
    pub basis: Vec<EStarFiber>,
    /// The fiber vector with `b = y`.
    pub element: EStarFiber,
}

/// Builds `F_γ` for the exact section `γ = d^A f`: over `b` the element is
/// `(b, ẋ = ρb, ṗ_α = ∂²f/∂x^i∂x^j ẋ^j ρ^i_α + ∂f/∂x^i ∂ρ^i_α/∂x^j ẋ^j)`.
pub fn build_f_gamma(
    chart: &Chart,
    f: &Expr,
    x: &[f64],
    y: &[f64],
) -> Result<FGamma, GeometryError> {
    let (m, n) = (chart.base_dim(), chart.rank());
    if f.vars() != base_vars(m).as_slice() {
        return Err(GeometryError::NotBaseFunction { m });
    }
    check_len("x", x, m)?;
    check_len("y", y, n)?;
    let d = f.derivatives(x)?;
    let rho = chart.anchor_at(x)?;
    let drho = chart.anchor_jacobian(x)?;
    let p = chart.anchor_transpose_apply(x, &d.grad)?;

    let fiber_over = |b: Vec<f64>| -> Result<EStarFiber, GeometryError> {
        let xdot = chart.anchor_apply(x, &b)?;
        let pdot = (0..n)
            .map(|a| {
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        s += d.hessian[(i, j)] * xdot[j] * rho[(i, a)];
                        s += d.grad[i] * drho[j][(i, a)] * xdot[j];
                    }
                }
                s
            })
            .collect();
        Ok(EStarFiber { b, xdot, pdot })
    };

    let basis = (0..n)
        .map(|beta| {
            let mut e = vec![0.0; n];
            e[beta] = 1.0;
            fiber_over(e)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let element = fiber_over(y.to_vec())?;
    Ok(FGamma {
        x: x.to_vec(),
        p,
        basis,
        element,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagrangianReport {
    pub rank: usize,
    pub expected_rank: usize,
    pub isotropy: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Numerical rank of the `(b, ṗ)` span (singular values above `tol·σ_max`)
/// and the largest `|Ω(w_i, w_j)|`; passes iff the rank is `n` and the span
/// is isotropic to `tol`.
pub fn check_lagrangian_subbundle(
    chart: &Chart,
    vectors: &[EStarFiber],
    x: &[f64],
    p: &[f64],
    tol: f64,
) -> Result<LagrangianReport, GeometryError> {
    let n = chart.rank();
    let mut a = DMatrix::zeros(2 * n, vectors.len());
    for (k, w) in vectors.iter().enumerate() {
        check_len("b", &w.b, n)?;
        check_len("pdot", &w.pdot, n)?;
        for i in 0..n {
            a[(i, k)] = w.b[i];
            a[(n + i, k)] = w.pdot[i];
        }
    }
    let rank = crate::linalg::numerical_rank(&a, tol);
    let mut isotropy: f64 = 0.0;
    for (i, wi) in vectors.iter().enumerate() {
        for wj in &vectors[i + 1..] {
            isotropy = isotropy.max(omega_a(chart, x, p, wi, wj)?.abs());
        }
    }
    Ok(LagrangianReport {
        rank,
        expected_rank: n,
        isotropy,
        tol,
        pass: rank == n && isotropy < tol,
    })
}
