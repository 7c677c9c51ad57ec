//! Built-in charts, demo Lagrangians and independent oracles for the tangent
//! bundle and Lie-algebra cases.
//!
//! # Lie-algebra conventions
//!
//! The coadjoint action is `(ad*_ξ μ)_α = C^γ_{βα} ξ^β μ_γ`, so on `so(3)`
//! `ad*_ξ μ = μ × ξ`. With this convention the reduced equations read
//!
//! ```text
//! d²/dt²(∂L/∂ξ₂) − d/dt(∂L/∂ξ₁) = ad*_{ξ₁}(d/dt ∂L/∂ξ₂) − ad*_{ξ₁}(∂L/∂ξ₁)
//! ```
//!
//! and follow from the momentum flow `ṗ = ad*_y p`, `p = ∂L/∂ξ₁ − d/dt ∂L/∂ξ₂`.
//!
//! # Point-base block dictionary
//!
//! On a Lie algebra the image `α_E(d) = (y, q, q̄; l′, l̄, p, p̄)` is written
//! `γ̄ = ((μ₁, μ₂, ξ₁), (μ₃, μ₄, ξ₂, ξ₃))` with
//!
//! | `μ₁` | `μ₂` | `ξ₁` | `μ₃` | `μ₄` | `ξ₂` | `ξ₃` |
//! |------|------|------|------|------|------|------|
//! | `p`  | `p̄`  | `y`  | `l′` | `l̄`  | `q̄`  | `q`  |
//!
//! and the inverse tuple `(ξ₁, μ₃ − ad*_{ξ₃}μ₁, μ₄, μ₂, ξ₂, ξ₃, μ₁, μ₂)` lists
//! `(y, l, l̄, p̄, q̄, q, p, p̄)`. That tuple pairs `ad*` by transposition,
//! `(ad*_ξ μ)_α = C^γ_{αβ} ξ^β μ_γ`, the negative of [`ad_star`].

use serde::Serialize;

use crate::algebroid::{state_vars, Chart, ChartBuilder, StructureTensor};
use crate::dynamics::{DynamicsError, MomState, Trajectory};
use crate::expr::Expr;
use crate::fd;
use crate::geometry::DualPoint;

/// `A = TRⁿ`: identity anchor, zero bracket.
pub fn trivial_rn(n: usize) -> Chart {
    let mut b = ChartBuilder::new(format!("trivial_r{n}"), n, n);
    for i in 0..n {
        b = b.anchor(i, i, "1");
    }
    b.build().expect("trivial chart")
}

/// `so(3)` over a point: `[e_α, e_β] = ε_{αβγ} e_γ`.
pub fn so3() -> Chart {
    ChartBuilder::new("so3", 0, 3)
        .structure(2, 0, 1, "1")
        .structure(0, 1, 2, "1")
        .structure(1, 2, 0, "1")
        .build()
        .expect("so3 chart")
}

/// `so(3)` with `[e1, e2] = e3 + e1`, which violates the Jacobi identity.
pub fn so3_corrupted() -> Chart {
    ChartBuilder::new("so3_corrupted", 0, 3)
        .structure(2, 0, 1, "1")
        .structure(0, 0, 1, "1")
        .structure(0, 1, 2, "1")
        .structure(1, 2, 0, "1")
        .build()
        .expect("corrupted so3 chart")
}

/// `se(2)` over a point: `[e1, e2] = e3`, `[e1, e3] = −e2`, `[e2, e3] = 0`.
pub fn se2() -> Chart {
    ChartBuilder::new("se2", 0, 3)
        .structure(2, 0, 1, "1")
        .structure(1, 0, 2, "-1")
        .build()
        .expect("se2 chart")
}

/// Heisenberg algebra: `[e1, e2] = e3`, all else zero.
pub fn heisenberg() -> Chart {
    ChartBuilder::new("heisenberg", 0, 3)
        .structure(2, 0, 1, "1")
        .build()
        .expect("heisenberg chart")
}

/// Action algebroid on `R²` with `ρ(e1) = ∂/∂x1`, `ρ(e2) = exp(x1) ∂/∂x2`,
/// `[e1, e2] = e2`.
pub fn affine_action() -> Chart {
    ChartBuilder::new("affine_action", 2, 2)
        .anchor(0, 0, "1")
        .anchor(1, 1, "exp(x1)")
        .structure(1, 0, 1, "1")
        .build()
        .expect("affine action chart")
}

pub const BUILTIN_NAMES: &[&str] = &[
    "trivial_r<n>",
    "so3",
    "so3_corrupted",
    "se2",
    "heisenberg",
    "affine_action",
];

/// Looks up a built-in chart; `trivial_r<n>` accepts any `n ≥ 1`.
pub fn builtin(name: &str) -> Option<Chart> {
    match name {
        "so3" => Some(so3()),
        "so3_corrupted" => Some(so3_corrupted()),
        "se2" => Some(se2()),
        "heisenberg" => Some(heisenberg()),
        "affine_action" => Some(affine_action()),
        _ => {
            let n: usize = name.strip_prefix("trivial_r")?.parse().ok()?;
            (n >= 1).then(|| trivial_rn(n))
        }
    }
}

/// The well-formed built-ins used by the property suites.
pub fn valid_builtins() -> Vec<Chart> {
    vec![
        trivial_rn(1),
        trivial_rn(2),
        trivial_rn(3),
        so3(),
        se2(),
        heisenberg(),
        affine_action(),
    ]
}

fn sum_of(prefix: &str, n: usize, coeffs: impl Fn(usize) -> f64) -> String {
    (1..=n)
        .map(|k| format!("{:?}*{prefix}{k}^2", coeffs(k)))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// A regular demo Lagrangian for a chart, by chart name.
pub fn demo_lagrangian(chart: &Chart) -> Expr {
    let (m, n) = (chart.base_dim(), chart.rank());
    let text = match chart.name() {
        "so3" | "so3_corrupted" => "(v1^2 + 2*v2^2 + 3*v3^2)/2".to_string(),
        "se2" => "(2*v1^2 + v2^2 + v3^2)/2 - y1^2/8".to_string(),
        "heisenberg" => "(v1^2 + v2^2 + v3^2)/2 + y1*y2/10".to_string(),
        "affine_action" => "(v1^2 + v2^2)/2 - (y1^2 + y2^2)/2 + x1^2/20".to_string(),
        _ => {
            let mut t = sum_of("v", n, |_| 0.5);
            t.push_str(" - (");
            t.push_str(&sum_of("y", n, |_| 0.5));
            t.push(')');
            if m == n {
                t.push_str(" + ");
                t.push_str(&sum_of("x", m, |k| 0.05 / k as f64));
            }
            t
        }
    };
    Expr::parse(&text, &state_vars(m, n)).expect("demo Lagrangian parses")
}

/// A deterministic non-trivial initial state for demos.
pub fn demo_initial(chart: &Chart) -> MomState {
    let (m, n) = (chart.base_dim(), chart.rank());
    let f = |k: usize, s: f64| ((k as f64 + 1.0) * s).sin() * 0.5;
    MomState::new(
        (0..m).map(|k| f(k, 0.7) * 0.2).collect(),
        (0..n).map(|k| f(k, 1.3)).collect(),
        (0..n).map(|k| f(k, 2.1) * 0.4).collect(),
        (0..n).map(|k| f(k, 0.9)).collect(),
    )
}

/// `(ad*_ξ μ)_α = C^γ_{βα} ξ^β μ_γ`.
pub fn ad_star(c: &StructureTensor, xi: &[f64], mu: &[f64]) -> Vec<f64> {
    let n = c.rank();
    (0..n)
        .map(|a| {
            let mut s = 0.0;
            for b in 0..n {
                for g in 0..n {
                    s += c.get(g, b, a) * xi[b] * mu[g];
                }
            }
            s
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on a dense row-major system.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Classical second-order Euler–Lagrange flow on `TRⁿ`, written from
/// `0 = ∂L/∂x + d²/dt²(∂L/∂v) − d/dt(∂L/∂y)` with `y = ẋ`, `v = ẏ`:
/// the momentum `p = ∂L/∂y − d/dt ∂L/∂v` obeys `ṗ = ∂L/∂x`.
pub fn oracle_tangent_el(lagrangian: &Expr, s: &MomState) -> Result<MomState, DynamicsError> {
    let n = s.y.len();
    let point: Vec<f64> = s.x.iter().chain(&s.y).chain(&s.v).copied().collect();
    let d = lagrangian.derivatives(&point)?;
    let g = |i: usize| d.grad[i];
    let h = |i: usize, j: usize| d.hessian[(i, j)];
    let (ix, iy, iv) = (0, n, 2 * n);
    // d/dt ∂L/∂v^a = L_{v^a x^j} y^j + L_{v^a y^j} v^j + L_{v^a v^j} v̇^j
    let mut rows = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for a in 0..n {
        rows.push((0..n).map(|j| h(iv + a, iv + j)).collect::<Vec<_>>());
        let known: f64 = (0..n)
            .map(|j| h(iv + a, ix + j) * s.y[j] + h(iv + a, iy + j) * s.v[j])
            .sum();
        rhs.push(g(iy + a) - s.p[a] - known);
    }
    let vdot = gauss_solve(rows, rhs).ok_or(DynamicsError::SingularHessian { rcond: 0.0 })?;
    Ok(MomState {
        x: s.y.clone(),
        y: s.v.clone(),
        v: vdot,
        p: (0..n).map(|a| g(ix + a)).collect(),
    })
}

/// Finite-difference residual of the reduced second-order equations on a Lie
/// algebra (see the module docs), one max-norm per interior node.
pub fn oracle_lie_algebra_residual(
    chart: &Chart,
    lagrangian: &Expr,
    traj: &Trajectory<MomState>,
) -> Result<Vec<f64>, DynamicsError> {
    assert_eq!(chart.base_dim(), 0, "Lie-algebra oracle needs a point base");
    let nodes = traj.times.len();
    if nodes < 5 {
        return Err(DynamicsError::GridTooShort { nodes });
    }
    let n = chart.rank();
    let c = chart.structure_at(&[])?;
    let mut dxi1 = Vec::with_capacity(nodes);
    let mut dxi2 = Vec::with_capacity(nodes);
    for s in &traj.states {
        let pt: Vec<f64> = s.y.iter().chain(&s.v).copied().collect();
        let g = lagrangian.grad(&pt)?;
        dxi1.push(g[..n].to_vec());
        dxi2.push(g[n..].to_vec());
    }
    let t = &traj.times;
    Ok((2..nodes - 2)
        .map(|k| {
            let xi1 = &traj.states[k].y;
            let a1 = fd::derivative(t, &dxi2, k, 1);
            let a2 = fd::derivative(t, &dxi2, k, 2);
            let b1 = fd::derivative(t, &dxi1, k, 1);
            let ad_a1 = ad_star(&c, xi1, &a1);
            let ad_b = ad_star(&c, xi1, &dxi1[k]);
            (0..n)
                .map(|a| (a2[a] - b1[a] - ad_a1[a] + ad_b[a]).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

/// `γ̄ = ((μ₁, μ₂, ξ₁), (μ₃, μ₄, ξ₂, ξ₃))` on a Lie algebra.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LieAlgebraCovector {
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub xi1: Vec<f64>,
    pub mu3: Vec<f64>,
    pub mu4: Vec<f64>,
    pub xi2: Vec<f64>,
    pub xi3: Vec<f64>,
}

impl LieAlgebraCovector {
    /// Reads a point-base `α_E` image through the block dictionary.
    pub fn from_image(image: &DualPoint) -> Self {
        Self {
            mu1: image.l.clone(),
            mu2: image.lbar.clone(),
            xi1: image.y.clone(),
            mu3: image.q.clone(),
            mu4: image.qbar.clone(),
            xi2: image.pbar.clone(),
            xi3: image.p.clone(),
        }
    }
}

/// The displayed point-base inverse map in transposed pairing, returned as a
/// [`DualPoint`] with empty `x`.
pub fn oracle_alpha_inverse_lie(
    chart: &Chart,
    g: &LieAlgebraCovector,
) -> Result<DualPoint, DynamicsError> {
    assert_eq!(chart.base_dim(), 0, "Lie-algebra oracle needs a point base");
    let c = chart.structure_at(&[])?;
    let n = chart.rank();
    let transposed_ad: Vec<f64> = (0..n)
        .map(|a| {
            let mut s = 0.0;
            for b in 0..n {
                for gm in 0..n {
                    s += c.get(gm, a, b) * g.xi3[b] * g.mu1[gm];
                }
            }
            s
        })
        .collect();
    // (ξ₁, μ₃ − ad*_{ξ₃}μ₁, μ₄, μ₂, ξ₂, ξ₃, μ₁, μ₂) = (y, l, l̄, p̄, q̄, q, p, p̄)
    Ok(DualPoint {
        x: vec![],
        y: g.xi1.clone(),
        l: g.mu3
            .iter()
            .zip(&transposed_ad)
            .map(|(m, t)| m - t)
            .collect(),
        lbar: g.mu4.clone(),
        pbar: g.mu2.clone(),
        qbar: g.xi2.clone(),
        q: g.xi3.clone(),
        p: g.mu1.clone(),
    })
}
