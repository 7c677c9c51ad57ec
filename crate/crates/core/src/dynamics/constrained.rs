//! Vakonomic dynamics for constraints `v^A = Ψ^A(x, y, v^a)`.
//!
//! The extended Lagrangian is `L_c = L − λ_A Φ^A` with `Φ^A = v^A − Ψ^A`.
//! The momentum equations are those of the unconstrained flow applied to
//! `L_c` in every fiber direction; `(v̇, λ̇)` come from the bordered system
//!
//! ```text
//! [ ∂²L_c/∂v²   −(∂Φ/∂v)ᵀ ] [ v̇ ]   [ ∂L_c/∂y − p − ∂²L_c/∂v∂x·ẋ − ∂²L_c/∂v∂y·v ]
//! [ ∂Φ/∂v        0        ] [ λ̇ ] = [ −∂Φ/∂x·ẋ − ∂Φ/∂y·v                      ]
//! ```
//!
//! Only the free accelerations `v^a` are integrated; `v^A` is rebuilt from `Ψ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    admissibility_profile, check_grid, mat_vec, ode, Blocks, Diagnostics, DynamicsError, Method,
    Trajectory,
};
use crate::algebroid::{base_vars, check_len, AdmState, Chart};
use crate::expr::Expr;
use crate::fd;
use crate::geometry::check_lagrangian;
use crate::linalg;

/// Variables available to `Ψ`: `x1..xm, y1..yn` and the free `v` names.
pub fn psi_vars(m: usize, n: usize, free: &[usize]) -> Vec<String> {
    let mut v = base_vars(m);
    v.extend((1..=n).map(|a| format!("y{a}")));
    v.extend(free.iter().map(|a| format!("v{}", a + 1)));
    v
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    dependent: Vec<usize>,
    free: Vec<usize>,
    psi: Vec<Expr>,
}

impl ConstraintSet {
    /// `dependent` holds 0-based fiber indices; `psi[k]` gives `v^{dependent[k]}`
    /// and must be declared over [`psi_vars`].
    pub fn new(
        chart: &Chart,
        dependent: Vec<usize>,
        psi: Vec<Expr>,
    ) -> Result<Self, DynamicsError> {
        let n = chart.rank();
        if dependent.len() != psi.len() {
            return Err(DynamicsError::Constraint(format!(
                "{} dependent indices but {} expressions",
                dependent.len(),
                psi.len()
            )));
        }
        let mut seen = vec![false; n];
        for &a in &dependent {
            if a >= n || seen[a] {
                return Err(DynamicsError::Constraint(format!(
                    "bad dependent index {}",
                    a + 1
                )));
            }
            seen[a] = true;
        }
        let free: Vec<usize> = (0..n).filter(|a| !seen[*a]).collect();
        let names = psi_vars(chart.base_dim(), n, &free);
        for (k, e) in psi.iter().enumerate() {
            if e.vars() != names.as_slice() {
                return Err(DynamicsError::Constraint(format!(
                    "constraint {} must be declared over [{}]",
                    k + 1,
                    names.join(", ")
                )));
            }
        }
        Ok(Self {
            dependent,
            free,
            psi,
        })
    }

    /// Parses `psi` texts against [`psi_vars`].
    pub fn parse(
        chart: &Chart,
        dependent: Vec<usize>,
        psi: &[&str],
    ) -> Result<Self, DynamicsError> {
        let n = chart.rank();
        let free: Vec<usize> = (0..n).filter(|a| !dependent.contains(a)).collect();
        let names = psi_vars(chart.base_dim(), n, &free);
        let exprs = psi
            .iter()
            .map(|t| Expr::parse(t, &names))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(chart, dependent, exprs)
    }

    pub fn dependent(&self) -> &[usize] {
        &self.dependent
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn psi(&self) -> &[Expr] {
        &self.psi
    }

    pub fn count(&self) -> usize {
        self.dependent.len()
    }

    fn psi_point(x: &[f64], y: &[f64], v_free: &[f64]) -> Vec<f64> {
        [x, y, v_free].concat()
    }

    /// Full `v` with the dependent slots filled from `Ψ`.
    pub fn full_v(&self, x: &[f64], y: &[f64], v_free: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        let n = self.free.len() + self.dependent.len();
        let pt = Self::psi_point(x, y, v_free);
        let mut v = vec![0.0; n];
        for (k, &a) in self.free.iter().enumerate() {
            v[a] = v_free[k];
        }
        for (e, &a) in self.psi.iter().zip(&self.dependent) {
            v[a] = e.eval(&pt)?;
        }
        Ok(v)
    }
}

/// `(x, y, v^a, p, λ)`. Also used for time derivatives, componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v_free: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ExtState {
    pub fn validate(&self, chart: &Chart, cons: &ConstraintSet) -> Result<(), DynamicsError> {
        let n = chart.rank();
        check_len("x", &self.x, chart.base_dim())?;
        check_len("y", &self.y, n)?;
        check_len("v_free", &self.v_free, cons.free.len())?;
        check_len("p", &self.p, n)?;
        check_len("lambda", &self.lambda, cons.count())?;
        Ok(())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.x[..], &self.y, &self.v_free, &self.p, &self.lambda].concat()
    }

    pub fn from_slice(m: usize, n: usize, nf: usize, na: usize, s: &[f64]) -> Self {
        let mut at = 0;
        let mut take = |k: usize| {
            let out = s[at..at + k].to_vec();
            at += k;
            out
        };
        Self {
            x: take(m),
            y: take(n),
            v_free: take(nf),
            p: take(n),
            lambda: take(na),
        }
    }

    pub fn full_v(&self, cons: &ConstraintSet) -> Result<Vec<f64>, DynamicsError> {
        cons.full_v(&self.x, &self.y, &self.v_free)
    }
}

/// Everything the constrained flow needs at one state.
struct ConstrainedBlocks {
    v: Vec<f64>,
    lc: Blocks,
    phi_x: DMatrix<f64>,
    phi_y: DMatrix<f64>,
    phi_v: DMatrix<f64>,
}

fn constrained_blocks(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    e: &ExtState,
) -> Result<ConstrainedBlocks, DynamicsError> {
    e.validate(chart, cons)?;
    check_lagrangian(chart, lagrangian)?;
    let (m, n) = (chart.base_dim(), chart.rank());
    let dim = m + 2 * n;
    let v = e.full_v(cons)?;
    let state = AdmState::new(e.x.clone(), e.y.clone(), v.clone());
    let d = lagrangian.derivatives(&state.point())?;
    let mut grad = d.grad.clone();
    let mut hess = d.hessian.clone();

    // position in the Ψ variable list → position in (x, y, v)
    let embed: Vec<usize> = (0..m + n)
        .chain(cons.free.iter().map(|a| m + n + a))
        .collect();
    let psi_pt = ConstraintSet::psi_point(&e.x, &e.y, &e.v_free);
    let na = cons.count();
    let mut phi_grad = DMatrix::zeros(na, dim);
    for (k, (psi, &dep)) in cons.psi.iter().zip(&cons.dependent).enumerate() {
        let dp = psi.derivatives(&psi_pt)?;
        phi_grad[(k, m + n + dep)] = 1.0;
        for (i, &gi) in embed.iter().enumerate() {
            phi_grad[(k, gi)] -= dp.grad[i];
        }
        let lam = e.lambda[k];
        for (i, &gi) in embed.iter().enumerate() {
            for (j, &gj) in embed.iter().enumerate() {
                // Hess(−λΦ) = λ Hess Ψ
                hess[(gi, gj)] += lam * dp.hessian[(i, j)];
            }
        }
        for (c, g) in grad.iter_mut().enumerate() {
            *g -= lam * phi_grad[(k, c)];
        }
    }
    let rank = linalg::numerical_rank(&phi_grad.columns(m + n, n).into_owned(), linalg::RANK_RTOL);
    if rank < na {
        return Err(DynamicsError::RankDeficientConstraint { rank, expected: na });
    }
    Ok(ConstrainedBlocks {
        v,
        lc: Blocks::from_full(m, n, d.value, &grad, &hess),
        phi_x: phi_grad.columns(0, m).into_owned(),
        phi_y: phi_grad.columns(m, n).into_owned(),
        phi_v: phi_grad.columns(m + n, n).into_owned(),
    })
}

pub fn rhs_constrained(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    e: &ExtState,
) -> Result<ExtState, DynamicsError> {
    let n = chart.rank();
    let na = cons.count();
    let cb = constrained_blocks(chart, lagrangian, cons, e)?;
    let xdot = chart.anchor_apply(&e.x, &e.y)?;
    let rlx = chart.anchor_transpose_apply(&e.x, &cb.lc.lx)?;
    let cpy = chart.structure_at(&e.x)?.contract(&e.p, &e.y);
    let pdot: Vec<f64> = (0..n).map(|a| rlx[a] - cpy[a]).collect();

    let mut k = DMatrix::zeros(n + na, n + na);
    k.view_mut((0, 0), (n, n)).copy_from(&cb.lc.h_vv);
    k.view_mut((0, n), (n, na))
        .copy_from(&(-cb.phi_v.transpose()));
    k.view_mut((n, 0), (na, n)).copy_from(&cb.phi_v);
    let t1 = mat_vec(&cb.lc.h_vx, &xdot);
    let t2 = mat_vec(&cb.lc.h_vy, &cb.v);
    let c1 = mat_vec(&cb.phi_x, &xdot);
    let c2 = mat_vec(&cb.phi_y, &cb.v);
    let mut rhs = DVector::zeros(n + na);
    for a in 0..n {
        rhs[a] = cb.lc.ly[a] - e.p[a] - t1[a] - t2[a];
    }
    for a in 0..na {
        rhs[n + a] = -c1[a] - c2[a];
    }
    let sol = linalg::solve_checked(&k, &rhs)
        .map_err(|rcond| DynamicsError::SingularBordered { rcond })?;
    Ok(ExtState {
        x: xdot,
        y: cb.v,
        v_free: cons.free.iter().map(|&a| sol[a]).collect(),
        p: pdot,
        lambda: (0..na).map(|a| sol[n + a]).collect(),
    })
}

/// `p̄_c = ∂L_c/∂v`.
pub fn constrained_pbar(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    e: &ExtState,
) -> Result<Vec<f64>, DynamicsError> {
    Ok(constrained_blocks(chart, lagrangian, cons, e)?.lc.lv)
}

/// `E = p·y + (∂L_c/∂v)·v − L_c`; `L_c = L` on the constraint.
pub fn constrained_energy(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    e: &ExtState,
) -> Result<f64, DynamicsError> {
    let cb = constrained_blocks(chart, lagrangian, cons, e)?;
    let py: f64 = e.p.iter().zip(&e.y).map(|(a, b)| a * b).sum();
    let lv: f64 = cb.lc.lv.iter().zip(&cb.v).map(|(a, b)| a * b).sum();
    Ok(py + lv - cb.lc.value)
}

/// `max_A |ẏ^A − Ψ^A(x, y, ẏ^a)|` with `ẏ` from finite differences.
fn constraint_profile(
    cons: &ConstraintSet,
    times: &[f64],
    states: &[ExtState],
) -> Result<Vec<f64>, DynamicsError> {
    if times.len() < 2 {
        return Ok(vec![0.0; times.len()]);
    }
    let ys: Vec<_> = states.iter().map(|s| s.y.clone()).collect();
    (0..times.len())
        .map(|k| {
            let ydot = fd::derivative(times, &ys, k, 1);
            let vf: Vec<f64> = cons.free.iter().map(|&a| ydot[a]).collect();
            let pt = ConstraintSet::psi_point(&states[k].x, &states[k].y, &vf);
            let mut r: f64 = 0.0;
            for (psi, &a) in cons.psi.iter().zip(&cons.dependent) {
                r = r.max((ydot[a] - psi.eval(&pt)?).abs());
            }
            Ok(r)
        })
        .collect()
}

pub fn constrained_diagnostics(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    times: &[f64],
    states: &[ExtState],
) -> Result<Vec<Diagnostics>, DynamicsError> {
    let xs: Vec<_> = states.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<_> = states.iter().map(|s| s.y.clone()).collect();
    let vs = states
        .iter()
        .map(|s| s.full_v(cons))
        .collect::<Result<Vec<_>, _>>()?;
    let adm = admissibility_profile(chart, times, &xs, &ys, &vs)?;
    let phi = constraint_profile(cons, times, states)?;
    states
        .iter()
        .enumerate()
        .map(|(k, s)| {
            Ok(Diagnostics {
                energy: constrained_energy(chart, lagrangian, cons, s)?,
                adm_residual: adm[k],
                constraint_residual: phi[k],
            })
        })
        .collect()
}

pub fn integrate_constrained(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    e0: &ExtState,
    t0: f64,
    t1: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory<ExtState>, DynamicsError> {
    e0.validate(chart, cons)?;
    let (m, n, nf, na) = (
        chart.base_dim(),
        chart.rank(),
        cons.free.len(),
        cons.count(),
    );
    let f = |_t: f64, y: &[f64]| {
        rhs_constrained(
            chart,
            lagrangian,
            cons,
            &ExtState::from_slice(m, n, nf, na, y),
        )
        .map(|d| d.to_vec())
    };
    let (times, raw) = ode::solve(f, e0.to_vec(), t0, t1, dt, method)?;
    let states: Vec<ExtState> = raw
        .iter()
        .map(|y| ExtState::from_slice(m, n, nf, na, y))
        .collect();
    let diagnostics = constrained_diagnostics(chart, lagrangian, cons, &times, &states)?;
    Ok(Trajectory {
        times,
        states,
        diagnostics,
    })
}

/// A-posteriori residual at interior nodes of
/// `ṗ + C p y = ρᵀ ∂L_c/∂x`, `d/dt(∂L_c/∂v) + p = ∂L_c/∂y`, `ẋ = ρy`, `ẏ = v`
/// and `ẏ^A = Ψ^A(x, y, ẏ^a)`, with five-node finite differences.
pub fn constrained_residual(
    chart: &Chart,
    lagrangian: &Expr,
    cons: &ConstraintSet,
    traj: &Trajectory<ExtState>,
) -> Result<Vec<f64>, DynamicsError> {
    let nodes = traj.times.len();
    if nodes < 5 {
        return Err(DynamicsError::GridTooShort { nodes });
    }
    check_grid(&traj.times)?;
    let n = chart.rank();
    let t = &traj.times;
    let xs: Vec<_> = traj.states.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<_> = traj.states.iter().map(|s| s.y.clone()).collect();
    let ps: Vec<_> = traj.states.iter().map(|s| s.p.clone()).collect();
    let pbars = traj
        .states
        .iter()
        .map(|s| constrained_pbar(chart, lagrangian, cons, s))
        .collect::<Result<Vec<_>, _>>()?;
    let phi = constraint_profile(cons, t, &traj.states)?;
    (2..nodes - 2)
        .map(|k| {
            let s = &traj.states[k];
            let cb = constrained_blocks(chart, lagrangian, cons, s)?;
            let xdot = fd::derivative(t, &xs, k, 1);
            let ydot = fd::derivative(t, &ys, k, 1);
            let pdot = fd::derivative(t, &ps, k, 1);
            let pbardot = fd::derivative(t, &pbars, k, 1);
            let adm = chart.admissibility_residual(&s.x, &s.y, &xdot)?;
            let rlx = chart.anchor_transpose_apply(&s.x, &cb.lc.lx)?;
            let cpy = chart.structure_at(&s.x)?.contract(&s.p, &s.y);
            let mut r = adm.iter().fold(phi[k], |m, v| m.max(v.abs()));
            for a in 0..n {
                r = r
                    .max((ydot[a] - cb.v[a]).abs())
                    .max((pdot[a] + cpy[a] - rlx[a]).abs())
                    .max((pbardot[a] + s.p[a] - cb.lc.ly[a]).abs());
            }
            Ok(r)
        })
        .collect()
}
