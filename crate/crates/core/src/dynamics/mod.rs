//! Second-order Euler–Lagrange flow in first-order momentum form.
//!
//! The phase state is `(x, y, v, p)`; `p̄ = ∂L/∂v` is always derived. The flow is
//!
//! ```text
//! ẋ = ρ(x) y
//! ẏ = v
//! ṗ_α = ρ^i_α ∂L/∂x^i − C^γ_{αβ}(x) p_γ y^β
//! ∂²L/∂v∂v · v̇ = ∂L/∂y − p − ∂²L/∂v∂x · ẋ − ∂²L/∂v∂y · v
//! ```
//!
//! and conserves `E = p·y + (∂L/∂v)·v − L`.

mod constrained;
pub mod ode;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebroid::{check_len, AdmState, AlgebroidError, Chart};
use crate::expr::{Expr, ExprError};
use crate::fd;
use crate::geometry::{check_lagrangian, GeometryError};
use crate::linalg;

pub use constrained::{
    constrained_diagnostics, constrained_energy, constrained_pbar, constrained_residual,
    integrate_constrained, psi_vars, rhs_constrained, ConstraintSet, ExtState,
};

pub const DEFAULT_ADAPTIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("singular Hessian d2L/dv2 (reciprocal condition {rcond:.3e}); the Lagrangian is not regular here")]
    SingularHessian { rcond: f64 },
    #[error("singular bordered constraint matrix (reciprocal condition {rcond:.3e})")]
    SingularBordered { rcond: f64 },
    #[error("constraint Jacobian dPhi/dv has rank {rank}, expected {expected}")]
    RankDeficientConstraint { rank: usize, expected: usize },
    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("invalid time span: t0 = {t0}, t1 = {t1}, dt = {dt}")]
    InvalidSpan { t0: f64, t1: f64, dt: f64 },
    #[error("trajectory has {nodes} nodes; at least 5 are required")]
    GridTooShort { nodes: usize },
    #[error("time grid is not strictly increasing at node {index}")]
    NonMonotoneGrid { index: usize },
    #[error("invalid constraints: {0}")]
    Constraint(String),
}

impl From<ExprError> for DynamicsError {
    fn from(e: ExprError) -> Self {
        DynamicsError::Geometry(e.into())
    }
}

impl From<AlgebroidError> for DynamicsError {
    fn from(e: AlgebroidError) -> Self {
        DynamicsError::Geometry(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Method {
    #[default]
    Rk4,
    /// Step doubling on RK4 with a mixed absolute/relative tolerance.
    Adaptive { tol: f64 },
}

/// `(x, y, v, p)`. Also used for time derivatives, componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl MomState {
    pub fn new(x: Vec<f64>, y: Vec<f64>, v: Vec<f64>, p: Vec<f64>) -> Self {
        Self { x, y, v, p }
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self::new(vec![0.0; m], vec![0.0; n], vec![0.0; n], vec![0.0; n])
    }

    pub fn validate(&self, chart: &Chart) -> Result<(), AlgebroidError> {
        let n = chart.rank();
        check_len("x", &self.x, chart.base_dim())?;
        check_len("y", &self.y, n)?;
        check_len("v", &self.v, n)?;
        check_len("p", &self.p, n)
    }

    pub fn adm(&self) -> AdmState {
        AdmState::new(self.x.clone(), self.y.clone(), self.v.clone())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [&self.x[..], &self.y, &self.v, &self.p].concat()
    }

    pub fn from_slice(m: usize, n: usize, s: &[f64]) -> Self {
        Self {
            x: s[..m].to_vec(),
            y: s[m..m + n].to_vec(),
            v: s[m + n..m + 2 * n].to_vec(),
            p: s[m + 2 * n..m + 3 * n].to_vec(),
        }
    }
}

/// Per-node diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub energy: f64,
    /// `max(|ẋ − ρy|, |ẏ − v|)` with `ẋ, ẏ` from five-node finite differences.
    pub adm_residual: f64,
    /// Constraint residual (zero for unconstrained runs).
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub diagnostics: Vec<Diagnostics>,
}

impl<S> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn energy_drift(&self) -> f64 {
        let e0 = self.diagnostics.first().map_or(0.0, |d| d.energy);
        self.diagnostics
            .iter()
            .map(|d| (d.energy - e0).abs())
            .fold(0.0, f64::max)
    }
}

/// Value, gradient blocks and the `v`-rows of the Hessian of `L`.
#[derive(Debug, Clone)]
pub(crate) struct Blocks {
    pub value: f64,
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    pub lv: Vec<f64>,
    pub h_vx: DMatrix<f64>,
    pub h_vy: DMatrix<f64>,
    pub h_vv: DMatrix<f64>,
}

impl Blocks {
    pub fn from_full(m: usize, n: usize, value: f64, grad: &[f64], h: &DMatrix<f64>) -> Self {
        Self {
            value,
            lx: grad[..m].to_vec(),
            ly: grad[m..m + n].to_vec(),
            lv: grad[m + n..].to_vec(),
            h_vx: h.view((m + n, 0), (n, m)).into_owned(),
            h_vy: h.view((m + n, m), (n, n)).into_owned(),
            h_vv: h.view((m + n, m + n), (n, n)).into_owned(),
        }
    }
}

pub(crate) fn blocks(
    chart: &Chart,
    lagrangian: &Expr,
    s: &AdmState,
) -> Result<Blocks, DynamicsError> {
    check_lagrangian(chart, lagrangian)?;
    s.validate(chart)?;
    let d = lagrangian.derivatives(&s.point())?;
    Ok(Blocks::from_full(
        chart.base_dim(),
        chart.rank(),
        d.value,
        &d.grad,
        &d.hessian,
    ))
}

fn mat_vec(a: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(v))
        .iter()
        .copied()
        .collect()
}

/// `p = ∂L/∂y − d/dt(∂L/∂v)` along the admissible jet `(x, y, v, v̇ = a)`.
pub fn momentum_from_jet(
    chart: &Chart,
    lagrangian: &Expr,
    x: &[f64],
    y: &[f64],
    v: &[f64],
    a: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    check_len("a", a, chart.rank())?;
    let b = blocks(
        chart,
        lagrangian,
        &AdmState::new(x.to_vec(), y.to_vec(), v.to_vec()),
    )?;
    let xdot = chart.anchor_apply(x, y)?;
    let t1 = mat_vec(&b.h_vx, &xdot);
    let t2 = mat_vec(&b.h_vy, v);
    let t3 = mat_vec(&b.h_vv, a);
    Ok((0..y.len())
        .map(|k| b.ly[k] - (t1[k] + t2[k] + t3[k]))
        .collect())
}

/// `p̄ = ∂L/∂v`.
pub fn pbar(chart: &Chart, lagrangian: &Expr, s: &MomState) -> Result<Vec<f64>, DynamicsError> {
    s.validate(chart)?;
    check_lagrangian(chart, lagrangian)?;
    let g = lagrangian.grad(&s.adm().point())?;
    Ok(g[chart.base_dim() + chart.rank()..].to_vec())
}

/// Time derivative of the state under the momentum-form flow.
pub fn rhs_unconstrained(
    chart: &Chart,
    lagrangian: &Expr,
    s: &MomState,
) -> Result<MomState, DynamicsError> {
    s.validate(chart)?;
    let n = chart.rank();
    let b = blocks(chart, lagrangian, &s.adm())?;
    let xdot = chart.anchor_apply(&s.x, &s.y)?;
    let rlx = chart.anchor_transpose_apply(&s.x, &b.lx)?;
    let cpy = chart.structure_at(&s.x)?.contract(&s.p, &s.y);
    let pdot: Vec<f64> = (0..n).map(|a| rlx[a] - cpy[a]).collect();
    let t1 = mat_vec(&b.h_vx, &xdot);
    let t2 = mat_vec(&b.h_vy, &s.v);
    let rhs = DVector::from_fn(n, |a, _| b.ly[a] - s.p[a] - t1[a] - t2[a]);
    let vdot = linalg::solve_checked(&b.h_vv, &rhs)
        .map_err(|rcond| DynamicsError::SingularHessian { rcond })?;
    Ok(MomState {
        x: xdot,
        y: s.v.clone(),
        v: vdot.iter().copied().collect(),
        p: pdot,
    })
}

/// `E = p·y + (∂L/∂v)·v − L`.
pub fn energy(chart: &Chart, lagrangian: &Expr, s: &MomState) -> Result<f64, DynamicsError> {
    s.validate(chart)?;
    check_lagrangian(chart, lagrangian)?;
    let pt = s.adm().point();
    let value = lagrangian.eval(&pt)?;
    let g = lagrangian.grad(&pt)?;
    let lv = &g[chart.base_dim() + chart.rank()..];
    let py: f64 = s.p.iter().zip(&s.y).map(|(a, b)| a * b).sum();
    let lvv: f64 = lv.iter().zip(&s.v).map(|(a, b)| a * b).sum();
    Ok(py + lvv - value)
}

pub(crate) fn check_grid(times: &[f64]) -> Result<(), DynamicsError> {
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::NonMonotoneGrid { index: i + 1 });
    }
    Ok(())
}

/// `max(|ẋ − ρy|, |ẏ − v|)` at every node, derivatives from five-node stencils.
pub(crate) fn admissibility_profile(
    chart: &Chart,
    times: &[f64],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    vs: &[Vec<f64>],
) -> Result<Vec<f64>, DynamicsError> {
    if times.len() < 2 {
        return Ok(vec![0.0; times.len()]);
    }
    (0..times.len())
        .map(|k| {
            let xdot = fd::derivative(times, xs, k, 1);
            let ydot = fd::derivative(times, ys, k, 1);
            let r = chart.admissibility_residual(&xs[k], &ys[k], &xdot)?;
            let a = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let b = ydot
                .iter()
                .zip(&vs[k])
                .fold(0.0_f64, |m, (d, v)| m.max((d - v).abs()));
            Ok(a.max(b))
        })
        .collect()
}

/// Energy and admissibility diagnostics for a sampled unconstrained trajectory.
pub fn diagnostics(
    chart: &Chart,
    lagrangian: &Expr,
    times: &[f64],
    states: &[MomState],
) -> Result<Vec<Diagnostics>, DynamicsError> {
    let xs: Vec<_> = states.iter().map(|s| s.x.clone()).collect();
    let ys: Vec<_> = states.iter().map(|s| s.y.clone()).collect();
    let vs: Vec<_> = states.iter().map(|s| s.v.clone()).collect();
    let adm = admissibility_profile(chart, times, &xs, &ys, &vs)?;
    states
        .iter()
        .zip(adm)
        .map(|(s, a)| {
            Ok(Diagnostics {
                energy: energy(chart, lagrangian, s)?,
                adm_residual: a,
                constraint_residual: 0.0,
            })
        })
        .collect()
}

pub fn integrate(
    chart: &Chart,
    lagrangian: &Expr,
    s0: &MomState,
    t0: f64,
    t1: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory<MomState>, DynamicsError> {
    s0.validate(chart)?;
    check_lagrangian(chart, lagrangian)?;
    let (m, n) = (chart.base_dim(), chart.rank());
    let f = |_t: f64, y: &[f64]| {
        rhs_unconstrained(chart, lagrangian, &MomState::from_slice(m, n, y)).map(|d| d.to_vec())
    };
    let (times, raw) = ode::solve(f, s0.to_vec(), t0, t1, dt, method)?;
    let states: Vec<MomState> = raw.iter().map(|y| MomState::from_slice(m, n, y)).collect();
    let diagnostics = diagnostics(chart, lagrangian, &times, &states)?;
    Ok(Trajectory {
        times,
        states,
        diagnostics,
    })
}

/// A-posteriori residual of the momentum-form equations at every interior
/// node (two nodes trimmed at each end), time derivatives from five-node
/// finite differences. Returns one max-norm per interior node.
pub fn el_residual(
    chart: &Chart,
    lagrangian: &Expr,
    traj: &Trajectory<MomState>,
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
        .map(|s| pbar(chart, lagrangian, s))
        .collect::<Result<Vec<_>, _>>()?;
    (2..nodes - 2)
        .map(|k| {
            let s = &traj.states[k];
            let b = blocks(chart, lagrangian, &s.adm())?;
            let xdot = fd::derivative(t, &xs, k, 1);
            let ydot = fd::derivative(t, &ys, k, 1);
            let pdot = fd::derivative(t, &ps, k, 1);
            let pbardot = fd::derivative(t, &pbars, k, 1);
            let adm = chart.admissibility_residual(&s.x, &s.y, &xdot)?;
            let rlx = chart.anchor_transpose_apply(&s.x, &b.lx)?;
            let cpy = chart.structure_at(&s.x)?.contract(&s.p, &s.y);
            let mut r = adm.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for a in 0..n {
                r = r
                    .max((ydot[a] - s.v[a]).abs())
                    .max((pdot[a] + cpy[a] - rlx[a]).abs())
                    .max((pbardot[a] + s.p[a] - b.ly[a]).abs());
            }
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebroid::state_vars;
    use crate::systems;

    fn lag(chart: &Chart, text: &str) -> Expr {
        Expr::parse(text, &state_vars(chart.base_dim(), chart.rank())).unwrap()
    }

    #[test]
    fn momentum_examples() {
        let t = systems::trivial_rn(1);
        let l = lag(&t, "v1^2/2");
        assert_eq!(
            momentum_from_jet(&t, &l, &[0.0], &[0.0], &[0.0], &[-6.0]).unwrap(),
            vec![6.0]
        );
        assert_eq!(
            momentum_from_jet(&t, &l, &[0.0], &[0.0], &[0.0], &[0.0]).unwrap(),
            vec![0.0]
        );
        let s = systems::so3();
        let ls = lag(&s, "(v1^2+v2^2+v3^2)/2");
        let p = momentum_from_jet(&s, &ls, &[], &[0.3, -1.0, 2.0], &[0.0; 3], &[0.0, 0.0, 2.0])
            .unwrap();
        assert_eq!(p, vec![0.0, 0.0, -2.0]);
    }

    #[test]
    fn rhs_examples() {
        let t = systems::trivial_rn(1);
        let l = lag(&t, "v1^2/2");
        let d = rhs_unconstrained(
            &t,
            &l,
            &MomState::new(vec![0.0], vec![0.0], vec![0.0], vec![6.0]),
        )
        .unwrap();
        assert_eq!(
            d,
            MomState::new(vec![0.0], vec![0.0], vec![-6.0], vec![0.0])
        );

        let s = systems::so3();
        let ls = lag(&s, "(v1^2+v2^2+v3^2)/2");
        let d = rhs_unconstrained(&s, &ls, &MomState::zeros(0, 3)).unwrap();
        assert_eq!(d, MomState::zeros(0, 3));
        let st = MomState::new(
            vec![],
            vec![1.0, 0.0, 0.0],
            vec![0.0; 3],
            vec![0.0, 0.0, 1.0],
        );
        let d = rhs_unconstrained(&s, &ls, &st).unwrap();
        assert_eq!(d.p, vec![0.0, 1.0, 0.0]);
        assert_eq!(d.v, vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn singular_hessian_reported() {
        let t = systems::trivial_rn(2);
        let l = lag(&t, "v1^2/2");
        assert!(matches!(
            rhs_unconstrained(&t, &l, &MomState::zeros(2, 2)),
            Err(DynamicsError::SingularHessian { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let t = systems::trivial_rn(1);
        let l = lag(&t, "v1^2/2");
        assert_eq!(
            energy(
                &t,
                &l,
                &MomState::new(vec![0.0], vec![0.0], vec![0.0], vec![6.0])
            )
            .unwrap(),
            0.0
        );
        assert_eq!(
            energy(
                &t,
                &l,
                &MomState::new(vec![0.0], vec![1.0], vec![1.0], vec![0.0])
            )
            .unwrap(),
            0.5
        );
    }

    #[test]
    fn free_cubic() {
        let t = systems::trivial_rn(1);
        let l = lag(&t, "v1^2/2");
        let s0 = MomState::new(vec![0.0], vec![0.0], vec![0.0], vec![6.0]);
        let tr = integrate(&t, &l, &s0, 0.0, 1.0, 1e-3, Method::Rk4).unwrap();
        let last = tr.states.last().unwrap();
        assert_eq!(tr.len(), 1001);
        assert!((last.x[0] + 1.0).abs() < 1e-12);
        assert!((last.y[0] + 3.0).abs() < 1e-12);
        assert!((last.v[0] + 6.0).abs() < 1e-12);
        let r = el_residual(&t, &l, &tr).unwrap();
        assert!(r.iter().all(|&v| v < 1e-8));
    }

    #[test]
    fn equilibrium_is_constant() {
        let t = systems::trivial_rn(2);
        let l = lag(&t, "(v1^2+v2^2)/2");
        let tr = integrate(&t, &l, &MomState::zeros(2, 2), 0.0, 1.0, 0.1, Method::Rk4).unwrap();
        assert!(tr.states.iter().all(|s| *s == MomState::zeros(2, 2)));
        assert!(el_residual(&t, &l, &tr).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn analytic_cubic_and_perturbation() {
        let t = systems::trivial_rn(1);
        let l = lag(&t, "v1^2/2");
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        let mk = |eps: f64| Trajectory {
            times: times.clone(),
            states: times
                .iter()
                .map(|&s| {
                    MomState::new(
                        vec![-s.powi(3) + eps * s.sin()],
                        vec![-3.0 * s * s],
                        vec![-6.0 * s],
                        vec![6.0],
                    )
                })
                .collect(),
            diagnostics: vec![],
        };
        let clean = el_residual(&t, &l, &mk(0.0)).unwrap();
        assert!(
            clean.iter().all(|&r| r < 1e-10),
            "{:?}",
            clean.iter().cloned().fold(0.0, f64::max)
        );
        let dirty = el_residual(&t, &l, &mk(1e-3)).unwrap();
        assert!(dirty.iter().cloned().fold(0.0, f64::max) > 1e-4);
    }

    #[test]
    fn grid_too_short() {
        let t = systems::trivial_rn(1);
        let l = lag(&t, "v1^2/2");
        let tr = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![MomState::zeros(1, 1); 2],
            diagnostics: vec![],
        };
        assert!(matches!(
            el_residual(&t, &l, &tr),
            Err(DynamicsError::GridTooShort { nodes: 2 })
        ));
    }

    #[test]
    fn adaptive_matches_fixed() {
        let s = systems::so3();
        let l = lag(&s, "(v1^2+2*v2^2+3*v3^2)/2");
        let s0 = MomState::new(
            vec![],
            vec![0.3, -0.2, 0.5],
            vec![0.1, 0.0, -0.1],
            vec![0.2, 0.4, -0.3],
        );
        let a = integrate(
            &s,
            &l,
            &s0,
            0.0,
            2.0,
            0.05,
            Method::Adaptive {
                tol: DEFAULT_ADAPTIVE_TOL,
            },
        )
        .unwrap();
        let b = integrate(&s, &l, &s0, 0.0, 2.0, 1e-3, Method::Rk4).unwrap();
        let (sa, sb) = (
            a.states.last().unwrap().to_vec(),
            b.states.last().unwrap().to_vec(),
        );
        for (u, w) in sa.iter().zip(&sb) {
            assert!((u - w).abs() < 1e-8);
        }
        assert_eq!(*a.times.last().unwrap(), 2.0);
    }
}
