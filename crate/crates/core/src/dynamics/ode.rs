//! Classical RK4 with an optional step-doubling controller.

use super::{DynamicsError, Method};

/// Node count of a fixed grid: `round(r)` when `r` is within 1e-9 of an
/// integer, `ceil(r)` otherwise.
pub fn fixed_step_count(t0: f64, t1: f64, dt: f64) -> usize {
    let r = (t1 - t0) / dt;
    let nearest = r.round();
    let steps = if (r - nearest).abs() < 1e-9 {
        nearest
    } else {
        r.ceil()
    };
    (steps as usize).max(1)
}

pub fn check_span(t0: f64, t1: f64, dt: f64) -> Result<(), DynamicsError> {
    if !(t0.is_finite() && t1.is_finite() && dt.is_finite() && dt > 0.0 && t1 > t0) {
        return Err(DynamicsError::InvalidSpan { t0, t1, dt });
    }
    Ok(())
}

fn rk4_step<F>(f: &F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, DynamicsError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, DynamicsError>,
{
    let axpy =
        |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(h, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn finite_or(step: usize, t: f64, y: Vec<f64>) -> Result<Vec<f64>, DynamicsError> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(y)
    } else {
        Err(DynamicsError::NonFinite { step, t })
    }
}

/// Integrates `y' = f(t, y)` from `t0` to exactly `t1`; returns the grid and states.
pub fn solve<F>(
    f: F,
    y0: Vec<f64>,
    t0: f64,
    t1: f64,
    dt: f64,
    method: Method,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), DynamicsError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, DynamicsError>,
{
    check_span(t0, t1, dt)?;
    let y0 = finite_or(0, t0, y0)?;
    match method {
        Method::Rk4 => {
            let steps = fixed_step_count(t0, t1, dt);
            let mut times = Vec::with_capacity(steps + 1);
            let mut states = Vec::with_capacity(steps + 1);
            times.push(t0);
            states.push(y0);
            for k in 1..=steps {
                let t_next = if k == steps { t1 } else { t0 + k as f64 * dt };
                let t = times[k - 1];
                let y = rk4_step(&f, t, &states[k - 1], t_next - t)?;
                states.push(finite_or(k, t_next, y)?);
                times.push(t_next);
            }
            Ok((times, states))
        }
        Method::Adaptive { tol } => {
            let mut times = vec![t0];
            let mut states = vec![y0];
            let mut h = dt;
            while times[times.len() - 1] < t1 {
                let t = times[times.len() - 1];
                let y = &states[states.len() - 1];
                let last = t + h >= t1;
                let step = if last { t1 - t } else { h };
                if step <= 1e-14 * t.abs().max(1.0) {
                    return Err(DynamicsError::StepUnderflow { t });
                }
                let full = rk4_step(&f, t, y, step)?;
                let mid = rk4_step(&f, t, y, 0.5 * step)?;
                let twice = rk4_step(&f, t + 0.5 * step, &mid, 0.5 * step)?;
                let err = full
                    .iter()
                    .zip(&twice)
                    .map(|(a, b)| (a - b).abs() / (15.0 * b.abs().max(1.0)))
                    .fold(0.0, f64::max);
                if !err.is_finite() {
                    return Err(DynamicsError::NonFinite {
                        step: times.len(),
                        t: t + step,
                    });
                }
                let factor = if err == 0.0 {
                    2.0
                } else {
                    (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0)
                };
                if err <= tol {
                    times.push(if last { t1 } else { t + step });
                    states.push(finite_or(times.len() - 1, t + step, twice)?);
                }
                h = step * factor;
            }
            Ok((times, states))
        }
    }
}
