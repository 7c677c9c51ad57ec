//! Shared generators for the integration suites.

#![allow(dead_code)]

pub mod subspace;

use rand::Rng;

/// Random smooth expression over `vars`, finite on `[-1, 1]^k` and of
/// moderate size there.
pub fn random_expr<R: Rng>(rng: &mut R, vars: &[String], depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.7) {
            vars[rng.random_range(0..vars.len())].clone()
        } else {
            format!("{:.3}", rng.random_range(-1.5..1.5))
        };
    }
    let a = random_expr(rng, vars, depth - 1);
    match rng.random_range(0..12) {
        0 => format!("({a}) + ({})", random_expr(rng, vars, depth - 1)),
        1 => format!("({a}) - ({})", random_expr(rng, vars, depth - 1)),
        2 | 3 => format!("({a}) * ({})", random_expr(rng, vars, depth - 1)),
        4 => format!("({a}) / (2 + cos({}))", random_expr(rng, vars, depth - 1)),
        5 => format!("sin({a})"),
        6 => format!("cos({a})"),
        7 => format!("tanh({a})"),
        8 => format!("exp(tanh({a}))"),
        9 => format!("sqrt(1 + ({a})^2)"),
        10 => format!("log(2 + sin({a}))"),
        _ => format!("({a})^{}", rng.random_range(2..=3)),
    }
}

pub fn point<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Worst relative deviation of the AD gradient and Hessian from
/// fourth-order central differences of values, scaled by
/// `max(1, |f|, |∇f|, |H|)`.
pub fn ad_vs_fd(e: &algebroid_mech::expr::Expr, x: &[f64]) -> f64 {
    const W1: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    const W2: [(f64, f64); 5] = [
        (-2.0, -1.0),
        (-1.0, 16.0),
        (0.0, -30.0),
        (1.0, 16.0),
        (2.0, -1.0),
    ];
    let d = e.derivatives(x).unwrap();
    let k = x.len();
    let scale = d
        .grad
        .iter()
        .chain(d.hessian.iter())
        .fold(d.value.abs().max(1.0), |m, v| m.max(v.abs()));
    let h = 1e-3;
    let at = |shifts: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in shifts {
            p[i] += s * h;
        }
        e.eval(&p).unwrap()
    };
    let mut worst: f64 = 0.0;
    for i in 0..k {
        let g: f64 = W1.iter().map(|&(s, w)| w * at(&[(i, s)])).sum::<f64>() / (12.0 * h);
        worst = worst.max((g - d.grad[i]).abs() / scale);
        for j in 0..k {
            let hij = if i == j {
                W2.iter().map(|&(s, w)| w * at(&[(i, s)])).sum::<f64>() / (12.0 * h * h)
            } else {
                let mut acc = 0.0;
                for &(si, wi) in &W1 {
                    for &(sj, wj) in &W1 {
                        acc += wi * wj * at(&[(i, si), (j, sj)]);
                    }
                }
                acc / (144.0 * h * h)
            };
            worst = worst.max((hij - d.hessian[(i, j)]).abs() / scale);
        }
    }
    worst
}
