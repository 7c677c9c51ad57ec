//! Finite-difference stencils on arbitrary grids.

/// Weights `w` with `f^(order)(z) ≈ Σ w_k f(xs[k])`, by Fornberg's recursion.
pub fn weights(z: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(
        n > order,
        "stencil of {n} nodes cannot resolve derivative {order}"
    );
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Index window of `width` nodes centred on `k` (shifted inward at the ends).
pub fn window(len: usize, k: usize, width: usize) -> std::ops::Range<usize> {
    let width = width.min(len);
    let start = k.saturating_sub(width / 2).min(len - width);
    start..start + width
}

/// Derivative of a sampled vector-valued signal at node `k` from a five-node stencil.
pub fn derivative(times: &[f64], values: &[Vec<f64>], k: usize, order: usize) -> Vec<f64> {
    let w = window(times.len(), k, 5);
    let c = weights(times[k], &times[w.clone()], order);
    let dim = values[k].len();
    let mut out = vec![0.0; dim];
    for (ck, j) in c.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(&values[j]) {
            *o += ck * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_five_point() {
        let w = weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let w2 = weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let expect2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w2.iter().zip(expect2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_on_quartics_nonuniform() {
        let xs = [0.0, 0.1, 0.25, 0.3, 0.45];
        let f = |t: f64| t.powi(4) - 2.0 * t.powi(3) + t;
        let df = |t: f64| 4.0 * t.powi(3) - 6.0 * t.powi(2) + 1.0;
        let w = weights(0.25, &xs, 1);
        let approx: f64 = w.iter().zip(xs).map(|(w, x)| w * f(x)).sum();
        assert!((approx - df(0.25)).abs() < 1e-10);
    }

    #[test]
    fn windows_clamp() {
        assert_eq!(window(10, 0, 5), 0..5);
        assert_eq!(window(10, 5, 5), 3..8);
        assert_eq!(window(10, 9, 5), 5..10);
    }
}
