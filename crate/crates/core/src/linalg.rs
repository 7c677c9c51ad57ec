//! Small dense helpers on nalgebra matrices. Singular value decompositions
//! are delegated to faer.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Reciprocal condition number below which a solve is declared singular.
pub const RCOND_MIN: f64 = 1e-12;

/// Full SVD `a = U Σ Vᵀ`: singular values in nonincreasing order, `U` is
/// `r × r` and `V` is `c × c`.
struct FullSvd {
    s: Vec<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

fn full_svd(a: &DMatrix<f64>) -> FullSvd {
    let (r, c) = a.shape();
    let m = faer::Mat::<f64>::from_fn(r, c, |i, j| a[(i, j)]);
    let svd = m.svd().expect("SVD converges");
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    FullSvd {
        s: (0..r.min(c)).map(|k| s[k]).collect(),
        u: DMatrix::from_fn(r, r, |i, j| u[(i, j)]),
        v: DMatrix::from_fn(c, c, |i, j| v[(i, j)]),
    }
}

fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    full_svd(a).s
}

/// Number of singular values above `rtol·σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rtol * smax).count()
}

/// Orthonormal basis (columns) of the null space of `a`.
pub fn null_space(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let c = a.ncols();
    if a.nrows() == 0 || c == 0 {
        return DMatrix::identity(c, c);
    }
    let svd = full_svd(a);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let s = |k: usize| svd.s.get(k).copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..c)
        .filter(|&k| smax == 0.0 || s(k) <= rtol * smax)
        .collect();
    DMatrix::from_fn(c, keep.len(), |i, j| svd.v[(i, keep[j])])
}

/// Orthonormal basis (columns) of the column space of `a`.
pub fn range_basis(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    range_basis_scaled(a, rtol, 0.0)
}

/// Like [`range_basis`], with singular values compared against
/// `rtol·max(σ_max, scale)`.
pub fn range_basis_scaled(a: &DMatrix<f64>, rtol: f64, scale: f64) -> DMatrix<f64> {
    let r = a.nrows();
    if r == 0 || a.ncols() == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = full_svd(a);
    let smax = svd.s.iter().copied().fold(scale, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(r, 0);
    }
    let keep: Vec<usize> = (0..svd.s.len())
        .filter(|&k| svd.s[k] > rtol * smax)
        .collect();
    DMatrix::from_fn(r, keep.len(), |i, j| svd.u[(i, keep[j])])
}

/// Minimum-norm least-squares solution and the residual norm of `a x = b`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.norm());
    }
    if a.nrows() == 0 {
        return (DVector::zeros(a.ncols()), 0.0);
    }
    let svd = full_svd(a);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let mut x = DVector::zeros(a.ncols());
    for (k, &sk) in svd.s.iter().enumerate() {
        if sk > rtol * smax {
            let coef = svd.u.column(k).dot(b) / sk;
            x += svd.v.column(k) * coef;
        }
    }
    let res = (a * &x - b).norm();
    (x, res)
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `a x = b` by LU with partial pivoting. Fails with the reciprocal
/// 1-norm condition number when it is below [`RCOND_MIN`].
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let lu = a.clone().lu();
    let inv = match lu.try_inverse() {
        Some(inv) => inv,
        None => return Err(0.0),
    };
    let anorm = norm1(a);
    let rcond = if anorm == 0.0 {
        0.0
    } else {
        1.0 / (anorm * norm1(&inv))
    };
    if !(rcond >= RCOND_MIN) {
        return Err(if rcond.is_finite() { rcond } else { 0.0 });
    }
    lu.solve(b).ok_or(0.0)
}

/// Largest principal angle (radians) between the spans of two matrices with
/// orthonormal columns. Spans of different dimension give `π/2`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let proj = b - a * (a.transpose() * b);
    singular_values(&proj)
        .into_iter()
        .fold(0.0, f64::max)
        .min(1.0)
        .asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_null_space() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(numerical_rank(&a, RANK_RTOL), 2);
        let n = null_space(&a, RANK_RTOL);
        assert_eq!(n.ncols(), 1);
        assert!((n[(2, 0)].abs() - 1.0).abs() < 1e-14);
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 2), RANK_RTOL), 0);
        assert_eq!(null_space(&DMatrix::zeros(0, 3), RANK_RTOL).ncols(), 3);
    }

    #[test]
    fn solve_reports_singularity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve_checked(&a, &DVector::from_vec(vec![1.0, 1.0])).is_err());
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = solve_checked(&b, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn principal_angles() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(max_principal_angle(&e1, &e1), 0.0);
        assert!((max_principal_angle(&e1, &e2) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn least_squares_consistency() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let (x, r) = least_squares(&a, &DVector::from_vec(vec![2.0, 2.0]), RANK_RTOL);
        assert!((x[0] - 2.0).abs() < 1e-14 && r < 1e-14);
        let (_, r) = least_squares(&a, &DVector::from_vec(vec![1.0, -1.0]), RANK_RTOL);
        assert!(r > 1.0);
    }
}
