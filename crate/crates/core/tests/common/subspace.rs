//! Brute-force model of the constraint algorithm: subspaces are kept as
//! reduced row-echelon equation systems and the base projection is found by
//! eliminating the fiber columns first.

use algebroid_mech::stabilize::{stabilize, LinearImplicitSystem};
use nalgebra::{DMatrix, DVector};

pub const PIVOT: f64 = 1e-9;

/// RREF of `[A | b]` with zero rows dropped. `None` if inconsistent.
pub fn rref(aug: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut a = aug.clone();
    let (rows, cols) = a.shape();
    let vars = cols - 1;
    let mut r = 0;
    for c in 0..vars {
        if r == rows {
            break;
        }
        let (piv, val) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((r, 0.0), |b, x| if x.1 > b.1 { x } else { b });
        if val < PIVOT {
            continue;
        }
        a.swap_rows(r, piv);
        let p = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        a[(i, j)] -= f * a[(r, j)];
                    }
                }
            }
        }
        r += 1;
    }
    if (r..rows).any(|i| a[(i, vars)].abs() > PIVOT) {
        return None;
    }
    Some(a.rows(0, r).into_owned())
}

/// Oracle iteration on equations over `(x, y)`; returns the final equations
/// and the dimension history.
pub fn oracle(
    m: usize,
    n: usize,
    anchor: &DMatrix<f64>,
    eq: &DMatrix<f64>,
) -> (Option<DMatrix<f64>>, Vec<Option<usize>>) {
    let dim = m + n;
    let mut cur = match rref(eq) {
        Some(e) => e,
        None => return (None, vec![None]),
    };
    let mut hist = vec![Some(dim - cur.nrows())];
    for _ in 0..dim + 2 {
        // reorder columns to (y, x, b) so elimination clears fiber columns first
        let lin = cur.columns(0, dim).into_owned();
        let mut reordered = DMatrix::zeros(lin.nrows(), dim + 1);
        for i in 0..lin.nrows() {
            for a in 0..n {
                reordered[(i, a)] = lin[(i, m + a)];
            }
            for k in 0..m {
                reordered[(i, n + k)] = lin[(i, k)];
            }
        }
        let red = rref(&reordered).expect("homogeneous");
        let normals: Vec<DVector<f64>> = (0..red.nrows())
            .filter(|&i| (0..n).all(|a| red[(i, a)].abs() < PIVOT))
            .map(|i| DVector::from_fn(m, |k, _| red[(i, n + k)]))
            .collect();
        let mut next = DMatrix::zeros(cur.nrows() + normals.len(), dim + 1);
        next.view_mut((0, 0), cur.shape()).copy_from(&cur);
        for (j, w) in normals.iter().enumerate() {
            let row = w.transpose() * anchor;
            for a in 0..n {
                next[(cur.nrows() + j, m + a)] = row[a];
            }
        }
        let Some(next) = rref(&next) else {
            hist.push(None);
            return (None, hist);
        };
        let same = next.nrows() == cur.nrows();
        hist.push(Some(dim - next.nrows()));
        cur = next;
        if same {
            break;
        }
    }
    (Some(cur), hist)
}

/// Direction basis and one particular solution of RREF equations.
pub fn solution_set(eq: &DMatrix<f64>, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let pivots: Vec<usize> = (0..eq.nrows())
        .map(|i| (0..dim).find(|&c| eq[(i, c)].abs() > PIVOT).unwrap())
        .collect();
    let free: Vec<usize> = (0..dim).filter(|c| !pivots.contains(c)).collect();
    let mut particular = DVector::zeros(dim);
    for (i, &p) in pivots.iter().enumerate() {
        particular[p] = eq[(i, dim)];
    }
    let mut basis = DMatrix::zeros(dim, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = 1.0;
        for (i, &p) in pivots.iter().enumerate() {
            basis[(p, k)] = -eq[(i, f)];
        }
    }
    (basis, particular)
}

fn orthonormal(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return a.clone();
    }
    a.clone().qr().q().columns(0, a.ncols()).into_owned()
}

/// `sin` of the largest principal angle between column spans of equal rank.
pub fn sin_max_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 && b.ncols() == 0 {
        return 0.0;
    }
    let (qa, qb) = (orthonormal(a), orthonormal(b));
    let resid = &qb - &qa * (qa.transpose() * &qb);
    resid.svd(false, false).singular_values.max()
}

/// Largest disagreement between engine and oracle: principal-angle sines
/// both ways, offset distance and the engine certificate. Structural
/// mismatches (history, dimension, emptiness) are errors.
pub fn compare_instance(
    m: usize,
    n: usize,
    anchor: &DMatrix<f64>,
    eq: &DMatrix<f64>,
) -> Result<f64, String> {
    let dim = m + n;
    let sys =
        LinearImplicitSystem::from_augmented(anchor.clone(), eq).map_err(|e| e.to_string())?;
    let report = stabilize(&sys);
    let (final_eq, hist) = oracle(m, n, anchor, eq);
    let context = || {
        format!(
            "engine {:?} oracle {:?} R {anchor} eq {eq}",
            report.history, hist
        )
    };
    if report.history.last() != hist.last() || (hist[0].is_some() && report.history != hist) {
        return Err(context());
    }
    let Some(final_eq) = final_eq else {
        return if report.s_inf.is_empty() {
            Ok(0.0)
        } else {
            Err(context())
        };
    };
    let (basis, particular) = solution_set(&final_eq, dim);
    if report.s_inf.dim() != Some(basis.ncols()) {
        return Err(context());
    }
    Ok([
        sin_max_angle(&basis, report.s_inf.basis()),
        sin_max_angle(report.s_inf.basis(), &basis),
        report.s_inf.distance(&particular),
        report.certificate(&sys),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

pub fn check_instance(m: usize, n: usize, anchor: DMatrix<f64>, eq: DMatrix<f64>) {
    let worst = compare_instance(m, n, &anchor, &eq).unwrap();
    assert!(
        worst < 1e-10,
        "disagreement {worst:e} for R {anchor} eq {eq}"
    );
}
