//! Small dense linear-algebra helpers.

use nalgebra::DMatrix;

/// Orthonormal basis of the column space of `m` (assumed full column rank).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    // two passes of modified Gram-Schmidt
    let mut q = m.clone();
    for _ in 0..2 {
        for j in 0..q.ncols() {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).into_owned();
                let mut col = q.column_mut(j);
                col.axpy(-proj, &qi, 1.0);
            }
            let norm = q.column(j).norm();
            if norm > 0.0 {
                q.column_mut(j).scale_mut(1.0 / norm);
            }
        }
    }
    q
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral norm; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value; zero for empty matrices.
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// `‖A|_V‖` for an orthonormal basis `V`.
pub fn restricted_norm(a: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    spectral_norm(&(a * basis))
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases of equal dimension.
pub fn subspace_distance(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    if q1.ncols() == 0 {
        return 0.0;
    }
    let residual = q1 - q2 * (q2.transpose() * q1);
    spectral_norm(&residual)
}

/// Orthonormal basis of the `k` leading left singular directions of `m`.
pub fn leading_left_singular(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let cols: Vec<_> = order[..k].iter().map(|&i| u.column(i).into_owned()).collect();
    orthonormalize(&DMatrix::from_columns(&cols))
}

/// Dominant invariant subspace of `b` of dimension `k`, by orthogonal
/// iteration from a fixed generic start. Converges when the `k`-th and
/// `(k+1)`-th eigenvalue moduli are separated.
pub fn dominant_subspace(b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = b.nrows();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let start = DMatrix::from_fn(n, k, |i, j| ((7 * i + 3 * j + 1) as f64).sin() + if i == j { 2.0 } else { 0.0 });
    let mut q = orthonormalize(&start);
    for _ in 0..SUBSPACE_MAX_ITER {
        let next = orthonormalize(&(b * &q));
        let change = subspace_distance(&next, &q);
        q = next;
        if change < 1e-15 {
            break;
        }
    }
    q
}

const SUBSPACE_MAX_ITER: usize = 100_000;

pub fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}
