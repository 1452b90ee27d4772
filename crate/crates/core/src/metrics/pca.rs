//! Two-component PCA by power iteration with deflation.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{input, Result};

pub const POWER_TOL: f64 = 1e-9;
pub const POWER_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    /// Centered data projected on the two components, `N x 2`.
    pub projection: Array2<f64>,
    pub components: [Array1<f64>; 2],
    /// Covariance eigenvalues (unbiased, `N - 1` denominator).
    pub eigenvalues: [f64; 2],
}

fn fix_sign(v: &mut Array1<f64>) {
    let idx = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
    if v[idx] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Unit vector orthogonal to all of `basis`, built from the standard axis
/// least aligned with them.
fn orthogonal_to(basis: &[&Array1<f64>], d: usize) -> Array1<f64> {
    let axis = (0..d)
        .min_by(|&a, &b| {
            let wa: f64 = basis.iter().map(|v| v[a].abs()).sum();
            let wb: f64 = basis.iter().map(|v| v[b].abs()).sum();
            wa.total_cmp(&wb)
        })
        .unwrap_or(0);
    let mut e = Array1::zeros(d);
    e[axis] = 1.0;
    for v in basis {
        let p = e.dot(*v);
        e.scaled_add(-p, *v);
    }
    let n = e.dot(&e).sqrt();
    e / n
}

/// Dominant eigenpair of a symmetric positive semi-definite matrix.
fn power_iteration(c: &Array2<f64>, exclude: &[&Array1<f64>]) -> (f64, Array1<f64>) {
    let d = c.nrows();
    // start from the row with the largest norm; it has a component along the
    // dominant eigenvector whenever the matrix is non-zero
    let start =
        c.axis_iter(Axis(0))
            .map(|r| r.dot(&r))
            .enumerate()
            .fold((0, -1.0), |best, (i, n)| if n > best.1 { (i, n) } else { best });
    if start.1 <= f64::MIN_POSITIVE {
        return (0.0, orthogonal_to(exclude, d));
    }
    let mut v = c.row(start.0).to_owned();
    v /= start.1.sqrt();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = c.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm <= f64::MIN_POSITIVE {
            return (0.0, orthogonal_to(exclude, d));
        }
        let next = w / norm;
        lambda = next.dot(&c.dot(&next));
        let delta = (&next - &v).mapv(|x| x * x).sum().sqrt();
        v = next;
        if delta < POWER_TOL {
            break;
        }
    }
    (lambda, v)
}

pub fn pca2(x: ArrayView2<f64>) -> Result<Pca2> {
    let (n, d) = x.dim();
    if d < 2 {
        return input(format!("PCA to 2-D needs at least 2 dimensions, got {d}"));
    }
    if n < 2 {
        return input("PCA needs at least 2 samples");
    }
    if x.iter().any(|v| !v.is_finite()) {
        return input("non-finite sample");
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);

    let (l1, mut v1) = power_iteration(&cov, &[]);
    fix_sign(&mut v1);
    let deflated = &cov - &(l1 * outer(&v1, &v1));
    let (l2, mut v2) = power_iteration(&deflated, &[&v1]);
    // re-orthogonalize against round-off before fixing the sign
    let p = v2.dot(&v1);
    v2.scaled_add(-p, &v1);
    let norm = v2.dot(&v2).sqrt();
    v2 /= norm;
    fix_sign(&mut v2);

    let mut projection = Array2::zeros((n, 2));
    projection.column_mut(0).assign(&centered.dot(&v1));
    projection.column_mut(1).assign(&centered.dot(&v2));
    Ok(Pca2 { projection, components: [v1, v2], eigenvalues: [l1, l2.max(0.0)] })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
