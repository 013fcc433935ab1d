use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves `min_X Σ_n w_n ||a_n X − b_n||² + λ||X||²` for row-major `a` (`n × p`)
/// and `b` (`n × q`); returns `X` as a row-major `p × q` vector.
pub(crate) fn weighted_ridge(
    a: &[f64],
    b: &[f64],
    weights: Option<&[f64]>,
    n: usize,
    p: usize,
    q: usize,
    lambda: f64,
) -> Result<Vec<f64>> {
    let mut ata = DMatrix::<f64>::zeros(p, p);
    let mut atb = DMatrix::<f64>::zeros(p, q);
    for r in 0..n {
        let w = weights.map_or(1.0, |w| w[r]);
        if w == 0.0 {
            continue;
        }
        let ar = &a[r * p..(r + 1) * p];
        let br = &b[r * q..(r + 1) * q];
        for i in 0..p {
            let wa = w * ar[i];
            for j in 0..p {
                ata[(i, j)] += wa * ar[j];
            }
            for j in 0..q {
                atb[(i, j)] += wa * br[j];
            }
        }
    }
    for i in 0..p {
        ata[(i, i)] += lambda;
    }
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Fitting("normal equations are not positive definite; increase the ridge term".into()))?;
    let x = chol.solve(&atb);
    Ok((0..p).flat_map(|i| (0..q).map(move |j| (i, j))).map(|(i, j)| x[(i, j)]).collect())
}

/// Sample covariance of `rows` (each of length `d`), row-major `d × d`.
pub(crate) fn covariance(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += di * (r[j] - mean[j]) / n;
            }
        }
    }
    cov
}

/// Upper-triangular `U` with `UᵀU = cov + εI`, row-major. A row vector `c`
/// with identity covariance maps to `c·U` with covariance `cov`.
pub(crate) fn covariance_factor(cov: &[f64], d: usize) -> Result<Vec<f64>> {
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let eps = 1e-9 * (trace / d as f64).max(1e-12);
    let mut m = DMatrix::from_row_slice(d, d, cov);
    for i in 0..d {
        m[(i, i)] += eps;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Fitting("residual covariance is not positive definite".into()))?;
    let l = chol.l();
    Ok((0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(j, i)]).collect())
}

/// The `k` leading eigenvectors of a symmetric matrix as rows, largest
/// eigenvalue first, each signed so its largest-magnitude entry is positive.
pub(crate) fn leading_eigenvectors(sym: &[f64], d: usize, k: usize) -> Vec<Vec<f64>> {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, sym));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(k)
        .map(|c| {
            let mut v: Vec<f64> = (0..d).map(|r| eig.eigenvectors[(r, c)]).collect();
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect()
}
