//! Two-component principal-component projection.

use nalgebra::{DMatrix, SymmetricEigen};

/// Project rows onto their two leading principal axes. Each axis is signed
/// so that its largest-magnitude loading is positive, which keeps output
/// stable across platforms. Missing axes (fewer than two dimensions or
/// rows) project to zero.
pub fn project_2d(rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return vec![[0.0; 2]; n];
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Option<Vec<f64>>> = order
        .iter()
        .take(2)
        .map(|&k| {
            if eig.eigenvalues[k] <= 1e-12 {
                return None;
            }
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            Some(v)
        })
        .collect();
    (0..n)
        .map(|i| {
            let mut out = [0.0; 2];
            for (slot, axis) in out.iter_mut().zip(&axes) {
                if let Some(a) = axis {
                    *slot = centered.row(i).iter().zip(a).map(|(x, w)| x * w).sum();
                }
            }
            out
        })
        .collect()
}
