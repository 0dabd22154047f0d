//! Principal-component projection for 2-D plot data.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// One row of `dim` coordinates per input vector.
    pub coords: Vec<Vec<f64>>,
    /// Variance along each kept component, descending.
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
    /// Unit principal axes, one per kept component.
    pub components: Vec<Vec<f64>>,
}

impl Projection {
    pub fn dim(&self) -> usize {
        self.components.len()
    }
}

/// Components whose variance falls below this fraction of the largest are
/// treated as degenerate.
const DEGENERATE_TOL: f64 = 1e-12;

/// Mean-centred projection onto the top `out_dim` principal components. If
/// the covariance has fewer usable directions, fewer components are kept
/// and a warning is logged.
pub fn pca_project(vectors: &[Vec<f64>], out_dim: usize) -> Result<Projection> {
    let n = vectors.len();
    let d = vectors.first().map_or(0, Vec::len);
    if n < 2 || d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(Error::dim("PCA needs at least two vectors of equal, non-zero length"));
    }
    if out_dim == 0 {
        return Err(Error::config("out_dim must be >= 1"));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    // Eigen-decompose the smaller Gram matrix when vectors outnumber samples.
    let (vals, axes) = if d <= n {
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        let e = SymmetricEigen::new(cov);
        (e.eigenvalues, e.eigenvectors)
    } else {
        let gram = &centered * centered.transpose() / (n - 1) as f64;
        let e = SymmetricEigen::new(gram);
        let mut axes = centered.transpose() * &e.eigenvectors;
        for mut c in axes.column_iter_mut() {
            let nrm = c.norm();
            if nrm > 0.0 {
                c /= nrm;
            }
        }
        (e.eigenvalues, axes)
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let top = vals[order[0]].max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .take(out_dim)
        .filter(|&i| top > 0.0 && vals[i] > DEGENERATE_TOL * top)
        .collect();
    if kept.len() < out_dim {
        log::warn!("degenerate covariance: keeping {} of {out_dim} components", kept.len());
    }
    let components: Vec<Vec<f64>> = kept
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = axes.column(i).iter().copied().collect();
            // Fix the sign so the largest-magnitude entry is positive.
            let big = c.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if big < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            c
        })
        .collect();
    let coords = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().zip(centered.row(i).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coords,
        explained_variance: kept.iter().map(|&i| vals[i]).collect(),
        mean,
        components,
    })
}
