use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct Embedding {
    /// `M × dims` coordinates, centered at the origin.
    pub coords: DMatrix<f64>,
    /// The kept eigenvalues of the double-centered Gram matrix, before
    /// clamping, largest first.
    pub eigenvalues: DVector<f64>,
    /// Fewer than `dims` eigenvalues were positive; the missing axes are zero.
    pub degenerate: bool,
}

/// Classical MDS of a symmetric distance matrix.
pub fn mds_embed(distances: &DMatrix<f64>, dims: usize) -> Result<Embedding> {
    let m = distances.nrows();
    if distances.ncols() != m {
        return Err(Error::domain("distances", "matrix must be square"));
    }
    if !(dims == 2 || dims == 3) {
        return Err(Error::domain("dims", format!("{dims} must be 2 or 3")));
    }
    if m < dims {
        return Err(Error::domain("distances", format!("{m} points cannot span {dims} dimensions")));
    }
    if distances.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("distances", "entries must be finite"));
    }
    let asym = (distances - distances.transpose()).amax();
    if asym > 1e-9 * distances.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::domain("distances", format!("matrix is not symmetric (max gap {asym})")));
    }

    let sq = distances.map(|d| d * d);
    let row_means = sq.column_mean();
    let grand = row_means.mean();
    let gram = DMatrix::from_fn(m, m, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));

    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order.truncate(dims);

    let largest = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let eigenvalues = eig.eigenvalues.select_rows(&order);
    let degenerate = eigenvalues.iter().any(|&v| v <= 1e-12 * largest);
    let mut coords = eig.eigenvectors.select_columns(&order);
    for (k, mut col) in coords.column_iter_mut().enumerate() {
        col *= eigenvalues[k].max(0.0).sqrt();
    }
    // remove the residual mean left by rounding
    let mean = coords.row_mean();
    for mut row in coords.row_iter_mut() {
        row -= &mean;
    }
    Ok(Embedding { coords, eigenvalues, degenerate })
}

/// Pairwise Euclidean distances between the rows of `points`.
pub fn pairwise_distances(points: &DMatrix<f64>) -> DMatrix<f64> {
    let m = points.nrows();
    DMatrix::from_fn(m, m, |i, j| (points.row(i) - points.row(j)).norm())
}
