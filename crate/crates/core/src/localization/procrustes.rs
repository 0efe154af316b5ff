use nalgebra::{DMatrix, Matrix2, RowVector2, Vector2};

use crate::{Error, Result};

/// `p ↦ scale · rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Orthogonal; a reflection when `reflected` is set.
    pub rotation: Matrix2<f64>,
    pub translation: Vector2<f64>,
    pub scale: f64,
    pub reflected: bool,
    /// The target anchors were close to collinear, so the fit is fragile.
    pub near_collinear: bool,
}

impl Similarity {
    pub fn identity() -> Self {
        Similarity {
            rotation: Matrix2::identity(),
            translation: Vector2::zeros(),
            scale: 1.0,
            reflected: false,
            near_collinear: false,
        }
    }

    pub fn apply_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Applies the transform to each row of an `n × 2` matrix.
    pub fn apply(&self, points: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = points.clone();
        for mut row in out.row_iter_mut() {
            let q = self.apply_point(Vector2::new(row[0], row[1]));
            row.copy_from(&RowVector2::new(q.x, q.y));
        }
        out
    }

    /// Sum of squared residuals between transformed `relative` and `target`.
    pub fn objective(&self, relative: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
        (self.apply(relative) - target).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reflection {
    /// Reflect only when it strictly lowers the objective.
    Allow,
    Forbid,
}

pub fn procrustes_align(relative: &DMatrix<f64>, anchors_true: &DMatrix<f64>) -> Result<Similarity> {
    procrustes_align_with(relative, anchors_true, Reflection::Allow)
}

/// Least-squares similarity transform taking `relative` onto `anchors_true`
/// (both `k × 2`, rows paired).
pub fn procrustes_align_with(
    relative: &DMatrix<f64>,
    anchors_true: &DMatrix<f64>,
    reflection: Reflection,
) -> Result<Similarity> {
    let k = relative.nrows();
    if relative.ncols() != 2 || anchors_true.shape() != (k, 2) {
        return Err(Error::domain("anchors", "relative and true anchor sets must both be k x 2"));
    }
    if k < 3 {
        return Err(Error::domain("anchors", format!("need at least 3 anchors, got {k}")));
    }
    if relative.iter().chain(anchors_true.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("anchors", "coordinates must be finite"));
    }
    let mean_x = relative.row_mean();
    let mean_y = anchors_true.row_mean();
    let xc = DMatrix::from_fn(k, 2, |i, j| relative[(i, j)] - mean_x[j]);
    let yc = DMatrix::from_fn(k, 2, |i, j| anchors_true[(i, j)] - mean_y[j]);
    let var_x = xc.norm_squared();
    let magnitude = relative.amax().max(f64::MIN_POSITIVE);
    if var_x <= (f64::EPSILON * magnitude).powi(2) * k as f64 {
        return Err(Error::domain("relative", "relative coordinates have zero variance"));
    }

    let spread = yc.clone().svd(false, false).singular_values;
    let near_collinear = spread.min() < 1e-6 * spread.max();
    if near_collinear {
        log::warn!("anchors are nearly collinear; alignment is ill-conditioned");
    }

    let cov: Matrix2<f64> = Matrix2::from_iterator((yc.transpose() * &xc).iter().copied());
    let svd = cov.svd(true, true);
    let (u, vt, s) = (svd.u.unwrap(), svd.v_t.unwrap(), svd.singular_values);
    let weakest = if s[0] <= s[1] { 0 } else { 1 };
    let proper = (u * vt).determinant() > 0.0;

    let candidate = |flip: bool| {
        let mut d = Matrix2::identity();
        if flip {
            d[(weakest, weakest)] = -1.0;
        }
        let rotation = u * d * vt;
        let trace = s[0] * d[(0, 0)] + s[1] * d[(1, 1)];
        let scale = trace / var_x;
        let centroid_x = Vector2::new(mean_x[0], mean_x[1]);
        let centroid_y = Vector2::new(mean_y[0], mean_y[1]);
        let sim = Similarity {
            rotation,
            translation: centroid_y - rotation * centroid_x * scale,
            scale,
            reflected: rotation.determinant() < 0.0,
            near_collinear,
        };
        let objective = yc.norm_squared() - trace * trace / var_x;
        (sim, objective)
    };

    // `u·vt` is the best orthogonal map; flipping the weakest axis gives
    // the best map of the opposite handedness.
    let (best, best_obj) = candidate(false);
    let (other, other_obj) = candidate(true);
    let (rot, rot_obj, refl, refl_obj) =
        if proper { (best, best_obj, other, other_obj) } else { (other, other_obj, best, best_obj) };
    Ok(match reflection {
        Reflection::Allow if refl_obj < rot_obj => refl,
        _ => rot,
    })
}
