use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Alignment applied to the estimate before measuring errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    None,
    /// Rotation and translation.
    Se3,
    /// Rotation, translation and scale.
    #[default]
    Sim3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub ape_rmse: f64,
    /// Per-pose translational error after alignment.
    pub errors: Vec<f64>,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

/// Least-squares similarity (Umeyama) mapping `src` onto `dst`.
fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> (Matrix3<f64>, Vector3<f64>, f64) {
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (a, b) = (s - mu_s, d - mu_d);
        cov += b * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    let scale = if with_scale && var_s > 0.0 {
        (Matrix3::from_diagonal(&svd.singular_values) * s).trace() / var_s
    } else {
        1.0
    };
    let t = mu_d - scale * r * mu_s;
    (r, t, scale)
}

/// Absolute pose error of estimated positions against ground truth.
pub fn compute_ape(gt: &[[f64; 3]], est: &[[f64; 3]], mode: AlignMode) -> Result<TrajectoryError> {
    if gt.len() != est.len() {
        return Err(Error::InvalidArgument(format!(
            "{} ground-truth poses but {} estimated",
            gt.len(),
            est.len()
        )));
    }
    if gt.len() < 3 {
        return Err(Error::InvalidArgument("APE needs at least 3 poses".into()));
    }
    let g: Vec<Vector3<f64>> = gt.iter().map(|p| Vector3::from(*p)).collect();
    let e: Vec<Vector3<f64>> = est.iter().map(|p| Vector3::from(*p)).collect();
    let (r, t, s) = match mode {
        AlignMode::None => (Matrix3::identity(), Vector3::zeros(), 1.0),
        AlignMode::Se3 => umeyama(&e, &g, false),
        AlignMode::Sim3 => umeyama(&e, &g, true),
    };
    let errors: Vec<f64> = e.iter().zip(&g).map(|(p, q)| (s * r * p + t - q).norm()).collect();
    let ape_rmse = (errors.iter().map(|v| v * v).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(TrajectoryError {
        ape_rmse,
        errors,
        rotation: r.transpose().into(),
        translation: t.into(),
        scale: s,
    })
}
