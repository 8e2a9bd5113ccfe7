use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{invalid, Result};

/// Smallest magnitude allowed for `gamma` when inverting the normalization.
pub const GAMMA_FLOOR: f64 = 1e-8;

/// Learnable per-channel affine parameters of the instance normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RevinAffine {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl RevinAffine {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            gamma: Array1::zeros(channels),
            beta: Array1::zeros(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Per-call statistics captured by [`revin_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats {
    pub mean: Array1<f64>,
    /// `sqrt(var + eps)` with population variance.
    pub std: Array1<f64>,
}

pub(crate) fn clamp_gamma(g: f64) -> f64 {
    if g.abs() >= GAMMA_FLOOR {
        g
    } else if g < 0.0 {
        -GAMMA_FLOOR
    } else {
        GAMMA_FLOOR
    }
}

/// `x_hat = gamma (x - mean) / sqrt(var + eps) + beta`, per channel over time.
pub fn revin_normalize(
    x: ArrayView2<'_, f64>,
    affine: &RevinAffine,
    eps: f64,
) -> Result<(Array2<f64>, InstanceStats)> {
    let (len, channels) = x.dim();
    if len == 0 {
        return invalid("instance normalization needs at least one time step");
    }
    if channels != affine.channels() {
        return invalid(format!(
            "input has {channels} channels, normalization has {}",
            affine.channels()
        ));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let var = x.var_axis(Axis(0), 0.0);
    let std = var.mapv(|v| (v + eps).sqrt());
    let mut out = x.to_owned();
    for (d, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let (m, s, g, b) = (mean[d], std[d], affine.gamma[d], affine.beta[d]);
        col.mapv_inplace(|v| g * (v - m) / s + b);
    }
    Ok((out, InstanceStats { mean, std }))
}

/// Exact inverse of [`revin_normalize`] using the stored statistics.
pub fn revin_denormalize(
    y_hat: ArrayView2<'_, f64>,
    stats: &InstanceStats,
    affine: &RevinAffine,
) -> Result<Array2<f64>> {
    let channels = y_hat.ncols();
    if channels != affine.channels() || channels != stats.mean.len() {
        return invalid(format!(
            "output has {channels} channels, normalization has {}",
            affine.channels()
        ));
    }
    let mut out = y_hat.to_owned();
    for (d, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let g = affine.gamma[d];
        if g.abs() < GAMMA_FLOOR {
            log::warn!("gamma[{d}] = {g:e} is below {GAMMA_FLOOR:e}; clamping for the inverse");
        }
        let g = clamp_gamma(g);
        let (m, s, b) = (stats.mean[d], stats.std[d], affine.beta[d]);
        col.mapv_inplace(|v| (v - b) / g * s + m);
    }
    Ok(out)
}
