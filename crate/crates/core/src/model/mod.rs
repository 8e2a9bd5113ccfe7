//! The end-to-end forecaster: instance normalization, multiscale
//! projection/mixing/reconstruction experts and the linear expert merge.
//!
//! [`film_forward`] evaluates the pipeline step by step (projection
//! recursion, FFT, per-mode mixing, inverse FFT, reconstruction). The
//! [`kernel`] module folds the fixed parts of that pipeline into dense
//! matrices for batched training and evaluation; both routes agree to
//! rounding error.

pub mod kernel;
pub mod revin;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{invalid, Result};
use crate::legendre::Lpu;
use crate::spectral::{bin_count, fel_forward, select_modes, ModePolicy, ModeSet, SpectralWeights};

pub use kernel::{BatchForward, CompiledFilm, ExpertKernel, ModeFeatures};
pub use revin::{revin_denormalize, revin_normalize, InstanceStats, RevinAffine};

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmConfig {
    /// Forecast length `tau`.
    pub horizon: usize,
    /// Expert `i` reads the last `factor_i * horizon` samples.
    pub multiscale_factors: Vec<usize>,
    pub legendre_order: usize,
    pub mode_count: usize,
    pub mode_policy: ModePolicy,
    pub mode_seed: u64,
    /// `None` for full per-mode weights.
    pub rank: Option<usize>,
    pub revin: bool,
    pub eps_norm: f64,
    pub channels: usize,
}

impl Default for FilmConfig {
    fn default() -> Self {
        Self {
            horizon: 96,
            multiscale_factors: vec![1, 2, 4],
            legendre_order: 256,
            mode_count: 32,
            mode_policy: ModePolicy::Lowest,
            mode_seed: 0,
            rank: None,
            revin: false,
            eps_norm: 1e-5,
            channels: 1,
        }
    }
}

impl FilmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return invalid("horizon must be positive");
        }
        if self.multiscale_factors.is_empty() || self.multiscale_factors.contains(&0) {
            return invalid("multiscale factors must be a non-empty list of positive integers");
        }
        if self.legendre_order == 0 || self.mode_count == 0 || self.channels == 0 {
            return invalid("legendre order, mode count and channels must be positive");
        }
        if self.rank == Some(0) {
            return invalid("low-rank factorization needs rank >= 1");
        }
        if !(self.eps_norm > 0.0) {
            return invalid("normalization epsilon must be positive");
        }
        Ok(())
    }

    /// History length the forecaster consumes.
    pub fn input_len(&self) -> usize {
        self.horizon * self.multiscale_factors.iter().copied().max().unwrap_or(1)
    }
}

/// Fixed (non-learnable) artifacts of one expert.
#[derive(Debug, Clone)]
pub struct Expert {
    factor: usize,
    lpu: Lpu,
    modes: ModeSet,
    horizon: usize,
}

impl Expert {
    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn input_len(&self) -> usize {
        self.lpu.length()
    }

    pub fn lpu(&self) -> &Lpu {
        &self.lpu
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Full learnable state.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmParams {
    pub experts: Vec<SpectralWeights>,
    pub merge: Array1<f64>,
    pub revin: RevinAffine,
}

impl FilmParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            experts: self.experts.iter().map(SpectralWeights::zeros_like).collect(),
            merge: Array1::zeros(self.merge.len()),
            revin: RevinAffine::zeros(self.revin.channels()),
        }
    }

    /// Every real scalar, in a fixed order: expert weights, merge, gamma, beta.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.experts.iter().flat_map(|w| w.slices()).collect();
        v.push(self.merge.as_slice().expect("contiguous"));
        v.push(self.revin.gamma.as_slice().expect("contiguous"));
        v.push(self.revin.beta.as_slice().expect("contiguous"));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.experts.iter_mut().flat_map(|w| w.slices_mut()).collect();
        v.push(self.merge.as_slice_mut().expect("contiguous"));
        v.push(self.revin.gamma.as_slice_mut().expect("contiguous"));
        v.push(self.revin.beta.as_slice_mut().expect("contiguous"));
        v
    }

    pub fn scalar_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Config plus the fixed per-expert artifacts.
#[derive(Debug, Clone)]
pub struct FilmModel {
    config: FilmConfig,
    experts: Vec<Expert>,
}

impl FilmModel {
    pub fn new(config: FilmConfig) -> Result<Self> {
        config.validate()?;
        let experts = config
            .multiscale_factors
            .iter()
            .map(|&factor| {
                let len = factor * config.horizon;
                let lpu = Lpu::new(config.legendre_order, len)?;
                let modes = select_modes(config.mode_policy, config.mode_count, bin_count(len), config.mode_seed)?;
                Ok(Expert {
                    factor,
                    lpu,
                    modes,
                    horizon: config.horizon,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, experts })
    }

    pub fn config(&self) -> &FilmConfig {
        &self.config
    }

    pub fn experts(&self) -> &[Expert] {
        &self.experts
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len()
    }

    /// Random spectral weights, merge weights `1/E`, identity normalization.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> FilmParams {
        let experts = self
            .experts
            .iter()
            .map(|e| SpectralWeights::init(e.modes.len(), self.config.legendre_order, self.config.rank, rng))
            .collect();
        self.params_with(experts)
    }

    pub fn zero_params(&self) -> FilmParams {
        let experts = self
            .experts
            .iter()
            .map(|e| SpectralWeights::zeros(e.modes.len(), self.config.legendre_order, self.config.rank))
            .collect();
        self.params_with(experts)
    }

    fn params_with(&self, experts: Vec<SpectralWeights>) -> FilmParams {
        let count = self.experts.len();
        FilmParams {
            experts,
            merge: Array1::from_elem(count, 1.0 / count as f64),
            revin: RevinAffine::identity(self.config.channels),
        }
    }

    pub fn check_params(&self, params: &FilmParams) -> Result<()> {
        if params.experts.len() != self.experts.len() || params.merge.len() != self.experts.len() {
            return invalid(format!(
                "parameters hold {} experts / {} merge weights, model has {} experts",
                params.experts.len(),
                params.merge.len(),
                self.experts.len()
            ));
        }
        for (i, (w, e)) in params.experts.iter().zip(&self.experts).enumerate() {
            if w.mode_count() != e.modes.len() || w.channels() != self.config.legendre_order || w.rank() != self.config.rank {
                return invalid(format!("expert {i} weights do not match the model configuration"));
            }
        }
        if params.revin.channels() != self.config.channels {
            return invalid(format!(
                "normalization has {} channels, model expects {}",
                params.revin.channels(),
                self.config.channels
            ));
        }
        Ok(())
    }
}

/// One expert on an `(f tau) x D` window: per channel, project, mix on the
/// selected modes, and reconstruct the last `tau` samples from the final
/// mixed memory row.
pub fn expert_forward(x: ArrayView2<'_, f64>, weights: &SpectralWeights, expert: &Expert) -> Result<Array2<f64>> {
    let (len, channels) = x.dim();
    if len != expert.input_len() {
        return invalid(format!(
            "expert with factor {} expects {} samples, got {len}",
            expert.factor,
            expert.input_len()
        ));
    }
    let mut out = Array2::zeros((expert.horizon, channels));
    for (d, col) in x.axis_iter(Axis(1)).enumerate() {
        let traj = expert.lpu.project(&col.to_vec())?;
        let mixed = fel_forward(traj.coeffs().view(), weights, &expert.modes)?;
        let last = mixed.row(len - 1);
        let forecast = expert.lpu.reconstruct(last, expert.horizon)?;
        out.column_mut(d).assign(&forecast);
    }
    Ok(out)
}

/// Forecasts the next `tau` steps from (at least) the trailing
/// `max_factor * tau` rows of `x`.
pub fn film_forward(x: ArrayView2<'_, f64>, params: &FilmParams, model: &FilmModel) -> Result<Array2<f64>> {
    let cfg = &model.config;
    let need = model.input_len();
    if x.nrows() < need {
        return invalid(format!("forecasting needs at least {need} history samples, got {}", x.nrows()));
    }
    if x.ncols() != cfg.channels {
        return invalid(format!("input has {} channels, model expects {}", x.ncols(), cfg.channels));
    }
    model.check_params(params)?;
    let window = x.slice(s![x.nrows() - need.., ..]);

    let (normed, stats) = if cfg.revin {
        let (n, st) = revin_normalize(window, &params.revin, cfg.eps_norm)?;
        (n, Some(st))
    } else {
        (window.to_owned(), None)
    };

    let mut merged = Array2::zeros((cfg.horizon, cfg.channels));
    for ((expert, weights), &mix) in model.experts.iter().zip(&params.experts).zip(&params.merge) {
        let own = normed.slice(s![need - expert.input_len().., ..]);
        merged.scaled_add(mix, &expert_forward(own, weights, expert)?);
    }

    match stats {
        Some(st) => revin_denormalize(merged.view(), &st, &params.revin),
        None => Ok(merged),
    }
}
