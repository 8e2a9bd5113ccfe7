//! Losses, gradients, Adam and the epoch loop.

use std::fmt::Write as _;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{window_origins, TimeSeriesTable};
use crate::error::{invalid, FilmError, Result};
use crate::model::{film_forward, CompiledFilm, FilmModel, FilmParams};

/// Gradients share the parameter layout.
pub type GradientSet = FilmParams;

fn check_shapes(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != truth.dim() {
        return invalid(format!("prediction is {:?} but truth is {:?}", pred.dim(), truth.dim()));
    }
    if pred.is_empty() {
        return invalid("cannot score empty arrays");
    }
    Ok(())
}

pub fn mse(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Mean errors over `count` scalar entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
}

impl LossReport {
    pub fn of(pred: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<Self> {
        Ok(Self {
            mse: mse(pred, truth)?,
            mae: mae(pred, truth)?,
            count: pred.len(),
        })
    }

    /// Count-weighted combination.
    pub fn merge(&self, other: &LossReport) -> LossReport {
        let total = self.count + other.count;
        if total == 0 {
            return LossReport::default();
        }
        let (a, b) = (self.count as f64, other.count as f64);
        LossReport {
            mse: (self.mse * a + other.mse * b) / total as f64,
            mae: (self.mae * a + other.mae * b) / total as f64,
            count: total,
        }
    }
}

/// Paired input windows and targets.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub inputs: Vec<ArrayView2<'a, f64>>,
    pub targets: Vec<ArrayView2<'a, f64>>,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: Vec<ArrayView2<'a, f64>>, targets: Vec<ArrayView2<'a, f64>>) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return invalid(format!(
                "batch needs matching non-empty inputs and targets, got {} and {}",
                inputs.len(),
                targets.len()
            ));
        }
        Ok(Self { inputs, targets })
    }

    /// Windows at `origins` of a table: input `[o, o + input_len)`, target the
    /// following `horizon` rows.
    pub fn from_origins(values: ArrayView2<'a, f64>, origins: &[usize], input_len: usize, horizon: usize) -> Result<Self> {
        let mut inputs = Vec::with_capacity(origins.len());
        let mut targets = Vec::with_capacity(origins.len());
        for &o in origins {
            if o + input_len + horizon > values.nrows() {
                return invalid(format!("window at {o} runs past the {}-row table", values.nrows()));
            }
            inputs.push(values.slice_move(s![o..o + input_len, ..]));
            targets.push(values.slice_move(s![o + input_len..o + input_len + horizon, ..]));
        }
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn stacked_targets(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(1), &self.targets).expect("targets share a shape")
    }
}

/// Analytic gradient of the batch-mean MSE, written into `grads`.
pub fn backward_into(
    compiled: &CompiledFilm,
    params: &FilmParams,
    batch: &Batch<'_>,
    grads: &mut GradientSet,
    batch_index: usize,
) -> Result<LossReport> {
    let fwd = compiled.forward(params, &batch.inputs)?;
    let truth = batch.stacked_targets();
    let report = LossReport::of(fwd.output.view(), truth.view())?;
    if !report.mse.is_finite() {
        return Err(FilmError::Training {
            batch: batch_index,
            detail: format!("loss is {}", report.mse),
        });
    }
    let scale = 2.0 / truth.len() as f64;
    let g_out = (&fwd.output - &truth) * scale;
    compiled.backward(params, &fwd, g_out.view(), grads, false)?;
    Ok(report)
}

pub fn backward(compiled: &CompiledFilm, params: &FilmParams, batch: &Batch<'_>) -> Result<(GradientSet, LossReport)> {
    let mut grads = params.zeros_like();
    let report = backward_into(compiled, params, batch, &mut grads, 0)?;
    Ok((grads, report))
}

/// Batch-mean MSE through the step-by-step forward pass.
pub fn batch_loss(model: &FilmModel, params: &FilmParams, batch: &Batch<'_>) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for (x, y) in batch.inputs.iter().zip(&batch.targets) {
        let pred = film_forward(*x, params, model)?;
        sum += mse(pred.view(), *y)? * y.len() as f64;
        count += y.len();
    }
    Ok(sum / count as f64)
}

/// Central differences of `loss` in every real scalar of `params`.
pub fn finite_diff<F>(params: &FilmParams, h: f64, mut loss: F) -> Result<GradientSet>
where
    F: FnMut(&FilmParams) -> Result<f64>,
{
    if !(h > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    let mut probe = params.clone();
    let mut grads = params.zeros_like();
    let sizes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    for (si, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let orig = probe.slices()[si][j];
            probe.slices_mut()[si][j] = orig + h;
            let up = loss(&probe)?;
            probe.slices_mut()[si][j] = orig - h;
            let down = loss(&probe)?;
            probe.slices_mut()[si][j] = orig;
            grads.slices_mut()[si][j] = (up - down) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Finite-difference gradient of the batch-mean MSE of [`film_forward`].
pub fn finite_diff_grad(model: &FilmModel, params: &FilmParams, batch: &Batch<'_>, h: f64) -> Result<GradientSet> {
    finite_diff(params, h, |p| batch_loss(model, p, batch))
}

/// `max |a - b| / max(max |b|, tiny)` over every scalar.
pub fn max_relative_error(analytic: &GradientSet, reference: &GradientSet) -> f64 {
    let (a, b) = (analytic.flatten(), reference.flatten());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 15,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return invalid("learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return invalid("batch size and epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return invalid("Adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: FilmParams,
    pub second_moment: FilmParams,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &FilmParams) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }
}

/// Bias-corrected Adam on every real scalar (real and imaginary parts alike).
pub fn adam_step(state: &mut AdamState, grads: &GradientSet, params: &mut FilmParams, config: &TrainConfig) {
    state.step_count += 1;
    let (b1, b2, eps) = (config.adam_beta1, config.adam_beta2, config.adam_eps);
    let t = state.step_count as i32;
    let c1 = 1.0 / (1.0 - b1.powi(t));
    let c2 = 1.0 / (1.0 - b2.powi(t));
    let lr = config.learning_rate;
    let m_all = state.first_moment.slices_mut();
    let v_all = state.second_moment.slices_mut();
    for (((p, g), m), v) in params.slices_mut().into_iter().zip(grads.slices()).zip(m_all).zip(v_all) {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m * c1) / ((*v * c2).sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Plain-text table, one line per epoch.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:>5}  {:>14}  {:>14}  {:>14}\n", "epoch", "train_mse", "val_mse", "val_mae");
        for r in &self.records {
            writeln!(out, "{:>5}  {:>14.8}  {:>14.8}  {:>14.8}", r.epoch, r.train_mse, r.val_mse, r.val_mae)
                .expect("string write");
        }
        out
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.val_mse <= r.val_mse => Some(b),
            _ => Some(r),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_params: FilmParams,
    pub best_params: FilmParams,
    pub best_epoch: usize,
    pub history: TrainHistory,
}

/// Scores every stride-1 window of `table`.
pub fn evaluate_table(
    compiled: &CompiledFilm,
    params: &FilmParams,
    table: &TimeSeriesTable,
    batch_size: usize,
) -> Result<LossReport> {
    let cfg = compiled.config();
    let origins: Vec<usize> = window_origins(table.len(), compiled.input_len(), cfg.horizon, 1)?.collect();
    let mut report = LossReport::default();
    for chunk in origins.chunks(batch_size.max(1)) {
        let batch = Batch::from_origins(table.values.view(), chunk, compiled.input_len(), cfg.horizon)?;
        let fwd = compiled.forward(params, &batch.inputs)?;
        let truth = batch.stacked_targets();
        report = report.merge(&LossReport::of(fwd.output.view(), truth.view())?);
    }
    Ok(report)
}

/// Repeats the last observed value over the horizon, on the same windows
/// [`evaluate_table`] scores.
pub fn naive_last_value(table: &TimeSeriesTable, input_len: usize, horizon: usize) -> Result<LossReport> {
    let mut report = LossReport::default();
    for o in window_origins(table.len(), input_len, horizon, 1)? {
        let last = table.values.row(o + input_len - 1);
        let truth = table.values.slice(s![o + input_len..o + input_len + horizon, ..]);
        let pred = Array2::from_shape_fn(truth.raw_dim(), |(_, d)| last[d]);
        report = report.merge(&LossReport::of(pred.view(), truth)?);
    }
    Ok(report)
}

/// Fixed-epoch Adam training on stride-1 windows with per-epoch validation.
pub fn train(
    model: &FilmModel,
    params: FilmParams,
    train_set: &TimeSeriesTable,
    val_set: &TimeSeriesTable,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.check_params(&params)?;
    let compiled = CompiledFilm::new(model)?;
    let (input_len, horizon) = (model.input_len(), model.config().horizon);
    let mut origins: Vec<usize> = window_origins(train_set.len(), input_len, horizon, 1)
        .map_err(|e| FilmError::InvalidArgument(format!("training split: {e}")))?
        .collect();
    if let Err(e) = window_origins(val_set.len(), input_len, horizon, 1) {
        return invalid(format!("validation split: {e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = params;
    let mut adam = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;
    let mut history = TrainHistory::default();
    let mut batch_index = 0;

    for epoch in 1..=config.epochs {
        origins.shuffle(&mut rng);
        let mut epoch_loss = LossReport::default();
        for chunk in origins.chunks(config.batch_size) {
            let batch = Batch::from_origins(train_set.values.view(), chunk, input_len, horizon)?;
            let report = backward_into(&compiled, &params, &batch, &mut grads, batch_index)?;
            adam_step(&mut adam, &grads, &mut params, config);
            if !params.all_finite() {
                return Err(FilmError::Training {
                    batch: batch_index,
                    detail: "parameters became non-finite".into(),
                });
            }
            epoch_loss = epoch_loss.merge(&report);
            batch_index += 1;
        }
        let val = evaluate_table(&compiled, &params, val_set, config.batch_size.max(64))?;
        log::info!(
            "epoch {epoch}: train_mse={:.6} val_mse={:.6} val_mae={:.6}",
            epoch_loss.mse,
            val.mse,
            val.mae
        );
        history.records.push(EpochRecord {
            epoch,
            train_mse: epoch_loss.mse,
            val_mse: val.mse,
            val_mae: val.mae,
        });
        if val.mse < best_val {
            best_val = val.mse;
            best_epoch = epoch;
            best_params = params.clone();
        }
    }
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_epoch,
        history,
    })
}
