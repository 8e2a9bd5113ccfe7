//! Batched evaluation of the forecaster.
//!
//! Only the final row of each expert's mixed trajectory is reconstructed, so
//! projection, FFT, bin selection and the inverse FFT at that row collapse
//! into one fixed complex matrix per selected mode:
//!
//! ```text
//! u_m = K_m x,   K_m[:, s] = (a_m / L) e^{2 pi i k (L-1-s) / L} S_k(L-1-s)
//! S_k(j) = sum_{q <= j} e^{-2 pi i k q / L} ad^q bd
//! memory = Re( sum_m W_m^T u_m )
//! ```
//!
//! with `a_m = 1` for the DC and Nyquist bins and 2 otherwise. Columns of
//! `x` are independent series, so a whole batch is a few GEMMs.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis};

use super::revin::{clamp_gamma, InstanceStats};
use super::{Expert, FilmConfig, FilmModel, FilmParams};
use crate::error::{invalid, Result};
use crate::spectral::SpectralWeights;

/// Per-mode features of a batch, rows `slot * N + n`, one column per series.
#[derive(Debug, Clone)]
pub struct ModeFeatures {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ExpertKernel {
    input_len: usize,
    order: usize,
    mode_count: usize,
    kre: Array2<f64>,
    kim: Array2<f64>,
    /// `tau x N`, parity already folded in.
    recon: Array2<f64>,
}

impl ExpertKernel {
    pub fn new(expert: &Expert) -> Result<Self> {
        let len = expert.input_len();
        let order = expert.lpu().order();
        let modes = expert.modes().indices();
        let h = expert.lpu().transition().impulse_response(len);
        let mut kre = Array2::zeros((modes.len() * order, len));
        let mut kim = Array2::zeros((modes.len() * order, len));
        let mut acc_re = Array1::<f64>::zeros(order);
        let mut acc_im = Array1::<f64>::zeros(order);
        let tau = std::f64::consts::TAU;
        for (slot, &k) in modes.iter().enumerate() {
            let alpha = if k == 0 || 2 * k == len { 1.0 } else { 2.0 } / len as f64;
            acc_re.fill(0.0);
            acc_im.fill(0.0);
            let rows = slot * order..(slot + 1) * order;
            for j in 0..len {
                let theta = tau * ((k * j) % len) as f64 / len as f64;
                let (sin, cos) = theta.sin_cos();
                acc_re.scaled_add(cos, &h.row(j));
                acc_im.scaled_add(-sin, &h.row(j));
                let col = len - 1 - j;
                let mut re = kre.slice_mut(s![rows.clone(), col]);
                let mut im = kim.slice_mut(s![rows.clone(), col]);
                for n in 0..order {
                    re[n] = alpha * (cos * acc_re[n] - sin * acc_im[n]);
                    im[n] = alpha * (cos * acc_im[n] + sin * acc_re[n]);
                }
            }
        }
        let recon = expert.lpu().eval().reconstruction_block(expert.horizon())?;
        Ok(Self {
            input_len: len,
            order,
            mode_count: modes.len(),
            kre,
            kim,
            recon,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn horizon(&self) -> usize {
        self.recon.nrows()
    }

    fn check_weights(&self, w: &SpectralWeights) -> Result<()> {
        if w.mode_count() != self.mode_count || w.channels() != self.order {
            return invalid(format!(
                "weights are {} modes x {} channels, kernel expects {} x {}",
                w.mode_count(),
                w.channels(),
                self.mode_count,
                self.order
            ));
        }
        Ok(())
    }

    /// `x` is `L x C`, one series per column.
    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<ModeFeatures> {
        if x.nrows() != self.input_len {
            return invalid(format!("kernel expects {} samples, got {}", self.input_len, x.nrows()));
        }
        Ok(ModeFeatures {
            re: self.kre.dot(&x),
            im: self.kim.dot(&x),
        })
    }

    /// Final memory row of the mixed trajectory, `N x C`.
    pub fn memory(&self, f: &ModeFeatures, w: &SpectralWeights) -> Result<Array2<f64>> {
        self.check_weights(w)?;
        let (n, cols) = (self.order, f.re.ncols());
        let mut mem = Array2::zeros((n, cols));
        match w {
            SpectralWeights::Full(full) => {
                let (wre, wim) = flat(&full.w.re, &full.w.im, self.mode_count * n, n);
                general_mat_mul(1.0, &wre.t(), &f.re, 0.0, &mut mem);
                general_mat_mul(-1.0, &wim.t(), &f.im, 1.0, &mut mem);
            }
            SpectralWeights::LowRank(lr) => {
                for slot in 0..self.mode_count {
                    let (ure, uim) = slot_rows(f, slot, n);
                    let (are, aim) = tn(lr.w0.re.view(), lr.w0.im.view(), ure, uim);
                    let w1re = lr.w1.re.slice(s![.., .., slot]);
                    let w1im = lr.w1.im.slice(s![.., .., slot]);
                    let (bre, bim) = tn(w1re, w1im, are.view(), aim.view());
                    general_mat_mul(1.0, &lr.w2.re.t(), &bre, 1.0, &mut mem);
                    general_mat_mul(-1.0, &lr.w2.im.t(), &bim, 1.0, &mut mem);
                }
            }
        }
        Ok(mem)
    }

    /// Forecast block, `tau x C`.
    pub fn forecast(&self, f: &ModeFeatures, w: &SpectralWeights) -> Result<Array2<f64>> {
        Ok(self.recon.dot(&self.memory(f, w)?))
    }

    /// Writes (or adds, with `accumulate`) the weight gradient for `g_out`
    /// (`tau x C`) into `grad`; returns the input gradient (`L x C`) when asked.
    pub fn backward(
        &self,
        f: &ModeFeatures,
        w: &SpectralWeights,
        g_out: ArrayView2<'_, f64>,
        grad: &mut SpectralWeights,
        accumulate: bool,
        want_input: bool,
    ) -> Result<Option<Array2<f64>>> {
        self.check_weights(w)?;
        self.check_weights(grad)?;
        if !accumulate {
            if let SpectralWeights::LowRank(_) = grad {
                grad.slices_mut().into_iter().for_each(|s| s.fill(0.0));
            }
        }
        let beta = if accumulate { 1.0 } else { 0.0 };
        let n = self.order;
        let g = self.recon.t().dot(&g_out);
        let rows = self.mode_count * n;
        let (du_re, du_im) = match (w, grad) {
            (SpectralWeights::Full(full), SpectralWeights::Full(gf)) => {
                let mut gre = gf.w.re.view_mut().into_shape_with_order((rows, n)).expect("contiguous");
                general_mat_mul(1.0, &f.re, &g.t(), beta, &mut gre);
                let mut gim = gf.w.im.view_mut().into_shape_with_order((rows, n)).expect("contiguous");
                general_mat_mul(-1.0, &f.im, &g.t(), beta, &mut gim);
                if !want_input {
                    return Ok(None);
                }
                let (wre, wim) = flat(&full.w.re, &full.w.im, rows, n);
                (wre.dot(&g), -wim.dot(&g))
            }
            (SpectralWeights::LowRank(lr), SpectralWeights::LowRank(gl)) => {
                let cols = g.ncols();
                let zero = Array2::zeros(g.raw_dim());
                let (mut du_re, mut du_im) = (Array2::zeros((rows, cols)), Array2::zeros((rows, cols)));
                let (db_re, db_im) = conj_mul(lr.w2.re.view(), lr.w2.im.view(), g.view(), zero.view());
                for slot in 0..self.mode_count {
                    let (ure, uim) = slot_rows(f, slot, n);
                    let (are, aim) = tn(lr.w0.re.view(), lr.w0.im.view(), ure, uim);
                    let w1re = lr.w1.re.slice(s![.., .., slot]);
                    let w1im = lr.w1.im.slice(s![.., .., slot]);
                    let (bre, bim) = tn(w1re, w1im, are.view(), aim.view());

                    let (r, i) = conj_mul(bre.view(), bim.view(), g.t(), zero.t());
                    gl.w2.re += &r;
                    gl.w2.im += &i;
                    let (r, i) = conj_mul(are.view(), aim.view(), db_re.t(), db_im.t());
                    gl.w1.re.slice_mut(s![.., .., slot]).add_assign_view(r.view());
                    gl.w1.im.slice_mut(s![.., .., slot]).add_assign_view(i.view());
                    let (da_re, da_im) = conj_mul(w1re, w1im, db_re.view(), db_im.view());
                    let (r, i) = conj_mul(ure, uim, da_re.t(), da_im.t());
                    gl.w0.re += &r;
                    gl.w0.im += &i;
                    if want_input {
                        let (r, i) = conj_mul(lr.w0.re.view(), lr.w0.im.view(), da_re.view(), da_im.view());
                        du_re.slice_mut(s![slot * n..(slot + 1) * n, ..]).assign(&r);
                        du_im.slice_mut(s![slot * n..(slot + 1) * n, ..]).assign(&i);
                    }
                }
                if !want_input {
                    return Ok(None);
                }
                (du_re, du_im)
            }
            _ => return invalid("gradient buffer and weights use different factorizations"),
        };
        let mut gx = self.kre.t().dot(&du_re);
        general_mat_mul(1.0, &self.kim.t(), &du_im, 1.0, &mut gx);
        Ok(Some(gx))
    }
}

trait AddAssignView {
    fn add_assign_view(&mut self, other: ArrayView2<'_, f64>);
}

impl AddAssignView for ArrayViewMut2<'_, f64> {
    fn add_assign_view(&mut self, other: ArrayView2<'_, f64>) {
        *self += &other;
    }
}

fn flat<'a>(
    re: &'a ndarray::Array3<f64>,
    im: &'a ndarray::Array3<f64>,
    rows: usize,
    n: usize,
) -> (ArrayView2<'a, f64>, ArrayView2<'a, f64>) {
    (
        re.view().into_shape_with_order((rows, n)).expect("contiguous"),
        im.view().into_shape_with_order((rows, n)).expect("contiguous"),
    )
}

fn slot_rows(f: &ModeFeatures, slot: usize, n: usize) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
    let r = slot * n..(slot + 1) * n;
    (f.re.slice(s![r.clone(), ..]), f.im.slice(s![r, ..]))
}

/// `a^T b` for complex matrices given as planes.
fn tn(
    ar: ArrayView2<'_, f64>,
    ai: ArrayView2<'_, f64>,
    br: ArrayView2<'_, f64>,
    bi: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut re = ar.t().dot(&br);
    general_mat_mul(-1.0, &ai.t(), &bi, 1.0, &mut re);
    let mut im = ar.t().dot(&bi);
    general_mat_mul(1.0, &ai.t(), &br, 1.0, &mut im);
    (re, im)
}

/// `conj(p) q`.
fn conj_mul(
    pr: ArrayView2<'_, f64>,
    pi: ArrayView2<'_, f64>,
    qr: ArrayView2<'_, f64>,
    qi: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let mut re = pr.dot(&qr);
    general_mat_mul(1.0, &pi, &qi, 1.0, &mut re);
    let mut im = pr.dot(&qi);
    general_mat_mul(-1.0, &pi, &qr, 1.0, &mut im);
    (re, im)
}

/// Intermediates of a batched forward pass, columns `b * D + d`.
#[derive(Debug, Clone)]
pub struct BatchForward {
    /// Normalized input window, `max_len x (B D)`.
    pub input: Array2<f64>,
    pub stats: Option<InstanceStats>,
    /// `(x - mean) / std` before the affine map, kept when normalizing.
    pub standardized: Option<Array2<f64>>,
    pub features: Vec<ModeFeatures>,
    pub expert_out: Vec<Array2<f64>>,
    /// Merged forecast before denormalization.
    pub merged: Array2<f64>,
    pub output: Array2<f64>,
}

impl BatchForward {
    pub fn batch_size(&self, channels: usize) -> usize {
        self.output.ncols() / channels
    }
}

/// A model with its expert kernels built.
#[derive(Debug, Clone)]
pub struct CompiledFilm {
    config: FilmConfig,
    kernels: Vec<ExpertKernel>,
}

impl CompiledFilm {
    pub fn new(model: &FilmModel) -> Result<Self> {
        let kernels = model.experts().iter().map(ExpertKernel::new).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: model.config().clone(),
            kernels,
        })
    }

    pub fn config(&self) -> &FilmConfig {
        &self.config
    }

    pub fn kernels(&self) -> &[ExpertKernel] {
        &self.kernels
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len()
    }

    /// Stacks the trailing `max_len` rows of each window into one matrix.
    pub fn stack(&self, windows: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
        let (need, d) = (self.input_len(), self.config.channels);
        let mut x = Array2::zeros((need, windows.len() * d));
        for (b, w) in windows.iter().enumerate() {
            if w.nrows() < need {
                return invalid(format!("forecasting needs at least {need} history samples, got {}", w.nrows()));
            }
            if w.ncols() != d {
                return invalid(format!("input has {} channels, model expects {d}", w.ncols()));
            }
            x.slice_mut(s![.., b * d..(b + 1) * d]).assign(&w.slice(s![w.nrows() - need.., ..]));
        }
        Ok(x)
    }

    pub fn forward(&self, params: &FilmParams, windows: &[ArrayView2<'_, f64>]) -> Result<BatchForward> {
        let x = self.stack(windows)?;
        self.forward_stacked(params, x)
    }

    /// Forward pass on an already stacked `max_len x (B D)` input.
    pub fn forward_stacked(&self, params: &FilmParams, mut x: Array2<f64>) -> Result<BatchForward> {
        let cfg = &self.config;
        let d = cfg.channels;
        if params.experts.len() != self.kernels.len() || params.merge.len() != self.kernels.len() {
            return invalid("parameters do not match the number of experts");
        }
        if params.revin.channels() != d || x.ncols() % d != 0 || x.nrows() != self.input_len() {
            return invalid("input or normalization shape does not match the model");
        }
        let (stats, standardized) = if cfg.revin {
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let std = x.var_axis(Axis(0), 0.0).mapv(|v| (v + cfg.eps_norm).sqrt());
            for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
                let (m, sd) = (mean[j], std[j]);
                col.mapv_inplace(|v| (v - m) / sd);
            }
            let z = x.clone();
            for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
                let (g, b) = (params.revin.gamma[j % d], params.revin.beta[j % d]);
                col.mapv_inplace(|v| g * v + b);
            }
            (Some(InstanceStats { mean, std }), Some(z))
        } else {
            (None, None)
        };

        let need = x.nrows();
        let mut features = Vec::with_capacity(self.kernels.len());
        let mut expert_out = Vec::with_capacity(self.kernels.len());
        let mut merged = Array2::zeros((cfg.horizon, x.ncols()));
        for ((k, w), &mix) in self.kernels.iter().zip(&params.experts).zip(&params.merge) {
            let f = k.features(x.slice(s![need - k.input_len.., ..]))?;
            let y = k.forecast(&f, w)?;
            merged.scaled_add(mix, &y);
            features.push(f);
            expert_out.push(y);
        }

        let output = match &stats {
            Some(st) => {
                let mut out = merged.clone();
                for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
                    let g = clamp_gamma(params.revin.gamma[j % d]);
                    let (m, sd, b) = (st.mean[j], st.std[j], params.revin.beta[j % d]);
                    col.mapv_inplace(|v| (v - b) / g * sd + m);
                }
                out
            }
            None => merged.clone(),
        };
        Ok(BatchForward {
            input: x,
            stats,
            standardized,
            features,
            expert_out,
            merged,
            output,
        })
    }

    /// One `tau x D` forecast per window.
    pub fn predict(&self, params: &FilmParams, windows: &[ArrayView2<'_, f64>]) -> Result<Vec<Array2<f64>>> {
        let d = self.config.channels;
        let out = self.forward(params, windows)?.output;
        Ok((0..windows.len()).map(|b| out.slice(s![.., b * d..(b + 1) * d]).to_owned()).collect())
    }

    /// `d loss / d params` from `g_out = d loss / d output`, written into
    /// `grads` or added to it with `accumulate`.
    pub fn backward(
        &self,
        params: &FilmParams,
        fwd: &BatchForward,
        g_out: ArrayView2<'_, f64>,
        grads: &mut FilmParams,
        accumulate: bool,
    ) -> Result<()> {
        let d = self.config.channels;
        if g_out.dim() != fwd.output.dim() {
            return invalid("output gradient shape does not match the forward pass");
        }
        if grads.experts.len() != self.kernels.len() || grads.merge.len() != self.kernels.len() {
            return invalid("gradient buffer does not match the number of experts");
        }
        if !accumulate {
            grads.merge.fill(0.0);
            grads.revin.gamma.fill(0.0);
            grads.revin.beta.fill(0.0);
        }
        let mut g_merged = g_out.to_owned();
        if let Some(st) = &fwd.stats {
            for (j, mut col) in g_merged.axis_iter_mut(Axis(1)).enumerate() {
                let c = j % d;
                let g = clamp_gamma(params.revin.gamma[c]);
                let (sd, b) = (st.std[j], params.revin.beta[c]);
                let mut dg = 0.0;
                let mut db = 0.0;
                for (gv, &yh) in col.iter_mut().zip(fwd.merged.column(j)) {
                    db -= *gv * sd / g;
                    dg -= *gv * (yh - b) * sd / (g * g);
                    *gv *= sd / g;
                }
                grads.revin.gamma[c] += dg;
                grads.revin.beta[c] += db;
            }
        }

        let need = fwd.input.nrows();
        let mut g_input = fwd.stats.as_ref().map(|_| Array2::<f64>::zeros(fwd.input.raw_dim()));
        for (e, k) in self.kernels.iter().enumerate() {
            grads.merge[e] += (&g_merged * &fwd.expert_out[e]).sum();
            let g_e = &g_merged * params.merge[e];
            let gx = k.backward(
                &fwd.features[e],
                &params.experts[e],
                g_e.view(),
                &mut grads.experts[e],
                accumulate,
                g_input.is_some(),
            )?;
            if let (Some(acc), Some(gx)) = (g_input.as_mut(), gx) {
                let mut rows = acc.slice_mut(s![need - k.input_len.., ..]);
                rows += &gx;
            }
        }

        if let (Some(gx), Some(z)) = (g_input, &fwd.standardized) {
            for (j, col) in gx.axis_iter(Axis(1)).enumerate() {
                let c = j % d;
                grads.revin.gamma[c] += col.dot(&z.column(j));
                grads.revin.beta[c] += col.sum();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expert_forward, film_forward};
    use crate::spectral::ModePolicy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    fn config(rank: Option<usize>, revin: bool) -> FilmConfig {
        FilmConfig {
            horizon: 6,
            multiscale_factors: vec![1, 2],
            legendre_order: 8,
            mode_count: 7,
            mode_policy: ModePolicy::Random,
            rank,
            revin,
            channels: 2,
            ..FilmConfig::default()
        }
    }

    #[test]
    fn kernel_matches_literal_expert() {
        for rank in [None, Some(3)] {
            let model = FilmModel::new(config(rank, false)).unwrap();
            let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(1));
            for (e, expert) in model.experts().iter().enumerate() {
                let k = ExpertKernel::new(expert).unwrap();
                let x = random(expert.input_len(), 2, 2 + e as u64);
                let lit = expert_forward(x.view(), &params.experts[e], expert).unwrap();
                let fast = k.forecast(&k.features(x.view()).unwrap(), &params.experts[e]).unwrap();
                let scale = lit.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in lit.iter().zip(fast.iter()) {
                    assert!((a - b).abs() <= 1e-10 * scale.max(1e-300), "{rank:?} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn batch_matches_film_forward() {
        for revin in [false, true] {
            let model = FilmModel::new(config(None, revin)).unwrap();
            let mut params = model.init_params(&mut ChaCha8Rng::seed_from_u64(3));
            params.revin.gamma = ndarray::array![1.2, 0.8];
            params.revin.beta = ndarray::array![0.1, -0.3];
            let compiled = CompiledFilm::new(&model).unwrap();
            let windows: Vec<Array2<f64>> = (0..4).map(|i| random(12 + i, 2, 10 + i as u64)).collect();
            let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
            let got = compiled.predict(&params, &views).unwrap();
            for (w, g) in windows.iter().zip(&got) {
                let want = film_forward(w.view(), &params, &model).unwrap();
                for (a, b) in want.iter().zip(g.iter()) {
                    assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn short_window_rejected() {
        let model = FilmModel::new(config(None, false)).unwrap();
        let compiled = CompiledFilm::new(&model).unwrap();
        let w = Array2::zeros((11, 2));
        assert!(compiled.forward(&model.zero_params(), &[w.view()]).is_err());
    }
}
