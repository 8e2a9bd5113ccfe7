use ndarray::{Array, Array1, Array2, ArrayView1, ArrayView2, Dimension, ShapeBuilder};
use num_complex::Complex64;
use rand::Rng;

use super::fft::{irfft_time, rfft_time, FrequencyTrajectory};
use super::modes::ModeSet;
use crate::error::{invalid, Result};

/// Complex tensor stored as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexArray<D: Dimension> {
    pub re: Array<f64, D>,
    pub im: Array<f64, D>,
}

impl<D: Dimension> ComplexArray<D> {
    pub fn zeros<Sh: ShapeBuilder<Dim = D> + Clone>(shape: Sh) -> Self {
        Self {
            re: Array::zeros(shape.clone()),
            im: Array::zeros(shape),
        }
    }

    /// Entries uniform on `[0, scale)` for both parts.
    pub fn uniform<Sh, R>(shape: Sh, scale: f64, rng: &mut R) -> Self
    where
        Sh: ShapeBuilder<Dim = D> + Clone,
        R: Rng + ?Sized,
    {
        let re = Array::from_shape_simple_fn(shape.clone(), || scale * rng.random::<f64>());
        let im = Array::from_shape_simple_fn(shape, || scale * rng.random::<f64>());
        Self { re, im }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            re: Array::zeros(self.re.raw_dim()),
            im: Array::zeros(self.im.raw_dim()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn get(&self, idx: D::Pattern) -> Complex64
    where
        D::Pattern: ndarray::NdIndex<D> + Copy,
    {
        Complex64::new(self.re[idx], self.im[idx])
    }

    pub fn set(&mut self, idx: D::Pattern, v: Complex64)
    where
        D::Pattern: ndarray::NdIndex<D> + Copy,
    {
        self.re[idx] = v.re;
        self.im[idx] = v.im;
    }

    pub(crate) fn slices(&self) -> [&[f64]; 2] {
        [
            self.re.as_slice().expect("standard layout"),
            self.im.as_slice().expect("standard layout"),
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.re.as_slice_mut().expect("standard layout"),
            self.im.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Full per-mode channel maps, indexed `[mode, in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullWeights {
    pub w: ComplexArray<ndarray::Ix3>,
}

/// Rank-`K` factorization: `in -(w0)-> K -(w1[.., .., mode])-> K -(w2)-> out`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankWeights {
    /// `[in, rank]`
    pub w0: ComplexArray<ndarray::Ix2>,
    /// `[rank, rank, mode]`
    pub w1: ComplexArray<ndarray::Ix3>,
    /// `[rank, out]`
    pub w2: ComplexArray<ndarray::Ix2>,
}

/// Learnable mixing applied to each selected frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralWeights {
    Full(FullWeights),
    LowRank(LowRankWeights),
}

impl SpectralWeights {
    /// Uniform `[0, 1/N^2)` initialization of both real and imaginary parts.
    pub fn init<R: Rng + ?Sized>(modes: usize, channels: usize, rank: Option<usize>, rng: &mut R) -> Self {
        let scale = 1.0 / (channels * channels) as f64;
        match rank {
            None => SpectralWeights::Full(FullWeights {
                w: ComplexArray::uniform((modes, channels, channels), scale, rng),
            }),
            Some(k) => SpectralWeights::LowRank(LowRankWeights {
                w0: ComplexArray::uniform((channels, k), scale, rng),
                w1: ComplexArray::uniform((k, k, modes), scale, rng),
                w2: ComplexArray::uniform((k, channels), scale, rng),
            }),
        }
    }

    pub fn zeros(modes: usize, channels: usize, rank: Option<usize>) -> Self {
        match rank {
            None => SpectralWeights::Full(FullWeights {
                w: ComplexArray::zeros((modes, channels, channels)),
            }),
            Some(k) => SpectralWeights::LowRank(LowRankWeights {
                w0: ComplexArray::zeros((channels, k)),
                w1: ComplexArray::zeros((k, k, modes)),
                w2: ComplexArray::zeros((k, channels)),
            }),
        }
    }

    /// Identity map on every mode (full variant).
    pub fn identity(modes: usize, channels: usize) -> Self {
        let mut w = ComplexArray::zeros((modes, channels, channels));
        for m in 0..modes {
            for i in 0..channels {
                w.re[[m, i, i]] = 1.0;
            }
        }
        SpectralWeights::Full(FullWeights { w })
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            SpectralWeights::Full(f) => SpectralWeights::Full(FullWeights { w: f.w.zeros_like() }),
            SpectralWeights::LowRank(l) => SpectralWeights::LowRank(LowRankWeights {
                w0: l.w0.zeros_like(),
                w1: l.w1.zeros_like(),
                w2: l.w2.zeros_like(),
            }),
        }
    }

    pub fn mode_count(&self) -> usize {
        match self {
            SpectralWeights::Full(f) => f.w.shape()[0],
            SpectralWeights::LowRank(l) => l.w1.shape()[2],
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            SpectralWeights::Full(f) => f.w.shape()[1],
            SpectralWeights::LowRank(l) => l.w0.shape()[0],
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            SpectralWeights::Full(_) => None,
            SpectralWeights::LowRank(l) => Some(l.w0.shape()[1]),
        }
    }

    /// Real scalar views in a fixed order (real plane before imaginary).
    pub fn slices(&self) -> Vec<&[f64]> {
        match self {
            SpectralWeights::Full(f) => f.w.slices().to_vec(),
            SpectralWeights::LowRank(l) => {
                let mut v = l.w0.slices().to_vec();
                v.extend(l.w1.slices());
                v.extend(l.w2.slices());
                v
            }
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            SpectralWeights::Full(f) => f.w.slices_mut().into_iter().collect(),
            SpectralWeights::LowRank(l) => {
                let mut v: Vec<&mut [f64]> = l.w0.slices_mut().into_iter().collect();
                v.extend(l.w1.slices_mut());
                v.extend(l.w2.slices_mut());
                v
            }
        }
    }

    /// Applies the map for the `slot`-th selected mode to one bin vector.
    pub fn apply_mode(&self, slot: usize, input: ArrayView1<'_, Complex64>) -> Array1<Complex64> {
        match self {
            SpectralWeights::Full(f) => {
                let n = f.w.shape()[1];
                Array1::from_shape_fn(n, |o| {
                    (0..n).map(|i| input[i] * f.w.get((slot, i, o))).sum()
                })
            }
            SpectralWeights::LowRank(l) => {
                let (n, k) = (l.w0.shape()[0], l.w0.shape()[1]);
                let a: Vec<Complex64> = (0..k)
                    .map(|h| (0..n).map(|i| input[i] * l.w0.get((i, h))).sum())
                    .collect();
                let b: Vec<Complex64> = (0..k)
                    .map(|kk| (0..k).map(|h| a[h] * l.w1.get((h, kk, slot))).sum())
                    .collect();
                Array1::from_shape_fn(l.w2.shape()[1], |o| {
                    (0..k).map(|kk| b[kk] * l.w2.get((kk, o))).sum()
                })
            }
        }
    }
}

/// Transforms along time, mixes channels on the selected bins, zeroes the
/// rest and transforms back.
pub fn fel_forward(traj: ArrayView2<'_, f64>, weights: &SpectralWeights, modes: &ModeSet) -> Result<Array2<f64>> {
    let (len, channels) = traj.dim();
    if weights.mode_count() != modes.len() {
        return invalid(format!(
            "weights cover {} modes but {} were selected",
            weights.mode_count(),
            modes.len()
        ));
    }
    if weights.channels() != channels {
        return invalid(format!(
            "weights map {} channels but the trajectory has {channels}",
            weights.channels()
        ));
    }
    let input = rfft_time(traj)?;
    if let Some(&bad) = modes.indices().iter().find(|&&m| m >= input.bins().nrows()) {
        return invalid(format!("mode {bad} exceeds the {} available bins", input.bins().nrows()));
    }
    let mut out = FrequencyTrajectory::zeros(len, channels);
    for (slot, &m) in modes.indices().iter().enumerate() {
        let mixed = weights.apply_mode(slot, input.bins().row(m));
        out.bins_mut().row_mut(m).assign(&mixed);
    }
    irfft_time(&out, len)
}

/// Scalar parameter count and its ratio to the full `M N^2` tensor.
pub fn param_count(weights: &SpectralWeights) -> (usize, f64) {
    let (m, n) = (weights.mode_count(), weights.channels());
    let count = match weights.rank() {
        None => m * n * n,
        Some(k) => n * k + k * k * m + k * n,
    };
    (count, count as f64 / (m * n * n) as f64)
}

/// Dense `[in, out]` map equivalent to the low-rank chain for one mode.
pub fn effective_map(weights: &SpectralWeights, slot: usize) -> Array2<Complex64> {
    let n = weights.channels();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let mut e = Array1::zeros(n);
        e[i] = Complex64::new(1.0, 0.0);
        out.row_mut(i).assign(&weights.apply_mode(slot, e.view()));
    }
    out
}

/// Component-wise `a * x + y` over every parameter, shapes must agree.
pub fn axpy(alpha: f64, x: &SpectralWeights, y: &mut SpectralWeights) {
    for (dst, src) in y.slices_mut().into_iter().zip(x.slices()) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += alpha * s;
        }
    }
}
