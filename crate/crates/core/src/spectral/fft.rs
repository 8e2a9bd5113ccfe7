use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, FilmError, Result};

/// Non-negative-frequency bins of a real trajectory, one column per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrajectory {
    bins: Array2<Complex64>,
    original_length: usize,
}

impl FrequencyTrajectory {
    pub fn new(bins: Array2<Complex64>, original_length: usize) -> Result<Self> {
        if bins.nrows() != bin_count(original_length) {
            return invalid(format!(
                "{} bins do not match a length-{original_length} signal (expected {})",
                bins.nrows(),
                bin_count(original_length)
            ));
        }
        Ok(Self {
            bins,
            original_length,
        })
    }

    pub fn zeros(original_length: usize, channels: usize) -> Self {
        Self {
            bins: Array2::zeros((bin_count(original_length), channels)),
            original_length,
        }
    }

    pub fn bins(&self) -> &Array2<Complex64> {
        &self.bins
    }

    pub fn bins_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.bins
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }
}

/// Number of real-FFT bins for a length-`len` signal.
pub fn bin_count(len: usize) -> usize {
    len / 2 + 1
}

/// Unnormalized forward DFT along the time axis (rows).
pub fn rfft_time(traj: ArrayView2<'_, f64>) -> Result<FrequencyTrajectory> {
    let (len, channels) = traj.dim();
    if len == 0 {
        return invalid("cannot transform an empty trajectory");
    }
    if let Some(pos) = traj.iter().position(|v| !v.is_finite()) {
        return Err(FilmError::NonFinite {
            index: pos / channels.max(1),
            detail: "trajectory sample entering the FFT".into(),
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut bins = Array2::zeros((bin_count(len), channels));
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (col, mut out) in traj.axis_iter(Axis(1)).zip(bins.axis_iter_mut(Axis(1))) {
        for (b, &v) in buf.iter_mut().zip(col.iter()) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (o, b) in out.iter_mut().zip(buf.iter()) {
            *o = *b;
        }
    }
    Ok(FrequencyTrajectory {
        bins,
        original_length: len,
    })
}

/// Inverse of [`rfft_time`] with the `1/L` factor. Imaginary parts of the DC
/// and (even-length) Nyquist bins do not contribute to the real output.
pub fn irfft_time(freq: &FrequencyTrajectory, length: usize) -> Result<Array2<f64>> {
    if length == 0 || length != freq.original_length || freq.bins.nrows() != bin_count(length) {
        return invalid(format!(
            "cannot invert {} bins (source length {}) to length {length}",
            freq.bins.nrows(),
            freq.original_length
        ));
    }
    let channels = freq.bins.ncols();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(length);
    let mut out = Array2::zeros((length, channels));
    let mut buf = vec![Complex64::new(0.0, 0.0); length];
    let scale = 1.0 / length as f64;
    for (col, mut dst) in freq.bins.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
        buf[0] = col[0];
        for k in 1..length {
            buf[k] = if k < col.len() {
                col[k]
            } else {
                col[length - k].conj()
            };
        }
        ifft.process(&mut buf);
        for (d, b) in dst.iter_mut().zip(buf.iter()) {
            *d = b.re * scale;
        }
    }
    Ok(out)
}
