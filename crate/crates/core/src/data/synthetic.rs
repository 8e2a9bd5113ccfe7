//! Seeded synthetic series.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TimeSeriesTable;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineComponent {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

/// `x_t = sum a sin(2 pi t / p + phi) + slope t + sigma g_t`, one column.
pub fn gen_sine_trend(
    length: usize,
    components: &[SineComponent],
    trend_slope: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<TimeSeriesTable> {
    if length == 0 {
        return invalid("length must be at least 1");
    }
    if components.iter().any(|c| c.period == 0.0) {
        return invalid("component periods must be non-zero");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series: Vec<f64> = (0..length)
        .map(|t| {
            let t = t as f64;
            let seasonal: f64 = components
                .iter()
                .map(|c| c.amplitude * (std::f64::consts::TAU * t / c.period + c.phase).sin())
                .sum();
            let g: f64 = rng.sample(StandardNormal);
            seasonal + trend_slope * t + noise_sigma * g
        })
        .collect();
    TimeSeriesTable::from_series("value", &series)
}

/// Length of [`desk_series`].
pub const DESK_LENGTH: usize = 10_000;

/// Daily and weekly cycles (periods 24 and 168), a slow upward trend and
/// Gaussian noise: the seasonal+trend+noise series used for small
/// end-to-end runs.
pub fn desk_series(seed: u64) -> Result<TimeSeriesTable> {
    let components = [
        SineComponent { amplitude: 1.0, period: 24.0, phase: 0.0 },
        SineComponent { amplitude: 0.5, period: 168.0, phase: 1.0 },
    ];
    gen_sine_trend(DESK_LENGTH, &components, 2e-4, 0.2, seed)
}

/// `x_{t+1} = A x_t + b` with `A` block-diagonal 2x2 rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryAr {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    pub x0: Array1<f64>,
}

impl UnitaryAr {
    /// Rotation angles, `b` and `x0` drawn from `seed`.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return invalid(format!("dimension must be even and at least 2, got {dim}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Array2::zeros((dim, dim));
        for blk in 0..dim / 2 {
            let (sin, cos) = rng.random_range(0.0..std::f64::consts::TAU).sin_cos();
            let i = 2 * blk;
            a[[i, i]] = cos;
            a[[i, i + 1]] = -sin;
            a[[i + 1, i]] = sin;
            a[[i + 1, i + 1]] = cos;
        }
        let b = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let x0 = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        Ok(Self { a, b, x0 })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `steps + 1` states starting from `x0`, Gaussian noise of scale `sigma`.
    pub fn simulate<R: Rng + ?Sized>(&self, steps: usize, sigma: f64, rng: &mut R) -> Array2<f64> {
        let mut out = Array2::zeros((steps + 1, self.dim()));
        out.row_mut(0).assign(&self.x0);
        for t in 0..steps {
            let mut next = self.a.dot(&out.row(t)) + &self.b;
            if sigma != 0.0 {
                next.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
            }
            out.row_mut(t + 1).assign(&next);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArTrajectory {
    pub system: UnitaryAr,
    /// Noisy states, `(steps + 1) x dim`.
    pub states: Array2<f64>,
    /// The same recursion without noise.
    pub deterministic: Array2<f64>,
}

pub fn gen_ar_unitary(dim: usize, steps: usize, sigma: f64, seed: u64) -> Result<ArTrajectory> {
    let system = UnitaryAr::new(dim, seed)?;
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let states = system.simulate(steps, sigma, &mut noise);
    let deterministic = system.simulate(steps, 0.0, &mut noise);
    Ok(ArTrajectory {
        system,
        states,
        deterministic,
    })
}

/// Random walk with steps uniform in `[-c / length, c / length]`, so the
/// signal is `c`-Lipschitz on the unit interval.
pub fn gen_lipschitz(lipschitz_const: f64, length: usize, seed: u64) -> Result<Vec<f64>> {
    if length < 2 {
        return invalid("length must be at least 2");
    }
    if !(lipschitz_const >= 0.0) || !lipschitz_const.is_finite() {
        return invalid("Lipschitz constant must be finite and non-negative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = lipschitz_const / length as f64;
    let mut x = 0.0;
    Ok((0..length)
        .map(|i| {
            if i > 0 && step > 0.0 {
                x += rng.random_range(-step..=step);
            }
            x
        })
        .collect())
}
