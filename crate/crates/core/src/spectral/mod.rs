//! Frequency-domain processing of memory trajectories: real FFT along time,
//! bin selection, and the learnable per-mode channel mixing.

pub mod fft;
pub mod modes;
pub mod sampling;
pub mod weights;

pub use fft::{bin_count, irfft_time, rfft_time, FrequencyTrajectory};
pub use modes::{select_modes, ModePolicy, ModeSet};
pub use sampling::{column_projection_error, ProjectionCheck};
pub use weights::{
    axpy, effective_map, fel_forward, param_count, ComplexArray, FullWeights, LowRankWeights,
    SpectralWeights,
};
