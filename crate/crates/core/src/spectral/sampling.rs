//! Column-sampling check for truncated spectra: keep the leading columns,
//! sample a few of the rest, and compare the projection residual with the
//! `(1 + eps) a_min sqrt((n - s) d)` envelope.

use nalgebra::DMatrix;
use ndarray::ArrayView2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCheck {
    /// `||A - P(A)||_F`
    pub error: f64,
    pub bound: f64,
    /// Largest magnitude outside the kept leading columns.
    pub a_min: f64,
    pub selected: Vec<usize>,
}

impl ProjectionCheck {
    pub fn within_bound(&self) -> bool {
        self.error <= self.bound
    }
}

/// Projects `a` onto the span of its first `keep_first` columns plus `extra`
/// randomly chosen later columns.
pub fn column_projection_error(
    a: ArrayView2<'_, f64>,
    keep_first: usize,
    extra: usize,
    epsilon: f64,
    seed: u64,
) -> Result<ProjectionCheck> {
    let (d, n) = a.dim();
    if keep_first + extra > n {
        return invalid(format!(
            "cannot select {keep_first} + {extra} columns from {n}"
        ));
    }
    if epsilon < 0.0 {
        return invalid("epsilon must be non-negative");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<usize> = (0..keep_first).collect();
    if extra > 0 {
        selected.extend(
            index::sample(&mut rng, n - keep_first, extra)
                .into_iter()
                .map(|i| i + keep_first),
        );
    }
    selected.sort_unstable();

    let a_min = a
        .columns()
        .into_iter()
        .skip(keep_first)
        .flat_map(|c| c.into_iter().copied())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = (1.0 + epsilon) * a_min * (((n - keep_first) * d) as f64).sqrt();

    // selected columns lie in the span exactly; only the rest contribute
    let rest: Vec<usize> = (0..n).filter(|j| selected.binary_search(j).is_err()).collect();
    let others = DMatrix::from_fn(d, rest.len(), |i, j| a[[i, rest[j]]]);
    let error = if selected.is_empty() || rest.is_empty() {
        others.norm()
    } else {
        let basis = DMatrix::from_fn(d, selected.len(), |i, j| a[[i, selected[j]]]);
        let svd = basis.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1.0);
        let coef = svd
            .solve(&others, tol)
            .map_err(|e| crate::error::FilmError::Numerical(e.to_string()))?;
        (others - basis * coef).norm()
    };

    Ok(ProjectionCheck {
        error,
        bound,
        a_min,
        selected,
    })
}
