//! Shuffle-surrogate null model.
//!
//! Each asset's window returns are permuted independently, which destroys
//! equal-time cross-correlation while keeping every marginal distribution.
//! The eigenvalues of `repetitions` such surrogates are pooled and a high
//! percentile of the pool is the significance threshold for that window.
//!
//! All randomness derives from one master seed through [`derive_seed`], keyed
//! by (window, repetition, column), so results do not depend on evaluation
//! order or thread count.

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlate::{correlation_matrix, MetricSeries, ReturnPanel, RollingCorrelator, WindowSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectra::eigenvalues;

pub const DEFAULT_REPETITIONS: usize = 10;
pub const DEFAULT_PERCENTILE: f64 = 99.0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the node `path` below `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Independently permutes every column of a `T × N` window.
pub fn shuffle_window<T: Real>(window: ArrayView2<'_, T>, seed: u64) -> Array2<T> {
    let mut out = window.to_owned();
    let mut buf = Vec::with_capacity(window.nrows());
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[j as u64]));
        buf.clear();
        buf.extend(col.iter().copied());
        buf.shuffle(&mut rng);
        for (dst, &src) in col.iter_mut().zip(&buf) {
            *dst = src;
        }
    }
    out
}

/// Linear-interpolation percentile (`pct` in `(0, 100]`) of `values`.
pub fn percentile<T: Real>(values: &[T], pct: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile must be in (0, 100], got {pct}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

fn pooled_null_eigenvalues<T: Real>(
    window: ArrayView2<'_, T>,
    repetitions: usize,
    seed: u64,
    excluded: &[usize],
) -> Result<Vec<T>> {
    let mut pool = Vec::with_capacity(repetitions * window.ncols());
    for rep in 0..repetitions {
        let shuffled = shuffle_window(window, derive_seed(seed, &[rep as u64]));
        let (mut c, _) = correlation_matrix(shuffled.view());
        for &j in excluded {
            c.row_mut(j).fill(T::zero());
            c.column_mut(j).fill(T::zero());
            c[[j, j]] = T::one();
        }
        pool.extend(eigenvalues(&c)?);
    }
    Ok(pool)
}

/// Percentile of the pooled eigenvalues of `repetitions` shuffled copies.
pub fn null_threshold<T: Real>(window: ArrayView2<'_, T>, repetitions: usize, pct: f64, seed: u64) -> Result<T> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    if window.nrows() < 2 {
        return Err(Error::InsufficientRows {
            required: 2,
            available: window.nrows(),
        });
    }
    percentile(&pooled_null_eigenvalues(window, repetitions, seed, &[])?, pct)
}

/// Number of eigenvalues strictly above `threshold`.
pub fn significant_count<T: Real>(eigenvalues: &[T], threshold: T) -> usize {
    eigenvalues.iter().filter(|&&l| l > threshold).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub repetitions: usize,
    pub percentile: f64,
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            repetitions: DEFAULT_REPETITIONS,
            percentile: DEFAULT_PERCENTILE,
            seed: 0,
        }
    }
}

impl SurrogateParams {
    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(Error::InvalidParameter(format!(
                "percentile must be in (0, 100], got {}",
                self.percentile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSummary<T> {
    pub end_date: NaiveDate,
    pub threshold: T,
    pub significant_count: usize,
    pub repetitions: usize,
    /// Master seed of the run.
    pub seed: u64,
}

/// Surrogate test for one window, given its empirical eigenvalues and the
/// assets excluded from its correlation matrix.
pub fn surrogate_summary<T: Real>(
    window: ArrayView2<'_, T>,
    empirical: &[T],
    excluded: &[usize],
    end_date: NaiveDate,
    window_index: usize,
    params: &SurrogateParams,
) -> Result<SurrogateSummary<T>> {
    params.validate()?;
    let seed = derive_seed(params.seed, &[window_index as u64]);
    let pool = pooled_null_eigenvalues(window, params.repetitions, seed, excluded)?;
    let threshold = percentile(&pool, params.percentile)?;
    Ok(SurrogateSummary {
        end_date,
        threshold,
        significant_count: significant_count(empirical, threshold),
        repetitions: params.repetitions,
        seed: params.seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceSeries<T> {
    pub thresholds: MetricSeries<T>,
    pub counts: MetricSeries<T>,
    pub summaries: Vec<SurrogateSummary<T>>,
}

/// Threshold and significant-count series over every window of a run.
pub fn significance_series<T: Real>(
    rp: &ReturnPanel<T>,
    spec: WindowSpec,
    params: &SurrogateParams,
) -> Result<SignificanceSeries<T>> {
    params.validate()?;
    if rp.n_assets() < 2 {
        return Err(Error::TooFewAssets { found: rp.n_assets() });
    }
    let count = spec.count(rp.rows())?;
    let summaries: Vec<SurrogateSummary<T>> = crate::correlate::window_blocks(count)
        .into_par_iter()
        .map(|range| -> Result<Vec<_>> {
            RollingCorrelator::new(rp, spec, range)?
                .map(|wc| {
                    let emp = eigenvalues(&wc.matrix)?;
                    surrogate_summary(
                        rp.window(wc.end_row, spec.length),
                        &emp,
                        &wc.excluded,
                        wc.end_date,
                        wc.index,
                        params,
                    )
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let thresholds = MetricSeries::new(
        "surrogate_threshold",
        summaries.iter().map(|s| (s.end_date, s.threshold)).collect(),
    )?;
    let counts = MetricSeries::new(
        "significant_count",
        summaries
            .iter()
            .map(|s| (s.end_date, T::from_count(s.significant_count)))
            .collect(),
    )?;
    Ok(SignificanceSeries {
        thresholds,
        counts,
        summaries,
    })
}
