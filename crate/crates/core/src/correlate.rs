//! Log returns, moving-window Pearson correlation matrices and coefficient
//! statistics.
//!
//! Windows cover return rows `[t - T + 1, t]`. Consecutive windows are
//! produced from running column sums and cross-product sums (add the rows
//! entering the window, drop the rows leaving it), refreshed from scratch
//! every [`REFRESH_INTERVAL`] updates to bound accumulated rounding error.

use std::ops::Range;

use chrono::NaiveDate;
use log::warn;
use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PricePanel;
use crate::scalar::Real;

pub const DEFAULT_WINDOW_LENGTH: usize = 400;
pub const DEFAULT_COEFF_BINS: usize = 201;
pub const DEFAULT_VOLATILITY_WINDOW: usize = 100;

/// Incremental updates allowed before the running sums are rebuilt.
pub const REFRESH_INTERVAL: usize = 1000;

/// Windows handed to one worker; fixed so results do not depend on the
/// thread count.
const BLOCK_WINDOWS: usize = 64;

/// Log-return panel, one row fewer than the price panel it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel<T> {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: Array2<T>,
    first_valid: Vec<usize>,
}

impl<T: Real> ReturnPanel<T> {
    /// Builds a panel in which every return row is valid for every asset.
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, returns: Array2<T>) -> Result<Self> {
        let first_valid = vec![0; assets.len()];
        Self::with_first_valid(dates, assets, returns, first_valid)
    }

    /// `first_valid[j]` is the first return row in which asset `j` was
    /// trading on both days.
    pub fn with_first_valid(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        returns: Array2<T>,
        first_valid: Vec<usize>,
    ) -> Result<Self> {
        if returns.dim() != (dates.len(), assets.len()) || first_valid.len() != assets.len() {
            return Err(Error::DimensionMismatch(format!(
                "returns {:?} vs {} dates x {} assets",
                returns.dim(),
                dates.len(),
                assets.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidRecord("return dates not strictly increasing".into()));
        }
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidRecord("non-finite return".into()));
        }
        Ok(Self {
            dates,
            assets,
            returns,
            first_valid,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &Array2<T> {
        &self.returns
    }

    pub fn first_valid(&self) -> &[usize] {
        &self.first_valid
    }

    pub fn rows(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Rows `end_row + 1 - length ..= end_row`.
    pub fn window(&self, end_row: usize, length: usize) -> ArrayView2<'_, T> {
        self.returns.slice(s![end_row + 1 - length..=end_row, ..])
    }
}

/// Column-wise `ln p(t) - ln p(t-1)`.
pub fn log_returns<T: Real>(panel: &PricePanel<T>) -> Result<ReturnPanel<T>> {
    if panel.n_dates() < 2 {
        return Err(Error::InsufficientRows {
            required: 2,
            available: panel.n_dates(),
        });
    }
    let logp = panel.prices().mapv(T::ln);
    let returns = &logp.slice(s![1.., ..]) - &logp.slice(s![..-1, ..]);
    ReturnPanel::with_first_valid(
        panel.dates()[1..].to_vec(),
        panel.assets().to_vec(),
        returns,
        panel.first_observed(),
    )
}

/// Window length and stride, both in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length: DEFAULT_WINDOW_LENGTH,
            step: 1,
        }
    }
}

impl WindowSpec {
    pub fn new(length: usize, step: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::InvalidParameter(format!(
                "window length must be at least 2, got {length}"
            )));
        }
        if step == 0 {
            return Err(Error::InvalidParameter("window step must be at least 1".into()));
        }
        Ok(Self { length, step })
    }

    /// Number of windows over `rows` return rows: `floor((rows - T) / step) + 1`.
    pub fn count(&self, rows: usize) -> Result<usize> {
        if rows < self.length {
            return Err(Error::InsufficientRows {
                required: self.length,
                available: rows,
            });
        }
        Ok((rows - self.length) / self.step + 1)
    }

    /// Last row (inclusive) of window `w`.
    pub fn end_row(&self, w: usize) -> usize {
        self.length - 1 + w * self.step
    }

    pub fn start_row(&self, w: usize) -> usize {
        w * self.step
    }
}

/// One window's correlation matrix with summary statistics of its
/// strictly-upper-triangle coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedCorrelation<T> {
    /// Ordinal of the window within its run.
    pub index: usize,
    pub end_row: usize,
    pub end_date: NaiveDate,
    pub matrix: Array2<T>,
    pub mean_coeff: T,
    pub std_coeff: T,
    /// Assets whose correlations were zeroed in this window (constant
    /// returns, or first observation after the window start).
    pub excluded: Vec<usize>,
}

impl<T: Real> WindowedCorrelation<T> {
    pub fn from_matrix(
        index: usize,
        end_row: usize,
        end_date: NaiveDate,
        matrix: Array2<T>,
        excluded: Vec<usize>,
    ) -> Self {
        let (mean_coeff, std_coeff) = upper_mean_std(&matrix);
        Self {
            index,
            end_row,
            end_date,
            matrix,
            mean_coeff,
            std_coeff,
            excluded,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.matrix.nrows()
    }

    /// Strictly-upper-triangle entries, row-major.
    pub fn upper_triangle(&self) -> Vec<T> {
        upper_triangle(&self.matrix)
    }
}

fn upper_triangle<T: Real>(m: &Array2<T>) -> Vec<T> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[[i, j]]);
        }
    }
    out
}

fn upper_mean_std<T: Real>(m: &Array2<T>) -> (T, T) {
    let vals = upper_triangle(m);
    if vals.is_empty() {
        return (T::nan(), T::nan());
    }
    let k = T::from_count(vals.len());
    let mean = vals.iter().copied().sum::<T>() / k;
    let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / k;
    (mean, var.sqrt())
}

/// Named, date-indexed scalar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries<T> {
    pub name: String,
    points: Vec<(NaiveDate, T)>,
}

impl<T: Real> MetricSeries<T> {
    pub fn new(name: impl Into<String>, points: Vec<(NaiveDate, T)>) -> Result<Self> {
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidParameter(
                "metric series dates must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(NaiveDate, T)] {
        &self.points
    }

    pub fn values(&self) -> Vec<T> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pearson correlation of two equal-length samples.
pub fn pearson<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} samples", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("pearson needs at least 2 samples".into()));
    }
    let n = T::from_count(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::Degenerate("zero-variance input to pearson".into()));
    }
    Ok(clamp_unit(sxy / (sxx.sqrt() * syy.sqrt())))
}

fn clamp_unit<T: Real>(c: T) -> T {
    c.max(-T::one()).min(T::one())
}

fn is_constant<T: Real>(col: ArrayView1<'_, T>) -> bool {
    let first = col[0];
    col.iter().all(|&v| v == first)
}

/// Correlation matrix of a `T × N` window computed directly from centred,
/// standardized columns. Constant columns get zero correlations and are
/// returned in the exclusion list.
pub fn correlation_matrix<T: Real>(window: ArrayView2<'_, T>) -> (Array2<T>, Vec<usize>) {
    let (t, n) = window.dim();
    let tt = T::from_count(t);
    let mut z = window.to_owned();
    let mut excluded = Vec::new();
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        if is_constant(col.view()) {
            excluded.push(j);
            col.fill(T::zero());
            continue;
        }
        let mean = col.iter().copied().sum::<T>() / tt;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.iter().map(|&v| v * v).sum::<T>() / tt).sqrt();
        col.mapv_inplace(|v| v / sd);
    }
    let mut c = z.t().dot(&z) / tt;
    for i in 0..n {
        for j in i + 1..n {
            let v = clamp_unit(c[[i, j]]);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
        c[[i, i]] = T::one();
    }
    (c, excluded)
}

/// Streams the windows `range` of a rolling correlation run.
pub struct RollingCorrelator<'a, T> {
    rp: &'a ReturnPanel<T>,
    spec: WindowSpec,
    next: usize,
    stop: usize,
    /// Per-column shift (full-sample mean) applied before accumulating sums.
    shift: Vec<T>,
    /// `equal_run[[r, j]]`: length of the run of identical returns ending at row `r`.
    equal_run: Array2<u32>,
    state: Option<RunningSums<T>>,
}

struct RunningSums<T> {
    start: usize,
    end: usize,
    s1: Vec<T>,
    s2: Array2<T>,
    updates: usize,
}

impl<'a, T: Real> RollingCorrelator<'a, T> {
    pub fn new(rp: &'a ReturnPanel<T>, spec: WindowSpec, range: Range<usize>) -> Result<Self> {
        let count = spec.count(rp.rows())?;
        if range.end > count || range.start > range.end {
            return Err(Error::InvalidParameter(format!(
                "window range {range:?} outside 0..{count}"
            )));
        }
        let rows = T::from_count(rp.rows());
        let shift = rp
            .returns
            .columns()
            .into_iter()
            .map(|c| c.iter().copied().sum::<T>() / rows)
            .collect();
        let mut equal_run = Array2::<u32>::zeros(rp.returns.dim());
        for j in 0..rp.n_assets() {
            for r in 0..rp.rows() {
                equal_run[[r, j]] = if r > 0 && rp.returns[[r, j]] == rp.returns[[r - 1, j]] {
                    equal_run[[r - 1, j]] + 1
                } else {
                    1
                };
            }
        }
        Ok(Self {
            rp,
            spec,
            next: range.start,
            stop: range.end,
            shift,
            equal_run,
            state: None,
        })
    }

    fn shifted_row(&self, r: usize) -> Vec<T> {
        self.rp
            .returns
            .row(r)
            .iter()
            .zip(&self.shift)
            .map(|(&v, &c)| v - c)
            .collect()
    }

    fn rebuild(&self, start: usize, end: usize) -> RunningSums<T> {
        let mut block = self.rp.returns.slice(s![start..=end, ..]).to_owned();
        for (mut col, &c) in block.axis_iter_mut(Axis(1)).zip(&self.shift) {
            col.mapv_inplace(|v| v - c);
        }
        let s1 = block.sum_axis(Axis(0)).to_vec();
        let s2 = block.t().dot(&block);
        RunningSums {
            start,
            end,
            s1,
            s2,
            updates: 0,
        }
    }

    fn accumulate(&self, sums: &mut RunningSums<T>, r: usize, sign: T) {
        let y = self.shifted_row(r);
        let n = y.len();
        for i in 0..n {
            sums.s1[i] = sums.s1[i] + sign * y[i];
            let yi = sign * y[i];
            let mut row = sums.s2.row_mut(i);
            for j in i..n {
                row[j] = row[j] + yi * y[j];
            }
        }
    }

    fn advance(&mut self, start: usize, end: usize) {
        let step = self.spec.step;
        let reuse = match &self.state {
            Some(s) => s.end + step == end && 2 * step < self.spec.length && s.updates < REFRESH_INTERVAL,
            None => false,
        };
        if reuse {
            let mut sums = self.state.take().expect("state present");
            for r in sums.end + 1..=end {
                self.accumulate(&mut sums, r, T::one());
            }
            for r in sums.start..start {
                self.accumulate(&mut sums, r, -T::one());
            }
            sums.start = start;
            sums.end = end;
            sums.updates += 1;
            self.state = Some(sums);
        } else {
            self.state = Some(self.rebuild(start, end));
        }
    }

    fn matrix_from_sums(&self, sums: &RunningSums<T>, excluded: &[bool]) -> Option<Array2<T>> {
        let n = self.rp.n_assets();
        let tt = T::from_count(self.spec.length);
        let mean: Vec<T> = sums.s1.iter().map(|&v| v / tt).collect();
        let mut sd = vec![T::zero(); n];
        for i in 0..n {
            if excluded[i] {
                continue;
            }
            let var = sums.s2[[i, i]] / tt - mean[i] * mean[i];
            if !(var > T::zero()) {
                return None;
            }
            sd[i] = var.sqrt();
        }
        let mut c = Array2::<T>::zeros((n, n));
        for i in 0..n {
            c[[i, i]] = T::one();
            if excluded[i] {
                continue;
            }
            for j in i + 1..n {
                if excluded[j] {
                    continue;
                }
                let cov = sums.s2[[i, j]] / tt - mean[i] * mean[j];
                let v = clamp_unit(cov / (sd[i] * sd[j]));
                c[[i, j]] = v;
                c[[j, i]] = v;
            }
        }
        Some(c)
    }

    fn compute(&mut self, w: usize) -> WindowedCorrelation<T> {
        let (start, end) = (self.spec.start_row(w), self.spec.end_row(w));
        self.advance(start, end);
        let date = self.rp.dates[end];
        let len = self.spec.length as u32;
        let excluded: Vec<bool> = (0..self.rp.n_assets())
            .map(|j| self.rp.first_valid[j] > start || self.equal_run[[end, j]] >= len)
            .collect();
        for (j, _) in excluded.iter().enumerate().filter(|(_, &e)| e) {
            if self.rp.first_valid[j] > start {
                warn!(
                    "asset {} not yet trading at start of window ending {date}; correlations set to 0",
                    self.rp.assets[j]
                );
            } else {
                warn!(
                    "asset {} has constant returns in window ending {date}; correlations set to 0",
                    self.rp.assets[j]
                );
            }
        }
        let sums = self.state.as_ref().expect("state built");
        let matrix = match self.matrix_from_sums(sums, &excluded) {
            Some(m) => m,
            None => {
                // rounding drove a variance non-positive; rebuild exactly
                let fresh = self.rebuild(start, end);
                let m = self
                    .matrix_from_sums(&fresh, &excluded)
                    .unwrap_or_else(|| correlation_matrix(self.rp.window(end, self.spec.length)).0);
                self.state = Some(fresh);
                m
            }
        };
        let excluded_idx = excluded
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(j, _)| j)
            .collect();
        WindowedCorrelation::from_matrix(w, end, date, matrix, excluded_idx)
    }
}

impl<T: Real> Iterator for RollingCorrelator<'_, T> {
    type Item = WindowedCorrelation<T>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.stop {
            return None;
        }
        let w = self.next;
        self.next += 1;
        Some(self.compute(w))
    }
}

/// Fixed-size contiguous blocks of window ordinals.
pub(crate) fn window_blocks(count: usize) -> Vec<Range<usize>> {
    (0..count)
        .step_by(BLOCK_WINDOWS)
        .map(|s| s..(s + BLOCK_WINDOWS).min(count))
        .collect()
}

/// All windows of a run, evaluated block-parallel.
pub fn rolling_correlations<T: Real>(rp: &ReturnPanel<T>, spec: WindowSpec) -> Result<Vec<WindowedCorrelation<T>>> {
    if rp.n_assets() < 2 {
        return Err(Error::TooFewAssets { found: rp.n_assets() });
    }
    let count = spec.count(rp.rows())?;
    let blocks = window_blocks(count)
        .into_par_iter()
        .map(|range| RollingCorrelator::new(rp, spec, range).map(Iterator::collect::<Vec<_>>))
        .collect::<Result<Vec<_>>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Density histogram of the strictly-upper-triangle coefficients over
/// `[-1, 1]`; returns `(bin_center, density)` pairs.
pub fn coefficient_histogram<T: Real>(wc: &WindowedCorrelation<T>, bins: usize) -> Result<Vec<(T, T)>> {
    density_histogram(&wc.upper_triangle(), bins, -T::one(), T::one()).map(|h| h.bins)
}

/// Histogram with mass outside `[lo, hi]` reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    /// `(bin_center, density)`, density normalized by the total sample count.
    pub bins: Vec<(T, T)>,
    pub mass_below: T,
    pub mass_above: T,
}

pub(crate) fn density_histogram<T: Real>(values: &[T], bins: usize, lo: T, hi: T) -> Result<Histogram<T>> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    if !(hi > lo) {
        return Err(Error::InvalidParameter("histogram range is empty".into()));
    }
    let width = (hi - lo) / T::from_count(bins);
    let mut counts = vec![0usize; bins];
    let (mut below, mut above) = (0usize, 0usize);
    for &v in values {
        if v < lo {
            below += 1;
        } else if v > hi {
            above += 1;
        } else {
            let idx = ((v - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1);
            counts[idx] += 1;
        }
    }
    let total = T::from_count(values.len().max(1));
    let half = T::lit(0.5);
    let bins = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let center = lo + width * (T::from_count(i) + half);
            (center, T::from_count(c) / (total * width))
        })
        .collect();
    Ok(Histogram {
        bins,
        mass_below: T::from_count(below) / total,
        mass_above: T::from_count(above) / total,
    })
}

/// Trailing mean of absolute returns; the first point is at the
/// `window`-th observation.
pub fn index_volatility<T: Real>(index_returns: &MetricSeries<T>, window: usize) -> Result<MetricSeries<T>> {
    if window == 0 {
        return Err(Error::InvalidParameter("volatility window must be at least 1".into()));
    }
    let pts = index_returns.points();
    if pts.len() < window {
        return Err(Error::InsufficientRows {
            required: window,
            available: pts.len(),
        });
    }
    let w = T::from_count(window);
    let out = pts
        .windows(window)
        .map(|win| {
            let m = win.iter().map(|p| p.1.abs()).sum::<T>() / w;
            (win[window - 1].0, m)
        })
        .collect();
    MetricSeries::new("index_volatility", out)
}

/// Equal-weight average of asset returns, used when no index series is given.
pub fn equal_weight_index<T: Real>(rp: &ReturnPanel<T>) -> MetricSeries<T> {
    let means = rp.returns.mean_axis(Axis(1)).expect("non-empty panel");
    let points = rp.dates.iter().copied().zip(means.iter().copied()).collect();
    MetricSeries::new("index_return", points).expect("panel dates increasing")
}
