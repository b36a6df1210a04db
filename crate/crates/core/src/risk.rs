//! Principal-component view of a window and the cumulative risk fraction
//! (absorption ratio) `h_n = Σ_{k≤n} λ_k / Σ_k λ_k`.
//!
//! Total variance of the standardized returns is the trace of the
//! correlation matrix, i.e. the eigenvalue sum, which equals `N`.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};

use crate::correlate::MetricSeries;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectra::Spectrum;

/// Default component counts; the full count `N` is appended per run.
pub const DEFAULT_CRF_COUNTS: [usize; 3] = [1, 10, 50];

/// Centres and scales each column by its own window mean and population
/// standard deviation.
pub fn standardize<T: Real>(window: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let t = T::from_count(window.nrows());
    let mut z = window.to_owned();
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.iter().copied().sum::<T>() / t;
        col.mapv_inplace(|v| v - mean);
        let sd = (col.iter().map(|&v| v * v).sum::<T>() / t).sqrt();
        if !(sd > T::zero()) {
            return Err(Error::Degenerate(format!("column {j} has zero variance")));
        }
        col.mapv_inplace(|v| v / sd);
    }
    Ok(z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaDecomposition<T> {
    /// Factor loadings `L_ik`, the eigenvector components.
    pub loadings: Array2<T>,
    /// `T × N` principal-component series `ζ = Z U`.
    pub components: Array2<T>,
    pub eigenvalues: Vec<T>,
}

impl<T: Real> PcaDecomposition<T> {
    /// Standardized returns rebuilt as `Σ_k L_ik ζ_k`.
    pub fn reconstruct(&self) -> Array2<T> {
        self.components.dot(&self.loadings.t())
    }

    /// Sample second moments `⟨ζ_k ζ_l⟩` over the window.
    pub fn component_moments(&self) -> Array2<T> {
        let t = T::from_count(self.components.nrows());
        self.components.t().dot(&self.components) / t
    }
}

/// Projects standardized window returns onto the eigenvectors of the
/// window's correlation matrix.
pub fn pca_decompose<T: Real>(standardized: ArrayView2<'_, T>, spectrum: &Spectrum<T>) -> Result<PcaDecomposition<T>> {
    if standardized.ncols() != spectrum.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} return columns vs spectrum of size {}",
            standardized.ncols(),
            spectrum.n()
        )));
    }
    let loadings = spectrum.eigenvectors().clone();
    let components = standardized.dot(&loadings);
    Ok(PcaDecomposition {
        loadings,
        components,
        eigenvalues: spectrum.eigenvalues().to_vec(),
    })
}

/// Prefix sums of the clamped eigenvalues divided by their total, so that
/// `h_N` is exactly 1 and the sequence is nondecreasing.
fn cumulative_fractions<T: Real>(eigenvalues: &[T]) -> Vec<T> {
    let clamped: Vec<T> = eigenvalues.iter().map(|&l| l.max(T::zero())).collect();
    let total: T = clamped.iter().copied().fold(T::zero(), |a, b| a + b);
    let mut acc = T::zero();
    clamped
        .iter()
        .map(|&l| {
            acc = acc + l;
            acc / total
        })
        .collect()
}

/// Fraction of total variance carried by the `n` largest components.
pub fn crf<T: Real>(spectrum: &Spectrum<T>, n: usize) -> Result<T> {
    crf_from_eigenvalues(spectrum.eigenvalues(), n)
}

pub fn crf_from_eigenvalues<T: Real>(eigenvalues: &[T], n: usize) -> Result<T> {
    if n == 0 || n > eigenvalues.len() {
        return Err(Error::InvalidParameter(format!(
            "component count {n} outside 1..={}",
            eigenvalues.len()
        )));
    }
    Ok(cumulative_fractions(eigenvalues)[n - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfSeries<T> {
    pub n_values: Vec<usize>,
    pub series: BTreeMap<usize, MetricSeries<T>>,
}

/// `DEFAULT_CRF_COUNTS` restricted to `1..N`, plus `N`.
pub fn default_crf_counts(n_assets: usize) -> Vec<usize> {
    let mut out: Vec<usize> = DEFAULT_CRF_COUNTS.iter().copied().filter(|&k| k < n_assets).collect();
    out.push(n_assets);
    out
}

pub fn crf_series<T: Real>(spectra: &[Spectrum<T>], n_values: &[usize]) -> Result<CrfSeries<T>> {
    if spectra.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut series = BTreeMap::new();
    for &n in n_values {
        let points = spectra
            .iter()
            .map(|s| Ok((s.end_date, crf(s, n)?)))
            .collect::<Result<Vec<_>>>()?;
        series.insert(n, MetricSeries::new(format!("crf_{n}"), points)?);
    }
    Ok(CrfSeries {
        n_values: n_values.to_vec(),
        series,
    })
}
