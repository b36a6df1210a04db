//! Eigendecomposition of window correlation matrices and the
//! Marchenko–Pastur reference spectrum for uncorrelated series.

use chrono::NaiveDate;
use ndarray::{Array1, Array2, ArrayView1};

use crate::correlate::{density_histogram, Histogram, WindowedCorrelation};
use crate::eigen::{asymmetry, symmetric_eigen};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Descending eigenvalues and matching sign-fixed eigenvectors (columns).
///
/// Mode indices are zero-based: mode 0 is the largest eigenvalue, the
/// market mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub end_date: NaiveDate,
    eigenvalues: Vec<T>,
    eigenvectors: Array2<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    /// `N × N`, column `k` pairs with `eigenvalues()[k]`.
    pub fn eigenvectors(&self) -> &Array2<T> {
        &self.eigenvectors
    }

    pub fn mode(&self, k: usize) -> ArrayView1<'_, T> {
        self.eigenvectors.column(k)
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> T {
        self.eigenvalues.iter().copied().sum()
    }

    /// Keeps the eigenvalues and the first `count` eigenvectors.
    pub fn leading(&self, count: usize) -> LeadingModes<T> {
        let count = count.min(self.n());
        LeadingModes {
            end_date: self.end_date,
            eigenvalues: self.eigenvalues.clone(),
            vectors: self.eigenvectors.slice(ndarray::s![.., ..count]).to_owned(),
        }
    }

    /// `U diag(λ) Uᵀ`.
    pub fn reconstruct(&self) -> Array2<T> {
        let scaled = &self.eigenvectors * &Array1::from(self.eigenvalues.clone());
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Eigenvalues of one window with only its leading eigenvectors, for
/// cross-window mode analysis without holding `N²` values per window.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadingModes<T> {
    pub end_date: NaiveDate,
    pub eigenvalues: Vec<T>,
    /// `N × K`, column `k` is mode `k`.
    pub vectors: Array2<T>,
}

impl<T: Real> LeadingModes<T> {
    pub fn mode(&self, k: usize) -> Option<ArrayView1<'_, T>> {
        (k < self.vectors.ncols()).then(|| self.vectors.column(k))
    }
}

fn symmetry_tolerance<T: Real>() -> T {
    T::epsilon().sqrt()
}

fn check_symmetric<T: Real>(m: &Array2<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("matrix is {:?}, not square", m.dim())));
    }
    let asym = asymmetry(m);
    if asym > symmetry_tolerance::<T>() {
        return Err(Error::NotSymmetric {
            asymmetry: asym.as_f64(),
        });
    }
    Ok(())
}

/// Flips `v` so its component sum is non-negative; a (numerically) zero sum
/// is resolved by making the largest-magnitude component positive.
pub(crate) fn fix_sign<T: Real>(mut v: ndarray::ArrayViewMut1<'_, T>) {
    let n = v.len();
    let sum: T = v.iter().copied().sum();
    let tol = T::epsilon() * T::from_count(n.max(1)) * T::lit(4.0);
    let flip = if sum.abs() <= tol {
        let mut best = 0;
        for i in 1..n {
            if v[i].abs() > v[best].abs() {
                best = i;
            }
        }
        n > 0 && v[best] < T::zero()
    } else {
        sum < T::zero()
    };
    if flip {
        v.mapv_inplace(|x| -x);
    }
}

/// Full spectrum of a symmetric matrix.
pub fn decompose_matrix<T: Real>(end_date: NaiveDate, matrix: &Array2<T>) -> Result<Spectrum<T>> {
    check_symmetric(matrix)?;
    let eig = symmetric_eigen(matrix, true)?;
    let n = matrix.nrows();
    let asc = eig.vectors.expect("vectors requested");
    let mut vectors = Array2::<T>::zeros((n, n));
    for k in 0..n {
        vectors.column_mut(k).assign(&asc.column(n - 1 - k));
        fix_sign(vectors.column_mut(k));
    }
    let eigenvalues = eig.values.into_iter().rev().collect();
    Ok(Spectrum {
        end_date,
        eigenvalues,
        eigenvectors: vectors,
    })
}

pub fn decompose<T: Real>(wc: &WindowedCorrelation<T>) -> Result<Spectrum<T>> {
    decompose_matrix(wc.end_date, &wc.matrix)
}

/// Descending eigenvalues only; several times cheaper than [`decompose`].
pub fn eigenvalues<T: Real>(matrix: &Array2<T>) -> Result<Vec<T>> {
    check_symmetric(matrix)?;
    let eig = symmetric_eigen(matrix, false)?;
    Ok(eig.values.into_iter().rev().collect())
}

/// Marchenko–Pastur law for `N` uncorrelated series of length `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MPModel<T> {
    /// `L / N`, strictly greater than 1.
    pub q: T,
    pub lambda_min: T,
    pub lambda_max: T,
}

/// `λ_min,max = 1 + 1/Q ∓ 2 √(1/Q)` with `Q = L / N`.
pub fn mp_bounds<T: Real>(n: usize, l: usize) -> Result<MPModel<T>> {
    if n == 0 || l <= n {
        return Err(Error::InvalidParameter(format!(
            "Marchenko-Pastur law needs L > N (got N={n}, L={l})"
        )));
    }
    let q = T::from_count(l) / T::from_count(n);
    let inv = q.recip();
    let two = T::lit(2.0);
    Ok(MPModel {
        q,
        lambda_min: T::one() + inv - two * inv.sqrt(),
        lambda_max: T::one() + inv + two * inv.sqrt(),
    })
}

impl<T: Real> MPModel<T> {
    /// `Q/(2π) √((λ_max − λ)(λ − λ_min)) / λ` on the support, zero elsewhere.
    pub fn density(&self, lambda: T) -> T {
        if lambda <= self.lambda_min || lambda >= self.lambda_max {
            return T::zero();
        }
        let two_pi = T::lit(std::f64::consts::TAU);
        self.q / two_pi * ((self.lambda_max - lambda) * (lambda - self.lambda_min)).sqrt() / lambda
    }

    /// Probability mass of the law on `[lo, hi]`.
    ///
    /// Integrates in the angle `θ` with `λ = c + r cos θ`, which removes the
    /// square-root endpoint behaviour and leaves a smooth periodic integrand.
    pub fn mass_between(&self, lo: T, hi: T) -> T {
        let lo = lo.max(self.lambda_min);
        let hi = hi.min(self.lambda_max);
        if hi <= lo {
            return T::zero();
        }
        let c = (self.lambda_max + self.lambda_min) / T::lit(2.0);
        let r = (self.lambda_max - self.lambda_min) / T::lit(2.0);
        let angle = |x: T| ((x - c) / r).max(-T::one()).min(T::one()).acos();
        let (t0, t1) = (angle(hi), angle(lo));
        let f = |t: T| {
            let s = t.sin();
            r * r * s * s / (c + r * t.cos())
        };
        let steps = 2048;
        let h = (t1 - t0) / T::from_count(steps);
        let mut acc = f(t0) + f(t1);
        for i in 1..steps {
            let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
            acc = acc + w * f(t0 + h * T::from_count(i));
        }
        let integral = acc * h / T::lit(3.0);
        self.q / T::lit(std::f64::consts::TAU) * integral
    }
}

pub fn mp_density<T: Real>(model: &MPModel<T>, lambda: T) -> T {
    model.density(lambda)
}

/// Per-window eigenvalue density over `[lo, hi]`, with the out-of-range
/// mass split into below/above.
pub fn eigenvalue_histogram<T: Real>(
    spectra: &[Spectrum<T>],
    bins: usize,
    lo: T,
    hi: T,
) -> Result<Vec<(NaiveDate, Histogram<T>)>> {
    if spectra.is_empty() {
        return Err(Error::EmptyInput);
    }
    spectra
        .iter()
        .map(|s| Ok((s.end_date, density_histogram(s.eigenvalues(), bins, lo, hi)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn day() -> NaiveDate {
        "2021-06-01".parse().unwrap()
    }

    fn equicorrelation(n: usize, rho: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { rho })
    }

    #[test]
    fn rank_one_matrix() {
        let s = decompose_matrix(day(), &arr2(&[[1.0f64, 1.0], [1.0, 1.0]])).unwrap();
        assert!((s.eigenvalues()[0] - 2.0).abs() < 1e-14);
        assert!(s.eigenvalues()[1].abs() < 1e-14);
        let r = 1.0 / 2f64.sqrt();
        assert!((s.mode(0)[0] - r).abs() < 1e-14 && (s.mode(0)[1] - r).abs() < 1e-14);
    }

    #[test]
    fn identity_matrix() {
        let s = decompose_matrix(day(), &Array2::<f64>::eye(6)).unwrap();
        assert!(s.eigenvalues().iter().all(|&l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn equicorrelation_spectrum() {
        let s = decompose_matrix(day(), &equicorrelation(4, 0.5)).unwrap();
        let want = [2.5, 0.5, 0.5, 0.5];
        for (l, w) in s.eigenvalues().iter().zip(want) {
            assert!((l - w).abs() < 1e-12);
        }
        assert!(s.mode(0).iter().all(|&u| u > 0.0));
        let recon = s.reconstruct();
        for (a, b) in recon.iter().zip(equicorrelation(4, 0.5).iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_convention() {
        let s = decompose_matrix(day(), &equicorrelation(7, 0.2)).unwrap();
        for k in 0..7 {
            let sum: f64 = s.mode(k).sum();
            assert!(sum >= -1e-12);
        }
        // antisymmetric vector: zero sum, largest component made positive
        let m = arr2(&[[1.0f64, -0.5], [-0.5, 1.0]]);
        let s = decompose_matrix(day(), &m).unwrap();
        let u = s.mode(0);
        assert!(u.sum().abs() < 1e-12);
        let imax = if u[0].abs() >= u[1].abs() { 0 } else { 1 };
        assert!(u[imax] > 0.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = arr2(&[[1.0, 0.2], [0.3, 1.0]]);
        assert!(matches!(decompose_matrix(day(), &m), Err(Error::NotSymmetric { .. })));
        assert!(eigenvalues(&m).is_err());
    }

    #[test]
    fn mp_bounds_values() {
        let m = mp_bounds::<f64>(367, 400).unwrap();
        assert!((m.lambda_max - 3.833).abs() < 5e-4);
        // 1 + 367/400 - 2 sqrt(367/400)
        let by_hand = 1.0 + 0.9175 - 2.0 * 0.9175f64.sqrt();
        assert!((m.lambda_min - by_hand).abs() < 1e-15);
        assert!((m.lambda_min - 0.00178).abs() < 1e-5);
        let wide = mp_bounds::<f64>(10, 10_000_000).unwrap();
        assert!((wide.lambda_min - 1.0).abs() < 0.01 && (wide.lambda_max - 1.0).abs() < 0.01);
        assert!(mp_bounds::<f64>(400, 400).is_err());
        assert!(mp_bounds::<f64>(400, 10).is_err());
    }

    #[test]
    fn mp_density_values() {
        let m = mp_bounds::<f64>(367, 400).unwrap();
        assert_eq!(mp_density(&m, m.lambda_max), 0.0);
        assert_eq!(mp_density(&m, m.lambda_min), 0.0);
        assert_eq!(mp_density(&m, 10.0), 0.0);
        let q = 400.0 / 367.0;
        let by_hand = q / (2.0 * std::f64::consts::PI) * ((m.lambda_max - 1.0) * (1.0 - m.lambda_min)).sqrt();
        assert!((mp_density(&m, 1.0) - by_hand).abs() < 1e-14);
        assert!((mp_density(&m, 1.0) - 0.2918).abs() < 5e-4);
    }

    #[test]
    fn mp_density_integrates_to_one() {
        // plain midpoint rule on λ, independent of the angular quadrature
        for (n, l) in [(367, 400), (100, 400), (50, 1000)] {
            let m = mp_bounds::<f64>(n, l).unwrap();
            let steps = 4_000_000;
            let h = (m.lambda_max - m.lambda_min) / steps as f64;
            let total: f64 = (0..steps)
                .map(|i| m.density(m.lambda_min + (i as f64 + 0.5) * h) * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "N={n} L={l}: {total}");
            assert!((m.mass_between(-1.0, 100.0) - 1.0).abs() < 1e-9);
            let split = m.mass_between(0.0, 1.0) + m.mass_between(1.0, 50.0);
            assert!((split - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_histogram_puts_mass_at_one() {
        let s = decompose_matrix(day(), &Array2::<f64>::eye(5)).unwrap();
        let h = eigenvalue_histogram(&[s], 10, 0.0, 5.0).unwrap();
        let (_, hist) = &h[0];
        let nonzero: Vec<_> = hist.bins.iter().filter(|(_, d)| *d > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!(nonzero[0].0 > 0.5 && nonzero[0].0 < 1.5);
        assert_eq!(hist.mass_above, 0.0);
        assert!(eigenvalue_histogram::<f64>(&[], 10, 0.0, 1.0).is_err());
    }

    #[test]
    fn out_of_range_mass_is_reported() {
        let m = Array2::<f64>::from_shape_fn((30, 30), |(i, j)| if i == j { 1.0 } else { 0.9 });
        let s = decompose_matrix(day(), &m).unwrap();
        let h = eigenvalue_histogram(&[s], 20, 0.0, 20.0).unwrap();
        assert!((h[0].1.mass_above - 1.0 / 30.0).abs() < 1e-12);
    }
}
