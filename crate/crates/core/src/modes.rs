//! Interpretation of eigenvectors: per-industry contribution, projection on
//! the market mode, and cross-window rankings of the largest components.

use std::ops::Range;

use chrono::NaiveDate;
use log::warn;
use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::panel::IndustryMap;
use crate::scalar::Real;
use crate::spectra::{LeadingModes, Spectrum};

pub const DEFAULT_TOP_COUNT: usize = 10;
pub const DEFAULT_SMALL_GROUP_FLOOR: usize = 3;

/// Mean squared eigenvector component per industry for one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct IndustryContribution<T> {
    pub end_date: NaiveDate,
    /// Zero-based mode index.
    pub k: usize,
    /// `(code, X)` in industry-code order; codes with no assets are omitted.
    pub per_code: Vec<(String, T)>,
}

impl<T: Real> IndustryContribution<T> {
    pub fn get(&self, code: &str) -> Option<T> {
        self.per_code.iter().find(|(c, _)| c == code).map(|(_, x)| *x)
    }
}

/// `X_l = (1/N_l) Σ_{i∈l} u_i²` for every non-empty group `l`.
pub fn contribution_of_vector<T: Real>(
    vector: ArrayView1<'_, T>,
    assets: &[String],
    imap: &IndustryMap,
    end_date: NaiveDate,
    k: usize,
) -> Result<IndustryContribution<T>> {
    if vector.len() != assets.len() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvector of length {} for {} assets",
            vector.len(),
            assets.len()
        )));
    }
    let sizes = imap.group_sizes(assets);
    let mut sums = vec![T::zero(); sizes.len()];
    for (a, &u) in assets.iter().zip(vector.iter()) {
        let code = imap.resolve(a);
        let g = sizes.iter().position(|(c, _)| c == code).expect("code listed");
        sums[g] = sums[g] + u * u;
    }
    let per_code = sizes
        .into_iter()
        .zip(sums)
        .filter(|((_, n), _)| *n > 0)
        .map(|((code, n), s)| (code, s / T::from_count(n)))
        .collect();
    Ok(IndustryContribution { end_date, k, per_code })
}

pub fn industry_contribution<T: Real>(
    spectrum: &Spectrum<T>,
    assets: &[String],
    imap: &IndustryMap,
    k: usize,
) -> Result<IndustryContribution<T>> {
    if k >= spectrum.n() {
        return Err(Error::InvalidParameter(format!("mode {k} outside 0..{}", spectrum.n())));
    }
    contribution_of_vector(spectrum.mode(k), assets, imap, spectrum.end_date, k)
}

/// Industry codes whose group size is positive but below `floor`.
pub fn small_groups(imap: &IndustryMap, assets: &[String], floor: usize) -> Vec<String> {
    imap.group_sizes(assets)
        .into_iter()
        .filter(|&(_, n)| n > 0 && n < floor)
        .map(|(c, _)| c)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeProjection<T> {
    pub end_date: NaiveDate,
    /// `G¹(t) = Σ_j u_j G_j(t)` over the window.
    pub series: Vec<T>,
    /// OLS slope of standardized `G¹` on the standardized index return.
    pub slope: T,
    pub r2: T,
}

fn zscore<T: Real>(xs: &[T]) -> Option<Vec<T>> {
    if xs.iter().all(|&x| x == xs[0]) {
        return None;
    }
    let n = T::from_count(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let sd = (xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n).sqrt();
    (sd > T::zero()).then(|| xs.iter().map(|&x| (x - mean) / sd).collect())
}

/// Projects window returns on the market mode and regresses the projection
/// on the index return, both axes standardized within the window.
pub fn project_market_mode<T: Real>(
    window: ArrayView2<'_, T>,
    market_mode: ArrayView1<'_, T>,
    index_returns: &[T],
    end_date: NaiveDate,
) -> Result<ModeProjection<T>> {
    if window.ncols() != market_mode.len() || window.nrows() != index_returns.len() {
        return Err(Error::DimensionMismatch(format!(
            "window {:?}, mode of length {}, index of length {}",
            window.dim(),
            market_mode.len(),
            index_returns.len()
        )));
    }
    if window.nrows() < 2 {
        return Err(Error::InsufficientRows {
            required: 2,
            available: window.nrows(),
        });
    }
    let series = window.dot(&market_mode).to_vec();
    let x = zscore(index_returns)
        .ok_or_else(|| Error::Degenerate(format!("index return constant in window ending {end_date}")))?;
    let y = zscore(&series)
        .ok_or_else(|| Error::Degenerate(format!("market-mode projection constant in window ending {end_date}")))?;
    let sxy: T = x.iter().zip(&y).map(|(&a, &b)| a * b).sum();
    let sxx: T = x.iter().map(|&a| a * a).sum();
    let syy: T = y.iter().map(|&b| b * b).sum();
    let slope = sxy / sxx;
    let r2 = (sxy * sxy / (sxx * syy)).min(T::one());
    Ok(ModeProjection {
        end_date,
        series,
        slope,
        r2,
    })
}

/// Contiguous run of windows grouped between dividing dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Period {
    /// End date of the first window in the period.
    pub start: NaiveDate,
    /// End date of the last window in the period.
    pub end: NaiveDate,
    /// Window indices covered.
    pub windows: Range<usize>,
}

/// Splits window end dates into half-open periods `[d_i, d_{i+1})`, with a
/// leading and a trailing period. Empty periods are dropped; dividers
/// outside the end-date range are ignored with a warning.
pub fn period_partition(end_dates: &[NaiveDate], dividers: &[NaiveDate]) -> Result<Vec<Period>> {
    if end_dates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if dividers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("dividers must be strictly increasing".into()));
    }
    let (first, last) = (end_dates[0], end_dates[end_dates.len() - 1]);
    let mut cuts = vec![0];
    for &d in dividers {
        if d < first || d > last {
            warn!("divider {d} outside window end dates {first}..={last}; ignored");
            continue;
        }
        cuts.push(end_dates.partition_point(|&e| e < d));
    }
    cuts.push(end_dates.len());
    Ok(cuts
        .windows(2)
        .filter(|c| c[1] > c[0])
        .map(|c| Period {
            start: end_dates[c[0]],
            end: end_dates[c[1] - 1],
            windows: c[0]..c[1],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedComponent<T> {
    pub asset: String,
    pub average_rank: T,
    pub industry: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentRanking<T> {
    /// Zero-based mode index.
    pub k: usize,
    pub period: (NaiveDate, NaiveDate),
    pub entries: Vec<RankedComponent<T>>,
}

/// Ranks assets per window by descending component of mode `k`, averages
/// the ranks over `windows` and returns the `top_count` smallest averages.
/// Ties are broken by asset id, both within a window and in the final order.
pub fn rank_components<T: Real>(
    windows: &[LeadingModes<T>],
    assets: &[String],
    imap: &IndustryMap,
    k: usize,
    top_count: usize,
    include_market: bool,
) -> Result<ComponentRanking<T>> {
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 && !include_market {
        return Err(Error::InvalidParameter(
            "mode 0 is the market mode; enable include_market to rank it".into(),
        ));
    }
    let n = assets.len();
    let mut rank_sum = vec![0usize; n];
    for w in windows {
        let u = w.mode(k).ok_or_else(|| {
            Error::InvalidParameter(format!("mode {k} not retained for window ending {}", w.end_date))
        })?;
        if u.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} components for {n} assets",
                u.len()
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            u[b].partial_cmp(&u[a])
                .expect("finite components")
                .then_with(|| assets[a].cmp(&assets[b]))
        });
        for (pos, &i) in order.iter().enumerate() {
            rank_sum[i] += pos + 1;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| rank_sum[a].cmp(&rank_sum[b]).then_with(|| assets[a].cmp(&assets[b])));
    let count = T::from_count(windows.len());
    let entries = idx
        .into_iter()
        .take(top_count)
        .map(|i| RankedComponent {
            asset: assets[i].clone(),
            average_rank: T::from_count(rank_sum[i]) / count,
            industry: imap.resolve(&assets[i]).to_string(),
        })
        .collect();
    Ok(ComponentRanking {
        k,
        period: (windows[0].end_date, windows[windows.len() - 1].end_date),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{load_industry_map, IndustryScheme};
    use ndarray::{arr1, Array1, Array2};
    use proptest::prelude::*;

    fn day(i: u64) -> NaiveDate {
        "2010-01-01".parse::<NaiveDate>().unwrap() + chrono::Days::new(i)
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:02}")).collect()
    }

    fn two_group_map(assets: &[String], first: usize) -> IndustryMap {
        let recs: Vec<(String, String)> = assets
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), if i < first { "G1" } else { "G2" }.to_string()))
            .collect();
        load_industry_map(recs, &IndustryScheme::Inferred).unwrap()
    }

    #[test]
    fn uniform_vector_spreads_evenly() {
        let n = 8;
        let assets = names(n);
        let imap = two_group_map(&assets, 3);
        let u = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        let x = contribution_of_vector(u.view(), &assets, &imap, day(0), 1).unwrap();
        for (_, v) in &x.per_code {
            assert!((v - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_vector() {
        let assets = names(9);
        let imap = two_group_map(&assets, 5);
        let mut u = Array1::<f64>::zeros(9);
        u[2] = 1.0;
        let x = contribution_of_vector(u.view(), &assets, &imap, day(0), 1).unwrap();
        assert!((x.get("G1").unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(x.get("G2").unwrap(), 0.0);
    }

    #[test]
    fn empty_groups_are_omitted_and_unknown_is_reported() {
        let assets = names(4);
        let imap = load_industry_map([("s00", "C7"), ("s01", "C7")], &IndustryScheme::Csrc).unwrap();
        let u = arr1(&[0.5f64, 0.5, 0.5, 0.5]);
        let x = contribution_of_vector(u.view(), &assets, &imap, day(0), 0).unwrap();
        assert_eq!(x.per_code.len(), 2);
        assert!(x.get("C7").is_some() && x.get("UNK").is_some());
        // mass accounting Σ N_l X_l = 1
        let mass = 2.0 * x.get("C7").unwrap() + 2.0 * x.get("UNK").unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_group_flagging() {
        let assets = names(6);
        let imap = two_group_map(&assets, 2);
        assert_eq!(small_groups(&imap, &assets, 3), vec!["G1".to_string()]);
    }

    #[test]
    fn projection_equals_index() {
        let w = Array2::from_shape_fn((30, 3), |(t, j)| ((t * (j + 2)) as f64 * 0.7).sin());
        let u = arr1(&[0.0, 1.0, 0.0]);
        let index = w.column(1).to_vec();
        let p = project_market_mode(w.view(), u.view(), &index, day(0)).unwrap();
        assert!((p.slope - 1.0).abs() < 1e-12);
        assert!((p.r2 - 1.0).abs() < 1e-12);
        assert_eq!(p.series.len(), 30);
        assert!(project_market_mode(w.view(), u.view(), &[0.1; 30], day(0)).is_err());
        assert!(project_market_mode(w.view(), u.view(), &[0.1; 5], day(0)).is_err());
    }

    fn modes_with(vectors: &[Vec<f64>], start: u64) -> Vec<LeadingModes<f64>> {
        vectors
            .iter()
            .enumerate()
            .map(|(i, v)| LeadingModes {
                end_date: day(start + i as u64),
                eigenvalues: vec![2.0, 1.0],
                vectors: Array2::from_shape_fn((v.len(), 2), |(r, c)| if c == 1 { v[r] } else { 0.5 }),
            })
            .collect()
    }

    #[test]
    fn single_window_ranking_is_component_order() {
        let assets = names(4);
        let imap = two_group_map(&assets, 2);
        let w = modes_with(&[vec![0.1, 0.7, -0.3, 0.4]], 0);
        let r = rank_components(&w, &assets, &imap, 1, 4, false).unwrap();
        let order: Vec<_> = r.entries.iter().map(|e| e.asset.as_str()).collect();
        assert_eq!(order, ["s01", "s03", "s00", "s02"]);
        assert_eq!(r.entries[0].average_rank, 1.0);
        assert_eq!(r.entries[0].industry, "G1");
    }

    #[test]
    fn reversed_orders_tie_by_asset_id() {
        let assets = vec!["b".to_string(), "a".to_string()];
        let imap = IndustryMap::default();
        let w = modes_with(&[vec![0.8, 0.2], vec![0.2, 0.8]], 0);
        let r = rank_components(&w, &assets, &imap, 1, 2, false).unwrap();
        assert_eq!(r.entries[0].average_rank, 1.5);
        assert_eq!(r.entries[1].average_rank, 1.5);
        assert_eq!(r.entries[0].asset, "a");
        assert_eq!(r.period, (day(0), day(1)));
    }

    #[test]
    fn ranking_errors() {
        let assets = names(2);
        let imap = IndustryMap::default();
        assert!(rank_components::<f64>(&[], &assets, &imap, 1, 1, false).is_err());
        let w = modes_with(&[vec![0.1, 0.2]], 0);
        assert!(rank_components(&w, &assets, &imap, 0, 1, false).is_err());
        assert!(rank_components(&w, &assets, &imap, 0, 1, true).is_ok());
        assert!(rank_components(&w, &assets, &imap, 5, 1, false).is_err());
    }

    #[test]
    fn partition_examples() {
        let ends: Vec<_> = (0..10).map(day).collect();
        let one = period_partition(&ends, &[]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].windows, 0..10);

        let parts = period_partition(&ends, &[day(3), day(7)]).unwrap();
        assert_eq!(
            parts.iter().map(|p| p.windows.clone()).collect::<Vec<_>>(),
            vec![0..3, 3..7, 7..10]
        );
        assert_eq!((parts[1].start, parts[1].end), (day(3), day(6)));

        let dropped = period_partition(&ends, &[day(0)]).unwrap();
        assert_eq!(dropped.len(), 1);
        assert_eq!(dropped[0].windows, 0..10);

        let ignored = period_partition(&ends, &[day(50)]).unwrap();
        assert_eq!(ignored.len(), 1);
        assert!(period_partition(&ends, &[day(5), day(2)]).is_err());
    }

    proptest! {
        #[test]
        fn ranking_invariant_under_positive_scaling(
            comps in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..5),
            scale in 0.01f64..100.0,
        ) {
            let assets = names(6);
            let imap = IndustryMap::default();
            let scaled: Vec<Vec<f64>> = comps.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
            let a = rank_components(&modes_with(&comps, 0), &assets, &imap, 1, 6, false).unwrap();
            let b = rank_components(&modes_with(&scaled, 0), &assets, &imap, 1, 6, false).unwrap();
            prop_assert_eq!(a.entries, b.entries);
        }

        #[test]
        fn contribution_mass_accounting(raw in prop::collection::vec(-1.0f64..1.0, 2..30), split in 1usize..29) {
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-6);
            let u: Array1<f64> = raw.iter().map(|x| x / norm).collect();
            let assets = names(u.len());
            let imap = two_group_map(&assets, split.min(u.len()));
            let x = contribution_of_vector(u.view(), &assets, &imap, day(0), 1).unwrap();
            let sizes = imap.group_sizes(&assets);
            let mass: f64 = x.per_code.iter().map(|(c, v)| {
                *v * sizes.iter().find(|(s, _)| s == c).unwrap().1 as f64
            }).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }
}
