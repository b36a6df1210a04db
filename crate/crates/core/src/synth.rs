//! Synthetic Gaussian return panels with planted correlation structure.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::correlate::ReturnPanel;
use crate::error::{Error, Result};
use crate::panel::{load_industry_map, IndustryMap, IndustryScheme, PriceRecord};
use crate::scalar::Real;

/// Code given to assets outside every planted sector.
pub const MARKET_ONLY_CODE: &str = "MKT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthModel {
    Iid,
    /// Every pair has correlation `rho`.
    Equicorrelated {
        rho: f64,
    },
    /// `r_i = β_i f + noise · ε_i` with `β_i ~ U[beta_lo, beta_hi]`.
    OneFactor {
        beta_lo: f64,
        beta_hi: f64,
        noise: f64,
    },
    /// Pairs within a sector correlate at `intra_rho`, all other pairs at
    /// `market_rho`. Sectors take the first `Σ sizes` assets in order.
    Sector {
        sizes: Vec<usize>,
        intra_rho: f64,
        market_rho: f64,
    },
    /// Consecutive segments of `(days, model)`.
    Regime {
        segments: Vec<(usize, SynthModel)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub n_days: usize,
    pub model: SynthModel,
    pub seed: u64,
    /// Daily return standard deviation.
    pub volatility: f64,
    pub start: NaiveDate,
}

impl SynthSpec {
    pub fn new(n_assets: usize, n_days: usize, model: SynthModel, seed: u64) -> Self {
        Self {
            n_assets,
            n_days,
            model,
            seed,
            volatility: 0.01,
            start: NaiveDate::from_ymd_opt(2000, 1, 4).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanel<T> {
    pub returns: ReturnPanel<T>,
    /// Planted sector labels, for sector models.
    pub industries: Option<IndustryMap>,
}

fn next_business_day(d: NaiveDate) -> NaiveDate {
    let mut n = d + Days::new(1);
    while matches!(n.weekday(), Weekday::Sat | Weekday::Sun) {
        n = n + Days::new(1);
    }
    n
}

fn prev_business_day(d: NaiveDate) -> NaiveDate {
    let mut p = d - Days::new(1);
    while matches!(p.weekday(), Weekday::Sat | Weekday::Sun) {
        p = p - Days::new(1);
    }
    p
}

/// `count` consecutive weekdays starting at (or after) `start`.
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut d = if matches!(start.weekday(), Weekday::Sat | Weekday::Sun) {
        next_business_day(start)
    } else {
        start
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(d);
        d = next_business_day(d);
    }
    out
}

pub fn asset_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("A{:04}", i + 1)).collect()
}

fn validate(model: &SynthModel, n: usize, nested: bool) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidParameter(m));
    match model {
        SynthModel::Iid => Ok(()),
        SynthModel::Equicorrelated { rho } => {
            let floor = if n > 1 { -1.0 / (n as f64 - 1.0) } else { -1.0 };
            if !(*rho > floor && *rho < 1.0) {
                return bad(format!("rho {rho} outside ({floor}, 1)"));
            }
            Ok(())
        }
        SynthModel::OneFactor {
            beta_lo,
            beta_hi,
            noise,
        } => {
            if !(beta_lo <= beta_hi) || !(*noise > 0.0) {
                return bad("one-factor needs beta_lo <= beta_hi and noise > 0".into());
            }
            Ok(())
        }
        SynthModel::Sector {
            sizes,
            intra_rho,
            market_rho,
        } => {
            if sizes.iter().sum::<usize>() > n || sizes.contains(&0) {
                return bad(format!("sector sizes {sizes:?} do not fit {n} assets"));
            }
            if !(*market_rho >= 0.0 && market_rho <= intra_rho && *intra_rho < 1.0) {
                return bad(format!(
                    "sector model needs 0 <= market_rho <= intra_rho < 1 (got {market_rho}, {intra_rho})"
                ));
            }
            Ok(())
        }
        SynthModel::Regime { segments } => {
            if nested {
                return bad("regime segments cannot nest".into());
            }
            if segments.is_empty() {
                return bad("regime needs at least one segment".into());
            }
            segments.iter().try_for_each(|(_, m)| validate(m, n, true))
        }
    }
}

fn sector_labels(sizes: &[usize], n: usize) -> Vec<Option<usize>> {
    let mut labels = vec![None; n];
    let mut i = 0;
    for (s, &size) in sizes.iter().enumerate() {
        for slot in labels.iter_mut().skip(i).take(size) {
            *slot = Some(s);
        }
        i += size;
    }
    labels
}

/// Fills `rows` of unit-variance returns following `model`.
fn fill_rows(model: &SynthModel, out: &mut Array2<f64>, rows: std::ops::Range<usize>, rng: &mut ChaCha8Rng) {
    let n = out.ncols();
    let mut normal = || -> f64 { StandardNormal.sample(&mut *rng) };
    match model {
        SynthModel::Iid => {
            for t in rows {
                for j in 0..n {
                    out[[t, j]] = normal();
                }
            }
        }
        SynthModel::Equicorrelated { rho } => {
            // x = √(1-ρ)(ε - ε̄) + √(1+(N-1)ρ) ε̄ has covariance (1-ρ)I + ρ11ᵀ
            let a = (1.0 - rho).sqrt();
            let b = (1.0 + (n as f64 - 1.0) * rho).sqrt();
            let mut eps = vec![0.0; n];
            for t in rows {
                eps.iter_mut().for_each(|e| *e = normal());
                let mean = eps.iter().sum::<f64>() / n as f64;
                for j in 0..n {
                    out[[t, j]] = a * (eps[j] - mean) + b * mean;
                }
            }
        }
        SynthModel::OneFactor { .. } | SynthModel::Sector { .. } | SynthModel::Regime { .. } => {
            unreachable!("handled by caller")
        }
    }
}

/// Generates the panel described by `spec`.
pub fn generate<T: Real>(spec: &SynthSpec) -> Result<SynthPanel<T>> {
    let n = spec.n_assets;
    if n == 0 || spec.n_days == 0 {
        return Err(Error::InvalidParameter("synthetic panel needs assets and days".into()));
    }
    if !(spec.volatility > 0.0) {
        return Err(Error::InvalidParameter("volatility must be positive".into()));
    }
    validate(&spec.model, n, false)?;
    let segments: Vec<(usize, SynthModel)> = match &spec.model {
        SynthModel::Regime { segments } => {
            let total: usize = segments.iter().map(|s| s.0).sum();
            if total != spec.n_days {
                return Err(Error::InvalidParameter(format!(
                    "regime segments cover {total} days, spec has {}",
                    spec.n_days
                )));
            }
            segments.clone()
        }
        m => vec![(spec.n_days, m.clone())],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut unit = Array2::<f64>::zeros((spec.n_days, n));
    let mut industries = None;
    let mut row = 0;
    for (days, model) in &segments {
        let rows = row..row + days;
        match model {
            SynthModel::OneFactor {
                beta_lo,
                beta_hi,
                noise,
            } => {
                let betas: Vec<f64> = if beta_lo == beta_hi {
                    vec![*beta_lo; n]
                } else {
                    let u = Uniform::new(*beta_lo, *beta_hi).expect("validated range");
                    (0..n).map(|_| u.sample(&mut rng)).collect()
                };
                for t in rows {
                    let f: f64 = StandardNormal.sample(&mut rng);
                    for j in 0..n {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        let sd = (betas[j] * betas[j] + noise * noise).sqrt();
                        unit[[t, j]] = (betas[j] * f + noise * e) / sd;
                    }
                }
            }
            SynthModel::Sector {
                sizes,
                intra_rho,
                market_rho,
            } => {
                let labels = sector_labels(sizes, n);
                let m_load = market_rho.sqrt();
                let s_load = (intra_rho - market_rho).sqrt();
                let e_in = (1.0 - intra_rho).sqrt();
                let e_out = (1.0 - market_rho).sqrt();
                let mut sector = vec![0.0; sizes.len()];
                for t in rows {
                    let m: f64 = StandardNormal.sample(&mut rng);
                    sector.iter_mut().for_each(|s| *s = StandardNormal.sample(&mut rng));
                    for j in 0..n {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        unit[[t, j]] = match labels[j] {
                            Some(s) => m_load * m + s_load * sector[s] + e_in * e,
                            None => m_load * m + e_out * e,
                        };
                    }
                }
                if industries.is_none() {
                    let names = asset_names(n);
                    let recs: Vec<(String, String)> = names
                        .into_iter()
                        .zip(&labels)
                        .map(|(a, l)| {
                            let code = l.map_or(MARKET_ONLY_CODE.to_string(), |s| format!("S{}", s + 1));
                            (a, code)
                        })
                        .collect();
                    industries = Some(load_industry_map(recs, &IndustryScheme::Inferred)?);
                }
            }
            m => fill_rows(m, &mut unit, rows, &mut rng),
        }
        row += days;
    }

    let returns = unit.mapv(|v| T::lit(v * spec.volatility));
    let panel = ReturnPanel::new(business_days(spec.start, spec.n_days), asset_names(n), returns)?;
    Ok(SynthPanel {
        returns: panel,
        industries,
    })
}

/// Prices obtained by compounding returns from `base` on the business day
/// before the first return date.
pub fn price_records<T: Real>(rp: &ReturnPanel<T>, base: T) -> Vec<PriceRecord<T>> {
    let first = prev_business_day(rp.dates()[0]);
    let mut out = Vec::with_capacity((rp.rows() + 1) * rp.n_assets());
    for (j, a) in rp.assets().iter().enumerate() {
        let mut logp = base.ln();
        out.push(PriceRecord::new(first, a.clone(), base));
        for (t, d) in rp.dates().iter().enumerate() {
            logp = logp + rp.returns()[[t, j]];
            out.push(PriceRecord::new(*d, a.clone(), logp.exp()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::correlation_matrix;

    #[test]
    fn deterministic_under_seed() {
        let spec = SynthSpec::new(5, 50, SynthModel::Equicorrelated { rho: 0.2 }, 7);
        let a = generate::<f64>(&spec).unwrap();
        let b = generate::<f64>(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate::<f64>(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.returns.returns(), other.returns.returns());
    }

    #[test]
    fn rejects_invalid_rho() {
        for rho in [1.0, -0.5, 1.5] {
            let spec = SynthSpec::new(4, 10, SynthModel::Equicorrelated { rho }, 1);
            assert!(generate::<f64>(&spec).is_err(), "rho={rho}");
        }
        let ok = SynthSpec::new(4, 10, SynthModel::Equicorrelated { rho: -0.2 }, 1);
        assert!(generate::<f64>(&ok).is_ok());
    }

    #[test]
    fn long_equicorrelated_run_converges() {
        let t = 20_000;
        let spec = SynthSpec::new(6, t, SynthModel::Equicorrelated { rho: 0.4 }, 3);
        let p = generate::<f64>(&spec).unwrap();
        let (c, _) = correlation_matrix(p.returns.returns().view());
        let bound = 5.0 / (t as f64).sqrt();
        for ((i, j), v) in c.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.4 };
            assert!((v - target).abs() <= bound, "({i},{j}) {v}");
        }
    }

    #[test]
    fn negative_equicorrelation_converges() {
        let t = 20_000;
        let spec = SynthSpec::new(5, t, SynthModel::Equicorrelated { rho: -0.2 }, 4);
        let p = generate::<f64>(&spec).unwrap();
        let (c, _) = correlation_matrix(p.returns.returns().view());
        assert!((c[[0, 1]] + 0.2).abs() < 5.0 / (t as f64).sqrt());
    }

    #[test]
    fn sector_model_plants_labels() {
        let model = SynthModel::Sector {
            sizes: vec![2, 3],
            intra_rho: 0.4,
            market_rho: 0.1,
        };
        let p = generate::<f64>(&SynthSpec::new(7, 20, model, 2)).unwrap();
        let map = p.industries.unwrap();
        assert_eq!(map.resolve("A0001"), "S1");
        assert_eq!(map.resolve("A0003"), "S2");
        assert_eq!(map.resolve("A0007"), MARKET_ONLY_CODE);
        let bad = SynthModel::Sector {
            sizes: vec![5, 5],
            intra_rho: 0.4,
            market_rho: 0.1,
        };
        assert!(generate::<f64>(&SynthSpec::new(7, 20, bad, 2)).is_err());
    }

    #[test]
    fn regime_segments_must_cover_days() {
        let model = SynthModel::Regime {
            segments: vec![(10, SynthModel::Iid), (10, SynthModel::Equicorrelated { rho: 0.5 })],
        };
        assert!(generate::<f64>(&SynthSpec::new(3, 20, model.clone(), 1)).is_ok());
        assert!(generate::<f64>(&SynthSpec::new(3, 21, model, 1)).is_err());
    }

    #[test]
    fn business_calendar_skips_weekends() {
        let days = business_days("2021-01-01".parse().unwrap(), 3);
        let want: Vec<NaiveDate> = ["2021-01-01", "2021-01-04", "2021-01-05"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(days, want);
    }

    #[test]
    fn prices_compound_returns() {
        let p = generate::<f64>(&SynthSpec::new(2, 5, SynthModel::Iid, 9)).unwrap();
        let recs = price_records(&p.returns, 100.0);
        assert_eq!(recs.len(), 12);
        assert_eq!(recs[0].price, 100.0);
        let r0 = (recs[1].price / recs[0].price).ln();
        assert!((r0 - p.returns.returns()[[0, 0]]).abs() < 1e-14);
    }
}
