//! Price ingestion, calendar alignment and the minimum-history filter.
//!
//! Raw `date,asset,price` records are placed on the union of all record
//! dates. Interior gaps (suspensions) are forward-filled from the asset's last
//! observed price, which yields a zero log return on the gap day. Dates before
//! an asset's first observation carry its first price so every entry stays
//! finite and positive, but they remain marked unobserved; window-level code
//! uses [`PricePanel::first_observed`] to exclude such assets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_reader, expect_header, fmt_real, parse_field, schema_err};
use crate::scalar::Real;

/// Minimum number of observed days used by the default liquidity filter.
pub const DEFAULT_MIN_OBSERVED_DAYS: usize = 2600;

/// Industry code assigned to assets absent from an [`IndustryMap`].
pub const UNKNOWN_INDUSTRY: &str = "UNK";

#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord<T> {
    pub date: NaiveDate,
    pub asset: String,
    pub price: T,
}

impl<T: Real> PriceRecord<T> {
    pub fn new(date: NaiveDate, asset: impl Into<String>, price: T) -> Self {
        Self {
            date,
            asset: asset.into(),
            price,
        }
    }
}

/// Date × asset price matrix on a common calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel<T> {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    prices: Array2<T>,
    observed: Array2<bool>,
}

impl<T: Real> PricePanel<T> {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    /// `D × N` prices, rows are dates.
    pub fn prices(&self) -> &Array2<T> {
        &self.prices
    }

    /// `D × N` mask, `true` where a raw record existed before filling.
    pub fn observed(&self) -> &Array2<bool> {
        &self.observed
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn observed_counts(&self) -> Vec<usize> {
        self.observed
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|&&o| o).count())
            .collect()
    }

    /// Row index of each asset's first observed price.
    pub fn first_observed(&self) -> Vec<usize> {
        self.observed
            .columns()
            .into_iter()
            .map(|c| c.iter().position(|&o| o).unwrap_or(c.len()))
            .collect()
    }

    fn select_assets(&self, keep: &[usize]) -> Self {
        Self {
            dates: self.dates.clone(),
            assets: keep.iter().map(|&j| self.assets[j].clone()).collect(),
            prices: self.prices.select(ndarray::Axis(1), keep),
            observed: self.observed.select(ndarray::Axis(1), keep),
        }
    }

    /// Observed records only, in date-then-asset order. Re-ingesting them
    /// reproduces this panel exactly.
    pub fn observed_records(&self) -> Vec<PriceRecord<T>> {
        let mut out = Vec::new();
        for (t, date) in self.dates.iter().enumerate() {
            for (j, asset) in self.assets.iter().enumerate() {
                if self.observed[[t, j]] {
                    out.push(PriceRecord::new(*date, asset.clone(), self.prices[[t, j]]));
                }
            }
        }
        out
    }
}

/// Aligns raw records onto the union calendar and fills gaps.
pub fn ingest_prices<T: Real>(records: impl IntoIterator<Item = PriceRecord<T>>) -> Result<PricePanel<T>> {
    let mut by_key: HashMap<(NaiveDate, String), T> = HashMap::new();
    let mut dates = BTreeSet::new();
    let mut assets = BTreeSet::new();

    for rec in records {
        if rec.asset.is_empty() {
            return Err(Error::InvalidRecord(format!("empty asset id on {}", rec.date)));
        }
        if !(rec.price.is_finite() && rec.price > T::zero()) {
            return Err(Error::InvalidRecord(format!(
                "non-positive price {} for {} on {}",
                rec.price, rec.asset, rec.date
            )));
        }
        dates.insert(rec.date);
        assets.insert(rec.asset.clone());
        match by_key.get(&(rec.date, rec.asset.clone())) {
            Some(&p) if p != rec.price => {
                return Err(Error::ConflictingRecord {
                    date: rec.date,
                    asset: rec.asset,
                })
            }
            Some(_) => {}
            None => {
                by_key.insert((rec.date, rec.asset), rec.price);
            }
        }
    }
    if by_key.is_empty() {
        return Err(Error::EmptyInput);
    }

    let dates: Vec<NaiveDate> = dates.into_iter().collect();
    let assets: Vec<String> = assets.into_iter().collect();
    let (d, n) = (dates.len(), assets.len());
    let mut prices = Array2::<T>::zeros((d, n));
    let mut observed = Array2::<bool>::from_elem((d, n), false);

    for (j, asset) in assets.iter().enumerate() {
        let mut last: Option<T> = None;
        let mut first_obs = None;
        for (t, date) in dates.iter().enumerate() {
            if let Some(&p) = by_key.get(&(*date, asset.clone())) {
                observed[[t, j]] = true;
                last = Some(p);
                first_obs.get_or_insert(t);
            }
            if let Some(p) = last {
                prices[[t, j]] = p;
            }
        }
        // leading gap carries the first observed price
        let first = first_obs.expect("every asset has a record");
        let p0 = prices[[first, j]];
        for t in 0..first {
            prices[[t, j]] = p0;
        }
    }

    Ok(PricePanel {
        dates,
        assets,
        prices,
        observed,
    })
}

/// Keeps the assets with at least `min_observed_days` observed prices.
pub fn filter_min_history<T: Real>(panel: &PricePanel<T>, min_observed_days: usize) -> Result<PricePanel<T>> {
    if min_observed_days == 0 {
        return Err(Error::InvalidParameter("min_observed_days must be at least 1".into()));
    }
    let keep: Vec<usize> = panel
        .observed_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= min_observed_days)
        .map(|(j, _)| j)
        .collect();
    if keep.len() < 2 {
        return Err(Error::TooFewAssets { found: keep.len() });
    }
    Ok(panel.select_assets(&keep))
}

/// Reads `date,asset,price` CSV records.
pub fn read_price_csv<T: Real, R: Read>(reader: R, source: &str) -> Result<Vec<PriceRecord<T>>> {
    let mut rdr = csv_reader(reader);
    expect_header(&mut rdr, source, &["date", "asset", "price"])?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let date_s = parse_field(&row, 0, "date", source)?;
        let asset = parse_field(&row, 1, "asset", source)?;
        let price_s = parse_field(&row, 2, "price", source)?;
        let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d")
            .map_err(|e| schema_err(source, line, format!("bad date `{date_s}`: {e}")))?;
        if asset.is_empty() {
            return Err(schema_err(source, line, "empty asset id"));
        }
        let price: f64 = price_s
            .parse()
            .map_err(|_| schema_err(source, line, format!("bad price `{price_s}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(schema_err(
                source,
                line,
                format!("price must be positive, got {price_s}"),
            ));
        }
        out.push(PriceRecord::new(date, asset, T::lit(price)));
    }
    Ok(out)
}

/// Writes the observed records of a panel as `date,asset,price`.
pub fn write_panel_csv<T: Real, W: Write>(panel: &PricePanel<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "asset", "price"])?;
    for rec in panel.observed_records() {
        w.write_record([rec.date.to_string(), rec.asset, fmt_real(rec.price)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndustryInfo {
    pub code: &'static str,
    pub name: &'static str,
    /// Number of stocks per code in the 367-stock reference sample.
    pub reference_count: usize,
}

const fn info(code: &'static str, name: &'static str, reference_count: usize) -> IndustryInfo {
    IndustryInfo {
        code,
        name,
        reference_count,
    }
}

/// CSRC A–M conventional industry codes.
pub const CSRC_INDUSTRIES: [IndustryInfo; 22] = [
    info("A", "Agriculture", 4),
    info("B", "Mining", 7),
    info("C0", "Food & beverage", 21),
    info("C1", "Textiles & apparel", 12),
    info("C2", "Timber & furnishings", 0),
    info("C3", "Paper & printing", 5),
    info("C4", "Petrochemicals", 31),
    info("C5", "Electronics", 10),
    info("C6", "Metals & non-metals", 26),
    info("C7", "Machinery", 52),
    info("C8", "Pharmaceuticals", 19),
    info("C99", "Other manufacturing", 2),
    info("D", "Utilities", 19),
    info("E", "Construction", 6),
    info("F", "Transportation", 14),
    info("G", "IT", 18),
    info("H", "Wholesale & retail trade", 54),
    info("I", "Finance & insurance", 2),
    info("J", "Real estate", 43),
    info("K", "Social services", 11),
    info("L", "Communication & cultural industry", 4),
    info("M", "Comprehensive", 7),
];

/// Set of admissible industry codes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndustryScheme {
    /// The 22 CSRC codes.
    #[default]
    Csrc,
    Custom(Vec<String>),
    /// Accept any code; the code list is the sorted set of codes seen.
    Inferred,
}

impl IndustryScheme {
    fn codes(&self) -> Option<Vec<String>> {
        match self {
            IndustryScheme::Csrc => Some(CSRC_INDUSTRIES.iter().map(|i| i.code.to_string()).collect()),
            IndustryScheme::Custom(c) => Some(c.clone()),
            IndustryScheme::Inferred => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndustryMap {
    entries: BTreeMap<String, String>,
    codes: Vec<String>,
}

impl IndustryMap {
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    /// Industry of `asset`, or [`UNKNOWN_INDUSTRY`].
    pub fn resolve(&self, asset: &str) -> &str {
        self.entries.get(asset).map_or(UNKNOWN_INDUSTRY, String::as_str)
    }

    /// Group sizes over all mapped assets, in code order (empty codes included).
    pub fn mapped_group_sizes(&self) -> Vec<(String, usize)> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for code in self.entries.values() {
            *counts.entry(code).or_default() += 1;
        }
        self.codes
            .iter()
            .map(|c| (c.clone(), counts.get(c.as_str()).copied().unwrap_or(0)))
            .collect()
    }

    /// Group sizes `N_l` for the given asset universe, in code order with
    /// [`UNKNOWN_INDUSTRY`] last when present. Empty groups are included.
    pub fn group_sizes(&self, assets: &[String]) -> Vec<(String, usize)> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for a in assets {
            *counts.entry(self.resolve(a)).or_default() += 1;
        }
        let mut out: Vec<(String, usize)> = self
            .codes
            .iter()
            .map(|c| (c.clone(), counts.get(c.as_str()).copied().unwrap_or(0)))
            .collect();
        if let Some(&unk) = counts.get(UNKNOWN_INDUSTRY) {
            out.push((UNKNOWN_INDUSTRY.to_string(), unk));
        }
        out
    }
}

/// Builds an industry map, rejecting assets mapped to two different codes.
pub fn load_industry_map<S: AsRef<str>>(
    records: impl IntoIterator<Item = (S, S)>,
    scheme: &IndustryScheme,
) -> Result<IndustryMap> {
    let allowed = scheme.codes();
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (asset, code) in records {
        let (asset, code) = (asset.as_ref(), code.as_ref());
        if let Some(allowed) = &allowed {
            if !allowed.iter().any(|c| c == code) {
                return Err(Error::InvalidRecord(format!(
                    "industry code `{code}` for {asset} is not in the scheme"
                )));
            }
        }
        match entries.get(asset) {
            Some(prev) if prev != code => {
                return Err(Error::ConflictingIndustry {
                    asset: asset.to_string(),
                    first: prev.clone(),
                    second: code.to_string(),
                })
            }
            Some(_) => {}
            None => {
                entries.insert(asset.to_string(), code.to_string());
            }
        }
    }
    let codes = allowed.unwrap_or_else(|| entries.values().cloned().collect::<BTreeSet<_>>().into_iter().collect());
    Ok(IndustryMap { entries, codes })
}

/// Reads `asset,industry` CSV rows.
pub fn read_industry_csv<R: Read>(reader: R, source: &str) -> Result<Vec<(String, String)>> {
    let mut rdr = csv_reader(reader);
    expect_header(&mut rdr, source, &["asset", "industry"])?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let asset = parse_field(&row, 0, "asset", source)?;
        let code = parse_field(&row, 1, "industry", source)?;
        if asset.is_empty() || code.is_empty() {
            return Err(schema_err(source, line, "empty asset or industry"));
        }
        out.push((asset.to_string(), code.to_string()));
    }
    Ok(out)
}

/// Writes `asset,industry` rows.
pub fn write_industry_csv<W: Write>(map: &IndustryMap, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["asset", "industry"])?;
    for (a, c) in map.entries() {
        w.write_record([a, c])?;
    }
    w.flush()?;
    Ok(())
}
