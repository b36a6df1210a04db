//! End-to-end run: price files in, per-module CSV reports and a JSON
//! manifest out.
//!
//! Windows are evaluated in parallel in fixed blocks; results are written in
//! window order, so output bytes do not depend on the thread count.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use log::{info, warn};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlate::{
    coefficient_histogram, density_histogram, equal_weight_index, index_volatility, log_returns, window_blocks,
    Histogram, MetricSeries, ReturnPanel, RollingCorrelator, WindowSpec, WindowedCorrelation, DEFAULT_COEFF_BINS,
    DEFAULT_VOLATILITY_WINDOW, DEFAULT_WINDOW_LENGTH,
};
use crate::error::{Error, Result};
use crate::io::{csv_reader, expect_header, fmt_real, parse_field, schema_err};
use crate::modes::{
    contribution_of_vector, period_partition, project_market_mode, rank_components, small_groups, IndustryContribution,
    DEFAULT_SMALL_GROUP_FLOOR, DEFAULT_TOP_COUNT,
};
use crate::panel::{
    filter_min_history, ingest_prices, load_industry_map, read_industry_csv, read_price_csv, IndustryMap,
    IndustryScheme, DEFAULT_MIN_OBSERVED_DAYS,
};
use crate::risk::{crf_from_eigenvalues, default_crf_counts};
use crate::scalar::Real;
use crate::spectra::{decompose, eigenvalues, mp_bounds, LeadingModes};
use crate::surrogate::{surrogate_summary, SurrogateParams, SurrogateSummary, DEFAULT_PERCENTILE, DEFAULT_REPETITIONS};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Correlations, spectra, MP reference, CRF, index volatility.
    Analyze,
    Surrogate,
    /// Industry contributions, market-mode projection, rankings.
    Modes,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Analyze, Stage::Surrogate, Stage::Modes];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub prices: PathBuf,
    pub industries: Option<PathBuf>,
    pub industry_scheme: IndustryScheme,
    /// `date,price` series of the market index; the equal-weight average
    /// return is used when absent.
    pub index: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub window: usize,
    pub step: usize,
    pub min_observed_days: usize,
    pub repetitions: usize,
    pub percentile: f64,
    pub seed: u64,
    /// Component counts for the cumulative risk fraction; `None` means
    /// 1, 10, 50 (those below N) and N.
    pub crf_counts: Option<Vec<usize>>,
    pub dividers: Vec<NaiveDate>,
    pub coeff_bins: usize,
    pub eigen_bins: usize,
    /// Upper edge of the eigenvalue histogram; larger eigenvalues are
    /// reported as tail mass.
    pub eigen_max: f64,
    pub volatility_window: usize,
    /// Number of leading modes analysed by the modes stage.
    pub leading_modes: usize,
    pub rank_market_mode: bool,
    pub top_count: usize,
    pub small_group_floor: usize,
    pub dump_eigenvectors: bool,
    pub precision: Precision,
    pub stages: Vec<Stage>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: PathBuf::from("prices.csv"),
            industries: None,
            industry_scheme: IndustryScheme::Csrc,
            index: None,
            out_dir: PathBuf::from("out"),
            window: DEFAULT_WINDOW_LENGTH,
            step: 1,
            min_observed_days: DEFAULT_MIN_OBSERVED_DAYS,
            repetitions: DEFAULT_REPETITIONS,
            percentile: DEFAULT_PERCENTILE,
            seed: 0,
            crf_counts: None,
            dividers: Vec::new(),
            coeff_bins: DEFAULT_COEFF_BINS,
            eigen_bins: 200,
            eigen_max: 20.0,
            volatility_window: DEFAULT_VOLATILITY_WINDOW,
            leading_modes: 5,
            rank_market_mode: false,
            top_count: DEFAULT_TOP_COUNT,
            small_group_floor: DEFAULT_SMALL_GROUP_FLOOR,
            dump_eigenvectors: false,
            precision: Precision::F64,
            stages: Stage::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window, self.step)
    }

    pub fn surrogate_params(&self) -> SurrogateParams {
        SurrogateParams {
            repetitions: self.repetitions,
            percentile: self.percentile,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window_spec()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.stages.is_empty() {
            return bad("no stages selected");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return bad("percentile must be in (0, 100]");
        }
        if self.coeff_bins < 2 || self.eigen_bins < 2 {
            return bad("histograms need at least 2 bins");
        }
        if !(self.eigen_max > 0.0) {
            return bad("eigen_max must be positive");
        }
        if self.volatility_window == 0 {
            return bad("volatility window must be at least 1");
        }
        if self.leading_modes == 0 {
            return bad("leading_modes must be at least 1");
        }
        if let Some(c) = &self.crf_counts {
            if c.is_empty() || c.contains(&0) {
                return bad("crf counts must be positive");
            }
        }
        Ok(())
    }

    fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub dates: usize,
    pub assets_loaded: usize,
    pub assets: usize,
    pub return_rows: usize,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpSummary {
    pub q: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub dimensions: Dimensions,
    pub mp: Option<MpSummary>,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_reader(open_input(path)?)?)
}

/// Reads a `date,price` index series.
pub fn read_index_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv_reader(reader);
    expect_header(&mut rdr, source, &["date", "price"])?;
    let mut out: Vec<(NaiveDate, f64)> = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let d = parse_field(&row, 0, "date", source)?;
        let p = parse_field(&row, 1, "price", source)?;
        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d")
            .map_err(|e| schema_err(source, line, format!("bad date `{d}`: {e}")))?;
        let price: f64 = p
            .parse()
            .map_err(|_| schema_err(source, line, format!("bad price `{p}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(schema_err(source, line, format!("price must be positive, got {p}")));
        }
        out.push((date, price));
    }
    out.sort_by_key(|x| x.0);
    if out.windows(2).any(|w| w[0].0 == w[1].0 && w[0].1 != w[1].1) {
        return Err(Error::InvalidRecord(format!("{source}: conflicting index prices")));
    }
    out.dedup_by_key(|x| x.0);
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Index log returns on the panel calendar, forward-filling index gaps.
/// `price_dates` has one more entry than the returned series.
fn align_index<T: Real>(series: &[(NaiveDate, f64)], price_dates: &[NaiveDate]) -> Result<MetricSeries<T>> {
    let mut prices = Vec::with_capacity(price_dates.len());
    let mut i = 0;
    let mut last = None;
    for &d in price_dates {
        while i < series.len() && series[i].0 <= d {
            last = Some(series[i].1);
            i += 1;
        }
        let p =
            last.ok_or_else(|| Error::InvalidRecord(format!("index series starts after the first panel date {d}")))?;
        prices.push(p);
    }
    let points = price_dates[1..]
        .iter()
        .zip(prices.windows(2))
        .map(|(&d, w)| (d, T::lit((w[1] / w[0]).ln())))
        .collect();
    MetricSeries::new("index_return", points)
}

struct Inputs<T> {
    rp: ReturnPanel<T>,
    imap: IndustryMap,
    index: MetricSeries<T>,
    dates: usize,
    assets_loaded: usize,
}

fn source_name(p: &Path) -> String {
    p.display().to_string()
}

/// Opens an input file, naming it in the error.
pub fn open_input(p: &Path) -> Result<BufReader<File>> {
    File::open(p)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))
}

fn load_inputs<T: Real>(config: &RunConfig) -> Result<Inputs<T>> {
    let recs = read_price_csv::<T, _>(open_input(&config.prices)?, &source_name(&config.prices))?;
    let panel = ingest_prices(recs)?;
    let assets_loaded = panel.n_assets();
    let panel = filter_min_history(&panel, config.min_observed_days)?;
    if panel.n_assets() < assets_loaded {
        info!(
            "{} of {assets_loaded} assets kept with at least {} observed days",
            panel.n_assets(),
            config.min_observed_days
        );
    }
    let rp = log_returns(&panel)?;
    let imap = match &config.industries {
        Some(p) => {
            let recs = read_industry_csv(open_input(p)?, &source_name(p))?;
            load_industry_map(recs, &config.industry_scheme)?
        }
        None => load_industry_map(Vec::<(String, String)>::new(), &config.industry_scheme)?,
    };
    let index = match &config.index {
        Some(p) => align_index(&read_index_csv(open_input(p)?, &source_name(p))?, panel.dates())?,
        None => equal_weight_index(&rp),
    };
    Ok(Inputs {
        rp,
        imap,
        index,
        dates: panel.n_dates(),
        assets_loaded,
    })
}

struct WindowResult<T> {
    end_date: NaiveDate,
    mean: T,
    std: T,
    coeff_hist: Vec<(T, T)>,
    eigenvalues: Vec<T>,
    eigen_hist: Option<Histogram<T>>,
    crf: Vec<(usize, T)>,
    vectors: Option<Array2<T>>,
    leading: Option<LeadingModes<T>>,
    contributions: Vec<IndustryContribution<T>>,
    projection: Option<(T, T)>,
    surrogate: Option<SurrogateSummary<T>>,
}

struct Context<'a, T> {
    config: &'a RunConfig,
    rp: &'a ReturnPanel<T>,
    imap: &'a IndustryMap,
    index: Vec<T>,
    spec: WindowSpec,
    crf_counts: Vec<usize>,
    params: SurrogateParams,
}

impl<T: Real> Context<'_, T> {
    fn process(&self, wc: WindowedCorrelation<T>) -> Result<WindowResult<T>> {
        let cfg = self.config;
        let analyze = cfg.has(Stage::Analyze);
        let modes = cfg.has(Stage::Modes);
        let need_vectors = modes || (analyze && cfg.dump_eigenvectors);
        let (evals, spectrum) = if need_vectors {
            let s = decompose(&wc)?;
            (s.eigenvalues().to_vec(), Some(s))
        } else {
            (eigenvalues(&wc.matrix)?, None)
        };
        let mut out = WindowResult {
            end_date: wc.end_date,
            mean: wc.mean_coeff,
            std: wc.std_coeff,
            coeff_hist: Vec::new(),
            eigenvalues: Vec::new(),
            eigen_hist: None,
            crf: Vec::new(),
            vectors: None,
            leading: None,
            contributions: Vec::new(),
            projection: None,
            surrogate: None,
        };
        let window = self.rp.window(wc.end_row, self.spec.length);
        if cfg.has(Stage::Surrogate) {
            out.surrogate = Some(surrogate_summary(
                window,
                &evals,
                &wc.excluded,
                wc.end_date,
                wc.index,
                &self.params,
            )?);
        }
        if analyze {
            out.coeff_hist = coefficient_histogram(&wc, cfg.coeff_bins)?;
            out.eigen_hist = Some(density_histogram(
                &evals,
                cfg.eigen_bins,
                T::zero(),
                T::lit(cfg.eigen_max),
            )?);
            out.crf = self
                .crf_counts
                .iter()
                .map(|&n| Ok((n, crf_from_eigenvalues(&evals, n)?)))
                .collect::<Result<_>>()?;
        }
        if let Some(s) = spectrum {
            if modes {
                let assets = self.rp.assets();
                let k_max = cfg.leading_modes.min(s.n());
                for k in 0..k_max {
                    out.contributions
                        .push(contribution_of_vector(s.mode(k), assets, self.imap, wc.end_date, k)?);
                }
                let start = self.spec.start_row(wc.index);
                let idx = &self.index[start..=wc.end_row];
                out.projection = match project_market_mode(window, s.mode(0), idx, wc.end_date) {
                    Ok(p) => Some((p.slope, p.r2)),
                    Err(Error::Degenerate(msg)) => {
                        warn!("projection skipped: {msg}");
                        Some((T::nan(), T::nan()))
                    }
                    Err(e) => return Err(e),
                };
                out.leading = Some(s.leading(k_max));
            }
            if analyze && cfg.dump_eigenvectors {
                out.vectors = Some(s.eigenvectors().clone());
            }
        }
        out.eigenvalues = evals;
        Ok(out)
    }
}

type Sink = csv::Writer<BufWriter<File>>;

struct Sinks {
    dir: PathBuf,
    names: Vec<String>,
}

impl Sinks {
    fn open(&mut self, name: &str, header: &[&str]) -> Result<Sink> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(self.dir.join(name))?));
        w.write_record(header)?;
        self.names.push(name.to_string());
        Ok(w)
    }
}

struct AnalyzeSinks {
    windows: Sink,
    coeff_hist: Sink,
    eigenvalues: Sink,
    eigen_hist: Sink,
    eigen_tail: Sink,
    crf: Sink,
    eigenvectors: Option<Sink>,
}

struct ModeSinks {
    contributions: Sink,
    projection: Sink,
}

fn date_s(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

/// Runs the configured stages and writes their reports plus
/// `manifest.json` into `config.out_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<Manifest> {
    let started = Instant::now();
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut manifest = match config.precision {
        Precision::F64 => run_typed::<f64>(config)?,
        Precision::F32 => run_typed::<f32>(config)?,
    };
    manifest.wall_time_seconds = started.elapsed().as_secs_f64();
    let f = BufWriter::new(File::create(config.out_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(manifest)
}

fn run_typed<T: Real>(config: &RunConfig) -> Result<Manifest> {
    let inputs = load_inputs::<T>(config)?;
    let rp = &inputs.rp;
    let n = rp.n_assets();
    let spec = config.window_spec()?;
    let count = spec.count(rp.rows())?;
    let crf_counts = match &config.crf_counts {
        Some(c) => {
            let kept: Vec<usize> = c.iter().copied().filter(|&k| k <= n).collect();
            if kept.len() < c.len() {
                warn!("crf counts above N={n} dropped");
            }
            kept
        }
        None => default_crf_counts(n),
    };
    info!("{n} assets, {} return rows, {count} windows", rp.rows());

    let ctx = Context {
        config,
        rp,
        imap: &inputs.imap,
        index: inputs.index.values(),
        spec,
        crf_counts,
        params: config.surrogate_params(),
    };
    let mut sinks = Sinks {
        dir: config.out_dir.clone(),
        names: Vec::new(),
    };

    let mp = mp_bounds::<f64>(n, config.window).ok();
    let mut analyze = None;
    if config.has(Stage::Analyze) {
        analyze = Some(AnalyzeSinks {
            windows: sinks.open("windows.csv", &["end_date", "mean_coeff", "std_coeff"])?,
            coeff_hist: sinks.open("coeff_hist.csv", &["end_date", "bin_center", "density"])?,
            eigenvalues: sinks.open("eigenvalues.csv", &["end_date", "k", "lambda"])?,
            eigen_hist: sinks.open("eigen_hist.csv", &["end_date", "bin_center", "density"])?,
            eigen_tail: sinks.open("eigen_tail.csv", &["end_date", "mass_below", "mass_above"])?,
            crf: sinks.open("crf.csv", &["end_date", "n", "h_n"])?,
            eigenvectors: if config.dump_eigenvectors {
                Some(sinks.open("eigenvectors.csv", &["end_date", "k", "asset", "component"])?)
            } else {
                None
            },
        });
        write_mp(&mut sinks, config, mp.as_ref())?;
        write_volatility(&mut sinks, config, &inputs.index)?;
    }
    let mut surrogate = if config.has(Stage::Surrogate) {
        Some(sinks.open(
            "surrogate.csv",
            &["end_date", "threshold", "significant_count", "repetitions", "seed"],
        )?)
    } else {
        None
    };
    let mut modes = if config.has(Stage::Modes) {
        Some(ModeSinks {
            contributions: sinks.open("contributions.csv", &["end_date", "k", "industry", "X"])?,
            projection: sinks.open("projection.csv", &["end_date", "slope", "r2"])?,
        })
    } else {
        None
    };

    let blocks = window_blocks(count);
    let per_chunk = rayon::current_num_threads().max(1) * 2;
    let mut leading: Vec<LeadingModes<T>> = Vec::new();
    let mut end_dates = Vec::with_capacity(count);
    for chunk in blocks.chunks(per_chunk) {
        let results: Vec<Vec<WindowResult<T>>> = chunk
            .par_iter()
            .map(|range| -> Result<Vec<_>> {
                RollingCorrelator::new(rp, spec, range.clone())?
                    .map(|wc| ctx.process(wc))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for r in results.into_iter().flatten() {
            let d = date_s(r.end_date);
            end_dates.push(r.end_date);
            if let Some(a) = analyze.as_mut() {
                a.windows.write_record([&d, &fmt_real(r.mean), &fmt_real(r.std)])?;
                for (c, v) in &r.coeff_hist {
                    a.coeff_hist.write_record([&d, &fmt_real(*c), &fmt_real(*v)])?;
                }
                for (k, l) in r.eigenvalues.iter().enumerate() {
                    a.eigenvalues.write_record([&d, &(k + 1).to_string(), &fmt_real(*l)])?;
                }
                if let Some(h) = &r.eigen_hist {
                    for (c, v) in &h.bins {
                        a.eigen_hist.write_record([&d, &fmt_real(*c), &fmt_real(*v)])?;
                    }
                    a.eigen_tail
                        .write_record([&d, &fmt_real(h.mass_below), &fmt_real(h.mass_above)])?;
                }
                for (k, h) in &r.crf {
                    a.crf.write_record([&d, &k.to_string(), &fmt_real(*h)])?;
                }
                if let (Some(w), Some(v)) = (a.eigenvectors.as_mut(), &r.vectors) {
                    for k in 0..v.ncols() {
                        for (i, asset) in rp.assets().iter().enumerate() {
                            w.write_record([&d, &(k + 1).to_string(), asset, &fmt_real(v[[i, k]])])?;
                        }
                    }
                }
            }
            if let (Some(w), Some(s)) = (surrogate.as_mut(), &r.surrogate) {
                w.write_record([
                    &d,
                    &fmt_real(s.threshold),
                    &s.significant_count.to_string(),
                    &s.repetitions.to_string(),
                    &s.seed.to_string(),
                ])?;
            }
            if let Some(m) = modes.as_mut() {
                for c in &r.contributions {
                    for (code, x) in &c.per_code {
                        m.contributions
                            .write_record([&d, &(c.k + 1).to_string(), code, &fmt_real(*x)])?;
                    }
                }
                if let Some((slope, r2)) = r.projection {
                    m.projection.write_record([&d, &fmt_real(slope), &fmt_real(r2)])?;
                }
            }
            if let Some(l) = r.leading {
                leading.push(l);
            }
        }
    }

    if let Some(mut a) = analyze {
        for w in [
            &mut a.windows,
            &mut a.coeff_hist,
            &mut a.eigenvalues,
            &mut a.eigen_hist,
            &mut a.eigen_tail,
            &mut a.crf,
        ] {
            w.flush()?;
        }
        if let Some(w) = a.eigenvectors.as_mut() {
            w.flush()?;
        }
    }
    if let Some(w) = surrogate.as_mut() {
        w.flush()?;
    }
    if let Some(mut m) = modes {
        m.contributions.flush()?;
        m.projection.flush()?;
        write_industries(&mut sinks, config, &inputs.imap, rp.assets())?;
        write_rankings(&mut sinks, config, &leading, &end_dates, rp.assets(), &inputs.imap)?;
    }

    Ok(Manifest {
        tool: "rmtcorr".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        dimensions: Dimensions {
            dates: inputs.dates,
            assets_loaded: inputs.assets_loaded,
            assets: n,
            return_rows: rp.rows(),
            windows: count,
        },
        mp: mp.map(|m| MpSummary {
            q: m.q,
            lambda_min: m.lambda_min,
            lambda_max: m.lambda_max,
        }),
        seed: config.seed,
        wall_time_seconds: 0.0,
        outputs: sinks.names,
    })
}

fn write_mp(sinks: &mut Sinks, config: &RunConfig, mp: Option<&crate::spectra::MPModel<f64>>) -> Result<()> {
    let mut w = sinks.open("mp.csv", &["lambda", "density"])?;
    match mp {
        Some(m) => {
            let width = config.eigen_max / config.eigen_bins as f64;
            for i in 0..config.eigen_bins {
                let c = width * (i as f64 + 0.5);
                w.write_record([fmt_real(c), fmt_real(m.density(c))])?;
            }
        }
        None => warn!("window length does not exceed asset count; no Marchenko-Pastur reference"),
    }
    w.flush()?;
    Ok(())
}

fn write_volatility<T: Real>(sinks: &mut Sinks, config: &RunConfig, index: &MetricSeries<T>) -> Result<()> {
    let mut w = sinks.open("volatility.csv", &["end_date", "volatility"])?;
    match index_volatility(index, config.volatility_window) {
        Ok(v) => {
            for (d, x) in v.points() {
                w.write_record([date_s(*d), fmt_real(*x)])?;
            }
        }
        Err(Error::InsufficientRows { required, available }) => {
            warn!("index volatility needs {required} rows, {available} available; skipped")
        }
        Err(e) => return Err(e),
    }
    w.flush()?;
    Ok(())
}

fn write_industries(sinks: &mut Sinks, config: &RunConfig, imap: &IndustryMap, assets: &[String]) -> Result<()> {
    let small = small_groups(imap, assets, config.small_group_floor);
    let mut w = sinks.open("industries.csv", &["industry", "size", "small"])?;
    for (code, size) in imap.group_sizes(assets) {
        let flag = small.contains(&code);
        w.write_record([code, size.to_string(), flag.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_rankings<T: Real>(
    sinks: &mut Sinks,
    config: &RunConfig,
    leading: &[LeadingModes<T>],
    end_dates: &[NaiveDate],
    assets: &[String],
    imap: &IndustryMap,
) -> Result<()> {
    let mut w = sinks.open(
        "rankings.csv",
        &[
            "period_start",
            "period_end",
            "k",
            "rank",
            "asset",
            "industry",
            "average_rank",
        ],
    )?;
    let k_max = config.leading_modes.min(assets.len());
    let first = if config.rank_market_mode { 0 } else { 1 };
    for period in period_partition(end_dates, &config.dividers)? {
        let slice = &leading[period.windows.clone()];
        for k in first..k_max {
            let r = rank_components(slice, assets, imap, k, config.top_count, config.rank_market_mode)?;
            for (pos, e) in r.entries.iter().enumerate() {
                w.write_record([
                    date_s(period.start),
                    date_s(period.end),
                    (k + 1).to_string(),
                    (pos + 1).to_string(),
                    e.asset.clone(),
                    e.industry.clone(),
                    fmt_real(e.average_rank),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Header and rows of a CSV file.
type Table = (Vec<String>, Vec<Vec<String>>);

/// Column values per end date.
type WindowRows = BTreeMap<String, BTreeMap<String, String>>;

fn read_table(path: &Path) -> Result<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| Ok(r?.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Some((header, rows)))
}

/// Per-window merge of the run's CSVs keyed by end date: `(columns, rows)`.
fn merge_windows(dir: &Path) -> Result<(Vec<String>, WindowRows)> {
    let mut columns: Vec<String> = Vec::new();
    let mut rows: WindowRows = BTreeMap::new();
    let mut put = |columns: &mut Vec<String>, date: &str, col: String, v: &str| {
        if !columns.contains(&col) {
            columns.push(col.clone());
        }
        rows.entry(date.to_string()).or_default().insert(col, v.to_string());
    };
    if let Some((_, t)) = read_table(&dir.join("windows.csv"))? {
        for r in &t {
            put(&mut columns, &r[0], "mean_coeff".into(), &r[1]);
            put(&mut columns, &r[0], "std_coeff".into(), &r[2]);
        }
    }
    if let Some((_, t)) = read_table(&dir.join("eigenvalues.csv"))? {
        for r in t.iter().filter(|r| r[1] == "1") {
            put(&mut columns, &r[0], "lambda_1".into(), &r[2]);
        }
    }
    if let Some((_, t)) = read_table(&dir.join("crf.csv"))? {
        for r in &t {
            put(&mut columns, &r[0], format!("h_{}", r[1]), &r[2]);
        }
    }
    if let Some((_, t)) = read_table(&dir.join("surrogate.csv"))? {
        for r in &t {
            put(&mut columns, &r[0], "threshold".into(), &r[1]);
            put(&mut columns, &r[0], "significant_count".into(), &r[2]);
        }
    }
    if let Some((_, t)) = read_table(&dir.join("projection.csv"))? {
        for r in &t {
            put(&mut columns, &r[0], "slope".into(), &r[1]);
            put(&mut columns, &r[0], "r2".into(), &r[2]);
        }
    }
    Ok((columns, rows))
}

fn json_value(s: &str) -> serde_json::Value {
    match s.parse::<f64>() {
        Ok(v) => serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number),
        Err(_) => serde_json::Value::String(s.to_string()),
    }
}

/// Merges the CSVs in `dir` into `report.csv` (one row per window) or
/// `report.json` (manifest, per-window rows and rankings). Returns the
/// written path.
pub fn write_report(dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    let (columns, rows) = merge_windows(dir)?;
    if rows.is_empty() {
        return Err(Error::InvalidRecord(format!(
            "no window reports found in {}",
            dir.display()
        )));
    }
    match format {
        ReportFormat::Csv => {
            let path = dir.join("report.csv");
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
            let mut header = vec!["end_date".to_string()];
            header.extend(columns.iter().cloned());
            w.write_record(&header)?;
            for (d, vals) in &rows {
                let mut rec = vec![d.clone()];
                rec.extend(columns.iter().map(|c| vals.get(c).cloned().unwrap_or_default()));
                w.write_record(&rec)?;
            }
            w.flush()?;
            Ok(path)
        }
        ReportFormat::Json => {
            use serde_json::{json, Map, Value};
            let manifest_path = dir.join(MANIFEST_FILE);
            let manifest: Value = if manifest_path.exists() {
                serde_json::from_reader(BufReader::new(File::open(&manifest_path)?))?
            } else {
                Value::Null
            };
            let windows: Vec<Value> = rows
                .iter()
                .map(|(d, vals)| {
                    let mut m = Map::new();
                    m.insert("end_date".into(), Value::String(d.clone()));
                    for c in &columns {
                        if let Some(v) = vals.get(c) {
                            m.insert(c.clone(), json_value(v));
                        }
                    }
                    Value::Object(m)
                })
                .collect();
            let rankings: Vec<Value> = read_table(&dir.join("rankings.csv"))?
                .map(|(h, t)| {
                    t.iter()
                        .map(|r| {
                            let m: Map<String, Value> = h
                                .iter()
                                .zip(r)
                                .map(|(k, v)| {
                                    let v =
                                        if matches!(k.as_str(), "asset" | "industry" | "period_start" | "period_end") {
                                            Value::String(v.clone())
                                        } else {
                                            json_value(v)
                                        };
                                    (k.clone(), v)
                                })
                                .collect();
                            Value::Object(m)
                        })
                        .collect()
                })
                .unwrap_or_default();
            let path = dir.join("report.json");
            let doc = json!({ "manifest": manifest, "windows": windows, "rankings": rankings });
            serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &doc)?;
            Ok(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PriceRecord;
    use crate::synth::{generate, price_records, SynthModel, SynthSpec};

    fn write_prices(dir: &Path, spec: &SynthSpec) -> PathBuf {
        let p = generate::<f64>(spec).unwrap();
        let path = dir.join("prices.csv");
        let mut w = csv::Writer::from_path(&path).unwrap();
        w.write_record(["date", "asset", "price"]).unwrap();
        for PriceRecord { date, asset, price } in price_records(&p.returns, 100.0) {
            w.write_record([date_s(date), asset, fmt_real(price)]).unwrap();
        }
        w.flush().unwrap();
        path
    }

    fn small_config(dir: &Path) -> RunConfig {
        let spec = SynthSpec::new(6, 80, SynthModel::Equicorrelated { rho: 0.3 }, 5);
        RunConfig {
            prices: write_prices(dir, &spec),
            out_dir: dir.join("out"),
            window: 30,
            step: 7,
            min_observed_days: 10,
            repetitions: 2,
            volatility_window: 20,
            leading_modes: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn defaults_match_reference_parameters() {
        let c = RunConfig::default();
        assert_eq!(
            (c.window, c.step, c.repetitions, c.min_observed_days),
            (400, 1, 10, 2600)
        );
        assert_eq!(c.percentile, 99.0);
        assert!(c.crf_counts.is_none());
        assert_eq!(c.stages, Stage::ALL.to_vec());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig {
            dividers: vec!["2005-06-01".parse().unwrap()],
            industry_scheme: IndustryScheme::Custom(vec!["X".into()]),
            crf_counts: Some(vec![1, 3]),
            ..RunConfig::default()
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), c);
        let partial: RunConfig = serde_json::from_str(r#"{"window": 50}"#).unwrap();
        assert_eq!(partial.window, 50);
        assert_eq!(partial.repetitions, 10);
    }

    #[test]
    fn end_to_end_outputs_and_window_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let m = run_pipeline(&cfg).unwrap();
        assert_eq!(m.dimensions.return_rows, 80);
        assert_eq!(m.dimensions.windows, (80 - 30) / 7 + 1);
        for f in &m.outputs {
            assert!(cfg.out_dir.join(f).exists(), "{f}");
        }
        let windows = fs::read_to_string(cfg.out_dir.join("windows.csv")).unwrap();
        assert_eq!(windows.lines().count(), m.dimensions.windows + 1);
        let back = read_manifest(&cfg.out_dir.join(MANIFEST_FILE)).unwrap();
        assert_eq!(back.config, cfg);
        for fmt in [ReportFormat::Csv, ReportFormat::Json] {
            assert!(write_report(&cfg.out_dir, fmt).unwrap().exists());
        }
    }

    #[test]
    fn insufficient_rows_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            window: 81,
            ..small_config(dir.path())
        };
        match run_pipeline(&cfg) {
            Err(Error::InsufficientRows { required, available }) => assert_eq!((required, available), (81, 80)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn index_alignment_forward_fills() {
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let series = vec![(d("2020-01-01"), 100.0), (d("2020-01-03"), 110.0)];
        let dates = [d("2020-01-01"), d("2020-01-02"), d("2020-01-03")];
        let r = align_index::<f64>(&series, &dates).unwrap();
        assert_eq!(r.values()[0], 0.0);
        assert!((r.values()[1] - (1.1f64).ln()).abs() < 1e-15);
        assert!(align_index::<f64>(&series[1..], &dates).is_err());
    }
}
