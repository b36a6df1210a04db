use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use rmtcorr::io::fmt_real;
use rmtcorr::panel::{
    filter_min_history, ingest_prices, load_industry_map, read_industry_csv, read_price_csv, write_industry_csv,
    write_panel_csv, IndustryScheme,
};
use rmtcorr::pipeline::{
    open_input, read_manifest, run_pipeline, write_report, Precision, ReportFormat, RunConfig, Stage,
};
use rmtcorr::synth::{generate, price_records, SynthModel, SynthSpec};
use rmtcorr::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rmtcorr",
    version,
    about = "Rolling-window correlation spectra of asset price panels"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, align and filter a price panel; dump the normalized records.
    Ingest(IngestArgs),
    /// Generate a synthetic price panel.
    Synth(SynthArgs),
    /// Correlations, spectra, MP reference and cumulative risk fraction.
    Analyze(RunArgs),
    /// Shuffle-surrogate thresholds and significant eigenvalue counts.
    Surrogate(RunArgs),
    /// Industry contributions, market-mode projection and rankings.
    Modes(RunArgs),
    /// Every stage, or a rerun of a previous manifest.
    Run(RunCommand),
    /// Merge a run's CSVs into one summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Csrc,
    Inferred,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F64,
    F32,
}

#[derive(Args)]
struct IndustryArgs {
    /// `asset,industry` CSV.
    #[arg(long, env = "RMTCORR_INDUSTRIES")]
    industries: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csrc", env = "RMTCORR_INDUSTRY_SCHEME")]
    industry_scheme: SchemeArg,
    /// Admissible codes for `--industry-scheme custom`.
    #[arg(long, value_delimiter = ',', env = "RMTCORR_INDUSTRY_CODES")]
    industry_codes: Vec<String>,
}

impl IndustryArgs {
    fn scheme(&self) -> Result<IndustryScheme, Error> {
        match self.industry_scheme {
            SchemeArg::Csrc => Ok(IndustryScheme::Csrc),
            SchemeArg::Inferred => Ok(IndustryScheme::Inferred),
            SchemeArg::Custom if self.industry_codes.is_empty() => Err(Error::InvalidParameter(
                "--industry-scheme custom needs --industry-codes".into(),
            )),
            SchemeArg::Custom => Ok(IndustryScheme::Custom(self.industry_codes.clone())),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// `date,asset,price` CSV.
    #[arg(long, env = "RMTCORR_PRICES")]
    prices: Option<PathBuf>,
    #[command(flatten)]
    industry: IndustryArgs,
    /// `date,price` market index; defaults to the equal-weight return.
    #[arg(long, env = "RMTCORR_INDEX")]
    index: Option<PathBuf>,
    #[arg(long, default_value = "out", env = "RMTCORR_OUT_DIR")]
    out_dir: PathBuf,
    /// Window length in trading days.
    #[arg(long, default_value_t = 400, env = "RMTCORR_WINDOW")]
    window: usize,
    #[arg(long, default_value_t = 1, env = "RMTCORR_STEP")]
    step: usize,
    #[arg(long, default_value_t = 2600, env = "RMTCORR_MIN_OBSERVED_DAYS")]
    min_observed_days: usize,
    #[arg(long, default_value_t = 10, env = "RMTCORR_REPETITIONS")]
    repetitions: usize,
    #[arg(long, default_value_t = 99.0, env = "RMTCORR_PERCENTILE")]
    percentile: f64,
    #[arg(long, default_value_t = 0, env = "RMTCORR_SEED")]
    seed: u64,
    /// Component counts n for h_n [default: 1,10,50,N].
    #[arg(long, value_delimiter = ',', env = "RMTCORR_CRF_COUNTS")]
    crf_counts: Vec<usize>,
    /// Period dividers for rankings (YYYY-MM-DD, comma separated).
    #[arg(long, value_delimiter = ',', env = "RMTCORR_DIVIDERS")]
    dividers: Vec<NaiveDate>,
    #[arg(long, default_value_t = 201, env = "RMTCORR_COEFF_BINS")]
    coeff_bins: usize,
    #[arg(long, default_value_t = 200, env = "RMTCORR_EIGEN_BINS")]
    eigen_bins: usize,
    #[arg(long, default_value_t = 20.0, env = "RMTCORR_EIGEN_MAX")]
    eigen_max: f64,
    #[arg(long, default_value_t = 100, env = "RMTCORR_VOLATILITY_WINDOW")]
    volatility_window: usize,
    #[arg(long, default_value_t = 5, env = "RMTCORR_LEADING_MODES")]
    leading_modes: usize,
    #[arg(long, env = "RMTCORR_RANK_MARKET_MODE")]
    rank_market_mode: bool,
    #[arg(long, default_value_t = 10, env = "RMTCORR_TOP_COUNT")]
    top_count: usize,
    #[arg(long, default_value_t = 3, env = "RMTCORR_SMALL_GROUP_FLOOR")]
    small_group_floor: usize,
    /// Also write every eigenvector of every window (N² rows per window).
    #[arg(long, env = "RMTCORR_DUMP_EIGENVECTORS")]
    dump_eigenvectors: bool,
    #[arg(long, value_enum, default_value = "f64", env = "RMTCORR_PRECISION")]
    precision: PrecisionArg,
}

impl RunArgs {
    fn config(&self, stages: Vec<Stage>) -> Result<RunConfig, Error> {
        let prices = self
            .prices
            .clone()
            .ok_or_else(|| Error::InvalidParameter("--prices is required".into()))?;
        Ok(RunConfig {
            prices,
            industries: self.industry.industries.clone(),
            industry_scheme: self.industry.scheme()?,
            index: self.index.clone(),
            out_dir: self.out_dir.clone(),
            window: self.window,
            step: self.step,
            min_observed_days: self.min_observed_days,
            repetitions: self.repetitions,
            percentile: self.percentile,
            seed: self.seed,
            crf_counts: (!self.crf_counts.is_empty()).then(|| self.crf_counts.clone()),
            dividers: self.dividers.clone(),
            coeff_bins: self.coeff_bins,
            eigen_bins: self.eigen_bins,
            eigen_max: self.eigen_max,
            volatility_window: self.volatility_window,
            leading_modes: self.leading_modes,
            rank_market_mode: self.rank_market_mode,
            top_count: self.top_count,
            small_group_floor: self.small_group_floor,
            dump_eigenvectors: self.dump_eigenvectors,
            precision: match self.precision {
                PrecisionArg::F64 => Precision::F64,
                PrecisionArg::F32 => Precision::F32,
            },
            stages,
        })
    }
}

#[derive(Args)]
struct RunCommand {
    /// Rerun the configuration recorded in a manifest.
    #[arg(long, conflicts_with = "prices")]
    manifest: Option<PathBuf>,
    /// With --manifest: write to this directory instead of the recorded one.
    #[arg(long = "rerun-out-dir", requires = "manifest")]
    rerun_out_dir: Option<PathBuf>,
    #[command(flatten)]
    args: RunArgs,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long, env = "RMTCORR_PRICES")]
    prices: PathBuf,
    #[command(flatten)]
    industry: IndustryArgs,
    #[arg(long, default_value_t = 2600, env = "RMTCORR_MIN_OBSERVED_DAYS")]
    min_observed_days: usize,
    /// Normalized panel CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Iid,
    Equicorrelated,
    OneFactor,
    Sector,
    Regime,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "iid")]
    model: ModelArg,
    #[arg(long, default_value_t = 100)]
    assets: usize,
    #[arg(long, default_value_t = 3000)]
    days: usize,
    #[arg(long, default_value_t = 0, env = "RMTCORR_SEED")]
    seed: u64,
    /// Daily return standard deviation.
    #[arg(long, default_value_t = 0.01)]
    volatility: f64,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    beta_lo: f64,
    #[arg(long, default_value_t = 1.5)]
    beta_hi: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, value_delimiter = ',', default_value = "20,30,50")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.4)]
    intra_rho: f64,
    #[arg(long, default_value_t = 0.1)]
    market_rho: f64,
    /// Equicorrelated segments `days:rho`, comma separated; overrides --days.
    #[arg(long, value_delimiter = ',')]
    regime: Vec<String>,
    /// Full `SynthSpec` as JSON; overrides the model flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Price CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Planted sector labels (sector model only).
    #[arg(long)]
    industries_out: Option<PathBuf>,
}

impl SynthArgs {
    fn spec(&self) -> Result<SynthSpec, Error> {
        if let Some(p) = &self.spec {
            return Ok(serde_json::from_reader(open_input(p)?)?);
        }
        let mut days = self.days;
        let model = match self.model {
            ModelArg::Iid => SynthModel::Iid,
            ModelArg::Equicorrelated => SynthModel::Equicorrelated { rho: self.rho },
            ModelArg::OneFactor => SynthModel::OneFactor {
                beta_lo: self.beta_lo,
                beta_hi: self.beta_hi,
                noise: self.noise,
            },
            ModelArg::Sector => SynthModel::Sector {
                sizes: self.sizes.clone(),
                intra_rho: self.intra_rho,
                market_rho: self.market_rho,
            },
            ModelArg::Regime => {
                if self.regime.is_empty() {
                    return Err(Error::InvalidParameter(
                        "--model regime needs --regime days:rho,...".into(),
                    ));
                }
                let segments = self
                    .regime
                    .iter()
                    .map(|s| {
                        let parsed = s
                            .split_once(':')
                            .and_then(|(d, r)| Some((d.trim().parse::<usize>().ok()?, r.trim().parse::<f64>().ok()?)));
                        parsed
                            .map(|(d, rho)| (d, SynthModel::Equicorrelated { rho }))
                            .ok_or_else(|| Error::InvalidParameter(format!("bad regime segment `{s}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                days = segments.iter().map(|s| s.0).sum();
                SynthModel::Regime { segments }
            }
        };
        Ok(SynthSpec {
            volatility: self.volatility,
            ..SynthSpec::new(self.assets, days, model, self.seed)
        })
    }
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "out", env = "RMTCORR_OUT_DIR")]
    out_dir: PathBuf,
    /// Write report.json instead of report.csv.
    #[arg(long)]
    json: bool,
}

fn ingest(a: &IngestArgs) -> Result<(), Error> {
    let recs = read_price_csv::<f64, _>(open_input(&a.prices)?, &a.prices.display().to_string())?;
    let panel = ingest_prices(recs)?;
    let kept = filter_min_history(&panel, a.min_observed_days)?;
    eprintln!(
        "{} dates, {} assets loaded, {} kept with >= {} observed days",
        panel.n_dates(),
        panel.n_assets(),
        kept.n_assets(),
        a.min_observed_days
    );
    if let Some(p) = &a.industry.industries {
        let map = load_industry_map(
            read_industry_csv(open_input(p)?, &p.display().to_string())?,
            &a.industry.scheme()?,
        )?;
        for (code, n) in map.group_sizes(kept.assets()) {
            eprintln!("  {code}: {n}");
        }
    }
    match &a.out {
        Some(p) => write_panel_csv(&kept, BufWriter::new(File::create(p)?)),
        None => write_panel_csv(&kept, io::stdout().lock()),
    }
}

fn synth(a: &SynthArgs) -> Result<(), Error> {
    let spec = a.spec()?;
    let panel = generate::<f64>(&spec)?;
    let mut w = csv_writer(&a.out)?;
    writeln!(w, "date,asset,price")?;
    for r in price_records(&panel.returns, 100.0) {
        writeln!(w, "{},{},{}", r.date.format("%Y-%m-%d"), r.asset, fmt_real(r.price))?;
    }
    w.flush()?;
    match (&a.industries_out, &panel.industries) {
        (Some(p), Some(map)) => write_industry_csv(map, BufWriter::new(File::create(p)?))?,
        (Some(_), None) => log::warn!("model has no planted sectors; --industries-out ignored"),
        _ => {}
    }
    info!(
        "wrote {} assets x {} days to {}",
        spec.n_assets,
        spec.n_days,
        a.out.display()
    );
    Ok(())
}

fn csv_writer(p: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(p)?))
}

fn run_stages(args: &RunArgs, stages: Vec<Stage>) -> Result<(), Error> {
    let m = run_pipeline(&args.config(stages)?)?;
    eprintln!(
        "{} windows over {} assets in {:.1}s -> {}",
        m.dimensions.windows,
        m.dimensions.assets,
        m.wall_time_seconds,
        m.config.out_dir.display()
    );
    Ok(())
}

fn run(c: &RunCommand) -> Result<(), Error> {
    match &c.manifest {
        Some(p) => {
            let mut config = read_manifest(p)?.config;
            if let Some(dir) = &c.rerun_out_dir {
                config.out_dir = dir.clone();
            }
            let m = run_pipeline(&config)?;
            eprintln!("reran {} windows -> {}", m.dimensions.windows, config.out_dir.display());
            Ok(())
        }
        None => run_stages(&c.args, Stage::ALL.to_vec()),
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_usage() {
        EXIT_USAGE
    } else if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, result) = match &cli.command {
        Command::Ingest(a) => ("ingest", ingest(a)),
        Command::Synth(a) => ("synth", synth(a)),
        Command::Analyze(a) => ("analyze", run_stages(a, vec![Stage::Analyze])),
        Command::Surrogate(a) => ("surrogate", run_stages(a, vec![Stage::Surrogate])),
        Command::Modes(a) => ("modes", run_stages(a, vec![Stage::Modes])),
        Command::Run(c) => ("run", run(c)),
        Command::Report(a) => {
            let fmt = if a.json { ReportFormat::Json } else { ReportFormat::Csv };
            (
                "report",
                write_report(&a.out_dir, fmt).map(|p| eprintln!("wrote {}", p.display())),
            )
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rmtcorr {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
