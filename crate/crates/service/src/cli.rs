//! The `qrisk` command line.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrisk_core::market::{load_prices, synthetic_prices, write_prices, Portfolio};
use qrisk_core::pool::{EntropyPool, PoolMetadata};
use qrisk_core::randtest::BatteryConfig;
use qrisk_core::risk::{precision_study_with, HorizonRule, Method, RiskJobConfig, RiskReport};
use qrisk_core::source::{ingest_measurement_records, records_to_bits, RandomSourceDescriptor};

use crate::api::{AppState, ADDR_ENV, DATA_DIR_ENV, DEFAULT_ADDR};
use crate::engine;
use crate::error::{Result, ServiceError};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(
    name = "qrisk",
    version,
    about = "Monte Carlo VaR/CVaR with pluggable randomness sources"
)]
pub struct Cli {
    /// Directory holding the source registry, uploads and job state.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "qrisk-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Randomness sources, entropy pools and validation.
    #[command(subcommand)]
    Rng(RngCommand),
    /// Single VaR/CVaR estimation.
    #[command(subcommand)]
    Risk(RiskCommand),
    /// Repeated-run precision studies.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Demo data.
    #[command(subcommand)]
    Data(DataCommand),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum RngCommand {
    /// Draw 16-bit words from a source into a new pool file.
    Fetch {
        #[arg(long)]
        source: String,
        #[arg(long)]
        words: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a measurement-record file and report what it yields.
    Ingest {
        #[arg(long)]
        records: PathBuf,
        /// Apply the Von Neumann extractor.
        #[arg(long)]
        extract: bool,
        /// Write the resulting bits to a pool file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill a new pool file with bytes from a source.
    PoolCreate {
        #[arg(long)]
        source: String,
        #[arg(long)]
        bytes: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Show a pool's metadata and cursor.
    PoolInfo {
        #[arg(long)]
        pool: PathBuf,
    },
    /// Run the statistical battery; exits 2 when the source fails.
    Validate {
        #[arg(long)]
        source: String,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Add a source to the registry, e.g. `--id q1 --descriptor mock:seed=1,p=0.5`.
    Register {
        #[arg(long)]
        id: String,
        #[arg(long)]
        descriptor: String,
    },
    /// List registered sources.
    Sources,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    /// Price history CSV: `date,<ticker>,...`.
    #[arg(long)]
    pub prices: PathBuf,
    /// Portfolio file with `TICKER,weight` lines.
    #[arg(long)]
    pub portfolio: PathBuf,
    /// `hist` or `mc`.
    #[arg(long, default_value = "mc")]
    pub method: Method,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1)]
    pub horizon: u32,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Registered source id or inline `kind:key=value,...` descriptor.
    #[arg(long)]
    pub source: Option<String>,
    /// `daily-log-sum`, `daily-simple` or `sqrt-scaled`.
    #[arg(long, default_value = "daily-log-sum")]
    pub rule: HorizonRule,
    #[arg(long, default_value_t = 0)]
    pub substream: u64,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RiskCommand {
    Run(RiskArgs),
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    Run {
        #[command(flatten)]
        risk: RiskArgs,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Generate a synthetic price history and optionally a random portfolio.
    Synth {
        #[arg(long, default_value_t = 40)]
        assets: usize,
        #[arg(long, default_value_t = 750)]
        days: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        portfolio_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        weights_seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = ADDR_ENV, default_value = DEFAULT_ADDR)]
    pub addr: SocketAddr,
    /// Jobs allowed to run at once.
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Registry lookups only happen when the data directory already exists,
/// so inline descriptors work anywhere.
fn registry(data_dir: &Path) -> Result<Option<Store>> {
    if data_dir.join("sources.json").exists() {
        Store::open(data_dir).map(Some)
    } else {
        Ok(None)
    }
}

fn resolve(data_dir: &Path, text: &str) -> Result<RandomSourceDescriptor> {
    engine::resolve_source(registry(data_dir)?.as_ref(), text)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let data_dir = cli.data_dir;
    match cli.command {
        Command::Rng(cmd) => rng(&data_dir, cmd),
        Command::Risk(RiskCommand::Run(args)) => {
            let (config, calibration) = risk_inputs(&data_dir, &args)?;
            let execution = engine::execute(&config, &calibration)?;
            emit_report(&execution.outcome.report, args.report.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Study(StudyCommand::Run { risk, runs }) => {
            let (config, calibration) = risk_inputs(&data_dir, &risk)?;
            let study = precision_study_with(runs, |r| {
                let mut run = config.clone();
                run.substream = config.substream + r as u64;
                engine::execute(&run, &calibration)
                    .map(|e| e.outcome.report)
                    .map_err(|e| qrisk_core::risk::RiskError::InvalidConfig(e.to_string()))
            })?;
            print!("{study}");
            if let Some(path) = &risk.report {
                let json = serde_json::to_vec_pretty(&study).expect("serializable");
                std::fs::write(path, json).map_err(io_err(path))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Data(DataCommand::Synth {
            assets,
            days,
            seed,
            out,
            portfolio_out,
            weights_seed,
        }) => {
            if assets == 0 || days < 3 {
                return Err(ServiceError::Invalid("need at least one asset and three days".into()));
            }
            let table = synthetic_prices(assets, days, seed);
            let file = std::fs::File::create(&out).map_err(io_err(&out))?;
            write_prices(&table, std::io::BufWriter::new(file))?;
            println!("wrote {} days x {} assets to {}", days, assets, out.display());
            if let Some(path) = portfolio_out {
                let portfolio = Portfolio::random(table.tickers.clone(), weights_seed)?;
                std::fs::write(&path, portfolio.to_text()).map_err(io_err(&path))?;
                println!("wrote portfolio to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve(args) => {
            let state = AppState::open(&data_dir, args.workers)?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .init();
            let runtime = tokio::runtime::Runtime::new().map_err(io_err(&data_dir))?;
            runtime
                .block_on(crate::api::serve(state, args.addr))
                .map_err(io_err(&data_dir))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn rng(data_dir: &Path, cmd: RngCommand) -> Result<ExitCode> {
    match cmd {
        RngCommand::Fetch { source, words, out } => {
            let descriptor = resolve(data_dir, &source)?;
            let pool = EntropyPool::create(&out, &descriptor, words * 2)?;
            println!(
                "wrote {} bytes from {} to {}",
                pool.total_bytes(),
                descriptor.id,
                out.display()
            );
        }
        RngCommand::PoolCreate { source, bytes, out } => {
            let descriptor = resolve(data_dir, &source)?;
            let pool = EntropyPool::create(&out, &descriptor, bytes)?;
            println!(
                "wrote {} bytes from {} to {}",
                pool.total_bytes(),
                descriptor.id,
                out.display()
            );
        }
        RngCommand::PoolInfo { pool } => {
            let p = EntropyPool::open(&pool)?;
            let meta = p.metadata();
            println!("source: {}", meta.source_id);
            println!("created_at: {}", meta.created_at);
            println!("extractor_applied: {}", meta.extractor_applied);
            println!("total_bytes: {}", p.total_bytes());
            println!("cursor: {}", p.cursor()?);
            println!("remaining: {}", p.remaining()?);
        }
        RngCommand::Ingest { records, extract, out } => {
            let set = ingest_measurement_records(&records)?;
            let bits = records_to_bits(&set, extract);
            println!("backend: {}", set.backend_label);
            println!("shots: {}", set.shots);
            println!("bits_per_shot: {}", set.bits_per_shot);
            println!("extractor_applied: {extract}");
            println!("output_bits: {}", bits.len());
            println!("uniforms: {}", bits.len() / qrisk_core::bits::UNIFORM_BITS);
            if let Some(out) = out {
                let whole = bits.len() / 8;
                let bytes = bits.to_bytes();
                let meta = PoolMetadata::new(set.backend_label.clone(), extract);
                EntropyPool::write(&out, &meta, &bytes[..whole])?;
                println!("wrote {whole} bytes to {}", out.display());
            }
        }
        RngCommand::Validate {
            source,
            samples,
            report,
        } => {
            let store = registry(data_dir)?;
            let descriptor = engine::resolve_source(store.as_ref(), &source)?;
            let result = engine::validate_source(&descriptor, samples, &BatteryConfig::default())?;
            print!("{result}");
            if let Some(path) = report {
                std::fs::write(&path, result.to_string()).map_err(io_err(&path))?;
            }
            if let Some(store) = store.filter(|s| s.source(&descriptor.id).is_ok()) {
                store.save_validation(&descriptor.id, result.clone())?;
            }
            return Ok(if result.verdict.overall.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            });
        }
        RngCommand::Register { id, descriptor } => {
            let mut parsed = RandomSourceDescriptor::parse_inline(&descriptor)?;
            parsed.id = id;
            let entry = Store::open(data_dir)?.register_source(parsed)?;
            println!("registered {}", entry.descriptor.id);
        }
        RngCommand::Sources => {
            for entry in Store::open(data_dir)?.sources() {
                let params: Vec<String> = entry
                    .descriptor
                    .params
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                println!(
                    "{}\t{}\t{}",
                    entry.descriptor.id,
                    entry.descriptor.kind,
                    params.join(",")
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn risk_inputs(data_dir: &Path, args: &RiskArgs) -> Result<(RiskJobConfig, qrisk_core::risk::Calibration)> {
    let prices = load_prices(&args.prices)?;
    let calibration = engine::calibrate(&prices)?;
    let portfolio = Portfolio::load(&args.portfolio)?;
    let source = match (&args.source, args.method) {
        (Some(s), _) => Some(resolve(data_dir, s)?),
        (None, Method::MonteCarlo) => {
            return Err(ServiceError::Invalid("--source is required with --method mc".into()));
        }
        (None, Method::Historical) => None,
    };
    let config = RiskJobConfig {
        portfolio,
        method: args.method,
        alpha: args.alpha,
        horizon_days: args.horizon,
        paths: args.paths,
        horizon_rule: args.rule,
        source,
        substream: args.substream,
    };
    engine::check_config(&config, &calibration)?;
    Ok((config, calibration))
}

fn emit_report(report: &RiskReport, path: Option<&Path>) -> Result<()> {
    print!("{report}");
    if let Some(path) = path {
        let json = serde_json::to_vec_pretty(report).expect("serializable");
        std::fs::write(path, json).map_err(io_err(path))?;
    }
    Ok(())
}
