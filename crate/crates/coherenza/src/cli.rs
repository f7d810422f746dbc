//! Command-line interface. Every subcommand runs a subset of the pipeline
//! stages against one input field and writes into `--out`.
//!
//! Exit codes: 0 on success, 2 for unreadable or malformed data, 3 for
//! numerical failures, 4 for bad configuration or bad flags.

use crate::cluster::FilterStat;
use crate::coherence::MccsMode;
use crate::extremes::SigmaDivisor;
use crate::phase::TieRule;
use crate::pipeline::{
    run_stages, EmitSet, InputFormat, InputSource, PipelineError, RunConfig, StageSet,
};
use crate::synth::SynthConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::env;
use std::ffi::OsString;
use std::path::PathBuf;

/// Environment variable fixing the size of the global worker pool.
pub const THREADS_ENV: &str = "COHERENZA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "coherenza",
    version,
    about = "Phase, extreme-year, spatial-coherence and clustering analysis of gridded annual rainfall"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a rainfall table and write the canonical binary snapshot.
    Ingest(CommonArgs),
    /// Generate a synthetic field and write the snapshot.
    Synth(CommonArgs),
    /// Phase series, national-phase agreement and transition tables.
    Phase(CommonArgs),
    /// Extreme-year classification and its conditional tables.
    Extremes(CommonArgs),
    /// The fourteen-property spatial coherence table.
    Coherence(CommonArgs),
    /// Spectral clustering of the six co-occurrence similarity matrices.
    Cluster(CommonArgs),
    /// Every stage: snapshot, tables, coherence, clusters, maps, summary.
    Analyze(CommonArgs),
    /// Tables, maps and summary without rewriting the snapshot.
    Report(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Ingest(a)
            | Command::Synth(a)
            | Command::Phase(a)
            | Command::Extremes(a)
            | Command::Coherence(a)
            | Command::Cluster(a)
            | Command::Analyze(a)
            | Command::Report(a) => a,
        }
    }

    fn stages(&self) -> StageSet {
        match self {
            Command::Ingest(_) | Command::Synth(_) => StageSet::field_only(),
            Command::Phase(_) => StageSet {
                phase: true,
                ..StageSet::default()
            },
            Command::Extremes(_) => StageSet {
                extremes: true,
                ..StageSet::default()
            },
            Command::Coherence(_) => StageSet {
                coherence: true,
                ..StageSet::default()
            },
            Command::Cluster(_) => StageSet {
                cluster: true,
                ..StageSet::default()
            },
            Command::Analyze(_) => StageSet::all(),
            Command::Report(_) => StageSet {
                field: false,
                ..StageSet::all()
            },
        }
    }
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Input rainfall table. Mutually exclusive with --synthetic.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Encoding of --input.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,

    /// Generate the field instead of reading one. Takes KEY=VALUE settings
    /// (rows, cols, years, mean, sd, lag1, corr_len, seed, first_year,
    /// step); bare --synthetic uses the defaults.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    synthetic: Option<Vec<String>>,

    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,

    /// Also compute 1-hop smoothed variants and cluster the smoothed field.
    #[arg(long, value_enum, default_value = "on")]
    smooth: OnOff,

    /// Phase of a year that exactly repeats the previous value.
    #[arg(long, value_enum, default_value = "positive")]
    tie: TieArg,

    /// Standard-deviation divisor: n or n-1.
    #[arg(long, value_enum, default_value = "population")]
    sigma: SigmaArg,

    /// Cluster count for the spectral step.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Seed of the k-means step.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Selection threshold for the phase-similarity clusterings.
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,

    /// Output encodings, comma separated.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "csv,geojson,svg"
    )]
    emit: Vec<EmitArg>,

    /// Aggregation of the mean connected-component size over years.
    #[arg(long, value_enum, default_value = "per-year-mean")]
    mccs: MccsArg,

    /// Per-cluster statistic held against the selection threshold.
    #[arg(long, value_enum, default_value = "min-pair")]
    filter_stat: FilterStatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TieArg {
    Positive,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SigmaArg {
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmitArg {
    Csv,
    Geojson,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MccsArg {
    PerYearMean,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FilterStatArg {
    MinPair,
    MeanPair,
}

fn parse_synth_settings(pairs: &[String]) -> Result<SynthConfig, PipelineError> {
    let mut config = SynthConfig::default();
    for pair in pairs {
        if pair.is_empty() {
            continue;
        }
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            PipelineError::Config(format!("synthetic setting {pair:?} is not KEY=VALUE"))
        })?;
        let bad = |e: &dyn std::fmt::Display| {
            PipelineError::Config(format!("synthetic setting {key}={value}: {e}"))
        };
        match key {
            "rows" => config.n_rows = value.parse().map_err(|e| bad(&e))?,
            "cols" => config.n_cols = value.parse().map_err(|e| bad(&e))?,
            "years" => config.n_years = value.parse().map_err(|e| bad(&e))?,
            "mean" => config.base_mean = value.parse().map_err(|e| bad(&e))?,
            "sd" => config.base_sd = value.parse().map_err(|e| bad(&e))?,
            "lag1" => config.lag1_corr = value.parse().map_err(|e| bad(&e))?,
            "corr_len" => config.spatial_corr_len = value.parse().map_err(|e| bad(&e))?,
            "seed" => config.seed = value.parse().map_err(|e| bad(&e))?,
            "first_year" => config.first_year = value.parse().map_err(|e| bad(&e))?,
            "step" => config.grid_step = value.parse().map_err(|e| bad(&e))?,
            _ => {
                return Err(PipelineError::Config(format!(
                    "unknown synthetic setting {key:?} (expected rows, cols, years, mean, sd, \
                     lag1, corr_len, seed, first_year or step)"
                )))
            }
        }
    }
    Ok(config)
}

fn resolve_input(command: &Command) -> Result<InputSource, PipelineError> {
    let args = command.args();
    let is_synth_command = matches!(command, Command::Synth(_));
    match (&args.input, &args.synthetic) {
        (Some(_), Some(_)) => Err(PipelineError::Config(
            "--input and --synthetic are mutually exclusive".into(),
        )),
        (Some(path), None) if !is_synth_command => Ok(InputSource::File {
            path: path.clone(),
            format: match args.format {
                FormatArg::Csv => InputFormat::Csv,
                FormatArg::Bin => InputFormat::Bin,
            },
        }),
        (Some(_), None) => Err(PipelineError::Config(
            "synth generates its field; use --synthetic KEY=VALUE instead of --input".into(),
        )),
        (None, Some(pairs)) => Ok(InputSource::Synthetic(parse_synth_settings(pairs)?)),
        (None, None) if is_synth_command => Ok(InputSource::Synthetic(SynthConfig::default())),
        (None, None) => Err(PipelineError::Config(
            "an input is required: pass --input FILE or --synthetic [KEY=VALUE,...]".into(),
        )),
    }
}

fn build_config(command: &Command) -> Result<RunConfig, PipelineError> {
    let args = command.args();
    let mut config = RunConfig::new(resolve_input(command)?, args.out.clone());
    config.smooth = args.smooth == OnOff::On;
    config.tie = match args.tie {
        TieArg::Positive => TieRule::Positive,
        TieArg::Drop => TieRule::Drop,
    };
    config.sigma = match args.sigma {
        SigmaArg::Population => SigmaDivisor::Population,
        SigmaArg::Sample => SigmaDivisor::Sample,
    };
    config.k = args.k;
    config.seed = args.seed;
    config.threshold = args.threshold;
    config.emit = EmitSet {
        csv: args.emit.contains(&EmitArg::Csv),
        geojson: args.emit.contains(&EmitArg::Geojson),
        svg: args.emit.contains(&EmitArg::Svg),
    };
    config.mccs_mode = match args.mccs {
        MccsArg::PerYearMean => MccsMode::PerYearMean,
        MccsArg::Pooled => MccsMode::Pooled,
    };
    config.filter_stat = match args.filter_stat {
        FilterStatArg::MinPair => FilterStat::MinPair,
        FilterStatArg::MeanPair => FilterStat::MeanPair,
    };
    Ok(config)
}

/// Sizes the global worker pool from the environment. A pool that already
/// exists is left untouched, so in-process callers can only set this once.
fn init_thread_pool() -> Result<(), PipelineError> {
    let Ok(raw) = env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.parse().map_err(|_| {
        PipelineError::Config(format!("{THREADS_ENV}={raw:?} is not a thread count"))
    })?;
    if threads == 0 {
        return Err(PipelineError::Config(format!(
            "{THREADS_ENV} must be at least 1"
        )));
    }
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let config = build_config(&cli.command)?;
    let manifest = run_stages(&config, cli.command.stages())?;
    println!(
        "wrote {} artifacts and manifest.json to {}",
        manifest.artifacts.len(),
        config.out_dir.display()
    );
    Ok(())
}

/// Parses the given argument list and runs it, returning the process exit
/// code. The first element is the program name.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
