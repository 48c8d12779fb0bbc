use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ffspread::analysis::{DEFAULT_GRID, DEFAULT_SAMPLES};
use ffspread::sim::{self, RunConfig, SLOPE_WINDOW};
use ffspread::slope::{self, SlopeReport};
use ffspread::Error;

/// Finite-field spreading multiple access: simulation and analysis.
#[derive(Parser)]
#[command(name = "ffspread", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BER sweep; writes `ber.csv` into the output directory.
    Simulate(SimulateArgs),
    /// Despreader (exact, approximate) and ESE EXIT curves as one CSV.
    Exit(ExitArgs),
    /// Asymptotic and standard slopes `s,L,g,g_std`.
    Slope(SlopeArgs),
    /// Predicted BER from the standard slope.
    Predict(PredictArgs),
    /// Slope of ln BER against linear Eb/N0 from a BER CSV.
    Fit(FitArgs),
}

/// Every key of the config file, overridable on the command line.
#[derive(Args)]
struct SimulateArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "K")]
    users: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long = "L")]
    spreading: Option<String>,
    #[arg(long = "N")]
    symbols: Option<String>,
    /// Comma-separated Eb/N0 values in dB.
    #[arg(long = "eb_n0", allow_hyphen_values = true)]
    eb_n0: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<String>,
    #[arg(long = "min_errors")]
    min_errors: Option<String>,
    #[arg(long = "max_frames")]
    max_frames: Option<String>,
    /// natural | random
    #[arg(long)]
    mapper: Option<String>,
    /// random | ones
    #[arg(long)]
    sv: Option<String>,
    /// Output directory.
    #[arg(long)]
    output: Option<String>,
}

#[derive(Args)]
struct ExitArgs {
    #[arg(long)]
    s: u32,
    #[arg(long = "L")]
    spreading: usize,
    #[arg(long = "K", default_value_t = 1)]
    users: usize,
    /// Eb/N0 in dB for the ESE curve.
    #[arg(long = "eb_n0", allow_hyphen_values = true)]
    eb_n0: f64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Comma-separated a-priori means; defaults to the standard grid.
    #[arg(long)]
    grid: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SlopeArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,6")]
    s: Vec<u32>,
    #[arg(long = "L", value_delimiter = ',', default_value = "8,16")]
    spreading: Vec<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    s: u32,
    #[arg(long = "L")]
    spreading: usize,
    /// Comma-separated Eb/N0 values in dB.
    #[arg(long = "eb_n0", allow_hyphen_values = true)]
    eb_n0: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with `eb_n0_db` and `ber` columns.
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "ber_min", default_value_t = SLOPE_WINDOW.0)]
    ber_min: f64,
    #[arg(long = "ber_max", default_value_t = SLOPE_WINDOW.1)]
    ber_max: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Config errors exit with 2, everything else with 3.
enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn config<T>(r: ffspread::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => config(RunConfig::from_file(p))?,
        None => RunConfig::default(),
    };
    let overrides = [
        ("K", &a.users),
        ("s", &a.s),
        ("L", &a.spreading),
        ("N", &a.symbols),
        ("eb_n0", &a.eb_n0),
        ("iterations", &a.iterations),
        ("seed", &a.seed),
        ("workers", &a.workers),
        ("min_errors", &a.min_errors),
        ("max_frames", &a.max_frames),
        ("mapper", &a.mapper),
        ("sv", &a.sv),
        ("output", &a.output),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config(cfg.set(key, v))?;
        }
    }
    config(cfg.validate())?;
    let records = sim::with_workers(cfg.workers, || sim::run_ber_sweep(&cfg))??;
    for r in &records {
        eprintln!(
            "Eb/N0 {} dB: {} errors in {} bits over {} frames, BER {:.3e} ({:.1} s)",
            r.eb_n0_db, r.errors, r.bits, r.frames, r.ber, r.wall_time
        );
    }
    std::fs::create_dir_all(&cfg.output)?;
    let mut out = BufWriter::new(File::create(cfg.output.join("ber.csv"))?);
    sim::write_ber_csv(&records, &mut out)?;
    out.flush()?;
    Ok(())
}

fn exit_chart(a: ExitArgs) -> Result<(), Failure> {
    let grid = match &a.grid {
        Some(g) => config(sim::parse_list("grid", g))?,
        None => DEFAULT_GRID.to_vec(),
    };
    let chart = sim::with_workers(a.workers, || {
        sim::emit_exit_chart(a.s, a.spreading, a.users, a.eb_n0, &grid, a.samples, a.seed)
    })?;
    let chart = config(chart)?;
    let mut out = sink(a.output.as_deref())?;
    sim::write_exit_chart_csv(&chart, &mut out)?;
    out.flush()?;
    Ok(())
}

fn slope_table(a: SlopeArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for &l in &a.spreading {
        for &s in &a.s {
            rows.push(config(SlopeReport::new(s, l, None))?);
        }
    }
    let mut out = sink(a.output.as_deref())?;
    slope::write_table_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn predict(a: PredictArgs) -> Result<(), Failure> {
    let db = config(sim::parse_list("eb_n0", &a.eb_n0))?;
    config(slope::standard_slope(a.s, a.spreading))?;
    let mut out = sink(a.output.as_deref())?;
    sim::write_prediction_csv(a.s, a.spreading, &db, &mut out)?;
    out.flush()?;
    Ok(())
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let file = File::open(&a.input).map_err(|e| Failure::Config(e.into()))?;
    let pts: Vec<(f64, f64)> = config(sim::read_ber_csv(file))?
        .into_iter()
        .map(|(db, ber)| (ffspread::channel::db_to_linear(db), ber))
        .collect();
    let slope = sim::fit_slope(&pts, (a.ber_min, a.ber_max))?;
    let mut out = sink(a.output.as_deref())?;
    writeln!(out, "slope")?;
    writeln!(out, "{slope}")?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Exit(a) => exit_chart(a),
        Command::Slope(a) => slope_table(a),
        Command::Predict(a) => predict(a),
        Command::Fit(a) => fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
