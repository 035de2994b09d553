//! `pairlab` command line: simulation, correlation, sweeps and model evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or model error.
//! Failures print a one-line JSON record `{"error": {"kind", "message"}}` on stderr.

pub mod config;
mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, kind: "config".into(), message: message.into() }
    }

    pub(crate) fn invalid_config(err: pairlab_core::Error) -> Self {
        Self { code: EXIT_CONFIG, kind: "config".into(), message: err.to_string() }
    }
}

impl From<pairlab_core::Error> for CliError {
    fn from(err: pairlab_core::Error) -> Self {
        Self { code: EXIT_DATA, kind: err.kind().into(), message: err.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self { code: EXIT_DATA, kind: "io".into(), message: err.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pairlab", version, about = "Photon-pair source simulation and time-tag correlation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a measurement and write it as a PTT1 file.
    Simulate(SimulateArgs),
    /// Cross-correlation histogram of two channels as CSV.
    Correlate(CorrelateArgs),
    /// Heralded autocorrelation g2c of a PTT1 file.
    #[command(name = "herald-g2")]
    HeraldG2(HeraldArgs),
    /// Singles, coincidences and efficiencies of a PTT1 file.
    Summary(SummaryArgs),
    /// Simulate and analyze a grid of pair rates.
    Sweep(SweepArgs),
    /// Emission-line list of one or more clusters as CSV.
    Cluster(ClusterArgs),
    /// Evaluate analytic models.
    Model {
        #[command(subcommand)]
        model: ModelCommand,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
    /// Pair rate R·P in pairs/s.
    #[arg(long)]
    rate_per_s: Option<f64>,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    a: u8,
    #[arg(long)]
    b: u8,
    #[arg(long, default_value_t = 162)]
    bin_ps: u64,
    #[arg(long, default_value_t = 50.0)]
    max_lag_ns: f64,
    #[arg(long)]
    out: PathBuf,
    /// Split the first stream into this many chunks processed in parallel.
    #[arg(long, default_value_t = 1)]
    chunks: usize,
}

#[derive(Debug, Args)]
struct HeraldArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    herald: u8,
    #[arg(long, default_value_t = 0)]
    s1: u8,
    #[arg(long, default_value_t = 1)]
    s2: u8,
    #[arg(long, default_value_t = 8.0)]
    window_ns: f64,
    /// Window center; default is the herald-to-signal correlation peak.
    #[arg(long, allow_hyphen_values = true)]
    offset_ns: Option<f64>,
}

#[derive(Debug, Args)]
struct SummaryArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    eta_det: f64,
    #[arg(long, default_value_t = 1.2)]
    pump_mw: f64,
    #[arg(long, default_value_t = 8.0)]
    window_ns: f64,
    #[arg(long, allow_hyphen_values = true)]
    offset_ns: Option<f64>,
    /// Signal channels, merged before matching.
    #[arg(long, value_delimiter = ',', default_values_t = [0u8, 1])]
    signal: Vec<u8>,
    #[arg(long, default_value_t = 2)]
    idler: u8,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated pair rates in pairs/s.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    window_ns: Option<f64>,
    #[arg(long)]
    write_streams: bool,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    span_ghz: f64,
    #[arg(long)]
    out: PathBuf,
    /// Full width for the central fraction; defaults to one cluster spacing.
    #[arg(long)]
    window_ghz: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Heralded g2c = 2p − p² with p = R·P·Δt.
    Eq1 {
        #[arg(long)]
        rp: f64,
        #[arg(long, default_value_t = 8.0)]
        window_ns: f64,
    },
    /// g2c from measured g_ss, g_ii and g_si.
    Eq2 {
        #[arg(long)]
        g_ss: f64,
        #[arg(long)]
        g_ii: f64,
        #[arg(long)]
        g_si: f64,
    },
    /// Predicted signal–idler cross-correlation g_ii²/g2c.
    #[command(name = "cross-corr")]
    CrossCorr {
        #[arg(long)]
        g_ii: f64,
        #[arg(long)]
        rp: f64,
        #[arg(long, default_value_t = 8.0)]
        window_ns: f64,
    },
    /// Efficiencies from singles and coincidence rates.
    Efficiency {
        #[arg(long)]
        n_s: f64,
        #[arg(long)]
        n_i: f64,
        #[arg(long)]
        r: f64,
        #[arg(long, default_value_t = 0.6)]
        eta_det: f64,
        #[arg(long, default_value_t = 1.2)]
        pump_mw: f64,
    },
    /// Product linewidth, coherence time and IRF-broadened autocorrelation.
    Lineshape {
        #[arg(long, default_value_t = 226.0)]
        fwhm_a_mhz: f64,
        #[arg(long, default_value_t = 274.0)]
        fwhm_b_mhz: f64,
        #[arg(long, default_value_t = 0.7304)]
        sigma_ns: f64,
        #[arg(long, default_value_t = 8.0)]
        window_ns: f64,
    },
    /// Etalon extinction and filtered fraction of the source line.
    Etalon {
        #[arg(long, default_value_t = 12.8)]
        fsr_ghz: f64,
        #[arg(long, default_value_t = 274.0)]
        fwhm_mhz: f64,
        #[arg(long, default_value_t = 226.0)]
        source_fwhm_mhz: f64,
        #[arg(long, default_value_t = 400.0)]
        window_mhz: f64,
    },
    /// Linear frequency drift.
    Drift {
        #[arg(long)]
        hours: f64,
        #[arg(long, default_value_t = 10.0)]
        rate_mhz_per_h: f64,
    },
    /// Piezo strain tuning at one voltage.
    Strain {
        #[arg(long)]
        voltage_v: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Runs the command line, writing results to `out` and diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(out, "{}", e.render());
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { EXIT_CONFIG } else { EXIT_OK };
            }
            let rendered = e.render().to_string();
            let _ = write!(err, "{rendered}");
            let first = rendered.lines().next().unwrap_or("usage error").trim_start_matches("error: ").to_string();
            report(err, &CliError { code: EXIT_CONFIG, kind: "usage".into(), message: first });
            return EXIT_CONFIG;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report(err, &e);
            e.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

fn report(err: &mut dyn Write, e: &CliError) {
    let record = json!({ "error": { "kind": e.kind, "message": e.message } });
    let _ = writeln!(err, "{record}");
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Correlate(a) => commands::correlate(a, out),
        Command::HeraldG2(a) => commands::herald_g2(a, out),
        Command::Summary(a) => commands::summary(a, out),
        Command::Sweep(a) => commands::sweep(a, out),
        Command::Cluster(a) => commands::cluster(a, out),
        Command::Model { model } => commands::model(model, out),
    }
}
