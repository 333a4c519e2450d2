//! `aquasonde`: field survey command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod calibrate;
mod capture;
mod client;
mod report;
mod simulate;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aquasonde_core::Season;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aquasonde", version, about = "Portable water-quality survey tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve a scenario's simulated probe byte stream over TCP.
    Simulate(simulate::Args),
    /// Run a station-by-station dwell capture against a probe stream.
    Capture(capture::Args),
    /// Per-station table and SVG chart from a service or a CSV file.
    Report(report::Args),
    /// Two-point buffer calibration; writes a calibration file.
    Calibrate(calibrate::Args),
    /// Run the ingestion service.
    Serve(ServeArgs),
    /// Upload a capture CSV to the service.
    Upload(UploadArgs),
    /// Download the service's readings as CSV.
    Export(ExportArgs),
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Append-only reading log.
    #[arg(long, default_value = "aquasonde-data/readings.log")]
    log: PathBuf,
    /// Season used when a request does not name one.
    #[arg(long, default_value = "summer")]
    season: Season,
}

#[derive(Debug, clap::Args)]
struct UploadArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    service: String,
}

#[derive(Debug, clap::Args)]
struct ExportArgs {
    #[arg(long)]
    service: String,
    #[arg(long)]
    out: PathBuf,
    /// Include device_id, station and seq_origin columns.
    #[arg(long)]
    with_provenance: bool,
}

/// Bad input from the operator; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Reads an input file; a missing or unreadable file is a usage error naming the path.
pub fn read_input(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

pub fn token() -> Option<String> {
    std::env::var(aquasonde_service::TOKEN_ENV)
        .ok()
        .filter(|t| !t.is_empty())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let config = aquasonde_service::ServiceConfig {
        listen: args.listen,
        log_path: args.log,
        token: token(),
        default_season: args.season,
    };
    let (state, recovery) = aquasonde_service::open_state(&config)?;
    eprintln!(
        "recovered {} readings from {}{}",
        recovery.records,
        config.log_path.display(),
        if recovery.torn_bytes > 0 {
            format!(" (dropped a {}-byte torn tail)", recovery.torn_bytes)
        } else {
            String::new()
        }
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.listen)
            .await
            .map_err(|e| usage(format!("cannot listen on {}: {e}", config.listen)))?;
        println!("listening on {}", listener.local_addr()?);
        std::io::stdout().flush()?;
        aquasonde_service::serve_on(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn upload(args: UploadArgs) -> anyhow::Result<()> {
    let text = read_input(&args.csv)?;
    let readings = aquasonde_core::export::parse_csv(&text)
        .map_err(|e| usage(format!("{}: {e}", args.csv.display())))?;
    let client = client::Client::new(&args.service, token())?;
    let out = client.post_readings(&readings, aquasonde_service::Source::Replay)?;
    println!(
        "uploaded {}: accepted {}, duplicates {}, rejected {}",
        args.csv.display(),
        out.accepted,
        out.duplicates,
        out.rejected.len()
    );
    for r in &out.rejected {
        println!("  row {}: {}", r.index + 1, r.reason);
    }
    Ok(())
}

fn export(args: ExportArgs) -> anyhow::Result<()> {
    let client = client::Client::new(&args.service, token())?;
    let body = client.export_csv(args.with_provenance)?;
    std::fs::write(&args.out, body)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", args.out.display()))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Capture(a) => capture::run(a),
        Command::Report(a) => report::run(a),
        Command::Calibrate(a) => calibrate::run(a),
        Command::Serve(a) => serve(a),
        Command::Upload(a) => upload(a),
        Command::Export(a) => export(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
