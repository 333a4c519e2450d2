//! Dwell capture against a live or replayed probe stream.
//!
//! The local CSV is written row by row as stations complete; uploading runs
//! on a worker thread and never holds up decoding.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::Context;
use aquasonde_core::calibration::CalibrationRecord;
use aquasonde_core::export::{header, write_rows};
use aquasonde_core::session::{
    CalibrationSource, CaptureSession, DeviceEndpoint, FrameClock, SessionConfig, StationOutcome,
};
use aquasonde_core::wire::{Decoded, StreamDecoder};
use aquasonde_core::{assess_ph, assess_temperature, summarize_all, PhCalibration, Reading};
use aquasonde_service::Source;
use chrono::{SubsecRound, Utc};

use crate::client::Client;
use crate::{read_input, usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    config: PathBuf,
}

const CONNECT_PATIENCE: Duration = Duration::from_secs(10);

fn load_calibration(src: &CalibrationSource) -> anyhow::Result<PhCalibration> {
    match src {
        CalibrationSource::Ideal => Ok(PhCalibration::ideal(25.0)),
        CalibrationSource::File(p) => CalibrationRecord::parse(&read_input(p)?)
            .map(|r| r.calibration)
            .map_err(|e| usage(format!("{}: {e}", p.display()))),
    }
}

fn open_device(dev: &DeviceEndpoint, stall: Duration) -> anyhow::Result<Box<dyn Read>> {
    match dev {
        DeviceEndpoint::File(p) => {
            let f = File::open(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            Ok(Box::new(f))
        }
        DeviceEndpoint::Tcp(addr) => {
            // The probe may still be starting up.
            let deadline = Instant::now() + CONNECT_PATIENCE;
            let conn = loop {
                match TcpStream::connect(addr) {
                    Ok(c) => break c,
                    Err(e) if Instant::now() < deadline => {
                        log::debug!("device {addr} not ready: {e}");
                        thread::sleep(Duration::from_millis(100));
                    }
                    Err(e) => return Err(anyhow::anyhow!("cannot connect to device at {addr}: {e}")),
                }
            };
            conn.set_read_timeout(Some(stall))?;
            Ok(Box::new(conn))
        }
    }
}

#[derive(Debug, Default)]
struct UploadReport {
    accepted: usize,
    duplicates: usize,
    failed: Vec<String>,
}

fn spawn_uploader(url: String) -> anyhow::Result<(mpsc::Sender<Reading>, thread::JoinHandle<UploadReport>)> {
    let client = Client::new(&url, crate::token())?;
    let (tx, rx) = mpsc::channel::<Reading>();
    let handle = thread::spawn(move || {
        let mut rep = UploadReport::default();
        for r in rx {
            match client.post_readings(std::slice::from_ref(&r), Source::Live) {
                Ok(out) => {
                    rep.accepted += out.accepted;
                    rep.duplicates += out.duplicates;
                    for rej in out.rejected {
                        rep.failed.push(format!("{}: rejected: {}", label(&r), rej.reason));
                    }
                }
                Err(e) => rep.failed.push(format!("{}: {e:#}", label(&r))),
            }
        }
        rep
    });
    Ok((tx, handle))
}

fn label(r: &Reading) -> &str {
    r.station.as_deref().unwrap_or("?")
}

struct Outputs {
    csv: BufWriter<File>,
    csv_path: PathBuf,
    upload: Option<mpsc::Sender<Reading>>,
    readings: Vec<Reading>,
    insufficient: usize,
    season: aquasonde_core::Season,
}

impl Outputs {
    fn create(path: &Path, season: aquasonde_core::Season) -> anyhow::Result<Outputs> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut csv = BufWriter::new(f);
        writeln!(csv, "{}", header(true).join(","))?;
        csv.flush()?;
        Ok(Outputs {
            csv,
            csv_path: path.to_path_buf(),
            upload: None,
            readings: Vec::new(),
            insufficient: 0,
            season,
        })
    }

    fn handle(&mut self, outcomes: Vec<StationOutcome>) -> anyhow::Result<()> {
        for o in outcomes {
            match o.result {
                Ok(r) => {
                    let ph = assess_ph(r.ph);
                    let t = assess_temperature(r.temp_c, self.season);
                    println!(
                        "{:<6} {}  lon {:.6} lat {:.6}  pH {:.2} {}  temp {:.2} °C {} ({})",
                        o.station.label,
                        aquasonde_core::sample::timestamp::format(&r.timestamp),
                        r.longitude,
                        r.latitude,
                        r.ph,
                        ph.classification,
                        r.temp_c,
                        t.classification,
                        self.season
                    );
                    write_rows(&mut self.csv, [&r], true)
                        .with_context(|| format!("appending to {}", self.csv_path.display()))?;
                    self.csv.flush()?;
                    if let Some(tx) = &self.upload {
                        let _ = tx.send(r.clone());
                    }
                    self.readings.push(r);
                }
                Err(e) => {
                    self.insufficient += 1;
                    eprintln!("{:<6} skipped: {e}", o.station.label);
                }
            }
        }
        Ok(())
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let text = read_input(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let cfg = SessionConfig::parse(&text, base).map_err(|e| usage(format!("{}: {e}", args.config.display())))?;
    let cal = load_calibration(&cfg.calibration)?;
    let start = cfg.start_time.unwrap_or_else(|| Utc::now().trunc_subsecs(0));

    let mut out = Outputs::create(&cfg.csv_out, cfg.season)?;
    let uploader = match &cfg.service_url {
        Some(url) => {
            let (tx, handle) = spawn_uploader(url.clone())?;
            out.upload = Some(tx);
            Some(handle)
        }
        None => None,
    };

    // A stream that stays quiet for many frame periods has ended.
    let period = 1.0 / (cfg.frame_rate_hz * cfg.time_scale);
    let stall = Duration::from_secs_f64((period * 30.0).clamp(2.0, 60.0));
    let mut device = open_device(&cfg.device, stall)?;

    let mut session = CaptureSession::new(cfg.visits.clone(), start, cal, cfg.device_id.clone(), cfg.dwell_params())
        .map_err(|e| usage(e.to_string()))?;
    let mut clock = FrameClock::new(start, cfg.frame_rate_hz);
    let mut decoder = StreamDecoder::new();
    let (mut frames, mut errors) = (0u64, 0u64);
    let mut buf = [0u8; 4096];
    if let Some(s) = session.current_station() {
        println!("capturing {} stations, first {}", cfg.visits.len(), s.label);
    }
    'read: while !session.is_finished() {
        let n = match device.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                eprintln!("warning: device stream silent for {:.0} s, ending capture", stall.as_secs_f64());
                break;
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(anyhow::Error::new(e).context("reading device stream")),
        };
        for d in decoder.feed(&buf[..n]) {
            match d {
                Decoded::Frame(f) => {
                    frames += 1;
                    let (tf, repeat) = clock.stamp(&f);
                    if repeat {
                        continue;
                    }
                    out.handle(session.offer(&tf)?)?;
                    if session.is_finished() {
                        break 'read;
                    }
                }
                Decoded::Error(e) => {
                    errors += 1;
                    log::warn!("frame error: {e}");
                }
            }
        }
    }
    if let Some(e) = decoder.finish() {
        errors += 1;
        log::warn!("frame error: {e}");
    }
    out.handle(session.finish()?)?;
    drop(device);

    println!();
    println!(
        "frames {frames}, frame errors {errors}, lost {}, repeated {}",
        clock.lost(),
        clock.repeated()
    );
    let norm: Vec<Reading> = out.readings.iter().map(Reading::at_export_precision).collect();
    let summaries = summarize_all(&norm, cfg.season);
    if !summaries.is_empty() {
        print!("{}", crate::report::table(&summaries, cfg.season));
    }
    println!(
        "{} readings written to {} ({} stations skipped)",
        out.readings.len(),
        cfg.csv_out.display(),
        out.insufficient
    );

    out.upload.take();
    if let Some(h) = uploader {
        let rep = h.join().map_err(|_| anyhow::anyhow!("upload worker panicked"))?;
        println!("uploaded: accepted {}, duplicates {}", rep.accepted, rep.duplicates);
        if !rep.failed.is_empty() {
            for f in &rep.failed {
                eprintln!("warning: upload failed for {f}");
            }
            eprintln!(
                "warning: {} readings kept locally only; retry with: aquasonde upload --csv {} --service {}",
                rep.failed.len(),
                cfg.csv_out.display(),
                cfg.service_url.as_deref().unwrap_or_default()
            );
        }
    }
    Ok(())
}
