//! Station-by-station capture over a live frame stream.
//!
//! Frames carry no timestamps. [`FrameClock`] derives logical time from the
//! nominal sample rate and the sequence counter, so lost frames advance the
//! clock and retransmitted frames do not. [`CaptureSession`] splits that
//! timeline into consecutive station visits and runs a [`DwellCapture`] in
//! each.

use std::path::PathBuf;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

use crate::calibration::PhCalibration;
use crate::kv::{KvDocument, KvError};
use crate::sample::{
    check_station_labels, timestamp, CaptureError, DwellCapture, DwellParams, Reading, Season,
    Station, TimedFrame,
};
use crate::sim::ScenarioScript;
use crate::wire::{seq_gap, SensorFrame};

/// Stamps frames with logical time at a fixed sample rate.
#[derive(Debug, Clone)]
pub struct FrameClock {
    start: DateTime<Utc>,
    rate_hz: f64,
    tick: i64,
    prev_seq: Option<u8>,
    lost: u64,
    repeated: u64,
}

impl FrameClock {
    pub fn new(start: DateTime<Utc>, rate_hz: f64) -> Self {
        assert!(rate_hz > 0.0, "frame rate must be positive");
        FrameClock {
            start,
            rate_hz,
            tick: 0,
            prev_seq: None,
            lost: 0,
            repeated: 0,
        }
    }

    pub fn time_of_tick(&self, tick: i64) -> DateTime<Utc> {
        self.start + Duration::nanoseconds((tick as f64 * 1e9 / self.rate_hz).round() as i64)
    }

    /// Returns the frame's time and whether it repeats the previous frame.
    pub fn stamp(&mut self, frame: &SensorFrame) -> (TimedFrame, bool) {
        let repeat = match self.prev_seq {
            None => false,
            Some(prev) if prev == frame.seq => {
                self.repeated += 1;
                true
            }
            Some(prev) => {
                let gap = seq_gap(prev, frame.seq);
                self.lost += gap as u64;
                self.tick += 1 + gap as i64;
                false
            }
        };
        self.prev_seq = Some(frame.seq);
        (
            TimedFrame {
                at: self.time_of_tick(self.tick),
                frame: *frame,
            },
            repeat,
        )
    }

    /// Frames inferred missing from sequence gaps.
    pub fn lost(&self) -> u64 {
        self.lost
    }

    pub fn repeated(&self) -> u64 {
        self.repeated
    }
}

/// A station plus how long the operator stays there.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub station: Station,
    pub dwell: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationOutcome {
    pub station: Station,
    pub result: Result<Reading, CaptureError>,
}

/// Walks the visit plan as logical time advances.
#[derive(Debug)]
pub struct CaptureSession {
    plan: Vec<Visit>,
    cal: PhCalibration<f64>,
    device_id: String,
    params: DwellParams,
    current: usize,
    window_start: DateTime<Utc>,
    capture: Option<DwellCapture>,
    emitted: bool,
}

impl CaptureSession {
    pub fn new(
        plan: Vec<Visit>,
        start: DateTime<Utc>,
        cal: PhCalibration<f64>,
        device_id: impl Into<String>,
        params: DwellParams,
    ) -> Result<Self, CaptureError> {
        let mut s = CaptureSession {
            plan,
            cal,
            device_id: device_id.into(),
            params,
            current: 0,
            window_start: start,
            capture: None,
            emitted: false,
        };
        s.open_current()?;
        Ok(s)
    }

    fn open_current(&mut self) -> Result<(), CaptureError> {
        self.emitted = false;
        self.capture = match self.plan.get(self.current) {
            Some(v) => Some(DwellCapture::new(
                self.cal,
                v.station.clone().arriving_at(self.window_start),
                self.device_id.clone(),
                self.params,
            )?),
            None => None,
        };
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.current >= self.plan.len()
    }

    /// Label of the station being sampled, if any.
    pub fn current_station(&self) -> Option<&Station> {
        self.plan.get(self.current).map(|v| &v.station)
    }

    fn close_current(&mut self, out: &mut Vec<StationOutcome>) -> Result<(), CaptureError> {
        if let Some(cap) = self.capture.take() {
            let station = cap.station().clone();
            if !self.emitted {
                out.push(StationOutcome {
                    station,
                    result: cap.finish(),
                });
            }
        }
        self.window_start += self.plan[self.current].dwell;
        self.current += 1;
        self.open_current()
    }

    /// Feeds one stamped frame; returns any stations that completed.
    pub fn offer(&mut self, tf: &TimedFrame) -> Result<Vec<StationOutcome>, CaptureError> {
        let mut out = Vec::new();
        while !self.is_finished() && tf.at >= self.window_start + self.plan[self.current].dwell {
            self.close_current(&mut out)?;
        }
        if self.is_finished() || tf.at < self.window_start {
            return Ok(out);
        }
        if let Some(cap) = self.capture.as_mut() {
            if !self.emitted {
                if let Some(r) = cap.offer(tf)?.cloned() {
                    out.push(StationOutcome {
                        station: cap.station().clone(),
                        result: Ok(r),
                    });
                    self.emitted = true;
                }
            }
        }
        Ok(out)
    }

    /// End of stream: every station not yet reported fails with InsufficientData.
    pub fn finish(mut self) -> Result<Vec<StationOutcome>, CaptureError> {
        let mut out = Vec::new();
        while !self.is_finished() {
            self.close_current(&mut out)?;
        }
        Ok(out)
    }
}

/// Where the frame stream comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceEndpoint {
    Tcp(String),
    File(PathBuf),
}

impl FromStr for DeviceEndpoint {
    type Err = String;

    /// `tcp://host:port` or `file:<path>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            Ok(DeviceEndpoint::Tcp(addr.to_string()))
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(DeviceEndpoint::File(PathBuf::from(path)))
        } else {
            Err(format!("device endpoint must be tcp://host:port or file:<path>, got {s:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationSource {
    /// Zero offset, Nernstian slope at 25 °C.
    Ideal,
    File(PathBuf),
}

/// Everything a capture run needs; loaded from a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub device: DeviceEndpoint,
    pub calibration: CalibrationSource,
    pub device_id: String,
    pub visits: Vec<Visit>,
    pub settle_s: f64,
    pub avg_count: usize,
    pub frame_rate_hz: f64,
    pub start_time: Option<DateTime<Utc>>,
    pub service_url: Option<String>,
    pub season: Season,
    pub time_scale: f64,
    pub csv_out: PathBuf,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Format(#[from] KvError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("stations file {path}: {msg}")]
    StationsFile { path: PathBuf, msg: String },
}

pub const DEFAULT_DWELL_S: f64 = 200.0;

fn visits_from_rows(doc: &KvDocument, default_dwell: f64) -> Result<Vec<Visit>, KvError> {
    let mut out = Vec::new();
    for row in doc.section("stations") {
        let dwell: f64 = if row.cells.len() > 3 {
            row.cell(3, "dwell_s")?
        } else {
            default_dwell
        };
        out.push(Visit {
            station: Station::new(
                row.cell::<String>(0, "label")?,
                row.cell(1, "longitude")?,
                row.cell(2, "latitude")?,
            ),
            dwell: seconds(dwell),
        });
    }
    Ok(out)
}

pub fn seconds(s: f64) -> Duration {
    Duration::nanoseconds((s * 1e9).round() as i64)
}

impl SessionConfig {
    /// `base_dir` resolves relative paths in the file.
    pub fn parse(text: &str, base_dir: &std::path::Path) -> Result<Self, ConfigError> {
        let doc = KvDocument::parse(text)?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let device = match doc.require_str("device")?.parse::<DeviceEndpoint>() {
            Ok(DeviceEndpoint::File(p)) => DeviceEndpoint::File(resolve(&p.to_string_lossy())),
            Ok(d) => d,
            Err(e) => return Err(KvError::value("device", e).into()),
        };
        let calibration = match doc.get_str("calibration").unwrap_or("ideal") {
            "ideal" => CalibrationSource::Ideal,
            p => CalibrationSource::File(resolve(p)),
        };
        let default_dwell = doc.get_or("dwell_s", DEFAULT_DWELL_S)?;
        let visits = if let Some(path) = doc.get_str("stations_file") {
            let path = resolve(path);
            let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::StationsFile {
                path: path.clone(),
                msg: e.to_string(),
            })?;
            Self::visits_from_file(&text, default_dwell).map_err(|msg| ConfigError::StationsFile { path, msg })?
        } else {
            visits_from_rows(&doc, default_dwell)?
        };
        let start_time = doc
            .get_str("start_time")
            .map(|s| timestamp::parse(s).map_err(|e| KvError::value("start_time", e)))
            .transpose()?;
        let cfg = SessionConfig {
            device,
            calibration,
            device_id: doc.get_or("device_id", "probe-01".to_string())?,
            visits,
            settle_s: doc.get_or("settle_s", 180.0)?,
            avg_count: doc.get_or("avg_count", 10)?,
            frame_rate_hz: doc.get_or("frame_rate_hz", 1.0)?,
            start_time,
            service_url: doc.get_str("service_url").map(str::to_string).filter(|s| !s.is_empty()),
            season: doc.get_or("season", Season::Summer)?,
            time_scale: doc.get_or("time_scale", 1.0)?,
            csv_out: resolve(doc.get_str("csv_out").unwrap_or("capture.csv")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    // A scenario script or a bare `[stations]` table of label, lon, lat, [dwell].
    fn visits_from_file(text: &str, default_dwell: f64) -> Result<Vec<Visit>, String> {
        if let Ok(script) = ScenarioScript::parse(text) {
            return Ok(script
                .stations
                .iter()
                .map(|s| Visit {
                    station: Station::new(s.label.clone(), s.longitude, s.latitude),
                    dwell: seconds(s.dwell_s),
                })
                .collect());
        }
        let doc = KvDocument::parse(text).map_err(|e| e.to_string())?;
        visits_from_rows(&doc, default_dwell).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.settle_s >= 0.0) {
            return bad("settle_s must be nonnegative".into());
        }
        if self.avg_count < 1 {
            return bad("avg_count must be at least 1".into());
        }
        if !(self.frame_rate_hz > 0.0) {
            return bad("frame_rate_hz must be positive".into());
        }
        if !(self.time_scale > 0.0) {
            return bad("time_scale must be positive".into());
        }
        if self.visits.is_empty() {
            return bad("no stations configured".into());
        }
        if self.device_id.is_empty() {
            return bad("device_id must be nonempty".into());
        }
        check_station_labels(self.visits.iter().map(|v| v.station.label.as_str()))
            .or_else(bad)?;
        if self.visits.iter().any(|v| v.dwell < Duration::zero()) {
            return bad("dwell_s must be nonnegative".into());
        }
        Ok(())
    }

    pub fn dwell_params(&self) -> DwellParams {
        DwellParams {
            settle: seconds(self.settle_s),
            avg_count: self.avg_count,
        }
    }
}
