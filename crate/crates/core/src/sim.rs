//! Deterministic stand-in for the sensor node.
//!
//! A [`ScenarioScript`] lists stations with their true pH and temperature;
//! [`simulate`] turns it into the byte stream the probe would emit while
//! being carried from station to station.
//!
//! Noise is reproducible across implementations: the generator is
//! xoshiro256++ seeded through SplitMix64 (`seed_from_u64`), uniforms are
//! `(next_u64 >> 11) * 2^-53`, and each Gaussian draw consumes two uniforms
//! `u1, u2` and returns `sqrt(-2 ln(1 - u1)) * cos(2π u2)` (Box–Muller,
//! cosine branch only). Per frame the electrode noise is drawn before the
//! temperature noise, whether or not the sigmas are zero.

use std::fmt;
use std::ops::Range;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::calibration::{
    adc_from_electrode_mv, adc_from_temp_c, PhCalibration, PH_MAX, PH_MIN, TEMP_MAX_C, TEMP_MIN_C,
};
use crate::kv::{KvDocument, KvError};
use crate::sample::check_station_labels;
use crate::wire::{encode_frame, SensorFrame, FRAME_LEN};

/// Six stations along the Lahore canal with pH and temperature spread
/// linearly across the surveyed ranges.
pub const LAHORE_CANAL: &str = include_str!("../scenarios/lahore-canal.scenario");

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedStation {
    pub label: String,
    pub longitude: f64,
    pub latitude: f64,
    pub true_ph: f64,
    pub true_temp_c: f64,
    pub dwell_s: f64,
}

impl ScriptedStation {
    /// Frames emitted while parked here.
    pub fn frame_count(&self, frame_rate_hz: f64) -> usize {
        (self.dwell_s * frame_rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub name: String,
    pub stations: Vec<ScriptedStation>,
    pub frame_rate_hz: f64,
    pub noise_mv_sigma: f64,
    pub noise_temp_sigma: f64,
    pub seed: u64,
    pub battery_start_pct: u8,
    pub time_scale: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Format(#[from] KvError),
    #[error("ScenarioInvalid: {0}")]
    Invalid(String),
}

impl ScenarioScript {
    pub fn new(stations: Vec<ScriptedStation>, seed: u64) -> Self {
        ScenarioScript {
            name: "scenario".into(),
            stations,
            frame_rate_hz: 1.0,
            noise_mv_sigma: 1.0,
            noise_temp_sigma: 0.05,
            seed,
            battery_start_pct: 100,
            time_scale: 1.0,
        }
    }

    pub fn lahore_canal() -> Self {
        Self::parse(LAHORE_CANAL).expect("bundled scenario parses")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.stations.is_empty() {
            return bad("scenario has no stations".into());
        }
        if let Err(m) = check_station_labels(self.stations.iter().map(|s| s.label.as_str())) {
            return bad(m);
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad(format!("frame_rate_hz must be positive, got {}", self.frame_rate_hz));
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad(format!("time_scale must be positive, got {}", self.time_scale));
        }
        if !(self.noise_mv_sigma >= 0.0 && self.noise_temp_sigma >= 0.0) {
            return bad("noise sigmas must be nonnegative".into());
        }
        if self.battery_start_pct > 100 {
            return bad(format!("battery_start_pct {} exceeds 100", self.battery_start_pct));
        }
        for s in &self.stations {
            if !(PH_MIN..=PH_MAX).contains(&s.true_ph) {
                return bad(format!("{}: true_ph {} outside 0..=14", s.label, s.true_ph));
            }
            if !(TEMP_MIN_C..=TEMP_MAX_C).contains(&s.true_temp_c) {
                return bad(format!("{}: true_temp_c {} outside 0..=60", s.label, s.true_temp_c));
            }
            if !(s.dwell_s >= 0.0 && s.dwell_s.is_finite()) {
                return bad(format!("{}: dwell_s must be nonnegative", s.label));
            }
            if !(-180.0..=180.0).contains(&s.longitude) || !(-90.0..=90.0).contains(&s.latitude) {
                return bad(format!("{}: coordinates out of range", s.label));
            }
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.stations
            .iter()
            .map(|s| s.frame_count(self.frame_rate_hz))
            .sum()
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let doc = KvDocument::parse(text)?;
        let mut stations = Vec::new();
        for row in doc.section("stations") {
            stations.push(ScriptedStation {
                label: row.cell(0, "label")?,
                longitude: row.cell(1, "longitude")?,
                latitude: row.cell(2, "latitude")?,
                true_ph: row.cell(3, "true_ph")?,
                true_temp_c: row.cell(4, "true_temp_c")?,
                dwell_s: row.cell(5, "dwell_s")?,
            });
        }
        let script = ScenarioScript {
            name: doc.get_or("name", "scenario".to_string())?,
            stations,
            frame_rate_hz: doc.get_or("frame_rate_hz", 1.0)?,
            noise_mv_sigma: doc.get_or("noise_mv_sigma", 1.0)?,
            noise_temp_sigma: doc.get_or("noise_temp_sigma", 0.05)?,
            seed: doc.get_or("seed", 0)?,
            battery_start_pct: doc.get_or("battery_start_pct", 100)?,
            time_scale: doc.get_or("time_scale", 1.0)?,
        };
        script.validate()?;
        Ok(script)
    }
}

impl fmt::Display for ScenarioScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "frame_rate_hz = {}", self.frame_rate_hz)?;
        writeln!(f, "noise_mv_sigma = {}", self.noise_mv_sigma)?;
        writeln!(f, "noise_temp_sigma = {}", self.noise_temp_sigma)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "battery_start_pct = {}", self.battery_start_pct)?;
        writeln!(f, "time_scale = {}", self.time_scale)?;
        writeln!(f)?;
        writeln!(f, "[stations]")?;
        writeln!(f, "# label  longitude  latitude  true_ph  true_temp_c  dwell_s")?;
        for s in &self.stations {
            writeln!(
                f,
                "{}  {}  {}  {}  {}  {}",
                s.label, s.longitude, s.latitude, s.true_ph, s.true_temp_c, s.dwell_s
            )?;
        }
        Ok(())
    }
}

/// Seeded Gaussian source with the documented draw procedure.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: Xoshiro256PlusPlus,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let z = (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        sigma * z
    }
}

/// Frame generator; yields every frame of the script in order.
#[derive(Debug, Clone)]
pub struct Simulator {
    script: ScenarioScript,
    noise: NoiseSource,
    station: usize,
    index: usize,
    seq: u8,
}

impl Simulator {
    pub fn new(script: ScenarioScript) -> Result<Self, ScenarioError> {
        script.validate()?;
        Ok(Simulator {
            noise: NoiseSource::new(script.seed),
            script,
            station: 0,
            index: 0,
            seq: 0,
        })
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    fn battery(&self, station: usize, index: usize, n: usize) -> u8 {
        // One percent per station, linear across the station's frames.
        let used = station as f64 + index as f64 / n.max(1) as f64;
        (self.script.battery_start_pct as f64 - used).round().max(0.0) as u8
    }
}

impl Iterator for Simulator {
    type Item = SensorFrame;

    fn next(&mut self) -> Option<SensorFrame> {
        let rate = self.script.frame_rate_hz;
        loop {
            let st = self.script.stations.get(self.station)?;
            let n = st.frame_count(rate);
            if self.index >= n {
                self.station += 1;
                self.index = 0;
                continue;
            }
            let electrode = PhCalibration::<f64>::ideal(st.true_temp_c);
            let mv = electrode.mv_from_ph(st.true_ph, st.true_temp_c)
                + self.noise.gaussian(self.script.noise_mv_sigma);
            let temp = st.true_temp_c + self.noise.gaussian(self.script.noise_temp_sigma);
            let frame = SensorFrame::new(
                self.seq,
                adc_from_electrode_mv(mv),
                adc_from_temp_c(temp),
                self.battery(self.station, self.index, n),
            );
            self.seq = self.seq.wrapping_add(1);
            self.index += 1;
            return Some(frame);
        }
    }
}

/// The complete encoded byte stream for a script.
pub fn simulate(script: &ScenarioScript) -> Result<Vec<u8>, ScenarioError> {
    let sim = Simulator::new(script.clone())?;
    let mut out = Vec::with_capacity(script.total_frames() * FRAME_LEN);
    for frame in sim {
        out.extend_from_slice(&encode_frame(&frame).expect("simulator emits valid frames"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    DropBytes(Range<usize>),
    /// Inverts every bit of the byte at the offset.
    CorruptByte(usize),
    /// Repeats frame `n` (counting from the stream start) immediately after itself.
    DuplicateFrame(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("OffsetOutOfRange: {fault:?} does not fit a {len}-byte stream")]
pub struct OffsetOutOfRange {
    pub fault: Fault,
    pub len: usize,
}

pub fn inject_fault(stream: &[u8], fault: Fault) -> Result<Vec<u8>, OffsetOutOfRange> {
    let len = stream.len();
    let oob = |fault: Fault| Err(OffsetOutOfRange { fault, len });
    match fault {
        Fault::DropBytes(ref r) => {
            if r.start > r.end || r.end > len {
                return oob(fault);
            }
            let mut out = stream[..r.start].to_vec();
            out.extend_from_slice(&stream[r.end..]);
            Ok(out)
        }
        Fault::CorruptByte(offset) => {
            if offset >= len {
                return oob(fault);
            }
            let mut out = stream.to_vec();
            out[offset] = !out[offset];
            Ok(out)
        }
        Fault::DuplicateFrame(n) => {
            let start = n * FRAME_LEN;
            let end = start + FRAME_LEN;
            if end > len {
                return oob(fault);
            }
            let mut out = Vec::with_capacity(len + FRAME_LEN);
            out.extend_from_slice(&stream[..end]);
            out.extend_from_slice(&stream[start..end]);
            out.extend_from_slice(&stream[end..]);
            Ok(out)
        }
    }
}
