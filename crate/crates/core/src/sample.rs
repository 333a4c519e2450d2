//! Geotagged readings, irrigation-water quality bands and station statistics.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, DurationRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    electrode_mv_from_adc, temp_c_from_adc, CalibrationError, PhCalibration, PH_MAX, PH_MIN,
    TEMP_MAX_C, TEMP_MIN_C,
};
use crate::scalar::{Scalar, Stats};
use crate::wire::SensorFrame;

/// Irrigation water pH band.
pub const PH_NORM: (f64, f64) = (6.5, 8.4);
pub const WINTER_TEMP_NORM: (f64, f64) = (17.0, 19.0);
pub const SUMMER_TEMP_NORM: (f64, f64) = (27.0, 29.0);

/// How far ahead of the server clock a reading may be stamped.
pub const MAX_CLOCK_SKEW_HOURS: i64 = 24;

pub mod timestamp {
    //! Second-precision UTC timestamps as `YYYY-MM-DDTHH:MM:SSZ`.
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|t| super::truncate_to_second(t.with_timezone(&Utc)))
    }

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }
}

pub fn truncate_to_second(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.duration_trunc(Duration::seconds(1)).unwrap_or(ts)
}

/// One stored sample: when, where, pH and water temperature, plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub longitude: f64,
    pub latitude: f64,
    pub ph: f64,
    pub temp_c: f64,
    pub device_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<String>,
    pub seq_origin: u8,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReadingError {
    #[error("FieldOutOfRange: {field} = {value} outside [{low}, {high}]")]
    FieldOutOfRange {
        field: &'static str,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("FutureTimestamp: {0} is more than {MAX_CLOCK_SKEW_HOURS} h ahead of the server clock")]
    FutureTimestamp(String),
    #[error("InvalidField: device_id must be nonempty")]
    EmptyDeviceId,
}

impl ReadingError {
    /// Stable machine-readable kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ReadingError::FieldOutOfRange { .. } => "FieldOutOfRange",
            ReadingError::FutureTimestamp(_) => "FutureTimestamp",
            ReadingError::EmptyDeviceId => "InvalidField",
        }
    }
}

fn check_range(field: &'static str, value: f64, low: f64, high: f64) -> Result<(), ReadingError> {
    if value >= low && value <= high {
        Ok(())
    } else {
        Err(ReadingError::FieldOutOfRange {
            field,
            value,
            low,
            high,
        })
    }
}

impl Reading {
    pub fn validate(&self, now: DateTime<Utc>) -> Result<(), ReadingError> {
        check_range("longitude", self.longitude, -180.0, 180.0)?;
        check_range("latitude", self.latitude, -90.0, 90.0)?;
        check_range("ph", self.ph, PH_MIN, PH_MAX)?;
        check_range("temp_c", self.temp_c, TEMP_MIN_C, TEMP_MAX_C)?;
        if self.device_id.is_empty() {
            return Err(ReadingError::EmptyDeviceId);
        }
        if self.timestamp > now + Duration::hours(MAX_CLOCK_SKEW_HOURS) {
            return Err(ReadingError::FutureTimestamp(timestamp::format(&self.timestamp)));
        }
        Ok(())
    }

    pub fn dedup_key(&self) -> DedupKey {
        dedup_key(self)
    }

    /// Copy with coordinates and measurements rounded exactly as the CSV export prints them.
    pub fn at_export_precision(&self) -> Reading {
        let round = |v: f64, places: usize| -> f64 {
            format!("{v:.places$}").parse().expect("formatted float parses")
        };
        Reading {
            longitude: round(self.longitude, 6),
            latitude: round(self.latitude, 6),
            ph: round(self.ph, 2),
            temp_c: round(self.temp_c, 2),
            ..self.clone()
        }
    }
}

/// Identity of a reading for idempotent ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DedupKey {
    pub device_id: String,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub seq_origin: u8,
}

impl fmt::Display for DedupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.device_id,
            timestamp::format(&self.timestamp),
            self.seq_origin
        )
    }
}

pub fn dedup_key(reading: &Reading) -> DedupKey {
    DedupKey {
        device_id: reading.device_id.clone(),
        timestamp: reading.timestamp,
        seq_origin: reading.seq_origin,
    }
}

/// A labelled sampling point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub label: String,
    pub longitude: f64,
    pub latitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visited_at: Option<DateTime<Utc>>,
}

impl Station {
    pub fn new(label: impl Into<String>, longitude: f64, latitude: f64) -> Self {
        Station {
            label: label.into(),
            longitude,
            latitude,
            visited_at: None,
        }
    }

    pub fn arriving_at(mut self, at: DateTime<Utc>) -> Self {
        self.visited_at = Some(at);
        self
    }
}

/// Fails on an empty or repeated label.
pub fn check_station_labels<'a, I>(labels: I) -> Result<(), String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut seen = std::collections::BTreeSet::new();
    for l in labels {
        if l.is_empty() {
            return Err("station label must be nonempty".into());
        }
        if !seen.insert(l) {
            return Err(format!("duplicate station label `{l}`"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    BelowNormal,
    Normal,
    AboveNormal,
}

impl Classification {
    /// Inclusive band test.
    pub fn of<F: Scalar>(value: F, low: F, high: F) -> Self {
        if value < low {
            Classification::BelowNormal
        } else if value > high {
            Classification::AboveNormal
        } else {
            Classification::Normal
        }
    }

    pub fn is_normal(self) -> bool {
        self == Classification::Normal
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Summer,
}

impl Season {
    pub fn temp_norm(self) -> (f64, f64) {
        match self {
            Season::Winter => WINTER_TEMP_NORM,
            Season::Summer => SUMMER_TEMP_NORM,
        }
    }
}

impl FromStr for Season {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "winter" => Ok(Season::Winter),
            "summer" => Ok(Season::Summer),
            other => Err(format!("unknown season `{other}` (expected winter or summer)")),
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Season::Winter => "winter",
            Season::Summer => "summer",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    #[serde(rename = "pH")]
    Ph,
    #[serde(rename = "temperature")]
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityAssessment<F> {
    pub parameter: Parameter,
    pub value: F,
    pub classification: Classification,
    pub norm_low: F,
    pub norm_high: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub season: Option<Season>,
}

pub fn assess_ph<F: Scalar>(ph: F) -> QualityAssessment<F> {
    let (low, high) = (F::lit(PH_NORM.0), F::lit(PH_NORM.1));
    QualityAssessment {
        parameter: Parameter::Ph,
        value: ph,
        classification: Classification::of(ph, low, high),
        norm_low: low,
        norm_high: high,
        season: None,
    }
}

pub fn assess_temperature<F: Scalar>(temp_c: F, season: Season) -> QualityAssessment<F> {
    let (low, high) = season.temp_norm();
    let (low, high) = (F::lit(low), F::lit(high));
    QualityAssessment {
        parameter: Parameter::Temperature,
        value: temp_c,
        classification: Classification::of(temp_c, low, high),
        norm_low: low,
        norm_high: high,
        season: Some(season),
    }
}

/// pH and temperature derived from one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Converted<F> {
    pub ph: F,
    pub temp_c: F,
    pub clamped: bool,
}

pub fn convert_frame<F: Scalar>(
    frame: &SensorFrame,
    cal: &PhCalibration<F>,
) -> Result<Converted<F>, CalibrationError> {
    let temp_c = temp_c_from_adc::<F>(frame.temp_adc)?;
    let mv = electrode_mv_from_adc::<F>(frame.ph_adc)?;
    let ph = cal.ph_from_mv(mv, temp_c)?;
    Ok(Converted {
        ph: ph.ph,
        temp_c,
        clamped: ph.clamped.is_some(),
    })
}

/// A decoded frame stamped with capture-clock time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedFrame {
    pub at: DateTime<Utc>,
    pub frame: SensorFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DwellParams {
    pub settle: Duration,
    pub avg_count: usize,
}

impl Default for DwellParams {
    fn default() -> Self {
        DwellParams {
            settle: Duration::seconds(180),
            avg_count: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaptureError {
    #[error("InsufficientData: {got} of {needed} valid frames after settling at {station}")]
    InsufficientData {
        station: String,
        got: usize,
        needed: usize,
    },
    #[error("invalid dwell parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Conversion(#[from] CalibrationError),
}

/// Accumulates frames at one station until the dwell rule yields a reading.
///
/// Frames stamped before `arrival + settle` are discarded, as are frames
/// lacking either validity flag. The next `avg_count` frames are converted
/// and averaged.
#[derive(Debug, Clone)]
pub struct DwellCapture {
    cal: PhCalibration<f64>,
    station: Station,
    device_id: String,
    params: DwellParams,
    arrival: Option<DateTime<Utc>>,
    ph: Vec<f64>,
    temp: Vec<f64>,
    last: Option<TimedFrame>,
    clamped: usize,
    done: Option<Reading>,
}

impl DwellCapture {
    /// Arrival is `station.visited_at`, or the first offered frame's time.
    pub fn new(
        cal: PhCalibration<f64>,
        station: Station,
        device_id: impl Into<String>,
        params: DwellParams,
    ) -> Result<Self, CaptureError> {
        if params.avg_count == 0 {
            return Err(CaptureError::InvalidParams("avg_count must be at least 1".into()));
        }
        if params.settle < Duration::zero() {
            return Err(CaptureError::InvalidParams("settle must be nonnegative".into()));
        }
        Ok(DwellCapture {
            cal,
            arrival: station.visited_at,
            station,
            device_id: device_id.into(),
            params,
            ph: Vec::with_capacity(params.avg_count),
            temp: Vec::with_capacity(params.avg_count),
            last: None,
            clamped: 0,
            done: None,
        })
    }

    pub fn station(&self) -> &Station {
        &self.station
    }

    /// Frames averaged so far.
    pub fn collected(&self) -> usize {
        self.ph.len()
    }

    /// Averaged frames whose pH hit a scale end.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    /// Returns the reading once `avg_count` frames have been averaged.
    /// Frames offered after completion are ignored.
    pub fn offer(&mut self, tf: &TimedFrame) -> Result<Option<&Reading>, CaptureError> {
        if self.done.is_some() {
            return Ok(self.done.as_ref());
        }
        let arrival = *self.arrival.get_or_insert(tf.at);
        if tf.at < arrival + self.params.settle {
            return Ok(None);
        }
        if !(tf.frame.ph_valid() && tf.frame.temp_valid()) {
            return Ok(None);
        }
        let c = convert_frame(&tf.frame, &self.cal)?;
        self.ph.push(c.ph);
        self.temp.push(c.temp_c);
        self.clamped += c.clamped as usize;
        self.last = Some(*tf);
        if self.ph.len() == self.params.avg_count {
            self.done = Some(self.build());
        }
        Ok(self.done.as_ref())
    }

    fn build(&self) -> Reading {
        let last = self.last.expect("at least one frame averaged");
        let ph = Stats::of(self.ph.iter().copied()).expect("nonempty").mean;
        let temp = Stats::of(self.temp.iter().copied()).expect("nonempty").mean;
        Reading {
            timestamp: truncate_to_second(last.at),
            longitude: self.station.longitude,
            latitude: self.station.latitude,
            ph,
            temp_c: temp,
            device_id: self.device_id.clone(),
            station: Some(self.station.label.clone()),
            seq_origin: last.frame.seq,
        }
    }

    /// Ends the capture; fails if the stream ran out first.
    pub fn finish(self) -> Result<Reading, CaptureError> {
        match self.done {
            Some(r) => Ok(r),
            None => Err(CaptureError::InsufficientData {
                station: self.station.label,
                got: self.ph.len(),
                needed: self.params.avg_count,
            }),
        }
    }
}

/// Runs a whole dwell capture over a finite frame sequence.
pub fn dwell_capture<'a, I>(
    frames: I,
    cal: &PhCalibration<f64>,
    station: &Station,
    device_id: &str,
    params: DwellParams,
) -> Result<Reading, CaptureError>
where
    I: IntoIterator<Item = &'a TimedFrame>,
{
    let mut cap = DwellCapture::new(*cal, station.clone(), device_id, params)?;
    for tf in frames {
        if cap.offer(tf)?.is_some() {
            break;
        }
    }
    cap.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSummary {
    pub station: String,
    pub longitude: f64,
    pub latitude: f64,
    pub count: usize,
    #[serde(with = "timestamp")]
    pub first_seen: DateTime<Utc>,
    pub ph_mean: f64,
    pub ph_min: f64,
    pub ph_max: f64,
    pub temp_mean: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub ph_assessment: QualityAssessment<f64>,
    pub temp_assessment: QualityAssessment<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SummaryError {
    #[error("EmptyInput: no readings to summarize")]
    EmptyInput,
    #[error("readings span several stations ({0} and {1})")]
    MixedStations(String, String),
}

// Sorting first makes the floating point sum independent of input order.
fn order_free_stats(mut values: Vec<f64>) -> Option<Stats<f64>> {
    values.sort_by(f64::total_cmp);
    Stats::of(values)
}

fn station_label(r: &Reading) -> &str {
    r.station.as_deref().unwrap_or("")
}

pub fn summarize_station(readings: &[Reading], season: Season) -> Result<StationSummary, SummaryError> {
    let first = readings.first().ok_or(SummaryError::EmptyInput)?;
    let label = station_label(first);
    if let Some(other) = readings.iter().find(|r| station_label(r) != label) {
        return Err(SummaryError::MixedStations(
            label.to_string(),
            station_label(other).to_string(),
        ));
    }
    let ph = order_free_stats(readings.iter().map(|r| r.ph).collect()).expect("nonempty");
    let temp = order_free_stats(readings.iter().map(|r| r.temp_c).collect()).expect("nonempty");
    // Earliest reading locates the station; ties broken on coordinates for determinism.
    let anchor = readings
        .iter()
        .min_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then(a.longitude.total_cmp(&b.longitude))
                .then(a.latitude.total_cmp(&b.latitude))
        })
        .expect("nonempty");
    Ok(StationSummary {
        station: label.to_string(),
        longitude: anchor.longitude,
        latitude: anchor.latitude,
        count: readings.len(),
        first_seen: anchor.timestamp,
        ph_mean: ph.mean,
        ph_min: ph.min,
        ph_max: ph.max,
        temp_mean: temp.mean,
        temp_min: temp.min,
        temp_max: temp.max,
        ph_assessment: assess_ph(ph.mean),
        temp_assessment: assess_temperature(temp.mean, season),
    })
}

/// Summaries for every labelled station, ordered by first visit then label.
/// Readings without a station label are skipped.
pub fn summarize_all<'a, I>(readings: I, season: Season) -> Vec<StationSummary>
where
    I: IntoIterator<Item = &'a Reading>,
{
    let mut groups: BTreeMap<&str, Vec<Reading>> = BTreeMap::new();
    for r in readings {
        if let Some(label) = r.station.as_deref() {
            groups.entry(label).or_default().push(r.clone());
        }
    }
    let mut out: Vec<StationSummary> = groups
        .values()
        .map(|rs| summarize_station(rs, season).expect("grouped by label, nonempty"))
        .collect();
    out.sort_by(|a, b| match a.first_seen.cmp(&b.first_seen) {
        Ordering::Equal => a.station.cmp(&b.station),
        o => o,
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::adc_from_electrode_mv;
    use crate::calibration::adc_from_temp_c;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2017, 6, 15, 9, 0, 0).unwrap()
    }

    fn reading(station: &str, ph: f64, temp: f64, secs: i64) -> Reading {
        Reading {
            timestamp: t0() + Duration::seconds(secs),
            longitude: 74.3,
            latitude: 31.5,
            ph,
            temp_c: temp,
            device_id: "probe-1".into(),
            station: Some(station.into()),
            seq_origin: (secs % 256) as u8,
        }
    }

    #[test]
    fn ph_band_examples() {
        assert_eq!(assess_ph(5.33f64).classification, Classification::BelowNormal);
        assert_eq!(assess_ph(7.0f64).classification, Classification::Normal);
        assert_eq!(assess_ph(8.4f64).classification, Classification::Normal);
        assert_eq!(assess_ph(6.5f64).classification, Classification::Normal);
        assert_eq!(assess_ph(8.41f64).classification, Classification::AboveNormal);
        let a = assess_ph(5.33f64);
        assert_eq!((a.norm_low, a.norm_high), (6.5, 8.4));
        assert_eq!(a.season, None);
    }

    #[test]
    fn temperature_band_examples() {
        let summer = assess_temperature(28.3f64, Season::Summer);
        assert_eq!(summer.classification, Classification::Normal);
        assert_eq!(summer.season, Some(Season::Summer));
        assert_eq!(
            assess_temperature(18.0f64, Season::Winter).classification,
            Classification::Normal
        );
        assert_eq!(
            assess_temperature(25.9f64, Season::Summer).classification,
            Classification::BelowNormal
        );
        assert_eq!(
            assess_temperature(25.9f64, Season::Winter).classification,
            Classification::AboveNormal
        );
        for b in [17.0f32, 19.0] {
            assert!(assess_temperature(b, Season::Winter).classification.is_normal());
        }
    }

    #[test]
    fn season_parsing() {
        assert_eq!("Winter".parse::<Season>(), Ok(Season::Winter));
        assert!("monsoon".parse::<Season>().is_err());
    }

    #[test]
    fn dedup_key_examples() {
        let a = reading("L1", 6.0, 27.0, 0);
        assert_eq!(a.dedup_key(), a.clone().dedup_key());
        let mut other_dev = a.clone();
        other_dev.device_id = "probe-2".into();
        assert_ne!(a.dedup_key(), other_dev.dedup_key());
        let mut later = a.clone();
        later.timestamp += Duration::seconds(1);
        let (ka, kl) = (a.dedup_key(), later.dedup_key());
        assert_eq!(ka.device_id, kl.device_id);
        assert_eq!(ka.seq_origin, kl.seq_origin);
        assert_ne!(ka.timestamp, kl.timestamp);
        assert_ne!(ka, kl);
        // Measurements are not part of the identity.
        let mut remeasured = a.clone();
        remeasured.ph = 6.01;
        assert_eq!(a.dedup_key(), remeasured.dedup_key());
    }

    #[test]
    fn reading_validation() {
        let now = t0();
        let ok = reading("L1", 6.0, 27.0, 0);
        assert_eq!(ok.validate(now), Ok(()));
        let mut hot = ok.clone();
        hot.ph = 15.2;
        let err = hot.validate(now).unwrap_err();
        assert_eq!(err.kind(), "FieldOutOfRange");
        assert!(err.to_string().starts_with("FieldOutOfRange: ph"));
        let mut future = ok.clone();
        future.timestamp = now + Duration::hours(25);
        assert_eq!(future.validate(now).unwrap_err().kind(), "FutureTimestamp");
        future.timestamp = now + Duration::hours(23);
        assert!(future.validate(now).is_ok());
        let mut lat = ok.clone();
        lat.latitude = -91.0;
        assert!(lat.validate(now).is_err());
        let mut anon = ok;
        anon.device_id.clear();
        assert_eq!(anon.validate(now), Err(ReadingError::EmptyDeviceId));
    }

    #[test]
    fn reading_json_shape() {
        let r = reading("L1", 6.0, 27.0, 5);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["timestamp"], "2017-06-15T09:00:05Z");
        assert_eq!(v["station"], "L1");
        let back: Reading = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        let sub: Reading = serde_json::from_str(
            r#"{"timestamp":"2017-06-15T09:00:05.900+00:00","longitude":1,"latitude":2,"ph":7,"temp_c":20,"device_id":"d","seq_origin":3}"#,
        )
        .unwrap();
        assert_eq!(sub.timestamp, t0() + Duration::seconds(5));
        assert_eq!(sub.station, None);
    }

    fn frames_for(ph: f64, temp: f64, n: usize, start_secs: i64) -> Vec<TimedFrame> {
        let cal = PhCalibration::<f64>::ideal(25.0);
        let ph_adc = adc_from_electrode_mv(cal.mv_from_ph(ph, temp));
        let temp_adc = adc_from_temp_c(temp);
        (0..n)
            .map(|i| TimedFrame {
                at: t0() + Duration::seconds(start_secs + i as i64),
                frame: SensorFrame::new(i as u8, ph_adc, temp_adc, 90),
            })
            .collect()
    }

    #[test]
    fn dwell_over_constant_stream() {
        let cal = PhCalibration::ideal(25.0);
        let station = Station::new("L6", 74.35, 31.52).arriving_at(t0());
        let frames = frames_for(6.38, 27.0, 200, 0);
        let r = dwell_capture(&frames, &cal, &station, "probe-1", DwellParams::default()).unwrap();
        assert!((r.ph - 6.38).abs() <= 0.1, "{}", r.ph);
        assert!((r.temp_c - 27.0).abs() <= 60.0 / 1023.0);
        // Settle 180 s then 10 frames: the last averaged frame is at t0 + 189 s.
        assert_eq!(r.timestamp, t0() + Duration::seconds(189));
        assert_eq!(r.seq_origin, 189);
        assert_eq!((r.longitude, r.latitude), (74.35, 31.52));
        assert_eq!(r.station.as_deref(), Some("L6"));
    }

    #[test]
    fn dwell_identity_for_single_frame() {
        let cal = PhCalibration::ideal(25.0);
        let station = Station::new("L1", 1.0, 2.0);
        let frames = frames_for(5.33, 25.9, 1, 42);
        let params = DwellParams {
            settle: Duration::zero(),
            avg_count: 1,
        };
        let r = dwell_capture(&frames, &cal, &station, "d", params).unwrap();
        let c = convert_frame(&frames[0].frame, &cal).unwrap();
        assert_eq!(r.ph, c.ph);
        assert_eq!(r.temp_c, c.temp_c);
        assert_eq!(r.timestamp, frames[0].at);
    }

    #[test]
    fn dwell_insufficient_data() {
        let cal = PhCalibration::ideal(25.0);
        let station = Station::new("L2", 1.0, 2.0).arriving_at(t0());
        let frames = frames_for(6.0, 27.0, 185, 0);
        let err = dwell_capture(&frames, &cal, &station, "d", DwellParams::default()).unwrap_err();
        assert_eq!(
            err,
            CaptureError::InsufficientData {
                station: "L2".into(),
                got: 5,
                needed: 10
            }
        );
    }

    #[test]
    fn dwell_skips_invalid_channels() {
        let cal = PhCalibration::ideal(25.0);
        let station = Station::new("L3", 1.0, 2.0);
        let mut frames = frames_for(6.0, 27.0, 4, 0);
        frames[0].frame.flags = 0x01;
        frames[1].frame.flags = 0x02;
        let params = DwellParams {
            settle: Duration::zero(),
            avg_count: 2,
        };
        let r = dwell_capture(&frames, &cal, &station, "d", params).unwrap();
        assert_eq!(r.seq_origin, 3);
        assert!(DwellCapture::new(cal, station, "d", DwellParams { avg_count: 0, ..params }).is_err());
    }

    #[test]
    fn summary_examples() {
        let one = summarize_station(&[reading("L1", 5.33, 25.9, 0)], Season::Summer).unwrap();
        assert_eq!((one.ph_min, one.ph_mean, one.ph_max), (5.33, 5.33, 5.33));
        assert_eq!((one.temp_min, one.temp_mean, one.temp_max), (25.9, 25.9, 25.9));
        assert_eq!(one.count, 1);

        let two = summarize_station(
            &[reading("L1", 5.33, 25.9, 0), reading("L1", 6.38, 28.3, 60)],
            Season::Summer,
        )
        .unwrap();
        assert!((two.ph_mean - 5.855).abs() < 1e-12);
        assert_eq!((two.ph_min, two.ph_max), (5.33, 6.38));
        assert_eq!(two.ph_assessment.classification, Classification::BelowNormal);

        assert_eq!(summarize_station(&[], Season::Summer), Err(SummaryError::EmptyInput));
        assert!(matches!(
            summarize_station(&[reading("L1", 6.0, 27.0, 0), reading("L2", 6.0, 27.0, 1)], Season::Summer),
            Err(SummaryError::MixedStations(..))
        ));
    }

    #[test]
    fn six_canal_stations_all_acidic() {
        let readings: Vec<Reading> = (0..6)
            .map(|i| {
                let f = i as f64 / 5.0;
                reading(&format!("L{}", i + 1), 5.33 + f * 1.05, 25.9 + f * 2.4, i * 200)
            })
            .collect();
        let sums = summarize_all(&readings, Season::Summer);
        assert_eq!(sums.len(), 6);
        assert_eq!(sums[0].station, "L1");
        assert_eq!(sums[5].station, "L6");
        assert!(sums
            .iter()
            .all(|s| s.ph_assessment.classification == Classification::BelowNormal));
    }

    proptest! {
        #[test]
        fn trichotomy_with_inclusive_bounds(ph in 0.0..=14.0f64) {
            let c = assess_ph(ph).classification;
            let want = if ph < 6.5 { Classification::BelowNormal }
                else if ph <= 8.4 { Classification::Normal }
                else { Classification::AboveNormal };
            prop_assert_eq!(c, want);
        }

        #[test]
        fn summary_is_order_insensitive(
            vals in proptest::collection::vec((0.0..14.0f64, 0.0..60.0f64), 1..30),
            cut in 0usize..30,
            seed in any::<u64>(),
        ) {
            let readings: Vec<Reading> = vals.iter().enumerate()
                .map(|(i, (p, t))| reading("S", *p, *t, i as i64))
                .collect();
            let cut = cut.min(readings.len());
            let (a, b) = readings.split_at(cut);
            let mut merged: Vec<Reading> = b.iter().chain(a.iter()).cloned().collect();
            // Deterministic shuffle.
            let mut s = seed;
            for i in (1..merged.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                merged.swap(i, (s >> 33) as usize % (i + 1));
            }
            let x = summarize_station(&readings, Season::Summer).unwrap();
            let y = summarize_station(&merged, Season::Summer).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn dwell_mean_within_contributors(
            phs in proptest::collection::vec(3.0..10.0f64, 1..20),
        ) {
            let cal = PhCalibration::<f64>::ideal(25.0);
            let frames: Vec<TimedFrame> = phs.iter().enumerate().map(|(i, p)| TimedFrame {
                at: t0() + Duration::seconds(i as i64),
                frame: SensorFrame::new(i as u8, adc_from_electrode_mv(cal.mv_from_ph(*p, 25.0)), adc_from_temp_c(25.0), 50),
            }).collect();
            let params = DwellParams { settle: Duration::zero(), avg_count: frames.len() };
            let r = dwell_capture(&frames, &cal, &Station::new("S", 0.0, 0.0), "d", params).unwrap();
            let conv: Vec<f64> = frames.iter().map(|f| convert_frame(&f.frame, &cal).unwrap().ph).collect();
            let lo = conv.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = conv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.ph >= lo && r.ph <= hi);
        }
    }
}
