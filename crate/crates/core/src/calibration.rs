//! ADC counts to physical units, and the pH electrode model.
//!
//! The electrode is modelled as a Nernstian glass electrode with its
//! isopotential point at pH 7: `mv = offset + slope_T * (pH - 7)` where the
//! slope scales with absolute temperature. The analog front end shifts the
//! bipolar electrode signal to mid-rail of a 10-bit, 5 V converter.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::kv::{KvDocument, KvError};
use crate::scalar::Scalar;
use crate::wire::ADC_MAX;

pub const ADC_FULL_SCALE_MV: f64 = 5000.0;
pub const MID_RAIL_MV: f64 = 2500.0;
pub const KELVIN_OFFSET: f64 = 273.15;
pub const GAS_CONSTANT: f64 = 8.314;
pub const FARADAY: f64 = 96485.0;

pub const PH_MIN: f64 = 0.0;
pub const PH_MAX: f64 = 14.0;
pub const ISOPOTENTIAL_PH: f64 = 7.0;

/// Temperature probe span, also the valid compensation range.
pub const TEMP_MIN_C: f64 = 0.0;
pub const TEMP_MAX_C: f64 = 60.0;

/// Electrode health band for |slope|. A fresh electrode sits near 59 mV/pH;
/// well below 30 means a dead or dry bulb, above 90 is not physically
/// attainable and points at a wiring or buffer mix-up.
pub const SLOPE_BAND_MV: (f64, f64) = (30.0, 90.0);

/// Buffers closer than this give an ill-conditioned slope.
pub const MIN_BUFFER_SPACING_PH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CalibrationError {
    #[error("ADC reading {0} exceeds {ADC_MAX}")]
    FieldOutOfRange(u16),
    #[error("buffers at pH {0} and {1} are too close to calibrate")]
    DegenerateCalibration(f64, f64),
    #[error("electrode slope {0:.2} mV/pH outside the healthy band")]
    ElectrodeFault(f64),
    #[error("buffer pH {0} outside 0..=14")]
    BufferOutOfRange(f64),
    #[error("temperature {0} °C outside 0..=60")]
    TemperatureOutOfRange(f64),
}

/// Ideal electrode slope magnitude in mV/pH at `temp_c`: ln(10)·R·T/F.
pub fn nernst_slope_mv<F: Scalar>(temp_c: F) -> F {
    let ln10 = F::lit(10.0).ln();
    ln10 * F::lit(GAS_CONSTANT) * (temp_c + F::lit(KELVIN_OFFSET)) / F::lit(FARADAY) * F::lit(1000.0)
}

fn check_adc(adc: u16) -> Result<(), CalibrationError> {
    if adc > ADC_MAX {
        Err(CalibrationError::FieldOutOfRange(adc))
    } else {
        Ok(())
    }
}

fn adc_span<F: Scalar>() -> F {
    F::lit(ADC_MAX as f64)
}

/// Electrode millivolts for a pH channel ADC reading.
pub fn electrode_mv_from_adc<F: Scalar>(ph_adc: u16) -> Result<F, CalibrationError> {
    check_adc(ph_adc)?;
    let conditioned = F::lit(ph_adc as f64) * F::lit(ADC_FULL_SCALE_MV) / adc_span();
    Ok(conditioned - F::lit(MID_RAIL_MV))
}

/// Nearest ADC count for an electrode voltage, saturating at the rails.
pub fn adc_from_electrode_mv<F: Scalar>(mv: F) -> u16 {
    let counts = (mv + F::lit(MID_RAIL_MV)) * adc_span() / F::lit(ADC_FULL_SCALE_MV);
    quantize(counts)
}

/// Linear map of the temperature probe over its 0..=60 °C span.
pub fn temp_c_from_adc<F: Scalar>(temp_adc: u16) -> Result<F, CalibrationError> {
    check_adc(temp_adc)?;
    Ok(F::lit(temp_adc as f64) * F::lit(TEMP_MAX_C) / adc_span())
}

pub fn adc_from_temp_c<F: Scalar>(temp_c: F) -> u16 {
    quantize(temp_c * adc_span() / F::lit(TEMP_MAX_C))
}

fn quantize<F: Scalar>(counts: F) -> u16 {
    let r = counts.round();
    if !(r > F::zero()) {
        0
    } else if r >= adc_span() {
        ADC_MAX
    } else {
        r.to_u16().unwrap_or(0)
    }
}

/// A known buffer solution and what the electrode read in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferPoint<F> {
    pub ph: F,
    pub measured_mv: F,
}

impl<F: Scalar> BufferPoint<F> {
    pub fn new(ph: F, measured_mv: F) -> Result<Self, CalibrationError> {
        if !(ph >= F::lit(PH_MIN) && ph <= F::lit(PH_MAX)) {
            return Err(CalibrationError::BufferOutOfRange(ph.to_f64_lossy()));
        }
        Ok(BufferPoint { ph, measured_mv })
    }
}

impl<F: Scalar> FromStr for BufferPoint<F> {
    type Err = String;

    /// `<ph>:<mv>`, e.g. `4:177.48`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ph, mv) = s
            .split_once(':')
            .ok_or_else(|| format!("expected <ph>:<mv>, got {s:?}"))?;
        let ph: f64 = ph.trim().parse().map_err(|e| format!("buffer pH {ph:?}: {e}"))?;
        let mv: f64 = mv.trim().parse().map_err(|e| format!("buffer mV {mv:?}: {e}"))?;
        BufferPoint::new(F::lit(ph), F::lit(mv)).map_err(|e| e.to_string())
    }
}

/// Electrode model fitted at a reference temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhCalibration<F> {
    /// Millivolts at pH 7.
    pub offset_mv: F,
    /// Millivolts per pH unit at `ref_temp_c`; negative for a working electrode.
    pub slope_mv_per_ph: F,
    pub ref_temp_c: F,
}

/// Which end of the sensor range a reading was pinned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhValue<F> {
    pub ph: F,
    pub clamped: Option<Clamp>,
}

fn check_temp<F: Scalar>(t: F) -> Result<(), CalibrationError> {
    if t >= F::lit(TEMP_MIN_C) && t <= F::lit(TEMP_MAX_C) {
        Ok(())
    } else {
        Err(CalibrationError::TemperatureOutOfRange(t.to_f64_lossy()))
    }
}

impl<F: Scalar> PhCalibration<F> {
    pub fn new(offset_mv: F, slope_mv_per_ph: F, ref_temp_c: F) -> Result<Self, CalibrationError> {
        let mag = slope_mv_per_ph.abs();
        if !(mag >= F::lit(SLOPE_BAND_MV.0) && mag <= F::lit(SLOPE_BAND_MV.1)) {
            return Err(CalibrationError::ElectrodeFault(slope_mv_per_ph.to_f64_lossy()));
        }
        check_temp(ref_temp_c)?;
        Ok(PhCalibration {
            offset_mv,
            slope_mv_per_ph,
            ref_temp_c,
        })
    }

    /// A perfect electrode: zero offset, Nernstian slope at `ref_temp_c`.
    pub fn ideal(ref_temp_c: F) -> Self {
        PhCalibration {
            offset_mv: F::zero(),
            slope_mv_per_ph: -nernst_slope_mv(ref_temp_c),
            ref_temp_c,
        }
    }

    /// Slope rescaled from the reference temperature to `temp_c`.
    pub fn slope_at(&self, temp_c: F) -> F {
        if temp_c == self.ref_temp_c {
            return self.slope_mv_per_ph;
        }
        let k = F::lit(KELVIN_OFFSET);
        self.slope_mv_per_ph * (temp_c + k) / (self.ref_temp_c + k)
    }

    /// Temperature-compensated pH, pinned to 0..=14.
    pub fn ph_from_mv(&self, mv: F, water_temp_c: F) -> Result<PhValue<F>, CalibrationError> {
        check_temp(water_temp_c)?;
        let raw = F::lit(ISOPOTENTIAL_PH) + (mv - self.offset_mv) / self.slope_at(water_temp_c);
        Ok(clamp_ph(raw))
    }

    /// Electrode millivolts this model predicts for `ph` at `temp_c`.
    pub fn mv_from_ph(&self, ph: F, temp_c: F) -> F {
        self.offset_mv + self.slope_at(temp_c) * (ph - F::lit(ISOPOTENTIAL_PH))
    }

    pub fn cast<G: Scalar>(&self) -> PhCalibration<G> {
        PhCalibration {
            offset_mv: G::lit(self.offset_mv.to_f64_lossy()),
            slope_mv_per_ph: G::lit(self.slope_mv_per_ph.to_f64_lossy()),
            ref_temp_c: G::lit(self.ref_temp_c.to_f64_lossy()),
        }
    }
}

fn clamp_ph<F: Scalar>(raw: F) -> PhValue<F> {
    let (lo, hi) = (F::lit(PH_MIN), F::lit(PH_MAX));
    if raw < lo {
        PhValue {
            ph: lo,
            clamped: Some(Clamp::Low),
        }
    } else if raw > hi {
        PhValue {
            ph: hi,
            clamped: Some(Clamp::High),
        }
    } else {
        PhValue {
            ph: raw,
            clamped: None,
        }
    }
}

pub fn ph_from_mv<F: Scalar>(
    mv: F,
    cal: &PhCalibration<F>,
    water_temp_c: F,
) -> Result<PhValue<F>, CalibrationError> {
    cal.ph_from_mv(mv, water_temp_c)
}

/// Fits offset and slope through two buffer readings taken at `temp_c`.
pub fn two_point_calibrate<F: Scalar>(
    p1: BufferPoint<F>,
    p2: BufferPoint<F>,
    temp_c: F,
) -> Result<PhCalibration<F>, CalibrationError> {
    let spacing = (p2.ph - p1.ph).abs();
    if !(spacing >= F::lit(MIN_BUFFER_SPACING_PH)) {
        return Err(CalibrationError::DegenerateCalibration(
            p1.ph.to_f64_lossy(),
            p2.ph.to_f64_lossy(),
        ));
    }
    let slope = (p2.measured_mv - p1.measured_mv) / (p2.ph - p1.ph);
    let offset = p1.measured_mv - slope * (p1.ph - F::lit(ISOPOTENTIAL_PH));
    PhCalibration::new(offset, slope, temp_c)
}

/// A calibration together with when it was performed, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub calibration: PhCalibration<f64>,
    pub calibrated_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum CalibrationFileError {
    #[error(transparent)]
    Format(#[from] KvError),
    #[error(transparent)]
    Invalid(#[from] CalibrationError),
}

impl CalibrationRecord {
    pub fn parse(text: &str) -> Result<Self, CalibrationFileError> {
        let doc = KvDocument::parse(text)?;
        let offset: f64 = doc.require("offset_mv")?;
        let slope: f64 = doc.require("slope_mv_per_ph")?;
        let ref_temp: f64 = doc.require("ref_temp_c")?;
        let at = doc.require_str("calibrated_at")?;
        let calibrated_at = DateTime::parse_from_rfc3339(at)
            .map_err(|e| KvError::value("calibrated_at", e))?
            .with_timezone(&Utc);
        Ok(CalibrationRecord {
            calibration: PhCalibration::new(offset, slope, ref_temp)?,
            calibrated_at,
        })
    }
}

impl fmt::Display for CalibrationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.calibration;
        writeln!(f, "# aquasonde pH electrode calibration")?;
        writeln!(f, "offset_mv = {}", c.offset_mv)?;
        writeln!(f, "slope_mv_per_ph = {}", c.slope_mv_per_ph)?;
        writeln!(f, "ref_temp_c = {}", c.ref_temp_c)?;
        writeln!(
            f,
            "calibrated_at = {}",
            self.calibrated_at.to_rfc3339_opts(SecondsFormat::Secs, true)
        )
    }
}
