//! Core of the aquasonde water-quality probe toolkit.
//!
//! * [`wire`]: the 11-byte sensor frame and a resynchronising stream decoder.
//! * [`calibration`]: ADC conversion and the Nernstian pH electrode model.
//! * [`sample`]: readings, irrigation-water quality bands, dwell capture and
//!   station summaries.
//! * [`session`]: logical frame clock and station-by-station capture.
//! * [`sim`]: seeded probe simulator and stream fault injection.
//! * [`export`]: CSV export and import.
//! * [`kv`]: the plain-text format shared by calibration, scenario and
//!   config files.
//!
//! Conversion and statistics code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the width used by the rest of the stack.

// `!(x >= y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod export;
pub mod kv;
pub mod sample;
pub mod scalar;
pub mod session;
pub mod sim;
pub mod wire;

pub use scalar::{Scalar, Stats};
pub use sample::{
    assess_ph, assess_temperature, dedup_key, dwell_capture, summarize_all, summarize_station,
    Classification, DedupKey, DwellCapture, DwellParams, Reading, Season, Station, StationSummary,
    TimedFrame,
};
pub use wire::{decode_frame, encode_frame, seq_gap, FrameError, FrameErrorKind, SensorFrame, StreamDecoder};

/// Electrode model in double precision.
pub type PhCalibration = calibration::PhCalibration<f64>;
/// Electrode model in single precision, as a microcontroller would evaluate it.
pub type PhCalibration32 = calibration::PhCalibration<f32>;
pub type BufferPoint = calibration::BufferPoint<f64>;
pub type QualityAssessment = sample::QualityAssessment<f64>;
pub type QualityAssessment32 = sample::QualityAssessment<f32>;
pub type PhValue = calibration::PhValue<f64>;
