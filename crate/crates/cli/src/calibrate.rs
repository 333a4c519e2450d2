use std::path::PathBuf;

use anyhow::Context;
use aquasonde_core::calibration::{two_point_calibrate, CalibrationRecord};
use aquasonde_core::{BufferPoint, PhCalibration};
use chrono::{SubsecRound, Utc};

use crate::usage;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Buffer reading as <ph>:<mv>; give exactly two.
    #[arg(long = "buffer", required = true, num_args = 1)]
    buffers: Vec<BufferPoint>,
    /// Temperature of the buffers in °C.
    #[arg(long)]
    temp: f64,
    #[arg(long)]
    out: PathBuf,
}

/// "DegenerateCalibration(7.0, 7.0)" -> "DegenerateCalibration".
fn kind_of(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split('(').next().unwrap_or_default().to_string()
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let [p1, p2] = args.buffers[..] else {
        return Err(usage(format!(
            "expected exactly two --buffer values, got {}",
            args.buffers.len()
        )));
    };
    let cal: PhCalibration =
        two_point_calibrate(p1, p2, args.temp).map_err(|e| usage(format!("{}: {e}", kind_of(&e))))?;
    let record = CalibrationRecord {
        calibration: cal,
        calibrated_at: Utc::now().trunc_subsecs(0),
    };
    std::fs::write(&args.out, record.to_string())
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "offset {:.2} mV, slope {:.2} mV/pH at {} °C -> {}",
        cal.offset_mv,
        cal.slope_mv_per_ph,
        cal.ref_temp_c,
        args.out.display()
    );
    Ok(())
}
