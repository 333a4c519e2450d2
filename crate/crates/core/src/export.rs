//! CSV form of stored readings.
//!
//! Base columns are `date,time,longitude,latitude,ph,temperature` with the
//! date as `YYYY-MM-DD`, the time as `HH:MM:SS` UTC, coordinates to six
//! decimals and pH/temperature to two. The provenance variant appends
//! `device_id,station,seq_origin`, which is enough to rebuild dedup keys
//! when the file is re-imported.

use chrono::{NaiveDate, NaiveTime, TimeZone, Utc};
use thiserror::Error;

use crate::sample::Reading;

pub const BASE_HEADER: [&str; 6] = ["date", "time", "longitude", "latitude", "ph", "temperature"];
pub const PROVENANCE_HEADER: [&str; 3] = ["device_id", "station", "seq_origin"];

/// Device id given to rows imported without provenance columns.
pub const UNKNOWN_DEVICE: &str = "csv-import";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
}

fn row_of(r: &Reading, with_provenance: bool) -> Vec<String> {
    let mut row = vec![
        r.timestamp.format("%Y-%m-%d").to_string(),
        r.timestamp.format("%H:%M:%S").to_string(),
        format!("{:.6}", r.longitude),
        format!("{:.6}", r.latitude),
        format!("{:.2}", r.ph),
        format!("{:.2}", r.temp_c),
    ];
    if with_provenance {
        row.push(r.device_id.clone());
        row.push(r.station.clone().unwrap_or_default());
        row.push(r.seq_origin.to_string());
    }
    row
}

pub fn header(with_provenance: bool) -> Vec<&'static str> {
    let mut h = BASE_HEADER.to_vec();
    if with_provenance {
        h.extend(PROVENANCE_HEADER);
    }
    h
}

/// Writes readings in the given order, header first, `\n` line endings.
pub fn write_csv<'a, W, I>(out: W, readings: I, with_provenance: bool) -> Result<(), CsvError>
where
    W: std::io::Write,
    I: IntoIterator<Item = &'a Reading>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header(with_provenance))?;
    for r in readings {
        w.write_record(row_of(r, with_provenance))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes data rows only, for appending to a file that already has a header.
pub fn write_rows<'a, W, I>(out: W, readings: I, with_provenance: bool) -> Result<(), CsvError>
where
    W: std::io::Write,
    I: IntoIterator<Item = &'a Reading>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in readings {
        w.write_record(row_of(r, with_provenance))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn to_csv_string<'a, I>(readings: I, with_provenance: bool) -> String
where
    I: IntoIterator<Item = &'a Reading>,
{
    let mut buf = Vec::new();
    write_csv(&mut buf, readings, with_provenance).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Parses either column layout.
pub fn parse_csv(text: &str) -> Result<Vec<Reading>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let hdr: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let with_provenance = if hdr == header(true) {
        true
    } else if hdr == header(false) {
        false
    } else {
        return Err(CsvError::Header(hdr));
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let bad = |msg: String| CsvError::Row { row, msg };
        let field = |idx: usize| rec.get(idx).map(str::trim).unwrap_or("");
        let num = |idx: usize| -> Result<f64, CsvError> {
            field(idx)
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", header(with_provenance)[idx])))
        };
        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|e| bad(format!("date: {e}")))?;
        let time = NaiveTime::parse_from_str(field(1), "%H:%M:%S").map_err(|e| bad(format!("time: {e}")))?;
        let timestamp = Utc.from_utc_datetime(&date.and_time(time));
        let (device_id, station, seq_origin) = if with_provenance {
            let station = field(7);
            (
                field(6).to_string(),
                (!station.is_empty()).then(|| station.to_string()),
                field(8)
                    .parse::<u8>()
                    .map_err(|e| bad(format!("seq_origin: {e}")))?,
            )
        } else {
            (UNKNOWN_DEVICE.to_string(), None, 0)
        };
        out.push(Reading {
            timestamp,
            longitude: num(2)?,
            latitude: num(3)?,
            ph: num(4)?,
            temp_c: num(5)?,
            device_id,
            station,
            seq_origin,
        });
    }
    Ok(out)
}
