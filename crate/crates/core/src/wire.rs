//! Binary frame format emitted by the sensor node.
//!
//! Every sample travels as a fixed 11-byte frame:
//!
//! ```text
//! offset  size  field
//!  0      2     sync        A5 5A
//!  2      1     version     currently 1
//!  3      1     seq         wraps 255 -> 0
//!  4      2     ph_adc      big-endian, 0..=1023
//!  6      2     temp_adc    big-endian, 0..=1023
//!  8      1     battery_pct 0..=100
//!  9      1     flags       bit0 pH valid, bit1 temperature valid, rest zero
//! 10      1     checksum    sum(bytes[2..=10]) % 256 == 0
//! ```
//!
//! [`StreamDecoder`] reassembles frames from an arbitrarily chunked byte
//! stream and resynchronises on the sync pair after corruption.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYNC: [u8; 2] = [0xA5, 0x5A];
pub const FRAME_LEN: usize = 11;
pub const PROTOCOL_VERSION: u8 = 1;
pub const ADC_MAX: u16 = 1023;
pub const BATTERY_MAX: u8 = 100;

pub const FLAG_PH_VALID: u8 = 0b0000_0001;
pub const FLAG_TEMP_VALID: u8 = 0b0000_0010;
pub const FLAGS_RESERVED: u8 = !(FLAG_PH_VALID | FLAG_TEMP_VALID);

const OFF_VERSION: usize = 2;
const OFF_PH: usize = 4;
const OFF_TEMP: usize = 6;
const OFF_BATTERY: usize = 8;
const OFF_FLAGS: usize = 9;
const OFF_CHECKSUM: usize = 10;

/// One raw sample from the sensor node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorFrame {
    pub version: u8,
    pub seq: u8,
    pub ph_adc: u16,
    pub temp_adc: u16,
    pub battery_pct: u8,
    pub flags: u8,
}

impl SensorFrame {
    /// A current-version frame with both channels marked valid.
    pub fn new(seq: u8, ph_adc: u16, temp_adc: u16, battery_pct: u8) -> Self {
        SensorFrame {
            version: PROTOCOL_VERSION,
            seq,
            ph_adc,
            temp_adc,
            battery_pct,
            flags: FLAG_PH_VALID | FLAG_TEMP_VALID,
        }
    }

    pub fn ph_valid(&self) -> bool {
        self.flags & FLAG_PH_VALID != 0
    }

    pub fn temp_valid(&self) -> bool {
        self.flags & FLAG_TEMP_VALID != 0
    }

    /// First violated field invariant, if any, with its byte offset in the frame.
    fn range_violation(&self) -> Option<(usize, InvalidFrame)> {
        if self.ph_adc > ADC_MAX {
            Some((OFF_PH, InvalidFrame::PhAdc(self.ph_adc)))
        } else if self.temp_adc > ADC_MAX {
            Some((OFF_TEMP, InvalidFrame::TempAdc(self.temp_adc)))
        } else if self.battery_pct > BATTERY_MAX {
            Some((OFF_BATTERY, InvalidFrame::Battery(self.battery_pct)))
        } else if self.flags & FLAGS_RESERVED != 0 {
            Some((OFF_FLAGS, InvalidFrame::ReservedFlags(self.flags)))
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), InvalidFrame> {
        if self.version != PROTOCOL_VERSION {
            return Err(InvalidFrame::Version(self.version));
        }
        match self.range_violation() {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }
}

/// Why the encoder refused a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InvalidFrame {
    #[error("unsupported protocol version {0}")]
    Version(u8),
    #[error("ph_adc {0} exceeds {ADC_MAX}")]
    PhAdc(u16),
    #[error("temp_adc {0} exceeds {ADC_MAX}")]
    TempAdc(u16),
    #[error("battery_pct {0} exceeds {BATTERY_MAX}")]
    Battery(u8),
    #[error("reserved flag bits set in {0:#04x}")]
    ReservedFlags(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameErrorKind {
    BadSync,
    UnsupportedVersion,
    ChecksumMismatch,
    FieldOutOfRange,
    Truncated,
}

impl fmt::Display for FrameErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A decode failure. `byte_offset` is relative to the decoded slice for
/// [`decode_frame`] and absolute within the stream for [`StreamDecoder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
#[error("{kind} at byte {byte_offset}")]
pub struct FrameError {
    pub kind: FrameErrorKind,
    pub byte_offset: u64,
}

impl FrameError {
    fn at(kind: FrameErrorKind, byte_offset: usize) -> Self {
        FrameError {
            kind,
            byte_offset: byte_offset as u64,
        }
    }
}

/// Value that makes `sum(payload) + checksum` vanish mod 256.
pub fn checksum(payload: &[u8]) -> u8 {
    payload
        .iter()
        .fold(0u8, |acc, b| acc.wrapping_add(*b))
        .wrapping_neg()
}

pub fn encode_frame(frame: &SensorFrame) -> Result<[u8; FRAME_LEN], InvalidFrame> {
    frame.validate()?;
    let mut out = [0u8; FRAME_LEN];
    out[..2].copy_from_slice(&SYNC);
    out[OFF_VERSION] = frame.version;
    out[3] = frame.seq;
    out[OFF_PH..OFF_PH + 2].copy_from_slice(&frame.ph_adc.to_be_bytes());
    out[OFF_TEMP..OFF_TEMP + 2].copy_from_slice(&frame.temp_adc.to_be_bytes());
    out[OFF_BATTERY] = frame.battery_pct;
    out[OFF_FLAGS] = frame.flags;
    out[OFF_CHECKSUM] = checksum(&out[OFF_VERSION..OFF_CHECKSUM]);
    Ok(out)
}

/// Decodes exactly one frame. Checks run in the order sync, version,
/// checksum, field ranges; the first failure is returned.
pub fn decode_frame(bytes: &[u8]) -> Result<SensorFrame, FrameError> {
    if bytes.len() < FRAME_LEN {
        return Err(FrameError::at(FrameErrorKind::Truncated, bytes.len()));
    }
    let bytes = &bytes[..FRAME_LEN];
    if bytes[0] != SYNC[0] {
        return Err(FrameError::at(FrameErrorKind::BadSync, 0));
    }
    if bytes[1] != SYNC[1] {
        return Err(FrameError::at(FrameErrorKind::BadSync, 1));
    }
    if bytes[OFF_VERSION] != PROTOCOL_VERSION {
        return Err(FrameError::at(
            FrameErrorKind::UnsupportedVersion,
            OFF_VERSION,
        ));
    }
    let sum = bytes[OFF_VERSION..]
        .iter()
        .fold(0u8, |acc, b| acc.wrapping_add(*b));
    if sum != 0 {
        return Err(FrameError::at(
            FrameErrorKind::ChecksumMismatch,
            OFF_CHECKSUM,
        ));
    }
    let frame = SensorFrame {
        version: bytes[OFF_VERSION],
        seq: bytes[3],
        ph_adc: u16::from_be_bytes([bytes[OFF_PH], bytes[OFF_PH + 1]]),
        temp_adc: u16::from_be_bytes([bytes[OFF_TEMP], bytes[OFF_TEMP + 1]]),
        battery_pct: bytes[OFF_BATTERY],
        flags: bytes[OFF_FLAGS],
    };
    if let Some((offset, _)) = frame.range_violation() {
        return Err(FrameError::at(FrameErrorKind::FieldOutOfRange, offset));
    }
    Ok(frame)
}

/// Number of frames lost between two consecutively received sequence numbers.
pub fn seq_gap(prev_seq: u8, next_seq: u8) -> u8 {
    next_seq.wrapping_sub(prev_seq).wrapping_sub(1)
}

/// Output of one [`StreamDecoder::feed`] call, in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Frame(SensorFrame),
    Error(FrameError),
}

/// Incremental frame decoder for a continuous byte stream.
///
/// Garbage between frames is reported as a single `BadSync` per contiguous
/// run. After a frame candidate fails validation the bytes skipped while
/// hunting for the next sync pair are not reported again. At most
/// `FRAME_LEN - 1` bytes are retained between calls.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    // Absolute stream offset of buf[0].
    base: u64,
    // Currently skipping bytes that already produced an error.
    resyncing: bool,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Total bytes consumed so far, including pending ones.
    pub fn position(&self) -> u64 {
        self.base + self.buf.len() as u64
    }

    pub fn feed(&mut self, chunk: &[u8]) -> Vec<Decoded> {
        let mut out = Vec::new();
        self.buf.extend_from_slice(chunk);
        let mut pos = 0usize;
        loop {
            let rest = &self.buf[pos..];
            if rest.is_empty() {
                break;
            }
            let sync_here = rest[0] == SYNC[0] && rest.get(1).is_none_or(|b| *b == SYNC[1]);
            if !sync_here {
                if !self.resyncing {
                    out.push(Decoded::Error(FrameError {
                        kind: FrameErrorKind::BadSync,
                        byte_offset: self.base + pos as u64,
                    }));
                    self.resyncing = true;
                }
                pos += 1;
                continue;
            }
            if rest.len() < FRAME_LEN {
                // Either a lone trailing A5 or a partial frame; wait for more.
                break;
            }
            match decode_frame(&rest[..FRAME_LEN]) {
                Ok(frame) => {
                    out.push(Decoded::Frame(frame));
                    self.resyncing = false;
                    pos += FRAME_LEN;
                }
                Err(mut e) => {
                    e.byte_offset += self.base + pos as u64;
                    out.push(Decoded::Error(e));
                    self.resyncing = true;
                    pos += SYNC.len();
                }
            }
        }
        self.buf.drain(..pos);
        self.base += pos as u64;
        debug_assert!(self.buf.len() < FRAME_LEN);
        out
    }

    /// Ends the stream, reporting any partial frame still held as `Truncated`.
    pub fn finish(&mut self) -> Option<FrameError> {
        if self.buf.is_empty() {
            return None;
        }
        let err = FrameError {
            kind: FrameErrorKind::Truncated,
            byte_offset: self.base,
        };
        self.base += self.buf.len() as u64;
        self.buf.clear();
        // A lone trailing sync byte inside a region already reported stays silent.
        if self.resyncing && self.base - err.byte_offset == 1 {
            return None;
        }
        Some(err)
    }
}

/// Decodes a complete byte sequence in one pass, including the end-of-stream check.
pub fn decode_all(bytes: &[u8]) -> Vec<Decoded> {
    let mut dec = StreamDecoder::new();
    let mut out = dec.feed(bytes);
    if let Some(e) = dec.finish() {
        out.push(Decoded::Error(e));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hex(s: &str) -> Vec<u8> {
        s.split_whitespace()
            .map(|b| u8::from_str_radix(b, 16).unwrap())
            .collect()
    }

    // Independent checksum: 0x100 minus the byte sum of the payload.
    fn oracle_checksum(payload: &[u8]) -> u8 {
        let sum: u32 = payload.iter().map(|b| *b as u32).sum();
        ((0x100 - (sum % 0x100)) % 0x100) as u8
    }

    #[test]
    fn encodes_all_zero_frame() {
        let f = SensorFrame {
            version: 1,
            seq: 0,
            ph_adc: 0,
            temp_adc: 0,
            battery_pct: 0,
            flags: 0,
        };
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.to_vec(), hex("A5 5A 01 00 00 00 00 00 00 00 FF"));
        assert_eq!(oracle_checksum(&bytes[2..10]), 0xFF);
    }

    #[test]
    fn encodes_reference_frame() {
        let f = SensorFrame {
            version: 1,
            seq: 0,
            ph_adc: 512,
            temp_adc: 300,
            battery_pct: 100,
            flags: 0x03,
        };
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.to_vec(), hex("A5 5A 01 00 02 00 01 2C 64 03 69"));
        assert_eq!(oracle_checksum(&bytes[2..10]), 0x69);
        assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn encoder_refuses_invalid_frames() {
        let ok = SensorFrame::new(1, 1, 1, 1);
        let cases = [
            (SensorFrame { ph_adc: 1024, ..ok }, InvalidFrame::PhAdc(1024)),
            (SensorFrame { temp_adc: 2000, ..ok }, InvalidFrame::TempAdc(2000)),
            (SensorFrame { battery_pct: 101, ..ok }, InvalidFrame::Battery(101)),
            (SensorFrame { flags: 0x04, ..ok }, InvalidFrame::ReservedFlags(0x04)),
            (SensorFrame { version: 2, ..ok }, InvalidFrame::Version(2)),
        ];
        for (frame, want) in cases {
            assert_eq!(encode_frame(&frame), Err(want));
        }
    }

    #[test]
    fn decode_error_order() {
        let good = hex("A5 5A 01 00 02 00 01 2C 64 03 69");

        let mut bad_ck = good.clone();
        bad_ck[10] = 0x6A;
        assert_eq!(
            decode_frame(&bad_ck).unwrap_err().kind,
            FrameErrorKind::ChecksumMismatch
        );

        assert_eq!(
            decode_frame(&[0u8; 11]).unwrap_err().kind,
            FrameErrorKind::BadSync
        );

        // Wrong version and wrong checksum: version wins.
        let mut v2 = good.clone();
        v2[2] = 2;
        assert_eq!(
            decode_frame(&v2).unwrap_err(),
            FrameError::at(FrameErrorKind::UnsupportedVersion, 2)
        );

        // Out of range battery with a consistent checksum.
        let mut hot = good.clone();
        hot[8] = 200;
        hot[10] = oracle_checksum(&hot[2..10]);
        assert_eq!(
            decode_frame(&hot).unwrap_err(),
            FrameError::at(FrameErrorKind::FieldOutOfRange, 8)
        );

        // Bad sync also masks a checksum failure.
        let mut both = bad_ck.clone();
        both[1] = 0;
        assert_eq!(decode_frame(&both).unwrap_err().kind, FrameErrorKind::BadSync);

        assert_eq!(
            decode_frame(&good[..5]).unwrap_err().kind,
            FrameErrorKind::Truncated
        );
    }

    #[test]
    fn seq_gap_examples() {
        assert_eq!(seq_gap(5, 6), 0);
        assert_eq!(seq_gap(255, 0), 0);
        assert_eq!(seq_gap(250, 3), 8);
        assert_eq!(seq_gap(7, 7), 255);
    }

    #[test]
    fn seq_gap_matches_cyclic_count() {
        for prev in 0..=255u8 {
            for next in 0..=255u8 {
                // Count integers strictly between prev and next walking forward mod 256.
                let mut n = 0u32;
                let mut k = prev.wrapping_add(1);
                while k != next {
                    n += 1;
                    k = k.wrapping_add(1);
                }
                if prev == next {
                    n = 255;
                }
                assert_eq!(seq_gap(prev, next) as u32, n, "({prev}, {next})");
            }
        }
    }

    #[test]
    fn frame_split_across_chunks() {
        let f = encode_frame(&SensorFrame::new(9, 400, 500, 80)).unwrap();
        let mut dec = StreamDecoder::new();
        assert!(dec.feed(&f[..4]).is_empty());
        assert_eq!(dec.pending(), 4);
        let out = dec.feed(&f[4..]);
        assert_eq!(out, vec![Decoded::Frame(SensorFrame::new(9, 400, 500, 80))]);
        assert_eq!(dec.pending(), 0);
        assert_eq!(dec.finish(), None);
    }

    #[test]
    fn truncated_tail_reported_on_finish() {
        let f = encode_frame(&SensorFrame::new(0, 1, 2, 3)).unwrap();
        let mut dec = StreamDecoder::new();
        dec.feed(&f);
        dec.feed(&f[..6]);
        assert_eq!(
            dec.finish(),
            Some(FrameError::at(FrameErrorKind::Truncated, 11))
        );
    }

    #[test]
    fn trailing_sync_byte_is_held() {
        let mut dec = StreamDecoder::new();
        let out = dec.feed(&[0x00, 0xA5]);
        assert_eq!(out.len(), 1);
        assert_eq!(dec.pending(), 1);
        let f = encode_frame(&SensorFrame::new(1, 2, 3, 4)).unwrap();
        let out = dec.feed(&f[1..]);
        assert_eq!(out, vec![Decoded::Frame(SensorFrame::new(1, 2, 3, 4))]);
    }
}
