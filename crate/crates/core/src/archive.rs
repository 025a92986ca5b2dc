//! COTD trace archive: a little-endian container for a stream of
//! equal-length correlation traces.
//!
//! Layout: magic `COTD`, u16 version, u8 flags (bit 0: complex),
//! f64 sample rate in Hz, u32 frame length, u32 frame count, then
//! `frame_count * frame_len` f32 values (I and Q interleaved when complex).

use num_complex::Complex64;
use std::io::{Read, Write};

use crate::correlator::CorrTrace;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"COTD";
pub const VERSION: u16 = 1;
const FLAG_COMPLEX: u8 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 4 + 4;

/// Archive contents after decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceArchive {
    pub sample_rate: f64,
    pub complex: bool,
    pub frame_len: usize,
    /// Row-major frames; imaginary parts are zero for real archives.
    pub frames: Vec<Vec<Complex64>>,
}

impl TraceArchive {
    /// Package traces; stored as complex when any imaginary part is nonzero.
    pub fn from_traces(traces: &[CorrTrace]) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::Archive("no traces to archive".into()))?;
        let frame_len = first.len();
        if traces.iter().any(|t| t.len() != frame_len) {
            return Err(Error::Archive("traces differ in length".into()));
        }
        let complex = traces.iter().any(|t| t.values.iter().any(|v| v.im != 0.0));
        Ok(TraceArchive {
            sample_rate: 1.0 / first.sample_period,
            complex,
            frame_len,
            frames: traces.iter().map(|t| t.values.clone()).collect(),
        })
    }

    /// Traces with epochs spaced by `frame_interval`.
    pub fn to_traces(&self, frame_interval: f64) -> Vec<CorrTrace> {
        self.frames
            .iter()
            .enumerate()
            .map(|(k, values)| CorrTrace {
                values: values.clone(),
                sample_period: 1.0 / self.sample_rate,
                epoch: k as f64 * frame_interval,
                num_averaged: 1,
            })
            .collect()
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let count = u32::try_from(self.frames.len()).map_err(|_| Error::Archive("too many frames".into()))?;
        let len = u32::try_from(self.frame_len).map_err(|_| Error::Archive("frame too long".into()))?;
        let mut buf = Vec::with_capacity(HEADER_LEN + self.payload_len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(if self.complex { FLAG_COMPLEX } else { 0 });
        buf.extend_from_slice(&self.sample_rate.to_le_bytes());
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(&count.to_le_bytes());
        for frame in &self.frames {
            if frame.len() != self.frame_len {
                return Err(Error::Archive("frame length mismatch".into()));
            }
            for v in frame {
                buf.extend_from_slice(&(v.re as f32).to_le_bytes());
                if self.complex {
                    buf.extend_from_slice(&(v.im as f32).to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; HEADER_LEN];
        r.read_exact(&mut head)
            .map_err(|_| Error::Archive("truncated header".into()))?;
        if &head[0..4] != MAGIC {
            return Err(Error::Archive("bad magic".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != VERSION {
            return Err(Error::Archive(format!("unsupported version {version}")));
        }
        let complex = head[6] & FLAG_COMPLEX != 0;
        let sample_rate = f64::from_le_bytes(head[7..15].try_into().unwrap());
        let frame_len = u32::from_le_bytes(head[15..19].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(head[19..23].try_into().unwrap()) as usize;
        let per = if complex { 2 } else { 1 };
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != count * frame_len * per * 4 {
            return Err(Error::Archive(format!(
                "payload is {} bytes, header implies {}",
                payload.len(),
                count * frame_len * per * 4
            )));
        }
        let floats: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let frames = floats
            .chunks_exact((frame_len * per).max(1))
            .take(count)
            .map(|f| {
                if complex {
                    f.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
                } else {
                    f.iter().map(|&v| Complex64::new(v, 0.0)).collect()
                }
            })
            .collect();
        Ok(TraceArchive {
            sample_rate,
            complex,
            frame_len,
            frames,
        })
    }

    fn payload_len(&self) -> usize {
        self.frames.len() * self.frame_len * if self.complex { 2 } else { 1 }
    }
}
