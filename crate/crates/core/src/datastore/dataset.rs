//! Binary trace container.
//!
//! ```text
//! "ORCL" | version u8 | record_count u32
//! record_count x (sample_count u64, device_label u32)
//! metadata_len u32
//! payload: interleaved f32 I, Q for every record in order
//! metadata: UTF-8 JSON, metadata_len bytes
//! crc32 u32 of everything above
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian as LE, WriteBytesExt};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::HashCheck;
use crate::baseband::{ChannelRealization, IqTrace};
use crate::impairments::ImpairmentConfig;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ORCL";
pub const FORMAT_VERSION: u8 = 1;

/// One capture with where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    /// Capture campaign index (0 is the training session).
    pub session: u32,
    /// Seed of the transmitted payload bits.
    pub data_seed: u64,
    pub trace: IqTrace<f32>,
}

/// Captures plus the hash of the config that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config_hash: Option<String>,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn check_hash(&self, expected: &str) -> HashCheck {
        HashCheck::compare(self.config_hash.as_deref(), expected)
    }

    /// Traces of one session, in file order.
    pub fn session(&self, session: u32) -> Vec<&IqTrace<f32>> {
        self.records
            .iter()
            .filter(|r| r.session == session)
            .map(|r| &r.trace)
            .collect()
    }

    /// Distinct sessions present, ascending.
    pub fn sessions(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.records.iter().map(|r| r.session).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Serialize, Deserialize)]
struct TraceMeta {
    session: u32,
    data_seed: u64,
    sample_rate_hz: f64,
    channel: ChannelRealization,
    impairment: ImpairmentConfig,
    residual: ImpairmentConfig,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config_hash: Option<String>,
    records: Vec<TraceMeta>,
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Metadata {
        config_hash: ds.config_hash.clone(),
        records: ds
            .records
            .iter()
            .map(|r| (r, &r.trace))
            .map(|(r, t)| TraceMeta {
                session: r.session,
                data_seed: r.data_seed,
                sample_rate_hz: t.sample_rate_hz,
                channel: t.channel.clone(),
                impairment: t.impairment.clone(),
                residual: t.residual.clone(),
            })
            .collect(),
    })?;
    let n_samples: usize = ds.records.iter().map(|r| r.trace.len()).sum();
    let mut buf = Vec::with_capacity(13 + 12 * ds.records.len() + 8 * n_samples + meta.len());
    buf.write_all(&MAGIC)?;
    buf.write_u8(FORMAT_VERSION)?;
    buf.write_u32::<LE>(
        u32::try_from(ds.records.len()).map_err(|_| Error::invalid("too many records"))?,
    )?;
    for t in ds.records.iter().map(|r| &r.trace) {
        buf.write_u64::<LE>(t.len() as u64)?;
        buf.write_u32::<LE>(t.device_label)?;
    }
    buf.write_u32::<LE>(
        u32::try_from(meta.len()).map_err(|_| Error::invalid("metadata too large"))?,
    )?;
    for t in ds.records.iter().map(|r| &r.trace) {
        for s in &t.samples {
            buf.write_f32::<LE>(s.re)?;
            buf.write_f32::<LE>(s.im)?;
        }
    }
    buf.write_all(&meta)?;
    let crc = crc32fast::hash(&buf);
    buf.write_u32::<LE>(crc)?;
    Ok(buf)
}

/// Bounds-checked cursor that reports truncation with context.
struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "{what} needs {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.data.len()
                ))
            })?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LE::read_u32(self.take(4, what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(LE::read_u64(self.take(8, what)?))
    }
}

pub fn decode_dataset(data: &[u8]) -> Result<Dataset> {
    let mut r = Reader { data, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic.try_into().expect("4 bytes"),
        });
    }
    let version = r.take(1, "version")?[0];
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let count = r.u32("record count")? as usize;
    let mut headers = Vec::with_capacity(count.min(1 << 16));
    for k in 0..count {
        let n = r.u64(&format!("record {k} header"))?;
        let label = r.u32(&format!("record {k} header"))?;
        headers.push((n, label));
    }
    let meta_len = r.u32("metadata length")? as usize;
    let payload_bytes = headers
        .iter()
        .try_fold(0u64, |acc, (n, _)| acc.checked_add(n.checked_mul(8)?))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or_else(|| Error::Truncated("declared payload exceeds addressable size".into()))?;
    let payload = r.take(payload_bytes, "sample payload")?;
    let meta = r.take(meta_len, "metadata")?;
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != data.len() {
        return Err(Error::invalid(format!(
            "{} trailing bytes after checksum",
            data.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&data[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let meta: Metadata = serde_json::from_slice(meta)?;
    if meta.records.len() != count {
        return Err(Error::invalid(format!(
            "metadata describes {} records, header declares {count}",
            meta.records.len()
        )));
    }
    let mut records = Vec::with_capacity(count);
    let mut floats = payload.chunks_exact(4).map(LE::read_f32);
    for ((n, label), m) in headers.into_iter().zip(meta.records) {
        let samples: Vec<Complex<f32>> = (0..n)
            .map(|_| Complex::new(floats.next().expect("sized"), floats.next().expect("sized")))
            .collect();
        records.push(DatasetRecord {
            session: m.session,
            data_seed: m.data_seed,
            trace: IqTrace::new(
                samples,
                m.sample_rate_hz,
                label,
                m.channel,
                m.impairment,
                m.residual,
            )?,
        });
    }
    Ok(Dataset {
        config_hash: meta.config_hash,
        records,
    })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}
