//! PTT1 time-tag files and CSV export.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `PTT1` |
//! | 2 | version, 1 |
//! | 2 | channel count |
//! | 8 | picoseconds per tick |
//! | 4 | metadata length `L` |
//! | L | UTF-8 JSON object |
//!
//! followed by 12-byte records `u64 timestamp, u8 channel, 3 zero bytes`,
//! ordered by `(timestamp, channel)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::stream::StreamSet;

pub const MAGIC: [u8; 4] = *b"PTT1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
pub const RECORD_LEN: usize = 12;

/// Metadata key holding the acquisition length in seconds.
pub const DURATION_KEY: &str = "duration_s";

/// Fixed part of a PTT1 header plus its metadata object.
#[derive(Debug, Clone, PartialEq)]
pub struct Ptt1Header {
    pub channel_count: u16,
    pub resolution_ps: u64,
    /// Length of the metadata blob as stored.
    pub metadata_len: u32,
    pub metadata: Map<String, Value>,
}

impl Ptt1Header {
    /// Byte offset of the first record.
    pub fn records_offset(&self) -> u64 {
        HEADER_LEN as u64 + u64::from(self.metadata_len)
    }
}

/// Writes `set` to `out`. `duration_s` is added to (or replaces it in) the metadata.
pub fn write_to<W: Write>(mut out: W, set: &StreamSet, metadata: &Map<String, Value>) -> Result<()> {
    let mut meta = metadata.clone();
    meta.insert(DURATION_KEY.into(), Value::from(set.duration_s()));
    let blob = serde_json::to_vec(&meta)?;
    let meta_len = u32::try_from(blob.len()).map_err(|_| Error::Format("metadata exceeds 4 GiB".into()))?;
    let channel_count = u16::try_from(set.channel_count())
        .map_err(|_| Error::Format(format!("{} channels do not fit the header", set.channel_count())))?;

    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&channel_count.to_le_bytes())?;
    out.write_all(&set.resolution_ps().to_le_bytes())?;
    out.write_all(&meta_len.to_le_bytes())?;
    out.write_all(&blob)?;

    let mut record = [0u8; RECORD_LEN];
    for tag in set.merged() {
        record[..8].copy_from_slice(&tag.timestamp.to_le_bytes());
        record[8] = tag.channel;
        out.write_all(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_streams(path: impl AsRef<Path>, set: &StreamSet, metadata: &Map<String, Value>) -> Result<()> {
    let file = File::create(path)?;
    write_to(BufWriter::new(file), set, metadata)
}

/// Reads up to `buf.len()` bytes; returns how many arrived before end of input.
fn fill<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match input.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(got)
}

fn read_exact_at<R: Read>(input: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    let got = fill(input, buf)?;
    if got < buf.len() {
        return Err(Error::Corruption {
            offset: offset + got as u64,
            message: format!("file ends inside {what} ({got} of {} bytes)", buf.len()),
        });
    }
    Ok(())
}

/// Parses the header, leaving `input` positioned at the first record.
pub fn read_header<R: Read>(input: &mut R) -> Result<Ptt1Header> {
    let mut magic = [0u8; 4];
    let got = fill(input, &mut magic)?;
    if magic[..got] != MAGIC[..got] {
        return Err(Error::Format(format!("bad magic {:?}, expected \"PTT1\"", String::from_utf8_lossy(&magic[..got]))));
    }
    if got < 4 {
        return Err(Error::Corruption { offset: got as u64, message: "file ends inside magic".into() });
    }
    let mut fixed = [0u8; HEADER_LEN - 4];
    read_exact_at(input, &mut fixed, 4, "header")?;
    let version = u16::from_le_bytes([fixed[0], fixed[1]]);
    let channel_count = u16::from_le_bytes([fixed[2], fixed[3]]);
    let resolution_ps = u64::from_le_bytes(fixed[4..12].try_into().expect("8 bytes"));
    let meta_len = u32::from_le_bytes(fixed[12..16].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if channel_count == 0 {
        return Err(Error::Format("channel count is 0".into()));
    }
    if resolution_ps == 0 {
        return Err(Error::Format("resolution is 0 ps".into()));
    }
    let mut blob = vec![0u8; meta_len as usize];
    read_exact_at(input, &mut blob, HEADER_LEN as u64, "metadata")?;
    let metadata = if blob.is_empty() {
        Map::new()
    } else {
        match serde_json::from_slice::<Value>(&blob) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(Error::Format("metadata is not a JSON object".into())),
            Err(e) => return Err(Error::Format(format!("metadata: {e}"))),
        }
    };
    Ok(Ptt1Header { channel_count, resolution_ps, metadata_len: meta_len, metadata })
}

/// Reads a whole PTT1 stream. The duration comes from the metadata, or from
/// the last timestamp plus one tick when absent.
pub fn read_from<R: Read>(mut input: R) -> Result<(StreamSet, Map<String, Value>)> {
    let header = read_header(&mut input)?;
    let channel_count = usize::from(header.channel_count);
    let mut offset = header.records_offset();
    let mut channels: Vec<Vec<u64>> = vec![Vec::new(); channel_count];
    let mut record = [0u8; RECORD_LEN];
    let mut last = 0u64;
    let mut index = 0u64;
    loop {
        let got = fill(&mut input, &mut record)?;
        if got == 0 {
            break;
        }
        if got < RECORD_LEN {
            return Err(Error::Corruption {
                offset,
                message: format!("record {index} truncated ({got} of {RECORD_LEN} bytes)"),
            });
        }
        let timestamp = u64::from_le_bytes(record[..8].try_into().expect("8 bytes"));
        let channel = record[8];
        if record[9..] != [0, 0, 0] {
            return Err(Error::Corruption { offset: offset + 9, message: format!("record {index}: reserved bytes not zero") });
        }
        if usize::from(channel) >= channel_count {
            return Err(Error::Data(format!("record {index}: channel {channel} >= channel count {channel_count}")));
        }
        if timestamp < last {
            return Err(Error::Data(format!("record {index}: timestamp {timestamp} precedes {last}")));
        }
        last = timestamp;
        channels[usize::from(channel)].push(timestamp);
        offset += RECORD_LEN as u64;
        index += 1;
    }
    let duration_s = match header.metadata.get(DURATION_KEY) {
        Some(v) => v
            .as_f64()
            .filter(|d| d.is_finite() && *d >= 0.0)
            .ok_or_else(|| Error::Format(format!("metadata {DURATION_KEY} is not a non-negative number")))?,
        None if index == 0 => 0.0,
        None => (last as f64 + 1.0) * header.resolution_ps as f64 * 1e-12,
    };
    let set = StreamSet::new(header.resolution_ps, duration_s, channels)?;
    Ok((set, header.metadata))
}

pub fn read_streams(path: impl AsRef<Path>) -> Result<(StreamSet, Map<String, Value>)> {
    read_from(BufReader::new(File::open(path)?))
}

/// CSV with header `timestamp_ps,channel`, one row per tag in merged order.
pub fn write_csv<W: Write>(set: &StreamSet, mut out: W) -> Result<()> {
    writeln!(out, "timestamp_ps,channel")?;
    let res = set.resolution_ps();
    for tag in set.merged() {
        let ps = tag.timestamp.checked_mul(res).ok_or_else(|| Error::Data(format!("timestamp {} overflows ps", tag.timestamp)))?;
        writeln!(out, "{ps},{}", tag.channel)?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_csv(set: &StreamSet, path: impl AsRef<Path>) -> Result<()> {
    write_csv(set, BufWriter::new(File::create(path)?))
}
