//! On-disk dataset formats.
//!
//! Binary AVFR (little-endian): magic `AVFR`, u16 version, u32 num_classes,
//! u32 visual_dim, u32 audio_dim, u64 num_records, then per record
//! `[u16 id_len, id, u32 label_count, labels, visual f32s, audio f32s]`,
//! and finally a u32 CRC32 of every preceding byte.
//!
//! A line-oriented JSON text format is also accepted for hand-authored
//! fixtures: one object per line with keys `id`, `labels`, `visual`,
//! `audio`; an optional first line without an `id` key supplies header
//! fields (`num_classes`, `visual_dim`, `audio_dim`).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{AvError, Result};

use super::{Dataset, DatasetHeader, FeatureRecord};

const MAGIC: &[u8; 4] = b"AVFR";
const VERSION: u16 = 1;

// ── Writing ──────────────────────────────────────────────────────────

struct HashingWriter<W: Write> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> HashingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }
}

/// Write a dataset file; records are validated against the header and the
/// header's `num_records` must match the iterator length.
pub fn write_records<'a>(
    header: &DatasetHeader,
    records: impl Iterator<Item = &'a FeatureRecord>,
    path: &Path,
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = HashingWriter {
        inner: BufWriter::new(file),
        hasher: crc32fast::Hasher::new(),
    };
    w.put(MAGIC)?;
    w.put(&VERSION.to_le_bytes())?;
    w.put(&header.num_classes.to_le_bytes())?;
    w.put(&header.visual_dim.to_le_bytes())?;
    w.put(&header.audio_dim.to_le_bytes())?;
    w.put(&header.num_records.to_le_bytes())?;

    let mut written = 0u64;
    for record in records {
        record.validate(header)?;
        if record.id.len() > u16::MAX as usize {
            return Err(AvError::InvalidArgument(format!(
                "record id longer than {} bytes",
                u16::MAX
            )));
        }
        w.put(&(record.id.len() as u16).to_le_bytes())?;
        w.put(record.id.as_bytes())?;
        w.put(&(record.labels.len() as u32).to_le_bytes())?;
        for &label in &record.labels {
            w.put(&label.to_le_bytes())?;
        }
        for &v in &record.visual {
            w.put(&v.to_le_bytes())?;
        }
        for &v in &record.audio {
            w.put(&v.to_le_bytes())?;
        }
        written += 1;
    }
    if written != header.num_records {
        return Err(AvError::InvalidArgument(format!(
            "header claims {} records, wrote {written}",
            header.num_records
        )));
    }
    let crc = w.hasher.finalize();
    w.inner.write_all(&crc.to_le_bytes())?;
    w.inner.flush()?;
    Ok(())
}

// ── Reading ──────────────────────────────────────────────────────────

struct HashingReader<R: Read> {
    inner: R,
    hasher: crc32fast::Hasher,
    offset: u64,
}

impl<R: Read> HashingReader<R> {
    fn take(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                AvError::Format {
                    offset: self.offset,
                    message: "truncated file".into(),
                }
            } else {
                AvError::Io(e)
            }
        })?;
        self.hasher.update(&buf);
        self.offset += n as u64;
        Ok(buf)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Streaming AVFR reader: constant memory in the number of records. Iterate
/// the records, then the trailing CRC is verified as the last item is
/// consumed.
pub struct RecordReader<R: Read> {
    source: HashingReader<R>,
    pub header: DatasetHeader,
    remaining: u64,
    finished: bool,
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        RecordReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> RecordReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut source = HashingReader {
            inner: reader,
            hasher: crc32fast::Hasher::new(),
            offset: 0,
        };
        let magic = source.take(4)?;
        if magic != MAGIC {
            return Err(AvError::Format {
                offset: 0,
                message: format!("bad magic {magic:02x?}, expected \"AVFR\""),
            });
        }
        let version = source.u16()?;
        if version != VERSION {
            return Err(AvError::Format {
                offset: 4,
                message: format!("unsupported version {version}, expected {VERSION}"),
            });
        }
        let header = DatasetHeader {
            num_classes: source.u32()?,
            visual_dim: source.u32()?,
            audio_dim: source.u32()?,
            num_records: source.u64()?,
        };
        Ok(RecordReader {
            remaining: header.num_records,
            source,
            header,
            finished: false,
        })
    }

    fn read_record(&mut self) -> Result<FeatureRecord> {
        let id_len = self.source.u16()? as usize;
        let id_bytes = self.source.take(id_len)?;
        let id = String::from_utf8(id_bytes).map_err(|_| AvError::Format {
            offset: self.source.offset,
            message: "record id is not valid UTF-8".into(),
        })?;
        let label_count = self.source.u32()? as usize;
        let mut labels = Vec::with_capacity(label_count);
        for _ in 0..label_count {
            labels.push(self.source.u32()?);
        }
        let visual = self.source.f32s(self.header.visual_dim as usize)?;
        let audio = self.source.f32s(self.header.audio_dim as usize)?;
        let record = FeatureRecord {
            id,
            labels,
            visual,
            audio,
        };
        record.validate(&self.header)?;
        Ok(record)
    }

    /// Read the trailing checksum and compare against the running hash.
    fn verify_crc(&mut self) -> Result<()> {
        self.finished = true;
        let computed = self.source.hasher.clone().finalize();
        let crc_offset = self.source.offset;
        let mut buf = [0u8; 4];
        self.source.inner.read_exact(&mut buf).map_err(|_| AvError::Format {
            offset: crc_offset,
            message: "truncated file: missing trailing CRC32".into(),
        })?;
        let stored = u32::from_le_bytes(buf);
        if stored != computed {
            return Err(AvError::Format {
                offset: crc_offset,
                message: format!("CRC32 mismatch: stored {stored:#010x}, computed {computed:#010x}"),
            });
        }
        Ok(())
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<FeatureRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if self.remaining == 0 {
            return match self.verify_crc() {
                Ok(()) => None,
                Err(e) => Some(Err(e)),
            };
        }
        self.remaining -= 1;
        let record = self.read_record();
        if record.is_err() {
            self.finished = true;
        }
        Some(record)
    }
}

/// Load a dataset, sniffing AVFR binary vs line-oriented JSON text.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut probe = [0u8; 4];
    let n = File::open(path)?.read(&mut probe)?;
    if n == 4 && &probe == MAGIC {
        let mut reader = RecordReader::open(path)?;
        let header = reader.header;
        let records: Vec<FeatureRecord> = reader.by_ref().collect::<Result<_>>()?;
        Dataset::new(header, records)
    } else {
        read_jsonl(path)
    }
}

fn json_f32s(value: &serde_json::Value, key: &str, line: usize) -> Result<Vec<f32>> {
    value
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| AvError::Format {
            offset: line as u64,
            message: format!("line {line}: missing array field \"{key}\""),
        })?
        .iter()
        .map(|v| {
            v.as_f64().map(|f| f as f32).ok_or_else(|| AvError::Format {
                offset: line as u64,
                message: format!("line {line}: non-numeric entry in \"{key}\""),
            })
        })
        .collect()
}

/// Hand-authored fixture reader: one JSON record per line. Offsets in
/// errors are line numbers rather than byte positions.
fn read_jsonl(path: &Path) -> Result<Dataset> {
    let file = BufReader::new(File::open(path)?);
    let mut records: Vec<FeatureRecord> = Vec::new();
    let mut explicit: Option<(u32, Option<u32>, Option<u32>)> = None;
    for (idx, line) in file.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| AvError::Format {
                offset: line_no as u64,
                message: format!("line {line_no}: invalid JSON: {e}"),
            })?;
        if value.get("id").is_none() {
            // header line
            let classes = value
                .get("num_classes")
                .and_then(|v| v.as_u64())
                .ok_or_else(|| AvError::Format {
                    offset: line_no as u64,
                    message: format!("line {line_no}: header line needs num_classes"),
                })?;
            explicit = Some((
                classes as u32,
                value.get("visual_dim").and_then(|v| v.as_u64()).map(|v| v as u32),
                value.get("audio_dim").and_then(|v| v.as_u64()).map(|v| v as u32),
            ));
            continue;
        }
        let id = value.get("id").and_then(|v| v.as_str()).ok_or_else(|| AvError::Format {
            offset: line_no as u64,
            message: format!("line {line_no}: \"id\" must be a string"),
        })?;
        let labels: Vec<u32> = value
            .get("labels")
            .and_then(|v| v.as_array())
            .map(|a| a.iter().filter_map(|v| v.as_u64()).map(|v| v as u32).collect())
            .unwrap_or_default();
        records.push(FeatureRecord {
            id: id.to_string(),
            labels,
            visual: json_f32s(&value, "visual", line_no)?,
            audio: json_f32s(&value, "audio", line_no)?,
        });
    }
    let first = records.first().ok_or_else(|| AvError::Format {
        offset: 0,
        message: "text dataset has no records".into(),
    })?;
    let inferred_classes = records
        .iter()
        .flat_map(|r| r.labels.iter())
        .max()
        .map(|&m| m + 1)
        .unwrap_or(1);
    let (num_classes, visual_dim, audio_dim) = match explicit {
        Some((c, v, a)) => (
            c,
            v.unwrap_or(first.visual.len() as u32),
            a.unwrap_or(first.audio.len() as u32),
        ),
        None => (inferred_classes, first.visual.len() as u32, first.audio.len() as u32),
    };
    let header = DatasetHeader {
        num_classes,
        visual_dim,
        audio_dim,
        num_records: records.len() as u64,
    };
    Dataset::new(header, records)
}
