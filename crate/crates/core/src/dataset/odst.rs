//! ODST tensor container.
//!
//! Little-endian throughout:
//!
//! ```text
//! header (32 bytes)
//!   magic     "ODST"
//!   version   u32 = 1
//!   count     u64
//!   channels  u32
//!   height    u32
//!   width     u32
//!   reserved  u32 = 0
//! record × count
//!   image     channels × height × width f32, channel-major, row-major
//!   label     height × width f32 (0.0 / 1.0)
//!   crc32     u32 over the image and label bytes of this record
//! ```
//!
//! Values are stored as `f32`; anything finer is rounded on write.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::patches::{Sample, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage, MultiChannelImage};

pub const MAGIC: [u8; 4] = *b"ODST";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OdstHeader {
    pub count: u64,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl OdstHeader {
    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&VERSION.to_le_bytes());
        b[8..16].copy_from_slice(&self.count.to_le_bytes());
        b[16..20].copy_from_slice(&self.channels.to_le_bytes());
        b[20..24].copy_from_slice(&self.height.to_le_bytes());
        b[24..28].copy_from_slice(&self.width.to_le_bytes());
        b
    }

    fn decode(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_LEN {
            return Err(Error::Container {
                offset: b.len() as u64,
                reason: format!("truncated header ({} of {HEADER_LEN} bytes)", b.len()),
            });
        }
        if b[0..4] != MAGIC {
            return Err(Error::Container {
                offset: 0,
                reason: format!("bad magic {:?}", &b[0..4]),
            });
        }
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::Container {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let header = Self {
            count: u64::from_le_bytes(b[8..16].try_into().unwrap()),
            channels: u32_at(16),
            height: u32_at(20),
            width: u32_at(24),
        };
        if u32_at(28) != 0 {
            return Err(Error::Container {
                offset: 28,
                reason: "reserved field is not zero".into(),
            });
        }
        if header.height == 0 || header.width == 0 {
            return Err(Error::Container {
                offset: 20,
                reason: "zero spatial size".into(),
            });
        }
        if header.channels == 0 && header.count > 0 {
            return Err(Error::Container {
                offset: 16,
                reason: "records declared with zero channels".into(),
            });
        }
        Ok(header)
    }

    fn plane_len(&self) -> usize {
        self.height as usize * self.width as usize
    }

    /// Bytes per record including the trailing checksum.
    pub fn record_len(&self) -> usize {
        (self.channels as usize + 1) * self.plane_len() * 4 + 4
    }
}

fn push_plane(buf: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

/// Serialize samples; all must share channel count and size. An empty list
/// gives a header-only file describing 128×128 patches.
pub fn encode_dataset(samples: &[Sample]) -> Result<Vec<u8>> {
    let header = match samples.first() {
        None => OdstHeader {
            count: 0,
            channels: 0,
            height: PATCH_SIZE as u32,
            width: PATCH_SIZE as u32,
        },
        Some(s) => OdstHeader {
            count: samples.len() as u64,
            channels: s.image.channels() as u32,
            height: s.image.height() as u32,
            width: s.image.width() as u32,
        },
    };
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * header.record_len());
    out.extend_from_slice(&header.encode());
    let mut payload = Vec::with_capacity(header.record_len());
    for (i, s) in samples.iter().enumerate() {
        let (c, h, w) = (s.image.channels() as u32, s.image.height() as u32, s.image.width() as u32);
        if (c, h, w) != (header.channels, header.height, header.width)
            || (s.label.width() as u32, s.label.height() as u32) != (w, h)
        {
            return Err(Error::InvalidInput(format!(
                "record {i} is {c}x{h}x{w} (label {}x{}), expected {}x{}x{}",
                s.label.height(),
                s.label.width(),
                header.channels,
                header.height,
                header.width
            )));
        }
        payload.clear();
        for p in s.image.planes() {
            push_plane(&mut payload, p.data().iter().copied());
        }
        push_plane(&mut payload, s.label.data().iter().map(|&v| f64::from(v)));
        let crc = crc32fast::hash(&payload);
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

pub fn write_dataset(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(samples)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_plane(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect()
}

pub fn read_header(bytes: &[u8]) -> Result<OdstHeader> {
    OdstHeader::decode(bytes)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(OdstHeader, Vec<Sample>)> {
    let header = OdstHeader::decode(bytes)?;
    let (w, h) = (header.width as usize, header.height as usize);
    let plane_bytes = header.plane_len() * 4;
    let rec_len = header.record_len();
    let mut samples = Vec::with_capacity(header.count.min(1 << 20) as usize);
    let mut offset = HEADER_LEN;
    for r in 0..header.count {
        let Some(rec) = bytes.get(offset..offset + rec_len) else {
            return Err(Error::Container {
                offset: bytes.len() as u64,
                reason: format!("truncated in record {r} (needs {rec_len} bytes from offset {offset})"),
            });
        };
        let (payload, crc) = rec.split_at(rec_len - 4);
        let stored = u32::from_le_bytes(crc.try_into().unwrap());
        if crc32fast::hash(payload) != stored {
            return Err(Error::Checksum { record: r });
        }
        let planes = payload[..header.channels as usize * plane_bytes]
            .chunks_exact(plane_bytes)
            .map(|p| GrayImage::new(w, h, read_plane(p)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Container {
                offset: offset as u64,
                reason: format!("record {r}: {e}"),
            })?;
        let label_vals = read_plane(&payload[header.channels as usize * plane_bytes..]);
        let label_bytes = label_vals
            .iter()
            .map(|&v| match v {
                0.0 => Ok(0u8),
                1.0 => Ok(1u8),
                other => Err(Error::Container {
                    offset: offset as u64,
                    reason: format!("record {r}: label value {other} is not 0 or 1"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            image: MultiChannelImage::new(planes)?,
            label: BinaryMask::new(w, h, label_bytes)?,
        });
        offset += rec_len;
    }
    if offset != bytes.len() {
        return Err(Error::Container {
            offset: offset as u64,
            reason: format!("{} trailing bytes after the last record", bytes.len() - offset),
        });
    }
    Ok((header, samples))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(decode_dataset(&bytes)?.1)
}
