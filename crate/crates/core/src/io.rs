//! SGRID binary format plus PNG/PGM ingestion and PNG mask export.
//!
//! SGRID layout (little-endian throughout):
//!
//! ```text
//! "SGRD" | version u8 = 1 | rank u8 (2|3) | dtype u8 (1 = f32, 2 = u8)
//! dims: rank x u32, slowest axis first
//! spacing: rank x f32
//! payload: row-major samples
//! ```

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, ScalarGrid, Shape};

pub const SGRID_MAGIC: &[u8; 4] = b"SGRD";
pub const SGRID_VERSION: u8 = 0x01;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0x01,
    U8 = 0x02,
}

fn header(dims: &[usize], spacing: &[f64], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + dims.len() * 8);
    out.extend_from_slice(SGRID_MAGIC);
    out.push(SGRID_VERSION);
    out.push(dims.len() as u8);
    out.push(dtype as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &s in spacing {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}

/// Serialize a grid. With [`Dtype::U8`] values are rounded and clamped to 0..=255.
pub fn encode_sgrid(grid: &ScalarGrid, dtype: Dtype) -> Vec<u8> {
    let mut out = header(grid.dims(), grid.spacing(), dtype);
    match dtype {
        Dtype::F32 => {
            out.reserve(grid.len() * 4);
            for &v in grid.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::U8 => out.extend(grid.data().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8)),
    }
    out
}

/// Serialize a mask as u8 0/1.
pub fn encode_mask_sgrid(mask: &BinaryMask, spacing: &[f64]) -> Vec<u8> {
    let mut out = header(mask.dims(), spacing, Dtype::U8);
    out.extend(mask.data().iter().map(|&b| b as u8));
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated SGRID: need {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parsed SGRID plus the dtype it was stored with.
pub fn decode_sgrid_typed(bytes: &[u8]) -> Result<(ScalarGrid, Dtype)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).ok() != Some(SGRID_MAGIC.as_slice()) {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u8()?;
    if version != SGRID_VERSION {
        return Err(Error::Format(format!("unsupported SGRID version {version}")));
    }
    let rank = r.u8()? as usize;
    if rank != 2 && rank != 3 {
        return Err(Error::Format(format!("unsupported rank {rank}")));
    }
    let dtype = match r.u8()? {
        0x01 => Dtype::F32,
        0x02 => Dtype::U8,
        other => return Err(Error::Format(format!("unknown dtype 0x{other:02x}"))),
    };
    let dims = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let spacing = (0..rank)
        .map(|_| r.f32().map(f64::from))
        .collect::<Result<Vec<_>>>()?;
    let shape = Shape::new(&dims).map_err(|e| Error::Format(e.to_string()))?;
    let n = shape.len();
    let data = match dtype {
        Dtype::F32 => r
            .take(n.checked_mul(4).ok_or_else(|| Error::Format("dims overflow".into()))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::U8 => r.take(n)?.iter().map(|&b| b as f64).collect(),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - r.pos
        )));
    }
    let grid = ScalarGrid::from_shape(shape, &spacing, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((grid, dtype))
}

pub fn decode_sgrid(bytes: &[u8]) -> Result<ScalarGrid> {
    decode_sgrid_typed(bytes).map(|(g, _)| g)
}

/// Decode SGRID, PNG or PGM by sniffing the leading bytes.
pub fn decode_image_bytes(bytes: &[u8]) -> Result<ScalarGrid> {
    if bytes.starts_with(SGRID_MAGIC) {
        return decode_sgrid(bytes);
    }
    let format = if bytes.starts_with(b"\x89PNG") {
        ImageFormat::Png
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        ImageFormat::Pnm
    } else {
        return Err(Error::Format("bad magic: expected SGRID, PNG or PGM".into()));
    };
    let img = image::load(Cursor::new(bytes), format)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA16(_) | DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            img.to_luma16().into_raw().into_iter().map(f64::from).collect()
        }
        other => other.to_luma8().into_raw().into_iter().map(f64::from).collect(),
    };
    ScalarGrid::new(&[h, w], &[1.0, 1.0], data)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    decode_image_bytes(&fs::read(path)?)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &ScalarGrid, dtype: Dtype) -> Result<()> {
    Ok(fs::write(path, encode_sgrid(grid, dtype))?)
}

/// Load a mask; any nonzero sample is foreground.
pub fn read_mask(path: impl AsRef<Path>) -> Result<(BinaryMask, Vec<f64>)> {
    let g = read_grid(path)?;
    let mask = BinaryMask::from_shape(*g.shape(), g.data().iter().map(|&v| v != 0.0).collect())?;
    Ok((mask, g.spacing().to_vec()))
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask, spacing: &[f64]) -> Result<()> {
    Ok(fs::write(path, encode_mask_sgrid(mask, spacing))?)
}

/// 8-bit PNG of a 2D mask (or one axial slice of a 3D mask), 0 / 255.
pub fn encode_mask_png(mask: &BinaryMask, slice: Option<usize>) -> Result<Vec<u8>> {
    let e = mask.shape().ext3();
    let z = match (mask.shape().rank(), slice) {
        (2, _) => 0,
        (3, Some(z)) if z < e[0] => z,
        (3, Some(z)) => {
            return Err(Error::OutOfBounds(format!("slice {z} outside depth {}", e[0])));
        }
        _ => return Err(Error::Parameter("slice index required for 3D mask".into())),
    };
    let plane = e[1] * e[2];
    let px: Vec<u8> = mask.data()[z * plane..(z + 1) * plane]
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    let img = image::GrayImage::from_raw(e[2] as u32, e[1] as u32, px)
        .ok_or_else(|| Error::Format("png buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}
