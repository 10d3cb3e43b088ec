//! Binary map files: a shared little-endian header (`"SKFM"`, version,
//! dtype code, H, W, D) followed by row-major values. Dtype 0 holds f32
//! feature maps, 1 holds f32 depth (invalid depth written as 0.0), 2
//! holds u8 masks.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::features::types::{DepthMap, FeatureMap, Mask};

pub const MAP_MAGIC: [u8; 4] = *b"SKFM";
pub const MAP_VERSION: u16 = 1;

pub const DTYPE_FEATURES: u8 = 0;
pub const DTYPE_DEPTH: u8 = 1;
pub const DTYPE_MASK: u8 = 2;

const MAX_ELEMENTS: u64 = 1 << 31;

fn write_header<W: Write>(w: &mut W, dtype: u8, h: u32, wd: u32, d: u32) -> Result<()> {
    w.write_all(&MAP_MAGIC)?;
    w.write_all(&MAP_VERSION.to_le_bytes())?;
    w.write_all(&[dtype])?;
    w.write_all(&h.to_le_bytes())?;
    w.write_all(&wd.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, expect_dtype: u8) -> Result<(usize, usize, usize)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAP_MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {magic:02x?}")));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != MAP_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}, expected {MAP_VERSION}"
        )));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    if dtype[0] != expect_dtype {
        return Err(Error::MalformedHeader(format!(
            "dtype code {} where {expect_dtype} was expected",
            dtype[0]
        )));
    }
    let mut buf4 = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut buf4)?;
        *d = u32::from_le_bytes(buf4) as usize;
    }
    let [h, w, d] = dims;
    if h == 0 || w == 0 || d == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension in header ({h}x{w}x{d})"
        )));
    }
    if (h as u64) * (w as u64) * (d as u64) > MAX_ELEMENTS {
        return Err(Error::MalformedHeader(format!(
            "implausible element count {h}x{w}x{d}"
        )));
    }
    Ok((h, w, d))
}

fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut byte = [0u8; 1];
    match r.read(&mut byte)? {
        0 => Ok(()),
        _ => Err(Error::MalformedHeader("trailing bytes after payload".into())),
    }
}

pub fn write_feature_map_to<W: Write>(w: &mut W, map: &FeatureMap) -> Result<()> {
    let (h, wd, d) = map.values().dim();
    write_header(w, DTYPE_FEATURES, h as u32, wd as u32, d as u32)?;
    for v in map.values().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_feature_map_from<R: Read>(r: &mut R) -> Result<FeatureMap> {
    let (h, w, d) = read_header(r, DTYPE_FEATURES)?;
    let mut buf = [0u8; 4];
    let mut values = Vec::with_capacity(h * w * d);
    for _ in 0..h * w * d {
        r.read_exact(&mut buf)?;
        values.push(f32::from_le_bytes(buf));
    }
    expect_eof(r)?;
    let arr = Array3::from_shape_vec((h, w, d), values)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    FeatureMap::new(arr)
}

pub fn write_depth_map_to<W: Write>(w: &mut W, map: &DepthMap) -> Result<()> {
    let (h, wd) = map.values().dim();
    write_header(w, DTYPE_DEPTH, h as u32, wd as u32, 1)?;
    for hh in 0..h {
        for ww in 0..wd {
            let v = if map.is_valid(hh, ww) { map.values()[[hh, ww]] } else { 0.0 };
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_depth_map_from<R: Read>(r: &mut R) -> Result<DepthMap> {
    let (h, w, d) = read_header(r, DTYPE_DEPTH)?;
    if d != 1 {
        return Err(Error::MalformedHeader(format!("depth map with D={d}")));
    }
    let mut buf = [0u8; 4];
    let mut values = Vec::with_capacity(h * w);
    for _ in 0..h * w {
        r.read_exact(&mut buf)?;
        values.push(f32::from_le_bytes(buf));
    }
    expect_eof(r)?;
    let arr = Array2::from_shape_vec((h, w), values)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(DepthMap::from_raw(arr))
}

pub fn write_mask_to<W: Write>(w: &mut W, mask: &Mask) -> Result<()> {
    let (h, wd) = mask.values().dim();
    write_header(w, DTYPE_MASK, h as u32, wd as u32, 1)?;
    for v in mask.values().iter() {
        w.write_all(&[u8::from(*v)])?;
    }
    Ok(())
}

pub fn read_mask_from<R: Read>(r: &mut R) -> Result<Mask> {
    let (h, w, d) = read_header(r, DTYPE_MASK)?;
    if d != 1 {
        return Err(Error::MalformedHeader(format!("mask with D={d}")));
    }
    let mut bytes = vec![0u8; h * w];
    r.read_exact(&mut bytes)?;
    expect_eof(r)?;
    let mut values = Vec::with_capacity(h * w);
    for b in bytes {
        match b {
            0 => values.push(false),
            1 => values.push(true),
            other => {
                return Err(Error::MalformedHeader(format!(
                    "mask byte {other} is not 0 or 1"
                )))
            }
        }
    }
    let arr = Array2::from_shape_vec((h, w), values)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(Mask::new(arr))
}

pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_feature_map_to(&mut f, map)?;
    f.flush()?;
    Ok(())
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap> {
    read_feature_map_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_depth_map(path: &Path, map: &DepthMap) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_depth_map_to(&mut f, map)?;
    f.flush()?;
    Ok(())
}

pub fn read_depth_map(path: &Path) -> Result<DepthMap> {
    read_depth_map_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_mask_to(&mut f, mask)?;
    f.flush()?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Mask> {
    read_mask_from(&mut BufReader::new(File::open(path)?))
}
