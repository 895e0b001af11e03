//! 8-bit PGM (`P5` binary and `P2` ASCII) images.

use std::fs;
use std::path::Path;

use crate::tensorcore::FeatureMap;
use crate::{Error, Result};

/// Writes `values` (row-major, in `[0, 1]`, clamped) as binary PGM.
pub fn write_pgm(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
    values: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    if values.len() != height * width {
        return Err(Error::shape(format!("{height}x{width}"), values.len()));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Min-max normalized preview of one channel.
pub fn write_preview(path: impl AsRef<Path>, f: &FeatureMap, channel: usize) -> Result<()> {
    let plane = f.channel(channel);
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let scaled: Vec<f64> = plane.iter().map(|v| (v - lo) / span).collect();
    write_pgm(path, f.height(), f.width(), &scaled)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<FeatureMap> {
    let bad = |m: &str| Error::Format(format!("PGM: {m}"));
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let mut num = || -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| bad("non-numeric header field"))
    };
    let width = num()?;
    let height = num()?;
    let maxval = num()?;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let n = width * height;
    let data: Vec<f64> = match magic.as_str() {
        "P5" => {
            // Exactly one whitespace byte separates the header from the raster.
            let start = pos + 1;
            let raster = bytes
                .get(start..start + n)
                .ok_or_else(|| bad("truncated raster"))?;
            raster.iter().map(|&b| b as f64 / maxval as f64).collect()
        }
        "P2" => (0..n)
            .map(|_| num().map(|v| v as f64 / maxval as f64))
            .collect::<Result<_>>()?,
        _ => return Err(bad("expected P5 or P2 magic")),
    };
    FeatureMap::new(1, height, width, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    decode_pgm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
