//! Frames as binary PGM or raw float grids, deformations as text.

use std::fs;
use std::path::{Path, PathBuf};

use super::deformation::RigidDeformation;
use super::image::{side_for, GridImage, MAX_LEVEL};
use super::RegError;

pub const RAW_MAGIC: [u8; 4] = *b"SFGR";
const RAW_HEADER: usize = 16;

fn io_err(path: &Path, e: impl std::fmt::Display) -> RegError {
    RegError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn level_for_side(side: usize) -> Option<u32> {
    (0..=MAX_LEVEL).find(|&l| side_for(l) == side)
}

/// Binary PGM with `maxval` 255 or 65535. Values are scaled linearly from
/// the image's range onto `[0, maxval]`.
pub fn encode_pgm(f: &GridImage, maxval: u16) -> Result<Vec<u8>, RegError> {
    if maxval != 255 && maxval != 65535 {
        return Err(RegError::Format(format!("unsupported maxval {maxval}")));
    }
    let (lo, hi) = f
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scale = if hi > lo { maxval as f64 / (hi - lo) } else { 0.0 };
    let side = f.side();
    let mut out = format!("P5\n{side} {side}\n{maxval}\n").into_bytes();
    for &v in f.values() {
        let q = ((v - lo) * scale).round().clamp(0.0, maxval as f64) as u16;
        if maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

/// Reads a square binary PGM whose side is `2^l + 1`; values come back in
/// `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<GridImage, RegError> {
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(RegError::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(RegError::Format(format!("not a binary PGM (magic {:?})", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| RegError::Format(format!("bad PGM header field {s:?}")))
    };
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if w != h {
        return Err(RegError::Format(format!("PGM is {w}x{h}, expected a square")));
    }
    let level = level_for_side(w).ok_or_else(|| RegError::Format(format!("side {w} is not 2^l+1")))?;
    if maxval == 0 || maxval > 65535 {
        return Err(RegError::Format(format!("bad maxval {maxval}")));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() < w * h * bpp {
        return Err(RegError::Format("truncated PGM pixel data".into()));
    }
    let values = (0..w * h)
        .map(|k| {
            let q = if bpp == 1 {
                data[k] as f64
            } else {
                u16::from_be_bytes([data[2 * k], data[2 * k + 1]]) as f64
            };
            q / maxval as f64
        })
        .collect();
    GridImage::new(level, values)
}

/// 16-byte header (`SFGR`, level as little-endian u32, 8 zero bytes) then
/// little-endian f32 values.
pub fn encode_raw(f: &GridImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER + 4 * f.values().len());
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&f.level().to_le_bytes());
    out.extend_from_slice(&[0; 8]);
    for &v in f.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<GridImage, RegError> {
    if bytes.len() < RAW_HEADER || bytes[..4] != RAW_MAGIC {
        return Err(RegError::Format("missing raw grid header".into()));
    }
    let level = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if level > MAX_LEVEL {
        return Err(RegError::InvalidLevel(level));
    }
    let n = side_for(level).pow(2);
    let body = &bytes[RAW_HEADER..];
    if body.len() != 4 * n {
        return Err(RegError::Format(format!(
            "raw grid of level {level} needs {} bytes, found {}",
            4 * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    GridImage::new(level, values)
}

/// Picks the format from the extension: `.pgm` or anything else as raw.
pub fn read_frame(path: &Path) -> Result<GridImage, RegError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let res = if is_pgm { decode_pgm(&bytes) } else { decode_raw(&bytes) };
    res.map_err(|e| io_err(path, e))
}

pub fn write_frame(path: &Path, f: &GridImage) -> Result<(), RegError> {
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm { encode_pgm(f, 65535)? } else { encode_raw(f) };
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn format_deformations(phis: &[RigidDeformation]) -> String {
    phis.iter()
        .map(|p| format!("{:e} {:e} {:e}\n", p.alpha, p.t[0], p.t[1]))
        .collect()
}

/// One `alpha t0 t1` per line; blank lines and `#` comments are skipped.
pub fn parse_deformations(text: &str) -> Result<Vec<RigidDeformation>, RegError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(no, l)| {
            let nums: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| RegError::Format(format!("line {}: {e}", no + 1)))?;
            match nums[..] {
                [a, t0, t1] if nums.iter().all(|v| v.is_finite()) => Ok(RigidDeformation::new(a, t0, t1)),
                _ => Err(RegError::Format(format!("line {}: expected `alpha t0 t1`", no + 1))),
            }
        })
        .collect()
}

/// Frame paths, one per line, relative to the manifest's directory.
pub fn parse_manifest(text: &str, base: &Path) -> Vec<PathBuf> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<GridImage>, RegError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).iter().map(|p| read_frame(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip() {
        let f = GridImage::from_fn(3, |x, y| x - 2.0 * y);
        let g = decode_raw(&encode_raw(&f)).unwrap();
        assert_eq!(g.level(), 3);
        for (a, b) in f.values().iter().zip(g.values()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        assert!(decode_raw(b"XXXX").is_err());
    }

    #[test]
    fn pgm_round_trip_both_depths() {
        let f = GridImage::from_fn(2, |x, y| x + y);
        for maxval in [255u16, 65535] {
            let g = decode_pgm(&encode_pgm(&f, maxval).unwrap()).unwrap();
            for (a, b) in f.values().iter().zip(g.values()) {
                assert!((a / 2.0 - b).abs() <= 0.5 / maxval as f64 + 1e-12);
            }
        }
        let with_comment = b"P5\n# hi\n3 3\n255\n\x00\x01\x02\x03\x04\x05\x06\x07\xff";
        assert_eq!(decode_pgm(with_comment).unwrap().at(2, 2), 1.0);
        assert!(decode_pgm(b"P5\n4 4\n255\n").is_err());
    }

    #[test]
    fn deformation_text() {
        let phis = vec![RigidDeformation::new(4.18e-4, -4.5e-4, -4.9e-3), RigidDeformation::IDENTITY];
        assert_eq!(parse_deformations(&format_deformations(&phis)).unwrap(), phis);
        assert!(parse_deformations("1 2\n").is_err());
        assert_eq!(parse_deformations("# c\n\n0 0 0\n").unwrap().len(), 1);
    }
}
