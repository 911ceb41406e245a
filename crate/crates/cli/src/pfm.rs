//! Grayscale portable float maps.
//!
//! Writer emits exactly `Pf\n<width> <height>\n-1.0\n` followed by rows
//! bottom-to-top as little-endian f32 (the negative scale declares little
//! endianness). The reader also accepts positive scales (big-endian payload)
//! and byte-swaps. Only the sign of the scale is interpreted.

use std::fs;
use std::path::Path;

use mirrordepth_core::depth::DepthMap;

use crate::error::{io_err, parse_err, CliError, Result};

pub fn write_pfm(map: &DepthMap, path: &Path) -> Result<()> {
    if map.mask.iter().any(|&m| !m) {
        return Err(CliError::Config(
            "write_pfm requires a fully valid depth map".into(),
        ));
    }
    if map.data.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(CliError::Config(
            "write_pfm requires positive finite values".into(),
        ));
    }
    let mut out = Vec::with_capacity(64 + 4 * map.data.len());
    out.extend_from_slice(format!("Pf\n{} {}\n-1.0\n", map.width, map.height).as_bytes());
    for row in (0..map.height).rev() {
        for col in 0..map.width {
            out.extend_from_slice(&map.at(row, col).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(io_err(path));
    parse_pfm(&bytes?, path)
}

fn parse_pfm(bytes: &[u8], path: &Path) -> Result<DepthMap> {
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(usize, &[u8])> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err(path, start as u64, format!("missing {what}")));
        }
        let tok = &bytes[start..pos];
        // exactly one whitespace byte terminates the header scale
        pos += 1;
        Ok((start, tok))
    };

    let (off, magic) = token("magic")?;
    match magic {
        b"Pf" => {}
        b"PF" => {
            return Err(parse_err(path, off as u64, "color PFM is not supported"));
        }
        _ => return Err(parse_err(path, off as u64, "bad magic, expected 'Pf'")),
    }
    let (off, w) = token("width")?;
    let width: usize = std::str::from_utf8(w)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| parse_err(path, off as u64, "invalid width"))?;
    let (off, h) = token("height")?;
    let height: usize = std::str::from_utf8(h)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| parse_err(path, off as u64, "invalid height"))?;
    let (off, s) = token("scale")?;
    let scale: f64 = std::str::from_utf8(s)
        .ok()
        .and_then(|st| st.parse().ok())
        .filter(|v: &f64| *v != 0.0)
        .ok_or_else(|| parse_err(path, off as u64, "invalid scale"))?;
    let little_endian = scale < 0.0;

    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| parse_err(path, off as u64, "dimensions overflow"))?;
    let payload = bytes
        .get(pos..pos + need)
        .ok_or_else(|| {
            parse_err(
                path,
                bytes.len() as u64,
                format!("truncated payload: need {need} bytes from offset {pos}"),
            )
        })?;

    let mut data = vec![0.0f32; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        // rows are stored bottom-to-top
        let row = height - 1 - i / width;
        let col = i % width;
        data[row * width + col] = v;
    }
    Ok(DepthMap::from_data(height, width, data))
}
