//! Binary PPM (P6, maxval 255) for RGB frames. The synthetic renderer only
//! emits colors on the 8-bit grid, so dataset round-trips are bitwise.

use std::fs;
use std::path::Path;

use mirrordepth_core::depth::ImageBuf;

use crate::error::{io_err, parse_err, Result};

pub fn write_ppm(img: &ImageBuf, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(32 + 3 * img.width * img.height);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", img.width, img.height).as_bytes());
    for row in 0..img.height {
        for col in 0..img.width {
            let px = img.pixel(row, col);
            for ch in px {
                out.push((ch.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_ppm(path: &Path) -> Result<ImageBuf> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<(usize, Vec<u8>)> {
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
        let tok = bytes[start..pos].to_vec();
        pos += 1; // single whitespace after the token
        Ok((start, tok))
    };
    let (off, magic) = token("magic")?;
    if magic != b"P6" {
        return Err(parse_err(path, off as u64, "bad magic, expected 'P6'"));
    }
    let parse_dim = |what: &str, off: usize, tok: &[u8]| -> Result<usize> {
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| parse_err(path, off as u64, format!("invalid {what}")))
    };
    let (off_w, w) = token("width")?;
    let width = parse_dim("width", off_w, &w)?;
    let (off_h, h) = token("height")?;
    let height = parse_dim("height", off_h, &h)?;
    let (off_m, m) = token("maxval")?;
    if m != b"255" {
        return Err(parse_err(path, off_m as u64, "only maxval 255 is supported"));
    }
    let need = 3 * width * height;
    let payload = bytes.get(pos..pos + need).ok_or_else(|| {
        parse_err(
            path,
            bytes.len() as u64,
            format!("truncated payload: need {need} bytes from offset {pos}"),
        )
    })?;
    let mut img = ImageBuf::zeros(height, width);
    for (i, px) in payload.chunks_exact(3).enumerate() {
        let (row, col) = (i / width, i % width);
        img.set_pixel(
            row,
            col,
            [
                px[0] as f32 / 255.0,
                px[1] as f32 / 255.0,
                px[2] as f32 / 255.0,
            ],
        );
    }
    Ok(img)
}
