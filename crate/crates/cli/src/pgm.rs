//! Binary PGM (P5): ASCII dimensions, maxval 255, a single whitespace byte,
//! then the row-major payload. The writer emits exactly that shape; the
//! reader accepts any whitespace runs between header tokens.

use std::fs;
use std::path::Path;

use dataforge_core::dataset::GrayImage;

use crate::{Error, Result};

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend_from_slice(img.pixels());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|msg| Error::format(path, msg))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err("malformed header: expected an ASCII integer".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| "header field overflows".to_string())?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported; expected 255"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err("missing whitespace before payload".into());
    }
    pos += 1;
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| "dimensions overflow".to_string())?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(format!(
            "payload truncated: {} bytes for {width}x{height}",
            payload.len()
        ));
    }
    if payload.len() > expected {
        return Err(format!(
            "trailing bytes after payload: {} extra",
            payload.len() - expected
        ));
    }
    GrayImage::new(width, height, payload.to_vec()).map_err(|e| e.to_string())
}
