//! Netpbm grayscale images: binary P5 and ASCII P2, maxval at most 255.

use std::path::Path;

use randman_core::data::ImageGrid;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Binary,
    Ascii,
}

fn bad(offset: usize, msg: &str) -> CliError {
    CliError::input(format!("pgm: byte {offset}: {msg}"))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> CliResult<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(bad(start, &format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(start, &format!("{what} is out of range")))
    }
}

pub fn decode(bytes: &[u8]) -> CliResult<ImageGrid> {
    let format = match bytes.get(..2) {
        Some(b"P5") => PgmFormat::Binary,
        Some(b"P2") => PgmFormat::Ascii,
        _ => return Err(bad(0, "missing P5 or P2 magic number")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let max_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(bad(max_at, "image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad(max_at, &format!("maxval {maxval} outside 1..=255")));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| bad(max_at, "image dimensions overflow"))?;
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    match format {
        PgmFormat::Binary => {
            // Exactly one whitespace byte separates the header from the raster.
            if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
                return Err(bad(cur.pos, "expected whitespace before raster"));
            }
            let start = cur.pos + 1;
            let raster = bytes.get(start..start + count).ok_or_else(|| {
                bad(
                    bytes.len(),
                    &format!("raster truncated: need {count} bytes after offset {start}"),
                )
            })?;
            for (i, &v) in raster.iter().enumerate() {
                if v as usize > maxval {
                    return Err(bad(
                        start + i,
                        &format!("sample {v} exceeds maxval {maxval}"),
                    ));
                }
                pixels.push(v as f64 / scale);
            }
        }
        PgmFormat::Ascii => {
            for _ in 0..count {
                let at = {
                    cur.skip_space();
                    cur.pos
                };
                let v = cur.number("pixel value")?;
                if v > maxval {
                    return Err(bad(at, &format!("sample {v} exceeds maxval {maxval}")));
                }
                pixels.push(v as f64 / scale);
            }
        }
    }
    Ok(ImageGrid::new(width, height, pixels)?)
}

/// Intensities scaled by 255 and rounded half up.
pub fn encode(img: &ImageGrid, format: PgmFormat) -> Vec<u8> {
    let quant = |v: f64| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8;
    let (w, h) = (img.width(), img.height());
    match format {
        PgmFormat::Binary => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend(img.pixels().iter().map(|&v| quant(v)));
            out
        }
        PgmFormat::Ascii => {
            let mut out = format!("P2\n{w} {h}\n255\n");
            for row in img.pixels().chunks(w) {
                let line: Vec<String> = row.iter().map(|&v| quant(v).to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

pub fn read(path: &Path) -> CliResult<ImageGrid> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, img: &ImageGrid, format: PgmFormat) -> CliResult<()> {
    std::fs::write(path, encode(img, format)).map_err(|e| CliError::io(path, e))
}
