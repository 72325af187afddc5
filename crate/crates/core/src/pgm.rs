//! Binary greyscale PGM (P5, maxval 255).

use std::path::Path;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(CoreError::InvalidInput(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: &str| CoreError::Format {
            what: "PGM",
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary PGM"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
        if data.len() != width * height {
            return Err(bad(&format!("expected {} raster bytes, found {}", width * height, data.len())));
        }
        Ok(Self {
            width,
            height,
            pixels: data.to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::decode(&bytes, path)
    }
}
