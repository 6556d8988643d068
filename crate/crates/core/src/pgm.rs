//! Portable graymap (P2 ASCII / P5 binary) reading and writing.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major, top row first.
    pub pixels: Vec<u16>,
}

impl GrayImage {
    /// Pixel values scaled to `[0, 1]`.
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.maxval as f64;
        self.pixels.iter().map(|&p| p as f64 / m).collect()
    }
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("PGM", "unexpected end of data"));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .map_err(|_| Error::format("PGM", "non-ASCII header"))
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| Error::format("PGM", format!("bad number {t:?}")))
    }
}

pub fn decode(data: &[u8]) -> Result<GrayImage> {
    let mut h = Header { data, pos: 0 };
    let magic = h.token()?.to_owned();
    let width = h.number()?;
    let height = h.number()?;
    let maxval = h.number()?;
    if width == 0 || height == 0 {
        return Err(Error::format("PGM", "zero-sized image"));
    }
    if maxval == 0 || maxval > 65_535 {
        return Err(Error::format(
            "PGM",
            format!("maxval {maxval} out of range"),
        ));
    }
    let n = width * height;
    let pixels = match magic.as_str() {
        "P2" => {
            let mut px = Vec::with_capacity(n);
            for _ in 0..n {
                let v = h.number()?;
                if v > maxval {
                    return Err(Error::format("PGM", format!("sample {v} exceeds maxval")));
                }
                px.push(v as u16);
            }
            px
        }
        "P5" => {
            // exactly one whitespace byte separates header and raster
            let start = h.pos + 1;
            let bytes_per = if maxval < 256 { 1 } else { 2 };
            let raster = data
                .get(start..start + n * bytes_per)
                .ok_or_else(|| Error::format("PGM", "truncated raster"))?;
            if bytes_per == 1 {
                raster.iter().map(|&b| b as u16).collect()
            } else {
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect()
            }
        }
        other => return Err(Error::format("PGM", format!("unsupported magic {other:?}"))),
    };
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn encode_p5(width: usize, height: usize, maxval: u16, pixels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(pixels.iter().map(|&p| p as u8));
    } else {
        for p in pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixteen_bit_roundtrip() {
        let px: Vec<u16> = (0..12).map(|i| i * 5000).collect();
        let data = encode_p5(4, 3, 60_000, &px);
        let img = decode(&data).unwrap();
        assert_eq!(img.pixels, px);
        assert_eq!(img.maxval, 60_000);
    }

    #[test]
    fn comments_and_errors() {
        let img = decode(b"P2\n# made by hand\n2 1\n# max\n9\n0 9\n").unwrap();
        assert_eq!(img.normalized(), vec![0.0, 1.0]);
        assert!(decode(b"P2\n2 1\n9\n0 10\n").is_err());
        assert!(decode(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
    }
}
