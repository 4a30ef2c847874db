//! Float images and binary PPM/PGM I/O.
//!
//! Quantization is linear (no sRGB curve): `round(255 * clamp(v, 0, 1))`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorlab::{write_atomic, Tensor};

/// Row-major `H x W x C` image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape {
                op: "image",
                lhs: vec![height, width, channels],
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width, self.channels], self.data.clone()).expect("image shape")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w, c] => Self::new(w, h, c, t.data().to_vec()),
            [h, w] => Self::new(w, h, 1, t.data().to_vec()),
            _ => Err(Error::InvalidArgument(format!("tensor of shape {:?} is not an image", t.shape()))),
        }
    }

    pub fn shape_matches(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn quantized(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, channels, bytes.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    /// Binary PPM (3 channels) or PGM (1 channel), chosen by channel count.
    pub fn encode_pnm(&self) -> Result<Vec<u8>> {
        let magic = match self.channels {
            3 => "P6",
            1 => "P5",
            c => return Err(Error::InvalidArgument(format!("cannot encode {c}-channel image as PNM"))),
        };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.quantized());
        Ok(out)
    }

    pub fn decode_pnm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
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
                return Err(Error::Format("truncated PNM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let channels = match tokens[0].as_str() {
            "P6" => 3,
            "P5" => 1,
            m => return Err(Error::Format(format!("unsupported PNM magic `{m}`"))),
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PNM header value `{s}`")));
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported maxval {maxval}")));
        }
        let n = w * h * channels;
        let raster = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format("truncated PNM raster".into()))?;
        Self::from_bytes(w, h, channels, raster)
    }

    pub fn save_pnm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode_pnm()?)
    }

    pub fn load_pnm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pnm(&bytes).map_err(|e| match e {
            Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    /// Values rounded through 8-bit quantization, as a saved file would hold.
    pub fn requantized(&self) -> Self {
        Self::from_bytes(self.width, self.height, self.channels, &self.quantized()).expect("same shape")
    }
}

pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_quantization() {
        let img = Image::new(2, 1, 3, vec![0.0, 0.5, 1.0, 1.5, -0.2, 0.25]).unwrap();
        let bytes = img.encode_pnm().unwrap();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255, 255, 0, 64]);
        let back = Image::decode_pnm(&bytes).unwrap();
        assert_eq!(back.quantized(), img.quantized());
    }

    #[test]
    fn pgm_roundtrip_with_comment() {
        let bytes = b"P5\n# mask\n3 1\n255\n\x00\xff\x00";
        let img = Image::decode_pnm(bytes).unwrap();
        assert_eq!((img.width, img.height, img.channels), (3, 1, 1));
        assert_eq!(img.data, vec![0.0, 1.0, 0.0]);
        assert_eq!(img.encode_pnm().unwrap(), b"P5\n3 1\n255\n\x00\xff\x00");
    }

    #[test]
    fn rejects_truncated_raster() {
        assert!(Image::decode_pnm(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(Image::decode_pnm(b"P3\n1 1\n255\n0 0 0").is_err());
    }
}
