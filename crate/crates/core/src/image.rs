//! H×W×C floating-point raster and binary Netpbm (P5/P6) I/O.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Row-major H×W×C image. Channel count is 1 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Geometry(format!(
                "invalid image geometry {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::dim(
                "image buffer",
                &[height, width, channels],
                &[data.len()],
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image construction".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Builds an image from raw 0–255 samples, dividing by 255.
    pub fn normalize(height: usize, width: usize, channels: usize, raw: &[f64]) -> Result<Self> {
        if let Some(bad) = raw.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::Ingest(format!(
                "raw pixel value {bad} outside [0, 255]"
            )));
        }
        Self::new(
            height,
            width,
            channels,
            raw.iter().map(|v| v / 255.0).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Copies the `size_h × size_w` window at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, size_h: usize, size_w: usize) -> Result<Image> {
        if row + size_h > self.height || col + size_w > self.width || size_h == 0 || size_w == 0 {
            return Err(Error::Geometry(format!(
                "crop {size_h}x{size_w} at ({row},{col}) outside {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(size_h * size_w * self.channels);
        for r in row..row + size_h {
            let start = (r * self.width + col) * self.channels;
            data.extend_from_slice(&self.data[start..start + size_w * self.channels]);
        }
        Image::new(size_h, size_w, self.channels, data)
    }

    /// Writes `patch` into this image with its top-left corner at `(row, col)`.
    pub fn paste(&mut self, patch: &Image, row: usize, col: usize) -> Result<()> {
        if patch.channels != self.channels
            || row + patch.height > self.height
            || col + patch.width > self.width
        {
            return Err(Error::Geometry(format!(
                "paste {}x{}x{} at ({row},{col}) into {}x{}x{}",
                patch.height, patch.width, patch.channels, self.height, self.width, self.channels
            )));
        }
        let c = self.channels;
        for r in 0..patch.height {
            let dst = ((row + r) * self.width + col) * c;
            let src = r * patch.width * c;
            self.data[dst..dst + patch.width * c]
                .copy_from_slice(&patch.data[src..src + patch.width * c]);
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(
            vec![self.height, self.width, self.channels],
            self.data.clone(),
        )
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w, c] => Image::new(h, w, c, t.data().to_vec()),
            _ => Err(Error::dim(
                "image from tensor expects rank 3",
                t.shape(),
                &[0, 0, 0],
            )),
        }
    }

    /// Rounds every sample to the nearest 8-bit level.
    pub fn quantized(&self) -> Image {
        let data = self
            .data
            .iter()
            .map(|&v| f64::from(to_u8(v)) / 255.0)
            .collect();
        Image {
            data,
            ..self.clone()
        }
    }

    /// Encodes as binary PPM (P6) for 3 channels or PGM (P5) for 1 channel.
    pub fn to_pnm_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&v| to_u8(v)));
        out
    }

    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Image> {
        let mut parser = HeaderParser { bytes, pos: 0 };
        let magic = parser.token()?;
        let channels = match magic.as_str() {
            "P6" => 3,
            "P5" => 1,
            other => return Err(Error::Ingest(format!("unsupported Netpbm magic {other:?}"))),
        };
        let width = parser.number()?;
        let height = parser.number()?;
        let maxval = parser.number()?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Ingest(format!(
                "unsupported maxval {maxval}; only 8-bit is read"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = parser.pos + 1;
        let n = width * height * channels;
        if width == 0 || height == 0 || bytes.len() < start + n {
            return Err(Error::Ingest(format!(
                "raster truncated: expected {n} bytes for {width}x{height}x{channels}"
            )));
        }
        let scale = maxval as f64;
        let data = bytes[start..start + n]
            .iter()
            .map(|&b| {
                if maxval == 255 {
                    f64::from(b) / 255.0
                } else {
                    (f64::from(b) / scale).min(1.0)
                }
            })
            .collect();
        Image::new(height, width, channels, data)
    }

    pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::from_pnm_bytes(&bytes).map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))
    }

    pub fn write_pnm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pnm_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderParser<'_> {
    fn token(&mut self) -> Result<String> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::Ingest("unexpected end of Netpbm header".into())),
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Ingest(format!("bad Netpbm header field {tok:?}")))
    }
}
