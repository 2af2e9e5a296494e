//! 8-bit RGB rasters and colors.
//!
//! Coordinates use a top-left origin with `x` growing rightward and `y`
//! growing downward.

use std::fmt;
use std::io::Cursor;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error("invalid color {0:?}: expected #RRGGBB")]
    BadHex(String),
    #[error("image codec error: {0}")]
    Codec(String),
}

/// An 8-bit RGB color. The textual form is uppercase `#RRGGBB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0, 0, 0);
    pub const WHITE: Rgb = Rgb::new(255, 255, 255);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Rgb { r: v, g: v, b: v }
    }

    pub fn to_hex(self) -> String {
        format!("#{:02X}{:02X}{:02X}", self.r, self.g, self.b)
    }

    pub fn channels(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Rgb {
    type Err = RasterError;

    /// Accepts `#RRGGBB` in either case; the leading `#` is optional.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().strip_prefix('#').unwrap_or(s.trim());
        if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(RasterError::BadHex(s.to_string()));
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).expect("hex checked");
        Ok(Rgb::new(channel(0), channel(2), channel(4)))
    }
}

impl Serialize for Rgb {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Rgb {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Row-major RGB raster with non-zero dimensions.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Invalid(format!(
                "zero dimension {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RasterError::Invalid(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self, RasterError> {
        Raster::new(width, height, vec![color; width as usize * height as usize])
    }

    /// Builds a raster by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        mut f: impl FnMut(u32, u32) -> Rgb,
    ) -> Result<Self, RasterError> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Raster::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, color: Rgb) {
        let i = self.index(x, y);
        self.pixels[i] = color;
    }

    /// Writes `color` at signed coordinates, ignoring anything out of bounds.
    pub fn put_clipped(&mut self, x: i64, y: i64, color: Rgb) {
        if self.contains(x, y) {
            self.set(x as u32, y as u32, color);
        }
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < i64::from(self.width) && y < i64::from(self.height)
    }

    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    /// Swaps axes: pixel `(x, y)` of the result is pixel `(y, x)` of `self`.
    pub fn transpose(&self) -> Raster {
        Raster::from_fn(self.height, self.width, |x, y| self.get(y, x))
            .expect("transpose keeps non-zero dimensions")
    }

    /// SHA-256 over `width ‖ height ‖ pixel bytes` (dimensions big-endian), hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_be_bytes());
        hasher.update(self.height.to_be_bytes());
        hasher.update(self.as_bytes());
        hex(&hasher.finalize())
    }

    pub fn as_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.channels()).collect()
    }

    pub fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() % 3 != 0 {
            return Err(RasterError::Invalid("byte length not a multiple of 3".into()));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| Rgb::new(c[0], c[1], c[2]))
            .collect();
        Raster::new(width, height, pixels)
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let buffer = image::RgbImage::from_raw(self.width, self.height, self.as_bytes())
            .ok_or_else(|| RasterError::Codec("buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        buffer
            .write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| RasterError::Codec(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Decodes any format the `image` crate understands; alpha is dropped.
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory(bytes).map_err(|e| RasterError::Codec(e.to_string()))?;
        Raster::from_image(img.to_rgb8())
    }

    pub fn from_image(img: image::RgbImage) -> Result<Self, RasterError> {
        let (w, h) = img.dimensions();
        Raster::from_bytes(w, h, img.as_raw())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)
            .map_err(|e| RasterError::Codec(format!("{}: {e}", path.display())))?;
        Raster::decode(&bytes)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trip() {
        let c: Rgb = "#8f8F8f".parse().unwrap();
        assert_eq!(c, Rgb::gray(0x8F));
        assert_eq!(c.to_hex(), "#8F8F8F");
        assert!("#12345".parse::<Rgb>().is_err());
        assert!("#GG0000".parse::<Rgb>().is_err());
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Raster::filled(0, 5, Rgb::WHITE).is_err());
        assert!(Raster::new(2, 2, vec![Rgb::WHITE; 3]).is_err());
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let r = Raster::from_fn(7, 5, |x, y| Rgb::new(x as u8 * 30, y as u8 * 50, 9)).unwrap();
        let back = Raster::decode(&r.to_png().unwrap()).unwrap();
        assert_eq!(r, back);
        assert_eq!(r.content_hash(), back.content_hash());
    }

    #[test]
    fn hash_depends_on_shape() {
        let a = Raster::filled(2, 3, Rgb::BLACK).unwrap();
        let b = Raster::filled(3, 2, Rgb::BLACK).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
