//! Raster images: decoding, grayscale conversion, raster-scan linearization,
//! cropping and non-overlapping window tiling.

use std::fmt;
use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::complexity::SymbolString;
use crate::error::{Error, Result};

/// Grayscale weights scaled by 10⁴: `0.2989 R + 0.5870 G + 0.1140 B`.
const WEIGHTS: [u32; 3] = [2989, 5870, 1140];
const WEIGHT_SCALE: u32 = 10_000;

/// Row-major RGB raster.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

/// Row-major 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GrayImage({}x{})", self.width, self.height)
    }
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let expected = width as usize * height as usize;
    if len != expected {
        return Err(Error::PixelCount {
            expected,
            actual: len,
        });
    }
    Ok(())
}

impl RgbImage {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Build from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn crop(&self, rect: PixelRect) -> Result<RgbImage> {
        let pixels = crop_rows(&self.pixels, self.width, self.height, rect)?;
        Ok(RgbImage {
            width: rect.width,
            height: rect.height,
            pixels,
        })
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }

    /// Lossless PNG encoding.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width, self.height, flat)
            .expect("pixel count checked at construction");
        encode_png(image::DynamicImage::ImageRgb8(buf))
    }
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn crop(&self, rect: PixelRect) -> Result<GrayImage> {
        let pixels = crop_rows(&self.pixels, self.width, self.height, rect)?;
        Ok(GrayImage {
            width: rect.width,
            height: rect.height,
            pixels,
        })
    }

    pub fn full_rect(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf = image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("pixel count checked at construction");
        encode_png(image::DynamicImage::ImageLuma8(buf))
    }
}

fn encode_png(img: image::DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

/// Image edge violated by an out-of-bounds rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Top,
    Right,
    Bottom,
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Edge::Left => "left",
            Edge::Top => "top",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
        })
    }
}

/// Axis-aligned rectangle in pixels, origin at the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub const fn new(left: u32, top: u32, width: u32, height: u32) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Check that the rectangle is nonempty and enclosed by a
    /// `width × height` image.
    pub fn check_inside(&self, width: u32, height: u32) -> Result<()> {
        let oob = |edge| Error::OutOfBounds {
            edge,
            rect: self.to_string(),
            width,
            height,
        };
        if self.width == 0 {
            return Err(oob(Edge::Right));
        }
        if self.height == 0 {
            return Err(oob(Edge::Bottom));
        }
        if self.left >= width {
            return Err(oob(Edge::Left));
        }
        if self.top >= height {
            return Err(oob(Edge::Top));
        }
        if self.left as u64 + self.width as u64 > width as u64 {
            return Err(oob(Edge::Right));
        }
        if self.top as u64 + self.height as u64 > height as u64 {
            return Err(oob(Edge::Bottom));
        }
        Ok(())
    }
}

impl fmt::Display for PixelRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.left, self.top, self.width, self.height)
    }
}

impl std::str::FromStr for PixelRect {
    type Err = Error;

    /// Parses `L,T,W,H`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::invalid("rect", format!("expected L,T,W,H, got `{s}`")));
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::invalid("rect", format!("`{p}` is not a pixel count")))?;
        }
        Ok(PixelRect::new(v[0], v[1], v[2], v[3]))
    }
}

fn crop_rows<T: Copy>(pixels: &[T], width: u32, height: u32, rect: PixelRect) -> Result<Vec<T>> {
    rect.check_inside(width, height)?;
    let mut out = Vec::with_capacity(rect.area());
    for y in rect.top..rect.top + rect.height {
        let row = (y * width) as usize;
        out.extend_from_slice(&pixels[row + rect.left as usize..row + (rect.left + rect.width) as usize]);
    }
    Ok(out)
}

/// Decode a JPEG or PNG stream to RGB, dropping any alpha channel.
pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    let err = |message: String| Error::Decode {
        len: bytes.len(),
        message,
    };
    let format = image::guess_format(bytes).map_err(|e| err(e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(err(format!("unsupported format {format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| err(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| p.0).collect();
    RgbImage::new(w, h, pixels)
}

/// `round_half_away(0.2989 R + 0.5870 G + 0.1140 B)`, clamped to `0..=255`.
///
/// Evaluated in scaled integers, so ties round exactly.
pub fn gray_value([r, g, b]: [u8; 3]) -> u8 {
    let sum = WEIGHTS[0] * r as u32 + WEIGHTS[1] * g as u32 + WEIGHTS[2] * b as u32;
    ((sum + WEIGHT_SCALE / 2) / WEIGHT_SCALE).min(255) as u8
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| gray_value(p)).collect(),
    }
}

/// Row-major scan: rows left to right, top to bottom.
pub fn linearize(img: &GrayImage) -> SymbolString {
    SymbolString::new(img.pixels.clone())
}

/// Offsets of the non-overlapping `window_w × window_h` tiles of a
/// `width × height` image in row-major order. Partial edge tiles are dropped.
pub fn tile_rects(width: u32, height: u32, window_w: u32, window_h: u32) -> Result<Vec<PixelRect>> {
    if window_w == 0 || window_h == 0 || window_w > width || window_h > height {
        return Err(Error::WindowTooLarge {
            window_w,
            window_h,
            width,
            height,
        });
    }
    let cols = width / window_w;
    let rows = height / window_h;
    Ok((0..rows)
        .flat_map(|b| (0..cols).map(move |a| PixelRect::new(a * window_w, b * window_h, window_w, window_h)))
        .collect())
}

pub fn tile_windows(img: &GrayImage, window_w: u32, window_h: u32) -> Result<Vec<GrayImage>> {
    tile_rects(img.width, img.height, window_w, window_h)?
        .into_iter()
        .map(|r| img.crop(r))
        .collect()
}
