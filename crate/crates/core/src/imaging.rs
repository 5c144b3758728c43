//! Raster extraction of text regions.
//!
//! Pixel (i, j) covers the square `[i, i+1) x [j, j+1)`, so its center sits at
//! `(i + 0.5, j + 0.5)`.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, RotatedRect};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("image must be at least 1x1 with 1 or 3 channels")]
    BadShape,
    #[error("box {0} does not intersect the image")]
    BoxOutside(Aabb),
    #[error("rotated rect is degenerate ({width} x {height})")]
    DegenerateRect { width: f64, height: f64 },
    #[error("rotated rect center ({x}, {y}) lies outside the image")]
    CenterOutside { x: f64, y: f64 },
    #[error("label {0:?} needs at least two characters")]
    LabelTooShort(String),
    #[error("strip width {strip} leaves nothing of an image {width} px wide")]
    StripTooWide { strip: u32, width: u32 },
    #[error("strip width rounds to zero for a {width} px image and a {chars}-character label")]
    StripTooNarrow { width: u32, chars: usize },
    #[error("{path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImagingError::BadShape);
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(ImagingError::BufferSize { got: pixels.len(), expected });
        }
        Ok(RasterImage { width, height, channels, pixels })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self, ImagingError> {
        RasterImage::new(width, height, channels, vec![value; width as usize * height as usize * channels as usize])
    }

    pub fn from_fn<F: Fn(u32, u32) -> u8>(width: u32, height: u32, f: F) -> Result<Self, ImagingError> {
        let mut px = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                px.push(f(x, y));
            }
        }
        RasterImage::new(width, height, 1, px)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        self.pixels[self.offset(x, y) + c as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, c: u8, v: u8) {
        let o = self.offset(x, y) + c as usize;
        self.pixels[o] = v;
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Copies the half-open pixel window `[x0, x1) x [y0, y1)`.
    fn window(&self, x0: u32, y0: u32, x1: u32, y1: u32) -> RasterImage {
        let ch = self.channels as usize;
        let row_len = (x1 - x0) as usize * ch;
        let mut px = Vec::with_capacity(row_len * (y1 - y0) as usize);
        for y in y0..y1 {
            let start = self.offset(x0, y);
            px.extend_from_slice(&self.pixels[start..start + row_len]);
        }
        RasterImage { width: x1 - x0, height: y1 - y0, channels: self.channels, pixels: px }
    }

    /// Bilinear sample of channel `c` at continuous position (x, y); samples
    /// outside the image read as black.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: u8) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let at = |xi: f64, yi: f64| -> f64 {
            if xi < 0.0 || yi < 0.0 || xi >= self.width as f64 || yi >= self.height as f64 {
                0.0
            } else {
                self.get(xi as u32, yi as u32, c) as f64
            }
        };
        let mut v = at(x0, y0) * (1.0 - tx) * (1.0 - ty);
        if tx > 0.0 {
            v += at(x0 + 1.0, y0) * tx * (1.0 - ty);
        }
        if ty > 0.0 {
            v += at(x0, y0 + 1.0) * (1.0 - tx) * ty;
            if tx > 0.0 {
                v += at(x0 + 1.0, y0 + 1.0) * tx * ty;
            }
        }
        v
    }
}

/// Axis-aligned crop. The box is expanded outwards to whole pixels
/// (`floor` of the minimum, `ceil` of the maximum) and clamped to the image.
/// Pixels are copied without resampling.
pub fn crop_axis_aligned(img: &RasterImage, bbox: &Aabb) -> Result<RasterImage, ImagingError> {
    let clamp = |v: f64, hi: u32| v.max(0.0).min(hi as f64) as u32;
    let x0 = clamp(bbox.x_min.floor(), img.width);
    let y0 = clamp(bbox.y_min.floor(), img.height);
    let x1 = clamp(bbox.x_max.ceil(), img.width);
    let y1 = clamp(bbox.y_max.ceil(), img.height);
    if x0 >= x1 || y0 >= y1 {
        return Err(ImagingError::BoxOutside(*bbox));
    }
    Ok(img.window(x0, y0, x1, y1))
}

/// Rectified crop of an oriented rectangle. Output is
/// `round(width) x round(height)`; output pixel (u, v) samples the source at
/// `center + (u + 0.5 - W/2) * e_w + (v + 0.5 - H/2) * e_h`, where `e_w`,
/// `e_h` are the rectangle's axes. Bilinear, black outside the image.
pub fn crop_rotated(img: &RasterImage, rect: &RotatedRect) -> Result<RasterImage, ImagingError> {
    let ow = rect.width.round();
    let oh = rect.height.round();
    if !(ow >= 1.0 && oh >= 1.0) || !rect.angle.is_finite() {
        return Err(ImagingError::DegenerateRect { width: rect.width, height: rect.height });
    }
    let (cx, cy) = (rect.center.x, rect.center.y);
    if !(cx >= 0.0 && cy >= 0.0 && cx <= img.width as f64 && cy <= img.height as f64) {
        return Err(ImagingError::CenterOutside { x: cx, y: cy });
    }
    let (ow, oh) = (ow as u32, oh as u32);
    let (u_axis, v_axis) = rect.axes();
    let ch = img.channels;
    let mut px = Vec::with_capacity(ow as usize * oh as usize * ch as usize);
    for v in 0..oh {
        let dv = v as f64 + 0.5 - oh as f64 / 2.0;
        for u in 0..ow {
            let du = u as f64 + 0.5 - ow as f64 / 2.0;
            let sx = cx + du * u_axis.x + dv * v_axis.x;
            let sy = cy + du * u_axis.y + dv * v_axis.y;
            for c in 0..ch {
                px.push(img.sample_bilinear(sx, sy, c).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(ow, oh, ch, px)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Removes the first (`Left`) or last (`Right`) character of a cropped word
/// image, assuming characters of equal width: a strip of
/// `round(width / chars)` pixels is cut from that side and the label loses the
/// matching character, with whitespace exposed at the cut trimmed.
pub fn crop_char_strip(img: &RasterImage, label: &str, side: Side) -> Result<(RasterImage, String), ImagingError> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() < 2 {
        return Err(ImagingError::LabelTooShort(label.to_string()));
    }
    let strip = (img.width as f64 / chars.len() as f64).round() as u32;
    if strip == 0 {
        return Err(ImagingError::StripTooNarrow { width: img.width, chars: chars.len() });
    }
    if strip >= img.width {
        return Err(ImagingError::StripTooWide { strip, width: img.width });
    }
    let (cropped, rest): (RasterImage, String) = match side {
        Side::Left => (img.window(strip, 0, img.width, img.height), chars[1..].iter().collect::<String>().trim_start().to_string()),
        Side::Right => (
            img.window(0, 0, img.width - strip, img.height),
            chars[..chars.len() - 1].iter().collect::<String>().trim_end().to_string(),
        ),
    };
    Ok((cropped, rest))
}

impl From<&RasterImage> for DynamicImage {
    fn from(img: &RasterImage) -> Self {
        if img.channels == 1 {
            let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(img.width, img.height, img.pixels.clone())
                .expect("buffer length checked on construction");
            DynamicImage::ImageLuma8(buf)
        } else {
            let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(img.width, img.height, img.pixels.clone())
                .expect("buffer length checked on construction");
            DynamicImage::ImageRgb8(buf)
        }
    }
}

impl From<DynamicImage> for RasterImage {
    fn from(img: DynamicImage) -> Self {
        let gray = matches!(img, DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_));
        if gray {
            let g = img.into_luma8();
            RasterImage { width: g.width(), height: g.height(), channels: 1, pixels: g.into_raw() }
        } else {
            let c = img.into_rgb8();
            RasterImage { width: c.width(), height: c.height(), channels: 3, pixels: c.into_raw() }
        }
    }
}

/// Reads PNG, JPEG or PNM (format sniffed from the content).
pub fn load_image(path: &Path) -> Result<RasterImage, ImagingError> {
    let codec = |source| ImagingError::Codec { path: path.display().to_string(), source };
    let reader = image::ImageReader::open(path)
        .map_err(|e| codec(image::ImageError::IoError(e)))?
        .with_guessed_format()
        .map_err(|e| codec(image::ImageError::IoError(e)))?;
    Ok(reader.decode().map_err(codec)?.into())
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage, ImagingError> {
    image::load_from_memory(bytes)
        .map(RasterImage::from)
        .map_err(|source| ImagingError::Codec { path: "<memory>".into(), source })
}

/// PNG bytes; deterministic for a given image.
pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>, ImagingError> {
    let mut out = std::io::Cursor::new(Vec::new());
    DynamicImage::from(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|source| ImagingError::Codec { path: "<png>".into(), source })?;
    Ok(out.into_inner())
}

pub fn save_png(img: &RasterImage, path: &Path) -> Result<(), ImagingError> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes)
        .map_err(|e| ImagingError::Codec { path: path.display().to_string(), source: image::ImageError::IoError(e) })
}

/// Plain (ASCII, P2) PGM text for a gray image.
pub fn to_plain_pgm(img: &RasterImage) -> Result<String, ImagingError> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    if img.channels != 1 {
        return Err(ImagingError::BadShape);
    }
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Ascii))
        .encode(img.pixels.as_slice(), img.width, img.height, image::ExtendedColorType::L8)
        .map_err(|source| ImagingError::Codec { path: "<pgm>".into(), source })?;
    Ok(String::from_utf8(out).expect("ascii pgm"))
}
