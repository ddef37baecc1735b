//! Image files: rendered RGB frames (PNG or binary PPM, chosen by
//! extension), 8-bit instance masks and 16-bit depth maps.

use std::io::Write;
use std::path::Path;

use mbgs_core::graph::DepthImage;
use mbgs_core::render::Image;

use crate::error::{Error, Result};

/// Depth PNG samples are millimetres.
pub const DEPTH_SCALE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("png") => Ok(ImageFormat::Png),
            Some("ppm") => Ok(ImageFormat::Ppm),
            _ => Err(Error::Image { path: path.to_path_buf(), message: "expected a .png or .ppm extension".into() }),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

fn png_bytes(width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(data).expect("in-memory PNG data");
    }
    out
}

/// Encoded file contents; identical images always give identical bytes.
pub fn encode_image(img: &Image, format: ImageFormat) -> Vec<u8> {
    let raw: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    match format {
        ImageFormat::Png => png_bytes(img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, &raw),
        ImageFormat::Ppm => {
            let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
            out.extend_from_slice(&raw);
            out
        }
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_image(img, ImageFormat::from_path(path)?);
    crate::fsio::write_bytes(path, &bytes).map_err(|e| Error::io(path, e))
}

struct Decoded {
    width: usize,
    height: usize,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn decode_gray(path: &Path) -> Result<Decoded> {
    let bad = |m: String| Error::Image { path: path.to_path_buf(), message: m };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| bad(e.to_string()))?;
    let mut data = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut data).map_err(|e| bad(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(bad(format!("expected a grayscale PNG, found {:?}", info.color_type)));
    }
    data.truncate(info.buffer_size());
    Ok(Decoded { width: info.width as usize, height: info.height as usize, depth: info.bit_depth, data })
}

/// Row-major coverage; any nonzero sample is set.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let d = decode_gray(path)?;
    if d.depth != png::BitDepth::Eight {
        return Err(Error::Image { path: path.to_path_buf(), message: "masks must be 8-bit".into() });
    }
    Ok((d.width, d.height, d.data.iter().map(|v| *v != 0).collect()))
}

pub fn encode_mask(width: usize, height: usize, bits: &[bool]) -> Vec<u8> {
    let raw: Vec<u8> = bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
    png_bytes(width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &raw)
}

pub fn write_mask(path: &Path, width: usize, height: usize, bits: &[bool]) -> Result<()> {
    crate::fsio::write_bytes(path, &encode_mask(width, height, bits)).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthImage> {
    let d = decode_gray(path)?;
    if d.depth != png::BitDepth::Sixteen {
        return Err(Error::Image { path: path.to_path_buf(), message: "depth maps must be 16-bit".into() });
    }
    let depth = d.data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / DEPTH_SCALE).collect();
    Ok(DepthImage::new(d.width, d.height, depth)?)
}

/// Depths are rounded to the nearest millimetre; holes and out-of-range
/// values are stored as 0.
pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<()> {
    let mut raw = Vec::with_capacity(depth.depth.len() * 2);
    for d in &depth.depth {
        let mm = (d * DEPTH_SCALE).round();
        let v = if mm.is_finite() && mm > 0.0 && mm <= u16::MAX as f64 { mm as u16 } else { 0 };
        raw.write_all(&v.to_be_bytes()).expect("in-memory write");
    }
    let bytes = png_bytes(depth.width, depth.height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &raw);
    crate::fsio::write_bytes(path, &bytes).map_err(|e| Error::io(path, e))
}
