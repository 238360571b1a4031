//! 8-bit PNG images. Values are clamped to [0, 1] and rounded on write.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ::png::{BitDepth, ColorType, Decoder, Encoder, Transformations};

use crate::error::{Error, Result};
use crate::geometry::Image;

fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

pub fn write_png(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = Encoder::new(w, img.width as u32, img.height as u32);
    enc.set_color(ColorType::Rgb);
    enc.set_depth(BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format("PNG", e.to_string()))?;
    let data: Vec<u8> = img.data.iter().flat_map(|p| p.map(to_u8)).collect();
    writer
        .write_image_data(&data)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    writer.finish().map_err(|e| Error::format("PNG", e.to_string()))?;
    Ok(())
}

/// Grayscale and alpha inputs are converted to RGB; alpha is dropped.
pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let mut dec = Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| Error::format("PNG", e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("PNG", "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(Error::format("PNG", "palette was not expanded")),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &buf[y * info.line_size..y * info.line_size + w * channels];
        for px in row.chunks_exact(channels) {
            let f = |b: u8| b as f64 / 255.0;
            data.push(if channels < 3 {
                [f(px[0]); 3]
            } else {
                [f(px[0]), f(px[1]), f(px[2])]
            });
        }
    }
    Image::new(w, h, data)
}
