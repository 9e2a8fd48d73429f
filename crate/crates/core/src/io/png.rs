use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};

use super::{atomic_write, read_bytes, IoError};
use crate::image::{to_u8, Image};

fn encode<P, C>(buf: ImageBuffer<P, C>, path: &Path) -> Result<Vec<u8>, IoError>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes any PNG into a 3-channel image in [0, 1].
pub fn decode_rgb(bytes: &[u8], path: &Path) -> Result<Image, IoError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| IoError::format(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Image::from_vec(w as usize, h as usize, 3, data).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn read_rgb(path: &Path) -> Result<Image, IoError> {
    decode_rgb(&read_bytes(path)?, path)
}

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
pub fn encode_rgb(img: &Image, path: &Path) -> Result<Vec<u8>, IoError> {
    if img.channels != 3 {
        return Err(IoError::format(
            path,
            format!("expected 3 channels, got {}", img.channels),
        ));
    }
    let raw: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(img.width as u32, img.height as u32, raw)
        .ok_or_else(|| IoError::format(path, "buffer size mismatch"))?;
    encode(buf, path)
}

pub fn write_rgb(path: &Path, img: &Image) -> Result<(), IoError> {
    atomic_write(path, &encode_rgb(img, path)?)
}

/// 16-bit grayscale depth in units of `scale` meters; invalid or
/// out-of-range values are stored as 0.
pub fn encode_depth_png16(
    depth: &[f64],
    width: usize,
    height: usize,
    scale: f64,
    path: &Path,
) -> Result<Vec<u8>, IoError> {
    let raw: Vec<u16> = depth
        .iter()
        .map(|&d| {
            let q = (d / scale).round();
            if q.is_finite() && q > 0.0 && q <= u16::MAX as f64 {
                q as u16
            } else {
                0
            }
        })
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(width as u32, height as u32, raw)
        .ok_or_else(|| IoError::format(path, "depth buffer size mismatch"))?;
    encode(buf, path)
}

/// Returns `(width, height, depth in meters)`.
pub fn read_depth_png16(path: &Path, scale: f64) -> Result<(usize, usize, Vec<f64>), IoError> {
    let img = image::load_from_memory_with_format(&read_bytes(path)?, ImageFormat::Png)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(b) => b,
        other => {
            return Err(IoError::format(
                path,
                format!("expected 16-bit grayscale depth, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = img.dimensions();
    Ok((
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v as f64 * scale).collect(),
    ))
}

/// Raw little-endian float32 depth, row-major, in units of `scale` meters.
pub fn encode_depth_f32(depth: &[f64], scale: f64) -> Vec<u8> {
    depth
        .iter()
        .flat_map(|&d| ((d / scale) as f32).to_le_bytes())
        .collect()
}

pub fn read_depth_f32(path: &Path, width: usize, height: usize, scale: f64) -> Result<Vec<f64>, IoError> {
    let bytes = read_bytes(path)?;
    if bytes.len() != width * height * 4 {
        return Err(IoError::format(
            path,
            format!(
                "expected {} bytes of float32 depth, found {}",
                width * height * 4,
                bytes.len()
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 * scale)
        .collect())
}
