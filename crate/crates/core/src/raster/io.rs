//! PNG interchange for guidance maps.
//!
//! Per frame `i` three files are written: `{i:06}_depth.png` (16-bit
//! grayscale), `{i:06}_normal.png` and `{i:06}_render.png` (8-bit RGB).
//! Quantization is `round(v · (2^bits − 1))`.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use ndarray::{Array2, Array3};

use super::GuidanceMaps;
use crate::error::{Error, Result};

/// Guidance kinds in branch order.
pub const KINDS: [&str; 3] = ["depth", "normal", "render"];

pub fn map_filename(frame: usize, kind: &str) -> String {
    format!("{frame:06}_{kind}.png")
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format("png image", format!("{}: {other}", path.display())),
    }
}

pub fn save_depth_png(depth: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = depth.dim();
    let data: Vec<u16> = depth.iter().map(|&v| quantize(v, 65535.0) as u16).collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer sized from array");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| image_error(path, e))
}

pub fn save_rgb_png(rgb: &Array3<f64>, path: &Path) -> Result<()> {
    let (h, w, c) = rgb.dim();
    if c != 3 {
        return Err(Error::shape("rgb image channels", 3, c));
    }
    let data: Vec<u8> = rgb.iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("buffer sized from array");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| image_error(path, e))
}

/// Writes the three maps of frame `frame` into `dir`, returning the paths.
pub fn save_guidance(maps: &GuidanceMaps, dir: &Path, frame: usize) -> Result<[PathBuf; 3]> {
    let paths = KINDS.map(|kind| dir.join(map_filename(frame, kind)));
    save_depth_png(&maps.depth, &paths[0])?;
    save_rgb_png(&maps.normal, &paths[1])?;
    save_rgb_png(&maps.render, &paths[2])?;
    Ok(paths)
}

/// Loads a PNG as C×H×W values in [0, 1]. Grayscale images give one
/// channel, color images three; alpha is dropped.
pub fn load_png_channels(path: &Path) -> Result<Array3<f64>> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    if gray {
        let buf = img.into_luma16();
        Ok(Array3::from_shape_fn((1, h, w), |(_, y, x)| buf.get_pixel(x as u32, y as u32)[0] as f64 / 65535.0))
    } else {
        let bits16 = img.color().bytes_per_pixel() as usize / img.color().channel_count() as usize > 1;
        if bits16 {
            let buf = img.into_rgb16();
            Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| buf.get_pixel(x as u32, y as u32)[c] as f64 / 65535.0))
        } else {
            let buf = img.into_rgb8();
            Ok(Array3::from_shape_fn((3, h, w), |(c, y, x)| buf.get_pixel(x as u32, y as u32)[c] as f64 / 255.0))
        }
    }
}
