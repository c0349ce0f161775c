//! PNG reading and writing for the dataset layout.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage as Rgb8};

use super::GT_THRESHOLD;
use crate::error::{Error, Result};
use crate::image_ops::{Mask, Plane, RgbImage};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::image(path, e))
}

fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.to_rgb32f();
    let (w, h) = img.dimensions();
    RgbImage::from_vec(h as usize, w as usize, img.into_raw())
}

/// Reads an 8- or 16-bit grayscale image normalized to `[0, 1]`.
pub fn read_gray(path: &Path) -> Result<Plane> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        other => other.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    };
    Plane::from_vec(h, w, data)
}

/// Reads a ground-truth mask, binarizing 8-bit levels at [`GT_THRESHOLD`].
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| (v >= GT_THRESHOLD) as u8).collect();
    Mask::from_vec(h as usize, w as usize, data)
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    ensure_parent(path)?;
    let raw = img.data.iter().map(|&v| quantize8(v)).collect();
    let buf = Rgb8::from_raw(img.width as u32, img.height as u32, raw).expect("buffer sized from image");
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn write_gray8(path: &Path, plane: &Plane) -> Result<()> {
    ensure_parent(path)?;
    let raw = plane.data.iter().map(|&v| quantize8(v)).collect();
    let buf = GrayImage::from_raw(plane.width as u32, plane.height as u32, raw).expect("buffer sized from plane");
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn write_gray16(path: &Path, plane: &Plane) -> Result<()> {
    ensure_parent(path)?;
    let raw: Vec<u16> = plane
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(plane.width as u32, plane.height as u32, raw).expect("buffer sized from plane");
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// Writes a mask as 0 / 255.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    ensure_parent(path)?;
    let raw = mask.data.iter().map(|&v| if v > 0 { 255 } else { 0 }).collect();
    let buf = GrayImage::from_raw(mask.width as u32, mask.height as u32, raw).expect("buffer sized from mask");
    buf.save(path).map_err(|e| Error::image(path, e))
}
