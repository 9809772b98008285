//! 8-bit PNG images as `[0, 1]` tensors.

use std::path::Path;

use mscsp_core::fusion::Tensor;

use crate::error::IoError;

fn open(path: &Path) -> Result<image::DynamicImage, IoError> {
    image::open(path).map_err(|source| IoError::Image {
        path: path.into(),
        source,
    })
}

fn to_unit(v: u8) -> f64 {
    v as f64 / 255.0
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads any image as 3-channel RGB.
pub fn read_rgb(path: &Path) -> Result<Tensor, IoError> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(c, y as usize, x as usize, to_unit(p[c]));
        }
    }
    Ok(t)
}

/// Loads any image as single-channel luminance.
pub fn read_gray(path: &Path) -> Result<Tensor, IoError> {
    let img = open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(to_unit).collect();
    Tensor::from_vec(1, h, w, data).map_err(|e| IoError::format(path, e.to_string()))
}

fn save(path: &Path, buf: image::DynamicImage) -> Result<(), IoError> {
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| IoError::Image {
            path: path.into(),
            source,
        })
}

/// Writes a 3-channel tensor as RGB or a 1-channel tensor as grayscale.
pub fn write_png(path: &Path, t: &Tensor) -> Result<(), IoError> {
    let (c, h, w) = t.shape();
    let (wu, hu) = (w as u32, h as u32);
    match c {
        1 => {
            let raw = t.as_slice().iter().map(|&v| to_byte(v)).collect();
            let img = image::GrayImage::from_raw(wu, hu, raw).expect("buffer size matches");
            save(path, image::DynamicImage::ImageLuma8(img))
        }
        3 => {
            let img = image::RgbImage::from_fn(wu, hu, |x, y| {
                let px = |ch| to_byte(t.get(ch, y as usize, x as usize));
                image::Rgb([px(0), px(1), px(2)])
            });
            save(path, image::DynamicImage::ImageRgb8(img))
        }
        _ => Err(IoError::format(path, format!("cannot write a {c}-channel image"))),
    }
}
