//! PNG decoding and encoding for the core raster type.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};
use linestitch_core::compositor::WarpedRaster;
use linestitch_core::raster::Image;

use crate::error::{Error, Result};

/// Loads an 8-bit image as RGB; any alpha channel is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let decoded = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_rgb8(&decoded.to_rgb8()))
}

pub fn from_rgb8(rgb: &image::RgbImage) -> Image {
    let (w, h) = rgb.dimensions();
    Image::from_fn(w as usize, h as usize, 3, |x, y, c| {
        rgb.get_pixel(x as u32, y as u32)[c] as f32
    })
}

fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Converts a 1, 3 or 4 channel raster to an 8-bit image.
pub fn to_dynamic(img: &Image) -> DynamicImage {
    let (w, h) = (img.width as u32, img.height as u32);
    let px = |x: u32, y: u32, c: usize| to_u8(img.get(x as usize, y as usize, c));
    match img.channels {
        1 => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| Luma([px(x, y, 0)]))),
        3 => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb([0, 1, 2].map(|c| px(x, y, c)))
        })),
        4 => DynamicImage::ImageRgba8(ImageBuffer::from_fn(w, h, |x, y| {
            Rgba([0, 1, 2, 3].map(|c| px(x, y, c)))
        })),
        n => {
            // Two-channel rasters never leave the core; keep the first as gray.
            debug_assert_eq!(n, 2);
            DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| Luma([px(x, y, 0)])))
        }
    }
}

pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    to_dynamic(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// A warped layer as RGBA with its coverage mask in alpha.
pub fn layer_rgba(layer: &WarpedRaster) -> Image {
    let img = &layer.image;
    Image::from_fn(img.width, img.height, 4, |x, y, c| {
        let covered = layer.mask.get(x, y);
        match (c, covered) {
            (3, true) => 255.0,
            (_, false) => 0.0,
            (c, true) => img.get(x, y, if img.channels >= 3 { c } else { 0 }),
        }
    })
}
