//! PNG / binary PPM readers and writers. Files are always 8-bit.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::{Image, ImageError, Mask};

fn codec(path: &Path, e: impl ToString) -> ImageError {
    ImageError::Codec { path: path.display().to_string(), message: e.to_string() }
}

fn format_for(path: &Path) -> ImageFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") | Some("pgm") | Some("pnm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    }
}

fn open(path: &Path) -> Result<DynamicImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io { path: path.display().to_string(), source })?;
    image::load_from_memory(&bytes).map_err(|e| codec(path, e))
}

/// Read an 8-bit RGB image (PNG or PPM); other layouts are converted to RGB8.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let rgb = open(path)?.into_rgb8();
    let (w, h) = rgb.dimensions();
    Image::from_rgb8(w as usize, h as usize, rgb.as_raw())
}

/// Read an 8-bit grayscale mask, thresholded at 128.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask, ImageError> {
    let path = path.as_ref();
    let gray = open(path)?.into_luma8();
    let (w, h) = gray.dimensions();
    Mask::from_gray8(w as usize, h as usize, gray.as_raw())
}

fn ensure_parent(path: &Path) -> Result<(), ImageError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|source| ImageError::Io { path: parent.display().to_string(), source })?;
    }
    Ok(())
}

/// Write an RGB image; the format follows the extension (`.ppm` -> binary PPM, else PNG).
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<(), ImageError> {
    let path = path.as_ref();
    if format_for(path) == ImageFormat::Pnm {
        return write_ppm(path, img);
    }
    img.ensure_rgb()?;
    ensure_parent(path)?;
    image::save_buffer_with_format(
        path,
        &img.to_rgb8(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|e| codec(path, e))
}

/// Binary `P6` PPM with maxval 255.
pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<(), ImageError> {
    let path = path.as_ref();
    img.ensure_rgb()?;
    ensure_parent(path)?;
    let mut bytes = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend(img.to_rgb8());
    std::fs::write(path, bytes).map_err(|source| ImageError::Io { path: path.display().to_string(), source })
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<(), ImageError> {
    let path = path.as_ref();
    ensure_parent(path)?;
    image::save_buffer_with_format(
        path,
        &mask.to_gray8(),
        mask.width() as u32,
        mask.height() as u32,
        image::ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| codec(path, e))
}
