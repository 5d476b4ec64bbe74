use std::path::Path;

use image::RgbImage;
use partverify_core::geometry::ImageExtent;
use partverify_core::raster::Raster;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("cannot read image {path}: {source}")]
    Read { path: String, source: image::ImageError },
    #[error("cannot write image {path}: {source}")]
    Write { path: String, source: image::ImageError },
    #[error("image {path} is empty")]
    Empty { path: String },
}

pub fn load_png(path: &Path) -> Result<Raster, ImageError> {
    let img = image::open(path)
        .map_err(|source| ImageError::Read { path: path.display().to_string(), source })?
        .into_rgb8();
    let extent = ImageExtent::new(img.width(), img.height())
        .ok_or_else(|| ImageError::Empty { path: path.display().to_string() })?;
    Ok(Raster::from_raw(extent, img.into_raw()).expect("rgb8 buffer matches its size"))
}

pub fn save_png(path: &Path, raster: &Raster) -> Result<(), ImageError> {
    let e = raster.extent();
    let img = RgbImage::from_raw(e.width, e.height, raster.as_raw().to_vec()).expect("raster buffer matches its size");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| ImageError::Write { path: path.display().to_string(), source })
}
