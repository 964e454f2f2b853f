//! PNG ingestion and export for grayscale images and RGB comparison grids.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// Load an 8- or 16-bit grayscale PNG as `[1, H, W]`, normalized by the max
/// representable value. Color inputs are converted to luma first.
pub fn load_png_gray<T: Elem>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let img = ImageReader::open(path.as_ref())?
        .decode()
        .map_err(|e| Error::invalid("png", e.to_string()))?;
    let (data, h, w): (Vec<T>, usize, usize) = match img {
        DynamicImage::ImageLuma16(img16) => {
            let (w, h) = (img16.width() as usize, img16.height() as usize);
            (
                img16
                    .into_raw()
                    .into_iter()
                    .map(|v| T::from_f64(v as f64 / 65535.0))
                    .collect(),
                h,
                w,
            )
        }
        other => {
            let img8 = other.to_luma8();
            let (w, h) = (img8.width() as usize, img8.height() as usize);
            (
                img8.into_raw()
                    .into_iter()
                    .map(|v| T::from_f64(v as f64 / 255.0))
                    .collect(),
                h,
                w,
            )
        }
    };
    Tensor::from_vec(data, &[1, h, w])
}

/// Save `[H, W]` / `[1, H, W]` intensities in [0,1] as an 8-bit gray PNG.
pub fn save_png_gray<T: Elem>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let (h, w) = gray_extents(t)?;
    let mut img = GrayImage::new(w as u32, h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        let v = t.data()[i].to_f64().clamp(0.0, 1.0);
        px.0[0] = (v * 255.0).round() as u8;
    }
    img.save(path.as_ref()).map_err(|e| Error::invalid("png", e.to_string()))
}

fn gray_extents<T: Elem>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        [1, h, w] => Ok((*h, *w)),
        [1, 1, h, w] => Ok((*h, *w)),
        other => Err(Error::invalid("png", format!("not a grayscale image: {other:?}"))),
    }
}

/// An RGB canvas assembled from titled grayscale panels, written as PNG.
pub struct GridImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

pub const GRID_SEPARATOR: usize = 2;

impl GridImage {
    /// Lay out `panels` horizontally with a white separator. All panels must
    /// share extents.
    pub fn new(panels: &[Vec<[u8; 3]>], h: usize, w: usize) -> Result<GridImage> {
        if panels.is_empty() {
            return Err(Error::invalid("grid", "no panels"));
        }
        for p in panels {
            if p.len() != h * w {
                return Err(Error::invalid("grid", "panel extents mismatch"));
            }
        }
        let total_w = panels.len() * w + (panels.len() - 1) * GRID_SEPARATOR;
        let mut pixels = vec![[255u8; 3]; total_w * h];
        for (pi, panel) in panels.iter().enumerate() {
            let x0 = pi * (w + GRID_SEPARATOR);
            for y in 0..h {
                for x in 0..w {
                    pixels[y * total_w + x0 + x] = panel[y * w + x];
                }
            }
        }
        Ok(GridImage {
            width: total_w,
            height: h,
            pixels,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            px.0 = self.pixels[i];
        }
        img.save(path.as_ref()).map_err(|e| Error::invalid("png", e.to_string()))
    }
}

/// Grayscale intensities → RGB panel.
pub fn gray_panel<T: Elem>(t: &Tensor<T>) -> Result<Vec<[u8; 3]>> {
    let (h, w) = gray_extents(t)?;
    let mut out = Vec::with_capacity(h * w);
    for &v in t.data() {
        let g = (v.to_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        out.push([g, g, g]);
    }
    Ok(out)
}

/// Fixed overlay palette: class 1 grey, class 2 yellow, class 3 cyan,
/// further classes magenta; prediction errors are red.
pub fn class_color(class: usize) -> [u8; 3] {
    match class {
        1 => [170, 170, 170],
        2 => [230, 220, 60],
        3 => [70, 210, 220],
        _ => [200, 60, 200],
    }
}

pub const ERROR_COLOR: [u8; 3] = [230, 40, 30];

/// Segmentation overlay panel: base image tinted by predicted class, with
/// pixels where prediction ≠ ground truth painted in the error color.
pub fn seg_overlay_panel<T: Elem>(
    base: &Tensor<T>,
    pred: &Tensor<T>,
    gt: &Tensor<T>,
) -> Result<Vec<[u8; 3]>> {
    let (h, w) = gray_extents(base)?;
    if pred.numel() != h * w || gt.numel() != h * w {
        return Err(Error::invalid("grid", "label extents mismatch"));
    }
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let g = (base.data()[i].to_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        let p = pred.data()[i].to_f64() as usize;
        let t = gt.data()[i].to_f64() as usize;
        let px = if p != t {
            ERROR_COLOR
        } else if p == 0 {
            [g, g, g]
        } else {
            let c = class_color(p);
            // 50/50 blend keeps the anatomy visible under the tint
            [
                ((g as u16 + c[0] as u16) / 2) as u8,
                ((g as u16 + c[1] as u16) / 2) as u8,
                ((g as u16 + c[2] as u16) / 2) as u8,
            ]
        };
        out.push(px);
    }
    Ok(out)
}
