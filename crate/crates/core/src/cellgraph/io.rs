//! Mask and grey-image files.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::mask::{GrayMatrix, LabelMask};
use crate::error::{Error, Result};

/// Reads a label mask from a 16-bit (or 8-bit) grayscale PNG or an integer CSV.
pub fn load_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => load_mask_csv(path),
        _ => load_mask_png(path),
    }
}

pub fn load_mask_png(path: impl AsRef<Path>) -> Result<LabelMask> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        _ => {
            return Err(Error::Load(format!(
                "{}: label masks must be single-channel PNG",
                path.as_ref().display()
            )))
        }
    };
    LabelMask::new(h, w, labels)
}

pub fn save_mask_png(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u16> = mask
        .raw()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| Error::Parameter(format!("label {l} exceeds 16 bits"))))
        .collect::<Result<_>>()?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, data).expect("buffer size matches");
    buf.save(path)?;
    Ok(())
}

pub fn load_mask_csv(path: impl AsRef<Path>) -> Result<LabelMask> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut labels = Vec::new();
    let mut width = None;
    let mut height = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Load("ragged mask CSV".into()));
        }
        for field in rec.iter() {
            labels.push(
                field
                    .parse::<u32>()
                    .map_err(|_| Error::Load(format!("mask CSV value `{field}` is not a label")))?,
            );
        }
        height += 1;
    }
    LabelMask::new(height, width.unwrap_or(0), labels)
}

pub fn save_mask_csv(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in 0..mask.height() {
        w.write_record((0..mask.width()).map(|c| mask.get(r, c).to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// 8-bit grayscale PNG; colour images are converted to luma.
pub fn load_gray_png(path: impl AsRef<Path>) -> Result<GrayMatrix> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    GrayMatrix::new(h, w, img.into_raw().into_iter().map(f64::from).collect())
}

/// Values are rounded and clamped to `0..=255`.
pub fn save_gray_png(img: &GrayMatrix, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = img.pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, data).expect("buffer size matches");
    buf.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = LabelMask::new(2, 3, vec![0, 700, 700, 2, 0, 0]).unwrap();
        let png = dir.path().join("m.png");
        save_mask_png(&mask, &png).unwrap();
        assert_eq!(load_mask(&png).unwrap(), mask);
        let csv = dir.path().join("m.csv");
        save_mask_csv(&mask, &csv).unwrap();
        assert_eq!(load_mask(&csv).unwrap(), mask);

        let gray = GrayMatrix::new(2, 2, vec![0.0, 10.0, 200.0, 255.0]).unwrap();
        let gp = dir.path().join("g.png");
        save_gray_png(&gray, &gp).unwrap();
        assert_eq!(load_gray_png(&gp).unwrap(), gray);
    }
}
