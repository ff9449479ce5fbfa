//! Grey-level co-occurrence texture descriptors.

use serde::{Deserialize, Serialize};

use super::mask::GrayMatrix;
use crate::error::{dim_err, Error, Result};

pub const GLCM_FEATURE_NAMES: [&str; 4] = ["dissimilarity", "homogeneity", "asm", "energy"];
pub const GLCM_SIDE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlcmConfig {
    pub levels: usize,
    /// `(d_row, d_col)` pixel offsets; matrices are averaged over them.
    pub offsets: Vec<(usize, usize)>,
    pub side: usize,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            offsets: vec![(0, 1), (1, 0)],
            side: GLCM_SIDE,
        }
    }
}

/// Min-max quantisation to `levels` bins; a flat crop maps to level 0.
fn quantize(crop: &GrayMatrix, levels: usize) -> Vec<usize> {
    let lo = crop.pixels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = crop.pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0; crop.pixels.len()];
    }
    crop.pixels
        .iter()
        .map(|v| (((v - lo) / (hi - lo) * levels as f64) as usize).min(levels - 1))
        .collect()
}

/// `[dissimilarity, homogeneity, asm, energy]` of a square crop.
pub fn glcm_features(crop: &GrayMatrix, cfg: &GlcmConfig) -> Result<[f64; 4]> {
    if crop.height != cfg.side || crop.width != cfg.side {
        return dim_err(format!(
            "GLCM crop is {}x{}, expected {}x{}",
            crop.height, crop.width, cfg.side, cfg.side
        ));
    }
    if cfg.levels < 2 || cfg.offsets.is_empty() {
        return Err(Error::Configuration("GLCM needs >= 2 levels and an offset".into()));
    }
    if crop.pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GLCM crop".into()));
    }
    let q = quantize(crop, cfg.levels);
    let l = cfg.levels;
    let mut p = vec![0.0; l * l];
    for &(dr, dc) in &cfg.offsets {
        let mut counts = vec![0.0; l * l];
        let mut total = 0.0;
        for r in 0..crop.height.saturating_sub(dr) {
            for c in 0..crop.width.saturating_sub(dc) {
                let a = q[r * crop.width + c];
                let b = q[(r + dr) * crop.width + c + dc];
                counts[a * l + b] += 1.0;
                counts[b * l + a] += 1.0;
                total += 2.0;
            }
        }
        if total == 0.0 {
            return Err(Error::Configuration(format!("offset ({dr},{dc}) leaves the crop")));
        }
        for (acc, c) in p.iter_mut().zip(&counts) {
            *acc += c / total / cfg.offsets.len() as f64;
        }
    }
    let (mut dis, mut hom, mut asm) = (0.0, 0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let v = p[i * l + j];
            let d = i as f64 - j as f64;
            dis += v * d.abs();
            hom += v / (1.0 + d * d);
            asm += v * v;
        }
    }
    Ok([dis, hom, asm, asm.sqrt()])
}

/// Reflect an index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// `side x side` window centred on `(row, col)`, mirror-padded at borders.
pub fn crop_centered(img: &GrayMatrix, row: f64, col: f64, side: usize) -> GrayMatrix {
    let r0 = row.round() as isize - side as isize / 2;
    let c0 = col.round() as isize - side as isize / 2;
    let mut pixels = Vec::with_capacity(side * side);
    for r in 0..side as isize {
        for c in 0..side as isize {
            pixels.push(img.get(reflect(r0 + r, img.height), reflect(c0 + c, img.width)));
        }
    }
    GrayMatrix {
        height: side,
        width: side,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn tile(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> GrayMatrix {
        let pixels = (0..side * side).map(|k| f(k / side, k % side)).collect();
        GrayMatrix::new(side, side, pixels).unwrap()
    }

    #[test]
    fn constant_crop() {
        let f = glcm_features(&tile(64, |_, _| 7.0), &GlcmConfig::default()).unwrap();
        assert_eq!(f, [0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn vertical_stripes_two_levels() {
        let cfg = GlcmConfig {
            levels: 2,
            offsets: vec![(0, 1)],
            side: 64,
        };
        let f = glcm_features(&tile(64, |_, c| (c % 2) as f64), &cfg).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!((f[1] - 0.5).abs() < 1e-12);
        assert!((f[2] - 0.5).abs() < 1e-12);
        assert!((f[3] - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn energy_is_root_asm() {
        let mut rng = Rng::new(3, 0);
        let crop = tile(64, |_, _| rng_value(&mut rng));
        let f = glcm_features(&crop, &GlcmConfig::default()).unwrap();
        assert!((f[3] - f[2].sqrt()).abs() < 1e-12);
        let total_hom = f[1];
        assert!(total_hom > 0.0 && total_hom <= 1.0);
    }

    fn rng_value(rng: &mut Rng) -> f64 {
        rng.uniform() * 255.0
    }

    #[test]
    fn wrong_size_rejected() {
        let r = glcm_features(&tile(32, |_, _| 0.0), &GlcmConfig::default());
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn mirror_padding() {
        let img = tile(4, |r, c| (r * 4 + c) as f64);
        let crop = crop_centered(&img, 0.0, 0.0, 4);
        // Rows -2..2 map to 2,1,0,1.
        assert_eq!(crop.get(0, 2), img.get(2, 0));
        assert_eq!(crop.get(1, 1), img.get(1, 1));
        assert_eq!(crop.get(3, 3), img.get(1, 1));
        let big = crop_centered(&img, 1.0, 1.0, 64);
        assert_eq!(big.height, 64);
    }
}
