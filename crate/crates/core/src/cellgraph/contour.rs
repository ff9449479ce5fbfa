//! Shape descriptors of one nucleus from its pixel set.

use super::mask::LabelMask;
use crate::error::{Error, Result};

pub const CONTOUR_FEATURE_NAMES: [&str; 8] = [
    "major_axis_length",
    "minor_axis_length",
    "orientation",
    "eccentricity",
    "roundness",
    "area",
    "solidity",
    "perimeter",
];

pub const MIN_AREA: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourFeatures {
    pub major_axis_length: f64,
    pub minor_axis_length: f64,
    /// Radians in (-pi/2, pi/2], angle of the major axis from the column
    /// axis, measured towards increasing row.
    pub orientation: f64,
    pub eccentricity: f64,
    pub roundness: f64,
    pub area: f64,
    pub solidity: f64,
    pub perimeter: f64,
}

impl ContourFeatures {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.major_axis_length,
            self.minor_axis_length,
            self.orientation,
            self.eccentricity,
            self.roundness,
            self.area,
            self.solidity,
            self.perimeter,
        ]
    }
}

pub fn contour_features(mask: &LabelMask, label: u32) -> Result<ContourFeatures> {
    let px = mask.pixels_of(label)?;
    features_from_pixels(&px)
}

pub(crate) fn features_from_pixels(px: &[(usize, usize)]) -> Result<ContourFeatures> {
    if px.len() < MIN_AREA {
        return Err(Error::Parameter(format!(
            "component of {} pixels is below the minimum of {MIN_AREA}",
            px.len()
        )));
    }
    let n = px.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(r, c) in px {
        sx += c as f64;
        sy += r as f64;
    }
    let (mx, my) = (sx / n, sy / n);
    // Central moments of unit squares, not points: each pixel adds 1/12.
    let (mut m20, mut m02, mut m11) = (1.0 / 12.0, 1.0 / 12.0, 0.0);
    for &(r, c) in px {
        let (dx, dy) = (c as f64 - mx, r as f64 - my);
        m20 += dx * dx / n;
        m02 += dy * dy / n;
        m11 += dx * dy / n;
    }
    let half_trace = 0.5 * (m20 + m02);
    let disc = (0.25 * (m20 - m02).powi(2) + m11 * m11).sqrt();
    let l1 = half_trace + disc;
    let l2 = (half_trace - disc).max(0.0);
    let orientation = if disc == 0.0 {
        0.0
    } else {
        0.5 * (2.0 * m11).atan2(m20 - m02)
    };
    let eccentricity = if l1 > 0.0 { (1.0 - l2 / l1).sqrt() } else { 0.0 };
    let perimeter = crofton_perimeter(px);
    let hull = convex_hull_area(px);
    Ok(ContourFeatures {
        major_axis_length: 4.0 * l1.sqrt(),
        minor_axis_length: 4.0 * l2.sqrt(),
        orientation,
        eccentricity,
        roundness: 4.0 * std::f64::consts::PI * n / (perimeter * perimeter),
        area: n,
        solidity: n / hull,
        perimeter,
    })
}

/// Cauchy-Crofton perimeter estimate from boundary entries along lines in
/// four directions (0, 45, 90 and 135 degrees through pixel centres).
fn crofton_perimeter(px: &[(usize, usize)]) -> f64 {
    let (r0, c0) = bbox_min(px);
    let (r1, c1) = bbox_max(px);
    let h = r1 - r0 + 1;
    let w = c1 - c0 + 1;
    let mut grid = vec![false; h * w];
    for &(r, c) in px {
        grid[(r - r0) * w + (c - c0)] = true;
    }
    let at = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && grid[r as usize * w + c as usize]
    };
    // An entry is an inside pixel whose predecessor along the line is outside.
    let mut entries = [0usize; 4];
    for r in 0..h as isize {
        for c in 0..w as isize {
            if !at(r, c) {
                continue;
            }
            entries[0] += usize::from(!at(r, c - 1));
            entries[1] += usize::from(!at(r - 1, c));
            entries[2] += usize::from(!at(r - 1, c - 1));
            entries[3] += usize::from(!at(r - 1, c + 1));
        }
    }
    let straight = (entries[0] + entries[1]) as f64;
    let diagonal = (entries[2] + entries[3]) as f64 * std::f64::consts::FRAC_1_SQRT_2;
    std::f64::consts::FRAC_PI_4 * (straight + diagonal)
}

fn bbox_min(px: &[(usize, usize)]) -> (usize, usize) {
    px.iter()
        .fold((usize::MAX, usize::MAX), |(a, b), &(r, c)| (a.min(r), b.min(c)))
}

fn bbox_max(px: &[(usize, usize)]) -> (usize, usize) {
    px.iter().fold((0, 0), |(a, b), &(r, c)| (a.max(r), b.max(c)))
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Area of the convex hull of all pixel squares (monotone chain).
fn convex_hull_area(px: &[(usize, usize)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = px
        .iter()
        .flat_map(|&(r, c)| {
            let (x, y) = (c as f64, r as f64);
            [(x, y), (x + 1.0, y), (x, y + 1.0), (x + 1.0, y + 1.0)]
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    let m = hull.len();
    (0..m)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % m]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        .abs()
        / 2.0
}
