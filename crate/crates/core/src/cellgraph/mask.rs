use std::collections::{BTreeMap, BTreeSet};

use crate::error::{dim_err, Error, Result};

/// Nuclei segmentation: 0 is background, every positive label one nucleus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMask {
    /// Rejects labels that are split into several 8-connected pieces.
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return dim_err(format!("{} labels for a {height}x{width} mask", labels.len()));
        }
        let mask = Self {
            height,
            width,
            labels,
        };
        mask.check_connected()?;
        Ok(mask)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    pub fn raw(&self) -> &[u32] {
        &self.labels
    }

    /// Distinct nonzero labels, ascending. This is the node order of a graph.
    pub fn label_ids(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.labels.iter().cloned().filter(|&l| l > 0).collect();
        set.into_iter().collect()
    }

    /// Pixel coordinates `(row, col)` of every label.
    pub fn pixels_by_label(&self) -> BTreeMap<u32, Vec<(usize, usize)>> {
        let mut out: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
        for (k, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out.entry(l).or_default().push((k / self.width, k % self.width));
            }
        }
        out
    }

    pub fn pixels_of(&self, label: u32) -> Result<Vec<(usize, usize)>> {
        let px: Vec<(usize, usize)> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label && label > 0)
            .map(|(k, _)| (k / self.width, k % self.width))
            .collect();
        if px.is_empty() {
            return Err(Error::Lookup(format!("label {label} not in mask")));
        }
        Ok(px)
    }

    /// Quarter turn counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let (h, w) = (self.height, self.width);
        let mut labels = vec![0; h * w];
        for r in 0..h {
            for c in 0..w {
                labels[(w - 1 - c) * h + r] = self.get(r, c);
            }
        }
        Self {
            height: w,
            width: h,
            labels,
        }
    }

    fn check_connected(&self) -> Result<()> {
        let mut seen = vec![false; self.labels.len()];
        let mut started = BTreeSet::new();
        let mut stack = Vec::new();
        for start in 0..self.labels.len() {
            let l = self.labels[start];
            if l == 0 || seen[start] {
                continue;
            }
            if !started.insert(l) {
                return Err(Error::Parameter(format!("label {l} is not one connected component")));
            }
            seen[start] = true;
            stack.push(start);
            while let Some(k) = stack.pop() {
                let (r, c) = ((k / self.width) as isize, (k % self.width) as isize);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr < 0 || cc < 0 || rr >= self.height as isize || cc >= self.width as isize {
                            continue;
                        }
                        let kk = rr as usize * self.width + cc as usize;
                        if !seen[kk] && self.labels[kk] == l {
                            seen[kk] = true;
                            stack.push(kk);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Row-major intensity image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayMatrix {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl GrayMatrix {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return dim_err(format!("{} pixels for a {height}x{width} image", pixels.len()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_label_rejected() {
        let r = LabelMask::new(1, 3, vec![1, 0, 1]);
        assert!(r.is_err());
        // Diagonal contact counts as connected.
        assert!(LabelMask::new(2, 2, vec![1, 0, 0, 1]).is_ok());
    }

    #[test]
    fn rotation_round_trip() {
        let m = LabelMask::new(2, 3, vec![1, 1, 0, 0, 2, 2]).unwrap();
        let r = m.rotate90().rotate90().rotate90().rotate90();
        assert_eq!(r, m);
        assert_eq!(m.rotate90().height(), 3);
    }
}
