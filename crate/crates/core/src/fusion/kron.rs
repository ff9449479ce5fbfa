use crate::error::{dim_err, Result};
use crate::numcore::ops::kron_forward;
use crate::numcore::Tensor;

/// Dense one-appended outer product of a few vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionTensor {
    pub extents: Vec<usize>,
    /// Row-major, first axis slowest.
    pub values: Vec<f64>,
}

/// `[v_1; 1] x [v_2; 1] x ...` for unbatched vectors.
pub fn kron_fuse(vectors: &[&[f64]]) -> Result<FusionTensor> {
    let rows: Vec<Tensor> = vectors
        .iter()
        .map(|v| Tensor::row(v.to_vec()))
        .collect();
    if rows.iter().any(|t| !t.is_finite()) {
        return Err(crate::error::Error::NonFinite("fusion input".into()));
    }
    let refs: Vec<&Tensor> = rows.iter().collect();
    let t = kron_forward(&refs)?;
    Ok(FusionTensor {
        extents: vectors.iter().map(|v| v.len() + 1).collect(),
        values: t.into_data(),
    })
}

impl FusionTensor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.extents.len() || idx.iter().zip(&self.extents).any(|(i, e)| i >= e) {
            return dim_err(format!("index {idx:?} outside extents {:?}", self.extents));
        }
        Ok(idx.iter().zip(&self.extents).fold(0, |acc, (i, e)| acc * e + i))
    }

    pub fn at(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.values[self.flat_index(idx)?])
    }

    /// Entries along `axis` with every other axis at its appended-one
    /// position (the modality's own vector followed by 1).
    pub fn unimodal_slice(&self, axis: usize) -> Result<Vec<f64>> {
        let mut idx: Vec<usize> = self.extents.iter().map(|e| e - 1).collect();
        (0..self.extents[axis])
            .map(|k| {
                idx[axis] = k;
                self.at(&idx)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_product() {
        let t = kron_fuse(&[&[1.0], &[2.0], &[3.0]]).unwrap();
        assert_eq!(t.extents, vec![2, 2, 2]);
        assert_eq!(t.at(&[0, 0, 0]).unwrap(), 6.0);
        assert_eq!(t.at(&[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(t.at(&[0, 1, 0]).unwrap(), 3.0);
        assert_eq!(t.unimodal_slice(1).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn paper_extents() {
        let a = vec![0.5; 32];
        let b = vec![0.25; 16];
        let t = kron_fuse(&[&a, &b, &b]).unwrap();
        assert_eq!(t.extents, vec![33, 17, 17]);
        assert_eq!(t.len(), 9537);
        let t = kron_fuse(&[&a, &a]).unwrap();
        assert_eq!(t.len(), 1089);
        let t = kron_fuse(&[&a, &a, &a]).unwrap();
        assert_eq!(t.extents, vec![33, 33, 33]);
    }
}
