//! Grad-CAM on the hazard output of the image network.

use std::path::Path;

use crate::cellgraph::io::save_gray_png;
use crate::cellgraph::GrayMatrix;
use crate::error::{Error, Result};
use crate::nets::{Cnn, OutputHead};
use crate::numcore::{ParamStore, Rng, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Min-max normalised to [0, 1]; all zero when `degenerate`.
    pub values: Vec<f64>,
    /// The raw map was constant, so normalisation was undefined.
    pub degenerate: bool,
    /// Network output the map explains.
    pub target: f64,
}

/// Channel weights are spatial means of the gradient of output neuron
/// `target` with respect to the last conv activation; the map is
/// `ReLU(sum_c weight_c * activation_c)`.
pub fn grad_cam(cnn: &Cnn, head: &OutputHead, store: &ParamStore, image: &Tensor, target: usize) -> Result<Heatmap> {
    if cnn.cfg.conv.is_empty() {
        return Err(Error::Configuration("Grad-CAM needs a convolutional layer".into()));
    }
    if target >= head.task.out_width() {
        return Err(Error::Parameter(format!("output neuron {target} out of range")));
    }
    let mut tape = Tape::new();
    let x = tape.input(image.clone());
    let (flat, map) = cnn.features_with_map(&mut tape, store, x)?;
    let map = map.expect("conv stack is non-empty");
    let mut rng = Rng::new(0, 0);
    let h = cnn.dense(&mut tape, store, flat, &mut rng, false)?;
    let out = head.forward(&mut tape, store, h)?;
    let mut seed = vec![0.0; head.task.out_width()];
    seed[target] = 1.0;
    let grads = tape.backward_with(out, Tensor::new(vec![1, seed.len()], seed)?)?;
    let g = grads.get_or_zeros(&tape, map);
    let a = tape.value(map);
    let [c, hh, ww] = a.shape() else {
        unreachable!("conv maps are [C, H, W]")
    };
    let (c, hh, ww) = (*c, *hh, *ww);
    let hw = hh * ww;
    let mut raw = vec![0.0; hw];
    for ch in 0..c {
        let gc = &g.data()[ch * hw..(ch + 1) * hw];
        let weight = gc.iter().sum::<f64>() / hw as f64;
        for (r, v) in raw.iter_mut().zip(&a.data()[ch * hw..(ch + 1) * hw]) {
            *r += weight * v;
        }
    }
    raw.iter_mut().for_each(|v| *v = v.max(0.0));
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = hi <= lo;
    let values = if degenerate {
        vec![0.0; hw]
    } else {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    };
    Ok(Heatmap {
        height: hh,
        width: ww,
        values,
        degenerate,
        target: tape.value(out).data()[target],
    })
}

impl Heatmap {
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        for row in self.values.chunks(self.width) {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = GrayMatrix::new(self.height, self.width, self.values.iter().map(|v| v * 255.0).collect())?;
        save_gray_png(&img, path)
    }
}
