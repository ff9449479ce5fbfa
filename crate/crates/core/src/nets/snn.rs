//! Feed-forward network for genomic profiles.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::numcore::{init_linear, Activation, Init, ParamStore, Rng, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnnConfig {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub activation: Activation,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            input_dim: 80,
            widths: vec![64, 48, 32, 32],
            dropout: 0.25,
            activation: Activation::Elu,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snn {
    pub prefix: String,
    pub cfg: SnnConfig,
}

impl Snn {
    pub fn new(prefix: impl Into<String>, cfg: SnnConfig) -> Self {
        Self {
            prefix: prefix.into(),
            cfg,
        }
    }

    pub fn out_width(&self) -> usize {
        *self.cfg.widths.last().expect("at least one layer")
    }

    pub fn layer_name(&self, i: usize) -> String {
        format!("{}.fc{i}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) {
        let mut fan_in = self.cfg.input_dim;
        for (i, &w) in self.cfg.widths.iter().enumerate() {
            init_linear(store, &self.layer_name(i), fan_in, w, Init::LecunNormal, rng);
            fan_in = w;
        }
    }

    /// `[B, input_dim] -> [B, out_width]`; affine, activation and alpha
    /// dropout per block.
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, x: Var, rng: &mut Rng, training: bool) -> Result<Var> {
        let got = tape.value(x).cols();
        if got != self.cfg.input_dim {
            return dim_err(format!("genomic input has {got} features, network expects {}", self.cfg.input_dim));
        }
        let mut h = x;
        for i in 0..self.cfg.widths.len() {
            h = tape.linear(store, &self.layer_name(i), h)?;
            h = tape.act(h, self.cfg.activation)?;
            h = tape.alpha_dropout(h, self.cfg.dropout, rng, training)?;
        }
        Ok(h)
    }

    /// Weight names of every layer, for L1 penalties.
    pub fn weight_names(&self) -> Vec<String> {
        (0..self.cfg.widths.len())
            .map(|i| format!("{}.weight", self.layer_name(i)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let snn = Snn::new("snn", SnnConfig {
            input_dim: 10,
            ..Default::default()
        });
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1, 0);
        snn.init(&mut store, &mut rng);
        let mut t = Tape::new();
        let x = t.input(Tensor::zeros(&[3, 10]));
        let h = snn.embed(&mut t, &store, x, &mut rng, false).unwrap();
        assert_eq!(t.value(h).shape(), &[3, 32]);
        assert!(t.value(h).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn width_mismatch() {
        let snn = Snn::new("snn", SnnConfig::default());
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1, 0);
        snn.init(&mut store, &mut rng);
        let mut t = Tape::new();
        let x = t.input(Tensor::zeros(&[1, 7]));
        assert!(snn.embed(&mut t, &store, x, &mut rng, false).is_err());
    }
}
