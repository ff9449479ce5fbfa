//! Small convolutional embedder for histology image crops.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::numcore::ops::ConvGeometry;
use crate::numcore::{init_conv, init_linear, Activation, Init, ParamStore, Rng, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub side: usize,
    pub in_channels: usize,
    /// Each layer is conv (same padding) -> ReLU -> max pool.
    pub conv: Vec<ConvLayer>,
    pub pool: usize,
    /// Fully connected widths after flattening; the last is the embedding.
    pub fc_widths: Vec<usize>,
    pub dropout: f64,
    /// Dropout after the last hidden layer.
    pub final_dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            side: 64,
            in_channels: 3,
            conv: vec![
                ConvLayer { channels: 8, kernel: 3, stride: 1 },
                ConvLayer { channels: 16, kernel: 3, stride: 1 },
                ConvLayer { channels: 16, kernel: 3, stride: 1 },
            ],
            pool: 2,
            fc_widths: vec![64, 32],
            dropout: 0.25,
            final_dropout: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    pub prefix: String,
    pub cfg: CnnConfig,
}

impl Cnn {
    pub fn new(prefix: impl Into<String>, cfg: CnnConfig) -> Result<Self> {
        let cnn = Self {
            prefix: prefix.into(),
            cfg,
        };
        cnn.flat_width()?;
        if cnn.cfg.fc_widths.is_empty() {
            return Err(Error::Configuration("image network needs at least one dense layer".into()));
        }
        Ok(cnn)
    }

    pub fn out_width(&self) -> usize {
        *self.cfg.fc_widths.last().expect("validated")
    }

    /// Flattened width after the conv stack.
    pub fn flat_width(&self) -> Result<usize> {
        let (mut c, mut h, mut w) = (self.cfg.in_channels, self.cfg.side, self.cfg.side);
        for layer in &self.cfg.conv {
            if layer.kernel == 0 || layer.stride == 0 || h + 2 * (layer.kernel / 2) < layer.kernel {
                return Err(Error::Configuration(format!("bad conv layer {layer:?}")));
            }
            let g = ConvGeometry {
                in_channels: c,
                height: h,
                width: w,
                out_channels: layer.channels,
                kernel: layer.kernel,
                stride: layer.stride,
                pad: layer.kernel / 2,
            };
            (h, w) = g.out_hw();
            c = layer.channels;
            if self.cfg.pool > 1 {
                if h < self.cfg.pool || w < self.cfg.pool {
                    return Err(Error::Configuration(format!(
                        "image side {} too small for the conv stack",
                        self.cfg.side
                    )));
                }
                h /= self.cfg.pool;
                w /= self.cfg.pool;
            }
        }
        Ok(c * h * w)
    }

    fn conv_name(&self, i: usize) -> String {
        format!("{}.conv{i}", self.prefix)
    }

    fn fc_name(&self, i: usize) -> String {
        format!("{}.fc{i}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) {
        let mut c = self.cfg.in_channels;
        for (i, layer) in self.cfg.conv.iter().enumerate() {
            init_conv(store, &self.conv_name(i), c, layer.channels, layer.kernel, Init::KaimingUniform, rng);
            c = layer.channels;
        }
        let mut fan_in = self.flat_width().expect("validated at construction");
        for (i, &w) in self.cfg.fc_widths.iter().enumerate() {
            init_linear(store, &self.fc_name(i), fan_in, w, Init::KaimingUniform, rng);
            fan_in = w;
        }
    }

    /// Conv stack of one `[C, side, side]` image, flattened to `[1, F]`.
    pub fn features(&self, tape: &mut Tape, store: &ParamStore, image: Var) -> Result<Var> {
        Ok(self.features_with_map(tape, store, image)?.0)
    }

    /// Flattened features plus the last conv layer's activation map
    /// (after ReLU, before pooling).
    pub fn features_with_map(&self, tape: &mut Tape, store: &ParamStore, image: Var) -> Result<(Var, Option<Var>)> {
        let shape = tape.value(image).shape().to_vec();
        if shape != [self.cfg.in_channels, self.cfg.side, self.cfg.side] {
            return dim_err(format!(
                "image shape {shape:?}, network expects [{}, {}, {}]",
                self.cfg.in_channels, self.cfg.side, self.cfg.side
            ));
        }
        let mut h = image;
        let mut last_map = None;
        for (i, layer) in self.cfg.conv.iter().enumerate() {
            let name = self.conv_name(i);
            let w = tape.param(store, &format!("{name}.weight"))?;
            let b = tape.param(store, &format!("{name}.bias"))?;
            h = tape.conv2d(h, w, b, layer.stride, layer.kernel / 2)?;
            h = tape.act(h, Activation::Relu)?;
            last_map = Some(h);
            if self.cfg.pool > 1 {
                h = tape.max_pool2d(h, self.cfg.pool)?;
            }
        }
        let flat = tape.value(h).len();
        Ok((tape.reshape(h, &[1, flat])?, last_map))
    }

    /// Dense layers on stacked conv features, `[B, F] -> [B, out_width]`.
    pub fn dense(&self, tape: &mut Tape, store: &ParamStore, x: Var, rng: &mut Rng, training: bool) -> Result<Var> {
        let mut h = x;
        let last = self.cfg.fc_widths.len() - 1;
        for i in 0..=last {
            h = tape.linear(store, &self.fc_name(i), h)?;
            h = tape.act(h, Activation::Relu)?;
            let p = if i == last { self.cfg.final_dropout } else { self.cfg.dropout };
            h = tape.dropout(h, p, rng, training)?;
        }
        Ok(h)
    }

    /// Embeds a batch of `[C, side, side]` images to `[B, out_width]`.
    pub fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        images: &[Var],
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let rows = images
            .iter()
            .map(|&im| self.features(tape, store, im))
            .collect::<Result<Vec<_>>>()?;
        let h = tape.concat_rows(&rows)?;
        self.dense(tape, store, h, rng, training)
    }
}
