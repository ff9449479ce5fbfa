//! Gating-based modality attention.

use crate::error::{dim_err, Result};
use crate::numcore::{init_linear, Activation, Init, ParamStore, Rng, Tape, Var};

/// Three linear maps for one modality: the transform `W_m`, the joint
/// attention `W_{ctx -> m}` and the output map (which reduces width in
/// trimodal mode).
#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub prefix: String,
    pub in_width: usize,
    pub context_width: usize,
    pub out_width: usize,
}

impl Gate {
    pub fn new(prefix: impl Into<String>, in_width: usize, context_width: usize, out_width: usize) -> Self {
        Self {
            prefix: prefix.into(),
            in_width,
            context_width,
            out_width,
        }
    }

    pub fn transform_name(&self) -> String {
        format!("{}.h", self.prefix)
    }

    pub fn attention_name(&self) -> String {
        format!("{}.z", self.prefix)
    }

    pub fn output_name(&self) -> String {
        format!("{}.o", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) {
        let w = self.in_width;
        init_linear(store, &self.transform_name(), w, w, Init::KaimingUniform, rng);
        init_linear(store, &self.attention_name(), self.context_width, w, Init::KaimingUniform, rng);
        init_linear(store, &self.output_name(), w, self.out_width, Init::KaimingUniform, rng);
    }

    /// `z * ReLU(W_m h)` with `z = sigmoid(W_ctx context)`.
    pub fn gated(&self, tape: &mut Tape, store: &ParamStore, h: Var, context: Var) -> Result<Var> {
        gate(tape, store, &self.transform_name(), &self.attention_name(), h, context)
    }

    /// Gated vector passed through the output map and ReLU.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var, context: Var) -> Result<Var> {
        let g = self.gated(tape, store, h, context)?;
        let o = tape.linear(store, &self.output_name(), g)?;
        tape.act(o, Activation::Relu)
    }
}

pub fn gate(
    tape: &mut Tape,
    store: &ParamStore,
    transform: &str,
    attention: &str,
    h: Var,
    context: Var,
) -> Result<Var> {
    let wz = store.value(&format!("{attention}.weight"))?;
    let ctx_width = tape.value(context).cols();
    if wz.rows() != ctx_width {
        return dim_err(format!("gate context has width {ctx_width}, attention expects {}", wz.rows()));
    }
    let hm = tape.linear(store, transform, h)?;
    let hm = tape.act(hm, Activation::Relu)?;
    let z = tape.linear(store, attention, context)?;
    let z = tape.act(z, Activation::Sigmoid)?;
    tape.mul(z, hm)
}
