//! Central finite-difference verification of analytic backward passes.

use super::params::ParamStore;
use super::rng::Rng;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// An operation with an explicit backward pass.
pub trait Differentiable {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor>;
    /// Gradients with respect to each input given the upstream gradient.
    fn backward(&self, inputs: &[Tensor], grad_output: &Tensor) -> Result<Vec<Tensor>>;
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Worst entry error relative to the largest gradient magnitude.
    pub max_rel_error: f64,
    pub per_input: Vec<f64>,
    pub passed: bool,
}

/// Compares `backward` against central differences of the scalar
/// `sum(r * forward(x))` for a fixed random projection `r`.
pub fn finite_diff_check(f: &dyn Differentiable, inputs: &[Tensor], tol: f64) -> Result<GradCheck> {
    let y = f.forward(inputs)?;
    let mut rng = Rng::new(0x5EED_CAFE, 0);
    let proj = Tensor::new(
        y.shape().to_vec(),
        (0..y.len()).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )?;
    let analytic = f.backward(inputs, &proj)?;

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + FD_STEP;
            let plus = f.forward(&work)?.dot(&proj);
            work[k].data_mut()[i] = orig - FD_STEP;
            let minus = f.forward(&work)?.dot(&proj);
            work[k].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * FD_STEP);
        }
        numeric.push(g);
    }

    let scale = analytic
        .iter()
        .chain(&numeric)
        .map(Tensor::max_abs)
        .fold(0.0, f64::max);
    let denom = if scale < 1e-12 { 1.0 } else { scale };
    let per_input: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            a.data()
                .iter()
                .zip(n.data())
                .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
                / denom
        })
        .collect();
    let max_rel_error = per_input.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheck {
        max_rel_error,
        passed: max_rel_error < tol && analytic.len() == inputs.len(),
        per_input,
    })
}

/// Adapts a tape-building closure to [`Differentiable`]: each input becomes a
/// gradient-tracked leaf.
pub struct TapeFn<F>(pub F);

impl<F> Differentiable for TapeFn<F>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input_grad(t.clone())).collect();
        let out = (self.0)(&mut tape, &vars)?;
        Ok(tape.value(out).clone())
    }

    fn backward(&self, inputs: &[Tensor], grad_output: &Tensor) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input_grad(t.clone())).collect();
        let out = (self.0)(&mut tape, &vars)?;
        let grads = tape.backward_with(out, grad_output.clone())?;
        Ok(vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect())
    }
}

/// Adapts a network forward pass to [`Differentiable`]. The inputs are the
/// data tensors (gradient-tracked leaves) followed by the values of the
/// parameters listed in `params`, which replace those in `store`.
pub struct StoreFn<'a, F> {
    pub store: &'a ParamStore,
    pub params: Vec<String>,
    pub n_data: usize,
    pub f: F,
}

impl<F> StoreFn<'_, F>
where
    F: Fn(&mut Tape, &ParamStore, &[Var]) -> Result<Var>,
{
    /// Data tensors followed by the current parameter values.
    pub fn inputs(&self, data: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut all = data.to_vec();
        for name in &self.params {
            all.push(self.store.value(name)?.clone());
        }
        Ok(all)
    }

    fn run(&self, inputs: &[Tensor]) -> Result<(Tape, ParamStore, Vec<Var>, Var)> {
        let mut store = self.store.clone();
        for (name, t) in self.params.iter().zip(&inputs[self.n_data..]) {
            store.set_value(name, t.clone())?;
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs[..self.n_data].iter().map(|t| tape.input_grad(t.clone())).collect();
        let out = (self.f)(&mut tape, &store, &vars)?;
        Ok((tape, store, vars, out))
    }
}

impl<F> Differentiable for StoreFn<'_, F>
where
    F: Fn(&mut Tape, &ParamStore, &[Var]) -> Result<Var>,
{
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        let (tape, _, _, out) = self.run(inputs)?;
        Ok(tape.value(out).clone())
    }

    fn backward(&self, inputs: &[Tensor], grad_output: &Tensor) -> Result<Vec<Tensor>> {
        let (tape, mut store, vars, out) = self.run(inputs)?;
        let grads = tape.backward_with(out, grad_output.clone())?;
        store.zero_grad();
        grads.accumulate_into(&tape, &mut store)?;
        let mut result: Vec<Tensor> = vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect();
        for name in &self.params {
            let entry = store
                .entry(name)
                .ok_or_else(|| crate::error::Error::Lookup(format!("parameter `{name}`")))?;
            result.push(entry.grad.clone());
        }
        Ok(result)
    }
}
