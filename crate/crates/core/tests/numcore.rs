mod support;

use pathfuse::numcore::ops::{affine_backward, affine_forward, kron_backward, kron_forward};
use pathfuse::numcore::{
    adam_step, finite_diff_check, Activation, Differentiable, LrSchedule, ParamStore, Rng, TapeFn, Tensor,
};
use pathfuse::Result;
use support::{randn, self_normalizes, selu_stack_moments};

struct Affine;

impl Differentiable for Affine {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        affine_forward(&inputs[0], &inputs[1], &inputs[2])
    }

    fn backward(&self, inputs: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let (dx, dw, db) = affine_backward(&inputs[0], &inputs[1], dy)?;
        Ok(vec![dx, dw, db])
    }
}

/// Affine map whose weight gradient is off by a factor.
struct BrokenAffine;

impl Differentiable for BrokenAffine {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
        Affine.forward(inputs)
    }

    fn backward(&self, inputs: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
        let mut g = Affine.backward(inputs, dy)?;
        g[1] = g[1].scale(1.1);
        Ok(g)
    }
}

struct Constant;

impl Differentiable for Constant {
    fn forward(&self, _: &[Tensor]) -> Result<Tensor> {
        Ok(Tensor::vector(vec![2.0, -1.0]))
    }

    fn backward(&self, inputs: &[Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        Ok(inputs.iter().map(|x| Tensor::zeros(x.shape())).collect())
    }
}

fn affine_inputs(rng: &mut Rng) -> Vec<Tensor> {
    vec![randn(&[3, 4], rng), randn(&[4, 2], rng), randn(&[2], rng)]
}

#[test]
fn affine_backward_is_tight() {
    let mut rng = Rng::new(1, 0);
    let c = finite_diff_check(&Affine, &affine_inputs(&mut rng), 1e-7).unwrap();
    assert!(c.passed, "{}", c.max_rel_error);
}

#[test]
fn elu_backward_is_tight() {
    let mut rng = Rng::new(2, 0);
    let x = randn(&[1, 12], &mut rng);
    let f = TapeFn(|t: &mut pathfuse::numcore::Tape, v: &[pathfuse::numcore::Var]| t.act(v[0], Activation::Elu));
    let c = finite_diff_check(&f, &[x], 1e-7).unwrap();
    assert!(c.passed, "{}", c.max_rel_error);
}

#[test]
fn wrong_backward_is_caught() {
    let mut rng = Rng::new(3, 0);
    let c = finite_diff_check(&BrokenAffine, &affine_inputs(&mut rng), 1e-5).unwrap();
    assert!(!c.passed);
    assert!(c.per_input[1] > 1e-3 && c.per_input[0] < 1e-8);
}

#[test]
fn constant_function_passes_with_zero_gradient() {
    let c = finite_diff_check(&Constant, &[Tensor::vector(vec![1.0, 2.0])], 1e-5).unwrap();
    assert!(c.passed);
    assert_eq!(c.max_rel_error, 0.0);
}

#[test]
fn kron_backward_is_tight() {
    struct Kron;
    impl Differentiable for Kron {
        fn forward(&self, inputs: &[Tensor]) -> Result<Tensor> {
            kron_forward(&inputs.iter().collect::<Vec<_>>())
        }
        fn backward(&self, inputs: &[Tensor], dy: &Tensor) -> Result<Vec<Tensor>> {
            kron_backward(&inputs.iter().collect::<Vec<_>>(), dy)
        }
    }
    let mut rng = Rng::new(4, 0);
    for _ in 0..10 {
        let inputs = vec![randn(&[2, 3], &mut rng), randn(&[2, 4], &mut rng), randn(&[2, 2], &mut rng)];
        let c = finite_diff_check(&Kron, &inputs, 1e-6).unwrap();
        assert!(c.passed, "{}", c.max_rel_error);
    }
}

#[test]
fn selu_stack_self_normalizes() {
    let m = selu_stack_moments(10_000, 64, 4, 8);
    assert!(self_normalizes(&m), "{m:?}");
}

fn train_once(seed: u64) -> ParamStore {
    let mut rng = Rng::new(seed, 0);
    let mut store = ParamStore::new();
    pathfuse::numcore::init_linear(&mut store, "l", 4, 1, pathfuse::numcore::Init::LecunNormal, &mut rng);
    let x = randn(&[16, 4], &mut rng);
    let target = randn(&[16, 1], &mut rng);
    let schedule = LrSchedule::LinearDecay { flat_epochs: 2, decay_epochs: 5 };
    for epoch in 0..8 {
        let mut tape = pathfuse::numcore::Tape::new();
        let xv = tape.input(x.clone());
        let y = tape.linear(&store, "l", xv).unwrap();
        let y = tape.alpha_dropout(y, 0.2, &mut rng, true).unwrap();
        let t = tape.input(target.clone());
        let neg = tape.scale_shift(t, -1.0, 0.0);
        let d = tape.add(y, neg).unwrap();
        let sq = tape.mul(d, d).unwrap();
        let loss = tape.sum_all(sq);
        let g = tape.backward(loss).unwrap();
        store.zero_grad();
        g.accumulate_into(&tape, &mut store).unwrap();
        adam_step(&mut store, 0.01, &schedule, epoch).unwrap();
    }
    store
}

#[test]
fn same_seed_same_trajectory() {
    let a = train_once(9);
    let b = train_once(9);
    for ((na, ea), (nb, eb)) in a.iter().zip(b.iter()) {
        assert_eq!(na, nb);
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&ea.value), bits(&eb.value));
        assert_eq!(bits(&ea.m), bits(&eb.m));
        assert_eq!(bits(&ea.v), bits(&eb.v));
    }
    assert_ne!(train_once(10), a);
}
