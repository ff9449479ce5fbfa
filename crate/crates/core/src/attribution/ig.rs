use serde::Serialize;

use super::quadrature::gauss_legendre_unit;
use crate::error::{dim_err, Error, Result};
use crate::numcore::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IgMode {
    /// Input is a feature vector (or a batch row).
    Vector,
    /// Input is an `[N, F]` node-feature matrix; adjacency stays fixed.
    Graph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Attribution {
    /// Same shape as the input.
    pub scores: Tensor,
    pub baseline: Tensor,
    pub nodes: usize,
    pub mode: IgMode,
}

/// Result of attributing a scalar model output to several inputs at once.
#[derive(Clone, Debug)]
pub struct IgResult {
    pub attributions: Vec<Attribution>,
    pub output: f64,
    pub baseline_output: f64,
}

impl IgResult {
    /// `|sum of attributions - (F(x) - F(baseline))|`.
    pub fn completeness_gap(&self) -> f64 {
        let total: f64 = self.attributions.iter().map(|a| a.scores.sum()).sum();
        (total - (self.output - self.baseline_output)).abs()
    }
}

/// Integrated gradients of a scalar model output over the straight path from
/// `baselines` to `inputs`, with Gauss-Legendre quadrature.
pub fn integrated_gradients<F>(
    model: F,
    inputs: &[Tensor],
    baselines: &[Tensor],
    modes: &[IgMode],
    nodes: usize,
) -> Result<IgResult>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if inputs.len() != baselines.len() || inputs.len() != modes.len() {
        return dim_err("inputs, baselines and modes differ in count");
    }
    for (x, b) in inputs.iter().zip(baselines) {
        if x.shape() != b.shape() {
            return dim_err(format!("baseline shape {:?} vs input {:?}", b.shape(), x.shape()));
        }
    }
    if nodes < 2 {
        return Err(Error::Parameter("integrated gradients need at least two nodes".into()));
    }
    let (alphas, weights) = gauss_legendre_unit(nodes)?;
    let diffs: Vec<Tensor> = inputs
        .iter()
        .zip(baselines)
        .map(|(x, b)| x.zip_map(b, |p, q| p - q))
        .collect::<Result<_>>()?;
    let eval = |alpha: f64, with_grad: bool| -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = baselines
            .iter()
            .zip(&diffs)
            .map(|(b, d)| {
                let point = b.zip_map(d, |p, q| p + alpha * q).expect("shapes checked");
                tape.input_grad(point)
            })
            .collect();
        let out = model(&mut tape, &vars)?;
        if tape.value(out).len() != 1 {
            return dim_err("attributed model must return a scalar");
        }
        let value = tape.scalar(out);
        if !with_grad {
            return Ok((value, Vec::new()));
        }
        let grads = tape.backward(out)?;
        Ok((value, vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect()))
    };

    let mut acc: Vec<Tensor> = inputs.iter().map(|x| Tensor::zeros(x.shape())).collect();
    for (&a, &w) in alphas.iter().zip(&weights) {
        let (_, grads) = eval(a, true)?;
        for (s, g) in acc.iter_mut().zip(&grads) {
            s.add_assign(&g.scale(w))?;
        }
    }
    let output = eval(1.0, false)?.0;
    let baseline_output = eval(0.0, false)?.0;
    let attributions = acc
        .into_iter()
        .zip(&diffs)
        .zip(baselines)
        .zip(modes)
        .map(|(((s, d), b), &mode)| {
            Ok(Attribution {
                scores: s.zip_map(d, |g, dx| g * dx)?,
                baseline: b.clone(),
                nodes,
                mode,
            })
        })
        .collect::<Result<_>>()?;
    Ok(IgResult {
        attributions,
        output,
        baseline_output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, ParamStore};

    #[test]
    fn linear_model_is_exact() {
        let w = Tensor::new(vec![3, 1], vec![0.5, -2.0, 0.0]).unwrap();
        let x = Tensor::row(vec![1.5, 0.25, 7.0]);
        let r = integrated_gradients(
            |t, v| {
                let wv = t.input(w.clone());
                let b = t.input(Tensor::zeros(&[1]));
                t.affine(v[0], wv, b)
            },
            &[x.clone()],
            &[Tensor::zeros(&[1, 3])],
            &[IgMode::Vector],
            51,
        )
        .unwrap();
        // Exact up to rounding of the quadrature weights (they sum to 1 +- ulp).
        let s = r.attributions[0].scores.data();
        assert!((s[0] - 0.5 * 1.5).abs() < 1e-14);
        assert!((s[1] + 2.0 * 0.25).abs() < 1e-14);
        assert_eq!(s[2], 0.0);
        assert!(r.completeness_gap() < 1e-14);
    }

    #[test]
    fn baseline_input_gets_zero() {
        let x = Tensor::row(vec![0.3, -0.7]);
        let r = integrated_gradients(
            |t, v| {
                let y = t.act(v[0], Activation::Elu)?;
                Ok(t.sum_all(y))
            },
            &[x.clone()],
            &[x.clone()],
            &[IgMode::Vector],
            8,
        )
        .unwrap();
        assert!(r.attributions[0].scores.data().iter().all(|v| *v == 0.0));
    }

    fn two_layer(t: &mut Tape, x: Var, store: &ParamStore) -> Result<Var> {
        let h = t.linear(store, "l0", x)?;
        let h = t.act(h, Activation::Elu)?;
        let y = t.linear(store, "l1", h)?;
        t.act(y, Activation::Sigmoid)
    }

    #[test]
    fn matches_dense_riemann_sum() {
        let mut store = ParamStore::new();
        let mut rng = crate::numcore::Rng::new(9, 0);
        crate::numcore::init_linear(&mut store, "l0", 4, 6, crate::numcore::Init::LecunNormal, &mut rng);
        crate::numcore::init_linear(&mut store, "l1", 6, 1, crate::numcore::Init::LecunNormal, &mut rng);
        let x = Tensor::row(vec![1.2, -0.4, 2.0, 0.7]);
        let zero = Tensor::zeros(&[1, 4]);
        let r = integrated_gradients(|t, v| two_layer(t, v[0], &store), &[x.clone()], &[zero], &[IgMode::Vector], 51)
            .unwrap();
        let steps = 10_000;
        let mut riemann = vec![0.0; 4];
        for k in 0..steps {
            let a = k as f64 / steps as f64;
            let mut t = Tape::new();
            let v = t.input_grad(x.scale(a));
            let y = two_layer(&mut t, v, &store).unwrap();
            let g = t.backward(y).unwrap();
            for (acc, gi) in riemann.iter_mut().zip(g.get(v).unwrap().data()) {
                *acc += gi / steps as f64;
            }
        }
        for i in 0..4 {
            let oracle = riemann[i] * x.data()[i];
            assert!((r.attributions[0].scores.data()[i] - oracle).abs() < 1e-4);
        }
        assert!(r.completeness_gap() < 1e-3);
    }

    #[test]
    fn shape_mismatch() {
        let r = integrated_gradients(
            |t, v| Ok(t.sum_all(v[0])),
            &[Tensor::zeros(&[1, 3])],
            &[Tensor::zeros(&[1, 2])],
            &[IgMode::Vector],
            5,
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
