use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Learning-rate multiplier per epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    Constant,
    /// Full rate for `flat_epochs`, then linear decay reaching zero after
    /// `decay_epochs` more epochs.
    LinearDecay { flat_epochs: usize, decay_epochs: usize },
}

impl LrSchedule {
    pub fn factor(&self, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::LinearDecay {
                flat_epochs,
                decay_epochs,
            } => {
                if epoch < flat_epochs {
                    1.0
                } else if decay_epochs == 0 {
                    0.0
                } else {
                    (1.0 - (epoch - flat_epochs) as f64 / decay_epochs as f64).max(0.0)
                }
            }
        }
    }
}

/// One Adam update of every trainable parameter from its accumulated
/// gradient; gradients are cleared afterwards.
pub fn adam_step(params: &mut ParamStore, lr: f64, schedule: &LrSchedule, epoch: usize) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Parameter(format!("learning rate {lr} must be positive")));
    }
    let rate = lr * schedule.factor(epoch);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let e = params.entry_mut(&name).expect("name from store");
        if !e.trainable {
            e.grad.data_mut().fill(0.0);
            continue;
        }
        e.step += 1;
        let t = e.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let g = e.grad.data().to_vec();
        let (m, v) = (e.m.data_mut(), e.v.data_mut());
        for i in 0..g.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        }
        let (m, v) = (e.m.data().to_vec(), e.v.data().to_vec());
        for (i, w) in e.value.data_mut().iter_mut().enumerate() {
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            *w -= rate * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        e.grad.data_mut().fill(0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Rng, Tensor};

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![1.0, -2.0, 0.5]));
        store.accumulate_grad("w", &Tensor::vector(vec![3.0, -0.01, 100.0])).unwrap();
        adam_step(&mut store, 0.002, &LrSchedule::Constant, 0).unwrap();
        let w = store.value("w").unwrap().data();
        for (got, (start, sign)) in w.iter().zip([(1.0, 1.0), (-2.0, -1.0), (0.5, 1.0)]) {
            assert!((got - (start - 0.002 * sign)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut store = ParamStore::new();
        assert!(adam_step(&mut store, 0.0, &LrSchedule::Constant, 0).is_err());
    }

    #[test]
    fn linear_decay_schedule() {
        let s = LrSchedule::LinearDecay {
            flat_epochs: 5,
            decay_epochs: 25,
        };
        assert_eq!(s.factor(0), 1.0);
        assert_eq!(s.factor(4), 1.0);
        assert_eq!(s.factor(5), 1.0);
        assert!((s.factor(10) - 0.8).abs() < 1e-15);
        assert_eq!(s.factor(30), 0.0);
        assert_eq!(s.factor(99), 0.0);
    }

    #[test]
    fn trajectory_matches_reference_recurrence() {
        // Straight-line Adam recurrences on a quadratic, written independently.
        let mut rng = Rng::new(9, 0);
        let init: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let target: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let (lr, b1, b2, eps) = (0.01_f64, 0.9_f64, 0.999_f64, 1e-8_f64);

        let mut theta = init.clone();
        let mut m = vec![0.0; 6];
        let mut v = vec![0.0; 6];
        for t in 1..=10 {
            for i in 0..6 {
                let g = 2.0 * (theta[i] - target[i]);
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mh = m[i] / (1.0 - b1.powi(t));
                let vh = v[i] / (1.0 - b2.powi(t));
                theta[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }

        let mut store = ParamStore::new();
        store.insert("p", Tensor::vector(init));
        for _ in 0..10 {
            let g: Vec<f64> = store
                .value("p")
                .unwrap()
                .data()
                .iter()
                .zip(&target)
                .map(|(p, t)| 2.0 * (p - t))
                .collect();
            store.accumulate_grad("p", &Tensor::vector(g)).unwrap();
            adam_step(&mut store, lr, &LrSchedule::Constant, 0).unwrap();
        }
        let got = store.value("p").unwrap().data();
        for (a, b) in got.iter().zip(&theta) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        store.insert("a.w", Tensor::vector(vec![1.0]));
        store.insert("b.w", Tensor::vector(vec![1.0]));
        store.set_trainable("a.", false);
        store.accumulate_grad("a.w", &Tensor::vector(vec![1.0])).unwrap();
        store.accumulate_grad("b.w", &Tensor::vector(vec![1.0])).unwrap();
        adam_step(&mut store, 0.1, &LrSchedule::Constant, 0).unwrap();
        assert_eq!(store.value("a.w").unwrap().data(), &[1.0]);
        assert!(store.value("b.w").unwrap().data()[0] < 1.0);
    }
}
