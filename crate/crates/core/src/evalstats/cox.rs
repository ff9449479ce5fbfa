//! Cox partial likelihood with Breslow tie handling.
//!
//! The risk set of patient `i` is `{j : t_j >= t_i}`; tied event times share
//! one risk set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argsort_by, SurvivalCohort};
use crate::error::{dim_err, Error, Result};

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Groups of indices with equal time, in the order given by `order`.
fn time_groups<'a>(order: &'a [usize], times: &'a [f64]) -> impl Iterator<Item = &'a [usize]> + 'a {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= order.len() {
            return None;
        }
        let t = times[order[start]];
        let mut end = start + 1;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        let g = &order[start..end];
        start = end;
        Some(g)
    })
}

fn check_inputs(scores: &[f64], times: &[f64], events: &[bool]) -> Result<()> {
    if scores.len() != times.len() || times.len() != events.len() {
        return dim_err(format!(
            "{} scores, {} times, {} events",
            scores.len(),
            times.len(),
            events.len()
        ));
    }
    if !events.iter().any(|e| *e) {
        return Err(Error::UndefinedLikelihood("no uncensored patients".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("cox scores".into()));
    }
    Ok(())
}

/// Negative partial log-likelihood
/// `-sum_{i uncensored} (s_i - log sum_{j in R_i} exp(s_j))` and its gradient
/// with respect to every score.
pub fn cox_loss_grad(scores: &[f64], times: &[f64], events: &[bool]) -> Result<(f64, Vec<f64>)> {
    check_inputs(scores, times, events)?;
    let n = scores.len();
    let asc = argsort_by(n, |i| times[i]);
    let desc: Vec<usize> = asc.iter().rev().cloned().collect();

    // Risk-set log-normaliser per event, sweeping from the latest time.
    let mut risk_lse = vec![0.0; n];
    let mut acc = LogSumExp::new();
    let mut loss = 0.0;
    for group in time_groups(&desc, times) {
        for &j in group {
            acc.add(scores[j]);
        }
        let lse = acc.value();
        for &i in group.iter().filter(|&&i| events[i]) {
            risk_lse[i] = lse;
            loss += lse - scores[i];
        }
    }

    // d/ds_k = -delta_k + sum_{i uncensored, t_i <= t_k} exp(s_k - lse_i)
    let mut grad = vec![0.0; n];
    let mut inv = LogSumExp::new();
    for group in time_groups(&asc, times) {
        for &i in group.iter().filter(|&&i| events[i]) {
            inv.add(-risk_lse[i]);
        }
        let log_inv = inv.value();
        for &k in group {
            let share = if log_inv == f64::NEG_INFINITY {
                0.0
            } else {
                (scores[k] + log_inv).exp()
            };
            grad[k] = share - if events[k] { 1.0 } else { 0.0 };
        }
    }
    Ok((loss, grad))
}

impl SurvivalCohort {
    pub fn cox_loss_grad(&self) -> Result<(f64, Vec<f64>)> {
        cox_loss_grad(&self.scores, &self.times, &self.events)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Newton,
    Gradient,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

const FIT_TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-6;

struct Derivatives {
    loss: f64,
    grad: DVector<f64>,
    hessian: Option<DMatrix<f64>>,
}

fn linear_predictor(x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
    (x * beta).iter().cloned().collect()
}

fn derivatives(
    x: &DMatrix<f64>,
    times: &[f64],
    events: &[bool],
    beta: &DVector<f64>,
    with_hessian: bool,
) -> Result<Derivatives> {
    let scores = linear_predictor(x, beta);
    let (loss, dscore) = cox_loss_grad(&scores, times, events)?;
    let grad = x.transpose() * DVector::from_vec(dscore);
    let hessian = with_hessian.then(|| {
        let (n, p) = x.shape();
        let smax = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let desc: Vec<usize> = argsort_by(n, |i| times[i]).into_iter().rev().collect();
        let mut s0 = 0.0;
        let mut s1 = DVector::<f64>::zeros(p);
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut h = DMatrix::<f64>::zeros(p, p);
        for group in time_groups(&desc, times) {
            for &j in group {
                let w = (scores[j] - smax).exp();
                let xj = x.row(j).transpose();
                s0 += w;
                s1 += w * &xj;
                s2 += w * &xj * xj.transpose();
            }
            let d = group.iter().filter(|&&i| events[i]).count() as f64;
            if d > 0.0 {
                let mean = &s1 / s0;
                h += d * (&s2 / s0 - &mean * mean.transpose());
            }
        }
        h
    });
    Ok(Derivatives {
        loss,
        grad,
        hessian,
    })
}

/// Maximises the partial likelihood of `covariates` (one row per patient).
pub fn cox_fit(covariates: &[Vec<f64>], cohort: &SurvivalCohort, method: FitMethod) -> Result<CoxFit> {
    let n = cohort.len();
    if covariates.len() != n {
        return dim_err(format!("{} covariate rows for {n} patients", covariates.len()));
    }
    let p = covariates.first().map_or(0, Vec::len);
    if covariates.iter().any(|r| r.len() != p) {
        return dim_err("ragged covariate rows");
    }
    let x = DMatrix::from_fn(n, p, |i, j| covariates[i][j]);
    let mut beta = DVector::<f64>::zeros(p);
    let (times, events) = (&cohort.times, &cohort.events);
    if p == 0 {
        let (loss, _) = cox_loss_grad(&vec![0.0; n], times, events)?;
        return Ok(CoxFit {
            beta: Vec::new(),
            loss,
            iterations: 0,
            grad_norm: 0.0,
        });
    }

    let max_iter = match method {
        FitMethod::Newton => 200,
        FitMethod::Gradient => 200_000,
    };
    let mut d = derivatives(&x, times, events, &beta, method == FitMethod::Newton)?;
    let mut step: f64 = 1.0;
    // The loss is a sum over events, so the gradient tolerance scales with them.
    let tol = FIT_TOL * cohort.n_events().max(1) as f64;
    for it in 0..max_iter {
        let gnorm = d.grad.norm();
        if gnorm < tol {
            return Ok(CoxFit {
                beta: beta.iter().cloned().collect(),
                loss: d.loss,
                iterations: it,
                grad_norm: gnorm,
            });
        }
        let direction = match method {
            FitMethod::Newton => {
                let h = d.hessian.as_ref().expect("newton carries a hessian")
                    + DMatrix::<f64>::identity(p, p) * RIDGE;
                h.clone().cholesky()
                    .map(|c| c.solve(&d.grad))
                    .or_else(|| h.lu().solve(&d.grad))
                    .ok_or_else(|| Error::Convergence {
                        iterations: it,
                        grad_norm: gnorm,
                    })?
            }
            FitMethod::Gradient => d.grad.clone(),
        };
        // Backtracking line search on the loss.
        let slope = d.grad.dot(&direction);
        if method == FitMethod::Newton && slope < 1e-15 * (1.0 + d.loss.abs()) {
            return Ok(CoxFit {
                beta: beta.iter().cloned().collect(),
                loss: d.loss,
                iterations: it,
                grad_norm: gnorm,
            });
        }
        let mut t = match method {
            FitMethod::Newton => 1.0,
            FitMethod::Gradient => (step * 2.0).min(1e6),
        };
        loop {
            let candidate = &beta - t * &direction;
            let scores = linear_predictor(&x, &candidate);
            let (loss, _) = cox_loss_grad(&scores, times, events)?;
            if loss <= d.loss - 1e-4 * t * slope || t < 1e-16 {
                beta = candidate;
                break;
            }
            t *= 0.5;
        }
        step = t;
        let next = derivatives(&x, times, events, &beta, method == FitMethod::Newton)?;
        if t < 1e-16 && (next.loss - d.loss).abs() == 0.0 {
            return Err(Error::Convergence {
                iterations: it,
                grad_norm: next.grad.norm(),
            });
        }
        d = next;
    }
    Err(Error::Convergence {
        iterations: max_iter,
        grad_norm: d.grad.norm(),
    })
}
