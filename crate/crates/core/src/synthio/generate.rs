//! Synthetic cohorts with a known generating hazard.
//!
//! Each patient draws genomic `g ~ N(0, I)` and a latent `u ~ N(0, 1)`. The
//! latent sets the amplitude of a periodic colour pattern in the image and
//! the odds of a dense cluster of elongated dark nuclei (the motif) in the
//! cell graph. The log-hazard is
//!
//! `beta_gen . g + beta_img * u + beta_graph * motif + beta_int * g[0] * motif`
//!
//! and survival times are exponential with rate `exp(risk)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, Instance, PatientRecord, RgbImage};
use crate::cellgraph::{build_cell_graph, GraphConfig, GrayMatrix, LabelMask};
use crate::error::{Error, Result};
use crate::evalstats::{c_index, hazard_bins, BinScheme, SurvivalCohort};
use crate::numcore::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub genomic_dim: usize,
    /// Leading genomic coefficients; the remaining columns carry no signal.
    pub beta_gen: Vec<f64>,
    pub beta_img: f64,
    pub beta_graph: f64,
    pub beta_int: f64,
    /// Fraction of patients censored.
    pub censoring: f64,
    /// Pixel noise standard deviation on the 0..255 scale.
    pub noise: f64,
    pub seed: u64,
    pub image_side: usize,
    /// Side of the square nucleus canvas.
    pub canvas: usize,
    pub nuclei: usize,
    pub motif_nuclei: usize,
    pub rois_per_patient: usize,
    /// Fraction of patients generated without a genomic profile.
    pub missing_genomic: f64,
    pub time_scale: f64,
    pub graph: GraphConfig,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 600,
            genomic_dim: 32,
            beta_gen: vec![0.5, -0.5, 0.4],
            beta_img: 0.7,
            beta_graph: 0.8,
            beta_int: 1.0,
            censoring: 0.3,
            noise: 12.0,
            seed: 17,
            image_side: 32,
            canvas: 96,
            nuclei: 24,
            motif_nuclei: 8,
            rois_per_patient: 1,
            missing_genomic: 0.0,
            time_scale: 365.0,
            graph: GraphConfig::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(0.0..1.0).contains(&self.censoring) {
            return bad("censoring rate must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.missing_genomic) {
            return bad("missing_genomic must lie in [0, 1]");
        }
        if self.n == 0 || self.genomic_dim == 0 || self.rois_per_patient == 0 {
            return bad("n, genomic_dim and rois_per_patient must be positive");
        }
        if self.beta_gen.len() > self.genomic_dim {
            return bad("more genomic coefficients than genomic columns");
        }
        if self.image_side < 8 || self.canvas < 32 {
            return bad("image_side must be >= 8 and canvas >= 32");
        }
        if self.nuclei < 2 || self.motif_nuclei > self.nuclei {
            return bad("need >= 2 nuclei and motif_nuclei <= nuclei");
        }
        let finite = [self.beta_img, self.beta_graph, self.beta_int, self.noise, self.time_scale];
        if finite.iter().chain(&self.beta_gen).any(|v| !v.is_finite()) || self.noise < 0.0 || self.time_scale <= 0.0 {
            return bad("coefficients must be finite, noise >= 0, time_scale > 0");
        }
        Ok(())
    }

    pub fn risk(&self, g: &[f64], u: f64, motif: bool) -> f64 {
        let m = if motif { 1.0 } else { 0.0 };
        let lin: f64 = self.beta_gen.iter().zip(g).map(|(b, x)| b * x).sum();
        lin + self.beta_img * u + self.beta_graph * m + self.beta_int * g[0] * m
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Periodic colour pattern whose amplitude is proportional to `u`.
fn synth_image(side: usize, u: f64, noise: f64, rng: &mut Rng) -> RgbImage {
    const AMP: [f64; 3] = [40.0, -30.0, 20.0];
    let phase: Vec<f64> = (0..3).map(|_| rng.uniform_range(0.0, std::f64::consts::TAU)).collect();
    let mut data = Vec::with_capacity(3 * side * side);
    for y in 0..side {
        for x in 0..side {
            for c in 0..3 {
                let wave = 0.6 + 0.4 * (std::f64::consts::TAU * (x + y) as f64 / 8.0 + phase[c]).sin();
                let v = 128.0 + AMP[c] * u * wave + noise * rng.normal();
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage::new(side, side, data).expect("sized above")
}

struct Canvas {
    side: usize,
    labels: Vec<u32>,
    gray: Vec<f64>,
}

impl Canvas {
    /// Rasterises an ellipse if it fits without touching another nucleus.
    fn try_place(&mut self, label: u32, c: [f64; 2], a: f64, b: f64, theta: f64, tone: f64) -> bool {
        let s = self.side as isize;
        let r = a.ceil() as isize + 1;
        let (ct, st) = (theta.cos(), theta.sin());
        let mut px = Vec::new();
        for row in (c[1] as isize - r)..=(c[1] as isize + r) {
            for col in (c[0] as isize - r)..=(c[0] as isize + r) {
                let (dx, dy) = (col as f64 - c[0], row as f64 - c[1]);
                let p = dx * ct + dy * st;
                let q = -dx * st + dy * ct;
                if (p / a).powi(2) + (q / b).powi(2) <= 1.0 {
                    if row < 1 || col < 1 || row >= s - 1 || col >= s - 1 {
                        return false;
                    }
                    px.push((row as usize, col as usize));
                }
            }
        }
        if px.len() < 6 {
            return false;
        }
        let side = self.side;
        let clear = px.iter().all(|&(r0, c0)| {
            (r0 - 1..=r0 + 1).all(|rr| (c0 - 1..=c0 + 1).all(|cc| self.labels[rr * side + cc] == 0))
        });
        if !clear {
            return false;
        }
        for (r0, c0) in px {
            self.labels[r0 * side + c0] = label;
            self.gray[r0 * side + c0] = tone;
        }
        true
    }
}

/// Nucleus mask plus grey image; with `motif`, a tight cluster of elongated
/// dark nuclei is placed first.
fn synth_tissue(spec: &SynthSpec, motif: bool, rng: &mut Rng) -> Result<(LabelMask, GrayMatrix)> {
    let side = spec.canvas;
    let mut cv = Canvas {
        side,
        labels: vec![0; side * side],
        gray: vec![200.0; side * side],
    };
    let mut next = 1u32;
    let fside = side as f64;
    if motif && spec.motif_nuclei > 0 {
        let centre = [rng.uniform_range(0.3, 0.7) * fside, rng.uniform_range(0.3, 0.7) * fside];
        let mut placed = 0;
        for _ in 0..4000 {
            if placed == spec.motif_nuclei {
                break;
            }
            let rad = 0.22 * fside * rng.uniform().sqrt();
            let ang = rng.uniform_range(0.0, std::f64::consts::TAU);
            let c = [centre[0] + rad * ang.cos(), centre[1] + rad * ang.sin()];
            let (a, b) = (rng.uniform_range(5.0, 6.5), rng.uniform_range(2.2, 2.8));
            let theta = rng.uniform_range(0.0, std::f64::consts::PI);
            if cv.try_place(next, c, a, b, theta, 50.0) {
                next += 1;
                placed += 1;
            }
        }
    }
    for _ in 0..20_000 {
        if next as usize > spec.nuclei {
            break;
        }
        let c = [rng.uniform_range(4.0, fside - 4.0), rng.uniform_range(4.0, fside - 4.0)];
        let (a, b) = (rng.uniform_range(3.2, 4.5), rng.uniform_range(2.8, 3.6));
        let theta = rng.uniform_range(0.0, std::f64::consts::PI);
        if cv.try_place(next, c, a.max(b), a.min(b), theta, 90.0) {
            next += 1;
        }
    }
    if next < 3 {
        return Err(Error::Parameter("could not place nuclei on the canvas".into()));
    }
    for v in cv.gray.iter_mut() {
        *v = (*v + spec.noise * rng.normal()).clamp(0.0, 255.0);
    }
    Ok((LabelMask::new(side, side, cv.labels)?, GrayMatrix::new(side, side, cv.gray)?))
}

struct Draw {
    genomic: Vec<f64>,
    risk: f64,
    time: f64,
    instances: Vec<Instance>,
}

fn draw_patient(spec: &SynthSpec, mut rng: Rng) -> Result<Draw> {
    let genomic: Vec<f64> = (0..spec.genomic_dim).map(|_| rng.normal()).collect();
    let u = rng.normal();
    let motif = rng.bernoulli(sigmoid(2.0 * u));
    let risk = spec.risk(&genomic, u, motif);
    // 1 - U lies in (0, 1], keeping the time finite.
    let time = -(1.0 - rng.uniform()).ln().max(-700.0) / risk.exp() * spec.time_scale;
    let mut instances = Vec::with_capacity(spec.rois_per_patient);
    for k in 0..spec.rois_per_patient {
        let mut roi_rng = rng.fork(k as u64);
        let image = synth_image(spec.image_side, u, spec.noise, &mut roi_rng);
        let (mask, gray) = synth_tissue(spec, motif, &mut roi_rng)?;
        let graph = build_cell_graph(&mask, &gray, None, &spec.graph)?;
        instances.push(Instance {
            graph: Some(graph),
            image: Some(image),
        });
    }
    Ok(Draw {
        genomic,
        risk,
        time: time.max(f64::MIN_POSITIVE),
        instances,
    })
}

/// Generates a cohort. Exactly `round(censoring * n)` patients, chosen
/// uniformly, are censored at a uniform fraction of their event time.
pub fn synth_generate(spec: &SynthSpec) -> Result<Cohort> {
    spec.validate()?;
    let root = Rng::new(spec.seed, 0);
    let draws: Vec<Draw> = (0..spec.n)
        .into_par_iter()
        .map(|i| draw_patient(spec, root.fork(i as u64 + 1)))
        .collect::<Result<_>>()?;

    let mut side = root.fork(0);
    let mut order: Vec<usize> = (0..spec.n).collect();
    side.shuffle(&mut order);
    let n_cens = (spec.censoring * spec.n as f64).round() as usize;
    let mut censor_at = vec![None; spec.n];
    for &i in &order[..n_cens] {
        censor_at[i] = Some(side.uniform_range(0.05, 1.0));
    }
    let mut order: Vec<usize> = (0..spec.n).collect();
    side.shuffle(&mut order);
    let n_missing = (spec.missing_genomic * spec.n as f64).round() as usize;
    let mut missing = vec![false; spec.n];
    for &i in &order[..n_missing] {
        missing[i] = true;
    }

    let risks: Vec<f64> = draws.iter().map(|d| d.risk).collect();
    let grades = hazard_bins(&risks, BinScheme::P33_66_100)?;
    let width = ((spec.n as f64).log10().floor() as usize + 1).max(4);
    let patients = draws
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let (time, event) = match censor_at[i] {
                Some(f) => ((d.time * f).max(f64::MIN_POSITIVE), false),
                None => (d.time, true),
            };
            PatientRecord {
                id: format!("S{:0width$}", i + 1),
                time,
                event,
                grade: Some(grades[i]),
                genomic: (!missing[i]).then_some(d.genomic),
                instances: d.instances,
                true_risk: Some(d.risk),
            }
        })
        .collect();
    let names = (0..spec.genomic_dim).map(|j| format!("gene_{j:02}")).collect();
    Cohort::new(names, patients)
}

/// C-index of the generating log-hazard against observed outcomes.
pub fn oracle_c_index(cohort: &Cohort) -> Result<f64> {
    let scores = cohort
        .patients
        .iter()
        .map(|p| {
            p.true_risk
                .ok_or_else(|| Error::Lookup(format!("patient {} has no generating risk", p.id)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let idx: Vec<usize> = (0..cohort.len()).collect();
    c_index(&cohort.survival(&idx, scores)?)
}

/// Convenience for tests and benches: the survival outcome scored by the
/// generating risk.
pub fn oracle_cohort(cohort: &Cohort) -> Result<SurvivalCohort> {
    let idx: Vec<usize> = (0..cohort.len()).collect();
    let scores = cohort.patients.iter().map(|p| p.true_risk.unwrap_or(0.0)).collect();
    cohort.survival(&idx, scores)
}
