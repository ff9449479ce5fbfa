//! Training loops and batched inference for unimodal and fusion models.

use std::collections::BTreeMap;

use super::config::{RunConfig, TrainHyper};
use super::data::FoldData;
use crate::error::{Error, Result};
use crate::fusion::{Embeddings, FusionConfig, FusionHead, FusionMode, FusionSchedule, Modality};
use crate::nets::{Cnn, Gcn, OutputHead, Snn, Task, EMBED_DIM};
use crate::numcore::{adam_step, Init, LrSchedule, ParamStore, Rng, Tape, Tensor, Var};

const PREDICT_BATCH: usize = 64;

/// The three embedders plus task, built from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Networks {
    pub task: Task,
    pub snn: Snn,
    pub gcn: Gcn,
    pub cnn: Cnn,
    pub fusion: FusionConfig,
    pub schedule: FusionSchedule,
}

/// Mean training loss per epoch.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct History {
    pub losses: Vec<f64>,
}

impl Networks {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let nets = Self {
            task: cfg.task,
            snn: Snn::new("snn", cfg.snn.clone()),
            gcn: Gcn::new("gcn", cfg.gcn.clone()),
            cnn: Cnn::new("cnn", cfg.cnn.clone())?,
            fusion: cfg.fusion.clone(),
            schedule: cfg.schedule.clone(),
        };
        for (m, w) in [
            (Modality::Genomic, nets.snn.out_width()),
            (Modality::Graph, nets.gcn.out_width()),
            (Modality::Image, nets.cnn.out_width()),
        ] {
            if w != nets.fusion.embed_dim {
                return Err(Error::Configuration(format!(
                    "{} embedding is {w} wide, fusion expects {}",
                    m.code(),
                    nets.fusion.embed_dim
                )));
            }
        }
        Ok(nets)
    }

    pub fn head(&self, m: Modality) -> OutputHead {
        OutputHead::new(format!("{}.out", m.code()), EMBED_DIM, self.task)
    }

    pub fn fusion_head(&self, mode: &FusionMode) -> FusionHead {
        FusionHead::new(mode.clone(), self.task, self.fusion.clone())
    }

    pub fn init_unimodal(&self, m: Modality, store: &mut ParamStore, rng: &mut Rng) {
        match m {
            Modality::Genomic => self.snn.init(store, rng),
            Modality::Graph => self.gcn.init(store, rng),
            Modality::Image => self.cnn.init(store, rng),
        }
        let init = match m {
            Modality::Image => Init::KaimingUniform,
            _ => Init::LecunNormal,
        };
        self.head(m).init(store, init, rng);
    }

    /// `[B, 32]` embedding of the given samples.
    pub fn embed(
        &self,
        m: Modality,
        tape: &mut Tape,
        store: &ParamStore,
        data: &FoldData,
        batch: &[usize],
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let missing = || Error::Alignment(format!("sample lacks {} input", m.code()));
        match m {
            Modality::Genomic => {
                let rows = batch
                    .iter()
                    .map(|&s| data.samples[s].genomic.as_ref().map(|g| tape.input(g.clone())).ok_or_else(missing))
                    .collect::<Result<Vec<_>>>()?;
                let x = tape.concat_rows(&rows)?;
                self.snn.embed(tape, store, x, rng, training)
            }
            Modality::Graph => {
                let graphs = batch
                    .iter()
                    .map(|&s| {
                        let (x, adj) = data.samples[s].graph.as_ref().ok_or_else(missing)?;
                        Ok((tape.input(x.clone()), adj))
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.gcn.embed(tape, store, &graphs, rng, training)
            }
            Modality::Image => {
                let images = batch
                    .iter()
                    .map(|&s| data.samples[s].image.as_ref().map(|im| tape.input(im.clone())).ok_or_else(missing))
                    .collect::<Result<Vec<_>>>()?;
                self.cnn.embed(tape, store, &images, rng, training)
            }
        }
    }

    pub fn unimodal_forward(
        &self,
        m: Modality,
        tape: &mut Tape,
        store: &ParamStore,
        data: &FoldData,
        batch: &[usize],
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let h = self.embed(m, tape, store, data, batch, rng, training)?;
        self.head(m).forward(tape, store, h)
    }

    /// Image embeddings of `samples` from a frozen image network, as
    /// `[1, 32]` rows indexed like `data.samples`.
    pub fn image_cache(&self, store: &ParamStore, data: &FoldData, samples: &[usize]) -> Result<Vec<Option<Tensor>>> {
        let mut cache = vec![None; data.samples.len()];
        let mut rng = Rng::new(0, 0);
        for chunk in samples.chunks(PREDICT_BATCH) {
            let mut tape = Tape::new();
            let h = self.embed(Modality::Image, &mut tape, store, data, chunk, &mut rng, false)?;
            let v = tape.value(h);
            for (r, &s) in chunk.iter().enumerate() {
                cache[s] = Some(Tensor::matrix(1, v.cols(), v.row_slice(r).to_vec())?);
            }
        }
        Ok(cache)
    }

    /// Fusion forward. Embedders whose parameters are frozen run in
    /// inference mode; image embeddings come from `cache`.
    #[allow(clippy::too_many_arguments)]
    pub fn fusion_forward(
        &self,
        head: &FusionHead,
        tape: &mut Tape,
        store: &ParamStore,
        data: &FoldData,
        cache: &[Option<Tensor>],
        batch: &[usize],
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let trains = |prefix: &str| {
            training
                && store
                    .iter()
                    .any(|(k, e)| e.trainable && k.starts_with(prefix) && !k.contains(".out."))
        };
        let mut emb = Embeddings::default();
        for &m in head.mode.modalities() {
            let v = match m {
                Modality::Image => {
                    let rows = batch
                        .iter()
                        .map(|&s| {
                            cache[s]
                                .as_ref()
                                .map(|t| tape.input(t.clone()))
                                .ok_or_else(|| Error::Alignment("missing cached image embedding".into()))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    tape.concat_rows(&rows)?
                }
                Modality::Graph => match emb.graph {
                    Some(v) => v,
                    None => self.embed(m, tape, store, data, batch, rng, trains("gcn."))?,
                },
                Modality::Genomic => match emb.genomic {
                    Some(v) => v,
                    None => self.embed(m, tape, store, data, batch, rng, trains("snn."))?,
                },
            };
            match m {
                Modality::Image => emb.image = Some(v),
                Modality::Graph => emb.graph = Some(v),
                Modality::Genomic => emb.genomic = Some(v),
            }
        }
        head.forward(tape, store, &emb, rng, training)
    }
}

/// Loss of one batch of outputs, or `None` for a survival batch without
/// events.
fn batch_loss(tape: &mut Tape, task: Task, out: Var, data: &FoldData, batch: &[usize]) -> Result<Option<Var>> {
    let patients: Vec<usize> = batch.iter().map(|&s| data.samples[s].patient).collect();
    match task {
        Task::Survival => {
            let times: Vec<f64> = patients.iter().map(|&p| data.times[p]).collect();
            let events: Vec<bool> = patients.iter().map(|&p| data.events[p]).collect();
            let d = events.iter().filter(|&&e| e).count();
            if d == 0 {
                return Ok(None);
            }
            tape.cox_loss(out, &times, &events, d as f64).map(Some)
        }
        Task::Grade => {
            let labels = patients
                .iter()
                .map(|&p| data.grades[p].ok_or_else(|| Error::Configuration("missing grade label".into())))
                .collect::<Result<Vec<_>>>()?;
            tape.nll_loss(out, &labels).map(Some)
        }
    }
}

/// Mini-batch Adam over `samples`, reshuffled every epoch.
#[allow(clippy::too_many_arguments)]
fn run_epochs<F>(
    store: &mut ParamStore,
    task: Task,
    data: &FoldData,
    samples: &[usize],
    hyper: &TrainHyper,
    schedule: LrSchedule,
    l1_names: &[String],
    rng: &mut Rng,
    mut forward: F,
) -> Result<History>
where
    F: FnMut(&mut Tape, &ParamStore, &[usize], &mut Rng) -> Result<Var>,
{
    if samples.is_empty() {
        return Err(Error::Parameter("no training samples for this model".into()));
    }
    let mut order = samples.to_vec();
    let mut history = History::default();
    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let (mut total, mut batches) = (0.0, 0usize);
        for batch in order.chunks(hyper.batch_size) {
            let mut tape = Tape::new();
            let out = forward(&mut tape, store, batch, rng)?;
            let Some(mut loss) = batch_loss(&mut tape, task, out, data, batch)? else {
                continue;
            };
            if hyper.l1 > 0.0 {
                for name in l1_names {
                    let w = tape.param(store, name)?;
                    let a = tape.l1(w);
                    let a = tape.scale_shift(a, hyper.l1, 0.0);
                    loss = tape.add(loss, a)?;
                }
            }
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            total += value;
            batches += 1;
            let grads = tape.backward(loss)?;
            grads.accumulate_into(&tape, store)?;
            adam_step(store, hyper.lr, &schedule, epoch)?;
        }
        history.losses.push(if batches > 0 { total / batches as f64 } else { f64::NAN });
    }
    Ok(history)
}

fn decay(epochs: usize) -> LrSchedule {
    LrSchedule::LinearDecay {
        flat_epochs: 0,
        decay_epochs: epochs,
    }
}

/// Trains one unimodal network on the fold's training patients.
pub fn train_unimodal(
    nets: &Networks,
    m: Modality,
    hyper: &TrainHyper,
    data: &FoldData,
    rng: &mut Rng,
) -> Result<(ParamStore, History)> {
    let mut store = ParamStore::new();
    nets.init_unimodal(m, &mut store, rng);
    let samples = data.select(&data.fold.train, &[m], m == Modality::Genomic);
    let l1_names = if m == Modality::Genomic { nets.snn.weight_names() } else { Vec::new() };
    let history = run_epochs(
        &mut store,
        nets.task,
        data,
        &samples,
        hyper,
        decay(hyper.epochs),
        &l1_names,
        rng,
        |tape, store, batch, rng| nets.unimodal_forward(m, tape, store, data, batch, rng, true),
    )?;
    Ok((store, history))
}

/// Builds a fusion model on top of trained unimodal networks and runs the
/// two-phase schedule.
pub fn train_fusion(
    nets: &Networks,
    mode: &FusionMode,
    unimodal: &BTreeMap<Modality, ParamStore>,
    data: &FoldData,
    rng: &mut Rng,
) -> Result<(ParamStore, History)> {
    let mut store = ParamStore::new();
    for &m in mode.modalities() {
        let src = unimodal
            .get(&m)
            .ok_or_else(|| Error::Load(format!("no trained {} network for fusion {mode}", m.code())))?;
        let prefix = format!("{}.", m.code());
        if store.names().any(|n| n.starts_with(&prefix)) {
            continue;
        }
        if store.import_prefixed(src, &prefix, &prefix) == 0 {
            return Err(Error::Load(format!("{} checkpoint has no `{prefix}` parameters", m.code())));
        }
    }
    let head = nets.fusion_head(mode);
    head.init(&mut store, rng);
    let needs = mode.modalities().to_vec();
    let samples = data.select(&data.fold.train, &needs, false);
    let cache = if mode.uses(Modality::Image) {
        nets.image_cache(&store, data, &samples)?
    } else {
        Vec::new()
    };
    let l1_names = if mode.uses(Modality::Genomic) { nets.snn.weight_names() } else { Vec::new() };
    let mut history = History::default();
    for phase in nets.schedule.phases() {
        if phase.epochs == 0 {
            continue;
        }
        store.set_trainable("", false);
        for p in &phase.trainable {
            store.set_trainable(&format!("{p}."), true);
        }
        let hyper = TrainHyper {
            epochs: phase.epochs,
            lr: phase.lr,
            batch_size: nets.schedule.batch_size,
            l1: nets.schedule.l1,
        };
        let h = run_epochs(
            &mut store,
            nets.task,
            data,
            &samples,
            &hyper,
            phase.schedule,
            &l1_names,
            rng,
            |tape, store, batch, rng| nets.fusion_forward(&head, tape, store, data, &cache, batch, rng, true),
        )?;
        history.losses.extend(h.losses);
    }
    store.set_trainable("", true);
    Ok((store, history))
}

/// Per-sample outputs in inference mode: the hazard for survival, class
/// probabilities for grade.
pub fn predict_samples(
    nets: &Networks,
    model: &super::ModelSpec,
    store: &ParamStore,
    data: &FoldData,
    samples: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let mut rng = Rng::new(0, 0);
    let (head, cache) = match model {
        super::ModelSpec::Fusion(mode) => {
            let cache = if mode.uses(Modality::Image) {
                nets.image_cache(store, data, samples)?
            } else {
                Vec::new()
            };
            (Some(nets.fusion_head(mode)), cache)
        }
        super::ModelSpec::Unimodal(_) => (None, Vec::new()),
    };
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_BATCH) {
        let mut tape = Tape::new();
        let y = match (model, &head) {
            (super::ModelSpec::Unimodal(m), _) => {
                nets.unimodal_forward(*m, &mut tape, store, data, chunk, &mut rng, false)?
            }
            (_, Some(h)) => nets.fusion_forward(h, &mut tape, store, data, &cache, chunk, &mut rng, false)?,
            _ => unreachable!("fusion models carry a head"),
        };
        let v = tape.value(y);
        for r in 0..chunk.len() {
            let row = v.row_slice(r);
            out.push(match nets.task {
                Task::Survival => row.to_vec(),
                Task::Grade => row.iter().map(|l| l.exp()).collect(),
            });
        }
    }
    Ok(out)
}
