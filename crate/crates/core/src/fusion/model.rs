use std::fmt;

use serde::{Deserialize, Serialize};

use super::gate::Gate;
use crate::error::{Error, Result};
use crate::nets::{OutputHead, Task, EMBED_DIM};
use crate::numcore::{init_linear, Activation, Init, ParamStore, Rng, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Graph,
    Genomic,
}

impl Modality {
    pub fn code(self) -> &'static str {
        match self {
            Modality::Image => "cnn",
            Modality::Graph => "gcn",
            Modality::Genomic => "snn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cnn" | "image" => Ok(Modality::Image),
            "gcn" | "graph" => Ok(Modality::Graph),
            "snn" | "genomic" => Ok(Modality::Genomic),
            other => Err(Error::Configuration(format!("unknown modality `{other}`"))),
        }
    }

    /// The modality that keeps its full width and leads the product.
    pub fn gating_for(task: Task) -> Self {
        match task {
            Task::Survival => Modality::Genomic,
            Task::Grade => Modality::Image,
        }
    }
}

/// Which embeddings are fused, e.g. `gcn_snn`, `cnn_gcn_snn` or the
/// same-modality ablation `snn_snn`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FusionMode {
    modalities: Vec<Modality>,
}

impl FusionMode {
    pub fn new(mut modalities: Vec<Modality>) -> Result<Self> {
        if !(2..=3).contains(&modalities.len()) {
            return Err(Error::Configuration(format!(
                "fusion takes two or three branches, got {}",
                modalities.len()
            )));
        }
        modalities.sort();
        Ok(Self { modalities })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts = s
            .split(['_', '+', 'x', '⊗'])
            .filter(|p| !p.is_empty())
            .map(Modality::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }

    pub fn trimodal() -> Self {
        Self::new(vec![Modality::Image, Modality::Graph, Modality::Genomic]).expect("three branches")
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn uses(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn is_ablation(&self) -> bool {
        self.modalities.windows(2).any(|w| w[0] == w[1])
    }

    /// Branch order for a task: the gating modality first, then the rest in
    /// image, graph, genomic order.
    pub fn branch_order(&self, task: Task) -> Vec<Modality> {
        let lead = Modality::gating_for(task);
        let mut order = self.modalities.clone();
        order.sort_by_key(|&m| (m != lead, m));
        order
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let codes: Vec<&str> = self.modalities.iter().map(|m| m.code()).collect();
        write!(f, "{}", codes.join("_"))
    }
}

impl TryFrom<String> for FusionMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<FusionMode> for String {
    fn from(m: FusionMode) -> String {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub embed_dim: usize,
    /// Width of non-leading branches in trimodal mode.
    pub reduced_width: usize,
    pub gate_dropout: f64,
    pub tensor_dropout: f64,
    pub head_widths: Vec<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            embed_dim: EMBED_DIM,
            reduced_width: 16,
            gate_dropout: 0.25,
            tensor_dropout: 0.25,
            head_widths: vec![128, 32],
        }
    }
}

/// Unimodal embeddings of a batch, each `[B, embed_dim]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Embeddings {
    pub image: Option<Var>,
    pub graph: Option<Var>,
    pub genomic: Option<Var>,
}

impl Embeddings {
    pub fn get(&self, m: Modality) -> Option<Var> {
        match m {
            Modality::Image => self.image,
            Modality::Graph => self.graph,
            Modality::Genomic => self.genomic,
        }
    }
}

pub const FUSION_PREFIX: &str = "fusion";

/// Gates, Kronecker product and the dense head on the flattened tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionHead {
    pub task: Task,
    pub mode: FusionMode,
    pub cfg: FusionConfig,
    pub branches: Vec<(Modality, Gate)>,
    pub out: OutputHead,
}

impl FusionHead {
    pub fn new(mode: FusionMode, task: Task, cfg: FusionConfig) -> Self {
        let order = mode.branch_order(task);
        let ctx = cfg.embed_dim * order.len();
        let trimodal = order.len() == 3;
        let branches = order
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let out = if trimodal && k > 0 { cfg.reduced_width } else { cfg.embed_dim };
                (m, Gate::new(format!("{FUSION_PREFIX}.gate{k}"), cfg.embed_dim, ctx, out))
            })
            .collect();
        let last = *cfg.head_widths.last().expect("head widths");
        Self {
            out: OutputHead::new(format!("{FUSION_PREFIX}.out"), last, task),
            task,
            mode,
            cfg,
            branches,
        }
    }

    /// Kronecker extents, `d_k + 1` per branch.
    pub fn extents(&self) -> Vec<usize> {
        self.branches.iter().map(|(_, g)| g.out_width + 1).collect()
    }

    pub fn tensor_width(&self) -> usize {
        self.extents().iter().product()
    }

    fn fc_name(&self, i: usize) -> String {
        format!("{FUSION_PREFIX}.fc{i}")
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) {
        for (_, g) in &self.branches {
            g.init(store, rng);
        }
        let mut fan_in = self.tensor_width();
        for (i, &w) in self.cfg.head_widths.iter().enumerate() {
            init_linear(store, &self.fc_name(i), fan_in, w, Init::KaimingUniform, rng);
            fan_in = w;
        }
        self.out.init(store, Init::KaimingUniform, rng);
    }

    /// Gated (and, in trimodal mode, reduced) branch vectors.
    pub fn gated(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        emb: &Embeddings,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Vec<Var>> {
        let inputs = self
            .branches
            .iter()
            .map(|(m, _)| {
                emb.get(*m).ok_or_else(|| {
                    Error::Configuration(format!("mode {} needs the {} embedding", self.mode, m.code()))
                })
            })
            .collect::<Result<Vec<Var>>>()?;
        let ctx = tape.concat_cols(&inputs)?;
        let mut out = Vec::with_capacity(inputs.len());
        for ((_, g), &h) in self.branches.iter().zip(&inputs) {
            let v = g.forward(tape, store, h, ctx)?;
            out.push(tape.dropout(v, self.cfg.gate_dropout, rng, training)?);
        }
        Ok(out)
    }

    /// Flattened fusion tensor `[B, tensor_width]` after dropout.
    pub fn fused(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        emb: &Embeddings,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let gated = self.gated(tape, store, emb, rng, training)?;
        let t = tape.kron(&gated)?;
        tape.dropout(t, self.cfg.tensor_dropout, rng, training)
    }

    /// Last hidden representation before the output head.
    pub fn hidden(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        emb: &Embeddings,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let mut h = self.fused(tape, store, emb, rng, training)?;
        for i in 0..self.cfg.head_widths.len() {
            h = tape.linear(store, &self.fc_name(i), h)?;
            h = tape.act(h, Activation::Relu)?;
        }
        Ok(h)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        emb: &Embeddings,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let h = self.hidden(tape, store, emb, rng, training)?;
        self.out.forward(tape, store, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    #[test]
    fn mode_parsing_and_order() {
        let m = FusionMode::parse("cnn_gcn_snn").unwrap();
        assert_eq!(m, FusionMode::trimodal());
        assert_eq!(
            m.branch_order(Task::Survival),
            vec![Modality::Genomic, Modality::Image, Modality::Graph]
        );
        assert_eq!(
            m.branch_order(Task::Grade),
            vec![Modality::Image, Modality::Graph, Modality::Genomic]
        );
        assert!(FusionMode::parse("snn⊗snn").unwrap().is_ablation());
        assert_eq!(FusionMode::parse("snn_gcn").unwrap().to_string(), "gcn_snn");
        assert!(FusionMode::parse("snn").is_err());
    }

    #[test]
    fn head_widths_match_extents() {
        let h = FusionHead::new(FusionMode::trimodal(), Task::Survival, FusionConfig::default());
        assert_eq!(h.extents(), vec![33, 17, 17]);
        assert_eq!(h.tensor_width(), 9537);
        let h = FusionHead::new(FusionMode::parse("cnn_snn").unwrap(), Task::Survival, FusionConfig::default());
        assert_eq!(h.tensor_width(), 1089);
    }

    #[test]
    fn missing_modality_is_configuration_error() {
        let head = FusionHead::new(FusionMode::parse("gcn_snn").unwrap(), Task::Survival, FusionConfig::default());
        let mut store = ParamStore::new();
        let mut rng = Rng::new(0, 0);
        head.init(&mut store, &mut rng);
        let mut t = Tape::new();
        let n = t.input(Tensor::zeros(&[2, 32]));
        let emb = Embeddings {
            genomic: Some(n),
            ..Default::default()
        };
        let r = head.forward(&mut t, &store, &emb, &mut rng, false);
        assert!(matches!(r, Err(Error::Configuration(_))));
        let g = t.input(Tensor::zeros(&[2, 32]));
        let emb = Embeddings {
            genomic: Some(n),
            graph: Some(g),
            ..Default::default()
        };
        let y = head.forward(&mut t, &store, &emb, &mut rng, true).unwrap();
        assert_eq!(t.value(y).shape(), &[2, 1]);
    }
}
