//! Graph network: GraphSAGE max-pool convolutions with self-attention
//! graph pooling and a multi-scale mean readout.

use serde::{Deserialize, Serialize};

use crate::cellgraph::Adjacency;
use crate::error::{dim_err, Error, Result};
use crate::numcore::{init_linear, Activation, Init, ParamStore, Rng, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    pub input_dim: usize,
    pub blocks: usize,
    pub hidden: usize,
    /// Fraction of nodes kept by each pooling layer, in (0, 1].
    pub pool_ratio: f64,
    pub head_widths: Vec<usize>,
    pub dropout: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            input_dim: 12,
            blocks: 3,
            hidden: 128,
            pool_ratio: 0.5,
            head_widths: vec![128, 32],
            dropout: 0.25,
        }
    }
}

/// Registers the two linear maps of a max-pool SAGE convolution.
fn init_sage(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) {
    init_linear(store, &format!("{prefix}.pool"), fan_in, fan_in, Init::LecunNormal, rng);
    init_linear(store, &format!("{prefix}.lin"), 2 * fan_in, fan_out, Init::LecunNormal, rng);
}

/// `h'_v = W [h_v, max_{u in N(v)} ReLU(W_pool h_u)]`; an empty neighbourhood
/// aggregates the zero vector.
pub fn sage_conv(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var, neighbors: &[Vec<usize>]) -> Result<Var> {
    if neighbors.len() != tape.value(x).rows() {
        return dim_err(format!(
            "{} neighbour lists for {} nodes",
            neighbors.len(),
            tape.value(x).rows()
        ));
    }
    let m = tape.linear(store, &format!("{prefix}.pool"), x)?;
    let m = tape.act(m, Activation::Relu)?;
    let a = tape.neighbor_max(m, neighbors)?;
    let cat = tape.concat_cols(&[x, a])?;
    tape.linear(store, &format!("{prefix}.lin"), cat)
}

pub struct Pooled {
    pub x: Var,
    pub adjacency: Adjacency,
    /// Indices into the input nodes, ascending.
    pub kept: Vec<usize>,
    pub scores: Var,
}

/// Self-attention pooling. Scores are `sigmoid(SAGEConv)` over the
/// two-hop graph with self loops; the top `ceil(r N)` nodes survive (ties to
/// the lower index) and are scaled by their score.
pub fn sagpool(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    x: Var,
    adjacency: &Adjacency,
    ratio: f64,
) -> Result<Pooled> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Parameter(format!("pool ratio {ratio} outside (0, 1]")));
    }
    let n = adjacency.n_nodes();
    let reach = adjacency.two_hop().with_self_loops();
    let z = sage_conv(tape, store, prefix, x, &reach)?;
    let scores = tape.act(z, Activation::Sigmoid)?;
    let s = tape.value(scores).data().to_vec();
    let keep_n = ((ratio * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut kept = order[..keep_n].to_vec();
    kept.sort_unstable();
    let xs = tape.gather_rows(x, &kept)?;
    let ss = tape.gather_rows(scores, &kept)?;
    let pooled = tape.scale_rows(xs, ss)?;
    Ok(Pooled {
        x: pooled,
        adjacency: adjacency.induced(&kept),
        kept,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gcn {
    pub prefix: String,
    pub cfg: GcnConfig,
}

impl Gcn {
    pub fn new(prefix: impl Into<String>, cfg: GcnConfig) -> Self {
        Self {
            prefix: prefix.into(),
            cfg,
        }
    }

    pub fn out_width(&self) -> usize {
        *self.cfg.head_widths.last().expect("head widths")
    }

    fn conv_name(&self, b: usize) -> String {
        format!("{}.conv{b}", self.prefix)
    }

    fn pool_name(&self, b: usize) -> String {
        format!("{}.pool{b}", self.prefix)
    }

    fn head_name(&self, i: usize) -> String {
        format!("{}.fc{i}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) {
        let mut fan_in = self.cfg.input_dim;
        for b in 0..self.cfg.blocks {
            init_sage(store, &self.conv_name(b), fan_in, self.cfg.hidden, rng);
            init_sage(store, &self.pool_name(b), self.cfg.hidden, 1, rng);
            fan_in = self.cfg.hidden;
        }
        for (i, &w) in self.cfg.head_widths.iter().enumerate() {
            init_linear(store, &self.head_name(i), fan_in, w, Init::LecunNormal, rng);
            fan_in = w;
        }
    }

    /// Multi-scale readout `[1, hidden]`: sum over blocks of the mean of
    /// the pooled node features.
    pub fn readout(&self, tape: &mut Tape, store: &ParamStore, x: Var, adjacency: &Adjacency) -> Result<Var> {
        let (n, f) = tape.value(x).expect_2d("node features")?;
        if f != self.cfg.input_dim {
            return dim_err(format!("graph has {f} node features, network expects {}", self.cfg.input_dim));
        }
        if n != adjacency.n_nodes() {
            return dim_err(format!("{n} feature rows for {} nodes", adjacency.n_nodes()));
        }
        let mut h = x;
        let mut adj = adjacency.clone();
        let mut total: Option<Var> = None;
        for b in 0..self.cfg.blocks {
            let c = sage_conv(tape, store, &self.conv_name(b), h, adj.neighbors())?;
            let c = tape.act(c, Activation::Relu)?;
            let pooled = sagpool(tape, store, &self.pool_name(b), c, &adj, self.cfg.pool_ratio)?;
            h = pooled.x;
            adj = pooled.adjacency;
            let mean = tape.mean_rows(h)?;
            total = Some(match total {
                None => mean,
                Some(t) => tape.add(t, mean)?,
            });
        }
        total.ok_or_else(|| Error::Configuration("graph network needs at least one block".into()))
    }

    /// Head on stacked readouts, `[B, hidden] -> [B, out_width]`.
    pub fn head(&self, tape: &mut Tape, store: &ParamStore, r: Var, rng: &mut Rng, training: bool) -> Result<Var> {
        let mut h = r;
        let last = self.cfg.head_widths.len() - 1;
        for i in 0..=last {
            h = tape.linear(store, &self.head_name(i), h)?;
            h = tape.act(h, Activation::Relu)?;
            if i < last {
                h = tape.dropout(h, self.cfg.dropout, rng, training)?;
            }
        }
        Ok(h)
    }

    /// Embeds a batch of graphs given as `(features, adjacency)` pairs.
    pub fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        graphs: &[(Var, &Adjacency)],
        rng: &mut Rng,
        training: bool,
    ) -> Result<Var> {
        let mut rows = Vec::with_capacity(graphs.len());
        for (x, adj) in graphs {
            rows.push(self.readout(tape, store, *x, adj)?);
        }
        let r = tape.concat_rows(&rows)?;
        self.head(tape, store, r, rng, training)
    }
}
