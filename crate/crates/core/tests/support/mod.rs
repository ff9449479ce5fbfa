//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use pathfuse::cellgraph::Adjacency;
use pathfuse::fusion::{gate, Embeddings, FusionConfig, FusionHead, FusionMode};
use pathfuse::nets::gcn::{sage_conv, sagpool};
use pathfuse::nets::{Cnn, CnnConfig, Gcn, GcnConfig, OutputHead, Snn, SnnConfig, Task};
use pathfuse::numcore::{
    finite_diff_check, init_linear, Activation, Differentiable, Init, ParamStore, Rng, StoreFn, Tape, TapeFn, Tensor,
    Var,
};
use pathfuse::Result;

/// Tolerance for single operations and network blocks.
pub const OP_TOL: f64 = 1e-5;
/// Tolerance for whole networks ending in a loss.
pub const END_TO_END_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCase {
    pub name: String,
    pub error: f64,
    pub tol: f64,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.error < self.tol
    }
}

pub fn randn(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
}

fn distinct_times(n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<bool>) {
    let times = (0..n).map(|i| 1.0 + i as f64 + 0.5 * rng.uniform()).collect::<Vec<_>>();
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let times = order.iter().map(|&i| times[i]).collect();
    let mut events: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.7)).collect();
    events[0] = true;
    (times, events)
}

pub fn random_graph(n: usize, rng: &mut Rng) -> Adjacency {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.below(i), i));
    }
    for _ in 0..n {
        let (a, b) = (rng.below(n), rng.below(n));
        if a != b {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    Adjacency::from_edges(n, &edges).unwrap()
}

struct Suite {
    cases: Vec<GradCase>,
}

impl Suite {
    fn run(&mut self, name: String, f: &dyn Differentiable, inputs: &[Tensor], tol: f64) {
        let error = match finite_diff_check(f, inputs, tol) {
            Ok(c) => {
                if std::env::var("GRAD_DEBUG").is_ok() && !c.passed {
                    eprintln!("{name}: per input {:?}", c.per_input);
                }
                c.max_rel_error
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                f64::INFINITY
            }
        };
        self.cases.push(GradCase { name, error, tol });
    }

    fn tape<F>(&mut self, name: String, inputs: &[Tensor], f: F)
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        self.run(name, &TapeFn(f), inputs, OP_TOL);
    }

    /// Checks gradients with respect to `data` and every parameter in `store`.
    /// Biases are jittered first: zero biases put dead ReLU rows exactly on
    /// the kink, where finite differences are meaningless.
    fn store<F>(&mut self, name: String, store: &ParamStore, data: &[Tensor], tol: f64, f: F)
    where
        F: Fn(&mut Tape, &ParamStore, &[Var]) -> Result<Var>,
    {
        let mut jittered = store.clone();
        let mut rng = Rng::new(self.cases.len() as u64, 7);
        let biases: Vec<String> = store.names().filter(|n| n.ends_with(".bias")).map(String::from).collect();
        for b in biases {
            let mut v = store.value(&b).unwrap().clone();
            v.data_mut().iter_mut().for_each(|x| *x += 0.3 * rng.normal());
            jittered.set_value(&b, v).unwrap();
        }
        let sf = StoreFn {
            store: &jittered,
            params: store.names().map(String::from).collect(),
            n_data: data.len(),
            f,
        };
        let inputs = sf.inputs(data).unwrap();
        self.run(name, &sf, &inputs, tol);
    }
}

/// Randomized finite-difference checks over every differentiable operation
/// and the network blocks built from them.
pub fn gradient_suite(seed: u64) -> Vec<GradCase> {
    let mut s = Suite { cases: Vec::new() };
    let mut rng = Rng::new(seed, 0);

    for t in 0..12 {
        let (b, i, o) = (1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(5));
        let inputs = [randn(&[b, i], &mut rng), randn(&[i, o], &mut rng), randn(&[o], &mut rng)];
        s.tape(format!("affine {b}x{i}->{o} #{t}"), &inputs, |tp, v| tp.affine(v[0], v[1], v[2]));
    }
    let acts = [
        Activation::Relu,
        Activation::Elu,
        Activation::Selu,
        Activation::Sigmoid,
        Activation::LogSoftmax,
    ];
    for kind in acts {
        for t in 0..4 {
            let x = randn(&[3, 4], &mut rng);
            s.tape(format!("{kind:?} #{t}"), &[x], move |tp, v| tp.act(v[0], kind));
        }
    }
    for t in 0..3 {
        let a = randn(&[2, 3], &mut rng);
        let b = randn(&[2, 3], &mut rng);
        s.tape(format!("add #{t}"), &[a.clone(), b.clone()], |tp, v| tp.add(v[0], v[1]));
        s.tape(format!("mul #{t}"), &[a.clone(), b.clone()], |tp, v| tp.mul(v[0], v[1]));
        s.tape(format!("concat cols #{t}"), &[a.clone(), b.clone()], |tp, v| tp.concat_cols(&[v[0], v[1]]));
        s.tape(format!("concat rows #{t}"), &[a.clone(), b.clone()], |tp, v| tp.concat_rows(&[v[0], v[1]]));
        s.tape(format!("scale shift #{t}"), &[a.clone()], |tp, v| Ok(tp.scale_shift(v[0], 1.7, -0.3)));
        s.tape(format!("slice cols #{t}"), &[a.clone()], |tp, v| tp.slice_cols(v[0], 1, 2));
        s.tape(format!("gather rows #{t}"), &[a.clone()], |tp, v| tp.gather_rows(v[0], &[1, 0, 1]));
        s.tape(format!("mean rows #{t}"), &[a.clone()], |tp, v| tp.mean_rows(v[0]));
        s.tape(format!("sum all #{t}"), &[a.clone()], |tp, v| Ok(tp.sum_all(v[0])));
        s.tape(format!("reshape #{t}"), &[a.clone()], |tp, v| tp.reshape(v[0], &[3, 2]));
        s.tape(format!("l1 #{t}"), &[a.clone()], |tp, v| Ok(tp.l1(v[0])));
        let sc = randn(&[2, 1], &mut rng);
        s.tape(format!("scale rows #{t}"), &[a.clone(), sc], |tp, v| tp.scale_rows(v[0], v[1]));
        s.tape(format!("dropout (fixed mask) #{t}"), &[a], |tp, v| {
            let mut r = Rng::new(3, 3);
            tp.dropout(v[0], 0.25, &mut r, true)
        });
    }
    for t in 0..4 {
        let x = randn(&[5, 3], &mut rng);
        let adj = random_graph(5, &mut rng);
        s.tape(format!("neighbour max #{t}"), &[x], move |tp, v| tp.neighbor_max(v[0], adj.neighbors()));
    }
    for t in 0..4 {
        let (b, widths) = if t % 2 == 0 { (2, vec![3, 2]) } else { (2, vec![2, 3, 2]) };
        let inputs: Vec<Tensor> = widths.iter().map(|&w| randn(&[b, w], &mut rng)).collect();
        s.tape(format!("kron {widths:?} #{t}"), &inputs, |tp, v| tp.kron(v));
    }
    for t in 0..4 {
        let (stride, pad) = [(1, 1), (2, 1), (1, 0), (2, 0)][t];
        let inputs = [randn(&[2, 6, 6], &mut rng), randn(&[3, 2, 3, 3], &mut rng), randn(&[3], &mut rng)];
        s.tape(format!("conv2d stride {stride} pad {pad}"), &inputs, move |tp, v| {
            tp.conv2d(v[0], v[1], v[2], stride, pad)
        });
    }
    for t in 0..3 {
        let x = randn(&[2, 4, 6], &mut rng);
        s.tape(format!("max pool #{t}"), &[x], |tp, v| tp.max_pool2d(v[0], 2));
    }
    for t in 0..8 {
        let n = 4 + rng.below(6);
        let (times, events) = distinct_times(n, &mut rng);
        let scores = randn(&[n, 1], &mut rng);
        let norm = events.iter().filter(|&&e| e).count() as f64;
        s.tape(format!("cox loss n={n} #{t}"), &[scores], move |tp, v| {
            tp.cox_loss(v[0], &times, &events, norm)
        });
    }
    for t in 0..4 {
        let labels: Vec<usize> = (0..4).map(|_| rng.below(3)).collect();
        let x = randn(&[4, 3], &mut rng);
        s.tape(format!("nll after log-softmax #{t}"), &[x], move |tp, v| {
            let lp = tp.act(v[0], Activation::LogSoftmax)?;
            tp.nll_loss(lp, &labels)
        });
    }

    // Blocks with parameters.
    for t in 0..4 {
        let f = 3;
        let mut store = ParamStore::new();
        init_linear(&mut store, "c.pool", f, f, Init::LecunNormal, &mut rng);
        init_linear(&mut store, "c.lin", 2 * f, 4, Init::LecunNormal, &mut rng);
        let adj = random_graph(6, &mut rng);
        let x = randn(&[6, f], &mut rng);
        s.store(format!("sage conv #{t}"), &store, &[x], OP_TOL, move |tp, st, v| {
            sage_conv(tp, st, "c", v[0], adj.neighbors())
        });
    }
    for t in 0..4 {
        let f = 3;
        let mut store = ParamStore::new();
        init_linear(&mut store, "p.pool", f, f, Init::LecunNormal, &mut rng);
        init_linear(&mut store, "p.lin", 2 * f, 1, Init::LecunNormal, &mut rng);
        let adj = random_graph(7, &mut rng);
        let x = randn(&[7, f], &mut rng);
        s.store(format!("sagpool #{t}"), &store, &[x], OP_TOL, move |tp, st, v| {
            Ok(sagpool(tp, st, "p", v[0], &adj, 0.5)?.x)
        });
    }
    for t in 0..4 {
        let mut store = ParamStore::new();
        init_linear(&mut store, "g.h", 4, 4, Init::KaimingUniform, &mut rng);
        init_linear(&mut store, "g.z", 8, 4, Init::KaimingUniform, &mut rng);
        let h = randn(&[2, 4], &mut rng);
        let ctx = randn(&[2, 8], &mut rng);
        s.store(format!("gate #{t}"), &store, &[h, ctx], OP_TOL, |tp, st, v| {
            gate(tp, st, "g.h", "g.z", v[0], v[1])
        });
    }
    for task in [Task::Survival, Task::Grade] {
        for t in 0..3 {
            let head = OutputHead::new("out", 5, task);
            let mut store = ParamStore::new();
            head.init(&mut store, Init::KaimingUniform, &mut rng);
            let h = randn(&[3, 5], &mut rng);
            s.store(format!("{} head #{t}", task.name()), &store, &[h], OP_TOL, move |tp, st, v| {
                head.forward(tp, st, v[0])
            });
        }
    }
    for t in 0..2 {
        let snn = Snn::new(
            "snn",
            SnnConfig {
                input_dim: 5,
                widths: vec![4, 4, 3],
                ..SnnConfig::default()
            },
        );
        let mut store = ParamStore::new();
        snn.init(&mut store, &mut rng);
        let x = randn(&[3, 5], &mut rng);
        s.store(format!("snn block #{t}"), &store, &[x], OP_TOL, move |tp, st, v| {
            snn.embed(tp, st, v[0], &mut Rng::new(1, 1), false)
        });
    }
    for t in 0..2 {
        let gcn = Gcn::new(
            "gcn",
            GcnConfig {
                input_dim: 3,
                blocks: 4,
                hidden: 4,
                pool_ratio: 0.75,
                head_widths: vec![4, 3],
                dropout: 0.0,
            },
        );
        let mut store = ParamStore::new();
        gcn.init(&mut store, &mut rng);
        let adj = random_graph(9, &mut rng);
        let x = randn(&[9, 3], &mut rng);
        s.store(format!("gcn through 4 blocks #{t}"), &store, &[x], OP_TOL, move |tp, st, v| {
            gcn.embed(tp, st, &[(v[0], &adj)], &mut Rng::new(1, 1), false)
        });
    }
    for t in 0..2 {
        let cnn = Cnn::new("cnn", toy_cnn_config()).unwrap();
        let mut store = ParamStore::new();
        cnn.init(&mut store, &mut rng);
        let x = randn(&[3, 8, 8], &mut rng);
        s.store(format!("cnn 8x8 #{t}"), &store, &[x], OP_TOL, move |tp, st, v| {
            cnn.embed(tp, st, &[v[0]], &mut Rng::new(1, 1), false)
        });
    }

    // End to end: gates, Kronecker product, head and loss.
    for (t, mode) in ["cnn_gcn_snn", "gcn_snn", "snn_snn"].into_iter().enumerate() {
        let mode = FusionMode::parse(mode).unwrap();
        let cfg = FusionConfig {
            embed_dim: 4,
            reduced_width: 4,
            gate_dropout: 0.0,
            tensor_dropout: 0.0,
            head_widths: vec![6, 4],
        };
        let head = FusionHead::new(mode.clone(), Task::Survival, cfg);
        let mut store = ParamStore::new();
        head.init(&mut store, &mut rng);
        let n = 5;
        let (times, events) = distinct_times(n, &mut rng);
        let norm = events.iter().filter(|&&e| e).count() as f64;
        let data: Vec<Tensor> = (0..3).map(|_| randn(&[n, 4], &mut rng)).collect();
        s.store(format!("fusion {mode} + cox loss #{t}"), &store, &data, END_TO_END_TOL, move |tp, st, v| {
            let emb = Embeddings {
                image: Some(v[0]),
                graph: Some(v[1]),
                genomic: Some(v[2]),
            };
            let h = head.forward(tp, st, &emb, &mut Rng::new(1, 1), false)?;
            tp.cox_loss(h, &times, &events, norm)
        });
    }
    {
        let snn = Snn::new(
            "snn",
            SnnConfig {
                input_dim: 6,
                widths: vec![5, 4],
                ..SnnConfig::default()
            },
        );
        let head = OutputHead::new("snn.out", 4, Task::Grade);
        let mut store = ParamStore::new();
        snn.init(&mut store, &mut rng);
        head.init(&mut store, Init::KaimingUniform, &mut rng);
        let x = randn(&[4, 6], &mut rng);
        let labels = vec![0, 2, 1, 2];
        s.store("snn + grade head + nll".into(), &store, &[x], END_TO_END_TOL, move |tp, st, v| {
            let h = snn.embed(tp, st, v[0], &mut Rng::new(1, 1), false)?;
            let lp = head.forward(tp, st, h)?;
            tp.nll_loss(lp, &labels)
        });
    }
    s.cases
}

pub fn toy_cnn_config() -> CnnConfig {
    CnnConfig {
        side: 8,
        in_channels: 3,
        conv: vec![
            pathfuse::nets::ConvLayer { channels: 2, kernel: 3, stride: 1 },
            pathfuse::nets::ConvLayer { channels: 3, kernel: 3, stride: 1 },
        ],
        pool: 2,
        fc_widths: vec![4, 3],
        dropout: 0.0,
        final_dropout: 0.0,
    }
}

/// Per-layer output mean and variance of a stack of SELU layers with
/// LeCun-normal weights and zero biases, fed `n` standard-normal rows.
pub fn selu_stack_moments(n: usize, width: usize, layers: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = Rng::new(seed, 0);
    let mut store = ParamStore::new();
    for l in 0..layers {
        init_linear(&mut store, &format!("l{l}"), width, width, Init::LecunNormal, &mut rng);
    }
    let mut tape = Tape::new();
    let mut h = tape.input(randn(&[n, width], &mut rng));
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        h = tape.linear(&store, &format!("l{l}"), h).unwrap();
        h = tape.act(h, Activation::Selu).unwrap();
        let v = tape.value(h).data();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        out.push((mean, var));
    }
    out
}

pub fn self_normalizes(moments: &[(f64, f64)]) -> bool {
    moments.iter().all(|&(m, v)| m.abs() < 0.1 && (0.8..=1.25).contains(&v))
}

/// Harrell's c-index by enumerating every ordered pair.
pub fn brute_force_c_index(times: &[f64], events: &[bool], scores: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..times.len() {
        for j in 0..times.len() {
            if events[i] && times[i] < times[j] {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Random cohort with integer-valued times and scores so ties occur.
pub fn random_cohort(n: usize, rng: &mut Rng) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let times = (0..n).map(|_| 1.0 + rng.below(n) as f64).collect();
    let events = (0..n).map(|_| rng.bernoulli(0.6)).collect();
    let scores = (0..n).map(|_| rng.below(5) as f64 - 2.0).collect();
    (times, events, scores)
}

/// A small cohort that trains in seconds.
pub fn tiny_spec(n: usize, seed: u64) -> pathfuse::synthio::SynthSpec {
    pathfuse::synthio::SynthSpec {
        n,
        genomic_dim: 8,
        seed,
        image_side: 16,
        canvas: 64,
        nuclei: 10,
        motif_nuclei: 4,
        ..Default::default()
    }
}

/// Narrow networks and one or two epochs per stage.
pub fn tiny_config(folds: usize) -> pathfuse::pipeline::RunConfig {
    use pathfuse::nets::ConvLayer;
    let mut cfg = pathfuse::pipeline::RunConfig::desk();
    cfg.folds = folds;
    cfg.seed = 3;
    cfg.snn.widths = vec![16, 32];
    cfg.gcn.hidden = 8;
    cfg.gcn.head_widths = vec![16, 32];
    cfg.cnn.conv = vec![ConvLayer { channels: 4, kernel: 3, stride: 1 }];
    cfg.cnn.fc_widths = vec![16, 32];
    cfg.fusion.head_widths = vec![16, 8];
    cfg.fusion.reduced_width = 4;
    cfg.snn_train.epochs = 2;
    cfg.gcn_train.epochs = 1;
    cfg.cnn_train.epochs = 1;
    cfg.schedule.head_epochs = 1;
    cfg.schedule.finetune_epochs = 1;
    cfg
}
