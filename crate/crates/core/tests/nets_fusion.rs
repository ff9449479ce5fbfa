mod support;

use pathfuse::cellgraph::Adjacency;
use pathfuse::fusion::{kron_fuse, Embeddings, FusionConfig, FusionHead, FusionMode};
use pathfuse::nets::{sage_conv, Cnn, CnnConfig, Gcn, GcnConfig, OutputHead, Snn, SnnConfig, Task, EMBED_DIM};
use pathfuse::numcore::{Init, Tape};
use pathfuse::{ParamStore, Rng, Tensor};

use support::{randn, random_graph};

fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    // Row i of the result is row perm[i] of x.
    let rows: Vec<Vec<f64>> = perm.iter().map(|&p| x.row_slice(p).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn permute_graph(adj: &Adjacency, perm: &[usize]) -> Adjacency {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let edges: Vec<_> = adj.edges().into_iter().map(|(a, b)| (inv[a], inv[b])).collect();
    Adjacency::from_edges(perm.len(), &edges).unwrap()
}

fn shuffled(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.below(i + 1));
    }
    p
}

#[test]
fn sage_conv_is_permutation_equivariant() {
    let mut rng = Rng::new(31, 0);
    let mut store = ParamStore::new();
    let gcn = Gcn::new("g", GcnConfig { input_dim: 5, hidden: 7, ..Default::default() });
    gcn.init(&mut store, &mut rng);
    let adj = random_graph(9, &mut rng);
    let x = randn(&[9, 5], &mut rng);
    let perm = shuffled(9, &mut rng);

    let mut t = Tape::new();
    let xv = t.input(x.clone());
    let y = sage_conv(&mut t, &store, "g.conv0", xv, adj.neighbors()).unwrap();
    let y = t.value(y).clone();

    let padj = permute_graph(&adj, &perm);
    let mut t = Tape::new();
    let xv = t.input(permute_rows(&x, &perm));
    let yp = sage_conv(&mut t, &store, "g.conv0", xv, padj.neighbors()).unwrap();
    let yp = t.value(yp).clone();

    let expect = permute_rows(&y, &perm);
    for (a, b) in yp.data().iter().zip(expect.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn graph_embedding_ignores_node_order() {
    let mut rng = Rng::new(32, 0);
    for trial in 0..5 {
        let mut store = ParamStore::new();
        let gcn = Gcn::new("g", GcnConfig { input_dim: 6, hidden: 16, head_widths: vec![16, 32], ..Default::default() });
        gcn.init(&mut store, &mut rng);
        let n = 12 + trial;
        let adj = random_graph(n, &mut rng);
        let x = randn(&[n, 6], &mut rng);
        let perm = shuffled(n, &mut rng);
        let padj = permute_graph(&adj, &perm);
        let px = permute_rows(&x, &perm);

        let embed = |x: &Tensor, a: &Adjacency| {
            let mut t = Tape::new();
            let v = t.input(x.clone());
            let h = gcn.embed(&mut t, &store, &[(v, a)], &mut Rng::new(0, 0), false).unwrap();
            t.value(h).clone()
        };
        let h1 = embed(&x, &adj);
        let h2 = embed(&px, &padj);
        assert_eq!(h1.shape(), &[1, 32]);
        for (a, b) in h1.data().iter().zip(h2.data()) {
            assert!((a - b).abs() < 1e-10, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn default_embeddings_are_32_wide() {
    let mut rng = Rng::new(33, 0);
    let mut store = ParamStore::new();
    let snn = Snn::new("snn", SnnConfig { input_dim: 20, ..Default::default() });
    let gcn = Gcn::new("gcn", GcnConfig::default());
    let cnn = Cnn::new("cnn", CnnConfig::default()).unwrap();
    snn.init(&mut store, &mut rng);
    gcn.init(&mut store, &mut rng);
    cnn.init(&mut store, &mut rng);
    assert_eq!(SnnConfig::default().widths, vec![64, 48, 32, 32]);

    let mut t = Tape::new();
    let g = t.input(randn(&[3, 20], &mut rng));
    let hn = snn.embed(&mut t, &store, g, &mut rng, true).unwrap();
    let adj = random_graph(10, &mut rng);
    let x = t.input(randn(&[10, 12], &mut rng));
    let hg = gcn.embed(&mut t, &store, &[(x, &adj), (x, &adj)], &mut rng, true).unwrap();
    let im = t.input(randn(&[3, 64, 64], &mut rng));
    let hi = cnn.embed(&mut t, &store, &[im], &mut rng, true).unwrap();
    assert_eq!(t.value(hn).shape(), &[3, EMBED_DIM]);
    assert_eq!(t.value(hg).shape(), &[2, EMBED_DIM]);
    assert_eq!(t.value(hi).shape(), &[1, EMBED_DIM]);
}

#[test]
fn hazards_stay_inside_range_and_grades_normalise() {
    let mut rng = Rng::new(34, 0);
    let mut store = ParamStore::new();
    let surv = OutputHead::new("s", 8, Task::Survival);
    let grade = OutputHead::new("c", 8, Task::Grade);
    surv.init(&mut store, Init::KaimingUniform, &mut rng);
    grade.init(&mut store, Init::KaimingUniform, &mut rng);
    let mut t = Tape::new();
    let mut h = randn(&[200, 8], &mut rng);
    for (i, v) in h.data_mut().iter_mut().enumerate() {
        *v *= 10f64.powi((i % 5) as i32);
    }
    let hv = t.input(h);
    let z = surv.forward(&mut t, &store, hv).unwrap();
    assert!(t.value(z).data().iter().all(|v| *v > -3.0 - 1e-12 && *v < 3.0 + 1e-12));
    let lp = grade.forward(&mut t, &store, hv).unwrap();
    let lp = t.value(lp);
    for r in 0..lp.rows() {
        let total: f64 = lp.row_slice(r).iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn kron_matches_triple_loop() {
    let mut rng = Rng::new(35, 0);
    for _ in 0..20 {
        let a: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let c: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let t = kron_fuse(&[&a, &b, &c]).unwrap();
        let ext = |v: &[f64]| v.iter().copied().chain([1.0]).collect::<Vec<_>>();
        let (a1, b1, c1) = (ext(&a), ext(&b), ext(&c));
        let mut k = 0;
        for x in &a1 {
            for y in &b1 {
                for z in &c1 {
                    assert!((t.values[k] - x * y * z).abs() <= 1e-15);
                    k += 1;
                }
            }
        }
        assert_eq!(k, t.len());
    }
}

#[test]
fn slices_recover_each_modality() {
    let mut rng = Rng::new(36, 0);
    let a: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
    let c: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
    let t = kron_fuse(&[&a, &b, &c]).unwrap();
    assert_eq!(t.extents, vec![33, 17, 17]);
    assert_eq!(t.at(&[32, 16, 16]).unwrap(), 1.0);
    for (axis, v) in [&a, &b, &c].iter().enumerate() {
        let s = t.unimodal_slice(axis).unwrap();
        assert_eq!(&s[..v.len()], &v[..]);
        assert_eq!(s[v.len()], 1.0);
    }
    // The slab with the last axis at its one-entry is the bimodal product.
    for i in 0..32 {
        for j in 0..16 {
            assert_eq!(t.at(&[i, j, 16]).unwrap(), a[i] * b[j]);
        }
    }
}

#[test]
fn fusion_head_widths_and_gated_slices() {
    let mut rng = Rng::new(37, 0);
    let tri = FusionHead::new(FusionMode::trimodal(), Task::Survival, FusionConfig::default());
    assert_eq!(tri.extents(), vec![33, 17, 17]);
    assert_eq!(tri.tensor_width(), 9537);
    let bi = FusionHead::new(FusionMode::parse("cnn_snn").unwrap(), Task::Survival, FusionConfig::default());
    assert_eq!(bi.extents(), vec![33, 33]);
    assert_eq!(bi.tensor_width(), 1089);

    let mut store = ParamStore::new();
    tri.init(&mut store, &mut rng);
    let mut t = Tape::new();
    let emb = Embeddings {
        image: Some(t.input(randn(&[2, 32], &mut rng))),
        graph: Some(t.input(randn(&[2, 32], &mut rng))),
        genomic: Some(t.input(randn(&[2, 32], &mut rng))),
    };
    let gated = tri.gated(&mut t, &store, &emb, &mut rng, false).unwrap();
    let flat = tri.fused(&mut t, &store, &emb, &mut rng, false).unwrap();
    let flat = t.value(flat).clone();
    for r in 0..2 {
        let vs: Vec<Vec<f64>> = gated.iter().map(|&g| t.value(g).row_slice(r).to_vec()).collect();
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let expect = kron_fuse(&refs).unwrap();
        assert_eq!(flat.row_slice(r), &expect.values[..]);
        for (axis, v) in vs.iter().enumerate() {
            assert_eq!(&expect.unimodal_slice(axis).unwrap()[..v.len()], &v[..]);
        }
    }
    let h = tri.forward(&mut t, &store, &emb, &mut rng, true).unwrap();
    assert_eq!(t.value(h).shape(), &[2, 1]);
}

#[test]
fn bimodal_graph_genomic_needs_no_image() {
    let mut rng = Rng::new(38, 0);
    let head = FusionHead::new(FusionMode::parse("gcn_snn").unwrap(), Task::Grade, FusionConfig::default());
    let mut store = ParamStore::new();
    head.init(&mut store, &mut rng);
    let mut t = Tape::new();
    let emb = Embeddings {
        image: None,
        graph: Some(t.input(randn(&[4, 32], &mut rng))),
        genomic: Some(t.input(randn(&[4, 32], &mut rng))),
    };
    let lp = head.forward(&mut t, &store, &emb, &mut rng, true).unwrap();
    assert_eq!(t.value(lp).shape(), &[4, 3]);

    let tri = FusionHead::new(FusionMode::trimodal(), Task::Grade, FusionConfig::default());
    tri.init(&mut store, &mut rng);
    assert!(matches!(
        tri.forward(&mut t, &store, &emb, &mut rng, false),
        Err(pathfuse::Error::Configuration(_))
    ));
}

#[test]
fn same_modality_ablation_builds() {
    let head = FusionHead::new(FusionMode::parse("snn_snn").unwrap(), Task::Survival, FusionConfig::default());
    assert!(head.mode.is_ablation());
    assert_eq!(head.tensor_width(), 1089);
}
