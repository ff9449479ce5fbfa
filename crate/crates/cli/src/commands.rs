use std::path::{Path, PathBuf};

use log::info;
use pathfuse::cellgraph::io::{load_gray_png, load_mask};
use pathfuse::cellgraph::{build_cell_graph, GraphConfig};
use pathfuse::nets::Task;
use pathfuse::pipeline::{
    attribute_fold, compute_metrics, cross_validate, load_fold_models, predict_fold, save_fold_models, thread_count,
    write_reports, ModelSpec, RunConfig, THREADS_ENV,
};
use pathfuse::synthio::{load_cohort, oracle_c_index, save_cohort, synth_generate, SynthSpec};
use pathfuse::Tensor;

use crate::{AttributeArgs, GraphArgs, RunArgs, SynthArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pathfuse::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 usage, 3 configuration, 4 missing or unreadable inputs, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use pathfuse::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Configuration(_)) => 3,
            CliError::Core(E::Load(_) | E::Ingestion { .. } | E::Io(_)) | CliError::File { .. } | CliError::Json { .. } => 4,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(pathfuse::Error::from)? + "\n";
    std::fs::write(path, text).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Sizes the global pool when `PATHFUSE_THREADS` is set.
fn init_threads() {
    if std::env::var_os(THREADS_ENV).is_some() {
        let n = thread_count(usize::MAX);
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok() {
            info!("using at most {n} threads");
        }
    }
}

const SAVED_CONFIG: &str = "config.json";

/// Base configuration (explicit file, preset, the run directory's saved
/// copy, or the desk preset), then flag overrides.
fn resolve(a: &RunArgs) -> Result<(RunConfig, Vec<ModelSpec>)> {
    let saved = a.out.join(SAVED_CONFIG);
    let mut cfg = match (&a.config, &a.preset) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --config or --preset, not both".into())),
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) if saved.exists() => RunConfig::load(&saved)?,
        (None, None) => RunConfig::desk(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = &a.task {
        cfg.task = Task::parse(t)?;
    }
    if let Some(f) = a.folds {
        cfg.folds = f;
    }
    if a.fold.is_some() {
        cfg.fold = a.fold;
    }
    if let Some(p) = a.parallel {
        cfg.parallel = p;
    }
    let models = if a.model.is_empty() {
        vec![cfg.model.clone()]
    } else {
        a.model.iter().map(|m| ModelSpec::parse(m)).collect::<pathfuse::Result<Vec<_>>>()?
    };
    cfg.model = models[0].clone();
    Ok((cfg, models))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.n {
        spec.n = n;
    }
    init_threads();
    let cohort = synth_generate(&spec)?;
    let manifest = save_cohort(&cohort, &a.out)?;
    write_json(&a.out.join("synth_spec.json"), &spec)?;
    let oracle = oracle_c_index(&cohort)?;
    info!("{} patients, oracle c-index {oracle:.4}", cohort.len());
    println!("{}", manifest.display());
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<Tensor> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(pathfuse::Error::from)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(pathfuse::Error::from)?;
        let row = rec
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("{}: row {}: `{v}` is not a number", path.display(), i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Tensor::from_rows(&rows)?)
}

pub fn graph_build(a: &GraphArgs) -> Result<()> {
    let mut cfg: GraphConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GraphConfig::default(),
    };
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(d) = a.d {
        cfg.d = d;
    }
    init_threads();
    let mask = load_mask(&a.mask)?;
    let gray = load_gray_png(&a.image)?;
    let external = a.external.as_deref().map(read_matrix_csv).transpose()?;
    let g = build_cell_graph(&mask, &gray, external.as_ref(), &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(pathfuse::Error::from)?;
    }
    g.save(&a.out)?;
    info!(
        "{} nuclei, {} features, {} edges",
        g.n_nodes(),
        g.n_features(),
        g.adjacency.edges().len()
    );
    Ok(())
}

pub fn train(a: &RunArgs) -> Result<()> {
    let (cfg, models) = resolve(a)?;
    init_threads();
    let cohort = load_cohort(&a.manifest)?;
    std::fs::create_dir_all(&a.out).map_err(pathfuse::Error::from)?;
    let names: Vec<String> = models.iter().map(ModelSpec::name).collect();
    info!("training {} on {} patients", names.join(", "), cohort.len());
    let outcomes = cross_validate(&cohort, &cfg, &models)?;
    for o in &outcomes {
        save_fold_models(&a.out, &o.models)?;
    }
    cfg.save(a.out.join(SAVED_CONFIG))?;
    println!("trained {} fold(s) into {}", outcomes.len(), a.out.display());
    Ok(())
}

pub fn eval(a: &RunArgs) -> Result<()> {
    let (cfg, models) = resolve(a)?;
    init_threads();
    let cohort = load_cohort(&a.manifest)?;
    for model in &models {
        let mut per_fold = Vec::new();
        for k in cfg.fold_indices()? {
            let fm = load_fold_models(&a.out, k, model)?;
            per_fold.push((k, predict_fold(&cohort, &cfg, &fm, model)?));
        }
        let (metrics, rows) = compute_metrics(&cohort, &cfg, &model.name(), &per_fold)?;
        let dest = a.out.join("eval").join(model.name());
        write_reports(&dest, &metrics, &rows)?;
        let summary = match (&metrics.c_index, &metrics.auc_micro) {
            (Some(c), _) => format!("c-index {:.4} ± {:.4}", c.mean, c.sd),
            (None, Some(auc)) => format!("micro AUC {:.4} ± {:.4}", auc.mean, auc.sd),
            _ => "no metric defined".to_string(),
        };
        println!("{}: {summary} over {} fold(s) -> {}", model, per_fold.len(), dest.display());
    }
    Ok(())
}

pub fn attribute(a: &AttributeArgs) -> Result<()> {
    let (cfg, models) = resolve(&a.run)?;
    init_threads();
    let cohort = load_cohort(&a.run.manifest)?;
    let k = cfg.fold.unwrap_or(0);
    for model in &models {
        let fm = load_fold_models(&a.run.out, k, model)?;
        let dest = a.run.out.join("attribution").join(model.name()).join(format!("fold{k:02}"));
        let r = attribute_fold(&cohort, &cfg, &fm, model, &dest, a.nodes, a.limit)?;
        println!(
            "{}: {} patients, max completeness gap {:.2e}, {} heatmaps -> {}",
            model,
            r.patients,
            r.max_completeness_gap,
            r.heatmaps,
            dest.display()
        );
    }
    Ok(())
}
