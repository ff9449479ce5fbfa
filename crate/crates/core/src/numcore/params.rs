use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    /// First and second Adam moments.
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub trainable: bool,
}

impl ParamEntry {
    fn new(value: Tensor) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Self {
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            step: 0,
            trainable: true,
        }
    }
}

/// Named parameters with gradients and optimizer state. Iteration order is
/// the lexicographic order of names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts (or replaces) a parameter with fresh gradient and moments.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), ParamEntry::new(value));
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn entry_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entry(name)
            .map(|e| &e.value)
            .ok_or_else(|| Error::Lookup(format!("parameter `{name}`")))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Lookup(format!("parameter `{name}`")))?;
        if e.value.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                e.value.shape(),
                value.shape()
            )));
        }
        e.value = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, g: &Tensor) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Lookup(format!("parameter `{name}`")))?;
        e.grad.add_assign(g)
    }

    /// Marks every parameter whose name starts with `prefix` as (un)frozen.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for (k, e) in self.entries.iter_mut() {
            if k.starts_with(prefix) {
                e.trainable = trainable;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.grad.dot(&e.grad))
            .sum::<f64>()
            .sqrt()
    }

    /// Copies every parameter of `other` under `from_prefix` into this store,
    /// renaming the prefix to `to_prefix`.
    pub fn import_prefixed(&mut self, other: &ParamStore, from_prefix: &str, to_prefix: &str) -> usize {
        let mut n = 0;
        for (k, e) in &other.entries {
            if let Some(rest) = k.strip_prefix(from_prefix) {
                self.insert(format!("{to_prefix}{rest}"), e.value.clone());
                n += 1;
            }
        }
        n
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint::from_store(self);
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        ck.into_store()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// N(0, 1/fan_in), the self-normalizing convention.
    LecunNormal,
    /// U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    KaimingUniform,
}

impl Init {
    fn sample(self, fan_in: usize, rng: &mut Rng) -> f64 {
        match self {
            Init::LecunNormal => rng.normal() / (fan_in as f64).sqrt(),
            Init::KaimingUniform => {
                let bound = (6.0 / fan_in as f64).sqrt();
                rng.uniform_range(-bound, bound)
            }
        }
    }
}

/// Registers `{prefix}.weight` `[fan_in, fan_out]` and a zero `{prefix}.bias`.
pub fn init_linear(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize, init: Init, rng: &mut Rng) {
    let w: Vec<f64> = (0..fan_in * fan_out).map(|_| init.sample(fan_in, rng)).collect();
    store.insert(
        format!("{prefix}.weight"),
        Tensor::new(vec![fan_in, fan_out], w).expect("positive extents"),
    );
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[fan_out]));
}

/// Registers `{prefix}.weight` `[out, in, k, k]` and a zero `{prefix}.bias`.
pub fn init_conv(
    store: &mut ParamStore,
    prefix: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    init: Init,
    rng: &mut Rng,
) {
    let fan_in = in_channels * kernel * kernel;
    let w: Vec<f64> = (0..out_channels * fan_in)
        .map(|_| init.sample(fan_in, rng))
        .collect();
    store.insert(
        format!("{prefix}.weight"),
        Tensor::new(vec![out_channels, in_channels, kernel, kernel], w).expect("positive extents"),
    );
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[out_channels]));
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    entries: Vec<CheckpointEntry>,
}

const CHECKPOINT_FORMAT: &str = "pathfuse-checkpoint";

impl Checkpoint {
    fn from_store(store: &ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            entries: store
                .iter()
                .map(|(name, e)| CheckpointEntry {
                    name: name.to_string(),
                    shape: e.value.shape().to_vec(),
                    dtype: "f64".into(),
                    values: e.value.data().to_vec(),
                })
                .collect(),
        }
    }

    fn into_store(self) -> Result<ParamStore> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Load(format!("unknown checkpoint format `{}`", self.format)));
        }
        let mut store = ParamStore::new();
        for e in self.entries {
            if e.dtype != "f64" {
                return Err(Error::Load(format!("`{}` has dtype {}, expected f64", e.name, e.dtype)));
            }
            let t = Tensor::new(e.shape, e.values)
                .map_err(|err| Error::Load(format!("`{}`: {err}", e.name)))?;
            store.insert(e.name, t);
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = Rng::new(3, 0);
        let mut store = ParamStore::new();
        init_linear(&mut store, "fc", 5, 3, Init::LecunNormal, &mut rng);
        init_conv(&mut store, "conv", 2, 4, 3, Init::KaimingUniform, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        store.save_checkpoint(&path).unwrap();
        let back = ParamStore::load_checkpoint(&path).unwrap();
        assert_eq!(back, store);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"dtype\":\"f64\""));
    }

    #[test]
    fn lecun_normal_variance() {
        let mut rng = Rng::new(5, 0);
        let mut store = ParamStore::new();
        init_linear(&mut store, "fc", 400, 100, Init::LecunNormal, &mut rng);
        let w = store.value("fc.weight").unwrap();
        let var = w.dot(w) / w.len() as f64;
        assert!((var - 1.0 / 400.0).abs() < 0.1 / 400.0);
    }

    #[test]
    fn set_value_checks_shape() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::zeros(&[2]));
        assert!(store.set_value("a", Tensor::zeros(&[3])).is_err());
        assert!(store.set_value("missing", Tensor::zeros(&[2])).is_err());
    }
}
