use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ggan::data::{make_bouncing_dot, make_mixture, read_idx, Dataset, IdxData};
use ggan::graph::GraphDescription;
use ggan::numerics::Tensor;
use ggan::trainer::TrainerConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Graph given inline in the run file or as a path to a description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    Path(PathBuf),
    Inline(GraphDescription),
}

/// Everything a training run needs. Command-line flags override file values field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `gmgan`, `ssgan` or `custom`. A graph description, when given, supplies it.
    pub instance: String,
    pub graph: Option<GraphSource>,
    pub k: Option<usize>,
    pub t: Option<usize>,
    pub dims: BTreeMap<String, usize>,
    /// `mixture:K=5,dim=32,n=5000,sep=8`, `video:T=4,side=8,n=2000` or `idx:images=PATH[,labels=PATH]`.
    pub dataset: String,
    pub out: PathBuf,
    pub eval_every: u64,
    pub sample_every: u64,
    pub ckpt_every: u64,
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            instance: "gmgan".into(),
            graph: None,
            k: None,
            t: None,
            dims: BTreeMap::new(),
            dataset: String::new(),
            out: PathBuf::from("runs"),
            eval_every: 1000,
            sample_every: 5000,
            ckpt_every: 5000,
            trainer: TrainerConfig { seed: 1, ..TrainerConfig::default() },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Graph description with desk-scale defaults filled in from the dataset.
    pub fn description(&self, data: &DatasetSpec) -> Result<GraphDescription, CliError> {
        let mut desc = match &self.graph {
            Some(GraphSource::Path(p)) => GraphDescription::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            Some(GraphSource::Inline(d)) => d.clone(),
            None => GraphDescription {
                instance: self.instance.clone(),
                ..GraphDescription::from_json("{}").expect("empty description")
            },
        };
        desc.k = self.k.or(desc.k);
        desc.t = self.t.or(desc.t);
        desc.dims.extend(self.dims.clone());
        let idx_width = match (desc.instance.as_str(), data) {
            ("gmgan", DatasetSpec::Idx { images, .. }) if !desc.dims.contains_key("x") => {
                match read_idx(images).map_err(|e| CliError::Runtime(e.to_string()))? {
                    IdxData::Images(t) => Some(t.shape()[1..].iter().product()),
                    IdxData::Labels(_) => {
                        return Err(CliError::Usage(format!("{} holds labels, not images", images.display())))
                    }
                }
            }
            _ => None,
        };
        let mut default = |key: &str, value: usize| {
            desc.dims.entry(key.into()).or_insert(value);
        };
        match (desc.instance.as_str(), data) {
            ("gmgan", DatasetSpec::Mixture { k, dim, .. }) => {
                default("x", *dim);
                default("h", 4);
                default("hidden", 64);
                desc.k = desc.k.or(Some(*k));
            }
            ("gmgan", DatasetSpec::Idx { .. }) => {
                if let Some(width) = idx_width {
                    default("x", width);
                }
                default("h", 4);
                default("hidden", 64);
            }
            ("ssgan", DatasetSpec::Video { t, side, .. }) => {
                default("x", side * side);
                default("h", 8);
                default("v", 4);
                default("eps", 4);
                default("hidden", 16);
                default("trans", 16);
                default("features", 16);
                desc.t = desc.t.or(Some(*t));
            }
            ("gmgan" | "ssgan" | "custom", _) => {}
            (other, _) => return Err(CliError::Usage(format!("unknown instance {other:?}"))),
        }
        Ok(desc)
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, CliError> {
        let instance = match &self.graph {
            Some(GraphSource::Inline(d)) => d.instance.as_str(),
            _ => self.instance.as_str(),
        };
        let text = match (self.dataset.as_str(), instance) {
            ("", "ssgan") => "video",
            ("", _) => "mixture",
            (s, _) => s,
        };
        DatasetSpec::parse(text, self.trainer.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Mixture { k: usize, dim: usize, n: usize, sep: f64, seed: u64 },
    Video { t: usize, side: usize, n: usize, seed: u64 },
    Idx { images: PathBuf, labels: Option<PathBuf> },
}

fn kv(body: &str) -> Result<BTreeMap<String, String>, CliError> {
    body.split(',')
        .filter(|s| !s.is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("expected key=value in dataset spec, got {pair:?}")))
        })
        .collect()
}

fn take<T: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str, default: T) -> Result<T, CliError> {
    match map.remove(key) {
        Some(v) => v.parse().map_err(|_| CliError::Usage(format!("bad value {v:?} for dataset key {key}"))),
        None => Ok(default),
    }
}

impl DatasetSpec {
    /// Parses `kind[:key=value,...]`. Synthetic sets default to the run seed.
    pub fn parse(text: &str, seed: u64) -> Result<Self, CliError> {
        let (kind, body) = text.split_once(':').unwrap_or((text, ""));
        let mut map = kv(body)?;
        let spec = match kind {
            "mixture" => DatasetSpec::Mixture {
                k: take(&mut map, "K", 5)?,
                dim: take(&mut map, "dim", 32)?,
                n: take(&mut map, "n", 5000)?,
                sep: take(&mut map, "sep", 8.0)?,
                seed: take(&mut map, "seed", seed)?,
            },
            "video" => DatasetSpec::Video {
                t: take(&mut map, "T", 4)?,
                side: take(&mut map, "side", 8)?,
                n: take(&mut map, "n", 2000)?,
                seed: take(&mut map, "seed", seed)?,
            },
            "idx" => DatasetSpec::Idx {
                images: map
                    .remove("images")
                    .map(PathBuf::from)
                    .ok_or_else(|| CliError::Usage("idx dataset needs images=PATH".into()))?,
                labels: map.remove("labels").map(PathBuf::from),
            },
            other => return Err(CliError::Usage(format!("unknown dataset kind {other:?}"))),
        };
        if let Some(key) = map.keys().next() {
            return Err(CliError::Usage(format!("unknown dataset key {key:?} for {kind}")));
        }
        Ok(spec)
    }

    pub fn load(&self) -> Result<Dataset, CliError> {
        let runtime = |e: ggan::data::DataError| CliError::Runtime(e.to_string());
        match self {
            DatasetSpec::Mixture { k, dim, n, sep, seed } => {
                Ok(make_mixture(*k, *dim, *n, *sep, *seed).map_err(runtime)?.dataset())
            }
            DatasetSpec::Video { t, side, n, seed } => {
                Ok(make_bouncing_dot(*t, *side, *n, *seed).map_err(runtime)?.dataset())
            }
            DatasetSpec::Idx { images, labels } => {
                let x = match read_idx(images).map_err(runtime)? {
                    IdxData::Images(t) => flatten(t),
                    IdxData::Labels(_) => {
                        return Err(CliError::Usage(format!("{} holds labels, not images", images.display())))
                    }
                };
                let labels = match labels {
                    Some(p) => match read_idx(p).map_err(runtime)? {
                        IdxData::Labels(l) => Some(l.into_iter().map(usize::from).collect()),
                        IdxData::Images(_) => {
                            return Err(CliError::Usage(format!("{} holds images, not labels", p.display())))
                        }
                    },
                    None => None,
                };
                Dataset::new(BTreeMap::from([("x".to_string(), x)]), labels).map_err(runtime)
            }
        }
    }
}

/// `[n, r, c]` images as `[n, r·c]` rows.
pub fn flatten(t: Tensor) -> Tensor {
    let shape = t.shape().to_vec();
    let n = shape[0];
    let width = shape[1..].iter().product();
    t.reshape(vec![n, width]).expect("same size")
}
