use std::collections::BTreeMap;
use std::path::Path;

use ggan::data::{load_checkpoint, pgm_grid_bytes, save_checkpoint, Checkpoint, Dataset};
use ggan::eval::{cluster_accuracy, reconstruction_mse};
use ggan::instances::{build_from_description, Bundle};
use ggan::numerics::{ParamStore, Tape, Tensor};
use ggan::stochastics::{NoiseBundle, NoiseKind, NoiseRequest, SampleCtx};
use ggan::trainer::Trainer;

use crate::config::{DatasetSpec, RunConfig};
use crate::CliError;

/// Rows used for in-loop and command-line evaluation.
const EVAL_ROWS: usize = 2000;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// A built model with its trainer, ready to train, sample or evaluate.
pub struct Session {
    pub config: RunConfig,
    pub data_spec: DatasetSpec,
    pub bundle: Bundle,
    pub trainer: Trainer,
}

impl Session {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.trainer.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let data_spec = config.dataset_spec()?;
        let desc = config.description(&data_spec)?;
        let mut store = ParamStore::new();
        let bundle = build_from_description(&desc, &mut store, config.trainer.seed)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let trainer = Trainer::new(bundle.model().clone(), store, config.trainer.clone())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self { config, data_spec, bundle, trainer })
    }

    /// Rebuilds the run recorded in a checkpoint and restores its state.
    pub fn from_checkpoint(dir: &Path) -> Result<Self, CliError> {
        let ckpt = load_checkpoint(dir).map_err(runtime)?;
        let config: RunConfig = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| CliError::Runtime(format!("checkpoint has no usable run description: {e}")))?;
        let mut session = Self::new(config)?;
        session.trainer.restore(ckpt.store, ckpt.step).map_err(runtime)?;
        Ok(session)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let meta = serde_json::to_value(&self.config).map_err(runtime)?;
        let ckpt = Checkpoint {
            step: self.trainer.step,
            seed: self.config.trainer.seed,
            store: self.trainer.store.clone(),
            meta,
        };
        save_checkpoint(&ckpt, dir).map_err(runtime)
    }

    /// Loads the dataset and checks it against the graph's observed variables.
    pub fn load_data(&self, spec: &DatasetSpec) -> Result<Dataset, CliError> {
        let data = spec.load()?;
        for v in self.bundle.model().dag.observed() {
            let width = v.domain.width();
            match data.column(&v.name) {
                Some(col) if col.cols() == width => {}
                Some(col) => {
                    return Err(CliError::Usage(format!(
                        "dataset column {} has width {}, graph expects {width}",
                        v.name,
                        col.cols()
                    )))
                }
                None => return Err(CliError::Usage(format!("dataset has no column for observed variable {}", v.name))),
            }
        }
        Ok(data)
    }

    /// ACC (when labels exist) and reconstruction MSE on the leading rows of `data`.
    pub fn metrics(&self, data: &Dataset) -> Result<BTreeMap<String, f64>, CliError> {
        let store = &self.trainer.store;
        let data = data.head(EVAL_ROWS);
        let mut out = BTreeMap::new();
        match &self.bundle {
            Bundle::Gmgan(b) => {
                let x = data.column("x").ok_or_else(|| runtime("dataset has no x column"))?;
                if let Some(labels) = &data.labels {
                    let (h, _) = b.infer(store, x).map_err(runtime)?;
                    let assignments = b.assignments(store, x).map_err(runtime)?;
                    out.insert("acc".into(), cluster_accuracy(&h, &assignments, labels).map_err(runtime)?.accuracy);
                }
                let rec = b.reconstruct(store, x).map_err(runtime)?;
                out.insert("mse".into(), reconstruction_mse(x, &rec).map_err(runtime)?);
            }
            Bundle::Ssgan(b) => {
                let frames: Vec<Tensor> = (1..=b.spec.t)
                    .map(|t| {
                        data.column(&format!("x{t}"))
                            .cloned()
                            .ok_or_else(|| runtime(format!("dataset has no x{t} column")))
                    })
                    .collect::<Result<_, _>>()?;
                let h = b.extract_content(store, &frames).map_err(runtime)?;
                let rec = b.motion_analogy(store, &h, &frames).map_err(runtime)?;
                let all = Tensor::concat_rows(&frames.iter().collect::<Vec<_>>()).map_err(runtime)?;
                let out_rows = Tensor::concat_rows(&rec.frames.iter().collect::<Vec<_>>()).map_err(runtime)?;
                out.insert("mse".into(), reconstruction_mse(&all, &out_rows).map_err(runtime)?);
            }
            Bundle::Custom(_) => {}
        }
        Ok(out)
    }

    /// PGM sample grid. GMGAN: `rows × K` with the component fixed per column.
    /// SSGAN: one clip per row, `T` frames or `rollout` frames. Custom graphs: one
    /// strip of the observed variables per row.
    pub fn sample_grid(&self, rows: usize, rollout: Option<usize>, seed: u64) -> Result<Vec<u8>, CliError> {
        if rows == 0 || rollout == Some(0) {
            return Err(CliError::Runtime("nothing to sample: the grid would be empty".into()));
        }
        let store = &self.trainer.store;
        let (frames, cols): (Vec<Tensor>, usize) = match &self.bundle {
            Bundle::Gmgan(b) => {
                let x = b.sample_by_component(store, rows, seed).map_err(runtime)?;
                let per_row = (0..rows * b.spec.k).map(|i| x.slice_rows(i, i + 1)).collect();
                (per_row, b.spec.k)
            }
            Bundle::Ssgan(b) => {
                let noise = NoiseBundle::generate(&b.model.generative_noise().map_err(runtime)?, rows, seed)
                    .map_err(runtime)?;
                let mut tape = Tape::new();
                let p = b.model.sample_p(&mut tape, store, &noise, &SampleCtx::evaluation()).map_err(runtime)?;
                let value =
                    |name: &str| p.value(&tape, name).cloned().ok_or_else(|| runtime(format!("sample lacks {name}")));
                let clip: Vec<Tensor> = match rollout {
                    Some(len) => {
                        let eps = if b.spec.shared_noise {
                            vec![noise.get("eps").cloned().ok_or_else(|| runtime("missing transition noise"))?]
                        } else {
                            let req = [NoiseRequest::new("eps", NoiseKind::Gaussian, b.spec.dim_eps)];
                            (1..len.max(2))
                                .map(|i| {
                                    NoiseBundle::generate(&req, rows, seed.wrapping_add(i as u64))
                                        .map(|n| n.get("eps").expect("requested").clone())
                                })
                                .collect::<Result<_, _>>()
                                .map_err(runtime)?
                        };
                        b.rollout(store, &value("h")?, &value("v1")?, len, &eps).map_err(runtime)?.frames
                    }
                    None => (1..=b.spec.t).map(|t| value(&format!("x{t}"))).collect::<Result<_, _>>()?,
                };
                let len = clip.len();
                let per_row = (0..rows).flat_map(|r| clip.iter().map(move |f| f.slice_rows(r, r + 1))).collect();
                (per_row, len)
            }
            Bundle::Custom(model) => {
                let noise =
                    NoiseBundle::generate(&model.generative_noise().map_err(runtime)?, rows, seed).map_err(runtime)?;
                let mut tape = Tape::new();
                let p = model.sample_p(&mut tape, store, &noise, &SampleCtx::evaluation()).map_err(runtime)?;
                let parts: Vec<Tensor> =
                    model.dag.observed().map(|v| p.value(&tape, &v.name).cloned().expect("sampled")).collect();
                let strip = Tensor::concat_cols(&parts.iter().collect::<Vec<_>>()).map_err(runtime)?;
                ((0..rows).map(|r| strip.slice_rows(r, r + 1)).collect(), 1)
            }
        };
        let width = frames[0].cols();
        let (fh, fw) = frame_shape(width);
        let grid_rows = frames.len().div_ceil(cols);
        let slices: Vec<&[f64]> = frames.iter().map(|f| f.data()).collect();
        pgm_grid_bytes(&slices, fh, fw, grid_rows, cols).map_err(runtime)
    }
}

/// Square frames when the width is a perfect square, one-pixel-high strips otherwise.
pub fn frame_shape(width: usize) -> (usize, usize) {
    let side = (width as f64).sqrt().round() as usize;
    if side * side == width {
        (side, side)
    } else {
        (1, width)
    }
}
