//! Clustering accuracy, reconstruction error and local-versus-global comparisons.

use std::fmt::Write as _;

mod suites;

pub use suites::{gradcheck_fixture, gradient_suite, oracle_suite, NamedCheck, OracleRow};

use thiserror::Error;

use crate::data::Dataset;
use crate::instances::{build_gmgan, GmganSpec, InstanceError};
use crate::numerics::{ParamStore, Tensor};
use crate::trainer::{Mode, TrainError, Trainer, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// Label adopted by each cluster; `None` for clusters without members.
    pub cluster_labels: Vec<Option<usize>>,
    pub cluster_sizes: Vec<usize>,
    pub accuracy: f64,
    pub assignments: Vec<usize>,
}

/// Labels each cluster with the true label of the member nearest (Euclidean, in `h`)
/// to the cluster centroid, then scores every member against that label. Distance
/// ties go to the lower sample index.
pub fn cluster_accuracy(h: &Tensor, assignments: &[usize], labels: &[usize]) -> Result<ClusterReport, EvalError> {
    let n = assignments.len();
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    if labels.len() != n || h.rows() != n {
        return Err(EvalError::ShapeMismatch(format!(
            "{} latents, {n} assignments, {} labels",
            h.rows(),
            labels.len()
        )));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let d = h.cols();
    let mut sizes = vec![0usize; k];
    let mut centroids = vec![0.0; k * d];
    for (i, &a) in assignments.iter().enumerate() {
        sizes[a] += 1;
        for (c, &v) in centroids[a * d..(a + 1) * d].iter_mut().zip(h.row(i)) {
            *c += v;
        }
    }
    for a in 0..k {
        if sizes[a] > 0 {
            centroids[a * d..(a + 1) * d].iter_mut().for_each(|c| *c /= sizes[a] as f64);
        }
    }
    let mut best: Vec<Option<(f64, usize)>> = vec![None; k];
    for (i, &a) in assignments.iter().enumerate() {
        let dist: f64 = h.row(i).iter().zip(&centroids[a * d..(a + 1) * d]).map(|(x, c)| (x - c) * (x - c)).sum();
        if best[a].is_none_or(|(bd, _)| dist < bd) {
            best[a] = Some((dist, i));
        }
    }
    let cluster_labels: Vec<Option<usize>> = best.iter().map(|b| b.map(|(_, i)| labels[i])).collect();
    let correct = assignments.iter().zip(labels).filter(|(&a, &l)| cluster_labels[a] == Some(l)).count();
    Ok(ClusterReport {
        cluster_labels,
        cluster_sizes: sizes,
        accuracy: correct as f64 / n as f64,
        assignments: assignments.to_vec(),
    })
}

/// Mean squared error over all entries.
pub fn reconstruction_mse(x: &Tensor, x_rec: &Tensor) -> Result<f64, EvalError> {
    if x.shape() != x_rec.shape() {
        return Err(EvalError::ShapeMismatch(format!("{:?} vs {:?}", x.shape(), x_rec.shape())));
    }
    if x.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(x.data().iter().zip(x_rec.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunScores {
    pub acc: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRow {
    pub seed: u64,
    pub mode: Mode,
    pub scores: Result<RunScores, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub mode: Mode,
    pub runs: usize,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<SeedRow>,
    pub local: ModeSummary,
    pub global: ModeSummary,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

fn summarize(rows: &[SeedRow], mode: Mode) -> ModeSummary {
    let ok: Vec<RunScores> = rows.iter().filter(|r| r.mode == mode).filter_map(|r| r.scores.clone().ok()).collect();
    let (acc_mean, acc_std) = mean_std(&ok.iter().map(|s| s.acc).collect::<Vec<_>>());
    let (mse_mean, mse_std) = mean_std(&ok.iter().map(|s| s.mse).collect::<Vec<_>>());
    ModeSummary { mode, runs: ok.len(), acc_mean, acc_std, mse_mean, mse_std }
}

/// Runs both modes for every seed. Failed runs are recorded, not fatal.
pub fn compare_modes<F>(seeds: &[u64], mut run: F) -> ComparisonReport
where
    F: FnMut(Mode, u64) -> Result<RunScores, String>,
{
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        for mode in [Mode::Local, Mode::Global] {
            rows.push(SeedRow { seed, mode, scores: run(mode, seed) });
        }
    }
    ComparisonReport { local: summarize(&rows, Mode::Local), global: summarize(&rows, Mode::Global), rows }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl ComparisonReport {
    /// Unchecked ordering: local ACC at least global ACC and local MSE at most global MSE.
    pub fn local_not_worse(&self) -> bool {
        match (self.local.acc_mean, self.global.acc_mean, self.local.mse_mean, self.global.mse_mean) {
            (Some(la), Some(ga), Some(lm), Some(gm)) => la >= ga && lm <= gm,
            _ => false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,mode,acc,mse,error\n");
        for r in &self.rows {
            match &r.scores {
                Ok(s) => writeln!(out, "{},{},{},{},", r.seed, r.mode, s.acc, s.mse),
                Err(e) => writeln!(out, "{},{},,,{}", r.seed, r.mode, e.replace([',', '\n'], " ")),
            }
            .expect("string write");
        }
        for s in [&self.local, &self.global] {
            writeln!(out, "mean,{},{},{},", s.mode, opt(s.acc_mean), opt(s.mse_mean)).expect("string write");
            writeln!(out, "std,{},{},{},", s.mode, opt(s.acc_std), opt(s.mse_std)).expect("string write");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let fmt = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            (Some(m), None) => format!("{m:.4}"),
            _ => "n/a".into(),
        };
        let mut out = String::new();
        for s in [&self.local, &self.global] {
            writeln!(
                out,
                "{:<6} runs={} ACC={} MSE={}",
                s.mode.to_string(),
                s.runs,
                fmt(s.acc_mean, s.acc_std),
                fmt(s.mse_mean, s.mse_std)
            )
            .expect("string write");
        }
        for r in self.rows.iter().filter(|r| r.scores.is_err()) {
            writeln!(out, "seed {} {} failed: {}", r.seed, r.mode, r.scores.as_ref().unwrap_err())
                .expect("string write");
        }
        out
    }
}

/// ACC and MSE of a GMGAN on labelled data `x`.
pub fn score_gmgan(
    bundle: &crate::instances::GmganBundle,
    store: &ParamStore,
    x: &Tensor,
    labels: &[usize],
) -> Result<RunScores, InstanceError> {
    let (h, _) = bundle.infer(store, x)?;
    let assignments = bundle.assignments(store, x)?;
    let acc =
        cluster_accuracy(&h, &assignments, labels).map_err(|e| InstanceError::BadDimension(e.to_string()))?.accuracy;
    let rec = bundle.reconstruct(store, x)?;
    let mse = reconstruction_mse(x, &rec).map_err(|e| InstanceError::BadDimension(e.to_string()))?;
    Ok(RunScores { acc, mse })
}

/// Trains one GMGAN for `config.steps` steps and scores it on `data`.
pub fn run_gmgan(spec: &GmganSpec, config: &TrainerConfig, data: &Dataset) -> Result<RunScores, TrainError> {
    let mut store = ParamStore::new();
    let bundle = build_gmgan(spec, &mut store, config.seed).map_err(|e| TrainError::BadConfig(e.to_string()))?;
    let mut trainer = Trainer::new(bundle.model.clone(), store, config.clone())?;
    trainer.train(data, config.steps, 0, None)?;
    let x = data.column("x").ok_or_else(|| TrainError::MissingVariable("x".into()))?;
    let labels = data.labels.as_deref().ok_or_else(|| TrainError::BadConfig("dataset has no labels".into()))?;
    score_gmgan(&bundle, &trainer.store, x, labels).map_err(|e| TrainError::BadConfig(e.to_string()))
}

#[cfg(test)]
mod tests;
