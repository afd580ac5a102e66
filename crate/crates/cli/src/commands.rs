use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ggan::data::{read_idx, IdxData};
use ggan::eval::{compare_modes, gradcheck_fixture, gradient_suite, oracle_suite, RunScores};
use ggan::instances::Bundle;
use ggan::numerics::{GradCheckOptions, Tensor};
use ggan::trainer::{write_metrics_csv, GeneratorLoss, Mode};

use crate::config::{flatten, DatasetSpec, GraphSource, RunConfig};
use crate::session::Session;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "ggan", version, about = "Graphical GAN training with per-factor discriminators")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes ckpt-<step>/, metrics.csv and samples-<step>.pgm.
    Train(TrainArgs),
    /// Write a sample grid from a checkpoint.
    Sample(SampleArgs),
    /// Clustering accuracy and reconstruction error of a checkpoint.
    Eval(EvalArgs),
    /// Latents, component posteriors and reconstructions for given inputs.
    Infer(InferArgs),
    /// Train both modes over several seeds and report ACC and MSE side by side.
    Compare(CompareArgs),
    /// Exact local and joint divergences on small tabular models.
    Oracle(OracleArgs),
    /// Finite-difference checks of every network in the built-in instances.
    Gradcheck(GradcheckArgs),
}

/// Run settings. Flags override values read from `--config`; `GGAN_OUT` overrides the
/// output directory from either.
#[derive(Debug, Args, Default)]
struct RunFlags {
    /// JSON run description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gmgan, ssgan or custom.
    #[arg(long)]
    instance: Option<String>,
    /// JSON graph description (custom graphs or built-in instances with options).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Number of mixture components.
    #[arg(long)]
    k: Option<usize>,
    /// Sequence length.
    #[arg(long)]
    t: Option<usize>,
    /// Instance dimension, e.g. `--dim h=8` (keys h, v, x, eps, hidden, trans, features).
    #[arg(long = "dim", value_parser = parse_dim)]
    dims: Vec<(String, usize)>,
    /// mixture:K=5,dim=32,n=5000,sep=8 | video:T=4,side=8,n=2000 | idx:images=PATH,labels=PATH
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    sample_every: Option<u64>,
    #[arg(long)]
    ckpt_every: Option<u64>,
    /// local or global.
    #[arg(long)]
    mode: Option<Mode>,
    /// minimax or non_saturating.
    #[arg(long, value_parser = parse_loss)]
    generator_loss: Option<GeneratorLoss>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    disc_steps: Option<usize>,
    /// Gumbel-Softmax temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Comma-separated discriminator hidden widths.
    #[arg(long, value_delimiter = ',')]
    disc_hidden: Option<Vec<usize>>,
    /// Per-variable embedding width inside each discriminator (0 disables).
    #[arg(long)]
    disc_branch: Option<usize>,
}

fn parse_dim(s: &str) -> Result<(String, usize), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    Ok((k.to_string(), v.parse().map_err(|_| format!("bad dimension {v:?}"))?))
}

fn parse_loss(s: &str) -> Result<GeneratorLoss, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown generator loss {s:?}"))
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.instance {
            c.instance = v.clone();
        }
        if let Some(p) = &self.graph {
            c.graph = Some(GraphSource::Path(p.clone()));
        }
        c.k = self.k.or(c.k);
        c.t = self.t.or(c.t);
        c.dims.extend(self.dims.iter().cloned());
        if let Some(v) = &self.dataset {
            c.dataset = v.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Ok(env) = std::env::var("GGAN_OUT") {
            if !env.is_empty() {
                c.out = PathBuf::from(env);
            }
        }
        c.eval_every = self.eval_every.unwrap_or(c.eval_every);
        c.sample_every = self.sample_every.unwrap_or(c.sample_every);
        c.ckpt_every = self.ckpt_every.unwrap_or(c.ckpt_every);
        let t = &mut c.trainer;
        t.mode = self.mode.unwrap_or(t.mode);
        t.generator_loss = self.generator_loss.unwrap_or(t.generator_loss);
        t.steps = self.steps.unwrap_or(t.steps);
        t.seed = self.seed.unwrap_or(t.seed);
        t.batch = self.batch.unwrap_or(t.batch);
        t.adam.lr = self.lr.unwrap_or(t.adam.lr);
        t.adam.beta1 = self.beta1.unwrap_or(t.adam.beta1);
        t.adam.beta2 = self.beta2.unwrap_or(t.adam.beta2);
        t.disc_steps = self.disc_steps.unwrap_or(t.disc_steps);
        t.temperature = self.temperature.unwrap_or(t.temperature);
        if let Some(h) = &self.disc_hidden {
            t.disc.hidden = h.clone();
        }
        if let Some(b) = self.disc_branch {
            t.disc.branch = (b > 0).then_some(b);
        }
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Continue from a checkpoint directory; `--steps` more steps are taken.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Grid rows: samples per mixture component, or clips.
    #[arg(long, default_value_t = 8)]
    rows: usize,
    /// Frames per clip for sequence models, beyond the trained length if desired.
    #[arg(long)]
    rollout: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; defaults to samples-<step>.pgm next to the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset to score; defaults to the training dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// IDX image file or CSV with one input row per line. For sequence models the rows are
    /// the frames of one clip.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunFlags,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Exit with the verification code unless local is at least as good as global on both metrics.
    #[arg(long)]
    gate: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Random binary chains checked after the built-in fixture.
    #[arg(long, default_value_t = 5)]
    chains: u64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// gmgan, ssgan or all.
    #[arg(long, default_value = "all")]
    instance: String,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Compare(a) => compare(a),
        Command::Oracle(a) => oracle(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn due(every: u64, step: u64, last: bool) -> bool {
    last || (every > 0 && step % every == 0)
}

fn write_metrics(path: &Path, records: &[ggan::trainer::MetricRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_metrics_csv(records, &mut buf).map_err(io(path))?;
    fs::write(path, buf).map_err(io(path))
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let config = args.run.resolve()?;
    let mut session = Session::new(config.clone())?;
    if let Some(dir) = &args.resume {
        let ckpt = ggan::data::load_checkpoint(dir).map_err(|e| CliError::Runtime(e.to_string()))?;
        session.trainer.restore(ckpt.store, ckpt.step).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let out = config.out.clone();
    fs::create_dir_all(&out).map_err(io(&out))?;
    let start = session.trainer.step;
    let steps = config.trainer.steps;
    if steps == 0 {
        let dir = out.join(format!("ckpt-{start}"));
        session.save(&dir)?;
        println!("wrote {}", dir.display());
        return Ok(());
    }
    let data = session.load_data(&session.data_spec.clone())?;
    let metrics_path = out.join("metrics.csv");
    let end = start + steps;
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let mut record = match session.trainer.train_step(&data) {
            Ok(r) => r,
            Err(e) => {
                write_metrics(&metrics_path, &records)?;
                return Err(CliError::Runtime(e.to_string()));
            }
        };
        let step = record.step;
        let last = step == end;
        if due(config.eval_every, step, last) {
            record.eval = session.metrics(&data)?;
            let evals: Vec<String> = record.eval.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
            println!("step {step} objective {:.4} {}", record.objective, evals.join(" "));
        }
        records.push(record);
        if due(config.sample_every, step, last) {
            let path = out.join(format!("samples-{step}.pgm"));
            fs::write(&path, session.sample_grid(8, None, config.trainer.seed)?).map_err(io(&path))?;
        }
        if due(config.ckpt_every, step, last) {
            session.save(&out.join(format!("ckpt-{step}")))?;
        }
    }
    write_metrics(&metrics_path, &records)
}

fn sample(args: SampleArgs) -> Result<(), CliError> {
    let session = Session::from_checkpoint(&args.ckpt)?;
    let bytes = session.sample_grid(args.rows, args.rollout, args.seed)?;
    let path = args.out.unwrap_or_else(|| {
        let parent = args.ckpt.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        parent.join(format!("samples-{}.pgm", session.trainer.step))
    });
    fs::write(&path, bytes).map_err(io(&path))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(io(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let session = Session::from_checkpoint(&args.ckpt)?;
    let spec = match &args.dataset {
        Some(s) => DatasetSpec::parse(s, session.config.trainer.seed)?,
        None => session.data_spec.clone(),
    };
    let data = session.load_data(&spec)?;
    let mut text = String::from("key,value\n");
    writeln!(text, "step,{}", session.trainer.step).expect("string write");
    if let (Bundle::Gmgan(b), Some(labels)) = (&session.bundle, &data.labels) {
        let head = data.head(2000);
        let x = head.column("x").expect("checked by load_data");
        let store = &session.trainer.store;
        let (h, _) = b.infer(store, x).map_err(|e| CliError::Runtime(e.to_string()))?;
        let assignments = b.assignments(store, x).map_err(|e| CliError::Runtime(e.to_string()))?;
        let report = ggan::eval::cluster_accuracy(&h, &assignments, &labels[..x.rows()])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for (c, (label, size)) in report.cluster_labels.iter().zip(&report.cluster_sizes).enumerate() {
            let label = label.map_or_else(String::new, |l| l.to_string());
            writeln!(text, "cluster{c}_label,{label}\ncluster{c}_size,{size}").expect("string write");
        }
    }
    for (k, v) in session.metrics(&data)? {
        writeln!(text, "{k},{v}").expect("string write");
    }
    emit(args.out.as_deref(), &text)
}

fn read_rows(path: &Path) -> Result<Tensor, CliError> {
    let bytes = fs::read(path).map_err(io(path))?;
    if bytes.starts_with(&[0, 0, 8, 3]) {
        return match read_idx(path).map_err(|e| CliError::Runtime(e.to_string()))? {
            IdxData::Images(t) => Ok(flatten(t)),
            IdxData::Labels(_) => unreachable!("image magic"),
        };
    }
    let text =
        String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{} is neither IDX nor CSV", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(CliError::Usage(format!("{}: line {} is not numeric", path.display(), i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{} has no input rows", path.display())));
    }
    Tensor::from_rows(&rows).map_err(|e| CliError::Usage(e.to_string()))
}

fn csv_row(out: &mut String, parts: &[&[f64]]) {
    let cells: Vec<String> = parts.iter().flat_map(|p| p.iter().map(|v| v.to_string())).collect();
    writeln!(out, "{}", cells.join(",")).expect("string write");
}

fn header(out: &mut String, groups: &[(&str, usize)]) {
    let names: Vec<String> = groups.iter().flat_map(|(n, w)| (0..*w).map(move |i| format!("{n}{i}"))).collect();
    writeln!(out, "{}", names.join(",")).expect("string write");
}

fn infer(args: InferArgs) -> Result<(), CliError> {
    let session = Session::from_checkpoint(&args.ckpt)?;
    let x = read_rows(&args.input)?;
    let store = &session.trainer.store;
    let rt = |e: ggan::instances::InstanceError| CliError::Runtime(e.to_string());
    let mut text = String::new();
    match &session.bundle {
        Bundle::Gmgan(b) => {
            if x.cols() != b.spec.dim_x {
                return Err(CliError::Usage(format!("inputs have width {}, model expects {}", x.cols(), b.spec.dim_x)));
            }
            let (h, probs) = b.infer(store, &x).map_err(rt)?;
            let rec = b.reconstruct(store, &x).map_err(rt)?;
            header(&mut text, &[("h", h.cols()), ("q_k", probs.cols()), ("rec", rec.cols())]);
            for r in 0..x.rows() {
                csv_row(&mut text, &[h.row(r), probs.row(r), rec.row(r)]);
            }
        }
        Bundle::Ssgan(b) => {
            if x.cols() != b.spec.dim_x {
                return Err(CliError::Usage(format!("frames have width {}, model expects {}", x.cols(), b.spec.dim_x)));
            }
            let frames: Vec<Tensor> = (0..x.rows()).map(|r| x.slice_rows(r, r + 1)).collect();
            let h = b.extract_content(store, &frames).map_err(rt)?;
            let clip = b.motion_analogy(store, &h, &frames).map_err(rt)?;
            header(&mut text, &[("h", h.cols()), ("v", b.spec.dim_v), ("rec", b.spec.dim_x)]);
            for (v, f) in clip.v_path.iter().zip(&clip.frames) {
                csv_row(&mut text, &[h.row(0), v.row(0), f.row(0)]);
            }
        }
        Bundle::Custom(_) => return Err(CliError::Usage("infer supports the gmgan and ssgan instances".into())),
    }
    emit(args.out.as_deref(), &text)
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    let base = args.run.resolve()?;
    if args.seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    let report = compare_modes(&args.seeds, |mode, seed| {
        let mut config = base.clone();
        config.trainer.mode = mode;
        config.trainer.seed = seed;
        let run = || -> Result<RunScores, CliError> {
            let mut session = Session::new(config.clone())?;
            let data = session.load_data(&session.data_spec.clone())?;
            session
                .trainer
                .train(&data, config.trainer.steps, 0, None)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let m = session.metrics(&data)?;
            let acc = m.get("acc").copied().unwrap_or(f64::NAN);
            Ok(RunScores { acc, mse: m["mse"] })
        };
        run().map_err(|e| e.to_string())
    });
    fs::create_dir_all(&base.out).map_err(io(&base.out))?;
    let path = base.out.join("comparison.csv");
    fs::write(&path, report.to_csv()).map_err(io(&path))?;
    print!("{}", report.to_text());
    if args.gate && !report.local_not_worse() {
        return Err(CliError::Gate("local mode is worse than global on ACC or MSE".into()));
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<(), CliError> {
    let chains: Vec<(usize, u64)> = (1..=args.chains).map(|s| (3 + (s as usize - 1) % 3, s)).collect();
    let rows = oracle_suite(&chains).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut failed = 0;
    for r in &rows {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        failed += usize::from(!r.passed());
        println!(
            "{verdict} {}: joint JS {:.12} local {:.12} (projection {:.12}) gap {:.1e} optimum gap {:.1e} joint-local gap {:.6}",
            r.name,
            r.joint_js,
            r.local.total,
            r.projection.total,
            r.route_gap,
            r.optimum_gap,
            r.local.total - r.joint_js
        );
        let terms: Vec<String> = r.local.terms.iter().map(|t| format!("{t:.12}")).collect();
        println!("  per-factor terms: {}", terms.join(" "));
    }
    if failed > 0 {
        return Err(CliError::Gate(format!("{failed} oracle cases disagree")));
    }
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let instances: Vec<&str> = match args.instance.as_str() {
        "all" => vec!["gmgan", "ssgan"],
        "gmgan" => vec!["gmgan"],
        "ssgan" => vec!["ssgan"],
        other => return Err(CliError::Usage(format!("no gradient checks for {other:?}"))),
    };
    let opts = GradCheckOptions { tol: args.tol, ..GradCheckOptions::default() };
    let mut failed = 0;
    for instance in instances {
        for seed in 1..=args.seeds {
            let (bundle, store, data) =
                gradcheck_fixture(instance, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
            let checks =
                gradient_suite(&bundle, &store, &data, seed, opts).map_err(|e| CliError::Runtime(e.to_string()))?;
            for c in checks {
                let verdict = if c.report.passed { "PASS" } else { "FAIL" };
                failed += usize::from(!c.report.passed);
                println!(
                    "{verdict} {instance} seed {seed} {}: max rel error {:.2e} over {} entries",
                    c.name, c.report.max_rel_error, c.report.checked
                );
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Gate(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
