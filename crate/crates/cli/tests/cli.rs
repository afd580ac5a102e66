use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ggan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggan")).args(args).env_remove("GGAN_OUT").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--instance",
    "gmgan",
    "--dataset",
    "mixture:K=3,dim=4,n=300,sep=6",
    "--dim",
    "h=2",
    "--dim",
    "hidden=8",
    "--disc-hidden",
    "8",
    "--batch",
    "20",
];

fn train_small(out: &Path, steps: &str, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec![
        "train",
        "--out",
        out,
        "--steps",
        steps,
        "--eval-every",
        "10",
        "--sample-every",
        "20",
        "--ckpt-every",
        "20",
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ggan(&args)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&ggan(&["--help"])), 0);
    assert_eq!(code(&ggan(&["--version"])), 0);
    assert_eq!(code(&ggan(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&ggan(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&ggan(&[])), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&ggan(&["train", "--out", out, "--instance", "vae", "--steps", "1"])), 1);
    assert_eq!(code(&ggan(&["train", "--out", out, "--dataset", "mixture:K=3,colour=red", "--steps", "1"])), 1);
    assert_eq!(code(&ggan(&["train", "--out", out, "--batch", "0", "--steps", "1"])), 1);
    assert_eq!(code(&ggan(&["gradcheck", "--instance", "vae"])), 1);
}

#[test]
fn train_writes_artifacts_on_cadence() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_small(dir.path(), "30", &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["ckpt-20", "ckpt-30", "samples-20.pgm", "samples-30.pgm", "metrics.csv"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    assert!(!dir.path().join("ckpt-10").exists());
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 31);
    assert!(lines[0].contains("acc") && lines[0].contains("mse"), "{}", lines[0]);
    let pgm = fs::read(dir.path().join("samples-30.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n"));
}

#[test]
fn zero_steps_writes_only_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train_small(dir.path(), "0", &[])), 0);
    let names: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["ckpt-0".to_string()]);
}

#[test]
fn resume_matches_an_unbroken_run() {
    let whole = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    assert_eq!(code(&train_small(whole.path(), "40", &[])), 0);
    assert_eq!(code(&train_small(split.path(), "20", &[])), 0);
    let ckpt = split.path().join("ckpt-20");
    assert_eq!(code(&train_small(split.path(), "20", &["--resume", ckpt.to_str().unwrap()])), 0);
    let a = fs::read(whole.path().join("ckpt-40/params.bin")).unwrap();
    let b = fs::read(split.path().join("ckpt-40/params.bin")).unwrap();
    assert!(a == b, "resumed parameters differ");
}

#[test]
fn out_env_overrides_flag() {
    let flag = tempfile::tempdir().unwrap();
    let env = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--out", flag.path().to_str().unwrap(), "--steps", "0"];
    args.extend_from_slice(SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_ggan")).args(&args).env("GGAN_OUT", env.path()).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(env.path().join("ckpt-0").exists());
    assert!(!flag.path().join("ckpt-0").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let body = r#"{"instance":"gmgan","dataset":"mixture:K=3,dim=4,n=300","dims":{"h":2,"hidden":8},"trainer":{"batch":20,"steps":5}}"#;
    fs::write(&cfg, body).unwrap();
    let out_dir = dir.path().join("out");
    let out = ggan(&["train", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--steps", "0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("ckpt-0").exists());

    fs::write(&cfg, r#"{"colour":"red"}"#).unwrap();
    assert_eq!(code(&ggan(&["train", "--config", cfg.to_str().unwrap(), "--steps", "0"])), 1);
}

#[test]
fn sample_eval_and_infer_read_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&train_small(dir.path(), "20", &[])), 0);
    let ckpt = dir.path().join("ckpt-20");
    let ckpt = ckpt.to_str().unwrap();

    let grid = dir.path().join("grid.pgm");
    assert_eq!(code(&ggan(&["sample", "--ckpt", ckpt, "--rows", "2", "--out", grid.to_str().unwrap()])), 0);
    // 2 rows by K=3 columns; width 4 renders as 2x2 frames.
    let bytes = fs::read(&grid).unwrap();
    assert!(bytes.starts_with(b"P5\n8 5\n255\n"));
    assert_eq!(code(&ggan(&["sample", "--ckpt", ckpt, "--rows", "0"])), 2);

    let eval = ggan(&["eval", "--ckpt", ckpt]);
    assert_eq!(code(&eval), 0);
    let text = stdout(&eval);
    assert!(text.starts_with("key,value\nstep,20\n"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("acc,")));
    assert!(text.lines().any(|l| l.starts_with("mse,")));

    let input = dir.path().join("x.csv");
    fs::write(&input, "a,b,c,d\n0,0,0,0\n1,2,3,4\n").unwrap();
    let inferred = ggan(&["infer", "--ckpt", ckpt, "--input", input.to_str().unwrap()]);
    assert_eq!(code(&inferred), 0, "{}", String::from_utf8_lossy(&inferred.stderr));
    let lines: Vec<String> = stdout(&inferred).lines().map(String::from).collect();
    assert_eq!(lines[0], "h0,h1,q_k0,q_k1,q_k2,rec0,rec1,rec2,rec3");
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split(',').count(), 9);

    fs::write(&input, "1,2,3\n").unwrap();
    assert_eq!(code(&ggan(&["infer", "--ckpt", ckpt, "--input", input.to_str().unwrap()])), 1);
    assert_eq!(code(&ggan(&["eval", "--ckpt", dir.path().join("missing").to_str().unwrap()])), 2);
}

#[test]
fn ssgan_trains_and_rolls_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = ggan(&[
        "train",
        "--out",
        out,
        "--instance",
        "ssgan",
        "--dataset",
        "video:T=3,side=5,n=40",
        "--dim",
        "hidden=8",
        "--steps",
        "4",
        "--batch",
        "8",
        "--disc-hidden",
        "8",
        "--disc-branch",
        "4",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let ckpt = dir.path().join("ckpt-4");
    let grid = dir.path().join("roll.pgm");
    let s = ggan(&[
        "sample",
        "--ckpt",
        ckpt.to_str().unwrap(),
        "--rows",
        "2",
        "--rollout",
        "10",
        "--out",
        grid.to_str().unwrap(),
    ]);
    assert_eq!(code(&s), 0, "{}", String::from_utf8_lossy(&s.stderr));
    // 2 clips of 10 frames, 5x5 pixels each, 1-pixel separators.
    assert!(fs::read(&grid).unwrap().starts_with(b"P5\n59 11\n255\n"));
    let eval = ggan(&["eval", "--ckpt", ckpt.to_str().unwrap()]);
    assert_eq!(code(&eval), 0);
    assert!(stdout(&eval).lines().any(|l| l.starts_with("mse,")));
}

#[test]
fn oracle_passes() {
    let out = ggan(&["oracle", "--chains", "5"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6, "{text}");
}

#[test]
fn gradcheck_passes_for_one_seed() {
    let out = ggan(&["gradcheck", "--seeds", "1"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("gmgan seed 1") && text.contains("ssgan seed 1"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn compare_reports_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["compare", "--out", dir.path().to_str().unwrap(), "--steps", "10", "--seeds", "1,2"];
    args.extend_from_slice(SMALL);
    let out = ggan(&args);
    assert!(matches!(code(&out), 0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(csv.lines().count() >= 3, "{csv}");
}

#[test]
fn trains_on_idx_images_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images.idx");
    let labels = dir.path().join("labels.idx");
    let pixels: Vec<u8> =
        (0..40u32).flat_map(|i| (0..9u32).map(move |p| if (p + i) % 2 == 0 { 255 } else { 0 })).collect();
    ggan::data::write_idx_images(&images, 40, 3, 3, &pixels).unwrap();
    ggan::data::write_idx_labels(&labels, &(0..40).map(|i| (i % 2) as u8).collect::<Vec<_>>()).unwrap();
    let dataset = format!("idx:images={},labels={}", images.display(), labels.display());
    let out = dir.path().join("run");
    let run = ggan(&[
        "train",
        "--out",
        out.to_str().unwrap(),
        "--dataset",
        &dataset,
        "--k",
        "2",
        "--dim",
        "hidden=8",
        "--disc-hidden",
        "8",
        "--batch",
        "10",
        "--steps",
        "5",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let eval = ggan(&["eval", "--ckpt", out.join("ckpt-5").to_str().unwrap()]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    assert!(stdout(&eval).lines().any(|l| l.starts_with("acc,")));
}
