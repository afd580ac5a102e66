use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;

use super::*;
use crate::instances::{build_gmgan, GmganSpec};
use crate::numerics::{ParamStore, Tensor};
use crate::trainer::{DiscSpec, Trainer, TrainerConfig};

#[test]
fn mixture_is_deterministic_and_balanced() {
    let a = make_mixture(5, 6, 4000, 6.0, 17).unwrap();
    let b = make_mixture(5, 6, 4000, 6.0, 17).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.samples, make_mixture(5, 6, 4000, 6.0, 18).unwrap().samples);
    assert_eq!(a.samples.shape(), &[4000, 6]);
    assert!(a.samples.data().iter().all(|v| v.abs() < 1.0));
    let mut counts = [0usize; 5];
    a.labels.iter().for_each(|&l| counts[l] += 1);
    for c in counts {
        assert!((c as f64 - 800.0).abs() <= 3.0 * 4000f64.sqrt(), "{counts:?}");
    }
    let r = (a.means[1][0].powi(2) + a.means[1][1].powi(2)).sqrt();
    assert!((r - 6.0).abs() < 1e-12);
    let ds = a.dataset();
    assert_eq!(ds.len(), 4000);
    assert_eq!(ds.labels.as_ref().unwrap(), &a.labels);
}

#[test]
fn mixture_rejects_bad_parameters() {
    assert!(make_mixture(0, 2, 10, 1.0, 0).is_err());
    assert!(make_mixture(2, 2, 10, 0.0, 0).is_err());
    assert!(make_mixture(2, 2, 10, f64::NAN, 0).is_err());
}

#[test]
fn still_dot_repeats_its_frame() {
    let (frames, path) = render_clip(5, 8, (2, 3), (0, 0));
    assert!(frames.iter().all(|f| f == &frames[0]));
    assert!(path.iter().all(|&p| p == (2, 3)));
    assert_eq!(frames[0].iter().filter(|&&v| v == 1.0).count(), 9);
}

#[test]
fn moving_dot_translates_and_reflects() {
    let (frames, path) = render_clip(3, 8, (1, 1), (0, 1));
    let shifted: Vec<f64> = (0..64).map(|i| if i % 8 == 0 { -1.0 } else { frames[0][i - 1] }).collect();
    assert_eq!(frames[1], shifted);
    assert_eq!(path, vec![(1, 1), (1, 2), (1, 3)]);
    // Max top-left coordinate is 5 on an 8×8 frame; 4 + 2 reflects to 4.
    let (_, path) = render_clip(3, 8, (4, 0), (2, 0));
    assert_eq!(path, vec![(4, 0), (4, 0), (2, 0)]);
}

#[test]
fn bouncing_dot_dataset() {
    let v = make_bouncing_dot(6, 10, 20, 3).unwrap();
    assert_eq!(v, make_bouncing_dot(6, 10, 20, 3).unwrap());
    assert_eq!(v.len(), 20);
    assert_eq!(v.t(), 6);
    assert_eq!(v.frames[0].shape(), &[20, 100]);
    assert!(v.velocities.iter().all(|&(a, b)| (-2..=2).contains(&a) && (-2..=2).contains(&b)));
    assert_eq!(v.dataset().columns().keys().cloned().collect::<Vec<_>>(), vec!["x1", "x2", "x3", "x4", "x5", "x6"]);
    assert!(make_bouncing_dot(4, 4, 1, 0).is_err());
    assert!(make_bouncing_dot(4, 8, 0, 0).is_err());
}

proptest! {
    #[test]
    fn dot_stays_inside_the_frame(side in 5usize..12, r in 0i64..3, c in 0i64..3, vr in -2i64..=2, vc in -2i64..=2) {
        let (frames, path) = render_clip(20, side, (r, c), (vr, vc));
        let max = side as i64 - 3;
        for (f, &(pr, pc)) in frames.iter().zip(&path) {
            prop_assert!((0..=max).contains(&pr) && (0..=max).contains(&pc));
            prop_assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 9);
        }
    }
}

#[test]
fn dataset_validation_and_sampling() {
    let x = Tensor::matrix(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let y = Tensor::matrix(3, 1, vec![0.0; 3]).unwrap();
    assert!(Dataset::new(BTreeMap::from([("x".into(), x.clone()), ("y".into(), y)]), None).is_err());
    assert!(Dataset::new(BTreeMap::from([("x".into(), x.clone())]), Some(vec![0, 1])).is_err());
    let ds = Dataset::new(BTreeMap::from([("x".into(), x)]), Some(vec![0, 1, 0, 1])).unwrap();
    let a = ds.minibatch(16, 5);
    assert_eq!(a, ds.minibatch(16, 5));
    assert_eq!(a["x"].rows(), 16);
    let head = ds.head(2);
    assert_eq!(head.len(), 2);
    assert_eq!(head.labels, Some(vec![0, 1]));
}

#[test]
fn idx_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("images.idx");
    write_idx_images(&path, 2, 2, 2, &[0, 255, 51, 204, 1, 2, 3, 4]).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(&bytes[..16], &[0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2]);
    match read_idx(&path).unwrap() {
        IdxData::Images(t) => {
            assert_eq!(t.shape(), &[2, 2, 2]);
            assert_eq!(t.data()[0], -1.0);
            assert_eq!(t.data()[1], 1.0);
            assert!((t.data()[2] - (51.0 / 127.5 - 1.0)).abs() < 1e-15);
        }
        other => panic!("{other:?}"),
    }
    let labels = dir.path().join("labels.idx");
    write_idx_labels(&labels, &[3, 1, 4]).unwrap();
    assert_eq!(read_idx(&labels).unwrap(), IdxData::Labels(vec![3, 1, 4]));
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.idx");
    fs::write(&bad, [0, 0, 8, 4, 0, 0, 0, 1]).unwrap();
    assert_eq!(read_idx(&bad).unwrap_err(), DataError::BadMagic(0x0804));
    let short = dir.path().join("short.idx");
    fs::write(&short, [0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 7, 7, 7]).unwrap();
    assert!(matches!(read_idx(&short), Err(DataError::TruncatedFile(_))));
    let header = dir.path().join("header.idx");
    fs::write(&header, [0, 0, 8, 3, 0, 0]).unwrap();
    assert!(matches!(read_idx(&header), Err(DataError::TruncatedFile(_))));
    assert!(matches!(read_idx(&dir.path().join("missing")), Err(DataError::Io(_))));
}

#[test]
fn pgm_of_a_white_frame() {
    let frame = vec![1.0; 6];
    let bytes = pgm_grid_bytes(&[&frame], 2, 3, 1, 1).unwrap();
    let header = b"P5\n3 2\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert!(bytes[header.len()..].iter().all(|&b| b == 255));
    assert_eq!(bytes.len(), header.len() + 6);
}

#[test]
fn pgm_grid_golden_bytes() {
    let a = [-1.0, 1.0];
    let b = [0.0, 0.5];
    let bytes = pgm_grid_bytes(&[&a, &b], 1, 2, 2, 2).unwrap();
    let mut expected = b"P5\n5 3\n255\n".to_vec();
    expected.extend([0, 255, 0, 128, 191]);
    expected.extend([0; 5]);
    expected.extend([0; 5]);
    assert_eq!(bytes, expected);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.pgm");
    write_pgm_grid(&[&a, &b], 1, 2, 2, 2, &path).unwrap();
    assert_eq!(fs::read(path).unwrap(), expected);
}

#[test]
fn pgm_preconditions() {
    let a = [0.0; 4];
    assert!(pgm_grid_bytes(&[&a, &a, &a], 2, 2, 1, 2).is_err());
    assert!(pgm_grid_bytes(&[&a[..3]], 2, 2, 1, 1).is_err());
    assert!(pgm_grid_bytes(&[], 2, 2, 0, 1).is_err());
}

fn trainer(seed: u64) -> (Trainer, Dataset) {
    let spec = GmganSpec { k: 2, dim_h: 2, dim_x: 3, gen_hidden: vec![5], enc_hidden: vec![5], ..GmganSpec::default() };
    let mut store = ParamStore::new();
    let bundle = build_gmgan(&spec, &mut store, seed).unwrap();
    let config = TrainerConfig {
        batch: 8,
        seed,
        disc: DiscSpec { branch: None, hidden: vec![5], slope: 0.2 },
        ..TrainerConfig::default()
    };
    let data = make_mixture(2, 3, 50, 4.0, seed).unwrap().dataset();
    (Trainer::new(bundle.model, store, config).unwrap(), data)
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let (mut t, data) = trainer(2);
    t.train(&data, 3, 0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt =
        Checkpoint { step: t.step, seed: 2, store: t.store.clone(), meta: serde_json::json!({"instance": "gmgan"}) };
    let first = dir.path().join("ckpt-3");
    save_checkpoint(&ckpt, &first).unwrap();
    let loaded = load_checkpoint(&first).unwrap();
    assert_eq!(loaded, ckpt);
    let second = dir.path().join("again");
    save_checkpoint(&loaded, &second).unwrap();
    for file in ["manifest.json", "params.bin"] {
        assert_eq!(fs::read(first.join(file)).unwrap(), fs::read(second.join(file)).unwrap());
    }
}

#[test]
fn checkpoint_corruption_is_detected() {
    let (t, _) = trainer(1);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint { step: 0, seed: 1, store: t.store.clone(), meta: serde_json::Value::Null };
    save_checkpoint(&ckpt, dir.path()).unwrap();
    let sidecar = dir.path().join("params.bin");
    let bytes = fs::read(&sidecar).unwrap();
    fs::write(&sidecar, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(DataError::CorruptManifest(_))));

    save_checkpoint(&ckpt, dir.path()).unwrap();
    let manifest = dir.path().join("manifest.json");
    let text = fs::read_to_string(&manifest).unwrap().replace(CHECKPOINT_VERSION, "ggan-ckpt-0");
    fs::write(&manifest, text).unwrap();
    assert_eq!(
        load_checkpoint(dir.path()).unwrap_err(),
        DataError::VersionMismatch { found: "ggan-ckpt-0".into(), expected: CHECKPOINT_VERSION.into() }
    );
    fs::write(&manifest, "{not json").unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(DataError::CorruptManifest(_))));
}

#[test]
fn resuming_from_a_checkpoint_matches_an_uninterrupted_run() {
    let (mut straight, data) = trainer(9);
    let full = straight.train(&data, 10, 0, None).unwrap();

    let (mut first, _) = trainer(9);
    let head = first.train(&data, 4, 0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(
        &Checkpoint { step: first.step, seed: 9, store: first.store, meta: serde_json::Value::Null },
        dir.path(),
    )
    .unwrap();

    let loaded = load_checkpoint(dir.path()).unwrap();
    let (mut resumed, _) = trainer(9);
    resumed.restore(loaded.store, loaded.step).unwrap();
    let tail = resumed.train(&data, 6, 0, None).unwrap();
    assert_eq!([head, tail].concat(), full);
    assert_eq!(resumed.store, straight.store);

    let (mut other, _) = trainer(9);
    assert!(other.restore(ParamStore::new(), 0).is_err());
}
