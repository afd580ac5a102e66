use proptest::prelude::*;

use super::*;
use crate::data::make_mixture;

fn col(v: &[f64]) -> Tensor {
    Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
}

#[test]
fn single_cluster_takes_the_label_nearest_its_centroid() {
    // Centroid 2.5 is equidistant from samples 2 and 3; the lower index wins.
    let r = cluster_accuracy(&col(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), &[0; 6], &[0, 0, 1, 1, 1, 2]).unwrap();
    assert_eq!(r.cluster_labels, vec![Some(1)]);
    assert_eq!(r.cluster_sizes, vec![6]);
    assert_eq!(r.accuracy, 0.5);
}

#[test]
fn two_cluster_hand_example() {
    let r = cluster_accuracy(&col(&[0.0, 1.0, 10.0, 12.0]), &[0, 0, 1, 1], &[3, 5, 5, 5]).unwrap();
    assert_eq!(r.cluster_labels, vec![Some(3), Some(5)]);
    assert_eq!(r.accuracy, 0.75);
}

#[test]
fn empty_clusters_have_no_label() {
    let r = cluster_accuracy(&col(&[0.0, 1.0]), &[2, 2], &[1, 1]).unwrap();
    assert_eq!(r.cluster_labels, vec![None, None, Some(1)]);
    assert_eq!(r.cluster_sizes, vec![0, 0, 2]);
    assert_eq!(r.accuracy, 1.0);
}

#[test]
fn accuracy_input_errors() {
    assert_eq!(cluster_accuracy(&Tensor::zeros(&[0, 1]), &[], &[]).unwrap_err(), EvalError::EmptyInput);
    assert!(matches!(cluster_accuracy(&col(&[0.0, 1.0]), &[0, 0], &[0]), Err(EvalError::ShapeMismatch(_))));
    assert!(matches!(cluster_accuracy(&col(&[0.0]), &[0, 0], &[0, 0]), Err(EvalError::ShapeMismatch(_))));
}

proptest! {
    #[test]
    fn accuracy_ignores_cluster_ids_and_label_names(
        points in proptest::collection::vec((-5.0f64..5.0, 0usize..3, 0usize..4), 1..40),
        shift in 1usize..4,
    ) {
        let h = col(&points.iter().map(|p| p.0).collect::<Vec<_>>());
        let a: Vec<usize> = points.iter().map(|p| p.1).collect();
        let l: Vec<usize> = points.iter().map(|p| p.2).collect();
        let base = cluster_accuracy(&h, &a, &l).unwrap().accuracy;
        let a2: Vec<usize> = a.iter().map(|&c| (c + shift) % 3).collect();
        prop_assert_eq!(cluster_accuracy(&h, &a2, &l).unwrap().accuracy, base);
        let l2: Vec<usize> = l.iter().map(|&x| 10 + (x + shift) % 4).collect();
        prop_assert_eq!(cluster_accuracy(&h, &a, &l2).unwrap().accuracy, base);
        prop_assert!((0.0..=1.0).contains(&base));
    }
}

#[test]
fn mse_examples() {
    let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
    assert_eq!(reconstruction_mse(&x, &Tensor::zeros(&[1, 2])).unwrap(), 2.5);
    assert_eq!(reconstruction_mse(&x, &x).unwrap(), 0.0);
    assert!(matches!(reconstruction_mse(&x, &Tensor::zeros(&[2, 1])), Err(EvalError::ShapeMismatch(_))));
    assert_eq!(
        reconstruction_mse(&Tensor::zeros(&[0, 2]), &Tensor::zeros(&[0, 2])).unwrap_err(),
        EvalError::EmptyInput
    );
}

#[test]
fn comparison_summaries() {
    let one =
        compare_modes(&[7], |mode, _| Ok(RunScores { acc: if mode == Mode::Local { 0.9 } else { 0.8 }, mse: 0.1 }));
    assert_eq!(one.rows.len(), 2);
    assert_eq!(one.local.acc_mean, Some(0.9));
    assert_eq!(one.local.acc_std, None);
    assert!(one.local_not_worse());
    assert!(one.to_text().contains("ACC=0.9000 MSE=0.1000"));

    let mut calls = Vec::new();
    let report = compare_modes(&[1, 2, 3], |mode, seed| {
        calls.push((mode, seed));
        if seed == 2 && mode == Mode::Global {
            Err("diverged".into())
        } else {
            Ok(RunScores { acc: seed as f64 / 10.0, mse: 1.0 })
        }
    });
    assert_eq!(calls.len(), 6);
    assert_eq!(report.local.runs, 3);
    assert_eq!(report.global.runs, 2);
    assert!((report.local.acc_mean.unwrap() - 0.2).abs() < 1e-15);
    assert!((report.local.acc_std.unwrap() - 0.1).abs() < 1e-15);
    assert!((report.global.acc_mean.unwrap() - 0.2).abs() < 1e-15);
    let csv = report.to_csv();
    assert!(csv.starts_with("seed,mode,acc,mse,error\n1,local,0.1,1,\n"));
    assert!(csv.contains("2,global,,,diverged\n"));
    assert!(report.to_text().contains("seed 2 global failed: diverged"));

    let failed = compare_modes(&[1], |_, _| Err("no".into()));
    assert!(!failed.local_not_worse());
    assert_eq!(failed.local.acc_mean, None);
}

#[test]
fn gmgan_runs_are_scored() {
    let spec = GmganSpec { k: 2, dim_h: 2, dim_x: 3, gen_hidden: vec![4], enc_hidden: vec![4], ..GmganSpec::default() };
    let data = make_mixture(2, 3, 40, 5.0, 1).unwrap().dataset();
    let config = TrainerConfig { steps: 5, batch: 8, seed: 1, ..TrainerConfig::default() };
    let scores = run_gmgan(&spec, &config, &data).unwrap();
    assert!((0.0..=1.0).contains(&scores.acc));
    assert!(scores.mse.is_finite() && scores.mse >= 0.0);
    assert_eq!(scores, run_gmgan(&spec, &config, &data).unwrap());
}

#[test]
fn oracle_suite_agrees_on_every_chain() {
    let rows = oracle_suite(&[(3, 1), (4, 2), (5, 3)]).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(OracleRow::passed));
    assert!((rows[0].local.total - 0.07344782290134222).abs() < 1e-14);
}

#[test]
fn gradient_suite_covers_every_network() {
    for instance in ["gmgan", "ssgan"] {
        let (bundle, store, data) = gradcheck_fixture(instance, 3).unwrap();
        let checks = gradient_suite(&bundle, &store, &data, 3, Default::default()).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.report.passed).collect();
        assert!(failed.is_empty(), "{instance}: {failed:?}");
        assert!(checks.iter().any(|c| c.name.starts_with("global/d0")));
        let expected: &[&str] = if instance == "gmgan" {
            &["G", "E", "mu", "d0.joint", "d1.joint"]
        } else {
            &["G", "O", "O.skip", "E1.frame", "E1.head", "E2"]
        };
        for name in expected {
            assert!(
                checks.iter().any(|c| c.name == *name),
                "{instance} lacks {name}: {:?}",
                checks.iter().map(|c| &c.name).collect::<Vec<_>>()
            );
        }
    }
    assert!(gradcheck_fixture("hmm", 0).is_err());
}
