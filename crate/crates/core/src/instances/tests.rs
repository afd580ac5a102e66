use std::collections::BTreeMap;

use super::ssgan::{v_name, x_name};
use super::*;
use crate::data::{make_bouncing_dot, make_mixture};
use crate::eval::cluster_accuracy;
use crate::graph::GraphDescription;
use crate::numerics::{grad_check, GradCheckOptions, Owner, ParamStore, Tape, Tensor};
use crate::stochastics::{NoiseBundle, SampleCtx};
use crate::trainer::{local_objective, Criterion, DiscSpec, Mode, Trainer, TrainerConfig};

fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

fn small_gmgan() -> GmganSpec {
    GmganSpec { k: 3, dim_h: 2, dim_x: 5, gen_hidden: vec![6], enc_hidden: vec![6], ..GmganSpec::default() }
}

fn small_ssgan(t: usize) -> SsganSpec {
    SsganSpec {
        t,
        dim_h: 3,
        dim_v: 2,
        dim_x: 25,
        dim_eps: 2,
        gen_hidden: vec![6],
        trans_hidden: vec![4],
        enc_hidden: vec![6],
        frame_features: 4,
        shared_noise: true,
    }
}

#[test]
fn posterior_over_components() {
    let p = gmgan_posterior_k(&t(1, 1, &[0.0]), &t(2, 1, &[0.0, 2.0])).unwrap();
    assert!((p.data()[0] - 0.8807970779778823).abs() < 1e-12);
    assert!((p.data()[1] - 0.11920292202211755).abs() < 1e-12);

    let equal = gmgan_posterior_k(&t(1, 2, &[0.3, -0.4]), &t(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0])).unwrap();
    assert!(equal.data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));

    let mid = gmgan_posterior_k(&t(1, 2, &[0.5, 0.5]), &t(2, 2, &[0.0, 0.0, 1.0, 1.0])).unwrap();
    assert!((mid.data()[0] - 0.5).abs() < 1e-15);

    assert!(gmgan_posterior_k(&t(1, 3, &[0.0; 3]), &t(2, 2, &[0.0; 4])).is_err());
}

#[test]
fn posterior_is_permutation_equivariant() {
    let h = t(2, 2, &[0.1, -0.3, 1.5, 0.2]);
    let means = t(3, 2, &[0.0, 0.0, 1.0, 0.5, -1.0, 2.0]);
    let perm = [2, 0, 1];
    let a = gmgan_posterior_k(&h, &means).unwrap();
    let b = gmgan_posterior_k(&h, &means.select_rows(&perm)).unwrap();
    for r in 0..2 {
        for (j, &pj) in perm.iter().enumerate() {
            assert!((b.row(r)[j] - a.row(r)[pj]).abs() < 1e-15);
        }
    }
}

#[test]
fn gmgan_structure() {
    let mut store = ParamStore::new();
    let b = build_gmgan(&small_gmgan(), &mut store, 1).unwrap();
    let f = &b.model.factors.factors;
    assert_eq!(f.len(), 2);
    assert_eq!(f[0].variables, vec!["h", "k"]);
    assert_eq!(f[1].variables, vec!["x", "h"]);
    assert_eq!(b.model.recognition.elimination_order, vec!["h", "k"]);
    assert_eq!(b.model.recognition.conditioning_of("h").unwrap(), ["x"]);
    assert_eq!(b.model.recognition.conditioning_of("k").unwrap(), ["h"]);
    assert_eq!(store.value(b.means).shape(), &[3, 2]);
    assert_eq!(store.entry(b.means).owner, Owner::Prior);
    assert!(b.model.check().is_ok());

    let x = t(2, 5, &[0.1; 10]);
    assert_eq!(b.reconstruct(&store, &x).unwrap().shape(), &[2, 5]);
    assert_eq!(b.assignments(&store, &x).unwrap().len(), 2);
    let grid = b.sample_by_component(&store, 4, 0).unwrap();
    assert_eq!(grid.shape(), &[12, 5]);
    assert!(grid.data().iter().all(|v| v.abs() <= 1.0));
}

#[test]
fn gmgan_rejects_bad_dimensions() {
    for spec in [GmganSpec { k: 0, ..small_gmgan() }, GmganSpec { dim_h: 0, ..small_gmgan() }] {
        assert!(matches!(build_gmgan(&spec, &mut ParamStore::new(), 0), Err(InstanceError::BadDimension(_))));
    }
}

#[test]
fn gmgan_separates_two_well_spaced_clusters() {
    let spec =
        GmganSpec { k: 2, dim_h: 2, dim_x: 2, gen_hidden: vec![16], enc_hidden: vec![16], ..GmganSpec::default() };
    let data = make_mixture(2, 2, 400, 8.0, 4).unwrap();
    let mut store = ParamStore::new();
    let bundle = build_gmgan(&spec, &mut store, 4).unwrap();
    let config = TrainerConfig {
        batch: 32,
        seed: 4,
        adam: crate::numerics::AdamConfig { lr: 1e-3, ..Default::default() },
        disc: DiscSpec { branch: None, hidden: vec![16], slope: 0.2 },
        ..TrainerConfig::default()
    };
    let mut trainer = Trainer::new(bundle.model.clone(), store, config).unwrap();
    let trace = trainer.train(&data.dataset(), 1500, 0, None).unwrap();
    assert!(trace.iter().all(|r| r.objective.is_finite()));
    let (h, _) = bundle.infer(&trainer.store, &data.samples).unwrap();
    let assignments = bundle.assignments(&trainer.store, &data.samples).unwrap();
    let report = cluster_accuracy(&h, &assignments, &data.labels).unwrap();
    assert!(report.accuracy > 0.9, "{report:?}");
}

#[test]
fn ssgan_factors_and_recognition() {
    let mut store = ParamStore::new();
    let b = build_ssgan(&small_ssgan(2), &mut store, 0).unwrap();
    assert_eq!(b.model.factors.instance_count(), 3);
    let b = build_ssgan(&small_ssgan(5), &mut ParamStore::new(), 0).unwrap();
    let f = &b.model.factors.factors;
    assert_eq!(f.len(), 2);
    assert_eq!(b.model.factors.instance_count(), 9);
    let transitions = f.iter().find(|f| f.tie_group == "v|v").unwrap();
    assert_eq!(transitions.instance_count(), 4);
    let emissions = f.iter().find(|f| f.tie_group == "x|h|v").unwrap();
    assert_eq!(emissions.instance_count(), 5);
    assert_eq!(emissions.instances[2], vec!["x3", "h", "v3"]);

    let rec = &b.model.recognition;
    let frames: Vec<String> = (1..=5).map(x_name).collect();
    assert_eq!(rec.conditioning_of("h").unwrap(), frames.as_slice());
    for i in 1..=5 {
        assert_eq!(rec.conditioning_of(&v_name(i)).unwrap(), [x_name(i)]);
    }
    assert!(build_ssgan(&small_ssgan(1), &mut ParamStore::new(), 0).is_err());
}

#[test]
fn ssgan_parameter_count_does_not_grow_with_length() {
    let mut s2 = ParamStore::new();
    let b2 = build_ssgan(&small_ssgan(2), &mut s2, 0).unwrap();
    let mut s8 = ParamStore::new();
    let b8 = build_ssgan(&small_ssgan(8), &mut s8, 0).unwrap();
    assert_eq!(b2.parameter_count(&s2), b8.parameter_count(&s8));
    assert_eq!(s2.len(), s8.len());
}

#[test]
fn tied_transitions_share_one_network() {
    let mut store = ParamStore::new();
    let b = build_ssgan(&small_ssgan(4), &mut store, 2).unwrap();
    let before = sample(&b, &store, 0);
    let w = b.transition.params()[0];
    store.value_mut(w).data_mut()[0] += 0.5;
    let after = sample(&b, &store, 0);
    for i in 2..=4 {
        assert_ne!(before[&v_name(i)], after[&v_name(i)], "v{i}");
    }
    assert_eq!(before["v1"], after["v1"]);
}

fn sample(b: &SsganBundle, store: &ParamStore, seed: u64) -> BTreeMap<String, Tensor> {
    let noise = NoiseBundle::generate(&b.model.generative_noise().unwrap(), 3, seed).unwrap();
    let mut tape = Tape::new();
    let table = b.model.sample_p(&mut tape, store, &noise, &SampleCtx::evaluation()).unwrap();
    let mut out = table.values(&tape);
    for key in noise.keys() {
        out.insert(format!("noise:{key}"), noise.get(key).unwrap().clone());
    }
    out
}

#[test]
fn rollout_over_the_trained_length_matches_ancestral_sampling() {
    let mut store = ParamStore::new();
    let b = build_ssgan(&small_ssgan(4), &mut store, 5).unwrap();
    let s = sample(&b, &store, 9);
    let roll = b.rollout(&store, &s["h"], &s["v1"], 4, &[s["noise:eps"].clone()]).unwrap();
    for i in 1..=4 {
        assert!(roll.frames[i - 1].max_abs_diff(&s[&x_name(i)]) < 1e-12);
        assert!(roll.v_path[i - 1].max_abs_diff(&s[&v_name(i)]) < 1e-12);
    }
    let long = b.rollout(&store, &s["h"], &s["v1"], 16, &[s["noise:eps"].clone()]).unwrap();
    assert_eq!(long.frames.len(), 16);
    assert!(b.rollout(&store, &s["h"], &s["v1"], 0, &[s["noise:eps"].clone()]).is_err());
}

#[test]
fn identity_transition_gives_constant_frames() {
    let mut store = ParamStore::new();
    let spec = small_ssgan(3);
    let b = build_ssgan(&spec, &mut store, 1).unwrap();
    for id in b.transition.params() {
        let shape = store.value(id).shape().to_vec();
        *store.value_mut(id) = Tensor::zeros(&shape);
    }
    let skip = b.skip.params();
    let mut eye = vec![0.0; spec.dim_v * spec.dim_v];
    (0..spec.dim_v).for_each(|i| eye[i * spec.dim_v + i] = 1.0);
    *store.value_mut(skip[0]) = t(spec.dim_v, spec.dim_v, &eye);
    let bias_shape = store.value(skip[1]).shape().to_vec();
    *store.value_mut(skip[1]) = Tensor::zeros(&bias_shape);

    let h = t(2, 3, &[0.1, 0.2, -0.3, 1.0, 0.0, -1.0]);
    let v1 = t(2, 2, &[0.4, -0.8, 1.2, 0.3]);
    let eps: Vec<Tensor> = (0..9).map(|i| Tensor::full(&[2, 2], i as f64)).collect();
    let roll = b.rollout(&store, &h, &v1, 10, &eps).unwrap();
    for f in &roll.frames[1..] {
        assert_eq!(f, &roll.frames[0]);
    }
}

#[test]
fn motion_analogy_keeps_the_driving_motion() {
    let mut store = ParamStore::new();
    let b = build_ssgan(&small_ssgan(4), &mut store, 3).unwrap();
    let clip = make_bouncing_dot(4, 5, 2, 1).unwrap();
    let a = b.motion_analogy(&store, &t(1, 3, &[1.0, 0.0, 0.0]), &clip.frames).unwrap();
    let c = b.motion_analogy(&store, &t(1, 3, &[0.0, -1.0, 2.0]), &clip.frames).unwrap();
    assert_eq!(a.v_path, c.v_path);
    assert_eq!(a.v_path, b.extract_motion(&store, &clip.frames).unwrap());
    assert_ne!(a.frames, c.frames);
    let one = b.motion_analogy(&store, &t(1, 3, &[0.0; 3]), &clip.frames[..1]).unwrap();
    assert_eq!(one.frames.len(), 1);
    assert!(b.motion_analogy(&store, &t(1, 3, &[0.0; 3]), &[]).is_err());
    assert!(b.motion_analogy(&store, &t(3, 3, &[0.0; 9]), &clip.frames).is_err());

    let content = b.extract_content(&store, &clip.frames).unwrap();
    assert_eq!(content.shape(), &[2, 3]);
    let longer: Vec<Tensor> = clip.frames.iter().chain(&clip.frames).cloned().collect();
    assert!(content.max_abs_diff(&b.extract_content(&store, &longer).unwrap()) < 1e-12);
}

#[test]
fn ssgan_local_objective_passes_finite_differences() {
    let mut store = ParamStore::new();
    let b = build_ssgan(&small_ssgan(3), &mut store, 7).unwrap();
    let config = TrainerConfig {
        batch: 4,
        seed: 7,
        disc: DiscSpec { branch: Some(3), hidden: vec![5], slope: 0.2 },
        ..Default::default()
    };
    let trainer = Trainer::new(b.model.clone(), store, config).unwrap();
    let data = make_bouncing_dot(3, 5, 10, 2).unwrap().dataset();
    let mb = trainer.draw_minibatch(&data, 1, 0).unwrap();
    let mut params = b.transition.params();
    params.extend(b.content.head.params());
    params.extend(b.motion.params());
    let report = grad_check(&trainer.store, &params, GradCheckOptions::default(), |tape, store| {
        let ctx = trainer.ctx();
        let p = trainer.model.sample_p(tape, store, &mb.p_noise, &ctx)?;
        let q = trainer.model.sample_q(tape, store, &mb.observed, &mb.q_noise, &ctx)?;
        local_objective(tape, store, &trainer.discs, &p, &q, Criterion::Divergence).map(|o| o.value)
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn descriptions_build_every_instance() {
    let gm =
        GraphDescription::from_json(r#"{"instance": "gmgan", "k": 4, "dims": {"h": 3, "x": 6, "hidden": 8}}"#).unwrap();
    let mut store = ParamStore::new();
    match build_from_description(&gm, &mut store, 0).unwrap() {
        Bundle::Gmgan(b) => {
            assert_eq!(b.spec.k, 4);
            assert_eq!(store.value(b.means).shape(), &[4, 3]);
        }
        other => panic!("expected a GMGAN, got {}", other.name()),
    }

    let ss = GraphDescription::from_json(
        r#"{"instance": "ssgan", "t": 3, "dims": {"h": 2, "v": 2, "x": 4, "eps": 1, "hidden": 5}}"#,
    )
    .unwrap();
    let bundle = build_from_description(&ss, &mut ParamStore::new(), 0).unwrap();
    assert_eq!(bundle.name(), "ssgan");
    assert_eq!(bundle.model().factors.instance_count(), 5);

    let custom = GraphDescription::from_json(
        r#"{
            "variables": [
                {"name": "c", "kind": "latent", "domain": {"type": "categorical", "k": 3}},
                {"name": "z", "kind": "latent", "domain": {"type": "continuous", "dim": 2}},
                {"name": "x", "kind": "observed", "domain": {"type": "continuous", "dim": 4}}
            ],
            "edges": [["c", "z"], ["z", "x"]],
            "dims": {"hidden": 7}
        }"#,
    )
    .unwrap();
    let mut store = ParamStore::new();
    let bundle = build_from_description(&custom, &mut store, 3).unwrap();
    assert_eq!(bundle.name(), "custom");
    let model = bundle.model();
    let config = TrainerConfig { batch: 8, seed: 3, mode: Mode::Global, ..TrainerConfig::default() };
    let mut trainer = Trainer::new(model.clone(), store, config).unwrap();
    let data =
        crate::data::Dataset::new(BTreeMap::from([("x".to_string(), Tensor::full(&[10, 4], 0.2))]), None).unwrap();
    let trace = trainer.train(&data, 3, 0, None).unwrap();
    assert_eq!(trace.len(), 3);
    assert!(trace.iter().all(|r| r.objective.is_finite()));

    let unknown = GraphDescription::from_json(r#"{"instance": "hmm"}"#).unwrap();
    assert!(build_from_description(&unknown, &mut ParamStore::new(), 0).is_err());
}

#[test]
fn custom_ties_share_networks() {
    let ss = build_ssgan(&small_ssgan(3), &mut ParamStore::new(), 0).unwrap();
    let mut s3 = ParamStore::new();
    build_custom(&ss.model.dag, ss.model.recognition.clone(), &CustomSpec::default(), &mut s3, 0).unwrap();
    let bigger = build_ssgan(&small_ssgan(6), &mut ParamStore::new(), 0).unwrap();
    let mut s6 = ParamStore::new();
    build_custom(&bigger.model.dag, bigger.model.recognition.clone(), &CustomSpec::default(), &mut s6, 0).unwrap();
    // Only the h conditioning width changes with T.
    assert_eq!(s3.len(), s6.len());
}
