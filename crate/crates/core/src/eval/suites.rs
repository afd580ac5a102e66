//! Verification suites shared by the command line and the acceptance tests.

use std::collections::BTreeMap;

use crate::data::{make_bouncing_dot, make_mixture, Dataset};
use crate::graph::extract_factors;
use crate::instances::{build_gmgan, build_ssgan, Bundle, GmganSpec, SsganSpec};
use crate::numerics::{grad_check, GradCheckOptions, GradCheckReport, Owner, ParamId, ParamStore};
use crate::trainer::{
    exact_joint_js, exact_local_js, exact_local_js_by_projection, local_objective, optimal_discriminator_objective,
    Criterion, DiscSpec, LocalJs, Mode, TabularModel, TrainError, Trainer, TrainerConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCheck {
    pub name: String,
    pub report: GradCheckReport,
}

/// A small bundle of the named built-in instance with matching data.
pub fn gradcheck_fixture(instance: &str, seed: u64) -> Result<(Bundle, ParamStore, Dataset), TrainError> {
    let mut store = ParamStore::new();
    let bad = |e: crate::instances::InstanceError| TrainError::BadConfig(e.to_string());
    match instance {
        "gmgan" => {
            let spec = GmganSpec {
                k: 3,
                dim_h: 2,
                dim_x: 5,
                gen_hidden: vec![6],
                enc_hidden: vec![6],
                ..GmganSpec::default()
            };
            let bundle = build_gmgan(&spec, &mut store, seed).map_err(bad)?;
            let data = make_mixture(3, 5, 30, 4.0, seed)?.dataset();
            Ok((Bundle::Gmgan(bundle), store, data))
        }
        "ssgan" => {
            let spec = SsganSpec {
                t: 3,
                dim_h: 3,
                dim_v: 2,
                dim_x: 25,
                dim_eps: 2,
                gen_hidden: vec![6],
                trans_hidden: vec![4],
                enc_hidden: vec![6],
                frame_features: 4,
                shared_noise: true,
            };
            let bundle = build_ssgan(&spec, &mut store, seed).map_err(bad)?;
            let data = make_bouncing_dot(3, 5, 12, seed)?.dataset();
            Ok((Bundle::Ssgan(bundle), store, data))
        }
        other => Err(TrainError::BadConfig(format!("no gradient fixture for instance {other:?}"))),
    }
}

fn group_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(head, _)| head)
}

/// Central-difference checks of the local objective on one frozen minibatch.
///
/// Model parameters are grouped by dependency function and checked under the local
/// criterion; discriminators are checked in both modes.
pub fn gradient_suite(
    bundle: &Bundle,
    store: &ParamStore,
    data: &Dataset,
    seed: u64,
    opts: GradCheckOptions,
) -> Result<Vec<NamedCheck>, TrainError> {
    let mut out = Vec::new();
    for mode in [Mode::Local, Mode::Global] {
        let config = TrainerConfig {
            mode,
            batch: 4,
            seed,
            disc: DiscSpec { branch: Some(3), hidden: vec![5], slope: 0.2 },
            ..TrainerConfig::default()
        };
        let trainer = Trainer::new(bundle.model().clone(), store.clone(), config)?;
        let mb = trainer.draw_minibatch(data, 1, 0)?;
        let owners: &[Owner] = match mode {
            Mode::Local => &[Owner::Generative, Owner::Recognition, Owner::Prior, Owner::Discriminator],
            Mode::Global => &[Owner::Discriminator],
        };
        let mut groups: BTreeMap<String, Vec<ParamId>> = BTreeMap::new();
        for id in trainer.store.ids_owned_by(owners) {
            groups.entry(group_of(&trainer.store.entry(id).name).to_string()).or_default().push(id);
        }
        for (group, ids) in groups {
            let report = grad_check(&trainer.store, &ids, opts, |tape, s| {
                let ctx = trainer.ctx();
                let p = trainer.model.sample_p(tape, s, &mb.p_noise, &ctx)?;
                let q = trainer.model.sample_q(tape, s, &mb.observed, &mb.q_noise, &ctx)?;
                local_objective(tape, s, &trainer.discs, &p, &q, Criterion::Divergence).map(|o| o.value)
            })?;
            let name = if mode == Mode::Global { format!("global/{group}") } else { group };
            out.push(NamedCheck { name, report });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub name: String,
    pub joint_js: f64,
    pub local: LocalJs,
    pub projection: LocalJs,
    pub optimum: LocalJs,
    /// Largest per-term gap between the marginal and projection routes.
    pub route_gap: f64,
    /// Largest per-term gap between the optimal-discriminator objective and `local − 2 ln 2`.
    pub optimum_gap: f64,
}

impl OracleRow {
    pub fn passed(&self) -> bool {
        self.route_gap <= 1e-12 && self.optimum_gap <= 1e-9
    }
}

fn oracle_row(name: String, tab: &TabularModel, dag: &crate::graph::Dag) -> Result<OracleRow, TrainError> {
    let factors = extract_factors(dag)?;
    let local = exact_local_js(tab, &factors)?;
    let projection = exact_local_js_by_projection(tab, &factors)?;
    let optimum = optimal_discriminator_objective(tab, &factors)?;
    let route_gap = local.terms.iter().zip(&projection.terms).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let two_ln2 = 2.0 * std::f64::consts::LN_2;
    let optimum_gap =
        optimum.terms.iter().zip(&local.terms).map(|(o, l)| (o - (l - two_ln2)).abs()).fold(0.0, f64::max);
    Ok(OracleRow { name, joint_js: exact_joint_js(tab), local, projection, optimum, route_gap, optimum_gap })
}

/// The fixed 2×2×2 chain followed by random binary chains `(length, seed)`.
pub fn oracle_suite(chains: &[(usize, u64)]) -> Result<Vec<OracleRow>, TrainError> {
    let (tab, dag) = TabularModel::reference_chain();
    let mut rows = vec![oracle_row("reference k-h-x".into(), &tab, &dag)?];
    for &(n, seed) in chains {
        let (tab, dag) = TabularModel::random_chain(n, seed)?;
        rows.push(oracle_row(format!("chain n={n} seed={seed}"), &tab, &dag)?);
    }
    Ok(rows)
}
