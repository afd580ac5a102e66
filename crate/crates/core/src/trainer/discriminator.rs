use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::graph::{Dag, Factor};
use crate::numerics::{softplus, Activation, Mlp, MlpSpec, Owner, ParamStore, Tape, Var};
use crate::stochastics::SampleTable;

/// Network shape shared by every discriminator of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscSpec {
    /// Width of a per-variable feature layer applied before the joint network.
    /// `None` feeds the raw concatenation.
    pub branch: Option<usize>,
    pub hidden: Vec<usize>,
    pub slope: f64,
}

impl Default for DiscSpec {
    fn default() -> Self {
        Self { branch: None, hidden: vec![64], slope: 0.2 }
    }
}

/// `D_A` for one tying group: per-position feature layers, then a joint network
/// producing one logit.
#[derive(Debug, Clone)]
pub struct FactorDiscriminator {
    pub factor: Factor,
    pub widths: Vec<usize>,
    branches: Vec<Option<Mlp>>,
    joint: Mlp,
}

impl FactorDiscriminator {
    pub fn new<R: Rng>(
        factor: &Factor,
        dag: &Dag,
        spec: &DiscSpec,
        store: &mut ParamStore,
        name: &str,
        rng: &mut R,
    ) -> Result<Self, TrainError> {
        let act = Activation::LeakyRelu { slope: spec.slope };
        let widths: Vec<usize> =
            factor.variables.iter().map(|v| dag.variable(v).map(|s| s.domain.width())).collect::<Result<_, _>>()?;
        let mut branches = Vec::with_capacity(widths.len());
        let mut joint_in = 0;
        for (i, &w) in widths.iter().enumerate() {
            match spec.branch {
                Some(b) => {
                    let net = Mlp::new(
                        MlpSpec::new(w, &[], act, b, act),
                        store,
                        Owner::Discriminator,
                        &format!("{name}.f{i}"),
                        rng,
                    )?;
                    branches.push(Some(net));
                    joint_in += b;
                }
                None => {
                    branches.push(None);
                    joint_in += w;
                }
            }
        }
        let joint = Mlp::new(
            MlpSpec::new(joint_in, &spec.hidden, act, 1, Activation::Linear),
            store,
            Owner::Discriminator,
            &format!("{name}.joint"),
            rng,
        )?;
        Ok(Self { factor: factor.clone(), widths, branches, joint })
    }

    pub fn input_width(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn params(&self) -> Vec<crate::numerics::ParamId> {
        let mut p: Vec<_> = self.branches.iter().flatten().flat_map(Mlp::params).collect();
        p.extend(self.joint.params());
        p
    }

    /// Logits for per-position inputs of equal row count.
    pub fn logits(&self, tape: &mut Tape, store: &ParamStore, parts: &[Var]) -> Result<Var, TrainError> {
        if parts.len() != self.widths.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "discriminator {} takes {} inputs, got {}",
                self.factor.tie_group,
                self.widths.len(),
                parts.len()
            )));
        }
        let mut features = Vec::with_capacity(parts.len());
        for ((&part, branch), &w) in parts.iter().zip(&self.branches).zip(&self.widths) {
            if tape.value(part).cols() != w {
                return Err(TrainError::ShapeMismatch(format!(
                    "discriminator {} expects width {w}, got {}",
                    self.factor.tie_group,
                    tape.value(part).cols()
                )));
            }
            features.push(match branch {
                Some(net) => net.forward(tape, store, part)?,
                None => part,
            });
        }
        let x = tape.concat_cols(&features)?;
        Ok(self.joint.forward(tape, store, x)?)
    }

    /// Logits for every instance stacked row-wise, instance-major.
    fn stacked_logits(&self, tape: &mut Tape, store: &ParamStore, table: &SampleTable) -> Result<Var, TrainError> {
        let mut parts = Vec::with_capacity(self.widths.len());
        for pos in 0..self.widths.len() {
            let column: Vec<Var> = self
                .factor
                .instances
                .iter()
                .map(|inst| table.get(&inst[pos]).ok_or_else(|| TrainError::MissingVariable(inst[pos].clone())))
                .collect::<Result<_, _>>()?;
            parts.push(tape.concat_rows(&column)?);
        }
        self.logits(tape, store, &parts)
    }
}

/// What the recorded scalar optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `V = E_q log D + E_p log(1 − D)`, the divergence estimate itself.
    Divergence,
    /// The generator surrogate with labels swapped, `−E_p log D − E_q log(1 − D)`.
    NonSaturating,
}

/// A recorded objective plus the estimate `V` for every factor instance.
#[derive(Debug, Clone)]
pub struct Objective {
    pub value: Var,
    /// Factor-averaged `V`.
    pub estimate: f64,
    /// `V` per instance, in factor order then instance order.
    pub terms: Vec<f64>,
}

/// `(1/|F|) Σ_A [E_q log D_A(A) + E_p log(1 − D_A(A))]` with one term per factor instance.
/// Tied instances share their factor's discriminator.
pub fn local_objective(
    tape: &mut Tape,
    store: &ParamStore,
    discs: &[FactorDiscriminator],
    p: &SampleTable,
    q: &SampleTable,
    criterion: Criterion,
) -> Result<Objective, TrainError> {
    let total_instances: usize = discs.iter().map(|d| d.factor.instance_count()).sum();
    if total_instances == 0 {
        return Err(TrainError::EmptyFactorSet);
    }
    let mut pieces = Vec::with_capacity(discs.len());
    let mut terms = Vec::with_capacity(total_instances);
    for disc in discs {
        let zp = disc.stacked_logits(tape, store, p)?;
        let zq = disc.stacked_logits(tape, store, q)?;
        let (bp, bq) = (p.batch, q.batch);
        for i in 0..disc.factor.instance_count() {
            let lq = tape.value(zq).data()[i * bq..(i + 1) * bq].iter().map(|&z| -softplus(-z)).sum::<f64>();
            let lp = tape.value(zp).data()[i * bp..(i + 1) * bp].iter().map(|&z| -softplus(z)).sum::<f64>();
            terms.push(lq / bq as f64 + lp / bp as f64);
        }
        // Each instance contributes a minibatch mean, so the stacked mean weighted by
        // the instance count equals the sum of per-instance terms.
        let (sq, sp) = match criterion {
            Criterion::Divergence => {
                let neg_zq = tape.scale(zq, -1.0);
                let a = tape.softplus(neg_zq);
                let b = tape.softplus(zp);
                (a, b)
            }
            Criterion::NonSaturating => {
                let neg_zp = tape.scale(zp, -1.0);
                let a = tape.softplus(zq);
                let b = tape.softplus(neg_zp);
                (a, b)
            }
        };
        let mq = tape.mean(sq);
        let mp = tape.mean(sp);
        let sum = tape.add(mq, mp)?;
        let sign = if criterion == Criterion::Divergence { -1.0 } else { 1.0 };
        pieces.push(tape.scale(sum, sign * disc.factor.instance_count() as f64 / total_instances as f64));
    }
    let mut value = pieces[0];
    for &piece in &pieces[1..] {
        value = tape.add(value, piece)?;
    }
    let estimate = terms.iter().sum::<f64>() / total_instances as f64;
    Ok(Objective { value, estimate, terms })
}

/// The single-discriminator estimate over all variables jointly.
pub fn global_objective(
    tape: &mut Tape,
    store: &ParamStore,
    disc: &FactorDiscriminator,
    dag: &Dag,
    p: &SampleTable,
    q: &SampleTable,
    criterion: Criterion,
) -> Result<Objective, TrainError> {
    let covered = disc.factor.instance_count() == 1 && disc.factor.variables.len() == dag.len();
    if !covered || dag.nodes().iter().any(|v| !disc.factor.variables.contains(&v.name)) {
        return Err(TrainError::ShapeMismatch(format!("global discriminator must take all {} variables", dag.len())));
    }
    local_objective(tape, store, std::slice::from_ref(disc), p, q, criterion)
}
