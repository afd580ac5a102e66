//! Exact divergences for models small enough to enumerate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::graph::{Dag, Domain, FactorSet, VariableSpec};

/// Explicit joint tables `p(X, Z)` and `q(X, Z)` over a product of finite spaces.
///
/// States are laid out in mixed radix with the first variable most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    pub names: Vec<String>,
    pub cards: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Factor-averaged local divergence with one term per factor instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalJs {
    pub total: f64,
    pub terms: Vec<f64>,
}

fn xlogy_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

impl TabularModel {
    pub fn new(names: Vec<String>, cards: Vec<usize>, p: Vec<f64>, q: Vec<f64>) -> Result<Self, TrainError> {
        if names.len() != cards.len() || cards.iter().any(|&c| c < 1) {
            return Err(TrainError::BadTable("names and cardinalities disagree".into()));
        }
        let size: usize = cards.iter().product();
        for (label, t) in [("p", &p), ("q", &q)] {
            if t.len() != size {
                return Err(TrainError::BadTable(format!("{label} has {} entries, expected {size}", t.len())));
            }
            if t.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(TrainError::BadTable(format!("{label} has a negative or non-finite entry")));
            }
            let total: f64 = t.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(TrainError::BadTable(format!("{label} sums to {total}")));
            }
        }
        Ok(Self { names, cards, p, q })
    }

    pub fn size(&self) -> usize {
        self.p.len()
    }

    pub fn swapped(&self) -> Self {
        Self { p: self.q.clone(), q: self.p.clone(), ..self.clone() }
    }

    pub fn index_of(&self, name: &str) -> Result<usize, TrainError> {
        self.names.iter().position(|n| n == name).ok_or_else(|| TrainError::MissingVariable(name.to_string()))
    }

    /// The assignment encoded by a flat state index.
    pub fn assignment(&self, mut state: usize) -> Vec<usize> {
        let mut out = vec![0; self.cards.len()];
        for i in (0..self.cards.len()).rev() {
            out[i] = state % self.cards[i];
            state /= self.cards[i];
        }
        out
    }

    fn project(&self, assignment: &[usize], vars: &[usize]) -> usize {
        vars.iter().fold(0, |acc, &v| acc * self.cards[v] + assignment[v])
    }

    /// Marginal tables of `p` and `q` over `vars`, in the order given.
    pub fn marginals(&self, vars: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let size: usize = vars.iter().map(|&v| self.cards[v]).product();
        let (mut mp, mut mq) = (vec![0.0; size], vec![0.0; size]);
        for s in 0..self.size() {
            let a = self.project(&self.assignment(s), vars);
            mp[a] += self.p[s];
            mq[a] += self.q[s];
        }
        (mp, mq)
    }

    fn instance_indices(&self, factors: &FactorSet) -> Result<Vec<Vec<usize>>, TrainError> {
        let mut out = Vec::new();
        for f in factors.iter() {
            for inst in &f.instances {
                out.push(inst.iter().map(|n| self.index_of(n)).collect::<Result<Vec<_>, _>>()?);
            }
        }
        if out.is_empty() {
            return Err(TrainError::EmptyFactorSet);
        }
        Ok(out)
    }

    /// Fixed binary chain `k → h → x` with hand-set conditionals; `q` runs `x → h → k`.
    pub fn reference_chain() -> (Self, Dag) {
        let pk = [0.6, 0.4];
        let ph = [[0.7, 0.3], [0.2, 0.8]];
        let px = [[0.9, 0.1], [0.25, 0.75]];
        let qx = [0.5, 0.5];
        let qh = [[0.8, 0.2], [0.35, 0.65]];
        let qk = [[0.55, 0.45], [0.1, 0.9]];
        let (mut p, mut q) = (Vec::with_capacity(8), Vec::with_capacity(8));
        for k in 0..2 {
            for h in 0..2 {
                for x in 0..2 {
                    p.push(pk[k] * ph[k][h] * px[h][x]);
                    q.push(qx[x] * qh[x][h] * qk[h][k]);
                }
            }
        }
        let d = Domain::Categorical { k: 2 };
        let dag = Dag::new(
            vec![VariableSpec::latent("k", d), VariableSpec::latent("h", d), VariableSpec::observed("x", d)],
            vec![("k".into(), "h".into()), ("h".into(), "x".into())],
        )
        .expect("valid chain");
        let names = vec!["k".to_string(), "h".to_string(), "x".to_string()];
        (Self::new(names, vec![2; 3], p, q).expect("normalized tables"), dag)
    }

    /// Random binary chain `z1 → … → z_{n-1} → x`. `p` follows the chain with random
    /// conditionals; `q` is `q(x)` times the reversed chain with its own random
    /// conditionals.
    pub fn random_chain(n: usize, seed: u64) -> Result<(Self, Dag), TrainError> {
        if n < 2 {
            return Err(TrainError::BadTable("a chain needs at least two variables".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cpt = |rng: &mut ChaCha8Rng| -> [f64; 2] {
            let a: f64 = rng.random_range(0.05..0.95);
            [a, 1.0 - a]
        };
        let names: Vec<String> = (1..n).map(|i| format!("z{i}")).chain(std::iter::once("x".to_string())).collect();
        let p_root = cpt(&mut rng);
        let p_trans: Vec<[[f64; 2]; 2]> = (1..n).map(|_| [cpt(&mut rng), cpt(&mut rng)]).collect();
        let q_root = cpt(&mut rng);
        let q_trans: Vec<[[f64; 2]; 2]> = (1..n).map(|_| [cpt(&mut rng), cpt(&mut rng)]).collect();
        let size = 1 << n;
        let (mut p, mut q) = (vec![0.0; size], vec![0.0; size]);
        for s in 0..size {
            let bits: Vec<usize> = (0..n).map(|i| (s >> (n - 1 - i)) & 1).collect();
            let mut pv = p_root[bits[0]];
            for i in 1..n {
                pv *= p_trans[i - 1][bits[i - 1]][bits[i]];
            }
            let mut qv = q_root[bits[n - 1]];
            for i in (0..n - 1).rev() {
                qv *= q_trans[i][bits[i + 1]][bits[i]];
            }
            p[s] = pv;
            q[s] = qv;
        }
        let nodes = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let d = Domain::Categorical { k: 2 };
                if i + 1 == n {
                    VariableSpec::observed(name, d)
                } else {
                    VariableSpec::latent(name, d)
                }
            })
            .collect();
        let edges = names.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        let dag = Dag::new(nodes, edges)?;
        Ok((Self::new(names, vec![2; n], p, q)?, dag))
    }
}

/// `½ KL(q‖m) + ½ KL(p‖m)` with `m = ½(p + q)`, in nats. Disjoint supports give `ln 2`.
pub fn exact_joint_js(tab: &TabularModel) -> f64 {
    tab.p
        .iter()
        .zip(&tab.q)
        .map(|(&p, &q)| {
            let m = 0.5 * (p + q);
            0.5 * xlogy_ratio(q, m) + 0.5 * xlogy_ratio(p, m)
        })
        .sum()
}

/// `E_q log(q(A)/m(A)) + E_p log(p(A)/m(A))` per factor instance, from marginal tables,
/// averaged over instances.
pub fn exact_local_js(tab: &TabularModel, factors: &FactorSet) -> Result<LocalJs, TrainError> {
    let terms: Vec<f64> = tab
        .instance_indices(factors)?
        .iter()
        .map(|vars| {
            let (mp, mq) = tab.marginals(vars);
            mp.iter()
                .zip(&mq)
                .map(|(&p, &q)| {
                    let m = 0.5 * (p + q);
                    xlogy_ratio(q, m) + xlogy_ratio(p, m)
                })
                .sum()
        })
        .collect();
    Ok(average(terms))
}

/// The same quantity as [`exact_local_js`], computed as expectations over the full joint
/// with each factor marginal obtained by summing the complement state by state.
pub fn exact_local_js_by_projection(tab: &TabularModel, factors: &FactorSet) -> Result<LocalJs, TrainError> {
    let size = tab.size();
    let assignments: Vec<Vec<usize>> = (0..size).map(|s| tab.assignment(s)).collect();
    let terms = tab
        .instance_indices(factors)?
        .iter()
        .map(|vars| {
            let mut term = 0.0;
            for s in 0..size {
                let (mut pa, mut qa) = (0.0, 0.0);
                for t in 0..size {
                    if vars.iter().all(|&v| assignments[t][v] == assignments[s][v]) {
                        pa += tab.p[t];
                        qa += tab.q[t];
                    }
                }
                let ma = 0.5 * (pa + qa);
                if tab.q[s] > 0.0 {
                    term += tab.q[s] * (qa / ma).ln();
                }
                if tab.p[s] > 0.0 {
                    term += tab.p[s] * (pa / ma).ln();
                }
            }
            term
        })
        .collect();
    Ok(average(terms))
}

/// The discriminator objective `E_q log D(A) + E_p log(1 − D(A))` per instance evaluated
/// at the closed-form optimum `D(A) = q(A) / (q(A) + p(A))`, averaged over instances.
pub fn optimal_discriminator_objective(tab: &TabularModel, factors: &FactorSet) -> Result<LocalJs, TrainError> {
    let terms = tab
        .instance_indices(factors)?
        .iter()
        .map(|vars| {
            let (mp, mq) = tab.marginals(vars);
            mp.iter().zip(&mq).map(|(&p, &q)| xlogy_ratio(q, q + p) + xlogy_ratio(p, q + p)).sum()
        })
        .collect();
    Ok(average(terms))
}

fn average(terms: Vec<f64>) -> LocalJs {
    let total = terms.iter().sum::<f64>() / terms.len() as f64;
    LocalJs { total, terms }
}

/// A lookup-table discriminator: one logit per state of every factor instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDiscriminator {
    pub logits: Vec<Vec<f64>>,
}

impl TabularDiscriminator {
    pub fn zeros(tab: &TabularModel, factors: &FactorSet) -> Result<Self, TrainError> {
        let logits = tab
            .instance_indices(factors)?
            .iter()
            .map(|vars| vec![0.0; vars.iter().map(|&v| tab.cards[v]).product()])
            .collect();
        Ok(Self { logits })
    }

    /// The discriminator objective under exact expectations, averaged over instances.
    pub fn objective(&self, tab: &TabularModel, factors: &FactorSet) -> Result<LocalJs, TrainError> {
        let terms = tab
            .instance_indices(factors)?
            .iter()
            .zip(&self.logits)
            .map(|(vars, z)| {
                let (mp, mq) = tab.marginals(vars);
                (0..z.len())
                    .map(|a| -mq[a] * crate::numerics::softplus(-z[a]) - mp[a] * crate::numerics::softplus(z[a]))
                    .sum()
            })
            .collect();
        Ok(average(terms))
    }

    /// Plain gradient ascent on the exact objective.
    pub fn fit(tab: &TabularModel, factors: &FactorSet, iterations: usize, lr: f64) -> Result<Self, TrainError> {
        let mut disc = Self::zeros(tab, factors)?;
        let instances = tab.instance_indices(factors)?;
        let marginals: Vec<(Vec<f64>, Vec<f64>)> = instances.iter().map(|v| tab.marginals(v)).collect();
        for _ in 0..iterations {
            for (z, (mp, mq)) in disc.logits.iter_mut().zip(&marginals) {
                for a in 0..z.len() {
                    let d = crate::numerics::sigmoid(z[a]);
                    z[a] += lr * (mq[a] * (1.0 - d) - mp[a] * d);
                }
            }
        }
        Ok(disc)
    }
}
