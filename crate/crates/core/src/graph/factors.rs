use serde::{Deserialize, Serialize};

use super::{Dag, Domain, GraphError};

/// A family `(v, parents(v))` type shared by one discriminator.
///
/// `variables` is the layout of the first instance; every instance has the same
/// per-position domains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub variables: Vec<String>,
    pub tie_group: String,
    pub instances: Vec<Vec<String>>,
}

impl Factor {
    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FactorSet {
    pub factors: Vec<Factor>,
}

impl FactorSet {
    /// One factor holding every variable of the graph, in declaration order.
    /// This is the setting under which local training reduces to the global baseline.
    pub fn single(dag: &Dag) -> Self {
        let vars: Vec<String> = dag.nodes().iter().map(|v| v.name.clone()).collect();
        Self { factors: vec![Factor { variables: vars.clone(), tie_group: "all".into(), instances: vec![vars] }] }
    }

    /// Total number of local terms, counting tied instances separately.
    pub fn instance_count(&self) -> usize {
        self.factors.iter().map(Factor::instance_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter()
    }
}

/// One instance per non-root variable; instances whose positions agree on
/// tie group (or variable name when untied) and domain share a factor.
pub fn extract_factors(dag: &Dag) -> Result<FactorSet, GraphError> {
    dag.validate()?;
    let mut keyed: Vec<(Vec<(String, Domain)>, Factor)> = Vec::new();
    for node in dag.nodes() {
        let parents = dag.parents(&node.name)?;
        if parents.is_empty() {
            continue;
        }
        let mut instance = vec![node.name.clone()];
        instance.extend(parents.iter().map(|p| p.to_string()));
        let key = instance
            .iter()
            .map(|name| {
                let spec = dag.variable(name).expect("instance member");
                (spec.tie_group.clone().unwrap_or_else(|| name.clone()), spec.domain)
            })
            .collect::<Vec<_>>();
        match keyed.iter_mut().find(|(k, _)| *k == key) {
            Some((_, factor)) => factor.instances.push(instance),
            None => {
                let tie_group = key.iter().map(|(g, _)| g.as_str()).collect::<Vec<_>>().join("|");
                let factor = Factor { variables: instance.clone(), tie_group, instances: vec![instance] };
                keyed.push((key, factor));
            }
        }
    }
    Ok(FactorSet { factors: keyed.into_iter().map(|(_, f)| f).collect() })
}
