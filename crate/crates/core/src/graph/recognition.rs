use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Dag, GraphError};

/// Structure of an amortized recognition model q(Z | X).
///
/// Each latent is drawn from a conditional on its conditioning set. Latents are
/// sampled in `elimination_order`; every conditioning set only names observed
/// variables and latents that come earlier in that order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecognitionGraph {
    pub conditioning: BTreeMap<String, Vec<String>>,
    pub elimination_order: Vec<String>,
}

impl RecognitionGraph {
    pub fn conditioning_of(&self, latent: &str) -> Result<&[String], GraphError> {
        self.conditioning.get(latent).map(Vec::as_slice).ok_or_else(|| GraphError::UnknownVariable(latent.to_string()))
    }

    /// Checks the ordering invariants against the generative graph.
    pub fn check(&self, dag: &Dag) -> Result<(), GraphError> {
        let latents: BTreeSet<&str> = dag.latents().map(|v| v.name.as_str()).collect();
        let ordered: BTreeSet<&str> = self.elimination_order.iter().map(String::as_str).collect();
        if ordered != latents || self.elimination_order.len() != latents.len() {
            return Err(GraphError::BadRecognition("elimination order must list every latent exactly once".into()));
        }
        let mut available: BTreeSet<&str> = dag.observed().map(|v| v.name.as_str()).collect();
        for latent in &self.elimination_order {
            for cond in self.conditioning_of(latent)? {
                if !available.contains(cond.as_str()) {
                    return Err(GraphError::BadRecognition(format!(
                        "{latent} conditions on {cond}, which is not yet available"
                    )));
                }
            }
            available.insert(latent);
        }
        Ok(())
    }
}

/// Latents ordered from leaves to roots: Kahn's algorithm on the reversed latent
/// subgraph, earliest-declared first among ready nodes.
pub fn leaves_to_roots(dag: &Dag) -> Result<Vec<String>, GraphError> {
    let latents: Vec<usize> = dag.nodes().iter().enumerate().filter(|(_, v)| v.is_latent()).map(|(i, _)| i).collect();
    Ok(dag.kahn(&latents, true)?.into_iter().map(|i| dag.nodes()[i].name.clone()).collect())
}

/// Inverts the generative graph one latent at a time.
///
/// Starting from the observed variables, each latent (leaves first) conditions on
/// the part of its Markov blanket already placed in the recognition graph.
pub fn inverse_factorization(dag: &Dag) -> Result<RecognitionGraph, GraphError> {
    dag.validate()?;
    let order = leaves_to_roots(dag)?;
    let mut placed: BTreeSet<String> = dag.observed().map(|v| v.name.clone()).collect();
    let mut conditioning = BTreeMap::new();
    for latent in &order {
        let blanket = dag.markov_blanket(latent)?;
        let mut cond: Vec<String> = blanket.into_iter().filter(|v| placed.contains(v)).collect();
        cond.sort_by_key(|v| dag.position(v).expect("blanket member"));
        conditioning.insert(latent.clone(), cond);
        placed.insert(latent.clone());
    }
    Ok(RecognitionGraph { conditioning, elimination_order: order })
}

/// Fully factorized recognition graph: each latent conditions on all observed variables,
/// unless `overrides` restricts it to a subset of them.
pub fn mean_field(dag: &Dag, overrides: &BTreeMap<String, Vec<String>>) -> Result<RecognitionGraph, GraphError> {
    dag.validate()?;
    for (latent, observed) in overrides {
        if !dag.variable(latent)?.is_latent() {
            return Err(GraphError::NotLatent(latent.clone()));
        }
        for name in observed {
            if dag.variable(name)?.is_latent() {
                return Err(GraphError::NotObserved(name.clone()));
            }
        }
    }
    let all_observed: Vec<String> = dag.observed().map(|v| v.name.clone()).collect();
    let mut conditioning = BTreeMap::new();
    let mut order = Vec::new();
    for latent in dag.latents() {
        let mut cond = overrides.get(&latent.name).cloned().unwrap_or_else(|| all_observed.clone());
        cond.sort_by_key(|v| dag.position(v).expect("checked above"));
        cond.dedup();
        conditioning.insert(latent.name.clone(), cond);
        order.push(latent.name.clone());
    }
    Ok(RecognitionGraph { conditioning, elimination_order: order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Domain, VariableSpec};

    fn cont(dim: usize) -> Domain {
        Domain::Continuous { dim }
    }

    fn strings(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn dag(nodes: Vec<VariableSpec>, edges: &[(&str, &str)]) -> Dag {
        Dag::new(nodes, edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()).unwrap()
    }

    #[test]
    fn gmgan_inverts_to_a_chain() {
        let g = dag(
            vec![
                VariableSpec::latent("k", Domain::Categorical { k: 4 }),
                VariableSpec::latent("h", cont(2)),
                VariableSpec::observed("x", cont(3)),
            ],
            &[("k", "h"), ("h", "x")],
        );
        let rec = inverse_factorization(&g).unwrap();
        assert_eq!(rec.elimination_order, strings(&["h", "k"]));
        assert_eq!(rec.conditioning["h"], strings(&["x"]));
        assert_eq!(rec.conditioning["k"], strings(&["h"]));
        rec.check(&g).unwrap();

        let mf = mean_field(&g, &BTreeMap::new()).unwrap();
        assert_eq!(mf.conditioning["h"], strings(&["x"]));
        assert_eq!(mf.conditioning["k"], strings(&["x"]));
    }

    #[test]
    fn single_latent_inverts_to_one_step() {
        let g = dag(vec![VariableSpec::latent("z", cont(1)), VariableSpec::observed("x", cont(1))], &[("z", "x")]);
        let rec = inverse_factorization(&g).unwrap();
        assert_eq!(rec.conditioning["z"], strings(&["x"]));
    }

    #[test]
    fn v_structure_uses_declaration_ties() {
        let g = dag(
            vec![
                VariableSpec::latent("z1", cont(1)),
                VariableSpec::latent("z2", cont(1)),
                VariableSpec::observed("x", cont(1)),
            ],
            &[("z1", "x"), ("z2", "x")],
        );
        let rec = inverse_factorization(&g).unwrap();
        assert_eq!(rec.elimination_order, strings(&["z1", "z2"]));
        assert_eq!(rec.conditioning["z1"], strings(&["x"]));
        assert_eq!(rec.conditioning["z2"], strings(&["z1", "x"]));
    }

    #[test]
    fn mean_field_overrides_and_errors() {
        let g = dag(
            vec![
                VariableSpec::latent("h", cont(2)),
                VariableSpec::latent("v1", cont(1)),
                VariableSpec::latent("v2", cont(1)),
                VariableSpec::observed("x1", cont(3)),
                VariableSpec::observed("x2", cont(3)),
            ],
            &[("v1", "v2"), ("h", "x1"), ("v1", "x1"), ("h", "x2"), ("v2", "x2")],
        );
        let overrides: BTreeMap<String, Vec<String>> =
            [("v1".into(), strings(&["x1"])), ("v2".into(), strings(&["x2"]))].into();
        let rec = mean_field(&g, &overrides).unwrap();
        assert_eq!(rec.conditioning["h"], strings(&["x1", "x2"]));
        assert_eq!(rec.conditioning["v1"], strings(&["x1"]));
        assert_eq!(rec.conditioning["v2"], strings(&["x2"]));

        let bad: BTreeMap<String, Vec<String>> = [("v1".into(), strings(&["x9"]))].into();
        assert_eq!(mean_field(&g, &bad), Err(GraphError::UnknownVariable("x9".into())));
        let bad: BTreeMap<String, Vec<String>> = [("zz".into(), strings(&["x1"]))].into();
        assert_eq!(mean_field(&g, &bad), Err(GraphError::UnknownVariable("zz".into())));
    }

    #[test]
    fn zero_latent_graph_gives_empty_recognition() {
        let g = dag(vec![VariableSpec::observed("x", cont(2))], &[]);
        assert_eq!(mean_field(&g, &BTreeMap::new()).unwrap(), RecognitionGraph::default());
        assert_eq!(inverse_factorization(&g).unwrap(), RecognitionGraph::default());
    }
}
