use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Latent,
    Observed,
}

/// Value space of a variable. Categorical values are carried as (relaxed) one-hot rows of width `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Continuous { dim: usize },
    Categorical { k: usize },
}

impl Domain {
    /// Width of the row vector that carries one value of this domain.
    pub fn width(&self) -> usize {
        match *self {
            Domain::Continuous { dim } => dim,
            Domain::Categorical { k } => k,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Domain::Categorical { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_group: Option<String>,
}

impl VariableSpec {
    pub fn latent(name: impl Into<String>, domain: Domain) -> Self {
        Self { name: name.into(), kind: VariableKind::Latent, domain, tie_group: None }
    }

    pub fn observed(name: impl Into<String>, domain: Domain) -> Self {
        Self { name: name.into(), kind: VariableKind::Observed, domain, tie_group: None }
    }

    pub fn tied(mut self, group: impl Into<String>) -> Self {
        self.tie_group = Some(group.into());
        self
    }

    pub fn is_latent(&self) -> bool {
        self.kind == VariableKind::Latent
    }
}

/// Generative Bayesian network over latent and observed variables.
///
/// Node declaration order is significant: it breaks ties in every ordering
/// the graph produces and fixes the order of parent lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dag {
    nodes: Vec<VariableSpec>,
    edges: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl Dag {
    /// Builds and validates a DAG.
    pub fn new(nodes: Vec<VariableSpec>, edges: Vec<(String, String)>) -> Result<Self, GraphError> {
        let dag = Self::new_unchecked(nodes, edges)?;
        dag.validate()?;
        Ok(dag)
    }

    /// Builds the graph without the acyclicity and parent-kind checks.
    ///
    /// Duplicate names and edges that mention unknown variables are still rejected,
    /// since no adjacency could be formed otherwise.
    pub fn new_unchecked(nodes: Vec<VariableSpec>, edges: Vec<(String, String)>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.name.clone(), i).is_some() {
                return Err(GraphError::DuplicateName(node.name.clone()));
            }
        }
        for (parent, child) in &edges {
            for name in [parent, child] {
                if !index.contains_key(name) {
                    return Err(GraphError::UnknownVariable(name.clone()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        let edges = edges.into_iter().filter(|e| seen.insert(e.clone())).collect();
        Ok(Self { nodes, edges, index })
    }

    pub fn nodes(&self) -> &[VariableSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn position(&self, name: &str) -> Result<usize, GraphError> {
        self.index.get(name).copied().ok_or_else(|| GraphError::UnknownVariable(name.to_string()))
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec, GraphError> {
        Ok(&self.nodes[self.position(name)?])
    }

    pub fn latents(&self) -> impl Iterator<Item = &VariableSpec> {
        self.nodes.iter().filter(|n| n.is_latent())
    }

    pub fn observed(&self) -> impl Iterator<Item = &VariableSpec> {
        self.nodes.iter().filter(|n| !n.is_latent())
    }

    /// Parents of `name`, in declaration order.
    pub fn parents(&self, name: &str) -> Result<Vec<&str>, GraphError> {
        let pos = self.position(name)?;
        Ok(self.sorted_names(self.parent_indices(pos)))
    }

    /// Children of `name`, in declaration order.
    pub fn children(&self, name: &str) -> Result<Vec<&str>, GraphError> {
        let pos = self.position(name)?;
        Ok(self.sorted_names(self.child_indices(pos)))
    }

    pub fn is_root(&self, name: &str) -> Result<bool, GraphError> {
        Ok(self.parent_indices(self.position(name)?).is_empty())
    }

    fn parent_indices(&self, pos: usize) -> BTreeSet<usize> {
        let name = &self.nodes[pos].name;
        self.edges.iter().filter(|(_, c)| c == name).map(|(p, _)| self.index[p]).collect()
    }

    fn child_indices(&self, pos: usize) -> BTreeSet<usize> {
        let name = &self.nodes[pos].name;
        self.edges.iter().filter(|(p, _)| p == name).map(|(_, c)| self.index[c]).collect()
    }

    fn sorted_names(&self, indices: BTreeSet<usize>) -> Vec<&str> {
        indices.into_iter().map(|i| self.nodes[i].name.as_str()).collect()
    }

    /// Checks acyclicity and that latent variables only have latent parents.
    pub fn validate(&self) -> Result<(), GraphError> {
        self.topological_order()?;
        for (parent, child) in &self.edges {
            let p = &self.nodes[self.index[parent]];
            let c = &self.nodes[self.index[child]];
            if c.is_latent() && !p.is_latent() {
                return Err(GraphError::ObservedParentOfLatent { parent: parent.clone(), child: child.clone() });
            }
        }
        for node in &self.nodes {
            let ok = match node.domain {
                Domain::Continuous { dim } => dim >= 1,
                Domain::Categorical { k } => k >= 2,
            };
            if !ok {
                return Err(GraphError::BadDomain(node.name.clone()));
            }
        }
        Ok(())
    }

    /// Kahn's algorithm; among ready nodes the earliest-declared goes first.
    pub fn topological_order(&self) -> Result<Vec<&str>, GraphError> {
        let all: Vec<usize> = (0..self.nodes.len()).collect();
        self.kahn(&all, false).map(|order| order.into_iter().map(|i| self.nodes[i].name.as_str()).collect())
    }

    /// Topological sort restricted to `subset`; with `reversed` the edge direction is flipped,
    /// so sinks come first.
    pub(crate) fn kahn(&self, subset: &[usize], reversed: bool) -> Result<Vec<usize>, GraphError> {
        let member: BTreeSet<usize> = subset.iter().copied().collect();
        let mut indegree: HashMap<usize, usize> = member.iter().map(|&i| (i, 0)).collect();
        let mut succ: HashMap<usize, Vec<usize>> = HashMap::new();
        for (p, c) in &self.edges {
            let (mut from, mut to) = (self.index[p], self.index[c]);
            if reversed {
                std::mem::swap(&mut from, &mut to);
            }
            if member.contains(&from) && member.contains(&to) {
                *indegree.get_mut(&to).expect("member") += 1;
                succ.entry(from).or_default().push(to);
            }
        }
        let mut ready: BTreeSet<usize> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&i, _)| i).collect();
        let mut order = Vec::with_capacity(member.len());
        while let Some(next) = ready.pop_first() {
            order.push(next);
            for &to in succ.get(&next).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(&to).expect("member");
                *d -= 1;
                if *d == 0 {
                    ready.insert(to);
                }
            }
        }
        if order.len() != member.len() {
            let placed: BTreeSet<usize> = order.iter().copied().collect();
            let stuck = member.difference(&placed).map(|&i| self.nodes[i].name.clone()).collect();
            return Err(GraphError::CycleDetected(stuck));
        }
        Ok(order)
    }

    /// Parents, children and co-parents of `name`, excluding `name` itself.
    pub fn markov_blanket(&self, name: &str) -> Result<BTreeSet<String>, GraphError> {
        let pos = self.position(name)?;
        let mut blanket = self.parent_indices(pos);
        for child in self.child_indices(pos) {
            blanket.insert(child);
            blanket.extend(self.parent_indices(child));
        }
        blanket.remove(&pos);
        Ok(blanket.into_iter().map(|i| self.nodes[i].name.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cont(dim: usize) -> Domain {
        Domain::Continuous { dim }
    }

    pub(crate) fn gmgan_dag() -> Dag {
        Dag::new(
            vec![
                VariableSpec::latent("k", Domain::Categorical { k: 3 }),
                VariableSpec::latent("h", cont(2)),
                VariableSpec::observed("x", cont(4)),
            ],
            vec![("k".into(), "h".into()), ("h".into(), "x".into())],
        )
        .unwrap()
    }

    fn edges(list: &[(&str, &str)]) -> Vec<(String, String)> {
        list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn gmgan_chain_is_valid() {
        assert!(gmgan_dag().validate().is_ok());
        assert_eq!(gmgan_dag().topological_order().unwrap(), vec!["k", "h", "x"]);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let err = Dag::new(vec![VariableSpec::latent("z", cont(1))], edges(&[("z", "z")])).unwrap_err();
        assert_eq!(err, GraphError::CycleDetected(vec!["z".into()]));
    }

    #[test]
    fn observed_parent_of_latent_is_rejected() {
        let err = Dag::new(
            vec![VariableSpec::observed("x", cont(1)), VariableSpec::latent("z", cont(1))],
            edges(&[("x", "z")]),
        )
        .unwrap_err();
        assert_eq!(err, GraphError::ObservedParentOfLatent { parent: "x".into(), child: "z".into() });
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = Dag::new(vec![VariableSpec::latent("z", cont(1)), VariableSpec::observed("z", cont(1))], vec![])
            .unwrap_err();
        assert_eq!(err, GraphError::DuplicateName("z".into()));
    }

    #[test]
    fn bad_domains_are_rejected() {
        let err = Dag::new(vec![VariableSpec::latent("k", Domain::Categorical { k: 1 })], vec![]).unwrap_err();
        assert_eq!(err, GraphError::BadDomain("k".into()));
    }

    #[test]
    fn ssgan_t2_order_follows_declaration_ties() {
        let dag = Dag::new(
            vec![
                VariableSpec::latent("h", cont(2)),
                VariableSpec::latent("v1", cont(1)),
                VariableSpec::latent("v2", cont(1)),
                VariableSpec::observed("x1", cont(3)),
                VariableSpec::observed("x2", cont(3)),
            ],
            edges(&[("v1", "v2"), ("h", "x1"), ("v1", "x1"), ("h", "x2"), ("v2", "x2")]),
        )
        .unwrap();
        assert_eq!(dag.topological_order().unwrap(), vec!["h", "v1", "v2", "x1", "x2"]);
        let blanket: Vec<String> = dag.markov_blanket("v1").unwrap().into_iter().collect();
        assert_eq!(blanket, vec!["h", "v2", "x1"]);
    }

    #[test]
    fn singleton_and_blankets() {
        let dag = Dag::new(vec![VariableSpec::latent("z", cont(1))], vec![]).unwrap();
        assert_eq!(dag.topological_order().unwrap(), vec!["z"]);
        assert!(dag.markov_blanket("z").unwrap().is_empty());

        let g = gmgan_dag();
        assert_eq!(g.markov_blanket("h").unwrap().into_iter().collect::<Vec<_>>(), vec!["k", "x"]);
        assert_eq!(g.markov_blanket("k").unwrap().into_iter().collect::<Vec<_>>(), vec!["h"]);
        assert_eq!(g.markov_blanket("q"), Err(GraphError::UnknownVariable("q".into())));
    }

    #[test]
    fn longer_cycle_reports_its_members() {
        let err = Dag::new(
            vec![
                VariableSpec::latent("a", cont(1)),
                VariableSpec::latent("b", cont(1)),
                VariableSpec::latent("c", cont(1)),
                VariableSpec::latent("d", cont(1)),
            ],
            edges(&[("a", "b"), ("b", "c"), ("c", "b"), ("c", "d")]),
        )
        .unwrap_err();
        assert_eq!(err, GraphError::CycleDetected(vec!["b".into(), "c".into(), "d".into()]));
    }
}
