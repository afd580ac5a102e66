use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{inverse_factorization, mean_field, Dag, GraphError, RecognitionGraph, VariableSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognitionMode {
    #[default]
    Inverse,
    MeanField,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RecognitionSpec {
    pub mode: RecognitionMode,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, Vec<String>>,
}

/// Declarative graph file.
///
/// ```json
/// {
///   "instance": "custom",
///   "variables": [{"name": "z", "kind": "latent", "domain": {"type": "continuous", "dim": 2}},
///                 {"name": "x", "kind": "observed", "domain": {"type": "continuous", "dim": 8}}],
///   "edges": [["z", "x"]],
///   "recognition": {"mode": "inverse"}
/// }
/// ```
///
/// Built-in instances (`"gmgan"`, `"ssgan"`) only need their own keys (`k`, `t`, `dims`);
/// the variables and edges are generated by the instance constructor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDescription {
    #[serde(default = "custom")]
    pub instance: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<VariableSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub recognition: RecognitionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dims: BTreeMap<String, usize>,
}

fn custom() -> String {
    "custom".into()
}

impl GraphDescription {
    pub fn custom(dag: &Dag, recognition: RecognitionSpec) -> Self {
        Self {
            instance: custom(),
            variables: dag.nodes().to_vec(),
            edges: dag.edges().to_vec(),
            recognition,
            k: None,
            t: None,
            dims: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::BadDescription(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("description serializes")
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GraphError::BadDescription(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The DAG declared by `variables` and `edges`.
    pub fn dag(&self) -> Result<Dag, GraphError> {
        Dag::new(self.variables.clone(), self.edges.clone())
    }

    pub fn compile_recognition(&self, dag: &Dag) -> Result<RecognitionGraph, GraphError> {
        match self.recognition.mode {
            RecognitionMode::Inverse => {
                if !self.recognition.overrides.is_empty() {
                    return Err(GraphError::BadDescription("overrides only apply to mean_field recognition".into()));
                }
                inverse_factorization(dag)
            }
            RecognitionMode::MeanField => mean_field(dag, &self.recognition.overrides),
        }
    }
}
