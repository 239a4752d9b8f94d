//! Scenario files: a TOML document describing an instance, its queries,
//! and optional planning parameters. Simulation queries are converted to
//! partition queries at load time; the raw file is kept for provenance
//! and round-tripping.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use persuasion::model::{BPInstance, Belief, MessagingPolicy};
use persuasion::oracle::{self, PartitionQuery, SimulationQuery};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {invariant}: {detail}")]
    Validation { invariant: &'static str, detail: String },
}

fn invalid(invariant: &'static str, detail: impl ToString) -> ScenarioError {
    ScenarioError::Validation { invariant, detail: detail.to_string() }
}

/// One receiver type: a label and its belief over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    pub belief: Vec<f64>,
}

/// A query as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QuerySpec {
    /// Explicit partition of the type indices.
    Partition { cells: Vec<Vec<usize>> },
    /// Simulation query: an action-valued policy plus the probed message.
    Simulation { policy: Vec<Vec<f64>>, message: usize },
}

/// The raw scenario document, in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub sender_utility: Vec<Vec<f64>>,
    pub receiver_utility: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
    #[serde(default)]
    pub binary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
    pub types: Vec<TypeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<QuerySpec>,
}

/// A validated scenario: the parsed file, the instance it describes, and
/// every query converted to partition form.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub instance: BPInstance,
    pub queries: Vec<PartitionQuery>,
}

impl Scenario {
    pub fn type_count(&self) -> usize {
        self.instance.type_count()
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    validate(file)
}

pub fn serialize_scenario(file: &ScenarioFile) -> String {
    toml::to_string(file).expect("scenario files serialize cleanly")
}

fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let d = file.states.len();
    let a = file.actions.len();
    if d == 0 {
        return Err(invalid("states non-empty", "no states listed"));
    }
    if a == 0 {
        return Err(invalid("actions non-empty", "no actions listed"));
    }
    for (name, m) in [("sender_utility", &file.sender_utility), ("receiver_utility", &file.receiver_utility)] {
        if m.len() != d || m.iter().any(|row| row.len() != a) {
            return Err(invalid(
                "utility matrix dimensions",
                format!("{name} must be {d}x{a} (states x actions)"),
            ));
        }
    }
    if file.types.is_empty() {
        return Err(invalid("types non-empty", "no receiver types listed"));
    }
    if file.prior.len() != file.types.len() {
        return Err(invalid(
            "prior length",
            format!("{} prior entries for {} types", file.prior.len(), file.types.len()),
        ));
    }
    let sum: f64 = file.prior.iter().sum();
    if (sum - 1.0).abs() > 1e-12 || file.prior.iter().any(|&w| w < 0.0) {
        return Err(invalid("prior sums to 1", format!("prior sums to {sum}")));
    }
    let mut beliefs = Vec::with_capacity(file.types.len());
    for spec in &file.types {
        if spec.belief.len() != d {
            return Err(invalid(
                "belief dimension",
                format!("type {:?} has {} entries, expected {d}", spec.name, spec.belief.len()),
            ));
        }
        beliefs.push(
            Belief::new(spec.belief.clone())
                .map_err(|e| invalid("belief is a distribution", format!("type {:?}: {e}", spec.name)))?,
        );
    }
    let instance = BPInstance::new(
        file.sender_utility.clone(),
        file.receiver_utility.clone(),
        beliefs,
        file.prior.clone(),
    )
    .map_err(|e| invalid("instance invariants", e))?;

    if file.binary && !instance.is_normalized_binary() {
        return Err(invalid(
            "binary normal form",
            "binary scenarios need canonical two-state utilities and types sorted by \
             strictly decreasing Pr(state 1), none above 1/2",
        ));
    }
    if let Some(costs) = &file.costs {
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(invalid("costs non-negative", "costs must be finite and >= 0"));
        }
    }

    let t = instance.type_count();
    let mut queries = Vec::with_capacity(file.queries.len());
    for (qi, spec) in file.queries.iter().enumerate() {
        let query = match spec {
            QuerySpec::Partition { cells } => {
                let cells = cells
                    .iter()
                    .map(|c| {
                        persuasion::model::TypeSubset::new(c.clone(), t)
                            .map_err(|e| invalid("query cells", format!("query {qi}: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                PartitionQuery::new(t, cells)
                    .map_err(|e| invalid("query is a partition", format!("query {qi}: {e}")))?
            }
            QuerySpec::Simulation { policy, message } => {
                let policy = MessagingPolicy::new(policy.clone())
                    .map_err(|e| invalid("simulation policy", format!("query {qi}: {e}")))?;
                let sim = SimulationQuery::new(&instance, policy, *message)
                    .map_err(|e| invalid("simulation query", format!("query {qi}: {e}")))?;
                oracle::induced_partition(&instance, &sim)
                    .map_err(|e| invalid("simulation query", format!("query {qi}: {e}")))?
            }
        };
        queries.push(query);
    }
    Ok(Scenario { file, instance, queries })
}

/// Builds a scenario document from an instance and partition queries,
/// with generic state/action/type labels.
pub fn scenario_from_instance(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: Option<usize>,
) -> ScenarioFile {
    let d = instance.state_count();
    let a = instance.action_count();
    let sender_utility: Vec<Vec<f64>> = (0..d)
        .map(|w| (0..a).map(|x| instance.sender_utility(w, x)).collect())
        .collect();
    let receiver_utility: Vec<Vec<f64>> = (0..d)
        .map(|w| (0..a).map(|x| instance.receiver_utility(w, x)).collect())
        .collect();
    ScenarioFile {
        states: (0..d).map(|w| format!("s{w}")).collect(),
        actions: (0..a).map(|x| format!("a{x}")).collect(),
        sender_utility,
        receiver_utility,
        prior: instance.prior().to_vec(),
        binary: instance.is_normalized_binary(),
        budget,
        costs: None,
        types: (0..instance.type_count())
            .map(|i| TypeSpec {
                name: format!("t{}", i + 1),
                belief: instance.belief(i).probs().to_vec(),
            })
            .collect(),
        queries: queries
            .iter()
            .map(|q| QuerySpec::Partition {
                cells: q.cells().iter().map(|c| c.indices().to_vec()).collect(),
            })
            .collect(),
    }
}
