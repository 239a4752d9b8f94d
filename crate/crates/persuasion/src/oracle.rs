//! Oracle queries over the receiver's belief: partitions of the type set,
//! simulation queries (a policy/message pair answered by the receiver's
//! best response), the separation view of a simulation query, searches for
//! separating queries, and feasible-subset enumeration.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::linprog::{self, LinearProgram, LpOutcome, Relation};
use crate::model::{
    self, BPInstance, Belief, MessagingPolicy, ModelError, TypeSubset, DEFAULT_TOL, PROB_TOL,
};

/// Default cap on the size of an enumerated feasible-subset family.
pub const DEFAULT_FAMILY_CAP: usize = 10_000;
/// Default cap on the number of targets in the n-way separating search.
pub const DEFAULT_SEPARATION_TARGET_CAP: usize = 4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linprog(#[from] linprog::LinprogError),
    #[error("cells do not form a partition of the type set: {0}")]
    InvalidPartition(String),
    #[error("simulation query never sends its message")]
    DegenerateQuery,
    #[error("{targets} separation targets exceed the cap of {cap}")]
    CapExceeded { targets: usize, cap: usize },
    #[error("feasible-subset family exceeds the cap of {cap}")]
    ExplosionGuard { cap: usize },
}

/// A partition of the receiver type set; the oracle answers with the cell
/// containing the true type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionQuery {
    cells: Vec<TypeSubset>,
}

impl PartitionQuery {
    /// Validates that the cells are pairwise disjoint, non-empty, and
    /// cover `{0..type_count}`. Cells are stored sorted by smallest member.
    pub fn new(type_count: usize, mut cells: Vec<TypeSubset>) -> Result<Self, OracleError> {
        let mut seen = vec![false; type_count];
        for cell in &cells {
            for &t in cell.indices() {
                if t >= type_count {
                    return Err(OracleError::InvalidPartition(format!(
                        "type {t} out of range"
                    )));
                }
                if seen[t] {
                    return Err(OracleError::InvalidPartition(format!(
                        "type {t} appears in two cells"
                    )));
                }
                seen[t] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(OracleError::InvalidPartition("cells do not cover all types".into()));
        }
        cells.sort_by_key(|c| c.indices()[0]);
        Ok(PartitionQuery { cells })
    }

    pub fn cells(&self) -> &[TypeSubset] {
        &self.cells
    }

    /// The cell containing `type_index`.
    pub fn cell_containing(&self, type_index: usize) -> &TypeSubset {
        self.cells
            .iter()
            .find(|c| c.contains(type_index))
            .expect("partition covers every type")
    }

    /// Non-empty intersections of the cells with `subset`, in cell order.
    pub fn restrict_to(&self, subset: &TypeSubset) -> Vec<TypeSubset> {
        self.cells
            .iter()
            .filter_map(|c| c.intersect(subset))
            .collect()
    }
}

impl std::fmt::Display for PartitionQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (k, c) in self.cells.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// A simulation query: commit to an action-valued messaging policy and ask
/// the oracle for the receiver's best response to one of its messages.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationQuery {
    policy: MessagingPolicy,
    message: usize,
}

impl SimulationQuery {
    pub fn new(
        instance: &BPInstance,
        policy: MessagingPolicy,
        message: usize,
    ) -> Result<Self, OracleError> {
        if policy.state_count() != instance.state_count()
            || policy.message_count() != instance.action_count()
            || message >= instance.action_count()
        {
            return Err(ModelError::DimensionMismatch(
                "simulation query policy must map states to actions".into(),
            )
            .into());
        }
        Ok(SimulationQuery { policy, message })
    }

    pub fn policy(&self) -> &MessagingPolicy {
        &self.policy
    }

    pub fn message(&self) -> usize {
        self.message
    }
}

/// Which cell a type lands in when answering a simulation query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ResponseLabel {
    Action(usize),
    /// The query message has zero probability under this type's belief, so
    /// the best response is undefined; such types are isolated.
    Silent,
}

/// The partition a simulation query induces: types sharing a best response
/// to the query message share a cell. Types for which the message has zero
/// probability go to a dedicated silent cell.
pub fn induced_partition(
    instance: &BPInstance,
    query: &SimulationQuery,
) -> Result<PartitionQuery, OracleError> {
    let mut groups: BTreeMap<ResponseLabel, Vec<usize>> = BTreeMap::new();
    for t in 0..instance.type_count() {
        let belief = instance.belief(t);
        let label = match model::best_response(
            instance,
            belief,
            &query.policy,
            query.message,
            Some(query.message),
        ) {
            Ok(a) => ResponseLabel::Action(a),
            Err(ModelError::ZeroProbabilityMessage { .. }) => ResponseLabel::Silent,
            Err(e) => return Err(e.into()),
        };
        groups.entry(label).or_default().push(t);
    }
    let cells = groups
        .into_values()
        .map(|ts| TypeSubset::new(ts, instance.type_count()).expect("non-empty group"))
        .collect();
    PartitionQuery::new(instance.type_count(), cells)
}

/// The oracle's answer: the cell of `query` containing the true type.
pub fn answer_query(query: &PartitionQuery, true_type: usize) -> TypeSubset {
    query.cell_containing(true_type).clone()
}

/// For a two-state simulation query, the belief threshold above which a
/// type follows the recommendation: a type follows `m` iff its belief mass
/// on the recommended state is at least the threshold.
pub fn binary_threshold(query: &SimulationQuery) -> Result<f64, OracleError> {
    let policy = &query.policy;
    if policy.state_count() != 2 || policy.message_count() != 2 {
        return Err(ModelError::NotBinary.into());
    }
    let m = query.message;
    let on_state = policy.prob(m, m);
    let off_state = policy.prob(m, 1 - m);
    if on_state + off_state <= PROB_TOL {
        return Err(OracleError::DegenerateQuery);
    }
    Ok(off_state / (on_state + off_state))
}

/// Outcome of the separation view of a simulation query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparationResult {
    /// The belief lies in the follow region of the query.
    Inside,
    /// The belief is outside; the action certifies a separating halfspace.
    Outside { witness: usize },
}

/// Tests whether a belief lies in the polytope of beliefs that follow the
/// query's recommendation: inside iff for every action `a` the margin
/// `sum_w (u_R(w, m) - u_R(w, a)) * sigma(m|w) * belief[w]` clears
/// `-DEFAULT_TOL`. Otherwise reports the lowest-index violating action.
pub fn separation_region_test(
    instance: &BPInstance,
    query: &SimulationQuery,
    belief: &Belief,
) -> SeparationResult {
    for a in 0..instance.action_count() {
        if separation_margin(instance, query, belief, a) < -DEFAULT_TOL {
            return SeparationResult::Outside { witness: a };
        }
    }
    SeparationResult::Inside
}

fn separation_margin(
    instance: &BPInstance,
    query: &SimulationQuery,
    belief: &Belief,
    action: usize,
) -> f64 {
    let m = query.message;
    (0..instance.state_count())
        .map(|w| {
            (instance.receiver_utility(w, m) - instance.receiver_utility(w, action))
                * query.policy.prob(m, w)
                * belief.prob(w)
        })
        .sum()
}

/// Turns an LP column for one message into a full action-valued policy:
/// residual row mass is dumped on the lowest-index other action.
fn column_to_policy(
    instance: &BPInstance,
    message: usize,
    column: &[f64],
) -> Result<MessagingPolicy, ModelError> {
    let a_count = instance.action_count();
    let spill = (0..a_count).find(|&a| a != message).unwrap_or(message);
    let mut rows = Vec::with_capacity(instance.state_count());
    for &p in column {
        let p = p.clamp(0.0, 1.0);
        let mut row = vec![0.0; a_count];
        row[message] = p;
        row[spill] += 1.0 - p;
        rows.push(row);
    }
    MessagingPolicy::new(rows)
}

/// Core of the separating-query search: find a policy column and message
/// such that `follower` weakly prefers the recommended message while every
/// entry of `deviators` strictly prefers its assigned action. Enumerates
/// action tuples in odometer order, solving a small LP for each, and
/// returns the first success that passes the partition post-check. Tuples
/// that repeat an action or reuse the recommended message cannot separate
/// the targets into distinct cells and are skipped.
fn separating_query_search(
    instance: &BPInstance,
    follower: usize,
    deviators: &[usize],
) -> Result<Option<SimulationQuery>, OracleError> {
    let d = instance.state_count();
    let a_count = instance.action_count();
    let n_assigned = deviators.len();
    // Variables: sigma(m|w) for each state, then the slack eta.
    let eta = d;
    let mut assignment = vec![0usize; n_assigned];
    loop {
        let usable = assignment
            .iter()
            .enumerate()
            .all(|(k, &a)| assignment[..k].iter().all(|&b| b != a));
        for m in 0..a_count {
            if !usable || assignment.contains(&m) {
                continue;
            }
            let mut objective = vec![0.0; d + 1];
            objective[eta] = -1.0; // minimize eta
            let mut lp = LinearProgram::new(objective);
            for w in 0..d {
                lp.set_bounds(w, 0.0, 1.0);
            }
            lp.set_bounds(eta, f64::NEG_INFINITY, f64::INFINITY);
            // Follower weakly prefers m over every action.
            let follower_belief = instance.belief(follower);
            for a in 0..a_count {
                if a == m {
                    continue;
                }
                let coeffs: Vec<f64> = (0..d)
                    .map(|w| {
                        (instance.receiver_utility(w, m) - instance.receiver_utility(w, a))
                            * follower_belief.prob(w)
                    })
                    .chain(std::iter::once(0.0))
                    .collect();
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
            // Each deviator's margin against its assigned action is at most eta.
            for (k, &dev) in deviators.iter().enumerate() {
                let dev_belief = instance.belief(dev);
                let a = assignment[k];
                let mut coeffs: Vec<f64> = (0..d)
                    .map(|w| {
                        (instance.receiver_utility(w, m) - instance.receiver_utility(w, a))
                            * dev_belief.prob(w)
                    })
                    .collect();
                coeffs.push(-1.0);
                lp.add_constraint(coeffs, Relation::Le, 0.0);
            }
            if let LpOutcome::Optimal { x, .. } = linprog::solve_lp(&lp, linprog::DEFAULT_LP_TOL)? {
                if x[eta] < -DEFAULT_TOL {
                    let policy = column_to_policy(instance, m, &x[..d])?;
                    let query = SimulationQuery::new(instance, policy, m)?;
                    if verify_separation(instance, &query, follower, deviators) {
                        return Ok(Some(query));
                    }
                }
            }
        }
        // Advance the deviator action assignment (odometer order).
        let mut pos = n_assigned;
        loop {
            if pos == 0 {
                return Ok(None);
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < a_count {
                break;
            }
            assignment[pos] = 0;
        }
    }
}

/// Mandatory post-check: the follower is inside the query's follow region
/// and replaying best responses puts every target in its own cell.
fn verify_separation(
    instance: &BPInstance,
    query: &SimulationQuery,
    follower: usize,
    deviators: &[usize],
) -> bool {
    if separation_region_test(instance, query, instance.belief(follower)) != SeparationResult::Inside
    {
        return false;
    }
    let mut responses = vec![query.message()];
    for &dev in deviators {
        let response = match model::best_response(
            instance,
            instance.belief(dev),
            query.policy(),
            query.message(),
            Some(query.message()),
        ) {
            Ok(a) => a,
            Err(_) => return false,
        };
        if responses.contains(&response) {
            return false;
        }
        responses.push(response);
    }
    true
}

/// Searches for a simulation query that type `tau` follows while type
/// `tau_prime` strictly deviates. `None` means no action pair admits a
/// separating query.
pub fn find_separating_query(
    instance: &BPInstance,
    tau: usize,
    tau_prime: usize,
) -> Result<Option<SimulationQuery>, OracleError> {
    separating_query_search(instance, tau, &[tau_prime])
}

/// n-way generalization: the first target follows the query while every
/// other target strictly deviates to its assigned action. The action-tuple
/// search is exponential in the number of targets, hence the cap.
pub fn find_separating_query_n(
    instance: &BPInstance,
    targets: &[usize],
) -> Result<Option<SimulationQuery>, OracleError> {
    find_separating_query_n_with_cap(instance, targets, DEFAULT_SEPARATION_TARGET_CAP)
}

pub fn find_separating_query_n_with_cap(
    instance: &BPInstance,
    targets: &[usize],
    cap: usize,
) -> Result<Option<SimulationQuery>, OracleError> {
    if targets.len() < 2 {
        return Err(ModelError::DimensionMismatch(
            "need at least two separation targets".into(),
        )
        .into());
    }
    if targets.len() > cap {
        return Err(OracleError::CapExceeded { targets: targets.len(), cap });
    }
    separating_query_search(instance, targets[0], &targets[1..])
}

/// A family of feasible subsets: every intersection of at most `K` query
/// cells that contains some type's belief, plus the full set. Each subset
/// records one witnessing (type, query list) pair.
#[derive(Debug, Clone)]
pub struct FeasibleSubsetFamily {
    subsets: Vec<TypeSubset>,
    witnesses: BTreeMap<TypeSubset, (usize, Vec<usize>)>,
}

impl FeasibleSubsetFamily {
    pub fn subsets(&self) -> &[TypeSubset] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn contains(&self, subset: &TypeSubset) -> bool {
        self.witnesses.contains_key(subset)
    }

    /// The recorded (witness type, query index list) for a subset.
    pub fn witness(&self, subset: &TypeSubset) -> Option<&(usize, Vec<usize>)> {
        self.witnesses.get(subset)
    }
}

/// Enumerates the feasible subsets reachable with at most `budget` queries
/// with the default family cap.
pub fn enumerate_feasible_subsets(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: usize,
) -> Result<FeasibleSubsetFamily, OracleError> {
    enumerate_feasible_subsets_with_cap(instance, queries, budget, DEFAULT_FAMILY_CAP)
}

pub fn enumerate_feasible_subsets_with_cap(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: usize,
    cap: usize,
) -> Result<FeasibleSubsetFamily, OracleError> {
    let t_count = instance.type_count();
    let full = TypeSubset::full(t_count);
    let mut witnesses: BTreeMap<TypeSubset, (usize, Vec<usize>)> = BTreeMap::new();
    witnesses.insert(full.clone(), (0, Vec::new()));
    for tau in 0..t_count {
        // Breadth-first over subsets reachable for this witness type; every
        // cell along the way contains tau, so intersections stay non-empty.
        let mut seen: HashSet<TypeSubset> = HashSet::new();
        seen.insert(full.clone());
        let mut frontier: Vec<(TypeSubset, Vec<usize>)> = vec![(full.clone(), Vec::new())];
        for _ in 0..budget {
            let mut next = Vec::new();
            for (subset, chain) in &frontier {
                for (qi, query) in queries.iter().enumerate() {
                    let cell = query.cell_containing(tau);
                    let refined = subset
                        .intersect(cell)
                        .expect("cell containing tau intersects subset containing tau");
                    if seen.insert(refined.clone()) {
                        let mut new_chain = chain.clone();
                        new_chain.push(qi);
                        if !witnesses.contains_key(&refined) {
                            witnesses.insert(refined.clone(), (tau, new_chain.clone()));
                            if witnesses.len() > cap {
                                return Err(OracleError::ExplosionGuard { cap });
                            }
                        }
                        next.push((refined, new_chain));
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
    }
    let subsets: Vec<TypeSubset> = witnesses.keys().cloned().collect();
    Ok(FeasibleSubsetFamily { subsets, witnesses })
}

/// Common refinement of a set of partition queries: two types share a cell
/// iff they share a cell in every query. No queries means a single cell.
pub fn nonadaptive_partition(type_count: usize, queries: &[&PartitionQuery]) -> PartitionQuery {
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for t in 0..type_count {
        let key: Vec<usize> = queries
            .iter()
            .map(|q| {
                q.cells()
                    .iter()
                    .position(|c| c.contains(t))
                    .expect("partition covers every type")
            })
            .collect();
        groups.entry(key).or_default().push(t);
    }
    let cells = groups
        .into_values()
        .map(|ts| TypeSubset::new(ts, type_count).expect("non-empty group"))
        .collect();
    PartitionQuery::new(type_count, cells).expect("refinement is a partition")
}

/// The `type_count - 1` adjacent cut queries for a normalized two-state
/// instance: cut `c` (1-based) separates the `c` highest-belief types from
/// the rest.
pub fn canonical_cut_queries(instance: &BPInstance) -> Result<Vec<PartitionQuery>, OracleError> {
    if !instance.is_normalized_binary() {
        return Err(ModelError::NotBinary.into());
    }
    let t = instance.type_count();
    (1..t).map(|c| cut_query(t, c)).collect()
}

/// The single cut-after-`cut` query over `type_count` types (types are in
/// descending-belief order; `cut` counts the types left of the split).
pub fn cut_query(type_count: usize, cut: usize) -> Result<PartitionQuery, OracleError> {
    if cut == 0 || cut >= type_count {
        return Err(OracleError::InvalidPartition(format!(
            "cut {cut} out of range for {type_count} types"
        )));
    }
    PartitionQuery::new(
        type_count,
        vec![
            TypeSubset::new((0..cut).collect(), type_count).unwrap(),
            TypeSubset::new((cut..type_count).collect(), type_count).unwrap(),
        ],
    )
}

/// Canonicalizes a two-state simulation query to its cut index: thresholds
/// falling in the same gap between adjacent beliefs induce the same
/// partition. `None` when the query does not split the type set.
pub fn simulation_to_cut(
    instance: &BPInstance,
    query: &SimulationQuery,
) -> Result<Option<usize>, OracleError> {
    if !instance.is_normalized_binary() {
        return Err(ModelError::NotBinary.into());
    }
    let threshold = binary_threshold(query)?;
    // In the recommend-1 orientation a type follows iff p >= threshold; in
    // the recommend-0 orientation iff 1-p >= threshold.
    let follows = |p: f64| -> bool {
        if query.message() == 1 {
            p >= threshold
        } else {
            (1.0 - p) >= threshold
        }
    };
    let followers = (0..instance.type_count())
        .filter(|&t| follows(instance.binary_p(t)))
        .count();
    // Types are sorted by descending belief, so the follow set is a prefix
    // for message 1 and a suffix for message 0; either way the induced
    // partition is an adjacent cut.
    let cut = if query.message() == 1 {
        followers
    } else {
        instance.type_count() - followers
    };
    if cut == 0 || cut >= instance.type_count() {
        return Ok(None);
    }
    Ok(Some(cut))
}
