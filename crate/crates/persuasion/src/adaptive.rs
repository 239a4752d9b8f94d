//! Optimal adaptive query planning by backward induction over feasible
//! subsets, with a costly-query variant and a brute-force oracle for small
//! instances.
//!
//! Values are kept unnormalized (weighted by raw prior mass) throughout:
//! a query node's value is the plain sum of its children's values, since
//! conditional branch probabilities times conditional values telescope
//! into mass-weighted sums. This avoids divisions by small subset masses.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::messaging::{MessagingError, ValueCache};
use crate::model::{BPInstance, TypeSubset};
use crate::oracle::{self, OracleError, PartitionQuery};

/// Value-tie tolerance when comparing candidate queries.
const TIE_TOL: f64 = 1e-12;
/// Minimum net gain a costly query must clear to be worth asking.
const COSTLY_GAIN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("instance exceeds the brute-force caps (types <= {0}, queries <= {1}, budget <= {2})")]
    CapExceeded(usize, usize, usize),
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
    #[error("query costs must be finite and match the query list")]
    BadCosts,
}

/// What the sender does at a plan node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanAction {
    /// Ask the query with this index, then branch on the returned cell.
    Query(usize),
    /// Stop querying and message optimally for the current subset.
    Stop,
}

/// One node of an adaptive plan tree. Node values are unnormalized
/// (mass-weighted), so the root value is the overall expected utility.
#[derive(Debug, Clone)]
pub struct PlanNode {
    pub subset: TypeSubset,
    pub remaining_budget: usize,
    pub action: PlanAction,
    /// One child per non-empty intersection of the chosen query's cells
    /// with this node's subset; empty for `Stop`.
    pub children: Vec<PlanNode>,
    pub value: f64,
}

/// An adaptive querying plan: the decision tree plus the value table of
/// every memoized (subset, remaining budget) pair.
#[derive(Debug, Clone)]
pub struct AdaptivePlan {
    pub root: PlanNode,
    pub queries: Vec<PartitionQuery>,
    /// Per-query costs in the costly variant.
    pub costs: Option<Vec<f64>>,
    /// Unnormalized optimal value for each memoized (subset, budget) pair.
    pub table: BTreeMap<(TypeSubset, usize), f64>,
}

struct Planner<'a> {
    instance: &'a BPInstance,
    queries: &'a [PartitionQuery],
    costs: Option<&'a [f64]>,
    gain_tol: f64,
    cache: ValueCache<'a>,
    memo: BTreeMap<(TypeSubset, usize), (f64, Option<usize>)>,
}

impl<'a> Planner<'a> {
    fn new(
        instance: &'a BPInstance,
        queries: &'a [PartitionQuery],
        costs: Option<&'a [f64]>,
        gain_tol: f64,
    ) -> Self {
        Planner {
            instance,
            queries,
            costs,
            gain_tol,
            cache: ValueCache::new(instance),
            memo: BTreeMap::new(),
        }
    }

    /// Optimal unnormalized value and chosen query for `subset` with `k`
    /// queries left. Ties between queries break to the lowest index; a
    /// query is only chosen when it strictly beats stopping, and queries
    /// that do not refine the subset are skipped.
    fn best(&mut self, subset: &TypeSubset, k: usize) -> Result<(f64, Option<usize>), AdaptiveError> {
        if let Some(hit) = self.memo.get(&(subset.clone(), k)) {
            return Ok(*hit);
        }
        let stop_value = self.cache.value(subset)?;
        let mut decision = (stop_value, None);
        if k > 0 {
            let mut best_value = f64::NEG_INFINITY;
            let mut best_query = None;
            for (qi, query) in self.queries.iter().enumerate() {
                let cells = query.restrict_to(subset);
                if cells.len() <= 1 {
                    continue; // refines nothing here
                }
                let mut value = 0.0;
                for cell in &cells {
                    value += self.best(cell, k - 1)?.0;
                }
                if let Some(costs) = self.costs {
                    value -= costs[qi] * self.instance.subset_mass(subset);
                }
                if value > best_value + TIE_TOL {
                    best_value = value;
                    best_query = Some(qi);
                }
            }
            if best_query.is_some() && best_value > stop_value + self.gain_tol {
                decision = (best_value, best_query);
            }
        }
        self.memo.insert((subset.clone(), k), decision);
        Ok(decision)
    }

    fn build_node(&mut self, subset: &TypeSubset, k: usize) -> Result<PlanNode, AdaptiveError> {
        let (value, choice) = self.best(subset, k)?;
        match choice {
            None => Ok(PlanNode {
                subset: subset.clone(),
                remaining_budget: k,
                action: PlanAction::Stop,
                children: Vec::new(),
                value,
            }),
            Some(qi) => {
                let cells = self.queries[qi].restrict_to(subset);
                let children = cells
                    .iter()
                    .map(|cell| self.build_node(cell, k - 1))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(PlanNode {
                    subset: subset.clone(),
                    remaining_budget: k,
                    action: PlanAction::Query(qi),
                    children,
                    value,
                })
            }
        }
    }

    fn value_table(&self) -> BTreeMap<(TypeSubset, usize), f64> {
        self.memo
            .iter()
            .map(|(key, (value, _))| (key.clone(), *value))
            .collect()
    }
}

/// Computes the optimal adaptive querying plan for `budget` queries.
pub fn plan_adaptive(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: usize,
) -> Result<AdaptivePlan, AdaptiveError> {
    // Enumeration bounds the subproblem count and surfaces the explosion
    // guard before any LP work starts.
    oracle::enumerate_feasible_subsets(instance, queries, budget)?;
    let mut planner = Planner::new(instance, queries, None, TIE_TOL);
    let root = planner.build_node(&TypeSubset::full(instance.type_count()), budget)?;
    Ok(AdaptivePlan {
        root,
        queries: queries.to_vec(),
        costs: None,
        table: planner.value_table(),
    })
}

/// Costly variant: unlimited budget replaced by the depth bound
/// `min(T - 1, Q)`, with each query charging its cost. A query is asked
/// only when its net gain over stopping exceeds 1e-9.
pub fn plan_adaptive_costly(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    costs: &[f64],
) -> Result<AdaptivePlan, AdaptiveError> {
    if costs.len() != queries.len() || costs.iter().any(|c| !c.is_finite()) {
        return Err(AdaptiveError::BadCosts);
    }
    let depth = (instance.type_count().saturating_sub(1)).min(queries.len());
    oracle::enumerate_feasible_subsets(instance, queries, depth)?;
    let mut planner = Planner::new(instance, queries, Some(costs), COSTLY_GAIN_TOL);
    let root = planner.build_node(&TypeSubset::full(instance.type_count()), depth)?;
    Ok(AdaptivePlan {
        root,
        queries: queries.to_vec(),
        costs: Some(costs.to_vec()),
        table: planner.value_table(),
    })
}

/// Re-evaluates a plan from scratch: every leaf's optimal messaging value
/// is recomputed, every branch is re-derived from the stored query, and
/// costs are re-charged. Does not consult the plan's stored values.
pub fn evaluate_plan(instance: &BPInstance, plan: &AdaptivePlan) -> Result<f64, AdaptiveError> {
    let mut cache = ValueCache::new(instance);
    evaluate_node(instance, plan, &plan.root, &mut cache)
}

fn evaluate_node(
    instance: &BPInstance,
    plan: &AdaptivePlan,
    node: &PlanNode,
    cache: &mut ValueCache,
) -> Result<f64, AdaptiveError> {
    match node.action {
        PlanAction::Stop => {
            if !node.children.is_empty() {
                return Err(AdaptiveError::MalformedPlan("stop node with children".into()));
            }
            Ok(cache.value(&node.subset)?)
        }
        PlanAction::Query(qi) => {
            let query = plan
                .queries
                .get(qi)
                .ok_or_else(|| AdaptiveError::MalformedPlan(format!("query index {qi} out of range")))?;
            if node.remaining_budget == 0 {
                return Err(AdaptiveError::MalformedPlan("query node with zero budget".into()));
            }
            let cells = query.restrict_to(&node.subset);
            if cells.len() != node.children.len()
                || cells
                    .iter()
                    .zip(&node.children)
                    .any(|(cell, child)| cell != &child.subset)
            {
                return Err(AdaptiveError::MalformedPlan(
                    "children do not match the query's refinement".into(),
                ));
            }
            for child in &node.children {
                if child.remaining_budget != node.remaining_budget - 1 {
                    return Err(AdaptiveError::MalformedPlan("child budget mismatch".into()));
                }
            }
            let mut value = 0.0;
            for child in &node.children {
                value += evaluate_node(instance, plan, child, cache)?;
            }
            if let Some(costs) = &plan.costs {
                value -= costs[qi] * instance.subset_mass(&node.subset);
            }
            Ok(value)
        }
    }
}

/// Exhaustive enumeration of every adaptive strategy tree of depth at most
/// `budget`, as an independent oracle for [`plan_adaptive`]. Uses the
/// normalized (conditional-probability) recursion, unlike the planner.
/// Hard-capped to tiny instances.
pub fn brute_force_adaptive(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: usize,
) -> Result<f64, AdaptiveError> {
    const MAX_TYPES: usize = 5;
    const MAX_QUERIES: usize = 4;
    const MAX_BUDGET: usize = 2;
    if instance.type_count() > MAX_TYPES || queries.len() > MAX_QUERIES || budget > MAX_BUDGET {
        return Err(AdaptiveError::CapExceeded(MAX_TYPES, MAX_QUERIES, MAX_BUDGET));
    }
    let mut cache = ValueCache::new(instance);
    let full = TypeSubset::full(instance.type_count());
    let values = strategy_values(instance, queries, &mut cache, &full, budget)?;
    Ok(values
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Normalized expected values of every strategy for `subset` with `k`
/// queries left (stop now, or any query followed by any combination of
/// per-cell continuation strategies).
fn strategy_values(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    cache: &mut ValueCache,
    subset: &TypeSubset,
    k: usize,
) -> Result<Vec<f64>, AdaptiveError> {
    let mass = instance.subset_mass(subset);
    if mass <= 1e-15 {
        return Ok(vec![0.0]);
    }
    let mut out = vec![cache.value(subset)? / mass];
    if k == 0 {
        return Ok(out);
    }
    for query in queries {
        let cells = query.restrict_to(subset);
        let mut combos: Vec<f64> = vec![0.0];
        for cell in &cells {
            let cell_mass = instance.subset_mass(cell);
            let cell_values = strategy_values(instance, queries, cache, cell, k - 1)?;
            let mut extended = Vec::with_capacity(combos.len() * cell_values.len());
            for base in &combos {
                for v in &cell_values {
                    extended.push(base + v * cell_mass / mass);
                }
            }
            combos = extended;
        }
        out.extend(combos);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Belief;
    use crate::oracle::canonical_cut_queries;

    fn fig3() -> BPInstance {
        let (u_s, u_r) = BPInstance::canonical_binary_utilities();
        let types = [0.5, 0.4, 0.3, 0.2, 0.1]
            .iter()
            .map(|&p| Belief::binary(p).unwrap())
            .collect();
        BPInstance::new(u_s, u_r, types, vec![0.2, 0.01, 0.39, 0.2, 0.2]).unwrap()
    }

    #[test]
    fn fig3_budget_zero_stops() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive(&inst, &cuts, 0).unwrap();
        assert_eq!(plan.root.action, PlanAction::Stop);
        assert!((plan.root.value - 0.39575).abs() < 1e-12);
    }

    #[test]
    fn fig3_budget_one_cuts_after_three() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive(&inst, &cuts, 1).unwrap();
        assert_eq!(plan.root.action, PlanAction::Query(2)); // cut after index 3 (1-based)
        assert!((plan.root.value - 0.48120634920634924).abs() < 1e-12);
    }

    #[test]
    fn fig3_budget_two_structure() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive(&inst, &cuts, 2).unwrap();
        assert!((plan.root.value - 0.5605714285714286).abs() < 1e-12);
        assert_eq!(plan.root.action, PlanAction::Query(2));
        let left = &plan.root.children[0];
        let right = &plan.root.children[1];
        assert_eq!(left.action, PlanAction::Query(0)); // cut after 1
        assert_eq!(right.action, PlanAction::Query(3)); // cut after 4
    }

    #[test]
    fn plan_children_partition_probabilities() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive(&inst, &cuts, 2).unwrap();
        fn walk(inst: &BPInstance, node: &PlanNode) {
            if let PlanAction::Query(_) = node.action {
                let total: f64 = node
                    .children
                    .iter()
                    .map(|c| inst.subset_mass(&c.subset))
                    .sum();
                assert!((total - inst.subset_mass(&node.subset)).abs() < 1e-12);
                for c in &node.children {
                    walk(inst, c);
                }
            }
        }
        walk(&inst, &plan.root);
    }

    #[test]
    fn evaluate_matches_stored_value() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        for k in 0..=2 {
            let plan = plan_adaptive(&inst, &cuts, k).unwrap();
            let v = evaluate_plan(&inst, &plan).unwrap();
            assert!((v - plan.root.value).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluate_hand_built_plans() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();

        let stop_only = AdaptivePlan {
            root: PlanNode {
                subset: TypeSubset::full(5),
                remaining_budget: 0,
                action: PlanAction::Stop,
                children: Vec::new(),
                value: f64::NAN, // evaluation ignores stored values
            },
            queries: cuts.clone(),
            costs: None,
            table: BTreeMap::new(),
        };
        let v = evaluate_plan(&inst, &stop_only).unwrap();
        assert!((v - 0.39575).abs() < 1e-12);

        // Suboptimal root query: cut after 4 with budget 1.
        let leaf = |subset: TypeSubset| PlanNode {
            subset,
            remaining_budget: 0,
            action: PlanAction::Stop,
            children: Vec::new(),
            value: f64::NAN,
        };
        let suboptimal = AdaptivePlan {
            root: PlanNode {
                subset: TypeSubset::full(5),
                remaining_budget: 1,
                action: PlanAction::Query(3),
                children: vec![
                    leaf(TypeSubset::new(vec![0, 1, 2, 3], 5).unwrap()),
                    leaf(TypeSubset::new(vec![4], 5).unwrap()),
                ],
                value: f64::NAN,
            },
            queries: cuts,
            costs: None,
            table: BTreeMap::new(),
        };
        let v = evaluate_plan(&inst, &suboptimal).unwrap();
        assert!((v - 0.43575).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn evaluate_rejects_malformed_plans() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let bad = AdaptivePlan {
            root: PlanNode {
                subset: TypeSubset::full(5),
                remaining_budget: 1,
                action: PlanAction::Query(0),
                children: vec![], // missing children
                value: 0.0,
            },
            queries: cuts,
            costs: None,
            table: BTreeMap::new(),
        };
        assert!(matches!(
            evaluate_plan(&inst, &bad),
            Err(AdaptiveError::MalformedPlan(_))
        ));
    }

    #[test]
    fn costly_fig3_penny_per_query() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive_costly(&inst, &cuts, &[0.01; 4]).unwrap();
        assert!((plan.root.value - 0.5405714285714286).abs() < 1e-12, "got {}", plan.root.value);
        assert_eq!(plan.root.action, PlanAction::Query(2));
        // Third level stops: the gain from splitting {1,2} (0-based indices
        // of the second and third types) is below the cost.
        let left = &plan.root.children[0];
        assert_eq!(left.action, PlanAction::Query(0));
        for grandchild in &left.children {
            assert_eq!(grandchild.action, PlanAction::Stop);
        }
    }

    #[test]
    fn costly_fig3_expensive_queries_stop() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive_costly(&inst, &cuts, &[1.0; 4]).unwrap();
        assert_eq!(plan.root.action, PlanAction::Stop);
        assert!((plan.root.value - 0.39575).abs() < 1e-12);
    }

    #[test]
    fn costly_fig3_free_queries_fully_separate() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive_costly(&inst, &cuts, &[0.0; 4]).unwrap();
        assert!((plan.root.value - 0.562).abs() < 1e-12);
        // Zero costs coincide with the budgeted planner at full depth.
        let budgeted = plan_adaptive(&inst, &cuts, 4).unwrap();
        assert!((plan.root.value - budgeted.root.value).abs() < 1e-12);
    }

    #[test]
    fn budget_monotonicity_in_table() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        let plan = plan_adaptive(&inst, &cuts, 2).unwrap();
        for ((subset, k), value) in &plan.table {
            if let Some(next) = plan.table.get(&(subset.clone(), k + 1)) {
                assert!(next >= &(value - 1e-12));
            }
        }
    }

    #[test]
    fn brute_force_matches_planner_on_fig3() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        for k in 0..=2 {
            let plan = plan_adaptive(&inst, &cuts, k).unwrap();
            let brute = brute_force_adaptive(&inst, &cuts, k).unwrap();
            assert!((plan.root.value - brute).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn brute_force_caps() {
        let inst = fig3();
        let cuts = canonical_cut_queries(&inst).unwrap();
        assert!(matches!(
            brute_force_adaptive(&inst, &cuts, 3),
            Err(AdaptiveError::CapExceeded(..))
        ));
    }
}
