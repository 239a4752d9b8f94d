//! Non-adaptive query planning: the two-state interval dynamic program and
//! its costly variant, greedy selection with its costly variant, an exact
//! brute-force oracle, marginal-gain utilities, the set-cover reduction
//! behind the hardness of the general problem, and generators for the
//! instances on which greedy provably struggles.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::messaging::{MessagingError, ValueCache};
use crate::model::{BPInstance, Belief, ModelError, TypeSubset};
use crate::oracle::{self, OracleError, PartitionQuery};

/// Value-tie tolerance for deterministic argmax decisions.
const TIE_TOL: f64 = 1e-12;
/// Cap on the number of query subsets the brute-force oracle may visit.
pub const BRUTE_FORCE_CAP: usize = 100_000;

#[derive(Debug, Error)]
pub enum NonAdaptiveError {
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("brute force would visit {subsets} query subsets, above the cap of {cap}")]
    CapExceeded { subsets: usize, cap: usize },
    #[error("costs must be finite and match the query list")]
    BadCosts,
    #[error("parameter violation: {0}")]
    ParameterViolation(String),
}

/// Result of a non-adaptive planning call: the chosen queries (canonical
/// cut indices for the two-state dynamic programs, indices into the given
/// query list otherwise), the achieved value net of any costs, and the
/// optimal messaging value of each cell of the induced partition.
#[derive(Debug, Clone)]
pub struct NonAdaptivePlanResult {
    pub chosen: Vec<usize>,
    pub value: f64,
    pub cells: Vec<(TypeSubset, f64)>,
}

/// An instance of the non-adaptive decision problem: can `budget` queries
/// reach expected utility at least `target`?
#[derive(Debug, Clone)]
pub struct DecisionInstance {
    pub instance: BPInstance,
    pub queries: Vec<PartitionQuery>,
    pub budget: usize,
    pub target: f64,
}

fn interval_subset(from: usize, to: usize, t_count: usize) -> TypeSubset {
    TypeSubset::new((from..to).collect(), t_count).expect("non-empty interval")
}

fn lex_less(a: &[usize], b: &[usize]) -> bool {
    a < b
}

/// Shared skeleton of the two-state interval DP. Types are in descending
/// belief order, so any set of adjacent cuts carves the type set into
/// intervals; `dp[j][k]` is the best value on the first `j` types using at
/// most `k` cuts, with cut `c` charged `cost(c)`. Ties prefer the
/// lexicographically smallest cut set.
fn interval_dp(
    instance: &BPInstance,
    budget: usize,
    cost: impl Fn(usize) -> f64,
) -> Result<(Vec<usize>, f64), NonAdaptiveError> {
    let t = instance.type_count();
    let mut cache = ValueCache::new(instance);
    let mut ival = vec![vec![0.0; t + 1]; t + 1];
    for from in 0..t {
        for to in (from + 1)..=t {
            ival[from][to] = cache.value(&interval_subset(from, to, t))?;
        }
    }
    // dp[j][k]: (value, sorted cut list) for prefix of length j.
    let mut dp: Vec<Vec<(f64, Vec<usize>)>> = vec![vec![(0.0, Vec::new()); budget + 1]; t + 1];
    for j in 1..=t {
        dp[j][0] = (ival[0][j], Vec::new());
    }
    for k in 1..=budget {
        for j in 1..=t {
            let mut best = dp[j][k - 1].clone(); // leave remaining budget unused
            for c in 1..j {
                let (left_value, left_cuts) = &dp[c][k - 1];
                let value = left_value + ival[c][j] - cost(c);
                let mut cuts = left_cuts.clone();
                cuts.push(c);
                if value > best.0 + TIE_TOL
                    || ((value - best.0).abs() <= TIE_TOL && lex_less(&cuts, &best.1))
                {
                    best = (value, cuts);
                }
            }
            dp[j][k] = best;
        }
    }
    let (value, cuts) = dp[t][budget].clone();
    Ok((cuts, value))
}

fn cut_result(
    instance: &BPInstance,
    cuts: Vec<usize>,
    value: f64,
) -> Result<NonAdaptivePlanResult, NonAdaptiveError> {
    let t = instance.type_count();
    let mut cache = ValueCache::new(instance);
    let mut boundaries: Vec<usize> = Vec::with_capacity(cuts.len() + 2);
    boundaries.push(0);
    boundaries.extend(cuts.iter().copied());
    boundaries.push(t);
    let mut cells = Vec::new();
    for pair in boundaries.windows(2) {
        let subset = interval_subset(pair[0], pair[1], t);
        let v = cache.value(&subset)?;
        cells.push((subset, v));
    }
    Ok(NonAdaptivePlanResult { chosen: cuts, value, cells })
}

/// Optimal non-adaptive plan for a normalized two-state instance over the
/// canonical adjacent-cut queries, by dynamic programming on prefixes.
pub fn plan_nonadaptive_binary(
    instance: &BPInstance,
    budget: usize,
) -> Result<NonAdaptivePlanResult, NonAdaptiveError> {
    if !instance.is_normalized_binary() {
        return Err(ModelError::NotBinary.into());
    }
    let budget = budget.min(instance.type_count().saturating_sub(1));
    let (cuts, value) = interval_dp(instance, budget, |_| 0.0)?;
    cut_result(instance, cuts, value)
}

/// Costly variant of the cut dynamic program: the budget is implicitly
/// `T - 1` and each chosen cut `c` subtracts `costs[c - 1]` from the value.
pub fn plan_nonadaptive_binary_costly(
    instance: &BPInstance,
    costs: &[f64],
) -> Result<NonAdaptivePlanResult, NonAdaptiveError> {
    if !instance.is_normalized_binary() {
        return Err(ModelError::NotBinary.into());
    }
    let t = instance.type_count();
    if costs.len() != t - 1 || costs.iter().any(|c| !c.is_finite()) {
        return Err(NonAdaptiveError::BadCosts);
    }
    let (cuts, value) = interval_dp(instance, t - 1, |c| costs[c - 1])?;
    cut_result(instance, cuts, value)
}

/// Value of the partition induced by a set of queries: the sum of each
/// cell's unnormalized optimal messaging value.
fn partition_value(
    cache: &mut ValueCache,
    queries: &[&PartitionQuery],
) -> Result<(f64, Vec<(TypeSubset, f64)>), NonAdaptiveError> {
    let t = cache.instance().type_count();
    let partition = oracle::nonadaptive_partition(t, queries);
    let mut total = 0.0;
    let mut cells = Vec::with_capacity(partition.cells().len());
    for cell in partition.cells() {
        let v = cache.value(cell)?;
        total += v;
        cells.push((cell.clone(), v));
    }
    Ok((total, cells))
}

/// Greedy non-adaptive selection: for `budget` rounds, add the query whose
/// refined partition is worth the most; ties break to the lowest index.
pub fn greedy(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: usize,
) -> Result<NonAdaptivePlanResult, NonAdaptiveError> {
    let mut cache = ValueCache::new(instance);
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..budget.min(queries.len()) {
        let mut best: Option<(usize, f64)> = None;
        for qi in 0..queries.len() {
            if chosen.contains(&qi) {
                continue;
            }
            let refs: Vec<&PartitionQuery> = chosen
                .iter()
                .chain(std::iter::once(&qi))
                .map(|&i| &queries[i])
                .collect();
            let (value, _) = partition_value(&mut cache, &refs)?;
            if best.map_or(true, |(_, bv)| value > bv + TIE_TOL) {
                best = Some((qi, value));
            }
        }
        match best {
            Some((qi, _)) => chosen.push(qi),
            None => break,
        }
    }
    let refs: Vec<&PartitionQuery> = chosen.iter().map(|&i| &queries[i]).collect();
    let (value, cells) = partition_value(&mut cache, &refs)?;
    Ok(NonAdaptivePlanResult { chosen, value, cells })
}

/// Greedy selection under a uniform per-query cost: keep adding the best
/// query while its marginal value stays at least the cost, for at most
/// `min(T, Q) - 1` rounds. The result's value is net of costs.
pub fn greedy_costly(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    cost: f64,
) -> Result<NonAdaptivePlanResult, NonAdaptiveError> {
    if !cost.is_finite() || cost < 0.0 {
        return Err(NonAdaptiveError::BadCosts);
    }
    let rounds = instance.type_count().min(queries.len()).saturating_sub(1);
    let mut cache = ValueCache::new(instance);
    let mut chosen: Vec<usize> = Vec::new();
    let mut current = {
        let (v, _) = partition_value(&mut cache, &[])?;
        v
    };
    for _ in 0..rounds {
        let mut best: Option<(usize, f64)> = None;
        for qi in 0..queries.len() {
            if chosen.contains(&qi) {
                continue;
            }
            let refs: Vec<&PartitionQuery> = chosen
                .iter()
                .chain(std::iter::once(&qi))
                .map(|&i| &queries[i])
                .collect();
            let (value, _) = partition_value(&mut cache, &refs)?;
            if best.map_or(true, |(_, bv)| value > bv + TIE_TOL) {
                best = Some((qi, value));
            }
        }
        let Some((qi, value)) = best else { break };
        if value - current < cost - 1e-9 {
            break;
        }
        chosen.push(qi);
        current = value;
    }
    let refs: Vec<&PartitionQuery> = chosen.iter().map(|&i| &queries[i]).collect();
    let (gross, cells) = partition_value(&mut cache, &refs)?;
    Ok(NonAdaptivePlanResult {
        value: gross - cost * chosen.len() as f64,
        chosen,
        cells,
    })
}

fn count_subsets_up_to(n: usize, k: usize) -> usize {
    let mut total: usize = 0;
    for size in 0..=k.min(n) {
        let mut binom: usize = 1;
        for i in 0..size {
            binom = binom.saturating_mul(n - i) / (i + 1);
        }
        total = total.saturating_add(binom);
    }
    total
}

/// Exact optimum by enumerating every query subset of size at most
/// `budget`. Ties prefer the lexicographically smallest index set.
pub fn brute_force_nonadaptive(
    instance: &BPInstance,
    queries: &[PartitionQuery],
    budget: usize,
) -> Result<NonAdaptivePlanResult, NonAdaptiveError> {
    let subsets = count_subsets_up_to(queries.len(), budget);
    if subsets > BRUTE_FORCE_CAP {
        return Err(NonAdaptiveError::CapExceeded { subsets, cap: BRUTE_FORCE_CAP });
    }
    let mut cache = ValueCache::new(instance);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut combo: Vec<usize> = Vec::new();
    enumerate_combos(queries.len(), budget, 0, &mut combo, &mut |chosen| {
        let refs: Vec<&PartitionQuery> = chosen.iter().map(|&i| &queries[i]).collect();
        let (value, _) = partition_value(&mut cache, &refs)?;
        let better = match &best {
            None => true,
            Some((bv, bc)) => {
                value > bv + TIE_TOL || ((value - bv).abs() <= TIE_TOL && lex_less(chosen, bc))
            }
        };
        if better {
            best = Some((value, chosen.to_vec()));
        }
        Ok(())
    })?;
    let (value, chosen) = best.expect("empty set is always enumerated");
    let refs: Vec<&PartitionQuery> = chosen.iter().map(|&i| &queries[i]).collect();
    let (_, cells) = partition_value(&mut cache, &refs)?;
    Ok(NonAdaptivePlanResult { chosen, value, cells })
}

fn enumerate_combos(
    n: usize,
    remaining: usize,
    start: usize,
    combo: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]) -> Result<(), NonAdaptiveError>,
) -> Result<(), NonAdaptiveError> {
    visit(combo)?;
    if remaining == 0 {
        return Ok(());
    }
    for i in start..n {
        combo.push(i);
        enumerate_combos(n, remaining - 1, i + 1, combo, visit)?;
        combo.pop();
    }
    Ok(())
}

/// Marginal value of adding `query` to an existing set of queries.
pub fn marginal_gain(
    instance: &BPInstance,
    base: &[PartitionQuery],
    query: &PartitionQuery,
) -> Result<f64, NonAdaptiveError> {
    let mut cache = ValueCache::new(instance);
    let base_refs: Vec<&PartitionQuery> = base.iter().collect();
    let (before, _) = partition_value(&mut cache, &base_refs)?;
    let extended: Vec<&PartitionQuery> = base.iter().chain(std::iter::once(query)).collect();
    let (after, _) = partition_value(&mut cache, &extended)?;
    Ok(after - before)
}

/// Reduces a set-cover instance to a non-adaptive decision instance on a
/// normalized two-state persuasion problem: one type per element plus a
/// leftover type, one query per subset (isolating the subset's elements),
/// uniform prior, distinct beliefs on an arithmetic grid, and the
/// full-separation value as the target. Covering the universe with
/// `budget` subsets is then exactly achieving the target utility.
pub fn reduce_set_cover(
    universe: &[String],
    subsets: &[Vec<String>],
    budget: usize,
) -> Result<DecisionInstance, NonAdaptiveError> {
    if universe.is_empty() {
        return Err(NonAdaptiveError::ParameterViolation("empty universe".into()));
    }
    let position = |e: &String| -> Result<usize, NonAdaptiveError> {
        universe
            .iter()
            .position(|u| u == e)
            .ok_or_else(|| {
                NonAdaptiveError::ParameterViolation(format!("element {e:?} not in the universe"))
            })
    };
    let t_count = universe.len() + 1;
    // Type 0 is the leftover type; element i maps to type i + 1. Beliefs
    // descend on an arithmetic grid from 1/2 so every type has a distinct
    // optimal policy.
    let types: Vec<Belief> = (0..t_count)
        .map(|i| Belief::binary(0.5 - i as f64 / (4.0 * t_count as f64)))
        .collect::<Result<_, _>>()?;
    let prior = vec![1.0 / t_count as f64; t_count];
    let (u_s, u_r) = BPInstance::canonical_binary_utilities();
    let instance = BPInstance::new(u_s, u_r, types, prior)?;
    let target: f64 = (0..t_count)
        .map(|i| instance.prior_mass(i) * 2.0 * instance.binary_p(i))
        .sum();
    let mut queries = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let mut members = BTreeSet::new();
        for e in subset {
            members.insert(position(e)? + 1);
        }
        let mut cells: Vec<TypeSubset> =
            members.iter().map(|&t| TypeSubset::singleton(t)).collect();
        let complement: Vec<usize> = (0..t_count).filter(|t| !members.contains(t)).collect();
        if !complement.is_empty() {
            cells.push(TypeSubset::new(complement, t_count)?);
        }
        queries.push(PartitionQuery::new(t_count, cells)?);
    }
    Ok(DecisionInstance { instance, queries, budget, target })
}

/// Decides a non-adaptive decision instance by brute force.
pub fn decide_nonadaptive(decision: &DecisionInstance) -> Result<bool, NonAdaptiveError> {
    let result = brute_force_nonadaptive(&decision.instance, &decision.queries, decision.budget)?;
    Ok(result.value >= decision.target - 1e-9)
}

/// Guessing-game instance on which query value is not submodular. There
/// are `2^L` "identity" states plus a null state; each of the `2^L` types
/// concentrates on its identity state. The receiver gains 1 for a correct
/// non-null guess, loses `penalty` for a wrong non-null guess, and gets 0
/// for the null guess; the sender wants any non-null guess. Returned with
/// the `L` bit queries (query `j` splits the types on bit `j` of their
/// index), under a uniform second-order prior.
///
/// Belief weights are chosen so that the menu LP has value exactly 1 on
/// singleton subsets and exactly `1 - g`, with
/// `g = 1 / ((penalty + 1) * (2^L + 1))`, on every pooled subset of two or
/// more types: the null-state mass is `1/(penalty+1)`, off-identity states
/// get `penalty/((penalty+1)(2^L+1))` each, and the identity state twice
/// that. Any single bit query therefore has zero marginal value, while
/// the last one completes the separation and gains `g`.
pub fn make_parity_counterexample(
    bits: usize,
    penalty: f64,
) -> Result<(BPInstance, Vec<PartitionQuery>), NonAdaptiveError> {
    let (instance, _) = parity_instance(bits, penalty)?;
    let queries = bit_queries(bits);
    Ok((instance, queries))
}

/// The gap `g` between the separated and pooled per-type values of the
/// counterexample instance.
pub fn parity_gap(bits: usize, penalty: f64) -> f64 {
    let m = (1usize << bits) as f64;
    1.0 / ((penalty + 1.0) * (m + 1.0))
}

fn parity_instance(bits: usize, penalty: f64) -> Result<(BPInstance, usize), NonAdaptiveError> {
    if bits < 1 {
        return Err(NonAdaptiveError::ParameterViolation("need at least one bit".into()));
    }
    if !(penalty > (1usize << (bits - 1)) as f64) {
        return Err(NonAdaptiveError::ParameterViolation(format!(
            "penalty must exceed 2^(L-1) = {}",
            1usize << (bits - 1)
        )));
    }
    let m = 1usize << bits; // identity states / types
    let d = m + 1; // plus the null state
    let null = m;
    let null_mass = 1.0 / (penalty + 1.0);
    let off = penalty / ((penalty + 1.0) * (m as f64 + 1.0));
    let diag = 2.0 * off;
    let mut types = Vec::with_capacity(m);
    for i in 0..m {
        let mut probs = vec![off; d];
        probs[null] = null_mass;
        probs[i] = diag;
        // Absorb float residue so the belief sums to 1 exactly.
        let sum: f64 = probs.iter().sum();
        probs[i] += 1.0 - sum;
        types.push(Belief::new(probs)?);
    }
    let prior = vec![1.0 / m as f64; m];
    // Sender wants any non-null guess; receiver gains 1 for the correct
    // non-null guess, loses `penalty` for a wrong one, 0 for passing.
    let u_s: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|a| if a == null { 0.0 } else { 1.0 }).collect())
        .collect();
    let u_r: Vec<Vec<f64>> = (0..d)
        .map(|w| {
            (0..d)
                .map(|a| {
                    if a == null {
                        0.0
                    } else if a == w {
                        1.0
                    } else {
                        -penalty
                    }
                })
                .collect()
        })
        .collect();
    Ok((BPInstance::new(u_s, u_r, types, prior)?, m))
}

fn bit_queries(bits: usize) -> Vec<PartitionQuery> {
    let m = 1usize << bits;
    (0..bits)
        .map(|j| {
            let zeros: Vec<usize> = (0..m).filter(|i| (i >> j) & 1 == 0).collect();
            let ones: Vec<usize> = (0..m).filter(|i| (i >> j) & 1 == 1).collect();
            PartitionQuery::new(
                m,
                vec![
                    TypeSubset::new(zeros, m).unwrap(),
                    TypeSubset::new(ones, m).unwrap(),
                ],
            )
            .unwrap()
        })
        .collect()
}

/// The counterexample instance plus equality queries ("is the type exactly
/// j?") appended after the bit queries. With budget `L`, greedy prefers
/// the equality queries' immediate gains and ends with only `L` types
/// identified, for value `L/2^L + (1 - L/2^L) * (1 - g)`, while the `L`
/// bit queries would have separated everything for value 1.
pub fn make_greedy_trap(
    bits: usize,
    penalty: f64,
) -> Result<(BPInstance, Vec<PartitionQuery>), NonAdaptiveError> {
    let (instance, m) = parity_instance(bits, penalty)?;
    let mut queries = bit_queries(bits);
    for j in 0..m {
        let complement: Vec<usize> = (0..m).filter(|&i| i != j).collect();
        queries.push(PartitionQuery::new(
            m,
            vec![
                TypeSubset::singleton(j),
                TypeSubset::new(complement, m).unwrap(),
            ],
        )?);
    }
    Ok((instance, queries))
}
