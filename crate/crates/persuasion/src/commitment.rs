//! Query commitment for three-type two-state instances: the sender commits
//! to a state-informed query (which threshold to ask depends on the
//! realized state) and a subset-informed messaging policy (the message
//! distribution depends on the query's answer). Any triple of per-type
//! incentive-compatible policies can be implemented simultaneously this
//! way; the feasible point is found by a 32-variable linear program.

use thiserror::Error;

use crate::linprog::{self, LinearProgram, LpOutcome, Relation};
use crate::messaging::{MenuPolicy, MessagingError};
use crate::model::{self, BPInstance, Belief, MessagingPolicy, ModelError, TypeSubset};
use crate::oracle::{self, OracleError, PartitionQuery, SimulationQuery};

#[derive(Debug, Error)]
pub enum CommitmentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("input policy for type {0} is not incentive-compatible for that type")]
    NotBic(usize),
    #[error("parameter violation: {0}")]
    ParameterViolation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// A querying policy that may depend on the realized state: one partition
/// query per state.
#[derive(Debug, Clone)]
pub struct StateInformedQueryPolicy {
    pub per_state: Vec<PartitionQuery>,
}

impl StateInformedQueryPolicy {
    pub fn query_for(&self, state: usize) -> &PartitionQuery {
        &self.per_state[state]
    }
}

/// One information partition: a realized state together with the cell the
/// state-informed query returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoPartition {
    pub state: usize,
    pub cell: TypeSubset,
}

/// Number of menu messages in the three-type encoding (one bit per type).
pub const MENU_MESSAGES: usize = 8;
/// Number of information partitions in the three-type setup.
pub const PARTITIONS: usize = 4;

/// A subset-informed messaging policy for the three-type setup: a message
/// distribution over the 8 three-bit menu messages for each of the 4
/// information partitions. Bit `i` of a message is the action recommended
/// to the rank-`i` type (ranks sort the types by ascending belief).
#[derive(Debug, Clone)]
pub struct SubsetInformedPolicy {
    /// The four information partitions, in the fixed order:
    /// (state 0, {low}), (state 0, {mid, high}),
    /// (state 1, {low, mid}), (state 1, {high}).
    pub partitions: Vec<InfoPartition>,
    /// `sigma[partition][message]`.
    pub sigma: Vec<Vec<f64>>,
    /// `rank_of[original type index]` = rank in ascending-belief order.
    pub rank_of: Vec<usize>,
    /// The state-informed query policy the partitions came from.
    pub query_policy: StateInformedQueryPolicy,
}

/// Bit `rank` of menu message `m`, written so that message `0b111 = 7`
/// recommends action 1 to every type and bit 2 belongs to the low type.
fn menu_bit(message: usize, rank: usize) -> usize {
    (message >> (2 - rank)) & 1
}

impl SubsetInformedPolicy {
    /// The information partition the rank-`rank` type experiences at
    /// `state` (its index into `partitions`).
    fn partition_for(rank: usize, state: usize) -> usize {
        match (state, rank) {
            (0, 0) => 0,          // low type alone
            (0, _) => 1,          // mid and high pooled
            (1, 2) => 3,          // high type alone
            (1, _) => 2,          // low and mid pooled
            _ => unreachable!("two states"),
        }
    }

    /// The marginal probability, from the rank-`rank` type's point of
    /// view, of being told action `action` in `state`.
    pub fn implemented_marginal(&self, rank: usize, state: usize, action: usize) -> f64 {
        let part = Self::partition_for(rank, state);
        (0..MENU_MESSAGES)
            .filter(|&m| menu_bit(m, rank) == action)
            .map(|m| self.sigma[part][m])
            .sum()
    }

    /// Expected sender utility when every receiver best-responds to her
    /// view of the committed policy (ties toward the recommendation).
    pub fn expected_value(&self, instance: &BPInstance) -> f64 {
        let mut total = 0.0;
        for t in 0..instance.type_count() {
            let rank = self.rank_of[t];
            let p = instance.binary_p(t);
            // The receiver's view of the message distribution per state.
            let view = |m: usize, state: usize| -> f64 {
                self.sigma[Self::partition_for(rank, state)][m]
            };
            for state in 0..2 {
                let state_prob = if state == 1 { p } else { 1.0 - p };
                for m in 0..MENU_MESSAGES {
                    let send = view(m, state);
                    if send <= 0.0 {
                        continue;
                    }
                    let w1 = view(m, 1) * p;
                    let w0 = view(m, 0) * (1.0 - p);
                    let action = if (w1 - w0).abs() <= 1e-9 {
                        menu_bit(m, rank) // indifferent: follow the recommendation
                    } else {
                        usize::from(w1 > w0)
                    };
                    if action == 1 {
                        total += instance.prior_mass(t) * state_prob * send;
                    }
                }
            }
        }
        total
    }
}

/// Ranks the three types by ascending belief. Requires pairwise-distinct
/// beliefs at or below 1/2.
fn ascending_ranks(instance: &BPInstance) -> Result<Vec<usize>, CommitmentError> {
    if !instance.is_canonical_binary() || instance.type_count() != 3 {
        return Err(ModelError::NotBinary.into());
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| instance.binary_p(a).partial_cmp(&instance.binary_p(b)).unwrap());
    let ps: Vec<f64> = order.iter().map(|&t| instance.binary_p(t)).collect();
    if ps[2] > 0.5 {
        return Err(CommitmentError::ParameterViolation(
            "all three beliefs must be at most 1/2".into(),
        ));
    }
    let mut rank_of = vec![0usize; 3];
    for (rank, &t) in order.iter().enumerate() {
        rank_of[t] = rank;
    }
    Ok(rank_of)
}

/// The state-informed query policy of the three-type construction: with
/// beliefs `p_low < p_mid < p_high`, state 0 asks the threshold between
/// the low and mid beliefs and state 1 the threshold between mid and high
/// (thresholds sit at the midpoints of the open intervals).
pub fn threshold_query_policy(
    instance: &BPInstance,
) -> Result<(StateInformedQueryPolicy, Vec<usize>), CommitmentError> {
    let rank_of = ascending_ranks(instance)?;
    let by_rank = |r: usize| rank_of.iter().position(|&x| x == r).unwrap();
    let (low, mid, high) = (by_rank(0), by_rank(1), by_rank(2));
    let t = 3;
    let q_state0 = PartitionQuery::new(
        t,
        vec![
            TypeSubset::singleton(low),
            TypeSubset::new(vec![mid, high], t)?,
        ],
    )?;
    let q_state1 = PartitionQuery::new(
        t,
        vec![
            TypeSubset::new(vec![low, mid], t)?,
            TypeSubset::singleton(high),
        ],
    )?;
    Ok((
        StateInformedQueryPolicy { per_state: vec![q_state0, q_state1] },
        rank_of,
    ))
}

fn check_input_bic(
    instance: &BPInstance,
    type_index: usize,
    policy: &MessagingPolicy,
) -> Result<(), CommitmentError> {
    if policy.state_count() != 2 || policy.message_count() != 2 {
        return Err(ModelError::DimensionMismatch(
            "per-type policies must be 2x2 action-valued".into(),
        )
        .into());
    }
    let subset = TypeSubset::singleton(type_index);
    let menu = MenuPolicy::new(instance, subset.clone(), vec![vec![0], vec![1]], policy.clone())?;
    let report = model::is_bic(instance, &subset, &menu, 1e-9)?;
    if report.holds() {
        Ok(())
    } else {
        Err(CommitmentError::NotBic(type_index))
    }
}

/// Finds a subset-informed messaging policy that simultaneously implements
/// the three given per-type policies (each must be incentive-compatible
/// for its own type). The policy is a feasible point of the constraint
/// system: 12 incentive inequalities, 4 normalizations, and 6 marginal
/// equalities tying each type's view to its target policy; expected sender
/// utility is maximized as a tie-breaking objective.
pub fn solve_commitment(
    instance: &BPInstance,
    policies: &[MessagingPolicy; 3],
) -> Result<SubsetInformedPolicy, CommitmentError> {
    let (query_policy, rank_of) = threshold_query_policy(instance)?;
    for t in 0..3 {
        check_input_bic(instance, t, &policies[t])?;
    }
    let by_rank = |r: usize| rank_of.iter().position(|&x| x == r).unwrap();
    let p_rank: Vec<f64> = (0..3).map(|r| instance.binary_p(by_rank(r))).collect();
    // sigma_i(1|state) per rank.
    let send1: Vec<[f64; 2]> = (0..3)
        .map(|r| {
            let pol = &policies[by_rank(r)];
            [pol.prob(1, 0), pol.prob(1, 1)]
        })
        .collect();

    // Variables: x[partition * 8 + message].
    let n_vars = PARTITIONS * MENU_MESSAGES;
    let var = |part: usize, m: usize| part * MENU_MESSAGES + m;
    // Partition order: 0 = (state 0, {low}), 1 = (state 0, {mid, high}),
    // 2 = (state 1, {low, mid}), 3 = (state 1, {high}).
    let view = |rank: usize, state: usize| SubsetInformedPolicy::partition_for(rank, state);

    // Objective: expected sender utility assuming recommendations are
    // followed; fixed by the marginal equalities, but kept as a canonical
    // tie-breaker.
    let mut objective = vec![0.0; n_vars];
    for rank in 0..3 {
        let mass = instance.prior_mass(by_rank(rank));
        let p = p_rank[rank];
        for m in 0..MENU_MESSAGES {
            if menu_bit(m, rank) == 1 {
                objective[var(view(rank, 1), m)] += mass * p;
                objective[var(view(rank, 0), m)] += mass * (1.0 - p);
            }
        }
    }
    let mut lp = LinearProgram::new(objective);
    for j in 0..n_vars {
        lp.set_bounds(j, 0.0, 1.0);
    }
    // Normalization per partition.
    for part in 0..PARTITIONS {
        let mut coeffs = vec![0.0; n_vars];
        for m in 0..MENU_MESSAGES {
            coeffs[var(part, m)] = 1.0;
        }
        lp.add_constraint(coeffs, Relation::Eq, 1.0);
    }
    // Incentive constraints: for every rank and every message recommending
    // action 1 to that rank,
    //   sigma(m | state 1 view) * p  >=  sigma(m | state 0 view) * (1 - p).
    for rank in 0..3 {
        let p = p_rank[rank];
        for m in 0..MENU_MESSAGES {
            if menu_bit(m, rank) == 1 {
                let mut coeffs = vec![0.0; n_vars];
                coeffs[var(view(rank, 1), m)] = p;
                coeffs[var(view(rank, 0), m)] = -(1.0 - p);
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
        }
    }
    // Marginal equalities: each rank's aggregated view matches its target
    // policy's probability of recommending action 1, per state.
    for rank in 0..3 {
        for state in 0..2 {
            let mut coeffs = vec![0.0; n_vars];
            for m in 0..MENU_MESSAGES {
                if menu_bit(m, rank) == 1 {
                    coeffs[var(view(rank, state), m)] = 1.0;
                }
            }
            lp.add_constraint(coeffs, Relation::Eq, send1[rank][state]);
        }
    }

    let x = match linprog::solve_lp(&lp, 1e-9).map_err(|e| CommitmentError::Numerical(e.to_string()))? {
        LpOutcome::Optimal { x, .. } => x,
        other => {
            return Err(CommitmentError::Numerical(format!(
                "commitment program reported {other:?} on inputs the feasibility theorem covers"
            )))
        }
    };

    let sigma: Vec<Vec<f64>> = (0..PARTITIONS)
        .map(|part| (0..MENU_MESSAGES).map(|m| x[var(part, m)].max(0.0)).collect())
        .collect();
    let by_rank_sets = |r: usize| by_rank(r);
    let partitions = vec![
        InfoPartition { state: 0, cell: TypeSubset::singleton(by_rank_sets(0)) },
        InfoPartition {
            state: 0,
            cell: TypeSubset::new(vec![by_rank_sets(1), by_rank_sets(2)], 3)?,
        },
        InfoPartition {
            state: 1,
            cell: TypeSubset::new(vec![by_rank_sets(0), by_rank_sets(1)], 3)?,
        },
        InfoPartition { state: 1, cell: TypeSubset::singleton(by_rank_sets(2)) },
    ];
    Ok(SubsetInformedPolicy { partitions, sigma, rank_of, query_policy })
}

/// Checks that `combined` implements `policy` for the type at
/// `type_index`: for each state and action, the aggregated probability of
/// messages recommending that action to the type matches the policy
/// within `tol`.
pub fn implements_check(
    combined: &SubsetInformedPolicy,
    policy: &MessagingPolicy,
    type_index: usize,
    tol: f64,
) -> bool {
    let rank = combined.rank_of[type_index];
    for state in 0..2 {
        for action in 0..2 {
            let implemented = combined.implemented_marginal(rank, state, action);
            if (implemented - policy.prob(action, state)).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// The per-type optimal policies (send the "act" message always in state 1
/// and with probability `p/(1-p)` in state 0), packaged for
/// [`solve_commitment`].
pub fn type_optimal_policies(
    instance: &BPInstance,
) -> Result<[MessagingPolicy; 3], CommitmentError> {
    if !instance.is_canonical_binary() || instance.type_count() != 3 {
        return Err(ModelError::NotBinary.into());
    }
    let mut out = Vec::with_capacity(3);
    for t in 0..3 {
        let p = instance.binary_p(t);
        let r = p / (1.0 - p);
        out.push(MessagingPolicy::new(vec![vec![1.0 - r, r], vec![0.0, 1.0]])?);
    }
    Ok(out.try_into().expect("three policies"))
}

/// Three-state demonstration instance for state-informed querying: three
/// states and actions, sender utility equal to the action's face value
/// (-1, 0, 1), matching receiver utility, and three beliefs each placing
/// zero mass on a different state. Seeing the state therefore eliminates
/// one type, and the returned query policy separates the surviving pair
/// (queries are found by the separating-query search).
pub fn make_three_state_example(
    eps: f64,
    delta: f64,
) -> Result<(BPInstance, StateInformedQueryPolicy), CommitmentError> {
    if !(eps > 0.0 && eps < 0.25 && delta > 0.0 && delta < 0.25) {
        return Err(CommitmentError::ParameterViolation(
            "eps and delta must lie in (0, 0.25)".into(),
        ));
    }
    let u_s: Vec<Vec<f64>> = (0..3).map(|_| vec![-1.0, 0.0, 1.0]).collect();
    let u_r: Vec<Vec<f64>> = (0..3)
        .map(|w| (0..3).map(|a| if a == w { 1.0 } else { 0.0 }).collect())
        .collect();
    let types = vec![
        Belief::new(vec![0.75, 0.25, 0.0])?,
        Belief::new(vec![0.75 + delta, 0.0, 0.25 - delta])?,
        Belief::new(vec![0.0, 0.75 + eps, 0.25 - eps])?,
    ];
    let instance = BPInstance::new(u_s, u_r, types, vec![1.0 / 3.0; 3])?;

    let mut per_state = Vec::with_capacity(3);
    for state in 0..3 {
        let survivors: Vec<usize> = (0..3)
            .filter(|&t| instance.belief(t).prob(state) > 0.0)
            .collect();
        debug_assert_eq!(survivors.len(), 2);
        let query = oracle::find_separating_query(&instance, survivors[0], survivors[1])?
            .ok_or_else(|| {
                CommitmentError::Numerical(format!(
                    "no separating query for the surviving pair at state {state}"
                ))
            })?;
        per_state.push(oracle::induced_partition(&instance, &query)?);
    }
    Ok((instance, StateInformedQueryPolicy { per_state }))
}

/// Checks the committed policy's incentive inequalities (12) and
/// normalizations (4) at the given tolerance.
pub fn verify_constraint_system(
    instance: &BPInstance,
    policy: &SubsetInformedPolicy,
    tol: f64,
) -> bool {
    for part in 0..PARTITIONS {
        let sum: f64 = policy.sigma[part].iter().sum();
        if (sum - 1.0).abs() > tol {
            return false;
        }
    }
    let by_rank = |r: usize| policy.rank_of.iter().position(|&x| x == r).unwrap();
    for rank in 0..3 {
        let p = instance.binary_p(by_rank(rank));
        for m in 0..MENU_MESSAGES {
            if menu_bit(m, rank) == 1 {
                let lhs = policy.sigma[SubsetInformedPolicy::partition_for(rank, 1)][m] * p;
                let rhs = policy.sigma[SubsetInformedPolicy::partition_for(rank, 0)][m] * (1.0 - p);
                if lhs < rhs - tol {
                    return false;
                }
            }
        }
    }
    true
}

/// The [`SimulationQuery`] form of a two-state threshold: recommend action
/// 1, sending the recommendation always in state 1 and with probability
/// `threshold/(1-threshold)` in state 0.
pub fn threshold_simulation_query(
    instance: &BPInstance,
    threshold: f64,
) -> Result<SimulationQuery, CommitmentError> {
    let r = threshold / (1.0 - threshold);
    let policy = MessagingPolicy::new(vec![vec![1.0 - r, r], vec![0.0, 1.0]])?;
    Ok(SimulationQuery::new(instance, policy, 1)?)
}
