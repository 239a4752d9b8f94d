//! Optimal messaging policies for a known subset of possible receiver
//! types: the general menu-message linear program, and the two-state
//! closed form that picks a single cutoff type to pool down to.

use std::collections::HashMap;

use thiserror::Error;

use crate::linprog::{self, LinearProgram, LpOutcome, Relation};
use crate::model::{
    self, BPInstance, MessagingPolicy, ModelError, TypeSubset, PROB_TOL,
};

/// Default cap on the number of LP variables (`A^{|subset|} * d`).
pub const DEFAULT_LP_VAR_CAP: usize = 20_000;

#[derive(Debug, Error)]
pub enum MessagingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linprog(#[from] linprog::LinprogError),
    #[error("menu LP needs {needed} variables, above the cap of {cap}")]
    SizeCapExceeded { needed: usize, cap: usize },
    #[error("subset must be a contiguous interval in the descending-belief order")]
    NotInterval,
    #[error("menu LP unexpectedly reported {0}")]
    UnexpectedOutcome(String),
}

/// A menu policy: each message is a vector recommending one action per
/// type in the subset, together with the sending distribution.
#[derive(Debug, Clone)]
pub struct MenuPolicy {
    subset: TypeSubset,
    messages: Vec<Vec<usize>>,
    sigma: MessagingPolicy,
}

impl MenuPolicy {
    pub fn new(
        instance: &BPInstance,
        subset: TypeSubset,
        messages: Vec<Vec<usize>>,
        sigma: MessagingPolicy,
    ) -> Result<Self, ModelError> {
        if sigma.state_count() != instance.state_count()
            || sigma.message_count() != messages.len()
            || messages.is_empty()
        {
            return Err(ModelError::DimensionMismatch(
                "menu policy dimensions are inconsistent".into(),
            ));
        }
        for m in &messages {
            if m.len() != subset.len() {
                return Err(ModelError::DimensionMismatch(
                    "menu width must equal the subset size".into(),
                ));
            }
            if m.iter().any(|&a| a >= instance.action_count()) {
                return Err(ModelError::DimensionMismatch(
                    "menu entry is not a valid action".into(),
                ));
            }
        }
        Ok(MenuPolicy { subset, messages, sigma })
    }

    pub fn subset(&self) -> &TypeSubset {
        &self.subset
    }

    pub fn messages(&self) -> &[Vec<usize>] {
        &self.messages
    }

    pub fn sigma(&self) -> &MessagingPolicy {
        &self.sigma
    }
}

/// The two-state optimal policy: pool every type down to (and including)
/// the cutoff type into one "take action 1" message.
#[derive(Debug, Clone)]
pub struct BinaryCutoffPolicy {
    /// Global index of the cutoff type, in the descending-belief order.
    pub cutoff: usize,
    /// Probability of sending the pooled message in state 0, `p/(1-p)`.
    pub send_prob_state0: f64,
    /// Unnormalized expected sender utility on the subset.
    pub value: f64,
}

impl BinaryCutoffPolicy {
    /// Encodes the cutoff policy as a two-message menu policy.
    pub fn to_menu_policy(
        &self,
        instance: &BPInstance,
        subset: &TypeSubset,
    ) -> Result<MenuPolicy, ModelError> {
        let pooled: Vec<usize> = subset
            .indices()
            .iter()
            .map(|&t| usize::from(t <= self.cutoff))
            .collect();
        let null = vec![0usize; subset.len()];
        let r = self.send_prob_state0;
        let sigma = MessagingPolicy::new(vec![vec![r, 1.0 - r], vec![1.0, 0.0]])?;
        MenuPolicy::new(instance, subset.clone(), vec![pooled, null], sigma)
    }
}

fn ensure_normalized_binary(instance: &BPInstance) -> Result<(), MessagingError> {
    if instance.is_normalized_binary() {
        Ok(())
    } else {
        Err(ModelError::NotBinary.into())
    }
}

/// The sender's expected utility from pooling subset types down to each
/// candidate cutoff, in subset order. Entry `k` is the unnormalized value
/// of the cutoff at the `k`-th subset member.
pub fn cutoff_curve(instance: &BPInstance, subset: &TypeSubset) -> Result<Vec<f64>, MessagingError> {
    ensure_normalized_binary(instance)?;
    let idx = subset.indices();
    let mut out = Vec::with_capacity(idx.len());
    for &cut in idx {
        let p_cut = instance.binary_p(cut);
        let ratio = p_cut / (1.0 - p_cut);
        let mut u = 0.0;
        for &i in idx {
            if i <= cut {
                let p = instance.binary_p(i);
                u += instance.prior_mass(i) * (p + (1.0 - p) * ratio);
            }
        }
        out.push(u);
    }
    Ok(out)
}

/// Optimal messaging policy for a normalized two-state instance restricted
/// to a contiguous interval of types, by enumerating cutoffs. Ties break
/// to the smallest cutoff index. The value is unnormalized (weighted by
/// raw prior masses).
pub fn optimal_policy_binary(
    instance: &BPInstance,
    subset: &TypeSubset,
) -> Result<(BinaryCutoffPolicy, f64), MessagingError> {
    ensure_normalized_binary(instance)?;
    if !subset.is_interval() {
        return Err(MessagingError::NotInterval);
    }
    let curve = cutoff_curve(instance, subset)?;
    let mut best_pos = 0usize;
    for (k, &u) in curve.iter().enumerate() {
        if u > curve[best_pos] {
            best_pos = k;
        }
    }
    let cutoff = subset.indices()[best_pos];
    let p_cut = instance.binary_p(cutoff);
    let policy = BinaryCutoffPolicy {
        cutoff,
        send_prob_state0: p_cut / (1.0 - p_cut),
        value: curve[best_pos],
    };
    let value = policy.value;
    Ok((policy, value))
}

fn enumerate_menus(width: usize, actions: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; width];
    'outer: loop {
        out.push(cur.clone());
        let mut pos = width;
        while pos > 0 {
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < actions {
                continue 'outer;
            }
            cur[pos] = 0;
        }
        return out;
    }
}

/// Actions strictly dominated (for the receiver) by some other action in
/// every state.
fn strictly_dominated_actions(instance: &BPInstance) -> Vec<bool> {
    let a_count = instance.action_count();
    let mut dominated = vec![false; a_count];
    for a in 0..a_count {
        for b in 0..a_count {
            if a == b {
                continue;
            }
            let dominates = (0..instance.state_count())
                .all(|w| instance.receiver_utility(w, b) > instance.receiver_utility(w, a));
            if dominates {
                dominated[a] = true;
                break;
            }
        }
    }
    dominated
}

/// Optimal menu messaging policy on an arbitrary subset via the incentive
/// linear program, with the default variable cap.
pub fn optimal_policy_general(
    instance: &BPInstance,
    subset: &TypeSubset,
) -> Result<(MenuPolicy, f64), MessagingError> {
    optimal_policy_general_with_cap(instance, subset, DEFAULT_LP_VAR_CAP)
}

/// As [`optimal_policy_general`] with an explicit cap on LP variables.
///
/// The LP has one variable per (menu message, state) pair. Menu messages
/// recommending a strictly dominated action to every type are dropped;
/// the remaining enumeration already contains no duplicate action
/// vectors. The returned value is unnormalized and the returned policy
/// keeps only messages that are actually sent.
pub fn optimal_policy_general_with_cap(
    instance: &BPInstance,
    subset: &TypeSubset,
    cap: usize,
) -> Result<(MenuPolicy, f64), MessagingError> {
    let d = instance.state_count();
    let a_count = instance.action_count();
    let width = subset.len();

    let needed = (a_count as f64).powi(width as i32) * d as f64;
    if !needed.is_finite() || needed > cap as f64 {
        return Err(MessagingError::SizeCapExceeded {
            needed: if needed.is_finite() { needed as usize } else { usize::MAX },
            cap,
        });
    }

    let dominated = strictly_dominated_actions(instance);
    let menus: Vec<Vec<usize>> = enumerate_menus(width, a_count)
        .into_iter()
        .filter(|m| !m.iter().all(|&act| dominated[act]))
        .collect();
    let m_count = menus.len();
    let n_vars = m_count * d;
    let var = |m: usize, w: usize| m * d + w;

    // Objective: sum over subset types of prior mass times expected sender
    // utility when each type follows its menu recommendation.
    let mut objective = vec![0.0; n_vars];
    for (mi, menu) in menus.iter().enumerate() {
        for w in 0..d {
            let mut coeff = 0.0;
            for (pos, &t) in subset.indices().iter().enumerate() {
                coeff += instance.prior_mass(t)
                    * instance.belief(t).prob(w)
                    * instance.sender_utility(w, menu[pos]);
            }
            objective[var(mi, w)] = coeff;
        }
    }
    let mut lp = LinearProgram::new(objective);
    for j in 0..n_vars {
        lp.set_bounds(j, 0.0, 1.0);
    }
    // Row-stochasticity per state.
    for w in 0..d {
        let mut coeffs = vec![0.0; n_vars];
        for mi in 0..m_count {
            coeffs[var(mi, w)] = 1.0;
        }
        lp.add_constraint(coeffs, Relation::Eq, 1.0);
    }
    // Incentive constraints: for every type, message, alternative action.
    for (pos, &t) in subset.indices().iter().enumerate() {
        let belief = instance.belief(t);
        for (mi, menu) in menus.iter().enumerate() {
            let rec = menu[pos];
            for alt in 0..a_count {
                if alt == rec {
                    continue;
                }
                let mut coeffs = vec![0.0; n_vars];
                let mut nonzero = false;
                for w in 0..d {
                    let c = belief.prob(w)
                        * (instance.receiver_utility(w, rec) - instance.receiver_utility(w, alt));
                    if c != 0.0 {
                        coeffs[var(mi, w)] = c;
                        nonzero = true;
                    }
                }
                if nonzero {
                    lp.add_constraint(coeffs, Relation::Ge, 0.0);
                }
            }
        }
    }

    let x = match linprog::solve_lp(&lp, linprog::DEFAULT_LP_TOL)? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => {
            return Err(MessagingError::UnexpectedOutcome("infeasible".into()))
        }
        LpOutcome::Unbounded => {
            return Err(MessagingError::UnexpectedOutcome("unbounded".into()))
        }
    };

    // Clean the vertex solution: clamp solver dust, renormalize rows, and
    // drop messages that are never sent.
    let mut matrix: Vec<Vec<f64>> = (0..d)
        .map(|w| (0..m_count).map(|mi| x[var(mi, w)].max(0.0)).collect())
        .collect();
    for row in &mut matrix {
        for v in row.iter_mut() {
            if *v < 1e-11 {
                *v = 0.0;
            }
        }
        let sum: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    let used: Vec<usize> = (0..m_count)
        .filter(|&mi| (0..d).any(|w| matrix[w][mi] > PROB_TOL))
        .collect();
    let kept_menus: Vec<Vec<usize>> = used.iter().map(|&mi| menus[mi].clone()).collect();
    let kept_matrix: Vec<Vec<f64>> = (0..d)
        .map(|w| used.iter().map(|&mi| matrix[w][mi]).collect())
        .collect();
    let sigma = MessagingPolicy::new(kept_matrix)?;
    let policy = MenuPolicy::new(instance, subset.clone(), kept_menus, sigma)?;
    let value = model::expected_sender_utility(instance, subset, &policy, false)?;
    Ok((policy, value))
}

/// Unnormalized optimal messaging value for a subset, routed through the
/// closed form when the instance is normalized binary and the subset is an
/// interval, and through the menu LP otherwise.
pub fn optimal_value(instance: &BPInstance, subset: &TypeSubset) -> Result<f64, MessagingError> {
    if instance.is_normalized_binary() && subset.is_interval() {
        optimal_policy_binary(instance, subset).map(|(_, v)| v)
    } else {
        optimal_policy_general(instance, subset).map(|(_, v)| v)
    }
}

/// Memoized subset-value table on top of [`optimal_value`]. Planners share
/// one cache per invocation; messaging values do not depend on the query
/// budget.
pub struct ValueCache<'a> {
    instance: &'a BPInstance,
    values: HashMap<TypeSubset, f64>,
}

impl<'a> ValueCache<'a> {
    pub fn new(instance: &'a BPInstance) -> Self {
        ValueCache { instance, values: HashMap::new() }
    }

    pub fn instance(&self) -> &'a BPInstance {
        self.instance
    }

    pub fn value(&mut self, subset: &TypeSubset) -> Result<f64, MessagingError> {
        if let Some(&v) = self.values.get(subset) {
            return Ok(v);
        }
        let v = optimal_value(self.instance, subset)?;
        self.values.insert(subset.clone(), v);
        Ok(v)
    }
}
