//! Core domain types: beliefs, persuasion instances, messaging policies,
//! type subsets, and the incentive-compatibility primitives every solver
//! builds on.

use thiserror::Error;

use crate::messaging::MenuPolicy;

/// Tolerance for probability-vector normalization checks.
pub const PROB_TOL: f64 = 1e-12;
/// Default tolerance for argmax and feasibility comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("belief entries must be non-negative and sum to 1 (got sum {sum})")]
    InvalidBelief { sum: f64 },
    #[error("probability row {row} must be non-negative and sum to 1 (got sum {sum})")]
    InvalidRow { row: usize, sum: f64 },
    #[error("prior must be non-negative and sum to 1 (got sum {sum})")]
    InvalidPrior { sum: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("receiver types {0} and {1} have identical beliefs")]
    DuplicateBelief(usize, usize),
    #[error("type subset is empty or out of range")]
    InvalidSubset,
    #[error("message {message} has zero probability under the given belief")]
    ZeroProbabilityMessage { message: usize },
    #[error("instance is not a canonical two-state persuasion problem")]
    NotBinary,
}

/// A probability distribution over world states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Builds a belief, checking non-negativity and normalization.
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(ModelError::InvalidBelief { sum });
        }
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::InvalidBelief { sum });
        }
        Ok(Belief { probs })
    }

    /// Two-state belief with `p = Pr(state 1)`.
    pub fn binary(p: f64) -> Result<Self, ModelError> {
        Belief::new(vec![1.0 - p, p])
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }
}

/// A persuasion instance: states, actions, both utility matrices, the
/// receiver types (one belief each), and the second-order prior over types.
#[derive(Debug, Clone)]
pub struct BPInstance {
    state_count: usize,
    action_count: usize,
    sender_utility: Vec<Vec<f64>>,
    receiver_utility: Vec<Vec<f64>>,
    types: Vec<Belief>,
    prior: Vec<f64>,
}

impl BPInstance {
    /// Builds and validates an instance. Utility matrices are indexed
    /// `[state][action]`. Beliefs must be pairwise distinct: two receiver
    /// types that hold the same belief are the same type.
    pub fn new(
        sender_utility: Vec<Vec<f64>>,
        receiver_utility: Vec<Vec<f64>>,
        types: Vec<Belief>,
        prior: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let instance = Self::new_unchecked(sender_utility, receiver_utility, types, prior);
        instance.validate()?;
        Ok(instance)
    }

    /// Builds an instance without validating the invariants. Intended for
    /// tests that need degenerate inputs (e.g. duplicate beliefs).
    #[doc(hidden)]
    pub fn new_unchecked(
        sender_utility: Vec<Vec<f64>>,
        receiver_utility: Vec<Vec<f64>>,
        types: Vec<Belief>,
        prior: Vec<f64>,
    ) -> Self {
        let state_count = sender_utility.len();
        let action_count = sender_utility.first().map_or(0, Vec::len);
        BPInstance {
            state_count,
            action_count,
            sender_utility,
            receiver_utility,
            types,
            prior,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let d = self.state_count;
        let a = self.action_count;
        if d == 0 || a == 0 {
            return Err(ModelError::DimensionMismatch(
                "need at least one state and one action".into(),
            ));
        }
        for (name, m) in [("sender", &self.sender_utility), ("receiver", &self.receiver_utility)] {
            if m.len() != d || m.iter().any(|row| row.len() != a) {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} utility must be {d}x{a}"
                )));
            }
            if m.iter().flatten().any(|x| !x.is_finite()) {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} utility contains a non-finite entry"
                )));
            }
        }
        if self.types.is_empty() || self.types.len() != self.prior.len() {
            return Err(ModelError::DimensionMismatch(
                "need one prior mass per receiver type".into(),
            ));
        }
        if self.types.iter().any(|b| b.dim() != d) {
            return Err(ModelError::DimensionMismatch(format!(
                "every belief must have dimension {d}"
            )));
        }
        let sum: f64 = self.prior.iter().sum();
        if self.prior.iter().any(|&w| !w.is_finite() || w < 0.0) || (sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::InvalidPrior { sum });
        }
        for i in 0..self.types.len() {
            for j in (i + 1)..self.types.len() {
                let apart = self.types[i]
                    .probs()
                    .iter()
                    .zip(self.types[j].probs())
                    .any(|(x, y)| (x - y).abs() > PROB_TOL);
                if !apart {
                    return Err(ModelError::DuplicateBelief(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn sender_utility(&self, state: usize, action: usize) -> f64 {
        self.sender_utility[state][action]
    }

    pub fn receiver_utility(&self, state: usize, action: usize) -> f64 {
        self.receiver_utility[state][action]
    }

    pub fn belief(&self, type_index: usize) -> &Belief {
        &self.types[type_index]
    }

    pub fn types(&self) -> &[Belief] {
        &self.types
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn prior_mass(&self, type_index: usize) -> f64 {
        self.prior[type_index]
    }

    /// Total prior mass of a type subset.
    pub fn subset_mass(&self, subset: &TypeSubset) -> f64 {
        subset.indices().iter().map(|&t| self.prior[t]).sum()
    }

    /// `Pr(state 1)` for a two-state instance.
    pub fn binary_p(&self, type_index: usize) -> f64 {
        self.types[type_index].prob(1)
    }

    /// True iff this is the canonical two-state problem: two states, two
    /// actions, the sender is paid 1 whenever action 1 is taken, and the
    /// receiver is paid 1 for matching the state.
    pub fn is_canonical_binary(&self) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= PROB_TOL;
        self.state_count == 2
            && self.action_count == 2
            && close(self.sender_utility[0][0], 0.0)
            && close(self.sender_utility[0][1], 1.0)
            && close(self.sender_utility[1][0], 0.0)
            && close(self.sender_utility[1][1], 1.0)
            && close(self.receiver_utility[0][0], 1.0)
            && close(self.receiver_utility[0][1], 0.0)
            && close(self.receiver_utility[1][0], 0.0)
            && close(self.receiver_utility[1][1], 1.0)
    }

    /// True iff canonical binary with beliefs strictly decreasing in
    /// `Pr(state 1)` and none above 1/2 (the form the fast paths require).
    pub fn is_normalized_binary(&self) -> bool {
        if !self.is_canonical_binary() {
            return false;
        }
        let mut prev = f64::INFINITY;
        for t in 0..self.type_count() {
            let p = self.binary_p(t);
            if p > 0.5 + PROB_TOL || p >= prev {
                return false;
            }
            prev = p;
        }
        true
    }

    /// Canonical sender/receiver utility matrices for the two-state problem.
    pub fn canonical_binary_utilities() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
    }
}

/// A committed randomized map from states to messages; row `state` gives
/// the sending distribution over messages in that state.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagingPolicy {
    matrix: Vec<Vec<f64>>,
}

impl MessagingPolicy {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if matrix.is_empty() || matrix[0].is_empty() {
            return Err(ModelError::DimensionMismatch("empty policy matrix".into()));
        }
        let m = matrix[0].len();
        for (row_idx, row) in matrix.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::DimensionMismatch("ragged policy matrix".into()));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                return Err(ModelError::InvalidRow { row: row_idx, sum });
            }
        }
        Ok(MessagingPolicy { matrix })
    }

    pub fn state_count(&self) -> usize {
        self.matrix.len()
    }

    pub fn message_count(&self) -> usize {
        self.matrix[0].len()
    }

    /// `Pr(message | state)`.
    pub fn prob(&self, message: usize, state: usize) -> f64 {
        self.matrix[state][message]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.matrix
    }
}

/// A canonical (sorted, duplicate-free, non-empty) set of type indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeSubset {
    indices: Vec<usize>,
}

impl TypeSubset {
    /// Canonicalizes (sorts, dedups) and validates against `type_count`.
    pub fn new(mut indices: Vec<usize>, type_count: usize) -> Result<Self, ModelError> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() || *indices.last().unwrap() >= type_count {
            return Err(ModelError::InvalidSubset);
        }
        Ok(TypeSubset { indices })
    }

    pub fn full(type_count: usize) -> Self {
        TypeSubset {
            indices: (0..type_count).collect(),
        }
    }

    pub fn singleton(index: usize) -> Self {
        TypeSubset { indices: vec![index] }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Intersection, or `None` when empty.
    pub fn intersect(&self, other: &TypeSubset) -> Option<TypeSubset> {
        let out: Vec<usize> = self
            .indices
            .iter()
            .copied()
            .filter(|&i| other.contains(i))
            .collect();
        if out.is_empty() {
            None
        } else {
            Some(TypeSubset { indices: out })
        }
    }

    /// True iff the indices form a contiguous range.
    pub fn is_interval(&self) -> bool {
        self.indices.last().unwrap() - self.indices[0] + 1 == self.indices.len()
    }
}

impl std::fmt::Display for TypeSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// The receiver's best response to `message` under `policy`, given her
/// belief. If `recommended` attains the maximum within `DEFAULT_TOL` it is
/// returned (the receiver breaks ties in the sender's favor); remaining
/// ties go to the lowest action index.
pub fn best_response(
    instance: &BPInstance,
    belief: &Belief,
    policy: &MessagingPolicy,
    message: usize,
    recommended: Option<usize>,
) -> Result<usize, ModelError> {
    if belief.dim() != instance.state_count() || policy.state_count() != instance.state_count() {
        return Err(ModelError::DimensionMismatch(
            "belief/policy dimensions must match the instance".into(),
        ));
    }
    let total: f64 = (0..instance.state_count())
        .map(|w| belief.prob(w) * policy.prob(message, w))
        .sum();
    if total <= PROB_TOL {
        return Err(ModelError::ZeroProbabilityMessage { message });
    }
    // Unnormalized posterior expectations; the shared positive factor
    // 1/Pr(message) does not change the argmax.
    let score = |a: usize| -> f64 {
        (0..instance.state_count())
            .map(|w| belief.prob(w) * policy.prob(message, w) * instance.receiver_utility(w, a))
            .sum()
    };
    let mut best = 0usize;
    let mut best_score = score(0);
    for a in 1..instance.action_count() {
        let s = score(a);
        if s > best_score {
            best = a;
            best_score = s;
        }
    }
    if let Some(rec) = recommended {
        if rec < instance.action_count() && score(rec) >= best_score - DEFAULT_TOL * total {
            return Ok(rec);
        }
    }
    Ok(best)
}

/// One incentive constraint violated by a menu policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BicViolation {
    pub type_index: usize,
    pub message_index: usize,
    pub action: usize,
}

/// Result of an incentive-compatibility check.
#[derive(Debug, Clone)]
pub struct BicReport {
    pub violations: Vec<BicViolation>,
}

impl BicReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks Bayesian incentive compatibility of a menu policy on a type
/// subset: for every type in the subset, every message that type receives
/// with positive probability, and every alternative action, following the
/// menu recommendation must be at least as good within `tol` (conditional
/// on the message).
pub fn is_bic(
    instance: &BPInstance,
    subset: &TypeSubset,
    policy: &MenuPolicy,
    tol: f64,
) -> Result<BicReport, ModelError> {
    if policy.subset() != subset {
        return Err(ModelError::DimensionMismatch(
            "menu policy built for a different subset".into(),
        ));
    }
    let d = instance.state_count();
    let mut violations = Vec::new();
    for (pos, &t) in subset.indices().iter().enumerate() {
        let belief = instance.belief(t);
        for (mi, menu) in policy.messages().iter().enumerate() {
            let rec = menu[pos];
            let mass: f64 = (0..d)
                .map(|w| belief.prob(w) * policy.sigma().prob(mi, w))
                .sum();
            if mass <= PROB_TOL {
                continue;
            }
            for a in 0..instance.action_count() {
                if a == rec {
                    continue;
                }
                let gap: f64 = (0..d)
                    .map(|w| {
                        belief.prob(w)
                            * policy.sigma().prob(mi, w)
                            * (instance.receiver_utility(w, rec) - instance.receiver_utility(w, a))
                    })
                    .sum();
                // Conditional-on-message comparison.
                if gap / mass < -tol {
                    violations.push(BicViolation {
                        type_index: t,
                        message_index: mi,
                        action: a,
                    });
                }
            }
        }
    }
    Ok(BicReport { violations })
}

/// Expected sender utility of a menu policy on a subset, assuming every
/// receiver follows her menu recommendation (check `is_bic` separately).
/// With `normalize` unset the types are weighted by raw prior mass, so
/// values add across disjoint subsets; with it set the weights are
/// renormalized to the subset.
pub fn expected_sender_utility(
    instance: &BPInstance,
    subset: &TypeSubset,
    policy: &MenuPolicy,
    normalize: bool,
) -> Result<f64, ModelError> {
    if policy.subset() != subset {
        return Err(ModelError::DimensionMismatch(
            "menu policy built for a different subset".into(),
        ));
    }
    let d = instance.state_count();
    let total_mass = instance.subset_mass(subset);
    let mut value = 0.0;
    for (pos, &t) in subset.indices().iter().enumerate() {
        let mut w_t = instance.prior_mass(t);
        if normalize {
            w_t /= total_mass;
        }
        let belief = instance.belief(t);
        for (mi, menu) in policy.messages().iter().enumerate() {
            for w in 0..d {
                value += w_t
                    * belief.prob(w)
                    * policy.sigma().prob(mi, w)
                    * instance.sender_utility(w, menu[pos]);
            }
        }
    }
    Ok(value)
}

/// Rewrites a canonical two-state instance into normalized form: all types
/// with `Pr(state 1) >= 1/2` merge into a single type with belief 1/2 and
/// summed prior mass, and the result is sorted by strictly decreasing
/// `Pr(state 1)`. Returns the instance together with the old-to-new index
/// map.
pub fn normalize_binary(instance: &BPInstance) -> Result<(BPInstance, Vec<usize>), ModelError> {
    if !instance.is_canonical_binary() {
        return Err(ModelError::NotBinary);
    }
    let t = instance.type_count();
    let mut merged_mass = 0.0;
    let mut merged_any = false;
    let mut kept: Vec<(f64, f64, usize)> = Vec::new(); // (p, mass, old index)
    for i in 0..t {
        let p = instance.binary_p(i);
        if p >= 0.5 {
            merged_mass += instance.prior_mass(i);
            merged_any = true;
        } else {
            kept.push((p, instance.prior_mass(i), i));
        }
    }
    let mut entries: Vec<(f64, f64, Option<usize>)> = Vec::new();
    if merged_any {
        entries.push((0.5, merged_mass, None));
    }
    for (p, w, i) in kept {
        entries.push((p, w, Some(i)));
    }
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut index_map = vec![usize::MAX; t];
    let mut types = Vec::with_capacity(entries.len());
    let mut prior = Vec::with_capacity(entries.len());
    for (new_idx, (p, w, old)) in entries.iter().enumerate() {
        types.push(Belief::binary(*p)?);
        prior.push(*w);
        if let Some(i) = old {
            index_map[*i] = new_idx;
        }
    }
    if merged_any {
        let merged_pos = entries.iter().position(|e| e.2.is_none()).unwrap();
        for i in 0..t {
            if instance.binary_p(i) >= 0.5 {
                index_map[i] = merged_pos;
            }
        }
    }
    let (u_s, u_r) = BPInstance::canonical_binary_utilities();
    let normalized = BPInstance::new(u_s, u_r, types, prior)?;
    Ok((normalized, index_map))
}
