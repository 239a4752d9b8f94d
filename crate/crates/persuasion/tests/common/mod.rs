//! Shared fixtures and random-instance generators for integration tests.

use persuasion::model::{BPInstance, Belief, TypeSubset};
use persuasion::oracle::PartitionQuery;
use rand::Rng;

/// The five-type demonstration instance: beliefs 0.5, 0.4, 0.3, 0.2, 0.1
/// with prior masses 0.2, 0.01, 0.39, 0.2, 0.2.
pub fn fig3() -> BPInstance {
    let (u_s, u_r) = BPInstance::canonical_binary_utilities();
    let types = [0.5, 0.4, 0.3, 0.2, 0.1]
        .iter()
        .map(|&p| Belief::binary(p).unwrap())
        .collect();
    BPInstance::new(u_s, u_r, types, vec![0.2, 0.01, 0.39, 0.2, 0.2]).unwrap()
}

/// Random normalized two-state instance: `t` distinct beliefs in
/// (0.03, 0.5], descending, with comfortably separated values and prior
/// masses bounded away from zero.
pub fn random_normalized_binary(rng: &mut impl Rng, t: usize) -> BPInstance {
    let mut ps: Vec<f64>;
    loop {
        ps = (0..t).map(|_| rng.gen_range(0.03..=0.5)).collect();
        ps.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if ps.windows(2).all(|w| w[0] - w[1] > 5e-3) {
            break;
        }
    }
    let mut masses: Vec<f64> = (0..t).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= total;
    }
    let residue = 1.0 - masses.iter().sum::<f64>();
    masses[0] += residue;
    let (u_s, u_r) = BPInstance::canonical_binary_utilities();
    let types = ps.iter().map(|&p| Belief::binary(p).unwrap()).collect();
    BPInstance::new(u_s, u_r, types, masses).unwrap()
}

/// Random partition of `t` types into `cells` non-empty cells.
pub fn random_partition(rng: &mut impl Rng, t: usize, cells: usize) -> PartitionQuery {
    assert!(cells <= t);
    loop {
        let assignment: Vec<usize> = (0..t).map(|_| rng.gen_range(0..cells)).collect();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); cells];
        for (ty, &c) in assignment.iter().enumerate() {
            groups[c].push(ty);
        }
        if groups.iter().all(|g| !g.is_empty()) {
            let cells = groups
                .into_iter()
                .map(|g| TypeSubset::new(g, t).unwrap())
                .collect();
            return PartitionQuery::new(t, cells).unwrap();
        }
    }
}
