//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the checked quantities (run with `--nocapture` to see them).
//!
//! Expected constants are computed by independent oracles inside this
//! file (closed-form cutoff enumeration, exhaustive strategy search,
//! brute-force set cover) and frozen as literals where exact.

mod common;

use std::time::Instant;

use common::{fig3, random_normalized_binary, random_partition};
use persuasion::adaptive;
use persuasion::commitment;
use persuasion::messaging::{self, ValueCache};
use persuasion::model::{self, BPInstance, Belief, MessagingPolicy, TypeSubset};
use persuasion::nonadaptive::{self, parity_gap};
use persuasion::oracle::{self, PartitionQuery, SeparationResult, SimulationQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed-form pooled value of `subset` at cutoff type `cut` (oracle used
/// to freeze expected constants; independent of the library path).
fn oracle_cutoff_value(instance: &BPInstance, subset: &[usize], cut: usize) -> f64 {
    let p_cut = instance.binary_p(cut);
    let ratio = p_cut / (1.0 - p_cut);
    subset
        .iter()
        .filter(|&&i| i <= cut)
        .map(|&i| {
            let p = instance.binary_p(i);
            instance.prior_mass(i) * (p + (1.0 - p) * ratio)
        })
        .sum()
}

fn oracle_best_value(instance: &BPInstance, subset: &[usize]) -> f64 {
    subset
        .iter()
        .map(|&cut| oracle_cutoff_value(instance, subset, cut))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_01_fig3_reproduction() {
    let start = Instant::now();
    let inst = fig3();
    let full = TypeSubset::full(5);
    let curve = messaging::cutoff_curve(&inst, &full).unwrap();

    // Frozen oracle values (closed-form enumeration over the printed
    // instance; the spec quotes them rounded to six digits).
    let expected = [
        0.2,
        0.17466666666666666,
        0.3834285714285714,
        0.39575,
        0.3608888888888889,
    ];
    for (i, (got, want)) in curve.iter().zip(expected).enumerate() {
        assert!((got - want).abs() < 1e-6, "cutoff {}: {got} vs {want}", i + 1);
        let via_oracle = oracle_cutoff_value(&inst, &[0, 1, 2, 3, 4], i);
        assert!((got - via_oracle).abs() < 1e-12);
    }

    let (policy, no_query) = messaging::optimal_policy_binary(&inst, &full).unwrap();
    assert_eq!(policy.cutoff, 3, "no-query optimum sits at cutoff 4 (1-based)");
    assert!((no_query - 0.39575).abs() < 1e-6);

    // Value after the cut-after-3 query: optimal on each side.
    let left = oracle_best_value(&inst, &[0, 1, 2]);
    let right = oracle_best_value(&inst, &[3, 4]);
    assert!((left + right - 0.4812063492063492).abs() < 1e-12);
    let plan = adaptive::plan_adaptive(&inst, &oracle::canonical_cut_queries(&inst).unwrap(), 1)
        .unwrap();
    assert!((plan.root.value - 0.481206).abs() < 1e-6);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 0.1, "took {elapsed:?}");
    println!(
        "criterion 1: PASS (curve matches within 1e-6; optimum 0.39575 at cutoff 4; \
         after-query value 0.481206; {elapsed:?})"
    );
}

#[test]
fn criterion_02_messaging_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let t = 2 + (trial % 4); // 2..5 types
        let inst = random_normalized_binary(&mut rng, t);
        let subset = TypeSubset::full(inst.type_count());
        let (_, v_binary) = messaging::optimal_policy_binary(&inst, &subset).unwrap();
        let (policy, v_general) = messaging::optimal_policy_general(&inst, &subset).unwrap();
        let gap = (v_binary - v_general).abs();
        worst = worst.max(gap);
        assert!(gap < 1e-6, "trial {trial}: binary {v_binary} vs general {v_general}");
        assert!(model::is_bic(&inst, &subset, &policy, 1e-6).unwrap().holds());
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "criterion 2: PASS (200 instances, worst closed-form/LP gap {worst:.2e}; {elapsed:?})"
    );
}

#[test]
fn criterion_03_adaptive_dp_correctness() {
    let inst = fig3();
    let cuts = oracle::canonical_cut_queries(&inst).unwrap();
    let k1 = adaptive::plan_adaptive(&inst, &cuts, 1).unwrap().root.value;
    let k2 = adaptive::plan_adaptive(&inst, &cuts, 2).unwrap().root.value;
    assert!((k1 - 0.4812063492063492).abs() < 1e-9);
    assert!((k2 - 0.5605714285714286).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(0xADA9);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let t = 3 + (trial % 3); // 3..5 types
        let inst = random_normalized_binary(&mut rng, t);
        let mut queries = oracle::canonical_cut_queries(&inst).unwrap();
        queries.truncate(3);
        queries.push(random_partition(&mut rng, t, 2 + (trial % 2).min(t - 2)));
        let budget = trial % 3; // 0..2
        let planned = adaptive::plan_adaptive(&inst, &queries, budget).unwrap().root.value;
        let brute = adaptive::brute_force_adaptive(&inst, &queries, budget).unwrap();
        let gap = (planned - brute).abs();
        worst = worst.max(gap);
        assert!(gap < 1e-9, "trial {trial}: planned {planned} vs brute {brute}");
    }
    println!(
        "criterion 3: PASS (fig3 budgets 1,2 = 0.481206/0.560571; \
         100 random instances, worst plan/brute gap {worst:.2e})"
    );
}

#[test]
fn criterion_04_nonadaptive_dp_correctness() {
    let inst = fig3();
    let r2 = nonadaptive::plan_nonadaptive_binary(&inst, 2).unwrap();
    assert_eq!(r2.chosen, vec![1, 3]);
    assert!((r2.value - 0.5383492063492064).abs() < 1e-9);

    let mut rng = ChaCha8Rng::seed_from_u64(0x0A4B);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let t = 2 + (trial % 5); // 2..6 types
        let inst = random_normalized_binary(&mut rng, t);
        let cuts = oracle::canonical_cut_queries(&inst).unwrap();
        let budget = trial % 5; // 0..4
        let dp = nonadaptive::plan_nonadaptive_binary(&inst, budget).unwrap();
        let brute = nonadaptive::brute_force_nonadaptive(&inst, &cuts, budget).unwrap();
        let gap = (dp.value - brute.value).abs();
        worst = worst.max(gap);
        assert!(gap < 1e-9, "trial {trial}: dp {} vs brute {}", dp.value, brute.value);
        // The chosen cut sets induce the same partition value; the DP
        // reports 1-based cuts, brute reports query indices (cut - 1).
        let dp_as_indices: Vec<usize> = dp.chosen.iter().map(|c| c - 1).collect();
        assert_eq!(dp_as_indices, brute.chosen, "trial {trial}");
    }
    println!(
        "criterion 4: PASS (fig3 cuts {{1,3}} value 0.538349; \
         200 random instances, worst dp/brute gap {worst:.2e})"
    );
}

#[test]
fn criterion_05_submodularity_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x50B0);
    let mut checked = 0usize;
    for trial in 0..100 {
        let t = 3 + (trial % 4); // 3..6 types
        let inst = random_normalized_binary(&mut rng, t);
        let cuts = oracle::canonical_cut_queries(&inst).unwrap();
        let q_count = cuts.len();
        // Partition value per cut subset, via the shared cache.
        let mut cache = ValueCache::new(&inst);
        let mut value_of = vec![0.0f64; 1 << q_count];
        for mask in 0..(1usize << q_count) {
            let refs: Vec<&PartitionQuery> = (0..q_count)
                .filter(|&i| mask >> i & 1 == 1)
                .map(|i| &cuts[i])
                .collect();
            let partition = oracle::nonadaptive_partition(t, &refs);
            let mut total = 0.0;
            for cell in partition.cells() {
                total += cache.value(cell).unwrap();
            }
            value_of[mask] = total;
        }
        // Every nested pair of cut sets, every query: diminishing returns.
        let full_mask = (1usize << q_count) - 1;
        for sub in 0..=full_mask {
            let mut sup = sub;
            loop {
                for q in 0..q_count {
                    let gain_sub = value_of[sub | (1 << q)] - value_of[sub];
                    let gain_sup = value_of[sup | (1 << q)] - value_of[sup];
                    assert!(
                        gain_sub >= gain_sup - 1e-9,
                        "trial {trial} submodularity violated: sub {sub:b} sup {sup:b} q {q}"
                    );
                    checked += 1;
                }
                if sup == full_mask {
                    break;
                }
                sup = (sup + 1) | sub; // next superset of `sub`
            }
        }
        // Spot-check the production marginal-gain path against the table.
        let base: Vec<PartitionQuery> = vec![cuts[0].clone()];
        let gain = nonadaptive::marginal_gain(&inst, &base, cuts.last().unwrap()).unwrap();
        let mask_base = 1usize;
        let mask_with = mask_base | (1 << (q_count - 1));
        assert!((gain - (value_of[mask_with] - value_of[mask_base])).abs() < 1e-12);
    }
    println!("criterion 5: PASS ({checked} nested marginal-gain comparisons, zero violations)");
}

#[test]
fn criterion_06_non_submodularity_witness() {
    // The belief weights of the printed guessing-game construction do not
    // sum to one and admit pair-targeted menu messages that break its
    // claimed pooled value, so the generator uses repaired weights; the
    // witness constants change from (0, 1/14) to (0, g) with
    // g = 1/((N+1)(2^L+1)) = 1/25 at L=2, N=4 (see the decisions ledger).
    let (inst, bits) = nonadaptive::make_parity_counterexample(2, 4.0).unwrap();
    let g = parity_gap(2, 4.0);
    assert!((g - 0.04).abs() < 1e-15);

    // LP-verified pooled and separated values.
    let mut cache = ValueCache::new(&inst);
    let pooled_pair = cache.value(&TypeSubset::new(vec![2, 3], 4).unwrap()).unwrap();
    assert!((pooled_pair - 0.5 * (1.0 - g)).abs() < 1e-9, "pair value {pooled_pair}");
    let separated = cache.value(&TypeSubset::singleton(1)).unwrap();
    assert!((separated - 0.25).abs() < 1e-9, "singleton value {separated}");

    let gain_empty = nonadaptive::marginal_gain(&inst, &[], &bits[1]).unwrap();
    assert!(gain_empty.abs() < 1e-9, "gain given nothing: {gain_empty}");
    let gain_after_first =
        nonadaptive::marginal_gain(&inst, &[bits[0].clone()], &bits[1]).unwrap();
    assert!((gain_after_first - g).abs() < 1e-9, "gain given first bit: {gain_after_first}");
    assert!(
        gain_after_first > gain_empty + 1e-3,
        "marginal returns increase: submodularity fails"
    );
    println!(
        "criterion 6: PASS (second bit query gains {gain_empty:.1e} given nothing and \
         {gain_after_first} = 1/25 given the first bit; pooled 24/25, separated 1; \
         constants repaired from the misprinted construction, see decisions ledger)"
    );
}

#[test]
fn criterion_07_greedy_guarantee_and_trap() {
    // (a) The (1 - 1/e) guarantee on the random suite of criterion 4.
    let ratio = 1.0 - (-1.0f64).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0A4B);
    for trial in 0..200 {
        let t = 2 + (trial % 5);
        let inst = random_normalized_binary(&mut rng, t);
        let cuts = oracle::canonical_cut_queries(&inst).unwrap();
        let budget = trial % 5;
        let base = {
            let mut cache = ValueCache::new(&inst);
            cache.value(&TypeSubset::full(t)).unwrap()
        };
        let greedy_value = nonadaptive::greedy(&inst, &cuts, budget).unwrap().value;
        let opt = nonadaptive::brute_force_nonadaptive(&inst, &cuts, budget).unwrap().value;
        assert!(
            greedy_value - base >= ratio * (opt - base) - 1e-9,
            "trial {trial}: greedy {greedy_value}, base {base}, opt {opt}"
        );
    }

    // (b) The greedy trap: with the repaired construction the pooled value
    // is 1 - g, so greedy reaches 1/2 + (1 - g)/2 = 49/50 while the two
    // bit queries reach 1.
    let (inst, queries) = nonadaptive::make_greedy_trap(2, 4.0).unwrap();
    let g = parity_gap(2, 4.0);
    let greedy_result = nonadaptive::greedy(&inst, &queries, 2).unwrap();
    let expected = 0.5 + 0.5 * (1.0 - g);
    assert!((expected - 0.98).abs() < 1e-15);
    assert!(
        (greedy_result.value - expected).abs() < 1e-9,
        "greedy trap value {}",
        greedy_result.value
    );
    assert!(greedy_result.chosen[0] >= 2, "greedy is lured by an equality query first");
    let optimal = nonadaptive::brute_force_nonadaptive(&inst, &queries, 2).unwrap();
    assert_eq!(optimal.chosen, vec![0, 1]);
    assert!((optimal.value - 1.0).abs() < 1e-9);
    println!(
        "criterion 7: PASS (greedy meets the 1-1/e bound on 200 instances; \
         trap greedy 49/50 vs optimal 1 — constants repaired, see decisions ledger)"
    );
}

/// Brute-force set-cover decision, the independent side of criterion 8.
fn set_cover_brute(universe: usize, subsets: &[Vec<usize>], budget: usize) -> bool {
    fn rec(universe: usize, subsets: &[Vec<usize>], budget: usize, from: usize, covered: u32) -> bool {
        if covered.count_ones() as usize == universe {
            return true;
        }
        if budget == 0 {
            return false;
        }
        (from..subsets.len()).any(|i| {
            let mut next = covered;
            for &e in &subsets[i] {
                next |= 1 << e;
            }
            rec(universe, subsets, budget - 1, i + 1, next)
        })
    }
    rec(universe, subsets, budget, 0, 0)
}

#[test]
fn criterion_08_reduction_soundness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5E7C);
    let mut count = 0usize;
    let mut yes = 0usize;
    for u_size in 1..=5usize {
        for s_count in 1..=5usize {
            for budget in 1..=3usize {
                for _rep in 0..3 {
                    let universe: Vec<String> =
                        (0..u_size).map(|i| format!("e{i}")).collect();
                    let mut subsets: Vec<Vec<usize>> = Vec::new();
                    for _ in 0..s_count {
                        let mut s: Vec<usize> =
                            (0..u_size).filter(|_| rng.gen_bool(0.5)).collect();
                        if s.is_empty() {
                            s.push(rng.gen_range(0..u_size));
                        }
                        subsets.push(s);
                    }
                    let named: Vec<Vec<String>> = subsets
                        .iter()
                        .map(|s| s.iter().map(|&e| format!("e{e}")).collect())
                        .collect();
                    let decision =
                        nonadaptive::reduce_set_cover(&universe, &named, budget).unwrap();
                    let reduced = nonadaptive::decide_nonadaptive(&decision).unwrap();
                    let direct = set_cover_brute(u_size, &subsets, budget);
                    assert_eq!(
                        reduced, direct,
                        "|U|={u_size} |S|={s_count} K={budget} subsets {subsets:?}"
                    );
                    count += 1;
                    yes += usize::from(direct);
                }
            }
        }
    }
    assert!(count >= 200, "only {count} instances");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "criterion 8: PASS ({count} set-cover instances, {yes} YES, decisions agree; {elapsed:?})"
    );
}

#[test]
fn criterion_09_commitment() {
    // 100 random valid inputs are feasible and implemented within 1e-7.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0117);
    let (u_s, u_r) = BPInstance::canonical_binary_utilities();
    for trial in 0..100 {
        let mut ps: Vec<f64>;
        loop {
            ps = (0..3).map(|_| rng.gen_range(0.02..=0.5)).collect();
            ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if ps[1] - ps[0] > 5e-3 && ps[2] - ps[1] > 5e-3 {
                break;
            }
        }
        let mut masses: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= total;
        }
        masses[0] += 1.0 - masses.iter().sum::<f64>();
        let types: Vec<Belief> = ps.iter().map(|&p| Belief::binary(p).unwrap()).collect();
        let inst = BPInstance::new(u_s.clone(), u_r.clone(), types, masses).unwrap();
        // Random per-type BIC policies: pick the act probability in state 1
        // and cap the state-0 probability at the incentive bound.
        let policies: [MessagingPolicy; 3] = std::array::from_fn(|t| {
            let p = inst.binary_p(t);
            let s1: f64 = rng.gen_range(0.0..=1.0);
            let s0 = rng.gen_range(0.0..=1.0) * (s1 * p / (1.0 - p)).min(1.0);
            MessagingPolicy::new(vec![vec![1.0 - s0, s0], vec![1.0 - s1, s1]]).unwrap()
        });
        let combined = commitment::solve_commitment(&inst, &policies)
            .unwrap_or_else(|e| panic!("trial {trial} infeasible: {e}"));
        for t in 0..3 {
            assert!(
                commitment::implements_check(&combined, &policies[t], t, 1e-7),
                "trial {trial}: type {t} marginal mismatch"
            );
        }
        assert!(commitment::verify_constraint_system(&inst, &combined, 1e-7));
    }

    // The pinned example: type-optimal policies at p = (0.1, 0.3, 0.5).
    let types: Vec<Belief> = [0.1, 0.3, 0.5]
        .iter()
        .map(|&p| Belief::binary(p).unwrap())
        .collect();
    let inst = BPInstance::new(u_s.clone(), u_r.clone(), types, vec![1.0 / 3.0; 3]).unwrap();
    let policies = commitment::type_optimal_policies(&inst).unwrap();
    let combined = commitment::solve_commitment(&inst, &policies).unwrap();
    for t in 0..3 {
        assert!(commitment::implements_check(&combined, &policies[t], t, 1e-7));
    }
    let value = combined.expected_value(&inst);
    assert!((value - 0.6).abs() < 1e-7, "combined value {value}");

    // Commitment strictly beats the best single query without commitment.
    let (normalized, _) = model::normalize_binary(&inst).unwrap();
    let cuts = oracle::canonical_cut_queries(&normalized).unwrap();
    let no_commit = adaptive::plan_adaptive(&normalized, &cuts, 1).unwrap().root.value;
    assert!(
        (no_commit - 0.5333333333333333).abs() < 1e-9,
        "one-query value {no_commit}"
    );
    assert!(value > no_commit + 1e-6);
    println!(
        "criterion 9: PASS (100 random inputs feasible; pinned example reaches 0.6 \
         vs 0.533333 without commitment)"
    );
}

#[test]
fn criterion_10_costly_variants() {
    let inst = fig3();
    let cuts = oracle::canonical_cut_queries(&inst).unwrap();

    let adaptive_costly = adaptive::plan_adaptive_costly(&inst, &cuts, &[0.01; 4]).unwrap();
    assert!(
        (adaptive_costly.root.value - 0.5405714285714286).abs() < 1e-9,
        "adaptive net {}",
        adaptive_costly.root.value
    );

    let nonadaptive_costly = nonadaptive::plan_nonadaptive_binary_costly(&inst, &[0.01; 4]).unwrap();
    assert!(
        (nonadaptive_costly.value - 0.5305714285714286).abs() < 1e-9,
        "non-adaptive net {}",
        nonadaptive_costly.value
    );
    assert_eq!(nonadaptive_costly.chosen, vec![1, 3, 4]);

    // Zero-cost variants coincide with budgeted planning at K = min(T-1, Q).
    let free_adaptive = adaptive::plan_adaptive_costly(&inst, &cuts, &[0.0; 4]).unwrap();
    let budgeted = adaptive::plan_adaptive(&inst, &cuts, 4).unwrap();
    assert!((free_adaptive.root.value - budgeted.root.value).abs() < 1e-9);
    let free_nonadaptive = nonadaptive::plan_nonadaptive_binary_costly(&inst, &[0.0; 4]).unwrap();
    let budgeted_na = nonadaptive::plan_nonadaptive_binary(&inst, 4).unwrap();
    assert!((free_nonadaptive.value - budgeted_na.value).abs() < 1e-9);
    assert_eq!(free_nonadaptive.chosen, budgeted_na.chosen);

    println!(
        "criterion 10: PASS (penny-cost nets 0.540571 adaptive / 0.530571 non-adaptive; \
         zero-cost variants match budgeted planning)"
    );
}

#[test]
fn criterion_11_geometry_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x63011);
    let mut checked = 0usize;
    while checked < 1000 {
        let t = 2 + (checked % 5);
        let inst = random_normalized_binary(&mut rng, t);
        let message: usize = rng.gen_range(0..2);
        let on_state: f64 = rng.gen_range(0.05..=1.0);
        let off_state: f64 = rng.gen_range(0.0..=1.0);
        let mut rows = vec![vec![0.0; 2]; 2];
        rows[message][message] = on_state;
        rows[message][1 - message] = 1.0 - on_state;
        rows[1 - message][message] = off_state;
        rows[1 - message][1 - message] = 1.0 - off_state;
        let policy = MessagingPolicy::new(rows).unwrap();
        let query = SimulationQuery::new(&inst, policy, message).unwrap();
        let threshold = oracle::binary_threshold(&query).unwrap();
        let partition = oracle::induced_partition(&inst, &query).unwrap();
        for ty in 0..t {
            let p = inst.binary_p(ty);
            let mass_on_message = if message == 1 { p } else { 1.0 - p };
            if (mass_on_message - threshold).abs() < 1e-7 {
                continue; // stay off the knife edge
            }
            let follows_rule = mass_on_message >= threshold;
            let inside = oracle::separation_region_test(&inst, &query, inst.belief(ty))
                == SeparationResult::Inside;
            assert_eq!(inside, follows_rule, "threshold rule vs separation test");
            // Partition membership: follower types share one cell whose
            // members all follow.
            let cell = partition.cell_containing(ty);
            for &other in cell.indices() {
                let other_mass = if message == 1 {
                    inst.binary_p(other)
                } else {
                    1.0 - inst.binary_p(other)
                };
                if (other_mass - threshold).abs() < 1e-7 {
                    continue;
                }
                assert_eq!(
                    other_mass >= threshold,
                    follows_rule,
                    "cell mixes followers and deviators"
                );
            }
            checked += 1;
        }
    }
    println!("criterion 11: PASS ({checked} (instance, query, belief) triples agree exactly)");
}

#[test]
fn smoke_dp_scaling() {
    // The asymptotic runtime claims are only smoke-checked: doubling the
    // type count must not blow the interval DP up super-polynomially.
    let mut rng = ChaCha8Rng::seed_from_u64(0x57A1E);
    let small = random_normalized_binary(&mut rng, 10);
    let large = random_normalized_binary(&mut rng, 20);
    let time = |inst: &BPInstance| {
        let start = Instant::now();
        nonadaptive::plan_nonadaptive_binary(inst, 3).unwrap();
        start.elapsed().as_secs_f64()
    };
    let t_small = time(&small).max(1e-4);
    let t_large = time(&large);
    assert!(
        t_large < 100.0 * t_small + 0.5,
        "suspicious scaling: {t_small}s -> {t_large}s"
    );
    println!("smoke: PASS (interval DP at T=10 {t_small:.4}s, T=20 {t_large:.4}s)");
}
