//! Command dispatch for the `persuade` binary.
//!
//! Exit codes: 0 success, 2 validation/parse errors, 3 numerical
//! failures, 4 exceeded caps.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use persuasion::adaptive::{self, PlanAction, PlanNode};
use persuasion::commitment;
use persuasion::messaging;
use persuasion::model::{self, TypeSubset};
use persuasion::nonadaptive;
use persuasion::oracle::{self, PartitionQuery};

use persuasion_cli::scenario::{self, parse_scenario, Scenario, ScenarioError};
use persuasion_cli::{figures, fmt_sig9, CliError};

#[derive(Parser)]
#[command(
    name = "persuade",
    about = "Persuasion planning with oracle queries over receiver beliefs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureKind {
    UtilityVsCutoff,
    Submodularity,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal messaging policy for the full type set.
    SolveMessaging {
        scenario: PathBuf,
        /// Incentive-check tolerance for the reported verification.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Optimal adaptive querying plan (backward induction).
    AdaptivePlan {
        scenario: PathBuf,
        /// Query budget; defaults to the scenario's budget, else min(T-1, Q).
        #[arg(long)]
        budget: Option<usize>,
        /// Uniform per-query cost (switches to the costly planner).
        #[arg(long)]
        cost: Option<f64>,
        /// File with one per-query cost per line.
        #[arg(long)]
        costs: Option<PathBuf>,
    },
    /// Optimal non-adaptive cut selection (two-state instances).
    NonadaptivePlan {
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        cost: Option<f64>,
        #[arg(long)]
        costs: Option<PathBuf>,
    },
    /// Greedy non-adaptive query selection over the scenario's queries.
    Greedy {
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        /// Uniform per-query cost (switches to the costly greedy rule).
        #[arg(long)]
        cost: Option<f64>,
    },
    /// Plan adaptively, then re-evaluate the plan from scratch.
    Evaluate {
        scenario: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Emit figure data as CSV.
    FigureData {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        which: FigureKind,
        #[arg(long)]
        out: PathBuf,
        /// Designated query for the cutoff figure: `cut:N` or a query index.
        #[arg(long)]
        query: Option<String>,
    },
    /// Reduce a set-cover instance and decide it by brute force.
    ReduceSetcover {
        /// TOML file with `universe`, `subsets`, and `budget`.
        input: Option<PathBuf>,
        /// Generate a random instance instead of reading a file.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 4)]
        universe: usize,
        #[arg(long, default_value_t = 4)]
        subsets: usize,
        #[arg(long)]
        budget: Option<usize>,
        /// Seed for --random.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the reduced scenario here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the guessing-game counterexample instances.
    Counterexample {
        /// Number of bit queries (the instance has 2^L types).
        #[arg(long = "L")]
        bits: usize,
        /// Receiver penalty for wrong guesses; defaults to 2^L.
        #[arg(long)]
        penalty: Option<f64>,
        /// Report the marginal gains of the last bit query.
        #[arg(long)]
        check_submodularity: bool,
        /// Include equality queries and compare greedy against optimal.
        #[arg(long)]
        trap: bool,
        /// Write the generated scenario here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query commitment: implement all three per-type policies at once.
    Commitment {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn subset_label(subset: &TypeSubset) -> String {
    let mut s = String::from("{");
    for (k, i) in subset.indices().iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        s.push_str(&(i + 1).to_string());
    }
    s.push('}');
    s
}

/// `cut:N` when the scenario is binary and the query is an adjacent cut
/// in the descending-belief order, otherwise `q#<index>`.
fn query_label(queries: &[PartitionQuery], qi: usize, t: usize, binary: bool) -> String {
    let q = &queries[qi];
    if binary && q.cells().len() == 2 {
        let left = &q.cells()[0];
        let right = &q.cells()[1];
        if left.is_interval() && right.is_interval() && left.indices()[0] == 0 {
            let cut = left.len();
            if right.indices()[0] == cut && right.indices().last() == Some(&(t - 1)) {
                return format!("cut:{cut}");
            }
        }
    }
    format!("q#{qi}")
}

fn read_costs(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| CliError::BadArgument(format!("bad cost value {tok:?}")))
        })
        .collect()
}

/// Cost resolution: explicit flags first; the scenario's stored costs only
/// apply when neither a budget flag nor a cost flag is present.
fn resolve_costs(
    sc: &Scenario,
    n: usize,
    budget: Option<usize>,
    cost: Option<f64>,
    costs: Option<PathBuf>,
) -> Result<Option<Vec<f64>>, CliError> {
    let resolved = if let Some(path) = costs {
        Some(read_costs(&path)?)
    } else if let Some(c) = cost {
        Some(vec![c; n])
    } else if budget.is_none() {
        sc.file.costs.clone()
    } else {
        None
    };
    if let Some(v) = &resolved {
        if v.len() != n {
            return Err(CliError::BadArgument(format!(
                "expected {n} costs, got {}",
                v.len()
            )));
        }
    }
    Ok(resolved)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn print_plan_node(
    node: &PlanNode,
    queries: &[PartitionQuery],
    t: usize,
    binary: bool,
    depth: usize,
) {
    let indent = "  ".repeat(depth);
    match node.action {
        PlanAction::Stop => println!(
            "{indent}{} k={}: stop (value {})",
            subset_label(&node.subset),
            node.remaining_budget,
            fmt_sig9(node.value)
        ),
        PlanAction::Query(qi) => {
            println!(
                "{indent}{} k={}: ask {} (value {})",
                subset_label(&node.subset),
                node.remaining_budget,
                query_label(queries, qi, t, binary),
                fmt_sig9(node.value)
            );
            for child in &node.children {
                print_plan_node(child, queries, t, binary, depth + 1);
            }
        }
    }
}

fn default_budget(scenario: &Scenario, flag: Option<usize>) -> usize {
    flag.or(scenario.file.budget)
        .unwrap_or_else(|| (scenario.type_count() - 1).min(scenario.queries.len()))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::SolveMessaging { scenario, tol } => {
            let sc = parse_scenario(&scenario)?;
            let full = TypeSubset::full(sc.type_count());
            if sc.file.binary {
                let (policy, value) = messaging::optimal_policy_binary(&sc.instance, &full)?;
                let menu = policy.to_menu_policy(&sc.instance, &full)?;
                let bic = model::is_bic(&sc.instance, &full, &menu, tol)?;
                println!(
                    "cutoff {} (belief {}), act probability in state 0 = {}",
                    policy.cutoff + 1,
                    fmt_sig9(sc.instance.binary_p(policy.cutoff)),
                    fmt_sig9(policy.send_prob_state0)
                );
                println!("value {}", fmt_sig9(value));
                println!("incentive-compatible at {tol:e}: {}", bic.holds());
            } else {
                let (policy, value) = messaging::optimal_policy_general(&sc.instance, &full)?;
                let bic = model::is_bic(&sc.instance, &full, &policy, tol)?;
                println!(
                    "menu policy with {} messages over {} actions",
                    policy.messages().len(),
                    sc.instance.action_count()
                );
                println!("value {}", fmt_sig9(value));
                println!("incentive-compatible at {tol:e}: {}", bic.holds());
            }
            Ok(())
        }
        Command::AdaptivePlan { scenario, budget, cost, costs } => {
            let sc = parse_scenario(&scenario)?;
            let cost_vec = resolve_costs(&sc, sc.queries.len(), budget, cost, costs)?;
            let plan = match &cost_vec {
                Some(costs) => adaptive::plan_adaptive_costly(&sc.instance, &sc.queries, costs)?,
                None => {
                    let k = default_budget(&sc, budget);
                    adaptive::plan_adaptive(&sc.instance, &sc.queries, k)?
                }
            };
            match &cost_vec {
                Some(_) => println!("net value {}", fmt_sig9(plan.root.value)),
                None => println!("value {}", fmt_sig9(plan.root.value)),
            }
            print_plan_node(&plan.root, &sc.queries, sc.type_count(), sc.file.binary, 0);
            Ok(())
        }
        Command::NonadaptivePlan { scenario, budget, cost, costs } => {
            let sc = parse_scenario(&scenario)?;
            let cut_count = sc.type_count() - 1;
            let cost_vec = resolve_costs(&sc, cut_count, budget, cost, costs)?;
            let result = match &cost_vec {
                Some(costs) => {
                    nonadaptive::plan_nonadaptive_binary_costly(&sc.instance, costs)?
                }
                None => {
                    let k = default_budget(&sc, budget).min(cut_count);
                    nonadaptive::plan_nonadaptive_binary(&sc.instance, k)?
                }
            };
            let cuts = result
                .chosen
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            match &cost_vec {
                Some(_) => println!("cuts {{{cuts}}}, net value {}", fmt_sig9(result.value)),
                None => println!("cuts {{{cuts}}}, value {}", fmt_sig9(result.value)),
            }
            for (cell, value) in &result.cells {
                println!("  cell {}: {}", subset_label(cell), fmt_sig9(*value));
            }
            Ok(())
        }
        Command::Greedy { scenario, budget, cost } => {
            let sc = parse_scenario(&scenario)?;
            let result = match cost {
                Some(c) => nonadaptive::greedy_costly(&sc.instance, &sc.queries, c)?,
                None => {
                    let k = default_budget(&sc, budget);
                    nonadaptive::greedy(&sc.instance, &sc.queries, k)?
                }
            };
            let picks = result
                .chosen
                .iter()
                .map(|&qi| query_label(&sc.queries, qi, sc.type_count(), sc.file.binary))
                .collect::<Vec<_>>()
                .join(", ");
            let picks = if picks.is_empty() { "(none)".to_string() } else { picks };
            match cost {
                Some(_) => println!("picked {picks}; net value {}", fmt_sig9(result.value)),
                None => println!("picked {picks}; value {}", fmt_sig9(result.value)),
            }
            Ok(())
        }
        Command::Evaluate { scenario, budget } => {
            let sc = parse_scenario(&scenario)?;
            let k = default_budget(&sc, budget);
            let plan = adaptive::plan_adaptive(&sc.instance, &sc.queries, k)?;
            let replayed = adaptive::evaluate_plan(&sc.instance, &plan)?;
            println!("planned value {}", fmt_sig9(plan.root.value));
            println!("re-evaluated value {}", fmt_sig9(replayed));
            println!(
                "agreement within 1e-9: {}",
                (plan.root.value - replayed).abs() < 1e-9
            );
            Ok(())
        }
        Command::FigureData { scenario, which, out, query } => {
            let sc = parse_scenario(&scenario)?;
            match which {
                FigureKind::UtilityVsCutoff => {
                    let cut = match query {
                        None => None,
                        Some(spec) => Some(parse_query_as_cut(&sc, &spec)?),
                    };
                    let figure = figures::utility_vs_cutoff(&sc.instance, cut)?;
                    write_file(&out, &figure.csv)?;
                    println!(
                        "no-query optimum {} at cutoff {}",
                        fmt_sig9(figure.no_query_optimum),
                        figure.no_query_cutoff
                    );
                    if figure.query_cut > 0 {
                        println!(
                            "after-query optimum {} using cut:{}",
                            fmt_sig9(figure.after_query_optimum),
                            figure.query_cut
                        );
                    }
                    println!("wrote {}", out.display());
                }
                FigureKind::Submodularity => {
                    let table = figures::submodularity_table(&sc.instance)?;
                    write_file(&out, &table)?;
                    println!("wrote {}", out.display());
                }
            }
            Ok(())
        }
        Command::ReduceSetcover { input, random, universe, subsets, budget, seed, out } => {
            let (universe, subset_lists, k) = if random {
                random_set_cover(universe, subsets, budget.unwrap_or(2), seed)
            } else {
                let path = input.ok_or_else(|| {
                    CliError::BadArgument("provide an input file or --random".into())
                })?;
                read_set_cover(&path, budget)?
            };
            let decision = nonadaptive::reduce_set_cover(&universe, &subset_lists, k)?;
            println!(
                "universe of {}, {} subsets, budget {k}",
                universe.len(),
                subset_lists.len()
            );
            println!("target utility {}", fmt_sig9(decision.target));
            let answer = nonadaptive::decide_nonadaptive(&decision)?;
            println!("decision: {}", if answer { "YES" } else { "NO" });
            if let Some(path) = out {
                let file = scenario::scenario_from_instance(
                    &decision.instance,
                    &decision.queries,
                    Some(decision.budget),
                );
                write_file(&path, &scenario::serialize_scenario(&file))?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Counterexample { bits, penalty, check_submodularity, trap, out } => {
            let penalty = penalty.unwrap_or_else(|| (1u64 << bits) as f64);
            let gap = nonadaptive::parity_gap(bits, penalty);
            if trap {
                let (instance, queries) = nonadaptive::make_greedy_trap(bits, penalty)?;
                println!(
                    "guessing-game trap: {} types, {} states, penalty {}, gap {}",
                    instance.type_count(),
                    instance.state_count(),
                    fmt_sig9(penalty),
                    fmt_sig9(gap)
                );
                let greedy_result = nonadaptive::greedy(&instance, &queries, bits)?;
                let optimal = nonadaptive::brute_force_nonadaptive(&instance, &queries, bits)?;
                println!("greedy value with budget {bits}: {}", fmt_sig9(greedy_result.value));
                println!("optimal value with budget {bits}: {}", fmt_sig9(optimal.value));
                if let Some(path) = out {
                    let file =
                        scenario::scenario_from_instance(&instance, &queries, Some(bits));
                    write_file(&path, &scenario::serialize_scenario(&file))?;
                    println!("wrote {}", path.display());
                }
            } else {
                let (instance, queries) = nonadaptive::make_parity_counterexample(bits, penalty)?;
                println!(
                    "guessing-game instance: {} types, {} states, penalty {}, gap {}",
                    instance.type_count(),
                    instance.state_count(),
                    fmt_sig9(penalty),
                    fmt_sig9(gap)
                );
                if check_submodularity {
                    let last = queries.len() - 1;
                    let gain_empty =
                        nonadaptive::marginal_gain(&instance, &[], &queries[last])?;
                    let gain_after = nonadaptive::marginal_gain(
                        &instance,
                        &queries[..last].to_vec(),
                        &queries[last],
                    )?;
                    println!(
                        "gain of bit query {} given {{}}: {}",
                        last + 1,
                        fmt_sig9(gain_empty)
                    );
                    println!(
                        "gain of bit query {} given the other bit queries: {}",
                        last + 1,
                        fmt_sig9(gain_after)
                    );
                    println!(
                        "submodularity violated: {}",
                        gain_after > gain_empty + 1e-9
                    );
                }
                if let Some(path) = out {
                    let file =
                        scenario::scenario_from_instance(&instance, &queries, Some(bits));
                    write_file(&path, &scenario::serialize_scenario(&file))?;
                    println!("wrote {}", path.display());
                }
            }
            Ok(())
        }
        Command::Commitment { scenario, tol } => {
            let sc = parse_scenario(&scenario)?;
            if sc.instance.is_canonical_binary() && sc.type_count() == 3 {
                run_commitment_binary(&sc, tol)
            } else {
                run_elimination_demo(&sc)
            }
        }
    }
}

fn run_commitment_binary(sc: &Scenario, tol: f64) -> Result<(), CliError> {
    let policies = commitment::type_optimal_policies(&sc.instance)?;
    let combined = commitment::solve_commitment(&sc.instance, &policies)?;
    let value = combined.expected_value(&sc.instance);
    println!("combined policy implements all three type-optimal policies");
    for t in 0..3 {
        println!(
            "  type {}: implemented within {tol:e}: {}",
            t + 1,
            commitment::implements_check(&combined, &policies[t], t, tol)
        );
    }
    println!(
        "constraint system satisfied at {tol:e}: {}",
        commitment::verify_constraint_system(&sc.instance, &combined, tol)
    );
    println!("combined expected value {}", fmt_sig9(value));
    if sc.file.binary {
        let cuts = oracle::canonical_cut_queries(&sc.instance)?;
        let plan = adaptive::plan_adaptive(&sc.instance, &cuts, 1)?;
        println!(
            "best single query without commitment {}",
            fmt_sig9(plan.root.value)
        );
    }
    Ok(())
}

/// For instances where every state rules out exactly one type: show how a
/// state-informed query identifies the receiver exactly.
fn run_elimination_demo(sc: &Scenario) -> Result<(), CliError> {
    let inst = &sc.instance;
    let t = inst.type_count();
    for state in 0..inst.state_count() {
        let survivors: Vec<usize> = (0..t)
            .filter(|&ty| inst.belief(ty).prob(state) > 0.0)
            .collect();
        if survivors.len() != 2 {
            return Err(CliError::BadArgument(format!(
                "state {state} leaves {} candidate types; the elimination demo needs \
                 exactly two (commitment expects a two-state three-type scenario)",
                survivors.len()
            )));
        }
        let query = oracle::find_separating_query(inst, survivors[0], survivors[1])?
            .ok_or_else(|| {
                CliError::BadArgument(format!("state {state}: surviving pair is not separable"))
            })?;
        let partition = oracle::induced_partition(inst, &query)?;
        println!(
            "state {}: candidates {} split into {}",
            sc.file.states[state],
            subset_label(&TypeSubset::new(survivors.clone(), t).unwrap()),
            partition
                .cells()
                .iter()
                .map(subset_label)
                .collect::<Vec<_>>()
                .join("|")
        );
        for &ty in &survivors {
            let cell = oracle::answer_query(&partition, ty);
            let identified: Vec<usize> = cell
                .indices()
                .iter()
                .copied()
                .filter(|&u| inst.belief(u).prob(state) > 0.0)
                .collect();
            println!(
                "  true type {} -> answer {} -> identified {}",
                ty + 1,
                subset_label(&cell),
                subset_label(&TypeSubset::new(identified, t).unwrap())
            );
        }
    }
    println!("state-informed querying identifies the receiver exactly");
    Ok(())
}

fn parse_query_as_cut(sc: &Scenario, spec: &str) -> Result<usize, CliError> {
    if let Some(rest) = spec.strip_prefix("cut:") {
        return rest
            .parse::<usize>()
            .map_err(|_| CliError::BadArgument(format!("bad cut spec {spec:?}")));
    }
    let qi: usize = spec
        .parse()
        .map_err(|_| CliError::BadArgument(format!("bad query spec {spec:?}")))?;
    let query = sc
        .queries
        .get(qi)
        .ok_or_else(|| CliError::BadArgument(format!("query index {qi} out of range")))?;
    let label = query_label(std::slice::from_ref(query), 0, sc.type_count(), sc.file.binary);
    label
        .strip_prefix("cut:")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| CliError::BadArgument(format!("query {qi} is not an adjacent cut")))
}

#[derive(Deserialize)]
struct SetCoverFile {
    universe: Vec<String>,
    subsets: Vec<Vec<String>>,
    budget: Option<usize>,
}

fn read_set_cover(
    path: &Path,
    budget_flag: Option<usize>,
) -> Result<(Vec<String>, Vec<Vec<String>>, usize), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: SetCoverFile = toml::from_str(&text)
        .map_err(|e| CliError::Scenario(ScenarioError::Parse(e.to_string())))?;
    let budget = budget_flag.or(file.budget).unwrap_or(file.subsets.len());
    Ok((file.universe, file.subsets, budget))
}

fn random_set_cover(
    universe_size: usize,
    subset_count: usize,
    budget: usize,
    seed: u64,
) -> (Vec<String>, Vec<Vec<String>>, usize) {
    // splitmix64: small, deterministic, no extra dependency.
    let mut state = seed;
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let universe: Vec<String> = (0..universe_size).map(|i| format!("e{i}")).collect();
    let mut subsets = Vec::with_capacity(subset_count);
    for _ in 0..subset_count {
        let mut members: Vec<String> = universe
            .iter()
            .filter(|_| next() % 2 == 0)
            .cloned()
            .collect();
        if members.is_empty() && universe_size > 0 {
            members.push(universe[(next() % universe_size as u64) as usize].clone());
        }
        subsets.push(members);
    }
    (universe, subsets, budget)
}
