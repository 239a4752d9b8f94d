//! Deterministic CSV emission for the two standard figures: the
//! utility-versus-cutoff curves with and without a query, and the
//! marginal-gain table contrasting an empty base query set with an
//! informed one.

use persuasion::messaging;
use persuasion::model::{BPInstance, TypeSubset};
use persuasion::nonadaptive;
use persuasion::oracle::{self, PartitionQuery};

use crate::fmt_sig9;
use crate::CliError;

/// Rows of the utility-vs-cutoff table plus the two headline optima.
pub struct CutoffFigure {
    pub csv: String,
    pub no_query_optimum: f64,
    pub no_query_cutoff: usize, // 1-based
    pub after_query_optimum: f64,
    pub query_cut: usize, // 1-based
}

/// Cutoff curve data: one row per cutoff with the no-query utility, the
/// utility when the designated cut query is made first (the cell
/// containing the cutoff uses it, the other cell is optimal), and a flag
/// on the no-query optimum. `query_cut` defaults to the best single cut.
pub fn utility_vs_cutoff(
    instance: &BPInstance,
    query_cut: Option<usize>,
) -> Result<CutoffFigure, CliError> {
    let t = instance.type_count();
    let full = TypeSubset::full(t);
    let curve = messaging::cutoff_curve(instance, &full)?;
    let mut best_pos = 0;
    for (i, &u) in curve.iter().enumerate() {
        if u > curve[best_pos] {
            best_pos = i;
        }
    }

    let cut = match query_cut {
        Some(c) => {
            if c == 0 || c >= t {
                return Err(CliError::BadArgument(format!(
                    "cut {c} out of range for {t} types"
                )));
            }
            c
        }
        None if t > 1 => nonadaptive::plan_nonadaptive_binary(instance, 1)?
            .chosen
            .first()
            .copied()
            .unwrap_or(1),
        None => 0, // single type: no cut exists
    };

    let mut rows = String::from("cutoff,u_no_query,u_after_query,best\n");
    let mut after_optimum = curve[best_pos];
    if cut > 0 {
        let left = TypeSubset::new((0..cut).collect(), t).unwrap();
        let right = TypeSubset::new((cut..t).collect(), t).unwrap();
        let left_curve = messaging::cutoff_curve(instance, &left)?;
        let right_curve = messaging::cutoff_curve(instance, &right)?;
        let left_best = left_curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let right_best = right_curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        after_optimum = left_best + right_best;
        for i in 0..t {
            let after = if i < cut {
                left_curve[i] + right_best
            } else {
                left_best + right_curve[i - cut]
            };
            rows.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                fmt_sig9(curve[i]),
                fmt_sig9(after),
                u8::from(i == best_pos)
            ));
        }
    } else {
        for i in 0..t {
            rows.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                fmt_sig9(curve[i]),
                fmt_sig9(curve[i]),
                u8::from(i == best_pos)
            ));
        }
    }
    Ok(CutoffFigure {
        csv: rows,
        no_query_optimum: curve[best_pos],
        no_query_cutoff: best_pos + 1,
        after_query_optimum: after_optimum,
        query_cut: cut,
    })
}

fn cut_set_label(cuts: &[usize]) -> String {
    let mut label = String::from("{");
    for (i, c) in cuts.iter().enumerate() {
        if i > 0 {
            label.push(';');
        }
        label.push_str(&c.to_string());
    }
    label.push('}');
    label
}

/// Marginal-gain table: for every canonical cut, the gain over the empty
/// base and over the informed base holding the two outermost cuts (when
/// the instance has at least three types).
pub fn submodularity_table(instance: &BPInstance) -> Result<String, CliError> {
    let t = instance.type_count();
    let cuts = oracle::canonical_cut_queries(instance)?;
    let mut bases: Vec<(String, Vec<PartitionQuery>)> =
        vec![(cut_set_label(&[]), Vec::new())];
    if t >= 3 {
        bases.push((
            cut_set_label(&[1, t - 1]),
            vec![cuts[0].clone(), cuts[t - 2].clone()],
        ));
    }
    let mut out = String::from("base,query,gain\n");
    for (label, base) in &bases {
        for (ci, query) in cuts.iter().enumerate() {
            let gain = nonadaptive::marginal_gain(instance, base, query)?;
            out.push_str(&format!("{label},cut:{},{}\n", ci + 1, fmt_sig9(gain)));
        }
    }
    Ok(out)
}
