//! A minimal linear-programming contract: maximize `c.x` subject to linear
//! constraints and per-variable bounds. The numerically delicate pivoting
//! is delegated to the `minilp` sparse simplex solver; this module owns
//! input validation and post-hoc feasibility verification.

use thiserror::Error;

/// Default feasibility tolerance for solved programs.
pub const DEFAULT_LP_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LinprogError {
    #[error("malformed linear program: {0}")]
    BadInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// A dense-input linear program over `dim` variables. Variables default to
/// bounds `[0, +inf)`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<(Vec<f64>, Relation, f64)>,
    bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// New program maximizing `objective`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, bound: f64) {
        self.constraints.push((coeffs, relation, bound));
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    pub fn constraints(&self) -> &[(Vec<f64>, Relation, f64)] {
        &self.constraints
    }

    fn validate(&self) -> Result<(), LinprogError> {
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LinprogError::BadInput("non-finite objective coefficient".into()));
        }
        for (i, (coeffs, _, b)) in self.constraints.iter().enumerate() {
            if coeffs.len() != self.dim() {
                return Err(LinprogError::BadInput(format!(
                    "constraint {i} has {} coefficients, expected {}",
                    coeffs.len(),
                    self.dim()
                )));
            }
            if coeffs.iter().any(|c| !c.is_finite()) || !b.is_finite() {
                return Err(LinprogError::BadInput(format!(
                    "constraint {i} contains a non-finite value"
                )));
            }
        }
        for (lo, hi) in &self.bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(LinprogError::BadInput("inconsistent variable bounds".into()));
            }
        }
        Ok(())
    }
}

/// Result of solving a linear program.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Solves a linear program. `Optimal` solutions are verified to satisfy
/// every constraint and bound within `tol`; a solution the solver reports
/// as optimal but that fails verification surfaces as `NumericalFailure`
/// rather than a silently wrong answer.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpOutcome, LinprogError> {
    lp.validate()?;
    let mut problem = minilp::Problem::new(minilp::OptimizationDirection::Maximize);
    let vars: Vec<minilp::Variable> = (0..lp.dim())
        .map(|j| problem.add_var(lp.objective[j], lp.bounds[j]))
        .collect();
    for (coeffs, relation, bound) in &lp.constraints {
        let mut expr = minilp::LinearExpr::empty();
        let mut any = false;
        for (j, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                expr.add(vars[j], c);
                any = true;
            }
        }
        if !any {
            // Constant constraint: either vacuous or infeasible on its own.
            let ok = match relation {
                Relation::Le => 0.0 <= bound + tol,
                Relation::Eq => bound.abs() <= tol,
                Relation::Ge => 0.0 >= bound - tol,
            };
            if ok {
                continue;
            }
            return Ok(LpOutcome::Infeasible);
        }
        let op = match relation {
            Relation::Le => minilp::ComparisonOp::Le,
            Relation::Eq => minilp::ComparisonOp::Eq,
            Relation::Ge => minilp::ComparisonOp::Ge,
        };
        problem.add_constraint(expr, op, *bound);
    }
    match problem.solve() {
        Ok(solution) => {
            let x: Vec<f64> = vars.iter().map(|v| solution[*v]).collect();
            let value = solution.objective();
            verify(lp, &x, tol)?;
            Ok(LpOutcome::Optimal { x, value })
        }
        Err(minilp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
        Err(minilp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
    }
}

fn verify(lp: &LinearProgram, x: &[f64], tol: f64) -> Result<(), LinprogError> {
    for (j, &xj) in x.iter().enumerate() {
        let (lo, hi) = lp.bounds[j];
        if xj < lo - tol || xj > hi + tol {
            return Err(LinprogError::NumericalFailure(format!(
                "variable {j} = {xj} violates bounds [{lo}, {hi}]"
            )));
        }
    }
    for (i, (coeffs, relation, bound)) in lp.constraints.iter().enumerate() {
        let lhs: f64 = coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
        let ok = match relation {
            Relation::Le => lhs <= bound + tol,
            Relation::Eq => (lhs - bound).abs() <= tol,
            Relation::Ge => lhs >= bound - tol,
        };
        if !ok {
            return Err(LinprogError::NumericalFailure(format!(
                "constraint {i} violated: lhs {lhs} vs bound {bound}"
            )));
        }
    }
    Ok(())
}
