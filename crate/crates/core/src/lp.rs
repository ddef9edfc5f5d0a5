//! Incremental linear programs on top of `minilp`.
//!
//! Rows added after the first solve are applied to the previous optimal
//! basis with dual simplex steps. If the warm start fails numerically the
//! whole program is rebuilt and solved cold.

use std::panic::{catch_unwind, AssertUnwindSafe};

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution, Variable};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
}

impl Relation {
    fn op(self) -> ComparisonOp {
        match self {
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { objective: f64, values: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// A minimization LP that grows by rows between solves.
pub struct LinearProgram {
    costs: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<Row>,
    /// Rows already folded into `warm`.
    applied: usize,
    warm: Option<(Solution, Vec<Variable>)>,
    cold_solves: usize,
}

impl Default for LinearProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        LinearProgram {
            costs: Vec::new(),
            bounds: Vec::new(),
            rows: Vec::new(),
            applied: 0,
            warm: None,
            cold_solves: 0,
        }
    }

    /// Adds a variable with objective coefficient `cost` and box `[lo, hi]`.
    /// Variables must all be declared before the first solve.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        assert!(self.warm.is_none(), "variables must precede the first solve");
        self.costs.push(cost);
        self.bounds.push((lo, hi));
        self.costs.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Number of from-scratch solves so far (the first solve counts).
    pub fn cold_solves(&self) -> usize {
        self.cold_solves
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|(i, _)| *i < self.costs.len()));
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&mut self) -> Result<LpOutcome> {
        if let Some((solution, vars)) = self.warm.take() {
            match self.warm_solve(solution, &vars) {
                Ok(Some(outcome)) => return Ok(outcome),
                Ok(None) => {}
                Err(e) => return Err(e),
            }
        }
        self.cold_solve()
    }

    /// `Ok(None)` asks the caller to fall back to a cold solve.
    fn warm_solve(&mut self, mut solution: Solution, vars: &[Variable]) -> Result<Option<LpOutcome>> {
        for row in &self.rows[self.applied..] {
            let expr = expr_of(row, vars);
            let op = row.relation.op();
            let rhs = row.rhs;
            let step = catch_unwind(AssertUnwindSafe(move || solution.add_constraint(expr, op, rhs)));
            match step {
                Ok(Ok(next)) => solution = next,
                Ok(Err(minilp::Error::Infeasible)) => {
                    // Confirm from scratch before reporting.
                    return Ok(None);
                }
                Ok(Err(minilp::Error::Unbounded)) | Err(_) => return Ok(None),
            }
        }
        self.applied = self.rows.len();
        let outcome = outcome_of(&solution, vars);
        self.warm = Some((solution, vars.to_vec()));
        Ok(Some(outcome))
    }

    fn cold_solve(&mut self) -> Result<LpOutcome> {
        self.cold_solves += 1;
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<Variable> = self
            .costs
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for row in &self.rows {
            problem.add_constraint(expr_of(row, &vars), row.relation.op(), row.rhs);
        }
        let result = catch_unwind(AssertUnwindSafe(|| problem.solve()))
            .map_err(|_| Error::Numeric("LP solver aborted".into()))?;
        match result {
            Ok(solution) => {
                let outcome = outcome_of(&solution, &vars);
                self.applied = self.rows.len();
                self.warm = Some((solution, vars));
                Ok(outcome)
            }
            Err(minilp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(minilp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
        }
    }
}

fn expr_of(row: &Row, vars: &[Variable]) -> LinearExpr {
    let mut expr = LinearExpr::empty();
    for &(i, c) in &row.coeffs {
        if c != 0.0 {
            expr.add(vars[i], c);
        }
    }
    expr
}

fn outcome_of(solution: &Solution, vars: &[Variable]) -> LpOutcome {
    LpOutcome::Optimal {
        objective: solution.objective(),
        values: vars.iter().map(|v| *solution.var_value(*v)).collect(),
    }
}
