//! Dense two-phase primal simplex and right-hand-side parametric analysis.
//!
//! Problems are small (tens of rows and columns), so everything is kept in a
//! dense tableau. Variables carry explicit bounds; free variables are split
//! internally and finite upper bounds become extra rows.
//!
//! [`solve`] returns an optimal basic solution with row duals, or a definitive
//! infeasible/unbounded status. [`parametric::solve_parametric_rhs`] traces the
//! optimal value `z -> min c'x s.t. A x (rel) b + z d` over a scalar parameter
//! range and returns it as a [`pwl::PiecewiseLinearValue`].

mod dump;
pub mod parametric;
pub mod pwl;
mod tableau;

use thiserror::Error;

pub use dump::dump_problem;
pub use parametric::{solve_parametric_rhs, value_at, ParametricError, ParametricPiece, ParametricSolution};
pub use pwl::{Piece, PiecewiseLinearValue, PwlError};

/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Smallest magnitude accepted as a pivot element.
pub const PIVOT_TOL: f64 = 1e-11;
/// Consecutive value-function slopes closer than this are merged.
pub const SLOPE_MERGE_TOL: f64 = 1e-9;
/// Degenerate pivots tolerated under Dantzig's rule before switching to Bland's rule.
pub const STALL_THRESHOLD: usize = 50;
/// Hard cap on pivots per solve.
pub const MAX_PIVOTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// Variable bounds. `lower` may be `-inf` and `upper` may be `+inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const NONNEG: Bounds = Bounds {
        lower: 0.0,
        upper: f64::INFINITY,
    };
    pub const FREE: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Bounds { lower, upper }
    }

    pub fn fixed(value: f64) -> Self {
        Bounds {
            lower: value,
            upper: value,
        }
    }
}

/// One constraint row `coeffs . x (relation) rhs + z * rhs_direction`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
    /// Coefficient of the scalar parameter on the right-hand side; zero for
    /// ordinary rows.
    pub rhs_direction: f64,
}

/// Dense linear program, always a minimization.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bounds>,
    /// Constant added to the objective value.
    pub objective_constant: f64,
    /// Parameter range when the right-hand side is parametric.
    pub parameter_range: Option<(f64, f64)>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid bounds on variable {index}: [{lower}, {upper}]")]
    InvalidBounds { index: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("problem has a parametric right-hand side; fix the parameter first")]
    Parametric,
    #[error("pivot limit of {0} reached")]
    PivotLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`solve`]. `x`, `duals` and `reduced_costs` are empty unless the
/// status is optimal.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Sensitivity of the optimal value to each row's right-hand side.
    pub duals: Vec<f64>,
    /// `c_j - sum_i duals_i a_ij` for each original variable.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Lagrangian dual objective `b'y + sum_j (rc_j at its active bound)`.
    pub fn dual_objective(&self, problem: &LpProblem, z: f64) -> f64 {
        let mut value = problem.objective_constant;
        for (row, y) in problem.constraints.iter().zip(&self.duals) {
            value += y * (row.rhs + z * row.rhs_direction);
        }
        for ((rc, b), x) in self.reduced_costs.iter().zip(&problem.bounds).zip(&self.x) {
            if rc.abs() <= OPTIMALITY_TOL {
                continue;
            }
            // a nonzero reduced cost pins the variable to a bound
            let bound = if *rc > 0.0 && b.lower.is_finite() {
                b.lower
            } else if *rc < 0.0 && b.upper.is_finite() {
                b.upper
            } else {
                *x
            };
            value += rc * bound;
        }
        value
    }
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    /// Appends a variable and returns its column index.
    pub fn add_var(&mut self, bounds: Bounds, cost: f64) -> usize {
        self.objective.push(cost);
        self.bounds.push(bounds);
        for row in &mut self.constraints {
            row.coeffs.push(0.0);
        }
        self.objective.len() - 1
    }

    /// Appends a row given as sparse `(column, coefficient)` terms.
    /// Repeated columns are summed.
    pub fn add_constraint(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> usize {
        self.add_parametric_constraint(terms, relation, rhs, 0.0)
    }

    pub fn add_parametric_constraint(
        &mut self,
        terms: &[(usize, f64)],
        relation: Relation,
        rhs: f64,
        rhs_direction: f64,
    ) -> usize {
        let mut coeffs = vec![0.0; self.num_vars()];
        for &(col, a) in terms {
            coeffs[col] += a;
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
            rhs_direction,
        });
        self.constraints.len() - 1
    }

    pub fn set_parameter_range(&mut self, lo: f64, hi: f64) {
        self.parameter_range = Some((lo, hi));
    }

    pub fn is_parametric(&self) -> bool {
        self.parameter_range.is_some()
    }

    /// Copy of the problem with the parameter fixed at `z`.
    pub fn at_parameter(&self, z: f64) -> LpProblem {
        let mut fixed = self.clone();
        for row in &mut fixed.constraints {
            row.rhs += z * row.rhs_direction;
            row.rhs_direction = 0.0;
        }
        fixed.parameter_range = None;
        fixed
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective".into()));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "row {i} has {} coefficients for {n} variables",
                    row.coeffs.len()
                )));
            }
            if row.coeffs.iter().any(|a| !a.is_finite())
                || !row.rhs.is_finite()
                || !row.rhs_direction.is_finite()
            {
                return Err(LpError::NonFinite(format!("row {i}")));
            }
        }
        for (index, b) in self.bounds.iter().enumerate() {
            if b.lower.is_nan() || b.upper.is_nan() || b.lower > b.upper || b.lower == f64::INFINITY
                || b.upper == f64::NEG_INFINITY
            {
                return Err(LpError::InvalidBounds {
                    index,
                    lower: b.lower,
                    upper: b.upper,
                });
            }
        }
        if let Some((lo, hi)) = self.parameter_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(LpError::DimensionMismatch(format!(
                    "parameter range [{lo}, {hi}] is empty or unbounded"
                )));
            }
        }
        Ok(())
    }
}

/// Solves a non-parametric problem.
pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    if problem.is_parametric() {
        return Err(LpError::Parametric);
    }
    let mut tab = tableau::Tableau::build(problem, 0.0);
    let status = tab.optimize()?;
    Ok(tab.solution(problem, status))
}

/// Solves the problem with its parameter fixed at `z`.
pub fn solve_at(problem: &LpProblem, z: f64) -> Result<LpSolution, LpError> {
    solve(&problem.at_parameter(z))
}

#[cfg(test)]
mod tests;
