use std::fmt::Write;

use super::LpProblem;

/// Fixed-format text listing of a problem, one line per row and bound.
pub fn dump_problem(problem: &LpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars {} rows {}", problem.num_vars(), problem.num_rows());
    if let Some((lo, hi)) = problem.parameter_range {
        let _ = writeln!(out, "param {:>16.9e} {:>16.9e}", lo, hi);
    }
    out.push_str("min");
    for c in &problem.objective {
        let _ = write!(out, " {:>16.9e}", c);
    }
    out.push('\n');
    for (i, row) in problem.constraints.iter().enumerate() {
        let _ = write!(out, "r{:<5}", i);
        for a in &row.coeffs {
            let _ = write!(out, " {:>16.9e}", a);
        }
        let _ = write!(out, " {:>2} {:>16.9e}", row.relation.symbol(), row.rhs);
        if row.rhs_direction != 0.0 {
            let _ = write!(out, " + z*{:.9e}", row.rhs_direction);
        }
        out.push('\n');
    }
    for (j, b) in problem.bounds.iter().enumerate() {
        let _ = writeln!(out, "x{:<5} {:>16.9e} {:>16.9e}", j, b.lower, b.upper);
    }
    out
}
