//! Exact right-hand-side parametric analysis.
//!
//! The feasible parameter interval is found first by two auxiliary LPs that
//! treat the parameter as a variable. The sweep then starts from an optimal
//! basis at the left end and walks right: a basis stays optimal while its
//! basic values `beta + t * delta` stay nonnegative, so the next breakpoint is
//! a minimum-ratio test. At a breakpoint the blocking rows are repaired with
//! dual-simplex pivots, which keep the reduced costs nonnegative. If repair
//! stalls, the remaining interval is covered by fresh solves and bisection.

use log::{debug, warn};
use thiserror::Error;

use super::pwl::{Piece, PiecewiseLinearValue};
use super::tableau::Tableau;
use super::{Bounds, LpError, LpProblem, LpStatus, FEASIBILITY_TOL, SLOPE_MERGE_TOL};

/// Slopes may decrease by this much before the value function is declared nonconvex.
const NONCONVEX_TOL: f64 = 1e-6;
/// Slope inversions whose effect on the value is below this are round-off
/// and get merged.
const NOISE_AREA: f64 = 1e-10;
/// Pieces narrower than this are absorbed by their neighbours.
const MIN_WIDTH: f64 = 1e-12;
const DELTA_TOL: f64 = 1e-12;
const MAX_REPAIR_PIVOTS: usize = 2000;
const BLAND_AFTER: usize = 100;
const MAX_BISECTION_DEPTH: usize = 60;
const MAX_PIECES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParametricError {
    #[error("problem is infeasible for every parameter in [{lo}, {hi}]")]
    Infeasible { lo: f64, hi: f64 },
    #[error("problem is unbounded for parameters in [{lo}, {hi}]")]
    Unbounded { lo: f64, hi: f64 },
    #[error("value function is not convex near z = {z} (slopes {left} then {right})")]
    NonConvex { z: f64, left: f64, right: f64 },
    #[error("parametric sweep failed: {0}")]
    Numerical(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Linear piece of the value function with optimal decisions at both ends.
/// Within the piece, the decision interpolated linearly between the two ends
/// is optimal.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricPiece {
    pub z_lo: f64,
    pub z_hi: f64,
    pub slope: f64,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
}

impl ParametricPiece {
    /// Linear interpolation of the end decisions.
    pub fn decision_at(&self, z: f64) -> Vec<f64> {
        let w = if self.z_hi > self.z_lo {
            ((z - self.z_lo) / (self.z_hi - self.z_lo)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.x_lo
            .iter()
            .zip(&self.x_hi)
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ParametricSolution {
    pub value: PiecewiseLinearValue,
    pub pieces: Vec<ParametricPiece>,
    /// Requested parameter range.
    pub requested: (f64, f64),
    /// Number of fresh LP solves used (two range LPs included).
    pub solves: usize,
}

impl ParametricSolution {
    pub fn truncated(&self) -> bool {
        let (lo, hi) = self.value.domain();
        lo > self.requested.0 + FEASIBILITY_TOL || hi < self.requested.1 - FEASIBILITY_TOL
    }

    /// Optimal decision at `z`, linear within each piece.
    pub fn decision_at(&self, z: f64) -> Option<Vec<f64>> {
        let i = self.value.piece_index(z).ok()?;
        Some(self.pieces[i].decision_at(z))
    }
}

struct RawPiece {
    z_lo: f64,
    z_hi: f64,
    slope: f64,
    v_lo: f64,
    x_lo: Vec<f64>,
    x_hi: Vec<f64>,
}

/// Traces `z -> min c'x s.t. A x (rel) b + z d` over the problem's parameter range.
pub fn solve_parametric_rhs(problem: &LpProblem) -> Result<ParametricSolution, ParametricError> {
    problem.validate()?;
    let (lo, hi) = problem
        .parameter_range
        .ok_or_else(|| ParametricError::Numerical("no parameter range".into()))?;

    let (z_min, z_max) = feasible_range(problem, lo, hi)?;
    let mut solves = 2;

    let mut tab = Tableau::build(problem, z_min);
    solves += 1;
    match tab.optimize()? {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(ParametricError::Unbounded { lo: z_min, hi: z_max }),
        LpStatus::Infeasible => {
            return Err(ParametricError::Numerical(format!(
                "infeasible at z = {z_min} inside the feasible range"
            )))
        }
    }

    let mut raw = Vec::new();
    let mut z = z_min;
    let scale = 1.0 + z_min.abs().max(z_max.abs());
    loop {
        tab.set_parameter(z);
        let mut status = repair(&mut tab);
        if matches!(status, Repair::Stalled) {
            debug!("basis repair stalled at z = {z}; restarting from a fresh solve");
            tab = Tableau::build(problem, z);
            solves += 1;
            if tab.optimize()? == LpStatus::Optimal {
                tab.set_parameter(z);
                status = repair(&mut tab);
            }
        }
        match status {
            Repair::Done => {}
            Repair::Exhausted if !raw.is_empty() => {
                warn!("no dual pivot beyond z = {z}; truncating the parametric range");
                break;
            }
            _ => {
                debug!("basis repair stalled at z = {z}; covering [{z}, {z_max}] by bisection");
                cover(problem, z, z_max, 0, &mut raw, &mut solves)?;
                break;
            }
        }
        if raw.len() >= MAX_PIECES {
            return Err(ParametricError::Numerical(format!(
                "more than {MAX_PIECES} bases on [{z_min}, {z_max}]"
            )));
        }
        let beta = tab.rhs_column();
        let delta = tab.delta();
        let step = max_step(&beta, &delta);
        let z_next = if step.is_finite() { (z + step).min(z_max) } else { z_max };
        let slope = tab.slope(&delta);
        let at = |t: f64| -> Vec<f64> {
            let b: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + t * d).collect();
            tab.primal_of(&b)
        };
        raw.push(RawPiece {
            z_lo: z,
            z_hi: z_next,
            slope,
            v_lo: tab.objective_of(&beta),
            x_lo: at(0.0),
            x_hi: at(z_next - z),
        });
        if z_next >= z_max - MIN_WIDTH * scale {
            break;
        }
        z = z_next;
    }

    let (value, pieces) = assemble(raw, z_max)?;
    Ok(ParametricSolution {
        value,
        pieces,
        requested: (lo, hi),
        solves,
    })
}

/// Feasible parameter interval within `[lo, hi]`.
fn feasible_range(problem: &LpProblem, lo: f64, hi: f64) -> Result<(f64, f64), ParametricError> {
    let mut aux = problem.clone();
    aux.parameter_range = None;
    aux.objective.iter_mut().for_each(|c| *c = 0.0);
    aux.objective_constant = 0.0;
    let zcol = aux.add_var(Bounds::new(lo, hi), 1.0);
    for row in &mut aux.constraints {
        row.coeffs[zcol] = -row.rhs_direction;
        row.rhs_direction = 0.0;
    }
    let first = super::solve(&aux)?;
    if first.status != LpStatus::Optimal {
        return Err(ParametricError::Infeasible { lo, hi });
    }
    aux.objective[zcol] = -1.0;
    let second = super::solve(&aux)?;
    if second.status != LpStatus::Optimal {
        return Err(ParametricError::Numerical("upper range LP failed".into()));
    }
    let z_min = first.x[zcol].clamp(lo, hi);
    let z_max = second.x[zcol].clamp(z_min, hi);
    Ok((z_min, z_max))
}

/// Largest `t` with `beta + t delta >= 0`.
fn max_step(beta: &[f64], delta: &[f64]) -> f64 {
    let mut step = f64::INFINITY;
    for (b, d) in beta.iter().zip(delta) {
        if *d < -DELTA_TOL {
            step = step.min(b.max(0.0) / -d);
        }
    }
    step
}

/// Rows that block moving right from the current parameter: basic value at
/// zero (or negative through round-off) and decreasing. Each comes with a
/// priority key; lower goes first.
fn blocked_rows<'a>(beta: &'a [f64], delta: &'a [f64]) -> impl Iterator<Item = (usize, f64)> + 'a {
    beta.iter().zip(delta).enumerate().filter_map(|(r, (b, d))| {
        let tol = FEASIBILITY_TOL * (1.0 + d.abs());
        if *b < -tol {
            Some((r, f64::NEG_INFINITY))
        } else if *b <= tol && *d < -DELTA_TOL {
            Some((r, *d))
        } else {
            None
        }
    })
}

enum Repair {
    Done,
    /// A blocking row has no entering column: infeasible to the right.
    Exhausted,
    Stalled,
}

/// Restores lexicographic feasibility of `(beta, delta)` at the current
/// parameter by dual pivots, switching to Bland's rule if it runs long.
fn repair(tab: &mut Tableau) -> Repair {
    for k in 0..MAX_REPAIR_PIVOTS {
        let bland = k >= BLAND_AFTER;
        let beta = tab.rhs_column();
        let delta = tab.delta();
        let row = if bland {
            blocked_rows(&beta, &delta).min_by_key(|&(r, _)| tab.basic_index(r))
        } else {
            blocked_rows(&beta, &delta).min_by(|a, b| a.1.total_cmp(&b.1))
        };
        let Some((r, _)) = row else {
            return Repair::Done;
        };
        if !tab.dual_pivot(r, bland) {
            return Repair::Exhausted;
        }
    }
    Repair::Stalled
}

/// Covers `[a, b]` with pieces from fresh solves, bisecting gaps.
fn cover(
    problem: &LpProblem,
    a: f64,
    b: f64,
    depth: usize,
    out: &mut Vec<RawPiece>,
    solves: &mut usize,
) -> Result<(), ParametricError> {
    if depth > MAX_BISECTION_DEPTH {
        return Err(ParametricError::Numerical(format!(
            "bisection depth exceeded on [{a}, {b}]"
        )));
    }
    let mid = 0.5 * (a + b);
    let mut tab = Tableau::build(problem, mid);
    *solves += 1;
    if tab.optimize()? != LpStatus::Optimal {
        return Err(ParametricError::Numerical(format!("fresh solve failed at z = {mid}")));
    }
    let (beta, delta) = tab.beta_delta(mid);
    let mut right = f64::INFINITY;
    let mut left = f64::INFINITY;
    for (bv, d) in beta.iter().zip(&delta) {
        if *d < -DELTA_TOL {
            right = right.min(bv.max(0.0) / -d);
        } else if *d > DELTA_TOL {
            left = left.min(bv.max(0.0) / d);
        }
    }
    let lo = (mid - left).max(a);
    let hi = (mid + right).min(b);
    if lo - a > MIN_WIDTH {
        cover(problem, a, lo, depth + 1, out, solves)?;
    }
    let at = |t: f64| -> Vec<f64> {
        let bb: Vec<f64> = beta.iter().zip(&delta).map(|(x, d)| x + t * d).collect();
        tab.primal_of(&bb)
    };
    let v_mid = tab.objective_of(&beta);
    let slope = tab.slope(&delta);
    out.push(RawPiece {
        z_lo: lo,
        z_hi: hi,
        slope,
        v_lo: v_mid + slope * (lo - mid),
        x_lo: at(lo - mid),
        x_hi: at(hi - mid),
    });
    if b - hi > MIN_WIDTH {
        cover(problem, hi, b, depth + 1, out, solves)?;
    }
    Ok(())
}

/// Chains values from the left end, merges equal slopes and checks convexity.
fn assemble(
    raw: Vec<RawPiece>,
    z_max: f64,
) -> Result<(PiecewiseLinearValue, Vec<ParametricPiece>), ParametricError> {
    let first = raw
        .first()
        .ok_or_else(|| ParametricError::Numerical("no pieces".into()))?;
    let z0 = first.z_lo;
    let v0 = first.v_lo;

    let mut stack: Vec<ParametricPiece> = Vec::new();
    for p in raw {
        let width = p.z_hi - p.z_lo;
        let mut piece = ParametricPiece {
            z_lo: p.z_lo,
            z_hi: p.z_hi,
            slope: p.slope,
            x_lo: p.x_lo,
            x_hi: p.x_hi,
        };
        if let Some(top) = stack.last_mut() {
            // keep the tiling exact
            piece.z_lo = top.z_hi;
            if width <= MIN_WIDTH {
                top.x_hi = piece.x_hi;
                continue;
            }
        } else if width <= MIN_WIDTH && z_max - p.z_lo > MIN_WIDTH {
            continue;
        }
        loop {
            let Some(top) = stack.last() else { break };
            let drop = top.slope - piece.slope;
            let narrow = (top.z_hi - top.z_lo).min(piece.z_hi - piece.z_lo);
            if drop > NONCONVEX_TOL && drop * narrow > NOISE_AREA {
                return Err(ParametricError::NonConvex {
                    z: piece.z_lo,
                    left: top.slope,
                    right: piece.slope,
                });
            }
            if piece.slope > top.slope + SLOPE_MERGE_TOL {
                break;
            }
            let top = stack.pop().expect("nonempty");
            let (w1, w2) = (top.z_hi - top.z_lo, piece.z_hi - piece.z_lo);
            let slope = if w1 + w2 > 0.0 {
                (top.slope * w1 + piece.slope * w2) / (w1 + w2)
            } else {
                top.slope
            };
            piece = ParametricPiece {
                z_lo: top.z_lo,
                z_hi: piece.z_hi,
                slope,
                x_lo: top.x_lo,
                x_hi: piece.x_hi,
            };
        }
        stack.push(piece);
    }
    if stack.is_empty() {
        return Err(ParametricError::Numerical("no pieces".into()));
    }
    if let Some(first) = stack.first_mut() {
        first.z_lo = z0;
    }

    let mut pieces = Vec::with_capacity(stack.len());
    let mut v = v0;
    for p in &stack {
        pieces.push(Piece {
            z_lo: p.z_lo,
            z_hi: p.z_hi,
            slope: p.slope,
            intercept: v - p.slope * p.z_lo,
        });
        v += p.slope * (p.z_hi - p.z_lo);
    }
    let value = PiecewiseLinearValue::new(pieces)
        .map_err(|e| ParametricError::Numerical(e.to_string()))?;
    Ok((value, stack))
}

/// Convenience: `V(z)` at one point by a fresh solve, `None` when infeasible.
pub fn value_at(problem: &LpProblem, z: f64) -> Result<Option<f64>, LpError> {
    let sol = super::solve_at(problem, z)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.objective),
        _ => None,
    })
}

