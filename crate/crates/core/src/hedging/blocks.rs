//! Linear-programming blocks for the local risk measures.

use crate::simplex::{Bounds, LpProblem, Relation};

use super::{HedgingError, Measure, NormSpec, RiskSpec};

/// Affine expression `constant + sum(coef * x[var])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn plus(mut self, var: usize, coef: f64) -> Self {
        self.terms.push((var, coef));
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CvarTarget {
    /// `CVaR_c(L) <= gamma0` as a constraint.
    Budget { gamma0: f64 },
    /// Add `weight * CVaR_c(L)` to the objective.
    Objective { weight: f64 },
}

/// Variables of the CVaR epigraph: VaR split in two and one excess per child.
#[derive(Clone, Debug, PartialEq)]
pub struct CvarVars {
    pub pi_plus: usize,
    pub pi_minus: usize,
    pub u: Vec<usize>,
}

impl CvarVars {
    /// Value-at-risk candidate `pi+ - pi-`.
    pub fn var_level(&self, x: &[f64]) -> f64 {
        x[self.pi_plus] - x[self.pi_minus]
    }
}

/// Rockafellar-Uryasev representation of the CVaR of the child losses.
pub fn cvar_block(
    lp: &mut LpProblem,
    losses: &[LinExpr],
    probs: &[f64],
    c: f64,
    target: CvarTarget,
) -> Result<CvarVars, HedgingError> {
    if !(0.0..1.0).contains(&c) {
        return Err(HedgingError::Spec(format!("retention level c = {c} must lie in [0, 1)")));
    }
    if losses.len() != probs.len() {
        return Err(HedgingError::Spec("one probability per loss expected".into()));
    }
    let tail = 1.0 / (1.0 - c);
    let weight = match target {
        CvarTarget::Budget { .. } => 0.0,
        CvarTarget::Objective { weight } => weight,
    };
    let pi_plus = lp.add_var(Bounds::NONNEG, weight);
    let pi_minus = lp.add_var(Bounds::NONNEG, -weight);
    let u: Vec<usize> = probs
        .iter()
        .map(|p| lp.add_var(Bounds::NONNEG, weight * p * tail))
        .collect();
    for (l, &uj) in losses.iter().zip(&u) {
        // u_j >= L_j - (pi+ - pi-)
        let mut terms: Vec<(usize, f64)> = l.terms.iter().map(|&(j, a)| (j, -a)).collect();
        terms.extend([(pi_plus, 1.0), (pi_minus, -1.0), (uj, 1.0)]);
        lp.add_constraint(&terms, Relation::Ge, l.constant);
    }
    if let CvarTarget::Budget { gamma0 } = target {
        let mut terms = vec![(pi_plus, 1.0), (pi_minus, -1.0)];
        terms.extend(u.iter().zip(probs).map(|(&uj, p)| (uj, p * tail)));
        lp.add_constraint(&terms, Relation::Le, gamma0);
    }
    Ok(CvarVars { pi_plus, pi_minus, u })
}

/// Expected shortfall over zero, scaled by `1/(1-c)`, bounded by `gamma0`.
pub fn downside_block(
    lp: &mut LpProblem,
    losses: &[LinExpr],
    probs: &[f64],
    c: f64,
    gamma0: f64,
) -> Result<Vec<usize>, HedgingError> {
    if !(0.0..1.0).contains(&c) {
        return Err(HedgingError::Spec(format!("retention level c = {c} must lie in [0, 1)")));
    }
    let tail = 1.0 / (1.0 - c);
    let u: Vec<usize> = losses.iter().map(|_| lp.add_var(Bounds::NONNEG, 0.0)).collect();
    for (l, &uj) in losses.iter().zip(&u) {
        let mut terms: Vec<(usize, f64)> = l.terms.iter().map(|&(j, a)| (j, -a)).collect();
        terms.push((uj, 1.0));
        lp.add_constraint(&terms, Relation::Ge, l.constant);
    }
    let terms: Vec<(usize, f64)> = u.iter().zip(probs).map(|(&uj, p)| (uj, p * tail)).collect();
    lp.add_constraint(&terms, Relation::Le, gamma0);
    Ok(u)
}

/// Splits each `u_i` into capped pieces and bounds the total weighted
/// penalty by `gamma2`. Returns the piece variables per `u_i`.
pub fn norm_block(lp: &mut LpProblem, u: &[usize], spec: &NormSpec) -> Result<Vec<Vec<usize>>, HedgingError> {
    spec.validate()?;
    let widths: Vec<f64> = spec
        .breakpoints
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(std::iter::once(f64::INFINITY))
        .collect();
    let mut budget = Vec::new();
    let mut pieces = Vec::with_capacity(u.len());
    for &ui in u {
        let vars: Vec<usize> = widths
            .iter()
            .map(|&w| lp.add_var(Bounds::new(0.0, w), 0.0))
            .collect();
        let mut link: Vec<(usize, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
        link.push((ui, -1.0));
        lp.add_constraint(&link, Relation::Eq, 0.0);
        budget.extend(vars.iter().zip(&spec.slopes).map(|(&v, &f)| (v, f)));
        pieces.push(vars);
    }
    lp.add_constraint(&budget, Relation::Le, spec.gamma2);
    Ok(pieces)
}

/// Adds the configured local risk constraint on the child losses.
pub(crate) fn risk_constraint(
    lp: &mut LpProblem,
    risk: &RiskSpec,
    losses: &[LinExpr],
    probs: &[f64],
) -> Result<(), HedgingError> {
    if risk.super_replication {
        for (l, &p) in losses.iter().zip(probs) {
            if p > 0.0 {
                lp.add_constraint(&l.terms, Relation::Le, -l.constant);
            }
        }
        return Ok(());
    }
    match risk.measure {
        Measure::Cvar => {
            cvar_block(lp, losses, probs, risk.c, CvarTarget::Budget { gamma0: risk.gamma0 })?;
        }
        Measure::Downside => {
            downside_block(lp, losses, probs, risk.c, risk.gamma0)?;
        }
        Measure::CvarPlusNorm => {
            let vars = cvar_block(lp, losses, probs, risk.c, CvarTarget::Budget { gamma0: risk.gamma0 })?;
            let spec = risk
                .norm
                .as_ref()
                .ok_or_else(|| HedgingError::Spec("cvar_plus_norm needs a norm spec".into()))?;
            norm_block(lp, &vars.u, spec)?;
        }
    }
    Ok(())
}
