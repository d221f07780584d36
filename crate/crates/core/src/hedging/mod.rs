//! Backward dynamic programming over the event tree.
//!
//! Every non-terminal node solves one linear program built from its children.
//! Four strategies are supported:
//!
//! * [`Variant::Constraint`]: minimize the portfolio cost subject to a local
//!   risk constraint. Without a loss cap the cost-to-go is a scalar
//!   continuation value; with a cap on accumulated losses it becomes a
//!   convex piecewise-linear function of the accumulated loss.
//! * [`Variant::StochasticProgram`]: minimize the local CVaR plus `lambda`
//!   times the expected child cost-to-go.
//! * [`Variant::Barrier`]: minimize the local CVaR while every child's
//!   cost-to-go stays below a barrier.
//! * [`Variant::Coherent`]: minimize the CVaR of the loss plus the child
//!   cost-to-go.
//!
//! The last three carry the capital invested at the node as their state and
//! price the claim as the smallest capital whose root cost-to-go reaches the
//! acceptance level.

mod blocks;
mod export;
mod node;
mod objective;
mod pathwise;
mod stateless;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::EventTree;
use crate::market::{AssetMenu, Holdings, MarketError, Product};
use crate::simplex::{LpError, LpProblem, PiecewiseLinearValue, PwlError};

pub use blocks::{cvar_block, downside_block, norm_block, CvarTarget, CvarVars, LinExpr};
pub use export::{write_cost_to_go_csv, write_policy_csv};
pub use node::{ChildCtx, NodeCtx};
pub use stateless::{algo2_node, super_replication_sweep};

#[derive(Debug, Error)]
pub enum HedgingError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("infeasible node (period {period}, level {level}, {survival}): {detail}")]
    Infeasible {
        period: usize,
        level: usize,
        survival: &'static str,
        detail: String,
    },
    #[error("numerical failure at node (period {period}, level {level}, {survival}): {detail}")]
    Numerical {
        period: usize,
        level: usize,
        survival: &'static str,
        detail: String,
    },
    #[error("price extraction: {0}")]
    NoRoot(#[from] PwlError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

impl HedgingError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, HedgingError::Infeasible { .. } | HedgingError::NoRoot(_))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[default]
    Cvar,
    Downside,
    CvarPlusNorm,
}

/// Piecewise-linear penalty on each positive-loss variable: piece `k`
/// starts at `breakpoints[k]` (the first is 0) and costs `slopes[k]` per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    pub gamma2: f64,
}

impl NormSpec {
    pub fn validate(&self) -> Result<(), HedgingError> {
        let ok = !self.slopes.is_empty()
            && self.breakpoints.len() == self.slopes.len()
            && self.breakpoints[0] == 0.0
            && self.breakpoints.windows(2).all(|w| w[1] > w[0])
            && self.slopes.windows(2).all(|w| w[1] >= w[0])
            && self.slopes.iter().all(|s| *s >= 0.0 && s.is_finite())
            && self.gamma2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(HedgingError::Spec(format!(
                "norm pieces must start at 0 with increasing breakpoints and nondecreasing slopes: {self:?}"
            )))
        }
    }
}

/// Local risk control on the losses of one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub measure: Measure,
    /// Retention level of the CVaR.
    pub c: f64,
    pub gamma0: f64,
    pub norm: Option<NormSpec>,
    /// Cap on accumulated losses; `None` for no cap.
    pub gamma3: Option<f64>,
    /// Replace the risk block by `W >= G` on every child.
    pub super_replication: bool,
}

impl Default for RiskSpec {
    fn default() -> Self {
        RiskSpec {
            measure: Measure::Cvar,
            c: 0.60,
            gamma0: 0.0,
            norm: None,
            gamma3: None,
            super_replication: false,
        }
    }
}

impl RiskSpec {
    pub fn cvar(c: f64, gamma0: f64) -> Self {
        RiskSpec {
            c,
            gamma0,
            ..RiskSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), HedgingError> {
        if self.super_replication {
            return Ok(());
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(HedgingError::Spec(format!(
                "retention level c = {} must lie in [0, 1); use the super-replication flag for c = 1",
                self.c
            )));
        }
        if !self.gamma0.is_finite() {
            return Err(HedgingError::Spec("gamma0 must be finite".into()));
        }
        if let Some(g3) = self.gamma3 {
            if g3.is_nan() || g3 < 0.0 {
                return Err(HedgingError::Spec(format!("gamma3 = {g3} must be nonnegative")));
            }
        }
        match (&self.measure, &self.norm) {
            (Measure::CvarPlusNorm, None) => Err(HedgingError::Spec("cvar_plus_norm needs a norm spec".into())),
            (_, Some(n)) => n.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Constraint,
    StochasticProgram,
    Barrier,
    Coherent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub variant: Variant,
    /// Weight of the expected future cost-to-go (stochastic program).
    pub lambda: f64,
    /// Bound on every child's cost-to-go (barrier).
    pub barrier_gamma0: f64,
    /// Extra local risk constraint on the losses (capital-state variants).
    pub overlay: Option<RiskSpec>,
    /// State domain is `[0, factor * super-replication price]`, or
    /// `[-factor * price, gamma3]` for the accumulated-loss state.
    pub z_max_factor: f64,
    pub acceptance_level: f64,
    /// Pieces of the majorant a child cost-to-go contributes to its parent.
    pub max_hyperplanes: usize,
}

impl Default for AlgorithmSpec {
    fn default() -> Self {
        AlgorithmSpec {
            variant: Variant::Constraint,
            lambda: 1.0,
            barrier_gamma0: 0.0,
            overlay: None,
            z_max_factor: 1.5,
            acceptance_level: 0.0,
            max_hyperplanes: 64,
        }
    }
}

impl AlgorithmSpec {
    pub fn validate(&self) -> Result<(), HedgingError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(HedgingError::Spec(format!("lambda = {} must be nonnegative", self.lambda)));
        }
        if !(self.z_max_factor >= 1.0 && self.z_max_factor.is_finite()) {
            return Err(HedgingError::Spec("z_max_factor must be at least 1".into()));
        }
        if self.max_hyperplanes < 1 {
            return Err(HedgingError::Spec("max_hyperplanes must be positive".into()));
        }
        if let Some(o) = &self.overlay {
            o.validate()?;
        }
        Ok(())
    }
}

/// Meaning of the scalar state carried by cost-to-go functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    /// No state: scalar continuation values.
    None,
    /// Accumulated loss along the path.
    AccumulatedLoss,
    /// Capital invested at the node.
    Capital,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostToGo {
    /// The contract settles here with this benefit.
    Settled(f64),
    Constant(f64),
    Function(PiecewiseLinearValue),
}

impl CostToGo {
    pub fn function(&self) -> Option<&PiecewiseLinearValue> {
        match self {
            CostToGo::Function(f) => Some(f),
            _ => None,
        }
    }

    pub fn scalar(&self) -> Option<f64> {
        match self {
            CostToGo::Settled(v) | CostToGo::Constant(v) => Some(*v),
            CostToGo::Function(_) => None,
        }
    }
}

/// What a node does: the portfolio and, per tree child, the amount the
/// child receives and the child's state.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub holdings: Holdings,
    pub child_amount: Vec<f64>,
    pub child_state: Vec<Option<f64>>,
}

impl Decision {
    fn lerp(&self, other: &Decision, w: f64) -> Decision {
        Decision {
            holdings: self.holdings.lerp(&other.holdings, w),
            child_amount: self
                .child_amount
                .iter()
                .zip(&other.child_amount)
                .map(|(a, b)| a + w * (b - a))
                .collect(),
            child_state: self
                .child_state
                .iter()
                .zip(&other.child_state)
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(a + w * (b - a)),
                    _ => None,
                })
                .collect(),
        }
    }
}

/// Decisions at both ends of a linear piece of the cost-to-go; the linear
/// interpolation is optimal inside the piece.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyPiece {
    pub z_lo: f64,
    pub z_hi: f64,
    pub lo: Decision,
    pub hi: Decision,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodePolicy {
    /// Settled or absorbing: nothing to decide.
    Terminal,
    Fixed(Decision),
    Parametric(Vec<PolicyPiece>),
}

/// Realized state outside the stored domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainEscape {
    pub z: f64,
    pub lo: f64,
    pub hi: f64,
}

/// States this close outside the stored domain are clamped.
pub const DOMAIN_CLAMP_TOL: f64 = 1e-9;

impl NodePolicy {
    /// Decision at state `z` (ignored for fixed policies).
    pub fn decision_at(&self, z: f64) -> Result<Option<Decision>, DomainEscape> {
        match self {
            NodePolicy::Terminal => Ok(None),
            NodePolicy::Fixed(d) => Ok(Some(d.clone())),
            NodePolicy::Parametric(pieces) => {
                let lo = pieces[0].z_lo;
                let hi = pieces[pieces.len() - 1].z_hi;
                if !(z >= lo - DOMAIN_CLAMP_TOL && z <= hi + DOMAIN_CLAMP_TOL) {
                    return Err(DomainEscape { z, lo, hi });
                }
                let z = z.clamp(lo, hi);
                let i = pieces.partition_point(|p| p.z_hi < z).min(pieces.len() - 1);
                let p = &pieces[i];
                let w = if p.z_hi > p.z_lo {
                    ((z - p.z_lo) / (p.z_hi - p.z_lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                Ok(Some(p.lo.lerp(&p.hi, w)))
            }
        }
    }
}

/// Everything needed to run a backward sweep.
#[derive(Clone, Debug)]
pub struct HedgeModel {
    pub tree: EventTree,
    pub product: Product,
    pub menu: AssetMenu,
    pub risk: RiskSpec,
    pub algorithm: AlgorithmSpec,
}

/// Output of a backward sweep.
#[derive(Clone, Debug)]
pub struct HedgeSolution {
    pub state: StateKind,
    /// `store[t][i]` for node `i` of period `t`.
    pub store: Vec<Vec<CostToGo>>,
    pub policy: Vec<Vec<NodePolicy>>,
    /// Initial portfolio value.
    pub f0: f64,
    /// State at the root used for replay.
    pub root_state: f64,
    /// Chord majorants of the cost-to-go functions with at most
    /// `max_hyperplanes` pieces; parent LPs see these instead of `store`.
    /// Empty for scalar sweeps.
    pub majorants: Vec<Vec<CostToGo>>,
    /// Largest gap between a majorant and its exact function.
    pub majorant_gap: f64,
    /// Super-replication prices, when they were needed for state domains.
    pub super_replication: Option<Vec<Vec<f64>>>,
    /// Node LPs solved (parametric sweeps count every fresh solve).
    pub lp_solves: usize,
}

impl HedgeSolution {
    /// Every stored piecewise-linear cost-to-go with its node.
    pub fn functions(&self) -> impl Iterator<Item = (usize, usize, &PiecewiseLinearValue)> {
        self.store.iter().enumerate().flat_map(|(t, level)| {
            level
                .iter()
                .enumerate()
                .filter_map(move |(i, c)| c.function().map(|f| (t, i, f)))
        })
    }
}

/// Smallest state whose cost-to-go is at most `acceptance_level`.
pub fn price_from_value(v0: &PiecewiseLinearValue, acceptance_level: f64) -> Result<f64, HedgingError> {
    Ok(v0.min_root(acceptance_level)?)
}

impl HedgeModel {
    pub fn validate(&self) -> Result<(), HedgingError> {
        self.risk.validate()?;
        self.algorithm.validate()?;
        self.product.validate()?;
        if matches!(self.product, Product::Eia(_)) != self.tree.has_survival() {
            return Err(HedgingError::Spec(
                "annuities need a survival tree and certificates an index tree".into(),
            ));
        }
        if self.algorithm.variant != Variant::Constraint && self.risk.gamma3.is_some() {
            return Err(HedgingError::Spec(
                "the accumulated-loss cap applies to the constraint variant only".into(),
            ));
        }
        Ok(())
    }

    pub fn state_kind(&self) -> StateKind {
        match self.algorithm.variant {
            Variant::Constraint if self.risk.gamma3.is_some() => StateKind::AccumulatedLoss,
            Variant::Constraint => StateKind::None,
            _ => StateKind::Capital,
        }
    }

    /// Runs the backward sweep for the configured variant.
    pub fn solve(&self) -> Result<HedgeSolution, HedgingError> {
        self.validate()?;
        match self.state_kind() {
            StateKind::None => stateless::sweep(self),
            StateKind::AccumulatedLoss => pathwise::sweep(self),
            StateKind::Capital => objective::sweep(self),
        }
    }

    /// Rebuilds the parametric LP of a node from a solved sweep, for
    /// independent re-solves. `None` for nodes without a parametric LP.
    pub fn node_problem(&self, solution: &HedgeSolution, period: usize, index: usize) -> Option<LpProblem> {
        if period >= self.tree.periods() || self.tree.node(period, index).is_absorbing() {
            return None;
        }
        let sr = solution.super_replication.as_ref()?;
        let ctx = NodeCtx::new(self, period, index).ok()?;
        match solution.state {
            StateKind::None => None,
            StateKind::AccumulatedLoss => {
                pathwise::node_lp(self, &ctx, &solution.majorants[period + 1], sr[period][index]).ok()
            }
            StateKind::Capital => {
                objective::node_lp(self, &ctx, &solution.majorants[period + 1], sr[period][index]).ok()
            }
        }
    }
}

/// Runs `f` on every node of a level in parallel and collects the results in
/// node order.
fn par_level<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).into_par_iter().map(f).collect()
}


/// Shorthand to run a sweep from parts.
pub fn backward_sweep(
    tree: &EventTree,
    product: &Product,
    algorithm: &AlgorithmSpec,
    risk: &RiskSpec,
    menu: &AssetMenu,
) -> Result<HedgeSolution, HedgingError> {
    HedgeModel {
        tree: tree.clone(),
        product: product.clone(),
        menu: menu.clone(),
        risk: risk.clone(),
        algorithm: algorithm.clone(),
    }
    .solve()
}
