//! Constraint strategy with a cap on losses accumulated along each path.
//!
//! The state is the accumulated loss `z`, grown at the cash rate between
//! periods. Child cost-to-go functions enter piece by piece; to the left of
//! a child's domain the leftmost (flat) piece is extended.

use log::warn;

use crate::simplex::{LpProblem, Relation};

use super::blocks::{risk_constraint, LinExpr};
use super::node::{
    accumulation, add_holdings, epigraph, loss, parametric_sweep, ChildSlot, Extend, NodeCtx, NodeLp, StateExpr,
};
use super::stateless::super_replication_sweep;
use super::{CostToGo, HedgeModel, HedgeSolution, HedgingError, StateKind};

/// Slopes below this count as flat when extending a child's cost-to-go.
const FLAT_TOL: f64 = 1e-9;

fn build(
    model: &HedgeModel,
    ctx: &NodeCtx,
    next: &[CostToGo],
    sr: f64,
) -> Result<NodeLp, HedgingError> {
    let cap = model.risk.gamma3;
    let growth = model.menu.cash_growth();
    let mut lp = LpProblem::new();
    let h = add_holdings(&mut lp, model, 1.0);
    let mut losses = Vec::with_capacity(ctx.children.len());
    let mut slots = Vec::with_capacity(ctx.children.len());
    for ch in &ctx.children {
        let w = accumulation(h, ch);
        if ch.settles {
            if let Some(g3) = cap {
                if ch.prob > 0.0 {
                    // e^{r} z + P - W <= gamma3
                    let terms: Vec<(usize, f64)> = w.terms.iter().map(|&(j, a)| (j, -a)).collect();
                    lp.add_parametric_constraint(&terms, Relation::Le, g3 - ch.payoff, -growth);
                }
            }
            losses.push(loss(h, ch, LinExpr::constant(ch.payoff)));
            slots.push(ChildSlot::Fixed(ch.payoff));
            continue;
        }
        let f = next[ch.index]
            .function()
            .ok_or_else(|| ctx.numerical("child cost-to-go missing"))?;
        let extend = Extend {
            left: true,
            right: cap.is_none(),
        };
        let epi = epigraph(&mut lp, f, extend, 0.0);
        // child state = e^{r} z + v - W
        let mut terms = epi.state.terms.clone();
        terms.extend(epi.value.terms.iter().map(|&(j, a)| (j, -a)));
        terms.extend(w.terms.iter().copied());
        lp.add_parametric_constraint(&terms, Relation::Eq, epi.value.constant - epi.state.constant, growth);
        let l = loss(h, ch, epi.value.clone());
        losses.push(l);
        slots.push(ChildSlot::Var {
            amount: epi.value,
            state: Some(StateExpr {
                expr: epi.state,
                per_z: 0.0,
            }),
        });
    }
    risk_constraint(&mut lp, &model.risk, &losses, &ctx.probs())?;
    let width = model.algorithm.z_max_factor * sr.max(0.0);
    let hi = cap.unwrap_or(width);
    lp.set_parameter_range(-width, hi);
    Ok((lp, h, slots))
}

pub(crate) fn node_lp(
    model: &HedgeModel,
    ctx: &NodeCtx,
    next: &[CostToGo],
    sr: f64,
) -> Result<LpProblem, HedgingError> {
    Ok(build(model, ctx, next, sr)?.0)
}

pub(crate) fn sweep(model: &HedgeModel) -> Result<HedgeSolution, HedgingError> {
    let sr = super_replication_sweep(model)?;
    let out = parametric_sweep(model, &sr, build)?;
    let root = out.store[0][0].function().expect("root cost-to-go");
    if root.pieces()[0].slope > FLAT_TOL {
        warn!("root cost-to-go is not flat on the left; the state domain may be too narrow");
    }
    let f0 = root.eval(0.0)?;
    Ok(HedgeSolution {
        state: StateKind::AccumulatedLoss,
        store: out.store,
        policy: out.policy,
        f0,
        root_state: 0.0,
        majorants: out.majorants,
        majorant_gap: out.gap,
        super_replication: Some(sr),
        lp_solves: out.solves,
    })
}
