//! Capital-state strategies: the stochastic program, the barrier and the
//! coherent-measure formulations.
//!
//! The state is the capital `z = a + b + c` invested at the node. The
//! capital handed to each continuing child is a decision bounded by the
//! child's state domain.

use crate::simplex::{Bounds, LpProblem, Relation};

use super::blocks::{cvar_block, risk_constraint, CvarTarget, LinExpr};
use super::node::{add_holdings, epigraph, loss, parametric_sweep, ChildSlot, Extend, NodeCtx, NodeLp, StateExpr};
use super::stateless::super_replication_sweep;
use super::{price_from_value, CostToGo, HedgeModel, HedgeSolution, HedgingError, StateKind, Variant};

fn build(
    model: &HedgeModel,
    ctx: &NodeCtx,
    next: &[CostToGo],
    sr: f64,
) -> Result<NodeLp, HedgingError> {
    let alg = &model.algorithm;
    let discount = 1.0 / model.menu.cash_growth();
    let mut lp = LpProblem::new();
    let h = add_holdings(&mut lp, model, 0.0);
    lp.add_parametric_constraint(&h.map(|v| (v, 1.0)), Relation::Eq, 0.0, 1.0);

    let mut losses = Vec::with_capacity(ctx.children.len());
    let mut tail_losses = Vec::with_capacity(ctx.children.len());
    let mut slots = Vec::with_capacity(ctx.children.len());
    for ch in &ctx.children {
        if ch.settles {
            let l = loss(h, ch, LinExpr::constant(ch.payoff));
            tail_losses.push(l.clone());
            losses.push(l);
            slots.push(ChildSlot::Fixed(ch.payoff));
            continue;
        }
        let f = next[ch.index]
            .function()
            .ok_or_else(|| ctx.numerical("child cost-to-go missing"))?;
        let (l, state) = match alg.variant {
            Variant::Barrier => {
                let (lo, hi) = f.domain();
                let level = alg.barrier_gamma0;
                let (a, b) = match (f.min_root(level), f.max_root(level)) {
                    (Ok(a), Ok(b)) => (a.max(lo), b.min(hi)),
                    _ => return Err(ctx.infeasible("a child cost-to-go exceeds the barrier everywhere")),
                };
                let z = lp.add_var(Bounds::new(a, b), 0.0);
                let state = LinExpr::constant(0.0).plus(z, 1.0);
                let l = loss(h, ch, state.clone());
                tail_losses.push(l.clone());
                (l, state)
            }
            Variant::StochasticProgram | Variant::Coherent => {
                let cost = if alg.variant == Variant::StochasticProgram {
                    discount * alg.lambda * ch.prob
                } else {
                    0.0
                };
                let epi = epigraph(&mut lp, f, Extend { left: false, right: false }, cost);
                let l = loss(h, ch, epi.state.clone());
                if alg.variant == Variant::Coherent {
                    let mut tl = l.clone();
                    tl.terms.extend(epi.value.terms.iter().copied());
                    tl.constant += epi.value.constant;
                    tail_losses.push(tl);
                } else {
                    tail_losses.push(l.clone());
                }
                (l, epi.state)
            }
            Variant::Constraint => unreachable!("constraint variant has no capital state"),
        };
        losses.push(l);
        slots.push(ChildSlot::Var {
            amount: state.clone(),
            state: Some(StateExpr { expr: state, per_z: 0.0 }),
        });
    }
    let probs = ctx.probs();
    let weight = if alg.variant == Variant::Barrier { 1.0 } else { discount };
    cvar_block(&mut lp, &tail_losses, &probs, model.risk.c, CvarTarget::Objective { weight })?;
    if let Some(overlay) = &alg.overlay {
        risk_constraint(&mut lp, overlay, &losses, &probs)?;
    }
    lp.set_parameter_range(0.0, alg.z_max_factor * sr.max(0.0));
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
    if !(0.0..1.0).contains(&model.risk.c) {
        return Err(HedgingError::Spec(format!(
            "retention level c = {} must lie in [0, 1)",
            model.risk.c
        )));
    }
    let sr = super_replication_sweep(model)?;
    let out = parametric_sweep(model, &sr, build)?;
    let root = out.store[0][0].function().expect("root cost-to-go");
    let f0 = price_from_value(root, model.algorithm.acceptance_level)?;
    Ok(HedgeSolution {
        state: StateKind::Capital,
        store: out.store,
        policy: out.policy,
        f0,
        root_state: f0,
        majorants: out.majorants,
        majorant_gap: out.gap,
        super_replication: Some(sr),
        lp_solves: out.solves,
    })
}
