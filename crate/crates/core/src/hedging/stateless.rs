//! Cheapest portfolio under a local risk constraint, node by node.

use crate::simplex::{solve, LpProblem, LpStatus};

use super::blocks::{risk_constraint, LinExpr};
use super::node::{add_holdings, decision_from, loss, scalar_requirement, ChildSlot, NodeCtx};
use super::{par_level, CostToGo, Decision, HedgeModel, HedgeSolution, HedgingError, NodePolicy, RiskSpec, StateKind};

/// Cheapest portfolio whose child losses `G_j - W_j` satisfy `risk`.
/// Returns its cost and the decision.
pub fn algo2_node(
    model: &HedgeModel,
    ctx: &NodeCtx,
    child_g: &[f64],
    risk: &RiskSpec,
) -> Result<(f64, Decision), HedgingError> {
    if child_g.len() != ctx.children.len() {
        return Err(HedgingError::Spec("one required amount per child expected".into()));
    }
    let mut lp = LpProblem::new();
    let h = add_holdings(&mut lp, model, 1.0);
    let losses: Vec<LinExpr> = ctx
        .children
        .iter()
        .zip(child_g)
        .map(|(ch, &g)| loss(h, ch, LinExpr::constant(g)))
        .collect();
    risk_constraint(&mut lp, risk, &losses, &ctx.probs())?;
    let sol = solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {
            let slots: Vec<ChildSlot> = child_g.iter().map(|&g| ChildSlot::Fixed(g)).collect();
            Ok((sol.objective, decision_from(h, &slots, &sol.x, 0.0)))
        }
        LpStatus::Infeasible => Err(ctx.infeasible("no portfolio satisfies the local risk constraint")),
        LpStatus::Unbounded => Err(ctx.numerical("portfolio cost is unbounded below")),
    }
}

struct LevelOutput {
    store: Vec<CostToGo>,
    policy: Vec<NodePolicy>,
    solves: usize,
}

fn terminal_level(model: &HedgeModel) -> Vec<CostToGo> {
    let tree = &model.tree;
    tree.levels[tree.periods()]
        .iter()
        .map(|n| CostToGo::Settled(model.product.payoff_at(n, &tree.params)))
        .collect()
}

fn stateless_level(
    model: &HedgeModel,
    risk: &RiskSpec,
    t: usize,
    next: &[CostToGo],
) -> Result<LevelOutput, HedgingError> {
    let tree = &model.tree;
    let results = par_level(tree.levels[t].len(), |i| {
        let node = tree.node(t, i);
        if node.is_absorbing() {
            let p = model.product.payoff_at(node, &tree.params);
            return Ok::<_, HedgingError>((CostToGo::Settled(p), NodePolicy::Terminal, 0));
        }
        let ctx = NodeCtx::new(model, t, i)?;
        let g: Vec<f64> = ctx
            .children
            .iter()
            .map(|ch| scalar_requirement(ch, next).expect("stateless store holds scalars"))
            .collect();
        let (c, d) = algo2_node(model, &ctx, &g, risk)?;
        Ok((CostToGo::Constant(c), NodePolicy::Fixed(d), 1))
    });
    let mut out = LevelOutput {
        store: Vec::with_capacity(results.len()),
        policy: Vec::with_capacity(results.len()),
        solves: 0,
    };
    for r in results {
        let (s, p, n) = r?;
        out.store.push(s);
        out.policy.push(p);
        out.solves += n;
    }
    Ok(out)
}

fn run(model: &HedgeModel, risk: &RiskSpec) -> Result<(Vec<Vec<CostToGo>>, Vec<Vec<NodePolicy>>, usize), HedgingError> {
    let periods = model.tree.periods();
    let mut store = vec![Vec::new(); periods + 1];
    let mut policy = vec![Vec::new(); periods + 1];
    store[periods] = terminal_level(model);
    policy[periods] = vec![NodePolicy::Terminal; store[periods].len()];
    let mut solves = 0;
    for t in (0..periods).rev() {
        let out = stateless_level(model, risk, t, &store[t + 1])?;
        store[t] = out.store;
        policy[t] = out.policy;
        solves += out.solves;
    }
    Ok((store, policy, solves))
}

fn scalars(store: &[Vec<CostToGo>]) -> Vec<Vec<f64>> {
    store
        .iter()
        .map(|level| level.iter().map(|c| c.scalar().expect("scalar store")).collect())
        .collect()
}

/// Super-replication price `min a+b+c` subject to `W >= G` at every node.
pub fn super_replication_sweep(model: &HedgeModel) -> Result<Vec<Vec<f64>>, HedgingError> {
    let risk = RiskSpec {
        super_replication: true,
        gamma3: None,
        ..model.risk.clone()
    };
    Ok(scalars(&run(model, &risk)?.0))
}

pub(crate) fn sweep(model: &HedgeModel) -> Result<HedgeSolution, HedgingError> {
    let (store, policy, lp_solves) = run(model, &model.risk)?;
    let f0 = store[0][0].scalar().expect("root value");
    Ok(HedgeSolution {
        state: StateKind::None,
        store,
        policy,
        f0,
        root_state: 0.0,
        majorants: Vec::new(),
        majorant_gap: 0.0,
        super_replication: None,
        lp_solves,
    })
}
