//! Per-node view of the tree used to assemble node LPs.

use crate::lattice::Node;
use crate::simplex::{solve_parametric_rhs, Bounds, LpProblem, ParametricError, PiecewiseLinearValue};

use super::blocks::LinExpr;
use super::{par_level, CostToGo, Decision, HedgeModel, HedgingError, NodePolicy, PolicyPiece};
use crate::market::Holdings;

#[derive(Clone, Debug, PartialEq)]
pub struct ChildCtx {
    /// Index in the next level.
    pub index: usize,
    pub prob: f64,
    /// Gross returns of stock, cash and option.
    pub factors: [f64; 3],
    pub settles: bool,
    /// Benefit paid if the contract settles at the child.
    pub payoff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeCtx {
    pub period: usize,
    pub index: usize,
    pub node: Node,
    pub children: Vec<ChildCtx>,
}

impl NodeCtx {
    pub fn new(model: &HedgeModel, period: usize, index: usize) -> Result<Self, HedgingError> {
        let tree = &model.tree;
        let node = *tree.node(period, index);
        let periods = tree.periods();
        let children = tree
            .children(period, index)
            .iter()
            .map(|ch| {
                let child = tree.node(period + 1, ch.index);
                Ok(ChildCtx {
                    index: ch.index,
                    prob: ch.prob,
                    factors: model.menu.factors(&node, child)?,
                    settles: model.product.settles_at(child, periods),
                    payoff: model.product.payoff_at(child, &tree.params),
                })
            })
            .collect::<Result<Vec<_>, HedgingError>>()?;
        Ok(NodeCtx {
            period,
            index,
            node,
            children,
        })
    }

    pub fn probs(&self) -> Vec<f64> {
        self.children.iter().map(|c| c.prob).collect()
    }

    pub(crate) fn infeasible(&self, detail: impl Into<String>) -> HedgingError {
        HedgingError::Infeasible {
            period: self.period,
            level: self.node.level,
            survival: self.node.survival.label(),
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(&self, detail: impl Into<String>) -> HedgingError {
        HedgingError::Numerical {
            period: self.period,
            level: self.node.level,
            survival: self.node.survival.label(),
            detail: detail.into(),
        }
    }
}

/// Adds the stock, cash and option variables (in that order) with the given
/// objective weight.
pub(crate) fn add_holdings(lp: &mut LpProblem, model: &HedgeModel, cost: f64) -> [usize; 3] {
    let menu = &model.menu;
    let free = if menu.short_selling { Bounds::FREE } else { Bounds::NONNEG };
    let stock = lp.add_var(if menu.stock { free } else { Bounds::fixed(0.0) }, cost);
    let cash = lp.add_var(free, cost);
    let option = lp.add_var(if menu.call { free } else { Bounds::fixed(0.0) }, cost);
    [stock, cash, option]
}

/// Portfolio value at a child, `W = a s + b e^{r} + c o`.
pub(crate) fn accumulation(h: [usize; 3], child: &ChildCtx) -> LinExpr {
    LinExpr {
        terms: h.iter().zip(child.factors).map(|(&v, f)| (v, f)).collect(),
        constant: 0.0,
    }
}

/// Loss `G - W` where `G` is an expression.
pub(crate) fn loss(h: [usize; 3], child: &ChildCtx, g: LinExpr) -> LinExpr {
    let mut l = g;
    l.terms.extend(h.iter().zip(child.factors).map(|(&v, f)| (v, -f)));
    l
}

/// Child state as `expr(x) + per_z * z` for node state `z`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct StateExpr {
    pub expr: LinExpr,
    pub per_z: f64,
}

/// Where each child's required amount and state come from in a node LP.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum ChildSlot {
    Fixed(f64),
    Var { amount: LinExpr, state: Option<StateExpr> },
}

pub(crate) fn decision_from(h: [usize; 3], slots: &[ChildSlot], x: &[f64], z: f64) -> Decision {
    let mut child_amount = Vec::with_capacity(slots.len());
    let mut child_state = Vec::with_capacity(slots.len());
    for s in slots {
        match s {
            ChildSlot::Fixed(g) => {
                child_amount.push(*g);
                child_state.push(None);
            }
            ChildSlot::Var { amount, state } => {
                child_amount.push(amount.eval(x));
                child_state.push(state.as_ref().map(|e| e.expr.eval(x) + e.per_z * z));
            }
        }
    }
    Decision {
        holdings: Holdings::new(x[h[0]], x[h[1]], x[h[2]]),
        child_amount,
        child_state,
    }
}

/// Convex child cost-to-go in incremental form: `state = lo + sum d_k` and
/// `value = f(lo) + sum s_k d_k` with `0 <= d_k <= width_k`, so filling the
/// cheapest pieces first recovers `f`.
pub(crate) struct Epigraph {
    pub state: LinExpr,
    pub value: LinExpr,
}

/// Which ends of the domain continue past the function's pieces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Extend {
    /// Flat to the left.
    pub left: bool,
    /// With the last slope to the right.
    pub right: bool,
}

/// Adds the piece variables of `f` with objective weight `cost` on the value.
pub(crate) fn epigraph(lp: &mut LpProblem, f: &PiecewiseLinearValue, extend: Extend, cost: f64) -> Epigraph {
    let pieces = f.pieces();
    let (lo, _) = f.domain();
    let base = pieces[0].eval(lo);
    lp.objective_constant += cost * base;
    let mut state = LinExpr::constant(lo);
    let mut value = LinExpr::constant(base);
    if extend.left {
        let e = lp.add_var(Bounds::NONNEG, 0.0);
        state = state.plus(e, -1.0);
    }
    for p in pieces {
        let d = lp.add_var(Bounds::new(0.0, p.z_hi - p.z_lo), cost * p.slope);
        state = state.plus(d, 1.0);
        value = value.plus(d, p.slope);
    }
    if extend.right {
        let s = pieces[pieces.len() - 1].slope;
        let e = lp.add_var(Bounds::NONNEG, cost * s);
        state = state.plus(e, 1.0);
        value = value.plus(e, s);
    }
    Epigraph { state, value }
}

/// Scalar amount a settled or stateless child requires.
pub(crate) fn scalar_requirement(child: &ChildCtx, next: &[CostToGo]) -> Option<f64> {
    if child.settles {
        Some(child.payoff)
    } else {
        next[child.index].scalar()
    }
}

/// Traced node: exact cost-to-go, the majorant its parent sees, the
/// majorant's largest gap, the policy and the LP solves used.
pub(crate) struct Traced {
    pub exact: CostToGo,
    pub majorant: CostToGo,
    pub gap: f64,
    pub policy: NodePolicy,
    pub solves: usize,
}

/// Chord gaps at or below this are treated as exact.
const MAJORANT_TOL: f64 = 1e-12;

/// Traces a parametric node LP and converts it into a cost-to-go and policy.
pub(crate) fn trace(
    model: &HedgeModel,
    ctx: &NodeCtx,
    lp: &LpProblem,
    h: [usize; 3],
    slots: &[ChildSlot],
) -> Result<Traced, HedgingError> {
    let sol = solve_parametric_rhs(lp).map_err(|e| match e {
        ParametricError::Infeasible { lo, hi } => {
            ctx.infeasible(format!("no feasible state in [{lo}, {hi}]"))
        }
        other => ctx.numerical(other.to_string()),
    })?;
    let pieces = sol
        .pieces
        .iter()
        .map(|p| PolicyPiece {
            z_lo: p.z_lo,
            z_hi: p.z_hi,
            lo: decision_from(h, slots, &p.x_lo, p.z_lo),
            hi: decision_from(h, slots, &p.x_hi, p.z_hi),
        })
        .collect();
    let (majorant, gap) = sol.value.upper_chords(model.algorithm.max_hyperplanes, MAJORANT_TOL);
    Ok(Traced {
        exact: CostToGo::Function(sol.value),
        majorant: CostToGo::Function(majorant),
        gap,
        policy: NodePolicy::Parametric(pieces),
        solves: sol.solves,
    })
}

pub(crate) type NodeLp = (LpProblem, [usize; 3], Vec<ChildSlot>);

pub(crate) struct ParametricSweep {
    pub store: Vec<Vec<CostToGo>>,
    pub majorants: Vec<Vec<CostToGo>>,
    pub policy: Vec<Vec<NodePolicy>>,
    pub gap: f64,
    pub solves: usize,
}

/// Backward sweep where every live node traces a parametric LP assembled by
/// `build` from the next level's majorants and the node's super-replication
/// price.
pub(crate) fn parametric_sweep<B>(model: &HedgeModel, sr: &[Vec<f64>], build: B) -> Result<ParametricSweep, HedgingError>
where
    B: Fn(&HedgeModel, &NodeCtx, &[CostToGo], f64) -> Result<NodeLp, HedgingError> + Sync + Send,
{
    let tree = &model.tree;
    let periods = tree.periods();
    let terminal: Vec<CostToGo> = tree.levels[periods]
        .iter()
        .map(|n| CostToGo::Settled(model.product.payoff_at(n, &tree.params)))
        .collect();
    let mut out = ParametricSweep {
        store: vec![Vec::new(); periods + 1],
        majorants: vec![Vec::new(); periods + 1],
        policy: vec![Vec::new(); periods + 1],
        gap: 0.0,
        solves: 0,
    };
    out.policy[periods] = vec![NodePolicy::Terminal; terminal.len()];
    out.majorants[periods] = terminal.clone();
    out.store[periods] = terminal;
    for t in (0..periods).rev() {
        let next = &out.majorants[t + 1];
        let results = par_level(tree.levels[t].len(), |i| {
            let node = tree.node(t, i);
            if node.is_absorbing() {
                let p = CostToGo::Settled(model.product.payoff_at(node, &tree.params));
                return Ok(Traced {
                    exact: p.clone(),
                    majorant: p,
                    gap: 0.0,
                    policy: NodePolicy::Terminal,
                    solves: 0,
                });
            }
            let ctx = NodeCtx::new(model, t, i)?;
            let (lp, h, slots) = build(model, &ctx, next, sr[t][i])?;
            trace(model, &ctx, &lp, h, &slots)
        });
        let mut store = Vec::with_capacity(results.len());
        let mut majorants = Vec::with_capacity(results.len());
        let mut policy = Vec::with_capacity(results.len());
        for r in results {
            let tr = r?;
            store.push(tr.exact);
            majorants.push(tr.majorant);
            policy.push(tr.policy);
            out.gap = out.gap.max(tr.gap);
            out.solves += tr.solves;
        }
        out.store[t] = store;
        out.majorants[t] = majorants;
        out.policy[t] = policy;
    }
    Ok(out)
}
