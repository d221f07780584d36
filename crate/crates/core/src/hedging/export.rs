//! CSV exports of policies and cost-to-go functions.

use std::io::Write;

use crate::lattice::EventTree;

use super::{CostToGo, HedgeSolution, NodePolicy};

fn io_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// One row per fixed decision or per linear piece, with the holdings at the
/// left end of the piece. Columns:
/// `period,level,survival,z_lo,z_hi,stock,cash,option,F` where `F` is the
/// portfolio cost.
pub fn write_policy_csv<W: Write>(tree: &EventTree, solution: &HedgeSolution, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "level", "survival", "z_lo", "z_hi", "stock", "cash", "option", "F"])
        .map_err(io_error)?;
    for (t, level) in solution.policy.iter().enumerate() {
        for (i, p) in level.iter().enumerate() {
            let node = tree.node(t, i);
            let head = [t.to_string(), node.level.to_string(), node.survival.label().to_string()];
            let mut row = |z_lo: String, z_hi: String, d: &super::Decision| {
                let h = d.holdings;
                let mut rec: Vec<String> = head.to_vec();
                rec.extend([z_lo, z_hi]);
                rec.extend([h.stock, h.cash, h.option, h.total()].map(|v| v.to_string()));
                w.write_record(&rec).map_err(io_error)
            };
            match p {
                NodePolicy::Terminal => {}
                NodePolicy::Fixed(d) => row(String::new(), String::new(), d)?,
                NodePolicy::Parametric(pieces) => {
                    for piece in pieces {
                        row(piece.z_lo.to_string(), piece.z_hi.to_string(), &piece.lo)?;
                    }
                }
            }
        }
    }
    w.flush()
}

/// One row per hyperplane of every non-settled node's cost-to-go; scalar
/// values appear as flat hyperplanes.
pub fn write_cost_to_go_csv<W: Write>(tree: &EventTree, solution: &HedgeSolution, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["period", "level", "survival", "slope", "intercept"])
        .map_err(io_error)?;
    for (t, level) in solution.store.iter().enumerate() {
        for (i, c) in level.iter().enumerate() {
            let node = tree.node(t, i);
            let planes = match c {
                CostToGo::Settled(_) => continue,
                CostToGo::Constant(v) => vec![(0.0, *v)],
                CostToGo::Function(f) => f.hyperplanes(),
            };
            for (s, b) in planes {
                w.write_record([
                    t.to_string(),
                    node.level.to_string(),
                    node.survival.label().to_string(),
                    s.to_string(),
                    b.to_string(),
                ])
                .map_err(io_error)?;
            }
        }
    }
    w.flush()
}
