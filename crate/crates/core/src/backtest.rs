//! Monte Carlo replay of hedge policies.
//!
//! Paths are sampled with ChaCha8: one generator per path, seeded with the
//! run seed and switched to the stream numbered by the path index, so a path
//! does not depend on how paths are spread over threads. For trees that carry
//! a life, the death period is drawn first from the chained per-period
//! mortality rates and the index moves are drawn independently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hedging::{DomainEscape, HedgeModel, HedgeSolution, HedgingError, RiskSpec, StateKind};
use crate::lattice::{period_transition_probs, EventTree, Survival};
use crate::market::MarketError;

/// Tail probability of the CR statistic.
pub const TAIL: f64 = 0.05;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("at least one path is required")]
    NoPaths,
    #[error("policy missing at period {period}, node {index}")]
    MissingPolicy { period: usize, index: usize },
    #[error("{count} paths left the stored state domain (first: z = {first_z} outside [{lo}, {hi}] at period {period})")]
    DomainEscape {
        count: usize,
        first_z: f64,
        lo: f64,
        hi: f64,
        period: usize,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Hedging(#[from] HedgingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub histogram_bins: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_paths: 50_000,
            seed: 42,
            histogram_bins: 50,
        }
    }
}

/// Child position (into `EventTree::children`) taken at each period, up to
/// and including the transition into a settling node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub steps: Vec<usize>,
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Index of the first cumulative weight above `u`, falling back to the last.
fn categorical(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

fn sample_path(tree: &EventTree, rng: &mut ChaCha8Rng) -> Path {
    let periods = tree.periods();
    let death = tree.mortality.as_ref().map(|m| {
        // death during period t + 1, or never within the horizon
        (0..periods).find(|&t| rng.gen::<f64>() < m.period_q[t])
    });
    let move_probs = period_transition_probs(tree.factors.pi, tree.subperiods());
    let mut steps = Vec::with_capacity(periods);
    let mut index = 0;
    for t in 0..periods {
        let ups = categorical(&move_probs, rng.gen::<f64>());
        let dies = matches!(death, Some(Some(d)) if d == t);
        let want = match (tree.has_survival(), dies) {
            (false, _) => Survival::NotApplicable,
            (true, true) => Survival::Dead,
            (true, false) => Survival::Alive,
        };
        let children = tree.children(t, index);
        let pos = children
            .iter()
            .position(|c| c.ups == ups && tree.node(t + 1, c.index).survival == want)
            .expect("every move has a child");
        steps.push(pos);
        index = children[pos].index;
        if tree.node(t + 1, index).is_absorbing() {
            break;
        }
    }
    Path { steps }
}

/// Samples `config.n_paths` paths; reproducible for a given seed.
pub fn simulate_paths(tree: &EventTree, config: &SimConfig) -> Vec<Path> {
    (0..config.n_paths)
        .into_par_iter()
        .map(|p| sample_path(tree, &mut path_rng(config.seed, p)))
        .collect()
}

/// Outcome of replaying one path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Replay {
    /// Discounted mismatch `sum e^{-r t} L_t`.
    pub mismatch: f64,
    /// Largest discounted accumulated loss over the path's prefixes.
    pub max_accumulated: f64,
}

/// Walks a path under the stored policy. Losses are `G - W` against the
/// planned required amounts; stateful policies follow the realized state.
pub fn replay(model: &HedgeModel, solution: &HedgeSolution, path: &Path) -> Result<Replay, BacktestError> {
    let tree = &model.tree;
    let dt = tree.params.period_years;
    let r = tree.params.r;
    let mut z = match solution.state {
        StateKind::None => 0.0,
        StateKind::AccumulatedLoss | StateKind::Capital => solution.root_state,
    };
    let mut index = 0;
    let mut mismatch = 0.0;
    let mut max_accumulated = f64::NEG_INFINITY;
    for (t, &pos) in path.steps.iter().enumerate() {
        let decision = solution.policy[t][index]
            .decision_at(z)
            .map_err(|e: DomainEscape| BacktestError::DomainEscape {
                count: 1,
                first_z: e.z,
                lo: e.lo,
                hi: e.hi,
                period: t,
            })?
            .ok_or(BacktestError::MissingPolicy { period: t, index })?;
        let child = tree.children(t, index)[pos];
        let factors = model.menu.factors(tree.node(t, index), tree.node(t + 1, child.index))?;
        let h = decision.holdings;
        let w = h.stock * factors[0] + h.cash * factors[1] + h.option * factors[2];
        let loss = decision.child_amount[pos] - w;
        mismatch += (-r * (t + 1) as f64 * dt).exp() * loss;
        max_accumulated = max_accumulated.max(mismatch);
        if let Some(next) = decision.child_state[pos] {
            z = next;
        }
        index = child.index;
    }
    Ok(Replay {
        mismatch,
        max_accumulated,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bins spanning the sample range.
pub fn histogram(samples: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() || hi <= lo {
        let v = if samples.is_empty() { 0.0 } else { lo };
        return Histogram {
            edges: vec![v, v],
            counts: vec![samples.len()],
        };
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| if k == bins { hi } else { lo + k as f64 * width }).collect();
    let mut counts = vec![0; bins];
    for &s in samples {
        let k = (((s - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

/// Value-at-risk and CVaR of the largest `tail` fraction of the samples. The
/// boundary sample is weighted fractionally, so the CVaR equals the
/// Rockafellar-Uryasev minimum on the empirical distribution.
pub fn tail_stats(samples: &[f64], tail: f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    let n = s.len() as f64;
    let mass = tail * n;
    let whole = (mass.floor() as usize).min(s.len());
    let frac = mass - whole as f64;
    let var_at = (mass.ceil() as usize).clamp(1, s.len()) - 1;
    let mut sum: f64 = s[..whole].iter().sum();
    if whole < s.len() {
        sum += frac * s[whole];
    }
    (s[var_at], sum / mass)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BacktestReport {
    pub samples: Vec<f64>,
    pub f0: f64,
    pub mean: f64,
    pub sd: f64,
    pub var95: f64,
    pub cvar95: f64,
    pub cr: f64,
    /// Premium of one minus the initial cost and the mean mismatch.
    pub gain: f64,
    /// Largest discounted accumulated loss seen on any path prefix.
    pub max_accumulated: f64,
    pub histogram: Histogram,
}

impl BacktestReport {
    /// `statistic,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic,value\n");
        for (k, v) in [
            ("F0", self.f0),
            ("mean", self.mean),
            ("sd", self.sd),
            ("var95", self.var95),
            ("cvar95", self.cvar95),
            ("cr", self.cr),
            ("gain", self.gain),
            ("max_accumulated", self.max_accumulated),
        ] {
            out.push_str(&format!("{k},{v:?}\n"));
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.histogram.counts.iter().enumerate() {
            out.push_str(&format!("{:?},{:?},{c}\n", self.histogram.edges[k], self.histogram.edges[k + 1]));
        }
        out
    }
}

/// Summary statistics of a mismatch sample; `CR = F0 + CVaR95 - 1`.
pub fn cr_statistic(samples: Vec<f64>, f0: f64, bins: usize) -> Result<BacktestReport, BacktestError> {
    if samples.is_empty() {
        return Err(BacktestError::NoPaths);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n).sqrt();
    let (var95, cvar95) = tail_stats(&samples, TAIL);
    let histogram = histogram(&samples, bins);
    Ok(BacktestReport {
        f0,
        mean,
        sd,
        var95,
        cvar95,
        cr: f0 + cvar95 - 1.0,
        gain: 1.0 - f0 - mean,
        max_accumulated: f64::NAN,
        histogram,
        samples,
    })
}

/// Simulates and replays `config.n_paths` paths.
pub fn backtest(model: &HedgeModel, solution: &HedgeSolution, config: &SimConfig) -> Result<BacktestReport, BacktestError> {
    if config.n_paths == 0 {
        return Err(BacktestError::NoPaths);
    }
    let results: Vec<Result<Replay, BacktestError>> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| {
            let path = sample_path(&model.tree, &mut path_rng(config.seed, p));
            replay(model, solution, &path)
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    let mut max_accumulated = f64::NEG_INFINITY;
    let mut escape: Option<BacktestError> = None;
    let mut escapes = 0;
    for r in results {
        match r {
            Ok(rep) => {
                samples.push(rep.mismatch);
                max_accumulated = max_accumulated.max(rep.max_accumulated);
            }
            Err(BacktestError::DomainEscape { first_z, lo, hi, period, .. }) => {
                escapes += 1;
                escape.get_or_insert(BacktestError::DomainEscape {
                    count: 0,
                    first_z,
                    lo,
                    hi,
                    period,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(BacktestError::DomainEscape { first_z, lo, hi, period, .. }) = escape {
        return Err(BacktestError::DomainEscape {
            count: escapes,
            first_z,
            lo,
            hi,
            period,
        });
    }
    let mut report = cr_statistic(samples, solution.f0, config.histogram_bins)?;
    report.max_accumulated = max_accumulated;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub f0: f64,
    pub cr: f64,
    /// Set when the sweep or backtest failed at this level.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Row with the lowest CR among the successful ones.
    pub best: Option<usize>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,F0,cr\n");
        for r in &self.rows {
            out.push_str(&format!("{:?},{:?},{:?}\n", r.c, r.f0, r.cr));
        }
        out
    }
}

/// Full sweep and backtest for each retention level in `grid`, applied to
/// the model's risk spec. Failures are recorded per row.
pub fn sweep_retention(model: &HedgeModel, grid: &[f64], config: &SimConfig) -> SweepTable {
    let rows: Vec<SweepRow> = grid
        .iter()
        .map(|&c| {
            let mut m = model.clone();
            m.risk = RiskSpec { c, ..model.risk.clone() };
            let run = || -> Result<(f64, f64), BacktestError> {
                let sol = m.solve()?;
                let rep = backtest(&m, &sol, config)?;
                Ok((sol.f0, rep.cr))
            };
            match run() {
                Ok((f0, cr)) => SweepRow { c, f0, cr, error: None },
                Err(e) => {
                    log::warn!("retention level {c}: {e}");
                    SweepRow {
                        c,
                        f0: f64::NAN,
                        cr: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.error.is_none())
        .min_by(|a, b| a.1.cr.total_cmp(&b.1.cr))
        .map(|(k, _)| k);
    SweepTable { rows, best }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_hundred_has_tail_mean_97() {
        let s: Vec<f64> = (0..100).map(f64::from).collect();
        let (var, cvar) = tail_stats(&s, TAIL);
        assert_eq!(var, 95.0);
        assert!((cvar - 97.0).abs() < 1e-12);
    }

    #[test]
    fn constant_sample() {
        let rep = cr_statistic(vec![0.02; 7], 1.01, 5).unwrap();
        assert!((rep.cvar95 - 0.02).abs() < 1e-15);
        assert!((rep.cr - (1.01 + 0.02 - 1.0)).abs() < 1e-15);
        assert_eq!(rep.sd, 0.0);
        assert_eq!(rep.histogram.counts, vec![7]);
    }

    #[test]
    fn single_sample_is_its_own_tail() {
        let rep = cr_statistic(vec![-0.3], 1.0, 10).unwrap();
        assert_eq!(rep.cvar95, -0.3);
        assert_eq!(rep.var95, -0.3);
    }

    #[test]
    fn histogram_counts_everything() {
        let s: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.37).sin()).collect();
        let h = histogram(&s, 13);
        assert_eq!(h.counts.iter().sum::<usize>(), 1000);
        assert_eq!(h.edges.len(), 14);
        assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn categorical_edges() {
        assert_eq!(categorical(&[0.2, 0.8], 0.0), 0);
        assert_eq!(categorical(&[0.2, 0.8], 0.2), 1);
        assert_eq!(categorical(&[0.2, 0.8], 0.999_999), 1);
        assert_eq!(categorical(&[0.0, 1.0], 0.0), 1);
    }
}
