//! Recombining binomial event trees for the index, optionally crossed with a
//! single life's survival.
//!
//! The index makes `N` multiplicative moves of size `u` or `d = 1/u` per
//! hedging period. Nodes are keyed by `(period, up-move count, survival)`.
//! In the survival tree every live parent has `2(N+1)` children: `N+1` where
//! the life dies during the period, followed by `N+1` where it survives.
//! Death nodes are absorbing.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_MORTALITY: &str = include_str!("../assets/makeham_illustrative.csv");

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("mortality table covers {have} periods, {need} needed")]
    TableTooShort { need: usize, have: usize },
    #[error("mortality csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the annual drift is spread over the index moves of one period.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftConvention {
    /// Each move grows by `exp(mu * dt / N)` in expectation, so one period
    /// grows by `exp(mu * dt)`.
    #[default]
    PerMove,
    /// Each move grows by `exp(mu * dt)` in expectation.
    PerPeriod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub sigma: f64,
    pub mu: f64,
    /// Continuously compounded annual rate.
    pub r: f64,
    pub periods: usize,
    pub subperiods: usize,
    pub s0: f64,
    /// Length of one hedging period in years.
    pub period_years: f64,
    pub drift: DriftConvention,
}

impl Default for LatticeParams {
    fn default() -> Self {
        LatticeParams {
            sigma: 0.20,
            mu: 0.08,
            r: 0.03,
            periods: 12,
            subperiods: 6,
            s0: 1.0,
            period_years: 1.0 / 12.0,
            drift: DriftConvention::PerMove,
        }
    }
}

impl LatticeParams {
    pub fn validate(&self) -> Result<(), LatticeError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(LatticeError::Domain(format!("sigma = {} must be positive", self.sigma)));
        }
        if self.subperiods < 1 || self.periods < 1 {
            return Err(LatticeError::Domain("periods and subperiods must be at least 1".into()));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(LatticeError::Domain(format!("s0 = {} must be positive", self.s0)));
        }
        if !(self.period_years > 0.0 && self.period_years.is_finite()) {
            return Err(LatticeError::Domain(format!(
                "period length {} must be positive",
                self.period_years
            )));
        }
        if !self.mu.is_finite() || !self.r.is_finite() {
            return Err(LatticeError::Domain("mu and r must be finite".into()));
        }
        Ok(())
    }

    /// Per-period cash growth `exp(r dt)`.
    pub fn cash_growth(&self) -> f64 {
        (self.r * self.period_years).exp()
    }

    pub fn maturity_years(&self) -> f64 {
        self.periods as f64 * self.period_years
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrrFactors {
    pub u: f64,
    pub d: f64,
    pub pi: f64,
}

pub fn crr_factors(params: &LatticeParams) -> Result<CrrFactors, LatticeError> {
    params.validate()?;
    let n = params.subperiods as f64;
    let dt = params.period_years;
    let u = (params.sigma * (dt / n).sqrt()).exp();
    let d = 1.0 / u;
    let growth = match params.drift {
        DriftConvention::PerMove => (params.mu * dt / n).exp(),
        DriftConvention::PerPeriod => (params.mu * dt).exp(),
    };
    let pi = (growth - d) / (u - d);
    if !(pi > 0.0 && pi < 1.0) {
        return Err(LatticeError::Domain(format!(
            "up-probability {pi} outside (0, 1): need d < {growth} < u"
        )));
    }
    Ok(CrrFactors { u, d, pi })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probabilities of `j = 0..=N` up-moves in one period.
pub fn period_transition_probs(pi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| binomial(n, j) * pi.powi(j as i32) * (1.0 - pi).powi((n - j) as i32))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Survival {
    /// Index-only tree.
    NotApplicable,
    Alive,
    /// Died during the period ending at this node.
    Dead,
}

impl Survival {
    pub fn label(self) -> &'static str {
        match self {
            Survival::NotApplicable => "na",
            Survival::Alive => "alive",
            Survival::Dead => "dead",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub period: usize,
    /// Number of up-moves since the root.
    pub level: usize,
    pub index_value: f64,
    pub survival: Survival,
}

impl Node {
    /// Death nodes carry no further hedging decisions.
    pub fn is_absorbing(&self) -> bool {
        self.survival == Survival::Dead
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Child {
    /// Index into the next level's node list.
    pub index: usize,
    pub prob: f64,
    /// Up-moves during the period.
    pub ups: usize,
}

#[derive(Clone, Debug)]
pub struct TransitionSet {
    pub children: Vec<Child>,
}

/// Levelled DAG: `levels[t]` holds the nodes of period `t` and
/// `transitions[t][i]` the children of `levels[t][i]` in `levels[t + 1]`.
#[derive(Clone, Debug)]
pub struct EventTree {
    pub params: LatticeParams,
    pub factors: CrrFactors,
    pub levels: Vec<Vec<Node>>,
    pub transitions: Vec<Vec<TransitionSet>>,
    /// Per-period death probabilities when the tree carries survival.
    pub mortality: Option<MortalityTable>,
}

impl EventTree {
    pub fn periods(&self) -> usize {
        self.params.periods
    }

    pub fn subperiods(&self) -> usize {
        self.params.subperiods
    }

    pub fn root(&self) -> &Node {
        &self.levels[0][0]
    }

    pub fn node(&self, period: usize, index: usize) -> &Node {
        &self.levels[period][index]
    }

    pub fn children(&self, period: usize, index: usize) -> &[Child] {
        self.transitions
            .get(period)
            .map_or(&[][..], |sets| &sets[index].children)
    }

    pub fn has_survival(&self) -> bool {
        self.mortality.is_some()
    }

    /// Position of the node with `level` and `survival` in `levels[period]`.
    pub fn index_of(&self, period: usize, level: usize, survival: Survival) -> usize {
        let live = self.params.subperiods * period + 1;
        match survival {
            Survival::Dead => live + level,
            _ => level,
        }
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Debug dump `period,level,survival,index_value,child_count`.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("period,level,survival,index_value,child_count\n");
        for (t, level) in self.levels.iter().enumerate() {
            for (i, node) in level.iter().enumerate() {
                let children = self.transitions.get(t).map_or(0, |tr| tr[i].children.len());
                let _ = writeln!(
                    out,
                    "{},{},{},{:.12},{}",
                    node.period,
                    node.level,
                    node.survival.label(),
                    node.index_value,
                    children
                );
            }
        }
        out
    }
}

/// `s0 u^(2 level - N t)`; nodes with equal net moves get bit-identical values.
fn index_value(params: &LatticeParams, f: &CrrFactors, period: usize, level: usize) -> f64 {
    let net = 2 * level as i64 - (params.subperiods * period) as i64;
    params.s0 * f.u.powi(net as i32)
}

pub fn build_index_tree(params: &LatticeParams) -> Result<EventTree, LatticeError> {
    let f = crr_factors(params)?;
    let n = params.subperiods;
    let probs = period_transition_probs(f.pi, n);
    let mut levels = Vec::with_capacity(params.periods + 1);
    let mut transitions = Vec::with_capacity(params.periods);
    for t in 0..=params.periods {
        let nodes: Vec<Node> = (0..=n * t)
            .map(|j| Node {
                period: t,
                level: j,
                index_value: index_value(params, &f, t, j),
                survival: Survival::NotApplicable,
            })
            .collect();
        if t < params.periods {
            transitions.push(
                (0..nodes.len())
                    .map(|j| TransitionSet {
                        children: (0..=n)
                            .map(|k| Child {
                                index: j + k,
                                prob: probs[k],
                                ups: k,
                            })
                            .collect(),
                    })
                    .collect(),
            );
        }
        levels.push(nodes);
    }
    Ok(EventTree {
        params: params.clone(),
        factors: f,
        levels,
        transitions,
        mortality: None,
    })
}

/// Index tree crossed with one life. Level `t` lists the `N t + 1` live nodes
/// first, then (for `t >= 1`) the `N t + 1` nodes of death during period `t`.
pub fn build_eia_tree(params: &LatticeParams, mortality: &MortalityTable) -> Result<EventTree, LatticeError> {
    let f = crr_factors(params)?;
    if mortality.period_q.len() < params.periods {
        return Err(LatticeError::TableTooShort {
            need: params.periods,
            have: mortality.period_q.len(),
        });
    }
    let n = params.subperiods;
    let probs = period_transition_probs(f.pi, n);
    let mut levels = Vec::with_capacity(params.periods + 1);
    let mut transitions = Vec::with_capacity(params.periods);
    for t in 0..=params.periods {
        let live = n * t + 1;
        let mut nodes = Vec::with_capacity(2 * live);
        for j in 0..live {
            nodes.push(Node {
                period: t,
                level: j,
                index_value: index_value(params, &f, t, j),
                survival: Survival::Alive,
            });
        }
        if t >= 1 {
            for j in 0..live {
                nodes.push(Node {
                    period: t,
                    level: j,
                    index_value: index_value(params, &f, t, j),
                    survival: Survival::Dead,
                });
            }
        }
        if t < params.periods {
            let q = mortality.period_q[t];
            let next_live = n * (t + 1) + 1;
            let mut sets: Vec<TransitionSet> = (0..live)
                .map(|j| {
                    let dead = (0..=n).map(|k| Child {
                        index: next_live + j + k,
                        prob: probs[k] * q,
                        ups: k,
                    });
                    let alive = (0..=n).map(|k| Child {
                        index: j + k,
                        prob: probs[k] * (1.0 - q),
                        ups: k,
                    });
                    TransitionSet {
                        children: dead.chain(alive).collect(),
                    }
                })
                .collect();
            if t >= 1 {
                sets.extend((0..live).map(|_| TransitionSet { children: Vec::new() }));
            }
            transitions.push(sets);
        }
        levels.push(nodes);
    }
    Ok(EventTree {
        params: params.clone(),
        factors: f,
        levels,
        transitions,
        mortality: Some(mortality.clone()),
    })
}

/// Annual death probabilities by integer age.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnualMortality {
    pub first_age: u32,
    pub annual_q: Vec<f64>,
}

#[derive(Deserialize)]
struct MortalityRow {
    age: u32,
    annual_q: String,
}

impl AnnualMortality {
    /// The bundled illustrative table: Makeham's law with
    /// `A = 0.0007`, `B = 5e-5`, `c = 10^0.04`, ages 0 to 110.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_MORTALITY).expect("bundled mortality table parses")
    }

    pub fn from_path(path: &Path) -> Result<Self, LatticeError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// Parses `age,annual_q` rows with consecutive ages.
    pub fn from_csv_str(text: &str) -> Result<Self, LatticeError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| LatticeError::Csv(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["age", "annual_q"] {
            return Err(LatticeError::Csv(format!("expected header age,annual_q, got {headers:?}")));
        }
        let mut first_age = None;
        let mut annual_q = Vec::new();
        for (line, row) in reader.deserialize::<MortalityRow>().enumerate() {
            let row = row.map_err(|e| LatticeError::Csv(e.to_string()))?;
            let q: f64 = row
                .annual_q
                .parse()
                .map_err(|_| LatticeError::Csv(format!("row {}: bad rate {:?}", line + 1, row.annual_q)))?;
            if !(0.0..1.0).contains(&q) {
                return Err(LatticeError::Domain(format!("age {}: annual q {q} outside [0, 1)", row.age)));
            }
            let expected = first_age.map_or(row.age, |a: u32| a + annual_q.len() as u32);
            if row.age != expected {
                return Err(LatticeError::Csv(format!("ages not consecutive at {}", row.age)));
            }
            first_age.get_or_insert(row.age);
            annual_q.push(q);
        }
        let first_age = first_age.ok_or_else(|| LatticeError::Csv("empty table".into()))?;
        Ok(AnnualMortality { first_age, annual_q })
    }

    pub fn q(&self, age: u32) -> Option<f64> {
        age.checked_sub(self.first_age)
            .and_then(|i| self.annual_q.get(i as usize))
            .copied()
    }
}

/// Death probabilities per hedging period for one life.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MortalityTable {
    pub entry_age: u32,
    /// `period_q[t]` is the probability of dying in period `t + 1` given
    /// survival to `t`.
    pub period_q: Vec<f64>,
}

impl MortalityTable {
    pub fn immortal(periods: usize) -> Self {
        MortalityTable {
            entry_age: 0,
            period_q: vec![0.0; periods],
        }
    }

    /// Probability of surviving the first `periods` periods.
    pub fn survival(&self, periods: usize) -> f64 {
        self.period_q[..periods].iter().map(|q| 1.0 - q).product()
    }
}

/// Converts annual rates to per-period rates under a constant force of
/// mortality within each year of age.
pub fn period_mortality_from_annual(
    table: &AnnualMortality,
    entry_age: u32,
    periods: usize,
    period_years: f64,
) -> Result<MortalityTable, LatticeError> {
    let mut period_q = Vec::with_capacity(periods);
    for t in 0..periods {
        // age attained at the start of the period; the epsilon absorbs 12 * (1/12) round-off
        let years = (t as f64 * period_years + 1e-9).floor() as u32;
        let age = entry_age + years;
        let q = table.q(age).ok_or(LatticeError::TableTooShort {
            need: periods,
            have: t,
        })?;
        period_q.push(1.0 - (1.0 - q).powf(period_years));
    }
    Ok(MortalityTable { entry_age, period_q })
}

pub fn monthly_mortality_from_annual(
    table: &AnnualMortality,
    entry_age: u32,
    months: usize,
) -> Result<MortalityTable, LatticeError> {
    period_mortality_from_annual(table, entry_age, months, 1.0 / 12.0)
}
