//! Products, the hedging-asset menu and per-transition accounting.
//!
//! Holdings are amounts invested (currency), so every asset contributes its
//! gross return over the period: the stock `S_child / S_parent`, cash
//! `exp(r dt)` and the one-period at-the-money call
//! `(S_child - S_parent)^+ / O(S_parent)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::lattice::{LatticeParams, Node, Survival};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("call option enabled but not priced")]
    MissingPrice,
}

/// Black-Scholes price of a European call.
pub fn bs_call_price(spot: f64, strike: f64, r: f64, sigma: f64, tau: f64) -> Result<f64, MarketError> {
    if !(tau > 0.0) {
        return Err(MarketError::Domain(format!("time to expiry {tau} must be positive")));
    }
    if !(spot > 0.0) || strike < 0.0 || !(sigma > 0.0) {
        return Err(MarketError::Domain(format!(
            "spot {spot}, strike {strike}, sigma {sigma} out of range"
        )));
    }
    if strike == 0.0 {
        return Ok(spot);
    }
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let sd = sigma * tau.sqrt();
    let d1 = ((spot / strike).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    let d2 = d1 - sd;
    Ok(spot * n.cdf(d1) - strike * (-r * tau).exp() * n.cdf(d2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GicContract {
    /// Annual cap rate; `f64::INFINITY` for no cap.
    pub cap: f64,
    /// Annual guaranteed rate.
    pub floor_g: f64,
    pub maturity_years: f64,
}

impl Default for GicContract {
    fn default() -> Self {
        GicContract {
            cap: 0.06,
            floor_g: 0.0,
            maturity_years: 1.0,
        }
    }
}

impl GicContract {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.maturity_years > 0.0) || self.floor_g <= -1.0 || self.cap < self.floor_g {
            return Err(MarketError::Domain(format!("invalid GIC {self:?}")));
        }
        Ok(())
    }

    pub fn payoff(&self, index_ratio: f64) -> f64 {
        let cap = (1.0 + self.cap).powf(self.maturity_years);
        let floor = (1.0 + self.floor_g).powf(self.maturity_years);
        index_ratio.min(cap).max(floor)
    }
}

pub fn gic_payoff(index_ratio: f64, contract: &GicContract) -> f64 {
    contract.payoff(index_ratio)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EiaContract {
    pub alpha: f64,
    pub beta: f64,
    pub floor_g: f64,
    /// Annual cap rate; `f64::INFINITY` for no cap.
    pub cap: f64,
    pub maturity_years: f64,
}

impl Default for EiaContract {
    fn default() -> Self {
        EiaContract {
            alpha: 0.5,
            beta: 1.0,
            floor_g: 0.0,
            cap: f64::INFINITY,
            maturity_years: 5.0,
        }
    }
}

impl EiaContract {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(MarketError::Domain(format!(
                "alpha {} and beta {} must lie in (0, 1]",
                self.alpha, self.beta
            )));
        }
        if !(self.maturity_years > 0.0) || self.floor_g <= -1.0 {
            return Err(MarketError::Domain(format!("invalid EIA {self:?}")));
        }
        Ok(())
    }

    /// Benefit after `years` in force.
    pub fn payoff(&self, index_ratio: f64, years: f64) -> f64 {
        let credited = 1.0 + self.alpha * (index_ratio - 1.0);
        let cap = (1.0 + self.cap).powf(years);
        let floor = self.beta * (1.0 + self.floor_g).powf(years);
        credited.min(cap).max(floor)
    }
}

pub fn eia_payoff(index_ratio: f64, years: f64, contract: &EiaContract) -> f64 {
    contract.payoff(index_ratio, years)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Product {
    Gic(GicContract),
    Eia(EiaContract),
}

impl Product {
    pub fn validate(&self) -> Result<(), MarketError> {
        match self {
            Product::Gic(c) => c.validate(),
            Product::Eia(c) => c.validate(),
        }
    }

    /// Benefit `P` at a node: maturity payoff, or death benefit on a death node.
    pub fn payoff_at(&self, node: &Node, params: &LatticeParams) -> f64 {
        let ratio = node.index_value / params.s0;
        match self {
            Product::Gic(c) => c.payoff(ratio),
            Product::Eia(c) => c.payoff(ratio, node.period as f64 * params.period_years),
        }
    }

    /// Whether the claim settles at `node`: maturity, or death during the period.
    pub fn settles_at(&self, node: &Node, periods: usize) -> bool {
        node.period == periods || node.survival == Survival::Dead
    }
}

/// Amount needed at a node: the benefit where the contract settles, the
/// continuation capital otherwise.
pub fn required_amount(node: &Node, periods: usize, payoff: f64, continuation: f64) -> f64 {
    if node.period == periods || node.survival == Survival::Dead {
        payoff
    } else {
        continuation
    }
}

/// Amounts invested in each asset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Holdings {
    pub stock: f64,
    pub cash: f64,
    pub option: f64,
}

impl Holdings {
    pub fn new(stock: f64, cash: f64, option: f64) -> Self {
        Holdings { stock, cash, option }
    }

    /// Portfolio cost `a + b + c`.
    pub fn total(&self) -> f64 {
        self.stock + self.cash + self.option
    }

    pub fn lerp(&self, other: &Holdings, w: f64) -> Holdings {
        Holdings {
            stock: self.stock + w * (other.stock - self.stock),
            cash: self.cash + w * (other.cash - self.cash),
            option: self.option + w * (other.option - self.option),
        }
    }
}

/// Which assets the hedger may hold. Cash is always available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetMenu {
    pub stock: bool,
    pub call: bool,
    /// Allow negative holdings.
    pub short_selling: bool,
    cash_growth: f64,
    /// At-the-money call price per unit of spot; the price at a node is
    /// this times the node's index value.
    call_price_ratio: Option<f64>,
}

impl AssetMenu {
    pub fn new(params: &LatticeParams, stock: bool, call: bool, short_selling: bool) -> Result<Self, MarketError> {
        let call_price_ratio = if call {
            Some(bs_call_price(1.0, 1.0, params.r, params.sigma, params.period_years)?)
        } else {
            None
        };
        Ok(AssetMenu {
            stock,
            call,
            short_selling,
            cash_growth: params.cash_growth(),
            call_price_ratio,
        })
    }

    pub fn all(params: &LatticeParams) -> Result<Self, MarketError> {
        Self::new(params, true, true, false)
    }

    pub fn cash_growth(&self) -> f64 {
        self.cash_growth
    }

    pub fn call_price(&self, spot: f64) -> Option<f64> {
        self.call_price_ratio.map(|o| o * spot)
    }

    /// Gross returns `(stock, cash, option)` over one transition.
    pub fn factors(&self, parent: &Node, child: &Node) -> Result<[f64; 3], MarketError> {
        let ratio = child.index_value / parent.index_value;
        let option = if self.call {
            let price = self.call_price(parent.index_value).ok_or(MarketError::MissingPrice)?;
            (child.index_value - parent.index_value).max(0.0) / price
        } else {
            0.0
        };
        Ok([ratio, self.cash_growth, option])
    }
}

/// Portfolio value `W` after one transition.
pub fn accumulation(holdings: &Holdings, parent: &Node, child: &Node, menu: &AssetMenu) -> Result<f64, MarketError> {
    let [s, b, o] = menu.factors(parent, child)?;
    Ok(holdings.stock * s + holdings.cash * b + holdings.option * o)
}

/// Loss `L = G - W`; negative values are surpluses.
pub fn loss(
    holdings: &Holdings,
    parent: &Node,
    child: &Node,
    g_child: f64,
    menu: &AssetMenu,
) -> Result<f64, MarketError> {
    Ok(g_child - accumulation(holdings, parent, child, menu)?)
}
