//! Run configuration: a sectioned TOML file plus `section.key=value`
//! overrides, resolved into a fully materialized [`RunConfig`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use riskctl::backtest::SimConfig;
use riskctl::hedging::{AlgorithmSpec, HedgeModel, Measure, NormSpec, RiskSpec, Variant};
use riskctl::lattice::{
    build_eia_tree, build_index_tree, period_mortality_from_annual, AnnualMortality, DriftConvention, LatticeParams,
};
use riskctl::market::{AssetMenu, EiaContract, GicContract, Product};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketSection {
    pub sigma: f64,
    pub mu: f64,
    pub r: f64,
    pub s0: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        let p = LatticeParams::default();
        MarketSection {
            sigma: p.sigma,
            mu: p.mu,
            r: p.r,
            s0: p.s0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    /// Hedging periods over the contract; one per month when absent.
    pub periods: Option<usize>,
    pub subperiods: Option<usize>,
    pub drift: DriftConvention,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    #[default]
    Gic,
    Eia,
}

/// Contract fields; unset ones take the defaults of `kind`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProductSection {
    pub kind: ProductKind,
    pub cap: Option<f64>,
    pub floor_g: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub maturity_months: Option<usize>,
    pub entry_age: Option<u32>,
    /// CSV of annual death rates (`age,q`); the bundled table when absent.
    pub mortality: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssetsSection {
    pub stock: bool,
    pub call: bool,
    pub short_selling: bool,
}

impl Default for AssetsSection {
    fn default() -> Self {
        AssetsSection {
            stock: true,
            call: true,
            short_selling: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlaySection {
    #[serde(default)]
    pub measure: Measure,
    pub c: f64,
    #[serde(default)]
    pub gamma0: f64,
    #[serde(default)]
    pub norm: Option<NormSpec>,
}

impl OverlaySection {
    fn risk(&self) -> RiskSpec {
        RiskSpec {
            measure: self.measure,
            c: self.c,
            gamma0: self.gamma0,
            norm: self.norm.clone(),
            gamma3: None,
            super_replication: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub variant: Variant,
    pub measure: Measure,
    pub c: f64,
    pub gamma0: f64,
    pub gamma3: Option<f64>,
    pub super_replication: bool,
    pub norm: Option<NormSpec>,
    pub lambda: f64,
    pub barrier_gamma0: f64,
    pub overlay: Option<OverlaySection>,
    pub z_max_factor: f64,
    pub acceptance_level: f64,
    pub max_hyperplanes: usize,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let risk = RiskSpec::default();
        let alg = AlgorithmSpec::default();
        AlgorithmSection {
            variant: alg.variant,
            measure: risk.measure,
            c: risk.c,
            gamma0: risk.gamma0,
            gamma3: risk.gamma3,
            super_replication: risk.super_replication,
            norm: risk.norm,
            lambda: alg.lambda,
            barrier_gamma0: alg.barrier_gamma0,
            overlay: None,
            z_max_factor: alg.z_max_factor,
            acceptance_level: alg.acceptance_level,
            max_hyperplanes: alg.max_hyperplanes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Retention levels tried by `sweep` and the CR tables.
    pub grid: Vec<f64>,
}

/// `0.05, 0.10, ..., 0.95`.
pub fn five_percent_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            grid: five_percent_grid(),
        }
    }
}

/// Restricts the parameter grids of `table`; empty lists use the full grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableSection {
    pub periods: Vec<usize>,
    pub subperiods: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub market: MarketSection,
    pub lattice: LatticeSection,
    pub product: ProductSection,
    pub assets: AssetsSection,
    pub algorithm: AlgorithmSection,
    pub simulation: SimConfig,
    pub sweep: SweepSection,
    pub table: TableSection,
}

/// Parses the right-hand side of `--set`: a TOML value, or a bare string.
fn parse_value(text: &str) -> Value {
    match format!("v = {text}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(text.to_string()),
    }
}

/// Applies `a.b.c=value` to `table`, creating intermediate tables.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form section.key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("nonempty key");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` in order and materializes
    /// every default.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let cfg = cfg.materialized();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills every optional field that has a kind-dependent default.
    pub fn materialized(mut self) -> Self {
        let p = &mut self.product;
        match p.kind {
            ProductKind::Gic => {
                let d = GicContract::default();
                p.cap.get_or_insert(d.cap);
                p.floor_g.get_or_insert(d.floor_g);
                p.maturity_months.get_or_insert((d.maturity_years * 12.0).round() as usize);
            }
            ProductKind::Eia => {
                let d = EiaContract::default();
                p.cap.get_or_insert(d.cap);
                p.floor_g.get_or_insert(d.floor_g);
                p.alpha.get_or_insert(d.alpha);
                p.beta.get_or_insert(d.beta);
                p.maturity_months.get_or_insert((d.maturity_years * 12.0).round() as usize);
                p.entry_age.get_or_insert(50);
            }
        }
        let months = p.maturity_months.expect("materialized");
        self.lattice.periods.get_or_insert(months);
        self.lattice.subperiods.get_or_insert(LatticeParams::default().subperiods);
        self
    }

    fn validate(&self) -> Result<(), CliError> {
        let p = &self.product;
        if p.kind == ProductKind::Gic && (p.alpha.is_some() || p.beta.is_some() || p.entry_age.is_some()) {
            return Err(CliError::Config("alpha, beta and entry_age apply to the EIA only".into()));
        }
        if p.kind == ProductKind::Gic && p.mortality.is_some() {
            return Err(CliError::Config("a mortality table applies to the EIA only".into()));
        }
        if p.maturity_months == Some(0) {
            return Err(CliError::Config("maturity_months must be positive".into()));
        }
        if self.simulation.n_paths == 0 || self.simulation.histogram_bins == 0 {
            return Err(CliError::Config("n_paths and histogram_bins must be positive".into()));
        }
        self.lattice_params().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.product().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.risk().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.algorithm().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn lattice_params(&self) -> LatticeParams {
        let periods = self.lattice.periods.expect("materialized");
        let months = self.product.maturity_months.expect("materialized");
        LatticeParams {
            sigma: self.market.sigma,
            mu: self.market.mu,
            r: self.market.r,
            periods,
            subperiods: self.lattice.subperiods.expect("materialized"),
            s0: self.market.s0,
            period_years: months as f64 / 12.0 / periods.max(1) as f64,
            drift: self.lattice.drift,
        }
    }

    pub fn product(&self) -> Product {
        let p = &self.product;
        let maturity_years = p.maturity_months.expect("materialized") as f64 / 12.0;
        match p.kind {
            ProductKind::Gic => Product::Gic(GicContract {
                cap: p.cap.expect("materialized"),
                floor_g: p.floor_g.expect("materialized"),
                maturity_years,
            }),
            ProductKind::Eia => Product::Eia(EiaContract {
                alpha: p.alpha.expect("materialized"),
                beta: p.beta.expect("materialized"),
                floor_g: p.floor_g.expect("materialized"),
                cap: p.cap.expect("materialized"),
                maturity_years,
            }),
        }
    }

    pub fn risk(&self) -> RiskSpec {
        let a = &self.algorithm;
        RiskSpec {
            measure: a.measure,
            c: a.c,
            gamma0: a.gamma0,
            norm: a.norm.clone(),
            gamma3: a.gamma3,
            super_replication: a.super_replication,
        }
    }

    pub fn algorithm(&self) -> AlgorithmSpec {
        let a = &self.algorithm;
        AlgorithmSpec {
            variant: a.variant,
            lambda: a.lambda,
            barrier_gamma0: a.barrier_gamma0,
            overlay: a.overlay.as_ref().map(OverlaySection::risk),
            z_max_factor: a.z_max_factor,
            acceptance_level: a.acceptance_level,
            max_hyperplanes: a.max_hyperplanes,
        }
    }

    /// Builds the lattice, assets and contract described by the config.
    pub fn model(&self) -> Result<HedgeModel, CliError> {
        let params = self.lattice_params();
        let a = &self.assets;
        let menu = AssetMenu::new(&params, a.stock, a.call, a.short_selling)?;
        let tree = match self.product.kind {
            ProductKind::Gic => build_index_tree(&params)?,
            ProductKind::Eia => {
                let annual = match &self.product.mortality {
                    Some(path) => AnnualMortality::from_path(path)?,
                    None => AnnualMortality::bundled(),
                };
                let age = self.product.entry_age.expect("materialized");
                let table = period_mortality_from_annual(&annual, age, params.periods, params.period_years)?;
                build_eia_tree(&params, &table)?
            }
        };
        let model = HedgeModel {
            tree,
            product: self.product(),
            menu,
            risk: self.risk(),
            algorithm: self.algorithm(),
        };
        model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(model)
    }
}
