//! `price`, `backtest` and `sweep`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use riskctl::backtest::{backtest, sweep_retention};
use riskctl::hedging::{write_cost_to_go_csv, write_policy_csv};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn write_config(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

pub fn price(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let sol = model.solve()?;
    write_policy_csv(&model.tree, &sol, BufWriter::new(File::create(out.join("policy.csv"))?))?;
    write_cost_to_go_csv(&model.tree, &sol, BufWriter::new(File::create(out.join("costtogo.csv"))?))?;
    write_config(cfg, out)?;
    println!("F0 = {:.6}", sol.f0);
    log::info!("{} node LPs solved", sol.lp_solves);
    Ok(())
}

pub fn run_backtest(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = cfg.model()?;
    let sol = model.solve()?;
    let report = backtest(&model, &sol, &cfg.simulation)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    std::fs::write(out.join("hist.csv"), report.histogram_csv())?;
    write_config(cfg, out)?;
    println!("F0    = {:.6}", report.f0);
    println!("mean  = {:.4}%", 100.0 * report.mean);
    println!("sd    = {:.4}%", 100.0 * report.sd);
    println!("VaR   = {:.4}%", 100.0 * report.var95);
    println!("CVaR  = {:.4}%", 100.0 * report.cvar95);
    println!("CR    = {:.4}%", 100.0 * report.cr);
    println!("gain  = {:.4}%", 100.0 * report.gain);
    if report.max_accumulated.is_finite() {
        println!("max accumulated loss = {:.6}", report.max_accumulated);
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if cfg.sweep.grid.is_empty() {
        return Err(CliError::Config("sweep.grid is empty".into()));
    }
    let model = cfg.model()?;
    let table = sweep_retention(&model, &cfg.sweep.grid, &cfg.simulation);
    std::fs::write(out.join("sweep.csv"), table.to_csv())?;
    write_config(cfg, out)?;
    match table.best {
        Some(b) => {
            let r = &table.rows[b];
            println!("best c = {} with CR = {:.4}% (F0 = {:.6})", r.c, 100.0 * r.cr, r.f0);
            Ok(())
        }
        None => Err(CliError::Infeasible("no retention level in the grid could be solved".into())),
    }
}
