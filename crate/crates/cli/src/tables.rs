//! Parameter grids of the reference tables, written as CSV.
//!
//! Table 1 holds initial portfolio values; tables 2 to 5 hold the
//! retention level (in percent) minimizing CR and that CR (in percent),
//! found over `sweep.grid`. Failed cells are written as `NaN`.

use std::fmt::Write as _;
use std::path::Path;

use riskctl::backtest::sweep_retention;

use crate::config::RunConfig;
use crate::error::CliError;

const FULL_GRID: [usize; 6] = [2, 4, 6, 8, 12, 24];
const FULL_GRID_52: [usize; 7] = [2, 4, 6, 8, 12, 24, 52];

fn or_full(chosen: &[usize], full: &[usize]) -> Vec<usize> {
    if chosen.is_empty() {
        full.to_vec()
    } else {
        chosen.to_vec()
    }
}

fn price_cell(cfg: &RunConfig) -> Result<f64, CliError> {
    Ok(cfg.model()?.solve()?.f0)
}

/// `(c, CR)` in percent at the retention level with the lowest CR.
fn best_cell(cfg: &RunConfig) -> Result<(f64, f64), CliError> {
    let model = cfg.model()?;
    let table = sweep_retention(&model, &cfg.sweep.grid, &cfg.simulation);
    let best = table
        .best
        .ok_or_else(|| CliError::Infeasible("no retention level in the grid could be solved".into()))?;
    let r = &table.rows[best];
    Ok(((1e4 * r.c).round() / 100.0, 100.0 * r.cr))
}

fn logged<T>(label: &str, r: Result<T, CliError>, nan: T) -> T {
    match r {
        Ok(v) => {
            log::info!("{label} done");
            v
        }
        Err(e) => {
            log::warn!("{label}: {e}");
            nan
        }
    }
}

fn with_periods(cfg: &RunConfig, periods: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.lattice.periods = Some(periods);
    c
}

fn with_subperiods(cfg: &RunConfig, subperiods: usize) -> RunConfig {
    let mut c = cfg.clone();
    c.lattice.subperiods = Some(subperiods);
    c
}

/// Initial values over hedging periods (rows) and moves per period (columns).
pub fn table1(cfg: &RunConfig) -> String {
    let ts = or_full(&cfg.table.periods, &FULL_GRID);
    let ns = or_full(&cfg.table.subperiods, &FULL_GRID);
    let mut out = String::from("T");
    for n in &ns {
        write!(out, ",{n}").unwrap();
    }
    out.push('\n');
    for &t in &ts {
        write!(out, "{t}").unwrap();
        for &n in &ns {
            let cell = with_subperiods(&with_periods(cfg, t), n);
            let f0 = logged(&format!("table 1 cell T={t} N={n}"), price_cell(&cell), f64::NAN);
            write!(out, ",{f0:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// One column per grid value, rows `c` and `CR`.
fn best_by_column(head: &str, values: &[usize], cell: impl Fn(usize) -> RunConfig) -> String {
    let results: Vec<(f64, f64)> = values
        .iter()
        .map(|&v| logged(&format!("{head}={v}"), best_cell(&cell(v)), (f64::NAN, f64::NAN)))
        .collect();
    let mut out = String::from(head);
    for v in values {
        write!(out, ",{v}").unwrap();
    }
    out.push_str("\nc");
    for (c, _) in &results {
        write!(out, ",{c:?}").unwrap();
    }
    out.push_str("\nCR");
    for (_, cr) in &results {
        write!(out, ",{cr:?}").unwrap();
    }
    out.push('\n');
    out
}

/// Best CR over the number of hedging periods.
pub fn table2(cfg: &RunConfig) -> String {
    let ts = or_full(&cfg.table.periods, &FULL_GRID_52);
    best_by_column("T", &ts, |t| with_periods(cfg, t))
}

/// Best CR over the number of moves per period.
pub fn table3(cfg: &RunConfig) -> String {
    let ns = or_full(&cfg.table.subperiods, &FULL_GRID_52);
    best_by_column("N", &ns, |n| with_subperiods(cfg, n))
}

/// A named two-row block: labels and configs for each row.
struct Block {
    head: &'static str,
    rows: Vec<(String, RunConfig)>,
}

/// Blocks side by side, each contributing `head,c,CR` columns.
fn blocks_csv(blocks: &[Block]) -> String {
    let cells: Vec<Vec<(String, f64, f64)>> = blocks
        .iter()
        .map(|b| {
            b.rows
                .iter()
                .map(|(label, cfg)| {
                    let (c, cr) = logged(
                        &format!("{} = {label}", b.head),
                        best_cell(cfg),
                        (f64::NAN, f64::NAN),
                    );
                    (label.clone(), c, cr)
                })
                .collect()
        })
        .collect();
    let head: Vec<String> = blocks.iter().map(|b| format!("{},c,CR", b.head)).collect();
    let mut out = head.join(",");
    out.push('\n');
    let rows = blocks.iter().map(|b| b.rows.len()).max().unwrap_or(0);
    for k in 0..rows {
        let line: Vec<String> = cells
            .iter()
            .map(|col| match col.get(k) {
                Some((label, c, cr)) => format!("{label},{c:?},{cr:?}"),
                None => ",,".to_string(),
            })
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn varied(cfg: &RunConfig, values: &[f64], set: impl Fn(&mut RunConfig, f64)) -> Vec<(String, RunConfig)> {
    values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            set(&mut c, v);
            (format!("{}", (1e4 * v).round() / 100.0), c)
        })
        .collect()
}

/// Contract variations: maturity in months (monthly hedging), cap and
/// guaranteed rate (percent).
pub fn table4(cfg: &RunConfig) -> String {
    let maturity = [24usize, 36]
        .iter()
        .map(|&t| {
            let mut c = with_periods(cfg, t);
            c.product.maturity_months = Some(t);
            (t.to_string(), c)
        })
        .collect();
    blocks_csv(&[
        Block {
            head: "T",
            rows: maturity,
        },
        Block {
            head: "zeta",
            rows: varied(cfg, &[0.05, 0.07], |c, v| c.product.cap = Some(v)),
        },
        Block {
            head: "g",
            rows: varied(cfg, &[0.01, 0.02], |c, v| c.product.floor_g = Some(v)),
        },
    ])
}

/// Market parameter sensitivity (percent) and the effect of the option.
pub fn table5(cfg: &RunConfig) -> String {
    let option = [("with", true), ("without", false)]
        .iter()
        .map(|&(label, call)| {
            let mut c = cfg.clone();
            c.assets.call = call;
            (label.to_string(), c)
        })
        .collect();
    blocks_csv(&[
        Block {
            head: "mu",
            rows: varied(cfg, &[0.07, 0.09], |c, v| c.market.mu = v),
        },
        Block {
            head: "sigma",
            rows: varied(cfg, &[0.15, 0.25], |c, v| c.market.sigma = v),
        },
        Block {
            head: "r",
            rows: varied(cfg, &[0.02, 0.04], |c, v| c.market.r = v),
        },
        Block {
            head: "option",
            rows: option,
        },
    ])
}

pub fn run(cfg: &RunConfig, id: u8, out: &Path) -> Result<(), CliError> {
    let csv = match id {
        1 => table1(cfg),
        2 => table2(cfg),
        3 => table3(cfg),
        4 => table4(cfg),
        5 => table5(cfg),
        _ => return Err(CliError::Config(format!("no table {id}; tables are 1 to 5"))),
    };
    let path = out.join(format!("table{id}.csv"));
    std::fs::write(&path, &csv)?;
    crate::commands::write_config(cfg, out)?;
    print!("{csv}");
    Ok(())
}
