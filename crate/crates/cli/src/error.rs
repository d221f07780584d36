use std::process::ExitCode;

use thiserror::Error;

use riskctl::backtest::BacktestError;
use riskctl::hedging::HedgingError;
use riskctl::lattice::LatticeError;
use riskctl::market::MarketError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("infeasible model: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl From<HedgingError> for CliError {
    fn from(e: HedgingError) -> Self {
        match e {
            HedgingError::Spec(_) | HedgingError::Market(_) => CliError::Config(e.to_string()),
            _ if e.is_infeasible() => CliError::Infeasible(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Hedging(h) => h.into(),
            BacktestError::Market(m) => m.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<LatticeError> for CliError {
    fn from(e: LatticeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        CliError::Config(e.to_string())
    }
}
