//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("budget exceeded: {what} needs {needed}, budget is {budget}")]
    Budget { what: String, needed: u128, budget: u128 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("modulated frequency vanishes for denominator {0}")]
    VanishingDenominator(String),
    #[error("trajectory left the non-resonant set at t = {t}: {detail}")]
    ResonanceCrossing { t: f64, detail: String },
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepCollapse { t: f64, h: f64 },
    #[error("norm blow-up detected at t = {t}")]
    Instability { t: f64 },
    #[error("acceptance rate {rate:e} below floor {floor:e}; shrink M")]
    LowAcceptance { rate: f64, floor: f64 },
    #[error("Hamiltonian is not resonant: {0}")]
    NotResonant(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
