use thiserror::Error;

/// Errors raised by the channel, link and relay simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("operation requires a {expected}-D environment, channel is {found}-D")]
    DimensionMismatch { expected: u8, found: u8 },

    #[error("operation requires {expected} reception, channel uses {found}")]
    ReceptionMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("symbol {symbol} out of range for a {levels}-level scheme")]
    SymbolOutOfRange { symbol: u8, levels: u8 },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("emission history has {history} slots but only {probs} tap probabilities")]
    HistoryTooLong { history: usize, probs: usize },

    #[error("training run never produced symbol {0}; increase the number of training symbols")]
    StarvedSymbol(u8),

    #[error("decision region map has no labeled cell")]
    EmptyRegionMap,

    #[error("relay at {d_tx_relay} um and {d_relay_rx} um does not sum to tx-rx distance {d_tx_rx} um")]
    NonCollinear {
        d_tx_rx: f64,
        d_tx_relay: f64,
        d_relay_rx: f64,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}
