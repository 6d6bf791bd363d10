use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("frame of {bits} bits does not fill whole symbols of {per_symbol} bits")]
    NonIntegralFrame { bits: u64, per_symbol: u64 },
    #[error("subcarrier quota {numerator}/{denominator} is not integral")]
    NonIntegralQuota { numerator: u64, denominator: u64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("zero channel gain")]
    ZeroGain,
    #[error("transportation instance is unbalanced (supply {supply}, demand {demand})")]
    Unbalanced { supply: u64, demand: u64 },
    #[error("transportation instance is infeasible")]
    Infeasible,
    #[error("instance too large for exhaustive search ({0} assignments)")]
    TooLarge(u128),
    #[error("target BER {0} outside (0, 0.2)")]
    Domain(f64),
    #[error("{bound} violated: observed {observed}, bound {limit}")]
    BoundViolation {
        bound: &'static str,
        observed: f64,
        limit: f64,
    },
    #[error("illegal packet transition {from:?} -> {to:?}")]
    IllegalTransition {
        from: crate::model::PacketState,
        to: crate::model::PacketState,
    },
}
