use thiserror::Error;

/// Everything that can go wrong while parsing, compiling or analysing an interferometer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("dangling port {0}")]
    DanglingPort(String),
    #[error("duplicate name {0}")]
    DuplicateName(String),
    #[error("channel graph is not a DAG (cycle through {0})")]
    NotADag(String),
    #[error("no source declared")]
    NoSource,
    #[error("more than one source declared ({0})")]
    MultipleSources(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("port {0} does not exist or has the wrong direction")]
    UnknownPort(String),
    #[error("port {0} is connected more than once")]
    PortConnectedTwice(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown channel {0}")]
    UnknownChannel(String),
    #[error("unknown detector {0}")]
    UnknownDetector(String),
    #[error("slot {slot} is out of range (final slot is {last})")]
    InvalidSlot { slot: usize, last: usize },
    #[error("unknown probe {0}")]
    UnknownProbe(String),
    #[error("probe {probe}: channel {channel} is not occupied at slot {slot}")]
    TargetNotOccupiedAtSlot {
        probe: String,
        channel: String,
        slot: usize,
    },
    #[error("channel {channel} is not occupied at slot {slot}")]
    ChannelNotOccupiedAtSlot { channel: String, slot: usize },
    #[error("conditioning event {0} has zero probability")]
    ZeroProbabilityCondition(String),
    #[error("records or tables come from different configurations")]
    MixedConfigurations,
    #[error("framework syntax error: {0}")]
    FrameworkSyntax(String),
    #[error("projectors at slot {slot} overlap: {first} and {second}")]
    OverlappingProjectors {
        slot: usize,
        first: String,
        second: String,
    },
    #[error("framework is inconsistent (max off-diagonal {max_offdiag:.3e} between {} and {})", witness.0, witness.1)]
    InconsistentFramework {
        max_offdiag: f64,
        witness: (String, String),
    },
    #[error("projectors at slot {slot} do not commute")]
    NonCommutingProjectors { slot: usize },
    #[error("frameworks cannot be combined: common refinement is inconsistent (max off-diagonal {max_offdiag:.3e} between {} and {})", witness.0, witness.1)]
    IncompatibleFrameworks {
        max_offdiag: f64,
        witness: (String, String),
    },
    #[error("post-selection on {detector} is orthogonal to the pre-selected state")]
    OrthogonalPostSelection { detector: String },
}

pub type Result<T> = std::result::Result<T, Error>;
