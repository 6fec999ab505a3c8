use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("layer must have at least one row and one column, got {rows}x{cols}")]
    EmptyLayer { rows: usize, cols: usize },
    #[error("expected {expected} values for the layer shape, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite weight at flat index {index}")]
    NonFinite { index: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("norm order must be at least 1, got {0}")]
    InvalidNormOrder(f64),
    #[error("invalid layer spec: {0}")]
    InvalidLayerSpec(String),
    #[error("architecture has no layers")]
    EmptyArchitecture,
    #[error("all weights are zero; the layer has no graph")]
    DegenerateLayer,
    #[error("invalid overlap query: {0}")]
    InvalidQuery(String),
    #[error("{available} non-zero weights cannot hold a spanning tree of {alpha} edges")]
    SparserThanSpanningTree { available: f64, alpha: usize },
    #[error("keep count {keep} exceeds the layer size {size}")]
    KeepTooLarge { keep: usize, size: usize },
    #[error("keep count {keep} is below the spanning tree size alpha = {alpha}")]
    KeepBelowSpanningTree { keep: usize, alpha: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(
        "schedule is infeasible for topology preservation: layer {layer} round {round} keeps {keep} < alpha = {alpha}"
    )]
    InfeasibleSchedule {
        layer: usize,
        round: usize,
        keep: usize,
        alpha: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },
}
