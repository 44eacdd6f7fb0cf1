//! Activation controllers and the scores they are judged by.

pub mod grid;
pub mod placement;
pub mod qlearn;
pub mod scoring;

pub use grid::{grid_placement, grid_schedule, DutySchedule, GridConfig, PhaseMode};
pub use placement::{
    placement_search, read_placement_csv, write_placement_csv, SearchResult, SearchSpec,
};
pub use qlearn::{
    encode_state, reward, Action, DeviceState, LearningParams, QPolicy, StateBins, StateKey,
};
pub use scoring::{
    metrics, object_error, objective, DetectionMetrics, IntruderOutcome, Outcome, OutcomeWeights,
};
