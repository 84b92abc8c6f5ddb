//! Single-operator complex-event-processing engine with state-aware,
//! utility-based load shedding.
//!
//! The crate is organized around the shedding pipeline:
//!
//! - [`event`]: events, stream schemas, sliding-window assignment.
//! - [`guard`] / [`pattern`]: the pattern language and its compilation to
//!   guarded state machines.
//! - [`operator`]: the runtime that advances partial matches, consults the
//!   active shedder per pairing, and emits observations while training.
//! - [`stats`]: the 3-D utility table built from contribution and completion
//!   observations.
//! - [`planner`]: overload detection, drop amounts, virtual windows,
//!   utility-threshold arrays, and plan publication.
//! - [`shedders`]: the state-aware shedder plus lite baselines behind one
//!   decider interface.

pub mod error;
pub mod event;
pub mod guard;
pub mod operator;
pub mod pattern;
pub mod planner;
pub mod serde_util;
pub mod shedders;
pub mod stats;
pub mod sync;

pub use error::{CoreError, Result};
pub use event::{Event, StreamSchema, TypeId, WindowKind, WindowSpec};
pub use operator::{
    CepOperator, ClockMode, ComplexEvent, CostModel, NeverDrop, OperatorConfig, OperatorMetrics,
    ShedDecider,
};
pub use pattern::{
    compile_patterns, PatternId, PatternSpec, SelectionPolicy, StateId, StateMachine, StateSpace,
};
pub use planner::{
    build_threshold_array, build_virtual_window, compute_drop_amount, control_tick, threshold_for,
    ControlConfig, OverloadController, ShedPlan, ThresholdArray, VirtualWindow,
};
pub use shedders::{build_shedder, AnyShedder, DropAccounting, ShedderAssets, ShedderConfig};
pub use stats::{
    retrain, CompletionObservation, ContributionObservation, ObservationBuffer, TableConfig,
    UtilityTable,
};
pub use sync::Shared;
