//! Ground truth: the engine's own output with no shedding and no rate limit.

use std::sync::Arc;

use hspice_core::event::{Event, WindowSpec};
use hspice_core::operator::{
    CepOperator, ClockMode, ComplexEvent, CostModel, NeverDrop, OperatorConfig,
};
use hspice_core::pattern::StateMachine;

use crate::error::Result;

/// Runs the operator unthrottled with a never-drop decider; the output is the
/// QoR reference for every shedding run over the same stream.
pub fn oracle_run(
    events: &[Arc<Event>],
    machines: Arc<Vec<StateMachine>>,
    window: WindowSpec,
) -> Result<Vec<ComplexEvent>> {
    let config = OperatorConfig {
        clock: ClockMode::Virtual(CostModel::default()),
        collect_stats: false,
        ..OperatorConfig::default()
    };
    let mut operator = CepOperator::new(machines, window, config)?;
    let mut decider = NeverDrop;
    let mut truth = Vec::new();
    for event in events {
        let out = operator.process_event(event.as_ref().clone(), &mut decider)?;
        truth.extend(out.complex);
    }
    operator.finish()?;
    Ok(truth)
}
