//! Training: one unthrottled pass over a stream with statistics collection,
//! producing the utility table, the virtual window, the threshold array, and
//! the baseline shedders' models, bundled for export.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use hspice_core::event::{Event, WindowSpec};
use hspice_core::operator::{
    CepOperator, ClockMode, CostModel, NeverDrop, OperatorConfig, TrainingCollector,
};
use hspice_core::pattern::{PatternSpec, StateMachine, StateSpace};
use hspice_core::planner::{
    build_threshold_array, build_virtual_window, ThresholdArray, VirtualWindow,
};
use hspice_core::shedders::{
    build_bl_model, build_espice_model, build_pspice_model, BlModel, EspiceModel, PspiceModel,
};
use hspice_core::stats::{ExportedTable, TableConfig, UtilityTable};

use crate::error::Result;

/// Everything `train` exports and `run` loads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub utility_table: ExportedTable,
    pub virtual_window: VirtualWindow,
    pub thresholds: ThresholdArray,
    pub espice: EspiceModel,
    pub bl: BlModel,
    pub pspice: PspiceModel,
    pub training_windows: usize,
    pub observations: usize,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn table(&self) -> Result<UtilityTable> {
        Ok(UtilityTable::from_export(&self.utility_table)?)
    }
}

pub struct TrainSettings {
    pub type_count: u16,
    pub positions: u32,
    pub bin_size: u32,
    pub min_observations: usize,
    pub cost_model: CostModel,
}

/// Collects observations by replaying the stream unthrottled.
pub fn collect_training(
    events: &[Arc<Event>],
    machines: Arc<Vec<StateMachine>>,
    window: WindowSpec,
    cost_model: CostModel,
) -> Result<TrainingCollector> {
    let config = OperatorConfig {
        clock: ClockMode::Virtual(cost_model),
        collect_stats: true,
        ..OperatorConfig::default()
    };
    let mut operator = CepOperator::new(machines, window, config)?;
    let mut decider = NeverDrop;
    for event in events {
        operator.process_event(event.as_ref().clone(), &mut decider)?;
    }
    operator.finish()?;
    Ok(operator.take_training())
}

/// Builds the full model bundle from a training stream.
pub fn train(
    events: &[Arc<Event>],
    specs: &[PatternSpec],
    machines: Arc<Vec<StateMachine>>,
    window: WindowSpec,
    settings: &TrainSettings,
) -> Result<TrainedModel> {
    let training = collect_training(events, machines.clone(), window, settings.cost_model)?;
    let space = StateSpace::new(&machines);
    let table_config = TableConfig::new(settings.type_count, settings.positions)
        .with_bin_size(settings.bin_size)
        .with_min_observations(settings.min_observations);
    let table = UtilityTable::build(&training.observations, &space, &table_config)?;
    let vw = build_virtual_window(
        &training.window_tallies,
        settings.positions,
        settings.bin_size,
    )?;
    let thresholds = build_threshold_array(&vw, &table)?;
    let espice = build_espice_model(
        &training,
        settings.type_count,
        settings.positions,
        settings.bin_size,
    )?;
    let bl = build_bl_model(specs, &training, settings.type_count, settings.positions)?;
    let pspice = build_pspice_model(&training, settings.positions, settings.bin_size)?;
    Ok(TrainedModel {
        utility_table: table.export(),
        virtual_window: vw,
        thresholds,
        espice,
        bl,
        pspice,
        training_windows: training.windows(),
        observations: training.observations.len(),
    })
}
