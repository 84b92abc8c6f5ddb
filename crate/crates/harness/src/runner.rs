//! Experiment orchestration: calibration, truth runs, shedding replays, and
//! QoR reports assembled from one config.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use hspice_core::event::{read_stream, Event, StreamSchema};
use hspice_core::operator::{CepOperator, ClockMode, ComplexEvent, NeverDrop, OperatorConfig};
use hspice_core::pattern::{compile_patterns, load_patterns, PatternSpec, StateMachine};
use hspice_core::planner::{ControlConfig, OverloadController, ShedPlan, ThresholdArray};
use hspice_core::shedders::{build_shedder, AnyShedder, DropAccounting, ShedderAssets};
use hspice_core::stats::UtilityTable;
use hspice_core::sync::Shared;

use crate::config::{ClockKind, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::model::TrainedModel;
use crate::qor::{compute_qor, LatencySummary, QoRReport};
use crate::replay::{replay_real, replay_virtual, ReplaySettings, RunOutput};
use crate::truth::oracle_run;

/// Everything loaded from disk for one experiment.
pub struct ExperimentInputs {
    pub schema: StreamSchema,
    pub specs: Vec<PatternSpec>,
    pub machines: Arc<Vec<StateMachine>>,
    pub events: Vec<Arc<Event>>,
}

pub fn load_inputs(config: &ExperimentConfig) -> Result<ExperimentInputs> {
    let schema = StreamSchema::load(&config.schema)?;
    let specs = load_patterns(&config.patterns)?;
    for spec in &specs {
        for step in &spec.steps {
            let types = match step {
                hspice_core::pattern::Step::Positive { types, .. }
                | hspice_core::pattern::Step::Negated { types, .. } => types,
            };
            if let Some(&t) = types.iter().max() {
                if t >= schema.type_count {
                    return Err(HarnessError::Config(format!(
                        "pattern {} references type {t} >= schema type_count {}",
                        spec.id, schema.type_count
                    )));
                }
            }
        }
    }
    let machines = Arc::new(compile_patterns(&specs)?);
    let mut events = Vec::new();
    for item in read_stream(&config.stream)? {
        let event = item?;
        if event.event_type >= schema.type_count {
            return Err(HarnessError::Config(format!(
                "event seq {} has type {} >= schema type_count {}",
                event.seq, event.event_type, schema.type_count
            )));
        }
        events.push(Arc::new(event));
        if let Some(max) = config.max_events {
            if events.len() >= max {
                break;
            }
        }
    }
    Ok(ExperimentInputs {
        schema,
        specs,
        machines,
        events,
    })
}

fn operator_for(
    config: &ExperimentConfig,
    machines: Arc<Vec<StateMachine>>,
) -> Result<CepOperator> {
    let clock = match config.clock {
        ClockKind::Virtual => ClockMode::Virtual(config.cost_model),
        ClockKind::Real => ClockMode::Real,
    };
    Ok(CepOperator::new(
        machines,
        config.window,
        OperatorConfig {
            clock,
            collect_stats: false,
            ..OperatorConfig::default()
        },
    )?)
}

/// Measures unshed throughput on a stream prefix: events per busy second.
pub fn calibrate(
    config: &ExperimentConfig,
    machines: Arc<Vec<StateMachine>>,
    events: &[Arc<Event>],
) -> Result<f64> {
    let prefix = events.len().min(config.calibration_events.max(1));
    if prefix == 0 {
        return Err(HarnessError::Config(
            "cannot calibrate on an empty stream".into(),
        ));
    }
    let mut operator = operator_for(config, machines)?;
    let mut decider = NeverDrop;
    for event in &events[..prefix] {
        operator.process_event(event.as_ref().clone(), &mut decider)?;
    }
    let busy_s = operator.busy_ns() as f64 / 1e9;
    if busy_s <= 0.0 {
        return Err(HarnessError::Config(
            "calibration measured zero busy time".into(),
        ));
    }
    Ok(prefix as f64 / busy_s)
}

/// Shedder wiring: plan and table cells plus trained baseline models.
pub struct ShedderRig {
    pub plan: Arc<Shared<ShedPlan>>,
    pub shedder: AnyShedder,
    pub avg_o: f64,
    pub ws_v: f64,
    pub thresholds: ThresholdArray,
}

pub fn rig_shedder(config: &ExperimentConfig, model: Option<&TrainedModel>) -> Result<ShedderRig> {
    let ws = config.window.size as u32;
    let plan = Arc::new(Shared::new(ShedPlan::idle(ws)));
    let table: Arc<Shared<Option<Arc<UtilityTable>>>> = Arc::new(Shared::new(
        model.map(|m| m.table().map(Arc::new)).transpose()?,
    ));
    let assets = ShedderAssets {
        plan: plan.clone(),
        table,
        espice: model.map(|m| m.espice.clone()),
        bl: model.map(|m| m.bl.clone()),
        pspice: model.map(|m| m.pspice.clone()),
        seed: config.seed,
    };
    let shedder = build_shedder(&config.shedder, &assets)?;
    let (avg_o, ws_v, thresholds) = match model {
        Some(m) => (
            m.virtual_window.avg_o,
            m.virtual_window.ws_v,
            m.thresholds.clone(),
        ),
        // Without a model, treat every event as one pairing per window.
        None => (1.0, f64::from(ws), ThresholdArray::default()),
    };
    Ok(ShedderRig {
        plan,
        shedder,
        avg_o,
        ws_v,
        thresholds,
    })
}

pub struct RunArtifacts {
    pub report: QoRReport,
    pub output: RunOutput,
    pub truth: Vec<ComplexEvent>,
    pub mu: f64,
    pub rate: f64,
}

pub fn drop_ratio(accounting: DropAccounting, metrics: &hspice_core::OperatorMetrics) -> f64 {
    match accounting {
        DropAccounting::Pairings => {
            let total = metrics.pairings as f64 + metrics.foregone_pairings;
            if total > 0.0 {
                (metrics.pairings_shed as f64 + metrics.foregone_pairings) / total
            } else {
                0.0
            }
        }
        DropAccounting::EventWindows => {
            if metrics.event_windows > 0 {
                metrics.event_windows_shed as f64 / metrics.event_windows as f64
            } else {
                0.0
            }
        }
    }
}

/// Runs one experiment end to end: calibrate (unless pinned), compute truth,
/// replay under the configured shedder, and score QoR.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let inputs = load_inputs(config)?;
    run_experiment_with(config, &inputs)
}

/// Same as [`run_experiment`] with pre-loaded inputs (sweeps reuse them).
pub fn run_experiment_with(
    config: &ExperimentConfig,
    inputs: &ExperimentInputs,
) -> Result<RunArtifacts> {
    let model = config
        .model
        .as_deref()
        .map(TrainedModel::load)
        .transpose()?;
    run_experiment_with_model(config, inputs, model.as_ref())
}

/// Core run path with an explicit (possibly in-memory) model.
pub fn run_experiment_with_model(
    config: &ExperimentConfig,
    inputs: &ExperimentInputs,
    model: Option<&TrainedModel>,
) -> Result<RunArtifacts> {
    let mu = match config.mu {
        Some(mu) if mu > 0.0 => mu,
        _ => calibrate(config, inputs.machines.clone(), &inputs.events)?,
    };
    let rate = mu * config.rate_pct / 100.0;

    let truth = oracle_run(&inputs.events, inputs.machines.clone(), config.window)?;

    let mut rig = rig_shedder(config, model)?;
    let mut controller = OverloadController::new(
        ControlConfig {
            latency_bound_ns: config.latency_bound_ns(),
            safety_fraction: config.safety_fraction,
            window_size: config.window.size as u32,
        },
        config.rate_half_life_ns(),
        mu,
        rig.avg_o,
        rig.ws_v,
        rig.thresholds.clone(),
        rig.plan.clone(),
    );
    let mut operator = operator_for(config, inputs.machines.clone())?;
    let settings = ReplaySettings {
        rate,
        mu,
        tick_ns: config.tick_ns(),
        queue_capacity: config.queue_capacity_or_default(),
    };
    let output = match config.clock {
        ClockKind::Virtual => replay_virtual(
            &inputs.events,
            &mut operator,
            &mut rig.shedder,
            &mut controller,
            &settings,
        )?,
        ClockKind::Real => replay_real(
            &inputs.events,
            &mut operator,
            &mut rig.shedder,
            &mut controller,
            &settings,
        )?,
    };

    let weights: BTreeMap<_, _> = inputs.specs.iter().map(|p| (p.id, p.weight)).collect();
    let ratio = drop_ratio(rig.shedder.accounting(), &output.metrics);
    let latency =
        LatencySummary::from_samples(output.latencies.iter().map(|l| l.latency_ns).collect());
    let echo = json!({
        "stream": config.stream,
        "window": config.window,
        "shedder": config.shedder.shedder,
        "rate_pct": config.rate_pct,
        "rate_events_per_sec": rate,
        "mu": mu,
        "seed": config.seed,
        "latency_bound_ms": config.latency_bound_ms,
        "safety_fraction": config.safety_fraction,
        "bin_size": config.bin_size,
        "events": inputs.events.len(),
    });
    let report = compute_qor(&output.detected, &truth, &weights, ratio, latency, echo);
    Ok(RunArtifacts {
        report,
        output,
        truth,
        mu,
        rate,
    })
}
