//! Experiment configuration: one JSON document naming the stream, schema,
//! patterns, window, latency bound, shedder, clock mode, and seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hspice_core::event::WindowSpec;
use hspice_core::operator::CostModel;
use hspice_core::shedders::ShedderConfig;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    Virtual,
    Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub stream: PathBuf,
    pub schema: PathBuf,
    pub patterns: PathBuf,
    pub window: WindowSpec,

    /// Maximum allowed per-event latency (queuing + processing).
    #[serde(default = "default_latency_bound_ms")]
    pub latency_bound_ms: f64,
    /// Shedding engages at this fraction of the latency bound.
    #[serde(default = "default_safety_fraction")]
    pub safety_fraction: f64,

    #[serde(default)]
    pub shedder: ShedderConfig,
    #[serde(default = "default_clock")]
    pub clock: ClockKind,
    #[serde(default)]
    pub seed: u64,

    /// Replay rate as a percentage of the calibrated throughput.
    #[serde(default = "default_rate_pct")]
    pub rate_pct: f64,
    /// Pre-measured throughput (events/s); calibrated on a prefix when
    /// absent.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_calibration_events")]
    pub calibration_events: usize,

    /// Bounded input queue capacity; also the hard cap whose overflow aborts
    /// the run. Defaults to 4x the window size.
    #[serde(default)]
    pub queue_capacity: Option<usize>,
    #[serde(default)]
    pub cost_model: CostModel,

    #[serde(default = "default_bin_size")]
    pub bin_size: u32,
    /// Minimum contribution observations before a utility table builds.
    #[serde(default = "default_min_observations")]
    pub min_observations: usize,

    /// Controller cadence and rate-estimator half-life.
    #[serde(default = "default_tick_ms")]
    pub tick_ms: f64,
    #[serde(default = "default_rate_half_life_ms")]
    pub rate_half_life_ms: f64,

    /// Trained model file (required by model-based shedders in `run`).
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Process only a prefix of the stream.
    #[serde(default)]
    pub max_events: Option<usize>,
    /// Drop intervals excluded from latency assertions at the start.
    #[serde(default = "default_warmup_intervals")]
    pub warmup_drop_intervals: u32,
    /// Positions per window the utility table covers; defaults to the window
    /// size (count windows).
    #[serde(default)]
    pub table_positions: Option<u32>,
}

fn default_latency_bound_ms() -> f64 {
    1_000.0
}

fn default_safety_fraction() -> f64 {
    0.8
}

fn default_clock() -> ClockKind {
    ClockKind::Virtual
}

fn default_rate_pct() -> f64 {
    100.0
}

fn default_calibration_events() -> usize {
    5_000
}

fn default_bin_size() -> u32 {
    1
}

fn default_min_observations() -> usize {
    hspice_core::stats::DEFAULT_MIN_OBSERVATIONS
}

fn default_tick_ms() -> f64 {
    100.0
}

fn default_rate_half_life_ms() -> f64 {
    1_000.0
}

fn default_warmup_intervals() -> u32 {
    2
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let data = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: ExperimentConfig = serde_json::from_str(&data)
            .map_err(|e| HarnessError::Config(format!("bad config: {e}")))?;
        // Relative paths resolve against the config file's directory.
        if let Some(base) = path.parent() {
            for p in [&mut config.stream, &mut config.schema, &mut config.patterns] {
                if p.is_relative() {
                    *p = base.join(&p);
                }
            }
            if let Some(model) = &mut config.model {
                if model.is_relative() {
                    *model = base.join(&model);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate().map_err(HarnessError::Core)?;
        if self.latency_bound_ms <= 0.0 || self.latency_bound_ms.is_nan() {
            return Err(HarnessError::Config("latency_bound_ms must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.safety_fraction) {
            return Err(HarnessError::Config(
                "safety_fraction must be in [0, 1]".into(),
            ));
        }
        if self.rate_pct <= 0.0 || self.rate_pct.is_nan() {
            return Err(HarnessError::Config("rate_pct must be > 0".into()));
        }
        if self.bin_size < 1 {
            return Err(HarnessError::Config("bin_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn latency_bound_ns(&self) -> u64 {
        (self.latency_bound_ms * 1e6) as u64
    }

    pub fn tick_ns(&self) -> u64 {
        (self.tick_ms * 1e6).max(1.0) as u64
    }

    pub fn rate_half_life_ns(&self) -> f64 {
        self.rate_half_life_ms * 1e6
    }

    /// Positions per window the statistics tables cover.
    pub fn positions(&self) -> u32 {
        self.table_positions.unwrap_or(self.window.size as u32)
    }

    pub fn queue_capacity_or_default(&self) -> usize {
        self.queue_capacity
            .unwrap_or((self.window.size as usize) * 4)
    }
}
