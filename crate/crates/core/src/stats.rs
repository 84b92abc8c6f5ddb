//! Observation gathering and the utility table.
//!
//! The operator reports two observation kinds while it runs unshed:
//! contribution observations (one per processed (event, PM) pairing, noting
//! whether the event moved the PM) and completion observations (whether a PM
//! ultimately completed). From a buffer of those, [`build_utility_table`]
//! computes, per (event type, position bin, PM state), the probability that
//! an event processed in that cell contributes to a PM that later completes,
//! scaled by the pattern weight. Lookups are a single indexed read.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::event::TypeId;
use crate::pattern::{PatternId, StateId, StateSpace};
use crate::sync::Shared;

/// One processed (event, PM) pairing. `state_after != state_before` iff the
/// event contributed (advanced, completed, or abandoned the PM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionObservation {
    pub pm_id: u32,
    pub window_id: u64,
    pub state_before: StateId,
    pub state_after: StateId,
    pub event_type: TypeId,
    pub position: u32,
}

impl ContributionObservation {
    pub fn contributed(&self) -> bool {
        self.state_after != self.state_before
    }
}

/// Whether a PM completed. Abandonment by a negated event counts as
/// completion; PMs still open at window close are recorded as not completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionObservation {
    pub pm_id: u32,
    pub window_id: u64,
    pub completed: bool,
}

/// Append-only training buffer.
#[derive(Debug, Default, Clone)]
pub struct ObservationBuffer {
    pub contributions: Vec<ContributionObservation>,
    pub completions: Vec<CompletionObservation>,
}

impl ObservationBuffer {
    pub fn record_contribution(&mut self, obs: ContributionObservation) {
        self.contributions.push(obs);
    }

    pub fn record_completion(&mut self, obs: CompletionObservation) {
        self.completions.push(obs);
    }

    pub fn append(&mut self, other: &mut ObservationBuffer) {
        self.contributions.append(&mut other.contributions);
        self.completions.append(&mut other.completions);
    }

    pub fn len(&self) -> usize {
        self.contributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contributions.is_empty()
    }

    pub fn clear(&mut self) {
        self.contributions.clear();
        self.completions.clear();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TableConfig {
    /// Number of event types (M).
    pub type_count: u16,
    /// Positions per window the table covers (the window size for count
    /// windows; a configured capacity for time windows).
    pub window_size: u32,
    /// Bin size: consecutive positions grouped per cell.
    pub bin_size: u32,
    /// Minimum contribution observations required to build.
    pub min_observations: usize,
}

impl TableConfig {
    pub fn new(type_count: u16, window_size: u32) -> TableConfig {
        TableConfig {
            type_count,
            window_size,
            bin_size: 1,
            min_observations: DEFAULT_MIN_OBSERVATIONS,
        }
    }

    pub fn with_bin_size(mut self, bin_size: u32) -> TableConfig {
        self.bin_size = bin_size.max(1);
        self
    }

    pub fn with_min_observations(mut self, eta: usize) -> TableConfig {
        self.min_observations = eta;
        self
    }

    pub fn bins(&self) -> u32 {
        self.window_size.div_ceil(self.bin_size)
    }
}

/// Default training threshold (contribution observations).
pub const DEFAULT_MIN_OBSERVATIONS: usize = 10_000;

/// The 3-D utility table: M types x N position bins x K non-final states.
/// Cells hold the weighted utility as 32-bit floats; storage is exactly
/// M*N*K entries.
#[derive(Debug, Clone)]
pub struct UtilityTable {
    type_count: u16,
    window_size: u32,
    bin_size: u32,
    bins: u32,
    /// Row metadata: (global state id, weight, pattern id) per dense row.
    rows: Vec<(StateId, f64, PatternId)>,
    /// global state id -> dense row (u32::MAX for unknown/final states).
    row_of: Vec<u32>,
    cells: Vec<f32>,
    /// Contribution observations the table was built from.
    samples: u64,
}

impl UtilityTable {
    /// `build_utility_table` over a recorded buffer. Fails with
    /// [`CoreError::NotReady`] until the buffer holds at least the configured
    /// number of contribution observations.
    pub fn build(
        buffer: &ObservationBuffer,
        space: &StateSpace,
        config: &TableConfig,
    ) -> Result<UtilityTable> {
        if buffer.contributions.len() < config.min_observations {
            return Err(CoreError::NotReady {
                have: buffer.contributions.len(),
                need: config.min_observations,
            });
        }
        Self::build_unchecked(buffer, space, config)
    }

    /// Builds regardless of buffer size (used by fixtures and tests).
    pub fn build_unchecked(
        buffer: &ObservationBuffer,
        space: &StateSpace,
        config: &TableConfig,
    ) -> Result<UtilityTable> {
        let m = config.type_count as usize;
        let n = config.bins() as usize;
        let k = space.k();
        let mut processed = vec![0u64; m * n * k];
        let mut contributed = vec![0u64; m * n * k];

        let completed: HashSet<(u64, u32)> = buffer
            .completions
            .iter()
            .filter(|c| c.completed)
            .map(|c| (c.window_id, c.pm_id))
            .collect();

        let bin_size = config.bin_size.max(1);
        for obs in &buffer.contributions {
            let Some(row) = space.row(obs.state_before) else {
                return Err(CoreError::ConfigMismatch(format!(
                    "observation references unknown state {}",
                    obs.state_before
                )));
            };
            if obs.event_type as usize >= m {
                return Err(CoreError::ConfigMismatch(format!(
                    "observation references event type {} >= {}",
                    obs.event_type, m
                )));
            }
            let bin = ((obs.position / bin_size) as usize).min(n - 1);
            let idx = (obs.event_type as usize * n + bin) * k + row as usize;
            processed[idx] += 1;
            if obs.contributed() && completed.contains(&(obs.window_id, obs.pm_id)) {
                contributed[idx] += 1;
            }
        }

        let mut cells = vec![0f32; m * n * k];
        for (row, _, weight, _) in space.rows() {
            for t in 0..m {
                for b in 0..n {
                    let idx = (t * n + b) * k + row as usize;
                    if processed[idx] > 0 {
                        let ratio = contributed[idx] as f64 / processed[idx] as f64;
                        cells[idx] = (weight * ratio) as f32;
                    }
                }
            }
        }

        Ok(UtilityTable {
            type_count: config.type_count,
            window_size: config.window_size,
            bin_size,
            bins: config.bins(),
            rows: space.rows().map(|(_, sid, w, pid)| (sid, w, pid)).collect(),
            row_of: (0..space
                .rows()
                .map(|(_, sid, _, _)| sid + 1)
                .max()
                .unwrap_or(0))
                .map(|sid| space.row(sid).unwrap_or(u32::MAX))
                .collect(),
            cells,
            samples: buffer.contributions.len() as u64,
        })
    }

    /// Weighted utility for (event type, window position, PM state).
    /// Constant time, no allocation. Positions beyond the table's range fall
    /// into the last bin; unknown states read 0 (most droppable).
    #[inline]
    pub fn lookup(&self, event_type: TypeId, position: u32, state: StateId) -> f32 {
        let n = self.bins as usize;
        let k = self.rows.len();
        debug_assert!((event_type as usize) < self.type_count as usize);
        let Some(&row) = self.row_of.get(state as usize) else {
            return 0.0;
        };
        if row == u32::MAX {
            debug_assert!(false, "lookup on final/unknown state {state}");
            return 0.0;
        }
        let bin = ((position / self.bin_size) as usize).min(n - 1);
        self.cells[(event_type as usize * n + bin) * k + row as usize]
    }

    pub fn type_count(&self) -> u16 {
        self.type_count
    }

    pub fn window_size(&self) -> u32 {
        self.window_size
    }

    pub fn bin_size(&self) -> u32 {
        self.bin_size
    }

    pub fn bins(&self) -> u32 {
        self.bins
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Iterates non-zero cells as (type, bin, global state id, value).
    pub fn nonzero_cells(&self) -> impl Iterator<Item = (TypeId, u32, StateId, f32)> + '_ {
        let n = self.bins as usize;
        let k = self.rows.len();
        self.cells.iter().enumerate().filter_map(move |(idx, &v)| {
            if v == 0.0 {
                return None;
            }
            let t = idx / (n * k);
            let b = (idx / k) % n;
            let row = idx % k;
            Some((t as TypeId, b as u32, self.rows[row].0, v))
        })
    }

    pub fn export(&self) -> ExportedTable {
        ExportedTable {
            type_count: self.type_count,
            window_size: self.window_size,
            bin_size: self.bin_size,
            k: self.rows.len() as u32,
            states: self.rows.iter().map(|r| r.0).collect(),
            weights: self.rows.iter().map(|r| r.1).collect(),
            patterns: self.rows.iter().map(|r| r.2).collect(),
            samples: self.samples,
            cells: self.nonzero_cells().collect(),
        }
    }

    pub fn from_export(exp: &ExportedTable) -> Result<UtilityTable> {
        if exp.states.len() != exp.k as usize
            || exp.weights.len() != exp.k as usize
            || exp.patterns.len() != exp.k as usize
        {
            return Err(CoreError::ConfigMismatch(
                "table export row metadata lengths disagree with K".into(),
            ));
        }
        let rows: Vec<(StateId, f64, PatternId)> = exp
            .states
            .iter()
            .zip(&exp.weights)
            .zip(&exp.patterns)
            .map(|((s, w), p)| (*s, *w, *p))
            .collect();
        let max_id = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let mut row_of = vec![u32::MAX; max_id as usize];
        for (i, (sid, _, _)) in rows.iter().enumerate() {
            row_of[*sid as usize] = i as u32;
        }
        let bins = exp.window_size.div_ceil(exp.bin_size.max(1));
        let n = bins as usize;
        let k = rows.len();
        let mut cells = vec![0f32; exp.type_count as usize * n * k];
        for (t, b, s, v) in &exp.cells {
            if *t as usize >= exp.type_count as usize || *b as usize >= n {
                return Err(CoreError::ConfigMismatch(format!(
                    "exported cell ({t},{b},{s}) out of range"
                )));
            }
            let Some(&row) = row_of.get(*s as usize).filter(|&&r| r != u32::MAX) else {
                return Err(CoreError::ConfigMismatch(format!(
                    "exported cell references unknown state {s}"
                )));
            };
            cells[(*t as usize * n + *b as usize) * k + row as usize] = *v;
        }
        Ok(UtilityTable {
            type_count: exp.type_count,
            window_size: exp.window_size,
            bin_size: exp.bin_size.max(1),
            bins,
            rows,
            row_of,
            cells,
            samples: exp.samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.export())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<UtilityTable> {
        let data = std::fs::read_to_string(path)?;
        let exp: ExportedTable = serde_json::from_str(&data)?;
        Self::from_export(&exp)
    }
}

/// JSON-serializable table image:
/// `{"M":..,"ws":..,"bs":..,"K":..,"cells":[[type,bin,state,value],..]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportedTable {
    #[serde(rename = "M")]
    pub type_count: u16,
    #[serde(rename = "ws")]
    pub window_size: u32,
    #[serde(rename = "bs")]
    pub bin_size: u32,
    #[serde(rename = "K")]
    pub k: u32,
    pub states: Vec<StateId>,
    pub weights: Vec<f64>,
    pub patterns: Vec<PatternId>,
    #[serde(default)]
    pub samples: u64,
    pub cells: Vec<(TypeId, u32, StateId, f32)>,
}

/// Rebuilds from a fresh buffer and atomically publishes the result. Keeps
/// the previous table when the buffer is still below the training threshold.
pub fn retrain(
    published: &Shared<Option<Arc<UtilityTable>>>,
    buffer: &ObservationBuffer,
    space: &StateSpace,
    config: &TableConfig,
) -> Result<Arc<UtilityTable>> {
    let table = Arc::new(UtilityTable::build(buffer, space, config)?);
    published.store(Some(table.clone()));
    Ok(table)
}
