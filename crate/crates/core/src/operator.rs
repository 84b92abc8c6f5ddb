//! The single-operator runtime: owns open windows and their partial matches,
//! consults the active shedder per pairing, emits complex events, and (when
//! training) emits observations and per-window tallies.
//!
//! The operator is a single logical consumer: one thread owns all windows and
//! PMs. Shed plans and utility tables are read through publication cells, so
//! the operator may observe a plan one event late but never a torn one.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::event::{Event, TypeId, WindowAssigner, WindowKind, WindowSpec};
use crate::pattern::{PatternId, SelectionPolicy, StateId, StateMachine, TransitionOutcome};
use crate::stats::{CompletionObservation, ContributionObservation, ObservationBuffer};

/// A live state-machine instance inside one window.
#[derive(Debug, Clone)]
pub struct PartialMatch {
    /// Unique per window. New contributions are recorded under this id.
    pub pm_id: u32,
    pub machine_index: u32,
    pub local_state: u32,
    pub bindings: Vec<Arc<Event>>,
    /// Ids under which this PM's earlier bindings were recorded; completion
    /// propagates along this chain.
    pub lineage: Vec<u32>,
    alive: bool,
}

/// A completed pattern match. Identity for QoR accounting is
/// (pattern_id, window_id, seqs).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComplexEvent {
    pub pattern_id: PatternId,
    pub window_id: u64,
    pub seqs: Vec<u64>,
    pub ts_detect: i64,
}

/// Shedding interface the operator consults.
///
/// `drop_event` is asked once per (event, window) and drops the event from
/// every PM of that window (window-granularity shedders). `drop_pairing` is
/// asked once per (event, PM). `drop_pm` is asked when a PM advances into a
/// new state (PM-granularity shedders); initial-state PMs are never offered,
/// so fresh matches can always start.
pub trait ShedDecider {
    fn drop_event(&mut self, event: &Event, window_id: u64, position: u32) -> bool {
        let _ = (event, window_id, position);
        false
    }

    fn drop_pairing(
        &mut self,
        event: &Event,
        window_id: u64,
        position: u32,
        state: StateId,
    ) -> bool {
        let _ = (event, window_id, position, state);
        false
    }

    fn drop_pm(&mut self, pattern: PatternId, entered_state: StateId, position: u32) -> bool {
        let _ = (pattern, entered_state, position);
        false
    }
}

/// Baseline decider: processes everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeverDrop;

impl ShedDecider for NeverDrop {}

/// Drops every (event, PM) pairing; useful in tests.
#[derive(Debug, Default, Clone, Copy)]
pub struct AlwaysDrop;

impl ShedDecider for AlwaysDrop {
    fn drop_pairing(&mut self, _: &Event, _: u64, _: u32, _: StateId) -> bool {
        true
    }
}

/// Scripted per-action processing costs for the virtual clock. All values in
/// nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub base_event_ns: u64,
    pub window_assign_ns: u64,
    pub pairing_ns: u64,
    pub guard_ns: u64,
    pub decision_ns: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            base_event_ns: 200,
            window_assign_ns: 100,
            pairing_ns: 1_000,
            guard_ns: 200,
            decision_ns: 25,
        }
    }
}

/// How the operator accounts processing time.
#[derive(Debug, Clone, Copy)]
pub enum ClockMode {
    /// Deterministic: cost computed from the model.
    Virtual(CostModel),
    /// Wall clock; for smoke tests only.
    Real,
}

#[derive(Debug, Clone)]
pub struct OperatorConfig {
    pub clock: ClockMode,
    /// Per-window cap on partial matches; clone creation beyond it is
    /// refused and counted.
    pub pm_cap: usize,
    /// Emit observations and training tallies. Windows touched by shedding
    /// are discarded at close so the model trains on unshed windows only.
    pub collect_stats: bool,
    /// Events processed before `throughput_probe` reports.
    pub probe_min_events: u64,
    /// Half-life (in events) of the probe's cost average.
    pub probe_half_life: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            clock: ClockMode::Virtual(CostModel::default()),
            pm_cap: 1024,
            collect_stats: false,
            probe_min_events: 256,
            probe_half_life: 512.0,
        }
    }
}

/// Counters exposed after a run. Drop-ratio semantics depend on shedder
/// granularity: pairings for PM-state shedders, event-window assignments for
/// window-level shedders.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct OperatorMetrics {
    pub events: u64,
    pub event_windows: u64,
    pub event_windows_shed: u64,
    pub pairings: u64,
    pub pairings_shed: u64,
    pub pm_spawned: u64,
    pub pm_dropped: u64,
    pub pm_overflow: u64,
    pub complex_events: u64,
    pub windows_opened: u64,
    pub windows_closed: u64,
    /// Estimated pairings saved by dropped PMs (window remainder at drop).
    pub foregone_pairings: f64,
}

/// Per-window pairing counts recorded on unshed windows; input to virtual
/// window prediction.
#[derive(Debug, Default, Clone)]
pub struct WindowTally {
    pub pairings: BTreeMap<(TypeId, u32, StateId), u32>,
}

/// Per-window event counts by (type, position).
#[derive(Debug, Default, Clone)]
pub struct WindowEventTally {
    pub events: BTreeMap<(TypeId, u32), u32>,
}

/// Everything the model-building side consumes, gathered on unshed windows.
#[derive(Debug, Default, Clone)]
pub struct TrainingCollector {
    pub observations: ObservationBuffer,
    pub window_tallies: Vec<WindowTally>,
    pub event_tallies: Vec<WindowEventTally>,
    /// (type, position) -> (instances that contributed to a completed PM,
    /// instances seen). Window-level utility input.
    pub event_outcomes: BTreeMap<(TypeId, u32), (u64, u64)>,
    /// (entered state, position) -> (entries whose PM completed, entries).
    pub pm_entries: BTreeMap<(StateId, u32), (u64, u64)>,
}

impl TrainingCollector {
    pub fn windows(&self) -> usize {
        self.window_tallies.len()
    }
}

#[derive(Debug)]
struct WindowData {
    id: u64,
    /// Expected positions per window (count-window size); drives foregone
    /// work estimates for dropped PMs.
    expected_len: u32,
    pms: Vec<PartialMatch>,
    live: usize,
    next_pm_id: u32,
    completed_ids: HashSet<u32>,
    obs: Vec<ContributionObservation>,
    completions: Vec<CompletionObservation>,
    tainted: bool,
    tally: WindowTally,
    event_tally: WindowEventTally,
    /// (completion-tracking id, entered state, position), logged on PM
    /// progress for PM-level shedder training.
    pm_entry_log: Vec<(u32, StateId, u32)>,
}

/// Outcome of processing one input event.
#[derive(Debug, Default)]
pub struct ProcessOutcome {
    pub complex: Vec<ComplexEvent>,
    pub cost_ns: u64,
}

struct CostEwma {
    mean_ns: f64,
    alpha: f64,
    count: u64,
}

impl CostEwma {
    fn new(half_life_events: f64) -> Self {
        CostEwma {
            mean_ns: 0.0,
            alpha: 1.0 - 0.5f64.powf(1.0 / half_life_events.max(1.0)),
            count: 0,
        }
    }

    fn update(&mut self, cost_ns: u64) {
        let c = cost_ns as f64;
        if self.count == 0 {
            self.mean_ns = c;
        } else {
            self.mean_ns += self.alpha * (c - self.mean_ns);
        }
        self.count += 1;
    }
}

/// The CEP operator.
pub struct CepOperator {
    machines: Arc<Vec<StateMachine>>,
    config: OperatorConfig,
    window_positions: u32,
    assigner: WindowAssigner,
    windows: BTreeMap<u64, WindowData>,
    metrics: OperatorMetrics,
    training: TrainingCollector,
    probe: CostEwma,
    busy_ns: u64,
}

impl CepOperator {
    pub fn new(
        machines: Arc<Vec<StateMachine>>,
        window_spec: WindowSpec,
        config: OperatorConfig,
    ) -> Result<CepOperator> {
        let probe = CostEwma::new(config.probe_half_life);
        let window_positions = match window_spec.kind {
            WindowKind::CountBased => window_spec.size as u32,
            WindowKind::TimeBased => 0,
        };
        Ok(CepOperator {
            machines,
            config,
            window_positions,
            assigner: WindowAssigner::new(window_spec)?,
            windows: BTreeMap::new(),
            metrics: OperatorMetrics::default(),
            training: TrainingCollector::default(),
            probe,
            busy_ns: 0,
        })
    }

    pub fn machines(&self) -> &[StateMachine] {
        &self.machines
    }

    pub fn metrics(&self) -> &OperatorMetrics {
        &self.metrics
    }

    pub fn busy_ns(&self) -> u64 {
        self.busy_ns
    }

    pub fn open_window_count(&self) -> usize {
        self.windows.len()
    }

    /// Takes the accumulated training data, leaving an empty collector.
    pub fn take_training(&mut self) -> TrainingCollector {
        std::mem::take(&mut self.training)
    }

    /// Busy-rate throughput estimate in events/second: an exponentially
    /// weighted mean of per-event processing cost, idle time excluded.
    /// Absent until the configured warm-up count.
    pub fn throughput_probe(&self) -> Option<f64> {
        if self.probe.count < self.config.probe_min_events || self.probe.mean_ns <= 0.0 {
            return None;
        }
        Some(1.0e9 / self.probe.mean_ns)
    }

    /// Processes one input event through every window that contains it, in
    /// window-id order, consulting `decider` before each pairing.
    pub fn process_event(
        &mut self,
        event: Event,
        decider: &mut dyn ShedDecider,
    ) -> Result<ProcessOutcome> {
        let started = Instant::now();
        let (virtual_clock, model) = match self.config.clock {
            ClockMode::Virtual(m) => (true, m),
            ClockMode::Real => (false, CostModel::default()),
        };
        let mut cost: u64 = if virtual_clock {
            model.base_event_ns
        } else {
            0
        };

        let mut out = ProcessOutcome::default();
        let assignment = self.assigner.assign(&event)?;
        for closed in &assignment.close_before {
            self.close_window(*closed)?;
        }

        let event = Arc::new(event);
        self.metrics.events += 1;
        let collect_stats = self.config.collect_stats;

        for a in &assignment.assignments {
            if virtual_clock {
                cost += model.window_assign_ns + model.decision_ns;
            }
            self.metrics.event_windows += 1;
            if a.opens {
                self.open_window(a.window_id);
            }

            // Window-level shed decision: one consult per (event, window).
            let window_dropped = decider.drop_event(&event, a.window_id, a.position);
            let window = self
                .windows
                .get_mut(&a.window_id)
                .expect("window opened above");
            if collect_stats {
                *window
                    .event_tally
                    .events
                    .entry((event.event_type, a.position))
                    .or_insert(0) += 1;
            }
            if window_dropped {
                self.metrics.event_windows_shed += 1;
                window.tainted = true;
                continue;
            }

            // Pairings against the PMs that existed when the event arrived;
            // PMs spawned while handling it never see it.
            let snapshot = window.pms.len();
            for idx in 0..snapshot {
                if !window.pms[idx].alive {
                    continue;
                }
                let machine = &self.machines[window.pms[idx].machine_index as usize];
                let local = window.pms[idx].local_state;
                let state_global = machine.global_id(local);

                self.metrics.pairings += 1;
                if virtual_clock {
                    cost += model.decision_ns;
                }
                if decider.drop_pairing(&event, a.window_id, a.position, state_global) {
                    self.metrics.pairings_shed += 1;
                    window.tainted = true;
                    continue;
                }
                if collect_stats {
                    *window
                        .tally
                        .pairings
                        .entry((event.event_type, a.position, state_global))
                        .or_insert(0) += 1;
                }

                let (outcome, guards) = machine.step(local, &window.pms[idx].bindings, &event);
                if virtual_clock {
                    cost += model.pairing_ns + u64::from(guards) * model.guard_ns;
                }

                match outcome {
                    TransitionOutcome::NoChange => {
                        if collect_stats {
                            window.obs.push(ContributionObservation {
                                pm_id: window.pms[idx].pm_id,
                                window_id: a.window_id,
                                state_before: state_global,
                                state_after: state_global,
                                event_type: event.event_type,
                                position: a.position,
                            });
                        }
                    }
                    TransitionOutcome::Advance { next_local } => {
                        let next_global = machine.global_id(next_local);
                        let pattern = machine.pattern_id;
                        match machine.policy {
                            SelectionPolicy::SkipTillAnyMatch => Self::advance_cloning(
                                window,
                                idx,
                                next_local,
                                next_global,
                                &event,
                                a.position,
                                collect_stats,
                                self.config.pm_cap,
                                &mut self.metrics,
                                decider,
                                pattern,
                            ),
                            SelectionPolicy::SkipTillNextMatch => Self::advance_in_place(
                                window,
                                idx,
                                next_local,
                                next_global,
                                &event,
                                a.position,
                                collect_stats,
                                &mut self.metrics,
                                decider,
                                pattern,
                            ),
                        }
                    }
                    TransitionOutcome::Complete => {
                        let final_global = machine.global_id(machine.final_local());
                        let (complex, respawn) = Self::complete_pm(
                            window,
                            idx,
                            machine,
                            state_global,
                            final_global,
                            &event,
                            a.position,
                            collect_stats,
                        );
                        if let Some(machine_index) = respawn {
                            Self::spawn_initial(window, machine_index, &mut self.metrics);
                        }
                        self.metrics.complex_events += 1;
                        out.complex.push(complex);
                    }
                    TransitionOutcome::Abandon => {
                        let final_global = machine.global_id(machine.final_local());
                        Self::abandon_pm(
                            window,
                            idx,
                            state_global,
                            final_global,
                            &event,
                            a.position,
                            collect_stats,
                        );
                    }
                }
            }
        }

        for closed in &assignment.close_after {
            self.close_window(*closed)?;
        }

        let cost_ns = if virtual_clock {
            cost
        } else {
            started.elapsed().as_nanos() as u64
        };
        self.busy_ns += cost_ns;
        self.probe.update(cost_ns);
        out.cost_ns = cost_ns;
        Ok(out)
    }

    /// Closes every window still open (end of stream).
    pub fn finish(&mut self) -> Result<()> {
        self.assigner.drain_open();
        let rest: Vec<u64> = self.windows.keys().copied().collect();
        for id in rest {
            self.close_window(id)?;
        }
        Ok(())
    }

    fn open_window(&mut self, id: u64) {
        let mut data = WindowData {
            id,
            expected_len: self.window_positions,
            pms: Vec::new(),
            live: 0,
            next_pm_id: 0,
            completed_ids: HashSet::new(),
            obs: Vec::new(),
            completions: Vec::new(),
            tainted: false,
            tally: WindowTally::default(),
            event_tally: WindowEventTally::default(),
            pm_entry_log: Vec::new(),
        };
        for mi in 0..self.machines.len() {
            let pm_id = data.next_pm_id;
            data.next_pm_id += 1;
            data.pms.push(PartialMatch {
                pm_id,
                machine_index: mi as u32,
                local_state: 0,
                bindings: Vec::new(),
                lineage: Vec::new(),
                alive: true,
            });
            data.live += 1;
            self.metrics.pm_spawned += 1;
        }
        self.metrics.windows_opened += 1;
        self.windows.insert(id, data);
    }

    /// Emits one completed=true observation per not-yet-marked id of a
    /// completed (or abandoned) chain.
    fn mark_completed(window: &mut WindowData, ids: impl IntoIterator<Item = u32>, stats: bool) {
        for id in ids {
            if window.completed_ids.insert(id) && stats {
                window.completions.push(CompletionObservation {
                    pm_id: id,
                    window_id: window.id,
                    completed: true,
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn advance_cloning(
        window: &mut WindowData,
        idx: usize,
        next_local: u32,
        next_global: StateId,
        event: &Arc<Event>,
        position: u32,
        stats: bool,
        pm_cap: usize,
        metrics: &mut OperatorMetrics,
        decider: &mut dyn ShedDecider,
        pattern: PatternId,
    ) {
        let at_initial = window.pms[idx].local_state == 0;
        if window.live >= pm_cap {
            metrics.pm_overflow += 1;
            if at_initial {
                // Refusing the clone would leave no initial PM; drop the
                // advance instead so new matches can still start.
                return;
            }
            // Advance in place: the stay-behind alternative is sacrificed.
            let obs_id = window.pms[idx].pm_id;
            window.pms[idx].bindings.push(event.clone());
            window.pms[idx].local_state = next_local;
            Self::log_progress(window, obs_id, next_global, event, position, stats);
            Self::consult_pm_drop(
                window,
                idx,
                next_global,
                position,
                metrics,
                decider,
                pattern,
            );
            return;
        }
        let new_id = window.next_pm_id;
        window.next_pm_id += 1;
        let src = &window.pms[idx];
        let mut lineage = src.lineage.clone();
        lineage.push(src.pm_id);
        let mut bindings = src.bindings.clone();
        bindings.push(event.clone());
        let machine_index = src.machine_index;
        window.pms.push(PartialMatch {
            pm_id: new_id,
            machine_index,
            local_state: next_local,
            bindings,
            lineage,
            alive: true,
        });
        window.live += 1;
        metrics.pm_spawned += 1;
        Self::log_progress(window, new_id, next_global, event, position, stats);
        let new_idx = window.pms.len() - 1;
        Self::consult_pm_drop(
            window,
            new_idx,
            next_global,
            position,
            metrics,
            decider,
            pattern,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn advance_in_place(
        window: &mut WindowData,
        idx: usize,
        next_local: u32,
        next_global: StateId,
        event: &Arc<Event>,
        position: u32,
        stats: bool,
        metrics: &mut OperatorMetrics,
        decider: &mut dyn ShedDecider,
        pattern: PatternId,
    ) {
        let was_initial = window.pms[idx].local_state == 0;
        let obs_id = window.pms[idx].pm_id;
        let machine_index = window.pms[idx].machine_index;
        window.pms[idx].bindings.push(event.clone());
        window.pms[idx].local_state = next_local;
        Self::log_progress(window, obs_id, next_global, event, position, stats);
        if was_initial {
            Self::spawn_initial(window, machine_index, metrics);
        }
        Self::consult_pm_drop(
            window,
            idx,
            next_global,
            position,
            metrics,
            decider,
            pattern,
        );
    }

    fn spawn_initial(window: &mut WindowData, machine_index: u32, metrics: &mut OperatorMetrics) {
        let pm_id = window.next_pm_id;
        window.next_pm_id += 1;
        window.pms.push(PartialMatch {
            pm_id,
            machine_index,
            local_state: 0,
            bindings: Vec::new(),
            lineage: Vec::new(),
            alive: true,
        });
        window.live += 1;
        metrics.pm_spawned += 1;
    }

    fn log_progress(
        window: &mut WindowData,
        pm_id: u32,
        entered: StateId,
        event: &Arc<Event>,
        position: u32,
        stats: bool,
    ) {
        if stats {
            window.obs.push(ContributionObservation {
                pm_id,
                window_id: window.id,
                // States within one pattern are numbered consecutively, so
                // the pre-advance state is entered - 1.
                state_before: entered - 1,
                state_after: entered,
                event_type: event.event_type,
                position,
            });
            window.pm_entry_log.push((pm_id, entered, position));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn consult_pm_drop(
        window: &mut WindowData,
        idx: usize,
        entered: StateId,
        position: u32,
        metrics: &mut OperatorMetrics,
        decider: &mut dyn ShedDecider,
        pattern: PatternId,
    ) {
        if decider.drop_pm(pattern, entered, position) {
            window.pms[idx].alive = false;
            window.live -= 1;
            window.tainted = true;
            metrics.pm_dropped += 1;
            // Foregone work estimate: one consult per remaining position.
            let remaining = window.expected_len.saturating_sub(position).max(1);
            metrics.foregone_pairings += f64::from(remaining);
        }
    }

    /// Finishes a match. Under skip-till-any the source PM stays behind for
    /// other completions and the completing branch gets a fresh id; under
    /// skip-till-next the PM retires (respawning an initial PM if it was
    /// one). Returns the complex event and the machine index to respawn.
    #[allow(clippy::too_many_arguments)]
    fn complete_pm(
        window: &mut WindowData,
        idx: usize,
        machine: &StateMachine,
        state_global: StateId,
        final_global: StateId,
        event: &Arc<Event>,
        position: u32,
        stats: bool,
    ) -> (ComplexEvent, Option<u32>) {
        let policy = machine.policy;
        let (obs_id, mark): (u32, Vec<u32>) = match policy {
            SelectionPolicy::SkipTillAnyMatch => {
                let new_id = window.next_pm_id;
                window.next_pm_id += 1;
                let src = &window.pms[idx];
                let mut mark = src.lineage.clone();
                mark.push(src.pm_id);
                mark.push(new_id);
                (new_id, mark)
            }
            SelectionPolicy::SkipTillNextMatch => {
                let pm = &window.pms[idx];
                let mut mark = pm.lineage.clone();
                mark.push(pm.pm_id);
                (pm.pm_id, mark)
            }
        };
        let mut seqs: Vec<u64> = window.pms[idx].bindings.iter().map(|e| e.seq).collect();
        seqs.push(event.seq);
        if stats {
            window.obs.push(ContributionObservation {
                pm_id: obs_id,
                window_id: window.id,
                state_before: state_global,
                state_after: final_global,
                event_type: event.event_type,
                position,
            });
        }
        Self::mark_completed(window, mark, stats);

        let mut respawn = None;
        if policy == SelectionPolicy::SkipTillNextMatch {
            let was_initial = window.pms[idx].local_state == 0;
            window.pms[idx].alive = false;
            window.live -= 1;
            if was_initial {
                respawn = Some(window.pms[idx].machine_index);
            }
        }
        (
            ComplexEvent {
                pattern_id: machine.pattern_id,
                window_id: window.id,
                seqs,
                ts_detect: event.ts,
            },
            respawn,
        )
    }

    /// A negated event ended the PM. Abandoned PMs count as completed for
    /// statistics, so the negated contribution carries weight in the model.
    fn abandon_pm(
        window: &mut WindowData,
        idx: usize,
        state_global: StateId,
        final_global: StateId,
        event: &Arc<Event>,
        position: u32,
        stats: bool,
    ) {
        let pm_id = window.pms[idx].pm_id;
        if stats {
            window.obs.push(ContributionObservation {
                pm_id,
                window_id: window.id,
                state_before: state_global,
                state_after: final_global,
                event_type: event.event_type,
                position,
            });
        }
        let mut mark = window.pms[idx].lineage.clone();
        mark.push(pm_id);
        Self::mark_completed(window, mark, stats);
        window.pms[idx].alive = false;
        window.live -= 1;
    }

    /// Closes a window: still-open PMs become not-completed observations,
    /// training data from unshed windows is flushed, storage is released.
    pub fn close_window(&mut self, id: u64) -> Result<()> {
        let Some(mut window) = self.windows.remove(&id) else {
            return Err(CoreError::Logic(format!("window {id} closed twice")));
        };
        self.metrics.windows_closed += 1;
        if !self.config.collect_stats {
            return Ok(());
        }
        for pm in window.pms.iter().filter(|p| p.alive) {
            if !window.completed_ids.contains(&pm.pm_id) {
                window.completions.push(CompletionObservation {
                    pm_id: pm.pm_id,
                    window_id: id,
                    completed: false,
                });
            }
        }
        if window.tainted {
            return Ok(());
        }
        // Event-instance outcomes for window-level utilities: one position
        // holds one event, so (type, position) identifies the instance.
        let mut flagged: BTreeSet<(TypeId, u32)> = BTreeSet::new();
        for obs in &window.obs {
            if obs.contributed() && window.completed_ids.contains(&obs.pm_id) {
                flagged.insert((obs.event_type, obs.position));
            }
        }
        for (&key, &count) in &window.event_tally.events {
            let entry = self.training.event_outcomes.entry(key).or_insert((0, 0));
            entry.1 += u64::from(count);
            if flagged.contains(&key) {
                entry.0 += 1;
            }
        }
        for &(pm_id, entered, pos) in &window.pm_entry_log {
            let entry = self
                .training
                .pm_entries
                .entry((entered, pos))
                .or_insert((0, 0));
            entry.1 += 1;
            if window.completed_ids.contains(&pm_id) {
                entry.0 += 1;
            }
        }
        self.training
            .observations
            .contributions
            .append(&mut window.obs);
        self.training
            .observations
            .completions
            .append(&mut window.completions);
        self.training.window_tallies.push(window.tally);
        self.training.event_tallies.push(window.event_tally);
        Ok(())
    }
}
