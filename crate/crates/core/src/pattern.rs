//! Declarative patterns and their compilation to guarded state machines.
//!
//! A pattern is an ordered list of steps. Positive steps bind events
//! (`single` binds one, `any_k` binds `k` events with distinct source
//! identities); negated steps bind nothing and abandon a partial match when a
//! matching event arrives while the following positive step is awaited.
//!
//! Pattern files are JSON arrays:
//!
//! ```json
//! [{"id": 1, "weight": 1.0, "policy": "skip_till_any_match",
//!   "steps": [
//!     {"kind": "single", "types": [0], "guard": "attr(pct_change) >= 0.5"},
//!     {"kind": "negated", "types": [4]},
//!     {"kind": "any_k", "k": 3, "types": [2, 3], "identity": "player_id"}
//!   ]}]
//! ```

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::event::{Event, TypeId};
use crate::guard::{BindingLookup, GuardExpr};

pub type PatternId = u32;
/// Globally unique state id: states of all compiled patterns are disjoint.
pub type StateId = u32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    SkipTillAnyMatch,
    SkipTillNextMatch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Single,
    /// Bind `k` events whose `identity` attribute values are pairwise
    /// distinct.
    AnyK {
        k: u32,
        identity: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Positive {
        types: BTreeSet<TypeId>,
        guard: Option<GuardExpr>,
        kind: StepKind,
    },
    Negated {
        types: BTreeSet<TypeId>,
        guard: Option<GuardExpr>,
    },
}

impl Step {
    pub fn is_negated(&self) -> bool {
        matches!(self, Step::Negated { .. })
    }

    /// Number of binding slots this step contributes.
    pub fn slots(&self) -> u32 {
        match self {
            Step::Positive {
                kind: StepKind::AnyK { k, .. },
                ..
            } => *k,
            Step::Positive { .. } => 1,
            Step::Negated { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub id: PatternId,
    pub weight: f64,
    pub policy: SelectionPolicy,
    pub steps: Vec<Step>,
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |step: usize, msg: &str| {
            Err(CoreError::InvalidPattern {
                pattern: self.id,
                step,
                msg: msg.to_string(),
            })
        };
        if self.steps.is_empty() {
            return fail(0, "pattern has no steps");
        }
        if self.weight <= 0.0 || self.weight.is_nan() {
            return fail(0, "weight must be positive");
        }
        if !self.steps.iter().any(|s| !s.is_negated()) {
            return fail(0, "pattern needs at least one positive step");
        }
        if self.steps.first().is_some_and(Step::is_negated) {
            return fail(0, "negated step cannot be first");
        }
        if self.steps.last().is_some_and(Step::is_negated) {
            return fail(self.steps.len() - 1, "negated step cannot be last");
        }
        let mut slot_base = 0u32;
        for (idx, step) in self.steps.iter().enumerate() {
            let (types, guard) = match step {
                Step::Positive { types, guard, kind } => {
                    if let StepKind::AnyK { k, identity } = kind {
                        if *k < 1 || *k as usize > types.len() {
                            return fail(idx, "any_k requires 1 <= k <= |types|");
                        }
                        if identity.is_empty() {
                            return fail(idx, "any_k requires an identity attribute");
                        }
                    }
                    (types, guard)
                }
                Step::Negated { types, guard } => (types, guard),
            };
            if types.is_empty() {
                return fail(idx, "empty type set");
            }
            if let Some(g) = guard {
                if let Some(max_ref) = g.max_step_ref() {
                    if max_ref >= idx {
                        return fail(idx, "guard references this or a later step");
                    }
                    if self.steps[max_ref].is_negated() {
                        return fail(idx, "guard references a negated step");
                    }
                }
            }
            slot_base += step.slots();
        }
        let _ = slot_base;
        Ok(())
    }

    /// Total number of events a complete match binds.
    pub fn contribution_count(&self) -> u32 {
        self.steps.iter().map(Step::slots).sum()
    }
}

// --- JSON pattern file -----------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawPattern {
    id: PatternId,
    #[serde(default = "default_weight")]
    weight: f64,
    #[serde(default)]
    policy: SelectionPolicy,
    steps: Vec<RawStep>,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawStep {
    Single {
        types: Vec<TypeId>,
        #[serde(default)]
        guard: Option<String>,
    },
    Negated {
        types: Vec<TypeId>,
        #[serde(default)]
        guard: Option<String>,
    },
    AnyK {
        k: u32,
        types: Vec<TypeId>,
        identity: String,
        #[serde(default)]
        guard: Option<String>,
    },
}

fn parse_guard_opt(src: &Option<String>) -> Result<Option<GuardExpr>> {
    src.as_deref().map(GuardExpr::parse).transpose()
}

/// Parses a pattern-file JSON document (an array of patterns).
pub fn parse_patterns(json: &str) -> Result<Vec<PatternSpec>> {
    let raw: Vec<RawPattern> = serde_json::from_str(json)?;
    raw.into_iter()
        .map(|rp| {
            let steps = rp
                .steps
                .iter()
                .map(|rs| {
                    Ok(match rs {
                        RawStep::Single { types, guard } => Step::Positive {
                            types: types.iter().copied().collect(),
                            guard: parse_guard_opt(guard)?,
                            kind: StepKind::Single,
                        },
                        RawStep::Negated { types, guard } => Step::Negated {
                            types: types.iter().copied().collect(),
                            guard: parse_guard_opt(guard)?,
                        },
                        RawStep::AnyK {
                            k,
                            types,
                            identity,
                            guard,
                        } => Step::Positive {
                            types: types.iter().copied().collect(),
                            guard: parse_guard_opt(guard)?,
                            kind: StepKind::AnyK {
                                k: *k,
                                identity: identity.clone(),
                            },
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let spec = PatternSpec {
                id: rp.id,
                weight: rp.weight,
                policy: rp.policy,
                steps,
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

pub fn load_patterns(path: &Path) -> Result<Vec<PatternSpec>> {
    let data = std::fs::read_to_string(path)?;
    parse_patterns(&data)
}

// --- Compiled state machine ------------------------------------------------

/// What one awaiting state expects.
#[derive(Debug, Clone)]
pub struct AwaitSpec {
    pub step_index: usize,
    pub types: BTreeSet<TypeId>,
    pub guard: Option<GuardExpr>,
    /// For any_k states: (how many contributors already bound at this step,
    /// total k, identity attribute). `None` for single steps.
    pub any_progress: Option<(u32, u32, String)>,
}

/// Negation attached to an awaiting state: a matching event abandons the PM.
#[derive(Debug, Clone)]
pub struct NegationSpec {
    pub step_index: usize,
    pub types: BTreeSet<TypeId>,
    pub guard: Option<GuardExpr>,
}

#[derive(Debug, Clone)]
pub struct State {
    pub global_id: StateId,
    /// `None` for the final state.
    pub awaiting: Option<AwaitSpec>,
    pub negations: Vec<NegationSpec>,
    /// Binding slots filled when a PM is in this state.
    pub bindings_len: u32,
}

/// Outcome of matching one event against a partial match.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionOutcome {
    NoChange,
    Advance { next_local: u32 },
    Complete,
    Abandon,
}

/// A compiled pattern: one initial state, one final state, and guarded
/// transitions in between. Immutable and shareable across threads; `step` is
/// reentrant.
#[derive(Debug, Clone)]
pub struct StateMachine {
    pub pattern_id: PatternId,
    pub weight: f64,
    pub policy: SelectionPolicy,
    pub states: Vec<State>,
    pub state_offset: StateId,
    /// Binding slot of the first event bound by each step (0 for negated
    /// steps, which never bind).
    step_slot: Vec<u32>,
    contribution_count: u32,
}

struct MachineBindings<'a> {
    machine: &'a StateMachine,
    bindings: &'a [Arc<Event>],
}

impl BindingLookup for MachineBindings<'_> {
    fn bound_event(&self, step: usize) -> Option<&Event> {
        let slot = *self.machine.step_slot.get(step)? as usize;
        self.bindings.get(slot).map(|a| a.as_ref())
    }
}

impl StateMachine {
    /// Compiles a validated spec. `state_offset` is the running sum of state
    /// counts of previously compiled patterns, which keeps state ids globally
    /// unique.
    pub fn compile(spec: &PatternSpec, state_offset: StateId) -> Result<StateMachine> {
        spec.validate()?;
        let mut states: Vec<State> = Vec::new();
        let mut pending_negations: Vec<NegationSpec> = Vec::new();
        let mut step_slot = vec![0u32; spec.steps.len()];
        let mut bindings_len = 0u32;

        for (idx, step) in spec.steps.iter().enumerate() {
            match step {
                Step::Negated { types, guard } => {
                    pending_negations.push(NegationSpec {
                        step_index: idx,
                        types: types.clone(),
                        guard: guard.clone(),
                    });
                }
                Step::Positive { types, guard, kind } => {
                    step_slot[idx] = bindings_len;
                    let k = match kind {
                        StepKind::Single => 1,
                        StepKind::AnyK { k, .. } => *k,
                    };
                    for progress in 0..k {
                        let negations = if progress == 0 {
                            std::mem::take(&mut pending_negations)
                        } else {
                            Vec::new()
                        };
                        states.push(State {
                            global_id: state_offset + states.len() as StateId,
                            awaiting: Some(AwaitSpec {
                                step_index: idx,
                                types: types.clone(),
                                guard: guard.clone(),
                                any_progress: match kind {
                                    StepKind::Single => None,
                                    StepKind::AnyK { k, identity } => {
                                        Some((progress, *k, identity.clone()))
                                    }
                                },
                            }),
                            negations,
                            bindings_len,
                        });
                        bindings_len += 1;
                    }
                }
            }
        }
        // Final state.
        states.push(State {
            global_id: state_offset + states.len() as StateId,
            awaiting: None,
            negations: Vec::new(),
            bindings_len,
        });
        Ok(StateMachine {
            pattern_id: spec.id,
            weight: spec.weight,
            policy: spec.policy,
            states,
            state_offset,
            step_slot,
            contribution_count: spec.contribution_count(),
        })
    }

    /// Number of states, final included.
    pub fn state_count(&self) -> u32 {
        self.states.len() as u32
    }

    pub fn initial_local(&self) -> u32 {
        0
    }

    pub fn final_local(&self) -> u32 {
        self.states.len() as u32 - 1
    }

    pub fn global_id(&self, local: u32) -> StateId {
        self.state_offset + local
    }

    pub fn contribution_count(&self) -> u32 {
        self.contribution_count
    }

    /// Non-final global state ids, ascending.
    pub fn live_state_ids(&self) -> impl Iterator<Item = StateId> + '_ {
        self.states[..self.states.len() - 1]
            .iter()
            .map(|s| s.global_id)
    }

    /// Matches `event` against a PM sitting at `local` with `bindings`.
    /// Pure: mutates nothing; also returns how many guards were evaluated so
    /// callers can charge processing cost.
    pub fn step(
        &self,
        local: u32,
        bindings: &[Arc<Event>],
        event: &Event,
    ) -> (TransitionOutcome, u32) {
        let state = &self.states[local as usize];
        let Some(awaiting) = &state.awaiting else {
            // Final state: PMs never sit here.
            debug_assert!(false, "step() called on final state");
            return (TransitionOutcome::NoChange, 0);
        };
        let mut guards = 0u32;
        let ctx = MachineBindings {
            machine: self,
            bindings,
        };

        // Negations first: an event that matches a negation abandons the PM
        // even if it could also match the awaited step.
        for neg in &state.negations {
            if neg.types.contains(&event.event_type) {
                let hit = match &neg.guard {
                    Some(g) => {
                        guards += 1;
                        g.eval(event, &ctx)
                    }
                    None => true,
                };
                if hit {
                    return (TransitionOutcome::Abandon, guards);
                }
            }
        }

        if !awaiting.types.contains(&event.event_type) {
            return (TransitionOutcome::NoChange, guards);
        }
        if let Some((progress, _, identity)) = &awaiting.any_progress {
            // Contributors to one any_k step must carry distinct identities.
            let Some(id_val) = event.attr(identity) else {
                return (TransitionOutcome::NoChange, guards);
            };
            let taken = *progress as usize;
            let start = bindings.len() - taken;
            for prior in &bindings[start..] {
                if prior.attr(identity) == Some(id_val) {
                    return (TransitionOutcome::NoChange, guards);
                }
            }
        }
        if let Some(g) = &awaiting.guard {
            guards += 1;
            if !g.eval(event, &ctx) {
                return (TransitionOutcome::NoChange, guards);
            }
        }
        let next = local + 1;
        if next == self.final_local() {
            (TransitionOutcome::Complete, guards)
        } else {
            (TransitionOutcome::Advance { next_local: next }, guards)
        }
    }
}

/// Compiles a pattern set with globally disjoint state numbering.
pub fn compile_patterns(specs: &[PatternSpec]) -> Result<Vec<StateMachine>> {
    let mut machines = Vec::with_capacity(specs.len());
    let mut offset: StateId = 0;
    for spec in specs {
        let machine = StateMachine::compile(spec, offset)?;
        offset += machine.state_count();
        machines.push(machine);
    }
    Ok(machines)
}

/// Index over the non-final states of a compiled pattern set: the state axis
/// of the utility table. Rows are dense indices `0..k()`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    /// Global id of each row, ascending.
    gamma_states: Vec<StateId>,
    /// Pattern weight per row.
    weights: Vec<f64>,
    /// Pattern id per row.
    patterns: Vec<PatternId>,
    /// global id -> row, `u32::MAX` for final states.
    row_of: Vec<u32>,
}

impl StateSpace {
    pub fn new(machines: &[StateMachine]) -> StateSpace {
        let total: usize = machines.iter().map(|m| m.state_count() as usize).sum();
        let mut row_of = vec![u32::MAX; total];
        let mut gamma_states = Vec::new();
        let mut weights = Vec::new();
        let mut patterns = Vec::new();
        for m in machines {
            for sid in m.live_state_ids() {
                row_of[sid as usize] = gamma_states.len() as u32;
                gamma_states.push(sid);
                weights.push(m.weight);
                patterns.push(m.pattern_id);
            }
        }
        StateSpace {
            gamma_states,
            weights,
            patterns,
            row_of,
        }
    }

    /// Rebuilds a state space from an exported list of (global id, weight,
    /// pattern) rows, for loading tables without recompiling patterns.
    pub fn from_rows(rows: Vec<(StateId, f64, PatternId)>) -> StateSpace {
        let max_id = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let mut row_of = vec![u32::MAX; max_id as usize];
        let mut gamma_states = Vec::new();
        let mut weights = Vec::new();
        let mut patterns = Vec::new();
        for (sid, w, pid) in rows {
            row_of[sid as usize] = gamma_states.len() as u32;
            gamma_states.push(sid);
            weights.push(w);
            patterns.push(pid);
        }
        StateSpace {
            gamma_states,
            weights,
            patterns,
            row_of,
        }
    }

    /// Number of rows (all non-final states of all patterns).
    pub fn k(&self) -> usize {
        self.gamma_states.len()
    }

    #[inline]
    pub fn row(&self, state: StateId) -> Option<u32> {
        match self.row_of.get(state as usize) {
            Some(&r) if r != u32::MAX => Some(r),
            _ => None,
        }
    }

    pub fn state_at(&self, row: u32) -> StateId {
        self.gamma_states[row as usize]
    }

    pub fn weight_at(&self, row: u32) -> f64 {
        self.weights[row as usize]
    }

    pub fn pattern_at(&self, row: u32) -> PatternId {
        self.patterns[row as usize]
    }

    pub fn rows(&self) -> impl Iterator<Item = (u32, StateId, f64, PatternId)> + '_ {
        (0..self.k() as u32).map(|r| {
            (
                r,
                self.gamma_states[r as usize],
                self.weights[r as usize],
                self.patterns[r as usize],
            )
        })
    }
}
