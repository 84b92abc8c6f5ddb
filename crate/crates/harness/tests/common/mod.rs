#![allow(dead_code)]

//! Shared fixtures for the integration and acceptance suites.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use hspice_core::event::{Event, TypeId, WindowSpec};
use hspice_core::guard::GuardExpr;
use hspice_core::pattern::{PatternSpec, SelectionPolicy, Step, StepKind};
use hspice_core::stats::{CompletionObservation, ContributionObservation, ObservationBuffer};
use hspice_harness::profile::{AttrGen, PlantSpec, StreamProfile};

pub fn ev(seq: u64, event_type: TypeId) -> Event {
    Event {
        seq,
        ts: seq as i64,
        event_type,
        attrs: BTreeMap::new(),
    }
}

pub fn ev_attrs(seq: u64, event_type: TypeId, attrs: &[(&str, f64)]) -> Event {
    Event {
        seq,
        ts: seq as i64,
        event_type,
        attrs: attrs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

pub fn single_step(t: TypeId, guard: Option<&str>) -> Step {
    Step::Positive {
        types: [t].into_iter().collect(),
        guard: guard.map(|g| GuardExpr::parse(g).unwrap()),
        kind: StepKind::Single,
    }
}

pub fn negated_step(t: TypeId, guard: Option<&str>) -> Step {
    Step::Negated {
        types: [t].into_iter().collect(),
        guard: guard.map(|g| GuardExpr::parse(g).unwrap()),
    }
}

pub fn seq_pattern(id: u32, types: &[TypeId], policy: SelectionPolicy) -> PatternSpec {
    PatternSpec {
        id,
        weight: 1.0,
        policy,
        steps: types.iter().map(|t| single_step(*t, None)).collect(),
    }
}

/// The six-PM observation fixture: pattern seq(A;B) over five-position
/// windows, A=type 0 and B=type 1, PMs 1-3 completed and 4-6 not. Feeding it
/// through the table builder must reproduce utilities 1/3, 1/4, 0, 1/4, 2/5.
pub fn six_pm_fixture() -> ObservationBuffer {
    let mut buf = ObservationBuffer::default();
    let mut contrib = |pm: u32, s: u32, s2: u32, t: TypeId, p: u32| {
        buf.record_contribution(ContributionObservation {
            pm_id: pm,
            window_id: 0,
            state_before: s,
            state_after: s2,
            event_type: t,
            position: p,
        });
    };
    // A at position 0: processed with six PMs at s0, contributed to 1 and 2.
    contrib(1, 0, 1, 0, 0);
    contrib(2, 0, 1, 0, 0);
    for pm in 3..=6 {
        contrib(pm, 0, 0, 0, 0);
    }
    // A at position 2: processed with four PMs at s0, contributed to 3 and 4.
    contrib(3, 0, 1, 0, 2);
    contrib(4, 0, 1, 0, 2);
    contrib(5, 0, 0, 0, 2);
    contrib(6, 0, 0, 0, 2);
    // A at position 3: processed with two PMs at s0, contributed to both.
    contrib(5, 0, 1, 0, 3);
    contrib(6, 0, 1, 0, 3);
    // B at position 3: processed with four PMs at s1, contributed to 1.
    contrib(1, 1, 2, 1, 3);
    for pm in 2..=4 {
        contrib(pm, 1, 1, 1, 3);
    }
    // B at position 4: processed with five PMs at s1, contributed to 2 and 3.
    contrib(2, 1, 2, 1, 4);
    contrib(3, 1, 2, 1, 4);
    for pm in 4..=6 {
        contrib(pm, 1, 1, 1, 4);
    }
    for pm in 1..=6 {
        buf.record_completion(CompletionObservation {
            pm_id: pm,
            window_id: 0,
            completed: pm <= 3,
        });
    }
    buf
}

/// A randomized small matching instance for oracle-equivalence runs.
pub struct RandomInstance {
    pub specs: Vec<PatternSpec>,
    pub events: Vec<Arc<Event>>,
    pub window: WindowSpec,
}

/// Draws a random instance: up to 4 types, window size up to 10, up to 3
/// patterns covering sequence, repetition, negation, and any_k under both
/// selection policies, with occasional guards.
pub fn random_instance(rng: &mut ChaCha12Rng) -> RandomInstance {
    let type_count: u16 = rng.gen_range(2..=4);
    let ws: u64 = rng.gen_range(3..=10);
    let slide: u64 = rng.gen_range(1..=ws);
    let n_patterns = rng.gen_range(1..=3);

    let mut specs = Vec::new();
    for pid in 1..=n_patterns {
        let policy = if rng.gen_bool(0.5) {
            SelectionPolicy::SkipTillAnyMatch
        } else {
            SelectionPolicy::SkipTillNextMatch
        };
        let n_positive = rng.gen_range(1..=3);
        let mut steps: Vec<Step> = Vec::new();
        for i in 0..n_positive {
            // Occasionally a negated step between positives.
            if i > 0 && rng.gen_bool(0.3) {
                steps.push(negated_step(rng.gen_range(0..type_count), None));
            }
            let guard = if rng.gen_bool(0.35) {
                if i > 0 && rng.gen_bool(0.5) {
                    Some("abs(attr(v) - step(0).attr(v)) <= 0.9".to_string())
                } else {
                    Some("attr(v) >= -0.2".to_string())
                }
            } else {
                None
            };
            let any_k = type_count >= 3 && rng.gen_bool(0.2);
            if any_k {
                let k = rng.gen_range(1..=2u32);
                let mut types: Vec<TypeId> = (0..type_count).collect();
                // Any 2 of the first few types.
                types.truncate(rng.gen_range(2..=type_count) as usize);
                steps.push(Step::Positive {
                    types: types.into_iter().collect(),
                    guard: guard.map(|g| GuardExpr::parse(&g).unwrap()),
                    kind: StepKind::AnyK {
                        k,
                        identity: "pid".into(),
                    },
                });
            } else {
                steps.push(Step::Positive {
                    types: [rng.gen_range(0..type_count)].into_iter().collect(),
                    guard: guard.map(|g| GuardExpr::parse(&g).unwrap()),
                    kind: StepKind::Single,
                });
            }
        }
        specs.push(PatternSpec {
            id: pid,
            weight: 1.0,
            policy,
            steps,
        });
    }

    let length = rng.gen_range(8..=30u64);
    let events = (0..length)
        .map(|i| {
            Arc::new(Event {
                seq: i,
                ts: i as i64,
                event_type: rng.gen_range(0..type_count),
                attrs: [
                    ("v".to_string(), rng.gen_range(-1.0..1.0)),
                    ("pid".to_string(), f64::from(rng.gen_range(0..3u32))),
                ]
                .into_iter()
                .collect(),
            })
        })
        .collect();

    RandomInstance {
        specs,
        events,
        window: WindowSpec::count(ws, slide),
    }
}

pub fn chacha(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Positionally correlated stream profile: a three-step pattern planted at
/// correlated offsets, the rest noise. Types 0,1,2 carry the pattern; 3,4,5
/// are noise.
pub fn correlated_profile(seed: u64, length: u64, density: f64) -> StreamProfile {
    StreamProfile {
        type_count: 6,
        type_names: vec![],
        length,
        seed,
        window: WindowSpec::count(25, 5),
        time_step_us: 1_000,
        plants: vec![PlantSpec {
            pattern_id: 1,
            density,
            count: None,
            offsets: vec![(0, 6), (9, 15), (18, 24)],
            negated_prob: 0.0,
        }],
        noise_types: vec![3, 4, 5],
        pattern_type_noise: 0.35,
        attrs: [(
            "pct_change".to_string(),
            AttrGen::Uniform { lo: -0.4, hi: 0.45 },
        )]
        .into_iter()
        .collect(),
        satisfy: [("pct_change".to_string(), (0.5, 0.9))]
            .into_iter()
            .collect(),
        identity_attr: "player_id".into(),
        identity_pool: 8,
    }
}

/// The pattern matching [`correlated_profile`] plants: guarded three-step
/// sequence.
pub fn correlated_pattern() -> PatternSpec {
    PatternSpec {
        id: 1,
        weight: 1.0,
        policy: SelectionPolicy::SkipTillAnyMatch,
        steps: vec![
            single_step(0, Some("attr(pct_change) >= 0.5")),
            single_step(1, Some("attr(pct_change) >= 0.5")),
            single_step(2, Some("attr(pct_change) >= 0.5")),
        ],
    }
}
