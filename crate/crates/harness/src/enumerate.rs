//! Exhaustive reference matcher.
//!
//! Matches a pattern against one window's event list by direct interpretation
//! of the pattern definition: subsequence enumeration under
//! skip-till-any-match, greedy earliest extension under skip-till-next-match.
//! It shares no code with the compiled state machine (guards are re-evaluated
//! by a local interpreter), which is what makes it usable as an oracle for
//! the engine. Exponential; small inputs only.

use std::sync::Arc;

use hspice_core::event::Event;
use hspice_core::guard::{ArithExpr, BinOp, CmpOp, GuardExpr};
use hspice_core::pattern::{PatternSpec, SelectionPolicy, Step, StepKind};

/// All matches of `pattern` within one window, as sorted, deduplicated
/// sequence-number vectors.
pub fn enumerate_window(pattern: &PatternSpec, window: &[Arc<Event>]) -> Vec<Vec<u64>> {
    let groups = group_steps(pattern);
    let slots = step_slots(pattern);
    let mut out = Vec::new();
    match pattern.policy {
        SelectionPolicy::SkipTillAnyMatch => {
            let mut bindings: Vec<&Event> = Vec::new();
            explore(&groups, &slots, 0, 0, window, &mut bindings, &mut out);
        }
        SelectionPolicy::SkipTillNextMatch => {
            greedy_all(&groups, &slots, window, &mut out);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// A positive step with the negated steps that precede it.
struct Group<'p> {
    negations: Vec<(&'p std::collections::BTreeSet<u16>, Option<&'p GuardExpr>)>,
    types: &'p std::collections::BTreeSet<u16>,
    guard: Option<&'p GuardExpr>,
    kind: &'p StepKind,
}

fn group_steps(pattern: &PatternSpec) -> Vec<Group<'_>> {
    let mut groups = Vec::new();
    let mut pending = Vec::new();
    for step in &pattern.steps {
        match step {
            Step::Negated { types, guard } => pending.push((types, guard.as_ref())),
            Step::Positive { types, guard, kind } => {
                groups.push(Group {
                    negations: std::mem::take(&mut pending),
                    types,
                    guard: guard.as_ref(),
                    kind,
                });
            }
        }
    }
    groups
}

/// Binding slot of the first event each step binds.
fn step_slots(pattern: &PatternSpec) -> Vec<usize> {
    let mut slots = vec![0usize; pattern.steps.len()];
    let mut base = 0usize;
    for (idx, step) in pattern.steps.iter().enumerate() {
        slots[idx] = base;
        base += step.slots() as usize;
    }
    slots
}

/// Local guard interpreter, independent of the engine's evaluator. Missing
/// attributes and zero denominators fail the guard.
fn guard_holds(
    guard: Option<&GuardExpr>,
    current: &Event,
    bindings: &[&Event],
    slots: &[usize],
) -> bool {
    let Some(g) = guard else { return true };
    let (Some(l), Some(r)) = (
        arith(&g.lhs, current, bindings, slots),
        arith(&g.rhs, current, bindings, slots),
    ) else {
        return false;
    };
    match g.op {
        CmpOp::Lt => l < r,
        CmpOp::Le => l <= r,
        CmpOp::Eq => l == r,
        CmpOp::Ge => l >= r,
        CmpOp::Gt => l > r,
    }
}

fn arith(e: &ArithExpr, current: &Event, bindings: &[&Event], slots: &[usize]) -> Option<f64> {
    match e {
        ArithExpr::Const(c) => Some(*c),
        ArithExpr::Attr(name) => current.attr(name),
        ArithExpr::BoundAttr { step, attr } => {
            let slot = *slots.get(*step)?;
            bindings.get(slot)?.attr(attr)
        }
        ArithExpr::Abs(inner) => arith(inner, current, bindings, slots).map(f64::abs),
        ArithExpr::Neg(inner) => arith(inner, current, bindings, slots).map(|v| -v),
        ArithExpr::Bin { op, lhs, rhs } => {
            let l = arith(lhs, current, bindings, slots)?;
            let r = arith(rhs, current, bindings, slots)?;
            match op {
                BinOp::Add => Some(l + r),
                BinOp::Sub => Some(l - r),
                BinOp::Mul => Some(l * r),
                BinOp::Div => (r != 0.0).then(|| l / r),
            }
        }
    }
}

fn matches_negation(group: &Group, ev: &Event, bindings: &[&Event], slots: &[usize]) -> bool {
    group.negations.iter().any(|(types, guard)| {
        types.contains(&ev.event_type) && guard_holds(*guard, ev, bindings, slots)
    })
}

/// Skip-till-any: every way of choosing bindings, one group at a time. A
/// negated event encountered while the group's first binding is still open
/// ends the scan (later candidates would have been abandoned).
fn explore<'w>(
    groups: &[Group],
    slots: &[usize],
    gi: usize,
    start: usize,
    window: &'w [Arc<Event>],
    bindings: &mut Vec<&'w Event>,
    out: &mut Vec<Vec<u64>>,
) {
    if gi == groups.len() {
        out.push(bindings.iter().map(|e| e.seq).collect());
        return;
    }
    explore_slots(groups, slots, gi, start, window, bindings, out, 0);
}

/// Chooses the next slot of group `gi` (slot `chosen` of k); negations apply
/// only while the group's first slot is unbound.
#[allow(clippy::too_many_arguments)]
fn explore_slots<'w>(
    groups: &[Group],
    slots: &[usize],
    gi: usize,
    start: usize,
    window: &'w [Arc<Event>],
    bindings: &mut Vec<&'w Event>,
    out: &mut Vec<Vec<u64>>,
    chosen: u32,
) {
    let group = &groups[gi];
    if chosen == group_k(group) {
        explore(groups, slots, gi + 1, start, window, bindings, out);
        return;
    }
    for j in start..window.len() {
        let ev = window[j].as_ref();
        if chosen == 0 && matches_negation(group, ev, bindings, slots) {
            break;
        }
        if binds(group, ev, bindings, chosen, slots) {
            bindings.push(ev);
            explore_slots(groups, slots, gi, j + 1, window, bindings, out, chosen + 1);
            bindings.pop();
        }
    }
}

/// True iff `ev` can bind the group's next slot given prior bindings.
fn binds(group: &Group, ev: &Event, bindings: &[&Event], chosen: u32, slots: &[usize]) -> bool {
    if !group.types.contains(&ev.event_type) {
        return false;
    }
    if let StepKind::AnyK { identity, .. } = group.kind {
        let Some(id_val) = ev.attr(identity) else {
            return false;
        };
        let prior = &bindings[bindings.len() - chosen as usize..];
        if prior.iter().any(|p| p.attr(identity) == Some(id_val)) {
            return false;
        }
    }
    guard_holds(group.guard, ev, bindings, slots)
}

fn group_k(group: &Group) -> u32 {
    match group.kind {
        StepKind::Single => 1,
        StepKind::AnyK { k, .. } => *k,
    }
}

/// Skip-till-next: one attempt per event that can bind the first group;
/// each later slot binds the earliest qualifying event, and a matching
/// negated event kills the attempt.
fn greedy_all(groups: &[Group], slots: &[usize], window: &[Arc<Event>], out: &mut Vec<Vec<u64>>) {
    let first = &groups[0];
    for j0 in 0..window.len() {
        let ev = window[j0].as_ref();
        if !binds(first, ev, &[], 0, slots) {
            continue;
        }
        let mut bindings: Vec<&Event> = vec![ev];
        let (mut gi, mut chosen) = (0usize, 1u32);
        if chosen == group_k(first) {
            gi = 1;
            chosen = 0;
        }
        if gi == groups.len() {
            out.push(bindings.iter().map(|e| e.seq).collect());
            continue;
        }
        for item in window.iter().skip(j0 + 1) {
            let ev = item.as_ref();
            let group = &groups[gi];
            if chosen == 0 && matches_negation(group, ev, &bindings, slots) {
                break;
            }
            if binds(group, ev, &bindings, chosen, slots) {
                bindings.push(ev);
                chosen += 1;
                if chosen == group_k(group) {
                    gi += 1;
                    chosen = 0;
                }
                if gi == groups.len() {
                    out.push(bindings.iter().map(|e| e.seq).collect());
                    break;
                }
            }
        }
    }
}

/// Count-window slices of a stream: window k covers indexes
/// [k*slide, k*slide + size).
pub fn count_windows(
    events: &[Arc<Event>],
    size: usize,
    slide: usize,
) -> Vec<(u64, Vec<Arc<Event>>)> {
    let mut out = Vec::new();
    let mut k = 0usize;
    while k * slide < events.len() {
        let start = k * slide;
        let end = (start + size).min(events.len());
        out.push((k as u64, events[start..end].to_vec()));
        k += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn ev(seq: u64, t: u16) -> Arc<Event> {
        Arc::new(Event {
            seq,
            ts: seq as i64,
            event_type: t,
            attrs: BTreeMap::new(),
        })
    }

    fn ev_id(seq: u64, t: u16, pid: f64) -> Arc<Event> {
        Arc::new(Event {
            seq,
            ts: seq as i64,
            event_type: t,
            attrs: [("pid".to_string(), pid)].into_iter().collect(),
        })
    }

    fn seq_pattern(types: &[u16], policy: SelectionPolicy) -> PatternSpec {
        PatternSpec {
            id: 1,
            weight: 1.0,
            policy,
            steps: types
                .iter()
                .map(|t| Step::Positive {
                    types: [*t].into_iter().collect(),
                    guard: None,
                    kind: StepKind::Single,
                })
                .collect(),
        }
    }

    #[test]
    fn any_match_enumerates_all_subsequences() {
        let p = seq_pattern(&[0, 1], SelectionPolicy::SkipTillAnyMatch);
        let w = vec![ev(0, 0), ev(1, 0), ev(2, 1), ev(3, 1)];
        let m = enumerate_window(&p, &w);
        assert_eq!(m, vec![vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]]);
    }

    #[test]
    fn next_match_is_greedy() {
        let p = seq_pattern(&[0, 1], SelectionPolicy::SkipTillNextMatch);
        let w = vec![ev(0, 0), ev(1, 0), ev(2, 1), ev(3, 1)];
        let m = enumerate_window(&p, &w);
        assert_eq!(m, vec![vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn negation_blocks_spanning_matches() {
        let p = PatternSpec {
            id: 1,
            weight: 1.0,
            policy: SelectionPolicy::SkipTillAnyMatch,
            steps: vec![
                Step::Positive {
                    types: [0].into_iter().collect(),
                    guard: None,
                    kind: StepKind::Single,
                },
                Step::Negated {
                    types: [9].into_iter().collect(),
                    guard: None,
                },
                Step::Positive {
                    types: [1].into_iter().collect(),
                    guard: None,
                    kind: StepKind::Single,
                },
            ],
        };
        // a n b a b: (a0, b2) blocked by n1; (a3, b4) survives; (a0, b4)
        // also blocked by n1.
        let w = vec![ev(0, 0), ev(1, 9), ev(2, 1), ev(3, 0), ev(4, 1)];
        let m = enumerate_window(&p, &w);
        assert_eq!(m, vec![vec![3, 4]]);
    }

    #[test]
    fn any_k_distinct_identities_combinations() {
        let p = PatternSpec {
            id: 1,
            weight: 1.0,
            policy: SelectionPolicy::SkipTillAnyMatch,
            steps: vec![
                Step::Positive {
                    types: [0].into_iter().collect(),
                    guard: None,
                    kind: StepKind::Single,
                },
                Step::Positive {
                    types: [1].into_iter().collect(),
                    guard: None,
                    kind: StepKind::AnyK {
                        k: 2,
                        identity: "pid".into(),
                    },
                },
            ],
        };
        let w = vec![
            ev(0, 0),
            ev_id(1, 1, 1.0),
            ev_id(2, 1, 1.0),
            ev_id(3, 1, 2.0),
        ];
        let m = enumerate_window(&p, &w);
        // Pairs with distinct ids: (1,3) and (2,3); (1,2) shares identity.
        assert_eq!(m, vec![vec![0, 1, 3], vec![0, 2, 3]]);
    }
}
