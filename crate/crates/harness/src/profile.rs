//! Synthetic event streams with planted pattern occurrences.
//!
//! A profile plants pattern instances at correlated offsets within window
//! spans and fills the rest of the timeline with noise. The seed fully
//! determines the output: the same profile writes byte-identical files. A
//! sidecar file lists what was planted, but the authoritative ground truth
//! for QoR always comes from an unshed engine run over the generated file.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use hspice_core::event::{Event, StreamSchema, TypeId, WindowSpec};
use hspice_core::pattern::{PatternSpec, Step, StepKind};

use crate::error::{HarnessError, Result};

/// How one attribute is drawn for noise events.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum AttrGen {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
    Const { value: f64 },
}

impl AttrGen {
    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        match self {
            AttrGen::Uniform { lo, hi } => rng.gen_range(*lo..*hi),
            AttrGen::Normal { mean, std } => {
                // Box-Muller keeps the dependency surface small.
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                mean + std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
            AttrGen::Const { value } => *value,
        }
    }
}

/// One planting rule: which pattern, how often, and where its positive steps
/// land within a window span.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantSpec {
    pub pattern_id: u32,
    /// Probability that a given span receives an occurrence.
    #[serde(default)]
    pub density: f64,
    /// Exact number of occurrences to plant (overrides density).
    #[serde(default)]
    pub count: Option<u64>,
    /// Inclusive offset range per positive step, strictly increasing.
    pub offsets: Vec<(u32, u32)>,
    /// Probability that a planted occurrence also gets its negated event(s)
    /// placed inside the corresponding gap.
    #[serde(default)]
    pub negated_prob: f64,
}

/// Generation profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamProfile {
    pub type_count: u16,
    #[serde(default)]
    pub type_names: Vec<String>,
    pub length: u64,
    pub seed: u64,
    /// Span geometry for planting; usually the experiment's window spec.
    pub window: WindowSpec,
    #[serde(default = "default_time_step")]
    pub time_step_us: i64,
    #[serde(default)]
    pub plants: Vec<PlantSpec>,
    /// Types used for pure-noise events; all types when empty.
    #[serde(default)]
    pub noise_types: Vec<TypeId>,
    /// Fraction of noise events drawn from pattern-step types (with
    /// non-satisfying attributes) instead of pure-noise types.
    #[serde(default)]
    pub pattern_type_noise: f64,
    /// Attribute distributions applied to every event.
    #[serde(default)]
    pub attrs: BTreeMap<String, AttrGen>,
    /// Per-attribute range planted events draw from so step guards hold.
    #[serde(default)]
    pub satisfy: BTreeMap<String, (f64, f64)>,
    #[serde(default = "default_identity_attr")]
    pub identity_attr: String,
    #[serde(default = "default_identity_pool")]
    pub identity_pool: u32,
}

fn default_time_step() -> i64 {
    1_000
}

fn default_identity_attr() -> String {
    "player_id".into()
}

fn default_identity_pool() -> u32 {
    8
}

impl StreamProfile {
    pub fn load(path: &Path) -> Result<StreamProfile> {
        let data = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&data)?)
    }

    pub fn schema(&self) -> StreamSchema {
        StreamSchema {
            type_count: self.type_count,
            type_names: self.type_names.clone(),
        }
    }
}

/// One planted occurrence, recorded in the sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedOccurrence {
    pub pattern_id: u32,
    pub span: u64,
    pub seqs: Vec<u64>,
}

#[derive(Debug, Default)]
pub struct GenerateSummary {
    pub events: u64,
    pub planted: Vec<PlantedOccurrence>,
    pub skipped_plants: u64,
}

#[derive(Debug, Clone)]
enum Slot {
    Noise,
    /// (pattern id, step index, forced identity value or None).
    Planted(u32, usize, Option<f64>),
}

/// Generates the stream in memory. Exposed for tests; `generate_stream`
/// writes the files.
pub fn generate_events(
    profile: &StreamProfile,
    patterns: &[PatternSpec],
) -> Result<(Vec<Event>, GenerateSummary)> {
    let mut rng = ChaCha12Rng::seed_from_u64(profile.seed);
    let length = profile.length as usize;
    let mut slots: Vec<Slot> = vec![Slot::Noise; length];
    let mut summary = GenerateSummary::default();

    let pattern_of = |id: u32| patterns.iter().find(|p| p.id == id);

    // Validate plant geometry up front.
    for plant in &profile.plants {
        let Some(pattern) = pattern_of(plant.pattern_id) else {
            return Err(HarnessError::Config(format!(
                "plant references unknown pattern {}",
                plant.pattern_id
            )));
        };
        let positives = pattern.steps.iter().filter(|s| !s.is_negated()).count();
        if plant.offsets.len() != positives {
            return Err(HarnessError::Config(format!(
                "plant for pattern {} needs {} offset ranges, got {}",
                plant.pattern_id,
                positives,
                plant.offsets.len()
            )));
        }
        let mut prev_end = None;
        for &(lo, hi) in &plant.offsets {
            if lo > hi || u64::from(hi) >= profile.window.size {
                return Err(HarnessError::Config(format!(
                    "offset range ({lo},{hi}) outside window of size {}",
                    profile.window.size
                )));
            }
            if let Some(p) = prev_end {
                if lo <= p {
                    return Err(HarnessError::Config(
                        "offset ranges must be strictly increasing".into(),
                    ));
                }
            }
            prev_end = Some(hi);
        }
    }

    // Spans follow the window arithmetic: span k starts at k * slide.
    let slide = profile.window.slide as usize;
    let size = profile.window.size as usize;
    let span_count = if length >= size {
        (length - size) / slide + 1
    } else {
        0
    };

    for plant in &profile.plants {
        let pattern = pattern_of(plant.pattern_id).expect("validated above");
        let spans: Vec<usize> = match plant.count {
            Some(count) => {
                if count > span_count as u64 {
                    return Err(HarnessError::Config(format!(
                        "cannot plant {count} occurrences of pattern {}: only {span_count} spans",
                        plant.pattern_id
                    )));
                }
                // Spread evenly over the available spans.
                let step = span_count as f64 / count as f64;
                (0..count).map(|i| (i as f64 * step) as usize).collect()
            }
            None => (0..span_count)
                .filter(|_| rng.gen_bool(plant.density.clamp(0.0, 1.0)))
                .collect(),
        };
        for span in spans {
            let base = span * slide;
            let mut chosen: Vec<usize> = Vec::new();
            let mut ok = true;
            for &(lo, hi) in &plant.offsets {
                // A few attempts per range; collisions with other plants
                // skip the occurrence.
                let mut placed = None;
                for _ in 0..8 {
                    let off = rng.gen_range(lo..=hi) as usize;
                    let idx = base + off;
                    if idx < length && matches!(slots[idx], Slot::Noise) && !chosen.contains(&idx) {
                        placed = Some(idx);
                        break;
                    }
                }
                match placed {
                    Some(idx) => chosen.push(idx),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                summary.skipped_plants += 1;
                continue;
            }
            // Identities for any_k steps must be pairwise distinct.
            let mut seqs = Vec::new();
            let mut positive_steps = pattern
                .steps
                .iter()
                .enumerate()
                .filter(|(_, s)| !s.is_negated());
            let mut gap_bounds: Vec<(usize, usize, usize)> = Vec::new(); // (step idx, gap lo, gap hi)
            let mut prev_idx: Option<usize> = None;
            for (slot_range, &idx) in plant.offsets.iter().zip(&chosen) {
                let _ = slot_range;
                let (step_idx, step) = positive_steps.next().expect("counts validated");
                match step {
                    Step::Positive {
                        kind: StepKind::AnyK { k, .. },
                        ..
                    } => {
                        // First contributor at idx; the rest right after, on
                        // free slots.
                        let mut ids: Vec<f64> = Vec::new();
                        while ids.len() < *k as usize {
                            let cand = rng.gen_range(0..profile.identity_pool) as f64;
                            if !ids.contains(&cand) {
                                ids.push(cand);
                            }
                        }
                        slots[idx] = Slot::Planted(plant.pattern_id, step_idx, Some(ids[0]));
                        seqs.push(idx as u64);
                        let mut placed = 1usize;
                        let mut j = idx + 1;
                        while placed < *k as usize && j < length {
                            if matches!(slots[j], Slot::Noise) {
                                slots[j] =
                                    Slot::Planted(plant.pattern_id, step_idx, Some(ids[placed]));
                                seqs.push(j as u64);
                                placed += 1;
                            }
                            j += 1;
                        }
                        if placed < *k as usize {
                            ok = false;
                        }
                    }
                    _ => {
                        slots[idx] = Slot::Planted(plant.pattern_id, step_idx, None);
                        seqs.push(idx as u64);
                    }
                }
                if let Some(p) = prev_idx {
                    gap_bounds.push((step_idx, p + 1, idx));
                }
                prev_idx = Some(idx);
            }
            if !ok {
                summary.skipped_plants += 1;
                continue;
            }
            // Optionally realize negated steps inside their gaps.
            if plant.negated_prob > 0.0 && rng.gen_bool(plant.negated_prob.clamp(0.0, 1.0)) {
                for (idx, step) in pattern.steps.iter().enumerate() {
                    let Step::Negated { .. } = step else { continue };
                    // Gap before the next positive step.
                    let Some(&(_, lo, hi)) = gap_bounds.iter().find(|(s, _, _)| *s > idx) else {
                        continue;
                    };
                    let free: Vec<usize> = (lo..hi)
                        .filter(|&j| matches!(slots[j], Slot::Noise))
                        .collect();
                    if let Some(&j) = free.first() {
                        slots[j] = Slot::Planted(plant.pattern_id, idx, None);
                    }
                }
            }
            summary.planted.push(PlantedOccurrence {
                pattern_id: plant.pattern_id,
                span: span as u64,
                seqs,
            });
        }
    }

    // Types mentioned by any pattern step, for guard-failing noise.
    let mut pattern_types: Vec<TypeId> = patterns
        .iter()
        .flat_map(|p| {
            p.steps.iter().flat_map(|s| match s {
                Step::Positive { types, .. } | Step::Negated { types, .. } => types.iter().copied(),
            })
        })
        .collect();
    pattern_types.sort_unstable();
    pattern_types.dedup();
    let noise_types: Vec<TypeId> = if profile.noise_types.is_empty() {
        (0..profile.type_count).collect()
    } else {
        profile.noise_types.clone()
    };

    let mut events = Vec::with_capacity(length);
    for (i, slot) in slots.iter().enumerate() {
        let mut attrs: BTreeMap<String, f64> = BTreeMap::new();
        for (name, gen) in &profile.attrs {
            attrs.insert(name.clone(), gen.sample(&mut rng));
        }
        if !attrs.contains_key(&profile.identity_attr) {
            attrs.insert(
                profile.identity_attr.clone(),
                rng.gen_range(0..profile.identity_pool) as f64,
            );
        }
        let event_type = match slot {
            Slot::Noise => {
                if !pattern_types.is_empty()
                    && profile.pattern_type_noise > 0.0
                    && rng.gen_bool(profile.pattern_type_noise.clamp(0.0, 1.0))
                {
                    pattern_types[rng.gen_range(0..pattern_types.len())]
                } else {
                    noise_types[rng.gen_range(0..noise_types.len())]
                }
            }
            Slot::Planted(pattern_id, step_idx, identity) => {
                let pattern = pattern_of(*pattern_id).expect("validated");
                let step = &pattern.steps[*step_idx];
                let types = match step {
                    Step::Positive { types, .. } | Step::Negated { types, .. } => types,
                };
                let pick = rng.gen_range(0..types.len());
                let t = *types.iter().nth(pick).expect("non-empty type set");
                // Planted events satisfy the declared guard ranges.
                for (name, &(lo, hi)) in &profile.satisfy {
                    attrs.insert(name.clone(), rng.gen_range(lo..=hi));
                }
                if let Some(id) = identity {
                    attrs.insert(profile.identity_attr.clone(), *id);
                }
                t
            }
        };
        events.push(Event {
            seq: i as u64,
            ts: i as i64 * profile.time_step_us,
            event_type,
            attrs,
        });
    }
    summary.events = events.len() as u64;
    Ok((events, summary))
}

/// Writes the JSON-lines event file plus the sidecar of planted occurrences.
pub fn generate_stream(
    profile: &StreamProfile,
    patterns: &[PatternSpec],
    out: &Path,
    sidecar: Option<&Path>,
) -> Result<GenerateSummary> {
    let (events, summary) = generate_events(profile, patterns)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
    for event in &events {
        serde_json::to_writer(&mut file, event)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    if let Some(path) = sidecar {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for occ in &summary.planted {
            serde_json::to_writer(&mut file, occ)?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
    }
    Ok(summary)
}
