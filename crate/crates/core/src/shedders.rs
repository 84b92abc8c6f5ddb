//! Shedding strategies behind the operator's [`ShedDecider`] interface.
//!
//! `hspice` sheds per (event, PM) pairing: one utility-table lookup and one
//! comparison against the plan's threshold. The baselines are deliberately
//! lite reimplementations shaped by their one-line behavioral contracts:
//! `random` and `bl_lite` and `espice_lite` shed whole events per window,
//! `pspice_lite` sheds partial matches by completion probability with a
//! uniform processing-cost assumption. All are deterministic given a seed.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::event::{Event, TypeId};
use crate::operator::{ShedDecider, TrainingCollector};
use crate::pattern::{PatternId, PatternSpec, StateId, Step};
use crate::planner::ShedPlan;
use crate::stats::UtilityTable;
use crate::sync::Shared;

/// State-aware pairing-level shedder: drop iff overloaded and
/// `UT(type, position, state) <= u_th`.
pub struct HspiceShedder {
    table: Arc<Shared<Option<Arc<UtilityTable>>>>,
    plan: Arc<Shared<ShedPlan>>,
}

impl HspiceShedder {
    pub fn new(
        table: Arc<Shared<Option<Arc<UtilityTable>>>>,
        plan: Arc<Shared<ShedPlan>>,
    ) -> HspiceShedder {
        HspiceShedder { table, plan }
    }
}

impl ShedDecider for HspiceShedder {
    fn drop_pairing(&mut self, event: &Event, _window: u64, position: u32, state: StateId) -> bool {
        let plan = self.plan.load();
        if !plan.overloaded {
            return false;
        }
        match self.table.load().as_ref() {
            Some(table) => table.lookup(event.event_type, position, state) <= plan.u_th,
            // No table published yet: fall back to never dropping.
            None => false,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic hash to [0, 1).
fn unit_hash(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Seeded Bernoulli drop per (event, window). The probability is either
/// fixed or derived from the current plan as rho / window_size.
pub struct RandomShedder {
    seed: u64,
    fixed_p: Option<f64>,
    plan: Arc<Shared<ShedPlan>>,
}

impl RandomShedder {
    pub fn new(seed: u64, fixed_p: Option<f64>, plan: Arc<Shared<ShedPlan>>) -> RandomShedder {
        RandomShedder {
            seed,
            fixed_p,
            plan,
        }
    }
}

impl ShedDecider for RandomShedder {
    fn drop_event(&mut self, event: &Event, window_id: u64, _position: u32) -> bool {
        let plan = self.plan.load();
        if !plan.overloaded {
            return false;
        }
        let p = self
            .fixed_p
            .unwrap_or_else(|| f64::from(plan.rho) / f64::from(plan.drop_interval.max(1)));
        unit_hash(self.seed, event.seq, window_id) < p
    }
}

/// Window-level utility model: per (type, position bin) the probability an
/// event instance there takes part in a completed match, plus thresholds
/// precomputed for every per-window drop amount.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EspiceModel {
    pub type_count: u16,
    pub window_size: u32,
    pub bin_size: u32,
    /// (type * bins + bin) -> utility.
    pub utility: Vec<f32>,
    /// rho -> threshold; index 0 never drops.
    pub threshold_by_rho: Vec<f32>,
}

impl EspiceModel {
    fn bins(&self) -> u32 {
        self.window_size.div_ceil(self.bin_size)
    }

    #[inline]
    pub fn utility_of(&self, event_type: TypeId, position: u32) -> f32 {
        let bins = self.bins();
        let bin = (position / self.bin_size).min(bins - 1);
        self.utility[event_type as usize * bins as usize + bin as usize]
    }
}

/// Builds the window-level model from training data.
pub fn build_espice_model(
    training: &TrainingCollector,
    type_count: u16,
    window_size: u32,
    bin_size: u32,
) -> Result<EspiceModel> {
    let n_windows = training.event_tallies.len();
    if n_windows == 0 {
        return Err(CoreError::NotReady { have: 0, need: 1 });
    }
    let bin_size = bin_size.max(1);
    let bins = window_size.div_ceil(bin_size) as usize;
    let mut num = vec![0u64; type_count as usize * bins];
    let mut den = vec![0u64; type_count as usize * bins];
    for (&(t, pos), &(contributed, seen)) in &training.event_outcomes {
        let bin = ((pos / bin_size) as usize).min(bins - 1);
        let idx = t as usize * bins + bin;
        num[idx] += contributed;
        den[idx] += seen;
    }
    let utility: Vec<f32> = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| {
            if d > 0 {
                (n as f64 / d as f64) as f32
            } else {
                0.0
            }
        })
        .collect();

    // Mean events per window per cell.
    let mut occ = vec![0f64; type_count as usize * bins];
    for tally in &training.event_tallies {
        for (&(t, pos), &count) in &tally.events {
            let bin = ((pos / bin_size) as usize).min(bins - 1);
            occ[t as usize * bins + bin] += f64::from(count);
        }
    }
    for o in occ.iter_mut() {
        *o /= n_windows as f64;
    }

    let mut cells: Vec<(f32, f64)> = utility
        .iter()
        .zip(&occ)
        .filter(|(_, &o)| o > 0.0)
        .map(|(&u, &o)| (u, o))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut threshold_by_rho = Vec::with_capacity(window_size as usize + 1);
    // Finite sentinels keep the array JSON-serializable: utilities are
    // non-negative, so MIN never drops and MAX always drops.
    threshold_by_rho.push(f32::MIN);
    let mut cum = 0.0;
    let mut iter = cells.iter();
    let mut current = iter.next().copied();
    if let Some((_, o)) = current {
        cum = o;
    }
    for rho in 1..=window_size {
        let target = f64::from(rho) - 0.5;
        while cum < target {
            match iter.next() {
                Some(&(u, o)) => {
                    current = Some((u, o));
                    cum += o;
                }
                None => {
                    current = None;
                    break;
                }
            }
        }
        threshold_by_rho.push(match current {
            Some((u, _)) => u,
            // Budget beyond everything seen in training: drop all.
            None => f32::MAX,
        });
    }
    Ok(EspiceModel {
        type_count,
        window_size,
        bin_size,
        utility,
        threshold_by_rho,
    })
}

/// Window-level shedder over (type, position) utilities.
pub struct EspiceLiteShedder {
    model: EspiceModel,
    plan: Arc<Shared<ShedPlan>>,
}

impl EspiceLiteShedder {
    pub fn new(model: EspiceModel, plan: Arc<Shared<ShedPlan>>) -> EspiceLiteShedder {
        EspiceLiteShedder { model, plan }
    }
}

impl ShedDecider for EspiceLiteShedder {
    fn drop_event(&mut self, event: &Event, _window: u64, position: u32) -> bool {
        let plan = self.plan.load();
        if !plan.overloaded {
            return false;
        }
        let idx = (plan.rho as usize).min(self.model.threshold_by_rho.len() - 1);
        self.model.utility_of(event.event_type, position) <= self.model.threshold_by_rho[idx]
    }
}

/// Per-type utility model: utility grows with a type's repetition in the
/// pattern set and its frequency in training windows; instances within a
/// type are sampled uniformly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlModel {
    /// type -> rank in ascending utility order.
    pub rank_of_type: Vec<u32>,
    /// rho -> (fully dropped ranks, sampling fraction for the marginal rank).
    pub per_rho: Vec<(u32, f64)>,
    pub type_utility: Vec<f64>,
}

/// Builds the per-type model from the pattern set and training tallies.
pub fn build_bl_model(
    patterns: &[PatternSpec],
    training: &TrainingCollector,
    type_count: u16,
    window_size: u32,
) -> Result<BlModel> {
    let n_windows = training.event_tallies.len();
    if n_windows == 0 {
        return Err(CoreError::NotReady { have: 0, need: 1 });
    }
    let mut reps = vec![0u32; type_count as usize];
    for p in patterns {
        for step in &p.steps {
            let types = match step {
                Step::Positive { types, .. } | Step::Negated { types, .. } => types,
            };
            for t in types {
                if (*t as usize) < reps.len() {
                    reps[*t as usize] += 1;
                }
            }
        }
    }
    let mut freq = vec![0f64; type_count as usize];
    for tally in &training.event_tallies {
        for (&(t, _), &count) in &tally.events {
            freq[t as usize] += f64::from(count);
        }
    }
    for f in freq.iter_mut() {
        *f /= n_windows as f64;
    }
    let type_utility: Vec<f64> = reps
        .iter()
        .zip(&freq)
        .map(|(&r, &f)| f64::from(r) * f)
        .collect();

    let mut order: Vec<u16> = (0..type_count).collect();
    order.sort_by(|&a, &b| {
        type_utility[a as usize]
            .total_cmp(&type_utility[b as usize])
            .then(a.cmp(&b))
    });
    let mut rank_of_type = vec![0u32; type_count as usize];
    for (rank, &t) in order.iter().enumerate() {
        rank_of_type[t as usize] = rank as u32;
    }

    let mut per_rho = Vec::with_capacity(window_size as usize + 1);
    per_rho.push((0u32, 0.0));
    for rho in 1..=window_size {
        let mut remaining = f64::from(rho);
        let mut cut = 0u32;
        let mut frac = 0.0;
        for &t in &order {
            let f = freq[t as usize];
            if f <= 0.0 {
                cut += 1;
                continue;
            }
            if remaining >= f {
                remaining -= f;
                cut += 1;
            } else {
                frac = remaining / f;
                break;
            }
        }
        per_rho.push((cut, frac));
    }
    Ok(BlModel {
        rank_of_type,
        per_rho,
        type_utility,
    })
}

/// Window-level shedder ranking whole event types.
pub struct BlLiteShedder {
    model: BlModel,
    seed: u64,
    plan: Arc<Shared<ShedPlan>>,
}

impl BlLiteShedder {
    pub fn new(model: BlModel, seed: u64, plan: Arc<Shared<ShedPlan>>) -> BlLiteShedder {
        BlLiteShedder { model, seed, plan }
    }
}

impl ShedDecider for BlLiteShedder {
    fn drop_event(&mut self, event: &Event, window_id: u64, _position: u32) -> bool {
        let plan = self.plan.load();
        if !plan.overloaded {
            return false;
        }
        let idx = (plan.rho as usize).min(self.model.per_rho.len() - 1);
        let (cut, frac) = self.model.per_rho[idx];
        let rank = self.model.rank_of_type[event.event_type as usize];
        if rank < cut {
            return true;
        }
        rank == cut && unit_hash(self.seed, event.seq, window_id) < frac
    }
}

/// PM-level completion-probability model with uniform processing cost:
/// dropping a PM at position p is assumed to save the window remainder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PspiceModel {
    pub window_size: u32,
    pub bin_size: u32,
    /// (state, bin) -> completion probability.
    #[serde(with = "crate::serde_util")]
    pub completion: BTreeMap<(StateId, u32), f32>,
    /// floor(rho_v) -> completion-probability threshold.
    pub threshold_by_rho_v: Vec<f32>,
}

/// Builds the PM-level model from PM-entry outcomes.
pub fn build_pspice_model(
    training: &TrainingCollector,
    window_size: u32,
    bin_size: u32,
) -> Result<PspiceModel> {
    let n_windows = training.event_tallies.len();
    if n_windows == 0 {
        return Err(CoreError::NotReady { have: 0, need: 1 });
    }
    let bin_size = bin_size.max(1);
    let bins = window_size.div_ceil(bin_size);
    // (state, bin) -> (completed, entered, saved pairings if dropped).
    let mut cells: BTreeMap<(StateId, u32), (u64, u64, f64)> = BTreeMap::new();
    for (&(state, pos), &(completed, entered)) in &training.pm_entries {
        let bin = (pos / bin_size).min(bins - 1);
        let cell = cells.entry((state, bin)).or_insert((0, 0, 0.0));
        cell.0 += completed;
        cell.1 += entered;
        cell.2 += entered as f64 * f64::from(window_size.saturating_sub(pos));
    }
    let completion: BTreeMap<(StateId, u32), f32> = cells
        .iter()
        .map(|(&key, &(c, e, _))| {
            (
                key,
                if e > 0 {
                    (c as f64 / e as f64) as f32
                } else {
                    0.0
                },
            )
        })
        .collect();

    let mut ranked: Vec<(f32, f64)> = cells
        .iter()
        .map(|(&key, &(_, _, saved))| (completion[&key], saved / n_windows as f64))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = ranked.iter().map(|(_, s)| s).sum();
    let len = total.ceil() as usize + 1;
    let mut threshold_by_rho_v = Vec::with_capacity(len);
    threshold_by_rho_v.push(f32::MIN);
    let mut cum = 0.0;
    let mut iter = ranked.iter();
    let mut current = iter.next().copied();
    if let Some((_, s)) = current {
        cum = s;
    }
    for i in 1..len {
        let target = i as f64 - 0.5;
        while cum < target {
            match iter.next() {
                Some(&(u, s)) => {
                    current = Some((u, s));
                    cum += s;
                }
                None => {
                    current = None;
                    break;
                }
            }
        }
        threshold_by_rho_v.push(match current {
            Some((u, _)) => u,
            None => f32::MAX,
        });
    }
    Ok(PspiceModel {
        window_size,
        bin_size,
        completion,
        threshold_by_rho_v,
    })
}

/// PM-level shedder: drops advancing PMs whose completion probability is at
/// or below the budgeted threshold. Initial-state PMs are never offered.
pub struct PspiceLiteShedder {
    model: PspiceModel,
    plan: Arc<Shared<ShedPlan>>,
}

impl PspiceLiteShedder {
    pub fn new(model: PspiceModel, plan: Arc<Shared<ShedPlan>>) -> PspiceLiteShedder {
        PspiceLiteShedder { model, plan }
    }
}

impl ShedDecider for PspiceLiteShedder {
    fn drop_pm(&mut self, _pattern: PatternId, entered_state: StateId, position: u32) -> bool {
        let plan = self.plan.load();
        if !plan.overloaded || plan.rho_v <= 0.0 {
            return false;
        }
        let bins = self.model.window_size.div_ceil(self.model.bin_size);
        let bin = (position / self.model.bin_size).min(bins - 1);
        let prob = self
            .model
            .completion
            .get(&(entered_state, bin))
            .copied()
            .unwrap_or(0.0);
        let idx = (plan.rho_v.floor() as usize).min(self.model.threshold_by_rho_v.len() - 1);
        prob <= self.model.threshold_by_rho_v[idx]
    }
}

/// Shedder selection from experiment config:
/// `{"shedder": "hspice", "params": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShedderConfig {
    pub shedder: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl Default for ShedderConfig {
    fn default() -> Self {
        ShedderConfig {
            shedder: "never".into(),
            params: serde_json::Value::Null,
        }
    }
}

/// Granularity a shedder's drop ratio is accounted at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropAccounting {
    /// (event, PM) pairings.
    Pairings,
    /// (event, window) assignments.
    EventWindows,
}

/// Everything needed to instantiate any shedder.
pub struct ShedderAssets {
    pub plan: Arc<Shared<ShedPlan>>,
    pub table: Arc<Shared<Option<Arc<UtilityTable>>>>,
    pub espice: Option<EspiceModel>,
    pub bl: Option<BlModel>,
    pub pspice: Option<PspiceModel>,
    pub seed: u64,
}

/// Any configured shedder behind one dispatchable type.
pub enum AnyShedder {
    Never(crate::operator::NeverDrop),
    Hspice(HspiceShedder),
    Random(RandomShedder),
    Espice(EspiceLiteShedder),
    Bl(BlLiteShedder),
    Pspice(PspiceLiteShedder),
}

impl AnyShedder {
    pub fn accounting(&self) -> DropAccounting {
        match self {
            AnyShedder::Never(_) | AnyShedder::Hspice(_) | AnyShedder::Pspice(_) => {
                DropAccounting::Pairings
            }
            AnyShedder::Random(_) | AnyShedder::Espice(_) | AnyShedder::Bl(_) => {
                DropAccounting::EventWindows
            }
        }
    }
}

impl ShedDecider for AnyShedder {
    fn drop_event(&mut self, event: &Event, window_id: u64, position: u32) -> bool {
        match self {
            AnyShedder::Random(s) => s.drop_event(event, window_id, position),
            AnyShedder::Espice(s) => s.drop_event(event, window_id, position),
            AnyShedder::Bl(s) => s.drop_event(event, window_id, position),
            _ => false,
        }
    }

    fn drop_pairing(
        &mut self,
        event: &Event,
        window_id: u64,
        position: u32,
        state: StateId,
    ) -> bool {
        match self {
            AnyShedder::Hspice(s) => s.drop_pairing(event, window_id, position, state),
            _ => false,
        }
    }

    fn drop_pm(&mut self, pattern: PatternId, entered_state: StateId, position: u32) -> bool {
        match self {
            AnyShedder::Pspice(s) => s.drop_pm(pattern, entered_state, position),
            _ => false,
        }
    }
}

/// Instantiates the configured shedder. Unknown names are a configuration
/// error; baselines require their trained models.
pub fn build_shedder(config: &ShedderConfig, assets: &ShedderAssets) -> Result<AnyShedder> {
    let missing =
        |what: &str| CoreError::ConfigMismatch(format!("{what} model required but not trained"));
    match config.shedder.as_str() {
        "never" => Ok(AnyShedder::Never(crate::operator::NeverDrop)),
        "hspice" => Ok(AnyShedder::Hspice(HspiceShedder::new(
            assets.table.clone(),
            assets.plan.clone(),
        ))),
        "random" => {
            let fixed_p = config.params.get("p").and_then(|v| v.as_f64());
            Ok(AnyShedder::Random(RandomShedder::new(
                assets.seed,
                fixed_p,
                assets.plan.clone(),
            )))
        }
        "espice_lite" => Ok(AnyShedder::Espice(EspiceLiteShedder::new(
            assets
                .espice
                .clone()
                .ok_or_else(|| missing("espice_lite"))?,
            assets.plan.clone(),
        ))),
        "bl_lite" => Ok(AnyShedder::Bl(BlLiteShedder::new(
            assets.bl.clone().ok_or_else(|| missing("bl_lite"))?,
            assets.seed,
            assets.plan.clone(),
        ))),
        "pspice_lite" => Ok(AnyShedder::Pspice(PspiceLiteShedder::new(
            assets
                .pspice
                .clone()
                .ok_or_else(|| missing("pspice_lite"))?,
            assets.plan.clone(),
        ))),
        other => Err(CoreError::ConfigMismatch(format!(
            "unknown shedder kind '{other}'"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{WindowEventTally, WindowTally};
    use crate::stats::fixtures::{six_pm_buffer, two_state_space};
    use crate::stats::TableConfig;
    use std::collections::BTreeMap as Map;

    fn ev(seq: u64, event_type: TypeId) -> Event {
        Event {
            seq,
            ts: seq as i64,
            event_type,
            attrs: Map::new(),
        }
    }

    fn plan_cell(plan: ShedPlan) -> Arc<Shared<ShedPlan>> {
        Arc::new(Shared::new(plan))
    }

    fn overload(rho: u32, ws: u32, rho_v: f64, u_th: f32) -> ShedPlan {
        ShedPlan {
            overloaded: true,
            drop_interval: ws,
            rho,
            rho_v,
            u_th,
        }
    }

    fn fixture_table() -> Arc<Shared<Option<Arc<UtilityTable>>>> {
        let buf = six_pm_buffer();
        let space = two_state_space(1.0);
        let config = TableConfig::new(2, 5).with_min_observations(0);
        let table = UtilityTable::build(&buf, &space, &config).unwrap();
        Arc::new(Shared::new(Some(Arc::new(table))))
    }

    #[test]
    fn hspice_drop_is_threshold_comparison() {
        let table = fixture_table();
        // Not overloaded: never drop.
        let idle = plan_cell(ShedPlan::idle(5));
        let mut s = HspiceShedder::new(table.clone(), idle);
        assert!(!s.drop_pairing(&ev(0, 0), 0, 2, 0));

        // Overloaded with u_th = 0.25: the 0.25 cell drops (<=), 0.40 stays.
        let plan = plan_cell(overload(2, 5, 4.0, 0.25));
        let mut s = HspiceShedder::new(table.clone(), plan);
        assert!(s.drop_pairing(&ev(0, 0), 0, 2, 0)); // cell = 0.25
        assert!(!s.drop_pairing(&ev(0, 1), 0, 4, 1)); // cell = 0.40
        assert!(s.drop_pairing(&ev(0, 1), 0, 0, 0)); // zero cell

        // No table published: fall back to never dropping.
        let empty: Arc<Shared<Option<Arc<UtilityTable>>>> = Arc::new(Shared::new(None));
        let plan = plan_cell(overload(2, 5, 4.0, 0.25));
        let mut s = HspiceShedder::new(empty, plan);
        assert!(!s.drop_pairing(&ev(0, 0), 0, 2, 0));
    }

    #[test]
    fn random_extremes_and_determinism() {
        let plan = plan_cell(overload(5, 10, 0.0, 0.0));
        let mut all = RandomShedder::new(7, Some(1.0), plan.clone());
        let mut none = RandomShedder::new(7, Some(0.0), plan.clone());
        for i in 0..50 {
            assert!(all.drop_event(&ev(i, 0), i % 3, 0));
            assert!(!none.drop_event(&ev(i, 0), i % 3, 0));
        }
        // Same seed, same decisions; plan-derived p = rho/ws = 0.5.
        let mut a = RandomShedder::new(42, None, plan.clone());
        let mut b = RandomShedder::new(42, None, plan.clone());
        let da: Vec<bool> = (0..200).map(|i| a.drop_event(&ev(i, 0), 0, 0)).collect();
        let db: Vec<bool> = (0..200).map(|i| b.drop_event(&ev(i, 0), 0, 0)).collect();
        assert_eq!(da, db);
        let ratio = da.iter().filter(|&&d| d).count() as f64 / 200.0;
        assert!((ratio - 0.5).abs() < 0.15, "ratio={ratio}");
        // Not overloaded: nothing drops even with p = 1.
        let idle = plan_cell(ShedPlan::idle(10));
        let mut s = RandomShedder::new(7, Some(1.0), idle);
        assert!(!s.drop_event(&ev(0, 0), 0, 0));
    }

    fn tiny_training() -> TrainingCollector {
        // One kind of window: A at position 0 (utility 1/2), B at position 1
        // (utility 0). Two training windows.
        let mut t = TrainingCollector::default();
        for _ in 0..2 {
            let mut events = Map::new();
            events.insert((0u16, 0u32), 1u32);
            events.insert((1u16, 1u32), 1u32);
            t.event_tallies.push(WindowEventTally { events });
            t.window_tallies.push(WindowTally::default());
        }
        t.event_outcomes.insert((0, 0), (1, 2));
        t.event_outcomes.insert((1, 1), (0, 2));
        t
    }

    #[test]
    fn espice_drops_lowest_window_utility_first() {
        let training = tiny_training();
        let model = build_espice_model(&training, 2, 2, 1).unwrap();
        assert_eq!(model.utility_of(0, 0), 0.5);
        assert_eq!(model.utility_of(1, 1), 0.0);
        let plan = plan_cell(overload(1, 2, 0.0, 0.0));
        let mut s = EspiceLiteShedder::new(model, plan);
        // rho = 1: only the zero-utility (B, 1) cell is at or below the
        // threshold.
        assert!(s.drop_event(&ev(0, 1), 0, 1));
        assert!(!s.drop_event(&ev(0, 0), 0, 0));
    }

    #[test]
    fn bl_ranks_types_and_samples_within_marginal() {
        use crate::pattern::{SelectionPolicy, StepKind};
        // Pattern uses type 0 twice, type 1 once; type 2 is noise.
        let patterns = vec![PatternSpec {
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
                    kind: StepKind::Single,
                },
                Step::Positive {
                    types: [0].into_iter().collect(),
                    guard: None,
                    kind: StepKind::Single,
                },
            ],
        }];
        let mut training = TrainingCollector::default();
        let mut events = Map::new();
        events.insert((0u16, 0u32), 1u32);
        events.insert((1u16, 1u32), 1u32);
        events.insert((2u16, 2u32), 2u32);
        training.event_tallies.push(WindowEventTally { events });
        training.window_tallies.push(WindowTally::default());
        let model = build_bl_model(&patterns, &training, 3, 4).unwrap();
        // Noise type 2 has zero pattern repetition: lowest utility.
        assert_eq!(model.rank_of_type[2], 0);
        let plan = plan_cell(overload(2, 4, 0.0, 0.0));
        let mut s = BlLiteShedder::new(model, 3, plan);
        // rho=2 equals the noise type's per-window frequency: type 2 drops
        // fully, others stay.
        assert!(s.drop_event(&ev(0, 2), 0, 2));
        assert!(!s.drop_event(&ev(0, 0), 0, 0));
        assert!(!s.drop_event(&ev(0, 1), 0, 1));
    }

    #[test]
    fn pspice_drops_low_completion_pms() {
        let mut training = TrainingCollector::default();
        training.event_tallies.push(WindowEventTally::default());
        training.window_tallies.push(WindowTally::default());
        // State 1 entries at position 1 rarely complete; state 2 entries at
        // position 2 always do.
        training.pm_entries.insert((1, 1), (0, 4));
        training.pm_entries.insert((2, 2), (3, 3));
        let model = build_pspice_model(&training, 4, 1).unwrap();
        assert_eq!(model.completion[&(1, 1)], 0.0);
        assert_eq!(model.completion[&(2, 2)], 1.0);
        // Budget covers the low-probability cell only: 4 entries x 3 saved.
        let plan = plan_cell(overload(2, 4, 6.0, 0.0));
        let mut s = PspiceLiteShedder::new(model, plan);
        assert!(s.drop_pm(1, 1, 1));
        assert!(!s.drop_pm(1, 2, 2));
    }

    #[test]
    fn unknown_shedder_kind_is_a_configuration_error() {
        let assets = ShedderAssets {
            plan: plan_cell(ShedPlan::idle(5)),
            table: Arc::new(Shared::new(None)),
            espice: None,
            bl: None,
            pspice: None,
            seed: 1,
        };
        let bad = ShedderConfig {
            shedder: "bogus".into(),
            params: serde_json::Value::Null,
        };
        assert!(build_shedder(&bad, &assets).is_err());
        let ok = ShedderConfig {
            shedder: "hspice".into(),
            params: serde_json::Value::Null,
        };
        assert!(build_shedder(&ok, &assets).is_ok());
        // Baselines without trained models are configuration errors.
        let espice = ShedderConfig {
            shedder: "espice_lite".into(),
            params: serde_json::Value::Null,
        };
        assert!(build_shedder(&espice, &assets).is_err());
        // A fixed Bernoulli probability comes through params.
        assets.plan.store(overload(0, 10, 0.0, 0.0));
        let fixed: ShedderConfig =
            serde_json::from_str(r#"{"shedder":"random","params":{"p":1.0}}"#).unwrap();
        let mut s = build_shedder(&fixed, &assets).unwrap();
        assert!(s.drop_event(&ev(0, 0), 0, 0));
    }
}
