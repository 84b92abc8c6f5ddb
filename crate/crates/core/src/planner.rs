//! Overload detection and shed-plan construction.
//!
//! Per control tick the planner decides whether the operator is overloaded
//! (queuing latency at or past the safety fraction of the latency bound while
//! arrivals outpace service), converts the overload into a per-window drop
//! amount, maps that through the predicted virtual window into a per-window
//! pairing budget, and resolves the budget to a utility threshold via the
//! precomputed threshold array. Plans are published atomically; the
//! operator's hot path only reads.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::event::TypeId;
use crate::operator::WindowTally;
use crate::pattern::StateId;
use crate::stats::UtilityTable;
use crate::sync::Shared;

/// Events to drop per window so service keeps up with arrivals:
/// `(1 - throughput/rate) * window_size`, rounded half-up, floored at zero.
pub fn compute_drop_amount(rate: f64, throughput: f64, window_size: u32) -> Result<u32> {
    if rate <= 0.0 || throughput <= 0.0 || rate.is_nan() || throughput.is_nan() {
        return Err(CoreError::InvalidArgument(format!(
            "rate and throughput must be positive (rate={rate}, mu={throughput})"
        )));
    }
    if window_size < 1 {
        return Err(CoreError::InvalidArgument(
            "window size must be at least 1".into(),
        ));
    }
    let raw = (1.0 - throughput / rate) * f64::from(window_size);
    if raw <= 0.0 {
        return Ok(0);
    }
    Ok(((raw + 0.5).floor() as u32).min(window_size))
}

/// Predicted per-window multiset of (event type, position bin, PM state)
/// pairings, averaged over the training windows. `ws_v` counts pairings, not
/// events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirtualWindow {
    /// (type, bin, state) -> mean occurrences per window (> 0).
    #[serde(with = "crate::serde_util")]
    pub occurrences: BTreeMap<(TypeId, u32, StateId), f64>,
    pub ws_v: f64,
    pub avg_o: f64,
    pub window_size: u32,
    pub bin_size: u32,
}

/// Averages per-window pairing tallies into the virtual window.
pub fn build_virtual_window(
    tallies: &[WindowTally],
    window_size: u32,
    bin_size: u32,
) -> Result<VirtualWindow> {
    if tallies.is_empty() {
        return Err(CoreError::NotReady { have: 0, need: 1 });
    }
    let bin_size = bin_size.max(1);
    let bins = window_size.div_ceil(bin_size);
    let n = tallies.len() as f64;
    let mut occurrences: BTreeMap<(TypeId, u32, StateId), f64> = BTreeMap::new();
    for tally in tallies {
        for (&(t, pos, s), &count) in &tally.pairings {
            let bin = (pos / bin_size).min(bins - 1);
            *occurrences.entry((t, bin, s)).or_insert(0.0) += f64::from(count);
        }
    }
    for v in occurrences.values_mut() {
        *v /= n;
    }
    occurrences.retain(|_, v| *v > 0.0);
    let ws_v: f64 = occurrences.values().sum();
    Ok(VirtualWindow {
        occurrences,
        ws_v,
        avg_o: ws_v / f64::from(window_size),
        window_size,
        bin_size,
    })
}

/// Non-decreasing utility thresholds: entry `i` is the smallest utility whose
/// accumulated virtual-window occurrences cover `i + 1` pairings (fractional
/// occurrences rounded to nearest when discretizing).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ThresholdArray {
    pub utilities: Vec<f32>,
}

impl ThresholdArray {
    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.utilities.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Builds the threshold array by sorting the virtual window's utilities
/// ascending and accumulating their occurrences.
pub fn build_threshold_array(vw: &VirtualWindow, table: &UtilityTable) -> Result<ThresholdArray> {
    if vw.occurrences.is_empty() {
        return Err(CoreError::NotReady { have: 0, need: 1 });
    }
    if table.window_size() != vw.window_size || table.bin_size() != vw.bin_size {
        return Err(CoreError::ConfigMismatch(format!(
            "virtual window (ws={}, bs={}) does not match utility table (ws={}, bs={})",
            vw.window_size,
            vw.bin_size,
            table.window_size(),
            table.bin_size()
        )));
    }
    // Distinct utilities ascending with their total occurrences.
    let mut by_utility: BTreeMap<ordered::F32, f64> = BTreeMap::new();
    for (&(t, bin, s), &occ) in &vw.occurrences {
        let u = table.lookup(t, bin * vw.bin_size, s);
        *by_utility.entry(ordered::F32(u)).or_insert(0.0) += occ;
    }
    let len = vw.ws_v.ceil() as usize;
    let mut utilities = Vec::with_capacity(len);
    let mut iter = by_utility.iter();
    let mut current = iter.next().map(|(u, o)| (u.0, *o));
    let mut cum = current.map_or(0.0, |(_, o)| o);
    let max_u = by_utility.keys().last().map_or(0.0, |u| u.0);
    for i in 0..len {
        let target = i as f64 + 0.5;
        while cum < target {
            match iter.next() {
                Some((u, o)) => {
                    current = Some((u.0, *o));
                    cum += *o;
                }
                None => {
                    current = None;
                    break;
                }
            }
        }
        utilities.push(current.map_or(max_u, |(u, _)| u));
    }
    let arr = ThresholdArray { utilities };
    debug_assert!(arr.is_non_decreasing());
    Ok(arr)
}

/// Resolves a virtual-window drop budget to the utility threshold. Zero
/// budget yields the never-drop sentinel; budgets at or past the array length
/// yield the drop-everything sentinel.
pub fn threshold_for(arr: &ThresholdArray, rho_v: f64) -> f32 {
    if rho_v <= 0.0 {
        return f32::NEG_INFINITY;
    }
    let idx = rho_v.floor() as usize;
    if idx >= arr.utilities.len() {
        return f32::INFINITY;
    }
    arr.utilities[idx]
}

/// Per-drop-interval shedding decision bundle. The drop interval equals the
/// window size; the plan is refreshed every control tick regardless.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShedPlan {
    pub overloaded: bool,
    pub drop_interval: u32,
    /// Events to drop per window.
    pub rho: u32,
    /// Pairings to drop per virtual window.
    pub rho_v: f64,
    /// Pairings with utility <= u_th are shed.
    pub u_th: f32,
}

impl ShedPlan {
    pub fn idle(window_size: u32) -> ShedPlan {
        ShedPlan {
            overloaded: false,
            drop_interval: window_size,
            rho: 0,
            rho_v: 0.0,
            u_th: f32::NEG_INFINITY,
        }
    }
}

impl Default for ShedPlan {
    fn default() -> Self {
        ShedPlan::idle(1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ControlConfig {
    pub latency_bound_ns: u64,
    /// Shedding engages at `safety_fraction * latency_bound`.
    pub safety_fraction: f64,
    pub window_size: u32,
}

/// One pure control decision from current estimates.
pub fn control_tick(
    queue_latency_ns: u64,
    rate: f64,
    throughput: f64,
    avg_o: f64,
    ws_v: f64,
    thresholds: &ThresholdArray,
    cfg: &ControlConfig,
) -> ShedPlan {
    let safety_ns = cfg.safety_fraction * cfg.latency_bound_ns as f64;
    let pressured = (queue_latency_ns as f64) >= safety_ns && rate > throughput;
    let rho = if pressured {
        compute_drop_amount(rate, throughput, cfg.window_size).unwrap_or(0)
    } else {
        0
    };
    if rho == 0 {
        return ShedPlan::idle(cfg.window_size);
    }
    let rho_v = (f64::from(rho) * avg_o).min(ws_v);
    ShedPlan {
        overloaded: true,
        drop_interval: cfg.window_size,
        rho,
        rho_v,
        u_th: threshold_for(thresholds, rho_v),
    }
}

/// Periodic monitor: estimates the arrival rate (EWMA seeded on the first
/// sample) and queue latency, then publishes a fresh plan. Missing estimates
/// retain the previous plan.
pub struct OverloadController {
    cfg: ControlConfig,
    half_life_ns: f64,
    throughput: f64,
    avg_o: f64,
    ws_v: f64,
    thresholds: ThresholdArray,
    rate_ewma: Option<f64>,
    last_tick_ns: Option<u64>,
    plan: Arc<Shared<ShedPlan>>,
}

impl OverloadController {
    pub fn new(
        cfg: ControlConfig,
        half_life_ns: f64,
        throughput: f64,
        avg_o: f64,
        ws_v: f64,
        thresholds: ThresholdArray,
        plan: Arc<Shared<ShedPlan>>,
    ) -> OverloadController {
        plan.store(ShedPlan::idle(cfg.window_size));
        OverloadController {
            cfg,
            half_life_ns,
            throughput,
            avg_o,
            ws_v,
            thresholds,
            rate_ewma: None,
            last_tick_ns: None,
            plan,
        }
    }

    pub fn plan_cell(&self) -> Arc<Shared<ShedPlan>> {
        self.plan.clone()
    }

    pub fn rate_estimate(&self) -> Option<f64> {
        self.rate_ewma
    }

    /// Called every monitoring period with the arrivals observed since the
    /// last tick and the current queue depth.
    pub fn tick(&mut self, now_ns: u64, arrivals: u64, queue_len: usize) -> ShedPlan {
        let dt_ns = match self.last_tick_ns {
            Some(prev) if now_ns > prev => (now_ns - prev) as f64,
            Some(_) => return *self.plan.load(),
            None => {
                self.last_tick_ns = Some(now_ns);
                // First tick: seed the rate estimate only.
                if arrivals > 0 && now_ns > 0 {
                    self.rate_ewma = Some(arrivals as f64 / (now_ns as f64 / 1e9));
                }
                return *self.plan.load();
            }
        };
        self.last_tick_ns = Some(now_ns);
        let sample = arrivals as f64 / (dt_ns / 1e9);
        let rate = match self.rate_ewma {
            None => sample,
            Some(prev) => {
                let decay = 0.5f64.powf(dt_ns / self.half_life_ns.max(1.0));
                prev * decay + sample * (1.0 - decay)
            }
        };
        self.rate_ewma = Some(rate);

        if self.throughput <= 0.0 || self.throughput.is_nan() {
            return *self.plan.load();
        }
        // Queue delay the next arrival would see at the unshed service rate.
        let latency_ns = (queue_len as f64 / self.throughput * 1e9) as u64;
        let plan = control_tick(
            latency_ns,
            rate,
            self.throughput,
            self.avg_o,
            self.ws_v,
            &self.thresholds,
            &self.cfg,
        );
        self.plan.store(plan);
        plan
    }
}

mod ordered {
    /// Total-order wrapper for finite f32 keys.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct F32(pub f32);

    impl Eq for F32 {}

    impl PartialOrd for F32 {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for F32 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ExportedTable;

    #[test]
    fn drop_amount_formula() {
        // No overload when rate does not exceed throughput.
        assert_eq!(compute_drop_amount(100.0, 100.0, 10).unwrap(), 0);
        assert_eq!(compute_drop_amount(90.0, 100.0, 10).unwrap(), 0);
        // Direct evaluations.
        assert_eq!(compute_drop_amount(200.0, 100.0, 10).unwrap(), 5);
        assert_eq!(compute_drop_amount(125.0, 100.0, 10).unwrap(), 2);
        // Half rounds up.
        assert_eq!(compute_drop_amount(200.0, 100.0, 5).unwrap(), 3);
        // Bad arguments.
        assert!(compute_drop_amount(0.0, 100.0, 10).is_err());
        assert!(compute_drop_amount(100.0, 0.0, 10).is_err());
        assert!(compute_drop_amount(100.0, 50.0, 0).is_err());
    }

    #[test]
    fn drop_amount_monotone_in_rate_and_antitone_in_throughput() {
        let mut prev = 0;
        for rate in [100.0, 120.0, 140.0, 160.0, 180.0, 200.0] {
            let rho = compute_drop_amount(rate, 100.0, 18).unwrap();
            assert!(rho >= prev);
            prev = rho;
        }
        let mut prev = u32::MAX;
        for mu in [50.0, 75.0, 100.0, 150.0] {
            let rho = compute_drop_amount(150.0, mu, 18).unwrap();
            assert!(rho <= prev);
            prev = rho;
        }
    }

    fn tally(entries: &[((TypeId, u32, StateId), u32)]) -> WindowTally {
        WindowTally {
            pairings: entries.iter().copied().collect(),
        }
    }

    #[test]
    fn virtual_window_examples() {
        // Every event processed with exactly 2 PMs in every window, ws=5.
        let per_window = tally(&[
            ((0, 0, 0), 2),
            ((0, 1, 0), 2),
            ((0, 2, 0), 2),
            ((0, 3, 0), 2),
            ((0, 4, 0), 2),
        ]);
        let vw = build_virtual_window(&[per_window.clone(), per_window], 5, 1).unwrap();
        assert_eq!(vw.ws_v, 10.0);
        assert_eq!(vw.avg_o, 2.0);

        // Single window, single PM touching all five events.
        let w = tally(&[
            ((0, 0, 0), 1),
            ((0, 1, 0), 1),
            ((0, 2, 0), 1),
            ((0, 3, 0), 1),
            ((0, 4, 0), 1),
        ]);
        let vw = build_virtual_window(&[w], 5, 1).unwrap();
        assert_eq!(vw.occurrences.len(), 5);
        assert!(vw.occurrences.values().all(|&o| o == 1.0));
        assert_eq!(vw.ws_v, 5.0);
        assert_eq!(vw.avg_o, 1.0);

        // Mean across windows: occurrences {4, 2} -> 3.
        let w1 = tally(&[((0, 0, 0), 4)]);
        let w2 = tally(&[((0, 0, 0), 2)]);
        let vw = build_virtual_window(&[w1, w2], 5, 1).unwrap();
        assert_eq!(vw.occurrences[&(0, 0, 0)], 3.0);

        assert!(build_virtual_window(&[], 5, 1).is_err());
    }

    fn toy_table(cells: Vec<(TypeId, u32, StateId, f32)>, ws: u32) -> UtilityTable {
        UtilityTable::from_export(&ExportedTable {
            type_count: 3,
            window_size: ws,
            bin_size: 1,
            k: 1,
            states: vec![0],
            weights: vec![1.0],
            patterns: vec![1],
            samples: 0,
            cells,
        })
        .unwrap()
    }

    fn toy_vw(occ: &[((TypeId, u32, StateId), f64)], ws: u32) -> VirtualWindow {
        let occurrences: BTreeMap<_, _> = occ.iter().copied().collect();
        let ws_v: f64 = occurrences.values().sum();
        VirtualWindow {
            occurrences,
            ws_v,
            avg_o: ws_v / f64::from(ws),
            window_size: ws,
            bin_size: 1,
        }
    }

    #[test]
    fn threshold_array_accumulates_by_hand() {
        // Utilities 0.0 x4, 0.25 x4, 0.4 x2.
        let table = toy_table(vec![(1, 1, 0, 0.25), (2, 2, 0, 0.4)], 3);
        let vw = toy_vw(&[((0, 0, 0), 4.0), ((1, 1, 0), 4.0), ((2, 2, 0), 2.0)], 3);
        let arr = build_threshold_array(&vw, &table).unwrap();
        assert_eq!(
            arr.utilities,
            vec![0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25, 0.4, 0.4]
        );
        assert!(arr.is_non_decreasing());
        assert_eq!(*arr.utilities.last().unwrap(), 0.4);
    }

    #[test]
    fn threshold_array_degenerate_distribution() {
        let table = toy_table(vec![(0, 0, 0, 0.7), (1, 1, 0, 0.7)], 2);
        let vw = toy_vw(&[((0, 0, 0), 3.0), ((1, 1, 0), 1.0)], 2);
        let arr = build_threshold_array(&vw, &table).unwrap();
        assert_eq!(arr.utilities, vec![0.7, 0.7, 0.7, 0.7]);
    }

    #[test]
    fn threshold_lookup_and_sentinels() {
        let arr = ThresholdArray {
            utilities: vec![0.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25, 0.4, 0.4],
        };
        assert_eq!(threshold_for(&arr, 0.0), f32::NEG_INFINITY);
        assert_eq!(threshold_for(&arr, 5.0), 0.25);
        assert_eq!(threshold_for(&arr, 100.0), f32::INFINITY);
        // Monotone in the budget.
        let mut prev = f32::NEG_INFINITY;
        for i in 0..=12 {
            let u = threshold_for(&arr, f64::from(i));
            assert!(u >= prev);
            prev = u;
        }
    }

    #[test]
    fn mismatched_dimensions_are_a_configuration_error() {
        let table = toy_table(vec![(1, 1, 0, 0.25)], 3);
        let mut vw = toy_vw(&[((0, 0, 0), 4.0)], 3);
        vw.bin_size = 2;
        assert!(matches!(
            build_threshold_array(&vw, &table),
            Err(CoreError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn control_tick_examples() {
        let cfg = ControlConfig {
            latency_bound_ns: 1_000_000_000,
            safety_fraction: 0.8,
            window_size: 18,
        };
        let arr = ThresholdArray {
            utilities: vec![0.0; 36],
        };
        // Below the safety bound: never overloaded.
        let plan = control_tick(100_000_000, 1800.0, 1000.0, 2.0, 36.0, &arr, &cfg);
        assert!(!plan.overloaded);
        assert_eq!(plan.rho, 0);
        // Past safety with rate 1.8x throughput: rho = 8, rho_v = 16.
        let plan = control_tick(900_000_000, 1800.0, 1000.0, 2.0, 36.0, &arr, &cfg);
        assert!(plan.overloaded);
        assert_eq!(plan.rho, 8);
        assert_eq!(plan.rho_v, 16.0);
        // Past safety but rate equals throughput: the formula yields zero.
        let plan = control_tick(900_000_000, 1000.0, 1000.0, 2.0, 36.0, &arr, &cfg);
        assert!(!plan.overloaded);
        assert_eq!(plan.rho, 0);
    }

    #[test]
    fn controller_seeds_rate_and_publishes() {
        let cfg = ControlConfig {
            latency_bound_ns: 1_000_000_000,
            safety_fraction: 0.8,
            window_size: 10,
        };
        let plan_cell = Arc::new(Shared::new(ShedPlan::idle(10)));
        let mut ctl = OverloadController::new(
            cfg,
            1e9,
            1000.0,
            2.0,
            20.0,
            ThresholdArray {
                utilities: vec![0.1; 20],
            },
            plan_cell.clone(),
        );
        // Seed tick.
        ctl.tick(100_000_000, 200, 0);
        assert!(ctl.rate_estimate().is_some());
        // 2000 ev/s against mu=1000 with a deep queue: overloaded.
        let plan = ctl.tick(200_000_000, 200, 900);
        assert!(plan.overloaded);
        assert_eq!(plan.rho, 5);
        assert!(plan_cell.load().overloaded);
    }
}
