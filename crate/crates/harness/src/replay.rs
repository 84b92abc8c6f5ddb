//! Rate-controlled replay through a bounded queue.
//!
//! Virtual mode is a single-threaded discrete-event simulation: arrivals are
//! scheduled at the configured rate, service durations come from the
//! operator's scripted cost model, and the overload controller ticks on
//! simulated time. Runs are bit-reproducible given seed and config.
//!
//! Real mode spawns an ingestion producer and a periodic controller thread
//! around the consuming operator; it exists for smoke tests only.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use hspice_core::event::Event;
use hspice_core::operator::{CepOperator, ComplexEvent, OperatorMetrics, ShedDecider};
use hspice_core::planner::OverloadController;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone)]
pub struct ReplaySettings {
    /// Arrival rate in events/second.
    pub rate: f64,
    /// Calibrated unshed throughput, for queue-latency estimation.
    pub mu: f64,
    pub tick_ns: u64,
    pub queue_capacity: usize,
}

/// Per-event end-to-end latency: queuing plus processing across all
/// containing windows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatencySample {
    pub seq: u64,
    pub latency_ns: u64,
}

/// One controller tick, for post-hoc analysis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanTraceEntry {
    pub t: u64,
    pub overloaded: bool,
    #[serde(rename = "R")]
    pub r: f64,
    pub mu: f64,
    pub rho: u32,
    pub rho_v: f64,
    /// Absent when the plan is idle (the never-drop sentinel is not a JSON
    /// number).
    pub u_th: Option<f32>,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub detected: Vec<ComplexEvent>,
    pub latencies: Vec<LatencySample>,
    pub plan_trace: Vec<PlanTraceEntry>,
    pub metrics: OperatorMetrics,
    pub sim_end_ns: u64,
}

/// Deterministic virtual-clock replay.
pub fn replay_virtual(
    events: &[Arc<Event>],
    operator: &mut CepOperator,
    shedder: &mut dyn ShedDecider,
    controller: &mut OverloadController,
    settings: &ReplaySettings,
) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let n = events.len();
    let arrival_ns = |i: usize| -> u64 { ((i as f64) * 1e9 / settings.rate).round() as u64 };

    let mut queue: VecDeque<(u64, usize)> = VecDeque::new();
    let mut next_arrival = 0usize;
    let mut op_free_at: u64 = 0;
    let mut next_tick: u64 = settings.tick_ns;
    let mut arrivals_since_tick: u64 = 0;
    let mut now: u64 = 0;

    #[derive(Clone, Copy, PartialEq)]
    enum Action {
        Arrival,
        Tick,
        Service,
    }

    loop {
        let arrival_t = (next_arrival < n).then(|| arrival_ns(next_arrival));
        let service_t = queue
            .front()
            .map(|&(arr, _)| std::cmp::max(op_free_at, arr));
        if arrival_t.is_none() && service_t.is_none() {
            break;
        }
        // Earliest action wins; ties resolve arrival -> tick -> service so
        // the controller sees arrivals up to its tick time and fresh plans
        // apply from the next service.
        let mut best: Option<(u64, u8, Action)> = None;
        for cand in [
            arrival_t.map(|t| (t, 0u8, Action::Arrival)),
            Some((next_tick, 1u8, Action::Tick)),
            service_t.map(|t| (t, 2u8, Action::Service)),
        ]
        .into_iter()
        .flatten()
        {
            if best.is_none_or(|(bt, bp, _)| cand.0 < bt || (cand.0 == bt && cand.1 < bp)) {
                best = Some(cand);
            }
        }
        let (at, _, action) = best.expect("at least one candidate");
        now = at;

        match action {
            Action::Arrival => {
                if queue.len() >= settings.queue_capacity {
                    return Err(HarnessError::QueueOverflow {
                        capacity: settings.queue_capacity,
                        t_ns: now,
                        rate: settings.rate,
                        mu: settings.mu,
                    });
                }
                queue.push_back((now, next_arrival));
                next_arrival += 1;
                arrivals_since_tick += 1;
            }
            Action::Tick => {
                let plan = controller.tick(now, arrivals_since_tick, queue.len());
                arrivals_since_tick = 0;
                out.plan_trace.push(PlanTraceEntry {
                    t: now,
                    overloaded: plan.overloaded,
                    r: controller.rate_estimate().unwrap_or(0.0),
                    mu: settings.mu,
                    rho: plan.rho,
                    rho_v: plan.rho_v,
                    u_th: plan.u_th.is_finite().then_some(plan.u_th),
                });
                next_tick += settings.tick_ns;
            }
            Action::Service => {
                let (arr, idx) = queue.pop_front().expect("service implies nonempty queue");
                let result = operator.process_event(events[idx].as_ref().clone(), shedder)?;
                let end = now + result.cost_ns;
                op_free_at = end;
                out.detected.extend(result.complex);
                out.latencies.push(LatencySample {
                    seq: events[idx].seq,
                    latency_ns: end - arr,
                });
            }
        }
    }
    operator.finish()?;
    out.metrics = operator.metrics().clone();
    out.sim_end_ns = now.max(op_free_at);
    Ok(out)
}

/// Wall-clock replay with a producer thread pacing arrivals, the operator
/// consuming on this thread, and a controller thread sampling periodically.
pub fn replay_real(
    events: &[Arc<Event>],
    operator: &mut CepOperator,
    shedder: &mut dyn ShedDecider,
    controller: &mut OverloadController,
    settings: &ReplaySettings,
) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let (tx, rx) = crossbeam_channel::bounded::<(Instant, usize)>(settings.queue_capacity.max(1));
    let overflow = Arc::new(AtomicBool::new(false));
    let done = Arc::new(AtomicBool::new(false));
    let arrivals = Arc::new(AtomicU64::new(0));
    let start = Instant::now();
    let rate = settings.rate;
    let n = events.len();

    let trace: Mutex<Vec<PlanTraceEntry>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| -> Result<()> {
        // Producer: pace arrivals at the configured rate.
        let producer_overflow = overflow.clone();
        let producer_done = done.clone();
        let producer_arrivals = arrivals.clone();
        scope.spawn(move || {
            for i in 0..n {
                let due = start + Duration::from_nanos((i as f64 * 1e9 / rate) as u64);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
                producer_arrivals.fetch_add(1, Ordering::Relaxed);
                match tx.try_send((Instant::now(), i)) {
                    Ok(()) => {}
                    Err(crossbeam_channel::TrySendError::Full(_)) => {
                        producer_overflow.store(true, Ordering::SeqCst);
                        break;
                    }
                    Err(crossbeam_channel::TrySendError::Disconnected(_)) => break,
                }
            }
            producer_done.store(true, Ordering::SeqCst);
            drop(tx);
        });

        // Controller: periodic sampling on wall time.
        let ctl_done = done.clone();
        let ctl_overflow = overflow.clone();
        let ctl_rx = rx.clone();
        let ctl_arrivals = arrivals.clone();
        let tick = Duration::from_nanos(settings.tick_ns);
        let trace_ref = &trace;
        let mu = settings.mu;
        let ctl_handle = scope.spawn(move || {
            let mut last_seen = 0u64;
            while !(ctl_done.load(Ordering::SeqCst) && ctl_rx.is_empty())
                && !ctl_overflow.load(Ordering::SeqCst)
            {
                std::thread::sleep(tick);
                let total = ctl_arrivals.load(Ordering::Relaxed);
                let new = total - last_seen;
                last_seen = total;
                let now_ns = start.elapsed().as_nanos() as u64;
                let plan = controller.tick(now_ns, new, ctl_rx.len());
                trace_ref.lock().expect("trace lock").push(PlanTraceEntry {
                    t: now_ns,
                    overloaded: plan.overloaded,
                    r: controller.rate_estimate().unwrap_or(0.0),
                    mu,
                    rho: plan.rho,
                    rho_v: plan.rho_v,
                    u_th: plan.u_th.is_finite().then_some(plan.u_th),
                });
            }
        });

        // Operator: consume until the producer finishes and the queue drains.
        loop {
            match rx.recv_timeout(Duration::from_millis(20)) {
                Ok((arrived, idx)) => {
                    let result = operator.process_event(events[idx].as_ref().clone(), shedder)?;
                    out.detected.extend(result.complex);
                    out.latencies.push(LatencySample {
                        seq: events[idx].seq,
                        latency_ns: arrived.elapsed().as_nanos() as u64,
                    });
                }
                Err(crossbeam_channel::RecvTimeoutError::Timeout) => {
                    if overflow.load(Ordering::SeqCst)
                        || (done.load(Ordering::SeqCst) && rx.is_empty())
                    {
                        break;
                    }
                }
                Err(crossbeam_channel::RecvTimeoutError::Disconnected) => break,
            }
        }
        drop(rx);
        ctl_handle.join().expect("controller thread");
        Ok(())
    })?;

    if overflow.load(Ordering::SeqCst) {
        return Err(HarnessError::QueueOverflow {
            capacity: settings.queue_capacity,
            t_ns: start.elapsed().as_nanos() as u64,
            rate: settings.rate,
            mu: settings.mu,
        });
    }
    operator.finish()?;
    out.metrics = operator.metrics().clone();
    out.plan_trace = trace.into_inner().expect("trace lock");
    out.sim_end_ns = start.elapsed().as_nanos() as u64;
    Ok(out)
}
