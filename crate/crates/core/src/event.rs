//! Events, stream schemas, and sliding-window assignment.
//!
//! Streams are JSON lines, one event per line:
//! `{"seq": 0, "ts": 1000, "type": 2, "attrs": {"pct_change": 0.6}}`.
//! `seq` must be strictly increasing and `ts` non-decreasing; both are
//! validated on read.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Small integer event type id (`0 <= type < type_count`).
pub type TypeId = u16;

/// An immutable stream record. Attribute values are 64-bit floats keyed by
/// name; identity-like attributes (player ids etc.) are stored as floats too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Event time in integer microseconds.
    pub ts: i64,
    #[serde(rename = "type")]
    pub event_type: TypeId,
    #[serde(default)]
    pub attrs: BTreeMap<String, f64>,
}

impl Event {
    pub fn attr(&self, name: &str) -> Option<f64> {
        self.attrs.get(name).copied()
    }
}

/// Declared schema of a stream: how many event types exist.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamSchema {
    pub type_count: u16,
    #[serde(default)]
    pub type_names: Vec<String>,
}

impl StreamSchema {
    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&data)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    CountBased,
    TimeBased,
}

/// Sliding-window specification. `size` and `slide` are event counts for
/// count-based windows and whole seconds for time-based windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub size: u64,
    pub slide: u64,
}

impl WindowSpec {
    pub fn count(size: u64, slide: u64) -> Self {
        WindowSpec {
            kind: WindowKind::CountBased,
            size,
            slide,
        }
    }

    pub fn time(size_s: u64, slide_s: u64) -> Self {
        WindowSpec {
            kind: WindowKind::TimeBased,
            size: size_s,
            slide: slide_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slide < 1 {
            return Err(CoreError::InvalidWindowSpec("slide must be >= 1".into()));
        }
        if self.size < self.slide {
            return Err(CoreError::InvalidWindowSpec("size must be >= slide".into()));
        }
        Ok(())
    }
}

/// One event-to-window assignment: the window id and the event's position
/// within that window (count of earlier events in the window, 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub window_id: u64,
    pub position: u32,
    /// True when this event is the first of the window (the window opens).
    pub opens: bool,
}

/// Result of assigning one event.
#[derive(Debug, Default)]
pub struct AssignOutcome {
    /// Time-based windows whose span ended before this event: they close
    /// without containing it.
    pub close_before: Vec<u64>,
    /// Windows containing the event, ascending window id.
    pub assignments: Vec<Assignment>,
    /// Count-based windows that reached `size` events with this event.
    pub close_after: Vec<u64>,
}

/// Assigns events of a single ordered stream to sliding windows.
///
/// Window ids are arithmetic: window `k` starts at stream index `k * slide`
/// (count-based) or at time `k * slide` seconds (time-based), so ids are
/// stable across runs regardless of which windows materialize. Windows with
/// no events are never materialized.
#[derive(Debug)]
pub struct WindowAssigner {
    spec: WindowSpec,
    /// Open windows: id -> events assigned so far.
    open: BTreeMap<u64, u32>,
    next_index: u64,
    last_seq: Option<u64>,
}

impl WindowAssigner {
    pub fn new(spec: WindowSpec) -> Result<Self> {
        spec.validate()?;
        Ok(WindowAssigner {
            spec,
            open: BTreeMap::new(),
            next_index: 0,
            last_seq: None,
        })
    }

    pub fn spec(&self) -> WindowSpec {
        self.spec
    }

    pub fn assign(&mut self, event: &Event) -> Result<AssignOutcome> {
        if let Some(prev) = self.last_seq {
            if event.seq <= prev {
                return Err(CoreError::Monotonicity {
                    seq: event.seq,
                    prev,
                });
            }
        }
        self.last_seq = Some(event.seq);

        let mut out = AssignOutcome::default();
        match self.spec.kind {
            WindowKind::CountBased => {
                let i = self.next_index;
                self.next_index += 1;
                let ws = self.spec.size;
                let d = self.spec.slide;
                // Window k contains index i iff k*d <= i < k*d + ws.
                let k_lo = if i + 1 > ws {
                    (i + 1 - ws).div_ceil(d)
                } else {
                    0
                };
                let k_hi = i / d;
                for k in k_lo..=k_hi {
                    let count = self.open.entry(k).or_insert(0);
                    let position = *count;
                    *count += 1;
                    out.assignments.push(Assignment {
                        window_id: k,
                        position,
                        opens: position == 0,
                    });
                    if u64::from(*count) == ws {
                        out.close_after.push(k);
                    }
                }
                for k in &out.close_after {
                    self.open.remove(k);
                }
            }
            WindowKind::TimeBased => {
                let t = event.ts;
                let size_us = (self.spec.size as i64) * 1_000_000;
                let slide_us = (self.spec.slide as i64) * 1_000_000;
                // Close windows whose span [k*slide, k*slide + size) ended.
                let ended: Vec<u64> = self
                    .open
                    .keys()
                    .copied()
                    .filter(|k| (*k as i64) * slide_us + size_us <= t)
                    .collect();
                for k in ended {
                    self.open.remove(&k);
                    out.close_before.push(k);
                }
                if t < 0 {
                    return Err(CoreError::InvalidArgument(format!(
                        "negative timestamp {t} at seq {}",
                        event.seq
                    )));
                }
                let k_hi = t / slide_us;
                let k_lo = if t >= size_us {
                    (t - size_us) / slide_us + 1
                } else {
                    0
                };
                for k in k_lo..=k_hi {
                    let k = k as u64;
                    let count = self.open.entry(k).or_insert(0);
                    let position = *count;
                    *count += 1;
                    out.assignments.push(Assignment {
                        window_id: k,
                        position,
                        opens: position == 0,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Ids of windows still open; call at end of stream to close them.
    pub fn drain_open(&mut self) -> Vec<u64> {
        let ids: Vec<u64> = self.open.keys().copied().collect();
        self.open.clear();
        ids
    }
}

/// Lazily reads a JSON-lines event file, validating order invariants.
pub struct EventReader<R: BufRead> {
    reader: R,
    line_no: usize,
    last_seq: Option<u64>,
    last_ts: Option<i64>,
    buf: String,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(reader: R) -> Self {
        EventReader {
            reader,
            line_no: 0,
            last_seq: None,
            last_ts: None,
            buf: String::new(),
        }
    }
}

/// Opens an event file for lazy, order-validated iteration.
pub fn read_stream(path: &Path) -> Result<EventReader<std::io::BufReader<std::fs::File>>> {
    let file = std::fs::File::open(path)?;
    Ok(EventReader::new(std::io::BufReader::new(file)))
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() {
                continue;
            }
            let event: Event = match serde_json::from_str(line) {
                Ok(ev) => ev,
                Err(e) => {
                    return Some(Err(CoreError::Parse {
                        line: self.line_no,
                        msg: e.to_string(),
                    }))
                }
            };
            if let Some(prev) = self.last_seq {
                if event.seq <= prev {
                    return Some(Err(CoreError::Monotonicity {
                        seq: event.seq,
                        prev,
                    }));
                }
            }
            if let Some(prev_ts) = self.last_ts {
                if event.ts < prev_ts {
                    return Some(Err(CoreError::TimestampOrder {
                        seq: event.seq,
                        ts: event.ts,
                        prev: prev_ts,
                    }));
                }
            }
            self.last_seq = Some(event.seq);
            self.last_ts = Some(event.ts);
            return Some(Ok(event));
        }
    }
}

/// Convenience for tests and the harness: read a whole stream into memory.
pub fn read_stream_vec(path: &Path) -> Result<Vec<Arc<Event>>> {
    read_stream(path)?.map(|r| r.map(Arc::new)).collect()
}
