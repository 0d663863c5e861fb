//! Event data model and partitioned windows.
//!
//! A [`PartitionedWindow`] collects the events of one observation period and
//! groups them by CRA. Closing a window hands back an immutable
//! [`ClosedWindow`] and a successor whose `carried` map holds the last event
//! of every partition, so that pairs spanning the window boundary are still
//! counted exactly once.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

/// Event type id, dense in `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventType(pub u32);

impl EventType {
    /// Zero-based index into per-type tables.
    #[inline]
    pub fn index(self) -> usize {
        (self.0 as usize).wrapping_sub(1)
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        EventType(index as u32 + 1)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "E{}", self.0)
    }
}

/// A finite instant on an arbitrary epoch.
#[derive(Debug, Clone, Copy)]
pub struct Timestamp(f64);

impl Timestamp {
    pub fn new(value: f64) -> Option<Self> {
        value.is_finite().then_some(Timestamp(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Common relational attribute value (session id, blackout id, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cra {
    Int(i64),
    Text(String),
}

impl Cra {
    /// Byte representation used for seeded hashing.
    pub fn hash_bytes(&self, mut sink: impl FnMut(&[u8])) {
        match self {
            Cra::Int(v) => {
                sink(&[0]);
                sink(&v.to_le_bytes());
            }
            Cra::Text(s) => {
                sink(&[1]);
                sink(s.as_bytes());
            }
        }
    }
}

impl fmt::Display for Cra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cra::Int(v) => write!(f, "{v}"),
            Cra::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Cra {
    fn from(v: i64) -> Self {
        Cra::Int(v)
    }
}

impl From<&str> for Cra {
    fn from(v: &str) -> Self {
        Cra::Text(String::from(v))
    }
}

/// One timestamped occurrence. `attributes` is carried but never read.
#[derive(Debug, Clone, PartialEq)]
pub struct EventInstance {
    pub timestamp: Timestamp,
    pub event_type: EventType,
    pub cra: Cra,
    pub attributes: Vec<(String, String)>,
}

impl EventInstance {
    pub fn new(timestamp: Timestamp, event_type: EventType, cra: impl Into<Cra>) -> Self {
        Self {
            timestamp,
            event_type,
            cra: cra.into(),
            attributes: Vec::new(),
        }
    }
}

/// Bijection between event-type ids and names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeRegistry {
    names: Vec<String>,
    ids: BTreeMap<String, EventType>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry with names `E1..EN`.
    pub fn numbered(n: usize) -> Self {
        let mut reg = Self::new();
        for i in 1..=n {
            reg.register(&alloc::format!("E{i}"));
        }
        reg
    }

    /// Returns the id of `name`, assigning the next dense id if unseen.
    pub fn register(&mut self, name: &str) -> EventType {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = EventType::from_index(self.names.len());
        self.names.push(String::from(name));
        self.ids.insert(String::from(name), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<EventType> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: EventType) -> Option<&str> {
        self.names.get(id.index()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, id: EventType) -> bool {
        id.0 >= 1 && id.index() < self.names.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventType, &str)> + '_ {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (EventType::from_index(i), n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamError {
    /// Event precedes the window start; out-of-order streams are not repaired.
    OutOfOrder { timestamp: f64, window_start: f64 },
    /// Event lies at or past the window end and belongs to a later window.
    BeyondWindow { timestamp: f64, window_end: f64 },
    InvalidPeriod(f64),
}

impl fmt::Display for StreamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamError::OutOfOrder {
                timestamp,
                window_start,
            } => write!(
                f,
                "out-of-order event at t={timestamp} (window starts at {window_start})"
            ),
            StreamError::BeyondWindow {
                timestamp,
                window_end,
            } => write!(f, "event at t={timestamp} is past the window end {window_end}"),
            StreamError::InvalidPeriod(p) => write!(f, "window period must be positive, got {p}"),
        }
    }
}

impl core::error::Error for StreamError {}

/// Temporally ordered events sharing one CRA value.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub cra: Cra,
    pub events: Vec<EventInstance>,
}

impl Partition {
    pub fn new(cra: Cra) -> Self {
        Self {
            cra,
            events: Vec::new(),
        }
    }

    /// Inserts after every event with an equal or earlier timestamp, so ties
    /// keep arrival order.
    fn insert(&mut self, event: EventInstance) {
        let at = self
            .events
            .partition_point(|e| e.timestamp <= event.timestamp);
        self.events.insert(at, event);
    }
}

/// Events of one observation period `[start, start + period)`, grouped by CRA.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedWindow {
    start: Timestamp,
    period: f64,
    pub partitions: BTreeMap<Cra, Partition>,
    /// Last event of each partition of the previous window.
    pub carried: BTreeMap<Cra, EventInstance>,
}

impl PartitionedWindow {
    pub fn new(start: Timestamp, period: f64) -> Result<Self, StreamError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(StreamError::InvalidPeriod(period));
        }
        Ok(Self {
            start,
            period,
            partitions: BTreeMap::new(),
            carried: BTreeMap::new(),
        })
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn end(&self) -> f64 {
        self.start.value() + self.period
    }

    pub fn event_count(&self) -> usize {
        self.partitions.values().map(|p| p.events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn ingest(&mut self, event: EventInstance) -> Result<(), StreamError> {
        if event.timestamp < self.start {
            return Err(StreamError::OutOfOrder {
                timestamp: event.timestamp.value(),
                window_start: self.start.value(),
            });
        }
        if event.timestamp.value() >= self.end() {
            return Err(StreamError::BeyondWindow {
                timestamp: event.timestamp.value(),
                window_end: self.end(),
            });
        }
        self.partitions
            .entry(event.cra.clone())
            .or_insert_with(|| Partition::new(event.cra.clone()))
            .insert(event);
        Ok(())
    }

    /// Closes this window. The successor starts where this one ends and is
    /// seeded with the final event of every partition; seeds of CRAs that did
    /// not reappear here are dropped.
    pub fn close(self) -> (ClosedWindow, PartitionedWindow) {
        let next_start = Timestamp(self.end());
        let carried = self
            .partitions
            .iter()
            .filter_map(|(cra, p)| p.events.last().map(|e| (cra.clone(), e.clone())))
            .collect();
        let successor = PartitionedWindow {
            start: next_start,
            period: self.period,
            partitions: BTreeMap::new(),
            carried,
        };
        (ClosedWindow(self), successor)
    }
}

/// An immutable, fully assembled window.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedWindow(PartitionedWindow);

impl ClosedWindow {
    pub fn window(&self) -> &PartitionedWindow {
        &self.0
    }

    /// Number of events in the window proper (seeds excluded).
    pub fn event_count(&self) -> usize {
        self.0.event_count()
    }

    /// Each partition with its carried seed, if any.
    pub fn sequences(&self) -> impl Iterator<Item = (&Cra, Option<&EventInstance>, &[EventInstance])> {
        self.0
            .partitions
            .iter()
            .map(|(cra, p)| (cra, self.0.carried.get(cra), p.events.as_slice()))
    }
}

/// Drives a time-ordered stream through consecutive windows of a fixed period.
///
/// Empty stretches advance the clock: once a window holds no events and no
/// seeds, the next event jumps straight to the window containing it.
#[derive(Debug, Clone)]
pub struct WindowAssembler {
    period: f64,
    current: Option<PartitionedWindow>,
}

impl WindowAssembler {
    pub fn new(period: f64) -> Result<Self, StreamError> {
        if !(period.is_finite() && period > 0.0) {
            return Err(StreamError::InvalidPeriod(period));
        }
        Ok(Self {
            period,
            current: None,
        })
    }

    pub fn current(&self) -> Option<&PartitionedWindow> {
        self.current.as_ref()
    }

    /// Adds an event, returning every window it caused to close.
    pub fn push(&mut self, event: EventInstance) -> Result<Vec<ClosedWindow>, StreamError> {
        let mut closed = Vec::new();
        let mut window = match self.current.take() {
            Some(w) => w,
            None => PartitionedWindow::new(event.timestamp, self.period)?,
        };
        while event.timestamp.value() >= window.end() {
            if window.is_empty() && window.carried.is_empty() {
                let gap = event.timestamp.value() - window.start.value();
                let skip = libm::floor(gap / self.period);
                window.start = Timestamp(window.start.value() + skip * self.period);
                if event.timestamp.value() >= window.end() {
                    // rounding at the boundary
                    window.start = Timestamp(window.end());
                }
                continue;
            }
            let (done, next) = window.close();
            closed.push(done);
            window = next;
        }
        let res = window.ingest(event);
        self.current = Some(window);
        res.map(|_| closed)
    }

    /// Closes the open window, if any.
    pub fn finish(self) -> Option<ClosedWindow> {
        self.current.map(|w| w.close().0)
    }
}
