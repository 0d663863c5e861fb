//! Stream-to-network build: sort, window, count, sample.

use epn_core::{EpnBuilder, EpnSnapshot, EventInstance, PresenceSampleStore, TypeRegistry, WindowAssembler};

use crate::error::Result;

pub const DEFAULT_PERIOD: f64 = 10.0;
pub const DEFAULT_STORE_CAPACITY: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    /// Window period `T`, in the stream's timestamp units.
    pub period: f64,
    pub store_capacity: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            period: DEFAULT_PERIOD,
            store_capacity: DEFAULT_STORE_CAPACITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub snapshot: EpnSnapshot,
    pub store: PresenceSampleStore,
    pub windows: u64,
    pub events: u64,
}

/// Streams `events` through consecutive windows of `cfg.period`. Events are
/// stably sorted by timestamp first, so readers that emit one CRA at a time
/// need no extra care.
pub fn build(registry: &TypeRegistry, events: &[EventInstance], cfg: &BuildConfig) -> Result<BuildOutput> {
    let mut order: Vec<&EventInstance> = events.iter().collect();
    order.sort_by_key(|e| e.timestamp);

    let mut builder = EpnBuilder::new(registry.clone());
    let mut store = PresenceSampleStore::new(registry.len(), cfg.store_capacity);
    let mut asm = WindowAssembler::new(cfg.period)?;
    let mut windows = 0u64;
    for ev in order {
        for closed in asm.push(ev.clone())? {
            builder.observe(&closed)?;
            store.record_window(&closed);
            windows += 1;
        }
    }
    if let Some(closed) = asm.finish() {
        builder.observe(&closed)?;
        store.record_window(&closed);
        windows += 1;
    }
    Ok(BuildOutput {
        snapshot: builder.snapshot(),
        store,
        windows,
        events: events.len() as u64,
    })
}
