//! Event precedence network: observation and graph generation.
//!
//! Observation counts, per partition, how often an instance of `E_i` is
//! immediately followed by an instance of `E_j` (`i != j`). Graph generation
//! turns the counts into edges and the estimator
//! `P(E_j | E_i) = f(E_i, E_j) / sum_k f(E_i, E_k)`.
//!
//! Raw events are discarded after observation; only the counts persist.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::stream::{ClosedWindow, EventType, TypeRegistry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpnError {
    /// An event type outside the registry reached the matrix.
    UnknownType { event_type: u32, n_types: usize },
    DimensionMismatch { matrix: usize, registry: usize },
}

impl fmt::Display for EpnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpnError::UnknownType {
                event_type,
                n_types,
            } => write!(f, "event type {event_type} not registered (N={n_types})"),
            EpnError::DimensionMismatch { matrix, registry } => write!(
                f,
                "frequency matrix has {matrix} types, registry has {registry}"
            ),
        }
    }
}

impl core::error::Error for EpnError {}

/// Dense `N x N` precedence counts with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl FrequencyMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn n_types(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: EventType, to: EventType) -> u64 {
        self.counts[from.index() * self.n + to.index()]
    }

    /// Adds `by` to `f(from, to)`. Same-type pairs are ignored.
    pub fn add(&mut self, from: EventType, to: EventType, by: u64) -> Result<(), EpnError> {
        for t in [from, to] {
            if t.0 == 0 || t.index() >= self.n {
                return Err(EpnError::UnknownType {
                    event_type: t.0,
                    n_types: self.n,
                });
            }
        }
        if from != to {
            self.counts[from.index() * self.n + to.index()] += by;
        }
        Ok(())
    }

    pub fn row(&self, from: EventType) -> &[u64] {
        let i = from.index() * self.n;
        &self.counts[i..i + self.n]
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Nonzero cells as `(from, to, count)`, lexicographic by `(from, to)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (EventType, EventType, u64)> + '_ {
        self.counts.iter().enumerate().filter_map(move |(idx, &c)| {
            (c > 0).then(|| {
                (
                    EventType::from_index(idx / self.n),
                    EventType::from_index(idx % self.n),
                    c,
                )
            })
        })
    }
}

/// Work done by one [`observe`] call, for the linear-time bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ObserveStats {
    /// Window events examined (each exactly once).
    pub events_touched: usize,
    pub pairs_counted: usize,
    pub same_type_skipped: usize,
}

/// Counts consecutive pairs of every partition of `window` into `freq`.
/// A carried seed is treated as the partition's first element.
pub fn observe(window: &ClosedWindow, freq: &mut FrequencyMatrix) -> Result<ObserveStats, EpnError> {
    let mut stats = ObserveStats::default();
    for (_, seed, events) in window.sequences() {
        let mut prev = seed.map(|e| e.event_type);
        for e in events {
            stats.events_touched += 1;
            let cur = e.event_type;
            if let Some(p) = prev {
                if p == cur {
                    stats.same_type_skipped += 1;
                } else {
                    freq.add(p, cur, 1)?;
                    stats.pairs_counted += 1;
                }
            } else if cur.0 == 0 || cur.index() >= freq.n {
                return Err(EpnError::UnknownType {
                    event_type: cur.0,
                    n_types: freq.n,
                });
            }
            prev = Some(cur);
        }
    }
    Ok(stats)
}

/// Immutable network: counts, edges and conditional probabilities.
///
/// An edge `i -> j` exists iff `f(i, j) > 0`; nodes without outgoing edges are
/// absorbing. Children and parents are kept sorted by type id.
#[derive(Debug, Clone, PartialEq)]
pub struct EpnSnapshot {
    registry: TypeRegistry,
    freq: FrequencyMatrix,
    row_totals: Vec<u64>,
    children: Vec<Vec<EventType>>,
    parents: Vec<Vec<EventType>>,
    total_events: u64,
}

impl EpnSnapshot {
    pub fn empty(registry: TypeRegistry) -> Self {
        let n = registry.len();
        generate_graph(FrequencyMatrix::new(n), registry, 0).expect("dimensions agree")
    }

    pub fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    pub fn frequencies(&self) -> &FrequencyMatrix {
        &self.freq
    }

    pub fn n_types(&self) -> usize {
        self.freq.n
    }

    /// Events observed so far (`N_e`); carried seeds are not counted twice.
    pub fn total_events(&self) -> u64 {
        self.total_events
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, t: EventType) -> bool {
        t.0 >= 1 && t.index() < self.freq.n
    }

    pub fn children(&self, t: EventType) -> &[EventType] {
        &self.children[t.index()]
    }

    pub fn parents(&self, t: EventType) -> &[EventType] {
        &self.parents[t.index()]
    }

    pub fn is_absorbing(&self, t: EventType) -> bool {
        self.children[t.index()].is_empty()
    }

    pub fn has_edge(&self, from: EventType, to: EventType) -> bool {
        self.freq.get(from, to) > 0
    }

    /// `P(to | from)`; `None` when there is no edge.
    pub fn cond_prob(&self, from: EventType, to: EventType) -> Option<f64> {
        let c = self.freq.get(from, to);
        (c > 0).then(|| c as f64 / self.row_totals[from.index()] as f64)
    }

    /// Edge probability with absent edges reading as zero.
    #[inline]
    pub fn prob(&self, from: EventType, to: EventType) -> f64 {
        self.cond_prob(from, to).unwrap_or(0.0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (EventType, EventType, u64)> + '_ {
        self.freq.nonzero()
    }
}

/// Cells examined by [`generate_graph`]; bounded by `N^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GraphStats {
    pub cells_examined: usize,
}

pub fn generate_graph(
    freq: FrequencyMatrix,
    registry: TypeRegistry,
    total_events: u64,
) -> Result<EpnSnapshot, EpnError> {
    generate_graph_with_stats(freq, registry, total_events).map(|(s, _)| s)
}

pub fn generate_graph_with_stats(
    freq: FrequencyMatrix,
    registry: TypeRegistry,
    total_events: u64,
) -> Result<(EpnSnapshot, GraphStats), EpnError> {
    let n = freq.n;
    if registry.len() != n {
        return Err(EpnError::DimensionMismatch {
            matrix: n,
            registry: registry.len(),
        });
    }
    let mut stats = GraphStats::default();
    let mut children = vec![Vec::new(); n];
    let mut parents = vec![Vec::new(); n];
    let mut row_totals = vec![0u64; n];
    for i in 0..n {
        for j in 0..n {
            stats.cells_examined += 1;
            let c = freq.counts[i * n + j];
            if c > 0 {
                row_totals[i] += c;
                children[i].push(EventType::from_index(j));
                parents[j].push(EventType::from_index(i));
            }
        }
    }
    Ok((
        EpnSnapshot {
            registry,
            freq,
            row_totals,
            children,
            parents,
            total_events,
        },
        stats,
    ))
}

/// Copy-on-update: observes `window` on top of `prev` and regenerates the
/// graph. `prev` is left untouched.
pub fn update(window: &ClosedWindow, prev: &EpnSnapshot) -> Result<EpnSnapshot, EpnError> {
    let mut freq = prev.freq.clone();
    observe(window, &mut freq)?;
    generate_graph(
        freq,
        prev.registry.clone(),
        prev.total_events + window.event_count() as u64,
    )
}

/// Single writer that accumulates windows and hands out snapshots on demand.
#[derive(Debug, Clone)]
pub struct EpnBuilder {
    registry: TypeRegistry,
    freq: FrequencyMatrix,
    total_events: u64,
    windows: u64,
}

impl EpnBuilder {
    pub fn new(registry: TypeRegistry) -> Self {
        let n = registry.len();
        Self {
            registry,
            freq: FrequencyMatrix::new(n),
            total_events: 0,
            windows: 0,
        }
    }

    pub fn observe(&mut self, window: &ClosedWindow) -> Result<ObserveStats, EpnError> {
        let stats = observe(window, &mut self.freq)?;
        self.total_events += window.event_count() as u64;
        self.windows += 1;
        Ok(stats)
    }

    pub fn frequencies(&self) -> &FrequencyMatrix {
        &self.freq
    }

    pub fn windows_observed(&self) -> u64 {
        self.windows
    }

    pub fn snapshot(&self) -> EpnSnapshot {
        generate_graph(self.freq.clone(), self.registry.clone(), self.total_events)
            .expect("builder keeps dimensions in sync")
    }
}
