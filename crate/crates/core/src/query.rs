//! Top-k next-event queries over an [`EpnSnapshot`].
//!
//! Both algorithms start from the effect observation point (EOP), the most
//! recent cause type, which has score 1. A node's ranking score is the sum
//! over its surviving parents `p` of `P(node | p) · score(p)`, where only
//! parents that precede the node in the causal search order count. Edges
//! found independent by the CI test are removed from a per-query overlay;
//! the shared snapshot is never touched.
//!
//! * [`es_topk`] scores every node reachable from the EOP in causal search
//!   order and sorts.
//! * [`rset_topk`] expands only the EOP and the current top-k, always taking
//!   the highest-scoring unvisited one, and stops when none is left.

use alloc::collections::{BTreeSet, BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};
use core::fmt;

use crate::citest::IndependenceTest;
use crate::epn::EpnSnapshot;
use crate::stream::EventType;

pub const DEFAULT_COND_CAP: usize = 8;

/// Order in which a node's children are enqueued during the BFS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChildOrder {
    /// Ascending type id.
    #[default]
    TypeId,
    /// Descending `P(child | node)`, ties by ascending id.
    ProbabilityDesc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryConfig {
    pub k: usize,
    /// Largest condition set handed to the CI test.
    pub cond_cap: usize,
    pub child_order: ChildOrder,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            k: 5,
            cond_cap: DEFAULT_COND_CAP,
            child_order: ChildOrder::TypeId,
        }
    }
}

impl QueryConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryError {
    EmptyCauses,
    ZeroK,
    UnknownType(EventType),
}

impl fmt::Display for QueryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryError::EmptyCauses => f.write_str("at least one cause event is required"),
            QueryError::ZeroK => f.write_str("k must be at least 1"),
            QueryError::UnknownType(t) => write!(f, "{t} is not in the network"),
        }
    }
}

impl core::error::Error for QueryError {}

/// Edges pruned during one query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RemovedEdges(BTreeSet<(EventType, EventType)>);

impl RemovedEdges {
    pub fn insert(&mut self, from: EventType, to: EventType) -> bool {
        self.0.insert((from, to))
    }

    pub fn contains(&self, from: EventType, to: EventType) -> bool {
        self.0.contains(&(from, to))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventType, EventType)> + '_ {
        self.0.iter().copied()
    }
}

/// Outward BFS order from the EOP; `order[0]` is the EOP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalSearchOrder {
    order: Vec<EventType>,
    rank: Vec<usize>,
    level: Vec<u32>,
}

impl CausalSearchOrder {
    pub fn order(&self) -> &[EventType] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn eop(&self) -> EventType {
        self.order[0]
    }

    /// Position in the order, `None` outside the reachable region.
    pub fn rank(&self, t: EventType) -> Option<usize> {
        self.rank.get(t.index()).copied().filter(|&r| r != usize::MAX)
    }

    pub fn contains(&self, t: EventType) -> bool {
        self.rank(t).is_some()
    }

    /// BFS distance from the EOP.
    pub fn level(&self, t: EventType) -> Option<u32> {
        self.rank(t).map(|_| self.level[t.index()])
    }

    #[inline]
    fn rank_or_max(&self, t: EventType) -> usize {
        self.rank[t.index()]
    }
}

fn ordered_children(
    snapshot: &EpnSnapshot,
    node: EventType,
    child_order: ChildOrder,
    removed: &RemovedEdges,
) -> Vec<EventType> {
    let mut kids: Vec<EventType> = snapshot
        .children(node)
        .iter()
        .copied()
        .filter(|&c| !removed.contains(node, c))
        .collect();
    if child_order == ChildOrder::ProbabilityDesc {
        kids.sort_by(|&a, &b| {
            snapshot
                .prob(node, b)
                .total_cmp(&snapshot.prob(node, a))
                .then(a.cmp(&b))
        });
    }
    kids
}

pub fn causal_search_order(
    snapshot: &EpnSnapshot,
    eop: EventType,
    child_order: ChildOrder,
    removed: &RemovedEdges,
) -> CausalSearchOrder {
    let n = snapshot.n_types();
    let mut rank = vec![usize::MAX; n];
    let mut level = vec![0u32; n];
    let mut order = vec![eop];
    rank[eop.index()] = 0;
    let mut queue = VecDeque::from([eop]);
    while let Some(u) = queue.pop_front() {
        for v in ordered_children(snapshot, u, child_order, removed) {
            if rank[v.index()] == usize::MAX {
                rank[v.index()] = order.len();
                level[v.index()] = level[u.index()] + 1;
                order.push(v);
                queue.push_back(v);
            }
        }
    }
    CausalSearchOrder { order, rank, level }
}

/// Per-query instrumentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub ci_tests: usize,
    /// CI tests that failed; the edge was kept.
    pub ci_errors: usize,
    /// Condition sets cut down to the configured cap.
    pub truncated_conditions: usize,
    pub removed_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPrediction {
    /// At most `k` entries, non-increasing by score, ties by ascending id.
    pub entries: Vec<(EventType, f64)>,
    /// Event types considered (scored), EOP included.
    pub explored_count: usize,
    /// Event types whose children were expanded.
    pub expanded_count: usize,
    /// Considered types in the order they were first scored.
    pub considered: Vec<EventType>,
    pub stats: QueryStats,
}

impl RankedPrediction {
    pub fn contains(&self, t: EventType) -> bool {
        self.entries.iter().any(|&(e, _)| e == t)
    }

    pub fn score_of(&self, t: EventType) -> Option<f64> {
        self.entries.iter().find(|&&(e, _)| e == t).map(|&(_, s)| s)
    }

    pub fn max_score(&self) -> Option<f64> {
        self.entries.first().map(|&(_, s)| s)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores of finalized nodes, indexed by type.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable(Vec<Option<f64>>);

impl ScoreTable {
    pub fn new(n: usize) -> Self {
        ScoreTable(vec![None; n])
    }

    pub fn get(&self, t: EventType) -> Option<f64> {
        self.0.get(t.index()).copied().flatten()
    }

    pub fn set(&mut self, t: EventType, score: f64) {
        self.0[t.index()] = Some(score);
    }

    pub fn contains(&self, t: EventType) -> bool {
        self.get(t).is_some()
    }
}

/// `sum_{p in parents, p finalized} P(node | p) · finalized[p]`.
pub fn score(snapshot: &EpnSnapshot, node: EventType, parents: &[EventType], finalized: &ScoreTable) -> f64 {
    parents
        .iter()
        .filter_map(|&p| finalized.get(p).map(|s| snapshot.prob(p, node) * s))
        .fold(0.0, |acc, x| acc + x)
}

fn ranked_cmp(a: &(EventType, f64), b: &(EventType, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn check_query(snapshot: &EpnSnapshot, causes: &[EventType], cfg: &QueryConfig) -> Result<EventType, QueryError> {
    if cfg.k == 0 {
        return Err(QueryError::ZeroK);
    }
    if let Some(&bad) = causes.iter().find(|&&c| !snapshot.contains(c)) {
        return Err(QueryError::UnknownType(bad));
    }
    causes.last().copied().ok_or(QueryError::EmptyCauses)
}

/// Runs CI tests and records removals in the query's overlay.
struct Pruner<'a, T: ?Sized> {
    snapshot: &'a EpnSnapshot,
    test: &'a T,
    cond_cap: usize,
    removed: RemovedEdges,
    stats: QueryStats,
}

impl<'a, T: IndependenceTest + ?Sized> Pruner<'a, T> {
    fn new(snapshot: &'a EpnSnapshot, test: &'a T, cond_cap: usize) -> Self {
        Self {
            snapshot,
            test,
            cond_cap,
            removed: RemovedEdges::default(),
            stats: QueryStats::default(),
        }
    }

    /// `true` if the edge was removed.
    fn test_edge(&mut self, parent: EventType, child: EventType, cond: &[EventType]) -> bool {
        self.stats.ci_tests += 1;
        match self.test.independent(parent, child, cond) {
            Ok(true) => {
                self.removed.insert(parent, child);
                self.stats.removed_edges += 1;
                true
            }
            Ok(false) => false,
            Err(_) => {
                self.stats.ci_errors += 1;
                false
            }
        }
    }

    /// Sibling parents of `child` other than `parent`, trimmed to the cap by
    /// keeping the ones with the highest `P(child | sibling)`.
    fn condition_set(&mut self, child: EventType, parent: EventType, parents: &[EventType]) -> Vec<EventType> {
        let mut cond: Vec<EventType> = parents.iter().copied().filter(|&p| p != parent).collect();
        if cond.len() > self.cond_cap {
            self.stats.truncated_conditions += 1;
            let snap = self.snapshot;
            cond.sort_by(|&a, &b| snap.prob(b, child).total_cmp(&snap.prob(a, child)).then(a.cmp(&b)));
            cond.truncate(self.cond_cap);
            cond.sort_unstable();
        }
        cond
    }

    /// Tests `child` against each parent given the remaining parents,
    /// dropping independent ones as it goes.
    fn conditional(&mut self, child: EventType, parents: &mut Vec<EventType>) {
        let candidates = parents.clone();
        for p in candidates {
            let cond = self.condition_set(child, p, parents);
            if self.test_edge(p, child, &cond) {
                parents.retain(|&q| q != p);
            }
        }
    }
}

/// Marginal (empty condition set) test on every edge inside the reachable
/// region of `order`; independent edges are added to `removed`.
pub fn marginal_prune<T: IndependenceTest + ?Sized>(
    snapshot: &EpnSnapshot,
    order: &CausalSearchOrder,
    test: &T,
    removed: &mut RemovedEdges,
    stats: &mut QueryStats,
) {
    let mut pruner = Pruner::new(snapshot, test, DEFAULT_COND_CAP);
    pruner.removed = core::mem::take(removed);
    for &u in order.order() {
        for &v in snapshot.children(u) {
            if !pruner.removed.contains(u, v) {
                pruner.test_edge(u, v, &[]);
            }
        }
    }
    *removed = pruner.removed;
    stats.ci_tests += pruner.stats.ci_tests;
    stats.ci_errors += pruner.stats.ci_errors;
    stats.removed_edges += pruner.stats.removed_edges;
}

/// Exhaustive search.
pub fn es_topk<T: IndependenceTest + ?Sized>(
    snapshot: &EpnSnapshot,
    causes: &[EventType],
    cfg: &QueryConfig,
    test: &T,
) -> Result<RankedPrediction, QueryError> {
    let eop = check_query(snapshot, causes, cfg)?;
    let order = causal_search_order(snapshot, eop, cfg.child_order, &RemovedEdges::default());

    let mut removed = RemovedEdges::default();
    let mut stats = QueryStats::default();
    marginal_prune(snapshot, &order, test, &mut removed, &mut stats);

    let mut pruner = Pruner::new(snapshot, test, cfg.cond_cap);
    pruner.removed = removed;
    pruner.stats = stats;

    let mut finalized = ScoreTable::new(snapshot.n_types());
    finalized.set(eop, 1.0);
    let mut buffer = Vec::with_capacity(order.len().saturating_sub(1));
    for &v in &order.order()[1..] {
        let mut parents: Vec<EventType> = snapshot
            .parents(v)
            .iter()
            .copied()
            .filter(|&p| order.contains(p) && !pruner.removed.contains(p, v))
            .collect();
        pruner.conditional(v, &mut parents);
        let s = score(snapshot, v, &parents, &finalized);
        finalized.set(v, s);
        buffer.push((v, s));
    }
    buffer.sort_by(ranked_cmp);
    buffer.truncate(cfg.k);

    Ok(RankedPrediction {
        entries: buffer,
        explored_count: order.len(),
        expanded_count: order.len(),
        considered: order.order().to_vec(),
        stats: pruner.stats,
    })
}

/// Bounded top-k buffer kept sorted by [`ranked_cmp`].
struct TopK {
    k: usize,
    entries: Vec<(EventType, f64)>,
}

impl TopK {
    fn offer(&mut self, t: EventType, s: f64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.0 == t) {
            e.1 = s;
        } else if self.entries.len() < self.k {
            self.entries.push((t, s));
        } else {
            let lowest = self.entries.last().expect("k >= 1");
            if s > lowest.1 {
                *self.entries.last_mut().unwrap() = (t, s);
            } else {
                return;
            }
        }
        self.entries.sort_by(ranked_cmp);
    }
}

/// Reduced search with early termination.
pub fn rset_topk<T: IndependenceTest + ?Sized>(
    snapshot: &EpnSnapshot,
    causes: &[EventType],
    cfg: &QueryConfig,
    test: &T,
) -> Result<RankedPrediction, QueryError> {
    let eop = check_query(snapshot, causes, cfg)?;
    let n = snapshot.n_types();
    // Plain traversal, no CI work: fixes which parents may contribute.
    let order = causal_search_order(snapshot, eop, cfg.child_order, &RemovedEdges::default());

    let mut pruner = Pruner::new(snapshot, test, cfg.cond_cap);
    let mut scores = ScoreTable::new(n);
    let mut scoring_parents: Vec<Vec<EventType>> = vec![Vec::new(); n];
    let mut visited = vec![false; n];
    let mut considered = vec![eop];
    let mut top = TopK {
        k: cfg.k,
        entries: Vec::with_capacity(cfg.k),
    };
    scores.set(eop, 1.0);
    let mut expanded = 0;

    loop {
        let mut next: Option<(EventType, f64)> = (!visited[eop.index()]).then_some((eop, 1.0));
        for &cand in &top.entries {
            if !visited[cand.0.index()] && next.map_or(true, |b| ranked_cmp(&cand, &b).is_lt()) {
                next = Some(cand);
            }
        }
        let Some((u, _)) = next else { break };
        visited[u.index()] = true;
        expanded += 1;

        for v in ordered_children(snapshot, u, cfg.child_order, &pruner.removed) {
            if v == eop || pruner.removed.contains(u, v) {
                continue;
            }
            let mut parents: Vec<EventType> = snapshot
                .parents(v)
                .iter()
                .copied()
                .filter(|&p| scores.contains(p) && !pruner.removed.contains(p, v))
                .collect();
            pruner.conditional(v, &mut parents);
            let rank_v = order.rank_or_max(v);
            parents.retain(|&p| order.rank_or_max(p) < rank_v);
            let s = score(snapshot, v, &parents, &scores);
            if !scores.contains(v) {
                considered.push(v);
            }
            let changed = scores.get(v) != Some(s);
            scores.set(v, s);
            scoring_parents[v.index()] = parents;
            top.offer(v, s);
            if changed {
                propagate(snapshot, &order, v, &mut scores, &scoring_parents, &mut top);
            }
        }
    }

    Ok(RankedPrediction {
        entries: top.entries,
        explored_count: considered.len(),
        expanded_count: expanded,
        considered,
        stats: pruner.stats,
    })
}

/// Re-scores already-scored descendants of `changed` whose score used it,
/// in causal-search-order rank so each is recomputed once.
fn propagate(
    snapshot: &EpnSnapshot,
    order: &CausalSearchOrder,
    changed: EventType,
    scores: &mut ScoreTable,
    scoring_parents: &[Vec<EventType>],
    top: &mut TopK,
) {
    let mut heap = BinaryHeap::new();
    let mut queued = BTreeSet::new();
    let push_dependents = |from: EventType,
                               heap: &mut BinaryHeap<Reverse<(usize, EventType)>>,
                               queued: &mut BTreeSet<EventType>| {
        for &w in snapshot.children(from) {
            if scoring_parents[w.index()].contains(&from) && queued.insert(w) {
                heap.push(Reverse((order.rank_or_max(w), w)));
            }
        }
    };
    push_dependents(changed, &mut heap, &mut queued);
    while let Some(Reverse((_, w))) = heap.pop() {
        queued.remove(&w);
        let s = score(snapshot, w, &scoring_parents[w.index()], scores);
        if scores.get(w) != Some(s) {
            scores.set(w, s);
            top.offer(w, s);
            push_dependents(w, &mut heap, &mut queued);
        }
    }
}
