//! Run-time conditional-independence testing.
//!
//! Random variables are binary presence indicators: for every recorded
//! partition, "did type `t` occur at least once". The store keeps the most
//! recent `capacity` presence vectors; a query works on a [`FrozenStore`], a
//! histogram of the distinct vectors taken at query start.
//!
//! `X ⫫ Y | C` is decided with `G² = 2 · N_s · ln 2 · CMI(X; Y | C)` against
//! the chi-squared critical value with `2^|C|` degrees of freedom.

mod chi2;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::f64::consts::LN_2;
use core::fmt;

use crate::stream::{ClosedWindow, EventType, Partition};

pub use chi2::{chi2_cdf, chi2_quantile, gamma_p};

/// Default significance (quantile) level.
pub const DEFAULT_ALPHA: f64 = 0.95;
pub const DEFAULT_CAPACITY: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum CiError {
    NoSamples,
    SameVariable(EventType),
    ConditionContainsTarget(EventType),
    UnknownType(EventType),
    ZeroDegreesOfFreedom,
    InvalidAlpha(f64),
    /// Condition set too large for the contingency table.
    ConditionTooLarge(usize),
}

impl fmt::Display for CiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CiError::NoSamples => f.write_str("presence store holds no samples"),
            CiError::SameVariable(t) => write!(f, "x and y are both {t}"),
            CiError::ConditionContainsTarget(t) => {
                write!(f, "condition set contains tested variable {t}")
            }
            CiError::UnknownType(t) => write!(f, "{t} is outside the store's type range"),
            CiError::ZeroDegreesOfFreedom => f.write_str("degrees of freedom must be >= 1"),
            CiError::InvalidAlpha(a) => write!(f, "alpha must lie in (0, 1), got {a}"),
            CiError::ConditionTooLarge(n) => write!(f, "condition set of {n} variables is too large"),
        }
    }
}

impl core::error::Error for CiError {}

/// One bit per event type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PresenceVector {
    n: usize,
    words: Vec<u64>,
}

impl PresenceVector {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn from_types(n: usize, types: impl IntoIterator<Item = EventType>) -> Self {
        let mut v = Self::new(n);
        for t in types {
            v.set(t);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Types outside `1..=n` are ignored.
    pub fn set(&mut self, t: EventType) {
        let i = t.index();
        if t.0 >= 1 && i < self.n {
            self.words[i / 64] |= 1 << (i % 64);
        }
    }

    #[inline]
    pub fn contains(&self, t: EventType) -> bool {
        let i = t.index();
        t.0 >= 1 && i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn from_words(n: usize, mut words: Vec<u64>) -> Self {
        words.resize(n.div_ceil(64), 0);
        if n % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
        Self { n, words }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }
}

/// Bounded ring of recent presence vectors, oldest evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct PresenceSampleStore {
    n: usize,
    capacity: usize,
    samples: VecDeque<PresenceVector>,
    n_events_total: u64,
}

impl PresenceSampleStore {
    pub fn new(n: usize, capacity: usize) -> Self {
        Self {
            n,
            capacity: capacity.max(1),
            samples: VecDeque::new(),
            n_events_total: 0,
        }
    }

    pub fn n_types(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Event instances seen over the store's lifetime, evicted ones included.
    pub fn n_events_total(&self) -> u64 {
        self.n_events_total
    }

    pub fn samples(&self) -> impl Iterator<Item = &PresenceVector> {
        self.samples.iter()
    }

    pub fn push(&mut self, sample: PresenceVector, events: u64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        self.n_events_total += events;
    }

    pub fn record_partition(&mut self, partition: &Partition) {
        let v = PresenceVector::from_types(self.n, partition.events.iter().map(|e| e.event_type));
        self.push(v, partition.events.len() as u64);
    }

    /// One sample per partition of `window`, with the carried seed counted as
    /// present (it is part of the sequence the pairs were counted on).
    pub fn record_window(&mut self, window: &ClosedWindow) {
        for (_, seed, events) in window.sequences() {
            let types = seed
                .into_iter()
                .chain(events.iter())
                .map(|e| e.event_type);
            let v = PresenceVector::from_types(self.n, types);
            self.push(v, events.len() as u64);
        }
    }

    pub fn set_events_total(&mut self, n: u64) {
        self.n_events_total = n;
    }

    pub fn freeze(&self) -> FrozenStore {
        let mut hist: BTreeMap<&PresenceVector, u64> = BTreeMap::new();
        for s in &self.samples {
            *hist.entry(s).or_default() += 1;
        }
        FrozenStore {
            n: self.n,
            cells: hist.into_iter().map(|(v, c)| (v.clone(), c)).collect(),
            n_samples: self.samples.len() as u64,
            n_events_total: self.n_events_total,
        }
    }
}

/// Read-only histogram of distinct presence vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStore {
    n: usize,
    cells: Vec<(PresenceVector, u64)>,
    n_samples: u64,
    n_events_total: u64,
}

impl FrozenStore {
    pub fn n_types(&self) -> usize {
        self.n
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn n_events_total(&self) -> u64 {
        self.n_events_total
    }

    pub fn distinct(&self) -> usize {
        self.cells.len()
    }

    /// Number of samples in which `t` is present.
    pub fn marginal(&self, t: EventType) -> u64 {
        self.cells
            .iter()
            .filter(|(v, _)| v.contains(t))
            .map(|(_, c)| c)
            .sum()
    }

    pub fn n_s(&self, mode: NsMode) -> u64 {
        match mode {
            NsMode::Samples => self.n_samples,
            NsMode::EventInstances => self.n_events_total,
        }
    }
}

/// What `N_s` counts in the G² statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NsMode {
    /// Number of presence samples in the store.
    #[default]
    Samples,
    /// Total event instances seen.
    EventInstances,
}

const MAX_COND: usize = 24;

fn check_args(x: EventType, y: EventType, cond: &[EventType], n: usize) -> Result<(), CiError> {
    if x == y {
        return Err(CiError::SameVariable(x));
    }
    for &t in [x, y].iter().chain(cond) {
        if t.0 == 0 || t.index() >= n {
            return Err(CiError::UnknownType(t));
        }
    }
    if let Some(&t) = cond.iter().find(|&&c| c == x || c == y) {
        return Err(CiError::ConditionContainsTarget(t));
    }
    if cond.len() > MAX_COND {
        return Err(CiError::ConditionTooLarge(cond.len()));
    }
    Ok(())
}

/// Conditional mutual information `CMI(X; Y | C)` in bits with
/// maximum-likelihood probabilities. Empty cells contribute nothing.
pub fn cmi(x: EventType, y: EventType, cond: &[EventType], store: &FrozenStore) -> Result<f64, CiError> {
    check_args(x, y, cond, store.n)?;
    if store.n_samples == 0 {
        return Err(CiError::NoSamples);
    }
    let mut cond: Vec<EventType> = cond.to_vec();
    cond.sort_unstable();
    cond.dedup();

    let mut counts = vec![0u64; 4 << cond.len()];
    for (v, c) in &store.cells {
        let mut idx = v.contains(x) as usize | (v.contains(y) as usize) << 1;
        for (i, &t) in cond.iter().enumerate() {
            idx |= (v.contains(t) as usize) << (2 + i);
        }
        counts[idx] += c;
    }

    let total = store.n_samples as f64;
    let mut sum = 0.0;
    for block in counts.chunks_exact(4) {
        let n_c = (block[0] + block[1] + block[2] + block[3]) as f64;
        if n_c == 0.0 {
            continue;
        }
        for xv in 0..2 {
            for yv in 0..2 {
                let n_xyc = block[xv | yv << 1];
                if n_xyc == 0 {
                    continue;
                }
                let n_xc = (block[xv] + block[xv | 2]) as f64;
                let n_yc = (block[yv << 1] + block[1 | yv << 1]) as f64;
                let n_xyc = n_xyc as f64;
                sum += n_xyc / total * libm::log2(n_xyc * n_c / (n_xc * n_yc));
            }
        }
    }
    Ok(sum.max(0.0))
}

pub fn g2_statistic(cmi_bits: f64, n_s: u64) -> f64 {
    2.0 * n_s as f64 * LN_2 * cmi_bits
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependenceVerdict {
    pub independent: bool,
    pub cmi_bits: f64,
    pub g2: f64,
    pub df: u64,
    pub threshold: f64,
}

fn distinct_len(cond: &[EventType]) -> usize {
    let mut c = cond.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

/// Degrees of freedom for binary variables: `(2-1)(2-1) · 2^|C|`.
pub fn degrees_of_freedom(cond_len: usize) -> u64 {
    1u64 << cond_len
}

pub fn is_independent(
    x: EventType,
    y: EventType,
    cond: &[EventType],
    store: &FrozenStore,
    alpha: f64,
    ns_mode: NsMode,
) -> Result<IndependenceVerdict, CiError> {
    let cmi_bits = cmi(x, y, cond, store)?;
    let df = degrees_of_freedom(distinct_len(cond));
    let threshold = chi2_quantile(df, alpha)?;
    Ok(verdict(cmi_bits, store.n_s(ns_mode), df, threshold))
}

fn verdict(cmi_bits: f64, n_s: u64, df: u64, threshold: f64) -> IndependenceVerdict {
    let g2 = g2_statistic(cmi_bits, n_s);
    IndependenceVerdict {
        independent: g2 <= threshold,
        cmi_bits,
        g2,
        df,
        threshold,
    }
}

/// The predicate queries prune with.
pub trait IndependenceTest {
    /// `true` when `x` and `y` are judged independent given `cond`.
    fn independent(&self, x: EventType, y: EventType, cond: &[EventType]) -> Result<bool, CiError>;
}

impl<T: IndependenceTest + ?Sized> IndependenceTest for &T {
    fn independent(&self, x: EventType, y: EventType, cond: &[EventType]) -> Result<bool, CiError> {
        (**self).independent(x, y, cond)
    }
}

/// Disables pruning: every pair is dependent.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPruning;

impl IndependenceTest for NoPruning {
    fn independent(&self, _: EventType, _: EventType, _: &[EventType]) -> Result<bool, CiError> {
        Ok(false)
    }
}

/// Adapter for closures, mostly for tests and scripted scenarios.
pub struct FnTest<F>(pub F);

impl<F> IndependenceTest for FnTest<F>
where
    F: Fn(EventType, EventType, &[EventType]) -> bool,
{
    fn independent(&self, x: EventType, y: EventType, cond: &[EventType]) -> Result<bool, CiError> {
        Ok((self.0)(x, y, cond))
    }
}

/// G² test over a frozen store.
#[derive(Debug)]
pub struct GSquareTest<'a> {
    store: &'a FrozenStore,
    alpha: f64,
    ns_mode: NsMode,
    thresholds: RefCell<BTreeMap<u64, f64>>,
}

impl<'a> GSquareTest<'a> {
    pub fn new(store: &'a FrozenStore, alpha: f64, ns_mode: NsMode) -> Result<Self, CiError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CiError::InvalidAlpha(alpha));
        }
        Ok(Self {
            store,
            alpha,
            ns_mode,
            thresholds: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn store(&self) -> &FrozenStore {
        self.store
    }

    fn threshold(&self, df: u64) -> Result<f64, CiError> {
        if let Some(&t) = self.thresholds.borrow().get(&df) {
            return Ok(t);
        }
        let t = chi2_quantile(df, self.alpha)?;
        self.thresholds.borrow_mut().insert(df, t);
        Ok(t)
    }

    pub fn verdict(&self, x: EventType, y: EventType, cond: &[EventType]) -> Result<IndependenceVerdict, CiError> {
        let cmi_bits = cmi(x, y, cond, self.store)?;
        let df = degrees_of_freedom(distinct_len(cond));
        Ok(verdict(cmi_bits, self.store.n_s(self.ns_mode), df, self.threshold(df)?))
    }
}

impl IndependenceTest for GSquareTest<'_> {
    fn independent(&self, x: EventType, y: EventType, cond: &[EventType]) -> Result<bool, CiError> {
        self.verdict(x, y, cond).map(|v| v.independent)
    }
}

type MemoKey = (EventType, EventType, Vec<EventType>);

/// Caches verdicts of a test whose answers do not change, e.g. a G² test on
/// a store that stays frozen for a whole replay. The test is symmetric in
/// `x`/`y` and in the order of `cond`, so keys are normalized.
pub struct Memoized<T> {
    inner: T,
    cache: RefCell<BTreeMap<MemoKey, bool>>,
    hits: core::cell::Cell<u64>,
}

impl<T: IndependenceTest> Memoized<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            cache: RefCell::new(BTreeMap::new()),
            hits: core::cell::Cell::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.get()
    }

    pub fn cached(&self) -> usize {
        self.cache.borrow().len()
    }
}

impl<T: IndependenceTest> IndependenceTest for Memoized<T> {
    fn independent(&self, x: EventType, y: EventType, cond: &[EventType]) -> Result<bool, CiError> {
        let mut c = cond.to_vec();
        c.sort_unstable();
        let key = (x.min(y), x.max(y), c);
        if let Some(&v) = self.cache.borrow().get(&key) {
            self.hits.set(self.hits.get() + 1);
            return Ok(v);
        }
        let v = self.inner.independent(x, y, cond)?;
        self.cache.borrow_mut().insert(key, v);
        Ok(v)
    }
}
