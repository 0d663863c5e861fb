//! Train/test splitting, accuracy metrics and test-stream replay.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::citest::{GSquareTest, IndependenceTest, Memoized, NsMode, PresenceSampleStore};
use crate::epn::EpnSnapshot;
use crate::query::{es_topk, rset_topk, QueryConfig, QueryError, RankedPrediction};
use crate::stream::{Cra, EventInstance, EventType};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Share of CRAs assigned to training, in `(0, 1)`.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cra_hash(cra: &Cra, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    cra.hash_bytes(|bytes| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    });
    splitmix64(h ^ splitmix64(seed))
}

/// Assigns whole CRAs to train or test by a seeded hash order. Each side keeps
/// the input order of its events.
pub fn split(stream: &[EventInstance], spec: &SplitSpec) -> (Vec<EventInstance>, Vec<EventInstance>) {
    let cras: BTreeSet<&Cra> = stream.iter().map(|e| &e.cra).collect();
    let mut keyed: Vec<(u64, &Cra)> = cras.into_iter().map(|c| (cra_hash(c, spec.seed), c)).collect();
    keyed.sort();
    let frac = spec.train_fraction.clamp(0.0, 1.0);
    let n_train = libm::round(frac * keyed.len() as f64) as usize;
    let train_set: BTreeSet<&Cra> = keyed[..n_train].iter().map(|&(_, c)| c).collect();
    let (train, test): (Vec<&EventInstance>, Vec<&EventInstance>) =
        stream.iter().partition(|e| train_set.contains(&e.cra));
    (
        train.into_iter().cloned().collect(),
        test.into_iter().cloned().collect(),
    )
}

/// 1 if `observed` is anywhere in the prediction.
pub fn hit_or_miss(observed: EventType, prediction: &RankedPrediction) -> f64 {
    if prediction.contains(observed) {
        1.0
    } else {
        0.0
    }
}

/// Score of `observed` relative to the best score in the list; 0 on a miss.
pub fn weighted_hit(observed: EventType, prediction: &RankedPrediction) -> f64 {
    let Some(s) = prediction.score_of(observed) else {
        return 0.0;
    };
    let max = prediction.max_score().unwrap_or(0.0);
    if max > 0.0 {
        (s / max).min(1.0)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Es,
    Rset,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Es, Algorithm::Rset];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Es => "es",
            Algorithm::Rset => "rset",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "es" | "ES" => Some(Algorithm::Es),
            "rset" | "RSET" => Some(Algorithm::Rset),
            _ => None,
        }
    }

    pub fn run<T: IndependenceTest + ?Sized>(
        self,
        snapshot: &EpnSnapshot,
        causes: &[EventType],
        cfg: &QueryConfig,
        test: &T,
    ) -> Result<RankedPrediction, QueryError> {
        match self {
            Algorithm::Es => es_topk(snapshot, causes, cfg, test),
            Algorithm::Rset => rset_topk(snapshot, causes, cfg, test),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bucket for the number of cause events `|C|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeltaBucket {
    Exact(u32),
    /// `|C| >= cap`.
    Overflow(u32),
    /// Every test point regardless of `|C|`.
    All,
}

impl DeltaBucket {
    pub fn of(delta: u32, max_delta: u32) -> Self {
        if delta >= max_delta {
            DeltaBucket::Overflow(max_delta)
        } else {
            DeltaBucket::Exact(delta)
        }
    }
}

impl fmt::Display for DeltaBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaBucket::Exact(d) => write!(f, "{d}"),
            DeltaBucket::Overflow(d) => write!(f, "{d}+"),
            DeltaBucket::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub algorithm: Algorithm,
    pub k: usize,
    pub delta: DeltaBucket,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CellStats {
    pub n_tests: u64,
    pub n_hits: u64,
    pub weighted_sum: f64,
    pub elapsed_ns_sum: u64,
    pub explored_sum: u64,
    pub expanded_sum: u64,
}

impl CellStats {
    pub fn record(&mut self, observed: EventType, p: &RankedPrediction, elapsed_ns: u64) {
        self.n_tests += 1;
        self.n_hits += hit_or_miss(observed, p) as u64;
        self.weighted_sum += weighted_hit(observed, p);
        self.elapsed_ns_sum += elapsed_ns;
        self.explored_sum += p.explored_count as u64;
        self.expanded_sum += p.expanded_count as u64;
    }

    pub fn merge(&mut self, other: &CellStats) {
        self.n_tests += other.n_tests;
        self.n_hits += other.n_hits;
        self.weighted_sum += other.weighted_sum;
        self.elapsed_ns_sum += other.elapsed_ns_sum;
        self.explored_sum += other.explored_sum;
        self.expanded_sum += other.expanded_sum;
    }

    fn ratio(num: f64, n: u64) -> f64 {
        if n == 0 {
            0.0
        } else {
            num / n as f64
        }
    }

    pub fn hit_or_miss(&self) -> f64 {
        Self::ratio(self.n_hits as f64, self.n_tests)
    }

    pub fn weighted(&self) -> f64 {
        Self::ratio(self.weighted_sum, self.n_tests)
    }

    pub fn mean_elapsed_ns(&self) -> f64 {
        Self::ratio(self.elapsed_ns_sum as f64, self.n_tests)
    }

    pub fn mean_explored(&self) -> f64 {
        Self::ratio(self.explored_sum as f64, self.n_tests)
    }

    pub fn mean_expanded(&self) -> f64 {
        Self::ratio(self.expanded_sum as f64, self.n_tests)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub algorithms: Vec<Algorithm>,
    pub ks: Vec<usize>,
    /// `|C|` values at or above this share one overflow bucket.
    pub max_delta: u32,
    /// `k` is taken from `ks`; the rest applies to every query.
    pub query: QueryConfig,
    /// Cache CI verdicts across queries (one cache per algorithm).
    pub memoize: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            ks: default_ks(17),
            max_delta: 20,
            query: QueryConfig::default(),
            memoize: true,
        }
    }
}

/// `1,3,5,7,9` for small type universes, `1,5,10,15,20` otherwise.
pub fn default_ks(n_types: usize) -> Vec<usize> {
    if n_types <= 20 {
        alloc::vec![1, 3, 5, 7, 9]
    } else {
        alloc::vec![1, 5, 10, 15, 20]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationReport {
    pub cells: BTreeMap<CellKey, CellStats>,
    /// Test points: arriving events with at least one preceding event.
    pub test_points: u64,
    /// Events that started a fresh partition and produced no test point.
    pub skipped: u64,
    /// Events whose type is unknown to the snapshot.
    pub unknown_types: u64,
    /// One-off cost of preparing the CI store, charged to the run.
    pub setup_elapsed_ns: u64,
}

impl EvaluationReport {
    pub fn cell(&self, algorithm: Algorithm, k: usize, delta: DeltaBucket) -> Option<&CellStats> {
        self.cells.get(&CellKey { algorithm, k, delta })
    }

    pub fn record(&mut self, key: CellKey, observed: EventType, p: &RankedPrediction, elapsed_ns: u64) {
        self.cells.entry(key).or_default().record(observed, p, elapsed_ns);
        let all = CellKey {
            delta: DeltaBucket::All,
            ..key
        };
        self.cells.entry(all).or_default().record(observed, p, elapsed_ns);
    }

    pub fn merge(&mut self, other: &EvaluationReport) {
        for (k, v) in &other.cells {
            self.cells.entry(*k).or_default().merge(v);
        }
        self.test_points += other.test_points;
        self.skipped += other.skipped;
        self.unknown_types += other.unknown_types;
        self.setup_elapsed_ns += other.setup_elapsed_ns;
    }
}

/// Replays `test` in order. Each event whose CRA has already produced events
/// in the replay is a test point: the earlier events of that CRA form the
/// causes, the newest of them is the EOP, and the arriving event is the
/// observation. `clock` returns monotonic nanoseconds; only the query call is
/// timed.
pub fn replay_evaluate<T: IndependenceTest + ?Sized>(
    test: &[EventInstance],
    snapshot: &EpnSnapshot,
    ci: &T,
    cfg: &ReplayConfig,
    clock: &dyn Fn() -> u64,
) -> EvaluationReport {
    let mut report = EvaluationReport::default();
    let caches: Vec<(Algorithm, Memoized<&T>)> =
        cfg.algorithms.iter().map(|&a| (a, Memoized::new(ci))).collect();
    let mut history: BTreeMap<&Cra, Vec<EventType>> = BTreeMap::new();

    for ev in test {
        if !snapshot.contains(ev.event_type) {
            report.unknown_types += 1;
            history.remove(&ev.cra);
            continue;
        }
        let causes = history.entry(&ev.cra).or_default();
        if causes.is_empty() {
            report.skipped += 1;
            causes.push(ev.event_type);
            continue;
        }
        report.test_points += 1;
        let delta = DeltaBucket::of(causes.len() as u32, cfg.max_delta);
        for (algorithm, cache) in &caches {
            for &k in &cfg.ks {
                let qcfg = QueryConfig { k, ..cfg.query };
                let t0 = clock();
                let p = if cfg.memoize {
                    algorithm.run(snapshot, causes, &qcfg, cache)
                } else {
                    algorithm.run(snapshot, causes, &qcfg, ci)
                };
                let elapsed = clock().saturating_sub(t0);
                let Ok(p) = p else { continue };
                report.record(
                    CellKey {
                        algorithm: *algorithm,
                        k,
                        delta,
                    },
                    ev.event_type,
                    &p,
                    elapsed,
                );
            }
        }
        causes.push(ev.event_type);
    }
    report
}

/// [`replay_evaluate`] with a G² test over `store`. Freezing the store is
/// timed and charged to `setup_elapsed_ns`.
pub fn replay_with_store(
    test: &[EventInstance],
    snapshot: &EpnSnapshot,
    store: &PresenceSampleStore,
    alpha: f64,
    ns_mode: NsMode,
    cfg: &ReplayConfig,
    clock: &dyn Fn() -> u64,
) -> Result<EvaluationReport, crate::citest::CiError> {
    let t0 = clock();
    let frozen = store.freeze();
    let g2 = GSquareTest::new(&frozen, alpha, ns_mode)?;
    let setup = clock().saturating_sub(t0);
    let mut report = replay_evaluate(test, snapshot, &g2, cfg, clock);
    report.setup_elapsed_ns = setup;
    Ok(report)
}
