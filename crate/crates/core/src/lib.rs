//! Streaming construction of event precedence networks (EPNs) and top-k
//! "most likely next event" queries over them.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! outside world (parsers, files, clocks, threads) lives in the `epn` crate.
//!
//! Pipeline:
//!
//! 1. [`stream`] groups timestamped events into partitioned windows keyed by
//!    their common relational attribute (CRA).
//! 2. [`epn`] counts consecutive event-type pairs per partition and turns the
//!    frequency matrix into conditional probabilities.
//! 3. [`citest`] keeps a bounded sample of per-partition presence vectors and
//!    answers G² conditional-independence questions over them.
//! 4. [`query`] runs the exhaustive (ES) and reduced early-terminating (RSET)
//!    top-k searches, pruning edges at query time with the CI tests.
//! 5. [`eval`] splits streams, replays test data and scores predictions.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod citest;
pub mod epn;
pub mod eval;
pub mod query;
pub mod stream;

pub use citest::{
    chi2_quantile, cmi, g2_statistic, is_independent, CiError, FnTest, FrozenStore, GSquareTest,
    IndependenceTest, IndependenceVerdict, Memoized, NoPruning, NsMode, PresenceSampleStore,
    PresenceVector, DEFAULT_ALPHA,
};
pub use epn::{generate_graph, observe, update, EpnBuilder, EpnError, EpnSnapshot, FrequencyMatrix};
pub use eval::{
    default_ks, hit_or_miss, replay_evaluate, replay_with_store, split, weighted_hit, Algorithm,
    CellKey, CellStats, DeltaBucket, EvaluationReport, ReplayConfig, SplitSpec,
};
pub use query::{
    causal_search_order, es_topk, marginal_prune, rset_topk, score, CausalSearchOrder,
    ChildOrder, QueryConfig, QueryError, QueryStats, RankedPrediction, RemovedEdges, ScoreTable,
    DEFAULT_COND_CAP,
};
pub use stream::{
    ClosedWindow, Cra, EventInstance, EventType, Partition, PartitionedWindow, StreamError,
    Timestamp, TypeRegistry, WindowAssembler,
};
