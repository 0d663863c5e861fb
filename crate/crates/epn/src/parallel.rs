//! Accuracy-only replay split across threads by CRA. Timing columns are zero.

use std::collections::BTreeMap;

use epn_core::{
    replay_evaluate, Cra, EpnSnapshot, EvaluationReport, EventInstance, FrozenStore, GSquareTest, NoPruning,
    NsMode, ReplayConfig,
};
use rayon::prelude::*;

use crate::error::Result;

pub fn parallel_replay(
    test: &[EventInstance],
    snapshot: &EpnSnapshot,
    store: Option<&FrozenStore>,
    alpha: f64,
    ns_mode: NsMode,
    cfg: &ReplayConfig,
) -> Result<EvaluationReport> {
    if let Some(s) = store {
        GSquareTest::new(s, alpha, ns_mode)?;
    }
    let mut groups: BTreeMap<&Cra, Vec<EventInstance>> = BTreeMap::new();
    for e in test {
        groups.entry(&e.cra).or_default().push(e.clone());
    }
    let groups: Vec<Vec<EventInstance>> = groups.into_values().collect();
    let chunk = groups.len().div_ceil(rayon::current_num_threads() * 4).max(1);
    let zero = || 0u64;
    let parts: Vec<EvaluationReport> = groups
        .par_chunks(chunk)
        .map(|chunk| {
            let events: Vec<EventInstance> = chunk.iter().flatten().cloned().collect();
            match store {
                Some(s) => {
                    let g2 = GSquareTest::new(s, alpha, ns_mode).expect("validated above");
                    replay_evaluate(&events, snapshot, &g2, cfg, &zero)
                }
                None => replay_evaluate(&events, snapshot, &NoPruning, cfg, &zero),
            }
        })
        .collect();
    let mut report = EvaluationReport::default();
    for p in &parts {
        report.merge(p);
    }
    Ok(report)
}
