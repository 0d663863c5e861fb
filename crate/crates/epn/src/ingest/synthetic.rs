//! Seeded Markov streams with a known transition matrix.

use epn_core::{Cra, EventInstance, EventType, Timestamp, TypeRegistry};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, ParseStats};
use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-9;

fn default_max_len() -> usize {
    1000
}

/// `transition[i][j]` is the chance that type `i+1` is followed by `j+1`;
/// `absorb_prob[i]` is the chance the walk stops after `i+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default)]
    pub names: Option<Vec<String>>,
    pub transition: Vec<Vec<f64>>,
    pub absorb_prob: Vec<f64>,
    /// Start-type weights; uniform when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    pub n_partitions: usize,
    pub seed: u64,
    /// Walks are cut at this many events.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

impl SyntheticSpec {
    pub fn n_types(&self) -> usize {
        self.transition.len()
    }

    /// Deterministic `E1 -> E2 -> ... -> En`, every walk starting at `E1`.
    pub fn chain(n: usize, n_partitions: usize, seed: u64) -> Self {
        let mut transition = vec![vec![0.0; n]; n];
        let mut absorb_prob = vec![0.0; n];
        for i in 0..n {
            if i + 1 < n {
                transition[i][i + 1] = 1.0;
            } else {
                absorb_prob[i] = 1.0;
            }
        }
        let mut start = vec![0.0; n];
        start[0] = 1.0;
        Self {
            names: None,
            transition,
            absorb_prob,
            start: Some(start),
            n_partitions,
            seed,
            max_len: default_max_len(),
        }
    }

    /// Random sparse matrix: each row has `out_degree` successors with random
    /// weights, scaled to leave `absorb` for termination.
    pub fn random(n: usize, out_degree: usize, absorb: f64, n_partitions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fa7e1);
        let mut transition = vec![vec![0.0; n]; n];
        for (i, row) in transition.iter_mut().enumerate() {
            let mut targets: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let d = out_degree.min(targets.len());
            let (picked, _) = targets.partial_shuffle(&mut rng, d);
            let w: Vec<f64> = picked.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (&j, wj) in picked.iter().zip(&w) {
                row[j] = wj / total * (1.0 - absorb);
            }
        }
        let absorb_prob = transition
            .iter()
            .map(|r| if r.iter().sum::<f64>() > 0.0 { absorb } else { 1.0 })
            .collect();
        Self {
            names: None,
            transition,
            absorb_prob,
            start: None,
            n_partitions,
            seed,
            max_len: default_max_len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_types();
        let bad = |m: String| Err(Error::Invalid(m));
        if n == 0 {
            return bad("synthetic spec needs at least one type".into());
        }
        if self.absorb_prob.len() != n {
            return bad(format!("absorb_prob has {} entries, expected {n}", self.absorb_prob.len()));
        }
        if let Some(names) = &self.names {
            if names.len() != n {
                return bad(format!("names has {} entries, expected {n}", names.len()));
            }
        }
        if let Some(s) = &self.start {
            if s.len() != n || s.iter().any(|&w| !(w >= 0.0)) || s.iter().sum::<f64>() <= 0.0 {
                return bad("start weights must be n non-negative values with a positive sum".into());
            }
        }
        if self.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != n {
                return bad(format!("transition row {} has {} entries", i + 1, row.len()));
            }
            if row[i] != 0.0 {
                return bad(format!("transition row {} has a self-loop", i + 1));
            }
            let a = self.absorb_prob[i];
            if row.iter().chain([&a]).any(|&p| !(0.0..=1.0).contains(&p)) {
                return bad(format!("row {} has a probability outside [0, 1]", i + 1));
            }
            let total: f64 = row.iter().sum::<f64>() + a;
            if (total - 1.0).abs() > ROW_TOL {
                return bad(format!("row {} plus absorb sums to {total}", i + 1));
            }
        }
        Ok(())
    }

    /// Ground-truth `P(j | i)` over non-terminal successors, which is what a
    /// learned network estimates. Rows that always absorb are zero.
    pub fn conditional(&self) -> Vec<Vec<f64>> {
        self.transition
            .iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(|&p| if s > 0.0 { p / s } else { 0.0 }).collect()
            })
            .collect()
    }

    pub fn registry(&self) -> TypeRegistry {
        match &self.names {
            Some(names) => {
                let mut r = TypeRegistry::new();
                for n in names {
                    r.register(n);
                }
                r
            }
            None => TypeRegistry::numbered(self.n_types()),
        }
    }
}

/// Samples one walk per partition. Partition `p` is CRA `p`, its `j`-th
/// event has timestamp `j`; the stream is ordered by timestamp, then CRA.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vec<Vec<f64>>)> {
    spec.validate()?;
    let n = spec.n_types();
    let registry = spec.registry();
    if registry.len() != n {
        return Err(Error::Invalid("type names must be distinct".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let start = WeightedIndex::new(spec.start.clone().unwrap_or_else(|| vec![1.0; n]))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let rows: Vec<Option<WeightedIndex<f64>>> = spec
        .transition
        .iter()
        .map(|r| WeightedIndex::new(r).ok())
        .collect();

    let mut walks: Vec<Vec<usize>> = Vec::with_capacity(spec.n_partitions);
    for _ in 0..spec.n_partitions {
        let mut cur = start.sample(&mut rng);
        let mut walk = vec![cur];
        while walk.len() < spec.max_len {
            let Some(next) = &rows[cur] else { break };
            if rng.gen::<f64>() < spec.absorb_prob[cur] {
                break;
            }
            cur = next.sample(&mut rng);
            walk.push(cur);
        }
        walks.push(walk);
    }

    let mut events = Vec::with_capacity(walks.iter().map(Vec::len).sum());
    for (p, walk) in walks.iter().enumerate() {
        for (j, &t) in walk.iter().enumerate() {
            let ts = Timestamp::new((j + 1) as f64).expect("finite");
            events.push(EventInstance::new(ts, EventType::from_index(t), Cra::Int(p as i64 + 1)));
        }
    }
    events.sort_by_key(|e| e.timestamp);
    let stats = ParseStats {
        records: events.len() as u64,
        accepted: events.len() as u64,
        events: events.len() as u64,
        ..Default::default()
    };
    Ok((
        Dataset {
            registry,
            events,
            stats,
        },
        spec.transition.clone(),
    ))
}
