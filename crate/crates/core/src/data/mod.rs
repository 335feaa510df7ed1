//! Seeded dataset generators and ground-truth causal oracles.
//!
//! Stage-1 records carry (x, z, w) for fitting the conditional proxy
//! sampler; stage-2 records carry (x, z, y) for continuous outcomes or
//! (x, z, time, event) for survival. For synthetic benchmarks both stages
//! share the same draws by default.

mod demand;
mod sem_data;
mod survival_gen;

pub use demand::{demand_ground_truth, g_demand, generate_demand, DemandRecord, DEMAND_TEST_GRID};
pub use sem_data::generate_sem_dataset;
pub use survival_gen::{generate_survival, SurvivalCfg, SurvivalRecord};

use crate::error::{Error, Result};
use crate::seed;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One observation with treatment, proxy vectors, and stage-2 outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub x: f64,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub outcome: Outcome,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Continuous(f64),
    Survival { time: f64, event: bool },
}

impl Outcome {
    pub fn continuous(&self) -> Option<f64> {
        match self {
            Outcome::Continuous(y) => Some(*y),
            _ => None,
        }
    }

    pub fn survival(&self) -> Option<(f64, bool)> {
        match self {
            Outcome::Survival { time, event } => Some((*time, *event)),
            _ => None,
        }
    }
}

/// Records plus provenance. Stage-1 and stage-2 views are derived from the
/// same records when the stages share samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximalDataset {
    pub records: Vec<Record>,
    pub z_dim: usize,
    pub w_dim: usize,
    pub seed: u64,
    /// latent confounder per record, retained only by debug generation
    pub latent_debug: Option<Vec<f64>>,
}

impl ProximalDataset {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn of_split(&self, split: Split) -> Vec<&Record> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let mut sizes = (0, 0, 0);
        for r in &self.records {
            match r.split {
                Split::Train => sizes.0 += 1,
                Split::Val => sizes.1 += 1,
                Split::Test => sizes.2 += 1,
            }
        }
        sizes
    }
}

/// Assign split labels by a seeded shuffle. Fractions must be positive and
/// sum to one; sizes are largest-remainder rounded so the split is exact.
pub fn split(ds: &mut ProximalDataset, fractions: &[f64], seed: u64) -> Result<()> {
    if fractions.is_empty() || fractions.len() > 3 {
        return Err(Error::Config("between one and three split fractions".into()));
    }
    if fractions.iter().any(|&f| f <= 0.0) {
        return Err(Error::Config("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {}, expected 1", total)));
    }
    let n = ds.records.len();
    let mut sizes: Vec<usize> = fractions.iter().map(|f| (f * n as f64).floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    // distribute the remainder by largest fractional part, ties to the front
    let mut rema: Vec<(usize, f64)> = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| (i, f * n as f64 - (f * n as f64).floor()))
        .collect();
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(n - assigned) {
        sizes[rema[k % rema.len()].0] += 1;
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config("a split would be empty at this sample size".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, 0x73706c69)));
    let labels = [Split::Train, Split::Val, Split::Test];
    let mut cursor = 0;
    for (k, &size) in sizes.iter().enumerate() {
        for &idx in &order[cursor..cursor + size] {
            ds.records[idx].split = labels[k];
        }
        cursor += size;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(n: usize) -> ProximalDataset {
        let records = (0..n)
            .map(|i| Record {
                x: i as f64,
                z: vec![0.0],
                w: vec![0.0],
                outcome: Outcome::Continuous(0.0),
                split: Split::Train,
            })
            .collect();
        ProximalDataset { records, z_dim: 1, w_dim: 1, seed: 0, latent_debug: None }
    }

    #[test]
    fn ninety_ten_split_sizes() {
        let mut ds = toy_dataset(1000);
        split(&mut ds, &[0.9, 0.1], 0).unwrap();
        assert_eq!(ds.split_sizes(), (900, 100, 0));
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let mut a = toy_dataset(103);
        let mut b = toy_dataset(103);
        split(&mut a, &[0.6, 0.2, 0.2], 5).unwrap();
        split(&mut b, &[0.6, 0.2, 0.2], 5).unwrap();
        let (tr, va, te) = a.split_sizes();
        assert_eq!(tr + va + te, 103);
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.split, rb.split);
        }
        let mut c = toy_dataset(103);
        split(&mut c, &[0.6, 0.2, 0.2], 6).unwrap();
        assert!(a.records.iter().zip(c.records.iter()).any(|(x, y)| x.split != y.split));
    }

    #[test]
    fn bad_fractions_are_config_errors() {
        let mut ds = toy_dataset(10);
        assert!(matches!(split(&mut ds, &[0.5, 0.4], 0), Err(Error::Config(_))));
        assert!(matches!(split(&mut ds, &[1.0, 0.0], 0), Err(Error::Config(_))));
        let mut tiny = toy_dataset(3);
        assert!(matches!(split(&mut tiny, &[0.9, 0.05, 0.05], 0), Err(Error::Config(_))));
    }
}
