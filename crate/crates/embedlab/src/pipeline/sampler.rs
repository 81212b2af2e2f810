//! Weighted dataset sampling with per-dataset overrides and
//! deterministic epoch shuffles.
//!
//! Epoch permutations are pure functions of (binding salt, epoch), so a
//! resumed run replays the exact same order from a saved cursor.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{
    read_jsonl, ClassRecord, PairRecord, ScoredRecord, SyntheticWorld, TripletRecord,
};
use crate::error::{Error, Result};
use crate::model::checkpoint::DatasetCursor;
use crate::pipeline::config::{DatasetBinding, DatasetKind};

#[derive(Debug, Clone)]
pub enum DatasetData {
    Pairs(Vec<PairRecord>),
    Triplets(Vec<TripletRecord>),
    Scored(Vec<ScoredRecord>),
    Class(Vec<ClassRecord>),
}

impl DatasetData {
    pub fn len(&self) -> usize {
        match self {
            DatasetData::Pairs(v) => v.len(),
            DatasetData::Triplets(v) => v.len(),
            DatasetData::Scored(v) => v.len(),
            DatasetData::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A batch drawn from one dataset, with the dataset's overrides resolved.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub dataset_index: usize,
    pub data: DatasetData,
    pub batch_size: usize,
    pub max_tokens: usize,
}

#[derive(Debug)]
pub struct LoadedDataset {
    pub binding: DatasetBinding,
    pub data: DatasetData,
    pub cursor: DatasetCursor,
    order: Vec<usize>,
}

impl LoadedDataset {
    pub fn load(binding: &DatasetBinding, world: &SyntheticWorld) -> Result<Self> {
        let data = match (&binding.path, binding.kind) {
            (Some(p), DatasetKind::Pairs) => DatasetData::Pairs(read_jsonl(p)?),
            (Some(p), DatasetKind::Triplets) => DatasetData::Triplets(read_jsonl(p)?),
            (Some(p), DatasetKind::ScoredPairs) => DatasetData::Scored(read_jsonl(p)?),
            (Some(p), DatasetKind::ClassTuples) => DatasetData::Class(read_jsonl(p)?),
            (None, DatasetKind::Pairs) => {
                if binding.long_docs {
                    DatasetData::Pairs(world.gen_long_pairs(binding.size, binding.salt)?)
                } else {
                    DatasetData::Pairs(world.gen_pairs(binding.size, binding.salt)?)
                }
            }
            (None, DatasetKind::Triplets) => {
                DatasetData::Triplets(world.gen_retrieval(binding.size, binding.salt)?)
            }
            (None, DatasetKind::ScoredPairs) => {
                DatasetData::Scored(world.gen_scored_pairs(binding.size, binding.salt)?)
            }
            (None, DatasetKind::ClassTuples) => {
                DatasetData::Class(world.gen_class_tuples(binding.size, binding.salt)?)
            }
        };
        if data.is_empty() {
            return Err(Error::Config(format!("dataset {} is empty", binding.name)));
        }
        let mut ds = LoadedDataset {
            binding: binding.clone(),
            data,
            cursor: DatasetCursor::default(),
            order: Vec::new(),
        };
        ds.reshuffle();
        Ok(ds)
    }

    pub fn restore_cursor(&mut self, cursor: DatasetCursor) {
        self.cursor = cursor;
        self.reshuffle();
    }

    fn reshuffle(&mut self) {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.binding.salt ^ self.cursor.epoch.wrapping_mul(0x9e3779b97f4a7c15));
        rng.set_stream(0x5f);
        self.order = (0..self.data.len()).collect();
        self.order.shuffle(&mut rng);
    }

    /// Next `count` record indices, wrapping into a reshuffled epoch when
    /// the dataset is exhausted.
    fn next_indices(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            if self.cursor.offset as usize >= self.order.len() {
                self.cursor.epoch += 1;
                self.cursor.offset = 0;
                self.reshuffle();
            }
            out.push(self.order[self.cursor.offset as usize]);
            self.cursor.offset += 1;
        }
        out
    }

    fn take(&mut self, count: usize) -> DatasetData {
        let idx = self.next_indices(count);
        match &self.data {
            DatasetData::Pairs(v) => DatasetData::Pairs(idx.iter().map(|&i| v[i].clone()).collect()),
            DatasetData::Triplets(v) => {
                DatasetData::Triplets(idx.iter().map(|&i| v[i].clone()).collect())
            }
            DatasetData::Scored(v) => DatasetData::Scored(idx.iter().map(|&i| v[i].clone()).collect()),
            DatasetData::Class(v) => DatasetData::Class(idx.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Pick a dataset by weight and draw its next batch, applying the
/// binding's (batch_size, max_tokens) overrides.
pub fn sample_batch(
    datasets: &mut [LoadedDataset],
    default_batch: usize,
    default_max_tokens: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledBatch> {
    if datasets.is_empty() {
        return Err(Error::Contract("sample_batch: no datasets bound".into()));
    }
    let index = if datasets.len() == 1 {
        0
    } else {
        let weights: Vec<f64> = datasets.iter().map(|d| d.binding.weight).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::Config(format!("bad dataset weights: {}", e)))?;
        dist.sample(rng)
    };
    let ds = &mut datasets[index];
    let batch_size = ds.binding.batch_size.unwrap_or(default_batch);
    let max_tokens = ds.binding.max_tokens.unwrap_or(default_max_tokens);
    Ok(SampledBatch { dataset_index: index, data: ds.take(batch_size), batch_size, max_tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WorldConfig;

    fn binding(name: &str, weight: f64, size: usize, salt: u64) -> DatasetBinding {
        DatasetBinding {
            name: name.into(),
            kind: DatasetKind::Pairs,
            weight,
            size,
            salt,
            long_docs: false,
            batch_size: None,
            max_tokens: None,
            path: None,
        }
    }

    fn world() -> SyntheticWorld {
        SyntheticWorld::new(WorldConfig { seed: 5, ..Default::default() }).unwrap()
    }

    #[test]
    fn single_binding_is_always_chosen() {
        let w = world();
        let mut ds = vec![LoadedDataset::load(&binding("only", 1.0, 10, 1), &w).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_batch(&mut ds, 4, 32, &mut rng).unwrap().dataset_index, 0);
        }
    }

    #[test]
    fn zero_weight_dataset_is_never_chosen() {
        let w = world();
        let mut ds = vec![
            LoadedDataset::load(&binding("a", 1.0, 10, 1), &w).unwrap(),
            LoadedDataset::load(&binding("b", 0.0, 10, 2), &w).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            assert_eq!(sample_batch(&mut ds, 4, 32, &mut rng).unwrap().dataset_index, 0);
        }
    }

    #[test]
    fn weighted_frequencies_match_weights() {
        let w = world();
        let mut ds = vec![
            LoadedDataset::load(&binding("a", 1.0, 10, 1), &w).unwrap(),
            LoadedDataset::load(&binding("b", 3.0, 10, 2), &w).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut second = 0usize;
        let draws = 10_000;
        for _ in 0..draws {
            if sample_batch(&mut ds, 2, 32, &mut rng).unwrap().dataset_index == 1 {
                second += 1;
            }
        }
        let freq = second as f64 / draws as f64;
        assert!((freq - 0.75).abs() <= 0.02, "frequency {}", freq);
    }

    #[test]
    fn exhaustion_wraps_with_reshuffle() {
        let w = world();
        let mut ds = vec![LoadedDataset::load(&binding("a", 1.0, 5, 1), &w).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // 3 batches of 4 over a 5-record dataset crosses two epochs.
        for _ in 0..3 {
            let b = sample_batch(&mut ds, 4, 32, &mut rng).unwrap();
            assert_eq!(b.data.len(), 4);
        }
        assert!(ds[0].cursor.epoch >= 2);
    }

    #[test]
    fn overrides_are_applied() {
        let w = world();
        let mut b = binding("a", 1.0, 10, 1);
        b.batch_size = Some(2);
        b.max_tokens = Some(77);
        let mut ds = vec![LoadedDataset::load(&b, &w).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_batch(&mut ds, 16, 48, &mut rng).unwrap();
        assert_eq!(s.batch_size, 2);
        assert_eq!(s.max_tokens, 77);
        assert_eq!(s.data.len(), 2);
    }
}
