use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{HasUser, RatingSample, WatchHistorySample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// Shuffled samples dealt into near-equal shards.
    IidEqual,
    /// One client per user present in the data.
    PerUser,
}

/// Client id (position) → sample indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub kind: PartitionKind,
    pub clients: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, id: usize) -> &[usize] {
        &self.clients[id]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }

    /// Checks that every index in `0..sample_count` appears exactly once.
    pub fn validate(&self, sample_count: usize) -> Result<()> {
        let mut seen = vec![false; sample_count];
        for (c, idx) in self.clients.iter().enumerate() {
            if idx.is_empty() {
                return Err(Error::data(format!("client {c} has no samples")));
            }
            for &i in idx {
                if i >= sample_count || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::data(format!("sample {i} is out of range or assigned twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::data(format!("sample {i} is not assigned to any client")));
        }
        Ok(())
    }
}

/// Shuffles `0..sample_count` and deals it into `num_clients` shards whose
/// sizes differ by at most one (the first `n mod k` shards get the extra sample).
pub fn partition_iid<R: Rng + ?Sized>(sample_count: usize, num_clients: usize, rng: &mut R) -> Result<ClientPartition> {
    if num_clients == 0 || num_clients > sample_count {
        return Err(Error::config(format!(
            "cannot split {sample_count} samples into {num_clients} non-empty clients"
        )));
    }
    let mut order: Vec<usize> = (0..sample_count).collect();
    order.shuffle(rng);
    let (base, extra) = (sample_count / num_clients, sample_count % num_clients);
    let mut clients = Vec::with_capacity(num_clients);
    let mut start = 0;
    for c in 0..num_clients {
        let len = base + usize::from(c < extra);
        clients.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(ClientPartition {
        kind: PartitionKind::IidEqual,
        clients,
    })
}

/// One client per user, in ascending user id; indices keep sample order.
pub fn partition_by_user<T: HasUser>(samples: &[T]) -> Result<ClientPartition> {
    if samples.is_empty() {
        return Err(Error::data("cannot partition an empty sample set"));
    }
    let mut users: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        users.entry(s.user()).or_default().push(i);
    }
    Ok(ClientPartition {
        kind: PartitionKind::PerUser,
        clients: users.into_values().collect(),
    })
}

/// Embedding-table ids a sample reads, tagged with a table number.
pub trait EmbeddingIds {
    fn embedding_ids(&self, out: &mut Vec<(u8, u32)>);
}

impl EmbeddingIds for WatchHistorySample {
    fn embedding_ids(&self, out: &mut Vec<(u8, u32)>) {
        out.extend(self.history.iter().map(|&m| (0, m)));
    }
}

impl EmbeddingIds for RatingSample {
    fn embedding_ids(&self, out: &mut Vec<(u8, u32)>) {
        out.push((0, self.user_id));
        out.push((1, self.movie_id));
        out.extend(self.genre_ids.iter().map(|&g| (2, g)));
    }
}

/// Random train/validation split that keeps every embedding id present in
/// the data reachable from the training side.
///
/// Samples are visited in a random order; any sample introducing an id not
/// yet seen is pinned to training. The remaining training slots (up to
/// `round(train_fraction · n)`) are filled in the same random order. Both
/// sides keep the original relative order of their samples.
pub fn train_val_split<T: EmbeddingIds, R: Rng + ?Sized>(
    samples: Vec<T>,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction {train_fraction} must be in (0, 1)"
        )));
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut seen: HashSet<(u8, u32)> = HashSet::new();
    let mut in_train = vec![false; n];
    let mut ids = Vec::new();
    let mut pinned = 0usize;
    for &i in &order {
        ids.clear();
        samples[i].embedding_ids(&mut ids);
        let mut fresh = false;
        for &id in &ids {
            fresh |= seen.insert(id);
        }
        if fresh {
            in_train[i] = true;
            pinned += 1;
        }
    }
    let target = ((train_fraction * n as f64).round() as usize).max(pinned);
    let mut filled = pinned;
    for &i in &order {
        if filled >= target {
            break;
        }
        if !in_train[i] {
            in_train[i] = true;
            filled += 1;
        }
    }
    if filled == 0 || filled == n {
        return Err(Error::config(format!(
            "split of {n} samples at fraction {train_fraction} leaves one side empty"
        )));
    }
    let mut train = Vec::with_capacity(filled);
    let mut val = Vec::with_capacity(n - filled);
    for (s, t) in samples.into_iter().zip(in_train) {
        if t {
            train.push(s);
        } else {
            val.push(s);
        }
    }
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iid_ten_into_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = partition_iid(10, 3, &mut rng).unwrap();
        assert_eq!(p.sizes(), vec![4, 3, 3]);
        p.validate(10).unwrap();
    }

    #[test]
    fn iid_rejects_too_many_clients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(partition_iid(3, 4, &mut rng), Err(Error::Config(_))));
        assert!(partition_iid(3, 0, &mut rng).is_err());
    }

    #[test]
    fn split_pins_rare_ids() {
        let samples: Vec<WatchHistorySample> = (0..100)
            .map(|i| WatchHistorySample {
                user_id: i,
                history: vec![if i == 57 { 999 } else { i % 5 }],
                target: 0,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (train, val) = train_val_split(samples, 0.9, &mut rng).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(val.len(), 10);
        assert!(train.iter().any(|s| s.history == vec![999]));
    }

    #[test]
    fn split_rejects_empty_side() {
        let samples: Vec<WatchHistorySample> = (0..3)
            .map(|i| WatchHistorySample {
                user_id: 0,
                history: vec![i],
                target: 0,
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(train_val_split(samples, 0.5, &mut rng).is_err());
    }
}
