//! Per-class K-shot episode sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ClozeInstance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotEpisode {
    pub k: usize,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub dev_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Samples up to `k` instances per `(event_type, role)` class into train and
/// up to `k` more into dev, uniformly without replacement. Everything else is
/// test. Id lists keep corpus order.
pub fn sample_few_shot(instances: &[ClozeInstance], k: usize, seed: u64) -> Result<FewShotEpisode> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if instances.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut classes: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        classes
            .entry((inst.event_type.as_str(), inst.gold_label()))
            .or_default()
            .push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![2u8; instances.len()];
    for ((event_type, role), mut members) in classes {
        if members.len() < k {
            log::warn!(
                "class {event_type}/{role} has {} instances, fewer than k = {k}; using all for train",
                members.len()
            );
        }
        members.shuffle(&mut rng);
        for (rank, idx) in members.into_iter().enumerate() {
            assignment[idx] = match rank / k {
                0 => 0,
                1 => 1,
                _ => 2,
            };
        }
    }

    let ids = |which: u8| -> Vec<String> {
        instances
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == which)
            .map(|(inst, _)| inst.instance_id.clone())
            .collect()
    };
    Ok(FewShotEpisode {
        k,
        seed,
        train_ids: ids(0),
        dev_ids: ids(1),
        test_ids: ids(2),
    })
}
