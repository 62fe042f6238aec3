use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffles each stratum with a seeded generator and cuts it by the configured
/// fractions (rounded per stratum).
pub fn stratified_split<T: Clone, K: Ord>(
    items: &[T],
    key: impl Fn(&T) -> K,
    spec: &SplitSpec,
) -> Result<Split<T>> {
    let fractions = [spec.train_fraction, spec.val_fraction, spec.test_fraction];
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid("split fractions must lie in [0, 1]"));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions sum to {}, expected 1",
            fractions.iter().sum::<f64>()
        )));
    }
    let mut strata: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        strata.entry(key(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (_, mut idx) in strata {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((n as f64) * spec.train_fraction).round() as usize;
        let n_val = (((n as f64) * spec.val_fraction).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        for (k, &i) in idx.iter().enumerate() {
            let bucket = if k < n_train {
                &mut out.train
            } else if k < n_train + n_val {
                &mut out.val
            } else {
                &mut out.test
            };
            bucket.push(items[i].clone());
        }
    }
    Ok(out)
}
