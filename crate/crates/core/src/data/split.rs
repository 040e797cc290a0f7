use zsgan_numeric::RngStream;

use crate::error::{Error, Result};

/// Seeded seen/unseen category partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub seen_fraction: f64,
    pub split_index: usize,
}

impl SplitSpec {
    pub fn new(seed: u64, split_index: usize) -> Self {
        Self {
            seed,
            seen_fraction: 0.5,
            split_index,
        }
    }
}

/// Sorted, disjoint category sets covering `0..num_categories`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Split {
    pub index: usize,
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
}

const SPLIT_STREAM_BASE: u64 = 0x5EED_0000;

pub fn make_split(num_categories: usize, spec: &SplitSpec) -> Result<Split> {
    if num_categories < 2 {
        return Err(Error::Config(format!(
            "need at least 2 categories to split, got {num_categories}"
        )));
    }
    if !(spec.seen_fraction > 0.0 && spec.seen_fraction < 1.0) {
        return Err(Error::Config(format!(
            "seen_fraction must be in (0, 1), got {}",
            spec.seen_fraction
        )));
    }
    let n_seen = (spec.seen_fraction * num_categories as f64).round() as usize;
    if n_seen == 0 || n_seen == num_categories {
        return Err(Error::Config(format!(
            "seen_fraction {} of {num_categories} categories leaves one side empty",
            spec.seen_fraction
        )));
    }
    let mut rng = RngStream::new(spec.seed, SPLIT_STREAM_BASE + spec.split_index as u64);
    let mut order: Vec<usize> = (0..num_categories).collect();
    rng.shuffle(&mut order);
    let mut seen = order[..n_seen].to_vec();
    let mut unseen = order[n_seen..].to_vec();
    seen.sort_unstable();
    unseen.sort_unstable();
    Ok(Split {
        index: spec.split_index,
        seen,
        unseen,
    })
}

/// Splits `0..num_splits` of the given seed.
pub fn make_splits(num_categories: usize, seed: u64, seen_fraction: f64, num_splits: usize) -> Result<Vec<Split>> {
    (0..num_splits)
        .map(|i| {
            make_split(
                num_categories,
                &SplitSpec {
                    seed,
                    seen_fraction,
                    split_index: i,
                },
            )
        })
        .collect()
}
