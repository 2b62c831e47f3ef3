use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{GraphRecord, Ratios};
use crate::error::{invalid, Result};
use crate::training::Target;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    /// Seeded shuffle, then contiguous cuts.
    #[default]
    Random,
    /// Cuts every class separately, so each split keeps the class
    /// proportions within one sample per class.
    Stratified,
    /// Shuffles and cuts groups, so records sharing a group stay together.
    /// Records without a group form singleton groups.
    Grouped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Sizes of the three parts of `n` items, from rounded cumulative ratios.
/// Each size is within 1 of `n * ratio` and the sizes sum to `n`.
pub fn cut_sizes(n: usize, ratios: &Ratios) -> [usize; 3] {
    let r = ratios.as_array();
    let b1 = ((n as f64) * r[0] as f64).round() as usize;
    let b2 = ((n as f64) * (r[0] + r[1]) as f64).round() as usize;
    let (b1, b2) = (b1.min(n), b2.min(n).max(b1.min(n)));
    [b1, b2 - b1, n - b2]
}

fn cut<T: Clone>(items: &[T], ratios: &Ratios) -> [Vec<T>; 3] {
    let [a, b, _] = cut_sizes(items.len(), ratios);
    [items[..a].to_vec(), items[a..a + b].to_vec(), items[a + b..].to_vec()]
}

/// Splits records into train, validation and test sets. Deterministic in
/// `seed`.
pub fn split(
    records: &[GraphRecord],
    ratios: &Ratios,
    seed: u64,
    strategy: SplitStrategy,
) -> Result<Splits<GraphRecord>> {
    ratios.validate()?;
    let parts = ratios.as_array().iter().filter(|&&r| r > 0.0).count();
    if records.len() < parts {
        return Err(invalid(format!(
            "{} records cannot fill {parts} nonempty splits",
            records.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let index_parts: [Vec<usize>; 3] = match strategy {
        SplitStrategy::Random => {
            let mut idx: Vec<usize> = (0..records.len()).collect();
            idx.shuffle(&mut rng);
            cut(&idx, ratios)
        }
        SplitStrategy::Stratified => {
            let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, r) in records.iter().enumerate() {
                match r.label {
                    Target::Class(c) => classes.entry(c).or_default().push(i),
                    Target::Value(_) => return Err(invalid("stratified splits need class labels")),
                }
            }
            let mut out: [Vec<usize>; 3] = Default::default();
            for (_, mut members) in classes {
                members.shuffle(&mut rng);
                for (acc, part) in out.iter_mut().zip(cut(&members, ratios)) {
                    acc.extend(part);
                }
            }
            for part in &mut out {
                part.shuffle(&mut rng);
            }
            out
        }
        SplitStrategy::Grouped => {
            let mut groups: BTreeMap<(u8, String), Vec<usize>> = BTreeMap::new();
            for (i, r) in records.iter().enumerate() {
                let key = match &r.group {
                    Some(g) => (0, g.clone()),
                    None => (1, format!("{i:020}")),
                };
                groups.entry(key).or_default().push(i);
            }
            let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
            groups.shuffle(&mut rng);
            cut(&groups, ratios).map(|gs| gs.into_iter().flatten().collect())
        }
    };
    let [train, val, test] = index_parts.map(|idx| idx.into_iter().map(|i| records[i].clone()).collect());
    Ok(Splits { train, val, test })
}
