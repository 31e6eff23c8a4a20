//! Stratified dataset splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};

/// Per-category stratified shuffle split. Within each category, ids are
/// shuffled with the seeded RNG and sizes are assigned by largest remainder,
/// so per-category ratios hold within one node. Deterministic per seed.
pub fn split_dataset(
    labels: &[Option<usize>],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (tr, va, te) = ratios;
    if tr <= 0.0 || va <= 0.0 || te <= 0.0 {
        return Err(Error::config("split ratios must be positive"));
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "ratios must sum to 1, got {}",
            tr + va + te
        )));
    }
    let n_cat = labels
        .iter()
        .flatten()
        .copied()
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    let mut by_cat: Vec<Vec<usize>> = vec![Vec::new(); n_cat];
    for (id, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_cat[*c].push(id);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        labels: labels.to_vec(),
        ..Default::default()
    };
    for (c, ids) in by_cat.iter_mut().enumerate() {
        if ids.is_empty() {
            continue;
        }
        if ids.len() < 3 {
            return Err(Error::data(format!(
                "category {c} has only {} labeled nodes; need at least one per split part",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        let counts = largest_remainder(ids.len(), &[tr, va, te]);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        split.train_ids.extend_from_slice(&ids[..a]);
        split.val_ids.extend_from_slice(&ids[a..b]);
        split.test_ids.extend_from_slice(&ids[b..]);
    }
    split.train_ids.sort_unstable();
    split.val_ids.sort_unstable();
    split.test_ids.sort_unstable();
    Ok(split)
}

/// Integer apportionment: floors plus one extra for the largest fractional
/// remainders, then a fix-up so every part keeps at least one element.
fn largest_remainder(total: usize, ratios: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = ratios.iter().map(|r| (r * total as f64) as usize).collect();
    let mut rema: Vec<(f64, usize)> = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| (r * total as f64 - counts[i] as f64, i))
        .collect();
    rema.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let assigned: usize = counts.iter().sum();
    for k in 0..total - assigned {
        counts[rema[k % rema.len()].1] += 1;
    }
    // Every part gets at least one element; steal from the largest part.
    for i in 0..counts.len() {
        while counts[i] == 0 {
            let largest = counts
                .iter()
                .enumerate()
                .max_by_key(|(_, c)| **c)
                .map(|(j, _)| j)
                .unwrap();
            counts[largest] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels_n(n: usize, cats: usize) -> Vec<Option<usize>> {
        (0..n).map(|i| Some(i % cats)).collect()
    }

    #[test]
    fn sizes_match_ratios() {
        let labels = labels_n(10, 1);
        let split = split_dataset(&labels, (0.2, 0.1, 0.7), 7).unwrap();
        assert_eq!(split.train_ids.len(), 2);
        assert_eq!(split.val_ids.len(), 1);
        assert_eq!(split.test_ids.len(), 7);
    }

    #[test]
    fn deterministic_per_seed() {
        let labels = labels_n(40, 3);
        let a = split_dataset(&labels, (0.2, 0.1, 0.7), 7).unwrap();
        let b = split_dataset(&labels, (0.2, 0.1, 0.7), 7).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&labels, (0.2, 0.1, 0.7), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_ratios_error() {
        let labels = labels_n(10, 1);
        let err = split_dataset(&labels, (0.5, 0.5, 0.5), 0).unwrap_err();
        assert!(err.to_string().contains("ratios must sum to 1"), "{err}");
        assert!(split_dataset(&labels, (0.0, 0.3, 0.7), 0).is_err());
    }

    #[test]
    fn tiny_category_errors() {
        let mut labels = labels_n(12, 2);
        labels.push(Some(2));
        labels.push(Some(2));
        let err = split_dataset(&labels, (0.2, 0.1, 0.7), 0).unwrap_err();
        assert!(err.to_string().contains("category 2"), "{err}");
    }

    proptest! {
        #[test]
        fn stratified_within_one_node(
            n_per_cat in 3usize..40,
            cats in 1usize..5,
            seed in 0u64..50,
        ) {
            let labels = labels_n(n_per_cat * cats, cats);
            let split = split_dataset(&labels, (0.2, 0.1, 0.7), seed).unwrap();
            // Disjointness and coverage.
            let total = split.train_ids.len() + split.val_ids.len() + split.test_ids.len();
            prop_assert_eq!(total, n_per_cat * cats);
            // Per-category train share within 1 node of the exact ratio
            // (after the >=1-per-part fix-up, which can shift one more).
            for c in 0..cats {
                let in_train = split.train_ids.iter()
                    .filter(|&&id| labels[id] == Some(c)).count();
                let ideal = 0.2 * n_per_cat as f64;
                prop_assert!((in_train as f64 - ideal).abs() <= 1.0 + 1e-9,
                    "cat {} train {} ideal {}", c, in_train, ideal);
            }
        }
    }
}
