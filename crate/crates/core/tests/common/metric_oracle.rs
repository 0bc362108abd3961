//! Brute-force metric oracles: AUC by counting every (positive, negative) pair, NDCG by a full
//! descending sort that keeps input order among equal scores.

use outfitrank::metrics::{auc, ndcg, RankedList};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn ndcg_sort(scores: &[f64], labels: &[bool]) -> f64 {
    // 1-based position of each positive after sorting
    let mut ranks: Vec<usize> = (0..scores.len())
        .filter(|&i| labels[i])
        .map(|i| {
            let ahead = (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            ahead + 1
        })
        .collect();
    ranks.sort_unstable();
    let dcg: f64 = ranks.iter().map(|&r| 1.0 / ((r + 1) as f64).log2()).sum();
    let ideal: f64 = (1..=ranks.len()).map(|r| 1.0 / ((r + 1) as f64).log2()).sum();
    dcg / ideal
}

#[derive(Debug, Default)]
pub struct MetricAgreement {
    pub lists: usize,
    pub auc_mismatches: usize,
    pub ndcg_mismatches: usize,
    pub worked_auc: f64,
    pub worked_ndcg: f64,
}

/// Compares the library metrics with the oracles on random lists with frequent ties.
pub fn agreement(seed: u64, lists: usize) -> MetricAgreement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = MetricAgreement { lists, ..MetricAgreement::default() };
    for _ in 0..lists {
        let n = rng.random_range(2..60);
        let coarse = rng.random_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { rng.random_range(0..5) as f64 / 4.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        labels[0] = true;
        labels[n - 1] = false;
        let list = RankedList::new(scores.clone(), labels.clone()).unwrap();
        if auc(&list).unwrap() != auc_pairs(&scores, &labels) {
            out.auc_mismatches += 1;
        }
        if ndcg(&list).unwrap() != ndcg_sort(&scores, &labels) {
            out.ndcg_mismatches += 1;
        }
    }
    // one misordered pair out of four
    let l = RankedList::new(vec![0.9, 0.4, 0.5, 0.1], vec![true, true, false, false]).unwrap();
    out.worked_auc = auc(&l).unwrap();
    // the only positive sits in second place: 1 / log2(3)
    let l = RankedList::new(vec![0.2, 0.8, 0.1], vec![true, false, false]).unwrap();
    out.worked_ndcg = ndcg(&l).unwrap();
    out
}
