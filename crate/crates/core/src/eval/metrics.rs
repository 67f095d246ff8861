//! Rating-prediction and ranking metrics.
//!
//! Ranking metrics are generic over the item type so they can be checked on
//! plain integers as well as song ids.

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use crate::error::{Error, Result};

/// Mean absolute error over `(prediction, actual)` pairs.
pub fn mae(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation("no prediction/actual pairs".into()));
    }
    Ok(pairs.iter().map(|(p, a)| (a - p).abs()).sum::<f64>() / pairs.len() as f64)
}

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluation("no prediction/actual pairs".into()));
    }
    let mse = pairs.iter().map(|(p, a)| (a - p) * (a - p)).sum::<f64>() / pairs.len() as f64;
    Ok(mse.sqrt())
}

pub fn nmae(mae: f64, r_max: f64, r_min: f64) -> Result<f64> {
    if r_max.partial_cmp(&r_min) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidRange { max: r_max, min: r_min });
    }
    Ok(mae / (r_max - r_min))
}

/// Relevant hits in the first `k` slots over `k`; a shorter list counts the
/// missing slots as misses.
pub fn precision_at_k<T: Eq + Hash>(list: &[T], relevant: &HashSet<T>, k: usize) -> f64 {
    assert!(k >= 1, "precision cut-off must be at least 1");
    let hits = list.iter().take(k).filter(|x| relevant.contains(x)).count();
    hits as f64 / k as f64
}

/// Mean of precision at the rank of each relevant item found in the list,
/// over all relevant items (unlisted ones add 0). `None` if nothing is relevant.
pub fn average_precision<T: Eq + Hash>(list: &[T], relevant: &HashSet<T>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in list.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Discounted cumulative gain with linear gains: `sum g_i / log2(i + 1)`, i from 1.
pub fn dcg(gains: &[f64]) -> f64 {
    gains.iter().enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum()
}

/// DCG of the first `k` listed items over the ideal DCG of the user's gains
/// sorted descending and truncated to `k`. `None` when the ideal DCG is 0.
pub fn ndcg<T: Eq + Hash>(list: &[T], gains: &HashMap<T, f64>, k: usize) -> Option<f64> {
    let listed: Vec<f64> = list
        .iter()
        .take(k)
        .map(|x| gains.get(x).copied().unwrap_or(0.0))
        .collect();
    let mut ideal: Vec<f64> = gains.values().copied().collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    ideal.truncate(k);
    let idcg = dcg(&ideal);
    if idcg > 0.0 {
        Some(dcg(&listed) / idcg)
    } else {
        None
    }
}

/// Area under the ROC curve of scored candidates: the fraction of
/// (relevant, non-relevant) pairs where the relevant one scores higher, ties
/// counting one half. `None` without at least one of each class.
pub fn auc<T: Eq + Hash>(scored: &[(T, f64)], relevant: &HashSet<T>) -> Option<f64> {
    let mut by_score: Vec<(f64, bool)> = scored.iter().map(|(x, s)| (*s, relevant.contains(x))).collect();
    by_score.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = by_score.iter().filter(|x| x.1).count();
    let negatives = by_score.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut correct = 0.0;
    let mut negatives_below = 0usize;
    let mut i = 0;
    while i < by_score.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < by_score.len() && by_score[j].0 == by_score[i].0 {
            if by_score[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        correct += pos as f64 * negatives_below as f64 + 0.5 * pos as f64 * neg as f64;
        negatives_below += neg;
        i = j;
    }
    Some(correct / (positives as f64 * negatives as f64))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metrics() {
        let pairs = [(1.0, 2.0), (2.0, 2.0)];
        assert_eq!(mae(&pairs).unwrap(), 0.5);
        assert!((rmse(&pairs).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[(3.0, 3.0)]).unwrap(), 0.0);
        assert_eq!(rmse(&[(3.0, 3.0)]).unwrap(), 0.0);
        assert!(matches!(mae(&[]), Err(Error::EmptyEvaluation(_))));
    }

    #[test]
    fn normalised_error() {
        assert_eq!(nmae(0.5, 4.0, 0.0).unwrap(), 0.125);
        assert_eq!(nmae(0.0, 4.0, 0.0).unwrap(), 0.0);
        // Reported table row: MAE 1.265 on the 0..4 scale.
        assert!((nmae(1.265, 4.0, 0.0).unwrap() - 0.316).abs() < 5e-4);
        assert!(matches!(nmae(1.0, 1.0, 1.0), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn precision_examples() {
        let relevant: HashSet<u32> = [2, 4].into();
        assert_eq!(precision_at_k(&[1, 2, 3, 4, 5], &relevant, 5), 0.4);
        assert_eq!(precision_at_k(&[1, 3, 5], &relevant, 5), 0.0);
        assert_eq!(precision_at_k(&[2], &relevant, 5), 0.2);
    }

    #[test]
    fn average_precision_examples() {
        let one: HashSet<u32> = [7].into();
        assert_eq!(average_precision(&[7, 1, 2], &one), Some(1.0));
        assert_eq!(average_precision(&[1, 7, 2], &one), Some(0.5));
        assert_eq!(average_precision(&[1, 2], &one), Some(0.0));
        assert_eq!(average_precision(&[1, 2], &HashSet::new()), None);
    }

    #[test]
    fn ndcg_examples() {
        assert!((dcg(&[4.0, 2.0, 1.0]) - 5.76186).abs() < 1e-5);
        let gains: HashMap<u32, f64> = [(1, 4.0), (2, 2.0), (3, 1.0)].into();
        assert!((ndcg(&[1, 2, 3], &gains, 100).unwrap() - 1.0).abs() < 1e-15);
        let reversed = ndcg(&[3, 2, 1], &gains, 100).unwrap();
        assert!((reversed - (1.0 + 2.0 / 3f64.log2() + 4.0 / 2.0) / 5.76186).abs() < 1e-5);
        assert!((reversed - 0.739668).abs() < 1e-6);
        assert!((reversed - 0.74).abs() < 5e-3);
        assert_eq!(ndcg(&[8, 9], &gains, 100), Some(0.0));
        assert_eq!(ndcg(&[8, 9], &HashMap::new(), 100), None);
    }

    #[test]
    fn auc_examples() {
        let relevant: HashSet<u32> = [1, 2].into();
        let perfect = [(1, 0.9), (2, 0.8), (3, 0.3), (4, 0.1)];
        assert_eq!(auc(&perfect, &relevant), Some(1.0));
        let reversed = [(1, 0.1), (2, 0.2), (3, 0.8), (4, 0.9)];
        assert_eq!(auc(&reversed, &relevant), Some(0.0));
        let tied = [(1, 0.5), (3, 0.5)];
        assert_eq!(auc(&tied, &[1].into()), Some(0.5));
        assert_eq!(auc(&perfect, &HashSet::new()), None);
    }
}
