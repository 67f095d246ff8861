//! User-based K-NN: Pearson, cosine and time-attribute cosine similarities,
//! neighbour selection and mean-centred rating prediction.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::playlog::{SongId, UserId};
use crate::ratings::{RatingMatrix, UserProfile, MAX_RATING};
use crate::scoring::{Prediction, Scorer};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityKind {
    Pearson,
    Cosine,
    UserTimeCosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborConfig {
    pub k: usize,
    /// Keep negatively correlated Pearson neighbours.
    pub keep_negative: bool,
    /// Min-max target range for the time-of-day attribute; `None` uses raw hours.
    pub time_scale: Option<(f64, f64)>,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        NeighborConfig {
            k: 15,
            keep_negative: true,
            time_scale: Some((0.0, MAX_RATING)),
        }
    }
}

type Row = [(SongId, f64)];

/// Walks two sorted sparse rows and yields the co-rated values.
fn co_rated<'a>(a: &'a Row, b: &'a Row) -> impl Iterator<Item = (f64, f64)> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let out = (a[i].1, b[j].1);
                    i += 1;
                    j += 1;
                    return Some(out);
                }
            }
        }
        None
    })
}

/// Pearson correlation over co-rated songs, centred on each user's mean rating.
/// `None` with fewer than two co-rated songs or zero co-rated variance.
pub fn pearson(a: &Row, mean_a: f64, b: &Row, mean_b: f64) -> Option<f64> {
    let (mut n, mut cov, mut var_a, mut var_b) = (0usize, 0.0, 0.0, 0.0);
    for (ra, rb) in co_rated(a, b) {
        let (da, db) = (ra - mean_a, rb - mean_b);
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
        n += 1;
    }
    if n < 2 || var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

fn norm(row: &Row) -> f64 {
    row.iter().map(|&(_, r)| r * r).sum::<f64>().sqrt()
}

/// Cosine between full rating vectors, unrated songs counting as 0.
pub fn cosine(a: &Row, b: &Row) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = co_rated(a, b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine between dense attribute vectors.
pub fn attribute_cosine(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "attribute vectors must share a dimension");
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return None;
    }
    Some((dot / (nx * ny)).clamp(-1.0, 1.0))
}

/// A user's attribute vector: one time-of-day coordinate followed by the ratings row.
#[derive(Copy, Clone, Debug)]
pub struct AttributeVector<'a> {
    pub time: f64,
    pub ratings: &'a Row,
}

/// [`attribute_cosine`] over the sparse representation.
pub fn time_attribute_cosine(a: AttributeVector<'_>, b: AttributeVector<'_>) -> Option<f64> {
    let na = (a.time * a.time + a.ratings.iter().map(|&(_, r)| r * r).sum::<f64>()).sqrt();
    let nb = (b.time * b.time + b.ratings.iter().map(|&(_, r)| r * r).sum::<f64>()).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot = a.time * b.time + co_rated(a.ratings, b.ratings).map(|(x, y)| x * y).sum::<f64>();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Time-of-day attribute per rated user, min-max scaled into `range` when given.
pub fn time_attributes(
    ratings: &RatingMatrix,
    profiles: &BTreeMap<UserId, UserProfile>,
    range: Option<(f64, f64)>,
) -> Result<BTreeMap<UserId, f64>> {
    let mut raw = BTreeMap::new();
    for u in ratings.users() {
        let p = profiles.get(&u).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "missing listening profile for user `{}`",
                ratings.vocab().user_name(u)
            ))
        })?;
        raw.insert(u, p.dtavg);
    }
    let Some((lo, hi)) = range else {
        return Ok(raw);
    };
    let min = raw.values().copied().fold(f64::INFINITY, f64::min);
    let max = raw.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(raw
        .into_iter()
        .map(|(u, t)| {
            let scaled = if max > min {
                lo + (t - min) / (max - min) * (hi - lo)
            } else {
                hi
            };
            (u, scaled)
        })
        .collect())
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub user: UserId,
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct NeighborModel {
    pub k: usize,
    pub kind: SimilarityKind,
    neighbors: BTreeMap<UserId, Vec<Neighbor>>,
}

impl NeighborModel {
    /// Ranked neighbours of `user`, best first.
    pub fn neighbors(&self, user: UserId) -> &[Neighbor] {
        self.neighbors.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Per user, the `k` best defined similarities, ties by ascending user id.
pub fn build_neighbor_model(
    ratings: &RatingMatrix,
    profiles: Option<&BTreeMap<UserId, UserProfile>>,
    kind: SimilarityKind,
    cfg: &NeighborConfig,
) -> Result<NeighborModel> {
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let users: Vec<UserId> = ratings.users().collect();
    let means: BTreeMap<UserId, f64> = users
        .iter()
        .map(|&u| (u, ratings.user_mean(u).expect("rated user")))
        .collect();
    let times = match kind {
        SimilarityKind::UserTimeCosine => {
            let profiles =
                profiles.ok_or_else(|| Error::InvalidConfig("user-time similarity needs listening profiles".into()))?;
            Some(time_attributes(ratings, profiles, cfg.time_scale)?)
        }
        _ => None,
    };

    let similarity = |a: UserId, b: UserId| -> Option<f64> {
        let (ra, rb) = (ratings.row(a), ratings.row(b));
        match kind {
            SimilarityKind::Pearson => {
                let s = pearson(ra, means[&a], rb, means[&b])?;
                (cfg.keep_negative || s >= 0.0).then_some(s)
            }
            SimilarityKind::Cosine => {
                co_rated(ra, rb).next()?;
                cosine(ra, rb)
            }
            SimilarityKind::UserTimeCosine => {
                let times = times.as_ref().expect("time attributes");
                time_attribute_cosine(
                    AttributeVector {
                        time: times[&a],
                        ratings: ra,
                    },
                    AttributeVector {
                        time: times[&b],
                        ratings: rb,
                    },
                )
            }
        }
    };

    let neighbors: BTreeMap<UserId, Vec<Neighbor>> = users
        .par_iter()
        .map(|&a| {
            let mut ranked: Vec<Neighbor> = users
                .iter()
                .filter(|&&b| b != a)
                .filter_map(|&b| similarity(a, b).map(|score| Neighbor { user: b, score }))
                .collect();
            ranked.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.user.cmp(&y.user)));
            ranked.truncate(cfg.k);
            (a, ranked)
        })
        .collect();

    Ok(NeighborModel {
        k: cfg.k,
        kind,
        neighbors,
    })
}

/// Mean-centred weighted average over the neighbours that rated `song`; the
/// active user's mean (flagged) when none did.
pub fn predict(model: &NeighborModel, ratings: &RatingMatrix, user: UserId, song: SongId) -> Result<Prediction> {
    let mean = ratings
        .user_mean(user)
        .ok_or_else(|| Error::UnknownUser(ratings.vocab().user_name(user).to_string()))?;
    let (mut num, mut den) = (0.0, 0.0);
    for n in model.neighbors(user) {
        if let Some(r) = ratings.get(n.user, song) {
            let nm = ratings.user_mean(n.user).expect("rated neighbour");
            num += n.score * (r - nm);
            den += n.score.abs();
        }
    }
    Ok(finish(mean, num, den))
}

fn finish(mean: f64, num: f64, den: f64) -> Prediction {
    if den == 0.0 {
        Prediction {
            value: mean,
            fallback: true,
        }
    } else {
        Prediction {
            value: mean + num / den,
            fallback: false,
        }
    }
}

/// A neighbour model bundled with the ratings it was built from.
#[derive(Clone, Debug)]
pub struct UserKnn {
    pub model: NeighborModel,
    ratings: RatingMatrix,
    means: BTreeMap<UserId, f64>,
}

impl UserKnn {
    pub fn fit(
        ratings: &RatingMatrix,
        profiles: Option<&BTreeMap<UserId, UserProfile>>,
        kind: SimilarityKind,
        cfg: &NeighborConfig,
    ) -> Result<Self> {
        let model = build_neighbor_model(ratings, profiles, kind, cfg)?;
        let means = ratings
            .users()
            .map(|u| (u, ratings.user_mean(u).expect("rated user")))
            .collect();
        Ok(UserKnn {
            model,
            ratings: ratings.clone(),
            means,
        })
    }

    fn mean(&self, user: UserId) -> Result<f64> {
        self.means
            .get(&user)
            .copied()
            .ok_or_else(|| Error::UnknownUser(self.ratings.vocab().user_name(user).to_string()))
    }
}

impl Scorer for UserKnn {
    fn predict(&self, user: UserId, song: SongId) -> Result<Prediction> {
        predict(&self.model, &self.ratings, user, song)
    }

    /// Accumulates each neighbour's row once instead of probing per song; the
    /// per-song summation order matches [`predict`].
    fn score_all(&self, user: UserId, candidates: &[SongId]) -> Result<Vec<f64>> {
        let mean = self.mean(user)?;
        let mut acc: HashMap<SongId, (f64, f64)> = HashMap::new();
        for n in self.model.neighbors(user) {
            let nm = self.means[&n.user];
            for &(s, r) in self.ratings.row(n.user) {
                let e = acc.entry(s).or_insert((0.0, 0.0));
                e.0 += n.score * (r - nm);
                e.1 += n.score.abs();
            }
        }
        Ok(candidates
            .iter()
            .map(|s| {
                let (num, den) = acc.get(s).copied().unwrap_or((0.0, 0.0));
                finish(mean, num, den).value
            })
            .collect())
    }
}
