//! Shared scoring surface for every recommender, plus AllItems candidate ranking.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{Error, Result};
use crate::playlog::{SongId, UserId};
use crate::ratings::RatingMatrix;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// Set when the model had no evidence for the pair and returned its default.
    pub fallback: bool,
}

pub trait Scorer: Sync {
    fn predict(&self, user: UserId, song: SongId) -> Result<Prediction>;

    /// Scores for `candidates`, in the same order.
    fn score_all(&self, user: UserId, candidates: &[SongId]) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|&s| self.predict(user, s).map(|p| p.value))
            .collect()
    }
}

/// Score descending, then song id ascending.
pub fn ranking_order(a: &(SongId, f64), b: &(SongId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// AllItems candidates: every song rated in `train` except the user's own.
pub fn candidates(train: &RatingMatrix, catalog: &[SongId], user: UserId) -> Vec<SongId> {
    let own = train.row(user);
    catalog
        .iter()
        .copied()
        .filter(|s| own.binary_search_by_key(s, |&(x, _)| x).is_err())
        .collect()
}

/// Every AllItems candidate of `user`, scored and sorted by [`ranking_order`].
pub fn rank_candidates(
    scorer: &dyn Scorer,
    train: &RatingMatrix,
    catalog: &[SongId],
    user: UserId,
) -> Result<Vec<(SongId, f64)>> {
    if !train.has_user(user) {
        return Err(Error::UnknownUser(train.vocab().user_name(user).to_string()));
    }
    let cands = candidates(train, catalog, user);
    if cands.is_empty() {
        return Err(Error::EmptyCandidates(train.vocab().user_name(user).to_string()));
    }
    let scores = scorer.score_all(user, &cands)?;
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::DegenerateData(format!(
            "non-finite score for song `{}`",
            train.vocab().song_name(cands[bad])
        )));
    }
    let mut ranked: Vec<(SongId, f64)> = cands.into_iter().zip(scores).collect();
    ranked.sort_by(ranking_order);
    Ok(ranked)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopNList {
    pub user: UserId,
    pub items: Vec<(SongId, f64)>,
    pub n: usize,
}

impl TopNList {
    pub fn from_ranked(user: UserId, mut ranked: Vec<(SongId, f64)>, n: usize) -> Self {
        ranked.truncate(n);
        TopNList { user, items: ranked, n }
    }

    pub fn songs(&self) -> Vec<SongId> {
        self.items.iter().map(|&(s, _)| s).collect()
    }
}

/// `user \t rank \t song \t score`, ranks from 1, scores with 6 decimals.
pub fn write_top_n_tsv<W: Write>(lists: &[TopNList], train: &RatingMatrix, mut out: W) -> Result<()> {
    let vocab = train.vocab();
    writeln!(out, "user\trank\tsong\tscore")?;
    for list in lists {
        for (rank, &(song, score)) in list.items.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{score:.6}",
                vocab.user_name(list.user),
                rank + 1,
                vocab.song_name(song)
            )?;
        }
    }
    Ok(())
}

pub fn top_n(
    scorer: &dyn Scorer,
    train: &RatingMatrix,
    catalog: &[SongId],
    user: UserId,
    n: usize,
) -> Result<TopNList> {
    Ok(TopNList::from_ranked(
        user,
        rank_candidates(scorer, train, catalog, user)?,
        n,
    ))
}
