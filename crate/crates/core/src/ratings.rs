//! Implicit ratings from play frequencies, with optional exponential decay of
//! older plays.
//!
//! Each play weighs `exp(-lambda * (t_max - t) / time_unit)`, so the newest
//! play in the log weighs exactly 1. A user's per-song share of the total
//! weight is the decay-play frequency; ratings then follow the frequency
//! percentile rule: with the user's songs sorted by frequency, the song at
//! rank `k` receives `4 * (1 - sum of the frequencies ranked above it)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::playlog::{PlayLog, SongId, UserId, Vocab};

/// Julian year in seconds.
pub const SECONDS_PER_YEAR: f64 = 31_557_600.0;

/// Upper end of the implicit rating scale; ratings live in (0, MAX_RATING].
pub const MAX_RATING: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub lambda: f64,
    /// Length of the time unit elapsed time is measured in, in seconds.
    pub time_unit_secs: f64,
    /// Reference instant; `None` means the latest play of the log being rated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<DateTime<Utc>>,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            lambda: 0.4,
            time_unit_secs: SECONDS_PER_YEAR,
            t_max: None,
        }
    }
}

impl DecayConfig {
    pub fn no_decay() -> Self {
        DecayConfig {
            lambda: 0.0,
            ..Default::default()
        }
    }

    pub fn with_lambda(lambda: f64) -> Self {
        DecayConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.time_unit_secs > 0.0 && self.time_unit_secs.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time unit must be positive, got {}",
                self.time_unit_secs
            )));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingVariant {
    Plain,
    Decay,
}

impl RatingVariant {
    pub fn label(self) -> &'static str {
        match self {
            RatingVariant::Plain => "plain",
            RatingVariant::Decay => "decay",
        }
    }
}

impl std::fmt::Display for RatingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for RatingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "ratings" => Ok(RatingVariant::Plain),
            "decay" | "decay-ratings" => Ok(RatingVariant::Decay),
            other => Err(Error::InvalidConfig(format!("unknown rating variant `{other}`"))),
        }
    }
}

/// Weight of a single play at `instant` relative to `t_max`.
pub fn decay_play(instant: DateTime<Utc>, t_max: DateTime<Utc>, cfg: &DecayConfig) -> Result<f64> {
    if instant > t_max {
        return Err(Error::InvalidTimestamp {
            instant: instant.to_rfc3339(),
            t_max: t_max.to_rfc3339(),
        });
    }
    let elapsed = (t_max - instant).num_milliseconds() as f64 / 1000.0;
    Ok((-cfg.lambda * elapsed / cfg.time_unit_secs).exp())
}

#[derive(Clone, Debug)]
pub struct DecayRow {
    /// Summed decay weight per song, ascending song id.
    pub numerators: Vec<(SongId, f64)>,
    pub denominator: f64,
}

impl DecayRow {
    pub fn frequencies(&self) -> impl Iterator<Item = (SongId, f64)> + '_ {
        self.numerators.iter().map(move |&(s, n)| (s, n / self.denominator))
    }
}

/// Per-user decay-play frequencies.
#[derive(Clone, Debug)]
pub struct DecayPlayMatrix {
    vocab: Arc<Vocab>,
    lambda: f64,
    rows: BTreeMap<UserId, DecayRow>,
}

impl DecayPlayMatrix {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rows(&self) -> &BTreeMap<UserId, DecayRow> {
        &self.rows
    }

    pub fn frequency(&self, user: UserId, song: SongId) -> Option<f64> {
        let row = self.rows.get(&user)?;
        let pos = row.numerators.binary_search_by_key(&song, |&(s, _)| s).ok()?;
        Some(row.numerators[pos].1 / row.denominator)
    }
}

/// Sums decayed plays per (user, song) in song-then-instant order and
/// normalises each user's row.
pub fn decay_frequencies(log: &PlayLog, cfg: &DecayConfig) -> Result<DecayPlayMatrix> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(Error::EmptyLog(None));
    }
    let t_max = cfg.t_max.unwrap_or_else(|| log.t_max());
    let mut rows: BTreeMap<UserId, DecayRow> = BTreeMap::new();
    for ((user, song), instants) in log.plays_by_pair() {
        let mut numerator = 0.0;
        for t in instants {
            numerator += decay_play(t, t_max, cfg)?;
        }
        let row = rows.entry(user).or_insert_with(|| DecayRow {
            numerators: Vec::new(),
            denominator: 0.0,
        });
        row.numerators.push((song, numerator));
        row.denominator += numerator;
    }
    if let Some((user, _)) = rows
        .iter()
        .find(|(_, r)| r.denominator.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::DegenerateData(format!(
            "all plays of user `{}` decayed to zero weight",
            log.vocab().user_name(*user)
        )));
    }
    Ok(DecayPlayMatrix {
        vocab: log.vocab().clone(),
        lambda: cfg.lambda,
        rows,
    })
}

/// Sparse user x song implicit ratings. Absent pairs are unrated, not zero.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingMatrix {
    vocab: Arc<Vocab>,
    variant: RatingVariant,
    rows: BTreeMap<UserId, Vec<(SongId, f64)>>,
}

impl RatingMatrix {
    pub fn from_rows(vocab: Arc<Vocab>, variant: RatingVariant, rows: BTreeMap<UserId, Vec<(SongId, f64)>>) -> Self {
        let rows = rows
            .into_iter()
            .filter(|(_, r)| !r.is_empty())
            .map(|(u, mut r)| {
                r.sort_by_key(|&(s, _)| s);
                (u, r)
            })
            .collect();
        RatingMatrix { vocab, variant, rows }
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn variant(&self) -> RatingVariant {
        self.variant
    }

    pub fn rows(&self) -> &BTreeMap<UserId, Vec<(SongId, f64)>> {
        &self.rows
    }

    /// The user's ratings in ascending song order; empty for unrated users.
    pub fn row(&self, user: UserId) -> &[(SongId, f64)] {
        self.rows.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_user(&self, user: UserId) -> bool {
        self.rows.contains_key(&user)
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.rows.keys().copied()
    }

    /// Distinct rated songs, ascending.
    pub fn songs(&self) -> Vec<SongId> {
        let mut seen = vec![false; self.vocab.num_songs()];
        for row in self.rows.values() {
            for &(s, _) in row {
                seen[s.index()] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &x)| x)
            .map(|(i, _)| SongId(i as u32))
            .collect()
    }

    pub fn get(&self, user: UserId, song: SongId) -> Option<f64> {
        let row = self.rows.get(&user)?;
        let pos = row.binary_search_by_key(&song, |&(s, _)| s).ok()?;
        Some(row[pos].1)
    }

    /// Number of stored ratings.
    pub fn len(&self) -> usize {
        self.rows.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn user_mean(&self, user: UserId) -> Option<f64> {
        let row = self.rows.get(&user)?;
        Some(row.iter().map(|&(_, r)| r).sum::<f64>() / row.len() as f64)
    }

    pub fn entries(&self) -> impl Iterator<Item = (UserId, SongId, f64)> + '_ {
        self.rows
            .iter()
            .flat_map(|(&u, row)| row.iter().map(move |&(s, r)| (u, s, r)))
    }

    /// Drops every pair that `other` also rates.
    pub fn without_pairs_in(&self, other: &RatingMatrix) -> RatingMatrix {
        let rows = self
            .rows
            .iter()
            .map(|(&u, row)| {
                let kept = row
                    .iter()
                    .copied()
                    .filter(|&(s, _)| other.get(u, s).is_none())
                    .collect::<Vec<_>>();
                (u, kept)
            })
            .collect();
        RatingMatrix::from_rows(self.vocab.clone(), self.variant, rows)
    }

    pub fn retain_users(&self, mut keep: impl FnMut(UserId) -> bool) -> RatingMatrix {
        let rows = self
            .rows
            .iter()
            .filter(|(&u, _)| keep(u))
            .map(|(&u, r)| (u, r.clone()))
            .collect();
        RatingMatrix {
            vocab: self.vocab.clone(),
            variant: self.variant,
            rows,
        }
    }

    /// TSV export: user, song, rating; by user then rating descending.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (&u, row) in &self.rows {
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for (s, r) in sorted {
                writeln!(
                    out,
                    "{}\t{}\t{:.6}",
                    self.vocab.user_name(u),
                    self.vocab.song_name(s),
                    r
                )?;
            }
        }
        Ok(())
    }
}

/// Frequency percentile rule. Songs with equal frequency share the smallest
/// rank among them and therefore the same rating.
pub fn ratings_from_frequencies(freqs: &DecayPlayMatrix) -> RatingMatrix {
    let variant = if freqs.lambda == 0.0 {
        RatingVariant::Plain
    } else {
        RatingVariant::Decay
    };
    let rows = freqs
        .rows
        .iter()
        .map(|(&user, row)| (user, percentile_ratings(row)))
        .collect();
    RatingMatrix::from_rows(freqs.vocab.clone(), variant, rows)
}

fn percentile_ratings(row: &DecayRow) -> Vec<(SongId, f64)> {
    let mut ranked: Vec<(SongId, f64)> = row.frequencies().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    // Mass sitting at or below each position; used when 1 - prefix underflows.
    let mut tail = vec![0.0; ranked.len() + 1];
    for i in (0..ranked.len()).rev() {
        tail[i] = tail[i + 1] + ranked[i].1;
    }

    let mut out = Vec::with_capacity(ranked.len());
    let mut prefix = 0.0;
    let mut group_start = 0;
    let mut group_rating = MAX_RATING;
    for (i, &(song, freq)) in ranked.iter().enumerate() {
        if i == 0 || freq != ranked[group_start].1 {
            group_start = i;
            let remaining = 1.0 - prefix;
            group_rating = MAX_RATING * if remaining > 0.0 { remaining } else { tail[i] };
        }
        out.push((song, group_rating));
        prefix += freq;
    }
    out
}

pub fn decay_ratings(log: &PlayLog, cfg: &DecayConfig) -> Result<RatingMatrix> {
    Ok(ratings_from_frequencies(&decay_frequencies(log, cfg)?))
}

/// Ratings from undecayed play counts; the same code path with lambda = 0.
pub fn plain_ratings(log: &PlayLog) -> Result<RatingMatrix> {
    Ok(ratings_from_frequencies(&decay_frequencies(
        log,
        &DecayConfig::no_decay(),
    )?))
}

/// Ratings of the requested variant. The decay variant keeps its tag even
/// when `cfg.lambda` is 0.
pub fn compute_ratings(log: &PlayLog, variant: RatingVariant, cfg: &DecayConfig) -> Result<RatingMatrix> {
    let mut m = match variant {
        RatingVariant::Plain => plain_ratings(log)?,
        RatingVariant::Decay => decay_ratings(log, cfg)?,
    };
    m.variant = variant;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserProfile {
    pub user: UserId,
    pub mean_rating: f64,
    pub total_plays: usize,
    /// Linear mean of the local time of day of all plays, in hours.
    pub dtavg: f64,
}

/// Profiles for every user that has both plays in `log` and a ratings row.
pub fn user_profiles(log: &PlayLog, ratings: &RatingMatrix) -> BTreeMap<UserId, UserProfile> {
    let mut hour_sums: BTreeMap<UserId, (f64, usize)> = BTreeMap::new();
    for e in log.events() {
        let acc = hour_sums.entry(e.user).or_insert((0.0, 0));
        acc.0 += log.fractional_hour(e.instant);
        acc.1 += 1;
    }
    hour_sums
        .into_iter()
        .filter_map(|(user, (hours, plays))| {
            let mean_rating = ratings.user_mean(user)?;
            Some((
                user,
                UserProfile {
                    user,
                    mean_rating,
                    total_plays: plays,
                    dtavg: hours / plays as f64,
                },
            ))
        })
        .collect()
}
