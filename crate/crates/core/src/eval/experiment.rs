//! One experiment cell: context filter, ratings on both sides of the split,
//! model fit, and metric aggregation over test users.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics;
use super::report::{EvalReport, Skipped};
use crate::error::{Error, Result};
use crate::latent::{train_bpr, train_mf, train_wrmf, TrainConfig};
use crate::neighbors::{NeighborConfig, SimilarityKind, UserKnn};
use crate::playlog::{filter_context, ContextSegment, PlayLog, SongId, UserId};
use crate::ratings::{
    compute_ratings, user_profiles, DecayConfig, RatingMatrix, RatingVariant, UserProfile, MAX_RATING,
};
use crate::scoring::{rank_candidates, Scorer};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KnnPearson,
    KnnCosine,
    UserTimeKnn,
    Mf,
    Bmf,
    Wrmf,
    Bpr,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::KnnPearson,
        Method::KnnCosine,
        Method::UserTimeKnn,
        Method::Mf,
        Method::Bmf,
        Method::Wrmf,
        Method::Bpr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::KnnPearson => "knn-pearson",
            Method::KnnCosine => "knn-cosine",
            Method::UserTimeKnn => "user-time-knn",
            Method::Mf => "mf",
            Method::Bmf => "bmf",
            Method::Wrmf => "wrmf",
            Method::Bpr => "bpr",
        }
    }

    /// Scores live on the rating scale, so MAE and RMSE are meaningful.
    pub fn predicts_ratings(self) -> bool {
        !matches!(self, Method::Wrmf | Method::Bpr)
    }

    /// Part of the top-N comparison.
    pub fn ranks_items(self) -> bool {
        matches!(
            self,
            Method::KnnCosine | Method::UserTimeKnn | Method::Wrmf | Method::Bpr
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.label() == key)
            .or(match key.as_str() {
                "pearson" => Some(Method::KnnPearson),
                "cosine" | "knn" => Some(Method::KnnCosine),
                "bprmf" => Some(Method::Bpr),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub decay: DecayConfig,
    pub neighbors: NeighborConfig,
    pub train: TrainConfig,
    /// Length of top-N lists and of the relevant set per user.
    pub top_n: usize,
    /// Average time of day computed over train and test plays instead of train only.
    pub dtavg_all_plays: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            decay: DecayConfig::default(),
            neighbors: NeighborConfig::default(),
            train: TrainConfig::default(),
            top_n: 100,
            dtavg_all_plays: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.decay.validate()?;
        self.train.validate()?;
        if self.neighbors.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.top_n == 0 {
            return Err(Error::InvalidConfig("top-N length must be at least 1".into()));
        }
        Ok(())
    }
}

/// Test ratings with train pairs removed, plus each user's relevant set.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub ratings: RatingMatrix,
    pub relevant: BTreeMap<UserId, HashSet<SongId>>,
}

impl GroundTruth {
    /// Relevant items are the user's `n` highest test ratings (song id breaks ties).
    pub fn new(ratings: RatingMatrix, n: usize) -> Self {
        let relevant = ratings
            .rows()
            .iter()
            .map(|(&u, row)| {
                let mut sorted = row.clone();
                sorted.sort_by(crate::scoring::ranking_order);
                (u, sorted.into_iter().take(n).map(|(s, _)| s).collect())
            })
            .collect();
        GroundTruth { ratings, relevant }
    }
}

/// Everything a method needs for one (context, variant) cell.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub context: ContextSegment,
    pub variant: RatingVariant,
    pub lambda: f64,
    pub train: RatingMatrix,
    pub truth: GroundTruth,
    pub profiles: BTreeMap<UserId, UserProfile>,
    pub catalog: Vec<SongId>,
}

pub fn prepare(
    train: &PlayLog,
    test: &PlayLog,
    context: ContextSegment,
    variant: RatingVariant,
    cfg: &ExperimentConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    let train_log = filter_context(train, context)?;
    let test_log = filter_context(test, context)?;
    let train_ratings = compute_ratings(&train_log, variant, &cfg.decay)?;
    let test_ratings = compute_ratings(&test_log, variant, &cfg.decay)?.without_pairs_in(&train_ratings);
    if test_ratings.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "{context}/{variant}: every test pair also occurs in train"
        )));
    }
    let profiles = if cfg.dtavg_all_plays {
        user_profiles(&train_log.merged(&test_log)?, &train_ratings)
    } else {
        user_profiles(&train_log, &train_ratings)
    };
    let lambda = match variant {
        RatingVariant::Plain => 0.0,
        RatingVariant::Decay => cfg.decay.lambda,
    };
    Ok(Prepared {
        context,
        variant,
        lambda,
        catalog: train_ratings.songs(),
        train: train_ratings,
        truth: GroundTruth::new(test_ratings, cfg.top_n),
        profiles,
    })
}

pub fn fit_method(method: Method, prepared: &Prepared, cfg: &ExperimentConfig) -> Result<Box<dyn Scorer>> {
    let knn = |kind| -> Result<Box<dyn Scorer>> {
        Ok(Box::new(UserKnn::fit(
            &prepared.train,
            Some(&prepared.profiles),
            kind,
            &cfg.neighbors,
        )?))
    };
    match method {
        Method::KnnPearson => knn(SimilarityKind::Pearson),
        Method::KnnCosine => knn(SimilarityKind::Cosine),
        Method::UserTimeKnn => knn(SimilarityKind::UserTimeCosine),
        Method::Mf => Ok(Box::new(train_mf(&prepared.train, &cfg.train, false)?)),
        Method::Bmf => Ok(Box::new(train_mf(&prepared.train, &cfg.train, true)?)),
        Method::Wrmf => Ok(Box::new(train_wrmf(&prepared.train, &cfg.train)?)),
        Method::Bpr => Ok(Box::new(train_bpr(&prepared.train, &cfg.train)?)),
    }
}

#[derive(Default)]
struct UserRanking {
    prec: [Option<f64>; 3],
    ap: Option<f64>,
    ndcg: Option<f64>,
    auc: Option<f64>,
}

fn rank_user(scorer: &dyn Scorer, prepared: &Prepared, user: UserId, n: usize) -> Result<UserRanking> {
    let ranked = rank_candidates(scorer, &prepared.train, &prepared.catalog, user)?;
    let list: Vec<SongId> = ranked.iter().take(n).map(|&(s, _)| s).collect();
    let relevant = &prepared.truth.relevant[&user];
    let gains: HashMap<SongId, f64> = prepared.truth.ratings.row(user).iter().copied().collect();
    Ok(UserRanking {
        prec: [5, 10, 15].map(|k| Some(metrics::precision_at_k(&list, relevant, k))),
        ap: metrics::average_precision(&list, relevant),
        ndcg: metrics::ndcg(&list, &gains, n),
        auc: metrics::auc(&ranked, relevant),
    })
}

/// Fits `method` and scores it against the prepared ground truth.
pub fn evaluate(method: Method, prepared: &Prepared, cfg: &ExperimentConfig) -> Result<EvalReport> {
    let scorer = fit_method(method, prepared, cfg)?;
    evaluate_scorer(scorer.as_ref(), method, prepared, cfg)
}

/// Scores an already fitted model; `method` selects the metric families and
/// labels the report. Test users without a train row, or with nothing left to
/// rank, are listed as skipped.
pub fn evaluate_scorer(
    scorer: &dyn Scorer,
    method: Method,
    prepared: &Prepared,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    let vocab = prepared.train.vocab();
    let mut report = EvalReport::new(method, prepared.context, prepared.variant, prepared.lambda, cfg);
    let mut evaluated = Vec::new();
    for u in prepared.truth.ratings.users() {
        if prepared.train.has_user(u) {
            evaluated.push(u);
        } else {
            report
                .skipped
                .push(Skipped::new("all", vocab.user_name(u), "no train ratings"));
        }
    }
    if evaluated.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "{}/{}: no test user has train ratings",
            prepared.context, prepared.variant
        )));
    }

    if method.predicts_ratings() {
        let mut pairs = Vec::new();
        for &u in &evaluated {
            for &(s, actual) in prepared.truth.ratings.row(u) {
                let p = scorer.predict(u, s)?;
                if !p.value.is_finite() {
                    return Err(Error::DegenerateData(format!(
                        "non-finite prediction for `{}`/`{}`",
                        vocab.user_name(u),
                        vocab.song_name(s)
                    )));
                }
                report.fallback_count += p.fallback as usize;
                pairs.push((p.value, actual));
            }
        }
        let mae = metrics::mae(&pairs)?;
        report.mae = Some(mae);
        report.rmse = Some(metrics::rmse(&pairs)?);
        report.nmae = Some(metrics::nmae(mae, MAX_RATING, 0.0)?);
        report.predictions = pairs.len();
    }

    if method.ranks_items() {
        let n = cfg.top_n;
        let per_user: Vec<(UserId, Result<UserRanking>)> = evaluated
            .par_iter()
            .map(|&u| (u, rank_user(scorer, prepared, u, n)))
            .collect();
        let mut cols: [Vec<f64>; 6] = Default::default();
        for (u, outcome) in per_user {
            let r = match outcome {
                Ok(r) => r,
                Err(Error::EmptyCandidates(_)) => {
                    report
                        .skipped
                        .push(Skipped::new("ranking", vocab.user_name(u), "no candidates"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let values = [r.prec[0], r.prec[1], r.prec[2], r.ap, r.ndcg, r.auc];
            for (i, v) in values.into_iter().enumerate() {
                match v {
                    Some(v) => cols[i].push(v),
                    None if i == 5 => report.skipped.push(Skipped::new(
                        "auc",
                        vocab.user_name(u),
                        "candidates are all relevant or all irrelevant",
                    )),
                    None => report.skipped.push(Skipped::new(
                        ["prec5", "prec10", "prec15", "map", "ndcg"][i],
                        vocab.user_name(u),
                        "undefined",
                    )),
                }
            }
        }
        report.prec5 = metrics::mean(&cols[0]);
        report.prec10 = metrics::mean(&cols[1]);
        report.prec15 = metrics::mean(&cols[2]);
        report.map = metrics::mean(&cols[3]);
        report.ndcg = metrics::mean(&cols[4]);
        report.auc = metrics::mean(&cols[5]);
    }
    report.evaluated_users = evaluated.len();
    Ok(report)
}

pub fn run_experiment(
    train: &PlayLog,
    test: &PlayLog,
    context: ContextSegment,
    variant: RatingVariant,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    evaluate(method, &prepare(train, test, context, variant, cfg)?, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub contexts: Vec<ContextSegment>,
    pub variants: Vec<RatingVariant>,
    pub methods: Vec<Method>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            contexts: ContextSegment::ALL.to_vec(),
            variants: vec![RatingVariant::Plain, RatingVariant::Decay],
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug)]
pub struct GridCell {
    pub method: Method,
    pub context: ContextSegment,
    pub variant: RatingVariant,
    pub outcome: Result<EvalReport>,
}

/// Every (context, variant, method) cell, in that nesting order. A failing
/// cell does not stop the others.
pub fn run_grid(train: &PlayLog, test: &PlayLog, spec: &GridSpec, cfg: &ExperimentConfig) -> Vec<GridCell> {
    let mut slots = Vec::new();
    for &context in &spec.contexts {
        for &variant in &spec.variants {
            slots.push((context, variant));
        }
    }
    slots
        .par_iter()
        .flat_map_iter(|&(context, variant)| {
            let prepared = prepare(train, test, context, variant, cfg);
            let cells: Vec<GridCell> = spec
                .methods
                .par_iter()
                .map(|&method| GridCell {
                    method,
                    context,
                    variant,
                    outcome: match &prepared {
                        Ok(p) => evaluate(method, p, cfg),
                        Err(e) => Err(clone_error(e)),
                    },
                })
                .collect();
            cells
        })
        .collect()
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::EmptyLog(c) => Error::EmptyLog(c.clone()),
        Error::DegenerateSplit(m) => Error::DegenerateSplit(m.clone()),
        Error::EmptyEvaluation(m) => Error::EmptyEvaluation(m.clone()),
        Error::InvalidConfig(m) => Error::InvalidConfig(m.clone()),
        other => Error::DegenerateData(other.to_string()),
    }
}

/// Users present on both sides of the split, newest first play first.
pub fn newest_users(train: &PlayLog, test: &PlayLog) -> Vec<UserId> {
    let in_test: HashSet<UserId> = test.users().iter().copied().collect();
    let mut firsts: Vec<_> = train
        .first_plays()
        .into_iter()
        .filter(|(u, _)| in_test.contains(u))
        .collect();
    firsts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    firsts.into_iter().map(|(u, _)| u).collect()
}

/// Day-long experiment restricted, on the test side, to the `m` users with
/// the most recent first play among users with both train and test plays.
pub fn cold_start_experiment(
    train: &PlayLog,
    test: &PlayLog,
    m: usize,
    methods: &[Method],
    variants: &[RatingVariant],
    cfg: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    let eligible = newest_users(train, test);
    if m == 0 || m > eligible.len() {
        return Err(Error::DegenerateData(format!(
            "cold-start group of {m} requested but {} users have plays on both sides",
            eligible.len()
        )));
    }
    let chosen: HashSet<UserId> = eligible.into_iter().take(m).collect();
    let test = test.restrict_users(&chosen)?;
    let mut reports = Vec::new();
    for &variant in variants {
        let prepared = prepare(train, &test, ContextSegment::Day24h, variant, cfg)?;
        for &method in methods {
            reports.push(evaluate(method, &prepared, cfg)?);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Duration, FixedOffset, TimeZone, Utc};

    fn t(day: i64, hour: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2008, 1, 1, 0, 0, 0).unwrap() + Duration::days(day) + Duration::hours(hour)
    }

    /// Four users over six songs; test plays start on day 100.
    fn toy() -> (PlayLog, PlayLog) {
        let mut records = Vec::new();
        let train_plays: [(&str, &[&str]); 4] = [
            ("a", &["s1", "s1", "s2", "s3"]),
            ("b", &["s1", "s2", "s2", "s4"]),
            ("c", &["s3", "s4", "s4", "s5"]),
            ("d", &["s5", "s5", "s6", "s1"]),
        ];
        for (u, songs) in train_plays {
            for (i, s) in songs.iter().enumerate() {
                records.push((u, *s, t(i as i64 * 7, 8 + i as i64)));
            }
        }
        for (u, s) in [
            ("a", "s4"),
            ("a", "s5"),
            ("b", "s3"),
            ("c", "s1"),
            ("d", "s2"),
            ("d", "s1"),
        ] {
            records.push((u, s, t(100, 9)));
        }
        records.push(("e", "s2", t(101, 10)));
        let log = PlayLog::from_records(records, FixedOffset::east_opt(0).unwrap()).unwrap();
        let split = crate::playlog::split_temporal(&log, t(100, 0)).unwrap();
        (split.train, split.test)
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert_eq!("bprmf".parse::<Method>().unwrap(), Method::Bpr);
        assert!("svd".parse::<Method>().is_err());
    }

    #[test]
    fn relevant_sets_are_top_n_test_ratings() {
        let (train, test) = toy();
        let cfg = ExperimentConfig {
            top_n: 1,
            ..Default::default()
        };
        let p = prepare(&train, &test, ContextSegment::Day24h, RatingVariant::Plain, &cfg).unwrap();
        for (u, rel) in &p.truth.relevant {
            assert_eq!(rel.len(), 1);
            let best = p.truth.ratings.row(*u).iter().map(|x| x.1).fold(f64::MIN, f64::max);
            let s = *rel.iter().next().unwrap();
            assert_eq!(p.truth.ratings.get(*u, s), Some(best));
        }
        // d's repeated test song s1 is a train pair and is gone.
        let d = train.vocab().find_user("d").unwrap();
        let s1 = train.vocab().find_song("s1").unwrap();
        assert_eq!(p.truth.ratings.get(d, s1), None);
    }

    #[test]
    fn every_method_reports_its_metrics() {
        let (train, test) = toy();
        let cfg = ExperimentConfig::default();
        for m in Method::ALL {
            let r = run_experiment(&train, &test, ContextSegment::Day24h, RatingVariant::Decay, m, &cfg).unwrap();
            assert_eq!(r.mae.is_some(), m.predicts_ratings(), "{m}");
            assert_eq!(r.ndcg.is_some(), m.ranks_items(), "{m}");
            // e has no train plays
            assert!(r.skipped.iter().any(|s| s.user == "e" && s.metric == "all"));
            if let Some(rmse) = r.rmse {
                assert!(rmse >= r.mae.unwrap());
            }
        }
    }

    #[test]
    fn grid_keeps_going_after_a_failed_cell() {
        let (train, test) = toy();
        let spec = GridSpec {
            contexts: vec![ContextSegment::Evening, ContextSegment::Day24h],
            variants: vec![RatingVariant::Plain],
            methods: vec![Method::KnnCosine, Method::Mf],
        };
        let cells = run_grid(&train, &test, &spec, &ExperimentConfig::default());
        assert_eq!(cells.len(), 4);
        // No evening plays at all in the toy log.
        assert!(cells[0].outcome.is_err() && cells[1].outcome.is_err());
        assert!(cells[2].outcome.is_ok() && cells[3].outcome.is_ok());
        assert_eq!(cells[3].method, Method::Mf);
    }

    #[test]
    fn cold_start_picks_newest_users() {
        let (train, test) = toy();
        let newest = newest_users(&train, &test);
        assert_eq!(newest.len(), 4);
        let cfg = ExperimentConfig::default();
        let reports =
            cold_start_experiment(&train, &test, 2, &[Method::KnnPearson], &[RatingVariant::Plain], &cfg).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(cold_start_experiment(&train, &test, 9, &[Method::Mf], &[RatingVariant::Plain], &cfg).is_err());
    }
}
