mod common;

use chrono::Timelike;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use playdecay::neighbors::{NeighborConfig, SimilarityKind, UserKnn};
use playdecay::playlog::{PlayLog, SongId, UserId};
use playdecay::ratings::{plain_ratings, user_profiles, RatingMatrix};
use playdecay::scoring::Scorer;

/// Dense copy of the ratings: `grid[u][s]`, indexed like the vocabulary.
fn dense(ratings: &RatingMatrix, log: &PlayLog) -> (Vec<UserId>, Vec<SongId>, Vec<Vec<Option<f64>>>) {
    let users: Vec<UserId> = ratings.users().collect();
    let songs: Vec<SongId> = log.songs().to_vec();
    let grid = users
        .iter()
        .map(|&u| songs.iter().map(|&s| ratings.get(u, s)).collect())
        .collect();
    (users, songs, grid)
}

/// Rounding can push a cosine or correlation past 1; both sides clamp, which
/// also makes such neighbours tie and fall back to ascending index.
fn naive_similarity(kind: SimilarityKind, grid: &[Vec<Option<f64>>], times: &[f64], a: usize, b: usize) -> Option<f64> {
    let mean = |u: usize| {
        let vals: Vec<f64> = grid[u].iter().flatten().copied().collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let both: Vec<(f64, f64)> = grid[a]
        .iter()
        .zip(&grid[b])
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    match kind {
        SimilarityKind::Pearson => {
            if both.len() < 2 {
                return None;
            }
            let (ma, mb) = (mean(a), mean(b));
            let num: f64 = both.iter().map(|(x, y)| (x - ma) * (y - mb)).sum();
            let da: f64 = both.iter().map(|(x, _)| (x - ma).powi(2)).sum();
            let db: f64 = both.iter().map(|(_, y)| (y - mb).powi(2)).sum();
            if da == 0.0 || db == 0.0 {
                None
            } else {
                Some((num / (da.sqrt() * db.sqrt())).clamp(-1.0, 1.0))
            }
        }
        SimilarityKind::Cosine | SimilarityKind::UserTimeCosine => {
            let time = kind == SimilarityKind::UserTimeCosine;
            if !time && both.is_empty() {
                return None;
            }
            let vec = |u: usize| -> Vec<f64> {
                let mut v: Vec<f64> = if time { vec![times[u]] } else { vec![] };
                v.extend(grid[u].iter().map(|x| x.unwrap_or(0.0)));
                v
            };
            let (x, y) = (vec(a), vec(b));
            let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
            let ny = y.iter().map(|q| q * q).sum::<f64>().sqrt();
            Some((dot / (nx * ny)).min(1.0))
        }
    }
}

fn naive_times(log: &PlayLog, users: &[UserId]) -> Vec<f64> {
    let raw: Vec<f64> = users
        .iter()
        .map(|&u| {
            let hours: Vec<f64> = log
                .events()
                .iter()
                .filter(|e| e.user == u)
                .map(|e| {
                    e.instant.hour() as f64 + e.instant.minute() as f64 / 60.0 + e.instant.second() as f64 / 3600.0
                })
                .collect();
            hours.iter().sum::<f64>() / hours.len() as f64
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|t| if hi > lo { (t - lo) / (hi - lo) * 4.0 } else { 4.0 })
        .collect()
}

fn naive_prediction(
    kind: SimilarityKind,
    grid: &[Vec<Option<f64>>],
    times: &[f64],
    k: usize,
    a: usize,
    s: usize,
) -> f64 {
    let mean = |u: usize| {
        let vals: Vec<f64> = grid[u].iter().flatten().copied().collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };
    let mut sims: Vec<(usize, f64)> = (0..grid.len())
        .filter(|&b| b != a)
        .filter_map(|b| naive_similarity(kind, grid, times, a, b).map(|x| (b, x)))
        .collect();
    sims.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    sims.truncate(k);
    let (mut num, mut den) = (0.0, 0.0);
    for (b, sim) in sims {
        if let Some(r) = grid[b][s] {
            num += sim * (r - mean(b));
            den += sim.abs();
        }
    }
    if den == 0.0 {
        mean(a)
    } else {
        mean(a) + num / den
    }
}

#[test]
fn neighbour_predictions_match_naive_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for _ in 0..40 {
        let log = common::random_log(&mut rng, 10, 20, 150);
        let ratings = plain_ratings(&log).unwrap();
        let profiles = user_profiles(&log, &ratings);
        let (users, songs, grid) = dense(&ratings, &log);
        let times = naive_times(&log, &users);
        let k = [1, 3, 15][rng.gen_range(0..3)];
        let cfg = NeighborConfig {
            k,
            ..Default::default()
        };
        for kind in [
            SimilarityKind::Pearson,
            SimilarityKind::Cosine,
            SimilarityKind::UserTimeCosine,
        ] {
            let model = UserKnn::fit(&ratings, Some(&profiles), kind, &cfg).unwrap();
            for (a, &u) in users.iter().enumerate() {
                let bulk = model.score_all(u, &songs).unwrap();
                for (s, &song) in songs.iter().enumerate() {
                    let want = naive_prediction(kind, &grid, &times, k, a, s);
                    let got = model.predict(u, song).unwrap().value;
                    assert!((got - want).abs() <= 1e-9, "{kind:?} k={k}: {got} vs {want}");
                    assert!((bulk[s] - want).abs() <= 1e-9);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn neutral_neighbours_anchor_prediction_at_the_user_mean() {
    // Users that play each of their songs equally often rate all of them 4,
    // so every neighbour deviation from its own mean is zero.
    let t = common::origin();
    let mut records = Vec::new();
    for (u, songs) in [("a", &["x", "y"][..]), ("b", &["x", "y", "z"]), ("c", &["y", "z"])] {
        for (i, s) in songs.iter().enumerate() {
            records.push((u, *s, t + chrono::Duration::hours(i as i64)));
        }
    }
    let log = PlayLog::from_records(records, chrono::FixedOffset::east_opt(0).unwrap()).unwrap();
    let ratings = plain_ratings(&log).unwrap();
    let a = log.vocab().find_user("a").unwrap();
    let z = log.vocab().find_song("z").unwrap();
    for kind in [SimilarityKind::Cosine, SimilarityKind::UserTimeCosine] {
        let model = UserKnn::fit(
            &ratings,
            Some(&user_profiles(&log, &ratings)),
            kind,
            &NeighborConfig::default(),
        )
        .unwrap();
        let p = model.predict(a, z).unwrap();
        assert!(!p.fallback);
        assert_eq!(p.value, ratings.user_mean(a).unwrap());
    }
}
