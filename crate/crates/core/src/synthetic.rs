//! Seeded listening logs with a planted taste drift, for end-to-end checks.
//!
//! Every user starts in a home genre and drifts to a target genre during the
//! last months of the training window. The target genre gains trending songs
//! at the same time, and those keep dominating the test window, so recent
//! training plays are the better guide to what comes next. The newest users
//! join shortly before the boundary.

use chrono::{DateTime, Duration, FixedOffset, Months, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::playlog::{split_temporal, PlayLog, TemporalSplit};

#[derive(Clone, Debug, PartialEq)]
pub struct DriftConfig {
    pub users: usize,
    pub genres: usize,
    pub songs_per_genre: usize,
    /// Songs per genre that only appear from `trend_month` on.
    pub trending_per_genre: usize,
    pub train_months: u32,
    pub test_months: u32,
    /// Month (0-based) in which trending songs appear.
    pub trend_month: u32,
    /// Drift start varies uniformly in `drift_window` (0-based months).
    pub drift_window: (u32, u32),
    /// Users joining late; they start in the target genre.
    pub newcomers: usize,
    /// Months before the boundary in which newcomers join.
    pub newcomer_lead: u32,
    pub plays_per_month: (usize, usize),
    /// Probability that a post-drift play goes to a trending song.
    pub trend_share: f64,
    /// Probability that a play ignores taste and picks a uniform song.
    pub noise: f64,
    /// Zipf exponent of within-genre popularity.
    pub zipf: f64,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            users: 30,
            genres: 4,
            songs_per_genre: 30,
            trending_per_genre: 8,
            train_months: 15,
            test_months: 2,
            trend_month: 12,
            drift_window: (10, 13),
            newcomers: 5,
            newcomer_lead: 2,
            plays_per_month: (30, 90),
            trend_share: 0.3,
            noise: 0.0,
            zipf: 1.2,
            seed: 0,
        }
    }
}

impl DriftConfig {
    pub fn with_seed(seed: u64) -> Self {
        DriftConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn start(&self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2008, 1, 1, 0, 0, 0).unwrap()
    }

    pub fn boundary(&self) -> DateTime<Utc> {
        self.month_start(self.train_months)
    }

    fn month_start(&self, month: u32) -> DateTime<Utc> {
        self.start() + Months::new(month)
    }
}

struct Taste {
    home: usize,
    target: usize,
    join: u32,
    drift: u32,
    rate: usize,
    /// Preferred hour of day.
    hour: f64,
}

fn song_name(genre: usize, idx: usize, trending: bool) -> String {
    if trending {
        format!("g{genre}-t{idx:02}")
    } else {
        format!("g{genre}-s{idx:02}")
    }
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

/// Plays of the full window, train and test months together.
pub fn drift_log(cfg: &DriftConfig) -> Result<PlayLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let months = cfg.train_months + cfg.test_months;
    let settled = cfg.users - cfg.newcomers.min(cfg.users);
    let tastes: Vec<Taste> = (0..cfg.users)
        .map(|u| {
            let home = u % cfg.genres;
            let target = (home + 1 + (u / cfg.genres) % (cfg.genres - 1)) % cfg.genres;
            let newcomer = u >= settled;
            let join = if newcomer {
                cfg.train_months - 1 - rng.gen_range(0..cfg.newcomer_lead)
            } else {
                rng.gen_range(0..3)
            };
            Taste {
                home,
                target,
                join,
                drift: if newcomer {
                    join
                } else {
                    rng.gen_range(cfg.drift_window.0..=cfg.drift_window.1)
                },
                rate: rng.gen_range(cfg.plays_per_month.0..=cfg.plays_per_month.1),
                hour: rng.gen_range(6.0..23.0),
            }
        })
        .collect();

    let catalog_pick = WeightedIndex::new(zipf_weights(cfg.songs_per_genre, cfg.zipf)).expect("positive weights");
    let trend_pick = WeightedIndex::new(zipf_weights(cfg.trending_per_genre, cfg.zipf)).expect("positive weights");
    let mut records = Vec::new();
    for (u, taste) in tastes.iter().enumerate() {
        let user = format!("user{u:02}");
        for month in taste.join..months {
            let begin = cfg.month_start(month);
            let span = (cfg.month_start(month + 1) - begin).num_seconds();
            let drifted = month >= taste.drift;
            for _ in 0..taste.rate {
                let day = rng.gen_range(0..span / 86_400);
                let hour = (taste.hour + rng.gen_range(-4.0..4.0)).rem_euclid(24.0);
                let instant = begin + Duration::days(day) + Duration::seconds((hour * 3600.0) as i64);
                let song = if rng.gen_bool(cfg.noise) {
                    let g = rng.gen_range(0..cfg.genres);
                    song_name(g, rng.gen_range(0..cfg.songs_per_genre), false)
                } else if !drifted {
                    song_name(taste.home, catalog_pick.sample(&mut rng), false)
                } else if month >= cfg.trend_month && rng.gen_bool(cfg.trend_share) {
                    song_name(taste.target, trend_pick.sample(&mut rng), true)
                } else {
                    song_name(taste.target, catalog_pick.sample(&mut rng), false)
                };
                records.push((user.clone(), song, instant));
            }
        }
    }
    PlayLog::from_records(records, FixedOffset::east_opt(0).expect("UTC"))
}

pub fn drift_split(cfg: &DriftConfig) -> Result<TemporalSplit> {
    split_temporal(&drift_log(cfg)?, cfg.boundary())
}
