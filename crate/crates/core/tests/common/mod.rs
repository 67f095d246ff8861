#![allow(dead_code)]

use chrono::{DateTime, Duration, FixedOffset, TimeZone, Utc};
use playdecay::playlog::PlayLog;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn origin() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2008, 1, 1, 0, 0, 0).unwrap()
}

/// Up to `max_plays` plays of up to `max_users` users over `max_songs` songs,
/// spread over two years at one-second resolution. Songs are drawn with a
/// skew so that some users repeat favourites.
pub fn random_log(rng: &mut ChaCha8Rng, max_users: usize, max_songs: usize, max_plays: usize) -> PlayLog {
    let users = rng.gen_range(1..=max_users);
    let songs = rng.gen_range(1..=max_songs);
    let plays = rng.gen_range(1..=max_plays);
    let span = 2 * 365 * 86_400;
    let records: Vec<_> = (0..plays)
        .map(|_| {
            let u = rng.gen_range(0..users);
            let s = (rng.gen_range(0.0f64..1.0).powi(2) * songs as f64) as usize;
            let t = origin() + Duration::seconds(rng.gen_range(0..span));
            (format!("u{u}"), format!("s{s}"), t)
        })
        .collect();
    PlayLog::from_records(records, FixedOffset::east_opt(0).unwrap()).unwrap()
}

/// Log with at least `min_plays` plays of every user, split at one year.
pub fn random_split_log(rng: &mut ChaCha8Rng, users: usize, songs: usize, min_plays: usize) -> PlayLog {
    let span = 2 * 365 * 86_400;
    let mut records = Vec::new();
    for u in 0..users {
        let plays = rng.gen_range(min_plays..=3 * min_plays);
        let taste = rng.gen_range(0..songs);
        for _ in 0..plays {
            let offset = (rng.gen_range(0.0f64..1.0).powi(2) * songs as f64 / 2.0) as usize;
            let s = (taste + offset) % songs;
            let t = origin() + Duration::seconds(rng.gen_range(0..span));
            records.push((format!("u{u}"), format!("s{s}"), t));
        }
    }
    PlayLog::from_records(records, FixedOffset::east_opt(0).unwrap()).unwrap()
}

pub fn split_point() -> DateTime<Utc> {
    origin() + Duration::days(365)
}
