mod common;

use std::collections::{HashMap, HashSet};

use chrono::{Duration, FixedOffset};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use playdecay::eval::metrics;
use playdecay::neighbors::{attribute_cosine, cosine, pearson};
use playdecay::playlog::{
    filter_context, hourly_frequencies, parse_log, split_temporal, write_log, ContextSegment, HabitScope, LogFormat,
    PlayLog,
};
use playdecay::ratings::{decay_frequencies, decay_play, decay_ratings, plain_ratings, DecayConfig, MAX_RATING};

fn log_from(seed: u64) -> PlayLog {
    common::random_log(&mut ChaCha8Rng::seed_from_u64(seed), 8, 12, 120)
}

fn multiset(log: &PlayLog) -> Vec<(String, String, i64)> {
    let mut v: Vec<_> = log
        .events()
        .iter()
        .map(|e| {
            (
                log.vocab().user_name(e.user).to_string(),
                log.vocab().song_name(e.song).to_string(),
                e.instant.timestamp_millis(),
            )
        })
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn morning_and_evening_partition_the_day(seed in any::<u64>()) {
        let log = log_from(seed);
        let morning = filter_context(&log, ContextSegment::Morning).map(|l| multiset(&l)).unwrap_or_default();
        let evening = filter_context(&log, ContextSegment::Evening).map(|l| multiset(&l)).unwrap_or_default();
        let mut joined = morning.clone();
        joined.extend(evening.iter().cloned());
        joined.sort();
        prop_assert_eq!(joined, multiset(&log));
        prop_assert_eq!(morning.len() + evening.len(), log.len());
    }

    #[test]
    fn split_then_merge_restores_the_log(seed in any::<u64>(), day in 1i64..700) {
        let log = log_from(seed);
        let boundary = common::origin() + Duration::days(day);
        if let Ok(split) = split_temporal(&log, boundary) {
            let merged = split.train.merged(&split.test).unwrap();
            prop_assert_eq!(multiset(&merged), multiset(&log));
            prop_assert!(split.train.events().iter().all(|e| e.instant < boundary));
            prop_assert!(split.test.events().iter().all(|e| e.instant >= boundary));
        }
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>(), offset_hours in -11i32..12) {
        let offset = FixedOffset::east_opt(offset_hours * 3600).unwrap();
        let log = PlayLog::from_records(
            log_from(seed).events().iter().map(|e| (format!("user {}", e.user.index()), format!("song/{}", e.song.index()), e.instant)),
            offset,
        ).unwrap();
        let mut buf = Vec::new();
        write_log(&log, &mut buf).unwrap();
        let parsed = parse_log(buf.as_slice(), &LogFormat::default(), offset).unwrap();
        prop_assert!(parsed.rejections.is_empty());
        prop_assert_eq!(parsed.log, log);
    }

    #[test]
    fn hourly_histogram_sums_to_one(seed in any::<u64>()) {
        let log = log_from(seed);
        let all = hourly_frequencies(&log, HabitScope::AllUsers).unwrap();
        prop_assert!((all.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let u = log.users()[0];
        let one = hourly_frequencies(&log, HabitScope::User(u)).unwrap();
        prop_assert!((one.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn decay_play_grows_towards_the_present(a in 0i64..10_000_000, b in 0i64..10_000_000, lambda in 0.01f64..5.0) {
        prop_assume!(a != b);
        let t_max = common::origin() + Duration::seconds(20_000_000);
        let (early, late) = (a.min(b), a.max(b));
        let cfg = DecayConfig::with_lambda(lambda);
        let w_early = decay_play(common::origin() + Duration::seconds(early), t_max, &cfg).unwrap();
        let w_late = decay_play(common::origin() + Duration::seconds(late), t_max, &cfg).unwrap();
        prop_assert!(w_late > w_early);
        prop_assert!(w_late <= 1.0 && w_early > 0.0);
    }

    #[test]
    fn frequencies_are_normalized(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let log = log_from(seed);
        let freqs = decay_frequencies(&log, &DecayConfig::with_lambda(lambda)).unwrap();
        for row in freqs.rows().values() {
            let total: f64 = row.frequencies().map(|(_, f)| f).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn ratings_are_in_range_with_a_top_song(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let log = log_from(seed);
        let ratings = decay_ratings(&log, &DecayConfig::with_lambda(lambda)).unwrap();
        for row in ratings.rows().values() {
            prop_assert!(row.iter().all(|&(_, r)| r > 0.0 && r <= MAX_RATING));
            prop_assert!(row.iter().any(|&(_, r)| r == MAX_RATING));
        }
    }

    #[test]
    fn ratings_follow_frequency_order(seed in any::<u64>(), lambda in 0.0f64..3.0) {
        let log = log_from(seed);
        let cfg = DecayConfig::with_lambda(lambda);
        let freqs = decay_frequencies(&log, &cfg).unwrap();
        let ratings = decay_ratings(&log, &cfg).unwrap();
        for (&u, row) in freqs.rows() {
            let f: Vec<_> = row.frequencies().collect();
            for &(a, fa) in &f {
                for &(b, fb) in &f {
                    let (ra, rb) = (ratings.get(u, a).unwrap(), ratings.get(u, b).unwrap());
                    if fa > fb {
                        prop_assert!(ra > rb);
                    } else if fa == fb {
                        prop_assert_eq!(ra, rb);
                    }
                }
            }
        }
    }

    #[test]
    fn plain_ratings_of_a_filtered_log_equal_the_contextual_pipeline(seed in any::<u64>()) {
        let log = log_from(seed);
        for segment in ContextSegment::ALL {
            let Ok(filtered) = filter_context(&log, segment) else { continue };
            let by_hand = log.filter(|e| segment.admits(log.local_hour(e.instant))).unwrap();
            let (a, b) = (plain_ratings(&filtered).unwrap(), plain_ratings(&by_hand).unwrap());
            prop_assert_eq!(a.rows(), b.rows());
            let cfg = DecayConfig::default();
            let (a, b) = (decay_ratings(&filtered, &cfg).unwrap(), decay_ratings(&by_hand, &cfg).unwrap());
            prop_assert_eq!(a.rows(), b.rows());
        }
    }

    #[test]
    fn similarities_are_symmetric_and_bounded(seed in any::<u64>()) {
        let ratings = plain_ratings(&log_from(seed)).unwrap();
        let users: Vec<_> = ratings.users().collect();
        for &a in &users {
            let (ra, ma) = (ratings.row(a), ratings.user_mean(a).unwrap());
            prop_assert!((cosine(ra, ra).unwrap() - 1.0).abs() <= 1e-12);
            for &b in &users {
                let (rb, mb) = (ratings.row(b), ratings.user_mean(b).unwrap());
                let (p1, p2) = (pearson(ra, ma, rb, mb), pearson(rb, mb, ra, ma));
                prop_assert_eq!(p1.is_some(), p2.is_some());
                if let (Some(x), Some(y)) = (p1, p2) {
                    prop_assert!((x - y).abs() <= 1e-12 && (-1.0..=1.0).contains(&x));
                }
                let (c1, c2) = (cosine(ra, rb).unwrap(), cosine(rb, ra).unwrap());
                prop_assert!((c1 - c2).abs() <= 1e-12 && (0.0..=1.0).contains(&c1));
            }
        }
    }

    #[test]
    fn dense_attribute_cosine_is_symmetric_and_bounded(
        x in prop::collection::vec(0.0f64..4.0, 1..20),
        y in prop::collection::vec(0.0f64..4.0, 1..20),
    ) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        match (attribute_cosine(x, y), attribute_cosine(y, x)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12 && (0.0..=1.0).contains(&a)),
            (None, None) => {}
            _ => prop_assert!(false, "asymmetric definedness"),
        }
    }

    #[test]
    fn metric_ranges_hold(
        scores in prop::collection::vec(-5.0f64..5.0, 2..50),
        flags in prop::collection::vec(any::<bool>(), 50),
        pairs in prop::collection::vec((0.0f64..4.0, 0.0f64..4.0), 1..40),
    ) {
        let mut scored: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let list: Vec<usize> = scored.iter().map(|x| x.0).collect();
        let relevant: HashSet<usize> = (0..scores.len()).filter(|&i| flags[i]).collect();
        let gains: HashMap<usize, f64> = relevant.iter().map(|&i| (i, 1.0 + (i % 4) as f64)).collect();
        let unit = 0.0..=1.0;
        for k in [5, 10, 15] {
            prop_assert!(unit.contains(&metrics::precision_at_k(&list, &relevant, k)));
        }
        if let Some(ap) = metrics::average_precision(&list, &relevant) {
            prop_assert!(unit.contains(&ap));
        }
        if let Some(n) = metrics::ndcg(&list, &gains, 100) {
            prop_assert!(unit.contains(&n));
        }
        if let Some(a) = metrics::auc(&scored, &relevant) {
            prop_assert!(unit.contains(&a));
        }
        let mae = metrics::mae(&pairs).unwrap();
        let rmse = metrics::rmse(&pairs).unwrap();
        prop_assert!(mae >= 0.0 && rmse + 1e-15 >= mae);
        prop_assert!(unit.contains(&metrics::nmae(mae, MAX_RATING, 0.0).unwrap()));
    }

    #[test]
    fn ideal_order_has_unit_ndcg(gains in prop::collection::vec(0.01f64..4.0, 1..50)) {
        let map: HashMap<usize, f64> = gains.iter().copied().enumerate().collect();
        let mut order: Vec<usize> = (0..gains.len()).collect();
        order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
        prop_assert!((metrics::ndcg(&order, &map, 100).unwrap() - 1.0).abs() <= 1e-12);
    }
}
