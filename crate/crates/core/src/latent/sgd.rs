//! SGD matrix factorization on observed ratings, optionally with biases.
//!
//! Objective: sum over observed (u, i) of
//! `0.5 * [(r - x)^2 + reg * (|p_u|^2 + |q_i|^2 + b_u^2 + b_i^2)]`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ensure_ratings, FactorModel, TrainConfig};
use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

type Entry = (usize, usize, f64);

/// Full-batch gradient with the same layout as [`FactorModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub users: Vec<f64>,
    pub items: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

impl Gradient {
    fn zeros(model: &FactorModel) -> Self {
        Gradient {
            users: vec![0.0; model.user_factors.len()],
            items: vec![0.0; model.item_factors.len()],
            user_bias: vec![0.0; model.num_users()],
            item_bias: vec![0.0; model.num_items()],
        }
    }
}

fn entries(ratings: &RatingMatrix) -> Vec<Entry> {
    ratings.entries().map(|(u, s, r)| (u.index(), s.index(), r)).collect()
}

pub fn mf_objective(model: &FactorModel, ratings: &RatingMatrix, reg: f64) -> f64 {
    entries(ratings)
        .iter()
        .map(|&(u, i, r)| entry_loss(model, u, i, r, reg))
        .sum()
}

fn sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

fn entry_loss(model: &FactorModel, u: usize, i: usize, r: f64, reg: f64) -> f64 {
    let e = r - model.raw_score(u, i);
    let mut penalty = sq(model.user(u)) + sq(model.item(i));
    if let Some(b) = &model.biases {
        penalty += b.user[u] * b.user[u] + b.item[i] * b.item[i];
    }
    0.5 * (e * e + reg * penalty)
}

/// Per-entry gradient; `sink(kind, index, value)` receives each component.
fn entry_gradient(model: &FactorModel, u: usize, i: usize, r: f64, reg: f64, mut sink: impl FnMut(Part, usize, f64)) {
    let e = r - model.raw_score(u, i);
    let (pu, qi) = (model.user(u), model.item(i));
    for z in 0..model.d {
        sink(Part::User, u * model.d + z, -e * qi[z] + reg * pu[z]);
        sink(Part::Item, i * model.d + z, -e * pu[z] + reg * qi[z]);
    }
    if let Some(b) = &model.biases {
        sink(Part::UserBias, u, -e + reg * b.user[u]);
        sink(Part::ItemBias, i, -e + reg * b.item[i]);
    }
}

#[derive(Copy, Clone)]
enum Part {
    User,
    Item,
    UserBias,
    ItemBias,
}

pub fn mf_gradient(model: &FactorModel, ratings: &RatingMatrix, reg: f64) -> Gradient {
    let mut g = Gradient::zeros(model);
    for (u, i, r) in entries(ratings) {
        entry_gradient(model, u, i, r, reg, |part, idx, v| match part {
            Part::User => g.users[idx] += v,
            Part::Item => g.items[idx] += v,
            Part::UserBias => g.user_bias[idx] += v,
            Part::ItemBias => g.item_bias[idx] += v,
        });
    }
    g
}

fn sgd_step(model: &mut FactorModel, u: usize, i: usize, r: f64, cfg: &TrainConfig) {
    let mut updates: Vec<(Part, usize, f64)> = Vec::with_capacity(2 * model.d + 2);
    entry_gradient(model, u, i, r, cfg.regularization, |part, idx, v| {
        updates.push((part, idx, v))
    });
    let lr = cfg.learning_rate;
    for (part, idx, g) in updates {
        match part {
            Part::User => model.user_factors[idx] -= lr * g,
            Part::Item => model.item_factors[idx] -= lr * g,
            Part::UserBias => model.biases.as_mut().expect("biased").user[idx] -= lr * g,
            Part::ItemBias => model.biases.as_mut().expect("biased").item[idx] -= lr * g,
        }
    }
}

/// Trains MF (or BMF when `biased`) with one shuffled pass over the observed
/// ratings per epoch.
pub fn train_mf(ratings: &RatingMatrix, cfg: &TrainConfig, biased: bool) -> Result<FactorModel> {
    cfg.validate()?;
    ensure_ratings(ratings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = FactorModel::initialize(ratings, cfg.d, biased, &mut rng, cfg.seed);
    let mut order = entries(ratings);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for &(u, i, r) in &order {
            sgd_step(&mut model, u, i, r, cfg);
        }
        let loss: f64 = order
            .iter()
            .map(|&(u, i, r)| entry_loss(&model, u, i, r, cfg.regularization))
            .sum();
        if !loss.is_finite() {
            return Err(Error::DivergedTraining {
                epoch,
                reason: format!("loss became {loss}"),
            });
        }
        model.check_finite(epoch)?;
        model.loss_history.push(loss);
        model.trained_epochs = epoch;
    }
    Ok(model)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::playlog::{PlayLog, SongId, UserId};
    use crate::ratings::{RatingMatrix, RatingVariant};
    use chrono::{FixedOffset, TimeZone, Utc};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    pub(crate) fn dense(values: &[&[f64]]) -> RatingMatrix {
        let t = Utc.with_ymd_and_hms(2008, 1, 1, 0, 0, 0).unwrap();
        let width = values[0].len();
        let log = PlayLog::from_records(
            (0..values.len()).flat_map(|u| (0..width).map(move |i| (format!("u{u}"), format!("i{i}"), t))),
            FixedOffset::east_opt(0).unwrap(),
        )
        .unwrap();
        let rows: BTreeMap<_, _> = values
            .iter()
            .enumerate()
            .map(|(u, row)| {
                let r: Vec<_> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| !v.is_nan())
                    .map(|(i, &v)| (SongId(i as u32), v))
                    .collect();
                (UserId(u as u32), r)
            })
            .collect();
        RatingMatrix::from_rows(Arc::clone(log.vocab()), RatingVariant::Plain, rows)
    }

    fn rmse(model: &FactorModel, m: &RatingMatrix) -> f64 {
        let es: Vec<f64> = m
            .entries()
            .map(|(u, s, r)| r - model.predict_score(u, s).value)
            .collect();
        (es.iter().map(|e| e * e).sum::<f64>() / es.len() as f64).sqrt()
    }

    #[test]
    fn recovers_rank_one_matrix() {
        let a = [1.0, 1.5, 0.5, 2.0];
        let b = [2.0, 1.0, 1.5, 0.8, 1.2];
        let rows: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = dense(&refs);
        let cfg = TrainConfig {
            d: 1,
            learning_rate: 0.05,
            regularization: 0.0,
            epochs: 3000,
            ..Default::default()
        };
        let model = train_mf(&m, &cfg, false).unwrap();
        assert!(rmse(&model, &m) < 0.05, "rmse {}", rmse(&model, &m));
    }

    #[test]
    fn zero_learning_rate_freezes_model() {
        let m = dense(&[&[4.0, 2.0], &[1.0, f64::NAN]]);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            d: 3,
            ..Default::default()
        };
        let trained = train_mf(&m, &cfg, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = FactorModel::initialize(&m, 3, true, &mut rng, cfg.seed);
        assert_eq!(trained.user_factors, init.user_factors);
        assert_eq!(trained.item_factors, init.item_factors);
        let first = trained.loss_history[0];
        assert!(trained.loss_history.iter().all(|l| *l == first));
    }

    #[test]
    fn unobserved_user_keeps_initial_factors() {
        let m = dense(&[&[4.0, 2.0], &[f64::NAN, f64::NAN], &[1.0, 3.0]]);
        let cfg = TrainConfig {
            d: 2,
            epochs: 10,
            ..Default::default()
        };
        let trained = train_mf(&m, &cfg, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = FactorModel::initialize(&m, 2, true, &mut rng, cfg.seed);
        assert_eq!(trained.user(1), init.user(1));
        let b = trained.biases.as_ref().unwrap();
        assert_eq!(b.user[1], 0.0);
        let p = trained.predict_score(UserId(1), SongId(0));
        let dot: f64 = trained.user(1).iter().zip(trained.item(0)).map(|(x, y)| x * y).sum();
        assert!((p.value - (b.global_mean + b.item[0] + dot)).abs() < 1e-15);
        assert!(p.fallback);
    }

    #[test]
    fn training_is_deterministic() {
        let m = dense(&[&[4.0, 2.0, 1.0], &[1.0, f64::NAN, 3.0]]);
        let cfg = TrainConfig::default();
        assert_eq!(train_mf(&m, &cfg, true).unwrap(), train_mf(&m, &cfg, true).unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let m = dense(&[&[4.0, 2.0, 1.0], &[1.0, 4.0, 3.0]]);
        let cfg = TrainConfig {
            learning_rate: 50.0,
            epochs: 200,
            ..Default::default()
        };
        assert!(matches!(train_mf(&m, &cfg, false), Err(Error::DivergedTraining { .. })));
    }

    #[test]
    fn empty_input_is_rejected() {
        let m = dense(&[&[f64::NAN]]);
        assert!(train_mf(&m, &TrainConfig::default(), false).is_err());
    }
}
