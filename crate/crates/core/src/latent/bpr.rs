//! Bayesian personalized ranking over sampled (user, positive, negative) triples.
//!
//! Per-triple loss: `-ln sigmoid(x_ui - x_uj) + 0.5 * reg * (|p_u|^2 + |q_i|^2 + |q_j|^2)`.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ensure_ratings, FactorModel, Gradient, TrainConfig};
use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(sigmoid(z))` without overflow.
fn ln_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn margin(model: &FactorModel, t: &Triple) -> f64 {
    let pu = model.user(t.user);
    dot(pu, model.item(t.positive)) - dot(pu, model.item(t.negative))
}

fn triple_loss(model: &FactorModel, t: &Triple, reg: f64) -> f64 {
    let penalty = [model.user(t.user), model.item(t.positive), model.item(t.negative)]
        .iter()
        .map(|v| dot(v, v))
        .sum::<f64>();
    -ln_sigmoid(margin(model, t)) + 0.5 * reg * penalty
}

pub fn bpr_objective(model: &FactorModel, triples: &[Triple], reg: f64) -> f64 {
    triples.iter().map(|t| triple_loss(model, t, reg)).sum()
}

/// Mean of `sigmoid(x_ui - x_uj)` over `triples`.
pub fn mean_pair_probability(model: &FactorModel, triples: &[Triple]) -> f64 {
    triples.iter().map(|t| sigmoid(margin(model, t))).sum::<f64>() / triples.len() as f64
}

/// Gradient of a single triple's loss: (d/dp_u, d/dq_i, d/dq_j).
fn triple_gradient(model: &FactorModel, t: &Triple, reg: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let g = -sigmoid(-margin(model, t));
    let (pu, qi, qj) = (model.user(t.user), model.item(t.positive), model.item(t.negative));
    let d_pu = (0..model.d).map(|z| g * (qi[z] - qj[z]) + reg * pu[z]).collect();
    let d_qi = (0..model.d).map(|z| g * pu[z] + reg * qi[z]).collect();
    let d_qj = (0..model.d).map(|z| -g * pu[z] + reg * qj[z]).collect();
    (d_pu, d_qi, d_qj)
}

pub fn bpr_gradient(model: &FactorModel, triples: &[Triple], reg: f64) -> Gradient {
    let mut grad = Gradient {
        users: vec![0.0; model.user_factors.len()],
        items: vec![0.0; model.item_factors.len()],
        user_bias: vec![0.0; model.num_users()],
        item_bias: vec![0.0; model.num_items()],
    };
    let d = model.d;
    for t in triples {
        let (gu, gi, gj) = triple_gradient(model, t, reg);
        for z in 0..d {
            grad.users[t.user * d + z] += gu[z];
            grad.items[t.positive * d + z] += gi[z];
            grad.items[t.negative * d + z] += gj[z];
        }
    }
    grad
}

struct Sampler {
    positives: Vec<(usize, usize)>,
    seen: Vec<HashSet<usize>>,
    catalog: Vec<usize>,
}

impl Sampler {
    /// Positives of users that have at least one unobserved catalog item.
    fn new(ratings: &RatingMatrix) -> Result<Self> {
        let catalog: Vec<usize> = ratings.songs().iter().map(|s| s.index()).collect();
        let mut seen = vec![HashSet::new(); ratings.vocab().num_users()];
        let mut positives = Vec::new();
        for u in ratings.users() {
            let row = ratings.row(u);
            if row.len() >= catalog.len() {
                continue;
            }
            for &(s, _) in row {
                seen[u.index()].insert(s.index());
                positives.push((u.index(), s.index()));
            }
        }
        if positives.is_empty() {
            return Err(Error::DegenerateData(
                "no user has both an observed and an unobserved item".into(),
            ));
        }
        Ok(Sampler {
            positives,
            seen,
            catalog,
        })
    }

    /// Positive pair uniform over observations, negative uniform over the
    /// user's unobserved items.
    fn draw(&self, rng: &mut ChaCha8Rng) -> Triple {
        let (user, positive) = self.positives[rng.gen_range(0..self.positives.len())];
        loop {
            let negative = self.catalog[rng.gen_range(0..self.catalog.len())];
            if !self.seen[user].contains(&negative) {
                return Triple {
                    user,
                    positive,
                    negative,
                };
            }
        }
    }
}

/// Draws `n` triples with a dedicated seeded generator.
pub fn sample_triples(ratings: &RatingMatrix, n: usize, seed: u64) -> Result<Vec<Triple>> {
    let sampler = Sampler::new(ratings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
}

/// One epoch draws as many triples as there are eligible observations.
pub fn train_bpr(ratings: &RatingMatrix, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    ensure_ratings(ratings)?;
    let sampler = Sampler::new(ratings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = FactorModel::initialize(ratings, cfg.d, false, &mut rng, cfg.seed);
    let per_epoch = sampler.positives.len();
    let d = cfg.d;
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for _ in 0..per_epoch {
            let t = sampler.draw(&mut rng);
            total += triple_loss(&model, &t, cfg.regularization);
            let (gu, gi, gj) = triple_gradient(&model, &t, cfg.regularization);
            for z in 0..d {
                model.user_factors[t.user * d + z] -= cfg.learning_rate * gu[z];
                model.item_factors[t.positive * d + z] -= cfg.learning_rate * gi[z];
                model.item_factors[t.negative * d + z] -= cfg.learning_rate * gj[z];
            }
        }
        let mean = total / per_epoch as f64;
        if !mean.is_finite() {
            return Err(Error::DivergedTraining {
                epoch,
                reason: format!("mean triple loss became {mean}"),
            });
        }
        model.check_finite(epoch)?;
        model.loss_history.push(mean);
        model.trained_epochs = epoch;
    }
    Ok(model)
}
