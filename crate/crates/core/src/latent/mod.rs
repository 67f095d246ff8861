//! Matrix-factorization baselines: SGD matrix factorization (plain and
//! biased), WRMF by alternating least squares, and BPR.

mod bpr;
mod sgd;
mod wrmf;

pub use bpr::{bpr_gradient, bpr_objective, mean_pair_probability, sample_triples, train_bpr, Triple};
pub use sgd::{mf_gradient, mf_objective, train_mf, Gradient};
pub use wrmf::{train_wrmf, wrmf_objective};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::playlog::{SongId, UserId};
use crate::ratings::RatingMatrix;
use crate::scoring::{Prediction, Scorer};

const INIT_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub d: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub seed: u64,
    pub wrmf_alpha: f64,
    pub wrmf_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 10,
            learning_rate: 0.01,
            regularization: 0.05,
            epochs: 30,
            seed: 42,
            wrmf_alpha: 40.0,
            wrmf_iterations: 15,
        }
    }
}

impl TrainConfig {
    /// `epochs = 0` is accepted and leaves models at their initialization.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d == 0 {
            return bad("latent dimension must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return bad(format!("regularization must be >= 0, got {}", self.regularization));
        }
        if !(self.wrmf_alpha >= 0.0 && self.wrmf_alpha.is_finite()) {
            return bad(format!("WRMF alpha must be >= 0, got {}", self.wrmf_alpha));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Biases {
    pub global_mean: f64,
    pub user: Vec<f64>,
    pub item: Vec<f64>,
}

/// Dense user and item factors, row-major with stride `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorModel {
    pub d: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub biases: Option<Biases>,
    pub trained_epochs: usize,
    pub seed: u64,
    /// Training objective after each epoch (ALS sweep for WRMF).
    pub loss_history: Vec<f64>,
    observed_users: Vec<bool>,
    observed_items: Vec<bool>,
}

impl FactorModel {
    /// Factors drawn uniformly from (-0.01, 0.01), users first; biases start at 0.
    fn initialize(ratings: &RatingMatrix, d: usize, biased: bool, rng: &mut ChaCha8Rng, seed: u64) -> Self {
        let n_users = ratings.vocab().num_users();
        let n_items = ratings.vocab().num_songs();
        let mut draw = |n: usize| -> Vec<f64> { (0..n * d).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE)).collect() };
        let user_factors = draw(n_users);
        let item_factors = draw(n_items);
        let mut observed_users = vec![false; n_users];
        let mut observed_items = vec![false; n_items];
        let mut sum = 0.0;
        let mut count = 0usize;
        for (u, s, r) in ratings.entries() {
            observed_users[u.index()] = true;
            observed_items[s.index()] = true;
            sum += r;
            count += 1;
        }
        let biases = biased.then(|| Biases {
            global_mean: if count > 0 { sum / count as f64 } else { 0.0 },
            user: vec![0.0; n_users],
            item: vec![0.0; n_items],
        });
        FactorModel {
            d,
            user_factors,
            item_factors,
            biases,
            trained_epochs: 0,
            seed,
            loss_history: Vec::new(),
            observed_users,
            observed_items,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_factors.len() / self.d
    }

    pub fn num_items(&self) -> usize {
        self.item_factors.len() / self.d
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.d..(u + 1) * self.d]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.d..(i + 1) * self.d]
    }

    fn raw_score(&self, u: usize, i: usize) -> f64 {
        let dot: f64 = self.user(u).iter().zip(self.item(i)).map(|(a, b)| a * b).sum();
        match &self.biases {
            Some(b) => b.global_mean + b.user[u] + b.item[i] + dot,
            None => dot,
        }
    }

    /// Dot product plus biases. Pairs outside the model fall back to the global
    /// mean (biased) or 0; pairs without training evidence are flagged.
    pub fn predict_score(&self, user: UserId, item: SongId) -> Prediction {
        let (u, i) = (user.index(), item.index());
        if u >= self.num_users() || i >= self.num_items() {
            return Prediction {
                value: self.biases.as_ref().map_or(0.0, |b| b.global_mean),
                fallback: true,
            };
        }
        Prediction {
            value: self.raw_score(u, i),
            fallback: !(self.observed_users[u] && self.observed_items[i]),
        }
    }

    fn check_finite(&self, epoch: usize) -> Result<()> {
        let finite = self
            .user_factors
            .iter()
            .chain(&self.item_factors)
            .all(|x| x.is_finite())
            && self
                .biases
                .as_ref()
                .is_none_or(|b| b.user.iter().chain(&b.item).all(|x| x.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(Error::DivergedTraining {
                epoch,
                reason: "non-finite factor values".into(),
            })
        }
    }

    /// Plain-text dump: a header line of hyperparameters, then one factor row
    /// per user and per item with 9 significant digits.
    pub fn write_text<W: Write>(&self, cfg: &TrainConfig, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# d={} seed={} epochs={} learning_rate={} regularization={} wrmf_alpha={} wrmf_iterations={} biased={}",
            self.d,
            self.seed,
            self.trained_epochs,
            cfg.learning_rate,
            cfg.regularization,
            cfg.wrmf_alpha,
            cfg.wrmf_iterations,
            self.biases.is_some()
        )?;
        if let Some(b) = &self.biases {
            writeln!(out, "mu\t{:.8e}", b.global_mean)?;
        }
        let fmt_row = |xs: &[f64]| xs.iter().map(|x| format!("{x:.8e}")).collect::<Vec<_>>().join("\t");
        for u in 0..self.num_users() {
            let bias = self
                .biases
                .as_ref()
                .map(|b| format!("\t{:.8e}", b.user[u]))
                .unwrap_or_default();
            writeln!(out, "u{u}{bias}\t{}", fmt_row(self.user(u)))?;
        }
        for i in 0..self.num_items() {
            let bias = self
                .biases
                .as_ref()
                .map(|b| format!("\t{:.8e}", b.item[i]))
                .unwrap_or_default();
            writeln!(out, "i{i}{bias}\t{}", fmt_row(self.item(i)))?;
        }
        Ok(())
    }
}

impl Scorer for FactorModel {
    fn predict(&self, user: UserId, song: SongId) -> Result<Prediction> {
        Ok(self.predict_score(user, song))
    }
}

fn ensure_ratings(ratings: &RatingMatrix) -> Result<()> {
    if ratings.is_empty() {
        Err(Error::DegenerateData("no observed ratings to train on".into()))
    } else {
        Ok(())
    }
}
