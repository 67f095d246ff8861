//! Weighted regularized matrix factorization for implicit feedback, solved by
//! alternating least squares over the full user x item grid.
//!
//! Preference is 1 for observed pairs and 0 otherwise; confidence is
//! `1 + alpha * r`. Objective:
//! `sum_{u,i} c_ui (p_ui - x_u . y_i)^2 + reg * (sum |x_u|^2 + sum |y_i|^2)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ensure_ratings, FactorModel, TrainConfig};
use crate::error::{Error, Result};
use crate::ratings::RatingMatrix;

/// Added to the diagonal when a normal-equation matrix is not positive definite.
const REGULARIZATION_FLOOR: f64 = 1e-6;

struct Observations {
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
}

impl Observations {
    fn new(ratings: &RatingMatrix, alpha: f64) -> Self {
        let mut by_user = vec![Vec::new(); ratings.vocab().num_users()];
        let mut by_item = vec![Vec::new(); ratings.vocab().num_songs()];
        for (u, s, r) in ratings.entries() {
            let c = 1.0 + alpha * r;
            by_user[u.index()].push((s.index(), c));
            by_item[s.index()].push((u.index(), c));
        }
        Observations { by_user, by_item }
    }
}

fn gram(factors: &[f64], d: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, d);
    for row in factors.chunks_exact(d) {
        for a in 0..d {
            for b in 0..d {
                g[(a, b)] += row[a] * row[b];
            }
        }
    }
    g
}

/// Solves every row of `target` given the fixed `other` side.
fn solve_side(
    target: &mut [f64],
    other: &[f64],
    obs: &[Vec<(usize, f64)>],
    d: usize,
    reg: f64,
    sweep: usize,
) -> Result<()> {
    let base = gram(other, d);
    for (row_idx, row) in target.chunks_exact_mut(d).enumerate() {
        let seen = &obs[row_idx];
        if seen.is_empty() {
            // rhs is zero, so the exact block solution is the zero vector
            row.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        let mut a = base.clone();
        let mut b = DVector::zeros(d);
        for &(j, c) in seen {
            let y = &other[j * d..(j + 1) * d];
            for p in 0..d {
                b[p] += c * y[p];
                for q in 0..d {
                    a[(p, q)] += (c - 1.0) * y[p] * y[q];
                }
            }
        }
        for p in 0..d {
            a[(p, p)] += reg;
        }
        let chol = match a.clone().cholesky() {
            Some(c) => c,
            None => {
                for p in 0..d {
                    a[(p, p)] += REGULARIZATION_FLOOR;
                }
                a.cholesky().ok_or_else(|| Error::DivergedTraining {
                    epoch: sweep,
                    reason: "singular normal equations".into(),
                })?
            }
        };
        let x = chol.solve(&b);
        row.copy_from_slice(x.as_slice());
    }
    Ok(())
}

pub fn wrmf_objective(model: &FactorModel, ratings: &RatingMatrix, cfg: &TrainConfig) -> f64 {
    let d = model.d;
    let yty = gram(&model.item_factors, d);
    // every pair as if unobserved: sum_u x_u^T (Y^T Y) x_u
    let mut total = 0.0;
    for x in model.user_factors.chunks_exact(d) {
        let xv = DVector::from_column_slice(x);
        total += (xv.transpose() * &yty * &xv)[(0, 0)];
    }
    for (u, s, r) in ratings.entries() {
        let c = 1.0 + cfg.wrmf_alpha * r;
        let score: f64 = model
            .user(u.index())
            .iter()
            .zip(model.item(s.index()))
            .map(|(a, b)| a * b)
            .sum();
        total += c * (1.0 - score).powi(2) - score * score;
    }
    let penalty: f64 = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .map(|x| x * x)
        .sum();
    total + cfg.regularization * penalty
}

pub fn train_wrmf(ratings: &RatingMatrix, cfg: &TrainConfig) -> Result<FactorModel> {
    cfg.validate()?;
    ensure_ratings(ratings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = FactorModel::initialize(ratings, cfg.d, false, &mut rng, cfg.seed);
    let obs = Observations::new(ratings, cfg.wrmf_alpha);
    let d = cfg.d;
    for sweep in 1..=cfg.wrmf_iterations {
        solve_side(
            &mut model.user_factors,
            &model.item_factors,
            &obs.by_user,
            d,
            cfg.regularization,
            sweep,
        )?;
        solve_side(
            &mut model.item_factors,
            &model.user_factors,
            &obs.by_item,
            d,
            cfg.regularization,
            sweep,
        )?;
        model.check_finite(sweep)?;
        let objective = wrmf_objective(&model, ratings, cfg);
        if !objective.is_finite() {
            return Err(Error::DivergedTraining {
                epoch: sweep,
                reason: format!("objective became {objective}"),
            });
        }
        model.loss_history.push(objective);
        model.trained_epochs = sweep;
    }
    Ok(model)
}
