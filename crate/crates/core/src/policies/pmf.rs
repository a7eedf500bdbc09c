use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::{choose, decision, recommend_pure_explore, Candidate, FeedbackRecord, Policy, PolicyDecision, UserRound};
use crate::domain::{ChallengeId, DimMask, UserId};
use crate::error::{Error, Result};
use crate::evaluation::InteractionLog;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmfConfig {
    pub factors: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
}

impl Default for PmfConfig {
    fn default() -> Self {
        Self {
            factors: 8,
            learning_rate: 0.05,
            reg: 0.1,
            epochs: 50,
        }
    }
}

/// One observed (user, item) cell: 1 for selected, 0 for offered but not
/// selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfRating {
    pub user: UserId,
    pub item: ChallengeId,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmfModel {
    factors: usize,
    users: HashMap<UserId, usize>,
    items: HashMap<ChallengeId, usize>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    epoch_losses: Vec<f64>,
}

impl PmfModel {
    pub fn factors(&self) -> usize {
        self.factors
    }

    /// `U_iᵀ V_k`, or `None` for a user or item never seen in training.
    pub fn predict(&self, user: UserId, item: ChallengeId) -> Option<f64> {
        let i = *self.users.get(&user)?;
        let k = *self.items.get(&item)?;
        let f = self.factors;
        Some(
            self.user_factors[i * f..(i + 1) * f]
                .iter()
                .zip(&self.item_factors[k * f..(k + 1) * f])
                .map(|(a, b)| a * b)
                .sum(),
        )
    }

    /// Mean squared training error of each epoch, accumulated during the pass.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn user_frobenius(&self) -> f64 {
        self.user_factors.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn item_frobenius(&self) -> f64 {
        self.item_factors.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Fits factors to a logged interaction history (selected = 1, offered and
/// not selected = 0).
pub fn fit_pmf(log: &InteractionLog, config: PmfConfig, rng: &mut StreamRng) -> Result<PmfModel> {
    let ratings: Vec<_> = log
        .records
        .iter()
        .map(|r| PmfRating {
            user: r.user,
            item: r.action,
            value: if r.reward { 1.0 } else { 0.0 },
        })
        .collect();
    fit_pmf_ratings(&ratings, config, rng)
}

/// SGD on `Σ (r − U_iᵀV_k)² + reg (‖U‖² + ‖V‖²)` over the observed cells.
pub fn fit_pmf_ratings(ratings: &[PmfRating], config: PmfConfig, rng: &mut StreamRng) -> Result<PmfModel> {
    if ratings.is_empty() {
        return Err(Error::EmptyLog);
    }
    if config.factors == 0 {
        return Err(Error::invalid_config("pmf.factors", "must be >= 1"));
    }
    let f = config.factors;
    let user_ids: BTreeSet<_> = ratings.iter().map(|r| r.user).collect();
    let item_ids: BTreeSet<_> = ratings.iter().map(|r| r.item).collect();
    let users: HashMap<_, _> = user_ids.into_iter().enumerate().map(|(i, u)| (u, i)).collect();
    let items: HashMap<_, _> = item_ids.into_iter().enumerate().map(|(i, k)| (k, i)).collect();

    let init = Normal::new(0.0, 0.1).expect("valid normal");
    let mut user_factors: Vec<f64> = (0..users.len() * f).map(|_| rng.sample(init)).collect();
    let mut item_factors: Vec<f64> = (0..items.len() * f).map(|_| rng.sample(init)).collect();

    let cells: Vec<(usize, usize, f64)> = ratings
        .iter()
        .map(|r| (users[&r.user], items[&r.item], r.value))
        .collect();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let (lr, reg) = (config.learning_rate, config.reg);

    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut sq = 0.0;
        for &c in &order {
            let (i, k, r) = cells[c];
            let u = &mut user_factors[i * f..(i + 1) * f];
            let v = &mut item_factors[k * f..(k + 1) * f];
            let pred: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let err = r - pred;
            sq += err * err;
            for j in 0..f {
                let (uj, vj) = (u[j], v[j]);
                u[j] += lr * (err * vj - reg * uj);
                v[j] += lr * (err * uj - reg * vj);
            }
        }
        epoch_losses.push(sq / cells.len() as f64);
    }
    if user_factors.iter().chain(&item_factors).any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue(
            "matrix factorization diverged; lower the learning rate".into(),
        ));
    }

    Ok(PmfModel {
        factors: f,
        users,
        items,
        user_factors,
        item_factors,
        epoch_losses,
    })
}

/// Scores are `U_iᵀV_k`; unknown users or items score 0.
pub fn recommend_pmf(
    model: &PmfModel,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
) -> PolicyDecision {
    let scores: Vec<_> = candidates
        .iter()
        .map(|c| (c.id, model.predict(user.user, c.id).unwrap_or(0.0)))
        .collect();
    decision(user, super::top_k(&scores, k))
}

/// Matrix-factorization policy: explores uniformly during the warm-up
/// rounds, fits once on everything observed so far, then (optionally) refits
/// every `refit_every` rounds.
#[derive(Debug, Clone)]
pub struct MatrixFactorization {
    name: String,
    config: PmfConfig,
    warmup_rounds: u32,
    refit_every: Option<u32>,
    ratings: Vec<PmfRating>,
    model: Option<PmfModel>,
    fit_rng: StreamRng,
    last_fit_week: u32,
    required: Option<DimMask>,
}

impl MatrixFactorization {
    pub fn new(
        name: impl Into<String>,
        config: PmfConfig,
        warmup_rounds: u32,
        refit_every: Option<u32>,
        fit_rng: StreamRng,
        required: Option<DimMask>,
    ) -> Self {
        Self {
            name: name.into(),
            config,
            warmup_rounds,
            refit_every,
            ratings: Vec::new(),
            model: None,
            fit_rng,
            last_fit_week: 0,
            required,
        }
    }

    pub fn model(&self) -> Option<&PmfModel> {
        self.model.as_ref()
    }
}

impl Policy for MatrixFactorization {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(
        &self,
        user: &UserRound<'_>,
        candidates: &[Candidate],
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<PolicyDecision> {
        match &self.model {
            None => Ok(recommend_pure_explore(user, candidates, k, rng)),
            Some(model) => {
                let scores: Vec<_> = candidates
                    .iter()
                    .map(|c| (c.id, model.predict(user.user, c.id).unwrap_or(0.0)))
                    .collect();
                let masks: Vec<_> = candidates.iter().map(|c| c.mask).collect();
                Ok(decision(user, choose(&scores, &masks, k, self.required)?))
            }
        }
    }

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        let Some(week) = feedback.iter().map(|f| f.week).max() else {
            return Ok(());
        };
        self.ratings.extend(feedback.iter().map(|f| PmfRating {
            user: f.user,
            item: f.item,
            value: if f.reward { 1.0 } else { 0.0 },
        }));
        let due = match (&self.model, self.refit_every) {
            (None, _) => week >= self.warmup_rounds,
            (Some(_), Some(every)) => every > 0 && week >= self.last_fit_week + every,
            (Some(_), None) => false,
        };
        if due && !self.ratings.is_empty() {
            self.model = Some(fit_pmf_ratings(&self.ratings, self.config, &mut self.fit_rng)?);
            self.last_fit_week = week;
        }
        Ok(())
    }
}
