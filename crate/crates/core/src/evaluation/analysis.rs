use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RecommendationSets;
use crate::domain::{Catalog, ChallengeId, Dimension, UserId};
use crate::error::{check_len, Error, Result};
use crate::features::ItemFeatures;
use crate::reward_model::{dot, sigmoid};

pub const DEFAULT_DYNAMIC_USERS: usize = 30;

/// Frequencies over (weight_loss, diet, exercise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityDistribution(pub [f64; 3]);

impl DiversityDistribution {
    pub fn new(p: [f64; 3]) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidValue(format!("{p:?} is not a distribution")));
        }
        Ok(Self(p))
    }

    pub fn probabilities(&self) -> [f64; 3] {
        self.0
    }
}

fn kl_to_mid(p: &[f64; 3], m: &[f64; 3]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).log2())
        .sum()
}

/// Jensen-Shannon divergence with base-2 logarithms.
pub fn jsd(p: &DiversityDistribution, q: &DiversityDistribution) -> f64 {
    let mut m = [0.0; 3];
    for j in 0..3 {
        m[j] = 0.5 * (p.0[j] + q.0[j]);
    }
    let v = 0.5 * kl_to_mid(&p.0, &m) + 0.5 * kl_to_mid(&q.0, &m);
    v.clamp(0.0, 1.0)
}

/// One count per dimension bit per event, normalized.
pub fn diversity_distribution<I>(events: I, catalog: &Catalog) -> Result<DiversityDistribution>
where
    I: IntoIterator<Item = ChallengeId>,
{
    let mut counts = [0u64; 3];
    for id in events {
        let mask = catalog.mask(id);
        for (j, dim) in Dimension::ALL.iter().enumerate() {
            if mask.contains(*dim) {
                counts[j] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoTypedEvents);
    }
    Ok(DiversityDistribution(counts.map(|c| c as f64 / total as f64)))
}

fn preferred_counts(
    recs: &RecommendationSets,
    prefs: &BTreeMap<UserId, BTreeSet<ChallengeId>>,
) -> BTreeMap<UserId, usize> {
    let mut counts = BTreeMap::new();
    for ((user, _), set) in recs {
        let hits = prefs
            .get(user)
            .map_or(0, |p| set.iter().filter(|i| p.contains(i)).count());
        *counts.entry(*user).or_insert(0) += hits;
    }
    counts
}

/// Fraction of users who receive strictly more preferred items over the
/// horizon from `focal` than from `baseline`.
pub fn user_improvement(
    focal: &RecommendationSets,
    baseline: &RecommendationSets,
    preference_sets: &BTreeMap<UserId, BTreeSet<ChallengeId>>,
) -> f64 {
    let f = preferred_counts(focal, preference_sets);
    let b = preferred_counts(baseline, preference_sets);
    let users: BTreeSet<_> = f.keys().chain(b.keys()).copied().collect();
    if users.is_empty() {
        return 0.0;
    }
    let improved = users
        .iter()
        .filter(|u| f.get(u).copied().unwrap_or(0) > b.get(u).copied().unwrap_or(0))
        .count();
    improved as f64 / users.len() as f64
}

fn dynamic_score(chosen: &[ItemFeatures]) -> f64 {
    if chosen.len() < 2 {
        return 0.0;
    }
    let n = chosen.len() as f64;
    let d = chosen[0].0.len();
    (0..d)
        .map(|j| {
            let mean = chosen.iter().map(|v| v.0[j]).sum::<f64>() / n;
            chosen.iter().map(|v| (v.0[j] - mean).powi(2)).sum::<f64>() / n
        })
        .fold(f64::INFINITY, f64::min)
        .min(f64::MAX)
        .max(0.0)
}

/// Users ranked by the minimum per-coordinate variance of their chosen
/// items, highest first, ties by id; at most `n` returned.
pub fn select_dynamic_users(selections: &BTreeMap<UserId, Vec<ItemFeatures>>, n: usize) -> Vec<UserId> {
    let mut scored: Vec<(UserId, f64)> = selections
        .iter()
        .map(|(u, chosen)| {
            let s = dynamic_score(chosen);
            (*u, if s.is_finite() { s } else { 0.0 })
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(n).map(|(u, _)| u).collect()
}

/// `σ(ωᵀ[1, user_emb, mean(chosen)])`; the mean is the zero vector when
/// nothing was chosen.
pub fn weight_outcome_probability(user_emb: &[f64], chosen: &[ItemFeatures], omega: &[f64]) -> Result<f64> {
    let item_dim = omega
        .len()
        .checked_sub(1 + user_emb.len())
        .ok_or(Error::LengthMismatch {
            expected: omega.len(),
            actual: 1 + user_emb.len(),
        })?;
    let mut mean = vec![0.0; item_dim];
    for c in chosen {
        check_len(item_dim, c.0.len())?;
        for (m, x) in mean.iter_mut().zip(&c.0) {
            *m += x;
        }
    }
    if !chosen.is_empty() {
        let n = chosen.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
    }
    let mut input = Vec::with_capacity(omega.len());
    input.push(1.0);
    input.extend_from_slice(user_emb);
    input.extend(mean);
    Ok(sigmoid(dot(omega, &input)))
}

/// Bernoulli draw of "weight did not increase this period".
pub fn weight_outcome_round<R: Rng + ?Sized>(
    user_emb: &[f64],
    chosen: &[ItemFeatures],
    omega: &[f64],
    rng: &mut R,
) -> Result<bool> {
    let p = weight_outcome_probability(user_emb, chosen, omega)?;
    Ok(rng.gen::<f64>() < p)
}

/// Fraction of defined periods with a non-gain outcome; 0 when none are
/// defined.
pub fn in_period_weightloss_rate(outcomes: &[Option<bool>]) -> f64 {
    let defined: Vec<bool> = outcomes.iter().flatten().copied().collect();
    if defined.is_empty() {
        return 0.0;
    }
    defined.iter().filter(|o| **o).count() as f64 / defined.len() as f64
}

/// Reward total and count for one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRewards {
    pub sum: f64,
    pub count: usize,
}

impl RoundRewards {
    pub fn from_rewards(rewards: &[f64]) -> Self {
        Self {
            sum: rewards.iter().sum(),
            count: rewards.len(),
        }
    }

    pub fn push(&mut self, reward: f64) {
        self.sum += reward;
        self.count += 1;
    }
}

/// Element `t` is the mean of every reward in rounds `1..=t`.
pub fn learning_curve(rounds: &[RoundRewards]) -> Vec<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    rounds
        .iter()
        .map(|r| {
            sum += r.sum;
            count += r.count;
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}
