use std::collections::HashMap;

use super::{choose, decision, recommend_pure_explore, Candidate, FeedbackRecord, Policy, PolicyDecision, UserRound};
use crate::domain::{ChallengeId, DimMask, UserId};
use crate::error::Result;
use crate::features::ItemFeatures;
use crate::rng::StreamRng;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn profile_of(history: &[ItemFeatures]) -> Option<Vec<f64>> {
    let first = history.first()?;
    let mut sum = vec![0.0; first.0.len()];
    for h in history {
        for (s, x) in sum.iter_mut().zip(&h.0) {
            *s += x;
        }
    }
    let n = history.len() as f64;
    Some(sum.into_iter().map(|s| s / n).collect())
}

fn score_by_profile(profile: Option<&[f64]>, candidates: &[Candidate]) -> Vec<(ChallengeId, f64)> {
    candidates
        .iter()
        .map(|c| (c.id, profile.map_or(0.0, |p| cosine(p, &c.features.0))))
        .collect()
}

/// Content-based filtering: cosine similarity between each candidate and the
/// mean feature vector of the user's past selections.
pub fn recommend_cb(
    user: &UserRound<'_>,
    history: &[ItemFeatures],
    candidates: &[Candidate],
    k: usize,
) -> PolicyDecision {
    let profile = profile_of(history);
    let scores = score_by_profile(profile.as_deref(), candidates);
    decision(user, super::top_k(&scores, k))
}

/// Content-based policy with per-user running-mean profiles built from
/// observed selections.
#[derive(Debug, Clone)]
pub struct ContentBased {
    name: String,
    profiles: HashMap<UserId, (Vec<f64>, usize)>,
    warmup_rounds: u32,
    required: Option<DimMask>,
}

impl ContentBased {
    pub fn new(name: impl Into<String>, warmup_rounds: u32, required: Option<DimMask>) -> Self {
        Self {
            name: name.into(),
            profiles: HashMap::new(),
            warmup_rounds,
            required,
        }
    }

    pub fn profile(&self, user: UserId) -> Option<Vec<f64>> {
        self.profiles
            .get(&user)
            .map(|(sum, n)| sum.iter().map(|s| s / *n as f64).collect())
    }
}

impl Policy for ContentBased {
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
        if user.week <= self.warmup_rounds {
            return Ok(recommend_pure_explore(user, candidates, k, rng));
        }
        let profile = self.profile(user.user);
        let scores = score_by_profile(profile.as_deref(), candidates);
        let masks: Vec<_> = candidates.iter().map(|c| c.mask).collect();
        Ok(decision(user, choose(&scores, &masks, k, self.required)?))
    }

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        for f in feedback.iter().filter(|f| f.reward) {
            let entry = self
                .profiles
                .entry(f.user)
                .or_insert_with(|| (vec![0.0; f.item_features.0.len()], 0));
            for (s, x) in entry.0.iter_mut().zip(&f.item_features.0) {
                *s += x;
            }
            entry.1 += 1;
        }
        Ok(())
    }
}
