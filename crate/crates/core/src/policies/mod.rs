//! Recommendation policies behind one interface: recommend a set per user per
//! round, then observe the round's feedback.
//!
//! The proposed policy is [`ThompsonDiverse`]: one posterior draw per
//! (user, round), sigmoid scores, exact constrained selection. Baselines are
//! UCB, ε-greedy, pure exploitation, pure exploration, content-based
//! filtering and probabilistic matrix factorization. Bandit baselines share
//! the same logistic model and posterior updates so only the exploration rule
//! differs.

mod content;
mod pmf;

use std::cmp::Ordering;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use content::{recommend_cb, ContentBased};
pub use pmf::{fit_pmf, fit_pmf_ratings, recommend_pmf, MatrixFactorization, PmfConfig, PmfModel, PmfRating};

use crate::domain::{ChallengeId, DimMask, UserId};
use crate::error::{check_len, Error, Result};
use crate::features::{concat_context, ContextVector, ItemFeatures, UserContext};
use crate::reward_model::{
    dot, sample_params, sigmoid, update_posterior, FeedbackBatch, GaussianPosterior, Observation,
};
use crate::rng::StreamRng;
use crate::selector::{solve_constrained_topk, ScoredCandidate, SelectionProblem};

/// An available item for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: ChallengeId,
    pub features: ItemFeatures,
    pub mask: DimMask,
}

/// Per-user input to a recommendation call.
#[derive(Debug, Clone, Copy)]
pub struct UserRound<'a> {
    pub user: UserId,
    pub week: u32,
    pub context: &'a UserContext,
    /// Item features of the user's past selections, oldest first.
    pub history: &'a [ItemFeatures],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub user: UserId,
    pub week: u32,
    pub recommended: Vec<ChallengeId>,
    /// Score of each recommended item, aligned with `recommended`.
    pub scores: Vec<f64>,
}

/// One observed (user, item) outcome of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub user: UserId,
    pub week: u32,
    pub item: ChallengeId,
    pub context: ContextVector,
    pub item_features: ItemFeatures,
    pub reward: bool,
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    fn recommend(
        &self,
        user: &UserRound<'_>,
        candidates: &[Candidate],
        k: usize,
        rng: &mut StreamRng,
    ) -> Result<PolicyDecision>;

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()>;

    /// Posterior snapshot for bandit policies.
    fn posterior(&self) -> Option<&GaussianPosterior> {
        None
    }
}

fn contexts(user: &UserRound<'_>, candidates: &[Candidate]) -> Vec<ContextVector> {
    candidates
        .iter()
        .map(|c| concat_context(user.context, &c.features))
        .collect()
}

fn decision(user: &UserRound<'_>, scored: Vec<(ChallengeId, f64)>) -> PolicyDecision {
    let (recommended, scores) = scored.into_iter().unzip();
    PolicyDecision {
        user: user.user,
        week: user.week,
        recommended,
        scores,
    }
}

/// Top `k` by descending score, ties broken by ascending id.
pub(crate) fn top_k(scores: &[(ChallengeId, f64)], k: usize) -> Vec<(ChallengeId, f64)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    sorted.truncate(k);
    sorted
}

/// Chooses `k` items from `scores`: plain top-K when `required` is `None`,
/// otherwise the exact constrained optimum. Scores are shifted to be strictly
/// positive before the constrained solve, which leaves the ranking of
/// `k`-sets unchanged and makes the solver fill all `k` slots.
pub(crate) fn choose(
    scores: &[(ChallengeId, f64)],
    masks: &[DimMask],
    k: usize,
    required: Option<DimMask>,
) -> Result<Vec<(ChallengeId, f64)>> {
    match required {
        None => Ok(top_k(scores, k)),
        Some(required) => {
            let min = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
            let shift = if min > 0.0 { 0.0 } else { 1e-9 - min };
            let candidates = scores
                .iter()
                .zip(masks)
                .map(|(&(id, score), &mask)| ScoredCandidate {
                    challenge_id: id,
                    score: score + shift,
                    mask,
                })
                .collect();
            let chosen = solve_constrained_topk(&SelectionProblem::new(candidates, k, required))?;
            let mut picked: Vec<(ChallengeId, f64)> = chosen
                .into_iter()
                .map(|id| *scores.iter().find(|s| s.0 == id).expect("chosen from candidates"))
                .collect();
            picked.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            Ok(picked)
        }
    }
}

fn check_dims(post: &GaussianPosterior, user: &UserRound<'_>, candidates: &[Candidate]) -> Result<()> {
    for c in candidates {
        check_len(post.dim(), 1 + user.context.0.len() + c.features.0.len())?;
    }
    Ok(())
}

fn masks(candidates: &[Candidate]) -> Vec<DimMask> {
    candidates.iter().map(|c| c.mask).collect()
}

fn score_with(theta: &[f64], user: &UserRound<'_>, candidates: &[Candidate]) -> Vec<(ChallengeId, f64)> {
    contexts(user, candidates)
        .iter()
        .zip(candidates)
        .map(|(v, c)| (c.id, sigmoid(dot(theta, v.as_slice()))))
        .collect()
}

/// Diversity-constrained Thompson sampling for one user and round.
pub fn recommend_ts_diverse(
    post: &GaussianPosterior,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    required: DimMask,
    rng: &mut StreamRng,
) -> Result<PolicyDecision> {
    recommend_ts(post, user, candidates, k, Some(required), rng)
}

fn recommend_ts(
    post: &GaussianPosterior,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    required: Option<DimMask>,
    rng: &mut StreamRng,
) -> Result<PolicyDecision> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_dims(post, user, candidates)?;
    let theta = sample_params(post, rng);
    let scores = score_with(&theta, user, candidates);
    Ok(decision(user, choose(&scores, &masks(candidates), k, required)?))
}

/// Posterior-mean scores with a variance-weighted optimism bonus on the logit.
pub fn recommend_ucb(
    post: &GaussianPosterior,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    alpha: f64,
) -> Result<PolicyDecision> {
    recommend_ucb_constrained(post, user, candidates, k, alpha, None)
}

pub fn recommend_ucb_constrained(
    post: &GaussianPosterior,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    alpha: f64,
    required: Option<DimMask>,
) -> Result<PolicyDecision> {
    check_dims(post, user, candidates)?;
    let scores: Vec<_> = contexts(user, candidates)
        .iter()
        .zip(candidates)
        .map(|(v, c)| {
            let x = v.as_slice();
            let bonus: f64 = post
                .variance()
                .iter()
                .zip(x)
                .map(|(var, xj)| var * xj * xj)
                .sum::<f64>()
                .sqrt();
            (c.id, sigmoid(dot(post.mean(), x) + alpha * bonus))
        })
        .collect();
    Ok(decision(user, choose(&scores, &masks(candidates), k, required)?))
}

/// Each slot is filled greedily by posterior-mean score with probability
/// `1 − ε`, otherwise by a uniformly random remaining candidate.
pub fn recommend_eps_greedy(
    post: &GaussianPosterior,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    epsilon: f64,
    rng: &mut StreamRng,
) -> Result<PolicyDecision> {
    check_dims(post, user, candidates)?;
    let mut remaining = top_k(&score_with(post.mean(), user, candidates), candidates.len());
    let mut chosen = Vec::with_capacity(k.min(remaining.len()));
    while chosen.len() < k && !remaining.is_empty() {
        let explore = rng.gen::<f64>() < epsilon;
        let pick = if explore {
            rng.gen_range(0..remaining.len())
        } else {
            0
        };
        chosen.push(remaining.remove(pick));
    }
    Ok(decision(user, chosen))
}

pub fn recommend_pure_exploit(
    post: &GaussianPosterior,
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    required: Option<DimMask>,
) -> Result<PolicyDecision> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_dims(post, user, candidates)?;
    let scores = score_with(post.mean(), user, candidates);
    Ok(decision(user, choose(&scores, &masks(candidates), k, required)?))
}

/// Uniformly random `k`-subset; recorded scores are all zero.
pub fn recommend_pure_explore(
    user: &UserRound<'_>,
    candidates: &[Candidate],
    k: usize,
    rng: &mut StreamRng,
) -> PolicyDecision {
    let n = candidates.len();
    let picked = sample_indices(rng, n, k.min(n))
        .into_iter()
        .map(|i| (candidates[i].id, 0.0))
        .collect();
    decision(user, picked)
}

fn bandit_batch(feedback: &[FeedbackRecord]) -> FeedbackBatch {
    FeedbackBatch::new(
        feedback
            .iter()
            .map(|f| Observation::new(&f.context, f.reward))
            .collect(),
    )
}

/// Posterior shared by the bandit policies; updated once per round.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    posterior: GaussianPosterior,
}

impl BanditState {
    pub fn new(posterior: GaussianPosterior) -> Self {
        Self { posterior }
    }

    pub fn posterior(&self) -> &GaussianPosterior {
        &self.posterior
    }

    pub fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        if feedback.is_empty() {
            return Ok(());
        }
        self.posterior = update_posterior(&self.posterior, &bandit_batch(feedback))?;
        Ok(())
    }
}

/// Thompson sampling with an optional diversity constraint (the ablation
/// turns it off).
#[derive(Debug, Clone)]
pub struct ThompsonDiverse {
    name: String,
    state: BanditState,
    required: Option<DimMask>,
}

impl ThompsonDiverse {
    pub fn new(name: impl Into<String>, prior: GaussianPosterior, required: Option<DimMask>) -> Self {
        Self {
            name: name.into(),
            state: BanditState::new(prior),
            required,
        }
    }
}

impl Policy for ThompsonDiverse {
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
        recommend_ts(self.state.posterior(), user, candidates, k, self.required, rng)
    }

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        self.state.observe(feedback)
    }

    fn posterior(&self) -> Option<&GaussianPosterior> {
        Some(self.state.posterior())
    }
}

#[derive(Debug, Clone)]
pub struct Ucb {
    name: String,
    state: BanditState,
    alpha: f64,
    required: Option<DimMask>,
}

impl Ucb {
    pub fn new(name: impl Into<String>, prior: GaussianPosterior, alpha: f64, required: Option<DimMask>) -> Self {
        Self {
            name: name.into(),
            state: BanditState::new(prior),
            alpha,
            required,
        }
    }
}

impl Policy for Ucb {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(
        &self,
        user: &UserRound<'_>,
        candidates: &[Candidate],
        k: usize,
        _rng: &mut StreamRng,
    ) -> Result<PolicyDecision> {
        recommend_ucb_constrained(self.state.posterior(), user, candidates, k, self.alpha, self.required)
    }

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        self.state.observe(feedback)
    }

    fn posterior(&self) -> Option<&GaussianPosterior> {
        Some(self.state.posterior())
    }
}

#[derive(Debug, Clone)]
pub struct EpsilonGreedy {
    name: String,
    state: BanditState,
    epsilon: f64,
}

impl EpsilonGreedy {
    pub fn new(name: impl Into<String>, prior: GaussianPosterior, epsilon: f64) -> Self {
        Self {
            name: name.into(),
            state: BanditState::new(prior),
            epsilon,
        }
    }
}

impl Policy for EpsilonGreedy {
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
        recommend_eps_greedy(self.state.posterior(), user, candidates, k, self.epsilon, rng)
    }

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        self.state.observe(feedback)
    }

    fn posterior(&self) -> Option<&GaussianPosterior> {
        Some(self.state.posterior())
    }
}

#[derive(Debug, Clone)]
pub struct PureExploit {
    name: String,
    state: BanditState,
    required: Option<DimMask>,
}

impl PureExploit {
    pub fn new(name: impl Into<String>, prior: GaussianPosterior, required: Option<DimMask>) -> Self {
        Self {
            name: name.into(),
            state: BanditState::new(prior),
            required,
        }
    }
}

impl Policy for PureExploit {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(
        &self,
        user: &UserRound<'_>,
        candidates: &[Candidate],
        k: usize,
        _rng: &mut StreamRng,
    ) -> Result<PolicyDecision> {
        recommend_pure_exploit(self.state.posterior(), user, candidates, k, self.required)
    }

    fn observe(&mut self, feedback: &[FeedbackRecord]) -> Result<()> {
        self.state.observe(feedback)
    }

    fn posterior(&self) -> Option<&GaussianPosterior> {
        Some(self.state.posterior())
    }
}

#[derive(Debug, Clone)]
pub struct PureExplore {
    name: String,
}

impl PureExplore {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }
}

impl Policy for PureExplore {
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
        Ok(recommend_pure_explore(user, candidates, k, rng))
    }

    fn observe(&mut self, _feedback: &[FeedbackRecord]) -> Result<()> {
        Ok(())
    }
}
