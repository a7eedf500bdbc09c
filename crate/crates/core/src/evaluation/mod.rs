//! Policy evaluation: doubly-robust off-policy estimation, offline precision
//! against preference sets, and an omniscient logistic simulator, plus the
//! diversity, user-improvement, dynamic-user and weight-outcome analyses.

mod analysis;
mod estimators;

use std::collections::BTreeMap;

pub use analysis::{
    diversity_distribution, in_period_weightloss_rate, jsd, learning_curve, select_dynamic_users,
    user_improvement, weight_outcome_probability, weight_outcome_round, DiversityDistribution,
    RoundRewards, DEFAULT_DYNAMIC_USERS,
};
pub use estimators::{
    doubly_robust_estimate, fit_reward_simulator, make_omniscient, offline_precision, simulate_feedback,
    DrEstimate, OmniscientSimulator, RewardSimulator, DEFAULT_PROPENSITY_CLIP, REWARD_SIMULATOR_PRIOR_VARIANCE,
};

use crate::domain::{ChallengeId, UserId};
use crate::features::ContextVector;

/// One logged offer: the platform showed `action` to `user` in `week` with
/// probability `propensity`, and `reward` records whether it was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub user: UserId,
    pub week: u32,
    pub action: ChallengeId,
    pub context: ContextVector,
    pub reward: bool,
    pub propensity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    pub records: Vec<LogRecord>,
}

impl InteractionLog {
    pub fn new(records: Vec<LogRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.context.len())
    }
}

/// Recommendation set per (user, week).
pub type RecommendationSets = BTreeMap<(UserId, u32), Vec<ChallengeId>>;
