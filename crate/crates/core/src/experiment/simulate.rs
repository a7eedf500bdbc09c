use std::collections::BTreeMap;

use rand::Rng;

use super::config::{PolicyKind, PolicySpec};
use crate::domain::{ChallengeId, UserId};
use crate::error::{Error, Result};
use crate::evaluation::{RecommendationSets, RoundRewards};
use crate::features::{concat_context, ItemFeatures};
use crate::policies::{
    Candidate, ContentBased, EpsilonGreedy, FeedbackRecord, MatrixFactorization, Policy, PureExploit, PureExplore,
    ThompsonDiverse, Ucb, UserRound,
};
use crate::reward_model::{dot, sigmoid, GaussianPosterior};
use crate::rng::{stream, StreamRng};
use crate::simdata::{LoggedData, SyntheticEnvironment, UserState, CONTEXT_DIM};

/// Named stream for one policy in one replication.
pub fn policy_stream(seed: u64, replication: usize, policy: &str, purpose: &str) -> StreamRng {
    stream(seed, &["replication", &replication.to_string(), "policy", policy, purpose])
}

/// Named stream for data shared by every policy in one replication.
pub fn shared_stream(seed: u64, replication: usize, purpose: &str) -> StreamRng {
    stream(seed, &["replication", &replication.to_string(), "shared", purpose])
}

pub fn build_policy(
    spec: &PolicySpec,
    prior_variance: f64,
    seed: u64,
    replication: usize,
) -> Box<dyn Policy> {
    let prior = GaussianPosterior::isotropic(CONTEXT_DIM, prior_variance);
    let name = spec.name.clone();
    let required = spec.required();
    match &spec.kind {
        PolicyKind::TsDiverse { .. } | PolicyKind::Ts => Box::new(ThompsonDiverse::new(name, prior, required)),
        PolicyKind::Ucb { alpha } => Box::new(Ucb::new(name, prior, *alpha, required)),
        PolicyKind::EpsGreedy { epsilon } => Box::new(EpsilonGreedy::new(name, prior, *epsilon)),
        PolicyKind::PureExploit => Box::new(PureExploit::new(name, prior, required)),
        PolicyKind::PureExplore => Box::new(PureExplore::new(name)),
        PolicyKind::ContentBased { warmup_rounds } => Box::new(ContentBased::new(name, *warmup_rounds, required)),
        PolicyKind::Pmf {
            params,
            warmup_rounds,
            refit_every,
        } => Box::new(MatrixFactorization::new(
            name,
            *params,
            *warmup_rounds,
            *refit_every,
            policy_stream(seed, replication, &spec.name, "fit"),
            required,
        )),
    }
}

fn item_table(env: &SyntheticEnvironment) -> BTreeMap<ChallengeId, ItemFeatures> {
    env.catalog
        .challenges()
        .iter()
        .map(|c| (c.challenge_id, env.item_features(c.challenge_id).expect("catalog item")))
        .collect()
}

fn candidates(env: &SyntheticEnvironment, items: &BTreeMap<ChallengeId, ItemFeatures>, week: u32) -> Vec<Candidate> {
    env.pool(week)
        .iter()
        .map(|id| Candidate {
            id: *id,
            features: items[id].clone(),
            mask: env.catalog.mask(*id),
        })
        .collect()
}

fn in_round(policy: &str, week: u32) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Round {
        policy: policy.to_string(),
        week,
        source: Box::new(e),
    }
}

/// Outcome of running one policy against the selection simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRun {
    pub policy: String,
    /// Realized selections per round.
    pub rounds: Vec<RoundRewards>,
    /// `σ(ζᵀv)` summed per user over every recommended item, with the count.
    pub expected_by_user: BTreeMap<UserId, (f64, usize)>,
    pub recommendations: RecommendationSets,
    /// Non-gain outcome per user-week, `None` without a weigh-in.
    pub weight_outcomes: Vec<Option<bool>>,
}

impl OnlineRun {
    /// Mean `σ(ζᵀv)` over every recommendation made.
    pub fn expected_reward(&self) -> f64 {
        mean_expected(self.expected_by_user.values())
    }

    pub fn expected_reward_for(&self, users: &[UserId]) -> f64 {
        mean_expected(users.iter().filter_map(|u| self.expected_by_user.get(u)))
    }
}

fn mean_expected<'a>(entries: impl Iterator<Item = &'a (f64, usize)>) -> f64 {
    let (s, n) = entries.fold((0.0, 0usize), |(s, n), (a, b)| (s + a, n + b));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs `spec` for `rounds` weeks. Every recommended item is selected with
/// probability `σ(ζᵀv)`; selections feed back into the user's context and
/// weight trajectory.
pub fn simulate_online(
    env: &SyntheticEnvironment,
    spec: &PolicySpec,
    zeta: &[f64],
    rounds: u32,
    prior_variance: f64,
    seed: u64,
    replication: usize,
) -> Result<OnlineRun> {
    let name = spec.name.as_str();
    let mut policy = build_policy(spec, prior_variance, seed, replication);
    let mut recommend_rng = policy_stream(seed, replication, name, "recommend");
    let mut feedback_rng = policy_stream(seed, replication, name, "feedback");
    let mut weight_rng = policy_stream(seed, replication, name, "weight");
    let items = item_table(env);
    let k = env.config.k;

    let mut states: Vec<UserState> = env.users.iter().cloned().map(UserState::new).collect();
    let mut histories: Vec<Vec<ItemFeatures>> = vec![Vec::new(); states.len()];
    let mut run = OnlineRun {
        policy: spec.name.clone(),
        rounds: Vec::with_capacity(rounds as usize),
        expected_by_user: BTreeMap::new(),
        recommendations: RecommendationSets::new(),
        weight_outcomes: Vec::new(),
    };

    for week in 1..=rounds {
        let cands = candidates(env, &items, week);
        let mut feedback = Vec::with_capacity(states.len() * k);
        let mut round = RoundRewards::default();
        for (state, history) in states.iter_mut().zip(histories.iter_mut()) {
            let user = state.profile.user_id;
            let x = state.context(&env.catalog, week);
            let decision = policy
                .recommend(
                    &UserRound {
                        user,
                        week,
                        context: &x,
                        history,
                    },
                    &cands,
                    k,
                    &mut recommend_rng,
                )
                .map_err(in_round(name, week))?;
            let mut chosen = Vec::new();
            let entry = run.expected_by_user.entry(user).or_insert((0.0, 0));
            for id in &decision.recommended {
                let z = &items[id];
                let v = concat_context(&x, z);
                let p = sigmoid(dot(zeta, v.as_slice()));
                entry.0 += p;
                entry.1 += 1;
                let reward = feedback_rng.gen::<f64>() < p;
                round.push(if reward { 1.0 } else { 0.0 });
                if reward {
                    state.record_selection(week, *id, None);
                    history.push(z.clone());
                    chosen.push(z.clone());
                }
                feedback.push(FeedbackRecord {
                    user,
                    week,
                    item: *id,
                    context: v,
                    item_features: z.clone(),
                    reward,
                });
            }
            run.recommendations.insert((user, week), decision.recommended);
            let outcome = state
                .close_week(week, &x, &chosen, &env.omega, env.config.weighin_probability, &mut weight_rng)
                .map_err(in_round(name, week))?;
            run.weight_outcomes.push(outcome);
        }
        policy.observe(&feedback).map_err(in_round(name, week))?;
        run.rounds.push(round);
    }
    Ok(run)
}

/// Replays `spec` over a logged dataset: each week it recommends for every
/// logged user from that week's pool using the logged context, then learns
/// from all of the week's logged outcomes.
pub fn replay_offline(
    env: &SyntheticEnvironment,
    spec: &PolicySpec,
    data: &LoggedData,
    prior_variance: f64,
    seed: u64,
    replication: usize,
) -> Result<RecommendationSets> {
    let name = spec.name.as_str();
    let mut policy = build_policy(spec, prior_variance, seed, replication);
    let mut rng = policy_stream(seed, replication, name, "replay");
    let items = item_table(env);
    let k = env.config.k;

    let mut by_week: BTreeMap<u32, Vec<&crate::evaluation::LogRecord>> = BTreeMap::new();
    for r in &data.log.records {
        by_week.entry(r.week).or_default().push(r);
    }
    let mut histories: BTreeMap<UserId, Vec<ItemFeatures>> = BTreeMap::new();
    let mut recs = RecommendationSets::new();

    for (week, records) in by_week {
        let cands = candidates(env, &items, week);
        if cands.is_empty() {
            return Err(in_round(name, week)(Error::EmptyCandidates));
        }
        for (&(user, _), x) in data.contexts.iter().filter(|((_, w), _)| *w == week) {
            let history = histories.entry(user).or_default();
            let decision = policy
                .recommend(
                    &UserRound {
                        user,
                        week,
                        context: x,
                        history,
                    },
                    &cands,
                    k,
                    &mut rng,
                )
                .map_err(in_round(name, week))?;
            recs.insert((user, week), decision.recommended);
        }
        let feedback: Vec<FeedbackRecord> = records
            .iter()
            .map(|r| FeedbackRecord {
                user: r.user,
                week: r.week,
                item: r.action,
                context: r.context.clone(),
                item_features: items[&r.action].clone(),
                reward: r.reward,
            })
            .collect();
        for f in feedback.iter().filter(|f| f.reward) {
            histories.entry(f.user).or_default().push(f.item_features.clone());
        }
        policy.observe(&feedback).map_err(in_round(name, week))?;
    }
    Ok(recs)
}
