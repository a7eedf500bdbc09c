//! Config-driven experiments: run every configured policy against a seeded
//! environment for several replications, evaluate, and write CSV/JSON
//! results.

mod config;
mod output;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Analysis, DimensionName, Evaluator, ExperimentConfig, OfflineConfig, PolicyKind, PolicySpec};
pub use output::{
    config_hash, read_metrics, summarize, write_results, CurveRow, DiversityRow, MetricRow, RunManifest, SummaryRow,
    DIVERSITY_FILE, LEARNING_CURVES_FILE, MANIFEST_FILE, METRICS_FILE, SUMMARY_FILE,
};
pub use simulate::{build_policy, policy_stream, replay_offline, shared_stream, simulate_online, OnlineRun};

use crate::domain::{ChallengeId, UserId};
use crate::error::{Error, Result};
use crate::evaluation::{
    diversity_distribution, doubly_robust_estimate, fit_reward_simulator, jsd, learning_curve, make_omniscient,
    offline_precision, select_dynamic_users, in_period_weightloss_rate, user_improvement, DiversityDistribution,
    InteractionLog, LogRecord, RecommendationSets, RewardSimulator,
};
use crate::features::{build_user_context, concat_context, ItemFeatures};
use crate::io::DataSet;
use crate::simdata::{generate_environment, generate_logs, LoggedData, LoggingPolicy, SyntheticEnvironment};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "BANDIT_REX_THREADS";

/// Name used for the logged-data reference row in diversity output.
pub const LOGGED_REFERENCE: &str = "logged";

/// Everything a run produced, before it is written to disk.
#[derive(Debug, Clone, Default)]
pub struct ExperimentResults {
    pub metrics: Vec<MetricRow>,
    pub curves: Vec<CurveRow>,
    pub diversity: Vec<DiversityRow>,
    /// Online runs as `(replication, run)`, in replication-then-policy order.
    pub runs: Vec<(usize, OnlineRun)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Needs {
    online: bool,
    offline: bool,
    rho: bool,
}

impl Needs {
    fn of(cfg: &ExperimentConfig) -> Self {
        let ev: BTreeSet<_> = cfg.evaluators.iter().copied().collect();
        Self {
            online: ev.contains(&Evaluator::Omniscient) || !cfg.analyses.is_empty(),
            offline: ev.contains(&Evaluator::DoublyRobust) || ev.contains(&Evaluator::OfflinePrecision),
            rho: ev.contains(&Evaluator::DoublyRobust),
        }
    }
}

/// Data shared by every policy within one replication.
struct Shared {
    zeta: Vec<f64>,
    eval: Option<LoggedData>,
    rho: Option<RewardSimulator>,
    preferences: BTreeMap<UserId, BTreeSet<ChallengeId>>,
    reference: Option<DiversityDistribution>,
    dynamic: Vec<UserId>,
}

fn preference_sets<'a>(events: impl Iterator<Item = (UserId, ChallengeId)> + 'a) -> BTreeMap<UserId, BTreeSet<ChallengeId>> {
    let mut prefs: BTreeMap<UserId, BTreeSet<ChallengeId>> = BTreeMap::new();
    for (u, c) in events {
        prefs.entry(u).or_default().insert(c);
    }
    prefs
}

fn shared_data(cfg: &ExperimentConfig, env: &SyntheticEnvironment, replication: usize) -> Result<Shared> {
    let seed = cfg.environment.seed;
    let rounds = cfg.rounds();
    let needs = Needs::of(cfg);
    let train = generate_logs(
        env,
        LoggingPolicy::UniformRandom,
        rounds,
        cfg.offline.train_offer_size,
        &mut shared_stream(seed, replication, "train_log"),
    )?;
    let eval = if needs.offline {
        Some(generate_logs(
            env,
            LoggingPolicy::UniformRandom,
            rounds,
            cfg.offline.offer_size,
            &mut shared_stream(seed, replication, "eval_log"),
        )?)
    } else {
        None
    };
    let rho = if needs.rho {
        Some(fit_reward_simulator(&train.log)?)
    } else {
        None
    };
    let zeta = match cfg.omniscient_sigma_scale {
        Some(scale) => make_omniscient(&train.log, scale, &mut shared_stream(seed, replication, "omniscient"))?.zeta,
        None => env.zeta.clone(),
    };
    let preferences = preference_sets(train.selections.iter().map(|s| (s.user_id, s.challenge_id)));
    let reference = diversity_distribution(train.selections.iter().map(|s| s.challenge_id), &env.catalog).ok();
    let dynamic = if cfg.analyses.contains(&Analysis::DynamicUsers) {
        let mut chosen: BTreeMap<UserId, Vec<ItemFeatures>> = BTreeMap::new();
        for s in &train.selections {
            if let Some(z) = env.item_features(s.challenge_id) {
                chosen.entry(s.user_id).or_default().push(z);
            }
        }
        select_dynamic_users(&chosen, cfg.dynamic_users)
    } else {
        Vec::new()
    };
    Ok(Shared {
        zeta,
        eval,
        rho,
        preferences,
        reference,
        dynamic,
    })
}

struct PolicyOutput {
    metrics: Vec<MetricRow>,
    curve: Vec<CurveRow>,
    diversity: Option<DiversityRow>,
    run: Option<OnlineRun>,
}

fn metric(replication: usize, policy: &str, name: &str, value: f64, std_error: Option<f64>) -> MetricRow {
    MetricRow {
        replication: replication.to_string(),
        policy: policy.to_string(),
        metric: name.to_string(),
        value,
        std_error,
    }
}

fn offline_metrics(
    cfg: &ExperimentConfig,
    env: &SyntheticEnvironment,
    spec: &PolicySpec,
    data: &LoggedData,
    rho: Option<&RewardSimulator>,
    preferences: &BTreeMap<UserId, BTreeSet<ChallengeId>>,
    replication: usize,
) -> Result<Vec<MetricRow>> {
    let seed = cfg.environment.seed;
    let recs = replay_offline(env, spec, data, cfg.prior_variance, seed, replication)?;
    let mut rows = Vec::new();
    if let Some(rho) = rho {
        let est = doubly_robust_estimate(
            &data.log,
            &recs,
            rho,
            |u, w, item| {
                let x = data.contexts.get(&(u, w)).ok_or(Error::MissingRecommendation { user: u, week: w })?;
                let z = env.item_features(item).ok_or(Error::MissingEmbedding(item))?;
                Ok(concat_context(x, &z))
            },
            cfg.offline.propensity_clip,
        )?;
        rows.push(metric(replication, &spec.name, "dr_value", est.value, Some(est.std_error)));
    }
    if cfg.evaluators.contains(&Evaluator::OfflinePrecision) {
        rows.push(metric(
            replication,
            &spec.name,
            "offline_precision",
            offline_precision(&recs, preferences),
            None,
        ));
    }
    Ok(rows)
}

fn run_policy(
    cfg: &ExperimentConfig,
    env: &SyntheticEnvironment,
    shared: &Shared,
    spec: &PolicySpec,
    replication: usize,
) -> Result<PolicyOutput> {
    let seed = cfg.environment.seed;
    let mut out = PolicyOutput {
        metrics: Vec::new(),
        curve: Vec::new(),
        diversity: None,
        run: None,
    };
    if let Some(eval) = &shared.eval {
        out.metrics.extend(offline_metrics(
            cfg,
            env,
            spec,
            eval,
            shared.rho.as_ref(),
            &shared.preferences,
            replication,
        )?);
    }
    if !Needs::of(cfg).online {
        return Ok(out);
    }
    let run = simulate_online(env, spec, &shared.zeta, cfg.rounds(), cfg.prior_variance, seed, replication)?;
    let name = spec.name.as_str();
    if cfg.evaluators.contains(&Evaluator::Omniscient) {
        out.metrics
            .push(metric(replication, name, "omniscient_reward", run.expected_reward(), None));
    }
    for analysis in &cfg.analyses {
        match analysis {
            Analysis::LearningCurve => {
                let curve = learning_curve(&run.rounds);
                if let Some(last) = curve.last() {
                    out.metrics.push(metric(replication, name, "final_cumulative_reward", *last, None));
                }
                out.curve = curve
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| CurveRow {
                        replication: replication.to_string(),
                        policy: name.to_string(),
                        round: i as u32 + 1,
                        cumulative_mean: v,
                    })
                    .collect();
            }
            Analysis::DiversityJsd => {
                let dist = diversity_distribution(
                    run.recommendations.values().flatten().copied(),
                    &env.catalog,
                );
                if let (Ok(dist), Some(reference)) = (dist, shared.reference.as_ref()) {
                    let d = jsd(&dist, reference);
                    out.metrics.push(metric(replication, name, "diversity_jsd", d, None));
                    out.diversity = Some(DiversityRow::new(replication, name, dist, Some(d)));
                }
            }
            Analysis::DynamicUsers => {
                out.metrics.push(metric(
                    replication,
                    name,
                    "dynamic_user_reward",
                    run.expected_reward_for(&shared.dynamic),
                    None,
                ));
            }
            Analysis::WeightOutcome => {
                out.metrics.push(metric(
                    replication,
                    name,
                    "weightloss_rate",
                    in_period_weightloss_rate(&run.weight_outcomes),
                    None,
                ));
            }
            Analysis::UserImprovement => {}
        }
    }
    out.run = Some(run);
    Ok(out)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::invalid_config(THREADS_ENV, format!("not a thread count: {v}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::invalid_config(THREADS_ENV, e.to_string()))
}

/// Runs every (replication, policy) pair in parallel. Results are ordered by
/// replication, then by the configured policy order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let env = generate_environment(&cfg.environment)?;
    let pool = thread_pool()?;
    pool.install(|| run_on(cfg, &env))
}

fn run_on(cfg: &ExperimentConfig, env: &SyntheticEnvironment) -> Result<ExperimentResults> {
    let shared: Vec<Shared> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| shared_data(cfg, env, r))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, &PolicySpec)> = (0..cfg.replications)
        .flat_map(|r| cfg.policies.iter().map(move |p| (r, p)))
        .collect();
    let outputs: Vec<PolicyOutput> = jobs
        .par_iter()
        .map(|(r, spec)| {
            info!("replication {r}: running {}", spec.name);
            run_policy(cfg, env, &shared[*r], spec, *r)
        })
        .collect::<Result<_>>()?;

    let mut results = ExperimentResults::default();
    for (r, s) in shared.iter().enumerate() {
        if cfg.analyses.contains(&Analysis::DiversityJsd) {
            if let Some(reference) = s.reference {
                results
                    .diversity
                    .push(DiversityRow::new(r, LOGGED_REFERENCE, reference, None));
            }
        }
    }
    let mut per_rep: BTreeMap<usize, Vec<(&str, &RecommendationSets)>> = BTreeMap::new();
    for ((r, spec), out) in jobs.iter().zip(&outputs) {
        results.metrics.extend(out.metrics.iter().cloned());
        results.curves.extend(out.curve.iter().cloned());
        results.diversity.extend(out.diversity.clone());
        if let Some(run) = &out.run {
            per_rep.entry(*r).or_default().push((spec.name.as_str(), &run.recommendations));
        }
    }
    if cfg.analyses.contains(&Analysis::UserImprovement) {
        if let Some(focal) = cfg.focal() {
            for (r, runs) in &per_rep {
                let Some((_, focal_recs)) = runs.iter().find(|(n, _)| *n == focal) else {
                    continue;
                };
                for (name, recs) in runs.iter().filter(|(n, _)| *n != focal) {
                    results.metrics.push(metric(
                        *r,
                        name,
                        "user_improvement",
                        user_improvement(focal_recs, recs, &shared[*r].preferences),
                        None,
                    ));
                }
            }
        }
    }
    results.curves.extend(output::mean_curves(&results.curves));
    results.runs = jobs
        .iter()
        .zip(outputs)
        .filter_map(|((r, _), out)| out.run.map(|run| (*r, run)))
        .collect();
    Ok(results)
}

/// The environment and a uniform-logging dataset over the configured
/// rounds, offering `offline.offer_size` items per user-week.
pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<(SyntheticEnvironment, LoggedData)> {
    cfg.validate()?;
    let env = generate_environment(&cfg.environment)?;
    let data = generate_logs(
        &env,
        LoggingPolicy::UniformRandom,
        cfg.rounds(),
        cfg.offline.offer_size,
        &mut shared_stream(cfg.environment.seed, 0, "dataset"),
    )?;
    Ok((env, data))
}

/// Offline evaluators on a generated data directory: contexts are rebuilt
/// from the recorded weigh-ins and selections, the reward simulator is fitted
/// on the interaction log itself, and each policy is replayed over it.
pub fn evaluate_dataset(cfg: &ExperimentConfig, data: &DataSet) -> Result<Vec<MetricRow>> {
    let env = &data.environment;
    let profiles: BTreeMap<UserId, _> = env.users.iter().map(|u| (u.user_id, u)).collect();
    let mut contexts = BTreeMap::new();
    let mut records = Vec::with_capacity(data.interactions.len());
    for row in &data.interactions {
        let profile = profiles
            .get(&row.user_id)
            .ok_or_else(|| Error::InvalidValue(format!("interaction for unknown user {}", row.user_id)))?;
        let x = contexts
            .entry((row.user_id, row.week))
            .or_insert_with(|| build_user_context(profile, &data.weighins, &data.selections, &env.catalog, row.week))
            .clone();
        let z = env
            .item_features(row.challenge_id)
            .ok_or(Error::MissingEmbedding(row.challenge_id))?;
        records.push(LogRecord {
            user: row.user_id,
            week: row.week,
            action: row.challenge_id,
            context: concat_context(&x, &z),
            reward: row.reward == 1,
            propensity: row.propensity,
        });
    }
    let logged = LoggedData {
        log: InteractionLog::new(records),
        selections: data.selections.clone(),
        weighins: data.weighins.clone(),
        contexts,
    };
    let rho = if cfg.evaluators.contains(&Evaluator::DoublyRobust) {
        Some(fit_reward_simulator(&logged.log)?)
    } else {
        None
    };
    let preferences = preference_sets(data.selections.iter().map(|s| (s.user_id, s.challenge_id)));
    let mut rows = Vec::new();
    for spec in &cfg.policies {
        rows.extend(offline_metrics(cfg, env, spec, &logged, rho.as_ref(), &preferences, 0)?);
    }
    Ok(rows)
}
