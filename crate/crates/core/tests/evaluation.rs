use std::collections::{BTreeMap, BTreeSet};

use bandit_rex::domain::{ChallengeId, UserId};
use bandit_rex::evaluation::{
    doubly_robust_estimate, fit_reward_simulator, in_period_weightloss_rate, offline_precision, user_improvement,
    weight_outcome_probability, InteractionLog, LogRecord, RecommendationSets, DEFAULT_PROPENSITY_CLIP,
};
use bandit_rex::features::{concat_context, ContextVector, ItemFeatures};
use bandit_rex::reward_model::{dot, sigmoid, update_posterior, FeedbackBatch, GaussianPosterior, Observation};
use bandit_rex::rng::stream;
use bandit_rex::simdata::{generate_environment, generate_logs, EnvConfig, LoggingPolicy, SyntheticEnvironment};
use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;
use rand::Rng;

fn small_env(seed: u64) -> SyntheticEnvironment {
    generate_environment(&EnvConfig {
        n_users: 60,
        n_challenges: 30,
        weekly_pool: 20,
        k: 5,
        horizon_weeks: 6,
        seed,
        ..EnvConfig::default()
    })
    .unwrap()
}

/// The `K` lowest-id items of each week's pool for every logged user-week.
fn lowest_ids(env: &SyntheticEnvironment, log: &InteractionLog) -> RecommendationSets {
    let mut recs = RecommendationSets::new();
    for r in &log.records {
        let mut pool = env.pool(r.week).to_vec();
        pool.sort();
        pool.truncate(env.config.k);
        recs.insert((r.user, r.week), pool);
    }
    recs
}

#[test]
fn dr_covers_the_true_value() {
    let env = small_env(4);
    let mut covered = 0;
    for rep in 0..10u64 {
        let train = generate_logs(&env, LoggingPolicy::UniformRandom, 6, 5, &mut stream(rep, &["train"])).unwrap();
        let eval = generate_logs(&env, LoggingPolicy::UniformRandom, 6, 1, &mut stream(rep, &["eval"])).unwrap();
        let rho = fit_reward_simulator(&train.log).unwrap();
        let recs = lowest_ids(&env, &eval.log);
        let context = |u: UserId, w: u32, id: ChallengeId| -> bandit_rex::Result<ContextVector> {
            Ok(concat_context(&eval.contexts[&(u, w)], &env.item_features(id).unwrap()))
        };
        let est = doubly_robust_estimate(&eval.log, &recs, &rho, context, DEFAULT_PROPENSITY_CLIP).unwrap();
        let mut truth = 0.0;
        for ((u, w), set) in &recs {
            let mean: f64 = set
                .iter()
                .map(|id| sigmoid(dot(&env.zeta, context(*u, *w, *id).unwrap().as_slice())))
                .sum::<f64>()
                / set.len() as f64;
            truth += mean;
        }
        truth /= recs.len() as f64;
        if (est.value - truth).abs() <= 2.0 * est.std_error {
            covered += 1;
        }
    }
    assert!(covered >= 8, "covered {covered} of 10");
}

#[test]
fn reward_simulator_recovers_generating_weights() {
    let truth = [-0.5, 1.0, -0.7, 0.4];
    let mut rng = stream(2, &["fit"]);
    let records = (0..5000)
        .map(|i| {
            let v = vec![1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let p = sigmoid(dot(&truth, &v));
            LogRecord {
                user: UserId(i),
                week: 1,
                action: ChallengeId(1),
                reward: rng.gen::<f64>() < p,
                context: ContextVector::from_raw(v).unwrap(),
                propensity: 1.0,
            }
        })
        .collect();
    let rho = fit_reward_simulator(&InteractionLog::new(records)).unwrap();
    for (w, t) in rho.weights.iter().zip(truth) {
        assert!((w - t).abs() < 0.15, "{w} vs {t}");
    }
}

#[test]
fn weight_outcome_weights_are_recoverable() {
    let omega_star = [0.3, -0.8, 0.6, 1.0, -0.5];
    let mut rng = stream(3, &["omega"]);
    let mut batch = FeedbackBatch::default();
    for _ in 0..5000 {
        let user = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let chosen: Vec<ItemFeatures> = (0..rng.gen_range(1..4))
            .map(|_| ItemFeatures(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect();
        let p = weight_outcome_probability(&user, &chosen, &omega_star).unwrap();
        let n = chosen.len() as f64;
        let mean: Vec<f64> = (0..2).map(|j| chosen.iter().map(|c| c.0[j]).sum::<f64>() / n).collect();
        let mut input = vec![1.0];
        input.extend(user);
        input.extend(mean);
        batch.observations.push(Observation {
            context: input,
            reward: rng.gen::<f64>() < p,
        });
    }
    let post = update_posterior(&GaussianPosterior::isotropic(5, 100.0), &batch).unwrap();
    for (w, t) in post.mean().iter().zip(omega_star) {
        assert!((w - t).abs() < 0.15, "{w} vs {t}");
    }
}

#[test]
fn worked_counting_examples() {
    let items: Vec<ChallengeId> = (1..=10).map(ChallengeId).collect();
    let mut recs = RecommendationSets::new();
    recs.insert((UserId(1), 1), items.clone());
    let prefs: BTreeMap<UserId, BTreeSet<ChallengeId>> =
        [(UserId(1), items[..4].iter().copied().chain([ChallengeId(99)]).collect())].into();
    assert!((offline_precision(&recs, &prefs) - 0.4).abs() < 1e-15);

    let mut focal = RecommendationSets::new();
    let mut baseline = RecommendationSets::new();
    let mut prefs = BTreeMap::new();
    for (u, (f, b)) in [(5u32, 3u32), (2, 2), (2, 4)].into_iter().enumerate() {
        let user = UserId(u as u32 + 1);
        prefs.insert(user, (1..=10).map(ChallengeId).collect::<BTreeSet<_>>());
        focal.insert((user, 1), (1..=f).map(ChallengeId).collect());
        baseline.insert((user, 1), (1..=b).map(ChallengeId).collect());
    }
    assert!((user_improvement(&focal, &baseline, &prefs) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(user_improvement(&focal, &focal, &prefs), 0.0);

    let outcomes = [Some(true), Some(true), Some(false), Some(true)];
    assert_eq!(in_period_weightloss_rate(&outcomes), 0.75);
    assert_eq!(in_period_weightloss_rate(&[None, Some(false), None]), 0.0);
}

fn rec_sets() -> impl Strategy<Value = RecommendationSets> {
    btree_map((0u32..20, 1u32..5), vec(0u32..30, 0..8), 0..30).prop_map(|m| {
        m.into_iter()
            .map(|((u, w), ids)| ((UserId(u), w), ids.into_iter().map(ChallengeId).collect()))
            .collect()
    })
}

fn pref_sets() -> impl Strategy<Value = BTreeMap<UserId, BTreeSet<ChallengeId>>> {
    btree_map(0u32..20, btree_set(0u32..30, 0..10), 0..20).prop_map(|m| {
        m.into_iter()
            .map(|(u, ids)| (UserId(u), ids.into_iter().map(ChallengeId).collect()))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn offline_precision_is_a_fraction(recs in rec_sets(), prefs in pref_sets()) {
        let p = offline_precision(&recs, &prefs);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn user_improvement_is_a_fraction(a in rec_sets(), b in rec_sets(), prefs in pref_sets()) {
        let f = user_improvement(&a, &b, &prefs);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(f + user_improvement(&b, &a, &prefs) <= 1.0 + 1e-12);
    }

    #[test]
    fn weightloss_rate_is_a_fraction(outcomes in vec(proptest::option::of(any::<bool>()), 0..50)) {
        let r = in_period_weightloss_rate(&outcomes);
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn subset_recommendations_are_fully_precise(recs in rec_sets()) {
        let mut prefs: BTreeMap<UserId, BTreeSet<ChallengeId>> = BTreeMap::new();
        for ((u, _), ids) in &recs {
            prefs.entry(*u).or_default().extend(ids.iter().copied());
        }
        let nonempty = recs.values().any(|s| !s.is_empty());
        let p = offline_precision(&recs, &prefs);
        prop_assert!(!nonempty || (p - 1.0).abs() < 1e-12);
    }
}
