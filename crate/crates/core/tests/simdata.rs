use std::collections::BTreeMap;

use bandit_rex::domain::{ChallengeId, DimMask};
use bandit_rex::evaluation::simulate_feedback;
use bandit_rex::features::concat_context;
use bandit_rex::io::{read_dataset, write_dataset};
use bandit_rex::rng::stream;
use bandit_rex::simdata::{generate_environment, generate_logs, EnvConfig, LoggingPolicy, UserState};
use bandit_rex::Error;

fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn same_seed_same_environment() {
    let cfg = EnvConfig { seed: 17, ..EnvConfig::default() };
    assert_eq!(generate_environment(&cfg).unwrap(), generate_environment(&cfg).unwrap());
    let other = generate_environment(&EnvConfig { seed: 18, ..cfg }).unwrap();
    assert_ne!(other.zeta, generate_environment(&cfg).unwrap().zeta);
}

#[test]
fn invalid_configs_name_the_field() {
    let err = generate_environment(&EnvConfig { n_users: 0, ..EnvConfig::default() }).unwrap_err();
    assert!(matches!(&err, Error::InvalidConfig { field, .. } if field == "environment.n_users"));
    let err = generate_environment(&EnvConfig {
        weekly_pool: 61,
        ..EnvConfig::default()
    })
    .unwrap_err();
    assert!(matches!(&err, Error::InvalidConfig { field, .. } if field == "environment.weekly_pool"));
}

#[test]
fn default_pools_cover_every_dimension() {
    for seed in 0..100 {
        let env = generate_environment(&EnvConfig { seed, ..EnvConfig::default() }).unwrap();
        for week in 1..=env.config.horizon_weeks {
            let pool = env.pool(week);
            assert_eq!(pool.len(), env.config.weekly_pool);
            let covered = pool.iter().fold(DimMask::EMPTY, |m, id| m.union(env.catalog.mask(*id)));
            assert_eq!(covered, DimMask::ALL, "seed {seed} week {week}");
        }
    }
}

#[test]
fn uniform_logging_propensity_is_offer_over_pool() {
    let env = generate_environment(&EnvConfig::default()).unwrap();
    let data = generate_logs(&env, LoggingPolicy::UniformRandom, 4, 10, &mut stream(0, &["log"])).unwrap();
    assert_eq!(data.log.len(), 200 * 4 * 10);
    assert!(data.log.records.iter().all(|r| r.propensity == 0.2));
}

#[test]
fn offer_frequency_matches_propensity() {
    let env = generate_environment(&EnvConfig {
        n_users: 625,
        ..EnvConfig::default()
    })
    .unwrap();
    let data = generate_logs(&env, LoggingPolicy::UniformRandom, 16, 10, &mut stream(1, &["log"])).unwrap();
    let tracked: BTreeMap<u32, ChallengeId> = (1..=16).map(|w| (w, env.pool(w)[0])).collect();
    let hits = data
        .log
        .records
        .iter()
        .filter(|r| tracked[&r.week] == r.action)
        .count();
    let trials = 625 * 16;
    let freq = hits as f64 / trials as f64;
    assert!((freq - 0.2).abs() <= three_sigma(0.2, trials), "frequency {freq}");
}

#[test]
fn oracle_logging_propensities_match_frequencies() {
    let env = generate_environment(&EnvConfig {
        n_users: 500,
        ..EnvConfig::default()
    })
    .unwrap();
    let epsilon = 0.3;
    let data = generate_logs(
        &env,
        LoggingPolicy::PureExploitOracle { epsilon },
        1,
        1,
        &mut stream(2, &["log"]),
    )
    .unwrap();
    let mut by_prop: BTreeMap<String, usize> = BTreeMap::new();
    for r in &data.log.records {
        *by_prop.entry(format!("{:.6}", r.propensity)).or_default() += 1;
    }
    let top = format!("{:.6}", (1.0 - epsilon) + epsilon / 50.0);
    let top_freq = by_prop.get(&top).copied().unwrap_or(0);
    let n = data.log.len();
    let p = (1.0 - epsilon) + epsilon / 50.0;
    let freq = top_freq as f64 / n as f64;
    assert!((freq - p).abs() <= three_sigma(p, n), "frequency {freq}");
}

#[test]
fn reward_rate_matches_ground_truth() {
    let env = generate_environment(&EnvConfig::default()).unwrap();
    let state = UserState::new(env.users[0].clone());
    let x = state.context(&env.catalog, 1);
    let id = env.pool(1)[0];
    let v = concat_context(&x, &env.item_features(id).unwrap());
    let sim = env.simulator();
    let p = sim.probability(v.as_slice()).unwrap();
    let mut rng = stream(3, &["feedback"]);
    let n = 10_000;
    let hits = (0..n)
        .filter(|_| simulate_feedback(&sim, v.as_slice(), &mut rng).unwrap())
        .count();
    assert!((hits as f64 / n as f64 - p).abs() <= three_sigma(p, n));
}

#[test]
fn dataset_round_trips_through_csv() {
    let env = generate_environment(&EnvConfig {
        n_users: 15,
        n_challenges: 12,
        weekly_pool: 8,
        horizon_weeks: 3,
        seed: 5,
        ..EnvConfig::default()
    })
    .unwrap();
    let data = generate_logs(&env, LoggingPolicy::UniformRandom, 3, 2, &mut stream(5, &["log"])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &env, &data).unwrap();
    let read = read_dataset(dir.path()).unwrap();
    assert_eq!(read.environment, env);
    assert_eq!(read.weighins, data.weighins);
    assert_eq!(read.selections, data.selections);
    assert_eq!(read.interactions.len(), data.log.len());
    for (row, rec) in read.interactions.iter().zip(&data.log.records) {
        assert_eq!((row.user_id, row.week, row.challenge_id), (rec.user, rec.week, rec.action));
        assert_eq!(row.reward == 1, rec.reward);
        assert_eq!(row.propensity, rec.propensity);
    }
}
