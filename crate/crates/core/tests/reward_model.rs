use bandit_rex::reward_model::{
    expected_reward, penalized_objective, sample_params, sigmoid, update_posterior, update_posterior_with,
    FeedbackBatch, GaussianPosterior, Observation, SolverConfig,
};
use bandit_rex::rng::stream;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn random_instance(seed: u64, d: usize, n: usize) -> (Vec<f64>, GaussianPosterior, FeedbackBatch) {
    let mut rng = stream(seed, &["reward_model", "instance"]);
    let theta: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let variance: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..3.0)).collect();
    let prior = GaussianPosterior::new(mean, variance).unwrap();
    let observations = (0..n)
        .map(|_| Observation {
            context: (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            reward: rng.gen_bool(0.5),
        })
        .collect();
    (theta, prior, FeedbackBatch::new(observations))
}

fn fd_gradient(theta: &[f64], prior: &GaussianPosterior, batch: &FeedbackBatch, h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let fp = penalized_objective(&plus, prior, batch).unwrap().0;
            let fm = penalized_objective(&minus, prior, batch).unwrap().0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    diff / scale
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..100 {
        let mut rng = stream(seed, &["dims"]);
        let d = rng.gen_range(1..=20);
        let n = rng.gen_range(0..=200);
        let (theta, prior, batch) = random_instance(seed, d, n);
        let (_, grad) = penalized_objective(&theta, &prior, &batch).unwrap();
        let fd = fd_gradient(&theta, &prior, &batch, 1e-5);
        let err = relative_error(&grad, &fd);
        assert!(err <= 1e-5, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn objective_worked_values() {
    let prior = GaussianPosterior::standard(1);
    let (v, g) = penalized_objective(&[0.0], &prior, &FeedbackBatch::default()).unwrap();
    assert_eq!((v, g[0]), (0.0, 0.0));
    let batch = FeedbackBatch::new(vec![Observation {
        context: vec![1.0],
        reward: true,
    }]);
    let (v, g) = penalized_objective(&[0.0], &prior, &batch).unwrap();
    assert!((v - 2f64.ln()).abs() < 1e-15);
    assert!((g[0] + 0.5).abs() < 1e-15);
}

#[test]
fn solver_contract_on_random_instances() {
    for seed in 0..100 {
        let mut rng = stream(seed, &["dims"]);
        let d = rng.gen_range(1..=20);
        let n = rng.gen_range(1..=200);
        let (_, prior, batch) = random_instance(seed, d, n);
        let post = update_posterior(&prior, &batch).unwrap();
        let (_, grad) = penalized_objective(post.mean(), &prior, &batch).unwrap();
        let norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        assert!(norm <= 1e-6, "seed {seed}: gradient {norm:e}");
        for (new, old) in post.variance().iter().zip(prior.variance()) {
            assert!(new <= old);
        }
    }
}

#[test]
fn warm_start_reaches_the_same_mean() {
    for seed in 0..20 {
        let (theta, prior, batch) = random_instance(seed, 6, 80);
        let cold = update_posterior(&prior, &batch).unwrap();
        let warm = update_posterior_with(&prior, &batch, &theta, SolverConfig::default()).unwrap();
        for (a, b) in cold.mean().iter().zip(warm.mean()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn separable_data_stays_finite() {
    let prior = GaussianPosterior::standard(2);
    let batch = FeedbackBatch::new(
        (0..500)
            .map(|i| Observation {
                context: vec![1.0, if i % 2 == 0 { 1.0 } else { -1.0 }],
                reward: i % 2 == 0,
            })
            .collect(),
    );
    let post = update_posterior(&prior, &batch).unwrap();
    assert!(post.mean().iter().all(|m| m.is_finite()));
    assert!(post.variance().iter().all(|v| *v > 0.0));
}

#[test]
fn sequential_updates_recover_the_generating_weights() {
    let d = 5;
    let mut rng = stream(11, &["consistency"]);
    let truth = [-0.4, 0.8, -0.5, 0.3, 1.0];
    let mut post = GaussianPosterior::standard(d);
    for _ in 0..10 {
        let mut batch = FeedbackBatch::default();
        for _ in 0..500 {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            v[0] = 1.0;
            let p = sigmoid(truth.iter().zip(&v).map(|(a, b)| a * b).sum());
            let reward = rng.gen::<f64>() < p;
            batch.observations.push(Observation { context: v, reward });
        }
        post = update_posterior(&post, &batch).unwrap();
    }
    for (m, t) in post.mean().iter().zip(truth) {
        assert!((m - t).abs() < 0.15, "mean {m} vs {t}");
    }
}

#[test]
fn sample_moments() {
    let post = GaussianPosterior::standard(1);
    let mut rng = stream(5, &["moments"]);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_params(&post, &mut rng)[0]).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!(mean.abs() < 0.02);
    assert!((var - 1.0).abs() < 0.05);
}

#[test]
fn degenerate_variance_draws_the_mean() {
    let post = GaussianPosterior::new(vec![0.3, -2.0], vec![1e-12, 1e-12]).unwrap();
    let mut rng = stream(1, &["degenerate"]);
    let draw = sample_params(&post, &mut rng);
    assert!((draw[0] - 0.3).abs() < 1e-5 && (draw[1] + 2.0).abs() < 1e-5);
}

#[test]
fn expected_reward_cases() {
    assert_eq!(expected_reward(&[0.0, 0.0], &[3.0, -7.0]).unwrap(), 0.5);
    assert!((expected_reward(&[3f64.ln()], &[1.0]).unwrap() - 0.75).abs() < 1e-15);
    let tiny = expected_reward(&[-50.0], &[1.0]).unwrap();
    assert!(tiny > 0.0 && tiny < 1e-20);
    assert!(expected_reward(&[1.0], &[1.0, 2.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn precision_never_decreases(seed in 0u64..10_000, d in 1usize..8, n in 0usize..40) {
        let (_, prior, batch) = random_instance(seed, d, n);
        let post = update_posterior(&prior, &batch).unwrap();
        for (new, old) in post.precision().iter().zip(prior.precision()) {
            prop_assert!(*new >= old * (1.0 - 1e-12));
        }
    }

    #[test]
    fn sigmoid_is_bounded(z in -700.0f64..700.0) {
        let p = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&p) && p.is_finite());
        prop_assert!((sigmoid(-z) - (1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn posterior_json_round_trip(seed in 0u64..1000) {
        let mut rng = stream(seed, &["json"]);
        let normal = Normal::new(0.0, 3.0).unwrap();
        let mean: Vec<f64> = (0..4).map(|_| normal.sample(&mut rng)).collect();
        let variance: Vec<f64> = (0..4).map(|_| rng.gen_range(1e-6..5.0)).collect();
        let post = GaussianPosterior::new(mean, variance).unwrap();
        prop_assert_eq!(GaussianPosterior::from_json(&post.to_json()).unwrap(), post);
    }
}
