use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{InteractionLog, RecommendationSets};
use crate::domain::{ChallengeId, UserId};
use crate::error::{check_len, Error, Result};
use crate::features::ContextVector;
use crate::reward_model::{dot, sigmoid, update_posterior, FeedbackBatch, GaussianPosterior, Observation};

pub const DEFAULT_PROPENSITY_CLIP: f64 = 0.01;
/// Prior variance of the reward simulator's weights: weak enough to be close
/// to maximum likelihood, strong enough to keep separable logs finite.
pub const REWARD_SIMULATOR_PRIOR_VARIANCE: f64 = 100.0;

/// Pre-trained logistic reward predictor used by the doubly-robust estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSimulator {
    pub weights: Vec<f64>,
}

impl RewardSimulator {
    pub fn predict(&self, v: &[f64]) -> Result<f64> {
        check_len(self.weights.len(), v.len())?;
        Ok(sigmoid(dot(&self.weights, v)))
    }
}

pub fn fit_reward_simulator(train_log: &InteractionLog) -> Result<RewardSimulator> {
    let d = train_log.dim().ok_or(Error::EmptyLog)?;
    let batch = FeedbackBatch::new(
        train_log
            .records
            .iter()
            .map(|r| Observation::new(&r.context, r.reward))
            .collect(),
    );
    let prior = GaussianPosterior::isotropic(d, REWARD_SIMULATOR_PRIOR_VARIANCE);
    let post = update_posterior(&prior, &batch)?;
    Ok(RewardSimulator {
        weights: post.mean().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrEstimate {
    pub value: f64,
    /// Standard deviation of the per-record terms over `√n`.
    pub std_error: f64,
    pub n: usize,
}

/// Doubly-robust value of the recommendation sets `recs` on `log`.
///
/// Each logged record contributes the mean over its user-week set of the
/// simulator prediction, plus an inverse-propensity correction on the logged
/// action when it is in the set. Propensities are clipped below at `clip`.
/// `context_of` supplies the context of any (user, week, item).
pub fn doubly_robust_estimate<F>(
    log: &InteractionLog,
    recs: &RecommendationSets,
    rho: &RewardSimulator,
    mut context_of: F,
    clip: f64,
) -> Result<DrEstimate>
where
    F: FnMut(UserId, u32, ChallengeId) -> Result<ContextVector>,
{
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut direct_cache: BTreeMap<(UserId, u32), f64> = BTreeMap::new();
    let mut terms = Vec::with_capacity(log.len());
    for rec in &log.records {
        let key = (rec.user, rec.week);
        let set = recs
            .get(&key)
            .filter(|s| !s.is_empty())
            .ok_or(Error::MissingRecommendation {
                user: rec.user,
                week: rec.week,
            })?;
        let k = set.len() as f64;
        let direct = match direct_cache.get(&key) {
            Some(d) => *d,
            None => {
                let mut sum = 0.0;
                for item in set {
                    sum += rho.predict(context_of(rec.user, rec.week, *item)?.as_slice())?;
                }
                direct_cache.insert(key, sum / k);
                sum / k
            }
        };
        let correction = if set.contains(&rec.action) {
            let residual = f64::from(u8::from(rec.reward)) - rho.predict(rec.context.as_slice())?;
            residual / rec.propensity.max(clip) / k
        } else {
            0.0
        };
        terms.push(direct + correction);
    }
    let n = terms.len();
    let value = terms.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = terms.iter().map(|t| (t - value).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(DrEstimate { value, std_error, n })
}

/// Mean over recommendation sets of the fraction of recommended items found
/// in the user's preference set.
pub fn offline_precision(
    recs: &RecommendationSets,
    preference_sets: &BTreeMap<UserId, BTreeSet<ChallengeId>>,
) -> f64 {
    let empty = BTreeSet::new();
    let mut total = 0.0;
    let mut n = 0usize;
    for ((user, _), set) in recs {
        if set.is_empty() {
            continue;
        }
        let prefs = preference_sets.get(user).unwrap_or(&empty);
        let hits = set.iter().filter(|i| prefs.contains(i)).count();
        total += hits as f64 / set.len() as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Ground-truth logistic selection model with known weights `ζ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmniscientSimulator {
    pub zeta: Vec<f64>,
}

impl OmniscientSimulator {
    pub fn new(zeta: Vec<f64>) -> Self {
        Self { zeta }
    }

    pub fn probability(&self, v: &[f64]) -> Result<f64> {
        check_len(self.zeta.len(), v.len())?;
        Ok(sigmoid(dot(&self.zeta, v)))
    }
}

/// Bernoulli draw with success probability `σ(ζᵀv)`.
pub fn simulate_feedback<R: Rng + ?Sized>(sim: &OmniscientSimulator, v: &[f64], rng: &mut R) -> Result<bool> {
    let p = sim.probability(v)?;
    Ok(rng.gen::<f64>() < p)
}

/// Fits weights on `train_log` and perturbs each coordinate with
/// `N(0, σ²)`, `σ = sigma_scale · ‖ζ‖₂ / √d`.
pub fn make_omniscient<R: Rng + ?Sized>(
    train_log: &InteractionLog,
    sigma_scale: f64,
    rng: &mut R,
) -> Result<OmniscientSimulator> {
    if !(sigma_scale >= 0.0 && sigma_scale.is_finite()) {
        return Err(Error::InvalidValue(format!("sigma_scale {sigma_scale} must be >= 0")));
    }
    let trained = fit_reward_simulator(train_log)?.weights;
    Ok(perturb(trained, sigma_scale, rng))
}

pub(crate) fn perturb<R: Rng + ?Sized>(weights: Vec<f64>, sigma_scale: f64, rng: &mut R) -> OmniscientSimulator {
    if sigma_scale == 0.0 || weights.is_empty() {
        return OmniscientSimulator::new(weights);
    }
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let sigma = sigma_scale * norm / (weights.len() as f64).sqrt();
    if sigma == 0.0 {
        return OmniscientSimulator::new(weights);
    }
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    OmniscientSimulator::new(weights.into_iter().map(|w| w + noise.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::LogRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(v: &[f64]) -> ContextVector {
        ContextVector::from_raw(v.to_vec()).unwrap()
    }

    fn record(user: u32, week: u32, action: u32, x: f64, reward: bool, propensity: f64) -> LogRecord {
        LogRecord {
            user: UserId(user),
            week,
            action: ChallengeId(action),
            context: ctx(&[1.0, x, f64::from(action)]),
            reward,
            propensity,
        }
    }

    fn lookup(log: &InteractionLog) -> impl FnMut(UserId, u32, ChallengeId) -> Result<ContextVector> + '_ {
        move |u, w, item| {
            let x = log
                .records
                .iter()
                .find(|r| r.user == u && r.week == w)
                .map(|r| r.context.as_slice()[1])
                .unwrap();
            Ok(ctx(&[1.0, x, f64::from(item.0)]))
        }
    }

    #[test]
    fn cancellation_identity() {
        let log = InteractionLog::new(vec![
            record(1, 1, 3, 0.2, true, 1.0),
            record(1, 2, 4, -0.4, false, 1.0),
            record(2, 1, 5, 0.9, true, 1.0),
            record(3, 1, 3, 0.0, false, 1.0),
        ]);
        let recs: RecommendationSets = log
            .records
            .iter()
            .map(|r| ((r.user, r.week), vec![r.action]))
            .collect();
        let rho = RewardSimulator {
            weights: vec![0.3, -1.1, 0.2],
        };
        let est = doubly_robust_estimate(&log, &recs, &rho, lookup(&log), DEFAULT_PROPENSITY_CLIP).unwrap();
        assert!((est.value - 0.5).abs() < 1e-15, "{}", est.value);
    }

    #[test]
    fn direct_method_when_action_never_recommended() {
        let log = InteractionLog::new(vec![record(1, 1, 3, 0.2, true, 0.5), record(2, 1, 4, -0.3, false, 0.5)]);
        let mut recs = RecommendationSets::new();
        recs.insert((UserId(1), 1), vec![ChallengeId(7), ChallengeId(8)]);
        recs.insert((UserId(2), 1), vec![ChallengeId(9)]);
        let rho = RewardSimulator {
            weights: vec![-0.5, 1.0, 0.1],
        };
        let est = doubly_robust_estimate(&log, &recs, &rho, lookup(&log), DEFAULT_PROPENSITY_CLIP).unwrap();
        let p = |x: f64, k: f64| sigmoid(-0.5 + x + 0.1 * k);
        let expected = ((p(0.2, 7.0) + p(0.2, 8.0)) / 2.0 + p(-0.3, 9.0)) / 2.0;
        assert!((est.value - expected).abs() < 1e-15);
    }

    #[test]
    fn exact_simulator_gives_direct_value() {
        // Rewards equal to the prediction (0/1 from a saturated simulator)
        // make every correction vanish.
        let log = InteractionLog::new(vec![record(1, 1, 3, 50.0, true, 0.2), record(2, 1, 4, -50.0, false, 0.2)]);
        let mut recs = RecommendationSets::new();
        recs.insert((UserId(1), 1), vec![ChallengeId(3), ChallengeId(6)]);
        recs.insert((UserId(2), 1), vec![ChallengeId(4)]);
        let rho = RewardSimulator {
            weights: vec![0.0, 1.0, 0.0],
        };
        let est = doubly_robust_estimate(&log, &recs, &rho, lookup(&log), DEFAULT_PROPENSITY_CLIP).unwrap();
        let direct = (sigmoid(50.0) + sigmoid(50.0)) / 2.0 / 2.0 + sigmoid(-50.0) / 2.0;
        assert!((est.value - direct).abs() < 1e-12);
    }

    #[test]
    fn dr_errors() {
        let rho = RewardSimulator { weights: vec![0.0; 3] };
        let empty = InteractionLog::default();
        assert!(matches!(
            doubly_robust_estimate(&empty, &RecommendationSets::new(), &rho, |_, _, _| Ok(ctx(&[1.0, 0.0, 0.0])), 0.01),
            Err(Error::EmptyLog)
        ));
        let log = InteractionLog::new(vec![record(1, 1, 3, 0.0, true, 1.0)]);
        assert!(matches!(
            doubly_robust_estimate(&log, &RecommendationSets::new(), &rho, lookup(&log), 0.01),
            Err(Error::MissingRecommendation { .. })
        ));
    }

    #[test]
    fn propensities_are_clipped() {
        let log = InteractionLog::new(vec![record(1, 1, 3, 0.0, true, 1e-6)]);
        let mut recs = RecommendationSets::new();
        recs.insert((UserId(1), 1), vec![ChallengeId(3)]);
        let rho = RewardSimulator { weights: vec![0.0; 3] };
        let est = doubly_robust_estimate(&log, &recs, &rho, lookup(&log), 0.01).unwrap();
        assert!((est.value - (0.5 + 0.5 / 0.01)).abs() < 1e-9);
    }

    #[test]
    fn precision_counting() {
        let mut prefs = BTreeMap::new();
        prefs.insert(UserId(1), (0..4).map(ChallengeId).collect::<BTreeSet<_>>());
        let mut recs = RecommendationSets::new();
        recs.insert((UserId(1), 1), (0..10).map(ChallengeId).collect());
        assert!((offline_precision(&recs, &prefs) - 0.4).abs() < 1e-15);

        recs.insert((UserId(1), 2), (0..2).map(ChallengeId).collect());
        assert!((offline_precision(&recs, &prefs) - 0.7).abs() < 1e-15);

        let mut disjoint = RecommendationSets::new();
        disjoint.insert((UserId(1), 1), vec![ChallengeId(50)]);
        disjoint.insert((UserId(2), 1), vec![ChallengeId(1)]);
        assert_eq!(offline_precision(&disjoint, &prefs), 0.0);

        let mut subset = RecommendationSets::new();
        subset.insert((UserId(1), 3), vec![ChallengeId(1), ChallengeId(2)]);
        assert_eq!(offline_precision(&subset, &prefs), 1.0);
    }

    #[test]
    fn feedback_draws() {
        let sim = OmniscientSimulator::new(vec![50.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| simulate_feedback(&sim, &[1.0], &mut rng).unwrap()));

        let fair = OmniscientSimulator::new(vec![0.0, 0.0]);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| simulate_feedback(&fair, &[1.0, 2.0], &mut rng).unwrap())
            .count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((hits - 5000.0).abs() < 3.0 * sd, "{hits}");

        let a: Vec<bool> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| simulate_feedback(&fair, &[1.0, 0.0], &mut r).unwrap()).collect()
        };
        let b: Vec<bool> = {
            let mut r = ChaCha8Rng::seed_from_u64(9);
            (0..50).map(|_| simulate_feedback(&fair, &[1.0, 0.0], &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
        assert!(simulate_feedback(&fair, &[1.0], &mut rng).is_err());
    }

    #[test]
    fn perturbation_moments() {
        let weights = vec![1.0, -2.0, 0.5, 3.0];
        let norm_sq: f64 = weights.iter().map(|w| w * w).sum();
        let scale = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(perturb(weights.clone(), 0.0, &mut rng).zeta, weights);
        let trials = 1000;
        let mean_sq = (0..trials)
            .map(|_| {
                let z = perturb(weights.clone(), scale, &mut rng).zeta;
                z.iter().zip(&weights).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / trials as f64;
        let expected = scale * scale * norm_sq;
        assert!((mean_sq - expected).abs() / expected < 0.05, "{mean_sq} vs {expected}");
    }
}
