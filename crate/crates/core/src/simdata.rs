//! Seeded synthetic environments: users, challenges, ground-truth selection
//! weights `ζ`, weight-outcome weights `ω`, weekly availability, and logged
//! interactions with exact propensities.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    encode_challenge_meta, Catalog, ChallengeId, ChallengeMeta, ChallengeRecord, DimMask, Intensity, SelectionEvent,
    UserId, UserProfile, WeighIn, META_DIMENSION_FLAG_INDEX, META_FEATURE_DIM,
};
use crate::error::{Error, Result};
use crate::evaluation::{weight_outcome_round, InteractionLog, LogRecord, OmniscientSimulator};
use crate::features::{build_user_context, concat_context, ItemFeatures, UserContext, SELECTION_RATE_INDEX, USER_CONTEXT_DIM};
use crate::reward_model::{dot, sigmoid};
use crate::rng::{stream, StreamRng};

/// Dimension of `[1, x, z]` with hand-crafted user and item features.
pub const CONTEXT_DIM: usize = 1 + USER_CONTEXT_DIM + META_FEATURE_DIM;

const POOL_ATTEMPTS: usize = 1000;

/// Independent probability of each dimension bit on a generated challenge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMix {
    pub weight_loss: f64,
    pub diet: f64,
    pub exercise: f64,
}

impl Default for TypeMix {
    fn default() -> Self {
        Self {
            weight_loss: 0.3,
            diet: 0.4,
            exercise: 0.4,
        }
    }
}

impl TypeMix {
    fn as_array(&self) -> [f64; 3] {
        [self.weight_loss, self.diet, self.exercise]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub n_users: usize,
    pub n_challenges: usize,
    pub horizon_weeks: u32,
    pub weekly_pool: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    /// Scale of the isotropic part of `ζ` and `ω`.
    pub ground_truth_sigma: f64,
    pub type_mix: TypeMix,
    /// Added to the `ζ` coordinates of the weight-loss, diet and exercise
    /// item flags.
    pub type_boost: [f64; 3],
    /// Added to the `ζ` coordinates of the user's recent per-dimension
    /// selection rates.
    pub engagement_boost: f64,
    /// Added to the `ζ` intercept.
    pub base_logit: f64,
    pub weighin_probability: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_challenges: 60,
            horizon_weeks: 16,
            weekly_pool: 50,
            k: 10,
            seed: 0,
            ground_truth_sigma: 0.5,
            type_mix: TypeMix::default(),
            type_boost: [1.0; 3],
            engagement_boost: 1.0,
            base_logit: -2.5,
            weighin_probability: 0.8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid_config("environment.n_users", "must be >= 1"));
        }
        if self.n_challenges == 0 {
            return Err(Error::invalid_config("environment.n_challenges", "must be >= 1"));
        }
        if self.horizon_weeks == 0 {
            return Err(Error::invalid_config("environment.horizon_weeks", "must be >= 1"));
        }
        if self.weekly_pool == 0 || self.weekly_pool > self.n_challenges {
            return Err(Error::invalid_config(
                "environment.weekly_pool",
                "must be between 1 and n_challenges",
            ));
        }
        if self.k == 0 {
            return Err(Error::invalid_config("environment.K", "must be >= 1"));
        }
        if !(self.ground_truth_sigma >= 0.0 && self.ground_truth_sigma.is_finite()) {
            return Err(Error::invalid_config("environment.ground_truth_sigma", "must be finite and >= 0"));
        }
        if self.type_mix.as_array().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid_config("environment.type_mix", "probabilities must lie in [0, 1]"));
        }
        if self.type_mix.as_array().iter().all(|p| *p == 0.0) {
            return Err(Error::invalid_config("environment.type_mix", "at least one probability must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.weighin_probability) {
            return Err(Error::invalid_config("environment.weighin_probability", "must lie in [0, 1]"));
        }
        if self
            .type_boost
            .iter()
            .chain([&self.engagement_boost, &self.base_logit])
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid_config("environment", "boosts and base_logit must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEnvironment {
    pub config: EnvConfig,
    pub users: Vec<UserProfile>,
    pub catalog: Catalog,
    /// Ground-truth selection weights over `[1, x, z]`.
    pub zeta: Vec<f64>,
    /// Weight-outcome weights over `[1, x, mean z]`.
    pub omega: Vec<f64>,
    /// Available challenge ids per week, ascending.
    pub availability: BTreeMap<u32, Vec<ChallengeId>>,
}

impl SyntheticEnvironment {
    pub fn pool(&self, week: u32) -> &[ChallengeId] {
        self.availability.get(&week).map_or(&[], |v| v.as_slice())
    }

    pub fn item_features(&self, id: ChallengeId) -> Option<ItemFeatures> {
        self.catalog
            .get(id)
            .map(|c| ItemFeatures(encode_challenge_meta(&c.meta).to_vec()))
    }

    pub fn simulator(&self) -> OmniscientSimulator {
        OmniscientSimulator::new(self.zeta.clone())
    }

    pub fn selection_probability(&self, x: &UserContext, id: ChallengeId) -> Option<f64> {
        let z = self.item_features(id)?;
        Some(sigmoid(dot(&self.zeta, concat_context(x, &z).as_slice())))
    }
}

/// Builds an environment; a pure function of `cfg`.
pub fn generate_environment(cfg: &EnvConfig) -> Result<SyntheticEnvironment> {
    cfg.validate()?;
    let users = generate_users(cfg, &mut stream(cfg.seed, &["environment", "users"]));
    let catalog = Catalog::new(generate_challenges(cfg, &mut stream(cfg.seed, &["environment", "challenges"])))?;
    let availability = generate_availability(cfg, &catalog, &mut stream(cfg.seed, &["environment", "availability"]));

    let mut rng = stream(cfg.seed, &["environment", "weights"]);
    let mut zeta = isotropic(CONTEXT_DIM, cfg.ground_truth_sigma, &mut rng);
    zeta[0] += cfg.base_logit;
    for (j, idx) in META_DIMENSION_FLAG_INDEX.iter().enumerate() {
        zeta[1 + USER_CONTEXT_DIM + idx] += cfg.type_boost[j];
    }
    for idx in SELECTION_RATE_INDEX {
        zeta[1 + idx] += cfg.engagement_boost;
    }
    let mut omega = isotropic(CONTEXT_DIM, cfg.ground_truth_sigma, &mut rng);
    for idx in META_DIMENSION_FLAG_INDEX {
        omega[1 + USER_CONTEXT_DIM + idx] += 1.0;
    }

    Ok(SyntheticEnvironment {
        config: cfg.clone(),
        users,
        catalog,
        zeta,
        omega,
        availability,
    })
}

fn isotropic(d: usize, sigma: f64, rng: &mut StreamRng) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * sigma
        })
        .collect()
}

fn generate_users(cfg: &EnvConfig, rng: &mut StreamRng) -> Vec<UserProfile> {
    let weight = Normal::new(85.0f64, 15.0).expect("valid normal");
    let counts = Geometric::new(1.0 / 6.0).expect("valid geometric");
    (0..cfg.n_users)
        .map(|i| UserProfile {
            user_id: UserId(i as u32 + 1),
            gender: rng.gen_bool(0.5),
            age: f64::from(rng.gen_range(20u32..=69)),
            initial_weight: weight.sample(rng).clamp(50.0, 150.0),
            membership_weeks: rng.gen_range(0..=260),
            friends: counts.sample(rng).min(u64::from(u32::MAX)) as u32,
            posts: counts.sample(rng).min(u64::from(u32::MAX)) as u32,
        })
        .collect()
}

fn random_intensity(rng: &mut StreamRng) -> Intensity {
    [Intensity::Low, Intensity::Medium, Intensity::High][rng.gen_range(0..3)]
}

fn generate_challenges(cfg: &EnvConfig, rng: &mut StreamRng) -> Vec<ChallengeRecord> {
    let mix = cfg.type_mix.as_array();
    (0..cfg.n_challenges)
        .map(|i| {
            let bits = loop {
                let b = mix.map(|p| rng.gen_bool(p));
                if b.iter().any(|x| *x) {
                    break b;
                }
            };
            let [weight_loss, diet, activity] = bits;
            let level = |on: bool, rng: &mut StreamRng| {
                if on {
                    random_intensity(rng)
                } else {
                    Intensity::NotApplicable
                }
            };
            let meta = ChallengeMeta {
                specific: rng.gen_bool(0.5),
                measurable: rng.gen_bool(0.5),
                diet,
                intensity_diet: level(diet, rng),
                activity,
                intensity_activity: level(activity, rng),
                weight_loss,
                intensity_weight_loss: level(weight_loss, rng),
                motivational: rng.gen_bool(0.5),
                self_monitoring: rng.gen_bool(0.5),
                duration_weeks: rng.gen_range(1..=8),
            };
            let id = i as u32 + 1;
            ChallengeRecord {
                challenge_id: ChallengeId(id),
                title: format!("Challenge {id}"),
                description: String::new(),
                meta,
                start_week: 1,
                end_week: cfg.horizon_weeks,
            }
        })
        .collect()
}

/// Draws `weekly_pool` distinct challenges per week, redrawing until the
/// pool covers every dimension present in the catalog.
fn generate_availability(cfg: &EnvConfig, catalog: &Catalog, rng: &mut StreamRng) -> BTreeMap<u32, Vec<ChallengeId>> {
    let all = catalog.challenges();
    let catalog_mask = all.iter().fold(DimMask::EMPTY, |m, c| m.union(c.mask()));
    (1..=cfg.horizon_weeks)
        .map(|week| {
            let mut best: Option<(usize, Vec<ChallengeId>)> = None;
            for _ in 0..POOL_ATTEMPTS {
                let mut ids: Vec<_> = sample_indices(rng, all.len(), cfg.weekly_pool)
                    .into_iter()
                    .map(|i| all[i].challenge_id)
                    .collect();
                ids.sort();
                let mask = ids.iter().fold(DimMask::EMPTY, |m, id| m.union(catalog.mask(*id)));
                let covered = mask.intersection(catalog_mask).len();
                if best.as_ref().map_or(true, |(c, _)| covered > *c) {
                    best = Some((covered, ids));
                }
                if covered == catalog_mask.len() {
                    break;
                }
            }
            (week, best.expect("at least one attempt").1)
        })
        .collect()
}

/// Per-user history and latent weight during a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub profile: UserProfile,
    pub weighins: Vec<WeighIn>,
    pub selections: Vec<SelectionEvent>,
    pub weight: f64,
}

impl UserState {
    /// Starts with a baseline weigh-in at week 0.
    pub fn new(profile: UserProfile) -> Self {
        let weight = profile.initial_weight;
        Self {
            weighins: vec![WeighIn {
                user_id: profile.user_id,
                week: 0,
                weight,
            }],
            selections: Vec::new(),
            weight,
            profile,
        }
    }

    pub fn context(&self, catalog: &Catalog, week: u32) -> UserContext {
        build_user_context(&self.profile, &self.weighins, &self.selections, catalog, week)
    }

    pub fn record_selection(&mut self, week: u32, challenge_id: ChallengeId, propensity: Option<f64>) {
        self.selections.push(SelectionEvent {
            user_id: self.profile.user_id,
            week,
            challenge_id,
            propensity,
        });
    }

    /// Closes `week` with the context `x` it was played in: draws the non-gain outcome from the user's context and
    /// the week's chosen items, moves the latent weight accordingly and
    /// records a weigh-in with probability `weighin_probability`. Returns the
    /// outcome when a weigh-in was recorded.
    pub fn close_week<R: Rng + ?Sized>(
        &mut self,
        week: u32,
        context: &UserContext,
        chosen: &[ItemFeatures],
        omega: &[f64],
        weighin_probability: f64,
        rng: &mut R,
    ) -> Result<Option<bool>> {
        let non_gain = weight_outcome_round(&context.0, chosen, omega, rng)?;
        let step: f64 = rng.gen::<f64>();
        self.weight += if non_gain { -step } else { step.max(1e-3) };
        self.weight = self.weight.max(30.0);
        if rng.gen::<f64>() < weighin_probability {
            self.weighins.push(WeighIn {
                user_id: self.profile.user_id,
                week,
                weight: self.weight,
            });
            Ok(Some(non_gain))
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoggingPolicy {
    /// Uniform random subset of the weekly pool.
    UniformRandom,
    /// With probability `1 − epsilon` the top items under `ζ`, otherwise a
    /// uniform subset.
    PureExploitOracle { epsilon: f64 },
}

/// Everything observed while a logging policy ran.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoggedData {
    pub log: InteractionLog,
    pub selections: Vec<SelectionEvent>,
    pub weighins: Vec<WeighIn>,
    /// User context in which each (user, week) was played.
    pub contexts: BTreeMap<(UserId, u32), UserContext>,
}

/// Runs `policy` for `rounds` weeks, offering `offer_size` items per user
/// per week. Every offered item yields one log record whose propensity is
/// the exact probability that the logger offered it.
pub fn generate_logs(
    env: &SyntheticEnvironment,
    policy: LoggingPolicy,
    rounds: u32,
    offer_size: usize,
    rng: &mut StreamRng,
) -> Result<LoggedData> {
    if rounds > env.config.horizon_weeks {
        return Err(Error::invalid_config("rounds", "must not exceed horizon_weeks"));
    }
    if offer_size == 0 || offer_size > env.config.weekly_pool {
        return Err(Error::invalid_config("offer_size", "must be between 1 and weekly_pool"));
    }
    if let LoggingPolicy::PureExploitOracle { epsilon } = policy {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid_config("logging.epsilon", "must lie in [0, 1]"));
        }
    }
    let features: BTreeMap<ChallengeId, ItemFeatures> = env
        .catalog
        .challenges()
        .iter()
        .map(|c| (c.challenge_id, ItemFeatures(encode_challenge_meta(&c.meta).to_vec())))
        .collect();
    let mut states: Vec<UserState> = env.users.iter().cloned().map(UserState::new).collect();
    let mut data = LoggedData::default();

    for week in 1..=rounds {
        let pool = env.pool(week);
        let n = pool.len();
        let uniform_p = offer_size as f64 / n as f64;
        for state in &mut states {
            let x = state.context(&env.catalog, week);
            let contexts: Vec<_> = pool.iter().map(|id| concat_context(&x, &features[id])).collect();
            let offered: Vec<(usize, f64)> = match policy {
                LoggingPolicy::UniformRandom => sample_indices(rng, n, offer_size)
                    .into_iter()
                    .map(|i| (i, uniform_p))
                    .collect(),
                LoggingPolicy::PureExploitOracle { epsilon } => {
                    let mut order: Vec<usize> = (0..n).collect();
                    let logits: Vec<f64> = contexts.iter().map(|v| dot(&env.zeta, v.as_slice())).collect();
                    order.sort_by(|a, b| logits[*b].total_cmp(&logits[*a]).then(a.cmp(b)));
                    let mut top = vec![false; n];
                    for &i in &order[..offer_size] {
                        top[i] = true;
                    }
                    let picked: Vec<usize> = if rng.gen::<f64>() < epsilon {
                        sample_indices(rng, n, offer_size).into_vec()
                    } else {
                        order[..offer_size].to_vec()
                    };
                    picked
                        .into_iter()
                        .map(|i| (i, (1.0 - epsilon) * f64::from(u8::from(top[i])) + epsilon * uniform_p))
                        .collect()
                }
            };
            let mut chosen = Vec::new();
            for (i, propensity) in offered {
                let v = &contexts[i];
                let reward = rng.gen::<f64>() < sigmoid(dot(&env.zeta, v.as_slice()));
                let id = pool[i];
                data.log.records.push(LogRecord {
                    user: state.profile.user_id,
                    week,
                    action: id,
                    context: v.clone(),
                    reward,
                    propensity,
                });
                if reward {
                    let event = SelectionEvent {
                        user_id: state.profile.user_id,
                        week,
                        challenge_id: id,
                        propensity: Some(propensity),
                    };
                    data.selections.push(event.clone());
                    state.selections.push(event);
                    chosen.push(features[&id].clone());
                }
            }
            data.contexts.insert((state.profile.user_id, week), x.clone());
            state.close_week(week, &x, &chosen, &env.omega, env.config.weighin_probability, rng)?;
        }
    }
    for state in states {
        data.weighins.extend(state.weighins);
    }
    Ok(data)
}
