use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{DimMask, Dimension};
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_PROPENSITY_CLIP;
use crate::io::read_json;
use crate::policies::PmfConfig;
use crate::simdata::EnvConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    DoublyRobust,
    OfflinePrecision,
    Omniscient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    DiversityJsd,
    UserImprovement,
    DynamicUsers,
    WeightOutcome,
    LearningCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionName {
    WeightLoss,
    Diet,
    Exercise,
}

impl From<DimensionName> for Dimension {
    fn from(d: DimensionName) -> Self {
        match d {
            DimensionName::WeightLoss => Dimension::WeightLoss,
            DimensionName::Diet => Dimension::Diet,
            DimensionName::Exercise => Dimension::Exercise,
        }
    }
}

fn all_dimensions() -> Vec<DimensionName> {
    vec![DimensionName::WeightLoss, DimensionName::Diet, DimensionName::Exercise]
}

fn default_alpha() -> f64 {
    1.0
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_warmup() -> u32 {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyKind {
    /// Thompson sampling with the diversity constraint over `required`.
    TsDiverse {
        #[serde(default = "all_dimensions")]
        required: Vec<DimensionName>,
    },
    /// Thompson sampling without the constraint.
    Ts,
    Ucb {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    EpsGreedy {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    PureExploit,
    PureExplore,
    ContentBased {
        #[serde(default = "default_warmup")]
        warmup_rounds: u32,
    },
    Pmf {
        #[serde(default)]
        params: PmfConfig,
        #[serde(default = "default_warmup")]
        warmup_rounds: u32,
        #[serde(default)]
        refit_every: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: PolicyKind,
    /// Applies the full diversity constraint to a baseline.
    #[serde(default)]
    pub force_constraint: bool,
}

impl PolicySpec {
    pub fn new(name: impl Into<String>, kind: PolicyKind) -> Self {
        Self {
            name: name.into(),
            kind,
            force_constraint: false,
        }
    }

    /// Required dimensions, or `None` when the policy runs unconstrained.
    pub fn required(&self) -> Option<DimMask> {
        match &self.kind {
            PolicyKind::TsDiverse { required } => Some(DimMask::from_dims(
                &required.iter().map(|d| Dimension::from(*d)).collect::<Vec<_>>(),
            )),
            _ if self.force_constraint => Some(DimMask::ALL),
            _ => None,
        }
    }

    /// Whether the policy's recommendations depend on a posterior over `ζ`.
    pub fn is_bandit(&self) -> bool {
        matches!(
            self.kind,
            PolicyKind::TsDiverse { .. }
                | PolicyKind::Ts
                | PolicyKind::Ucb { .. }
                | PolicyKind::EpsGreedy { .. }
                | PolicyKind::PureExploit
        )
    }
}

/// Logged data used by the off-policy evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineConfig {
    /// Offers per user-week in the evaluation log.
    pub offer_size: usize,
    /// Offers per user-week in the log the reward simulator is trained on.
    pub train_offer_size: usize,
    pub propensity_clip: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            offer_size: 1,
            train_offer_size: 10,
            propensity_clip: DEFAULT_PROPENSITY_CLIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvConfig,
    pub policies: Vec<PolicySpec>,
    pub evaluators: Vec<Evaluator>,
    pub analyses: Vec<Analysis>,
    pub replications: usize,
    pub output_dir: PathBuf,
    /// Rounds per simulation; the environment horizon when absent.
    pub rounds: Option<u32>,
    /// Prior variance of every coordinate for the bandit policies.
    pub prior_variance: f64,
    /// When set, the omniscient simulator uses weights refitted on a uniform
    /// log and perturbed at this scale instead of the environment's `ζ`.
    pub omniscient_sigma_scale: Option<f64>,
    /// Policy whose recommendations the user-improvement analysis compares
    /// against every other policy; the first `ts_diverse` policy by default.
    pub focal_policy: Option<String>,
    pub dynamic_users: usize,
    pub offline: OfflineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvConfig::default(),
            policies: vec![
                PolicySpec::new("ts_diverse", PolicyKind::TsDiverse { required: all_dimensions() }),
                PolicySpec::new("pure_explore", PolicyKind::PureExplore),
                PolicySpec::new("pure_exploit", PolicyKind::PureExploit),
            ],
            evaluators: vec![Evaluator::Omniscient],
            analyses: vec![Analysis::LearningCurve],
            replications: 1,
            output_dir: PathBuf::from("results"),
            rounds: None,
            prior_variance: 1.0,
            omniscient_sigma_scale: None,
            focal_policy: None,
            dynamic_users: crate::evaluation::DEFAULT_DYNAMIC_USERS,
            offline: OfflineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path).map_err(|e| match e {
            Error::Json(j) => Error::invalid_config(path.display().to_string(), j.to_string()),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rounds(&self) -> u32 {
        self.rounds.unwrap_or(self.environment.horizon_weeks)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate()?;
        if self.policies.is_empty() {
            return Err(Error::invalid_config("policies", "at least one policy is required"));
        }
        if self.evaluators.is_empty() && self.analyses.is_empty() {
            return Err(Error::invalid_config(
                "evaluators",
                "at least one evaluator or analysis is required",
            ));
        }
        let mut names = BTreeSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            if p.name.is_empty() || p.name.contains([',', '"', '\n']) {
                return Err(Error::invalid_config(
                    format!("policies[{i}].name"),
                    "must be non-empty without commas, quotes or newlines",
                ));
            }
            if !names.insert(p.name.as_str()) {
                return Err(Error::invalid_config(format!("policies[{i}].name"), "duplicate policy name"));
            }
            match &p.kind {
                PolicyKind::TsDiverse { required } if required.is_empty() => {
                    return Err(Error::invalid_config(
                        format!("policies[{i}].required"),
                        "must name at least one dimension",
                    ))
                }
                PolicyKind::Ucb { alpha } if !(*alpha >= 0.0 && alpha.is_finite()) => {
                    return Err(Error::invalid_config(format!("policies[{i}].alpha"), "must be >= 0"))
                }
                PolicyKind::EpsGreedy { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                    return Err(Error::invalid_config(
                        format!("policies[{i}].epsilon"),
                        "must lie in [0, 1]",
                    ))
                }
                PolicyKind::EpsGreedy { .. } | PolicyKind::PureExplore if p.force_constraint => {
                    return Err(Error::invalid_config(
                        format!("policies[{i}].force_constraint"),
                        "not supported for this policy kind",
                    ))
                }
                PolicyKind::Pmf { params, .. } => {
                    if params.factors == 0 {
                        return Err(Error::invalid_config(format!("policies[{i}].params.factors"), "must be >= 1"));
                    }
                    if !(params.learning_rate > 0.0 && params.reg >= 0.0) {
                        return Err(Error::invalid_config(
                            format!("policies[{i}].params"),
                            "learning_rate must be > 0 and reg >= 0",
                        ));
                    }
                }
                _ => {}
            }
        }
        if self.replications == 0 {
            return Err(Error::invalid_config("replications", "must be >= 1"));
        }
        let rounds = self.rounds();
        if rounds == 0 || rounds > self.environment.horizon_weeks {
            return Err(Error::invalid_config("rounds", "must be between 1 and horizon_weeks"));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return Err(Error::invalid_config("prior_variance", "must be > 0"));
        }
        if let Some(s) = self.omniscient_sigma_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid_config("omniscient_sigma_scale", "must be >= 0"));
            }
        }
        if let Some(focal) = &self.focal_policy {
            if !names.contains(focal.as_str()) {
                return Err(Error::invalid_config("focal_policy", format!("no policy named {focal}")));
            }
        }
        let pool = self.environment.weekly_pool;
        if self.offline.offer_size == 0 || self.offline.offer_size > pool {
            return Err(Error::invalid_config("offline.offer_size", "must be between 1 and weekly_pool"));
        }
        if self.offline.train_offer_size == 0 || self.offline.train_offer_size > pool {
            return Err(Error::invalid_config(
                "offline.train_offer_size",
                "must be between 1 and weekly_pool",
            ));
        }
        if !(self.offline.propensity_clip > 0.0 && self.offline.propensity_clip <= 1.0) {
            return Err(Error::invalid_config("offline.propensity_clip", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// The focal policy for user improvement, if any policy qualifies.
    pub fn focal(&self) -> Option<&str> {
        match &self.focal_policy {
            Some(name) => Some(name.as_str()),
            None => self
                .policies
                .iter()
                .find(|p| matches!(p.kind, PolicyKind::TsDiverse { .. }))
                .map(|p| p.name.as_str()),
        }
    }

    /// Keeps only the named policies, in their configured order.
    pub fn retain_policies(&mut self, names: &[String]) -> Result<()> {
        for n in names {
            if !self.policies.iter().any(|p| &p.name == n) {
                return Err(Error::invalid_config("--policies", format!("no policy named {n}")));
            }
        }
        self.policies.retain(|p| names.contains(&p.name));
        if let Some(f) = &self.focal_policy {
            if !names.contains(f) {
                self.focal_policy = None;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_policy_list() {
        let json = r#"{
            "environment": {"n_users": 10, "seed": 4},
            "policies": [
                {"name": "full", "kind": "ts_diverse"},
                {"name": "ablation", "kind": "ts"},
                {"name": "ucb", "kind": "ucb", "alpha": 0.5, "force_constraint": true},
                {"name": "pmf", "kind": "pmf", "params": {"factors": 4}}
            ],
            "evaluators": ["omniscient", "doubly_robust"],
            "analyses": ["learning_curve"],
            "replications": 3
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.environment.n_users, 10);
        assert_eq!(cfg.environment.n_challenges, 60);
        assert_eq!(cfg.policies[0].required(), Some(DimMask::ALL));
        assert_eq!(cfg.policies[1].required(), None);
        assert_eq!(cfg.policies[2].required(), Some(DimMask::ALL));
        assert_eq!(cfg.policies[2].kind, PolicyKind::Ucb { alpha: 0.5 });
        match &cfg.policies[3].kind {
            PolicyKind::Pmf { params, warmup_rounds, .. } => {
                assert_eq!(params.factors, 4);
                assert_eq!(params.epochs, 50);
                assert_eq!(*warmup_rounds, 4);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.focal(), Some("full"));
    }

    #[test]
    fn rejects_bad_configs() {
        let field = |cfg: ExperimentConfig| match cfg.validate() {
            Err(Error::InvalidConfig { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        let base = ExperimentConfig::default();
        assert_eq!(field(ExperimentConfig { policies: vec![], ..base.clone() }), "policies");
        assert_eq!(field(ExperimentConfig { replications: 0, ..base.clone() }), "replications");
        let mut dup = base.clone();
        dup.policies.push(dup.policies[0].clone());
        assert_eq!(field(dup), "policies[3].name");
        let mut env = base.clone();
        env.environment.n_users = 0;
        assert_eq!(field(env), "environment.n_users");
        let mut eps = base.clone();
        eps.policies.push(PolicySpec::new("e", PolicyKind::EpsGreedy { epsilon: 1.5 }));
        assert_eq!(field(eps), "policies[3].epsilon");
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
