//! Core domain types: users, challenges, weigh-ins, selection events and the
//! three-dimension health-management taxonomy (weight loss, diet, exercise).
//!
//! Challenge meta attributes are consumed pre-annotated with the SMART-style
//! flags; [`encode_challenge_meta`] turns them into an 11-dimensional feature
//! vector with every coordinate in `[0, 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Durations are normalized by the 16-week recommendation horizon.
pub const DURATION_HORIZON_WEEKS: u32 = 16;

/// Length of the vector produced by [`encode_challenge_meta`].
pub const META_FEATURE_DIM: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChallengeId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ChallengeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordinal intensity level of a challenge along one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Intensity {
    #[default]
    #[serde(rename = "NA")]
    NotApplicable,
    #[serde(rename = "L")]
    Low,
    #[serde(rename = "M")]
    Medium,
    #[serde(rename = "H")]
    High,
}

impl Intensity {
    pub fn encode(self) -> f64 {
        match self {
            Intensity::NotApplicable => 0.0,
            Intensity::Low => 1.0 / 3.0,
            Intensity::Medium => 2.0 / 3.0,
            Intensity::High => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intensity::NotApplicable => "NA",
            Intensity::Low => "L",
            Intensity::Medium => "M",
            Intensity::High => "H",
        }
    }
}

impl std::str::FromStr for Intensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "NA" | "" => Ok(Intensity::NotApplicable),
            "L" => Ok(Intensity::Low),
            "M" => Ok(Intensity::Medium),
            "H" => Ok(Intensity::High),
            other => Err(Error::Parse(format!("unknown intensity level {other:?}"))),
        }
    }
}

/// Annotated meta attributes of a challenge.
///
/// Each intensity is `NotApplicable` exactly when its flag is unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChallengeMeta {
    pub specific: bool,
    pub measurable: bool,
    pub diet: bool,
    pub intensity_diet: Intensity,
    pub activity: bool,
    pub intensity_activity: Intensity,
    pub weight_loss: bool,
    pub intensity_weight_loss: Intensity,
    pub motivational: bool,
    pub self_monitoring: bool,
    pub duration_weeks: u32,
}

impl Default for ChallengeMeta {
    fn default() -> Self {
        Self {
            specific: false,
            measurable: false,
            diet: false,
            intensity_diet: Intensity::NotApplicable,
            activity: false,
            intensity_activity: Intensity::NotApplicable,
            weight_loss: false,
            intensity_weight_loss: Intensity::NotApplicable,
            motivational: false,
            self_monitoring: false,
            duration_weeks: 1,
        }
    }
}

impl ChallengeMeta {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("diet", self.diet, self.intensity_diet),
            ("activity", self.activity, self.intensity_activity),
            ("weight_loss", self.weight_loss, self.intensity_weight_loss),
        ];
        for (name, flag, intensity) in pairs {
            let na = intensity == Intensity::NotApplicable;
            if flag == na {
                return Err(Error::InvalidValue(format!(
                    "intensity_{name} must be NA iff {name} = 0 (flag {}, intensity {})",
                    u8::from(flag),
                    intensity.as_str()
                )));
            }
        }
        if self.duration_weeks < 1 {
            return Err(Error::InvalidValue("duration_weeks must be >= 1".into()));
        }
        Ok(())
    }
}

/// The three health-management dimensions, in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    WeightLoss,
    Diet,
    Exercise,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::WeightLoss, Dimension::Diet, Dimension::Exercise];

    pub fn bit(self) -> u8 {
        match self {
            Dimension::WeightLoss => 0b001,
            Dimension::Diet => 0b010,
            Dimension::Exercise => 0b100,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::WeightLoss => "weight_loss",
            Dimension::Diet => "diet",
            Dimension::Exercise => "exercise",
        }
    }
}

/// Set of dimensions covered by an item, one bit per [`Dimension`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DimMask(u8);

impl DimMask {
    pub const EMPTY: DimMask = DimMask(0);
    pub const ALL: DimMask = DimMask(0b111);

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits <= 0b111).then_some(DimMask(bits))
    }

    pub fn from_dims(dims: &[Dimension]) -> Self {
        DimMask(dims.iter().fold(0, |acc, d| acc | d.bit()))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, dim: Dimension) -> bool {
        self.0 & dim.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: DimMask) -> DimMask {
        DimMask(self.0 | other.0)
    }

    pub fn intersection(self, other: DimMask) -> DimMask {
        DimMask(self.0 & other.0)
    }

    pub fn is_superset_of(self, other: DimMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn dims(self) -> impl Iterator<Item = Dimension> {
        Dimension::ALL.into_iter().filter(move |d| self.contains(*d))
    }
}

impl fmt::Display for DimMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.dims().map(Dimension::name).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeRecord {
    pub challenge_id: ChallengeId,
    pub title: String,
    pub description: String,
    pub meta: ChallengeMeta,
    pub start_week: u32,
    pub end_week: u32,
}

impl ChallengeRecord {
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.start_week > self.end_week {
            return Err(Error::InvalidValue(format!(
                "challenge {}: start_week {} > end_week {}",
                self.challenge_id, self.start_week, self.end_week
            )));
        }
        Ok(())
    }

    pub fn available_in(&self, week: u32) -> bool {
        self.start_week <= week && week <= self.end_week
    }

    pub fn mask(&self) -> DimMask {
        dimension_mask(&self.meta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub gender: bool,
    pub age: f64,
    pub initial_weight: f64,
    pub membership_weeks: u32,
    pub friends: u32,
    pub posts: u32,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.age > 0.0 && self.age.is_finite()) {
            return Err(Error::InvalidValue(format!("user {}: age must be > 0", self.user_id)));
        }
        if !(self.initial_weight > 0.0 && self.initial_weight.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "user {}: initial_weight must be > 0",
                self.user_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeighIn {
    pub user_id: UserId,
    pub week: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub user_id: UserId,
    pub week: u32,
    pub challenge_id: ChallengeId,
    pub propensity: Option<f64>,
}

impl SelectionEvent {
    pub fn validate(&self) -> Result<()> {
        match self.propensity {
            Some(p) if !(p > 0.0 && p <= 1.0) => Err(Error::InvalidValue(format!(
                "propensity {p} outside (0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

/// Challenge catalog with id lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    challenges: Vec<ChallengeRecord>,
    index: std::collections::HashMap<ChallengeId, usize>,
}

impl Catalog {
    pub fn new(challenges: Vec<ChallengeRecord>) -> Result<Self> {
        let mut index = std::collections::HashMap::with_capacity(challenges.len());
        for (i, c) in challenges.iter().enumerate() {
            c.validate()?;
            if index.insert(c.challenge_id, i).is_some() {
                return Err(Error::DuplicateKey(format!("challenge {}", c.challenge_id)));
            }
        }
        Ok(Self { challenges, index })
    }

    pub fn get(&self, id: ChallengeId) -> Option<&ChallengeRecord> {
        self.index.get(&id).map(|&i| &self.challenges[i])
    }

    pub fn mask(&self, id: ChallengeId) -> DimMask {
        self.get(id).map(ChallengeRecord::mask).unwrap_or_default()
    }

    pub fn challenges(&self) -> &[ChallengeRecord] {
        &self.challenges
    }

    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }

    /// Challenges whose availability window contains `week`, ascending by id.
    pub fn available_in(&self, week: u32) -> Vec<ChallengeId> {
        let mut ids: Vec<_> = self
            .challenges
            .iter()
            .filter(|c| c.available_in(week))
            .map(|c| c.challenge_id)
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Encode meta attributes as an 11-vector with coordinates in `[0, 1]`.
///
/// Layout: specific, measurable, diet, intensity_diet, activity,
/// intensity_activity, weight_loss, intensity_weight_loss, motivational,
/// self_monitoring, min(duration, 16) / 16. Intensities map NA/L/M/H to
/// 0, 1/3, 2/3, 1.
pub fn encode_challenge_meta(meta: &ChallengeMeta) -> [f64; META_FEATURE_DIM] {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let duration = f64::from(meta.duration_weeks.min(DURATION_HORIZON_WEEKS))
        / f64::from(DURATION_HORIZON_WEEKS);
    [
        flag(meta.specific),
        flag(meta.measurable),
        flag(meta.diet),
        meta.intensity_diet.encode(),
        flag(meta.activity),
        meta.intensity_activity.encode(),
        flag(meta.weight_loss),
        meta.intensity_weight_loss.encode(),
        flag(meta.motivational),
        flag(meta.self_monitoring),
        duration,
    ]
}

/// Positions of the dimension flags inside the encoded meta vector, in
/// [`Dimension::ALL`] order.
pub const META_DIMENSION_FLAG_INDEX: [usize; 3] = [6, 2, 4];

pub fn dimension_mask(meta: &ChallengeMeta) -> DimMask {
    let mut bits = 0;
    if meta.weight_loss {
        bits |= Dimension::WeightLoss.bit();
    }
    if meta.diet {
        bits |= Dimension::Diet.bit();
    }
    if meta.activity {
        bits |= Dimension::Exercise.bit();
    }
    DimMask(bits)
}
