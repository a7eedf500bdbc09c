//! CSV and JSON persistence for domain records, logged interactions and the
//! ground truth of a synthetic environment.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Catalog, ChallengeId, ChallengeMeta, ChallengeRecord, Intensity, SelectionEvent, UserId, UserProfile, WeighIn,
};
use crate::error::{Error, Result};
use crate::evaluation::InteractionLog;
use crate::simdata::{EnvConfig, LoggedData, SyntheticEnvironment};

pub const CHALLENGES_FILE: &str = "challenges.csv";
pub const USERS_FILE: &str = "users.csv";
pub const WEIGHINS_FILE: &str = "weighins.csv";
pub const SELECTIONS_FILE: &str = "selections.csv";
pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Serialize, Deserialize)]
struct ChallengeRow {
    challenge_id: u32,
    title: String,
    description: String,
    specific: u8,
    measurable: u8,
    diet: u8,
    intensity_diet: Intensity,
    activity: u8,
    intensity_activity: Intensity,
    weight_loss: u8,
    intensity_weight_loss: Intensity,
    motivational: u8,
    self_monitoring: u8,
    duration_weeks: u32,
    start_week: u32,
    end_week: u32,
}

fn flag(name: &str, v: u8) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Parse(format!("{name} must be 0 or 1, got {v}"))),
    }
}

impl From<&ChallengeRecord> for ChallengeRow {
    fn from(c: &ChallengeRecord) -> Self {
        let m = &c.meta;
        Self {
            challenge_id: c.challenge_id.0,
            title: c.title.clone(),
            description: c.description.clone(),
            specific: m.specific.into(),
            measurable: m.measurable.into(),
            diet: m.diet.into(),
            intensity_diet: m.intensity_diet,
            activity: m.activity.into(),
            intensity_activity: m.intensity_activity,
            weight_loss: m.weight_loss.into(),
            intensity_weight_loss: m.intensity_weight_loss,
            motivational: m.motivational.into(),
            self_monitoring: m.self_monitoring.into(),
            duration_weeks: m.duration_weeks,
            start_week: c.start_week,
            end_week: c.end_week,
        }
    }
}

impl TryFrom<ChallengeRow> for ChallengeRecord {
    type Error = Error;

    fn try_from(r: ChallengeRow) -> Result<Self> {
        let record = ChallengeRecord {
            challenge_id: ChallengeId(r.challenge_id),
            title: r.title,
            description: r.description,
            meta: ChallengeMeta {
                specific: flag("specific", r.specific)?,
                measurable: flag("measurable", r.measurable)?,
                diet: flag("diet", r.diet)?,
                intensity_diet: r.intensity_diet,
                activity: flag("activity", r.activity)?,
                intensity_activity: r.intensity_activity,
                weight_loss: flag("weight_loss", r.weight_loss)?,
                intensity_weight_loss: r.intensity_weight_loss,
                motivational: flag("motivational", r.motivational)?,
                self_monitoring: flag("self_monitoring", r.self_monitoring)?,
                duration_weeks: r.duration_weeks,
            },
            start_week: r.start_week,
            end_week: r.end_week,
        };
        record.validate()?;
        Ok(record)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct UserRow {
    user_id: u32,
    gender: u8,
    age: f64,
    initial_weight: f64,
    membership_weeks: u32,
    friends: u32,
    posts: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeighInRow {
    user_id: u32,
    week: u32,
    weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SelectionRow {
    user_id: u32,
    week: u32,
    challenge_id: u32,
    propensity: Option<f64>,
}

/// One logged offer without its context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub user_id: UserId,
    pub week: u32,
    pub challenge_id: ChallengeId,
    pub reward: u8,
    pub propensity: f64,
}

/// Contents of `ground_truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub zeta: Vec<f64>,
    pub omega: Vec<f64>,
    pub seed: u64,
    pub config: EnvConfig,
    pub availability: BTreeMap<u32, Vec<ChallengeId>>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => match line {
            Some(l) => Error::Parse(format!("{}: line {l}: {other:?}", path.display())),
            None => Error::Parse(format!("{}: {other:?}", path.display())),
        },
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_challenges(path: &Path, challenges: &[ChallengeRecord]) -> Result<()> {
    write_rows(path, challenges.iter().map(ChallengeRow::from))
}

pub fn read_challenges(path: &Path) -> Result<Vec<ChallengeRecord>> {
    read_rows::<ChallengeRow>(path)?
        .into_iter()
        .map(ChallengeRecord::try_from)
        .collect()
}

pub fn write_users(path: &Path, users: &[UserProfile]) -> Result<()> {
    write_rows(
        path,
        users.iter().map(|u| UserRow {
            user_id: u.user_id.0,
            gender: u.gender.into(),
            age: u.age,
            initial_weight: u.initial_weight,
            membership_weeks: u.membership_weeks,
            friends: u.friends,
            posts: u.posts,
        }),
    )
}

pub fn read_users(path: &Path) -> Result<Vec<UserProfile>> {
    read_rows::<UserRow>(path)?
        .into_iter()
        .map(|r| {
            let u = UserProfile {
                user_id: UserId(r.user_id),
                gender: flag("gender", r.gender)?,
                age: r.age,
                initial_weight: r.initial_weight,
                membership_weeks: r.membership_weeks,
                friends: r.friends,
                posts: r.posts,
            };
            u.validate()?;
            Ok(u)
        })
        .collect()
}

pub fn write_weighins(path: &Path, weighins: &[WeighIn]) -> Result<()> {
    write_rows(
        path,
        weighins.iter().map(|w| WeighInRow {
            user_id: w.user_id.0,
            week: w.week,
            weight: w.weight,
        }),
    )
}

pub fn read_weighins(path: &Path) -> Result<Vec<WeighIn>> {
    read_rows::<WeighInRow>(path)?
        .into_iter()
        .map(|r| {
            if !(r.weight > 0.0) {
                return Err(Error::InvalidValue(format!("weight {} must be > 0", r.weight)));
            }
            Ok(WeighIn {
                user_id: UserId(r.user_id),
                week: r.week,
                weight: r.weight,
            })
        })
        .collect()
}

pub fn write_selections(path: &Path, selections: &[SelectionEvent]) -> Result<()> {
    write_rows(
        path,
        selections.iter().map(|s| SelectionRow {
            user_id: s.user_id.0,
            week: s.week,
            challenge_id: s.challenge_id.0,
            propensity: s.propensity,
        }),
    )
}

pub fn read_selections(path: &Path) -> Result<Vec<SelectionEvent>> {
    read_rows::<SelectionRow>(path)?
        .into_iter()
        .map(|r| {
            let s = SelectionEvent {
                user_id: UserId(r.user_id),
                week: r.week,
                challenge_id: ChallengeId(r.challenge_id),
                propensity: r.propensity,
            };
            s.validate()?;
            Ok(s)
        })
        .collect()
}

pub fn write_interactions(path: &Path, log: &InteractionLog) -> Result<()> {
    write_rows(
        path,
        log.records.iter().map(|r| InteractionRow {
            user_id: r.user,
            week: r.week,
            challenge_id: r.action,
            reward: r.reward.into(),
            propensity: r.propensity,
        }),
    )
}

pub fn read_interactions(path: &Path) -> Result<Vec<InteractionRow>> {
    let rows: Vec<InteractionRow> = read_rows(path)?;
    for r in &rows {
        flag("reward", r.reward)?;
        if !(r.propensity > 0.0 && r.propensity <= 1.0) {
            return Err(Error::InvalidValue(format!(
                "propensity {} must lie in (0, 1]",
                r.propensity
            )));
        }
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn ground_truth(env: &SyntheticEnvironment) -> GroundTruth {
    GroundTruth {
        zeta: env.zeta.clone(),
        omega: env.omega.clone(),
        seed: env.config.seed,
        config: env.config.clone(),
        availability: env.availability.clone(),
    }
}

/// Writes the environment's users, challenges and ground truth into `dir`.
pub fn write_environment(dir: &Path, env: &SyntheticEnvironment) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_challenges(&dir.join(CHALLENGES_FILE), env.catalog.challenges())?;
    write_users(&dir.join(USERS_FILE), &env.users)?;
    write_json(&dir.join(GROUND_TRUTH_FILE), &ground_truth(env))
}

pub fn read_environment(dir: &Path) -> Result<SyntheticEnvironment> {
    let truth: GroundTruth = read_json(&dir.join(GROUND_TRUTH_FILE))?;
    Ok(SyntheticEnvironment {
        config: truth.config,
        users: read_users(&dir.join(USERS_FILE))?,
        catalog: Catalog::new(read_challenges(&dir.join(CHALLENGES_FILE))?)?,
        zeta: truth.zeta,
        omega: truth.omega,
        availability: truth.availability,
    })
}

/// Writes the environment plus the logged weigh-ins, selections and
/// interactions into `dir`.
pub fn write_dataset(dir: &Path, env: &SyntheticEnvironment, data: &LoggedData) -> Result<()> {
    write_environment(dir, env)?;
    write_weighins(&dir.join(WEIGHINS_FILE), &data.weighins)?;
    write_selections(&dir.join(SELECTIONS_FILE), &data.selections)?;
    write_interactions(&dir.join(INTERACTIONS_FILE), &data.log)
}

/// A data directory as produced by `generate`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub environment: SyntheticEnvironment,
    pub weighins: Vec<WeighIn>,
    pub selections: Vec<SelectionEvent>,
    pub interactions: Vec<InteractionRow>,
}

pub fn read_dataset(dir: &Path) -> Result<DataSet> {
    Ok(DataSet {
        environment: read_environment(dir)?,
        weighins: read_weighins(&dir.join(WEIGHINS_FILE))?,
        selections: read_selections(&dir.join(SELECTIONS_FILE))?,
        interactions: read_interactions(&dir.join(INTERACTIONS_FILE))?,
    })
}

/// Paths of every file `generate` writes.
pub fn dataset_files(dir: &Path) -> Vec<PathBuf> {
    [
        CHALLENGES_FILE,
        USERS_FILE,
        WEIGHINS_FILE,
        SELECTIONS_FILE,
        INTERACTIONS_FILE,
        GROUND_TRUTH_FILE,
    ]
    .iter()
    .map(|f| dir.join(f))
    .collect()
}
