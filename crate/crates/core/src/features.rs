//! Context construction: the user context, item features and the
//! concatenated `[1, user, item]` vector fed to the reward model.
//!
//! User contexts are hand-crafted from profile attributes, the weigh-in
//! trajectory and recent selection behaviour. Only events strictly before the
//! current week are read, so a context never leaks information from the round
//! it is used in. Externally computed embeddings can replace either side via
//! [`EmbeddingTable`].

use std::collections::HashMap;
use std::path::Path;

use crate::domain::{
    encode_challenge_meta, Catalog, ChallengeRecord, Dimension, SelectionEvent, UserProfile,
    WeighIn,
};
use crate::error::{Error, Result};

pub const USER_CONTEXT_DIM: usize = 12;

const EWMA_LAMBDA: f64 = 0.5;
const TRAILING_WEEKS: u32 = 4;
const AGE_SCALE: f64 = 100.0;
const WEIGHT_SCALE: f64 = 150.0;
const MEMBERSHIP_CAP_WEEKS: u32 = 520;
const LOG_COUNT_SCALE: f64 = 10.0;
const RECENCY_SCALE_WEEKS: f64 = 16.0;

/// Index of `ewma_weight_delta`, the only coordinate not confined to `[0, 1]`.
pub const EWMA_INDEX: usize = 4;
/// Indices of the trailing selection rates, in [`Dimension::ALL`] order.
pub const SELECTION_RATE_INDEX: [usize; 3] = [8, 9, 10];

#[derive(Debug, Clone, PartialEq)]
pub struct UserContext(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatures(pub Vec<f64>);

/// `[1, x, z]`: the reward model's input, intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector(Vec<f64>);

impl ContextVector {
    /// Wraps a raw vector; the first coordinate must be exactly 1.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            Some(&x) if x == 1.0 => Ok(ContextVector(values)),
            _ => Err(Error::InvalidValue(
                "context vector must start with the intercept 1".into(),
            )),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ContextVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn concat_context(x: &UserContext, z: &ItemFeatures) -> ContextVector {
    let mut v = Vec::with_capacity(1 + x.0.len() + z.0.len());
    v.push(1.0);
    v.extend_from_slice(&x.0);
    v.extend_from_slice(&z.0);
    ContextVector(v)
}

/// Builds the 12-dimensional user context for `week`.
///
/// Events belonging to other users or dated `week` or later are ignored.
pub fn build_user_context(
    profile: &UserProfile,
    weighins: &[WeighIn],
    selections: &[SelectionEvent],
    catalog: &Catalog,
    week: u32,
) -> UserContext {
    let uid = profile.user_id;
    let window_start = week.saturating_sub(TRAILING_WEEKS);
    let in_window = |w: u32| w >= window_start && w < week;

    let mut past_weights: Vec<(u32, f64)> = weighins
        .iter()
        .filter(|w| w.user_id == uid && w.week < week)
        .map(|w| (w.week, w.weight))
        .collect();
    past_weights.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let ewma = ewma_weight_delta(past_weights.iter().map(|(_, w)| *w));

    let mut weighin_weeks: Vec<u32> = past_weights
        .iter()
        .map(|(w, _)| *w)
        .filter(|w| in_window(*w) && *w >= 1)
        .collect();
    weighin_weeks.dedup();
    let weighin_rate = weighin_weeks.len() as f64 / f64::from(TRAILING_WEEKS);

    let mut type_counts = [0usize; 3];
    let mut last_selection: Option<u32> = None;
    for s in selections.iter().filter(|s| s.user_id == uid && s.week < week) {
        last_selection = Some(last_selection.map_or(s.week, |l| l.max(s.week)));
        if in_window(s.week) {
            let mask = catalog.mask(s.challenge_id);
            for (slot, dim) in Dimension::ALL.iter().enumerate() {
                if mask.contains(*dim) {
                    type_counts[slot] += 1;
                }
            }
        }
    }
    let rate = |n: usize| (n as f64 / f64::from(TRAILING_WEEKS)).min(1.0);
    let recency = match last_selection {
        Some(last) => (f64::from(week - last) / RECENCY_SCALE_WEEKS).clamp(0.0, 1.0),
        None => 1.0,
    };

    UserContext(vec![
        if profile.gender { 1.0 } else { 0.0 },
        (profile.age / AGE_SCALE).clamp(0.0, 1.0),
        (profile.initial_weight / WEIGHT_SCALE).clamp(0.0, 1.0),
        f64::from(profile.membership_weeks.min(MEMBERSHIP_CAP_WEEKS)) / f64::from(MEMBERSHIP_CAP_WEEKS),
        ewma,
        weighin_rate,
        (f64::from(profile.friends).ln_1p() / LOG_COUNT_SCALE).min(1.0),
        (f64::from(profile.posts).ln_1p() / LOG_COUNT_SCALE).min(1.0),
        rate(type_counts[0]),
        rate(type_counts[1]),
        rate(type_counts[2]),
        recency,
    ])
}

/// EWMA (λ = 0.5) over successive differences of a chronological weight
/// series, seeded with the first difference. Zero for fewer than two weights.
pub fn ewma_weight_delta(weights: impl IntoIterator<Item = f64>) -> f64 {
    let mut prev: Option<f64> = None;
    let mut acc: Option<f64> = None;
    for w in weights {
        if let Some(p) = prev {
            let delta = w - p;
            acc = Some(match acc {
                None => delta,
                Some(a) => EWMA_LAMBDA * delta + (1.0 - EWMA_LAMBDA) * a,
            });
        }
        prev = Some(w);
    }
    acc.unwrap_or(0.0)
}

/// Fixed-length vectors keyed by entity id and, for per-week user
/// embeddings, the week.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<(u32, Option<u32>), Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: u32, week: Option<u32>, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
                line: self.rows.len() + 1,
            });
        }
        if self.rows.contains_key(&(id, week)) {
            return Err(Error::DuplicateKey(match week {
                Some(w) => format!("({id}, {w})"),
                None => id.to_string(),
            }));
        }
        self.rows.insert((id, week), row);
        Ok(())
    }

    pub fn get(&self, id: u32, week: Option<u32>) -> Option<&[f64]> {
        self.rows.get(&(id, week)).map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn build_item_features(
    challenge: &ChallengeRecord,
    table: Option<&EmbeddingTable>,
) -> Result<ItemFeatures> {
    match table {
        None => Ok(ItemFeatures(encode_challenge_meta(&challenge.meta).to_vec())),
        Some(t) => t
            .get(challenge.challenge_id.0, None)
            .map(|row| ItemFeatures(row.to_vec()))
            .ok_or(Error::MissingEmbedding(challenge.challenge_id)),
    }
}

/// Loads `challenge_embeddings.csv` (`challenge_id,e_0,..`) or
/// `user_embeddings.csv` (`user_id,week,e_0,..`). The presence of a `week`
/// column in the header decides the key shape.
pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<EmbeddingTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse(format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let has_week = headers.get(1).map(str::trim) == Some("week");
    let offset = if has_week { 2 } else { 1 };

    let mut table = EmbeddingTable::new(expected_dim);
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let parse_u32 = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("line {line}: {e}")))
        };
        let id = parse_u32(record.get(0).unwrap_or(""))?;
        let week = if has_week {
            Some(parse_u32(record.get(1).unwrap_or(""))?)
        } else {
            None
        };
        let row = record
            .iter()
            .skip(offset)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {line}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                actual: row.len(),
                line,
            });
        }
        table.insert(id, week, row)?;
    }
    Ok(table)
}
