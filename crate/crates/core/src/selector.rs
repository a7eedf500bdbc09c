//! Exact diversity-constrained top-K selection.
//!
//! Picks at most `K` candidates maximizing the summed score such that every
//! required dimension is covered by at least one chosen item. Solved exactly
//! by dynamic programming over (candidate index, coverage bitmask, count).
//! A required dimension that no candidate covers is dropped with a warning.

use log::warn;

use crate::domain::{ChallengeId, DimMask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub challenge_id: ChallengeId,
    pub score: f64,
    pub mask: DimMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionProblem {
    pub candidates: Vec<ScoredCandidate>,
    pub k: usize,
    pub required: DimMask,
}

impl SelectionProblem {
    pub fn new(candidates: Vec<ScoredCandidate>, k: usize, required: DimMask) -> Self {
        Self {
            candidates,
            k,
            required,
        }
    }

    /// Required dimensions that at least one candidate can cover.
    pub fn retained_required(&self) -> DimMask {
        let coverable = self
            .candidates
            .iter()
            .fold(DimMask::EMPTY, |acc, c| acc.union(c.mask));
        self.required.intersection(coverable)
    }

    fn sorted_candidates(&self) -> Vec<ScoredCandidate> {
        let mut cands = self.candidates.clone();
        cands.sort_by_key(|c| c.challenge_id);
        cands
    }

    /// Coverage targets after relaxation: the largest subsets of the
    /// retained required dimensions that `K` items can jointly cover. Equals
    /// `[retained]` whenever `K` suffices.
    fn coverage_targets(&self) -> Vec<DimMask> {
        let retained = self.retained_required();
        if retained != self.required {
            let dropped = DimMask::from_bits(self.required.bits() & !retained.bits()).unwrap_or_default();
            warn!("no available candidate covers {dropped}; relaxing that coverage constraint");
        }
        let min_items = min_items_to_cover(&self.candidates);
        if min_items[retained.bits() as usize] <= self.k {
            return vec![retained];
        }
        let subsets: Vec<DimMask> = (0u8..8)
            .filter(|b| b & !retained.bits() == 0)
            .filter_map(DimMask::from_bits)
            .filter(|m| min_items[m.bits() as usize] <= self.k)
            .collect();
        let best = subsets.iter().map(|m| m.len()).max().unwrap_or(0);
        warn!(
            "K = {} cannot cover {retained}; covering {best} of {} required dimensions",
            self.k,
            retained.len()
        );
        subsets.into_iter().filter(|m| m.len() == best).collect()
    }
}

/// Minimum number of candidates whose masks jointly cover each of the 8
/// coverage masks (`usize::MAX` when impossible).
fn min_items_to_cover(candidates: &[ScoredCandidate]) -> [usize; 8] {
    let mut best = [usize::MAX; 8];
    best[0] = 0;
    for _ in 0..3 {
        for c in candidates {
            for mask in 0..8usize {
                if best[mask] == usize::MAX {
                    continue;
                }
                let next = mask | c.mask.bits() as usize;
                best[next] = best[next].min(best[mask] + 1);
            }
        }
    }
    let mut covered = [usize::MAX; 8];
    for (target, slot) in covered.iter_mut().enumerate() {
        *slot = (0..8).filter(|m| m & target == target).map(|m| best[m]).min().unwrap();
    }
    covered
}

/// Summed score of the chosen ids, accumulated in ascending id order.
pub fn objective(problem: &SelectionProblem, chosen: &[ChallengeId]) -> f64 {
    let mut ids = chosen.to_vec();
    ids.sort_unstable();
    ids.iter()
        .map(|id| {
            problem
                .candidates
                .iter()
                .find(|c| c.challenge_id == *id)
                .map_or(0.0, |c| c.score)
        })
        .sum()
}

/// Returns `true` when `chosen` has at most `K` items and covers every
/// retained required dimension.
pub fn is_feasible(problem: &SelectionProblem, chosen: &[ChallengeId]) -> bool {
    if chosen.len() > problem.k {
        return false;
    }
    let covered = chosen.iter().fold(DimMask::EMPTY, |acc, id| {
        let mask = problem
            .candidates
            .iter()
            .find(|c| c.challenge_id == *id)
            .map_or(DimMask::EMPTY, |c| c.mask);
        acc.union(mask)
    });
    problem
        .coverage_targets()
        .iter()
        .any(|t| covered.is_superset_of(*t))
}

/// Exact solver. The returned ids are in ascending order; among optimal sets
/// the one that takes earlier ids first wins.
pub fn solve_constrained_topk(problem: &SelectionProblem) -> Result<Vec<ChallengeId>> {
    if problem.candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let cands = problem.sorted_candidates();
    let mut best: Option<(f64, Vec<ChallengeId>)> = None;
    for target in problem.coverage_targets() {
        let (value, chosen) = solve_for_target(&cands, problem.k, target);
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, chosen));
        }
    }
    Ok(best.map(|(_, c)| c).unwrap_or_default())
}

fn solve_for_target(cands: &[ScoredCandidate], k: usize, target: DimMask) -> (f64, Vec<ChallengeId>) {
    let required = target.bits() as usize;
    let n = cands.len();
    let k = k.min(n);
    const MASKS: usize = 8;
    let width = MASKS * (k + 1);
    let idx = |i: usize, mask: usize, count: usize| i * width + mask * (k + 1) + count;

    // best[i][mask][count]: best achievable score from candidates i.. given
    // the coverage and count accumulated so far.
    let mut best = vec![f64::NEG_INFINITY; (n + 1) * width];
    for mask in 0..MASKS {
        if mask & required == required {
            for count in 0..=k {
                best[idx(n, mask, count)] = 0.0;
            }
        }
    }
    for i in (0..n).rev() {
        let cand_mask = cands[i].mask.bits() as usize;
        let score = cands[i].score;
        for mask in 0..MASKS {
            for count in 0..=k {
                let skip = best[idx(i + 1, mask, count)];
                let take = if count < k {
                    score + best[idx(i + 1, mask | cand_mask, count + 1)]
                } else {
                    f64::NEG_INFINITY
                };
                best[idx(i, mask, count)] = skip.max(take);
            }
        }
    }

    let mut chosen = Vec::with_capacity(k);
    let (mut mask, mut count) = (0usize, 0usize);
    for (i, cand) in cands.iter().enumerate() {
        if count < k {
            let next_mask = mask | cand.mask.bits() as usize;
            let take = cand.score + best[idx(i + 1, next_mask, count + 1)];
            if take.is_finite() && take >= best[idx(i + 1, mask, count)] {
                chosen.push(cand.challenge_id);
                mask = next_mask;
                count += 1;
            }
        }
    }
    (best[idx(0, 0, 0)], chosen)
}

pub const BRUTE_FORCE_MAX_CANDIDATES: usize = 20;

/// Exhaustive reference solver over all subsets of size at most `K`.
pub fn brute_force_topk(problem: &SelectionProblem) -> Result<Vec<ChallengeId>> {
    let n = problem.candidates.len();
    if n == 0 {
        return Err(Error::EmptyCandidates);
    }
    if n > BRUTE_FORCE_MAX_CANDIDATES {
        return Err(Error::TooManyCandidates {
            max: BRUTE_FORCE_MAX_CANDIDATES,
            got: n,
        });
    }
    let targets = problem.coverage_targets();
    let cands = problem.sorted_candidates();
    let mut best: Option<(f64, u32)> = None;
    for subset in 0u32..(1 << n) {
        if subset.count_ones() as usize > problem.k {
            continue;
        }
        let mut covered = DimMask::EMPTY;
        let mut total = 0.0;
        for (i, c) in cands.iter().enumerate() {
            if subset & (1 << i) != 0 {
                covered = covered.union(c.mask);
                total += c.score;
            }
        }
        if !targets.iter().any(|t| covered.is_superset_of(*t)) {
            continue;
        }
        if best.map_or(true, |(b, _)| total > b) {
            best = Some((total, subset));
        }
    }
    let (_, subset) = best.expect("empty subset is feasible once constraints are relaxed");
    Ok(cands
        .iter()
        .enumerate()
        .filter(|(i, _)| subset & (1 << i) != 0)
        .map(|(_, c)| c.challenge_id)
        .collect())
}
