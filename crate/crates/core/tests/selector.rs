use std::time::Instant;

use bandit_rex::domain::{ChallengeId, DimMask};
use bandit_rex::rng::stream;
use bandit_rex::selector::{
    brute_force_topk, is_feasible, objective, solve_constrained_topk, ScoredCandidate, SelectionProblem,
};
use bandit_rex::Error;
use proptest::prelude::*;
use rand::Rng;

fn random_problem(seed: u64) -> SelectionProblem {
    let mut rng = stream(seed, &["selector", "instance"]);
    let n = rng.gen_range(1..=12);
    let candidates = (0..n)
        .map(|i| ScoredCandidate {
            challenge_id: ChallengeId(i as u32 * 3 + 1),
            score: rng.gen_range(0.0..1.0),
            mask: DimMask::from_bits(rng.gen_range(0..8)).unwrap(),
        })
        .collect();
    let k = rng.gen_range(1..=4);
    let required = DimMask::from_bits(rng.gen_range(0..8)).unwrap();
    SelectionProblem::new(candidates, k, required)
}

fn cand(id: u32, score: f64, bits: u8) -> ScoredCandidate {
    ScoredCandidate {
        challenge_id: ChallengeId(id),
        score,
        mask: DimMask::from_bits(bits).unwrap(),
    }
}

#[test]
fn dynamic_program_matches_exhaustive_search() {
    let start = Instant::now();
    for seed in 0..500 {
        let problem = random_problem(seed);
        let dp = solve_constrained_topk(&problem).unwrap();
        let bf = brute_force_topk(&problem).unwrap();
        assert_eq!(objective(&problem, &dp), objective(&problem, &bf), "seed {seed}");
        assert!(is_feasible(&problem, &dp), "seed {seed}");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn coverage_outranks_score() {
    let problem = SelectionProblem::new(
        vec![cand(1, 0.9, 0b010), cand(2, 0.8, 0b010), cand(3, 0.1, 0b100), cand(4, 0.05, 0b001)],
        3,
        DimMask::ALL,
    );
    let chosen = solve_constrained_topk(&problem).unwrap();
    assert_eq!(chosen, vec![ChallengeId(1), ChallengeId(3), ChallengeId(4)]);
    assert!((objective(&problem, &chosen) - 1.05).abs() < 1e-12);
}

#[test]
fn one_per_dimension_is_forced() {
    let problem = SelectionProblem::new(
        vec![cand(7, 0.01, 0b001), cand(8, 5.0, 0b010), cand(9, 0.02, 0b100)],
        3,
        DimMask::ALL,
    );
    assert_eq!(solve_constrained_topk(&problem).unwrap().len(), 3);
}

#[test]
fn equal_scores_give_k_times_score() {
    let problem = SelectionProblem::new((1..=6).map(|i| cand(i, 0.25, 0b111)).collect(), 4, DimMask::ALL);
    let chosen = brute_force_topk(&problem).unwrap();
    assert_eq!(objective(&problem, &chosen), 1.0);
}

#[test]
fn errors() {
    let empty = SelectionProblem::new(Vec::new(), 3, DimMask::ALL);
    assert!(matches!(solve_constrained_topk(&empty), Err(Error::EmptyCandidates)));
    let big = SelectionProblem::new((1..=21).map(|i| cand(i, 0.1, 0)).collect(), 2, DimMask::EMPTY);
    assert!(matches!(brute_force_topk(&big), Err(Error::TooManyCandidates { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn positive_scores_fill_k(seed in 0u64..100_000) {
        let mut problem = random_problem(seed);
        for c in &mut problem.candidates {
            c.score += 0.01;
        }
        let chosen = solve_constrained_topk(&problem).unwrap();
        prop_assert!(is_feasible(&problem, &chosen));
        if problem.candidates.len() >= problem.k {
            prop_assert_eq!(chosen.len(), problem.k);
        }
        let mut ids = chosen.clone();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), chosen.len());
    }

    #[test]
    fn selection_ignores_input_order(seed in 0u64..100_000) {
        let problem = random_problem(seed);
        let mut reversed = problem.clone();
        reversed.candidates.reverse();
        prop_assert_eq!(solve_constrained_topk(&problem).unwrap(), solve_constrained_topk(&reversed).unwrap());
    }
}
