//! Problem-selection policies.
//!
//! Every policy maps `(pool availability, BKT state, random stream)` to one
//! available problem. Step difficulty is `1 - P(learned)` of the step's skill.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bkt::{BktModel, BktState};
use crate::error::{Error, Result};
use crate::skills::{Problem, ProblemPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Random,
    Deterministic,
    MasteryEasy,
    MasteryHard,
    FocusedPractice,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::Random,
        SelectorKind::Deterministic,
        SelectorKind::MasteryEasy,
        SelectorKind::MasteryHard,
        SelectorKind::FocusedPractice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectorKind::Random => "random",
            SelectorKind::Deterministic => "deterministic",
            SelectorKind::MasteryEasy => "mastery_easy",
            SelectorKind::MasteryHard => "mastery_hard",
            SelectorKind::FocusedPractice => "focused_practice",
        }
    }

    /// Stable identifier used to key random streams. Independent of the
    /// order selectors appear in a config.
    pub fn condition_id(self) -> u64 {
        match self {
            SelectorKind::Random => 1,
            SelectorKind::Deterministic => 2,
            SelectorKind::MasteryEasy => 3,
            SelectorKind::MasteryHard => 4,
            SelectorKind::FocusedPractice => 5,
        }
    }

    pub fn uses_rng(self) -> bool {
        matches!(self, SelectorKind::Random | SelectorKind::FocusedPractice)
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "random" => Ok(SelectorKind::Random),
            "deterministic" => Ok(SelectorKind::Deterministic),
            "masteryeasy" => Ok(SelectorKind::MasteryEasy),
            "masteryhard" => Ok(SelectorKind::MasteryHard),
            "focusedpractice" => Ok(SelectorKind::FocusedPractice),
            _ => Err(Error::InvalidParam(format!(
                "unknown selector {s:?} (expected random|deterministic|mastery_easy|mastery_hard|focused_practice)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemScore {
    pub pool_order: usize,
    pub mean_difficulty: f64,
    pub unmastered_count: usize,
    pub distinct_skills: usize,
}

pub fn score_problem(problem: &Problem, bkt: &BktState, model: &BktModel) -> ProblemScore {
    score_problem_scaled(problem, bkt, model, 1.0)
}

/// `score_problem` with every step difficulty multiplied by `scale`.
pub fn score_problem_scaled(
    problem: &Problem,
    bkt: &BktState,
    model: &BktModel,
    scale: f64,
) -> ProblemScore {
    let mut total = 0.0;
    let mut unmastered = 0;
    let mut seen: u64 = 0;
    let mut distinct_overflow = Vec::new();
    for skill in problem.skills() {
        let p = bkt.p_mastery(skill);
        total += scale * (1.0 - p);
        if !model.params(skill).is_mastered(p) {
            unmastered += 1;
        }
        if skill.0 < 64 {
            seen |= 1 << skill.0;
        } else if !distinct_overflow.contains(&skill.0) {
            distinct_overflow.push(skill.0);
        }
    }
    ProblemScore {
        pool_order: problem.pool_order,
        mean_difficulty: total / problem.len() as f64,
        unmastered_count: unmastered,
        distinct_skills: seen.count_ones() as usize + distinct_overflow.len(),
    }
}

/// Weight of a candidate under focused practice. Only called for problems
/// with at least one unmastered step.
pub type FocusWeight = fn(&ProblemScore) -> f64;

/// Default focused-practice weight: difficulty per distinct skill, which
/// favours hard problems that exercise few skills.
pub fn difficulty_per_skill(score: &ProblemScore) -> f64 {
    score.mean_difficulty / score.distinct_skills as f64
}

#[derive(Debug, Clone, Copy)]
pub struct Selector {
    pub kind: SelectorKind,
    pub focus_weight: FocusWeight,
    /// Multiplier applied to step difficulties before ranking.
    pub difficulty_scale: f64,
}

impl Selector {
    pub fn new(kind: SelectorKind) -> Self {
        Selector {
            kind,
            focus_weight: difficulty_per_skill,
            difficulty_scale: 1.0,
        }
    }

    /// Picks an available problem, returning its pool index, or `None` when
    /// a mastery-aware policy finds no available problem with an unmastered
    /// step.
    pub fn select<R: Rng + ?Sized>(
        &self,
        pool: &ProblemPool,
        bkt: &BktState,
        model: &BktModel,
        rng: &mut R,
    ) -> Result<Option<usize>> {
        let available: Vec<usize> = pool.available().collect();
        if available.is_empty() {
            return Err(Error::Logic("select called on an exhausted pool".into()));
        }
        let choice = match self.kind {
            SelectorKind::Random => Some(available[rng.random_range(0..available.len())]),
            SelectorKind::Deterministic => available
                .iter()
                .copied()
                .min_by_key(|&i| pool.problem(i).pool_order),
            SelectorKind::MasteryEasy => self
                .candidates(pool, bkt, model, &available)
                .min_by(|(_, a), (_, b)| {
                    a.mean_difficulty
                        .total_cmp(&b.mean_difficulty)
                        .then(a.pool_order.cmp(&b.pool_order))
                })
                .map(|(i, _)| i),
            SelectorKind::MasteryHard => self
                .candidates(pool, bkt, model, &available)
                .min_by(|(_, a), (_, b)| {
                    b.mean_difficulty
                        .total_cmp(&a.mean_difficulty)
                        .then(a.pool_order.cmp(&b.pool_order))
                })
                .map(|(i, _)| i),
            SelectorKind::FocusedPractice => {
                let weighted: Vec<(usize, f64)> = self
                    .candidates(pool, bkt, model, &available)
                    .map(|(i, s)| (i, (self.focus_weight)(&s)))
                    .filter(|&(_, w)| w > 0.0)
                    .collect();
                sample_weighted(&weighted, rng)
            }
        };
        Ok(choice)
    }

    fn candidates<'a>(
        &'a self,
        pool: &'a ProblemPool,
        bkt: &'a BktState,
        model: &'a BktModel,
        available: &'a [usize],
    ) -> impl Iterator<Item = (usize, ProblemScore)> + 'a {
        available
            .iter()
            .map(move |&i| {
                (i, score_problem_scaled(pool.problem(i), bkt, model, self.difficulty_scale))
            })
            .filter(|(_, s)| s.unmastered_count >= 1)
    }
}

/// Multinomial draw over `(item, weight)` pairs with one uniform draw.
fn sample_weighted<R: Rng + ?Sized>(weighted: &[(usize, f64)], rng: &mut R) -> Option<usize> {
    let total: f64 = weighted.iter().map(|&(_, w)| w).sum();
    if weighted.is_empty() || total.is_nan() || total <= 0.0 {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    for &(item, w) in weighted {
        if target < w {
            return Some(item);
        }
        target -= w;
    }
    weighted.last().map(|&(item, _)| item)
}

pub fn select<R: Rng + ?Sized>(
    kind: SelectorKind,
    pool: &ProblemPool,
    bkt: &BktState,
    model: &BktModel,
    rng: &mut R,
) -> Result<Option<usize>> {
    Selector::new(kind).select(pool, bkt, model, rng)
}
