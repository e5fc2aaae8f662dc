//! Bayesian Knowledge Tracing.
//!
//! Each skill carries a posterior probability that the student is in the
//! learned state. An observation first conditions that posterior on the
//! response (guess/slip noise), then applies the learning transition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skills::SkillId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BktParams {
    pub p_init: f64,
    pub p_learn: f64,
    pub p_guess: f64,
    pub p_slip: f64,
    pub mastery_threshold: f64,
}

impl Default for BktParams {
    fn default() -> Self {
        BktParams {
            p_init: 0.25,
            p_learn: 0.2,
            p_guess: 0.2,
            p_slip: 0.1,
            mastery_threshold: 0.95,
        }
    }
}

impl BktParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("p_init", self.p_init)?;
        unit("p_learn", self.p_learn)?;
        if !(0.0..1.0).contains(&self.p_guess) {
            return Err(Error::InvalidParam(format!("p_guess = {} is outside [0, 1)", self.p_guess)));
        }
        if !(0.0..1.0).contains(&self.p_slip) {
            return Err(Error::InvalidParam(format!("p_slip = {} is outside [0, 1)", self.p_slip)));
        }
        if !(self.mastery_threshold > 0.0 && self.mastery_threshold <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "mastery_threshold = {} is outside (0, 1]",
                self.mastery_threshold
            )));
        }
        if self.p_guess + self.p_slip >= 1.0 {
            return Err(Error::InvalidParam(format!(
                "p_guess + p_slip = {} must be below 1",
                self.p_guess + self.p_slip
            )));
        }
        Ok(())
    }

    /// Posterior after conditioning on one response, before the learning
    /// transition.
    pub fn condition(&self, p_learned: f64, correct: bool) -> f64 {
        let (num, den) = if correct {
            let num = p_learned * (1.0 - self.p_slip);
            (num, num + (1.0 - p_learned) * self.p_guess)
        } else {
            let num = p_learned * self.p_slip;
            (num, num + (1.0 - p_learned) * (1.0 - self.p_guess))
        };
        // den == 0 only when the observation is impossible under the model
        // (e.g. p_learned = 1, p_slip = 0, incorrect); keep the prior then.
        if den > 0.0 {
            num / den
        } else {
            p_learned
        }
    }

    pub fn transition(&self, p_learned: f64) -> f64 {
        p_learned + (1.0 - p_learned) * self.p_learn
    }

    /// Full update: condition on the response, then learn.
    pub fn update(&self, p_learned: f64, correct: bool) -> f64 {
        self.transition(self.condition(p_learned, correct))
    }

    pub fn is_mastered(&self, p_learned: f64) -> bool {
        p_learned >= self.mastery_threshold
    }

    /// Probability of an incorrect response on the next opportunity.
    pub fn predicted_error(&self, p_learned: f64) -> f64 {
        p_learned * self.p_slip + (1.0 - p_learned) * (1.0 - self.p_guess)
    }
}

/// Per-skill BKT parameters. Usually every skill shares the same values;
/// individual skills may be overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct BktModel {
    per_skill: Vec<BktParams>,
}

impl BktModel {
    pub fn uniform(params: BktParams, n_skills: usize) -> Result<Self> {
        params.validate()?;
        Ok(BktModel {
            per_skill: vec![params; n_skills],
        })
    }

    pub fn with_overrides(
        defaults: BktParams,
        n_skills: usize,
        overrides: impl IntoIterator<Item = (SkillId, BktParams)>,
    ) -> Result<Self> {
        let mut model = BktModel::uniform(defaults, n_skills)?;
        for (skill, params) in overrides {
            params.validate()?;
            let slot = model.per_skill.get_mut(skill.0).ok_or_else(|| {
                Error::InvalidParam(format!("BKT override for unknown skill #{}", skill.0))
            })?;
            *slot = params;
        }
        Ok(model)
    }

    pub fn params(&self, skill: SkillId) -> &BktParams {
        &self.per_skill[skill.0]
    }

    pub fn n_skills(&self) -> usize {
        self.per_skill.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BktState {
    p_mastery: Vec<f64>,
}

impl BktState {
    pub fn new(model: &BktModel) -> Self {
        BktState {
            p_mastery: model.per_skill.iter().map(|p| p.p_init).collect(),
        }
    }

    pub fn from_posteriors(p_mastery: Vec<f64>) -> Self {
        BktState { p_mastery }
    }

    pub fn p_mastery(&self, skill: SkillId) -> f64 {
        self.p_mastery[skill.0]
    }

    pub fn posteriors(&self) -> &[f64] {
        &self.p_mastery
    }

    /// Overwrites one posterior. Intended for tests and scenario setup.
    pub fn set_posterior(&mut self, skill: SkillId, p: f64) {
        self.p_mastery[skill.0] = p;
    }

    pub fn observe(&mut self, skill: SkillId, correct: bool, params: &BktParams) {
        let p = &mut self.p_mastery[skill.0];
        *p = params.update(*p, correct);
        debug_assert!(p.is_finite() && (0.0..=1.0).contains(p));
    }

    pub fn is_mastered(&self, skill: SkillId, params: &BktParams) -> bool {
        params.is_mastered(self.p_mastery[skill.0])
    }

    pub fn predicted_error(&self, skill: SkillId, params: &BktParams) -> f64 {
        params.predicted_error(self.p_mastery[skill.0])
    }

    pub fn all_mastered(&self, model: &BktModel) -> bool {
        self.p_mastery
            .iter()
            .zip(&model.per_skill)
            .all(|(&p, params)| params.is_mastered(p))
    }

    pub fn unmastered_count(&self, model: &BktModel) -> usize {
        self.p_mastery
            .iter()
            .zip(&model.per_skill)
            .filter(|(&p, params)| !params.is_mastered(p))
            .count()
    }
}
