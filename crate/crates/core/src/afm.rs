//! Additive Factors Model learners.
//!
//! The probability of a correct first attempt on a step is
//! `sigmoid(theta + beta[k] + gamma[k] * T[k])`, where `T[k]` counts the
//! student's earlier attempts on skill `k`.

use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skills::{SkillId, SkillModel};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillCoefficients {
    /// Intercept in log-odds; higher is easier.
    pub beta: f64,
    /// Log-odds gained per attempted opportunity.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfmParams {
    pub theta_mean: f64,
    pub theta_sd: f64,
    pub skills: Vec<SkillCoefficients>,
}

impl AfmParams {
    pub fn new(theta_mean: f64, theta_sd: f64, skills: Vec<SkillCoefficients>) -> Result<Self> {
        let params = AfmParams {
            theta_mean,
            theta_sd,
            skills,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta_mean.is_finite() {
            return Err(Error::InvalidParam("theta_mean must be finite".into()));
        }
        if !(self.theta_sd > 0.0 && self.theta_sd.is_finite()) {
            return Err(Error::InvalidParam(format!("theta_sd = {} must be > 0", self.theta_sd)));
        }
        for (i, c) in self.skills.iter().enumerate() {
            if !c.beta.is_finite() {
                return Err(Error::InvalidParam(format!("skill #{i}: beta must be finite")));
            }
            if !(c.gamma >= 0.0 && c.gamma.is_finite()) {
                return Err(Error::InvalidParam(format!(
                    "skill #{i}: gamma = {} must be >= 0",
                    c.gamma
                )));
            }
        }
        Ok(())
    }

    pub fn coefficients(&self, skill: SkillId) -> SkillCoefficients {
        self.skills[skill.0]
    }

    pub fn logit(&self, student: &StudentState, skill: SkillId) -> f64 {
        let c = self.skills[skill.0];
        student.theta + c.beta + c.gamma * student.opportunities[skill.0] as f64
    }

    pub fn p_correct(&self, student: &StudentState, skill: SkillId) -> f64 {
        sigmoid(self.logit(student, skill))
    }

    /// One Bernoulli draw from `p_correct`; consumes exactly one value
    /// from `rng`.
    pub fn sample_response<R: Rng + ?Sized>(
        &self,
        student: &StudentState,
        skill: SkillId,
        rng: &mut R,
    ) -> bool {
        let u: f64 = rng.random();
        u < self.p_correct(student, skill)
    }

    pub fn draw_student<R: Rng + ?Sized>(&self, rng: &mut R) -> StudentState {
        let normal = Normal::new(self.theta_mean, self.theta_sd)
            .expect("theta_sd validated positive");
        StudentState::new(normal.sample(rng), self.skills.len())
    }

    pub fn to_file(&self, skills: &SkillModel, fit: Option<FitDiagnostics>) -> AfmParamsFile {
        AfmParamsFile {
            theta_mean: self.theta_mean,
            theta_sd: self.theta_sd,
            skills: skills
                .names()
                .iter()
                .cloned()
                .zip(self.skills.iter().copied())
                .collect(),
            fit,
        }
    }

    pub fn from_file(file: &AfmParamsFile, skills: &SkillModel) -> Result<Self> {
        let mut coefficients = Vec::with_capacity(skills.len());
        for name in skills.names() {
            let c = file.skills.get(name).ok_or_else(|| {
                Error::Schema(format!("AFM parameters missing skill {name:?}"))
            })?;
            coefficients.push(*c);
        }
        if let Some(extra) = file.skills.keys().find(|k| skills.lookup(k).is_none()) {
            return Err(Error::Schema(format!(
                "AFM parameters name skill {extra:?} which is not in the skill model"
            )));
        }
        AfmParams::new(file.theta_mean, file.theta_sd, coefficients)
    }
}

/// Convergence information written alongside fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub neg_log_likelihood: f64,
    pub gradient_max_norm: f64,
    pub n_rows: usize,
    pub n_students: usize,
}

/// AFM parameters document: `theta_mean`, `theta_sd`, and `{beta, gamma}`
/// per skill keyed by skill name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfmParamsFile {
    pub theta_mean: f64,
    pub theta_sd: f64,
    pub skills: IndexMap<String, SkillCoefficients>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitDiagnostics>,
}

impl AfmParamsFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("plain data serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn load_afm_params(path: impl AsRef<Path>, skills: &SkillModel) -> Result<AfmParams> {
    AfmParams::from_file(&AfmParamsFile::read(path)?, skills)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentState {
    pub theta: f64,
    opportunities: Vec<u32>,
}

impl StudentState {
    pub fn new(theta: f64, n_skills: usize) -> Self {
        StudentState {
            theta,
            opportunities: vec![0; n_skills],
        }
    }

    pub fn opportunities(&self, skill: SkillId) -> u32 {
        self.opportunities[skill.0]
    }

    pub fn all_opportunities(&self) -> &[u32] {
        &self.opportunities
    }

    pub fn total_opportunities(&self) -> u64 {
        self.opportunities.iter().map(|&t| t as u64).sum()
    }

    pub fn record_opportunity(&mut self, skill: SkillId) {
        self.opportunities[skill.0] += 1;
    }

    pub fn set_opportunities(&mut self, skill: SkillId, count: u32) {
        self.opportunities[skill.0] = count;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Purpose};
    use proptest::prelude::*;

    fn one_skill(beta: f64, gamma: f64) -> AfmParams {
        AfmParams::new(0.0, 1.0, vec![SkillCoefficients { beta, gamma }]).unwrap()
    }

    const K: SkillId = SkillId(0);

    #[test]
    fn p_correct_values() {
        let params = one_skill(0.0, 0.1);
        let mut s = StudentState::new(0.0, 1);
        assert!((params.p_correct(&s, K) - 0.5).abs() < 1e-15);
        s.set_opportunities(K, 10);
        assert!((params.p_correct(&s, K) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert!((params.p_correct(&s, K) - 0.731_058_6).abs() < 1e-7);
        let low = StudentState::new(-30.0, 1);
        assert!(params.p_correct(&low, K) < 1e-12);
    }

    #[test]
    fn saturated_responses() {
        let params = one_skill(0.0, 0.0);
        let mut rng = derive(5, Purpose::Auxiliary, 0, 0, 0);
        let high = StudentState::new(30.0, 1);
        let low = StudentState::new(-30.0, 1);
        assert!((0..10_000).all(|_| params.sample_response(&high, K, &mut rng)));
        assert!((0..10_000).all(|_| !params.sample_response(&low, K, &mut rng)));
    }

    #[test]
    fn fair_coin_frequency() {
        let params = one_skill(0.0, 0.0);
        let s = StudentState::new(0.0, 1);
        let mut rng = derive(11, Purpose::Auxiliary, 0, 0, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| params.sample_response(&s, K, &mut rng)).count();
        let mean = hits as f64 / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn one_draw_per_response() {
        use rand::RngCore;
        let params = one_skill(0.0, 0.0);
        let s = StudentState::new(0.0, 1);
        let mut a = derive(3, Purpose::Auxiliary, 0, 0, 0);
        let mut b = a.clone();
        params.sample_response(&s, K, &mut a);
        let _: f64 = rand::Rng::random(&mut b);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn proficiency_draws() {
        let tight = AfmParams::new(1.5, 1e-9, vec![]).unwrap();
        let mut rng = derive(8, Purpose::Proficiency, 0, 0, 0);
        assert!((tight.draw_student(&mut rng).theta - 1.5).abs() < 1e-6);

        let std = AfmParams::new(0.0, 1.0, vec![]).unwrap();
        let mut rng = derive(9, Purpose::Proficiency, 0, 0, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| std.draw_student(&mut rng).theta).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "{}", var.sqrt());

        let a = std.draw_student(&mut derive(9, Purpose::Proficiency, 0, 4, 0));
        let b = std.draw_student(&mut derive(9, Purpose::Proficiency, 0, 4, 0));
        assert_eq!(a, b);
        assert!(a.all_opportunities().iter().all(|&t| t == 0));
    }

    #[test]
    fn record_opportunity_counts() {
        let mut s = StudentState::new(0.0, 3);
        s.record_opportunity(SkillId(0));
        assert_eq!(s.opportunities(SkillId(0)), 1);
        s.record_opportunity(SkillId(2));
        assert_eq!(s.all_opportunities(), &[1, 0, 1]);
        assert_eq!(s.theta, 0.0);
    }

    #[test]
    fn rejects_negative_gamma_and_bad_sd() {
        assert!(AfmParams::new(0.0, 1.0, vec![SkillCoefficients { beta: 0.0, gamma: -0.1 }]).is_err());
        assert!(AfmParams::new(0.0, 0.0, vec![]).is_err());
    }

    #[test]
    fn params_file_keys_by_skill_name() {
        let skills = SkillModel::new(["a", "b"]).unwrap();
        let params = AfmParams::new(
            0.1,
            0.9,
            vec![
                SkillCoefficients { beta: 0.5, gamma: 0.1 },
                SkillCoefficients { beta: -1.0, gamma: 0.3 },
            ],
        )
        .unwrap();
        let json = serde_json::to_string(&params.to_file(&skills, None)).unwrap();
        assert!(json.contains(r#""a":{"beta":0.5,"gamma":0.1}"#), "{json}");
        let back: AfmParamsFile = serde_json::from_str(&json).unwrap();
        assert_eq!(AfmParams::from_file(&back, &skills).unwrap(), params);

        let other = SkillModel::new(["a", "c"]).unwrap();
        assert!(AfmParams::from_file(&back, &other).is_err());
    }

    proptest! {
        #[test]
        fn p_correct_monotone_in_opportunities(theta in -3.0..3.0f64, beta in -3.0..3.0f64, gamma in 0.0..1.0f64, t in 0u32..200) {
            let params = one_skill(beta, gamma);
            let mut s = StudentState::new(theta, 1);
            s.set_opportunities(K, t);
            let before = params.p_correct(&s, K);
            s.record_opportunity(K);
            let after = params.p_correct(&s, K);
            if gamma == 0.0 {
                prop_assert_eq!(before, after);
            } else {
                prop_assert!(after >= before);
            }
        }

        #[test]
        fn p_correct_ignores_other_skills(t0 in 0u32..50, t1 in 0u32..50) {
            let params = AfmParams::new(0.0, 1.0, vec![
                SkillCoefficients { beta: 0.2, gamma: 0.1 },
                SkillCoefficients { beta: -0.4, gamma: 0.3 },
            ]).unwrap();
            let mut s = StudentState::new(0.3, 2);
            s.set_opportunities(SkillId(0), t0);
            let before = params.p_correct(&s, SkillId(0));
            s.set_opportunities(SkillId(1), t1);
            prop_assert_eq!(before, params.p_correct(&s, SkillId(0)));
        }
    }
}
