//! Overpractice and underpractice accounting.
//!
//! An attempted step counts as overpractice when its skill was already
//! mastered (BKT posterior at or above the threshold) before the attempt.
//! Fast-forwarded steps are never overpractice. Underpractice is the number
//! of skills still unmastered when the session ends.

use serde::{Deserialize, Serialize};

use crate::bkt::BktModel;
use crate::error::{Error, Result};
use crate::selectors::SelectorKind;
use crate::session::SessionRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentMetrics {
    pub overpractice_by_skill: Vec<u64>,
    pub overpractice_total: u64,
    pub underpractice: u64,
    pub attempted_steps: u64,
    pub mastered_all: bool,
    pub steps_to_mastery: Option<u64>,
}

pub fn compute_student_metrics(record: &SessionRecord, model: &BktModel) -> StudentMetrics {
    let mut by_skill = vec![0u64; model.n_skills()];
    let mut attempted = 0;
    for e in record.events.iter().filter(|e| !e.fast_forwarded) {
        attempted += 1;
        if e.was_mastered_before {
            by_skill[e.skill.0] += 1;
        }
    }
    let underpractice = record.final_bkt.unmastered_count(model) as u64;
    let mastered_all = underpractice == 0;
    StudentMetrics {
        overpractice_total: by_skill.iter().sum(),
        overpractice_by_skill: by_skill,
        underpractice,
        attempted_steps: attempted,
        mastered_all,
        // Sessions stop the moment every skill is mastered, so the final
        // attempted count is the first time mastery held.
        steps_to_mastery: mastered_all.then_some(attempted),
    }
}

/// Mean and sample standard deviation (n - 1 denominator). `sd` is 0 and
/// `sd_defined` false when fewer than two values are given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub sd_defined: bool,
}

impl Moments {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Moments> {
        let values: Vec<f64> = values.into_iter().collect();
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Some(Moments { mean, sd: 0.0, sd_defined: false });
        }
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Some(Moments {
            mean,
            sd: (ss / (n - 1) as f64).sqrt(),
            sd_defined: true,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub selector: SelectorKind,
    pub fast_forward: bool,
    pub n_students: usize,
    pub overpractice: Moments,
    pub underpractice: Moments,
    pub attempted_steps: Moments,
    pub overpractice_by_skill_mean: Vec<f64>,
    pub n_mastered_all: usize,
    /// Over students who reached full mastery.
    pub steps_to_mastery_mean: Option<f64>,
}

pub fn summarize(metrics: &[StudentMetrics], selector: SelectorKind, fast_forward: bool) -> Result<ConditionSummary> {
    if metrics.is_empty() {
        return Err(Error::InvalidParam("cannot summarize an empty set of students".into()));
    }
    let n_skills = metrics[0].overpractice_by_skill.len();
    let n = metrics.len() as f64;
    let mut per_skill = vec![0.0; n_skills];
    for m in metrics {
        for (acc, &v) in per_skill.iter_mut().zip(&m.overpractice_by_skill) {
            *acc += v as f64;
        }
    }
    per_skill.iter_mut().for_each(|v| *v /= n);
    let stm = Moments::of(metrics.iter().filter_map(|m| m.steps_to_mastery.map(|s| s as f64)));
    Ok(ConditionSummary {
        selector,
        fast_forward,
        n_students: metrics.len(),
        overpractice: Moments::of(metrics.iter().map(|m| m.overpractice_total as f64)).unwrap(),
        underpractice: Moments::of(metrics.iter().map(|m| m.underpractice as f64)).unwrap(),
        attempted_steps: Moments::of(metrics.iter().map(|m| m.attempted_steps as f64)).unwrap(),
        overpractice_by_skill_mean: per_skill,
        n_mastered_all: metrics.iter().filter(|m| m.mastered_all).count(),
        steps_to_mastery_mean: stm.map(|m| m.mean),
    })
}

/// Per-student differences `without - with` for paired arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub sd: f64,
    pub standard_error: f64,
    /// Students whose overpractice did not increase under fast-forwarding.
    pub n_not_worse: usize,
}

pub fn paired_difference(with_ff: &[StudentMetrics], without_ff: &[StudentMetrics]) -> Result<PairedDifference> {
    if with_ff.len() != without_ff.len() || with_ff.is_empty() {
        return Err(Error::InvalidParam(format!(
            "paired arms must have equal, non-zero sizes ({} vs {})",
            with_ff.len(),
            without_ff.len()
        )));
    }
    let diffs = with_ff
        .iter()
        .zip(without_ff)
        .map(|(w, wo)| wo.overpractice_total as f64 - w.overpractice_total as f64);
    let m = Moments::of(diffs).unwrap();
    Ok(PairedDifference {
        mean: m.mean,
        sd: m.sd,
        standard_error: m.sd / (with_ff.len() as f64).sqrt(),
        n_not_worse: with_ff
            .iter()
            .zip(without_ff)
            .filter(|(w, wo)| w.overpractice_total <= wo.overpractice_total)
            .count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub selector: SelectorKind,
    pub mean_without_ff: f64,
    pub mean_with_ff: f64,
    /// `None` when the no-fast-forward mean is zero.
    pub reduction_pct: Option<f64>,
    /// Reduction in units of the no-fast-forward standard deviation.
    pub effect_size_sd: Option<f64>,
    pub underpractice_without_ff: f64,
    pub underpractice_with_ff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<PairedDifference>,
}

pub fn reduction_report(with_ff: &ConditionSummary, without_ff: &ConditionSummary) -> Result<ReductionReport> {
    if with_ff.selector != without_ff.selector {
        return Err(Error::Logic(format!(
            "reduction across different selectors ({} vs {})",
            with_ff.selector, without_ff.selector
        )));
    }
    if !with_ff.fast_forward || without_ff.fast_forward {
        return Err(Error::Logic("reduction needs one fast-forward arm and one plain arm".into()));
    }
    let before = without_ff.overpractice.mean;
    let after = with_ff.overpractice.mean;
    let sd = without_ff.overpractice.sd;
    Ok(ReductionReport {
        selector: with_ff.selector,
        mean_without_ff: before,
        mean_with_ff: after,
        reduction_pct: (before != 0.0).then(|| (before - after) / before * 100.0),
        effect_size_sd: (sd > 0.0).then(|| (before - after) / sd),
        underpractice_without_ff: without_ff.underpractice.mean,
        underpractice_with_ff: with_ff.underpractice.mean,
        paired: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afm::StudentState;
    use crate::bkt::{BktParams, BktState};
    use crate::session::{StepEvent, Termination};
    use crate::skills::SkillId;

    fn model() -> BktModel {
        BktModel::uniform(BktParams::default(), 2).unwrap()
    }

    fn record(events: Vec<StepEvent>, posteriors: Vec<f64>) -> SessionRecord {
        SessionRecord {
            events,
            final_bkt: BktState::from_posteriors(posteriors),
            final_student: StudentState::new(0.0, 2),
            problems_started: 0,
            problems_fast_forwarded: 0,
            replenishes: 0,
            terminated_by: Termination::Budget,
        }
    }

    fn attempt(skill: usize, mastered: bool, counter: u64) -> StepEvent {
        StepEvent {
            problem: 0,
            step_position: 0,
            skill: SkillId(skill),
            was_mastered_before: mastered,
            correct: Some(true),
            fast_forwarded: false,
            step_counter: counter,
        }
    }

    fn with_total(total: u64) -> StudentMetrics {
        StudentMetrics {
            overpractice_by_skill: vec![total, 0],
            overpractice_total: total,
            underpractice: 0,
            attempted_steps: total + 3,
            mastered_all: true,
            steps_to_mastery: Some(total + 3),
        }
    }

    #[test]
    fn empty_record() {
        let m = compute_student_metrics(&record(vec![], vec![0.25, 0.25]), &model());
        assert_eq!(m.overpractice_total, 0);
        assert_eq!(m.attempted_steps, 0);
        assert_eq!(m.underpractice, 2);
        assert!(!m.mastered_all);
        assert_eq!(m.steps_to_mastery, None);
    }

    #[test]
    fn counts_attempts_after_mastery() {
        let mut events = vec![attempt(0, false, 1), attempt(0, false, 2), attempt(0, true, 3)];
        events.push(StepEvent { fast_forwarded: true, correct: None, ..attempt(0, true, 3) });
        let m = compute_student_metrics(&record(events, vec![0.97, 0.2]), &model());
        assert_eq!(m.overpractice_by_skill, vec![1, 0]);
        assert_eq!(m.overpractice_total, 1);
        assert_eq!(m.attempted_steps, 3);
        assert_eq!(m.underpractice, 1);
    }

    #[test]
    fn single_student_has_undefined_sd() {
        let s = summarize(&[with_total(5)], SelectorKind::Random, false).unwrap();
        assert_eq!(s.overpractice.mean, 5.0);
        assert_eq!(s.overpractice.sd, 0.0);
        assert!(!s.overpractice.sd_defined);
    }

    #[test]
    fn two_students_mean_and_sd() {
        let s = summarize(&[with_total(2), with_total(4)], SelectorKind::Random, false).unwrap();
        assert_eq!(s.overpractice.mean, 3.0);
        assert!((s.overpractice.sd - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.overpractice_by_skill_mean, vec![3.0, 0.0]);
        assert_eq!(s.n_students, 2);
    }

    #[test]
    fn empty_summary_is_rejected() {
        assert!(summarize(&[], SelectorKind::Random, false).is_err());
    }

    fn summary(mean: f64, ff: bool) -> ConditionSummary {
        ConditionSummary {
            selector: SelectorKind::MasteryHard,
            fast_forward: ff,
            n_students: 10,
            overpractice: Moments { mean, sd: 2.0, sd_defined: true },
            underpractice: Moments { mean: 0.4, sd: 0.1, sd_defined: true },
            attempted_steps: Moments { mean: 50.0, sd: 5.0, sd_defined: true },
            overpractice_by_skill_mean: vec![mean, 0.0],
            n_mastered_all: 10,
            steps_to_mastery_mean: Some(50.0),
        }
    }

    #[test]
    fn reduction_percentages() {
        let r = reduction_report(&summary(6.43, true), &summary(10.0, false)).unwrap();
        assert!((r.reduction_pct.unwrap() - 35.7).abs() < 1e-9);
        assert!((r.effect_size_sd.unwrap() - 1.785).abs() < 1e-9);

        let r = reduction_report(&summary(10.0, true), &summary(10.0, false)).unwrap();
        assert_eq!(r.reduction_pct, Some(0.0));

        let r = reduction_report(&summary(0.0, true), &summary(0.0, false)).unwrap();
        assert_eq!(r.reduction_pct, None);
    }

    #[test]
    fn reduction_needs_matching_arms() {
        assert!(reduction_report(&summary(1.0, false), &summary(2.0, false)).is_err());
        let mut other = summary(1.0, true);
        other.selector = SelectorKind::Random;
        assert!(reduction_report(&other, &summary(2.0, false)).is_err());
    }

    #[test]
    fn paired_difference_stats() {
        let with: Vec<_> = [1, 2, 3].into_iter().map(with_total).collect();
        let without: Vec<_> = [2, 4, 3].into_iter().map(with_total).collect();
        let d = paired_difference(&with, &without).unwrap();
        assert!((d.mean - 1.0).abs() < 1e-12);
        assert!((d.sd - 1.0).abs() < 1e-12);
        assert_eq!(d.n_not_worse, 3);
        assert!(paired_difference(&with, &without[..2]).is_err());
    }
}
