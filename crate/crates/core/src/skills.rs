//! Skill model and problem pool.
//!
//! A problem is a fixed, ordered solution path where every step exercises
//! exactly one skill. The pool tracks which problems are still available in
//! the current pass and how many times it has been reset.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkillId(pub usize);

impl SkillId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed, ordered set of skills. Indices are `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkillModel {
    names: Vec<String>,
    by_name: HashMap<String, SkillId>,
}

impl SkillModel {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Schema("skill model must contain at least one skill".into()));
        }
        let mut by_name = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::Schema(format!("skill #{i} has an empty name")));
            }
            if by_name.insert(name.clone(), SkillId(i)).is_some() {
                return Err(Error::Schema(format!("duplicate skill name {name:?}")));
            }
        }
        Ok(SkillModel { names, by_name })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<SkillId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, skill: SkillId) -> &str {
        &self.names[skill.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = SkillId> + '_ {
        (0..self.names.len()).map(SkillId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub skill: SkillId,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub steps: Vec<Step>,
    pub pool_order: usize,
}

impl Problem {
    pub fn new(id: impl Into<String>, skills: &[SkillId], pool_order: usize) -> Result<Self> {
        let id = id.into();
        if skills.is_empty() {
            return Err(Error::Schema(format!("problem {id:?} has no steps")));
        }
        let steps = skills
            .iter()
            .enumerate()
            .map(|(position, &skill)| Step { skill, position })
            .collect();
        Ok(Problem {
            id,
            steps,
            pool_order,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn skills(&self) -> impl Iterator<Item = SkillId> + '_ {
        self.steps.iter().map(|s| s.skill)
    }
}

/// On-disk pool document: `{"skills": [...], "problems": [{"id", "steps"}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFile {
    pub skills: Vec<String>,
    pub problems: Vec<ProblemEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemEntry {
    pub id: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemPool {
    problems: Vec<Problem>,
    available: Vec<bool>,
    replenish_count: usize,
}

impl ProblemPool {
    pub fn new(problems: Vec<Problem>) -> Result<Self> {
        let mut ids = HashMap::new();
        let mut orders = HashMap::new();
        for p in &problems {
            if p.steps.is_empty() {
                return Err(Error::Schema(format!("problem {:?} has no steps", p.id)));
            }
            if ids.insert(p.id.as_str(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate problem id {:?}", p.id)));
            }
            if orders.insert(p.pool_order, ()).is_some() {
                return Err(Error::Schema(format!(
                    "duplicate pool_order {} (problem {:?})",
                    p.pool_order, p.id
                )));
            }
        }
        let available = vec![true; problems.len()];
        Ok(ProblemPool {
            problems,
            available,
            replenish_count: 0,
        })
    }

    /// Builds a pool from a parsed pool document, resolving skill names
    /// against `skills`. File order defines `pool_order`.
    pub fn from_file(file: &PoolFile, skills: &SkillModel) -> Result<Self> {
        let mut problems = Vec::with_capacity(file.problems.len());
        for (order, entry) in file.problems.iter().enumerate() {
            if entry.id.is_empty() {
                return Err(Error::Schema(format!("problem #{order} has an empty id")));
            }
            let mut path = Vec::with_capacity(entry.steps.len());
            for (pos, name) in entry.steps.iter().enumerate() {
                let skill = skills.lookup(name).ok_or_else(|| {
                    Error::Schema(format!(
                        "problem {:?} step {pos}: unknown skill {name:?}",
                        entry.id
                    ))
                })?;
                path.push(skill);
            }
            problems.push(Problem::new(entry.id.clone(), &path, order)?);
        }
        ProblemPool::new(problems)
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn problem(&self, index: usize) -> &Problem {
        &self.problems[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.problems.iter().position(|p| p.id == id)
    }

    pub fn is_available(&self, index: usize) -> bool {
        self.available[index]
    }

    /// Indices of available problems, in pool order.
    pub fn available(&self) -> impl Iterator<Item = usize> + '_ {
        self.available
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
    }

    pub fn available_count(&self) -> usize {
        self.available.iter().filter(|&&a| a).count()
    }

    pub fn consumed_count(&self) -> usize {
        self.len() - self.available_count()
    }

    pub fn exhausted(&self) -> bool {
        !self.available.iter().any(|&a| a)
    }

    pub fn replenish_count(&self) -> usize {
        self.replenish_count
    }

    pub fn mark_consumed(&mut self, id: &str) -> Result<()> {
        let index = self
            .index_of(id)
            .ok_or_else(|| Error::Logic(format!("unknown problem {id:?}")))?;
        self.consume_index(index)
    }

    pub(crate) fn consume_index(&mut self, index: usize) -> Result<()> {
        if !self.available[index] {
            return Err(Error::Logic(format!(
                "problem {:?} already consumed in this pass",
                self.problems[index].id
            )));
        }
        self.available[index] = false;
        Ok(())
    }

    /// Resets every problem to available. Only legal on an exhausted pool.
    pub fn replenish(&mut self) -> Result<()> {
        if !self.exhausted() {
            return Err(Error::Logic(format!(
                "replenish called with {} problems still available",
                self.available_count()
            )));
        }
        self.reset_pass();
        Ok(())
    }

    /// Starts a new pass even though some problems remain available. Used
    /// in run-to-mastery sessions when every remaining problem is already
    /// fully mastered.
    pub(crate) fn reset_pass(&mut self) {
        self.available.iter_mut().for_each(|a| *a = true);
        self.replenish_count += 1;
    }

    /// Skills that occur in at least one problem.
    pub fn covered_skills(&self, n_skills: usize) -> Vec<bool> {
        let mut covered = vec![false; n_skills];
        for p in &self.problems {
            for s in p.skills() {
                if s.0 < n_skills {
                    covered[s.0] = true;
                }
            }
        }
        covered
    }
}

pub fn parse_pool(json: &str) -> Result<(SkillModel, ProblemPool)> {
    let file: PoolFile =
        serde_json::from_str(json).map_err(|e| Error::Schema(format!("pool file: {e}")))?;
    let skills = SkillModel::new(file.skills.iter().cloned())?;
    let pool = ProblemPool::from_file(&file, &skills)?;
    Ok((skills, pool))
}

/// Loads a pool document, taking the skill model from its `skills` list.
pub fn load_pool_file(path: impl AsRef<Path>) -> Result<(SkillModel, ProblemPool)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pool(&text).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads a pool against an existing skill model. The file's `skills` list
/// must name the same skills in the same order.
pub fn load_pool(path: impl AsRef<Path>, skills: &SkillModel) -> Result<ProblemPool> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PoolFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if file.skills != skills.names() {
        return Err(Error::Schema(format!(
            "{}: skill list does not match the skill model",
            path.display()
        )));
    }
    ProblemPool::from_file(&file, skills)
}
