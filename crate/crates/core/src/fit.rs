//! Maximum-likelihood fitting of AFM parameters from step logs.
//!
//! The objective is the Bernoulli negative log-likelihood of first-attempt
//! correctness plus an L2 penalty `lambda * (|theta|^2 + |beta|^2)`. It is
//! minimized by projected descent with Armijo backtracking; learning rates are
//! projected onto `gamma >= 0`. The descent direction is the Newton direction:
//! the Hessian is diagonal in the student block, so a Schur complement
//! reduces each solve to a dense `2K x 2K` system over skill coefficients.
//!
//! Student proficiencies and skill intercepts are only identified up to a
//! shared offset (`theta + c`, `beta - c` leaves the likelihood unchanged).
//! After each descent step the offset that minimizes the penalty is applied
//! in closed form.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::afm::{sigmoid, AfmParams, FitDiagnostics, SkillCoefficients, StudentState};
use crate::error::{Error, Result};
use crate::rng::{derive, Purpose};
use crate::skills::{SkillId, SkillModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogRow {
    pub student: usize,
    pub skill: SkillId,
    pub opportunity: u32,
    pub correct: bool,
}

/// First-attempt step outcomes, one row per (student, skill, opportunity).
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub students: Vec<String>,
    pub skills: SkillModel,
    pub rows: Vec<LogRow>,
}

#[derive(Debug, Deserialize, Serialize)]
struct CsvRow {
    student_id: String,
    skill: String,
    opportunity: u32,
    correct: u8,
}

impl StepLog {
    /// Parses `student_id,skill,opportunity,correct` rows. Skills and
    /// students are indexed in order of first appearance.
    pub fn from_csv<R: Read>(reader: R) -> Result<StepLog> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Schema(format!("step log header: {e}")))?
            .clone();
        let expected = ["student_id", "skill", "opportunity", "correct"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Schema(format!(
                "step log header must be `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut students = Vec::new();
        let mut student_index = HashMap::new();
        let mut skill_names: Vec<String> = Vec::new();
        let mut skill_index = HashMap::new();
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Schema(format!("step log line {line}: {e}")))?;
            if rec.correct > 1 {
                return Err(Error::Schema(format!("step log line {line}: correct must be 0 or 1")));
            }
            if rec.student_id.is_empty() || rec.skill.is_empty() {
                return Err(Error::Schema(format!("step log line {line}: empty student or skill")));
            }
            let student = *student_index.entry(rec.student_id.clone()).or_insert_with(|| {
                students.push(rec.student_id.clone());
                students.len() - 1
            });
            let skill = *skill_index.entry(rec.skill.clone()).or_insert_with(|| {
                skill_names.push(rec.skill.clone());
                skill_names.len() - 1
            });
            rows.push(LogRow {
                student,
                skill: SkillId(skill),
                opportunity: rec.opportunity,
                correct: rec.correct == 1,
            });
        }
        if rows.is_empty() {
            return Err(Error::Schema("step log has no rows".into()));
        }
        let log = StepLog {
            students,
            skills: SkillModel::new(skill_names)?,
            rows,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<StepLog> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        StepLog::from_csv(std::io::BufReader::new(file)).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(CsvRow {
                student_id: self.students[r.student].clone(),
                skill: self.skills.name(r.skill).to_string(),
                opportunity: r.opportunity,
                correct: r.correct as u8,
            })
            .map_err(|e| Error::Schema(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<step log>", e))
    }

    /// Checks that opportunities within each (student, skill) run 0, 1, 2,
    /// ... without gaps or repeats.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashMap<(usize, SkillId), Vec<u32>> = HashMap::new();
        for r in &self.rows {
            if r.student >= self.students.len() || r.skill.0 >= self.skills.len() {
                return Err(Error::Schema("step log row references an unknown student or skill".into()));
            }
            seen.entry((r.student, r.skill)).or_default().push(r.opportunity);
        }
        let mut keys: Vec<_> = seen.keys().copied().collect();
        keys.sort();
        for key in keys {
            let ops = seen.get_mut(&key).unwrap();
            ops.sort_unstable();
            if ops.iter().enumerate().any(|(i, &o)| o as usize != i) {
                return Err(Error::Schema(format!(
                    "student {:?}, skill {:?}: opportunity indices are not 0..{} without gaps",
                    self.students[key.0],
                    self.skills.name(key.1),
                    ops.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_skills(&self) -> usize {
        self.skills.len()
    }
}

/// Samples a step log from known AFM parameters. Each student gets
/// `opportunities_per_skill` attempts on every skill, interleaved
/// round-robin across skills.
pub fn simulate_log(
    params: &AfmParams,
    skills: &SkillModel,
    n_students: usize,
    opportunities_per_skill: u32,
    seed: u64,
) -> (StepLog, Vec<f64>) {
    let mut rows = Vec::with_capacity(n_students * skills.len() * opportunities_per_skill as usize);
    let mut thetas = Vec::with_capacity(n_students);
    for s in 0..n_students {
        let mut rng = derive(seed, Purpose::Auxiliary, 0, s as u64, 0);
        let mut student: StudentState = params.draw_student(&mut rng);
        thetas.push(student.theta);
        for t in 0..opportunities_per_skill {
            for skill in skills.ids() {
                let correct = params.sample_response(&student, skill, &mut rng);
                student.record_opportunity(skill);
                rows.push(LogRow {
                    student: s,
                    skill,
                    opportunity: t,
                    correct,
                });
            }
        }
    }
    let log = StepLog {
        students: (0..n_students).map(|s| format!("s{s}")).collect(),
        skills: skills.clone(),
        rows,
    };
    (log, thetas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub lambda: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            lambda: 1e-3,
            tol: 1e-5,
            max_iterations: 5000,
        }
    }
}

/// Flat parameter vector: `[theta_0..theta_n, beta_0..beta_k, gamma_0..gamma_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Point {
    pub fn zeros(n_students: usize, n_skills: usize) -> Point {
        Point {
            theta: vec![0.0; n_students],
            beta: vec![0.0; n_skills],
            gamma: vec![0.0; n_skills],
        }
    }

    pub fn from_params(params: &[SkillCoefficients], theta: &[f64]) -> Point {
        Point {
            theta: theta.to_vec(),
            beta: params.iter().map(|c| c.beta).collect(),
            gamma: params.iter().map(|c| c.gamma).collect(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.extend(&self.beta);
        v.extend(&self.gamma);
        v
    }

    pub fn from_vec(v: &[f64], n_students: usize, n_skills: usize) -> Point {
        assert_eq!(v.len(), n_students + 2 * n_skills);
        Point {
            theta: v[..n_students].to_vec(),
            beta: v[n_students..n_students + n_skills].to_vec(),
            gamma: v[n_students + n_skills..].to_vec(),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn logit(p: &Point, r: &LogRow) -> f64 {
    p.theta[r.student] + p.beta[r.skill.0] + p.gamma[r.skill.0] * r.opportunity as f64
}

pub fn objective(log: &StepLog, point: &Point, lambda: f64) -> f64 {
    let nll: f64 = log
        .rows
        .iter()
        .map(|r| {
            let z = logit(point, r);
            if r.correct {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    let penalty: f64 = point.theta.iter().chain(&point.beta).map(|v| v * v).sum();
    nll + lambda * penalty
}

/// Negative log-likelihood (plus penalty) at the given skill coefficients
/// and per-student proficiencies.
pub fn negative_log_likelihood(log: &StepLog, params: &[SkillCoefficients], theta: &[f64], lambda: f64) -> f64 {
    objective(log, &Point::from_params(params, theta), lambda)
}

/// Gradient, plus the diagonal of the Hessian.
pub fn gradient(log: &StepLog, point: &Point, lambda: f64) -> (Point, Point) {
    let n = point.theta.len();
    let k = point.beta.len();
    let mut g = Point::zeros(n, k);
    let mut h = Point::zeros(n, k);
    for r in &log.rows {
        let p = sigmoid(logit(point, r));
        let resid = p - if r.correct { 1.0 } else { 0.0 };
        let w = p * (1.0 - p);
        let t = r.opportunity as f64;
        let s = r.skill.0;
        g.theta[r.student] += resid;
        g.beta[s] += resid;
        g.gamma[s] += resid * t;
        h.theta[r.student] += w;
        h.beta[s] += w;
        h.gamma[s] += w * t * t;
    }
    for (gi, (hi, &v)) in g.theta.iter_mut().zip(h.theta.iter_mut().zip(&point.theta)) {
        *gi += 2.0 * lambda * v;
        *hi += 2.0 * lambda;
    }
    for (gi, (hi, &v)) in g.beta.iter_mut().zip(h.beta.iter_mut().zip(&point.beta)) {
        *gi += 2.0 * lambda * v;
        *hi += 2.0 * lambda;
    }
    (g, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfmFitResult {
    pub params: AfmParams,
    pub theta_hat: Vec<f64>,
    pub neg_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max_norm: f64,
    pub warnings: Vec<String>,
    /// Objective value after every accepted step, starting at the initial
    /// point.
    pub history: Vec<f64>,
}

impl AfmFitResult {
    pub fn diagnostics(&self, log: &StepLog) -> FitDiagnostics {
        FitDiagnostics {
            converged: self.converged,
            iterations: self.iterations,
            neg_log_likelihood: self.neg_log_likelihood,
            gradient_max_norm: self.gradient_max_norm,
            n_rows: log.rows.len(),
            n_students: log.n_students(),
        }
    }
}

/// Max-norm of the gradient after projection onto the feasible set
/// (`gamma >= 0`), skipping frozen coordinates.
fn projected_max_norm(g: &Point, x: &Point, frozen_gamma: &[bool]) -> f64 {
    let mut m: f64 = 0.0;
    for v in g.theta.iter().chain(&g.beta) {
        m = m.max(v.abs());
    }
    for ((gv, xv), &frozen) in g.gamma.iter().zip(&x.gamma).zip(frozen_gamma) {
        if frozen || (*xv <= 0.0 && *gv > 0.0) {
            continue;
        }
        m = m.max(gv.abs());
    }
    m
}

/// Rounding noise of an objective value summed over many rows.
fn roundoff(f: f64) -> f64 {
    1e-12 * f.abs().max(1.0)
}

fn recenter(x: &mut Point) {
    let n = x.theta.len() as f64;
    let k = x.beta.len() as f64;
    let shift = (x.beta.iter().sum::<f64>() - x.theta.iter().sum::<f64>()) / (n + k);
    x.theta.iter_mut().for_each(|t| *t += shift);
    x.beta.iter_mut().for_each(|b| *b -= shift);
}

/// Newton direction restricted to the free coordinates. `fixed_gamma[k]`
/// pins `gamma_k` (its direction component is zero).
fn newton_direction(log: &StepLog, x: &Point, g: &Point, lambda: f64, fixed_gamma: &[bool]) -> Point {
    let n = x.theta.len();
    let k = x.beta.len();
    let m = 2 * k;
    // Skill coordinates are laid out as [beta_0, gamma_0, beta_1, gamma_1, ...].
    let mut a = vec![2.0 * lambda; n];
    let mut c = vec![0.0; n * m];
    let mut d = vec![0.0; m * m];
    for s in 0..k {
        d[(2 * s) * m + 2 * s] = 2.0 * lambda;
    }
    for r in &log.rows {
        let p = sigmoid(logit(x, r));
        let w = p * (1.0 - p);
        let t = r.opportunity as f64;
        let (b, gm) = (2 * r.skill.0, 2 * r.skill.0 + 1);
        a[r.student] += w;
        c[r.student * m + b] += w;
        c[r.student * m + gm] += w * t;
        d[b * m + b] += w;
        d[b * m + gm] += w * t;
        d[gm * m + b] += w * t;
        d[gm * m + gm] += w * t * t;
    }
    let a = a.iter().map(|v| v.max(1e-12)).collect::<Vec<_>>();

    // Schur complement S = D - C^T A^-1 C and rhs = -g_phi + C^T A^-1 g_theta.
    let mut schur = d;
    let mut rhs = vec![0.0; m];
    for s in 0..k {
        rhs[2 * s] = -g.beta[s];
        rhs[2 * s + 1] = -g.gamma[s];
    }
    for i in 0..n {
        let row = &c[i * m..(i + 1) * m];
        let inv = 1.0 / a[i];
        for (p, &cp) in row.iter().enumerate() {
            if cp == 0.0 {
                continue;
            }
            rhs[p] += cp * inv * g.theta[i];
            for (q, &cq) in row.iter().enumerate() {
                schur[p * m + q] -= cp * inv * cq;
            }
        }
    }
    for (s, &fixed) in fixed_gamma.iter().enumerate() {
        if fixed {
            let j = 2 * s + 1;
            for q in 0..m {
                schur[j * m + q] = 0.0;
                schur[q * m + j] = 0.0;
            }
            schur[j * m + j] = 1.0;
            rhs[j] = 0.0;
        }
    }
    // Tiny ridge keeps the solve defined when lambda = 0.
    for j in 0..m {
        schur[j * m + j] += 1e-12;
    }
    let dphi = solve_dense(schur, rhs, m);

    let mut dir = Point::zeros(n, k);
    for s in 0..k {
        dir.beta[s] = dphi[2 * s];
        dir.gamma[s] = if fixed_gamma[s] { 0.0 } else { dphi[2 * s + 1] };
    }
    for i in 0..n {
        let row = &c[i * m..(i + 1) * m];
        let coupled: f64 = row.iter().zip(&dphi).map(|(cv, dv)| cv * dv).sum();
        dir.theta[i] = (-g.theta[i] - coupled) / a[i];
    }
    dir
}

/// Gaussian elimination with partial pivoting on a row-major `m x m` system.
fn solve_dense(mut mat: Vec<f64>, mut rhs: Vec<f64>, m: usize) -> Vec<f64> {
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| mat[i * m + col].abs().total_cmp(&mat[j * m + col].abs()))
            .unwrap();
        if pivot != col {
            for q in 0..m {
                mat.swap(col * m + q, pivot * m + q);
            }
            rhs.swap(col, pivot);
        }
        let diag = mat[col * m + col];
        if diag.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..m {
            let factor = mat[row * m + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for q in col..m {
                mat[row * m + q] -= factor * mat[col * m + q];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|q| mat[row * m + q] * x[q]).sum();
        let diag = mat[row * m + row];
        x[row] = if diag.abs() < 1e-300 { 0.0 } else { (rhs[row] - tail) / diag };
    }
    x
}

pub fn fit(log: &StepLog, settings: &FitSettings) -> Result<AfmFitResult> {
    if !(settings.lambda >= 0.0 && settings.tol > 0.0) {
        return Err(Error::InvalidParam("fit needs lambda >= 0 and tol > 0".into()));
    }
    log.validate()?;
    let n = log.n_students();
    let k = log.n_skills();

    let mut warnings = Vec::new();
    let mut counts = vec![(0usize, 0usize); k];
    for r in &log.rows {
        if r.correct {
            counts[r.skill.0].0 += 1;
        } else {
            counts[r.skill.0].1 += 1;
        }
    }
    // A skill with only correct (or only incorrect) rows has no finite
    // likelihood optimum; its intercept is held by the penalty and its
    // learning rate is fixed at zero.
    let frozen_gamma: Vec<bool> = counts.iter().map(|&(c, i)| c == 0 || i == 0).collect();
    for (s, &(c, i)) in counts.iter().enumerate() {
        if c == 0 || i == 0 {
            warnings.push(format!(
                "skill {:?} is separable ({} correct, {} incorrect); beta is held by the L2 penalty and gamma fixed at 0",
                log.skills.name(SkillId(s)),
                c,
                i
            ));
        }
    }

    let mut x = Point::zeros(n, k);
    let mut f = objective(log, &x, settings.lambda);
    let mut history = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = f64::INFINITY;

    while iterations < settings.max_iterations {
        let (g, _) = gradient(log, &x, settings.lambda);
        gnorm = projected_max_norm(&g, &x, &frozen_gamma);
        if !gnorm.is_finite() {
            return Err(Error::Fit(format!("non-finite gradient at iteration {iterations}")));
        }
        if gnorm < settings.tol {
            converged = true;
            break;
        }
        // Coordinates sitting on the gamma >= 0 bound and pushed outward
        // stay fixed for this step.
        let fixed: Vec<bool> = (0..k)
            .map(|s| frozen_gamma[s] || (x.gamma[s] <= 0.0 && g.gamma[s] > 0.0))
            .collect();
        let mut d = newton_direction(log, &x, &g, settings.lambda, &fixed);
        let slope: f64 = g.to_vec().iter().zip(d.to_vec()).map(|(a, b)| a * b).sum();
        if slope.is_nan() || slope >= 0.0 {
            // Not a descent direction (numerical trouble); fall back to the
            // steepest descent direction.
            d = Point {
                theta: g.theta.iter().map(|v| -v).collect(),
                beta: g.beta.iter().map(|v| -v).collect(),
                gamma: g.gamma.iter().zip(&fixed).map(|(v, &fx)| if fx { 0.0 } else { -v }).collect(),
            };
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = Point {
                theta: x.theta.iter().zip(&d.theta).map(|(a, b)| a + step * b).collect(),
                beta: x.beta.iter().zip(&d.beta).map(|(a, b)| a + step * b).collect(),
                gamma: x.gamma.iter().zip(&d.gamma).map(|(a, b)| (a + step * b).max(0.0)).collect(),
            };
            let decrease: f64 = x
                .to_vec()
                .iter()
                .zip(trial.to_vec())
                .zip(g.to_vec())
                .map(|((xo, xn), gv)| gv * (xn - xo))
                .sum();
            let f_trial = objective(log, &trial, settings.lambda);
            if f_trial.is_finite() && f_trial <= f + 1e-4 * decrease {
                recenter(&mut trial);
                let f_centered = objective(log, &trial, settings.lambda);
                accepted = Some((trial, f_centered));
                break;
            }
            // Close to the optimum the predicted decrease falls below the
            // rounding noise of the summed objective. Accept a full step
            // there when it stays within that noise and shrinks the gradient.
            if step == 1.0 && f_trial.is_finite() && (f_trial - f).abs() <= roundoff(f) {
                let (gt, _) = gradient(log, &trial, settings.lambda);
                if projected_max_norm(&gt, &trial, &frozen_gamma) < gnorm {
                    recenter(&mut trial);
                    let f_centered = objective(log, &trial, settings.lambda);
                    accepted = Some((trial, f_centered));
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, f_new)) if f_new <= f + roundoff(f) => {
                x = trial;
                f = f_new;
                history.push(f);
            }
            // No further progress is representable.
            _ => break,
        }
        if !f.is_finite() {
            return Err(Error::Fit(format!("objective became non-finite at iteration {iterations}")));
        }
    }
    if !converged {
        let (g, _) = gradient(log, &x, settings.lambda);
        gnorm = projected_max_norm(&g, &x, &frozen_gamma);
        converged = gnorm < settings.tol;
    }

    let theta_mean = x.theta.iter().sum::<f64>() / n as f64;
    let theta_sd = if n > 1 {
        (x.theta.iter().map(|t| (t - theta_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let coefficients = x
        .beta
        .iter()
        .zip(&x.gamma)
        .map(|(&beta, &gamma)| SkillCoefficients { beta, gamma })
        .collect();
    // A single student gives no spread; fall back to unit spread so the
    // parameters remain usable for simulation.
    let theta_sd = if theta_sd > 1e-9 { theta_sd } else { 1.0 };
    let params = AfmParams::new(theta_mean, theta_sd, coefficients)?;
    Ok(AfmFitResult {
        params,
        theta_hat: x.theta,
        neg_log_likelihood: f,
        iterations,
        converged,
        gradient_max_norm: gnorm,
        warnings,
        history,
    })
}

/// Random point for gradient checks.
pub fn random_point<R: Rng + ?Sized>(n_students: usize, n_skills: usize, rng: &mut R) -> Point {
    Point {
        theta: (0..n_students).map(|_| rng.random_range(-2.0..2.0)).collect(),
        beta: (0..n_skills).map(|_| rng.random_range(-2.0..2.0)).collect(),
        gamma: (0..n_skills).map(|_| rng.random_range(0.0..0.5)).collect(),
    }
}
