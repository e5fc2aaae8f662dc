//! Experiment configuration files.
//!
//! A config is a small TOML document. Relative paths resolve against the
//! directory holding the config file. Validation collects every problem it
//! finds, each tagged with the line it came from, instead of stopping at the
//! first one.
//!
//! ```toml
//! pool = "pool_synthetic.json"
//! afm_params = "afm_synthetic.json"
//! regime = "budget"
//! budget = 110
//! selectors = ["mastery_hard"]
//! ff_modes = [false, true]
//! seed = 7
//!
//! [bkt]
//! p_learn = 0.2
//!
//! [bkt.skills."comb-var"]
//! p_learn = 0.3
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::de::DeTable;

use crate::afm::{AfmParams, AfmParamsFile};
use crate::bkt::{BktModel, BktParams};
use crate::error::{ConfigError, Error, Result};
use crate::selectors::SelectorKind;
use crate::session::{Environment, Regime, DEFAULT_STEP_CAP};
use crate::skills::load_pool_file;

pub const DEFAULT_N_STUDENTS: u64 = 10_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

const TOP_KEYS: &[&str] = &[
    "pool",
    "afm_params",
    "n_students",
    "regime",
    "budget",
    "selector",
    "selectors",
    "ff_modes",
    "seed",
    "output_dir",
    "trace",
    "jobs",
    "step_cap",
    "theta",
    "bkt",
];
const THETA_KEYS: &[&str] = &["mean", "sd"];
const BKT_KEYS: &[&str] = &["p_init", "p_learn", "p_guess", "p_slip", "mastery_threshold"];

/// Worker count for the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Jobs {
    Auto,
    Fixed(usize),
}

impl Jobs {
    pub fn resolve(self) -> usize {
        match self {
            Jobs::Fixed(n) => n,
            Jobs::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// BKT parameters for one named skill, with unset fields taken from the
/// config-wide defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillBkt {
    pub skill: String,
    pub params: BktParams,
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pool_path: PathBuf,
    pub afm_params_path: PathBuf,
    pub bkt: BktParams,
    pub bkt_skills: Vec<SkillBkt>,
    pub theta_mean: Option<f64>,
    pub theta_sd: Option<f64>,
    pub n_students: u64,
    pub regime: Regime,
    pub selectors: Vec<SelectorKind>,
    pub ff_modes: Vec<bool>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub trace: bool,
    pub jobs: Jobs,
    pub step_cap: u64,
    /// Paths as written in the file, echoed into results so they do not
    /// depend on where the config lives.
    pub pool_as_written: String,
    pub afm_params_as_written: String,
    /// Hex SHA-256 of the config text.
    pub digest: String,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n_students: Option<u64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub trace: bool,
    pub jobs: Option<usize>,
}

/// Flattened view of a config with every default filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub pool: String,
    pub afm_params: String,
    pub n_students: u64,
    pub regime: Regime,
    pub selectors: Vec<SelectorKind>,
    pub ff_modes: Vec<bool>,
    pub seed: u64,
    pub step_cap: u64,
    pub bkt: BktParams,
    pub bkt_skills: indexmap::IndexMap<String, BktParams>,
    pub theta_mean: Option<f64>,
    pub theta_sd: Option<f64>,
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Validates config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let lines = key_lines(text).map_err(|e| Error::Config(vec![e]))?;
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Config(vec![ConfigError {
                line: e.span().map(|s| line_of(text, s.start)),
                message: e.message().to_string(),
            }])
        })?;
        let mut r = Reader { lines, errors: Vec::new() };
        let cfg = r.config(&table, base);
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        match cfg {
            Some(mut cfg) if r.errors.is_empty() => {
                cfg.digest = digest;
                Ok(cfg)
            }
            _ => Err(Error::Config(r.errors)),
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        let mut errors = Vec::new();
        if let Some(n) = overrides.n_students {
            if n == 0 {
                errors.push(flag_error("--n-students must be at least 1"));
            }
            self.n_students = n;
        }
        if let Some(seed) = overrides.seed {
            self.master_seed = seed;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
        if overrides.trace {
            self.trace = true;
        }
        if let Some(jobs) = overrides.jobs {
            if jobs == 0 {
                errors.push(flag_error("--jobs must be at least 1"));
            }
            self.jobs = Jobs::Fixed(jobs);
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Selector x fast-forward pairs, selectors outermost.
    pub fn conditions(&self) -> Vec<(SelectorKind, bool)> {
        self.selectors
            .iter()
            .flat_map(|&s| self.ff_modes.iter().map(move |&ff| (s, ff)))
            .collect()
    }

    /// Loads the pool and AFM parameters and builds the BKT model.
    pub fn environment(&self) -> Result<Environment> {
        let (skills, pool) = load_pool_file(&self.pool_path)?;
        let file = AfmParamsFile::read(&self.afm_params_path)?;
        let mut afm = AfmParams::from_file(&file, &skills)?;
        if let Some(m) = self.theta_mean {
            afm.theta_mean = m;
        }
        if let Some(sd) = self.theta_sd {
            afm.theta_sd = sd;
        }
        afm.validate()?;
        let mut errors = Vec::new();
        let mut overrides = Vec::new();
        for o in &self.bkt_skills {
            match skills.lookup(&o.skill) {
                Some(id) => overrides.push((id, o.params)),
                None => errors.push(ConfigError {
                    line: o.line,
                    message: format!("[bkt.skills] names unknown skill {:?}", o.skill),
                }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let bkt = BktModel::with_overrides(self.bkt, skills.len(), overrides)?;
        Environment::new(skills, pool, bkt, afm)
    }

    pub fn resolved(&self) -> ResolvedConfig {
        ResolvedConfig {
            pool: self.pool_as_written.clone(),
            afm_params: self.afm_params_as_written.clone(),
            n_students: self.n_students,
            regime: self.regime,
            selectors: self.selectors.clone(),
            ff_modes: self.ff_modes.clone(),
            seed: self.master_seed,
            step_cap: self.step_cap,
            bkt: self.bkt,
            bkt_skills: self.bkt_skills.iter().map(|s| (s.skill.clone(), s.params)).collect(),
            theta_mean: self.theta_mean,
            theta_sd: self.theta_sd,
        }
    }
}

fn flag_error(message: &str) -> ConfigError {
    ConfigError { line: None, message: message.to_string() }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line number of every key path in the document.
fn key_lines(text: &str) -> std::result::Result<HashMap<Vec<String>, usize>, ConfigError> {
    let doc = DeTable::parse(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut out = HashMap::new();
    fn walk(table: &DeTable<'_>, prefix: &mut Vec<String>, text: &str, out: &mut HashMap<Vec<String>, usize>) {
        for (key, value) in table.iter() {
            prefix.push(key.get_ref().to_string());
            out.insert(prefix.clone(), line_of(text, key.span().start));
            if let toml::de::DeValue::Table(t) = value.get_ref() {
                walk(t, prefix, text, out);
            }
            prefix.pop();
        }
    }
    walk(doc.get_ref(), &mut Vec::new(), text, &mut out);
    Ok(out)
}

struct Reader {
    lines: HashMap<Vec<String>, usize>,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn line(&self, path: &[&str]) -> Option<usize> {
        let key: Vec<String> = path.iter().map(|s| s.to_string()).collect();
        self.lines.get(&key).copied()
    }

    fn error(&mut self, path: &[&str], message: impl Into<String>) {
        let line = self.line(path);
        self.errors.push(ConfigError { line, message: message.into() });
    }

    fn unknown_keys(&mut self, table: &toml::Table, prefix: &[&str], known: &[&str]) {
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                let mut path = prefix.to_vec();
                path.push(key);
                let shown = path.join(".");
                self.error(&path, format!("unknown key `{shown}`"));
            }
        }
    }

    fn string(&mut self, table: &toml::Table, path: &[&str]) -> Option<String> {
        match table.get(*path.last().unwrap())? {
            toml::Value::String(s) => Some(s.clone()),
            other => {
                self.error(path, format!("`{}` must be a string, found {}", path.join("."), other.type_str()));
                None
            }
        }
    }

    fn positive_int(&mut self, table: &toml::Table, path: &[&str]) -> Option<u64> {
        match table.get(*path.last().unwrap())? {
            toml::Value::Integer(n) if *n >= 1 => Some(*n as u64),
            toml::Value::Integer(n) => {
                self.error(path, format!("`{}` must be at least 1, got {n}", path.join(".")));
                None
            }
            other => {
                self.error(path, format!("`{}` must be an integer, found {}", path.join("."), other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, table: &toml::Table, path: &[&str]) -> Option<f64> {
        match table.get(*path.last().unwrap())? {
            toml::Value::Float(x) => Some(*x),
            toml::Value::Integer(n) => Some(*n as f64),
            other => {
                self.error(path, format!("`{}` must be a number, found {}", path.join("."), other.type_str()));
                None
            }
        }
    }

    fn path(&mut self, table: &toml::Table, key: &str, base: &Path, required: bool) -> Option<(PathBuf, String)> {
        let Some(raw) = self.string(table, &[key]) else {
            if required && !table.contains_key(key) {
                self.errors.push(ConfigError { line: None, message: format!("missing required key `{key}`") });
            }
            return None;
        };
        let resolved = base.join(&raw);
        if !resolved.is_file() {
            self.error(&[key], format!("`{key}` file {} does not exist", resolved.display()));
            return None;
        }
        Some((resolved, raw))
    }

    fn bkt_block(&mut self, table: &toml::Table, prefix: &[&str], base: BktParams) -> BktParams {
        let mut p = base;
        let fields: [(&str, &mut f64); 5] = [
            ("p_init", &mut p.p_init),
            ("p_learn", &mut p.p_learn),
            ("p_guess", &mut p.p_guess),
            ("p_slip", &mut p.p_slip),
            ("mastery_threshold", &mut p.mastery_threshold),
        ];
        for (name, slot) in fields {
            let mut path = prefix.to_vec();
            path.push(name);
            if let Some(v) = self.float(table, &path) {
                *slot = v;
            }
        }
        if let Err(e) = p.validate() {
            let line = self.line(prefix);
            self.errors.push(ConfigError { line, message: format!("[{}] {e}", prefix.join(".")) });
        }
        p
    }

    fn config(&mut self, t: &toml::Table, base: &Path) -> Option<ExperimentConfig> {
        self.unknown_keys(t, &[], TOP_KEYS);

        let pool = self.path(t, "pool", base, true);
        let afm = self.path(t, "afm_params", base, true);
        let n_students = self.positive_int(t, &["n_students"]).unwrap_or(DEFAULT_N_STUDENTS);
        let step_cap = self.positive_int(t, &["step_cap"]).unwrap_or(DEFAULT_STEP_CAP);
        let budget = self.positive_int(t, &["budget"]);
        let regime = match self.string(t, &["regime"]).map(|s| s.replace(['-', ' '], "_").to_lowercase()) {
            None if t.contains_key("regime") => None,
            None => Some(budget.map_or(Regime::RunToMastery, Regime::StepBudget)),
            Some(s) if s == "budget" => match budget {
                Some(n) => Some(Regime::StepBudget(n)),
                None => {
                    if !t.contains_key("budget") {
                        self.error(&["regime"], "regime \"budget\" needs a `budget` step count");
                    }
                    None
                }
            },
            Some(s) if s == "run_to_mastery" => {
                if t.contains_key("budget") {
                    self.error(&["budget"], "`budget` only applies to regime \"budget\"");
                }
                Some(Regime::RunToMastery)
            }
            Some(s) => {
                self.error(&["regime"], format!("unknown regime {s:?} (expected \"budget\" or \"run_to_mastery\")"));
                None
            }
        };

        let selectors = self.selectors(t);
        let ff_modes = self.ff_modes(t);
        let master_seed = match t.get("seed") {
            None => DEFAULT_SEED,
            Some(toml::Value::Integer(n)) if *n >= 0 => *n as u64,
            Some(_) => {
                self.error(&["seed"], "`seed` must be a non-negative integer");
                DEFAULT_SEED
            }
        };
        let output_dir = base.join(self.string(t, &["output_dir"]).unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into()));
        let trace = match t.get("trace") {
            None => false,
            Some(toml::Value::Boolean(b)) => *b,
            Some(_) => {
                self.error(&["trace"], "`trace` must be true or false");
                false
            }
        };
        let jobs = match t.get("jobs") {
            None => Jobs::Auto,
            Some(toml::Value::String(s)) if s == "auto" => Jobs::Auto,
            Some(toml::Value::Integer(n)) if *n >= 1 => Jobs::Fixed(*n as usize),
            Some(_) => {
                self.error(&["jobs"], "`jobs` must be \"auto\" or a positive integer");
                Jobs::Auto
            }
        };

        let (theta_mean, theta_sd) = match t.get("theta") {
            None => (None, None),
            Some(toml::Value::Table(th)) => {
                self.unknown_keys(th, &["theta"], THETA_KEYS);
                let mean = self.float(th, &["theta", "mean"]);
                let sd = self.float(th, &["theta", "sd"]);
                if let Some(sd) = sd.filter(|sd| sd.is_nan() || *sd <= 0.0) {
                    self.error(&["theta", "sd"], format!("`theta.sd` must be positive, got {sd}"));
                }
                (mean, sd)
            }
            Some(_) => {
                self.error(&["theta"], "`theta` must be a table");
                (None, None)
            }
        };

        let (bkt, bkt_skills) = self.bkt(t);

        let regime = regime?;
        let (pool_path, pool_as_written) = pool?;
        let (afm_params_path, afm_params_as_written) = afm?;
        Some(ExperimentConfig {
            pool_path,
            afm_params_path,
            bkt,
            bkt_skills,
            theta_mean,
            theta_sd,
            n_students,
            regime,
            selectors: selectors?,
            ff_modes: ff_modes?,
            master_seed,
            output_dir,
            trace,
            jobs,
            step_cap,
            pool_as_written,
            afm_params_as_written,
            digest: String::new(),
        })
    }

    fn selectors(&mut self, t: &toml::Table) -> Option<Vec<SelectorKind>> {
        let (key, items): (&str, Vec<toml::Value>) = match (t.get("selector"), t.get("selectors")) {
            (Some(_), Some(_)) => {
                self.error(&["selector"], "give either `selector` or `selectors`, not both");
                return None;
            }
            (Some(v), None) => ("selector", vec![v.clone()]),
            (None, Some(toml::Value::Array(a))) => ("selectors", a.clone()),
            (None, Some(_)) => {
                self.error(&["selectors"], "`selectors` must be a list of selector names");
                return None;
            }
            (None, None) => return Some(SelectorKind::ALL.to_vec()),
        };
        if items.is_empty() {
            self.error(&[key], "`selectors` must not be empty");
            return None;
        }
        let mut out = Vec::new();
        let mut ok = true;
        for item in &items {
            let parsed = item.as_str().ok_or_else(|| format!("selector names must be strings, found {}", item.type_str()));
            match parsed.and_then(|s| s.parse::<SelectorKind>().map_err(|e| e.to_string())) {
                Ok(kind) if out.contains(&kind) => {
                    self.error(&[key], format!("selector {kind} listed twice"));
                    ok = false;
                }
                Ok(kind) => out.push(kind),
                Err(msg) => {
                    self.error(&[key], msg);
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    fn ff_modes(&mut self, t: &toml::Table) -> Option<Vec<bool>> {
        match t.get("ff_modes") {
            None => Some(vec![false, true]),
            Some(toml::Value::Array(a)) => {
                let modes: Option<Vec<bool>> = a.iter().map(|v| v.as_bool()).collect();
                match modes {
                    Some(m) if m.is_empty() => {
                        self.error(&["ff_modes"], "`ff_modes` must not be empty");
                        None
                    }
                    Some(m) if m.len() == 2 && m[0] == m[1] => {
                        self.error(&["ff_modes"], "`ff_modes` lists the same mode twice");
                        None
                    }
                    Some(m) if m.len() > 2 => {
                        self.error(&["ff_modes"], "`ff_modes` has more than two entries");
                        None
                    }
                    Some(m) => Some(m),
                    None => {
                        self.error(&["ff_modes"], "`ff_modes` must be a list of booleans");
                        None
                    }
                }
            }
            Some(_) => {
                self.error(&["ff_modes"], "`ff_modes` must be a list of booleans");
                None
            }
        }
    }

    fn bkt(&mut self, t: &toml::Table) -> (BktParams, Vec<SkillBkt>) {
        let Some(value) = t.get("bkt") else {
            return (BktParams::default(), Vec::new());
        };
        let toml::Value::Table(block) = value else {
            self.error(&["bkt"], "`bkt` must be a table");
            return (BktParams::default(), Vec::new());
        };
        let mut known = BKT_KEYS.to_vec();
        known.push("skills");
        self.unknown_keys(block, &["bkt"], &known);
        let defaults = self.bkt_block(block, &["bkt"], BktParams::default());
        let mut per_skill = Vec::new();
        match block.get("skills") {
            None => {}
            Some(toml::Value::Table(skills)) => {
                for (name, v) in skills {
                    let path = ["bkt", "skills", name.as_str()];
                    let toml::Value::Table(st) = v else {
                        self.error(&path, format!("`bkt.skills.{name}` must be a table"));
                        continue;
                    };
                    self.unknown_keys(st, &path, BKT_KEYS);
                    let params = self.bkt_block(st, &path, defaults);
                    per_skill.push(SkillBkt { skill: name.clone(), params, line: self.line(&path) });
                }
            }
            Some(_) => self.error(&["bkt", "skills"], "`bkt.skills` must be a table of per-skill blocks"),
        }
        (defaults, per_skill)
    }
}
