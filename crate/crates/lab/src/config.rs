//! Experiment configuration: a flat INI-style file, or the same structure
//! as JSON.
//!
//! ```text
//! [model]
//! family = sk
//!
//! [run]
//! engine = exact
//! n_grid = 6, 8, 10, 12
//! beta = 1.0
//! n_samples = 500
//! master_seed = 2024
//!
//! [identity.gg]
//! f = c12
//! beta_interval = 0.5, 1.5
//! ```

use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spinglass_core::identity::{BetaSpec, ReplicaForm, DEFAULT_EPSILONS, MIN_INTERVAL_POINTS};
use spinglass_core::mc::UpdateRule;
use spinglass_core::quench::{Engine, McSettings};
use spinglass_core::{Family, ModelSpec, OverlapMonomial, SpinMonomial};

use crate::error::{LabError, Result};

pub const DEFAULT_OUTPUT_DIR: &str = "spinglass-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSection {
    pub family: Family,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_true")]
    pub periodic: bool,
}

fn default_dimension() -> usize {
    2
}

fn default_true() -> bool {
    true
}

impl ModelSection {
    pub fn at(&self, n_sites: usize) -> spinglass_core::Result<ModelSpec> {
        match self.family {
            Family::Sk => ModelSpec::sk(n_sites),
            Family::Cw => ModelSpec::cw(n_sites),
            Family::Ea => {
                let side = integer_root(n_sites, self.dimension).ok_or_else(|| {
                    spinglass_core::Error::InvalidSpec(format!(
                        "N = {n_sites} is not a {}-th power",
                        self.dimension
                    ))
                })?;
                ModelSpec::ea_with_boundary(self.dimension, side, self.periodic)
            }
        }
    }
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    if d == 0 {
        return None;
    }
    (1..=n).find(|s| s.checked_pow(d as u32) == Some(n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BetaSetting {
    Grid { values: Vec<f64> },
    Interval { lo: f64, hi: f64, points: usize },
}

impl BetaSetting {
    /// Fixed β values; an interval contributes its midpoint.
    pub fn fixed(&self) -> Vec<f64> {
        match self {
            Self::Grid { values } => values.clone(),
            Self::Interval { lo, hi, .. } => vec![0.5 * (lo + hi)],
        }
    }

    /// β specs for identities that accept interval averaging.
    pub fn specs(&self) -> Vec<BetaSpec> {
        match *self {
            Self::Grid { ref values } => values.iter().map(|&b| BetaSpec::fixed(b)).collect(),
            Self::Interval { lo, hi, points } => vec![BetaSpec::Interval { lo, hi, points }],
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Self::Grid { values } => {
                if values.is_empty() {
                    return Err("β grid is empty".into());
                }
                if let Some(b) = values.iter().find(|b| !b.is_finite() || **b < 0.0) {
                    return Err(format!("invalid β {b}"));
                }
            }
            Self::Interval { lo, hi, points } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    return Err(format!("invalid β interval [{lo}, {hi}]"));
                }
                if *points < MIN_INTERVAL_POINTS {
                    return Err(format!("β interval needs at least {MIN_INTERVAL_POINTS} points"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum IdentitySpec {
    Covariance {
        pairs: usize,
    },
    ZeroBeta {},
    AnnealedBound {},
    ClassicalShift {
        lambdas: Vec<f64>,
        f: SpinMonomial,
        sample_index: u64,
    },
    CwFactorization {
        n_grid: Vec<usize>,
    },
    Gg {
        n_replicas: usize,
        f: OverlapMonomial,
    },
    ReplicaEquivalence {
        form: ReplicaForm,
        a: u32,
        b: u32,
    },
    Ultrametricity {
        epsilons: Vec<f64>,
    },
    StabilityDerivative {
        f: OverlapMonomial,
        steps: Vec<f64>,
    },
    TemperatureShift {
        lambda: f64,
    },
    Fluctuation {},
}

pub const IDENTITY_NAMES: [&str; 11] = [
    "covariance",
    "zero-beta",
    "annealed-bound",
    "classical-shift",
    "cw-factorization",
    "gg",
    "replica-equivalence",
    "ultrametricity",
    "stability-derivative",
    "temperature-shift",
    "fluctuation",
];

impl IdentitySpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Covariance { .. } => "covariance",
            Self::ZeroBeta {} => "zero-beta",
            Self::AnnealedBound {} => "annealed-bound",
            Self::ClassicalShift { .. } => "classical-shift",
            Self::CwFactorization { .. } => "cw-factorization",
            Self::Gg { .. } => "gg",
            Self::ReplicaEquivalence { .. } => "replica-equivalence",
            Self::Ultrametricity { .. } => "ultrametricity",
            Self::StabilityDerivative { .. } => "stability-derivative",
            Self::TemperatureShift { .. } => "temperature-shift",
            Self::Fluctuation {} => "fluctuation",
        }
    }

    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "covariance" => Self::Covariance { pairs: 100 },
            "zero-beta" => Self::ZeroBeta {},
            "annealed-bound" => Self::AnnealedBound {},
            "classical-shift" => Self::ClassicalShift {
                lambdas: vec![0.1, 1.0],
                f: SpinMonomial::first(2),
                sample_index: 0,
            },
            "cw-factorization" => Self::CwFactorization {
                n_grid: (4..=14).map(|k| 1 << k).collect(),
            },
            "gg" => Self::Gg {
                n_replicas: 2,
                f: OverlapMonomial::pair(1, 2, 1).expect("c12"),
            },
            "replica-equivalence" => Self::ReplicaEquivalence {
                form: ReplicaForm::Shared,
                a: 1,
                b: 1,
            },
            "ultrametricity" => Self::Ultrametricity {
                epsilons: DEFAULT_EPSILONS.to_vec(),
            },
            "stability-derivative" => Self::StabilityDerivative {
                f: OverlapMonomial::pair(1, 2, 1).expect("c12"),
                steps: vec![1e-2, 1e-3],
            },
            "temperature-shift" => Self::TemperatureShift { lambda: 2.0 },
            "fluctuation" => Self::Fluctuation {},
            _ => return None,
        })
    }

    /// Whether the identity enumerates or samples Gibbs measures of the
    /// configured model (and so is bound by engine capacity).
    pub fn uses_ensemble(&self) -> bool {
        !matches!(self, Self::Covariance { .. } | Self::CwFactorization { .. })
    }

    /// Replicas needed by overlap observables (0 if none).
    pub fn replicas(&self) -> usize {
        match self {
            Self::Gg { n_replicas, .. } => n_replicas + 1,
            Self::ReplicaEquivalence { form, .. } => match form {
                ReplicaForm::Shared => 3,
                ReplicaForm::Disjoint => 4,
            },
            Self::Ultrametricity { .. } => 3,
            Self::StabilityDerivative { f, .. } => f.arity(),
            Self::ZeroBeta {} => 2,
            _ => 0,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Self::Covariance { pairs } if *pairs == 0 => Err("pairs must be positive".into()),
            Self::ClassicalShift { lambdas, .. } if lambdas.is_empty() => {
                Err("lambdas must be non-empty".into())
            }
            Self::CwFactorization { n_grid } => {
                if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] < 4 {
                    Err("n_grid must be strictly increasing, at least 3 sizes, N ≥ 4".into())
                } else {
                    Ok(())
                }
            }
            Self::Gg { n_replicas, f } => {
                if *n_replicas == 0 || f.arity() > *n_replicas {
                    Err(format!("f = {f} must use replicas 1..{n_replicas}"))
                } else {
                    Ok(())
                }
            }
            Self::ReplicaEquivalence { a, b, .. } => {
                if (1..=2).contains(a) && (1..=2).contains(b) {
                    Ok(())
                } else {
                    Err("a and b must be 1 or 2".into())
                }
            }
            Self::Ultrametricity { epsilons } if epsilons.is_empty() => {
                Err("epsilons must be non-empty".into())
            }
            Self::StabilityDerivative { steps, .. } => {
                if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
                    Err("steps must be positive".into())
                } else {
                    Ok(())
                }
            }
            Self::TemperatureShift { lambda } if !(*lambda >= 0.0) => {
                Err(format!("λ = {lambda} makes the shifted β imaginary"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityEntry {
    #[serde(flatten)]
    pub spec: IdentitySpec,
    /// Overrides the run-level β setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaSetting>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub engine: EngineKind,
    pub beta: BetaSetting,
    pub n_grid: Vec<usize>,
    pub n_samples: usize,
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// β values skipped by every identity (e.g. a critical point).
    #[serde(default)]
    pub exclude_betas: Vec<f64>,
    #[serde(default)]
    pub mc: McSettings,
    pub identities: Vec<IdentityEntry>,
}

fn default_output_dir() -> String {
    DEFAULT_OUTPUT_DIR.into()
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn engine(&self) -> Engine {
        match self.engine {
            EngineKind::Exact => Engine::exact(),
            EngineKind::Mc => Engine::Mc(self.mc.clone()),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err("n_grid must be non-empty and strictly increasing".into());
        }
        for &n in &self.n_grid {
            self.model.at(n).map_err(|e| e.to_string())?;
        }
        self.beta.validate()?;
        if self.n_samples == 0 {
            return Err("n_samples must be positive".into());
        }
        if self.workers == 0 {
            return Err("workers must be positive".into());
        }
        if self.identities.is_empty() {
            return Err("no identities requested".into());
        }
        if self.mc.n_clones < 3 || self.mc.rungs == 0 || self.mc.sweeps_measure == 0 {
            return Err("mc needs clones ≥ 3, rungs ≥ 1 and sweeps_measure ≥ 1".into());
        }
        for entry in &self.identities {
            entry.spec.validate()?;
            if let Some(b) = &entry.beta {
                b.validate()?;
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let name = path.display().to_string();
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            Self::from_json(&text, &name)
        } else {
            Self::from_ini(&text, &name)
        }
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| LabError::Config {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|message| LabError::ConfigFile {
            path: path.into(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_ini(text: &str, path: &str) -> Result<Self> {
        IniParser { path }.parse(text)
    }

    /// Canonical INI text; every field is written explicitly.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let model = &self.model;
        let _ = writeln!(out, "[model]\nfamily = {}", model.family.name());
        let _ = writeln!(out, "dimension = {}\nperiodic = {}\n", model.dimension, model.periodic);
        let _ = writeln!(out, "[run]");
        let _ = writeln!(
            out,
            "engine = {}",
            match self.engine {
                EngineKind::Exact => "exact",
                EngineKind::Mc => "mc",
            }
        );
        let _ = writeln!(out, "n_grid = {}", join(&self.n_grid));
        write_beta(&mut out, &self.beta);
        let _ = writeln!(out, "n_samples = {}", self.n_samples);
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let _ = writeln!(out, "output_dir = {}", self.output_dir);
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "exclude_betas = {}\n", join(&self.exclude_betas));
        let mc = &self.mc;
        let _ = writeln!(out, "[mc]");
        let _ = writeln!(out, "beta_min = {}\nrungs = {}\nclones = {}", mc.beta_min, mc.rungs, mc.n_clones);
        let _ = writeln!(out, "sweeps_burnin = {}\nsweeps_measure = {}", mc.sweeps_burnin, mc.sweeps_measure);
        let _ = writeln!(out, "exchange_period = {}\nbatches = {}", mc.exchange_period, mc.n_batches);
        let _ = writeln!(
            out,
            "tune_ladder = {}\nupdate = {}",
            mc.tune_ladder,
            match mc.update {
                UpdateRule::Metropolis => "metropolis",
                UpdateRule::HeatBath => "heat-bath",
            }
        );
        let _ = writeln!(
            out,
            "replace_rejected = {}\nmax_replacements = {}",
            mc.replace_rejected, mc.max_replacements
        );
        for entry in &self.identities {
            let _ = writeln!(out, "\n[identity.{}]", entry.spec.name());
            match &entry.spec {
                IdentitySpec::Covariance { pairs } => {
                    let _ = writeln!(out, "pairs = {pairs}");
                }
                IdentitySpec::ClassicalShift {
                    lambdas,
                    f,
                    sample_index,
                } => {
                    let _ = writeln!(out, "lambdas = {}\nf = {f}\nsample_index = {sample_index}", join(lambdas));
                }
                IdentitySpec::CwFactorization { n_grid } => {
                    let _ = writeln!(out, "n_grid = {}", join(n_grid));
                }
                IdentitySpec::Gg { n_replicas, f } => {
                    let _ = writeln!(out, "n_replicas = {n_replicas}\nf = {f}");
                }
                IdentitySpec::ReplicaEquivalence { form, a, b } => {
                    let _ = writeln!(out, "form = {}\na = {a}\nb = {b}", form.label());
                }
                IdentitySpec::Ultrametricity { epsilons } => {
                    let _ = writeln!(out, "epsilons = {}", join(epsilons));
                }
                IdentitySpec::StabilityDerivative { f, steps } => {
                    let _ = writeln!(out, "f = {f}\nsteps = {}", join(steps));
                }
                IdentitySpec::TemperatureShift { lambda } => {
                    let _ = writeln!(out, "lambda = {lambda}");
                }
                IdentitySpec::ZeroBeta {} | IdentitySpec::AnnealedBound {} | IdentitySpec::Fluctuation {} => {}
            }
            if let Some(b) = &entry.beta {
                write_beta(&mut out, b);
            }
        }
        out
    }
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn write_beta(out: &mut String, b: &BetaSetting) {
    match b {
        BetaSetting::Grid { values } => {
            let _ = writeln!(out, "beta = {}", join(values));
        }
        BetaSetting::Interval { lo, hi, points } => {
            let _ = writeln!(out, "beta_interval = {lo}, {hi}\nbeta_points = {points}");
        }
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

struct IniParser<'a> {
    path: &'a str,
}

impl IniParser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> LabError {
        LabError::Config {
            path: self.path.into(),
            line,
            message: message.into(),
        }
    }

    fn sections(&self, text: &str) -> Result<Vec<Section>> {
        let mut out: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.split_once(" #").map_or(raw, |(head, _)| head).trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| self.err(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(self.err(line, "empty section name"));
                }
                if !name.starts_with("identity.") && out.iter().any(|s| s.name == name) {
                    return Err(self.err(line, format!("duplicate section [{name}]")));
                }
                out.push(Section {
                    name: name.into(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| self.err(line, format!("expected `key = value`, found {t:?}")))?;
            let section = out
                .last_mut()
                .ok_or_else(|| self.err(line, "key outside of any section"))?;
            let key = k.trim();
            if section.entries.iter().any(|e| e.key == key) {
                return Err(self.err(line, format!("duplicate key `{key}`")));
            }
            section.entries.push(Entry {
                key: key.into(),
                value: v.trim().into(),
                line,
            });
        }
        Ok(out)
    }

    fn parse(&self, text: &str) -> Result<ExperimentConfig> {
        let mut model = None;
        let mut run = None;
        let mut mc = McSettings::default();
        let mut identities = Vec::new();
        let mut identity_lines = Vec::new();
        for sec in self.sections(text)? {
            let mut s = Reader {
                p: self,
                sec,
                used: Vec::new(),
            };
            let section = s.sec.name.clone();
            match section.as_str() {
                "model" => model = Some(self.model(&mut s)?),
                "run" => run = Some((self.run(&mut s)?, s.sec.line)),
                "mc" => mc = self.mc(&mut s)?,
                name => {
                    let Some(id) = name.strip_prefix("identity.") else {
                        return Err(self.err(s.sec.line, format!("unknown section [{name}]")));
                    };
                    identity_lines.push(s.sec.line);
                    identities.push(self.identity(&mut s, id)?);
                }
            }
            s.finish()?;
        }
        let model = model.ok_or_else(|| self.err(1, "missing [model] section"))?;
        let (run, run_line) = run.ok_or_else(|| self.err(1, "missing [run] section"))?;
        let n_samples = run.n_samples.unwrap_or(match run.engine {
            EngineKind::Exact => 500,
            EngineKind::Mc => 100,
        });
        let cfg = ExperimentConfig {
            model,
            engine: run.engine,
            beta: run.beta,
            n_grid: run.n_grid,
            n_samples,
            master_seed: run.master_seed,
            output_dir: run.output_dir,
            workers: run.workers,
            exclude_betas: run.exclude_betas,
            mc,
            identities,
        };
        for (entry, &line) in cfg.identities.iter().zip(&identity_lines) {
            entry.spec.validate().map_err(|m| self.err(line, m))?;
        }
        if cfg.identities.is_empty() {
            return Err(self.err(1, "no [identity.*] sections"));
        }
        cfg.validate().map_err(|m| self.err(run_line, m))?;
        Ok(cfg)
    }

    fn model(&self, s: &mut Reader) -> Result<ModelSection> {
        let family = s.required("family", |v| match v {
            "sk" => Ok(Family::Sk),
            "ea" => Ok(Family::Ea),
            "cw" => Ok(Family::Cw),
            _ => Err(format!("unknown family {v:?} (sk, ea, cw)")),
        })?;
        Ok(ModelSection {
            family,
            dimension: s.value("dimension")?.unwrap_or(2),
            periodic: s.value("periodic")?.unwrap_or(true),
        })
    }

    fn run(&self, s: &mut Reader) -> Result<RunSection> {
        let engine = s
            .with("engine", |v| match v {
                "exact" => Ok(EngineKind::Exact),
                "mc" => Ok(EngineKind::Mc),
                _ => Err(format!("unknown engine {v:?} (exact, mc)")),
            })?
            .unwrap_or(EngineKind::Exact);
        let n_grid = s.required("n_grid", parse_list)?;
        let beta = s
            .beta()?
            .ok_or_else(|| self.err(s.sec.line, "missing `beta` or `beta_interval`"))?;
        Ok(RunSection {
            engine,
            n_grid,
            beta,
            n_samples: s.value("n_samples")?,
            master_seed: s.required("master_seed", |v| v.parse::<u64>().map_err(|e| e.to_string()))?,
            output_dir: s.with("output_dir", |v| Ok(v.to_string()))?.unwrap_or_else(default_output_dir),
            workers: s.value("workers")?.unwrap_or(1),
            exclude_betas: s.with("exclude_betas", parse_list)?.unwrap_or_default(),
        })
    }

    fn mc(&self, s: &mut Reader) -> Result<McSettings> {
        let d = McSettings::default();
        Ok(McSettings {
            beta_min: s.value("beta_min")?.unwrap_or(d.beta_min),
            rungs: s.value("rungs")?.unwrap_or(d.rungs),
            n_clones: s.value("clones")?.unwrap_or(d.n_clones),
            sweeps_burnin: s.value("sweeps_burnin")?.unwrap_or(d.sweeps_burnin),
            sweeps_measure: s.value("sweeps_measure")?.unwrap_or(d.sweeps_measure),
            exchange_period: s.value("exchange_period")?.unwrap_or(d.exchange_period),
            n_batches: s.value("batches")?.unwrap_or(d.n_batches),
            tune_ladder: s.value("tune_ladder")?.unwrap_or(d.tune_ladder),
            update: s
                .with("update", |v| match v {
                    "metropolis" => Ok(UpdateRule::Metropolis),
                    "heat-bath" => Ok(UpdateRule::HeatBath),
                    _ => Err(format!("unknown update {v:?} (metropolis, heat-bath)")),
                })?
                .unwrap_or(d.update),
            replace_rejected: s.value("replace_rejected")?.unwrap_or(d.replace_rejected),
            max_replacements: s.value("max_replacements")?.unwrap_or(d.max_replacements),
        })
    }

    fn identity(&self, s: &mut Reader, name: &str) -> Result<IdentityEntry> {
        let spec = IdentitySpec::default_for(name).ok_or_else(|| {
            self.err(
                s.sec.line,
                format!("unknown identity {name:?}; known: {}", IDENTITY_NAMES.join(", ")),
            )
        })?;
        let spec = match spec {
            IdentitySpec::Covariance { pairs } => IdentitySpec::Covariance {
                pairs: s.value("pairs")?.unwrap_or(pairs),
            },
            IdentitySpec::ClassicalShift {
                lambdas,
                f,
                sample_index,
            } => IdentitySpec::ClassicalShift {
                lambdas: s.with("lambdas", parse_list)?.unwrap_or(lambdas),
                f: s.with("f", |v| SpinMonomial::parse(v).map_err(|e| e.to_string()))?.unwrap_or(f),
                sample_index: s.value("sample_index")?.unwrap_or(sample_index),
            },
            IdentitySpec::CwFactorization { n_grid } => IdentitySpec::CwFactorization {
                n_grid: s.with("n_grid", parse_list)?.unwrap_or(n_grid),
            },
            IdentitySpec::Gg { n_replicas, f } => IdentitySpec::Gg {
                n_replicas: s.value("n_replicas")?.unwrap_or(n_replicas),
                f: s.with("f", parse_overlap)?.unwrap_or(f),
            },
            IdentitySpec::ReplicaEquivalence { form, a, b } => IdentitySpec::ReplicaEquivalence {
                form: s.with("form", |v| ReplicaForm::parse(v).map_err(|e| e.to_string()))?.unwrap_or(form),
                a: s.value("a")?.unwrap_or(a),
                b: s.value("b")?.unwrap_or(b),
            },
            IdentitySpec::Ultrametricity { epsilons } => IdentitySpec::Ultrametricity {
                epsilons: s.with("epsilons", parse_list)?.unwrap_or(epsilons),
            },
            IdentitySpec::StabilityDerivative { f, steps } => IdentitySpec::StabilityDerivative {
                f: s.with("f", parse_overlap)?.unwrap_or(f),
                steps: s.with("steps", parse_list)?.unwrap_or(steps),
            },
            IdentitySpec::TemperatureShift { lambda } => IdentitySpec::TemperatureShift {
                lambda: s.value("lambda")?.unwrap_or(lambda),
            },
            other => other,
        };
        Ok(IdentityEntry {
            spec,
            beta: s.beta()?,
        })
    }
}

struct RunSection {
    engine: EngineKind,
    n_grid: Vec<usize>,
    beta: BetaSetting,
    n_samples: Option<usize>,
    master_seed: u64,
    output_dir: String,
    workers: usize,
    exclude_betas: Vec<f64>,
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|e| format!("{x:?}: {e}")))
        .collect()
}

fn parse_overlap(v: &str) -> std::result::Result<OverlapMonomial, String> {
    OverlapMonomial::parse(v).map_err(|e| e.to_string())
}

struct Reader<'a> {
    p: &'a IniParser<'a>,
    sec: Section,
    used: Vec<String>,
}

impl Reader<'_> {
    fn with<T>(
        &mut self,
        key: &str,
        parse: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        let Some(e) = self.sec.entries.iter().find(|e| e.key == key) else {
            return Ok(None);
        };
        self.used.push(key.into());
        parse(&e.value)
            .map(Some)
            .map_err(|m| self.p.err(e.line, format!("`{key}`: {m}")))
    }

    fn value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.with(key, |v| v.parse::<T>().map_err(|e| format!("{v:?}: {e}")))
    }

    fn required<T>(
        &mut self,
        key: &str,
        parse: impl FnOnce(&str) -> std::result::Result<T, String>,
    ) -> Result<T> {
        let line = self.sec.line;
        let name = self.sec.name.clone();
        self.with(key, parse)?
            .ok_or_else(|| self.p.err(line, format!("[{name}] is missing required key `{key}`")))
    }

    fn beta(&mut self) -> Result<Option<BetaSetting>> {
        let grid = self.with("beta", parse_list::<f64>)?;
        let interval = self.with("beta_interval", parse_list::<f64>)?;
        let points = self.value::<usize>("beta_points")?;
        let line = self.sec.line;
        match (grid, interval) {
            (Some(_), Some(_)) => Err(self.p.err(line, "give either `beta` or `beta_interval`, not both")),
            (Some(values), None) => {
                if points.is_some() {
                    return Err(self.p.err(line, "`beta_points` needs `beta_interval`"));
                }
                Ok(Some(BetaSetting::Grid { values }))
            }
            (None, Some(iv)) => match iv.as_slice() {
                &[lo, hi] => Ok(Some(BetaSetting::Interval {
                    lo,
                    hi,
                    points: points.unwrap_or(MIN_INTERVAL_POINTS),
                })),
                _ => Err(self.p.err(line, "`beta_interval` takes two values `lo, hi`")),
            },
            (None, None) => {
                if points.is_some() {
                    return Err(self.p.err(line, "`beta_points` needs `beta_interval`"));
                }
                Ok(None)
            }
        }
    }

    fn finish(self) -> Result<()> {
        match self.sec.entries.iter().find(|e| !self.used.contains(&e.key)) {
            Some(e) => Err(self.p.err(
                e.line,
                format!("unknown key `{}` in [{}]", e.key, self.sec.name),
            )),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
[model]
family = cw

[run]
n_grid = 8
beta = 0.7
master_seed = 1

[identity.classical-shift]
lambdas = 0.5
";

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_ini(SAMPLE, "t.ini").unwrap();
        assert_eq!(cfg.n_samples, 500);
        assert_eq!(cfg.model.family, Family::Cw);
        assert!(matches!(
            &cfg.identities[0].spec,
            IdentitySpec::ClassicalShift { lambdas, .. } if lambdas == &[0.5]
        ));
    }

    #[test]
    fn round_trips() {
        let cfg = ExperimentConfig::from_ini(SAMPLE, "t.ini").unwrap();
        let again = ExperimentConfig::from_ini(&cfg.to_ini(), "t.ini").unwrap();
        assert_eq!(cfg, again);
        let json = ExperimentConfig::from_json(&cfg.to_json(), "t.json").unwrap();
        assert_eq!(cfg, json);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = SAMPLE.replace("lambdas = 0.5", "lambdas = 0.5\nbogus = 3");
        let e = ExperimentConfig::from_ini(&bad, "t.ini").unwrap_err();
        assert_eq!(e.to_string(), "t.ini:11: unknown key `bogus` in [identity.classical-shift]");
        let bad = SAMPLE.replace("master_seed = 1\n", "");
        let e = ExperimentConfig::from_ini(&bad, "t.ini").unwrap_err();
        assert!(e.to_string().contains("master_seed"), "{e}");
        let bad = SAMPLE.replace("classical-shift", "no-such-identity");
        let e = ExperimentConfig::from_ini(&bad, "t.ini").unwrap_err();
        assert!(e.to_string().starts_with("t.ini:9:"), "{e}");
        assert_eq!(e.exit_code(), 64);
    }

    #[test]
    fn ea_sizes_must_be_powers() {
        let m = ModelSection {
            family: Family::Ea,
            dimension: 2,
            periodic: true,
        };
        assert_eq!(m.at(16).unwrap().n_sites, 16);
        assert!(m.at(8).is_err());
    }
}
