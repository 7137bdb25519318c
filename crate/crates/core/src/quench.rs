//! Disorder averages over independent coupling realizations.
//!
//! Realization `s` is seeded by `(master_seed, s)`. Per-sample values are
//! gathered in index order and reduced with compensated sums, so the result
//! does not depend on how an [`Executor`] schedules the work.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{
    overlap_triple_distribution_with, replica_expectation, Capacity, EnergyTable, GibbsEnsemble,
    MomentPath, OverlapKernel,
};
use crate::mc::{diagnostics, geometric_ladder, run_sampler, OverlapSampleSet, SamplerConfig, UpdateRule};
use crate::model::{sample_couplings, Beta, CouplingRealization, Family, ModelSpec};
use crate::monomial::{OverlapMonomial, ReplicaObservable, SpinMonomial};
use crate::numeric::{column_mean, mean_stderr};
use crate::rng::SeedLabel;

/// Runs independent jobs `0..n` and returns their results in index order.
pub trait Executor: Sync {
    fn workers(&self) -> usize;
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// In-thread executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl Executor for Serial {
    fn workers(&self) -> usize {
        1
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n).map(f).collect()
    }
}

/// Evaluates `f` on every sample index in `range`; the first error in index
/// order wins.
pub fn per_sample<E, T, F>(exec: &E, range: Range<u64>, f: F) -> Result<Vec<T>>
where
    E: Executor + ?Sized,
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let start = range.start;
    let n = range.end.saturating_sub(start) as usize;
    exec.map(n, |k| f(start + k as u64)).into_iter().collect()
}

/// Disorder-averaged value with its across-realization standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchedEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<f64>>,
}

impl QuenchedEstimate {
    pub fn from_samples(values: Vec<f64>, retain: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientSamples {
                needed: 1,
                available: 0,
            });
        }
        let (mean, stderr) = mean_stderr(&values);
        Ok(Self {
            mean,
            stderr,
            n_samples: values.len(),
            per_sample: retain.then_some(values),
        })
    }

    pub fn with_stderr(mean: f64, stderr: f64, n_samples: usize) -> Self {
        Self {
            mean,
            stderr,
            n_samples,
            per_sample: None,
        }
    }

    pub fn without_samples(mut self) -> Self {
        self.per_sample = None;
        self
    }
}

/// Monte Carlo settings shared by every realization; the ladder runs
/// geometrically from `beta_min` to the requested β.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub beta_min: f64,
    pub rungs: usize,
    pub n_clones: usize,
    pub sweeps_burnin: u64,
    pub sweeps_measure: u64,
    pub exchange_period: u64,
    pub n_batches: usize,
    pub tune_ladder: bool,
    pub update: UpdateRule,
    /// Redraw realizations whose chains fail the clone-symmetry diagnostics.
    pub replace_rejected: bool,
    pub max_replacements: u32,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            beta_min: 0.2,
            rungs: 8,
            n_clones: 4,
            sweeps_burnin: 2_000,
            sweeps_measure: 20_000,
            exchange_period: 1,
            n_batches: 16,
            tune_ladder: false,
            update: UpdateRule::Metropolis,
            replace_rejected: true,
            max_replacements: 3,
        }
    }
}

impl McSettings {
    pub fn config(&self, beta: f64, seed_label: SeedLabel) -> SamplerConfig {
        SamplerConfig {
            beta_ladder: geometric_ladder(self.beta_min, beta, self.rungs),
            n_clones: self.n_clones,
            sweeps_burnin: self.sweeps_burnin,
            sweeps_measure: self.sweeps_measure,
            exchange_period: self.exchange_period,
            n_batches: self.n_batches,
            tune_ladder: self.tune_ladder,
            update: self.update,
            seed_label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Exact(Capacity),
    Mc(McSettings),
}

impl Engine {
    pub fn exact() -> Self {
        Self::Exact(Capacity::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact(_) => "exact",
            Self::Mc(_) => "mc",
        }
    }
}

/// Start of the sample-index range used for replacement realizations.
pub const REPLACEMENT_BASE: u64 = 1 << 48;
const REPLACEMENT_SLOTS: u64 = 64;

pub fn replacement_index(sample: u64, attempt: u32) -> u64 {
    REPLACEMENT_BASE + sample * REPLACEMENT_SLOTS + attempt as u64
}

/// Thermal moments of one realization at several β values.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMoments {
    /// Sample index actually used (differs after a replacement).
    pub sample_index: u64,
    /// `values[b][k]`: observable `k` at β number `b`.
    pub values: Vec<Vec<f64>>,
}

/// Weighted overlap triples `([c12, c23, c31], mass)` of one realization.
pub type TripleLaw = Vec<([f64; 3], f64)>;

/// Per-realization thermal expectations of replica observables.
pub trait MomentSource: Sync {
    fn model(&self) -> &ModelSpec;
    fn engine_name(&self) -> &'static str;
    fn moments(&self, sample: u64, betas: &[f64], obs: &[ReplicaObservable]) -> Result<SampleMoments>;
    fn triples(&self, sample: u64, beta: f64) -> Result<TripleLaw>;
}

fn max_power(obs: &[ReplicaObservable]) -> u32 {
    obs.iter().map(|o| o.monomial.max_power()).max().unwrap_or(0).max(1)
}

/// Exact enumeration over all `2^N` configurations per realization.
#[derive(Clone, Debug)]
pub struct ExactSource {
    pub model: ModelSpec,
    pub master_seed: u64,
    pub capacity: Capacity,
    pub path: MomentPath,
}

impl ExactSource {
    pub fn new(model: ModelSpec, master_seed: u64) -> Self {
        Self {
            model,
            master_seed,
            capacity: Capacity::default(),
            path: MomentPath::Spectral,
        }
    }

    pub fn realization(&self, sample: u64) -> Result<CouplingRealization> {
        sample_couplings(&self.model, SeedLabel::new(self.master_seed, sample))
    }

    pub fn table(&self, sample: u64) -> Result<EnergyTable> {
        EnergyTable::enumerate_with(&self.realization(sample)?, &self.capacity)
    }

    fn check_pairs(&self, obs: &[ReplicaObservable]) -> Result<()> {
        let n = self.model.n_sites;
        if obs.iter().any(|o| o.monomial.arity() >= 2) && n > self.capacity.pairs {
            return Err(Error::Capacity {
                engine: "exact-pairs",
                n_sites: n,
                limit: self.capacity.pairs,
            });
        }
        Ok(())
    }
}

/// Moments of every observable in every ensemble built from `table`.
pub fn table_moments(
    table: &EnergyTable,
    betas: &[f64],
    obs: &[ReplicaObservable],
    path: MomentPath,
) -> Result<Vec<Vec<f64>>> {
    let kernel = OverlapKernel::new(&table.model, max_power(obs))?;
    betas
        .iter()
        .map(|&b| {
            let g = GibbsEnsemble::new(table, Beta::signed(b));
            obs.iter()
                .map(|o| replica_expectation(&g, &kernel, o, path))
                .collect()
        })
        .collect()
}

impl MomentSource for ExactSource {
    fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn engine_name(&self) -> &'static str {
        "exact"
    }

    fn moments(&self, sample: u64, betas: &[f64], obs: &[ReplicaObservable]) -> Result<SampleMoments> {
        for &b in betas {
            Beta::new(b)?;
        }
        self.check_pairs(obs)?;
        let table = self.table(sample)?;
        Ok(SampleMoments {
            sample_index: sample,
            values: table_moments(&table, betas, obs, self.path)?,
        })
    }

    fn triples(&self, sample: u64, beta: f64) -> Result<TripleLaw> {
        let table = self.table(sample)?;
        let g = GibbsEnsemble::new(&table, Beta::new(beta)?);
        let kernel = OverlapKernel::new(&self.model, 1)?;
        let hist = overlap_triple_distribution_with(&g, &kernel, &self.capacity)?;
        Ok(hist
            .joint
            .iter()
            .map(|j| ([j.c12.value(), j.c23.value(), j.c31.value()], j.mass))
            .collect())
    }
}

fn sample_set_moments(set: &OverlapSampleSet, obs: &[ReplicaObservable]) -> Result<Vec<f64>> {
    obs.iter()
        .map(|o| {
            if !o.insertions.is_empty() {
                return Err(Error::Unsupported(
                    "energy insertions need the exact engine".into(),
                ));
            }
            Ok(column_mean(&set.monomial_series(&o.monomial)?))
        })
        .collect()
}

fn sample_set_triples(set: &OverlapSampleSet) -> Result<TripleLaw> {
    if set.n_clones < 3 {
        return Err(Error::InvalidSpec("triples need three clones".into()));
    }
    let (p12, p23, p31) = (set.pair_index(0, 1), set.pair_index(1, 2), set.pair_index(0, 2));
    let mass = 1.0 / set.n_samples() as f64;
    Ok((0..set.n_samples())
        .map(|i| {
            let r = set.row(i);
            ([r[p12], r[p23], r[p31]], mass)
        })
        .collect())
}

/// Parallel-tempering estimates per realization.
#[derive(Clone, Debug)]
pub struct McSource {
    pub model: ModelSpec,
    pub master_seed: u64,
    pub settings: McSettings,
}

impl McSource {
    pub fn new(model: ModelSpec, master_seed: u64, settings: McSettings) -> Self {
        Self {
            model,
            master_seed,
            settings,
        }
    }

    /// Sampler runs at each β for realization `sample`, redrawing rejected
    /// realizations from the replacement range.
    pub fn sample_sets(&self, sample: u64, betas: &[f64]) -> Result<(u64, Vec<OverlapSampleSet>)> {
        let mut attempt = 0;
        loop {
            let index = if attempt == 0 {
                sample
            } else {
                replacement_index(sample, attempt - 1)
            };
            let label = SeedLabel::new(self.master_seed, index);
            let real = sample_couplings(&self.model, label)?;
            let sets = betas
                .iter()
                .map(|&b| run_sampler(&real, &self.settings.config(b, label)))
                .collect::<Result<Vec<_>>>()?;
            let accepted = !self.settings.replace_rejected
                || attempt >= self.settings.max_replacements
                || sets
                    .iter()
                    .map(diagnostics)
                    .collect::<Result<Vec<_>>>()?
                    .iter()
                    .all(|d| d.exchangeable);
            if accepted {
                return Ok((index, sets));
            }
            attempt += 1;
        }
    }
}

impl MomentSource for McSource {
    fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn engine_name(&self) -> &'static str {
        "mc"
    }

    fn moments(&self, sample: u64, betas: &[f64], obs: &[ReplicaObservable]) -> Result<SampleMoments> {
        let (index, sets) = self.sample_sets(sample, betas)?;
        Ok(SampleMoments {
            sample_index: index,
            values: sets
                .iter()
                .map(|s| sample_set_moments(s, obs))
                .collect::<Result<_>>()?,
        })
    }

    fn triples(&self, sample: u64, beta: f64) -> Result<TripleLaw> {
        let (_, sets) = self.sample_sets(sample, &[beta])?;
        sample_set_triples(&sets[0])
    }
}

/// Overlap samples from an arbitrary generator, for synthetic checks.
pub struct SyntheticSource<F> {
    pub model: ModelSpec,
    pub generate: F,
}

impl<F> SyntheticSource<F>
where
    F: Fn(u64, f64) -> Result<OverlapSampleSet> + Sync,
{
    pub fn new(model: ModelSpec, generate: F) -> Self {
        Self { model, generate }
    }
}

impl<F> MomentSource for SyntheticSource<F>
where
    F: Fn(u64, f64) -> Result<OverlapSampleSet> + Sync,
{
    fn model(&self) -> &ModelSpec {
        &self.model
    }

    fn engine_name(&self) -> &'static str {
        "synthetic"
    }

    fn moments(&self, sample: u64, betas: &[f64], obs: &[ReplicaObservable]) -> Result<SampleMoments> {
        Ok(SampleMoments {
            sample_index: sample,
            values: betas
                .iter()
                .map(|&b| sample_set_moments(&(self.generate)(sample, b)?, obs))
                .collect::<Result<_>>()?,
        })
    }

    fn triples(&self, sample: u64, beta: f64) -> Result<TripleLaw> {
        sample_set_triples(&(self.generate)(sample, beta)?)
    }
}

/// Quantity averaged over disorder by [`quenched_average`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    Overlap(OverlapMonomial),
    Replica(ReplicaObservable),
    Spin(SpinMonomial),
    /// `log Z`.
    Pressure,
    /// `ω(H)`.
    InternalEnergy,
    /// `ω(H²) − ω(H)²`.
    ThermalVariance,
}

/// `Av` of `obs` over realizations `0..n_samples`.
pub fn quenched_average<E: Executor + ?Sized>(
    model: &ModelSpec,
    beta: Beta,
    obs: &Observable,
    n_samples: usize,
    master_seed: u64,
    engine: &Engine,
    exec: &E,
) -> Result<QuenchedEstimate> {
    if n_samples == 0 {
        return Err(Error::InsufficientSamples {
            needed: 1,
            available: 0,
        });
    }
    let b = beta.value();
    let range = 0..n_samples as u64;
    let values = match (obs, engine) {
        (Observable::Overlap(m), _) => {
            let o = [ReplicaObservable::plain(m.clone())];
            moment_values(model, master_seed, engine, exec, range, b, &o)?
        }
        (Observable::Replica(o), _) => {
            moment_values(model, master_seed, engine, exec, range, b, core::slice::from_ref(o))?
        }
        (_, Engine::Exact(cap)) => {
            let src = ExactSource {
                capacity: *cap,
                ..ExactSource::new(*model, master_seed)
            };
            cap.check_ensemble(model.n_sites)?;
            per_sample(exec, range, |s| {
                let table = src.table(s)?;
                let g = GibbsEnsemble::new(&table, beta);
                Ok(match obs {
                    Observable::Spin(m) => g.spin_expectation(m),
                    Observable::Pressure => g.log_z,
                    Observable::InternalEnergy => g.energy_moments()?.0,
                    _ => g.energy_moments()?.1,
                })
            })?
        }
        (_, Engine::Mc(_)) => {
            return Err(Error::Unsupported(format!(
                "{obs:?} is not available from the Monte Carlo engine"
            )))
        }
    };
    QuenchedEstimate::from_samples(values, false)
}

fn moment_values<E: Executor + ?Sized>(
    model: &ModelSpec,
    master_seed: u64,
    engine: &Engine,
    exec: &E,
    range: Range<u64>,
    beta: f64,
    obs: &[ReplicaObservable],
) -> Result<Vec<f64>> {
    let run = |src: &dyn MomentSource| {
        per_sample(exec, range.clone(), |s| {
            Ok(src.moments(s, &[beta], obs)?.values[0][0])
        })
    };
    match engine {
        Engine::Exact(cap) => run(&ExactSource {
            capacity: *cap,
            ..ExactSource::new(*model, master_seed)
        }),
        Engine::Mc(settings) => run(&McSource::new(*model, master_seed, settings.clone())),
    }
}

/// Builds the moment source for an engine.
pub fn source_for(model: &ModelSpec, master_seed: u64, engine: &Engine) -> AnySource {
    match engine {
        Engine::Exact(cap) => AnySource::Exact(ExactSource {
            capacity: *cap,
            ..ExactSource::new(*model, master_seed)
        }),
        Engine::Mc(settings) => AnySource::Mc(McSource::new(*model, master_seed, settings.clone())),
    }
}

#[derive(Clone, Debug)]
pub enum AnySource {
    Exact(ExactSource),
    Mc(McSource),
}

impl MomentSource for AnySource {
    fn model(&self) -> &ModelSpec {
        match self {
            Self::Exact(s) => s.model(),
            Self::Mc(s) => s.model(),
        }
    }

    fn engine_name(&self) -> &'static str {
        match self {
            Self::Exact(s) => s.engine_name(),
            Self::Mc(s) => s.engine_name(),
        }
    }

    fn moments(&self, sample: u64, betas: &[f64], obs: &[ReplicaObservable]) -> Result<SampleMoments> {
        match self {
            Self::Exact(s) => s.moments(sample, betas, obs),
            Self::Mc(s) => s.moments(sample, betas, obs),
        }
    }

    fn triples(&self, sample: u64, beta: f64) -> Result<TripleLaw> {
        match self {
            Self::Exact(s) => s.triples(sample, beta),
            Self::Mc(s) => s.triples(sample, beta),
        }
    }
}

/// Quenched pressure with the annealed bound `N log 2 + β²N c(σ,σ)/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub estimate: QuenchedEstimate,
    /// `None` for the non-Gaussian Curie–Weiss model.
    pub annealed_bound: Option<f64>,
    pub bound_holds: bool,
}

pub fn annealed_pressure(model: &ModelSpec, beta: Beta) -> Option<f64> {
    let n = model.n_sites as f64;
    model
        .family
        .is_gaussian()
        .then(|| n * core::f64::consts::LN_2 + beta.value() * beta.value() * n / 2.0)
}

pub fn quenched_pressure<E: Executor + ?Sized>(
    model: &ModelSpec,
    beta: Beta,
    n_samples: usize,
    master_seed: u64,
    exec: &E,
) -> Result<PressureEstimate> {
    let estimate = quenched_average(
        model,
        beta,
        &Observable::Pressure,
        n_samples,
        master_seed,
        &Engine::exact(),
        exec,
    )?;
    let annealed_bound = annealed_pressure(model, beta);
    let bound_holds = annealed_bound.map_or(true, |b| estimate.mean <= b + 3.0 * estimate.stderr);
    Ok(PressureEstimate {
        estimate,
        annealed_bound,
        bound_holds,
    })
}

/// Per-realization moment table: `[sample][beta][observable]`, plus any
/// replacements `(original, used)`.
pub fn moment_table<E, S>(
    exec: &E,
    source: &S,
    range: Range<u64>,
    betas: &[f64],
    obs: &[ReplicaObservable],
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<(u64, u64)>)>
where
    E: Executor + ?Sized,
    S: MomentSource + ?Sized,
{
    let rows = per_sample(exec, range.clone(), |s| source.moments(s, betas, obs))?;
    let replaced = range
        .zip(&rows)
        .filter(|(s, r)| r.sample_index != *s)
        .map(|(s, r)| (s, r.sample_index))
        .collect();
    Ok((rows.into_iter().map(|r| r.values).collect(), replaced))
}

/// Describes replacements for report metadata.
pub fn describe_replacements(replaced: &[(u64, u64)]) -> String {
    let mut out = String::new();
    for (i, (a, b)) in replaced.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("{a}->{b}"));
    }
    out
}

/// Uniform grid of `points` values across `[lo, hi]`.
pub fn beta_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    (0..points)
        .map(|k| {
            if k == points - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (points - 1) as f64
            }
        })
        .collect()
}

pub(crate) fn require_gaussian(model: &ModelSpec, what: &str) -> Result<()> {
    if model.family == Family::Cw {
        return Err(Error::Unsupported(format!("{what} needs a Gaussian model")));
    }
    Ok(())
}
