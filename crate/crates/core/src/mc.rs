//! Single-spin-flip Monte Carlo with parallel tempering.
//!
//! Every clone runs its own tempering chain across the β ladder under the
//! same couplings; overlaps are measured between clones at the target
//! (largest) β after every sweep. Each (clone, rung) position owns a random
//! stream, so output depends only on the seed label.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CouplingRealization, Family, Interaction, ModelSpec};
use crate::monomial::OverlapMonomial;
use crate::numeric::{
    batch_means, column_mean, compensated_sum, integrated_autocorrelation, ks_two_sample,
};
use crate::rng::{self, Purpose, SeedLabel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Metropolis,
    HeatBath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Non-decreasing; the last rung is the measurement temperature.
    pub beta_ladder: Vec<f64>,
    pub n_clones: usize,
    pub sweeps_burnin: u64,
    pub sweeps_measure: u64,
    pub exchange_period: u64,
    pub n_batches: usize,
    /// Re-space interior rungs during burn-in to even out swap acceptance.
    pub tune_ladder: bool,
    pub update: UpdateRule,
    pub seed_label: SeedLabel,
}

impl SamplerConfig {
    pub fn new(beta_ladder: Vec<f64>, seed_label: SeedLabel) -> Self {
        Self {
            beta_ladder,
            n_clones: 4,
            sweeps_burnin: 2_000,
            sweeps_measure: 20_000,
            exchange_period: 1,
            n_batches: 16,
            tune_ladder: false,
            update: UpdateRule::Metropolis,
            seed_label,
        }
    }

    pub fn target_beta(&self) -> f64 {
        self.beta_ladder.last().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.beta_ladder;
        if l.is_empty() {
            return Err(Error::DegenerateLadder("empty ladder".into()));
        }
        if l.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::DegenerateLadder(format!("invalid rung in {l:?}")));
        }
        if l.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::DegenerateLadder(format!("ladder not ascending: {l:?}")));
        }
        if self.n_clones < 3 {
            return Err(Error::InvalidSpec(format!(
                "need at least 3 clones, got {}",
                self.n_clones
            )));
        }
        if self.sweeps_measure == 0 || self.exchange_period == 0 {
            return Err(Error::InvalidSpec(
                "sweeps_measure and exchange_period must be positive".into(),
            ));
        }
        if self.n_batches < 2 {
            return Err(Error::InvalidSpec("need at least 2 batches".into()));
        }
        Ok(())
    }
}

/// Geometric ladder of `rungs` values from `beta_min` to `beta_target`.
/// Collapses to `[beta_target]` when `beta_target <= beta_min` or `rungs < 2`.
pub fn geometric_ladder(beta_min: f64, beta_target: f64, rungs: usize) -> Vec<f64> {
    if rungs < 2 || beta_target <= beta_min || beta_min <= 0.0 {
        return vec![beta_target];
    }
    let ratio = libm::pow(beta_target / beta_min, 1.0 / (rungs - 1) as f64);
    let mut out: Vec<f64> = (0..rungs)
        .map(|k| beta_min * libm::pow(ratio, k as f64))
        .collect();
    out[rungs - 1] = beta_target;
    out
}

#[derive(Clone, Debug)]
struct Chain {
    spins: Vec<i8>,
    fields: Vec<f64>,
    energy: f64,
}

impl Chain {
    fn random(inter: &Interaction, rng: &mut ChaCha8Rng) -> Self {
        let n = inter.n_sites;
        let mut spins = Vec::with_capacity(n);
        let mut word = 0u64;
        for i in 0..n {
            if i % 64 == 0 {
                word = rng.next_u64();
            }
            spins.push(if word >> (i % 64) & 1 == 1 { 1 } else { -1 });
        }
        let mut c = Self {
            spins,
            fields: vec![0.0; n],
            energy: 0.0,
        };
        c.refresh(inter);
        c
    }

    fn refresh(&mut self, inter: &Interaction) {
        for i in 0..inter.n_sites {
            self.fields[i] = inter.local_field(&self.spins, i);
        }
        self.energy = inter.energy_of(&self.spins);
    }

    #[inline]
    fn flip(&mut self, inter: &Interaction, k: usize) {
        let sk = self.spins[k] as f64;
        self.energy -= 2.0 * sk * self.fields[k];
        for (j, w) in inter.neighbors(k) {
            self.fields[j] -= 2.0 * w * sk;
        }
        self.spins[k] = -self.spins[k];
    }

    fn sweep(
        &mut self,
        inter: &Interaction,
        order: &[usize],
        beta: f64,
        rule: UpdateRule,
        rng: &mut ChaCha8Rng,
    ) {
        for &k in order {
            let sk = self.spins[k] as f64;
            let f = self.fields[k];
            let flip = match rule {
                UpdateRule::Metropolis => {
                    let delta = -2.0 * sk * f;
                    delta <= 0.0 || rng::unit(rng.next_u64()) < libm::exp(-beta * delta)
                }
                UpdateRule::HeatBath => {
                    let p_up = 1.0 / (1.0 + libm::exp(2.0 * beta * f));
                    let up = rng::unit(rng.next_u64()) < p_up;
                    up != (sk > 0.0)
                }
            };
            if flip {
                self.flip(inter, k);
            }
        }
    }
}

/// Parallel tempering over a ladder for `n_clones` independent clones.
pub struct TemperingSampler {
    model: ModelSpec,
    inter: Interaction,
    cfg: SamplerConfig,
    ladder: Vec<f64>,
    order: Vec<usize>,
    chains: Vec<Vec<Chain>>,
    rngs: Vec<Vec<ChaCha8Rng>>,
    exchange_rngs: Vec<ChaCha8Rng>,
    attempts: Vec<u64>,
    accepts: Vec<u64>,
    sweeps: u64,
    exchanges: u64,
}

impl TemperingSampler {
    pub fn new(real: &CouplingRealization, cfg: &SamplerConfig) -> Result<Self> {
        if !real.model.family.is_gaussian() {
            return Err(Error::Unsupported(format!(
                "Monte Carlo engine needs SK or EA, got {}",
                real.model.family.name()
            )));
        }
        cfg.validate()?;
        let inter = Interaction::from_realization(real);
        let rungs = cfg.beta_ladder.len();
        let mut rngs = Vec::with_capacity(cfg.n_clones);
        let mut chains = Vec::with_capacity(cfg.n_clones);
        for c in 0..cfg.n_clones {
            let mut row_r = Vec::with_capacity(rungs);
            let mut row_c = Vec::with_capacity(rungs);
            for r in 0..rungs {
                let mut g = rng::stream(cfg.seed_label, Purpose::Sampler((c * rungs + r) as u32));
                row_c.push(Chain::random(&inter, &mut g));
                row_r.push(g);
            }
            rngs.push(row_r);
            chains.push(row_c);
        }
        let exchange_rngs = (0..cfg.n_clones)
            .map(|c| rng::stream(cfg.seed_label, Purpose::Exchange(c as u32)))
            .collect();
        let order = sweep_order(&real.model);
        Ok(Self {
            model: real.model,
            inter,
            cfg: cfg.clone(),
            ladder: cfg.beta_ladder.clone(),
            order,
            chains,
            rngs,
            exchange_rngs,
            attempts: vec![0; rungs.saturating_sub(1)],
            accepts: vec![0; rungs.saturating_sub(1)],
            sweeps: 0,
            exchanges: 0,
        })
    }

    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    /// Single-spin-flip sweep of every chain. A rung at β = 0 uses heat-bath
    /// updates: Metropolis there accepts every proposal and a fixed-order
    /// sweep would just flip all spins deterministically.
    pub fn sweep(&mut self) {
        for (chains, rngs) in self.chains.iter_mut().zip(&mut self.rngs) {
            for ((chain, g), &beta) in chains.iter_mut().zip(rngs.iter_mut()).zip(&self.ladder) {
                let rule = if beta == 0.0 {
                    UpdateRule::HeatBath
                } else {
                    self.cfg.update
                };
                chain.sweep(&self.inter, &self.order, beta, rule, g);
            }
        }
        self.sweeps += 1;
        if self.sweeps % 64 == 0 {
            for chain in self.chains.iter_mut().flatten() {
                chain.refresh(&self.inter);
            }
        }
    }

    /// Replica-exchange attempts between adjacent rungs, alternating even
    /// and odd pairs.
    pub fn exchange(&mut self) {
        let rungs = self.ladder.len();
        if rungs < 2 {
            return;
        }
        let start = (self.exchanges % 2) as usize;
        for (chains, g) in self.chains.iter_mut().zip(&mut self.exchange_rngs) {
            for i in (start..rungs - 1).step_by(2) {
                let delta = (self.ladder[i + 1] - self.ladder[i])
                    * (chains[i + 1].energy - chains[i].energy);
                let accept = delta >= 0.0 || rng::unit(g.next_u64()) < libm::exp(delta);
                self.attempts[i] += 1;
                if accept {
                    self.accepts[i] += 1;
                    chains.swap(i, i + 1);
                }
            }
        }
        self.exchanges += 1;
    }

    pub fn step(&mut self) {
        self.sweep();
        if self.sweeps % self.cfg.exchange_period == 0 {
            self.exchange();
        }
    }

    /// Swap acceptance per adjacent rung pair since the last reset.
    pub fn swap_acceptance(&self) -> Vec<f64> {
        self.attempts
            .iter()
            .zip(&self.accepts)
            .map(|(&a, &k)| if a == 0 { 0.0 } else { k as f64 / a as f64 })
            .collect()
    }

    pub fn reset_counters(&mut self) {
        self.attempts.iter_mut().for_each(|a| *a = 0);
        self.accepts.iter_mut().for_each(|a| *a = 0);
    }

    /// Spins of `clone` at the target rung.
    pub fn target_spins(&self, clone: usize) -> &[i8] {
        &self.chains[clone].last().expect("non-empty ladder").spins
    }

    pub fn target_energy(&self, clone: usize) -> f64 {
        self.chains[clone].last().expect("non-empty ladder").energy
    }

    /// Moves interior rungs so that gaps with low acceptance shrink.
    fn retune(&mut self) {
        let k = self.ladder.len();
        if k < 3 {
            return;
        }
        let acc = self.swap_acceptance();
        let mean = compensated_sum(acc.iter().copied()) / acc.len() as f64;
        let gaps: Vec<f64> = self
            .ladder
            .windows(2)
            .zip(&acc)
            .map(|(w, a)| (w[1] - w[0]) * (a + 0.05) / (mean + 0.05))
            .collect();
        let span = self.ladder[k - 1] - self.ladder[0];
        let total: f64 = gaps.iter().sum();
        if total <= 0.0 {
            return;
        }
        let mut b = self.ladder[0];
        for (i, gap) in gaps.iter().enumerate().take(k - 2) {
            b += gap * span / total;
            self.ladder[i + 1] = b;
        }
        self.reset_counters();
    }

    fn overlap(&self, a: &[i8], b: &[i8], edges: &[(usize, usize)]) -> f64 {
        let n = self.model.n_sites;
        let den = self.model.overlap_denominator() as f64;
        match self.model.family {
            Family::Ea => {
                let s: i64 = edges
                    .iter()
                    .map(|&(i, j)| (a[i] * a[j] * b[i] * b[j]) as i64)
                    .sum();
                s as f64 / den
            }
            _ => {
                let q: i64 = (0..n).map(|i| (a[i] * b[i]) as i64).sum();
                (q * q) as f64 / den
            }
        }
    }
}

fn sweep_order(model: &ModelSpec) -> Vec<usize> {
    match model.family {
        Family::Ea => {
            let parity = model.site_parity();
            let mut order: Vec<usize> = (0..model.n_sites).filter(|&i| parity[i] == 0).collect();
            order.extend((0..model.n_sites).filter(|&i| parity[i] == 1));
            order
        }
        _ => (0..model.n_sites).collect(),
    }
}

/// Clone pairs `(a, b)`, `a < b`, in the column order of sample rows.
pub fn clone_pairs(n_clones: usize) -> Vec<(usize, usize)> {
    (0..n_clones)
        .flat_map(|a| (a + 1..n_clones).map(move |b| (a, b)))
        .collect()
}

/// Overlap samples between clones at the target β.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapSampleSet {
    pub n_sites: usize,
    pub n_clones: usize,
    pub beta: f64,
    pub pairs: Vec<(usize, usize)>,
    /// Row-major, one row of `pairs.len()` overlaps per measurement.
    pub samples: Vec<f64>,
    pub sweep_indices: Vec<u64>,
    pub tau_int: f64,
    pub n_batches: usize,
    /// Batch-means standard error of each pair column.
    pub batch_stderr: Vec<f64>,
    pub swap_acceptance: Vec<f64>,
}

impl OverlapSampleSet {
    /// Builds a sample set from externally produced rows.
    pub fn from_rows(
        n_sites: usize,
        n_clones: usize,
        beta: f64,
        rows: &[Vec<f64>],
        n_batches: usize,
    ) -> Result<Self> {
        let pairs = clone_pairs(n_clones);
        if rows.iter().any(|r| r.len() != pairs.len()) {
            return Err(Error::Format(format!(
                "every row needs {} overlaps for {n_clones} clones",
                pairs.len()
            )));
        }
        let samples = rows.iter().flatten().copied().collect();
        let mut s = Self {
            n_sites,
            n_clones,
            beta,
            pairs,
            samples,
            sweep_indices: (0..rows.len() as u64).collect(),
            tau_int: 1.0,
            n_batches,
            batch_stderr: Vec::new(),
            swap_acceptance: Vec::new(),
        };
        s.summarize();
        Ok(s)
    }

    fn summarize(&mut self) {
        self.tau_int = integrated_autocorrelation(&self.pair_average_series());
        self.batch_stderr = (0..self.pairs.len())
            .map(|p| {
                batch_means(&self.column(p), self.n_batches).map_or(f64::NAN, |(_, se)| se)
            })
            .collect();
    }

    pub fn n_samples(&self) -> usize {
        self.sweep_indices.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.pairs.len();
        &self.samples[i * w..(i + 1) * w]
    }

    pub fn column(&self, pair: usize) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.row(i)[pair]).collect()
    }

    pub fn pair_index(&self, a: usize, b: usize) -> usize {
        let (a, b) = (a.min(b), a.max(b));
        self.pairs
            .iter()
            .position(|&p| p == (a, b))
            .expect("clone pair")
    }

    pub fn pair_average_series(&self) -> Vec<f64> {
        (0..self.n_samples())
            .map(|i| column_mean(self.row(i)))
            .collect()
    }

    /// Per-measurement value of a monomial, averaged over every injective
    /// assignment of replica labels to clones.
    pub fn monomial_series(&self, m: &OverlapMonomial) -> Result<Vec<f64>> {
        let arity = m.arity();
        if arity > self.n_clones {
            return Err(Error::InvalidMonomial(format!(
                "{m} needs {arity} replicas, sampler has {} clones",
                self.n_clones
            )));
        }
        if m.is_one() {
            return Ok(vec![1.0; self.n_samples()]);
        }
        let assignments = injective_maps(arity, self.n_clones);
        let plan: Vec<Vec<(usize, u32)>> = assignments
            .iter()
            .map(|map| {
                m.factors()
                    .iter()
                    .map(|&(a, b, k)| (self.pair_index(map[a], map[b]), k))
                    .collect()
            })
            .collect();
        let norm = 1.0 / plan.len() as f64;
        Ok((0..self.n_samples())
            .map(|i| {
                let row = self.row(i);
                let total = compensated_sum(plan.iter().map(|factors| {
                    factors
                        .iter()
                        .map(|&(p, k)| libm::pow(row[p], k as f64))
                        .product::<f64>()
                }));
                total * norm
            })
            .collect())
    }

    /// Batch-means estimate and standard error of a monomial.
    pub fn moment(&self, m: &OverlapMonomial) -> Result<(f64, f64)> {
        let series = self.monomial_series(m)?;
        batch_means(&series, self.n_batches).ok_or(Error::InsufficientSamples {
            needed: self.n_batches,
            available: series.len(),
        })
    }
}

fn injective_maps(arity: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(arity);
    fn rec(arity: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == arity {
            out.push(cur.clone());
            return;
        }
        for c in 0..n {
            if !cur.contains(&c) {
                cur.push(c);
                rec(arity, n, cur, out);
                cur.pop();
            }
        }
    }
    rec(arity, n, &mut cur, &mut out);
    out
}

/// Runs burn-in and measurement; overlaps between all clone pairs are
/// recorded after every sweep.
pub fn run_sampler(real: &CouplingRealization, cfg: &SamplerConfig) -> Result<OverlapSampleSet> {
    let mut sampler = TemperingSampler::new(real, cfg)?;
    let tune_every = (cfg.sweeps_burnin / 10).max(50);
    for t in 1..=cfg.sweeps_burnin {
        sampler.step();
        if cfg.tune_ladder && t % tune_every == 0 && t < cfg.sweeps_burnin {
            sampler.retune();
        }
    }
    sampler.reset_counters();
    let pairs = clone_pairs(cfg.n_clones);
    let edges = real.model.edges();
    let mut samples = Vec::with_capacity(cfg.sweeps_measure as usize * pairs.len());
    let mut sweep_indices = Vec::with_capacity(cfg.sweeps_measure as usize);
    for t in 0..cfg.sweeps_measure {
        sampler.step();
        for &(a, b) in &pairs {
            samples.push(sampler.overlap(sampler.target_spins(a), sampler.target_spins(b), &edges));
        }
        sweep_indices.push(cfg.sweeps_burnin + t);
    }
    let mut set = OverlapSampleSet {
        n_sites: real.model.n_sites,
        n_clones: cfg.n_clones,
        beta: cfg.target_beta(),
        pairs,
        samples,
        sweep_indices,
        tau_int: 1.0,
        n_batches: cfg.n_batches,
        batch_stderr: Vec::new(),
        swap_acceptance: sampler.swap_acceptance(),
    };
    set.summarize();
    Ok(set)
}

/// Thermal expectation of an overlap monomial by Monte Carlo, with its
/// batch-means standard error.
pub fn thermal_moment_mc(
    real: &CouplingRealization,
    cfg: &SamplerConfig,
    m: &OverlapMonomial,
) -> Result<(f64, f64)> {
    if m.arity() > cfg.n_clones {
        return Err(Error::InvalidMonomial(format!(
            "{m} needs {} replicas, config has {} clones",
            m.arity(),
            cfg.n_clones
        )));
    }
    if (cfg.sweeps_measure as usize) < cfg.n_batches {
        return Err(Error::InsufficientSamples {
            needed: cfg.n_batches,
            available: cfg.sweeps_measure as usize,
        });
    }
    run_sampler(real, cfg)?.moment(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMoment {
    pub pair: (usize, usize),
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tau_int: f64,
    pub swap_acceptance: Vec<f64>,
    pub pair_moments: Vec<PairMoment>,
    /// Largest pairwise `|Δmean| / σ` among the first three clone pairs.
    pub max_pair_z: f64,
    /// Smallest pairwise two-sample KS p-value on thinned series.
    pub min_ks_p: f64,
    pub exchangeable: bool,
}

/// Mixing and clone-symmetry checks on a sample set.
pub fn diagnostics(s: &OverlapSampleSet) -> Result<Diagnostics> {
    if s.n_samples() == 0 {
        return Err(Error::InsufficientSamples {
            needed: 1,
            available: 0,
        });
    }
    let pair_moments: Vec<PairMoment> = (0..s.pairs.len())
        .map(|p| {
            let col = s.column(p);
            let (mean, stderr) = batch_means(&col, s.n_batches)
                .unwrap_or_else(|| (column_mean(&col), f64::NAN));
            PairMoment {
                pair: s.pairs[p],
                mean,
                stderr,
            }
        })
        .collect();
    // c12, c13, c23
    let triple = [s.pair_index(0, 1), s.pair_index(0, 2), s.pair_index(1, 2)];
    let stride = libm::ceil(2.0 * s.tau_int).max(1.0) as usize;
    let thinned: Vec<Vec<f64>> = triple
        .iter()
        .map(|&p| s.column(p).into_iter().step_by(stride).collect())
        .collect();
    let mut max_z: f64 = 0.0;
    let mut min_p: f64 = 1.0;
    for i in 0..3 {
        for j in i + 1..3 {
            let (a, b) = (&pair_moments[triple[i]], &pair_moments[triple[j]]);
            let se = libm::sqrt(a.stderr * a.stderr + b.stderr * b.stderr);
            let diff = (a.mean - b.mean).abs();
            let z = if diff == 0.0 {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            };
            max_z = max_z.max(z);
            min_p = min_p.min(ks_two_sample(&thinned[i], &thinned[j]).1);
        }
    }
    Ok(Diagnostics {
        tau_int: s.tau_int,
        swap_acceptance: s.swap_acceptance.clone(),
        pair_moments,
        max_pair_z: max_z,
        min_ks_p: min_p,
        exchangeable: max_z <= 3.0 && min_p > 0.01,
    })
}

pub const SCRATCH_MAGIC: [u8; 8] = *b"SGOVLAP\0";
pub const SCRATCH_VERSION: u32 = 1;

/// Contents of an overlap scratch file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScratchData {
    pub n_sites: u64,
    pub n_clones: u64,
    pub rows: Vec<Vec<f64>>,
}

/// Little-endian columnar scratch layout: 8-byte magic, `u32` version,
/// `u64` N, `u64` R, `u64` sample count, then row-major `f64` tuples of
/// `R(R-1)/2` pair overlaps.
pub fn encode_scratch(s: &OverlapSampleSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + 8 * s.samples.len());
    out.extend_from_slice(&SCRATCH_MAGIC);
    out.extend_from_slice(&SCRATCH_VERSION.to_le_bytes());
    out.extend_from_slice(&(s.n_sites as u64).to_le_bytes());
    out.extend_from_slice(&(s.n_clones as u64).to_le_bytes());
    out.extend_from_slice(&(s.n_samples() as u64).to_le_bytes());
    for v in &s.samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_scratch(bytes: &[u8]) -> Result<ScratchData> {
    let bad = |m: &str| Error::Format(format!("overlap scratch: {m}"));
    if bytes.len() < 36 || bytes[..8] != SCRATCH_MAGIC {
        return Err(bad("missing magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(8) != SCRATCH_VERSION {
        return Err(bad("unsupported version"));
    }
    let (n_sites, n_clones, count) = (u64_at(12), u64_at(20), u64_at(28));
    let width = n_clones
        .checked_mul(n_clones.saturating_sub(1))
        .map(|x| x / 2)
        .ok_or_else(|| bad("clone count overflow"))?;
    let body = count
        .checked_mul(width)
        .and_then(|x| x.checked_mul(8))
        .ok_or_else(|| bad("size overflow"))?;
    if bytes.len() as u64 != 36 + body {
        return Err(bad("length does not match header"));
    }
    let width = width as usize;
    let rows = bytes[36..]
        .chunks_exact(8 * width.max(1))
        .take(count as usize)
        .map(|row| {
            row.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        })
        .collect();
    Ok(ScratchData {
        n_sites,
        n_clones,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_couplings, ModelSpec};

    fn sk(n: usize) -> CouplingRealization {
        sample_couplings(&ModelSpec::sk(n).unwrap(), SeedLabel::new(17, 0)).unwrap()
    }

    #[test]
    fn ladder_validation() {
        let real = sk(6);
        let mut cfg = SamplerConfig::new(vec![], SeedLabel::new(1, 0));
        assert!(matches!(
            TemperingSampler::new(&real, &cfg),
            Err(Error::DegenerateLadder(_))
        ));
        cfg.beta_ladder = vec![1.0, 0.5];
        assert!(TemperingSampler::new(&real, &cfg).is_err());
        cfg.beta_ladder = vec![0.5, 1.0];
        cfg.n_clones = 2;
        assert!(TemperingSampler::new(&real, &cfg).is_err());
        let cw = CouplingRealization::zero(ModelSpec::cw(6).unwrap());
        cfg.n_clones = 4;
        assert!(matches!(
            TemperingSampler::new(&cw, &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn geometric_ladder_endpoints() {
        let l = geometric_ladder(0.2, 1.5, 8);
        assert_eq!(l.len(), 8);
        assert_eq!(l[0], 0.2);
        assert_eq!(l[7], 1.5);
        assert!(l.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(geometric_ladder(0.2, 0.1, 8), vec![0.1]);
    }

    #[test]
    fn incremental_energy_tracks_exact() {
        let real = sk(9);
        let cfg = SamplerConfig::new(geometric_ladder(0.3, 1.2, 4), SeedLabel::new(2, 0));
        let mut s = TemperingSampler::new(&real, &cfg).unwrap();
        let inter = Interaction::from_realization(&real);
        for _ in 0..37 {
            s.step();
        }
        for c in 0..cfg.n_clones {
            let exact = inter.energy_of(s.target_spins(c));
            assert!((s.target_energy(c) - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let real = sk(8);
        let mut cfg = SamplerConfig::new(vec![0.5, 1.0], SeedLabel::new(3, 4));
        cfg.sweeps_burnin = 50;
        cfg.sweeps_measure = 200;
        let a = run_sampler(&real, &cfg).unwrap();
        let b = run_sampler(&real, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed_label.sample_index = 5;
        assert_ne!(a.samples, run_sampler(&real, &cfg).unwrap().samples);
    }

    #[test]
    fn unit_monomial_is_exact() {
        let real = sk(6);
        let mut cfg = SamplerConfig::new(vec![1.0], SeedLabel::new(1, 1));
        cfg.sweeps_measure = 64;
        let one = OverlapMonomial::one();
        assert_eq!(thermal_moment_mc(&real, &cfg, &one).unwrap(), (1.0, 0.0));
        cfg.sweeps_measure = 8;
        assert!(matches!(
            thermal_moment_mc(&real, &cfg, &one),
            Err(Error::InsufficientSamples { .. })
        ));
        let c15 = OverlapMonomial::parse("c15").unwrap();
        cfg.sweeps_measure = 64;
        assert!(thermal_moment_mc(&real, &cfg, &c15).is_err());
    }

    #[test]
    fn equal_beta_rungs_always_swap() {
        let real = sk(8);
        let mut cfg = SamplerConfig::new(vec![0.0, 0.0, 0.0], SeedLabel::new(9, 0));
        cfg.sweeps_burnin = 10;
        cfg.sweeps_measure = 100;
        let s = run_sampler(&real, &cfg).unwrap();
        assert_eq!(s.swap_acceptance, vec![1.0, 1.0]);
    }

    #[test]
    fn scratch_rejects_corruption() {
        let rows = vec![vec![0.25, 0.5, 1.0]; 4];
        let set = OverlapSampleSet::from_rows(4, 3, 1.0, &rows, 2).unwrap();
        let mut bytes = encode_scratch(&set);
        assert_eq!(decode_scratch(&bytes).unwrap().rows, rows);
        bytes.pop();
        assert!(decode_scratch(&bytes).is_err());
        let mut bytes = encode_scratch(&set);
        bytes[0] = b'X';
        assert!(decode_scratch(&bytes).is_err());
    }

    #[test]
    fn injective_map_count() {
        assert_eq!(injective_maps(3, 4).len(), 24);
        assert_eq!(injective_maps(2, 4).len(), 12);
        assert_eq!(injective_maps(0, 4).len(), 1);
    }
}
