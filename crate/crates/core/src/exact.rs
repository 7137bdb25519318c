//! Exact Gibbs measures by complete enumeration of `2^N` configurations.
//!
//! Configuration `x` is the bit pattern of [`SpinConfiguration::from_index`]
//! (bit `i` set ⇔ `σ_i = +1`). Every overlap in the supported models depends
//! only on the disagreement pattern `x ⊕ y`, so replica sums reduce to XOR
//! correlations and are evaluated with Walsh–Hadamard transforms
//! ([`MomentPath::Spectral`]). [`MomentPath::Enumeration`] sums over all
//! replica tuples directly and serves as the independent cross-check.
//!
//! [`SpinConfiguration::from_index`]: crate::model::SpinConfiguration::from_index

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Beta, CouplingRealization, Family, Interaction, ModelSpec, OverlapValue};
use crate::monomial::{OverlapMonomial, ReplicaObservable, SpinMonomial};
use crate::numeric::{compensated_sum, log_sum_exp, walsh_hadamard, xor_convolve, CompensatedSum};

/// Largest `N` for which a full ensemble (`2^N` weights) is built.
pub const ENSEMBLE_CAPACITY: usize = 26;
/// Largest `N` for two-replica distributions.
pub const PAIR_CAPACITY: usize = 13;
/// Largest `N` for three-replica joint distributions.
pub const TRIPLE_CAPACITY: usize = 9;
/// Largest total bit count `replicas · N` for direct replica enumeration.
pub const ENUMERATION_BITS: usize = 27;

/// Enumeration limits; the defaults are the constants above.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacity {
    pub ensemble: usize,
    pub pairs: usize,
    pub triples: usize,
}

impl Default for Capacity {
    fn default() -> Self {
        Self {
            ensemble: ENSEMBLE_CAPACITY,
            pairs: PAIR_CAPACITY,
            triples: TRIPLE_CAPACITY,
        }
    }
}

impl Capacity {
    pub fn check_ensemble(&self, n: usize) -> Result<()> {
        if n > self.ensemble {
            return Err(Error::Capacity {
                engine: "exact",
                n_sites: n,
                limit: self.ensemble,
            });
        }
        Ok(())
    }

    fn check_pairs(&self, n: usize) -> Result<()> {
        if n > self.pairs {
            return Err(Error::Capacity {
                engine: "exact-pair",
                n_sites: n,
                limit: self.pairs,
            });
        }
        Ok(())
    }

    fn check_triples(&self, n: usize) -> Result<()> {
        if n > self.triples {
            return Err(Error::Capacity {
                engine: "exact-triple",
                n_sites: n,
                limit: self.triples,
            });
        }
        Ok(())
    }
}

/// `H(x)` for every configuration of one realization.
#[derive(Clone, Debug)]
pub struct EnergyTable {
    pub model: ModelSpec,
    pub energies: Arc<[f64]>,
}

impl EnergyTable {
    pub fn enumerate(real: &CouplingRealization) -> Result<Self> {
        Self::enumerate_with(real, &Capacity::default())
    }

    pub fn enumerate_with(real: &CouplingRealization, cap: &Capacity) -> Result<Self> {
        cap.check_ensemble(real.model.n_sites)?;
        Ok(Self::from_interaction(
            real.model,
            &Interaction::from_realization(real),
        ))
    }

    /// Blocked Gray-code sweep: exact energy and local fields at the start of
    /// every block of `2^10` configurations, single-flip updates inside.
    pub fn from_interaction(model: ModelSpec, inter: &Interaction) -> Self {
        let n = model.n_sites;
        let total = 1usize << n;
        let low = n.min(10);
        let block = 1usize << low;
        let mut out = vec![0.0; total];
        let mut spins = vec![0i8; n];
        let mut fields = vec![0.0; n];
        for base in (0..total).step_by(block) {
            for (i, s) in spins.iter_mut().enumerate() {
                *s = if base >> i & 1 == 1 { 1 } else { -1 };
            }
            for (i, f) in fields.iter_mut().enumerate() {
                *f = inter.local_field(&spins, i);
            }
            let mut e = inter.energy_of(&spins);
            out[base] = e;
            let mut cur = base;
            for t in 1..block {
                let k = t.trailing_zeros() as usize;
                let sk = spins[k] as f64;
                e -= 2.0 * sk * fields[k];
                for (j, w) in inter.neighbors(k) {
                    fields[j] -= 2.0 * w * sk;
                }
                spins[k] = -spins[k];
                cur ^= 1 << k;
                out[cur] = e;
            }
        }
        Self {
            model,
            energies: out.into(),
        }
    }
}

/// Gibbs measure `p(x) ∝ exp(-βH(x))`, kept in the log domain.
#[derive(Clone, Debug)]
pub struct GibbsEnsemble {
    pub model: ModelSpec,
    pub beta: Beta,
    pub log_weights: Vec<f64>,
    pub log_z: f64,
    energies: Option<Arc<[f64]>>,
}

impl GibbsEnsemble {
    pub fn new(table: &EnergyTable, beta: Beta) -> Self {
        let b = beta.value();
        let log_weights: Vec<f64> = table.energies.iter().map(|&e| -b * e).collect();
        let log_z = log_sum_exp(&log_weights);
        Self {
            model: table.model,
            beta,
            log_weights,
            log_z,
            energies: Some(table.energies.clone()),
        }
    }

    /// Ensemble from arbitrary log weights (no energy table attached).
    pub fn from_log_weights(model: ModelSpec, beta: Beta, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != 1usize << model.n_sites {
            return Err(Error::SizeMismatch {
                expected: 1usize << model.n_sites,
                found: log_weights.len(),
            });
        }
        let log_z = log_sum_exp(&log_weights);
        Ok(Self {
            model,
            beta,
            log_weights,
            log_z,
            energies: None,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.model.n_sites
    }

    pub fn energies(&self) -> Option<&[f64]> {
        self.energies.as_deref()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .map(|&lw| libm::exp(lw - self.log_z))
            .collect()
    }

    /// `ω(f)` for a function of the configuration index.
    pub fn expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        compensated_sum(
            self.log_weights
                .iter()
                .enumerate()
                .map(|(x, &lw)| libm::exp(lw - self.log_z) * f(x)),
        )
    }

    pub fn spin_expectation(&self, m: &SpinMonomial) -> f64 {
        self.expect(|x| m.eval_index(x as u64))
    }

    /// `(ω(H), ω((H - ω(H))²))`.
    pub fn energy_moments(&self) -> Result<(f64, f64)> {
        let e = self.require_energies()?;
        let p = self.probabilities();
        let mean = compensated_sum(p.iter().zip(e).map(|(p, e)| p * e));
        let var = compensated_sum(p.iter().zip(e).map(|(p, e)| p * (e - mean) * (e - mean)));
        Ok((mean, var))
    }

    fn require_energies(&self) -> Result<&[f64]> {
        self.energies
            .as_deref()
            .ok_or_else(|| Error::Unsupported("ensemble has no energy table".into()))
    }
}

/// Exact ensemble for one realization at one inverse temperature.
pub fn build_gibbs(real: &CouplingRealization, beta: Beta) -> Result<GibbsEnsemble> {
    Ok(GibbsEnsemble::new(&EnergyTable::enumerate(real)?, beta))
}

/// `log Σ_σ exp(-βH(σ))` for one realization.
pub fn pressure_realization(real: &CouplingRealization, beta: Beta) -> Result<f64> {
    Ok(build_gibbs(real, beta)?.log_z)
}

/// Thermal two-point functions `ω(σ_kσ_l)`, row-major `N × N`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.data[k * self.n + l]
    }
}

pub fn correlation_matrix(g: &GibbsEnsemble) -> CorrelationMatrix {
    let n = g.n_sites();
    let p = g.probabilities();
    let mut acc = vec![CompensatedSum::new(); n * n];
    for (x, &px) in p.iter().enumerate() {
        for k in 0..n {
            for l in k + 1..n {
                let same = ((x >> k) ^ (x >> l)) & 1 == 0;
                acc[k * n + l].add(if same { px } else { -px });
            }
        }
    }
    let mut data = vec![0.0; n * n];
    for k in 0..n {
        data[k * n + k] = 1.0;
        for l in k + 1..n {
            let v = acc[k * n + l].value();
            data[k * n + l] = v;
            data[l * n + k] = v;
        }
    }
    CorrelationMatrix { n, data }
}

/// `E[c12]` from two-point functions: `(1/N²) Σ ω(σ_kσ_l)²` for SK,
/// `(1/dN) Σ_edges ω(σ_iσ_j)²` for EA.
pub fn pair_overlap_from_correlations(g: &GibbsEnsemble) -> f64 {
    let c = correlation_matrix(g);
    let den = g.model.overlap_denominator() as f64;
    match g.model.family {
        Family::Sk | Family::Cw => compensated_sum(c.data.iter().map(|v| v * v)) / den,
        Family::Ea => {
            compensated_sum(g.model.edges().iter().map(|&(i, j)| c.get(i, j) * c.get(i, j))) / den
        }
    }
}

/// Overlap as a function of the disagreement pattern, plus cached
/// Walsh–Hadamard spectra of its low powers.
#[derive(Clone, Debug)]
pub struct OverlapKernel {
    pub model: ModelSpec,
    numerators: Vec<i64>,
    denominator: u64,
    spectra: Vec<Vec<f64>>,
}

impl OverlapKernel {
    /// Kernel with spectra of `c^1 … c^max_power` precomputed.
    pub fn new(model: &ModelSpec, max_power: u32) -> Result<Self> {
        let model = model.validated()?;
        Capacity::default().check_ensemble(model.n_sites)?;
        let n = model.n_sites;
        let edges = model.edges();
        let numerators: Vec<i64> = (0..1u64 << n)
            .map(|w| model.overlap_numerator_words(&edges, &[w]))
            .collect();
        let mut kernel = Self {
            model,
            numerators,
            denominator: model.overlap_denominator(),
            spectra: Vec::new(),
        };
        kernel.spectra = (1..=max_power).map(|k| kernel.compute_spectrum(k)).collect();
        Ok(kernel)
    }

    pub fn n_sites(&self) -> usize {
        self.model.n_sites
    }

    pub fn numerator(&self, w: usize) -> i64 {
        self.numerators[w]
    }

    #[inline]
    pub fn value(&self, w: usize) -> f64 {
        self.numerators[w] as f64 / self.denominator as f64
    }

    pub fn overlap_value(&self, w: usize) -> OverlapValue {
        OverlapValue {
            numerator: self.numerators[w],
            denominator: self.denominator,
        }
    }

    pub fn power_table(&self, k: u32) -> Vec<f64> {
        (0..self.numerators.len())
            .map(|w| libm::pow(self.value(w), k as f64))
            .collect()
    }

    fn compute_spectrum(&self, k: u32) -> Vec<f64> {
        let mut t = self.power_table(k);
        walsh_hadamard(&mut t);
        t
    }

    /// Walsh–Hadamard spectrum of `w ↦ c(w)^k`.
    pub fn spectrum(&self, k: u32) -> Cow<'_, [f64]> {
        match self.spectra.get(k as usize - 1) {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned(self.compute_spectrum(k)),
        }
    }

    fn check(&self, g: &GibbsEnsemble) -> Result<()> {
        if g.model != self.model {
            return Err(Error::InvalidSpec(format!(
                "kernel built for {:?} used with {:?}",
                self.model, g.model
            )));
        }
        Ok(())
    }
}

/// How replica expectations are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentPath {
    /// XOR correlations along the replica tree; cyclic monomials fall back
    /// to enumeration.
    Spectral,
    /// Direct sum over all replica tuples.
    Enumeration,
}

/// `E` over independent replicas drawn from `g` of an overlap monomial times
/// energy insertions.
pub fn replica_expectation(
    g: &GibbsEnsemble,
    kernel: &OverlapKernel,
    obs: &ReplicaObservable,
    path: MomentPath,
) -> Result<f64> {
    kernel.check(g)?;
    let arity = obs.arity();
    if arity == 0 {
        return Ok(1.0);
    }
    let p = g.probabilities();
    let weights = node_weights(g, &p, obs)?;
    match path {
        MomentPath::Spectral if obs.monomial.is_forest() => {
            Ok(tree_expectation(&weights, kernel, &obs.monomial))
        }
        _ => {
            let bits = arity * g.n_sites();
            if bits > ENUMERATION_BITS {
                return Err(Error::Capacity {
                    engine: "exact-enumeration",
                    n_sites: g.n_sites(),
                    limit: ENUMERATION_BITS / arity,
                });
            }
            Ok(enumerate_expectation(&weights, kernel, &obs.monomial))
        }
    }
}

/// `E[monomial]` over independent replicas, restricted to at most three
/// replicas and total degree four.
pub fn overlap_moment_exact(
    g: &GibbsEnsemble,
    kernel: &OverlapKernel,
    monomial: &OverlapMonomial,
    path: MomentPath,
) -> Result<f64> {
    if monomial.arity() > 3 || monomial.degree() > 4 {
        return Err(Error::InvalidMonomial(format!(
            "{monomial}: at most 3 replicas and degree 4 supported"
        )));
    }
    replica_expectation(g, kernel, &ReplicaObservable::plain(monomial.clone()), path)
}

/// Per-replica weight `p(x) Π H(x)^k`; `None` for a plain `p`.
fn node_weights(
    g: &GibbsEnsemble,
    p: &[f64],
    obs: &ReplicaObservable,
) -> Result<Vec<Option<Vec<f64>>>> {
    let arity = obs.arity();
    let mut out: Vec<Option<Vec<f64>>> = vec![None; arity];
    for &(r, k) in &obs.insertions {
        let e = g.require_energies()?;
        let w = out[r].get_or_insert_with(|| p.to_vec());
        for (wx, &ex) in w.iter_mut().zip(e) {
            *wx *= libm::pow(ex, k as f64);
        }
    }
    Ok(out
        .into_iter()
        .map(|w| Some(w.unwrap_or_else(|| p.to_vec())))
        .collect())
}

fn tree_expectation(
    weights: &[Option<Vec<f64>>],
    kernel: &OverlapKernel,
    m: &OverlapMonomial,
) -> f64 {
    let r = weights.len();
    let mut adj: Vec<Vec<(usize, u32)>> = vec![Vec::new(); r];
    for &(a, b, k) in m.factors() {
        adj[a].push((b, k));
        adj[b].push((a, k));
    }
    let mut visited = vec![false; r];
    let mut result = 1.0;
    for root in 0..r {
        if visited[root] {
            continue;
        }
        if adj[root].is_empty() {
            visited[root] = true;
            let w = weights[root].as_deref().expect("node weight");
            result *= compensated_sum(w.iter().copied());
            continue;
        }
        let q = subtree(root, usize::MAX, &adj, weights, kernel, &mut visited);
        result *= compensated_sum(q);
    }
    result
}

fn subtree(
    v: usize,
    parent: usize,
    adj: &[Vec<(usize, u32)>],
    weights: &[Option<Vec<f64>>],
    kernel: &OverlapKernel,
    visited: &mut [bool],
) -> Vec<f64> {
    visited[v] = true;
    let mut q = weights[v].clone().expect("node weight");
    for &(u, k) in &adj[v] {
        if u == parent {
            continue;
        }
        let child = subtree(u, v, adj, weights, kernel, visited);
        let msg = xor_convolve(&child, &kernel.spectrum(k));
        for (a, b) in q.iter_mut().zip(msg) {
            *a *= b;
        }
    }
    q
}

fn enumerate_expectation(
    weights: &[Option<Vec<f64>>],
    kernel: &OverlapKernel,
    m: &OverlapMonomial,
) -> f64 {
    let r = weights.len();
    // factors grouped by their larger replica, so each is applied as soon as
    // both endpoints are fixed
    let mut closing: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); r];
    for &(a, b, k) in m.factors() {
        closing[b].push((a, kernel.power_table(k)));
    }
    let w: Vec<&[f64]> = weights
        .iter()
        .map(|w| w.as_deref().expect("node weight"))
        .collect();
    let mut xs = vec![0usize; r];
    fn level(
        v: usize,
        xs: &mut [usize],
        w: &[&[f64]],
        closing: &[Vec<(usize, Vec<f64>)>],
    ) -> f64 {
        let mut acc = CompensatedSum::new();
        for x in 0..w[v].len() {
            let mut term = w[v][x];
            if term == 0.0 {
                continue;
            }
            for (a, table) in &closing[v] {
                term *= table[xs[*a] ^ x];
            }
            if v + 1 < w.len() {
                xs[v] = x;
                term *= level(v + 1, xs, w, closing);
            }
            acc.add(term);
        }
        acc.value()
    }
    level(0, &mut xs, &w, &closing)
}

/// One point of a joint three-replica overlap law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMass {
    pub c12: OverlapValue,
    pub c23: OverlapValue,
    pub c31: OverlapValue,
    pub mass: f64,
}

/// Exact overlap distribution of two (or three) independent replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapHistogram {
    pub n_replicas: usize,
    /// Pair marginal (`c12`): sorted distinct values and their masses.
    pub support: Vec<OverlapValue>,
    pub mass: Vec<f64>,
    /// Joint law of `(c12, c23, c31)`; empty for two replicas.
    pub joint: Vec<JointMass>,
}

impl OverlapHistogram {
    fn from_map(n_replicas: usize, map: BTreeMap<OverlapValue, f64>, joint: Vec<JointMass>) -> Self {
        let (support, mass) = map.into_iter().unzip();
        Self {
            n_replicas,
            support,
            mass,
            joint,
        }
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.mass.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.support.iter().zip(&self.mass).map(|(s, m)| s.value() * m))
    }

    /// Marginal law of one pair of a three-replica histogram
    /// (`0 → c12`, `1 → c23`, `2 → c31`).
    pub fn pair_marginal(&self, which: usize) -> Vec<(OverlapValue, f64)> {
        let mut map: BTreeMap<OverlapValue, CompensatedSum> = BTreeMap::new();
        for j in &self.joint {
            let key = [j.c12, j.c23, j.c31][which];
            map.entry(key).or_default().add(j.mass);
        }
        map.into_iter().map(|(k, v)| (k, v.value())).collect()
    }
}

/// Exact law of `c(σ, τ)` under `p ⊗ p`, via `P(w) = Σ_x p(x) p(x ⊕ w)`.
pub fn overlap_pair_distribution(g: &GibbsEnsemble, kernel: &OverlapKernel) -> Result<OverlapHistogram> {
    overlap_pair_distribution_with(g, kernel, &Capacity::default())
}

pub fn overlap_pair_distribution_with(
    g: &GibbsEnsemble,
    kernel: &OverlapKernel,
    cap: &Capacity,
) -> Result<OverlapHistogram> {
    kernel.check(g)?;
    cap.check_pairs(g.n_sites())?;
    let mut spec = g.probabilities();
    walsh_hadamard(&mut spec);
    for s in &mut spec {
        *s *= *s;
    }
    walsh_hadamard(&mut spec);
    let scale = 1.0 / spec.len() as f64;
    let mut map: BTreeMap<OverlapValue, CompensatedSum> = BTreeMap::new();
    for (w, v) in spec.iter().enumerate() {
        map.entry(kernel.overlap_value(w)).or_default().add(v * scale);
    }
    Ok(OverlapHistogram::from_map(
        2,
        map.into_iter().map(|(k, v)| (k, v.value())).collect(),
        Vec::new(),
    ))
}

/// Exact joint law of `(c12, c23, c31)` under `p ⊗ p ⊗ p` (`8^N` terms).
pub fn overlap_triple_distribution(
    g: &GibbsEnsemble,
    kernel: &OverlapKernel,
) -> Result<OverlapHistogram> {
    overlap_triple_distribution_with(g, kernel, &Capacity::default())
}

pub fn overlap_triple_distribution_with(
    g: &GibbsEnsemble,
    kernel: &OverlapKernel,
    cap: &Capacity,
) -> Result<OverlapHistogram> {
    kernel.check(g)?;
    cap.check_triples(g.n_sites())?;
    let p = g.probabilities();
    let size = p.len();
    let mut classes: Vec<i64> = kernel.numerators.clone();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let class_of: Vec<usize> = (0..size)
        .map(|w| classes.binary_search(&kernel.numerators[w]).expect("class"))
        .collect();
    let mut total = vec![CompensatedSum::new(); k * k * k];
    let mut local = vec![0.0; k * k * k];
    for x1 in 0..size {
        local.iter_mut().for_each(|v| *v = 0.0);
        for x2 in 0..size {
            let p12 = p[x1] * p[x2];
            let c12 = class_of[x1 ^ x2];
            for x3 in 0..size {
                let idx = (c12 * k + class_of[x2 ^ x3]) * k + class_of[x3 ^ x1];
                local[idx] += p12 * p[x3];
            }
        }
        for (t, &l) in total.iter_mut().zip(&local) {
            t.add(l);
        }
    }
    let den = kernel.denominator;
    let ov = |c: usize| OverlapValue {
        numerator: classes[c],
        denominator: den,
    };
    let mut joint = Vec::new();
    let mut marginal: BTreeMap<OverlapValue, CompensatedSum> = BTreeMap::new();
    for a in 0..k {
        for b in 0..k {
            for c in 0..k {
                let mass = total[(a * k + b) * k + c].value();
                if mass == 0.0 {
                    continue;
                }
                marginal.entry(ov(a)).or_default().add(mass);
                joint.push(JointMass {
                    c12: ov(a),
                    c23: ov(b),
                    c31: ov(c),
                    mass,
                });
            }
        }
    }
    Ok(OverlapHistogram::from_map(
        3,
        marginal.into_iter().map(|(k, v)| (k, v.value())).collect(),
        joint,
    ))
}

/// Exact Curie–Weiss expectation of a product of distinct spins, summing over
/// the magnetization with binomial multiplicities. `O(N)` in time.
pub fn cw_observable(n_sites: usize, beta: Beta, monomial: &SpinMonomial) -> Result<f64> {
    let k = monomial.degree();
    if k > 4 {
        return Err(Error::InvalidMonomial(format!(
            "Curie-Weiss observable supports degree <= 4, got {k}"
        )));
    }
    if monomial.sites().iter().any(|&i| i >= n_sites) {
        return Err(Error::InvalidMonomial(format!(
            "{monomial} has a site beyond N = {n_sites}"
        )));
    }
    cw_distinct_moment(n_sites, beta, k)
}

/// `ω(σ_1 ⋯ σ_k)` for the Curie–Weiss model; any `k` distinct sites.
pub fn cw_distinct_moment(n_sites: usize, beta: Beta, k: usize) -> Result<f64> {
    if n_sites == 0 || n_sites > crate::model::MAX_SITES {
        return Err(Error::InvalidSpec(format!("bad Curie-Weiss size {n_sites}")));
    }
    if k > 4 || k > n_sites {
        return Err(Error::InvalidMonomial(format!(
            "need distinct-spin degree <= min(4, N), got {k}"
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    // zero field: odd moments vanish; β = 0 is the product measure
    if k % 2 == 1 || beta.value() == 0.0 {
        return Ok(0.0);
    }
    let n = n_sites;
    let nf = n as f64;
    let b = beta.value();
    let mut log_binom = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    log_binom.push(0.0);
    for j in 0..n {
        acc += libm::log((n - j) as f64) - libm::log((j + 1) as f64);
        log_binom.push(acc);
    }
    let lw: Vec<f64> = (0..=n)
        .map(|up| {
            let m = (2 * up) as f64 - nf;
            log_binom[up] + b * m * m / (2.0 * nf)
        })
        .collect();
    let lz = log_sum_exp(&lw);
    let ni = n as i128;
    let sum = compensated_sum((0..=n).map(|up| {
        let m = 2 * up as i128 - ni;
        let m2 = m * m;
        // Σ over ordered distinct k-tuples of σ_i σ_j ⋯ as a polynomial in M
        let poly = match k {
            2 => m2 - ni,
            _ => m2 * m2 - 6 * m2 * ni + 3 * ni * ni + 8 * m2 - 6 * ni,
        };
        libm::exp(lw[up] - lz) * poly as f64
    }));
    let falling: f64 = (0..k).map(|j| nf - j as f64).product();
    Ok(sum / falling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{energy, sample_couplings, SpinConfiguration};
    use crate::rng::SeedLabel;
    use core::f64::consts::LN_2;

    fn beta(b: f64) -> Beta {
        Beta::new(b).unwrap()
    }

    fn sk_real(n: usize, seed: u64) -> CouplingRealization {
        sample_couplings(&ModelSpec::sk(n).unwrap(), SeedLabel::new(seed, 0)).unwrap()
    }

    #[test]
    fn gray_code_energies_match_direct_evaluation() {
        for model in [
            ModelSpec::sk(12).unwrap(),
            ModelSpec::ea(2, 3).unwrap(),
            ModelSpec::cw(11).unwrap(),
        ] {
            let real = sample_couplings(&model, SeedLabel::new(3, 1)).unwrap();
            let table = EnergyTable::enumerate(&real).unwrap();
            for x in 0..1u64 << model.n_sites {
                let s = SpinConfiguration::from_index(model.n_sites, x).unwrap();
                let e = energy(&real, &s).unwrap();
                assert!((table.energies[x as usize] - e).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn beta_zero_is_uniform() {
        let real = sk_real(9, 1);
        let g = build_gibbs(&real, beta(0.0)).unwrap();
        assert_eq!(g.log_z, 9.0 * LN_2);
        assert!(g.probabilities().iter().all(|&p| p == 1.0 / 512.0));
    }

    #[test]
    fn cw_two_sites_by_hand() {
        let real = CouplingRealization::zero(ModelSpec::cw(2).unwrap());
        let g = build_gibbs(&real, beta(1.0)).unwrap();
        let e = core::f64::consts::E;
        let p = g.probabilities();
        // bit pattern 0b11 = (+,+), 0b00 = (-,-)
        assert!((p[3] - e / (2.0 * e + 2.0)).abs() < 1e-15);
        assert!((p[0] - e / (2.0 * e + 2.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (2.0 * e + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance_of_log_weights() {
        let real = sk_real(6, 2);
        let g = build_gibbs(&real, beta(0.8)).unwrap();
        let shifted: Vec<f64> = g.log_weights.iter().map(|w| w + 123.5).collect();
        let h = GibbsEnsemble::from_log_weights(g.model, g.beta, shifted).unwrap();
        for (a, b) in g.probabilities().iter().zip(h.probabilities()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stable_at_large_beta() {
        let real = sk_real(10, 4);
        let g = build_gibbs(&real, beta(50.0)).unwrap();
        assert!(g.log_z.is_finite());
        let total = compensated_sum(g.probabilities());
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pressure_examples() {
        let zero = CouplingRealization::zero(ModelSpec::sk(7).unwrap());
        for b in [0.0, 0.5, 3.0] {
            assert_eq!(pressure_realization(&zero, beta(b)).unwrap(), 7.0 * LN_2);
        }
        let real = sk_real(8, 9);
        for b in [0.3, 1.0, 2.5] {
            let lz = pressure_realization(&real, beta(b)).unwrap();
            let table = EnergyTable::enumerate(&real).unwrap();
            let top = table
                .energies
                .iter()
                .map(|e| -b * e)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(lz >= top && lz <= 8.0 * LN_2 + top + 1e-12);
        }
    }

    #[test]
    fn capacity_errors() {
        let real = CouplingRealization::zero(ModelSpec::sk(27).unwrap());
        assert!(matches!(
            build_gibbs(&real, beta(1.0)),
            Err(Error::Capacity { .. })
        ));
        let model = ModelSpec::sk(14).unwrap();
        let kernel = OverlapKernel::new(&model, 1).unwrap();
        let g = build_gibbs(&CouplingRealization::zero(model), beta(0.0)).unwrap();
        assert!(matches!(
            overlap_pair_distribution(&g, &kernel),
            Err(Error::Capacity { .. })
        ));
        let cap = Capacity {
            pairs: 14,
            ..Capacity::default()
        };
        assert!(overlap_pair_distribution_with(&g, &kernel, &cap).is_ok());
    }

    #[test]
    fn correlation_matrix_examples() {
        let g = build_gibbs(&sk_real(6, 1), beta(0.0)).unwrap();
        let c = correlation_matrix(&g);
        for k in 0..6 {
            for l in 0..6 {
                assert_eq!(c.get(k, l), if k == l { 1.0 } else { 0.0 });
            }
        }
        let cw = build_gibbs(&CouplingRealization::zero(ModelSpec::cw(8).unwrap()), beta(5.0))
            .unwrap();
        let c = correlation_matrix(&cw);
        assert!(c.data.iter().all(|&v| v > 0.99 && v <= 1.0));
    }

    #[test]
    fn beta_zero_pair_distribution_sk4() {
        let model = ModelSpec::sk(4).unwrap();
        let kernel = OverlapKernel::new(&model, 1).unwrap();
        let g = build_gibbs(&CouplingRealization::zero(model), beta(0.0)).unwrap();
        let h = overlap_pair_distribution(&g, &kernel).unwrap();
        let values: Vec<f64> = h.support.iter().map(|s| s.value()).collect();
        assert_eq!(values, [0.0, 0.25, 1.0]);
        assert!((h.mass[0] - 6.0 / 16.0).abs() < 1e-15);
        assert!((h.mass[1] - 8.0 / 16.0).abs() < 1e-15);
        assert!((h.mass[2] - 2.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn overlap_moment_examples() {
        let model = ModelSpec::sk(8).unwrap();
        let kernel = OverlapKernel::new(&model, 2).unwrap();
        let g = build_gibbs(&sk_real(8, 3), beta(0.0)).unwrap();
        let c12 = OverlapMonomial::parse("c12").unwrap();
        let v = overlap_moment_exact(&g, &kernel, &c12, MomentPath::Spectral).unwrap();
        assert!((v - 1.0 / 8.0).abs() < 1e-14);
        let one = OverlapMonomial::one();
        assert_eq!(
            overlap_moment_exact(&g, &kernel, &one, MomentPath::Spectral).unwrap(),
            1.0
        );
        let too_many = OverlapMonomial::parse("c12*c34").unwrap();
        assert!(overlap_moment_exact(&g, &kernel, &too_many, MomentPath::Spectral).is_err());
    }

    #[test]
    fn cw_observable_examples() {
        let s12 = SpinMonomial::parse("s1*s2").unwrap();
        assert_eq!(cw_observable(10, beta(0.0), &s12).unwrap(), 0.0);
        let e = core::f64::consts::E;
        let v = cw_observable(2, beta(1.0), &s12).unwrap();
        assert!((v - (e - 1.0) / (e + 1.0)).abs() < 1e-14);
        assert!((v - 0.4621).abs() < 1e-4);
        let s34 = SpinMonomial::parse("s3*s4").unwrap();
        assert_eq!(
            cw_observable(9, beta(0.7), &s12).unwrap(),
            cw_observable(9, beta(0.7), &s34).unwrap()
        );
        assert!(cw_observable(9, beta(0.7), &SpinMonomial::first(5)).is_err());
    }
}
