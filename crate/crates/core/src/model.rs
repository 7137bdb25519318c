//! Spin configurations, model specifications, overlaps and the realization of
//! centered Gaussian Hamiltonians with a prescribed covariance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::rng::{GaussianStream, Purpose, SeedLabel};

/// Largest system any engine accepts.
pub const MAX_SITES: usize = 1 << 20;

/// Ising configuration packed into 64-bit words; bit `i` set means `σ_i = +1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfiguration {
    n_sites: usize,
    words: Vec<u64>,
}

impl SpinConfiguration {
    /// All spins down (`σ_i = -1`).
    pub fn all_down(n_sites: usize) -> Self {
        Self {
            n_sites,
            words: vec![0; n_sites.div_ceil(64)],
        }
    }

    pub fn all_up(n_sites: usize) -> Self {
        let mut s = Self::all_down(n_sites);
        s.flip_all();
        s
    }

    /// Configuration whose bit pattern is `index` (the exact engines' order).
    pub fn from_index(n_sites: usize, index: u64) -> Result<Self> {
        if n_sites == 0 || n_sites > 64 {
            return Err(Error::InvalidSpec(format!(
                "index construction needs 1 <= N <= 64, got {n_sites}"
            )));
        }
        if n_sites < 64 && index >> n_sites != 0 {
            return Err(Error::InvalidSpec(format!(
                "index {index} has bits beyond N = {n_sites}"
            )));
        }
        Ok(Self {
            n_sites,
            words: vec![index],
        })
    }

    /// Uniform random configuration drawn from `rng`.
    pub fn random<R: rand_chacha::rand_core::RngCore>(n_sites: usize, rng: &mut R) -> Self {
        let mut s = Self::all_down(n_sites);
        for w in &mut s.words {
            *w = rng.next_u64();
        }
        s.clear_padding();
        s
    }

    /// Uniform random configuration from the synthetic stream `k` of `label`.
    pub fn sampled(n_sites: usize, label: SeedLabel, k: u32) -> Self {
        Self::random(n_sites, &mut crate::rng::stream(label, Purpose::Synthetic(k)))
    }

    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut s = Self::all_down(spins.len());
        for (i, &v) in spins.iter().enumerate() {
            match v {
                1 => s.words[i / 64] |= 1 << (i % 64),
                -1 => {}
                other => {
                    return Err(Error::InvalidSpec(format!(
                        "spin values must be ±1, got {other}"
                    )))
                }
            }
        }
        Ok(s)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit pattern as a single word, for `N <= 64`.
    pub fn index(&self) -> Option<u64> {
        (self.words.len() == 1).then(|| self.words[0])
    }

    #[inline]
    pub fn spin(&self, i: usize) -> i8 {
        if self.words[i / 64] >> (i % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn spins(&self) -> Vec<i8> {
        (0..self.n_sites).map(|i| self.spin(i)).collect()
    }

    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1 << (i % 64);
    }

    /// Global spin flip; keeps every bit beyond `N - 1` clear.
    pub fn flip_all(&mut self) {
        for w in &mut self.words {
            *w = !*w;
        }
        self.clear_padding();
    }

    fn clear_padding(&mut self) {
        let rem = self.n_sites % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn magnetization(&self) -> i64 {
        let up: u32 = self.words.iter().map(|w| w.count_ones()).sum();
        2 * up as i64 - self.n_sites as i64
    }

    /// Number of sites where the two configurations differ.
    pub fn hamming(&self, other: &Self) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Sherrington–Kirkpatrick: covariance `N q²`.
    Sk,
    /// Edwards–Anderson on a hypercubic lattice: covariance `N · link overlap`.
    Ea,
    /// Curie–Weiss in zero field; deterministic control model.
    Cw,
}

impl Family {
    pub fn is_gaussian(self) -> bool {
        !matches!(self, Family::Cw)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Sk => "sk",
            Family::Ea => "ea",
            Family::Cw => "cw",
        }
    }
}

fn default_periodic() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub dimension: usize,
    pub side: usize,
    #[serde(default = "default_periodic")]
    pub periodic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub n_sites: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
}

impl ModelSpec {
    pub fn sk(n_sites: usize) -> Result<Self> {
        Self {
            family: Family::Sk,
            n_sites,
            lattice: None,
        }
        .validated()
    }

    pub fn cw(n_sites: usize) -> Result<Self> {
        Self {
            family: Family::Cw,
            n_sites,
            lattice: None,
        }
        .validated()
    }

    /// Periodic Edwards–Anderson model on an `L^d` torus.
    pub fn ea(dimension: usize, side: usize) -> Result<Self> {
        Self::ea_with_boundary(dimension, side, true)
    }

    pub fn ea_with_boundary(dimension: usize, side: usize, periodic: bool) -> Result<Self> {
        let n = checked_pow(side, dimension)
            .ok_or_else(|| Error::InvalidSpec(format!("lattice {side}^{dimension} too large")))?;
        Self {
            family: Family::Ea,
            n_sites: n,
            lattice: Some(Lattice {
                dimension,
                side,
                periodic,
            }),
        }
        .validated()
    }

    /// Same family (and lattice dimension/boundary) at a different size.
    /// For EA, `n_sites` must be a perfect `d`-th power.
    pub fn resized(&self, n_sites: usize) -> Result<Self> {
        match (self.family, self.lattice) {
            (Family::Sk, _) => Self::sk(n_sites),
            (Family::Cw, _) => Self::cw(n_sites),
            (Family::Ea, Some(lat)) => {
                let side = integer_root(n_sites, lat.dimension).ok_or_else(|| {
                    Error::InvalidSpec(format!(
                        "N = {n_sites} is not a perfect power of dimension {}",
                        lat.dimension
                    ))
                })?;
                Self::ea_with_boundary(lat.dimension, side, lat.periodic)
            }
            (Family::Ea, None) => Err(Error::InvalidSpec("EA spec without lattice".into())),
        }
    }

    pub fn validated(self) -> Result<Self> {
        if self.n_sites == 0 || self.n_sites > MAX_SITES {
            return Err(Error::InvalidSpec(format!(
                "n_sites must be in 1..={MAX_SITES}, got {}",
                self.n_sites
            )));
        }
        match (self.family, self.lattice) {
            (Family::Sk | Family::Cw, None) => Ok(self),
            (Family::Sk | Family::Cw, Some(_)) => Err(Error::InvalidSpec(format!(
                "{} model takes no lattice",
                self.family.name()
            ))),
            (Family::Ea, None) => Err(Error::InvalidSpec("EA model needs a lattice".into())),
            (Family::Ea, Some(lat)) => {
                if lat.dimension == 0 || lat.side < 2 {
                    return Err(Error::InvalidSpec(format!(
                        "EA lattice needs d >= 1 and L >= 2, got d = {}, L = {}",
                        lat.dimension, lat.side
                    )));
                }
                if checked_pow(lat.side, lat.dimension) != Some(self.n_sites) {
                    return Err(Error::InvalidSpec(format!(
                        "L^d = {}^{} does not equal N = {}",
                        lat.side, lat.dimension, self.n_sites
                    )));
                }
                Ok(self)
            }
        }
    }

    /// Undirected nearest-neighbour edges of an EA lattice, site-major then
    /// direction-major. A periodic lattice has exactly `d·N` edges (for
    /// `L = 2` the two bonds between a pair appear as parallel edges).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let Some(lat) = self.lattice else {
            return Vec::new();
        };
        let mut out = Vec::with_capacity(lat.dimension * self.n_sites);
        for site in 0..self.n_sites {
            let mut stride = 1;
            for _ in 0..lat.dimension {
                let coord = (site / stride) % lat.side;
                if coord + 1 < lat.side {
                    out.push((site, site + stride));
                } else if lat.periodic {
                    out.push((site, site + stride - lat.side * stride));
                }
                stride *= lat.side;
            }
        }
        out
    }

    /// Parity of the coordinate sum of every site (checkerboard colouring).
    pub fn site_parity(&self) -> Vec<u8> {
        match self.lattice {
            None => vec![0; self.n_sites],
            Some(lat) => (0..self.n_sites)
                .map(|site| {
                    let mut rest = site;
                    let mut sum = 0;
                    for _ in 0..lat.dimension {
                        sum += rest % lat.side;
                        rest /= lat.side;
                    }
                    (sum % 2) as u8
                })
                .collect(),
        }
    }

    /// Denominator of the exact rational overlap.
    pub fn overlap_denominator(&self) -> u64 {
        match self.family {
            Family::Sk | Family::Cw => (self.n_sites as u64).pow(2),
            Family::Ea => {
                let d = self.lattice.map_or(1, |l| l.dimension) as u64;
                d * self.n_sites as u64
            }
        }
    }

    /// Overlap numerator as a function of the disagreement pattern
    /// `w = a ⊕ b` (bit set where the configurations differ).
    pub(crate) fn overlap_numerator_words(&self, edges: &[(usize, usize)], w: &[u64]) -> i64 {
        let bit = |i: usize| (w[i / 64] >> (i % 64)) & 1;
        match self.family {
            Family::Sk | Family::Cw => {
                let diff: u32 = w.iter().map(|x| x.count_ones()).sum();
                let q = self.n_sites as i64 - 2 * diff as i64;
                q * q
            }
            Family::Ea => edges
                .iter()
                .map(|&(i, j)| if bit(i) == bit(j) { 1 } else { -1 })
                .sum(),
        }
    }

    fn check(&self, s: &SpinConfiguration) -> Result<()> {
        if s.n_sites != self.n_sites {
            return Err(Error::SizeMismatch {
                expected: self.n_sites,
                found: s.n_sites,
            });
        }
        Ok(())
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    if d == 0 {
        return None;
    }
    let guess = libm::round(libm::pow(n as f64, 1.0 / d as f64)) as usize;
    (guess.saturating_sub(1)..=guess + 1).find(|&l| checked_pow(l, d) == Some(n))
}

/// Exact rational overlap `numerator / denominator`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OverlapValue {
    pub numerator: i64,
    pub denominator: u64,
}

impl OverlapValue {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl PartialOrd for OverlapValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OverlapValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.numerator as i128 * other.denominator as i128;
        let rhs = other.numerator as i128 * self.denominator as i128;
        lhs.cmp(&rhs)
    }
}

/// Inverse temperature, finite and nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Beta(f64);

impl Beta {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidBeta(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Unchecked sign, for central differences straddling β = 0.
    pub(crate) fn signed(value: f64) -> Self {
        Self(value)
    }
}

/// Overlap `c_N(σ, τ)`: `q²` for SK (and CW), the link overlap
/// `(1/dN) Σ_edges σ_iσ_jτ_iτ_j` for EA.
pub fn overlap(
    model: &ModelSpec,
    a: &SpinConfiguration,
    b: &SpinConfiguration,
) -> Result<OverlapValue> {
    model.check(a)?;
    model.check(b)?;
    let w: Vec<u64> = a.words.iter().zip(&b.words).map(|(x, y)| x ^ y).collect();
    let edges = model.edges();
    Ok(OverlapValue {
        numerator: model.overlap_numerator_words(&edges, &w),
        denominator: model.overlap_denominator(),
    })
}

/// Where each coupling sits in the Hamiltonian: slot `k` multiplies
/// `scale · σ_i σ_j` for `slots[k] = (i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayout {
    pub slots: Vec<(u32, u32)>,
    pub scale: f64,
}

impl CouplingLayout {
    pub fn for_model(model: &ModelSpec) -> Self {
        let n = model.n_sites;
        match model.family {
            Family::Sk => Self {
                slots: (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i as u32, j as u32)))
                    .collect(),
                scale: 1.0 / libm::sqrt(n as f64),
            },
            Family::Ea => {
                let d = model.lattice.map_or(1, |l| l.dimension);
                Self {
                    slots: model
                        .edges()
                        .into_iter()
                        .map(|(i, j)| (i as u32, j as u32))
                        .collect(),
                    scale: 1.0 / libm::sqrt(d as f64),
                }
            }
            Family::Cw => Self {
                slots: Vec::new(),
                scale: 0.0,
            },
        }
    }

    /// Same slots with a different normalization (used to inject faults).
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Closed-form `E[H(σ)H(τ)]` for i.i.d. unit-variance couplings.
    pub fn covariance(&self, a: &SpinConfiguration, b: &SpinConfiguration) -> f64 {
        let s2 = self.scale * self.scale;
        compensated_sum(self.slots.iter().map(|&(i, j)| {
            let (i, j) = (i as usize, j as usize);
            let p = a.spin(i) as i32 * a.spin(j) as i32 * b.spin(i) as i32 * b.spin(j) as i32;
            s2 * p as f64
        }))
    }
}

/// One draw of the Gaussian disorder.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRealization {
    pub model: ModelSpec,
    pub couplings: Vec<f64>,
    /// `None` for hand-built realizations.
    pub seed_label: Option<SeedLabel>,
}

impl CouplingRealization {
    pub fn from_couplings(model: ModelSpec, couplings: Vec<f64>) -> Result<Self> {
        let expected = CouplingLayout::for_model(&model).slots.len();
        if couplings.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "{} model with N = {} needs {expected} couplings, got {}",
                model.family.name(),
                model.n_sites,
                couplings.len()
            )));
        }
        Ok(Self {
            model,
            couplings,
            seed_label: None,
        })
    }

    pub fn zero(model: ModelSpec) -> Self {
        let len = CouplingLayout::for_model(&model).slots.len();
        Self {
            model,
            couplings: vec![0.0; len],
            seed_label: None,
        }
    }
}

/// I.i.d. standard normal couplings in the model's layout, a pure function
/// of `label`.
pub fn sample_couplings(model: &ModelSpec, label: SeedLabel) -> Result<CouplingRealization> {
    sample_couplings_for(model, label, Purpose::Couplings)
}

pub(crate) fn sample_couplings_for(
    model: &ModelSpec,
    label: SeedLabel,
    purpose: Purpose,
) -> Result<CouplingRealization> {
    let model = model.validated()?;
    let len = CouplingLayout::for_model(&model).slots.len();
    let mut g = GaussianStream::new(label, purpose);
    let couplings = (0..len).map(|_| g.next_gaussian()).collect();
    Ok(CouplingRealization {
        model,
        couplings,
        seed_label: Some(label),
    })
}

/// `H(σ)`: SK `(1/√N) Σ_{i,j} J_ij σ_iσ_j`, EA `(1/√d) Σ_edges J_e σ_iσ_j`,
/// CW `-(N/2) m²`.
pub fn energy(real: &CouplingRealization, s: &SpinConfiguration) -> Result<f64> {
    real.model.check(s)?;
    let model = &real.model;
    if model.family == Family::Cw {
        let m = s.magnetization() as f64;
        return Ok(-m * m / (2.0 * model.n_sites as f64));
    }
    let layout = CouplingLayout::for_model(model);
    let mut acc = CompensatedSum::new();
    for (&(i, j), &jv) in layout.slots.iter().zip(&real.couplings) {
        let p = s.spin(i as usize) as i32 * s.spin(j as usize) as i32;
        acc.add(jv * p as f64);
    }
    Ok(layout.scale * acc.value())
}

/// Closed-form covariance of the realized Hamiltonian against its target
/// `N c_N(σ, τ)`. Returns `(analytic, target)`.
pub fn verify_covariance(
    model: &ModelSpec,
    a: &SpinConfiguration,
    b: &SpinConfiguration,
) -> Result<(f64, f64)> {
    verify_covariance_with(&CouplingLayout::for_model(model), model, a, b)
}

/// [`verify_covariance`] against an explicit layout.
pub fn verify_covariance_with(
    layout: &CouplingLayout,
    model: &ModelSpec,
    a: &SpinConfiguration,
    b: &SpinConfiguration,
) -> Result<(f64, f64)> {
    if !model.family.is_gaussian() {
        return Err(Error::Unsupported(
            "covariance check needs a Gaussian model (SK or EA)".into(),
        ));
    }
    let c = overlap(model, a, b)?;
    Ok((layout.covariance(a, b), model.n_sites as f64 * c.value()))
}

/// Symmetric pair interaction `H = constant + Σ_{i<j} K_ij σ_iσ_j` in CSR
/// form; what the enumeration and Monte Carlo kernels run on.
#[derive(Clone, Debug)]
pub struct Interaction {
    pub n_sites: usize,
    pub constant: f64,
    pub offsets: Vec<usize>,
    pub targets: Vec<u32>,
    pub weights: Vec<f64>,
}

impl Interaction {
    pub fn from_realization(real: &CouplingRealization) -> Self {
        Self::combined(&[(real, 1.0)])
    }

    /// Interaction of `Σ_k factor_k · H_k` over realizations of one model.
    pub fn combined(parts: &[(&CouplingRealization, f64)]) -> Self {
        let model = parts[0].0.model;
        let n = model.n_sites;
        let mut constant = CompensatedSum::new();
        let mut entries: Vec<(u32, u32, f64)> = Vec::new();
        for &(real, factor) in parts {
            debug_assert_eq!(real.model, model);
            if model.family == Family::Cw {
                // -M²/2N = -1/2 - (1/N) Σ_{i<j} σ_iσ_j
                constant.add(-0.5 * factor);
                for i in 0..n as u32 {
                    for j in i + 1..n as u32 {
                        entries.push((i, j, -factor / n as f64));
                    }
                }
                continue;
            }
            let layout = CouplingLayout::for_model(&model);
            for (&(i, j), &jv) in layout.slots.iter().zip(&real.couplings) {
                let w = factor * layout.scale * jv;
                match i.cmp(&j) {
                    Ordering::Equal => constant.add(w),
                    Ordering::Less => entries.push((i, j, w)),
                    Ordering::Greater => entries.push((j, i, w)),
                }
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(entries.len());
        for (i, j, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }
        let mut degree = vec![0usize; n];
        for &(i, j, _) in &merged {
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cursor = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        for &(i, j, w) in &merged {
            for (a, b) in [(i, j), (j, i)] {
                let slot = cursor[a as usize];
                targets[slot] = b;
                weights[slot] = w;
                cursor[a as usize] += 1;
            }
        }
        Self {
            n_sites: n,
            constant: constant.value(),
            offsets,
            targets,
            weights,
        }
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Local field `Σ_j K_ij σ_j` for spins given as ±1.
    pub fn local_field(&self, spins: &[i8], i: usize) -> f64 {
        self.neighbors(i).map(|(j, w)| w * spins[j] as f64).sum()
    }

    pub fn energy_of(&self, spins: &[i8]) -> f64 {
        let mut acc = CompensatedSum::new();
        for i in 0..self.n_sites {
            for (j, w) in self.neighbors(i) {
                if j > i {
                    acc.add(w * (spins[i] as i32 * spins[j] as i32) as f64);
                }
            }
        }
        self.constant + acc.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(spins: &[i8]) -> SpinConfiguration {
        SpinConfiguration::from_spins(spins).unwrap()
    }

    #[test]
    fn sk_overlap_examples() {
        let m = ModelSpec::sk(4).unwrap();
        let a = cfg(&[1, 1, 1, 1]);
        assert_eq!(overlap(&m, &a, &a).unwrap().value(), 1.0);
        let b = cfg(&[1, 1, -1, -1]);
        assert_eq!(overlap(&m, &a, &b).unwrap().value(), 0.0);
    }

    #[test]
    fn ea_overlap_examples() {
        let m = ModelSpec::ea(1, 4).unwrap();
        let a = cfg(&[1, 1, 1, 1]);
        assert_eq!(overlap(&m, &a, &a).unwrap().value(), 1.0);
        let b = cfg(&[1, -1, 1, -1]);
        assert_eq!(overlap(&m, &a, &b).unwrap().value(), -1.0);
    }

    #[test]
    fn overlap_rejects_size_mismatch() {
        let m = ModelSpec::sk(4).unwrap();
        let a = SpinConfiguration::all_up(4);
        let b = SpinConfiguration::all_up(5);
        assert!(matches!(
            overlap(&m, &a, &b),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn coupling_counts() {
        let label = SeedLabel::new(1, 0);
        let cw = sample_couplings(&ModelSpec::cw(5).unwrap(), label).unwrap();
        assert!(cw.couplings.is_empty());
        let sk = sample_couplings(&ModelSpec::sk(3).unwrap(), label).unwrap();
        assert_eq!(sk.couplings.len(), 9);
        assert_eq!(
            sk,
            sample_couplings(&ModelSpec::sk(3).unwrap(), label).unwrap()
        );
        let ea = sample_couplings(&ModelSpec::ea(2, 4).unwrap(), label).unwrap();
        assert_eq!(ea.couplings.len(), 32);
    }

    #[test]
    fn periodic_ea_has_two_d_neighbors() {
        for (d, l) in [(1, 5), (2, 3), (2, 4), (3, 3)] {
            let m = ModelSpec::ea(d, l).unwrap();
            let edges = m.edges();
            assert_eq!(edges.len(), d * m.n_sites);
            let mut deg = vec![0; m.n_sites];
            for (i, j) in edges {
                deg[i] += 1;
                deg[j] += 1;
            }
            assert!(deg.iter().all(|&k| k == 2 * d));
        }
        let open = ModelSpec::ea_with_boundary(2, 3, false).unwrap();
        assert_eq!(open.edges().len(), 12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ModelSpec::sk(0).is_err());
        assert!(ModelSpec::ea(2, 1).is_err());
        let bad = ModelSpec {
            family: Family::Ea,
            n_sites: 10,
            lattice: Some(Lattice {
                dimension: 2,
                side: 3,
                periodic: true,
            }),
        };
        assert!(bad.validated().is_err());
        assert!(ModelSpec::ea(2, 3).unwrap().resized(10).is_err());
        assert_eq!(
            ModelSpec::ea(2, 3).unwrap().resized(16).unwrap(),
            ModelSpec::ea(2, 4).unwrap()
        );
    }

    #[test]
    fn energy_examples() {
        let sk = ModelSpec::sk(3).unwrap();
        let zero = CouplingRealization::zero(sk);
        assert_eq!(energy(&zero, &cfg(&[1, -1, 1])).unwrap(), 0.0);

        let cw = CouplingRealization::zero(ModelSpec::cw(4).unwrap());
        assert_eq!(energy(&cw, &cfg(&[1, 1, 1, 1])).unwrap(), -2.0);

        let sk2 =
            CouplingRealization::from_couplings(ModelSpec::sk(2).unwrap(), vec![1.0; 4]).unwrap();
        let e = energy(&sk2, &cfg(&[1, 1])).unwrap();
        assert!((e - 2.0 * core::f64::consts::SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn covariance_examples() {
        let m = ModelSpec::sk(4).unwrap();
        let a = cfg(&[1, 1, 1, 1]);
        assert_eq!(verify_covariance(&m, &a, &a).unwrap(), (4.0, 4.0));
        // q = 1/2
        let b = cfg(&[1, 1, 1, -1]);
        let (an, tg) = verify_covariance(&m, &a, &b).unwrap();
        assert!((an - 1.0).abs() < 1e-15 && (tg - 1.0).abs() < 1e-15);

        let ea = ModelSpec::ea(1, 4).unwrap();
        assert_eq!(verify_covariance(&ea, &a, &a).unwrap(), (4.0, 4.0));
        assert!(matches!(
            verify_covariance(&ModelSpec::cw(4).unwrap(), &a, &a),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn interaction_reproduces_energy() {
        for model in [
            ModelSpec::sk(7).unwrap(),
            ModelSpec::ea(2, 3).unwrap(),
            ModelSpec::ea(1, 2).unwrap(),
            ModelSpec::cw(6).unwrap(),
        ] {
            let real = sample_couplings(&model, SeedLabel::new(5, 2)).unwrap();
            let inter = Interaction::from_realization(&real);
            for idx in 0..(1u64 << model.n_sites) {
                let s = SpinConfiguration::from_index(model.n_sites, idx).unwrap();
                let direct = energy(&real, &s).unwrap();
                assert!((inter.energy_of(&s.spins()) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flip_all_keeps_padding_clear() {
        let mut s = SpinConfiguration::from_index(5, 0b10110).unwrap();
        s.flip_all();
        assert_eq!(s.index(), Some(0b01001));
        let mut big = SpinConfiguration::all_down(70);
        big.flip_all();
        assert_eq!(big.words()[1], (1 << 6) - 1);
        assert_eq!(big.magnetization(), 70);
    }
}
