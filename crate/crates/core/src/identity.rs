//! Residual metrics for the stability and factorization identities, and
//! the N-scans probing their large-N behavior.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cw_observable, EnergyTable, GibbsEnsemble, MomentPath};
use crate::model::{
    sample_couplings, sample_couplings_for, Beta, CouplingRealization, Interaction, ModelSpec,
};
use crate::monomial::{OverlapMonomial, ReplicaObservable, SpinMonomial};
use crate::numeric::{compensated_sum, jackknife, linear_fit, origin_fit};
use crate::quench::{
    beta_grid, describe_replacements, moment_table, per_sample, require_gaussian, table_moments, ExactSource,
    Executor, MomentSource, QuenchedEstimate,
};
use crate::rng::{Purpose, SeedLabel};

/// Minimum number of grid points for interval-averaged β.
pub const MIN_INTERVAL_POINTS: usize = 9;
pub const DEFAULT_EPSILONS: [f64; 3] = [0.05, 0.1, 0.2];
/// Bound on `|residual|` for the exactness tier.
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Algebraic identity at finite N; failures are hard errors.
    Exact,
    /// Equality in law; sides agree within combined error bars.
    Distributional,
    /// Thermodynamic-limit statement; trends are reported, not gated.
    Asymptotic,
    Exploratory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    Paired,
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BetaSpec {
    Fixed { beta: f64 },
    Interval { lo: f64, hi: f64, points: usize },
}

impl BetaSpec {
    pub fn fixed(beta: f64) -> Self {
        Self::Fixed { beta }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::Interval {
            lo,
            hi,
            points: MIN_INTERVAL_POINTS,
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        let g = match *self {
            Self::Fixed { beta } => vec![beta],
            Self::Interval { lo, hi, points } => {
                if points < MIN_INTERVAL_POINTS || !(hi > lo) {
                    return Err(Error::InvalidSpec(format!(
                        "β interval [{lo}, {hi}] needs hi > lo and at least {MIN_INTERVAL_POINTS} points"
                    )));
                }
                beta_grid(lo, hi, points)
            }
        };
        for &b in &g {
            Beta::new(b)?;
        }
        Ok(g)
    }
}

/// Left and right sides of one identity at one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub model: ModelSpec,
    pub n_sites: usize,
    pub beta: BetaSpec,
    pub engine: String,
    pub lhs: QuenchedEstimate,
    pub rhs: QuenchedEstimate,
    pub residual: f64,
    pub residual_stderr: f64,
    pub mode: PairingMode,
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl IdentityReport {
    /// `|residual|` in units of its standard error (infinite when the error
    /// is zero and the residual is not).
    pub fn sigmas(&self) -> f64 {
        if self.residual == 0.0 {
            0.0
        } else if self.residual_stderr > 0.0 {
            self.residual.abs() / self.residual_stderr
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// `y = intercept + slope·N`.
    Linear,
    /// `y = slope·N`.
    Origin,
    /// `log|y| = intercept + slope·log N`.
    PowerLaw,
    /// `y = intercept + slope/N`.
    InverseN,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub kind: FitKind,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

impl Fit {
    pub fn origin(ns: &[usize], ys: &[f64]) -> Self {
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let (slope, residual) = origin_fit(&xs, ys);
        Self {
            kind: FitKind::Origin,
            slope,
            intercept: 0.0,
            residual,
        }
    }

    pub fn inverse_n(ns: &[usize], ys: &[f64]) -> Self {
        let xs: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        let (slope, intercept, residual) = linear_fit(&xs, ys);
        Self {
            kind: FitKind::InverseN,
            slope,
            intercept,
            residual,
        }
    }

    /// Power law over the nonzero values; falls back to a `1/N` fit when
    /// fewer than two are nonzero.
    pub fn power_law(ns: &[usize], ys: &[f64]) -> Self {
        let (xs, ls): (Vec<f64>, Vec<f64>) = ns
            .iter()
            .zip(ys)
            .filter(|(_, y)| **y != 0.0 && y.is_finite())
            .map(|(&n, y)| (libm::log(n as f64), libm::log(y.abs())))
            .unzip();
        if xs.len() < 2 {
            return Self::inverse_n(ns, ys);
        }
        let (slope, intercept, residual) = linear_fit(&xs, &ls);
        Self {
            kind: FitKind::PowerLaw,
            slope,
            intercept,
            residual,
        }
    }

    /// Decay exponent `p` of `|y| ~ N^{-p}`.
    pub fn exponent(&self) -> Option<f64> {
        (self.kind == FitKind::PowerLaw).then_some(-self.slope)
    }
}

/// One quantity across an increasing grid of sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub identity: String,
    pub model: ModelSpec,
    pub beta: BetaSpec,
    pub engine: String,
    pub n_grid: Vec<usize>,
    pub values: Vec<QuenchedEstimate>,
    pub fit: Fit,
    pub tier: Tier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

pub fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec(format!(
            "N grid {n_grid:?} must be strictly increasing with at least 3 sizes"
        )));
    }
    Ok(())
}

impl ScalingReport {
    pub fn fitted_exponent(&self) -> Option<f64> {
        self.fit.exponent()
    }

    /// `|value|` never grows by more than `k` combined standard errors
    /// between consecutive sizes.
    pub fn non_increasing_within(&self, k: f64) -> bool {
        self.values.windows(2).all(|w| {
            let se = libm::sqrt(w[0].stderr * w[0].stderr + w[1].stderr * w[1].stderr);
            w[1].mean.abs() <= w[0].mean.abs() + k * se
        })
    }

    /// `|value|` at the largest size is below its value at the smallest.
    pub fn last_below_first(&self) -> bool {
        match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) => b.mean.abs() < a.mean.abs(),
            _ => false,
        }
    }

    /// `(N, value, stderr)` rows.
    pub fn rows(&self) -> Vec<(usize, f64, f64)> {
        self.n_grid
            .iter()
            .zip(&self.values)
            .map(|(&n, v)| (n, v.mean, v.stderr))
            .collect()
    }
}

/// Violation mass of the ultrametric support property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UltrametricReport {
    pub identity: String,
    pub model: ModelSpec,
    pub n_sites: usize,
    pub beta: f64,
    pub engine: String,
    pub epsilons: Vec<f64>,
    /// Quenched `P[c_min-role < min(others) − ε]`, minimized over which
    /// overlap takes the smallest role.
    pub violation: Vec<QuenchedEstimate>,
    /// Minimizing role per ε: `0 → c12`, `1 → c23`, `2 → c31`.
    pub labeling: Vec<usize>,
    /// Quenched mean squared gap between the two smallest overlaps.
    pub gap_sq: QuenchedEstimate,
    pub tier: Tier,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Any report the suite produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Report {
    Identity(IdentityReport),
    Scaling(ScalingReport),
    Ultrametric(UltrametricReport),
}

fn columns_of(table: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let Some(first) = table.first() else {
        return Vec::new();
    };
    let width: usize = first.iter().map(Vec::len).sum();
    (0..width)
        .map(|c| {
            table
                .iter()
                .map(|row| {
                    let k = row[0].len();
                    row[c / k][c % k]
                })
                .collect()
        })
        .collect()
}

struct Paired {
    lhs: QuenchedEstimate,
    rhs: QuenchedEstimate,
    residual: f64,
    residual_stderr: f64,
}

fn paired<L, R>(columns: &[Vec<f64>], lhs: L, rhs: R) -> Result<Paired>
where
    L: Fn(&[f64]) -> f64,
    R: Fn(&[f64]) -> f64,
{
    let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let s = cols.first().map_or(0, |c| c.len());
    if s == 0 {
        return Err(Error::InsufficientSamples {
            needed: 1,
            available: 0,
        });
    }
    let (l, lse) = jackknife(&cols, &lhs);
    let (r, rse) = jackknife(&cols, &rhs);
    let (d, dse) = jackknife(&cols, |m| lhs(m) - rhs(m));
    Ok(Paired {
        lhs: QuenchedEstimate::with_stderr(l, lse, s),
        rhs: QuenchedEstimate::with_stderr(r, rse, s),
        residual: d,
        residual_stderr: dse,
    })
}

fn base_metadata<S: MomentSource + ?Sized>(source: &S, n_samples: usize) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("engine".into(), source.engine_name().into());
    m.insert("n_samples".into(), n_samples.to_string());
    m.insert("sample_range".into(), format!("0..{n_samples}"));
    m
}

fn note_replacements(meta: &mut BTreeMap<String, String>, replaced: &[(u64, u64)]) {
    if !replaced.is_empty() {
        meta.insert("replaced_samples".into(), describe_replacements(replaced));
    }
}

fn note_beta(meta: &mut BTreeMap<String, String>, beta: &BetaSpec) {
    if let BetaSpec::Interval { points, .. } = beta {
        meta.insert(
            "beta_smoothing".into(),
            format!("uniform grid average over {points} points"),
        );
    }
}

/// Ghirlanda–Guerra residual
/// `<f c_{1,n+1}> − (1/n)<f><c12> − (1/n)Σ_{j=2..n}<f c_{1j}>`
/// for `f` over replicas `1..n`, on shared realizations.
pub fn gg_residual<E, S>(
    exec: &E,
    source: &S,
    n_replicas: usize,
    f: &OverlapMonomial,
    beta: BetaSpec,
    n_samples: usize,
) -> Result<IdentityReport>
where
    E: Executor + ?Sized,
    S: MomentSource + ?Sized,
{
    let n = n_replicas;
    if n == 0 || f.arity() > n {
        return Err(Error::InvalidMonomial(format!(
            "{f} must be a function of replicas 1..{n}"
        )));
    }
    let betas = beta.grid()?;
    let mut obs = vec![
        ReplicaObservable::plain(f.times(&OverlapMonomial::pair(1, n + 1, 1)?)),
        ReplicaObservable::plain(f.clone()),
        ReplicaObservable::plain(OverlapMonomial::pair(1, 2, 1)?),
    ];
    for j in 2..=n {
        obs.push(ReplicaObservable::plain(f.times(&OverlapMonomial::pair(1, j, 1)?)));
    }
    let k = obs.len();
    let (table, replaced) = moment_table(exec, source, 0..n_samples as u64, &betas, &obs)?;
    let cols = columns_of(&table);
    let nb = betas.len() as f64;
    let inv = 1.0 / n as f64;
    let lhs = |m: &[f64]| compensated_sum(m.chunks(k).map(|c| c[0])) / nb;
    let rhs = |m: &[f64]| {
        compensated_sum(m.chunks(k).map(|c| {
            inv * c[1] * c[2] + inv * compensated_sum(c[3..].iter().copied())
        })) / nb
    };
    let p = paired(&cols, lhs, rhs)?;
    let mut metadata = base_metadata(source, n_samples);
    metadata.insert("f".into(), f.to_string());
    metadata.insert("n_replicas".into(), n.to_string());
    note_beta(&mut metadata, &beta);
    note_replacements(&mut metadata, &replaced);
    let model = *source.model();
    Ok(IdentityReport {
        identity: "gg".into(),
        model,
        n_sites: model.n_sites,
        beta,
        engine: source.engine_name().into(),
        lhs: p.lhs,
        rhs: p.rhs,
        residual: p.residual,
        residual_stderr: p.residual_stderr,
        mode: PairingMode::Paired,
        tier: Tier::Asymptotic,
        passed: None,
        metadata,
    })
}

/// Replica-equivalence form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplicaForm {
    /// `E[c12^a c23^b] = ½E[c^{a+b}] + ½E[c^a]E[c^b]`.
    #[serde(rename = "12-23")]
    Shared,
    /// `E[c12^a c34^b] = ⅓E[c^{a+b}] + ⅔E[c^a]E[c^b]`.
    #[serde(rename = "12-34")]
    Disjoint,
}

impl ReplicaForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "12-23" => Ok(Self::Shared),
            "12-34" => Ok(Self::Disjoint),
            _ => Err(Error::InvalidSpec(format!("unknown replica form {s:?}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Shared => "12-23",
            Self::Disjoint => "12-34",
        }
    }

    fn weights(self) -> (f64, f64) {
        match self {
            Self::Shared => (0.5, 0.5),
            Self::Disjoint => (1.0 / 3.0, 2.0 / 3.0),
        }
    }
}

/// Moment-form replica-equivalence residual on shared realizations.
pub fn replica_equivalence_residual<E, S>(
    exec: &E,
    source: &S,
    form: ReplicaForm,
    moments: (u32, u32),
    beta: BetaSpec,
    n_samples: usize,
) -> Result<IdentityReport>
where
    E: Executor + ?Sized,
    S: MomentSource + ?Sized,
{
    let (a, b) = moments;
    if !(1..=2).contains(&a) || !(1..=2).contains(&b) {
        return Err(Error::InvalidSpec(format!("moments ({a}, {b}) must lie in {{1, 2}}")));
    }
    let betas = beta.grid()?;
    let second = match form {
        ReplicaForm::Shared => OverlapMonomial::pair(2, 3, b)?,
        ReplicaForm::Disjoint => OverlapMonomial::pair(3, 4, b)?,
    };
    let obs = [
        ReplicaObservable::plain(OverlapMonomial::pair(1, 2, a)?.times(&second)),
        ReplicaObservable::plain(OverlapMonomial::pair(1, 2, a + b)?),
        ReplicaObservable::plain(OverlapMonomial::pair(1, 2, a)?),
        ReplicaObservable::plain(OverlapMonomial::pair(1, 2, b)?),
    ];
    let (table, replaced) = moment_table(exec, source, 0..n_samples as u64, &betas, &obs)?;
    let cols = columns_of(&table);
    let (w1, w2) = form.weights();
    let nb = betas.len() as f64;
    let lhs = |m: &[f64]| compensated_sum(m.chunks(4).map(|c| c[0])) / nb;
    let rhs = |m: &[f64]| compensated_sum(m.chunks(4).map(|c| w1 * c[1] + w2 * c[2] * c[3])) / nb;
    let p = paired(&cols, lhs, rhs)?;
    let mut metadata = base_metadata(source, n_samples);
    metadata.insert("moments".into(), format!("({a}, {b})"));
    note_beta(&mut metadata, &beta);
    note_replacements(&mut metadata, &replaced);
    let model = *source.model();
    Ok(IdentityReport {
        identity: format!("replica-equivalence-{}", form.label()),
        model,
        n_sites: model.n_sites,
        beta,
        engine: source.engine_name().into(),
        lhs: p.lhs,
        rhs: p.rhs,
        residual: p.residual,
        residual_stderr: p.residual_stderr,
        mode: PairingMode::Paired,
        tier: Tier::Asymptotic,
        passed: None,
        metadata,
    })
}

/// Per-realization violation mass for each role and ε, plus the mean
/// squared gap of the two smallest overlaps.
fn ultrametric_sample(law: &[([f64; 3], f64)], epsilons: &[f64]) -> (Vec<[f64; 3]>, f64) {
    let mut v = vec![[0.0; 3]; epsilons.len()];
    let mut gap = 0.0;
    for &(t, mass) in law {
        for (e, &eps) in epsilons.iter().enumerate() {
            for role in 0..3 {
                let others = t[(role + 1) % 3].min(t[(role + 2) % 3]);
                if t[role] < others - eps {
                    v[e][role] += mass;
                }
            }
        }
        let mut s = t;
        s.sort_by(f64::total_cmp);
        gap += mass * (s[1] - s[0]) * (s[1] - s[0]);
    }
    (v, gap)
}

/// Ultrametric support violation `V(ε)` and the gap of the two smallest
/// overlaps. Exploratory: no pass/fail.
pub fn ultrametricity_metric<E, S>(
    exec: &E,
    source: &S,
    beta: f64,
    epsilons: &[f64],
    n_samples: usize,
) -> Result<UltrametricReport>
where
    E: Executor + ?Sized,
    S: MomentSource + ?Sized,
{
    Beta::new(beta)?;
    let per = per_sample(exec, 0..n_samples as u64, |s| {
        Ok(ultrametric_sample(&source.triples(s, beta)?, epsilons))
    })?;
    let mut violation = Vec::with_capacity(epsilons.len());
    let mut labeling = Vec::with_capacity(epsilons.len());
    for e in 0..epsilons.len() {
        let mut best: Option<(usize, QuenchedEstimate)> = None;
        for role in 0..3 {
            let est = QuenchedEstimate::from_samples(per.iter().map(|p| p.0[e][role]).collect(), false)?;
            if best.as_ref().map_or(true, |(_, b)| est.mean < b.mean) {
                best = Some((role, est));
            }
        }
        let (role, est) = best.expect("three roles");
        labeling.push(role);
        violation.push(est);
    }
    let gap_sq = QuenchedEstimate::from_samples(per.iter().map(|p| p.1).collect(), false)?;
    let model = *source.model();
    Ok(UltrametricReport {
        identity: "ultrametricity".into(),
        model,
        n_sites: model.n_sites,
        beta,
        engine: source.engine_name().into(),
        epsilons: epsilons.to_vec(),
        violation,
        labeling,
        gap_sq,
        tier: Tier::Exploratory,
        metadata: base_metadata(source, n_samples),
    })
}

/// Per-realization columns for the stability derivative of an `n`-replica
/// observable `f`: `[ω(f), Σ_a ω(f h_a), ω(h), ρ₊, ρ₊ω₊(f), ρ₋, ρ₋ω₋(f)]`
/// with `h = H/N` and `ρ± = (Z_{β±δ/N}/Z_β)^n`.
fn stability_sample(
    table: &EnergyTable,
    f: &OverlapMonomial,
    beta: f64,
    steps: &[f64],
    path: MomentPath,
) -> Result<Vec<f64>> {
    let n_sites = table.model.n_sites as f64;
    let n = f.arity();
    let mut obs = vec![
        ReplicaObservable::plain(f.clone()),
        ReplicaObservable {
            monomial: OverlapMonomial::one(),
            insertions: vec![(0, 1)],
        },
    ];
    for a in 0..n {
        obs.push(ReplicaObservable {
            monomial: f.clone(),
            insertions: vec![(a, 1)],
        });
    }
    let base = &table_moments(table, &[beta], &obs, path)?[0];
    let log_z = GibbsEnsemble::new(table, Beta::signed(beta)).log_z;
    let fh = compensated_sum(base[2..].iter().copied()) / n_sites;
    let mut out = vec![base[0], fh, base[1] / n_sites];
    let plain = [ReplicaObservable::plain(f.clone())];
    for &h in steps {
        for b in [beta + h / n_sites, beta - h / n_sites] {
            let g = GibbsEnsemble::new(table, Beta::signed(b));
            let rho = libm::exp(n as f64 * (g.log_z - log_z));
            let fb = table_moments(table, &[b], &plain, path)?[0][0];
            out.push(rho);
            out.push(rho * fb);
        }
    }
    Ok(out)
}

/// Stability derivative `d/dλ <f>^{(λ)}` at `λ = 0`, analytic and by
/// central differences at each step in `steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub report: IdentityReport,
    pub steps: Vec<f64>,
    pub finite_differences: Vec<QuenchedEstimate>,
    /// `|FD(h) − analytic|` per step.
    pub discrepancies: Vec<f64>,
}

impl StabilityReport {
    /// `discrepancy(h₁) / discrepancy(h₂)`; about `(h₁/h₂)²` for a
    /// second-order difference.
    pub fn convergence_ratio(&self) -> Option<f64> {
        match self.discrepancies.as_slice() {
            [a, b, ..] if *b > 0.0 => Some(a / b),
            _ => None,
        }
    }
}

/// Stability derivative for the quenched state deformed by
/// `exp(−λ Σ_a h(σ^a))`, exact engine only. The analytic form is
/// `−(<f Σ_a h_a> − <f>·n<h>)`.
pub fn stability_derivative<E: Executor + ?Sized>(
    exec: &E,
    source: &ExactSource,
    f: &OverlapMonomial,
    beta: f64,
    steps: &[f64],
    n_samples: usize,
) -> Result<StabilityReport> {
    Beta::new(beta)?;
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidSpec(format!("steps {steps:?} must be positive")));
    }
    source.capacity.check_ensemble(source.model.n_sites)?;
    let rows = per_sample(exec, 0..n_samples as u64, |s| {
        stability_sample(&source.table(s)?, f, beta, steps, source.path)
    })?;
    let width = rows.first().map_or(0, Vec::len);
    let cols: Vec<Vec<f64>> = (0..width).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    let n = f.arity() as f64;
    let analytic = move |m: &[f64]| -(m[1] - m[0] * n * m[2]);
    let fd = |k: usize| {
        let h = steps[k];
        move |m: &[f64]| {
            let o = 3 + 4 * k;
            (m[o + 1] / m[o] - m[o + 3] / m[o + 2]) / (2.0 * h)
        }
    };
    let main = paired(&cols, analytic, fd(0))?;
    let cref: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let mut finite_differences = Vec::with_capacity(steps.len());
    let mut discrepancies = Vec::with_capacity(steps.len());
    for k in 0..steps.len() {
        let (v, se) = jackknife(&cref, fd(k));
        finite_differences.push(QuenchedEstimate::with_stderr(v, se, n_samples));
        discrepancies.push(jackknife(&cref, |m| fd(k)(m) - analytic(m)).0.abs());
    }
    let mut metadata = base_metadata(source, n_samples);
    metadata.insert("f".into(), f.to_string());
    metadata.insert("deformation".into(), "exp(-lambda * sum_a H(sigma^a)/N)".into());
    metadata.insert("lambda_step".into(), format!("{}", steps[0]));
    Ok(StabilityReport {
        report: IdentityReport {
            identity: "stability-derivative".into(),
            model: source.model,
            n_sites: source.model.n_sites,
            beta: BetaSpec::fixed(beta),
            engine: "exact".into(),
            lhs: main.lhs,
            rhs: main.rhs,
            residual: main.residual,
            residual_stderr: main.residual_stderr,
            mode: PairingMode::Paired,
            tier: Tier::Asymptotic,
            passed: None,
            metadata,
        },
        steps: steps.to_vec(),
        finite_differences,
        discrepancies,
    })
}

/// Deformed state `ω_β(f e^{−λh})/ω_β(e^{−λh})` against the plain state at
/// `β + λ/N`, for one fixed realization. Exact at every N.
pub fn classical_shift_check(
    real: &CouplingRealization,
    beta: f64,
    lambda: f64,
    f: &SpinMonomial,
) -> Result<IdentityReport> {
    let b = Beta::new(beta)?;
    let n = real.model.n_sites as f64;
    let shifted = Beta::new(beta + lambda / n)?;
    if let Some(&site) = f.sites().last() {
        if site >= real.model.n_sites {
            return Err(Error::InvalidMonomial(format!("{f} exceeds N = {n}")));
        }
    }
    let table = EnergyTable::enumerate(real)?;
    let g = GibbsEnsemble::new(&table, b);
    let deformed: Vec<f64> = g
        .log_weights
        .iter()
        .zip(table.energies.iter())
        .map(|(&lw, &e)| lw - lambda * e / n)
        .collect();
    let lhs = GibbsEnsemble::from_log_weights(real.model, b, deformed)?.spin_expectation(f);
    let rhs = GibbsEnsemble::new(&table, shifted).spin_expectation(f);
    let residual = lhs - rhs;
    let mut metadata = BTreeMap::new();
    metadata.insert("engine".into(), "exact".into());
    metadata.insert("f".into(), f.to_string());
    metadata.insert("lambda".into(), format!("{lambda}"));
    if let Some(label) = real.seed_label {
        metadata.insert("master_seed".into(), label.master_seed.to_string());
        metadata.insert("sample_index".into(), label.sample_index.to_string());
    }
    Ok(IdentityReport {
        identity: "classical-shift".into(),
        model: real.model,
        n_sites: real.model.n_sites,
        beta: BetaSpec::fixed(beta),
        engine: "exact".into(),
        lhs: QuenchedEstimate::with_stderr(lhs, 0.0, 1),
        rhs: QuenchedEstimate::with_stderr(rhs, 0.0, 1),
        residual,
        residual_stderr: 0.0,
        mode: PairingMode::Paired,
        tier: Tier::Exact,
        passed: Some(residual.abs() < EXACT_TOLERANCE),
        metadata,
    })
}

/// `r(N) = ω(σ1σ2σ3σ4) − ω(σ1σ2)²` for Curie–Weiss over `n_grid`, with a
/// power-law fit of `|r|` against N.
pub fn cw_factorization_check(n_grid: &[usize], beta: f64) -> Result<ScalingReport> {
    check_grid(n_grid)?;
    let b = Beta::new(beta)?;
    if n_grid[0] < 4 {
        return Err(Error::InvalidSpec("four distinct sites need N ≥ 4".into()));
    }
    let (two, four) = (SpinMonomial::first(2), SpinMonomial::first(4));
    let values = n_grid
        .iter()
        .map(|&n| {
            let w2 = cw_observable(n, b, &two)?;
            let w4 = cw_observable(n, b, &four)?;
            Ok(QuenchedEstimate::with_stderr(w4 - w2 * w2, 0.0, 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<f64> = values.iter().map(|v| v.mean).collect();
    let fit = Fit::power_law(n_grid, &rs);
    let mut metadata = BTreeMap::new();
    metadata.insert("engine".into(), "cw-sufficient-statistic".into());
    if (beta - 1.0).abs() < 0.05 {
        metadata.insert("warning".into(), "β within 0.05 of the critical point; slow convergence".into());
    }
    let first = rs[0].abs();
    let last = rs[rs.len() - 1].abs();
    let shrinks = last < 0.01 * first + 1e-12;
    let passed = match fit.exponent() {
        Some(p) => (0.7..=1.3).contains(&p) && shrinks,
        None => rs.iter().all(|&r| r == 0.0),
    };
    if let Some(p) = fit.exponent() {
        metadata.insert("exponent".into(), format!("{p}"));
    }
    Ok(ScalingReport {
        identity: "cw-factorization".into(),
        model: ModelSpec::cw(n_grid[0])?,
        beta: BetaSpec::fixed(beta),
        engine: "exact".into(),
        n_grid: n_grid.to_vec(),
        values,
        fit,
        tier: Tier::Asymptotic,
        passed: Some(passed),
        metadata,
    })
}

/// `log Z` of `βH + √(λ/N) H̃` with `H̃` an independent copy drawn from the
/// perturbing stream of the same sample.
pub fn perturbed_pressure(model: &ModelSpec, label: SeedLabel, beta: f64, lambda: f64) -> Result<f64> {
    let real = sample_couplings(model, label)?;
    let pert = sample_couplings_for(model, label, Purpose::PerturbingCouplings)?;
    let strength = libm::sqrt(lambda / model.n_sites as f64);
    let inter = Interaction::combined(&[(&real, beta), (&pert, strength)]);
    let table = EnergyTable::from_interaction(real.model, &inter);
    Ok(GibbsEnsemble::new(&table, Beta::signed(1.0)).log_z)
}

/// Pressure with an added perturbing Hamiltonian against the pressure at
/// `β′ = √(β² + λ/N)`, on disjoint sample ranges `0..S` and `S..2S`.
pub fn temperature_shift_equivalence<E: Executor + ?Sized>(
    exec: &E,
    model: &ModelSpec,
    beta: f64,
    lambda: f64,
    n_samples: usize,
    master_seed: u64,
) -> Result<IdentityReport> {
    require_gaussian(model, "temperature shift")?;
    Beta::new(beta)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "λ = {lambda} makes the shifted temperature imaginary"
        )));
    }
    crate::exact::Capacity::default().check_ensemble(model.n_sites)?;
    let n = model.n_sites as f64;
    let shifted = Beta::new(libm::sqrt(beta * beta + lambda / n))?;
    let s = n_samples as u64;
    let lhs_vals = per_sample(exec, 0..s, |k| {
        perturbed_pressure(model, SeedLabel::new(master_seed, k), beta, lambda)
    })?;
    let rhs_vals = per_sample(exec, s..2 * s, |k| {
        let real = sample_couplings(model, SeedLabel::new(master_seed, k))?;
        Ok(GibbsEnsemble::new(&EnergyTable::enumerate(&real)?, shifted).log_z)
    })?;
    let lhs = QuenchedEstimate::from_samples(lhs_vals, false)?;
    let rhs = QuenchedEstimate::from_samples(rhs_vals, false)?;
    let residual = lhs.mean - rhs.mean;
    let residual_stderr = libm::sqrt(lhs.stderr * lhs.stderr + rhs.stderr * rhs.stderr);
    let passed = residual == 0.0 || residual.abs() < 3.0 * residual_stderr;
    let mut metadata = BTreeMap::new();
    metadata.insert("engine".into(), "exact".into());
    metadata.insert("master_seed".into(), master_seed.to_string());
    metadata.insert("lambda".into(), format!("{lambda}"));
    metadata.insert("shifted_beta".into(), format!("{}", shifted.value()));
    metadata.insert("lhs_samples".into(), format!("0..{s}"));
    metadata.insert("rhs_samples".into(), format!("{s}..{}", 2 * s));
    Ok(IdentityReport {
        identity: "temperature-shift".into(),
        model: *model,
        n_sites: model.n_sites,
        beta: BetaSpec::fixed(beta),
        engine: "exact".into(),
        lhs,
        rhs,
        residual,
        residual_stderr,
        mode: PairingMode::Independent,
        tier: Tier::Distributional,
        passed: Some(passed),
        metadata,
    })
}

/// The three fluctuation quantities at one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPoint {
    pub n_sites: usize,
    /// `Av[ω(H²)]`.
    pub mean_square: QuenchedEstimate,
    /// `Av[ω(H)²]`.
    pub square_mean: QuenchedEstimate,
    /// `Av[ω(H)]²`.
    pub squared_average: QuenchedEstimate,
    /// `Av[ω(H²) − ω(H)²]`.
    pub thermal: QuenchedEstimate,
    /// `Av[ω(H)²] − Av[ω(H)]²`.
    pub disorder: QuenchedEstimate,
}

impl FluctuationPoint {
    /// From per-realization `(ω(H), ω(H²) − ω(H)²)`.
    pub fn from_stats(n_sites: usize, stats: &[(f64, f64)]) -> Result<Self> {
        let u: Vec<f64> = stats.iter().map(|s| s.0).collect();
        let var: Vec<f64> = stats.iter().map(|s| s.1).collect();
        let u2: Vec<f64> = stats.iter().map(|s| s.0 * s.0).collect();
        let h2: Vec<f64> = stats.iter().map(|s| s.1 + s.0 * s.0).collect();
        let s = stats.len();
        let est = |(m, e): (f64, f64)| QuenchedEstimate::with_stderr(m, e, s);
        let cols: [&[f64]; 2] = [&u, &u2];
        Ok(Self {
            n_sites,
            mean_square: QuenchedEstimate::from_samples(h2, false)?,
            square_mean: QuenchedEstimate::from_samples(u2.clone(), false)?,
            squared_average: est(jackknife(&cols, |m| m[0] * m[0])),
            thermal: QuenchedEstimate::from_samples(var, false)?,
            disorder: est(jackknife(&cols, |m| m[1] - m[0] * m[0])),
        })
    }
}

/// `(ω(H), ω(H²) − ω(H)²)` for one realization.
pub fn energy_stats(real: &CouplingRealization, beta: Beta) -> Result<(f64, f64)> {
    GibbsEnsemble::new(&EnergyTable::enumerate(real)?, beta).energy_moments()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationScan {
    pub points: Vec<FluctuationPoint>,
    pub thermal: ScalingReport,
    pub disorder: ScalingReport,
}

/// Thermal and disorder energy fluctuations across `n_grid`, each fitted
/// through the origin against N.
pub fn fluctuation_scan<E: Executor + ?Sized>(
    exec: &E,
    model: &ModelSpec,
    beta: f64,
    n_grid: &[usize],
    n_samples: usize,
    master_seed: u64,
) -> Result<FluctuationScan> {
    check_grid(n_grid)?;
    let b = Beta::new(beta)?;
    let cap = crate::exact::Capacity::default();
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let m = model.resized(n)?;
        cap.check_ensemble(n)?;
        let stats = per_sample(exec, 0..n_samples as u64, |s| {
            energy_stats(&sample_couplings(&m, SeedLabel::new(master_seed, s))?, b)
        })?;
        points.push(FluctuationPoint::from_stats(n, &stats)?);
    }
    let make = |name: &str, pick: fn(&FluctuationPoint) -> &QuenchedEstimate| {
        let values: Vec<QuenchedEstimate> = points.iter().map(|p| pick(p).clone()).collect();
        let ys: Vec<f64> = values.iter().map(|v| v.mean).collect();
        let ratios: Vec<f64> = ys.iter().zip(n_grid).map(|(y, &n)| y / n as f64).collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        let positive = ys.iter().all(|&y| y > 0.0);
        let mut metadata = BTreeMap::new();
        metadata.insert("engine".into(), "exact".into());
        metadata.insert("master_seed".into(), master_seed.to_string());
        metadata.insert("n_samples".into(), n_samples.to_string());
        metadata.insert("ratio_spread".into(), format!("{}", hi / lo));
        let fit = Fit::origin(n_grid, &ys);
        ScalingReport {
            identity: name.into(),
            model: *model,
            beta: BetaSpec::fixed(beta),
            engine: "exact".into(),
            n_grid: n_grid.to_vec(),
            values,
            fit,
            tier: Tier::Exploratory,
            passed: Some(positive && hi / lo < 3.0),
            metadata,
        }
    };
    let thermal = make("fluctuation-thermal", |p| &p.thermal);
    let disorder = make("fluctuation-disorder", |p| &p.disorder);
    Ok(FluctuationScan {
        points,
        thermal,
        disorder,
    })
}

/// Runs `at` for every size in `n_grid` and collects the residuals into a
/// scaling report with a power-law fit of `|residual|`.
pub fn residual_scan<F>(model: &ModelSpec, n_grid: &[usize], mut at: F) -> Result<(ScalingReport, Vec<IdentityReport>)>
where
    F: FnMut(&ModelSpec) -> Result<IdentityReport>,
{
    check_grid(n_grid)?;
    let reports = n_grid
        .iter()
        .map(|&n| at(&model.resized(n)?))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<QuenchedEstimate> = reports
        .iter()
        .map(|r| QuenchedEstimate::with_stderr(r.residual, r.residual_stderr, r.lhs.n_samples))
        .collect();
    Ok((scaling_of(&reports[0], n_grid, values), reports))
}

/// Like [`residual_scan`] but scans the left side (used for derivatives).
pub fn value_scan<F>(model: &ModelSpec, n_grid: &[usize], mut at: F) -> Result<(ScalingReport, Vec<IdentityReport>)>
where
    F: FnMut(&ModelSpec) -> Result<IdentityReport>,
{
    check_grid(n_grid)?;
    let reports = n_grid
        .iter()
        .map(|&n| at(&model.resized(n)?))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<QuenchedEstimate> = reports.iter().map(|r| r.lhs.clone()).collect();
    Ok((scaling_of(&reports[0], n_grid, values), reports))
}

fn scaling_of(first: &IdentityReport, n_grid: &[usize], values: Vec<QuenchedEstimate>) -> ScalingReport {
    let ys: Vec<f64> = values.iter().map(|v| v.mean).collect();
    let fit = Fit::power_law(n_grid, &ys);
    let mut metadata = first.metadata.clone();
    metadata.remove("replaced_samples");
    if let Some(p) = fit.exponent() {
        metadata.insert("exponent".into(), format!("{p}"));
    }
    ScalingReport {
        identity: first.identity.clone(),
        model: first.model,
        beta: first.beta,
        engine: first.engine.clone(),
        n_grid: n_grid.to_vec(),
        values,
        fit,
        tier: first.tier,
        passed: None,
        metadata,
    }
}

/// MC against exact on the same realizations, as a paired difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub observable: String,
    pub exact: QuenchedEstimate,
    pub mc: QuenchedEstimate,
    pub difference: QuenchedEstimate,
    pub agrees: bool,
}

pub fn cross_engine_check<E, S>(
    exec: &E,
    exact: &ExactSource,
    mc: &S,
    beta: f64,
    monomials: &[OverlapMonomial],
    n_samples: usize,
) -> Result<Vec<CrossCheck>>
where
    E: Executor + ?Sized,
    S: MomentSource + ?Sized,
{
    let obs: Vec<ReplicaObservable> = monomials.iter().cloned().map(ReplicaObservable::plain).collect();
    let rows = per_sample(exec, 0..n_samples as u64, |s| {
        let m = mc.moments(s, &[beta], &obs)?;
        let e = exact.moments(m.sample_index, &[beta], &obs)?;
        Ok((e.values[0].clone(), m.values[0].clone()))
    })?;
    monomials
        .iter()
        .enumerate()
        .map(|(k, mono)| {
            let e: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            let m: Vec<f64> = rows.iter().map(|r| r.1[k]).collect();
            let d: Vec<f64> = e.iter().zip(&m).map(|(a, b)| b - a).collect();
            let difference = QuenchedEstimate::from_samples(d, false)?;
            let agrees = difference.mean == 0.0 || difference.mean.abs() < 3.0 * difference.stderr;
            Ok(CrossCheck {
                observable: mono.to_string(),
                exact: QuenchedEstimate::from_samples(e, false)?,
                mc: QuenchedEstimate::from_samples(m, false)?,
                difference,
                agrees,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::OverlapSampleSet;
    use crate::quench::{Serial, SyntheticSource};

    #[test]
    fn gg_trivial_case_is_zero() {
        let src = ExactSource::new(ModelSpec::sk(6).unwrap(), 5);
        let r = gg_residual(&Serial, &src, 1, &OverlapMonomial::one(), BetaSpec::fixed(1.0), 30).unwrap();
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.residual_stderr, 0.0);
    }

    #[test]
    fn constant_overlap_satisfies_replica_equivalence() {
        let src = SyntheticSource::new(ModelSpec::sk(8).unwrap(), |_, _| {
            OverlapSampleSet::from_rows(8, 4, 1.0, &vec![vec![0.375; 6]; 32], 16)
        });
        for form in [ReplicaForm::Shared, ReplicaForm::Disjoint] {
            let r = replica_equivalence_residual(&Serial, &src, form, (1, 1), BetaSpec::fixed(1.0), 10).unwrap();
            assert!(r.residual.abs() < 1e-15, "{}", r.residual);
        }
    }

    #[test]
    fn classical_shift_zero_lambda() {
        let real = sample_couplings(&ModelSpec::sk(6).unwrap(), SeedLabel::new(1, 2)).unwrap();
        let r = classical_shift_check(&real, 1.0, 0.0, &SpinMonomial::first(2)).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn cw_factorization_zero_beta() {
        let r = cw_factorization_check(&[16, 64, 256], 0.0).unwrap();
        assert!(r.values.iter().all(|v| v.mean == 0.0));
        assert_eq!(r.passed, Some(true));
    }

    #[test]
    fn stability_unit_observable() {
        let src = ExactSource::new(ModelSpec::sk(6).unwrap(), 5);
        let r = stability_derivative(&Serial, &src, &OverlapMonomial::one(), 1.0, &[1e-2], 10).unwrap();
        assert_eq!(r.report.lhs.mean, 0.0);
        assert_eq!(r.finite_differences[0].mean, 0.0);
    }

    #[test]
    fn grids_are_validated() {
        assert!(check_grid(&[6, 8]).is_err());
        assert!(check_grid(&[6, 6, 8]).is_err());
        assert!(BetaSpec::Interval { lo: 0.5, hi: 1.5, points: 5 }.grid().is_err());
        assert_eq!(BetaSpec::interval(0.5, 1.5).grid().unwrap().len(), 9);
    }

    #[test]
    fn negative_lambda_rejected() {
        let m = ModelSpec::sk(4).unwrap();
        assert!(temperature_shift_equivalence(&Serial, &m, 1.0, -1.0, 4, 1).is_err());
    }
}
