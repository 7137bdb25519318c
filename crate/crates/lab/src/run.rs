//! Executes the identities requested by a config.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use spinglass_core::exact::Capacity;
use spinglass_core::identity::{
    classical_shift_check, cw_factorization_check, fluctuation_scan, gg_residual,
    replica_equivalence_residual, residual_scan, stability_derivative,
    temperature_shift_equivalence, ultrametricity_metric, value_scan, BetaSpec, IdentityReport,
    PairingMode, Report, Tier,
};
use spinglass_core::model::{sample_couplings, verify_covariance_with, CouplingLayout};
use spinglass_core::quench::{
    quenched_average, quenched_pressure, source_for, Engine, ExactSource, Observable,
};
use spinglass_core::{
    Beta, CouplingRealization, Executor, Family, ModelSpec, OverlapMonomial, QuenchedEstimate,
    SeedLabel, SpinConfiguration,
};

use crate::config::{EngineKind, ExperimentConfig, IdentitySpec};
use crate::error::Result;

/// Test hooks for deliberate faults.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Multiplies the coupling normalization seen by the covariance check.
    pub coupling_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub identity: String,
    pub model: ModelSpec,
    pub n_grid: Vec<usize>,
    pub beta: String,
    pub engine: String,
    pub master_seed: u64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub identity: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub reports: Vec<Report>,
    pub records: Vec<RunRecord>,
    pub timings: Vec<Timing>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn extend(&mut self, other: RunOutput) {
        self.reports.extend(other.reports);
        self.records.extend(other.records);
        self.timings.extend(other.timings);
        self.warnings.extend(other.warnings);
    }

    /// Exact-tier reports that failed.
    pub fn exact_failures(&self) -> Vec<String> {
        self.reports
            .iter()
            .filter_map(|r| match r {
                Report::Identity(r) if r.tier == Tier::Exact && r.passed == Some(false) => {
                    Some(format!("{} N={} residual={:e}", r.identity, r.n_sites, r.residual))
                }
                _ => None,
            })
            .collect()
    }
}

fn needs_exact(spec: &IdentitySpec, engine: EngineKind) -> bool {
    match spec {
        IdentitySpec::Covariance { .. } | IdentitySpec::CwFactorization { .. } => false,
        IdentitySpec::Gg { .. }
        | IdentitySpec::ReplicaEquivalence { .. }
        | IdentitySpec::Ultrametricity { .. } => engine == EngineKind::Exact,
        _ => true,
    }
}

/// Rejects sizes beyond the exact engine's limits before any work starts.
pub fn preflight(cfg: &ExperimentConfig) -> Result<()> {
    let cap = Capacity::default();
    for entry in &cfg.identities {
        if !needs_exact(&entry.spec, cfg.engine) {
            continue;
        }
        for &n in &cfg.n_grid {
            cap.check_ensemble(n)?;
            let (engine, limit) = match &entry.spec {
                IdentitySpec::Ultrametricity { .. } => ("exact-triple", cap.triples),
                s if s.replicas() >= 2 => ("exact-pair", cap.pairs),
                _ => continue,
            };
            if n > limit {
                return Err(spinglass_core::Error::Capacity {
                    engine,
                    n_sites: n,
                    limit,
                }
                .into());
            }
        }
    }
    Ok(())
}

fn identity(
    name: &str,
    model: ModelSpec,
    beta: BetaSpec,
    lhs: QuenchedEstimate,
    rhs: QuenchedEstimate,
    tier: Tier,
    passed: bool,
    metadata: BTreeMap<String, String>,
) -> IdentityReport {
    let residual = lhs.mean - rhs.mean;
    let residual_stderr = (lhs.stderr * lhs.stderr + rhs.stderr * rhs.stderr).sqrt();
    IdentityReport {
        identity: name.into(),
        model,
        n_sites: model.n_sites,
        beta,
        engine: "exact".into(),
        lhs,
        rhs,
        residual,
        residual_stderr,
        mode: PairingMode::Paired,
        tier,
        passed: Some(passed),
        metadata,
    }
}

fn meta(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Largest `|analytic − target| / max(|target|, 1)` over random pairs.
pub fn covariance_deviation(model: &ModelSpec, pairs: usize, seed: u64, scale: Option<f64>) -> Result<f64> {
    let mut layout = CouplingLayout::for_model(model);
    if let Some(s) = scale {
        layout = layout.with_scale(s);
    }
    let mut worst: f64 = 0.0;
    for k in 0..pairs as u64 {
        let label = SeedLabel::new(seed, k);
        let a = SpinConfiguration::sampled(model.n_sites, label, 0);
        let b = SpinConfiguration::sampled(model.n_sites, label, 1);
        let (analytic, target) = verify_covariance_with(&layout, model, &a, &b)?;
        worst = worst.max((analytic - target).abs() / target.abs().max(1.0));
    }
    Ok(worst)
}

pub const COVARIANCE_TOLERANCE: f64 = 1e-12;

/// Runs every identity in `cfg`.
pub fn execute<E: Executor>(cfg: &ExperimentConfig, exec: &E, opts: &RunOptions) -> Result<RunOutput> {
    preflight(cfg)?;
    let mut out = RunOutput::default();
    let engine = cfg.engine();
    let seed = cfg.master_seed;
    let s = cfg.n_samples;
    let excluded = |b: f64| cfg.exclude_betas.iter().any(|x| (x - b).abs() < 1e-12);
    for entry in &cfg.identities {
        let start = Instant::now();
        let setting = entry.beta.as_ref().unwrap_or(&cfg.beta);
        let mut fixed = Vec::new();
        for b in setting.fixed() {
            if excluded(b) {
                out.warnings.push(format!("{}: β = {b} excluded by config", entry.spec.name()));
            } else {
                fixed.push(b);
            }
        }
        let specs: Vec<BetaSpec> = setting
            .specs()
            .into_iter()
            .filter(|b| !matches!(b, BetaSpec::Fixed { beta } if excluded(*beta)))
            .collect();
        let models = cfg
            .n_grid
            .iter()
            .map(|&n| cfg.model.at(n))
            .collect::<spinglass_core::Result<Vec<_>>>()?;
        let base = models[0];
        let scan = cfg.n_grid.len() >= 3;
        let name = entry.spec.name();
        let record = |beta: String, engine_name: &str, n_grid: Vec<usize>| RunRecord {
            identity: name.into(),
            model: base,
            n_grid,
            beta,
            engine: engine_name.into(),
            master_seed: seed,
            n_samples: s,
        };
        let mut records = Vec::new();
        match &entry.spec {
            IdentitySpec::Covariance { pairs } => {
                for m in &models {
                    if m.family == Family::Cw {
                        out.warnings.push("covariance: Curie–Weiss is not Gaussian; skipped".into());
                        continue;
                    }
                    let dev = covariance_deviation(m, *pairs, seed, opts.coupling_scale)?;
                    let mut md = meta(&[
                        ("pairs", pairs.to_string()),
                        ("residual", "max relative deviation of E[HH] from N c".into()),
                    ]);
                    if let Some(sc) = opts.coupling_scale {
                        md.insert("coupling_scale".into(), format!("{sc}"));
                    }
                    let mut r = identity(
                        "covariance",
                        *m,
                        BetaSpec::fixed(0.0),
                        QuenchedEstimate::with_stderr(dev, 0.0, *pairs),
                        QuenchedEstimate::with_stderr(0.0, 0.0, *pairs),
                        Tier::Exact,
                        dev < COVARIANCE_TOLERANCE,
                        md,
                    );
                    r.residual = dev;
                    out.reports.push(Report::Identity(r));
                }
                records.push(record("-".into(), "analytic", cfg.n_grid.clone()));
            }
            IdentitySpec::ZeroBeta {} => {
                let zero = Beta::new(0.0)?;
                for m in &models {
                    let p = quenched_pressure(m, zero, s, seed, exec)?;
                    let target = m.n_sites as f64 * std::f64::consts::LN_2;
                    let ok = p.estimate.mean == target && p.estimate.stderr == 0.0;
                    out.reports.push(Report::Identity(identity(
                        "zero-beta-pressure",
                        *m,
                        BetaSpec::fixed(0.0),
                        p.estimate,
                        QuenchedEstimate::with_stderr(target, 0.0, 1),
                        Tier::Exact,
                        ok,
                        meta(&[("target", "N log 2".into())]),
                    )));
                    if m.family == Family::Cw {
                        continue;
                    }
                    let c12 = Observable::Overlap(OverlapMonomial::pair(1, 2, 1)?);
                    let ex = quenched_average(m, zero, &c12, s, seed, &Engine::exact(), exec)?;
                    let target = zero_beta_overlap(m);
                    let ok = (ex.mean - target).abs() <= 1e-12;
                    out.reports.push(Report::Identity(identity(
                        "zero-beta-overlap",
                        *m,
                        BetaSpec::fixed(0.0),
                        ex,
                        QuenchedEstimate::with_stderr(target, 0.0, 1),
                        Tier::Exact,
                        ok,
                        meta(&[("target", "E[c12] at β = 0".into())]),
                    )));
                    if cfg.engine == EngineKind::Mc {
                        let mc = quenched_average(m, zero, &c12, s, seed, &engine, exec)?;
                        let ok = (mc.mean - target).abs() <= 3.0 * mc.stderr;
                        let mut r = identity(
                            "zero-beta-overlap-mc",
                            *m,
                            BetaSpec::fixed(0.0),
                            mc,
                            QuenchedEstimate::with_stderr(target, 0.0, 1),
                            Tier::Distributional,
                            ok,
                            meta(&[("target", "E[c12] at β = 0".into())]),
                        );
                        r.engine = "mc".into();
                        out.reports.push(Report::Identity(r));
                    }
                }
                records.push(record("0".into(), engine.name(), cfg.n_grid.clone()));
            }
            IdentitySpec::AnnealedBound {} => {
                for &b in &fixed {
                    for m in &models {
                        let p = quenched_pressure(m, Beta::new(b)?, s, seed, exec)?;
                        let bound = p.annealed_bound.unwrap_or(p.estimate.mean);
                        out.reports.push(Report::Identity(identity(
                            "annealed-bound",
                            *m,
                            BetaSpec::fixed(b),
                            p.estimate,
                            QuenchedEstimate::with_stderr(bound, 0.0, 1),
                            Tier::Distributional,
                            p.bound_holds,
                            meta(&[("check", "lhs <= rhs + 3 stderr".into())]),
                        )));
                    }
                    records.push(record(format!("{b}"), "exact", cfg.n_grid.clone()));
                }
            }
            IdentitySpec::ClassicalShift {
                lambdas,
                f,
                sample_index,
            } => {
                for m in &models {
                    let real = if m.family == Family::Cw {
                        CouplingRealization::zero(*m)
                    } else {
                        sample_couplings(m, SeedLabel::new(seed, *sample_index))?
                    };
                    for &b in &fixed {
                        for &l in lambdas {
                            out.reports
                                .push(Report::Identity(classical_shift_check(&real, b, l, f)?));
                        }
                    }
                }
                for &b in &fixed {
                    records.push(record(format!("{b}"), "exact", cfg.n_grid.clone()));
                }
            }
            IdentitySpec::CwFactorization { n_grid } => {
                for &b in &fixed {
                    out.reports.push(Report::Scaling(cw_factorization_check(n_grid, b)?));
                    records.push(record(format!("{b}"), "exact", n_grid.clone()));
                }
            }
            IdentitySpec::Gg { n_replicas, f } => {
                for spec in &specs {
                    let run = |m: &ModelSpec| {
                        gg_residual(exec, &source_for(m, seed, &engine), *n_replicas, f, *spec, s)
                    };
                    push_scan(&mut out, base, &models, &cfg.n_grid, scan, run)?;
                    records.push(record(beta_label(spec), engine.name(), cfg.n_grid.clone()));
                }
            }
            IdentitySpec::ReplicaEquivalence { form, a, b } => {
                for spec in &specs {
                    let run = |m: &ModelSpec| {
                        replica_equivalence_residual(exec, &source_for(m, seed, &engine), *form, (*a, *b), *spec, s)
                    };
                    push_scan(&mut out, base, &models, &cfg.n_grid, scan, run)?;
                    records.push(record(beta_label(spec), engine.name(), cfg.n_grid.clone()));
                }
            }
            IdentitySpec::Ultrametricity { epsilons } => {
                for &b in &fixed {
                    for m in &models {
                        let r = ultrametricity_metric(exec, &source_for(m, seed, &engine), b, epsilons, s)?;
                        out.reports.push(Report::Ultrametric(r));
                    }
                    records.push(record(format!("{b}"), engine.name(), cfg.n_grid.clone()));
                }
            }
            IdentitySpec::StabilityDerivative { f, steps } => {
                for &b in &fixed {
                    let run = |m: &ModelSpec| {
                        let r = stability_derivative(exec, &ExactSource::new(*m, seed), f, b, steps, s)?;
                        let mut rep = r.report.clone();
                        for (h, d) in r.steps.iter().zip(&r.discrepancies) {
                            rep.metadata.insert(format!("discrepancy_h{h}"), format!("{d:e}"));
                        }
                        if let Some(ratio) = r.convergence_ratio() {
                            rep.metadata.insert("convergence_ratio".into(), format!("{ratio}"));
                        }
                        Ok(rep)
                    };
                    if scan {
                        let (sc, reps) = value_scan(&base, &cfg.n_grid, run)?;
                        out.reports.extend(reps.into_iter().map(Report::Identity));
                        out.reports.push(Report::Scaling(sc));
                    } else {
                        for m in &models {
                            out.reports.push(Report::Identity(run(m)?));
                        }
                    }
                    records.push(record(format!("{b}"), "exact", cfg.n_grid.clone()));
                }
            }
            IdentitySpec::TemperatureShift { lambda } => {
                for &b in &fixed {
                    for m in &models {
                        out.reports.push(Report::Identity(temperature_shift_equivalence(
                            exec, m, b, *lambda, s, seed,
                        )?));
                    }
                    records.push(record(format!("{b}"), "exact", cfg.n_grid.clone()));
                }
            }
            IdentitySpec::Fluctuation {} => {
                for &b in &fixed {
                    let mut f = fluctuation_scan(exec, &base, b, &cfg.n_grid, s, seed)?;
                    let list = |pick: fn(&spinglass_core::identity::FluctuationPoint) -> f64| {
                        f.points.iter().map(|p| format!("{}", pick(p))).collect::<Vec<_>>().join(", ")
                    };
                    let extra = [
                        ("av_omega_h2", list(|p| p.mean_square.mean)),
                        ("av_omega_h_sq", list(|p| p.square_mean.mean)),
                        ("av_omega_h_all_sq", list(|p| p.squared_average.mean)),
                    ];
                    for r in [&mut f.thermal, &mut f.disorder] {
                        for (k, v) in &extra {
                            r.metadata.insert((*k).into(), v.clone());
                        }
                    }
                    out.reports.push(Report::Scaling(f.thermal));
                    out.reports.push(Report::Scaling(f.disorder));
                    records.push(record(format!("{b}"), "exact", cfg.n_grid.clone()));
                }
            }
        }
        out.records.extend(records);
        out.timings.push(Timing {
            identity: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

fn push_scan<F>(
    out: &mut RunOutput,
    base: ModelSpec,
    models: &[ModelSpec],
    n_grid: &[usize],
    scan: bool,
    mut run: F,
) -> Result<()>
where
    F: FnMut(&ModelSpec) -> spinglass_core::Result<IdentityReport>,
{
    if scan {
        let (sc, reps) = residual_scan(&base, n_grid, run)?;
        out.reports.extend(reps.into_iter().map(Report::Identity));
        out.reports.push(Report::Scaling(sc));
    } else {
        for m in models {
            out.reports.push(Report::Identity(run(m)?));
        }
    }
    Ok(())
}

pub fn beta_label(spec: &BetaSpec) -> String {
    match *spec {
        BetaSpec::Fixed { beta } => format!("{beta}"),
        BetaSpec::Interval { lo, hi, .. } => format!("{lo}-{hi}"),
    }
}

/// `E[c12]` over independent uniform configurations: `1/N` for SK, zero
/// for the EA link overlap.
pub fn zero_beta_overlap(m: &ModelSpec) -> f64 {
    match m.family {
        Family::Ea => 0.0,
        _ => 1.0 / m.n_sites as f64,
    }
}
