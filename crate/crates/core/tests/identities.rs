use rand_chacha::rand_core::RngCore;
use spinglass_core::exact::{pressure_realization, MomentPath};
use spinglass_core::identity::{
    classical_shift_check, cw_factorization_check, fluctuation_scan, gg_residual,
    replica_equivalence_residual, stability_derivative, ultrametricity_metric, BetaSpec,
    ReplicaForm, Tier,
};
use spinglass_core::mc::OverlapSampleSet;
use spinglass_core::model::sample_couplings;
use spinglass_core::quench::{
    quenched_average, quenched_pressure, Engine, ExactSource, Observable, SyntheticSource,
};
use spinglass_core::rng::{stream, unit, Purpose};
use spinglass_core::{
    Beta, CouplingRealization, Executor, ModelSpec, OverlapMonomial, SeedLabel, Serial,
    SpinMonomial,
};

fn c12() -> OverlapMonomial {
    OverlapMonomial::pair(1, 2, 1).unwrap()
}

#[test]
fn gg_at_beta_zero_has_closed_form() {
    for n in [4usize, 6, 8, 10] {
        let src = ExactSource::new(ModelSpec::sk(n).unwrap(), 3);
        let r = gg_residual(&Serial, &src, 2, &c12(), BetaSpec::fixed(0.0), 5).unwrap();
        let nf = n as f64;
        let want = -(1.0 - 1.0 / nf) / (nf * nf);
        assert!((r.residual - want).abs() < 1e-14, "N={n}: {} vs {want}", r.residual);
        assert!(r.residual_stderr < 1e-14);
    }
}

#[test]
fn replica_equivalence_at_beta_zero_has_closed_form() {
    for n in [4usize, 6, 8] {
        let nf = n as f64;
        let src = ExactSource::new(ModelSpec::sk(n).unwrap(), 3);
        let shared = replica_equivalence_residual(&Serial, &src, ReplicaForm::Shared, (1, 1), BetaSpec::fixed(0.0), 4)
            .unwrap();
        let disjoint =
            replica_equivalence_residual(&Serial, &src, ReplicaForm::Disjoint, (1, 1), BetaSpec::fixed(0.0), 4)
                .unwrap();
        let base = (1.0 - 1.0 / nf) / (nf * nf);
        assert!((shared.residual + base).abs() < 1e-14);
        assert!((disjoint.residual + 2.0 / 3.0 * base).abs() < 1e-14);
    }
}

#[test]
fn gg_residual_for_a_single_ensemble_is_its_own_oracle() {
    // One realization: <c12 c13> − ½<c12>² − ½<c12²> from the exact source
    // must equal the value assembled from independently computed moments.
    let model = ModelSpec::sk(6).unwrap();
    let src = ExactSource::new(model, 11);
    let r = gg_residual(&Serial, &src, 2, &c12(), BetaSpec::fixed(1.2), 1).unwrap();
    let real = src.realization(0).unwrap();
    let g = spinglass_core::exact::build_gibbs(&real, Beta::new(1.2).unwrap()).unwrap();
    let k = spinglass_core::exact::OverlapKernel::new(&model, 2).unwrap();
    let m = |s: &str| {
        spinglass_core::exact::overlap_moment_exact(&g, &k, &OverlapMonomial::parse(s).unwrap(), MomentPath::Enumeration)
            .unwrap()
    };
    let want = m("c12*c13") - 0.5 * m("c12") * m("c12") - 0.5 * m("c12^2");
    assert!((r.residual - want).abs() < 1e-12);
}

#[test]
fn interval_average_is_the_mean_over_the_grid() {
    let src = ExactSource::new(ModelSpec::sk(5).unwrap(), 2);
    let spec = BetaSpec::interval(0.5, 1.5);
    let avg = gg_residual(&Serial, &src, 2, &c12(), spec, 20).unwrap();
    let grid = spec.grid().unwrap();
    assert_eq!(grid.len(), 9);
    let mean: f64 = grid
        .iter()
        .map(|&b| gg_residual(&Serial, &src, 2, &c12(), BetaSpec::fixed(b), 20).unwrap().residual)
        .sum::<f64>()
        / grid.len() as f64;
    assert!((avg.residual - mean).abs() < 1e-12);
}

fn uniform_triples(rows: usize) -> impl Fn(u64, f64) -> spinglass_core::Result<OverlapSampleSet> + Sync {
    move |s, beta| {
        let mut rng = stream(SeedLabel::new(5, s), Purpose::Synthetic(0));
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..3).map(|_| unit(rng.next_u64())).collect())
            .collect();
        OverlapSampleSet::from_rows(8, 3, beta, &data, 4)
    }
}

#[test]
fn ultrametric_violation_of_independent_uniform_overlaps() {
    let src = SyntheticSource::new(ModelSpec::sk(8).unwrap(), uniform_triples(2000));
    let r = ultrametricity_metric(&Serial, &src, 1.0, &[0.0, 0.1], 50).unwrap();
    assert!((r.violation[0].mean - 1.0 / 3.0).abs() < 0.01, "{}", r.violation[0].mean);
    // P[U1 < min(U2, U3) − ε] = (1−ε)³/3 for independent uniforms.
    let want = 0.9f64.powi(3) / 3.0;
    assert!((r.violation[1].mean - want).abs() < 0.01, "{}", r.violation[1].mean);
}

#[test]
fn ultrametric_violation_vanishes_for_equal_overlaps() {
    let src = SyntheticSource::new(ModelSpec::sk(8).unwrap(), |s, beta| {
        let v = 0.1 + 0.01 * s as f64;
        OverlapSampleSet::from_rows(8, 3, beta, &vec![vec![v, v, v]; 64], 4)
    });
    let r = ultrametricity_metric(&Serial, &src, 1.0, &[0.0, 0.05], 10).unwrap();
    assert!(r.violation.iter().all(|v| v.mean == 0.0));
    assert_eq!(r.gap_sq.mean, 0.0);
}

#[test]
fn ultrametric_exact_beta_zero_is_bounded() {
    let src = ExactSource::new(ModelSpec::sk(6).unwrap(), 9);
    let r = ultrametricity_metric(&Serial, &src, 0.0, &[0.05, 0.1, 0.2], 3).unwrap();
    assert!(r.violation.windows(2).all(|w| w[1].mean <= w[0].mean + 1e-15));
    assert!(r.violation.iter().all(|v| (0.0..=1.0 / 3.0 + 1e-12).contains(&v.mean)));
}

#[test]
fn stability_derivative_finite_differences_converge_quadratically() {
    let src = ExactSource::new(ModelSpec::sk(6).unwrap(), 4);
    let r = stability_derivative(&Serial, &src, &c12(), 1.0, &[1e-1, 1e-2], 40).unwrap();
    let ratio = r.convergence_ratio().unwrap();
    assert!((ratio - 100.0).abs() < 5.0, "ratio {ratio}");
    assert!(r.discrepancies[1] < 1e-5);
}

#[test]
fn stability_derivative_vanishes_on_average_at_beta_zero() {
    let src = ExactSource::new(ModelSpec::sk(6).unwrap(), 4);
    let r = stability_derivative(&Serial, &src, &c12(), 0.0, &[1e-2], 400).unwrap();
    assert!(r.report.lhs.mean.abs() < 4.0 * r.report.lhs.stderr, "{:?}", r.report.lhs);
}

#[test]
fn classical_shift_holds_for_random_and_cw_realizations() {
    let sk = sample_couplings(&ModelSpec::sk(7).unwrap(), SeedLabel::new(1, 0)).unwrap();
    let cw = CouplingRealization::zero(ModelSpec::cw(7).unwrap());
    for real in [&sk, &cw] {
        for beta in [0.0, 0.5, 2.0] {
            for lambda in [0.1, 1.0, 3.0] {
                let r = classical_shift_check(real, beta, lambda, &SpinMonomial::first(2)).unwrap();
                assert_eq!(r.tier, Tier::Exact);
                assert_eq!(r.passed, Some(true), "β={beta} λ={lambda}: {}", r.residual);
            }
        }
    }
}

#[test]
fn cw_factorization_low_temperature_scan() {
    let grid: Vec<usize> = (4..=10).map(|k| 1 << k).collect();
    let r = cw_factorization_check(&grid, 2.0).unwrap();
    let p = r.fitted_exponent().unwrap();
    assert!((0.7..=1.3).contains(&p), "exponent {p}");
    assert_eq!(r.passed, Some(true));
    let r0 = cw_factorization_check(&grid, 0.0).unwrap();
    assert!(r0.values.iter().all(|v| v.mean.abs() < 1e-15));
    let near = cw_factorization_check(&grid, 1.02).unwrap();
    assert!(near.metadata.contains_key("warning"));
}

#[test]
fn fluctuations_at_beta_zero() {
    let grid = [4usize, 6, 8];
    let f = fluctuation_scan(&Serial, &ModelSpec::sk(4).unwrap(), 0.0, &grid, 400, 8).unwrap();
    for (p, &n) in f.points.iter().zip(&grid) {
        let want = n as f64 - 1.0;
        assert!((p.thermal.mean - want).abs() < 4.0 * p.thermal.stderr, "N={n}: {:?}", p.thermal);
        assert!((p.disorder.mean - 1.0).abs() < 4.0 * p.disorder.stderr + 0.02, "N={n}: {:?}", p.disorder);
    }
}

#[test]
fn pressure_per_site_is_stable_in_n() {
    let beta = Beta::new(1.0).unwrap();
    let p8 = quenched_pressure(&ModelSpec::sk(8).unwrap(), beta, 200, 2024, &Serial).unwrap();
    let p10 = quenched_pressure(&ModelSpec::sk(10).unwrap(), beta, 200, 2024, &Serial).unwrap();
    let d = p8.estimate.mean / 8.0 - p10.estimate.mean / 10.0;
    assert!(d.abs() < 0.05, "{d}");
    assert!(p8.bound_holds && p10.bound_holds);
}

/// Runs jobs back to front on scoped threads, two at a time.
struct Backwards;

impl Executor for Backwards {
    fn workers(&self) -> usize {
        2
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
        let f = &f;
        for chunk in (0..n).rev().collect::<Vec<_>>().chunks(2) {
            let got: Vec<(usize, T)> = std::thread::scope(|s| {
                let hs: Vec<_> = chunk.iter().map(|&k| s.spawn(move || (k, f(k)))).collect();
                hs.into_iter().map(|h| h.join().unwrap()).collect()
            });
            for (k, v) in got {
                out[k] = Some(v);
            }
        }
        out.into_iter().map(Option::unwrap).collect()
    }
}

#[test]
fn executor_order_does_not_change_results() {
    let model = ModelSpec::sk(7).unwrap();
    let beta = Beta::new(0.9).unwrap();
    let obs = Observable::Overlap(c12());
    let a = quenched_average(&model, beta, &obs, 9, 1, &Engine::exact(), &Serial).unwrap();
    let b = quenched_average(&model, beta, &obs, 9, 1, &Engine::exact(), &Backwards).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}

#[test]
fn quenched_pressure_matches_serial_loop() {
    let model = ModelSpec::sk(6).unwrap();
    let beta = Beta::new(1.5).unwrap();
    let est = quenched_average(&model, beta, &Observable::Pressure, 12, 99, &Engine::exact(), &Serial).unwrap();
    let values: Vec<f64> = (0..12)
        .map(|s| pressure_realization(&sample_couplings(&model, SeedLabel::new(99, s)).unwrap(), beta).unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / 12.0;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 11.0;
    assert!((est.mean - mean).abs() < 1e-12);
    assert!((est.stderr - (var / 12.0).sqrt()).abs() < 1e-12);
}
