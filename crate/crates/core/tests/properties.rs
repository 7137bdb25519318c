use proptest::prelude::*;
use spinglass_core::exact::pressure_realization;
use spinglass_core::identity::classical_shift_check;
use spinglass_core::model::{energy, overlap, sample_couplings, verify_covariance};
use spinglass_core::{
    Beta, CouplingRealization, ModelSpec, OverlapMonomial, SeedLabel, SpinConfiguration,
    SpinMonomial,
};

fn model_strategy() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        prop::sample::select(vec![4usize, 8, 16]).prop_map(|n| ModelSpec::sk(n).unwrap()),
        prop::sample::select(vec![2usize, 3, 4]).prop_map(|l| ModelSpec::ea(2, l).unwrap()),
        Just(ModelSpec::ea(3, 2).unwrap()),
        Just(ModelSpec::ea_with_boundary(2, 4, false).unwrap()),
    ]
}

/// `c(σ, σ)`: 1 except for EA without periodic wrap.
fn self_overlap(model: &ModelSpec) -> f64 {
    match model.family {
        spinglass_core::Family::Ea => model.edges().len() as f64 / model.overlap_denominator() as f64,
        _ => 1.0,
    }
}

fn config(n: usize, seed: u64, k: u32) -> SpinConfiguration {
    SpinConfiguration::sampled(n, SeedLabel::new(seed, 0), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn overlap_is_symmetric_and_bounded(model in model_strategy(), seed in any::<u64>()) {
        let n = model.n_sites;
        let (a, b) = (config(n, seed, 0), config(n, seed, 1));
        let ab = overlap(&model, &a, &b).unwrap();
        prop_assert_eq!(ab, overlap(&model, &b, &a).unwrap());
        prop_assert!((-1.0..=1.0).contains(&ab.value()));
        prop_assert_eq!(overlap(&model, &a, &a).unwrap().value(), self_overlap(&model));
    }

    #[test]
    fn overlap_and_energy_are_gauge_invariant(model in model_strategy(), seed in any::<u64>()) {
        let n = model.n_sites;
        let (a, b) = (config(n, seed, 0), config(n, seed, 1));
        let mut fa = a.clone();
        fa.flip_all();
        prop_assert_eq!(overlap(&model, &fa, &b).unwrap(), overlap(&model, &a, &b).unwrap());
        let real = sample_couplings(&model, SeedLabel::new(seed, 1)).unwrap();
        let (e, fe) = (energy(&real, &a).unwrap(), energy(&real, &fa).unwrap());
        prop_assert!((e - fe).abs() <= 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn covariance_matches_overlap(model in model_strategy(), seed in any::<u64>()) {
        let n = model.n_sites;
        let (a, b) = (config(n, seed, 0), config(n, seed, 1));
        let (analytic, target) = verify_covariance(&model, &a, &b).unwrap();
        prop_assert!((analytic - target).abs() <= 1e-12 * target.abs().max(1.0));
        let (self_cov, n_target) = verify_covariance(&model, &a, &a).unwrap();
        let want = n as f64 * self_overlap(&model);
        prop_assert!((self_cov - want).abs() <= 1e-12 * want);
        prop_assert!((n_target - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn couplings_are_a_function_of_the_label(model in model_strategy(), seed in any::<u64>(), k in 0u64..1000) {
        let a = sample_couplings(&model, SeedLabel::new(seed, k)).unwrap();
        let b = sample_couplings(&model, SeedLabel::new(seed, k)).unwrap();
        prop_assert_eq!(&a.couplings, &b.couplings);
        let c = sample_couplings(&model, SeedLabel::new(seed, k + 1)).unwrap();
        prop_assert_ne!(&a.couplings, &c.couplings);
    }

    #[test]
    fn classical_shift_is_exact(
        n in 2usize..9,
        beta in 0.0f64..3.0,
        lambda in 0.0f64..4.0,
        seed in any::<u64>(),
        degree in 1usize..3,
    ) {
        let model = ModelSpec::sk(n).unwrap();
        let real = sample_couplings(&model, SeedLabel::new(seed, 0)).unwrap();
        let r = classical_shift_check(&real, beta, lambda, &SpinMonomial::first(degree.min(n))).unwrap();
        prop_assert!(r.residual.abs() < 1e-10, "{}", r.residual);
        let cw = CouplingRealization::zero(ModelSpec::cw(n).unwrap());
        let r = classical_shift_check(&cw, beta, lambda, &SpinMonomial::first(degree.min(n))).unwrap();
        prop_assert!(r.residual.abs() < 1e-10, "{}", r.residual);
    }

    #[test]
    fn pressure_is_convex_in_beta(seed in any::<u64>(), beta in 0.0f64..2.5) {
        let real = sample_couplings(&ModelSpec::sk(6).unwrap(), SeedLabel::new(seed, 0)).unwrap();
        let h = 0.05;
        let p = |b: f64| pressure_realization(&real, Beta::new(b).unwrap()).unwrap();
        let second = p(beta + 2.0 * h) - 2.0 * p(beta + h) + p(beta);
        prop_assert!(second >= -1e-10);
    }

    #[test]
    fn monomial_text_round_trips(a in 1usize..5, b in 1usize..5, k in 1u32..4, c in 1usize..5, d in 1usize..5) {
        prop_assume!(a != b && c != d);
        let m = OverlapMonomial::pair(a, b, k).unwrap().times(&OverlapMonomial::pair(c, d, 1).unwrap());
        let again = OverlapMonomial::parse(&m.to_string()).unwrap();
        prop_assert_eq!(m, again);
    }
}
