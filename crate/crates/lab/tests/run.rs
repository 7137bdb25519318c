use spinglass_core::identity::{Report, Tier};
use spinglass_core::Serial;
use spinglass_lab::config::ExperimentConfig;
use spinglass_lab::run::{execute, preflight, RunOptions};

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_ini(text, "t.ini").unwrap()
}

#[test]
fn every_identity_runs_on_small_sk() {
    let cfg = parse(
        "[model]\nfamily = sk\n\n[run]\nn_grid = 4, 5, 6\nbeta = 0.7\nn_samples = 20\nmaster_seed = 5\n\n\
         [identity.covariance]\npairs = 10\n\n[identity.zero-beta]\n\n[identity.annealed-bound]\n\n\
         [identity.classical-shift]\n\n[identity.gg]\n\n[identity.replica-equivalence]\nform = 12-34\n\n\
         [identity.ultrametricity]\n\n[identity.stability-derivative]\nsteps = 0.1, 0.01\n\n\
         [identity.temperature-shift]\nlambda = 1\n\n[identity.fluctuation]\n\n\
         [identity.cw-factorization]\nn_grid = 16, 32, 64\n",
    );
    let out = execute(&cfg, &Serial, &RunOptions::default()).unwrap();
    assert!(out.exact_failures().is_empty(), "{:?}", out.exact_failures());
    let names: Vec<&str> = out
        .reports
        .iter()
        .map(|r| match r {
            Report::Identity(r) => r.identity.as_str(),
            Report::Scaling(s) => s.identity.as_str(),
            Report::Ultrametric(u) => u.identity.as_str(),
        })
        .collect();
    for want in [
        "covariance",
        "zero-beta-pressure",
        "zero-beta-overlap",
        "annealed-bound",
        "classical-shift",
        "gg",
        "replica-equivalence-12-34",
        "ultrametricity",
        "stability-derivative",
        "temperature-shift",
        "fluctuation-thermal",
        "fluctuation-disorder",
        "cw-factorization",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    assert_eq!(out.timings.len(), 11);
    let fluct = out.reports.iter().find_map(|r| match r {
        Report::Scaling(s) if s.identity == "fluctuation-thermal" => Some(s),
        _ => None,
    });
    assert!(fluct.unwrap().metadata.contains_key("av_omega_h2"));
}

#[test]
fn excluded_beta_is_skipped_with_a_warning() {
    let cfg = parse(
        "[model]\nfamily = cw\n\n[run]\nn_grid = 8\nbeta = 0.5, 1.0\nmaster_seed = 1\nexclude_betas = 1.0\n\n\
         [identity.classical-shift]\nlambdas = 0.5\n",
    );
    let out = execute(&cfg, &Serial, &RunOptions::default()).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert!(out.warnings.iter().any(|w| w.contains("excluded")));
}

#[test]
fn scaled_couplings_break_the_covariance_check() {
    let cfg = parse("[model]\nfamily = ea\n\n[run]\nn_grid = 9\nbeta = 1\nmaster_seed = 1\n\n[identity.covariance]\n");
    let good = execute(&cfg, &Serial, &RunOptions::default()).unwrap();
    assert!(good.exact_failures().is_empty());
    let bad = execute(&cfg, &Serial, &RunOptions { coupling_scale: Some(1.0 + 1e-9) }).unwrap();
    assert_eq!(bad.exact_failures().len(), 1);
    assert!(matches!(&bad.reports[0], Report::Identity(r) if r.tier == Tier::Exact));
}

#[test]
fn mc_engine_runs_overlap_identities() {
    let cfg = parse(
        "[model]\nfamily = sk\n\n[run]\nengine = mc\nn_grid = 16\nbeta = 0.5\nn_samples = 3\nmaster_seed = 2\n\n\
         [mc]\nsweeps_burnin = 200\nsweeps_measure = 2000\nrungs = 4\n\n[identity.gg]\n\n[identity.ultrametricity]\n",
    );
    preflight(&cfg).unwrap();
    let out = execute(&cfg, &Serial, &RunOptions::default()).unwrap();
    assert!(out.reports.iter().all(|r| match r {
        Report::Identity(r) => r.engine == "mc",
        Report::Ultrametric(u) => u.engine == "mc",
        Report::Scaling(_) => true,
    }));
}
