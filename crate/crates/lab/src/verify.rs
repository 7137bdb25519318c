//! Built-in verification battery over the exact-tier identities.

use spinglass_core::quench::McSettings;
use spinglass_core::{Executor, Family, SpinMonomial};

use crate::config::{BetaSetting, EngineKind, ExperimentConfig, IdentityEntry, IdentitySpec, ModelSection};
use crate::error::Result;
use crate::run::{execute, RunOptions, RunOutput};

pub const VERIFY_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

fn config(family: Family, n_grid: Vec<usize>, beta: Vec<f64>, n_samples: usize, spec: IdentitySpec) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSection {
            family,
            dimension: 2,
            periodic: true,
        },
        engine: EngineKind::Exact,
        beta: BetaSetting::Grid { values: beta },
        n_grid,
        n_samples,
        master_seed: VERIFY_SEED,
        output_dir: String::new(),
        workers: 1,
        exclude_betas: Vec::new(),
        mc: McSettings::default(),
        identities: vec![IdentityEntry { spec, beta: None }],
    }
}

/// The configurations run by `verify`.
pub fn plan(level: Level) -> Vec<ExperimentConfig> {
    let (pairs, samples) = match level {
        Level::Quick => (100, 50),
        Level::Full => (1000, 500),
    };
    let shift = IdentitySpec::ClassicalShift {
        lambdas: vec![0.1, 1.0],
        f: SpinMonomial::first(2),
        sample_index: 0,
    };
    let gg = IdentitySpec::default_for("gg").expect("gg");
    let mut plan = vec![
        config(Family::Sk, vec![4, 8, 16], vec![1.0], 1, IdentitySpec::Covariance { pairs }),
        config(Family::Ea, vec![4, 16], vec![1.0], 1, IdentitySpec::Covariance { pairs }),
        config(Family::Sk, vec![4, 6, 8], vec![0.0], samples, IdentitySpec::ZeroBeta {}),
        config(Family::Cw, vec![8], vec![0.5, 1.0, 2.0], 1, shift.clone()),
        config(Family::Sk, vec![8], vec![0.5, 1.0, 2.0], 1, shift),
        config(Family::Sk, vec![4, 6, 8], vec![1.0], samples, gg),
    ];
    if level == Level::Full {
        plan.push(config(Family::Sk, vec![32, 64], vec![1.0], 1, IdentitySpec::Covariance { pairs }));
        plan.push(config(Family::Ea, vec![36, 64], vec![1.0], 1, IdentitySpec::Covariance { pairs }));
    }
    plan
}

pub fn verify<E: Executor>(level: Level, exec: &E, opts: &RunOptions) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    for cfg in plan(level) {
        out.extend(execute(&cfg, exec, opts)?);
    }
    Ok(out)
}
