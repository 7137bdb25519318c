//! Gaussian spin-glass models and the numerical machinery needed to check
//! stability and factorization identities of their quenched Gibbs states.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function of
//! its inputs and a master seed; parallel execution is plugged in from outside
//! through [`quench::Executor`].
#![no_std]

extern crate alloc;

pub mod error;
pub mod exact;
pub mod identity;
pub mod mc;
pub mod model;
pub mod monomial;
pub mod numeric;
pub mod quench;
pub mod rng;

pub use error::{Error, Result};
pub use model::{
    Beta, CouplingLayout, CouplingRealization, Family, Lattice, ModelSpec, OverlapValue,
    SpinConfiguration,
};
pub use monomial::{OverlapMonomial, ReplicaObservable, SpinMonomial};
pub use quench::{Executor, QuenchedEstimate, Serial};
pub use rng::SeedLabel;
