//! Discrete Malliavin calculus on random-walk approximations of Brownian
//! motion: discretized Malliavin derivatives, discrete Skorokhod and Ito
//! integrals, Clark-Ocone derivatives, Walsh/chaos decompositions, and
//! discrete S-transforms, together with an exact enumeration oracle for
//! small horizons and Monte Carlo convergence experiments.

pub mod error;
pub mod experiments;
pub mod identities;
pub mod kernel;
pub mod lattice;
pub mod noise;
pub mod oracle;
pub mod path;
pub mod rng;
pub mod walsh;

pub use error::{Error, Result};
pub use kernel::{discretize, process_kernel, DiscreteKernel, StepFunction, TensorStep};
pub use lattice::{ClarkOconeMode, DiscreteProcessFn, RandomVariableFn};
pub use noise::NoiseSpec;
pub use oracle::EnumeratedSpace;
pub use path::{
    dump_csv, sample_first_passage_time, simulate_coupled_binary, simulate_walk, CoupledPath,
    WalkPath,
};
pub use walsh::WalshVector;
