//! Shallow-depth quantum state preparation for matrix product states.
//!
//! This crate synthesizes staircase circuits of two-qubit gates that prepare a
//! target matrix product state (MPS) to high fidelity at a depth far below
//! what exact encodings require. The synthesis strategy is *Schmidt spectrum
//! optimisation* (SSO): each circuit layer is found by minimising, over the
//! 15-parameter generators of all gates in the layer, the summed weight that
//! every bond of the evolving state carries beyond its two largest Schmidt
//! coefficients. Once the state is within reach of a bond-dimension-2 MPS, a
//! final layer prepares that chi=2 approximation exactly and the optimised
//! layers are appended in reverse as adjoints.
//!
//! Alongside SSO the crate implements the matrix product disentangler (MPD)
//! baseline, which derives each layer analytically from the chi=2 truncation
//! of the current state, and full-circuit fidelity maximisation (`tno`) that
//! polishes either circuit layer-by-layer or over all parameters jointly.
//! A benchmark harness (`hamiltonian`, `experiment`) reproduces ground-state
//! preparation experiments for Ising, disordered-Heisenberg, spinless-fermion
//! and 2D-Heisenberg targets.
//!
//! Modules are layered bottom-up:
//!
//! - [`tensor`]: dense complex tensors, contraction, SVD/QR/expm primitives
//! - [`mps`]: MPS representation, canonical forms, Schmidt data, truncation
//! - [`circuit`]: SU(4) gate parameterisation, staircase layers, application
//! - [`optim`]: L-BFGS with strong-Wolfe line search
//! - [`sso`] / [`mpd`] / [`tno`]: the three synthesis strategies
//! - [`hamiltonian`] / [`experiment`]: benchmark targets and the method grid
//! - [`io`]: JSON serialisation of states, circuits and reports

extern crate blas_src;

pub mod circuit;
pub mod error;
pub mod experiment;
pub mod hamiltonian;
pub mod io;
pub mod mpd;
pub mod mps;
pub mod optim;
pub mod rng;
pub mod sso;
pub mod tensor;
#[cfg(test)]
pub(crate) mod testkit;
pub mod tno;

pub use circuit::{Circuit, StaircaseLayer, Su4Gate};
pub use error::{Error, Result};
pub use experiment::{
    run_experiment, synthesize_method, BenchmarkResult, ExperimentConfig, Method,
};
pub use hamiltonian::{build_hamiltonian, target_mps, Family, HamiltonianSpec};
pub use mps::{Mps, SchmidtSpectra};
pub use sso::{GradientMode, SsoConfig, SynthesisReport};
pub use tno::{InitSource, TnoConfig, TnoMode};
