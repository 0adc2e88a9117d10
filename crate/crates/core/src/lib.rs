//! Semiblind hyperspectral unmixing that tolerates spectral-library mismatch.
//!
//! The crate provides
//!
//! * signal-subspace estimation and projector helpers ([`subspace`]),
//! * MUSIC and robust-MUSIC dictionary pruning ([`pruning`]),
//! * collaborative sparse regression by ADMM ([`csr`]),
//! * the dictionary-adjusted ℓ2/ℓp alternating solver ([`danser`]),
//! * a synthetic scene generator ([`simgen`]), metrics ([`metrics`]) and a
//!   seeded Monte Carlo harness ([`experiment`]),
//! * plain-CSV matrix I/O ([`io`]).
//!
//! Numerical routines are generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which the harness and I/O use.

pub mod csr;
pub mod danser;
pub mod dictionary;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod pruning;
pub mod scalar;
pub mod search;
pub mod simgen;
pub mod subspace;

pub use csr::{csr_solve, group_shrink, CsrOutput, CsrParams};
pub use danser::{DanserParams, DanserState, UnmixResult};
pub use dictionary::SpectralDictionary;
pub use error::{Error, Result};
pub use pruning::{
    epsilon_from_alpha, music_residue, prune, prune_with, rmusic_residue, solve_eta_star, PruneResult,
    RobustnessBudget, Selection,
};
pub use scalar::Real;
pub use simgen::{generate, SceneSpec, SyntheticScene};
pub use subspace::{estimate_order, estimate_subspace, project_complement, PixelMatrix, SignalSubspace};

pub type PixelMatrix64 = PixelMatrix<f64>;
pub type PixelMatrix32 = PixelMatrix<f32>;
pub type SignalSubspace64 = SignalSubspace<f64>;
pub type SignalSubspace32 = SignalSubspace<f32>;
pub type SpectralDictionary64 = SpectralDictionary<f64>;
pub type SpectralDictionary32 = SpectralDictionary<f32>;
pub type RobustnessBudget64 = RobustnessBudget<f64>;
pub type DanserParams64 = DanserParams<f64>;
pub type DanserParams32 = DanserParams<f32>;
pub type CsrParams64 = CsrParams<f64>;
pub type UnmixResult64 = UnmixResult<f64>;
pub type SyntheticScene64 = SyntheticScene<f64>;
