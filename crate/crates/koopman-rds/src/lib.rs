//! Spectral analysis of stochastic Koopman operators for random dynamical
//! systems.
//!
//! The stochastic Koopman operator advances observables by expectation,
//! `K^t f(x) = E[f(phi(t,w) x)]`. This crate estimates its eigenvalues and
//! eigenfunctions from simulated data with two DMD variants:
//!
//! * **DMD RRR** — column scaling, tolerance-based SVD truncation, Rayleigh
//!   quotient extraction and per-Ritz-pair residual rejection, applied to
//!   snapshot pairs or time-delayed snapshots ([`dmd::dmd_rrr`]).
//! * **Stochastic Hankel DMD** — DMD applied to a Hankel matrix of
//!   conditional expectations sampled along one realized trajectory
//!   ([`pipeline::assemble_stochastic_hankel`]).
//!
//! A catalog of model systems with known spectra ([`models`], [`oracle`])
//! and a batch experiment runner ([`experiments`]) validate the estimators
//! against closed-form references.

pub mod dmd;
pub mod error;
pub mod experiments;
pub mod integrators;
pub mod models;
pub mod noise;
pub mod observables;
pub mod oracle;
pub mod pipeline;

pub use error::{Error, Result};
