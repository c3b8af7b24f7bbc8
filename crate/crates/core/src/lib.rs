//! Covariance estimation and Fréchet means on the SPD manifold with a
//! random-matrix-theory correction of the squared Fisher distance.
//!
//! The corrected distance [`rmt_dist2`] estimates `δ²(R, C)` from an SCM
//! `Ĉ` of `C` without the upward bias of the plug-in `δ²(R, Ĉ)`. Minimising
//! it yields a covariance estimator ([`rmt_cov`]), a one-step Fréchet mean
//! of several data sets ([`rmt_mean`]) and the learners in [`learning`].

pub mod covariance;
pub mod error;
pub mod experiments;
pub mod frechet;
pub mod gradcheck;
pub mod gradients;
pub mod io;
pub mod learning;
pub mod linalg;
pub mod optim;
pub mod rmt_distance;
pub mod synthetic;

#[cfg(test)]
mod testutil;

pub use covariance::{lw_linear, rmt_cov, scm, CovInit, DataMatrix, LwEstimate};
pub use error::{Error, Result};
pub use frechet::{classical_mean, rmt_mean, MeanInit};
pub use gradients::{grad_classical_mean, grad_f_rmt, grad_g_rmt, grad_h_mean, GradWorkspace};
pub use linalg::{fisher_dist2, fisher_inner, retract, sym_eig, SpdMatrix, SpectralPair, SymMatrix};
pub use optim::{descend, DescentConfig, DescentTrace, InitialStep, Objective, Termination};
pub use rmt_distance::{rmt_dist2, spectral_context, RmtSpectralContext};
