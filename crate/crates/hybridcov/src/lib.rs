//! Spatial channel covariance estimation for hybrid analog/digital antenna arrays.
//!
//! A hybrid receiver observes an `N`-antenna array through `M < N` RF chains, so
//! every snapshot is a compressed projection of the channel. This crate builds the
//! full pipeline for recovering the spatial covariance of a sparse multipath
//! channel from such projections:
//!
//! * [`channel`] — array manifolds, dictionary grids, sparse channel realizations
//!   (narrowband, MIMO, wideband-OFDM).
//! * [`sensing`] — random analog combiners, baseband whitening to a tight frame,
//!   frame-quality metrics, and structured (Kronecker / Khatri-Rao) operators for
//!   the MIMO aggregate model.
//! * [`simulate`] — measurement synthesis with post-combining white noise.
//! * [`recovery`] — six greedy estimators (OMP, SOMP, DSOMP, COMP, DCOMP,
//!   WB-DCOMP) and covariance reconstruction.
//! * [`analysis`] — coherence-style success metrics for the greedy selection
//!   step, their closed-form bound, and Monte-Carlo CDF machinery.
//! * [`metrics`] — covariance-quality scores: subspace efficiency and spectral
//!   -efficiency loss under eigenbeamforming.
//! * [`experiment`] — config-driven, deterministic Monte-Carlo experiment runner
//!   with CSV output (the engine behind the `hybridcov` CLI).
//!
//! Numerical kernels (Hermitian eigensolver, pseudoinverse, PSD square roots)
//! are self-contained in [`numerics`]; all tolerances live in [`tol`].

pub mod analysis;
pub mod channel;
pub mod experiment;
pub mod metrics;
pub mod numerics;
pub mod recovery;
pub mod sensing;
pub mod simulate;
pub mod tol;

#[cfg(doctest)]
mod book {
    //! Every chapter of the guide in `book/` compiles and runs as a doctest,
    //! which keeps the prose and the API in lockstep.
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel-model.md")]
    mod channel_model {}
    #[doc = include_str!("../../../book/src/sensing-design.md")]
    mod sensing_design {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/coherence-analysis.md")]
    mod coherence_analysis {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
