//! Central numeric tolerances. Every cutoff used by the kernels and the test
//! suites lives here so a change in one place propagates everywhere.

/// Pseudoinverse condition-number guard: a selected column block whose
/// estimated condition exceeds this is treated as singular.
pub const PINV_COND_MAX: f64 = 1e12;

/// Jacobi eigensolver stops once the largest off-diagonal magnitude falls
/// below this fraction of the input's Frobenius norm.
pub const EIG_OFF_REL: f64 = 1e-13;

/// Hard sweep budget for the cyclic Jacobi eigensolver; exceeding it is an
/// error rather than a silent partial result.
pub const EIG_MAX_SWEEPS: usize = 100;

/// Relative eigenvalue cutoff (vs. the largest eigenvalue) below which a PSD
/// matrix is considered rank-deficient.
pub const PSD_RANK_REL: f64 = 1e-12;

/// How far below zero an eigenvalue may sit (relative to the largest) before a
/// nominally PSD matrix is rejected instead of clamped.
pub const PSD_NEG_REL: f64 = 1e-10;

/// Allowed relative deviation of a whitened sensing frame from a perfect tight
/// frame, `||Phi Phi^H - c I||_F <= FRAME_DEV_REL * c`.
pub const FRAME_DEV_REL: f64 = 1e-8;

/// Absolute tolerance for estimator-reduction equivalences (e.g. the
/// distributed estimators collapsing to their fixed-matrix counterparts).
pub const REDUCTION_ABS: f64 = 1e-12;
