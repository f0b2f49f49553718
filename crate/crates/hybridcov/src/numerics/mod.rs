//! Dense complex linear algebra: the small, self-contained kernel set the rest
//! of the crate builds on. Matrices are row-major `ndarray` arrays of
//! `Complex64`; everything here is deterministic (no pivoting heuristics, no
//! platform-dependent branching), which is what makes bit-reproducible
//! Monte-Carlo runs possible further up the stack.

mod eig;
mod pinv;

pub use eig::{eig_hermitian, Eigen};
pub use pinv::{cholesky, cholesky_solve, inv_sqrt_psd, projector, pseudoinverse, sqrt_psd};

use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64;

pub type C64 = Complex64;
/// Dense complex matrix, row-major.
pub type CMat = Array2<C64>;
/// Dense complex vector.
pub type CVec = Array1<C64>;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("singular block of {cols} columns: condition estimate {cond:.3e} exceeds {max:.1e}")]
    Singular { cols: usize, cond: f64, max: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eig:.6e}")]
    NotPsd { min_eig: f64 },
    #[error("eigensolver did not converge: dim {dim}, sweep budget {sweeps}")]
    NoConvergence { dim: usize, sweeps: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Hermitian matrix wrapper. Construction symmetrizes, `(H + H^H)/2`, so the
/// stored matrix is Hermitian to the last bit and downstream code may rely on
/// real diagonals.
#[derive(Debug, Clone)]
pub struct Hermitian(CMat);

impl Hermitian {
    /// Symmetrizing constructor; rejects non-square or non-finite input.
    pub fn try_new(m: CMat) -> Result<Self, NumericsError> {
        let (r, c) = m.dim();
        if r != c {
            return Err(NumericsError::Dimension(format!(
                "Hermitian requires square input, got {r}x{c}"
            )));
        }
        if let Some((row, col)) = first_non_finite(&m) {
            return Err(NumericsError::NonFinite { row, col });
        }
        let mut h = CMat::zeros((r, r));
        for i in 0..r {
            for j in 0..r {
                let avg = 0.5 * (m[[i, j]] + m[[j, i]].conj());
                h[[i, j]] = if i == j { C64::new(avg.re, 0.0) } else { avg };
            }
        }
        Ok(Self(h))
    }

    /// Panicking variant of [`Hermitian::try_new`] for infallible call sites.
    pub fn new(m: CMat) -> Self {
        Self::try_new(m).expect("Hermitian::new")
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    /// Largest relative asymmetry of the raw input this wrapper would remove;
    /// handy for asserting a matrix was already Hermitian.
    pub fn asymmetry(m: &CMat) -> f64 {
        let n = m.nrows();
        let scale = frob_norm(m).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (m[[i, j]] - m[[j, i]].conj()).norm();
                worst = worst.max(d / scale);
            }
        }
        worst
    }
}

/// Index of the first NaN/infinite entry, if any.
pub fn first_non_finite(m: &CMat) -> Option<(usize, usize)> {
    let (r, c) = m.dim();
    for i in 0..r {
        for j in 0..c {
            let z = m[[i, j]];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Conjugate transpose.
pub fn adjoint(m: &CMat) -> CMat {
    let (r, c) = m.dim();
    CMat::from_shape_fn((c, r), |(i, j)| m[[j, i]].conj())
}

/// `a * b`. Hand-rolled i-k-j kernel over contiguous rows; the inner axpy is
/// the hot loop of the whole crate, so it stays allocation-free.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let (m, k) = a.dim();
    let (k2, n) = b.dim();
    assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
    let mut out = CMat::zeros((m, n));
    {
        let bs = b.as_slice().expect("matmul: rhs must be standard layout");
        let os = out.as_slice_mut().unwrap();
        for i in 0..m {
            let orow = &mut os[i * n..(i + 1) * n];
            for kk in 0..k {
                let aik = a[[i, kk]];
                if aik == C64::ZERO {
                    continue;
                }
                let brow = &bs[kk * n..(kk + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
    }
    out
}

/// `a^H * b` without materializing the adjoint.
pub fn adjoint_mul(a: &CMat, b: &CMat) -> CMat {
    let (r, ca) = a.dim();
    let (r2, cb) = b.dim();
    assert_eq!(r, r2, "adjoint_mul: row dims {r} vs {r2}");
    let mut out = CMat::zeros((ca, cb));
    for i in 0..r {
        for p in 0..ca {
            let w = a[[i, p]].conj();
            if w == C64::ZERO {
                continue;
            }
            for q in 0..cb {
                out[[p, q]] += w * b[[i, q]];
            }
        }
    }
    out
}

/// Gram matrix `m^H * m` (Hermitian by construction).
pub fn gram(m: &CMat) -> CMat {
    let (r, c) = m.dim();
    let mut g = CMat::zeros((c, c));
    for i in 0..r {
        for p in 0..c {
            let w = m[[i, p]].conj();
            for q in p..c {
                g[[p, q]] += w * m[[i, q]];
            }
        }
    }
    for p in 0..c {
        g[[p, p]] = C64::new(g[[p, p]].re, 0.0);
        for q in (p + 1)..c {
            g[[q, p]] = g[[p, q]].conj();
        }
    }
    g
}

/// `m * v`.
pub fn mul_vec(m: &CMat, v: ArrayView1<C64>) -> CVec {
    let (r, c) = m.dim();
    assert_eq!(c, v.len(), "mul_vec: {c} cols vs vector of {}", v.len());
    let mut out = CVec::zeros(r);
    for i in 0..r {
        let mut acc = C64::ZERO;
        for j in 0..c {
            acc += m[[i, j]] * v[j];
        }
        out[i] = acc;
    }
    out
}

/// `m^H * v`, accumulated row-by-row so the matrix is walked contiguously.
pub fn adjoint_mul_vec(m: &CMat, v: ArrayView1<C64>) -> CVec {
    let (r, c) = m.dim();
    assert_eq!(r, v.len(), "adjoint_mul_vec: {r} rows vs vector of {}", v.len());
    let mut out = CVec::zeros(c);
    {
        let ms = m.as_slice().expect("adjoint_mul_vec: standard layout");
        let os = out.as_slice_mut().unwrap();
        for i in 0..r {
            let vi = v[i];
            if vi == C64::ZERO {
                continue;
            }
            let row = &ms[i * c..(i + 1) * c];
            for j in 0..c {
                os[j] += row[j].conj() * vi;
            }
        }
    }
    out
}

pub fn frob_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entrywise magnitude of `a - b`; the workhorse of equivalence tests.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Columns of `m` selected by `idx`, in the given order.
pub fn select_columns(m: &CMat, idx: &[usize]) -> CMat {
    let r = m.nrows();
    let mut out = CMat::zeros((r, idx.len()));
    for (k, &j) in idx.iter().enumerate() {
        for i in 0..r {
            out[[i, k]] = m[[i, j]];
        }
    }
    out
}
