//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Each rotation annihilates one off-diagonal pair with a phased Givens
//! rotation; sweeps repeat until the largest off-diagonal magnitude drops below
//! `tol::EIG_OFF_REL` times the input's Frobenius norm. The sweep budget is a
//! hard cap: blowing it returns an error instead of a half-converged spectrum.

use super::{CMat, Hermitian, NumericsError, C64};
use crate::tol;

/// Eigendecomposition of a Hermitian matrix: `values` sorted descending,
/// `vectors` column `k` paired with `values[k]`, unitary as a whole.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn eig_hermitian(h: &Hermitian) -> Result<Eigen, NumericsError> {
    let n = h.dim();
    let mut a = h.matrix().clone();
    let mut v = CMat::eye(n);
    if n <= 1 {
        let values = (0..n).map(|i| a[[i, i]].re).collect();
        return Ok(Eigen { values, vectors: v });
    }

    let scale = super::frob_norm(&a);
    let threshold = tol::EIG_OFF_REL * scale;
    let mut converged = scale == 0.0;
    for _ in 0..tol::EIG_MAX_SWEEPS {
        if converged {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                let mag = apq.norm();
                if mag > threshold {
                    rotate(&mut a, &mut v, p, q, apq, mag);
                }
            }
        }
        // Re-scan after the sweep: rotations revive earlier zeros.
        let mut off_max = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off_max = off_max.max(a[[p, q]].norm());
            }
        }
        converged = off_max <= threshold;
    }
    if !converged {
        return Err(NumericsError::NoConvergence {
            dim: n,
            sweeps: tol::EIG_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].re.partial_cmp(&a[[i, i]].re).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[[i, i]].re).collect();
    let vectors = super::select_columns(&v, &order);
    Ok(Eigen { values, vectors })
}

/// One phased Jacobi rotation zeroing `a[p, q]` (and its mirror).
fn rotate(a: &mut CMat, v: &mut CMat, p: usize, q: usize, apq: C64, mag: f64) {
    let n = a.nrows();
    let phase = apq / mag; // e^{i arg}
    let app = a[[p, p]].re;
    let aqq = a[[q, q]].re;
    let tau = (aqq - app) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let su = s * phase;
    let su_c = su.conj();

    a[[p, p]] = C64::new(app - t * mag, 0.0);
    a[[q, q]] = C64::new(aqq + t * mag, 0.0);
    a[[p, q]] = C64::ZERO;
    a[[q, p]] = C64::ZERO;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let arp = a[[r, p]];
        let arq = a[[r, q]];
        let new_p = c * arp - su_c * arq;
        let new_q = su * arp + c * arq;
        a[[r, p]] = new_p;
        a[[r, q]] = new_q;
        a[[p, r]] = new_p.conj();
        a[[q, r]] = new_q.conj();
    }
    for r in 0..n {
        let vrp = v[[r, p]];
        let vrq = v[[r, q]];
        v[[r, p]] = c * vrp - su_c * vrq;
        v[[r, q]] = su * vrp + c * vrq;
    }
}
