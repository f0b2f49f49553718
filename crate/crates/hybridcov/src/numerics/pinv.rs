//! Pseudoinverse via normal equations, plus PSD square roots.
//!
//! The greedy estimators only ever invert tall blocks of at most `M` selected
//! columns, so `(B^H B)^{-1} B^H` with a Cholesky solve is both the cheapest
//! and the most predictable route. The Cholesky pivots double as a condition
//! estimate: `max(diag L)/min(diag L)` tracks the block's condition number, and
//! anything past `tol::PINV_COND_MAX` is reported as singular together with the
//! offending block width.

use super::{eig_hermitian, gram, matmul, CMat, Hermitian, NumericsError, C64};
use crate::tol;

/// Lower-triangular Cholesky factor of a Hermitian positive-definite matrix,
/// `h = L L^H`. Fails on non-positive pivots or a condition estimate beyond
/// the pseudoinverse guard.
pub fn cholesky(h: &CMat) -> Result<CMat, NumericsError> {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "cholesky: square input required");
    let mut l = CMat::zeros((n, n));
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for j in 0..n {
        let mut d = h[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(NumericsError::Singular {
                cols: n,
                cond: f64::INFINITY,
                max: tol::PINV_COND_MAX,
            });
        }
        let dj = d.sqrt();
        dmin = dmin.min(dj);
        dmax = dmax.max(dj);
        l[[j, j]] = C64::new(dj, 0.0);
        for i in j + 1..n {
            let mut acc = h[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = acc / dj;
        }
    }
    // Pivot ratio approximates the square root of the Gram condition number,
    // i.e. the condition of the original column block.
    let cond = dmax / dmin;
    if cond > tol::PINV_COND_MAX {
        return Err(NumericsError::Singular {
            cols: n,
            cond,
            max: tol::PINV_COND_MAX,
        });
    }
    Ok(l)
}

/// Solves `L L^H x = b` for each column of `b` given the Cholesky factor.
pub fn cholesky_solve(l: &CMat, b: &CMat) -> CMat {
    let n = l.nrows();
    assert_eq!(n, b.nrows(), "cholesky_solve: rhs rows");
    let cols = b.ncols();
    let mut x = b.clone();
    // Forward: L y = b.
    for j in 0..cols {
        for i in 0..n {
            let mut acc = x[[i, j]];
            for k in 0..i {
                acc -= l[[i, k]] * x[[k, j]];
            }
            x[[i, j]] = acc / l[[i, i]].re;
        }
        // Backward: L^H x = y.
        for i in (0..n).rev() {
            let mut acc = x[[i, j]];
            for k in i + 1..n {
                acc -= l[[k, i]].conj() * x[[k, j]];
            }
            x[[i, j]] = acc / l[[i, i]].re;
        }
    }
    x
}

/// Moore-Penrose pseudoinverse of a full-column-rank tall (or square) matrix.
pub fn pseudoinverse(m: &CMat) -> Result<CMat, NumericsError> {
    let (r, c) = m.dim();
    if r < c {
        return Err(NumericsError::Dimension(format!(
            "pseudoinverse expects rows >= cols, got {r}x{c}"
        )));
    }
    let g = gram(m);
    let l = cholesky(&g).map_err(|e| match e {
        // Report the block width (= selected support size) of the original.
        NumericsError::Singular { cond, max, .. } => NumericsError::Singular { cols: c, cond, max },
        other => other,
    })?;
    Ok(cholesky_solve(&l, &super::adjoint(m)))
}

/// Orthogonal projector onto the column space, `m (m^H m)^{-1} m^H`.
pub fn projector(m: &CMat) -> Result<CMat, NumericsError> {
    let p = pseudoinverse(m)?;
    Ok(matmul(m, &p))
}

/// `h^{-1/2}` for a strictly positive-definite Hermitian matrix (up to the
/// rank tolerance); rank deficiency is an error carrying the smallest
/// eigenvalue so callers can see how degenerate the input was.
pub fn inv_sqrt_psd(h: &Hermitian) -> Result<CMat, NumericsError> {
    let e = eig_hermitian(h)?;
    let lmax = e.values.first().copied().unwrap_or(0.0);
    let lmin = e.values.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 || lmin <= tol::PSD_RANK_REL * lmax {
        return Err(NumericsError::NotPsd { min_eig: lmin });
    }
    Ok(scaled_reconstruct(&e.vectors, &e.values, |l| 1.0 / l.sqrt()))
}

/// `h^{1/2}` for a PSD Hermitian matrix; eigenvalues slightly below zero are
/// clamped, genuinely negative ones are an error.
pub fn sqrt_psd(h: &Hermitian) -> Result<CMat, NumericsError> {
    let e = eig_hermitian(h)?;
    let lmax = e.values.first().copied().unwrap_or(0.0).max(0.0);
    let lmin = e.values.last().copied().unwrap_or(0.0);
    if lmin < -tol::PSD_NEG_REL * lmax.max(f64::MIN_POSITIVE) {
        return Err(NumericsError::NotPsd { min_eig: lmin });
    }
    Ok(scaled_reconstruct(&e.vectors, &e.values, |l| {
        if l > 0.0 {
            l.sqrt()
        } else {
            0.0
        }
    }))
}

fn scaled_reconstruct(v: &CMat, values: &[f64], f: impl Fn(f64) -> f64) -> CMat {
    let n = v.nrows();
    let mut scaled = CMat::zeros((n, values.len()));
    for (k, &l) in values.iter().enumerate() {
        let w = f(l);
        for i in 0..n {
            scaled[[i, k]] = v[[i, k]] * w;
        }
    }
    // scaled * V^H, i.e. V f(Lambda) V^H.
    matmul(&scaled, &super::adjoint(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{adjoint, max_abs_diff, select_columns};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_mat(r: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_shape_fn((r, cols), |_| {
            c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    /// [[4,2],[2,3]] = L L^H with L = [[2,0],[1,sqrt 2]].
    #[test]
    fn cholesky_two_by_two_closed_form() {
        let h = array![[c(4.0, 0.0), c(2.0, 0.0)], [c(2.0, 0.0), c(3.0, 0.0)]];
        let l = cholesky(&h).unwrap();
        assert!((l[[0, 0]].re - 2.0).abs() < 1e-15);
        assert!((l[[1, 0]].re - 1.0).abs() < 1e-15);
        assert!((l[[1, 1]].re - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[[0, 1]], C64::ZERO);
    }

    #[test]
    fn pseudoinverse_of_identity() {
        let p = pseudoinverse(&CMat::eye(3)).unwrap();
        assert!(max_abs_diff(&p, &CMat::eye(3)) < 1e-14);
    }

    /// pinv([1; 1]) = [1/2, 1/2].
    #[test]
    fn pseudoinverse_rank_one_column() {
        let m = array![[c(1.0, 0.0)], [c(1.0, 0.0)]];
        let p = pseudoinverse(&m).unwrap();
        assert_eq!(p.dim(), (1, 2));
        assert!((p[[0, 0]] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((p[[0, 1]] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pseudoinverse_moore_penrose_conditions() {
        let m = random_mat(6, 4, 42);
        let p = pseudoinverse(&m).unwrap();
        let mp = super::matmul(&m, &p);
        let pm = super::matmul(&p, &m);
        assert!(max_abs_diff(&pm, &CMat::eye(4)) < 1e-10);
        assert!(max_abs_diff(&super::matmul(&mp, &m), &m) < 1e-10);
        // M P is the orthogonal projector: Hermitian and idempotent.
        assert!(max_abs_diff(&mp, &adjoint(&mp)) < 1e-10);
        assert!(max_abs_diff(&super::matmul(&mp, &mp), &mp) < 1e-10);
    }

    #[test]
    fn pseudoinverse_reports_singular_support() {
        let col = random_mat(5, 1, 3);
        let mut m = CMat::zeros((5, 2));
        for i in 0..5 {
            m[[i, 0]] = col[[i, 0]];
            m[[i, 1]] = col[[i, 0]]; // duplicate column => rank 1
        }
        match pseudoinverse(&m) {
            Err(NumericsError::Singular { cols: 2, .. }) => {}
            other => panic!("expected Singular with cols=2, got {other:?}"),
        }
    }

    #[test]
    fn pseudoinverse_rejects_fat_input() {
        assert!(matches!(
            pseudoinverse(&CMat::zeros((2, 5))),
            Err(NumericsError::Dimension(_))
        ));
    }

    #[test]
    fn projector_properties() {
        let m = random_mat(8, 3, 7);
        let p = projector(&m).unwrap();
        assert!(max_abs_diff(&super::matmul(&p, &p), &p) < 1e-10);
        assert!(max_abs_diff(&p, &adjoint(&p)) < 1e-10);
        assert!(max_abs_diff(&super::matmul(&p, &m), &m) < 1e-10);
        // Complement annihilates the columns: (I - P) m = 0.
        let comp = &CMat::eye(8) - &p;
        assert!(crate::numerics::max_abs(&super::matmul(&comp, &m)) < 1e-10);
    }

    #[test]
    fn inv_sqrt_diagonal_closed_form() {
        let h = Hermitian::new(array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(9.0, 0.0)]]);
        let s = inv_sqrt_psd(&h).unwrap();
        assert!((s[[0, 0]].re - 1.0).abs() < 1e-12);
        assert!((s[[1, 1]].re - 1.0 / 3.0).abs() < 1e-12);
        assert!(s[[0, 1]].norm() < 1e-13);
    }

    #[test]
    fn inv_sqrt_whitens() {
        let x = random_mat(4, 6, 12);
        let a = Hermitian::new(super::gram(&adjoint(&x))); // X X^H, PD a.s.
        let s = inv_sqrt_psd(&a).unwrap();
        let w = super::matmul(&super::matmul(&s, a.matrix()), &s);
        assert!(max_abs_diff(&w, &CMat::eye(4)) < 1e-10);
        assert!(max_abs_diff(&s, &adjoint(&s)) < 1e-10);
    }

    #[test]
    fn inv_sqrt_rejects_rank_deficiency() {
        let x = random_mat(4, 2, 13); // rank 2 < 4
        let a = Hermitian::new(super::gram(&adjoint(&x)));
        match inv_sqrt_psd(&a) {
            Err(NumericsError::NotPsd { min_eig }) => assert!(min_eig.abs() < 1e-10),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let x = random_mat(5, 3, 14); // rank 3: sqrt must handle the null space
        let a = Hermitian::new(super::gram(&adjoint(&x)));
        let s = sqrt_psd(&a).unwrap();
        let sq = super::matmul(&s, &s);
        assert!(max_abs_diff(&sq, a.matrix()) < 1e-10);
    }

    #[test]
    fn cholesky_solve_against_known_solution() {
        let m = random_mat(6, 3, 99);
        let g = super::gram(&m);
        let l = cholesky(&g).unwrap();
        let x_true = random_mat(3, 2, 100);
        let b = super::matmul(&g, &x_true);
        let x = cholesky_solve(&l, &b);
        assert!(max_abs_diff(&x, &x_true) < 1e-10);
    }

    #[test]
    fn select_columns_roundtrip_via_projector() {
        // Projector built from a permuted subset equals the unpermuted one.
        let m = random_mat(6, 4, 55);
        let p1 = projector(&select_columns(&m, &[0, 2])).unwrap();
        let p2 = projector(&select_columns(&m, &[2, 0])).unwrap();
        assert!(max_abs_diff(&p1, &p2) < 1e-10);
    }
}
