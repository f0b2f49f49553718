//! Greedy sparse recovery: six matching-pursuit variants and covariance
//! reconstruction.
//!
//! The family splits on two axes. Gain-domain estimators ([`omp`], [`somp`],
//! [`dsomp`]) select by correlating columns against vector residuals and
//! return least-squares gains. Covariance-domain estimators ([`comp`],
//! [`dcomp`], [`wb_dcomp`]) select by quadratic forms against matrix
//! residuals `V = R - P R P` and return the recovered covariance core block.
//! The `d`-prefixed variants accept one sensing matrix per snapshot, which is
//! what makes time-varying analog combining usable.
//!
//! Shared conventions: exactly `L` iterations (sparsity order is an input),
//! ties broken by lowest index, already-selected indices excluded, supports
//! reported in selection order, inputs never mutated.

use crate::numerics::{
    adjoint, adjoint_mul, adjoint_mul_vec, cholesky, gram, matmul, mul_vec, CMat, CVec,
    NumericsError, C64,
};
use crate::sensing::SensingOperator;
use ndarray::s;

/// Output of the gain-domain estimators.
#[derive(Debug, Clone)]
pub struct SparseApproximation {
    /// Selected dictionary indices, in selection order.
    pub support: Vec<usize>,
    /// Final least-squares gains, `|support| x T`, rows aligned to `support`.
    pub gains: CMat,
}

impl SparseApproximation {
    /// Gains scattered into the full dictionary index space, `d x T`.
    pub fn embedded_gains(&self, d: usize) -> CMat {
        let t = self.gains.ncols();
        let mut g = CMat::zeros((d, t));
        for (row, &j) in self.support.iter().enumerate() {
            for c in 0..t {
                g[[j, c]] = self.gains[[row, c]];
            }
        }
        g
    }

    /// Sample-covariance view: core block `(1/T) G G^H` over the support.
    pub fn into_covariance(self) -> CovarianceEstimate {
        let t = self.gains.ncols().max(1);
        let core = matmul(&self.gains, &adjoint(&self.gains)).mapv(|z| z / t as f64);
        CovarianceEstimate {
            support: self.support,
            core: hermitize(&core),
            gains: Some(self.gains),
        }
    }
}

/// Output of the covariance-domain estimators: the estimated gain covariance
/// restricted to the recovered support.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Selected dictionary indices, in selection order.
    pub support: Vec<usize>,
    /// Hermitian `|support| x |support|` block, aligned to `support`.
    pub core: CMat,
    /// Per-snapshot gains when a gain-domain path produced the estimate.
    pub gains: Option<CMat>,
}

impl CovarianceEstimate {
    /// Dense `d x d` gain covariance (zero outside the support block).
    pub fn r_g_dense(&self, d: usize) -> CMat {
        let mut r = CMat::zeros((d, d));
        for (a, &i) in self.support.iter().enumerate() {
            for (b, &j) in self.support.iter().enumerate() {
                r[[i, j]] = self.core[[a, b]];
            }
        }
        r
    }

    /// Channel covariance `A_S core A_S^H`, symmetrized.
    pub fn r_h(&self, a: &CMat) -> CMat {
        let a_s = crate::numerics::select_columns(a, &self.support);
        let r = matmul(&matmul(&a_s, &self.core), &adjoint(&a_s));
        hermitize(&r)
    }
}

/// Channel covariance from whichever pieces the estimate carries; equals
/// `A R_g A^H` on the dense embedding.
pub fn reconstruct_covariance(est: &CovarianceEstimate, a: &CMat) -> CMat {
    est.r_h(a)
}

fn hermitize(m: &CMat) -> CMat {
    let n = m.nrows();
    CMat::from_shape_fn((n, n), |(i, j)| 0.5 * (m[[i, j]] + m[[j, i]].conj()))
}

fn check_sparsity(l: usize, rows: usize, cols: usize) -> Result<(), NumericsError> {
    if l == 0 || l > rows || l > cols {
        return Err(NumericsError::Dimension(format!(
            "sparsity order {l} outside 1..=min(rows {rows}, cols {cols})"
        )));
    }
    Ok(())
}

/// Lowest index wins on exact ties; scanning ascending with a strict
/// comparison implements that for free.
fn argmax_unselected(metric: &[f64], selected: &[bool]) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut idx = usize::MAX;
    for (i, (&m, &s)) in metric.iter().zip(selected).enumerate() {
        if !s && m > best {
            best = m;
            idx = i;
        }
    }
    assert!(idx != usize::MAX, "argmax over empty or non-finite metric");
    idx
}

fn op_columns<Op: SensingOperator + ?Sized>(op: &Op, support: &[usize]) -> CMat {
    let mut m = CMat::zeros((op.rows(), support.len()));
    for (c, &j) in support.iter().enumerate() {
        let col = op.column(j);
        for i in 0..op.rows() {
            m[[i, c]] = col[i];
        }
    }
    m
}

/// `argmin_X || rhs - basis X ||_F` via the normal equations; the Cholesky
/// factorization carries the condition guard.
fn least_squares(basis: &CMat, rhs: &CMat) -> Result<CMat, NumericsError> {
    let l = cholesky(&gram(basis))?;
    Ok(crate::numerics::cholesky_solve(&l, &adjoint_mul(basis, rhs)))
}

fn least_squares_vec(basis: &CMat, rhs: &CVec) -> Result<CVec, NumericsError> {
    let l = cholesky(&gram(basis))?;
    let b = adjoint_mul_vec(basis, rhs.view());
    let bm = CMat::from_shape_fn((b.len(), 1), |(i, _)| b[i]);
    let x = crate::numerics::cholesky_solve(&l, &bm);
    Ok(x.column(0).to_owned())
}

/// Orthogonal matching pursuit on a single measurement vector: selects
/// `argmax_i |phi_i^H v|`, then re-projects the residual onto the complement
/// of the selected columns.
pub fn omp(phi: &CMat, y: &CVec, l: usize) -> Result<SparseApproximation, NumericsError> {
    let (m, d) = phi.dim();
    check_sparsity(l, m, d)?;
    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(l);
    let mut v = y.clone();
    let mut gains = CVec::zeros(0);
    for _ in 0..l {
        let c = adjoint_mul_vec(phi, v.view());
        let metric: Vec<f64> = c.iter().map(|z| z.norm_sqr()).collect();
        let j = argmax_unselected(&metric, &selected);
        selected[j] = true;
        support.push(j);
        let basis = crate::numerics::select_columns(phi, &support);
        let q = least_squares_vec(&basis, y)?;
        v = y - &mul_vec(&basis, q.view());
        gains = q;
    }
    Ok(SparseApproximation {
        support,
        gains: CMat::from_shape_fn((l, 1), |(i, _)| gains[i]),
    })
}

/// Simultaneous OMP on `T` measurement columns sharing one sensing matrix:
/// selects `argmax_i ||phi_i^H V||_2` over the matrix residual.
pub fn somp(phi: &CMat, ys: &CMat, l: usize) -> Result<SparseApproximation, NumericsError> {
    let (m, d) = phi.dim();
    check_sparsity(l, m, d)?;
    if ys.nrows() != m || ys.ncols() == 0 {
        return Err(NumericsError::Dimension(format!(
            "measurements {}x{} incompatible with sensing {}x{}",
            ys.nrows(),
            ys.ncols(),
            m,
            d
        )));
    }
    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(l);
    let mut v = ys.clone();
    let mut gains = CMat::zeros((0, 0));
    for _ in 0..l {
        let c = adjoint_mul(phi, &v); // d x T
        let metric: Vec<f64> = (0..d)
            .map(|i| (0..c.ncols()).map(|t| c[[i, t]].norm_sqr()).sum())
            .collect();
        let j = argmax_unselected(&metric, &selected);
        selected[j] = true;
        support.push(j);
        let basis = crate::numerics::select_columns(phi, &support);
        let q = least_squares(&basis, ys)?;
        v = ys - &matmul(&basis, &q);
        gains = q;
    }
    Ok(SparseApproximation { support, gains })
}

fn check_snapshots<Op: SensingOperator>(
    phis: &[Op],
    lens: &[usize],
) -> Result<(usize, usize), NumericsError> {
    if phis.is_empty() || phis.len() != lens.len() {
        return Err(NumericsError::Dimension(format!(
            "{} sensing snapshots vs {} measurement frames",
            phis.len(),
            lens.len()
        )));
    }
    let d = phis[0].cols();
    let mut min_rows = usize::MAX;
    for (t, op) in phis.iter().enumerate() {
        if op.cols() != d || op.rows() != lens[t] {
            return Err(NumericsError::Dimension(format!(
                "snapshot {t}: operator {}x{} vs measurement length {}",
                op.rows(),
                op.cols(),
                lens[t]
            )));
        }
        min_rows = min_rows.min(op.rows());
    }
    Ok((d, min_rows))
}

/// Dynamic SOMP: per-snapshot sensing matrices, selection by
/// `argmax_i sum_t |phi_{t,i}^H v_t|^2`, per-snapshot residuals and gains.
pub fn dsomp<Op: SensingOperator>(
    phis: &[Op],
    ys: &[CVec],
    l: usize,
) -> Result<SparseApproximation, NumericsError> {
    let lens: Vec<usize> = ys.iter().map(|y| y.len()).collect();
    let (d, min_rows) = check_snapshots(phis, &lens)?;
    check_sparsity(l, min_rows, d)?;
    let t_count = phis.len();
    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(l);
    let mut vs: Vec<CVec> = ys.to_vec();
    let mut final_qs: Vec<CVec> = Vec::new();
    for _ in 0..l {
        let mut metric = vec![0.0f64; d];
        for (op, v) in phis.iter().zip(&vs) {
            let c = op.adjoint_apply(v);
            for i in 0..d {
                metric[i] += c[i].norm_sqr();
            }
        }
        let j = argmax_unselected(&metric, &selected);
        selected[j] = true;
        support.push(j);
        final_qs.clear();
        for t in 0..t_count {
            let basis = op_columns(&phis[t], &support);
            let q = least_squares_vec(&basis, &ys[t])?;
            vs[t] = &ys[t] - &mul_vec(&basis, q.view());
            final_qs.push(q);
        }
    }
    let gains = CMat::from_shape_fn((l, t_count), |(i, t)| final_qs[t][i]);
    Ok(SparseApproximation { support, gains })
}

/// Covariance OMP: forms the sample covariance `R = (1/T) Y Y^H`, selects by
/// the quadratic form `argmax_i phi_i^H V phi_i` with residual
/// `V = R - P R P`, and returns the back-projected support block.
pub fn comp(phi: &CMat, ys: &CMat, l: usize) -> Result<CovarianceEstimate, NumericsError> {
    let (m, d) = phi.dim();
    check_sparsity(l, m, d)?;
    if ys.nrows() != m || ys.ncols() == 0 {
        return Err(NumericsError::Dimension(format!(
            "measurements {}x{} incompatible with sensing {}x{}",
            ys.nrows(),
            ys.ncols(),
            m,
            d
        )));
    }
    let t = ys.ncols();
    let r_hat = hermitize(&matmul(ys, &adjoint(ys)).mapv(|z| z / t as f64));
    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(l);
    let mut v = r_hat.clone();
    let mut core = CMat::zeros((0, 0));
    for _ in 0..l {
        let x = matmul(&v, phi); // m x d
        let metric: Vec<f64> = (0..d)
            .map(|i| (0..m).map(|r| (phi[[r, i]].conj() * x[[r, i]]).re).sum())
            .collect();
        let j = argmax_unselected(&metric, &selected);
        selected[j] = true;
        support.push(j);
        let basis = crate::numerics::select_columns(phi, &support);
        let pinv = crate::numerics::pseudoinverse(&basis)?;
        core = hermitize(&matmul(&matmul(&pinv, &r_hat), &adjoint(&pinv)));
        let prp = matmul(&matmul(&basis, &core), &adjoint(&basis));
        v = hermitize(&(&r_hat - &prp));
    }
    Ok(CovarianceEstimate {
        support,
        core,
        gains: None,
    })
}

/// Dynamic COMP: one rank-one covariance `y_t y_t^H` per snapshot, selection
/// by `argmax_i sum_t phi_{t,i}^H V_t phi_{t,i}`, final block averaging the
/// per-snapshot back-projections.
///
/// Rank-one structure collapses each term to
/// `|phi_i^H y_t|^2 - |phi_i^H P_t y_t|^2`, so an iteration costs one
/// adjoint application per snapshot instead of a dense `M x M` update.
pub fn dcomp<Op: SensingOperator>(
    phis: &[Op],
    ys: &[CVec],
    l: usize,
) -> Result<CovarianceEstimate, NumericsError> {
    let lens: Vec<usize> = ys.iter().map(|y| y.len()).collect();
    let (d, min_rows) = check_snapshots(phis, &lens)?;
    check_sparsity(l, min_rows, d)?;
    let t_count = phis.len();
    // First metric term sum_t |phi_i^H y_t|^2 never changes across iterations.
    let mut base = vec![0.0f64; d];
    for (op, y) in phis.iter().zip(ys) {
        let c = op.adjoint_apply(y);
        for i in 0..d {
            base[i] += c[i].norm_sqr();
        }
    }
    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(l);
    for n in 0..l {
        let metric: Vec<f64> = if n == 0 {
            base.clone()
        } else {
            let mut corr = vec![0.0f64; d];
            for (op, y) in phis.iter().zip(ys) {
                let basis = op_columns(op, &support);
                let q = least_squares_vec(&basis, y)?;
                let py = mul_vec(&basis, q.view());
                let w = op.adjoint_apply(&py);
                for i in 0..d {
                    corr[i] += w[i].norm_sqr();
                }
            }
            base.iter().zip(&corr).map(|(b, c)| b - c).collect()
        };
        let j = argmax_unselected(&metric, &selected);
        selected[j] = true;
        support.push(j);
    }
    let mut core = CMat::zeros((l, l));
    for t in 0..t_count {
        let basis = op_columns(&phis[t], &support);
        let q = least_squares_vec(&basis, &ys[t])?;
        for a in 0..l {
            for b in 0..l {
                core[[a, b]] += q[a] * q[b].conj();
            }
        }
    }
    core.mapv_inplace(|z| z / t_count as f64);
    Ok(CovarianceEstimate {
        support,
        core: hermitize(&core),
        gains: None,
    })
}

/// Wideband DCOMP: frequency-averaged per-frame covariances
/// `R_t = (1/K) sum_k y_{t,k} y_{t,k}^H`, then the DCOMP recursion across
/// frames. Each frame's `M x K` measurement block acts as a rank-`K` factor.
pub fn wb_dcomp(
    phis: &[CMat],
    ys: &[CMat],
    l: usize,
) -> Result<CovarianceEstimate, NumericsError> {
    if phis.is_empty() || phis.len() != ys.len() {
        return Err(NumericsError::Dimension(format!(
            "{} sensing snapshots vs {} measurement frames",
            phis.len(),
            ys.len()
        )));
    }
    let (m, d) = phis[0].dim();
    let k = ys[0].ncols();
    for (t, (phi, y)) in phis.iter().zip(ys).enumerate() {
        if phi.dim() != (m, d) || y.nrows() != m || y.ncols() != k || k == 0 {
            return Err(NumericsError::Dimension(format!(
                "frame {t}: sensing {:?} measurements {:?}",
                phi.dim(),
                y.dim()
            )));
        }
    }
    check_sparsity(l, m, d)?;
    let scale = 1.0 / (k as f64).sqrt();
    let factors: Vec<CMat> = ys.iter().map(|y| y.mapv(|z| z * scale)).collect();
    let mut base = vec![0.0f64; d];
    for (phi, f) in phis.iter().zip(&factors) {
        let c = adjoint_mul(phi, f); // d x k
        for i in 0..d {
            base[i] += (0..k).map(|col| c[[i, col]].norm_sqr()).sum::<f64>();
        }
    }
    let mut selected = vec![false; d];
    let mut support = Vec::with_capacity(l);
    for n in 0..l {
        let metric: Vec<f64> = if n == 0 {
            base.clone()
        } else {
            let mut corr = vec![0.0f64; d];
            for (phi, f) in phis.iter().zip(&factors) {
                let basis = crate::numerics::select_columns(phi, &support);
                let q = least_squares(&basis, f)?; // |S| x k
                let z = matmul(&q, &adjoint(&q)); // P R P core, |S| x |S|
                let mt = adjoint_mul(&basis, phi); // |S| x d
                let s_len = support.len();
                for i in 0..d {
                    let mi = mt.slice(s![.., i]);
                    let mut acc = 0.0;
                    for a in 0..s_len {
                        let mut za = C64::ZERO;
                        for b in 0..s_len {
                            za += z[[a, b]] * mi[b];
                        }
                        acc += (mi[a].conj() * za).re;
                    }
                    corr[i] += acc;
                }
            }
            base.iter().zip(&corr).map(|(b, c)| b - c).collect()
        };
        let j = argmax_unselected(&metric, &selected);
        selected[j] = true;
        support.push(j);
    }
    let mut core = CMat::zeros((l, l));
    for (phi, f) in phis.iter().zip(&factors) {
        let basis = crate::numerics::select_columns(phi, &support);
        let q = least_squares(&basis, f)?;
        let z = matmul(&q, &adjoint(&q));
        core = &core + &z;
    }
    core.mapv_inplace(|z| z / phis.len() as f64);
    Ok(CovarianceEstimate {
        support,
        core: hermitize(&core),
        gains: None,
    })
}
