//! Quality metrics for estimated spatial covariances.
//!
//! Two figures of merit: the subspace efficiency `eta` — the fraction of the
//! true covariance's top-`L` energy captured by the estimate's top-`L`
//! eigenspace — and the relative spectral-efficiency loss of equal-power
//! eigenbeamforming designed on the estimate instead of the truth. Both come
//! in a dense form and a factored low-rank form; the latter is the only
//! tractable one at Kronecker (transmit x receive) dimensions.

use ndarray::s;

use crate::numerics::{
    adjoint, adjoint_mul, eig_hermitian, gram, matmul, sqrt_psd, CMat, Hermitian, NumericsError,
};
use crate::tol;

/// Metric bundle for one estimate against one ground truth.
#[derive(Debug, Clone, Copy)]
pub struct MetricReport {
    /// Captured-energy fraction in `[0, 1]` (up to rounding).
    pub eta: f64,
    /// `(se_est - se_ideal) / se_ideal` in percent; zero when the ideal
    /// spectral efficiency vanishes.
    pub rate_loss_pct: f64,
    pub se_ideal: f64,
    pub se_est: f64,
}

/// Spectral efficiencies of estimated and ideal eigenbeamformers, plus their
/// relative gap in percent.
#[derive(Debug, Clone, Copy)]
pub struct RateLoss {
    pub se_est: f64,
    pub se_ideal: f64,
    pub loss_pct: f64,
}

/// Covariance held in factored form `R = F Fᴴ`.
///
/// Sparse estimates and the ground truth are both naturally rank-`L`, so the
/// factor keeps the ambient dimension implicit: every computation below
/// touches only `rank x rank` matrices after one tall product. If the factor
/// spans fewer than the requested number of directions, the missing ones are
/// treated as absent (they capture nothing and carry no rate).
#[derive(Debug, Clone)]
pub struct LowRank {
    factor: CMat,
}

impl LowRank {
    pub fn new(factor: CMat) -> Self {
        Self { factor }
    }

    /// Factor of `B C Bᴴ` via the principal square root of the core.
    pub fn from_core(basis: &CMat, core: &Hermitian) -> Result<Self, NumericsError> {
        Ok(Self {
            factor: matmul(basis, &sqrt_psd(core)?),
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank_bound(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &CMat {
        &self.factor
    }

    /// Materialises `F Fᴴ`; intended for small dimensions and tests.
    pub fn dense(&self) -> Hermitian {
        Hermitian::new(matmul(&self.factor, &adjoint(&self.factor)))
    }
}

fn check_pair(dim_hat: usize, dim_true: usize, l: usize) {
    assert_eq!(dim_hat, dim_true, "covariance dimensions must agree");
    assert!(l >= 1, "need at least one direction");
}

/// Top-`l` eigenvectors as columns, eigenvalues descending.
fn top_eigvecs(h: &Hermitian, l: usize) -> Result<CMat, NumericsError> {
    let eig = eig_hermitian(h)?;
    Ok(eig.vectors.slice(s![.., ..l]).to_owned())
}

/// Orthonormal top directions of `F Fᴴ` computed through the rank-sized Gram
/// matrix; may return fewer than `l` columns when the spectrum runs out.
fn top_eigvecs_low_rank(r: &LowRank, l: usize) -> Result<CMat, NumericsError> {
    let eig = eig_hermitian(&Hermitian::new(gram(r.factor())))?;
    let lead = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = lead * tol::PSD_RANK_REL;
    let keep = eig
        .values
        .iter()
        .take(l.min(r.rank_bound()))
        .take_while(|&&v| v > floor)
        .count();
    let mut u = matmul(r.factor(), &eig.vectors.slice(s![.., ..keep]).to_owned());
    for (mut col, &lam) in u.columns_mut().into_iter().zip(&eig.values) {
        let scale = 1.0 / lam.sqrt();
        col.mapv_inplace(|z| z * scale);
    }
    Ok(u)
}

/// `Re Tr(Uᴴ R U)` for dense `R`.
fn captured_energy(r: &CMat, u: &CMat) -> f64 {
    let ru = matmul(r, u);
    u.columns()
        .into_iter()
        .zip(ru.columns())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum::<f64>())
        .sum()
}

fn sum_top(values: &[f64], l: usize) -> f64 {
    values.iter().take(l).copied().sum()
}

fn ratio_or_perfect(captured: f64, capturable: f64) -> f64 {
    // A vanishing true covariance leaves nothing to capture; count that as
    // fully captured rather than dividing by zero.
    if capturable <= 0.0 {
        1.0
    } else {
        captured / capturable
    }
}

/// Fraction of the true covariance's top-`l` energy captured by the
/// estimate's top-`l` eigenspace.
pub fn efficiency_eta(r_hat: &Hermitian, r_true: &Hermitian, l: usize) -> Result<f64, NumericsError> {
    check_pair(r_hat.dim(), r_true.dim(), l);
    assert!(l <= r_true.dim(), "cannot ask for more directions than the dimension");
    let u = top_eigvecs(r_hat, l)?;
    let captured = captured_energy(r_true.matrix(), &u);
    let capturable = sum_top(&eig_hermitian(r_true)?.values, l);
    Ok(ratio_or_perfect(captured, capturable))
}

/// Factored-form [`efficiency_eta`].
pub fn efficiency_eta_low_rank(
    r_hat: &LowRank,
    r_true: &LowRank,
    l: usize,
) -> Result<f64, NumericsError> {
    check_pair(r_hat.dim(), r_true.dim(), l);
    let u = top_eigvecs_low_rank(r_hat, l)?;
    let cross = adjoint_mul(r_true.factor(), &u);
    let captured = cross.iter().map(|z| z.norm_sqr()).sum();
    let capturable = sum_top(&eig_hermitian(&Hermitian::new(gram(r_true.factor())))?.values, l);
    Ok(ratio_or_perfect(captured, capturable))
}

fn linear_snr(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// Equal-power eigenbeamforming rate over `streams` directions with the
/// given per-direction gains.
fn spectral_efficiency(gains: &[f64], snr: f64, streams: usize) -> f64 {
    let per_stream = snr / streams as f64;
    gains
        .iter()
        .take(streams)
        .map(|&g| (1.0 + per_stream * g.max(0.0)).log2())
        .sum()
}

fn loss_pct(se_est: f64, se_ideal: f64) -> f64 {
    if se_ideal <= 0.0 {
        0.0
    } else {
        (se_est - se_ideal) / se_ideal * 100.0
    }
}

/// Spectral-efficiency comparison of beamformers built from the estimated
/// versus the true covariance, both evaluated on the true covariance.
pub fn rate_loss(
    r_hat: &Hermitian,
    r_true: &Hermitian,
    l_streams: usize,
    snr_db: f64,
) -> Result<RateLoss, NumericsError> {
    check_pair(r_hat.dim(), r_true.dim(), l_streams);
    let snr = linear_snr(snr_db);
    let u = top_eigvecs(r_hat, l_streams.min(r_hat.dim()))?;
    let small = Hermitian::new(adjoint_mul(&u, &matmul(r_true.matrix(), &u)));
    let se_est = spectral_efficiency(&eig_hermitian(&small)?.values, snr, l_streams);
    let se_ideal = spectral_efficiency(&eig_hermitian(r_true)?.values, snr, l_streams);
    Ok(RateLoss {
        se_est,
        se_ideal,
        loss_pct: loss_pct(se_est, se_ideal),
    })
}

/// Factored-form [`rate_loss`].
pub fn rate_loss_low_rank(
    r_hat: &LowRank,
    r_true: &LowRank,
    l_streams: usize,
    snr_db: f64,
) -> Result<RateLoss, NumericsError> {
    check_pair(r_hat.dim(), r_true.dim(), l_streams);
    let snr = linear_snr(snr_db);
    let u = top_eigvecs_low_rank(r_hat, l_streams)?;
    let cross = adjoint_mul(r_true.factor(), &u);
    let se_est = spectral_efficiency(
        &eig_hermitian(&Hermitian::new(gram(&cross)))?.values,
        snr,
        l_streams,
    );
    let se_ideal = spectral_efficiency(
        &eig_hermitian(&Hermitian::new(gram(r_true.factor())))?.values,
        snr,
        l_streams,
    );
    Ok(RateLoss {
        se_est,
        se_ideal,
        loss_pct: loss_pct(se_est, se_ideal),
    })
}

/// Both metrics at once, using `l` as subspace size and stream count alike.
pub fn metric_report(
    r_hat: &Hermitian,
    r_true: &Hermitian,
    l: usize,
    snr_db: f64,
) -> Result<MetricReport, NumericsError> {
    let eta = efficiency_eta(r_hat, r_true, l)?;
    let rl = rate_loss(r_hat, r_true, l, snr_db)?;
    debug_assert!((-1e-9..=1.0 + 1e-9).contains(&eta), "eta {eta} out of range");
    Ok(MetricReport {
        eta,
        rate_loss_pct: rl.loss_pct,
        se_ideal: rl.se_ideal,
        se_est: rl.se_est,
    })
}

/// Factored-form [`metric_report`].
pub fn metric_report_low_rank(
    r_hat: &LowRank,
    r_true: &LowRank,
    l: usize,
    snr_db: f64,
) -> Result<MetricReport, NumericsError> {
    let eta = efficiency_eta_low_rank(r_hat, r_true, l)?;
    let rl = rate_loss_low_rank(r_hat, r_true, l, snr_db)?;
    debug_assert!((-1e-9..=1.0 + 1e-9).contains(&eta), "eta {eta} out of range");
    Ok(MetricReport {
        eta,
        rate_loss_pct: rl.loss_pct,
        se_ideal: rl.se_ideal,
        se_est: rl.se_est,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::cn_unit;
    use crate::numerics::{CVec, C64};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_factor(n: usize, r: usize, rng: &mut ChaCha8Rng) -> CMat {
        CMat::from_shape_fn((n, r), |_| cn_unit(rng))
    }

    fn random_psd(n: usize, r: usize, rng: &mut ChaCha8Rng) -> Hermitian {
        let f = random_factor(n, r, rng);
        Hermitian::new(matmul(&f, &adjoint(&f)))
    }

    #[test]
    fn perfect_estimate_scores_one() {
        let mut r = rng(1);
        let cov = random_psd(12, 12, &mut r);
        let eta = efficiency_eta(&cov, &cov, 3).unwrap();
        assert_relative_eq!(eta, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn orthogonal_rank_one_estimate_scores_zero() {
        let mut t = Array2::<C64>::zeros((4, 4));
        t[(0, 0)] = C64::new(1.0, 0.0);
        let mut h = Array2::<C64>::zeros((4, 4));
        h[(1, 1)] = C64::new(1.0, 0.0);
        let eta = efficiency_eta(&Hermitian::new(h), &Hermitian::new(t), 1).unwrap();
        assert!(eta.abs() < 1e-15, "eta {eta}");
    }

    /// 2x2 closed form: truth diag(2, 1), rank-one estimate along
    /// `(cos a, sin a e^{i b})` captures `2 cos^2 a + sin^2 a` of the leading
    /// direction's 2.
    #[test]
    fn matches_two_by_two_closed_form() {
        let (a, b) = (0.7f64, 0.3f64);
        let u: CVec = ndarray::arr1(&[
            C64::new(a.cos(), 0.0),
            C64::from_polar(a.sin(), b),
        ]);
        let mut est = Array2::<C64>::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                est[(i, j)] = u[i] * u[j].conj();
            }
        }
        let mut truth = Array2::<C64>::zeros((2, 2));
        truth[(0, 0)] = C64::new(2.0, 0.0);
        truth[(1, 1)] = C64::new(1.0, 0.0);
        let eta = efficiency_eta(&Hermitian::new(est), &Hermitian::new(truth), 1).unwrap();
        let expected = (2.0 * a.cos().powi(2) + a.sin().powi(2)) / 2.0;
        assert_relative_eq!(eta, expected, max_relative = 1e-12);
    }

    /// Rescaling the estimate leaves its eigenvectors untouched; with a
    /// power-of-two factor the whole computation is bit-identical.
    #[test]
    fn eta_ignores_estimate_scale() {
        let mut r = rng(7);
        let truth = random_psd(10, 4, &mut r);
        let est = random_psd(10, 5, &mut r);
        let scaled = Hermitian::new(est.matrix().mapv(|z| z * 4.0));
        let base = efficiency_eta(&est, &truth, 3).unwrap();
        assert_eq!(efficiency_eta(&scaled, &truth, 3).unwrap(), base);
        let odd = Hermitian::new(est.matrix().mapv(|z| z * 3.7));
        assert_relative_eq!(efficiency_eta(&odd, &truth, 3).unwrap(), base, max_relative = 1e-10);
    }

    /// Two estimates sharing the same top-`l` span score identically no
    /// matter how the interior of that eigenspace is mixed.
    #[test]
    fn eta_depends_only_on_the_subspace() {
        let mut r = rng(9);
        let truth = random_psd(10, 4, &mut r);
        let est = random_psd(10, 6, &mut r);
        let l = 3;
        let u = top_eigvecs(&est, l).unwrap();
        // Rebuild a covariance whose top-l eigenspace is span(u) but whose
        // internal basis and spectrum differ.
        let q = top_eigvecs(&random_psd(l, l, &mut r), l).unwrap();
        let mixed = matmul(&u, &q);
        let mut core = Array2::<C64>::zeros((l, l));
        for (i, v) in [5.0, 3.0, 2.0].iter().enumerate() {
            core[(i, i)] = C64::new(*v, 0.0);
        }
        let rebuilt = Hermitian::new(matmul(&matmul(&mixed, &core), &adjoint(&mixed)));
        let a = efficiency_eta(&est, &truth, l).unwrap();
        let b = efficiency_eta(&rebuilt, &truth, l).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn eta_stays_in_range_on_random_draws() {
        let mut r = rng(11);
        for _ in 0..50 {
            let truth = random_psd(8, 3, &mut r);
            let est = random_psd(8, 4, &mut r);
            let eta = efficiency_eta(&est, &truth, 2).unwrap();
            assert!((-1e-9..=1.0 + 1e-9).contains(&eta), "eta {eta}");
        }
    }

    #[test]
    fn perfect_estimate_loses_no_rate() {
        let mut r = rng(13);
        let truth = random_psd(10, 4, &mut r);
        let rl = rate_loss(&truth, &truth, 3, 10.0).unwrap();
        assert!(rl.loss_pct.abs() < 1e-9, "loss {}", rl.loss_pct);
        assert!(rl.se_ideal > 0.0);
    }

    #[test]
    fn vanishing_snr_guards_the_ratio() {
        let mut r = rng(15);
        let truth = random_psd(8, 3, &mut r);
        let est = random_psd(8, 3, &mut r);
        let rl = rate_loss(&est, &truth, 2, f64::NEG_INFINITY).unwrap();
        assert_eq!(rl.se_est, 0.0);
        assert_eq!(rl.se_ideal, 0.0);
        assert_eq!(rl.loss_pct, 0.0);
    }

    /// The stream-gain sum matches the log-det form
    /// `log2 det(I + (snr/streams) UᴴRU)` evaluated longhand on a 3x3 case.
    #[test]
    fn spectral_efficiency_matches_log_det() {
        let mut r = rng(17);
        let truth = random_psd(10, 5, &mut r);
        let est = random_psd(10, 5, &mut r);
        let streams = 3;
        let snr_db = 6.0;
        let rl = rate_loss(&est, &truth, streams, snr_db).unwrap();

        let u = top_eigvecs(&est, streams).unwrap();
        let small = adjoint_mul(&u, &matmul(truth.matrix(), &u));
        let alpha = C64::new(linear_snr(snr_db) / streams as f64, 0.0);
        let mut m = Array2::<C64>::eye(streams);
        for i in 0..streams {
            for j in 0..streams {
                m[(i, j)] += alpha * small[(i, j)];
            }
        }
        let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        assert!(det.im.abs() < 1e-9 * det.re.abs());
        assert_relative_eq!(rl.se_est, det.re.log2(), max_relative = 1e-10);
    }

    #[test]
    fn dense_and_factored_paths_agree() {
        let mut r = rng(19);
        for _ in 0..10 {
            let f_true = random_factor(24, 4, &mut r);
            let f_hat = random_factor(24, 4, &mut r);
            let lr_true = LowRank::new(f_true.clone());
            let lr_hat = LowRank::new(f_hat.clone());
            let d_true = lr_true.dense();
            let d_hat = lr_hat.dense();
            for l in [2usize, 4] {
                let dense = efficiency_eta(&d_hat, &d_true, l).unwrap();
                let fact = efficiency_eta_low_rank(&lr_hat, &lr_true, l).unwrap();
                assert_relative_eq!(dense, fact, max_relative = 1e-9);
                let dense_rl = rate_loss(&d_hat, &d_true, l, 0.0).unwrap();
                let fact_rl = rate_loss_low_rank(&lr_hat, &lr_true, l, 0.0).unwrap();
                assert_relative_eq!(dense_rl.se_est, fact_rl.se_est, max_relative = 1e-9);
                assert_relative_eq!(dense_rl.se_ideal, fact_rl.se_ideal, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn factored_core_constructor_matches_direct_product() {
        let mut r = rng(23);
        let basis = random_factor(16, 3, &mut r);
        let core_f = random_factor(3, 3, &mut r);
        let core = Hermitian::new(matmul(&core_f, &adjoint(&core_f)));
        let lr = LowRank::from_core(&basis, &core).unwrap();
        let direct = matmul(&matmul(&basis, core.matrix()), &adjoint(&basis));
        let diff = crate::numerics::max_abs_diff(lr.dense().matrix(), &direct);
        assert!(diff < 1e-10, "diff {diff}");
    }

    /// On average an estimated beamformer cannot beat the ideal one.
    #[test]
    fn estimated_beamformer_trails_on_average() {
        let mut r = rng(29);
        let mut total = 0.0;
        let trials = 50;
        for _ in 0..trials {
            let f_true = random_factor(12, 4, &mut r);
            let noise = random_factor(12, 4, &mut r);
            let f_hat = &f_true + &noise.mapv(|z| z * 0.4);
            let rl = rate_loss_low_rank(
                &LowRank::new(f_hat),
                &LowRank::new(f_true),
                4,
                5.0,
            )
            .unwrap();
            total += rl.loss_pct;
        }
        let mean = total / trials as f64;
        assert!(mean <= 0.5, "mean loss {mean}");
    }

    #[test]
    fn report_bundles_both_metrics() {
        let mut r = rng(31);
        let f_true = random_factor(16, 3, &mut r);
        let f_hat = random_factor(16, 3, &mut r);
        let lr = metric_report_low_rank(
            &LowRank::new(f_hat.clone()),
            &LowRank::new(f_true.clone()),
            3,
            0.0,
        )
        .unwrap();
        let dense = metric_report(
            &LowRank::new(f_hat).dense(),
            &LowRank::new(f_true).dense(),
            3,
            0.0,
        )
        .unwrap();
        assert_relative_eq!(lr.eta, dense.eta, max_relative = 1e-9);
        assert_relative_eq!(lr.rate_loss_pct, dense.rate_loss_pct, max_relative = 1e-6);
        assert!(lr.se_ideal >= lr.se_est);
    }
}
