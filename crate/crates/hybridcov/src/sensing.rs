//! Sensing-matrix design for hybrid receivers.
//!
//! The analog stage is a random phase-only combiner `W_RF`; the baseband stage
//! `W_BB = (W_RF W_RF^H)^{-1/2}` whitens it so the combined `W = W_BB W_RF`
//! has orthonormal rows. Two consequences carry the whole pipeline:
//! post-combining noise stays white, and `Phi = W A` inherits the dictionary's
//! tight-frame property, `Phi Phi^H = D I_M`.
//!
//! The MIMO extension observes `y = W (H f) + noise` per training symbol; this
//! module assembles the four aggregation schedules (fixed/varying precoder x
//! fixed/varying combiner) into a single sensing operator on the vectorized
//! channel, both as a dense matrix (small instances, tests) and as a
//! Kronecker-structured operator that never materializes the
//! `M_R M_T x D_R D_T` matrix (large instances).

use crate::channel::{Dictionary, MimoDims};
use crate::numerics::{
    adjoint_mul_vec, inv_sqrt_psd, matmul, CMat, CVec, Hermitian, NumericsError, C64,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One snapshot of the hybrid front end.
#[derive(Debug, Clone)]
pub struct SensingFrame {
    /// Analog combiner, `M x N`, unit-modulus entries scaled by `1/sqrt(N)`.
    pub w_rf: CMat,
    /// Baseband whitener `(W_RF W_RF^H)^{-1/2}`, `M x M`.
    pub w_bb: CMat,
    /// Combined front end `W = W_BB W_RF`, orthonormal rows.
    pub w: CMat,
    /// Effective sensing matrix `Phi = W A`, `M x D`.
    pub phi: CMat,
}

/// A per-frame collection of sensing snapshots.
#[derive(Debug, Clone)]
pub struct SensingEnsemble {
    pub frames: Vec<SensingFrame>,
    /// False means one snapshot is reused for every frame.
    pub time_varying: bool,
}

impl SensingEnsemble {
    /// Draws `t` independent snapshots (or a single shared one).
    pub fn draw<R: Rng + ?Sized>(
        dict: &Dictionary,
        m: usize,
        t: usize,
        time_varying: bool,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let count = if time_varying { t } else { 1 };
        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let w_rf = random_analog_combiner(m, dict.antennas(), rng);
            frames.push(whiten_to_tight_frame(&w_rf, dict.matrix())?);
        }
        Ok(Self {
            frames,
            time_varying,
        })
    }

    /// Snapshot used at frame `t` (shared snapshot for fixed ensembles).
    pub fn frame(&self, t: usize) -> &SensingFrame {
        if self.time_varying {
            &self.frames[t]
        } else {
            &self.frames[0]
        }
    }

    /// Per-frame sensing matrices, cloned into a `t`-long list.
    pub fn phis(&self, t: usize) -> Vec<CMat> {
        (0..t).map(|i| self.frame(i).phi.clone()).collect()
    }
}

/// Phase-only analog combiner: entries `exp(j theta) / sqrt(n)`, `theta`
/// uniform on `[0, 2 pi)`.
pub fn random_analog_combiner<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> CMat {
    let scale = 1.0 / (n as f64).sqrt();
    CMat::from_shape_fn((m, n), |_| {
        C64::from_polar(scale, rng.random::<f64>() * 2.0 * std::f64::consts::PI)
    })
}

/// Whitens an analog combiner against a dictionary: returns the full snapshot
/// with `W W^H = I` and `Phi = W A`.
pub fn whiten_to_tight_frame(w_rf: &CMat, a: &CMat) -> Result<SensingFrame, NumericsError> {
    let g = Hermitian::new(matmul(w_rf, &crate::numerics::adjoint(w_rf)));
    let w_bb = inv_sqrt_psd(&g)?;
    let w = matmul(&w_bb, w_rf);
    let phi = matmul(&w, a);
    Ok(SensingFrame {
        w_rf: w_rf.clone(),
        w_bb,
        w,
        phi,
    })
}

/// Frame-quality summary of a sensing matrix.
#[derive(Debug, Clone, Copy)]
pub struct FrameMetrics {
    /// `trace(Phi Phi^H) / rows`; equals the column count for a whitened
    /// tight-frame dictionary product.
    pub frame_constant: f64,
    /// `||Phi Phi^H - frame_constant I||_F`.
    pub frame_deviation: f64,
    /// Largest normalized cross-correlation `|phi_i^H phi_j|` over `i != j`.
    pub coherence: f64,
    /// Welch lower bound `sqrt((D - M) / (M (D - 1)))` for `M x D`.
    pub welch_bound: f64,
}

pub fn frame_metrics(phi: &CMat) -> FrameMetrics {
    let (m, d) = phi.dim();
    assert!(m >= 1 && d >= 2, "frame_metrics needs at least a 1x2 matrix");
    let gram_rows = matmul(phi, &crate::numerics::adjoint(phi));
    let frame_constant = (0..m).map(|i| gram_rows[[i, i]].re).sum::<f64>() / m as f64;
    let mut dev = 0.0;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j {
                C64::new(frame_constant, 0.0)
            } else {
                C64::ZERO
            };
            dev += (gram_rows[[i, j]] - target).norm_sqr();
        }
    }
    let norms: Vec<f64> = (0..d)
        .map(|j| (0..m).map(|i| phi[[i, j]].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut coherence = 0.0f64;
    for i in 0..d {
        for j in (i + 1)..d {
            let mut acc = C64::ZERO;
            for r in 0..m {
                acc += phi[[r, i]].conj() * phi[[r, j]];
            }
            let denom = (norms[i] * norms[j]).max(f64::MIN_POSITIVE);
            coherence = coherence.max(acc.norm() / denom);
        }
    }
    let welch_bound = (((d - m) as f64) / ((m * (d - 1)) as f64)).max(0.0).sqrt();
    FrameMetrics {
        frame_constant,
        frame_deviation: dev.sqrt(),
        coherence,
        welch_bound,
    }
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMat::zeros((ra * rb, ca * cb));
    for ia in 0..ra {
        for ja in 0..ca {
            let w = a[[ia, ja]];
            if w == C64::ZERO {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out[[ia * rb + ib, ja * cb + jb]] = w * b[[ib, jb]];
                }
            }
        }
    }
    out
}

/// Column-wise Khatri-Rao product: column `j` is `a_j (x) b_j`.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat, NumericsError> {
    if a.ncols() != b.ncols() {
        return Err(NumericsError::Dimension(format!(
            "khatri_rao: column counts differ ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    gen_khatri_rao(a, b, a.ncols())
}

/// Generalized (block) Khatri-Rao product: both matrices are split into
/// `blocks` equal-width column blocks and block `k` of the result is
/// `A_k (x) B_k`. `blocks = 1` reduces to the Kronecker product and
/// `blocks = ncols` to the column-wise Khatri-Rao product.
pub fn gen_khatri_rao(a: &CMat, b: &CMat, blocks: usize) -> Result<CMat, NumericsError> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    if blocks == 0 || ca % blocks != 0 || cb % blocks != 0 {
        return Err(NumericsError::Dimension(format!(
            "gen_khatri_rao: cannot split {ca} and {cb} columns into {blocks} equal blocks"
        )));
    }
    let wa = ca / blocks;
    let wb = cb / blocks;
    let mut out = CMat::zeros((ra * rb, blocks * wa * wb));
    for k in 0..blocks {
        for ja in 0..wa {
            for jb in 0..wb {
                let col = k * wa * wb + ja * wb + jb;
                for ia in 0..ra {
                    let w = a[[ia, k * wa + ja]];
                    for ib in 0..rb {
                        out[[ia * rb + ib, col]] = w * b[[ib, k * wb + jb]];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The four MIMO training schedules: whether the transmit precoder and the
/// receive combiner change between the `M_T` symbols of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MimoMode {
    /// Fixed precoder, fixed combiner; the repeated symbol is averaged, so a
    /// frame yields `M_R` measurements with noise variance `sigma^2 / M_T`.
    Static,
    /// Fixed precoder, per-symbol combiners; measurements stack to `M_R M_T`.
    RxVarying,
    /// Per-symbol precoders, fixed combiner.
    TxVarying,
    /// Per-symbol precoders and combiners.
    BothVarying,
}

impl MimoMode {
    pub const ALL: [MimoMode; 4] = [
        MimoMode::Static,
        MimoMode::RxVarying,
        MimoMode::TxVarying,
        MimoMode::BothVarying,
    ];

    /// 1-based schedule index used in output labels.
    pub fn index(self) -> u8 {
        match self {
            MimoMode::Static => 1,
            MimoMode::RxVarying => 2,
            MimoMode::TxVarying => 3,
            MimoMode::BothVarying => 4,
        }
    }
}

/// Training resources of one MIMO frame: `M_T` symbol slots, each with a
/// unit-norm phase-only precoder and a whitened combiner. Shared objects are
/// replicated across slots for the schedules that hold them fixed.
#[derive(Debug, Clone)]
pub struct MimoFrame {
    pub precoders: Vec<CVec>,
    pub combiners: Vec<CMat>,
}

/// Unit-norm phase-only precoder: entries `exp(j theta) / sqrt(n_t)`.
pub fn random_precoder<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> CVec {
    let scale = 1.0 / (n_t as f64).sqrt();
    CVec::from_shape_fn(n_t, |_| {
        C64::from_polar(scale, rng.random::<f64>() * 2.0 * std::f64::consts::PI)
    })
}

/// Draws a frame's training resources for `mode`. Precoders are drawn before
/// combiners; fixed objects are drawn once and replicated.
pub fn draw_mimo_frame<R: Rng + ?Sized>(
    dims: &MimoDims,
    mode: MimoMode,
    rng: &mut R,
) -> Result<MimoFrame, NumericsError> {
    let slots = dims.m_t;
    let vary_tx = matches!(mode, MimoMode::TxVarying | MimoMode::BothVarying);
    let vary_rx = matches!(mode, MimoMode::RxVarying | MimoMode::BothVarying);
    let precoders: Vec<CVec> = if vary_tx {
        (0..slots).map(|_| random_precoder(dims.n_t, rng)).collect()
    } else {
        vec![random_precoder(dims.n_t, rng); slots]
    };
    let whiten = |rng: &mut R| -> Result<CMat, NumericsError> {
        let w_rf = random_analog_combiner(dims.m_r, dims.n_r, rng);
        let g = Hermitian::new(matmul(&w_rf, &crate::numerics::adjoint(&w_rf)));
        Ok(matmul(&inv_sqrt_psd(&g)?, &w_rf))
    };
    let combiners: Vec<CMat> = if vary_rx {
        (0..slots).map(|_| whiten(rng)).collect::<Result<_, _>>()?
    } else {
        vec![whiten(rng)?; slots]
    };
    Ok(MimoFrame {
        precoders,
        combiners,
    })
}

/// Dense aggregate sensing matrix `Theta` on the vectorized channel: the
/// frame's noiseless measurements satisfy `y_agg = Theta vec(H)` (columns of
/// `H` stacked). Schedule 4 goes through [`gen_khatri_rao`]; the others are
/// plain Kronecker assemblies.
pub fn aggregate_mimo_sensing(frame: &MimoFrame, mode: MimoMode) -> CMat {
    let f0 = row_vector(&frame.precoders[0]);
    match mode {
        MimoMode::Static => kron(&f0, &frame.combiners[0]),
        MimoMode::RxVarying => {
            let stacked = stack_rows(&frame.combiners);
            kron(&f0, &stacked)
        }
        MimoMode::TxVarying => {
            let f_t = precoder_matrix(&frame.precoders); // N_T x M_T
            kron(&transpose(&f_t), &frame.combiners[0])
        }
        MimoMode::BothVarying => {
            let f_t = precoder_matrix(&frame.precoders);
            let w_t = stack_cols_of_transposes(&frame.combiners); // N_R x (M_R M_T)
            let krp = gen_khatri_rao(&f_t, &w_t, frame.precoders.len())
                .expect("schedule blocks always divide evenly");
            transpose(&krp)
        }
    }
}

/// Aggregate dictionary on the vectorized channel: `conj(A_T) (x) A_R`.
pub fn aggregate_dictionary(dict_t: &Dictionary, dict_r: &Dictionary) -> CMat {
    kron(&dict_t.matrix().mapv(|z| z.conj()), dict_r.matrix())
}

fn row_vector(v: &CVec) -> CMat {
    CMat::from_shape_fn((1, v.len()), |(_, j)| v[j])
}

fn precoder_matrix(fs: &[CVec]) -> CMat {
    CMat::from_shape_fn((fs[0].len(), fs.len()), |(i, s)| fs[s][i])
}

fn stack_rows(ws: &[CMat]) -> CMat {
    let (m, n) = ws[0].dim();
    CMat::from_shape_fn((m * ws.len(), n), |(i, j)| ws[i / m][[i % m, j]])
}

fn stack_cols_of_transposes(ws: &[CMat]) -> CMat {
    let (m, n) = ws[0].dim();
    CMat::from_shape_fn((n, m * ws.len()), |(i, j)| ws[j / m][[j % m, i]])
}

fn transpose(m: &CMat) -> CMat {
    CMat::from_shape_fn((m.ncols(), m.nrows()), |(i, j)| m[[j, i]])
}

/// Column access and adjoint application: all a greedy estimator needs from a
/// sensing matrix. Implemented by dense matrices and by the structured MIMO
/// aggregate below.
pub trait SensingOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn column(&self, j: usize) -> CVec;
    /// `Phi^H z`.
    fn adjoint_apply(&self, z: &CVec) -> CVec;
}

impl<T: SensingOperator + ?Sized> SensingOperator for &T {
    fn rows(&self) -> usize {
        (**self).rows()
    }

    fn cols(&self) -> usize {
        (**self).cols()
    }

    fn column(&self, j: usize) -> CVec {
        (**self).column(j)
    }

    fn adjoint_apply(&self, z: &CVec) -> CVec {
        (**self).adjoint_apply(z)
    }
}

impl SensingOperator for CMat {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn column(&self, j: usize) -> CVec {
        CVec::from_shape_fn(self.nrows(), |i| self[[i, j]])
    }

    fn adjoint_apply(&self, z: &CVec) -> CVec {
        adjoint_mul_vec(self, z.view())
    }
}

/// `Phi_agg = Theta A_agg` in factored form: per symbol block `s`,
/// `Phi[:, tx * D_R + rx]` restricted to that block's rows equals
/// `u_s[tx] * B_s[:, rx]` with `u_s = A_T^H f_s` and `B_s = W_s A_R`.
/// Column assembly and adjoint application cost `O(M_T (M_R + D_T) D_R)`
/// instead of touching all `M_R M_T D_T D_R` entries.
#[derive(Debug, Clone)]
pub struct KronAggregateOperator {
    tx_weights: Vec<CVec>,
    rx_blocks: Vec<CMat>,
    d_t: usize,
    d_r: usize,
    rows: usize,
}

impl KronAggregateOperator {
    pub fn build(
        frame: &MimoFrame,
        mode: MimoMode,
        dict_t: &Dictionary,
        dict_r: &Dictionary,
    ) -> Self {
        let u = |f: &CVec| adjoint_mul_vec(dict_t.matrix(), f.view());
        let b = |w: &CMat| matmul(w, dict_r.matrix());
        let (tx_weights, rx_blocks): (Vec<CVec>, Vec<CMat>) = match mode {
            MimoMode::Static => (vec![u(&frame.precoders[0])], vec![b(&frame.combiners[0])]),
            MimoMode::RxVarying => {
                let shared = u(&frame.precoders[0]);
                let blocks: Vec<CMat> = frame.combiners.iter().map(b).collect();
                (vec![shared; blocks.len()], blocks)
            }
            MimoMode::TxVarying => {
                let shared = b(&frame.combiners[0]);
                let weights: Vec<CVec> = frame.precoders.iter().map(u).collect();
                let blocks = vec![shared; weights.len()];
                (weights, blocks)
            }
            MimoMode::BothVarying => (
                frame.precoders.iter().map(u).collect(),
                frame.combiners.iter().map(b).collect(),
            ),
        };
        let rows = rx_blocks.iter().map(|m| m.nrows()).sum();
        Self {
            tx_weights,
            rx_blocks,
            d_t: dict_t.len(),
            d_r: dict_r.len(),
            rows,
        }
    }
}

impl SensingOperator for KronAggregateOperator {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.d_t * self.d_r
    }

    fn column(&self, j: usize) -> CVec {
        let tx = j / self.d_r;
        let rx = j % self.d_r;
        let mut out = CVec::zeros(self.rows);
        let mut offset = 0;
        for (u, b) in self.tx_weights.iter().zip(&self.rx_blocks) {
            let w = u[tx];
            for i in 0..b.nrows() {
                out[offset + i] = w * b[[i, rx]];
            }
            offset += b.nrows();
        }
        out
    }

    fn adjoint_apply(&self, z: &CVec) -> CVec {
        assert_eq!(z.len(), self.rows, "adjoint_apply: row mismatch");
        let mut out = CVec::zeros(self.cols());
        let os = out.as_slice_mut().unwrap();
        let mut offset = 0;
        for (u, b) in self.tx_weights.iter().zip(&self.rx_blocks) {
            let zs = z.slice(ndarray::s![offset..offset + b.nrows()]).to_owned();
            let q = adjoint_mul_vec(b, zs.view()); // B_s^H z_s, length d_r
            let qs = q.as_slice().unwrap();
            for tx in 0..self.d_t {
                let w = u[tx].conj();
                if w == C64::ZERO {
                    continue;
                }
                let seg = &mut os[tx * self.d_r..(tx + 1) * self.d_r];
                for (o, &qv) in seg.iter_mut().zip(qs) {
                    *o += w * qv;
                }
            }
            offset += b.nrows();
        }
        out
    }
}
