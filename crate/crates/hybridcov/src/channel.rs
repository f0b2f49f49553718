//! Array manifolds, dictionary grids, and sparse multipath channel models.
//!
//! A uniform linear array of `N` elements responds to a planar wave with
//! spatial frequency `omega` as `a(omega)[k] = exp(j omega k)`. Channels are
//! `L`-sparse mixtures of such responses with unit-variance complex-Gaussian
//! gains that are redrawn every frame (block fading). The dictionary grid is
//! uniform in spatial frequency, which makes the dictionary an exact tight
//! frame: `A A^H = D I_N` for any `D >= N`.

use crate::numerics::{CMat, CVec, C64};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("invalid scenario: {field}: {reason}")]
pub struct ScenarioError {
    pub field: &'static str,
    pub reason: String,
}

fn bad(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError {
        field,
        reason: reason.into(),
    }
}

/// Transmit/receive array dimensions for the MIMO extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MimoDims {
    pub n_t: usize,
    pub m_t: usize,
    pub d_t: usize,
    pub n_r: usize,
    pub m_r: usize,
    pub d_r: usize,
}

/// OFDM dimensions for the wideband extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidebandDims {
    /// Number of subcarriers.
    pub k: usize,
    /// Cyclic-prefix length in samples; delays spread over `(0, n_cp)`.
    pub n_cp: usize,
}

/// Complete description of one simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Antennas at the receive array.
    pub n: usize,
    /// RF chains (measurements per snapshot).
    pub m: usize,
    /// Dictionary columns.
    pub d: usize,
    /// Number of propagation paths.
    pub l: usize,
    /// Measurement frames.
    pub t: usize,
    pub snr_db: f64,
    /// Paths land exactly on grid points (support-recovery studies) or
    /// anywhere in spatial frequency (efficiency studies).
    pub on_grid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mimo: Option<MimoDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wideband: Option<WidebandDims>,
}

impl ScenarioConfig {
    /// Noise variance per complex measurement entry under the documented
    /// convention `sigma^2 = 10^(-snr_db/10)` (unit-variance per-path gains).
    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.l < 1 {
            return Err(bad("l", "at least one path required"));
        }
        if self.m < self.l {
            return Err(bad("m", format!("need m >= l, got m={} l={}", self.m, self.l)));
        }
        if self.n < self.m {
            return Err(bad("n", format!("need n >= m, got n={} m={}", self.n, self.m)));
        }
        if self.d < self.n {
            return Err(bad("d", format!("need d >= n, got d={} n={}", self.d, self.n)));
        }
        if self.t < 1 {
            return Err(bad("t", "at least one frame required"));
        }
        if !self.snr_db.is_finite() {
            return Err(bad("snr_db", "must be finite"));
        }
        if let Some(mm) = &self.mimo {
            for (field, (big, small)) in [
                ("mimo.n_t/m_t", (mm.n_t, mm.m_t)),
                ("mimo.n_r/m_r", (mm.n_r, mm.m_r)),
                ("mimo.d_t/n_t", (mm.d_t, mm.n_t)),
                ("mimo.d_r/n_r", (mm.d_r, mm.n_r)),
            ] {
                if big < small {
                    return Err(bad("mimo", format!("{field}: {big} < {small}")));
                }
            }
            if mm.m_r < self.l {
                return Err(bad("mimo.m_r", format!("need m_r >= l, got {} < {}", mm.m_r, self.l)));
            }
        }
        if let Some(wb) = &self.wideband {
            if wb.k < 1 {
                return Err(bad("wideband.k", "at least one subcarrier"));
            }
            if wb.n_cp < 1 {
                return Err(bad("wideband.n_cp", "cyclic prefix must be positive"));
            }
        }
        Ok(())
    }
}

/// Array response of an `n`-element half-wavelength ULA at spatial frequency
/// `omega`, entries `exp(j omega k)` for `k = 0..n`.
pub fn ula_response(omega: f64, n: usize) -> CVec {
    CVec::from_shape_fn(n, |k| C64::from_polar(1.0, omega * k as f64))
}

/// Dictionary over a uniform spatial-frequency grid.
#[derive(Debug, Clone)]
pub struct Dictionary {
    matrix: CMat,
    grid: Vec<f64>,
}

impl Dictionary {
    /// `N x D` matrix, column `d` the response at `grid[d]`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Spatial frequencies `omega_d = 2 pi d / D - pi`, strictly increasing.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn column(&self, d: usize) -> CVec {
        CVec::from_shape_fn(self.antennas(), |k| self.matrix[[k, d]])
    }
}

/// Builds the `n x d` grid dictionary. The uniform grid makes the frame
/// constant exactly `d` whenever `d >= n`.
pub fn build_dictionary(n: usize, d: usize) -> Dictionary {
    assert!(d >= n, "dictionary needs d >= n (got d={d}, n={n})");
    let grid: Vec<f64> = (0..d)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / d as f64 - std::f64::consts::PI)
        .collect();
    let mut matrix = CMat::zeros((n, d));
    for (j, &w) in grid.iter().enumerate() {
        for k in 0..n {
            matrix[[k, j]] = C64::from_polar(1.0, w * k as f64);
        }
    }
    Dictionary { matrix, grid }
}

/// Manifold matrix (`n x len(aoas)`) with one response column per angle.
pub fn steering_matrix(aoas: &[f64], n: usize) -> CMat {
    let mut m = CMat::zeros((n, aoas.len()));
    for (j, &w) in aoas.iter().enumerate() {
        for k in 0..n {
            m[[k, j]] = C64::from_polar(1.0, w * k as f64);
        }
    }
    m
}

/// One `L`-sparse channel over `T` frames.
#[derive(Debug, Clone)]
pub struct SparseChannelRealization {
    /// Grid indices (sorted ascending) when on-grid; empty off-grid.
    pub support: Vec<usize>,
    /// Spatial frequencies of the paths, aligned with `gains` rows.
    pub aoas: Vec<f64>,
    /// `L x T`, iid `CN(0, 1)`, redrawn per frame.
    pub gains: CMat,
    /// `N x L` manifold at `aoas`.
    pub steering: CMat,
}

/// Standard complex Gaussian `CN(0, 1)`: variance one split over re/im.
pub fn cn_unit<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws `l` distinct indices from `0..d`, sorted ascending.
pub fn draw_support<R: Rng + ?Sized>(d: usize, l: usize, rng: &mut R) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, d, l).into_vec();
    s.sort_unstable();
    s
}

pub fn draw_channel<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    dict: &Dictionary,
    rng: &mut R,
) -> SparseChannelRealization {
    let (support, aoas) = if cfg.on_grid {
        let support = draw_support(dict.len(), cfg.l, rng);
        let aoas = support.iter().map(|&i| dict.grid()[i]).collect::<Vec<_>>();
        (support, aoas)
    } else {
        let mut aoas: Vec<f64> = (0..cfg.l)
            .map(|_| rng.random::<f64>() * 2.0 * std::f64::consts::PI - std::f64::consts::PI)
            .collect();
        aoas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (Vec::new(), aoas)
    };
    let gains = CMat::from_shape_fn((cfg.l, cfg.t), |_| cn_unit(rng));
    let steering = steering_matrix(&aoas, cfg.n);
    SparseChannelRealization {
        support,
        aoas,
        gains,
        steering,
    }
}

/// Frequency response of each path across subcarriers for a sinc pulse:
/// `c[l, k] = sum_{d=0}^{n_cp-1} sinc(d - tau_l) exp(-j 2 pi k d / k_sub)`,
/// delays in sample units.
pub fn subcarrier_taps(delays: &[f64], n_cp: usize, k_sub: usize) -> CMat {
    let mut c = CMat::zeros((delays.len(), k_sub));
    for (l, &tau) in delays.iter().enumerate() {
        let pulse: Vec<f64> = (0..n_cp).map(|d| sinc(d as f64 - tau)).collect();
        for k in 0..k_sub {
            let mut acc = C64::ZERO;
            for (d, &p) in pulse.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * d) as f64 / k_sub as f64;
                acc += C64::from_polar(p, phase);
            }
            c[[l, k]] = acc;
        }
    }
    c
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Narrowband realization plus per-path delay profile and subcarrier taps.
#[derive(Debug, Clone)]
pub struct WidebandRealization {
    pub channel: SparseChannelRealization,
    /// Path delays in sample units, uniform over `(0, n_cp)`, fixed per
    /// realization.
    pub delays: Vec<f64>,
    /// `L x K` subcarrier taps for the sinc pulse.
    pub taps: CMat,
}

pub fn draw_wideband_channel<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    dict: &Dictionary,
    rng: &mut R,
) -> WidebandRealization {
    let wb = cfg.wideband.expect("draw_wideband_channel needs cfg.wideband");
    let channel = draw_channel(cfg, dict, rng);
    let delays: Vec<f64> = (0..cfg.l)
        .map(|_| rng.random::<f64>() * wb.n_cp as f64)
        .collect();
    let taps = subcarrier_taps(&delays, wb.n_cp, wb.k);
    WidebandRealization {
        channel,
        delays,
        taps,
    }
}

/// One `L`-sparse MIMO channel: paths carry an AoA at the receiver and an AoD
/// at the transmitter. Vectorized support index is `tx * d_r + rx`
/// (column-stacking of the `D_R x D_T` angle grid).
#[derive(Debug, Clone)]
pub struct MimoChannelRealization {
    /// `(rx, tx)` grid pairs, sorted by flat index; empty off-grid.
    pub support_pairs: Vec<(usize, usize)>,
    pub rx_aoas: Vec<f64>,
    pub tx_aods: Vec<f64>,
    /// `L x T`.
    pub gains: CMat,
    /// `N_R x L`.
    pub rx_steering: CMat,
    /// `N_T x L`.
    pub tx_steering: CMat,
}

impl MimoChannelRealization {
    /// Flattened vec-support indices, sorted ascending (on-grid only).
    pub fn flat_support(&self, d_r: usize) -> Vec<usize> {
        self.support_pairs.iter().map(|&(rx, tx)| tx * d_r + rx).collect()
    }

    /// Dense `N_R x N_T` channel matrix of frame `t`.
    pub fn matrix_at(&self, t: usize) -> CMat {
        let n_r = self.rx_steering.nrows();
        let n_t = self.tx_steering.nrows();
        let mut h = CMat::zeros((n_r, n_t));
        for l in 0..self.gains.nrows() {
            let g = self.gains[[l, t]];
            for i in 0..n_r {
                let left = g * self.rx_steering[[i, l]];
                for j in 0..n_t {
                    h[[i, j]] += left * self.tx_steering[[j, l]].conj();
                }
            }
        }
        h
    }
}

pub fn draw_mimo_channel<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    dict_t: &Dictionary,
    dict_r: &Dictionary,
    rng: &mut R,
) -> MimoChannelRealization {
    let mm = cfg.mimo.expect("draw_mimo_channel needs cfg.mimo");
    let (support_pairs, rx_aoas, tx_aods) = if cfg.on_grid {
        let flat = draw_support(mm.d_r * mm.d_t, cfg.l, rng);
        let pairs: Vec<(usize, usize)> = flat.iter().map(|&f| (f % mm.d_r, f / mm.d_r)).collect();
        let rx = pairs.iter().map(|&(r, _)| dict_r.grid()[r]).collect();
        let tx = pairs.iter().map(|&(_, t)| dict_t.grid()[t]).collect();
        (pairs, rx, tx)
    } else {
        let two_pi = 2.0 * std::f64::consts::PI;
        let rx: Vec<f64> = (0..cfg.l)
            .map(|_| rng.random::<f64>() * two_pi - std::f64::consts::PI)
            .collect();
        let tx: Vec<f64> = (0..cfg.l)
            .map(|_| rng.random::<f64>() * two_pi - std::f64::consts::PI)
            .collect();
        (Vec::new(), rx, tx)
    };
    let gains = CMat::from_shape_fn((cfg.l, cfg.t), |_| cn_unit(rng));
    let rx_steering = steering_matrix(&rx_aoas, mm.n_r);
    let tx_steering = steering_matrix(&tx_aods, mm.n_t);
    MimoChannelRealization {
        support_pairs,
        rx_aoas,
        tx_aods,
        gains,
        rx_steering,
        tx_steering,
    }
}
