//! Noisy baseband measurement generation for the three scenarios.
//!
//! All simulators share one convention: path gains have unit variance,
//! dictionary columns have squared norm `N`, and the noise variance is
//! `sigma^2 = 10^(-snr_db / 10)` per combined output entry. Adding white
//! noise *after* the combiner is exact because every combiner in a
//! [`SensingEnsemble`](crate::sensing::SensingEnsemble) has orthonormal rows.
//! Passing `snr_db = f64::INFINITY` gives a noiseless run that consumes no
//! RNG draws.

use crate::channel::{
    cn_unit, MimoChannelRealization, ScenarioError, SparseChannelRealization, WidebandRealization,
};
use crate::numerics::{mul_vec, CMat, CVec};
use crate::sensing::{MimoFrame, MimoMode, SensingEnsemble};
use rand::Rng;

/// Measurements produced by one simulated training window.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    /// One matrix per frame `t`. Narrowband and MIMO frames hold a single
    /// column; wideband frames hold one column per subcarrier.
    pub frames: Vec<CMat>,
    /// Noise variance per entry (`0.0` for noiseless runs).
    pub sigma2: f64,
}

impl MeasurementSet {
    /// Number of frames `T`.
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Measurement dimension per frame.
    pub fn rows(&self) -> usize {
        self.frames[0].nrows()
    }

    /// Single-column frames as an `rows x T` matrix (narrowband / MIMO).
    pub fn columns(&self) -> CMat {
        let rows = self.rows();
        let t = self.frames.len();
        CMat::from_shape_fn((rows, t), |(i, j)| {
            debug_assert_eq!(self.frames[j].ncols(), 1);
            self.frames[j][[i, 0]]
        })
    }

    /// Single-column frames as vectors (distributed estimators).
    pub fn frame_vectors(&self) -> Vec<CVec> {
        self.frames
            .iter()
            .map(|f| {
                assert_eq!(f.ncols(), 1, "frame_vectors needs single-column frames");
                CVec::from_shape_fn(f.nrows(), |i| f[[i, 0]])
            })
            .collect()
    }

    /// Every column of every frame, flattened in frame order; treats a
    /// wideband set as `T * K` independent snapshots.
    pub fn flattened_columns(&self) -> Vec<CVec> {
        self.frames
            .iter()
            .flat_map(|f| (0..f.ncols()).map(move |k| f.column(k).to_owned()))
            .collect()
    }
}

fn noise_sigma(snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 20.0)
    }
}

/// Adds `sigma * CN(0, 1)` to each entry, in index order; a no-op that
/// consumes no RNG draws when `sigma == 0`.
fn add_noise<R: Rng + ?Sized>(v: &mut CVec, sigma: f64, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for z in v.iter_mut() {
        *z += sigma * cn_unit(rng);
    }
}

fn column(v: &CVec) -> CMat {
    CMat::from_shape_fn((v.len(), 1), |(i, _)| v[i])
}

/// Narrowband: `y_t = W_t h_t + w_t` with `h_t` the instantaneous channel;
/// on-grid this equals `Phi_t g_t + w_t` on the sparse gain vector.
pub fn simulate_narrowband<R: Rng + ?Sized>(
    channel: &SparseChannelRealization,
    ensemble: &SensingEnsemble,
    snr_db: f64,
    rng: &mut R,
) -> MeasurementSet {
    let sigma = noise_sigma(snr_db);
    let t_count = channel.gains.ncols();
    let mut frames = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let g = channel.gains.column(t).to_owned();
        let h = mul_vec(&channel.steering, g.view());
        let mut y = mul_vec(&ensemble.frame(t).w, h.view());
        add_noise(&mut y, sigma, rng);
        frames.push(column(&y));
    }
    MeasurementSet {
        frames,
        sigma2: sigma * sigma,
    }
}

/// MIMO: per frame `t` and symbol slot `s`, `y_{t,s} = W_{t,s} H_t f_{t,s} +
/// w_{t,s}`. The static schedule averages its repeated symbol (noise variance
/// drops to `sigma^2 / M_T`); the others stack the `M_T` symbol measurements.
pub fn simulate_mimo<R: Rng + ?Sized>(
    channel: &MimoChannelRealization,
    mode: MimoMode,
    frames: &[MimoFrame],
    snr_db: f64,
    rng: &mut R,
) -> Result<MeasurementSet, ScenarioError> {
    let t_count = channel.gains.ncols();
    if frames.len() != t_count {
        return Err(ScenarioError {
            field: "frames",
            reason: format!("expected {} training frames, got {}", t_count, frames.len()),
        });
    }
    let sigma = noise_sigma(snr_db);
    let mut out = Vec::with_capacity(t_count);
    for (t, frame) in frames.iter().enumerate() {
        let slots = frame.precoders.len();
        if frame.combiners.len() != slots {
            return Err(ScenarioError {
                field: "frames",
                reason: format!(
                    "frame {t}: {} precoders vs {} combiners",
                    slots,
                    frame.combiners.len()
                ),
            });
        }
        let h = channel.matrix_at(t);
        let per_symbol: Vec<CVec> = (0..slots)
            .map(|s| {
                let hf = mul_vec(&h, frame.precoders[s].view());
                let mut y = mul_vec(&frame.combiners[s], hf.view());
                add_noise(&mut y, sigma, rng);
                y
            })
            .collect();
        let agg = match mode {
            MimoMode::Static => {
                let m_r = per_symbol[0].len();
                let mut avg = CVec::zeros(m_r);
                for y in &per_symbol {
                    avg += y;
                }
                avg.mapv_inplace(|z| z / slots as f64);
                avg
            }
            _ => {
                let m_r = per_symbol[0].len();
                CVec::from_shape_fn(m_r * slots, |i| per_symbol[i / m_r][i % m_r])
            }
        };
        out.push(column(&agg));
    }
    Ok(MeasurementSet {
        frames: out,
        sigma2: sigma * sigma,
    })
}

/// Wideband: `y_{t,k} = W_t A_S (g_t .* c_k) + w_{t,k}` — one sensing
/// snapshot per frame shared by all `K` subcarriers, noise independent
/// across `(t, k)`.
pub fn simulate_wideband<R: Rng + ?Sized>(
    channel: &WidebandRealization,
    ensemble: &SensingEnsemble,
    snr_db: f64,
    rng: &mut R,
) -> MeasurementSet {
    let sigma = noise_sigma(snr_db);
    let base = &channel.channel;
    let t_count = base.gains.ncols();
    let k_sub = channel.taps.ncols();
    let m = ensemble.frame(0).w.nrows();
    let mut frames = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let w = &ensemble.frame(t).w;
        let mut frame = CMat::zeros((m, k_sub));
        for k in 0..k_sub {
            let modulated =
                CVec::from_shape_fn(base.gains.nrows(), |l| base.gains[[l, t]] * channel.taps[[l, k]]);
            let h = mul_vec(&base.steering, modulated.view());
            let mut y = mul_vec(w, h.view());
            add_noise(&mut y, sigma, rng);
            for i in 0..m {
                frame[[i, k]] = y[i];
            }
        }
        frames.push(frame);
    }
    MeasurementSet {
        frames,
        sigma2: sigma * sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        build_dictionary, draw_channel, draw_mimo_channel, draw_wideband_channel, subcarrier_taps,
        MimoDims, ScenarioConfig, SparseChannelRealization, WidebandDims,
    };
    use crate::numerics::{adjoint, matmul, select_columns, C64};
    use crate::sensing::{aggregate_mimo_sensing, draw_mimo_frame, KronAggregateOperator,
        SensingOperator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(n: usize, m: usize, d: usize, l: usize, t: usize) -> ScenarioConfig {
        ScenarioConfig {
            n,
            m,
            d,
            l,
            t,
            snr_db: 10.0,
            on_grid: true,
            mimo: None,
            wideband: None,
        }
    }

    #[test]
    fn noiseless_narrowband_regenerates_sparse_model() {
        let cfg = scenario(16, 4, 24, 3, 5);
        let dict = build_dictionary(cfg.n, cfg.d);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ch = draw_channel(&cfg, &dict, &mut rng);
        let ens = SensingEnsemble::draw(&dict, cfg.m, cfg.t, true, &mut rng).unwrap();
        let ms = simulate_narrowband(&ch, &ens, f64::INFINITY, &mut rng);
        assert_eq!(ms.sigma2, 0.0);
        assert_eq!(ms.num_frames(), 5);
        for t in 0..cfg.t {
            let phi_s = select_columns(&ens.frame(t).phi, &ch.support);
            let expect = mul_vec(&phi_s, ch.gains.column(t).view());
            let y = ms.frame_vectors()[t].clone();
            for i in 0..cfg.m {
                assert!((y[i] - expect[i]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_path_unit_gain_reads_out_a_column() {
        let dict = build_dictionary(8, 12);
        let j = 5;
        let ch = SparseChannelRealization {
            support: vec![j],
            aoas: vec![dict.grid()[j]],
            gains: CMat::from_elem((1, 1), C64::new(1.0, 0.0)),
            steering: select_columns(dict.matrix(), &[j]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ens = SensingEnsemble::draw(&dict, 3, 1, false, &mut rng).unwrap();
        let ms = simulate_narrowband(&ch, &ens, f64::INFINITY, &mut rng);
        let y = &ms.frame_vectors()[0];
        for i in 0..3 {
            assert!((y[i] - ens.frame(0).phi[[i, j]]).norm() < 1e-12);
        }
    }

    /// Empirical SNR matches the documented convention `1 / sigma^2` for a
    /// single unit-variance path, and scales with the path count.
    #[test]
    fn empirical_snr_matches_convention() {
        let snr_db = 6.0;
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        let dict = build_dictionary(16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (l, expect_ratio) in [(1usize, 1.0 / sigma2), (2, 2.0 / sigma2)] {
            let cfg = scenario(16, 4, 16, l, 1);
            let mut sig = 0.0;
            let mut noise = 0.0;
            for _ in 0..10_000 {
                let ch = draw_channel(&cfg, &dict, &mut rng);
                let ens = SensingEnsemble::draw(&dict, cfg.m, 1, false, &mut rng).unwrap();
                let clean = simulate_narrowband(&ch, &ens, f64::INFINITY, &mut rng);
                let noisy = simulate_narrowband(&ch, &ens, snr_db, &mut rng);
                let c = clean.frame_vectors().remove(0);
                let y = noisy.frame_vectors().remove(0);
                sig += c.iter().map(|z| z.norm_sqr()).sum::<f64>();
                noise += (0..cfg.m).map(|i| (y[i] - c[i]).norm_sqr()).sum::<f64>();
            }
            let ratio = sig / noise;
            assert!(
                (ratio / expect_ratio - 1.0).abs() < 0.05,
                "L={l}: ratio {ratio}, expected {expect_ratio}"
            );
        }
    }

    fn tiny_mimo() -> (ScenarioConfig, MimoDims) {
        let dims = MimoDims {
            n_t: 4,
            m_t: 2,
            d_t: 5,
            n_r: 4,
            m_r: 2,
            d_r: 6,
        };
        let mut cfg = scenario(4, 2, 6, 2, 3);
        cfg.mimo = Some(dims.clone());
        (cfg, dims)
    }

    /// Noiseless aggregate measurements equal the dense aggregate model
    /// `Theta vec(H)` for every schedule.
    #[test]
    fn noiseless_mimo_matches_aggregate_model() {
        let (cfg, dims) = tiny_mimo();
        let dict_t = build_dictionary(dims.n_t, dims.d_t);
        let dict_r = build_dictionary(dims.n_r, dims.d_r);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ch = draw_mimo_channel(&cfg, &dict_t, &dict_r, &mut rng);
        for mode in MimoMode::ALL {
            let frames: Vec<_> = (0..cfg.t)
                .map(|_| draw_mimo_frame(&dims, mode, &mut rng).unwrap())
                .collect();
            let ms = simulate_mimo(&ch, mode, &frames, f64::INFINITY, &mut rng).unwrap();
            for t in 0..cfg.t {
                let h = ch.matrix_at(t);
                let vec_h =
                    CVec::from_shape_fn(dims.n_r * dims.n_t, |i| h[[i % dims.n_r, i / dims.n_r]]);
                let theta = aggregate_mimo_sensing(&frames[t], mode);
                let expect = mul_vec(&theta, vec_h.view());
                let y = ms.frame_vectors()[t].clone();
                assert_eq!(y.len(), expect.len(), "{mode:?}");
                for i in 0..y.len() {
                    assert!((y[i] - expect[i]).norm() < 1e-10, "{mode:?} frame {t}");
                }
            }
        }
    }

    /// The static schedule's averaged symbol equals the structured operator
    /// applied to the vectorized sparse gains (single-symbol case).
    #[test]
    fn static_single_symbol_equals_kron_operator_path() {
        let dims = MimoDims {
            n_t: 4,
            m_t: 1,
            d_t: 5,
            n_r: 4,
            m_r: 2,
            d_r: 6,
        };
        let mut cfg = scenario(4, 2, 6, 2, 1);
        cfg.mimo = Some(dims.clone());
        let dict_t = build_dictionary(dims.n_t, dims.d_t);
        let dict_r = build_dictionary(dims.n_r, dims.d_r);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let ch = draw_mimo_channel(&cfg, &dict_t, &dict_r, &mut rng);
        let frame = draw_mimo_frame(&dims, MimoMode::Static, &mut rng).unwrap();
        let ms = simulate_mimo(&ch, MimoMode::Static, &[frame.clone()], f64::INFINITY, &mut rng)
            .unwrap();
        let op = KronAggregateOperator::build(&frame, MimoMode::Static, &dict_t, &dict_r);
        let mut expect = CVec::zeros(op.rows());
        for (l, j) in ch.flat_support(dims.d_r).into_iter().enumerate() {
            let col = op.column(j);
            let g = ch.gains[[l, 0]];
            for i in 0..op.rows() {
                expect[i] += g * col[i];
            }
        }
        let y = ms.frame_vectors()[0].clone();
        for i in 0..op.rows() {
            assert!((y[i] - expect[i]).norm() < 1e-10);
        }
    }

    /// The static schedule averages its repeated symbol, cutting the noise
    /// variance to `sigma^2 / M_T`.
    #[test]
    fn static_schedule_averages_noise() {
        let (cfg, dims) = tiny_mimo();
        let snr_db = 0.0; // sigma^2 = 1
        let dict_t = build_dictionary(dims.n_t, dims.d_t);
        let dict_r = build_dictionary(dims.n_r, dims.d_r);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut cfg1 = cfg.clone();
        cfg1.t = 1;
        let ch = draw_mimo_channel(&cfg1, &dict_t, &dict_r, &mut rng);
        let frame = draw_mimo_frame(&dims, MimoMode::Static, &mut rng).unwrap();
        let clean = simulate_mimo(&ch, MimoMode::Static, &[frame.clone()], f64::INFINITY, &mut rng)
            .unwrap();
        let c = clean.frame_vectors().remove(0);
        let mut acc = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let ms =
                simulate_mimo(&ch, MimoMode::Static, &[frame.clone()], snr_db, &mut rng).unwrap();
            let y = ms.frame_vectors().remove(0);
            acc += (0..dims.m_r).map(|i| (y[i] - c[i]).norm_sqr()).sum::<f64>();
        }
        let var = acc / (draws * dims.m_r) as f64;
        let expect = 1.0 / dims.m_t as f64;
        assert!((var / expect - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn mimo_shape_mismatch_is_an_error() {
        let (cfg, dims) = tiny_mimo();
        let dict_t = build_dictionary(dims.n_t, dims.d_t);
        let dict_r = build_dictionary(dims.n_r, dims.d_r);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ch = draw_mimo_channel(&cfg, &dict_t, &dict_r, &mut rng);
        let frame = draw_mimo_frame(&dims, MimoMode::Static, &mut rng).unwrap();
        // cfg.t = 3 frames expected, one supplied.
        let err = simulate_mimo(&ch, MimoMode::Static, &[frame], 10.0, &mut rng).unwrap_err();
        assert_eq!(err.field, "frames");
    }

    /// With one subcarrier and zero delay the wideband simulator consumes the
    /// same RNG stream as the narrowband one and produces identical bytes.
    #[test]
    fn wideband_single_carrier_zero_delay_reduces_to_narrowband() {
        let mut cfg = scenario(8, 3, 8, 2, 4);
        cfg.wideband = Some(WidebandDims { k: 1, n_cp: 4 });
        let dict = build_dictionary(cfg.n, cfg.d);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let ch = draw_channel(&cfg, &dict, &mut rng);
        let wb = WidebandRealization {
            channel: ch.clone(),
            delays: vec![0.0; cfg.l],
            taps: subcarrier_taps(&[0.0; 2], 4, 1),
        };
        let ens = SensingEnsemble::draw(&dict, cfg.m, cfg.t, true, &mut rng).unwrap();
        let y_nb = simulate_narrowband(&ch, &ens, 5.0, &mut ChaCha8Rng::seed_from_u64(99));
        let y_wb = simulate_wideband(&wb, &ens, 5.0, &mut ChaCha8Rng::seed_from_u64(99));
        for t in 0..cfg.t {
            for i in 0..cfg.m {
                assert_eq!(y_nb.frames[t][[i, 0]], y_wb.frames[t][[i, 0]]);
            }
        }
    }

    /// Integer delays give unit-modulus taps, so a single path has the same
    /// measurement energy on every subcarrier.
    #[test]
    fn integer_delay_single_path_energy_flat_across_subcarriers() {
        let mut cfg = scenario(8, 3, 8, 1, 2);
        cfg.wideband = Some(WidebandDims { k: 8, n_cp: 4 });
        let dict = build_dictionary(cfg.n, cfg.d);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let ch = draw_channel(&cfg, &dict, &mut rng);
        let wb = WidebandRealization {
            channel: ch,
            delays: vec![2.0],
            taps: subcarrier_taps(&[2.0], 4, 8),
        };
        let ens = SensingEnsemble::draw(&dict, cfg.m, cfg.t, true, &mut rng).unwrap();
        let ms = simulate_wideband(&wb, &ens, f64::INFINITY, &mut rng);
        for t in 0..cfg.t {
            let e0: f64 = (0..cfg.m).map(|i| ms.frames[t][[i, 0]].norm_sqr()).sum();
            for k in 1..8 {
                let ek: f64 = (0..cfg.m).map(|i| ms.frames[t][[i, k]].norm_sqr()).sum();
                assert!((ek - e0).abs() < 1e-10 * e0.max(1.0));
            }
        }
    }

    /// Noiseless frequency-averaged sample covariance factors through the
    /// sensing matrix: (1/K) sum_k y_k y_k^H = Phi_S C Phi_S^H.
    #[test]
    fn frequency_averaged_covariance_factors() {
        let mut cfg = scenario(8, 4, 10, 3, 1);
        cfg.wideband = Some(WidebandDims { k: 16, n_cp: 6 });
        let dict = build_dictionary(cfg.n, cfg.d);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let wb = draw_wideband_channel(&cfg, &dict, &mut rng);
        let ens = SensingEnsemble::draw(&dict, cfg.m, 1, false, &mut rng).unwrap();
        let ms = simulate_wideband(&wb, &ens, f64::INFINITY, &mut rng);
        let y = &ms.frames[0];
        let lhs = matmul(y, &adjoint(y)).mapv(|z| z / 16.0);
        // C = (1/K) sum_k (g .* c_k)(g .* c_k)^H
        let l = cfg.l;
        let mut c_mat = CMat::zeros((l, l));
        for k in 0..16 {
            let m = CVec::from_shape_fn(l, |i| wb.channel.gains[[i, 0]] * wb.taps[[i, k]]);
            for a in 0..l {
                for b in 0..l {
                    c_mat[[a, b]] += m[a] * m[b].conj() / 16.0;
                }
            }
        }
        let phi_s = select_columns(&ens.frame(0).phi, &wb.channel.support);
        let rhs = matmul(&matmul(&phi_s, &c_mat), &adjoint(&phi_s));
        for i in 0..cfg.m {
            for j in 0..cfg.m {
                assert!((lhs[[i, j]] - rhs[[i, j]]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = scenario(8, 3, 8, 2, 4);
        let dict = build_dictionary(cfg.n, cfg.d);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let ch = draw_channel(&cfg, &dict, &mut rng);
            let ens = SensingEnsemble::draw(&dict, cfg.m, cfg.t, true, &mut rng).unwrap();
            simulate_narrowband(&ch, &ens, 3.0, &mut rng)
        };
        let a = run();
        let b = run();
        for t in 0..cfg.t {
            for i in 0..cfg.m {
                assert_eq!(a.frames[t][[i, 0]], b.frames[t][[i, 0]]);
            }
        }
    }
}
