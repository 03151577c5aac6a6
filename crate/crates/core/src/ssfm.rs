//! Dual-polarization fiber propagation: root-raised-cosine pulse shaping
//! and a symmetric split-step integrator for the Manakov equations with
//! loss, lumped end-of-span amplification and ASE injection.
//!
//! Internal units: time ps, frequency THz, distance km, power W. The field
//! arrays carry sqrt(W) amplitudes. Boundary conditions are periodic
//! (circular convolution), so pulse shaping and matched filtering are
//! edge-effect free; wrap-around artifacts of propagation are handled by
//! discarding guard symbols at the metrics level.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nlin::LinkParams;

/// Manakov cross-polarization averaging factor.
const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

/// Dual-polarization complex baseband waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub pol_x: Vec<Complex64>,
    pub pol_y: Vec<Complex64>,
    /// Sample rate, GHz.
    pub sample_rate_ghz: f64,
}

impl FieldGrid {
    pub fn new(pol_x: Vec<Complex64>, pol_y: Vec<Complex64>, sample_rate_ghz: f64) -> Result<Self> {
        if pol_x.len() != pol_y.len() {
            return Err(Error::InvalidParameter(format!(
                "polarization lengths differ: {} vs {}",
                pol_x.len(),
                pol_y.len()
            )));
        }
        if !pol_x.len().is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "grid length {} must be a power of two",
                pol_x.len()
            )));
        }
        if !(sample_rate_ghz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_ghz}"
            )));
        }
        Ok(Self {
            pol_x,
            pol_y,
            sample_rate_ghz,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.pol_x.len()
    }

    /// Sum of |u|^2 + |v|^2 over the grid (proportional to energy).
    pub fn total_sample_energy(&self) -> f64 {
        self.pol_x
            .iter()
            .zip(&self.pol_y)
            .map(|(u, v)| u.norm_sqr() + v.norm_sqr())
            .sum()
    }

    /// Mean dual-polarization power, W.
    pub fn mean_power_w(&self) -> f64 {
        self.total_sample_energy() / self.n_samples() as f64
    }

    /// Binary dump: little-endian f64 interleaved `(re_x, im_x, re_y, im_y)`
    /// per sample, plus a JSON sidecar with sample rate and length.
    pub fn dump(&self, bin_path: &std::path::Path, sidecar_path: &std::path::Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.n_samples() * 32);
        for (u, v) in self.pol_x.iter().zip(&self.pol_y) {
            for value in [u.re, u.im, v.re, v.im] {
                bytes.extend_from_slice(&value.to_le_bytes());
            }
        }
        std::fs::write(bin_path, bytes)?;
        let sidecar = serde_json::json!({
            "sample_rate_ghz": self.sample_rate_ghz,
            "n_samples": self.n_samples(),
        });
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(bin_path: &std::path::Path, sidecar_path: &std::path::Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Sidecar {
            sample_rate_ghz: f64,
            n_samples: usize,
        }
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        let bytes = std::fs::read(bin_path)?;
        if bytes.len() != sidecar.n_samples * 32 {
            return Err(Error::InvalidParameter(format!(
                "waveform byte length {} does not match {} samples",
                bytes.len(),
                sidecar.n_samples
            )));
        }
        let mut pol_x = Vec::with_capacity(sidecar.n_samples);
        let mut pol_y = Vec::with_capacity(sidecar.n_samples);
        for chunk in bytes.chunks_exact(32) {
            let f = |i: usize| f64::from_le_bytes(chunk[i * 8..(i + 1) * 8].try_into().unwrap());
            pol_x.push(Complex64::new(f(0), f(1)));
            pol_y.push(Complex64::new(f(2), f(3)));
        }
        Self::new(pol_x, pol_y, sidecar.sample_rate_ghz)
    }
}

/// Split-step spatial discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// Fixed step length in km. Errors if the per-step nonlinear phase
    /// exceeds the configured cap.
    Fixed(f64),
    /// Step length chosen each step so the peak nonlinear phase stays at
    /// the configured cap.
    Adaptive,
}

/// Split-step solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfmConfig {
    pub samples_per_symbol: usize,
    pub step: StepMode,
    /// Peak nonlinear phase per step, rad.
    pub max_nonlinear_phase_per_step: f64,
}

impl Default for SsfmConfig {
    fn default() -> Self {
        Self {
            samples_per_symbol: 8,
            step: StepMode::Fixed(0.1),
            max_nonlinear_phase_per_step: 3e-3,
        }
    }
}

impl SsfmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_symbol < 1 {
            return Err(Error::InvalidParameter(
                "samples_per_symbol must be >= 1".into(),
            ));
        }
        if let StepMode::Fixed(h) = self.step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "fixed step must be positive, got {h}"
                )));
            }
        }
        if !(self.max_nonlinear_phase_per_step > 0.0) {
            return Err(Error::InvalidParameter(
                "max_nonlinear_phase_per_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Baseband frequency of FFT bin `m` in THz.
pub(crate) fn bin_freq_thz(m: usize, n: usize, sample_rate_ghz: f64) -> f64 {
    let df = sample_rate_ghz * 1e-3 / n as f64;
    if m <= n / 2 {
        m as f64 * df
    } else {
        (m as f64 - n as f64) * df
    }
}

/// Raised-cosine amplitude spectrum with unit plateau.
pub(crate) fn raised_cosine(f_ghz: f64, symbol_rate_gbd: f64, rolloff: f64) -> f64 {
    let af = f_ghz.abs();
    let f1 = (1.0 - rolloff) * symbol_rate_gbd / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate_gbd / 2.0;
    if af <= f1 {
        1.0
    } else if af < f2 && rolloff > 0.0 {
        0.5 * (1.0 + (std::f64::consts::PI * (af - f1) / (rolloff * symbol_rate_gbd)).cos())
    } else {
        0.0
    }
}

pub(crate) struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }

    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// Upsample, RRC-filter and scale two unit-power symbol sequences so the
/// total average waveform power (both polarizations) is `power_w`.
///
/// The filter is applied in the frequency domain; the power scaling is
/// analytic (exact in expectation for unit-power symbols).
pub fn rrc_modulate(
    sym_x: &[Complex64],
    sym_y: &[Complex64],
    link: &LinkParams,
    power_w: f64,
    cfg: &SsfmConfig,
) -> Result<FieldGrid> {
    cfg.validate()?;
    if sym_x.len() != sym_y.len() || sym_x.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need equal non-empty symbol sequences, got {} and {}",
            sym_x.len(),
            sym_y.len()
        )));
    }
    let sps = cfg.samples_per_symbol;
    if (sps as f64) < 1.0 + link.rolloff {
        return Err(Error::Aliasing(format!(
            "samples_per_symbol {sps} below 1 + rolloff = {}; spectrum would fold",
            1.0 + link.rolloff
        )));
    }
    if !(power_w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "launch power must be positive, got {power_w}"
        )));
    }
    let n = sym_x.len() * sps;
    if !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "grid length {n} = {} symbols x {sps} sps must be a power of two",
            sym_x.len()
        )));
    }
    let sample_rate_ghz = link.symbol_rate_gbd * sps as f64;

    let fft = FftPair::new(n);
    // Frequency response folding in zero-stuffing gain and the launch-power
    // scale: with unit-power symbols the mean output power is exactly
    // power_w / 2 per polarization.
    let amp = sps as f64 * (power_w / 2.0).sqrt();
    let response: Vec<f64> = (0..n)
        .map(|m| {
            let f = bin_freq_thz(m, n, sample_rate_ghz) * 1e3; // GHz
            amp * raised_cosine(f, link.symbol_rate_gbd, link.rolloff).sqrt()
        })
        .collect();

    let shape = |symbols: &[Complex64]| -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (q, s) in symbols.iter().enumerate() {
            buf[q * sps] = *s;
        }
        fft.forward(&mut buf);
        for (b, r) in buf.iter_mut().zip(&response) {
            *b *= *r;
        }
        fft.inverse(&mut buf);
        buf
    };

    let (px, py) = rayon::join(|| shape(sym_x), || shape(sym_y));
    FieldGrid::new(px, py, sample_rate_ghz)
}

/// Per-bin linear operator for a length `h` km:
/// `exp((-alpha/2 + i beta2/2 omega^2) h)`.
fn linear_operator(
    n: usize,
    sample_rate_ghz: f64,
    beta2_ps2_km: f64,
    alpha_per_km: f64,
    h_km: f64,
) -> Vec<Complex64> {
    (0..n)
        .map(|m| {
            let omega = 2.0 * std::f64::consts::PI * bin_freq_thz(m, n, sample_rate_ghz);
            let phase = 0.5 * beta2_ps2_km * omega * omega * h_km;
            let decay = (-0.5 * alpha_per_km * h_km).exp();
            Complex64::from_polar(decay, phase)
        })
        .collect()
}

fn apply_in_freq(fft: &FftPair, pol: &mut [Complex64], op: &[Complex64]) {
    fft.forward(pol);
    for (s, o) in pol.iter_mut().zip(op) {
        *s *= o;
    }
    fft.inverse(pol);
}

/// Effective length of one step referred to its midpoint power:
/// `2 sinh(alpha h / 2) / alpha`. Makes the per-step nonlinear phase equal
/// to `gamma * integral of P(z) dz` exactly for an exponentially decaying
/// envelope.
fn midpoint_effective_length(alpha_per_km: f64, h_km: f64) -> f64 {
    if alpha_per_km.abs() < 1e-12 {
        h_km
    } else {
        2.0 * (alpha_per_km * h_km / 2.0).sinh() / alpha_per_km
    }
}

/// Symmetric split-step propagation over one span, followed by an amplifier
/// that restores the launch power and (optionally) injects white ASE over
/// the simulation bandwidth.
///
/// `noise_seed: None` disables ASE (the gain is still applied).
pub fn ssfm_propagate(
    field: &FieldGrid,
    link: &LinkParams,
    cfg: &SsfmConfig,
    noise_seed: Option<u64>,
) -> Result<FieldGrid> {
    cfg.validate()?;
    let n = field.n_samples();
    let fft = FftPair::new(n);
    let beta2 = link.beta2_ps2_per_km();
    let alpha = link.alpha_linear_per_km();
    let gamma = link.gamma_per_w_km;
    let span = link.span_length_km;
    let cap = cfg.max_nonlinear_phase_per_step;

    let mut u = field.pol_x.clone();
    let mut v = field.pol_y.clone();

    // Adjacent linear half steps of consecutive split steps are merged into
    // one frequency-domain pass; the operator for the previous merged
    // length is reused while the step size stays constant.
    let mut cached_op: Option<(f64, Vec<Complex64>)> = None;

    let mut z = 0.0;
    let mut pending_half: Option<f64> = None; // trailing half step to merge
    while span - z > 1e-12 {
        let h = match cfg.step {
            StepMode::Fixed(h) => h.min(span - z),
            StepMode::Adaptive => {
                let peak: f64 = u
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
                    .fold(0.0, f64::max);
                let rate = MANAKOV_FACTOR * gamma.abs() * peak;
                let h = if rate > 0.0 { cap / rate } else { span };
                h.min(span - z)
            }
        };

        // Leading linear half step, merged with the trailing half of the
        // previous step.
        let lead = match pending_half.take() {
            Some(prev_half) => prev_half + h / 2.0,
            None => h / 2.0,
        };
        let reusable = matches!(&cached_op, Some((len, _)) if (*len - lead).abs() < 1e-15);
        if !reusable {
            cached_op = Some((
                lead,
                linear_operator(n, field.sample_rate_ghz, beta2, alpha, lead),
            ));
        }
        let op = &cached_op.as_ref().unwrap().1;
        let (u_ref, v_ref) = (&mut u, &mut v);
        rayon::join(
            || apply_in_freq(&fft, u_ref, op),
            || apply_in_freq(&fft, v_ref, op),
        );

        // Nonlinear step at the midpoint field.
        let h_eff = midpoint_effective_length(alpha, h);
        let rot = MANAKOV_FACTOR * gamma * h_eff;
        let mut peak_phase = 0.0f64;
        for (a, b) in u.iter_mut().zip(v.iter_mut()) {
            let theta = rot * (a.norm_sqr() + b.norm_sqr());
            if theta.abs() > peak_phase {
                peak_phase = theta.abs();
            }
            let phase = Complex64::from_polar(1.0, theta);
            *a *= phase;
            *b *= phase;
        }
        if matches!(cfg.step, StepMode::Fixed(_)) && peak_phase > cap {
            return Err(Error::NonlinearPhaseCap {
                phase: peak_phase,
                cap,
            });
        }

        pending_half = Some(h / 2.0);
        z += h;
    }

    if let Some(half) = pending_half {
        let op = linear_operator(n, field.sample_rate_ghz, beta2, alpha, half);
        let (u_ref, v_ref) = (&mut u, &mut v);
        rayon::join(
            || apply_in_freq(&fft, u_ref, &op),
            || apply_in_freq(&fft, v_ref, &op),
        );
    }

    // Lumped amplifier: restore launch power, then ASE white over the band.
    let gain_amp = link.gain_linear().sqrt();
    for (a, b) in u.iter_mut().zip(v.iter_mut()) {
        *a *= gain_amp;
        *b *= gain_amp;
    }
    if let Some(seed) = noise_seed {
        let sigma2_grid = link.ase_psd_w_per_hz() * field.sample_rate_ghz * 1e9;
        let s = (sigma2_grid / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in u.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *a += Complex64::new(s * re, s * im);
        }
        for b in v.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *b += Complex64::new(s * re, s * im);
        }
    }

    FieldGrid::new(u, v, field.sample_rate_ghz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::make_qam;

    fn assert_rel(a: f64, b: f64, rel: f64, msg: &str) {
        assert!(
            (a - b).abs() <= rel * b.abs().max(1e-300),
            "{msg}: expected {b}, got {a} (rel {:.3e})",
            ((a - b) / b).abs()
        );
    }

    fn test_link() -> LinkParams {
        LinkParams::single_span_ssmf()
    }

    fn qpsk_symbols(n: usize, seed: u64) -> Vec<Complex64> {
        let c = make_qam(4).unwrap();
        c.symbols_for(&c.sample_sequence(n, seed))
    }

    #[test]
    fn modulated_power_matches_request() {
        let link = test_link();
        let cfg = SsfmConfig::default();
        let p = 2.5e-3;
        let n_sym = 1 << 14;
        // Constant-modulus symbols make the analytic power scaling exact up
        // to cyclostationary cross terms.
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 1),
            &qpsk_symbols(n_sym, 2),
            &link,
            p,
            &cfg,
        )
        .unwrap();
        assert_rel(field.mean_power_w(), p, 5e-3, "mean waveform power");
        // Each polarization carries half.
        let px: f64 =
            field.pol_x.iter().map(|s| s.norm_sqr()).sum::<f64>() / field.n_samples() as f64;
        assert_rel(px, p / 2.0, 1e-2, "per-pol power");
    }

    #[test]
    fn rrc_cascade_is_isi_free() {
        // Modulate then matched-filter with no channel: raised cosine is
        // Nyquist, so symbols return exactly (circular convolution has no
        // edge effects).
        let link = test_link();
        let cfg = SsfmConfig::default();
        let n_sym = 1 << 10;
        let sx = qpsk_symbols(n_sym, 3);
        let sy = qpsk_symbols(n_sym, 4);
        let field = rrc_modulate(&sx, &sy, &link, 1e-3, &cfg).unwrap();
        let (rx, _) = crate::rxdsp::matched_filter_downsample(&field, &link).unwrap();
        let aligned = crate::rxdsp::align(&rx, &sx).unwrap();
        let evm = crate::rxdsp::error_vector_magnitude(&aligned, &sx);
        assert!(evm < 1e-3, "back-to-back EVM {evm}");
    }

    #[test]
    fn spectrum_is_zero_beyond_rrc_band_edge() {
        let link = test_link();
        let cfg = SsfmConfig::default();
        let n_sym = 1 << 12;
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 5),
            &qpsk_symbols(n_sym, 6),
            &link,
            1e-3,
            &cfg,
        )
        .unwrap();
        let n = field.n_samples();
        let fft = FftPair::new(n);
        let mut spec = field.pol_x.clone();
        fft.forward(&mut spec);
        let edge = (1.0 + link.rolloff) * link.symbol_rate_gbd / 2.0;
        let peak = spec.iter().map(|s| s.norm()).fold(0.0, f64::max);
        let floor = 10f64.powf(-60.0 / 20.0) * peak;
        for (m, s) in spec.iter().enumerate() {
            let f = bin_freq_thz(m, n, field.sample_rate_ghz) * 1e3;
            if f.abs() > edge + 1e-9 {
                assert!(
                    s.norm() < floor,
                    "out-of-band energy at {f} GHz: {} vs floor {floor}",
                    s.norm()
                );
            }
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        let link = test_link();
        let cfg = SsfmConfig {
            samples_per_symbol: 1,
            ..Default::default()
        };
        let err = rrc_modulate(
            &qpsk_symbols(16, 1),
            &qpsk_symbols(16, 2),
            &link,
            1e-3,
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Aliasing(_)));
    }

    #[test]
    fn dispersion_only_preserves_magnitude_spectrum() {
        let mut link = test_link();
        link.gamma_per_w_km = 0.0;
        link.alpha_db_per_km = 0.0;
        let cfg = SsfmConfig {
            step: StepMode::Fixed(1.0),
            max_nonlinear_phase_per_step: 1.0,
            ..Default::default()
        };
        let n_sym = 1 << 9;
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 7),
            &qpsk_symbols(n_sym, 8),
            &link,
            1e-3,
            &cfg,
        )
        .unwrap();
        let out = ssfm_propagate(&field, &link, &cfg, None).unwrap();
        let n = field.n_samples();
        let fft = FftPair::new(n);
        let mut a = field.pol_x.clone();
        let mut b = out.pol_x.clone();
        fft.forward(&mut a);
        fft.forward(&mut b);
        let scale: f64 = a.iter().map(|s| s.norm_sqr()).sum::<f64>().sqrt();
        for (sa, sb) in a.iter().zip(&b) {
            assert!(
                (sa.norm() - sb.norm()).abs() <= 1e-9 * scale,
                "magnitude spectrum changed: {} vs {}",
                sa.norm(),
                sb.norm()
            );
        }
    }

    #[test]
    fn cw_kerr_rotation_matches_gamma_p_l() {
        // D = 0, alpha = 0, CW input: pure phase rotation by
        // (8/9) gamma P L with |output| = |input| pointwise.
        let mut link = test_link();
        link.dispersion_ps_nm_km = 0.0;
        link.alpha_db_per_km = 0.0;
        let cfg = SsfmConfig {
            step: StepMode::Fixed(0.5),
            max_nonlinear_phase_per_step: 1.0,
            ..Default::default()
        };
        let p = 5e-3;
        let amp = (p / 2.0f64).sqrt();
        let n = 1 << 8;
        let field = FieldGrid::new(
            vec![Complex64::new(amp, 0.0); n],
            vec![Complex64::new(amp, 0.0); n],
            512.0,
        )
        .unwrap();
        let out = ssfm_propagate(&field, &link, &cfg, None).unwrap();
        let expected = MANAKOV_FACTOR * link.gamma_per_w_km * p * link.span_length_km;
        for (a, inp) in out.pol_x.iter().zip(&field.pol_x) {
            assert_rel(a.norm(), inp.norm(), 1e-9, "CW magnitude");
        }
        let phase = (out.pol_x[0] / field.pol_x[0]).arg();
        assert_rel(phase, expected, 1e-9, "CW nonlinear phase");
    }

    #[test]
    fn cw_with_loss_matches_effective_length() {
        // alpha > 0: total phase = (8/9) gamma P L_eff exactly (the
        // midpoint effective-length correction telescopes).
        let mut link = test_link();
        link.dispersion_ps_nm_km = 0.0;
        let cfg = SsfmConfig {
            step: StepMode::Fixed(0.5),
            max_nonlinear_phase_per_step: 1.0,
            ..Default::default()
        };
        let p = 10e-3;
        let amp = (p / 2.0f64).sqrt();
        let n = 1 << 8;
        let field = FieldGrid::new(
            vec![Complex64::new(amp, 0.0); n],
            vec![Complex64::new(amp, 0.0); n],
            512.0,
        )
        .unwrap();
        let out = ssfm_propagate(&field, &link, &cfg, None).unwrap();
        let l_eff = link.effective_length_km();
        assert_rel(l_eff, 20.7, 3e-3, "paper-link L_eff");
        let expected = MANAKOV_FACTOR * link.gamma_per_w_km * p * l_eff;
        let phase = (out.pol_x[0] / field.pol_x[0]).arg();
        assert_rel(phase, expected, 1e-6, "CW phase with loss");
    }

    #[test]
    fn lossless_noiseless_propagation_conserves_energy() {
        let mut link = test_link();
        link.alpha_db_per_km = 0.0;
        let cfg = SsfmConfig {
            step: StepMode::Fixed(0.25),
            max_nonlinear_phase_per_step: 1.0,
            ..Default::default()
        };
        let n_sym = 1 << 9;
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 9),
            &qpsk_symbols(n_sym, 10),
            &link,
            8e-3,
            &cfg,
        )
        .unwrap();
        let out = ssfm_propagate(&field, &link, &cfg, None).unwrap();
        assert_rel(
            out.total_sample_energy(),
            field.total_sample_energy(),
            1e-9,
            "energy conservation",
        );
    }

    #[test]
    fn propagate_then_backpropagate_recovers_input() {
        let link = test_link();
        let cfg = SsfmConfig {
            step: StepMode::Fixed(0.1),
            max_nonlinear_phase_per_step: 1.0,
            ..Default::default()
        };
        let mut forward_link = link;
        forward_link.alpha_db_per_km = 0.0;
        let n_sym = 1 << 9;
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 11),
            &qpsk_symbols(n_sym, 12),
            &forward_link,
            4e-3,
            &cfg,
        )
        .unwrap();
        let there = ssfm_propagate(&field, &forward_link, &cfg, None).unwrap();
        let mut reversed = forward_link;
        reversed.dispersion_ps_nm_km = -forward_link.dispersion_ps_nm_km;
        reversed.gamma_per_w_km = -forward_link.gamma_per_w_km;
        let back = ssfm_propagate(&there, &reversed, &cfg, None).unwrap();
        let err_num: f64 = back
            .pol_x
            .iter()
            .zip(&field.pol_x)
            .chain(back.pol_y.iter().zip(&field.pol_y))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let norm: f64 = field.total_sample_energy();
        assert!(
            (err_num / norm).sqrt() < 1e-6,
            "round-trip L2 error {}",
            (err_num / norm).sqrt()
        );
    }

    #[test]
    fn fixed_step_rejects_excess_nonlinear_phase() {
        let link = test_link();
        let cfg = SsfmConfig {
            step: StepMode::Fixed(5.0),
            max_nonlinear_phase_per_step: 1e-5,
            ..Default::default()
        };
        let n_sym = 1 << 8;
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 13),
            &qpsk_symbols(n_sym, 14),
            &link,
            20e-3,
            &cfg,
        )
        .unwrap();
        let err = ssfm_propagate(&field, &link, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::NonlinearPhaseCap { .. }));
    }

    #[test]
    fn adaptive_mode_handles_high_power() {
        let link = test_link();
        let cfg = SsfmConfig {
            step: StepMode::Adaptive,
            max_nonlinear_phase_per_step: 3e-3,
            ..Default::default()
        };
        let n_sym = 1 << 8;
        let field = rrc_modulate(
            &qpsk_symbols(n_sym, 15),
            &qpsk_symbols(n_sym, 16),
            &link,
            20e-3,
            &cfg,
        )
        .unwrap();
        let out = ssfm_propagate(&field, &link, &cfg, None).unwrap();
        // Gain restores launch power (no noise): mean power close to launch.
        assert_rel(out.mean_power_w(), field.mean_power_w(), 0.05, "restored power");
    }

    #[test]
    fn ase_injection_is_deterministic_and_sized() {
        let mut link = test_link();
        link.gamma_per_w_km = 0.0;
        let cfg = SsfmConfig {
            step: StepMode::Fixed(10.0),
            max_nonlinear_phase_per_step: 1.0,
            ..Default::default()
        };
        let n = 1 << 14;
        let amp = (1e-3 / 2.0f64).sqrt();
        let field = FieldGrid::new(
            vec![Complex64::new(amp, 0.0); n],
            vec![Complex64::new(amp, 0.0); n],
            512.0,
        )
        .unwrap();
        let a = ssfm_propagate(&field, &link, &cfg, Some(5)).unwrap();
        let b = ssfm_propagate(&field, &link, &cfg, Some(5)).unwrap();
        assert_eq!(a.pol_x, b.pol_x);
        let clean = ssfm_propagate(&field, &link, &cfg, None).unwrap();
        let noise_power: f64 = a
            .pol_x
            .iter()
            .zip(&clean.pol_x)
            .map(|(y, x)| (y - x).norm_sqr())
            .sum::<f64>()
            / n as f64;
        let expected = link.ase_psd_w_per_hz() * field.sample_rate_ghz * 1e9;
        assert_rel(noise_power, expected, 0.05, "per-sample ASE variance");
    }

    #[test]
    fn waveform_dump_round_trip() {
        let dir = std::env::temp_dir().join("shaper_core_dump_test");
        std::fs::create_dir_all(&dir).unwrap();
        let field = FieldGrid::new(
            (0..8).map(|i| Complex64::new(i as f64, -(i as f64))).collect(),
            (0..8).map(|i| Complex64::new(0.5 * i as f64, 2.0)).collect(),
            64.0,
        )
        .unwrap();
        let bin = dir.join("wave.bin");
        let json = dir.join("wave.json");
        field.dump(&bin, &json).unwrap();
        let back = FieldGrid::load(&bin, &json).unwrap();
        assert_eq!(field, back);
    }
}
