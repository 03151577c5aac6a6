//! Closed-form NLIN Gaussian surrogate channel.
//!
//! The fiber is approximated per symbol by additive circular Gaussian noise
//! with variance
//!
//! `sigma^2 = sigma2_ase + P^3 (chi0 + chi1 (mu4-2) + chi2 (mu6 - 9 mu4 + 12) + chi3 (mu4-2)^2)`
//!
//! where `P` is the total dual-polarization launch power and `mu4`, `mu6`
//! are the standardized moments of the symbol distribution. Training and MI
//! estimation run in normalized symbol units (unit constellation power);
//! the per-polarization noise variance in those units is `sigma^2 / P`.
//!
//! Unit convention: `sigma2_ase` stored in [`NlinCoeffs`] is referred to the
//! total launch power, i.e. it is the dual-polarization sum, twice the
//! per-polarization matched-filter value returned by [`ase_variance`]. With
//! per-polarization signal power `P/2`, dividing the dual-pol sum by `P`
//! reproduces the physical per-polarization noise-to-signal ratio.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical fiber, amplifier and pulse parameters for the single-span link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Chromatic dispersion, ps/(nm km).
    pub dispersion_ps_nm_km: f64,
    /// Kerr nonlinearity, 1/(W km).
    pub gamma_per_w_km: f64,
    /// Attenuation, dB/km.
    pub alpha_db_per_km: f64,
    /// Span length, km.
    pub span_length_km: f64,
    /// Optical amplifier noise figure, dB.
    pub noise_figure_db: f64,
    /// Symbol rate, GBd.
    pub symbol_rate_gbd: f64,
    /// Root-raised-cosine roll-off.
    pub rolloff: f64,
    /// Carrier frequency, THz.
    pub carrier_freq_thz: f64,
}

impl LinkParams {
    /// Single-span SSMF link of the reference experiment: D = 16.8 ps/(nm km),
    /// gamma = 1.14 1/(W km), alpha = 0.21 dB/km, 170 km, NF = 4.5 dB,
    /// 64 GBd, roll-off 0.1, carrier 193.41 THz (1550 nm).
    pub fn single_span_ssmf() -> Self {
        Self {
            dispersion_ps_nm_km: 16.8,
            gamma_per_w_km: 1.14,
            alpha_db_per_km: 0.21,
            span_length_km: 170.0,
            noise_figure_db: 4.5,
            symbol_rate_gbd: 64.0,
            rolloff: 0.1,
            carrier_freq_thz: 193.41,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dispersion_ps_nm_km", self.dispersion_ps_nm_km),
            ("gamma_per_w_km", self.gamma_per_w_km),
            ("alpha_db_per_km", self.alpha_db_per_km),
            ("span_length_km", self.span_length_km),
            ("noise_figure_db", self.noise_figure_db),
            ("symbol_rate_gbd", self.symbol_rate_gbd),
            ("carrier_freq_thz", self.carrier_freq_thz),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidParameter(format!(
                "rolloff must be in [0, 1], got {}",
                self.rolloff
            )));
        }
        Ok(())
    }

    /// Power attenuation coefficient, 1/km.
    pub fn alpha_linear_per_km(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0
    }

    /// Span loss in dB, equal to the amplifier gain restoring launch power.
    pub fn span_loss_db(&self) -> f64 {
        self.alpha_db_per_km * self.span_length_km
    }

    /// Linear amplifier gain `G = 10^(alpha_db L / 10)`.
    pub fn gain_linear(&self) -> f64 {
        10f64.powf(self.span_loss_db() / 10.0)
    }

    /// Spontaneous-emission factor `n_sp = 10^(NF/10) / 2`.
    pub fn n_sp(&self) -> f64 {
        10f64.powf(self.noise_figure_db / 10.0) / 2.0
    }

    /// Carrier wavelength, m.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_freq_thz * 1e12)
    }

    /// Group-velocity dispersion `beta2 = -D lambda^2 / (2 pi c)`, ps^2/km.
    pub fn beta2_ps2_per_km(&self) -> f64 {
        let d_si = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        let lambda = self.wavelength_m();
        let beta2_si = -d_si * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT);
        beta2_si * 1e27 // s^2/m -> ps^2/km
    }

    /// Effective nonlinear length `(1 - exp(-alpha L)) / alpha`, km.
    pub fn effective_length_km(&self) -> f64 {
        let a = self.alpha_linear_per_km();
        if a == 0.0 {
            self.span_length_km
        } else {
            (-(-a * self.span_length_km).exp_m1()) / a
        }
    }

    /// ASE PSD per polarization at the amplifier output, W/Hz.
    pub fn ase_psd_w_per_hz(&self) -> f64 {
        PLANCK * self.carrier_freq_thz * 1e12 * self.n_sp() * (self.gain_linear() - 1.0)
    }
}

/// Per-polarization ASE variance in the matched-filter symbol domain, W:
/// `sigma2_ase = h nu n_sp (G - 1) R_s` with noise bandwidth equal to the
/// symbol rate.
pub fn ase_variance(link: &LinkParams) -> f64 {
    link.ase_psd_w_per_hz() * link.symbol_rate_gbd * 1e9
}

/// Calibrated NLIN model coefficients.
///
/// `sigma2_ase` is the dual-polarization total referred to the launch power
/// (see module docs); `chi` are the four modulation-independent coefficients
/// multiplying `P^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlinCoeffs {
    pub sigma2_ase: f64,
    pub chi: [f64; 4],
}

impl NlinCoeffs {
    /// Coefficients describing the link with the fiber nonlinearity turned
    /// off: pure dual-polarization ASE.
    pub fn ase_only(link: &LinkParams) -> Self {
        Self {
            sigma2_ase: 2.0 * ase_variance(link),
            chi: [0.0; 4],
        }
    }
}

/// Evaluate the NLIN variance formula at total launch power `p_w` (W).
pub fn nlin_variance(coeffs: &NlinCoeffs, p_w: f64, mu4: f64, mu6: f64) -> Result<f64> {
    if p_w < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "launch power must be nonnegative, got {p_w}"
        )));
    }
    if !mu4.is_finite() || !mu6.is_finite() {
        return Err(Error::NonFinite(format!("moments mu4={mu4}, mu6={mu6}")));
    }
    let [chi0, chi1, chi2, chi3] = coeffs.chi;
    let d4 = mu4 - 2.0;
    let d6 = mu6 - 9.0 * mu4 + 12.0;
    let variance = coeffs.sigma2_ase + p_w.powi(3) * (chi0 + chi1 * d4 + chi2 * d6 + chi3 * d4 * d4);
    if variance < 0.0 {
        return Err(Error::UnphysicalVariance {
            variance,
            power_w: p_w,
        });
    }
    Ok(variance)
}

/// Per-polarization noise variance in normalized symbol units at total
/// launch power `p_w`: `nlin_variance / p_w`.
pub fn normalized_noise_variance(coeffs: &NlinCoeffs, p_w: f64, mu4: f64, mu6: f64) -> Result<f64> {
    if p_w <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "launch power must be positive to normalize, got {p_w}"
        )));
    }
    Ok(nlin_variance(coeffs, p_w, mu4, mu6)? / p_w)
}

/// Add i.i.d. circularly symmetric complex Gaussian noise of total variance
/// `sigma2_norm` to each symbol. Deterministic for a fixed seed.
pub fn channel_apply(tx: &[Complex64], sigma2_norm: f64, seed: u64) -> Result<Vec<Complex64>> {
    if sigma2_norm < 0.0 {
        return Err(Error::NegativeVariance(sigma2_norm));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (sigma2_norm / 2.0).sqrt();
    Ok(tx
        .iter()
        .map(|x| {
            let nre: f64 = StandardNormal.sample(&mut rng);
            let nim: f64 = StandardNormal.sample(&mut rng);
            x + Complex64::new(s * nre, s * nim)
        })
        .collect())
}

/// Log-domain unnormalized posterior scores `ln p_k - |y - s_k|^2 / sigma^2`.
pub(crate) fn posterior_scores(y: Complex64, c: &Constellation, sigma2_norm: f64) -> Vec<f64> {
    let inv = 1.0 / sigma2_norm;
    c.points()
        .iter()
        .zip(c.probs())
        .map(|(s, p)| p.ln() - (y - s).norm_sqr() * inv)
        .collect()
}

/// Log-sum-exp with the max subtracted.
pub(crate) fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = scores.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Bayes posterior `p(s_k | y)` over all constellation points, computed with
/// log-sum-exp stabilization. Sums to 1 within 1e-12.
pub fn posterior(y: Complex64, c: &Constellation, sigma2_norm: f64) -> Result<Vec<f64>> {
    if !(sigma2_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "posterior requires sigma2_norm > 0, got {sigma2_norm}"
        )));
    }
    let scores = posterior_scores(y, c, sigma2_norm);
    let lse = log_sum_exp(&scores);
    if lse == f64::NEG_INFINITY {
        return Err(Error::InvalidDistribution(
            "all posterior weights vanished".into(),
        ));
    }
    Ok(scores.iter().map(|v| (v - lse).exp()).collect())
}

/// One calibration observation: distribution moments, total launch power,
/// and the measured post-DSP variance referred to the launch power.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChiProbe {
    pub mu4: f64,
    pub mu6: f64,
    pub power_w: f64,
    pub variance_w: f64,
}

/// Result of a chi least-squares fit.
#[derive(Debug, Clone, Copy)]
pub struct ChiFit {
    pub coeffs: NlinCoeffs,
    pub r_squared: f64,
}

const REGRESSOR_NAMES: [&str; 4] = ["chi0", "chi1", "chi2", "chi3"];

fn regressor_row(mu4: f64, mu6: f64) -> [f64; 4] {
    let d4 = mu4 - 2.0;
    [1.0, d4, mu6 - 9.0 * mu4 + 12.0, d4 * d4]
}

/// Least-squares fit of `(variance - sigma2_ase) / P^3` against the four
/// NLIN regressors `{1, mu4-2, mu6-9mu4+12, (mu4-2)^2}`.
///
/// Requires probes spanning at least four affinely independent rows;
/// otherwise reports the unresolved coefficient direction.
pub fn fit_chi(probes: &[ChiProbe], sigma2_ase: f64) -> Result<ChiFit> {
    if probes.len() < 4 {
        return Err(Error::Underdetermined(format!(
            "need at least 4 probes, got {}",
            probes.len()
        )));
    }
    let rows = probes.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(rows, 4);
    let mut b = nalgebra::DVector::<f64>::zeros(rows);
    for (i, probe) in probes.iter().enumerate() {
        if !(probe.power_w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "probe power must be positive, got {}",
                probe.power_w
            )));
        }
        let row = regressor_row(probe.mu4, probe.mu6);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
        b[i] = (probe.variance_w - sigma2_ase) / probe.power_w.powi(3);
    }

    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * 1e-10 * rows as f64;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    if rank < 4 {
        // Name the least-resolved coefficient combination from the
        // right-singular vector of the smallest singular value.
        let v_t = svd.v_t.as_ref().expect("svd computed with vectors");
        let null_dir = v_t.row(3);
        let desc = null_dir
            .iter()
            .zip(REGRESSOR_NAMES)
            .filter(|(c, _)| c.abs() > 1e-6)
            .map(|(c, name)| format!("{c:+.3}*{name}"))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(Error::Underdetermined(format!(
            "regressor matrix rank {rank} < 4; unresolved direction: {desc}"
        )));
    }

    let coeffs_vec = svd
        .solve(&b, tol)
        .map_err(|e| Error::Underdetermined(e.to_string()))?;
    let chi = [coeffs_vec[0], coeffs_vec[1], coeffs_vec[2], coeffs_vec[3]];

    let fitted = &a * &coeffs_vec;
    let ss_res: f64 = (&b - &fitted).iter().map(|r| r * r).sum();
    let mean = b.iter().sum::<f64>() / rows as f64;
    let ss_tot: f64 = b.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON * rows as f64 {
        1.0
    } else {
        0.0
    };

    Ok(ChiFit {
        coeffs: NlinCoeffs { sigma2_ase, chi },
        r_squared,
    })
}

/// On-disk calibration format: `{"sigma2_ase": ..., "chi": [...], "r2": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub sigma2_ase: f64,
    pub chi: [f64; 4],
    pub r2: f64,
}

impl CalibrationFile {
    pub fn from_fit(fit: &ChiFit) -> Self {
        Self {
            sigma2_ase: fit.coeffs.sigma2_ase,
            chi: fit.coeffs.chi,
            r2: fit.r_squared,
        }
    }

    pub fn coeffs(&self) -> NlinCoeffs {
        NlinCoeffs {
            sigma2_ase: self.sigma2_ase,
            chi: self.chi,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
