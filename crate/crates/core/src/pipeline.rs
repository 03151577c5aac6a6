//! End-to-end evaluation and calibration pipelines shared by the CLI and
//! the acceptance suite: sample two independent symbol streams, shape,
//! propagate through the split-step solver, run the receiver chain, and
//! hand the aligned symbols to the MI estimators.

use num_complex::Complex64;

use crate::constellation::{make_qam, normalize_power, Constellation};
use crate::error::{Error, Result};
use crate::metrics::{mi_kde, mi_monte_carlo, report_4d, MonteCarloMi};
use crate::nlin::{
    ase_variance, channel_apply, fit_chi, normalized_noise_variance, ChiFit, ChiProbe, LinkParams,
    NlinCoeffs,
};
use crate::quadrature::GaussHermite;
use crate::rxdsp::{align, cd_compensate, effective_snr_db, matched_filter_downsample};
use crate::ssfm::{rrc_modulate, ssfm_propagate, SsfmConfig};
use crate::trainer::derive_seed;

/// Sequence-level settings for one split-step evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalConfig {
    /// Symbols per polarization; together with `samples_per_symbol` the
    /// grid length must be a power of two.
    pub n_symbols: usize,
    /// Symbols discarded at each end before metrics, to suppress
    /// wrap-around artifacts of the periodic boundary.
    pub guard_symbols: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_symbols: 1 << 15,
            guard_symbols: 256,
        }
    }
}

/// Everything measured from one split-step run of a constellation.
#[derive(Debug, Clone, Copy)]
pub struct MssEvaluation {
    pub mi_kde_x_bits: f64,
    pub mi_kde_y_bits: f64,
    pub mi_bits_4d: f64,
    pub snr_x_db: f64,
    pub snr_y_db: f64,
    pub snr_eff_db: f64,
    /// Mean per-polarization error variance in normalized symbol units.
    pub error_variance_norm: f64,
    pub mu4: f64,
    pub mu6: f64,
    pub entropy_bits: f64,
    pub kde_excluded_points: usize,
}

struct ReceivedStreams {
    idx_x: Vec<usize>,
    idx_y: Vec<usize>,
    tx_x: Vec<Complex64>,
    tx_y: Vec<Complex64>,
    rx_x: Vec<Complex64>,
    rx_y: Vec<Complex64>,
}

/// Transmit two independent streams of `c` at `power_w`, propagate, run the
/// receiver chain, discard guards and align.
fn run_link(
    c: &Constellation,
    link: &LinkParams,
    ssfm_cfg: &SsfmConfig,
    eval_cfg: &EvalConfig,
    power_w: f64,
    seed: u64,
) -> Result<ReceivedStreams> {
    let n = eval_cfg.n_symbols;
    if n <= 2 * eval_cfg.guard_symbols {
        return Err(Error::InvalidParameter(format!(
            "{n} symbols cannot spare 2 x {} guard symbols",
            eval_cfg.guard_symbols
        )));
    }
    let idx_x = c.sample_sequence(n, derive_seed(seed, 1));
    let idx_y = c.sample_sequence(n, derive_seed(seed, 2));
    let tx_x = c.symbols_for(&idx_x);
    let tx_y = c.symbols_for(&idx_y);

    let field = rrc_modulate(&tx_x, &tx_y, link, power_w, ssfm_cfg)?;
    let propagated = ssfm_propagate(&field, link, ssfm_cfg, Some(derive_seed(seed, 3)))?;
    let compensated = cd_compensate(&propagated, link);
    let (raw_x, raw_y) = matched_filter_downsample(&compensated, link)?;

    let keep = eval_cfg.guard_symbols..n - eval_cfg.guard_symbols;
    let idx_x = idx_x[keep.clone()].to_vec();
    let idx_y = idx_y[keep.clone()].to_vec();
    let tx_x = tx_x[keep.clone()].to_vec();
    let tx_y = tx_y[keep.clone()].to_vec();
    let rx_x = align(&raw_x[keep.clone()], &tx_x)?;
    let rx_y = align(&raw_y[keep], &tx_y)?;

    Ok(ReceivedStreams {
        idx_x,
        idx_y,
        tx_x,
        tx_y,
        rx_x,
        rx_y,
    })
}

/// Full split-step evaluation: KDE MI per polarization (summed to bits/4D),
/// effective SNRs, moments and entropy.
pub fn evaluate_mss(
    c: &Constellation,
    link: &LinkParams,
    ssfm_cfg: &SsfmConfig,
    eval_cfg: &EvalConfig,
    power_w: f64,
    seed: u64,
) -> Result<MssEvaluation> {
    let streams = run_link(c, link, ssfm_cfg, eval_cfg, power_w, seed)?;
    let kde_x = mi_kde(&streams.idx_x, &streams.rx_x, c)?;
    let kde_y = mi_kde(&streams.idx_y, &streams.rx_y, c)?;
    let snr_x = effective_snr_db(&streams.rx_x, &streams.tx_x);
    let snr_y = effective_snr_db(&streams.rx_y, &streams.tx_y);
    let (mu4, mu6) = c.standardized_moments()?;

    let err_var = |rx: &[Complex64], tx: &[Complex64]| {
        rx.iter()
            .zip(tx)
            .map(|(y, x)| (y - x).norm_sqr())
            .sum::<f64>()
            / tx.len() as f64
    };
    let v_norm = 0.5
        * (err_var(&streams.rx_x, &streams.tx_x) + err_var(&streams.rx_y, &streams.tx_y));

    Ok(MssEvaluation {
        mi_kde_x_bits: kde_x.mi_bits,
        mi_kde_y_bits: kde_y.mi_bits,
        mi_bits_4d: report_4d(kde_x.mi_bits, kde_y.mi_bits),
        snr_x_db: snr_x,
        snr_y_db: snr_y,
        snr_eff_db: 0.5 * (snr_x + snr_y),
        error_variance_norm: v_norm,
        mu4,
        mu6,
        entropy_bits: c.entropy_bits(),
        kde_excluded_points: kde_x.excluded_points.max(kde_y.excluded_points),
    })
}

/// Post-DSP error variance referred to the launch power (the calibration
/// observable): mean per-pol normalized error variance times `power_w`.
pub fn measure_probe_variance(
    c: &Constellation,
    link: &LinkParams,
    ssfm_cfg: &SsfmConfig,
    eval_cfg: &EvalConfig,
    power_w: f64,
    seed: u64,
) -> Result<ChiProbe> {
    let streams = run_link(c, link, ssfm_cfg, eval_cfg, power_w, seed)?;
    let err_var = |rx: &[Complex64], tx: &[Complex64]| {
        rx.iter()
            .zip(tx)
            .map(|(y, x)| (y - x).norm_sqr())
            .sum::<f64>()
            / tx.len() as f64
    };
    let v_norm = 0.5
        * (err_var(&streams.rx_x, &streams.tx_x) + err_var(&streams.rx_y, &streams.tx_y));
    let (mu4, mu6) = c.standardized_moments()?;
    Ok(ChiProbe {
        mu4,
        mu6,
        power_w,
        variance_w: v_norm * power_w,
    })
}

/// 256-point probe with exactly Gaussian standardized moments: the product
/// grid of 16-node Gauss-Hermite rules carries `mu4 = 2`, `mu6 = 6` (the
/// rule integrates these polynomial moments exactly), giving the chi fit
/// its widest moment spread.
pub fn gaussian_like_probe() -> Result<Constellation> {
    let rule = GaussHermite::new(16);
    let mut points = Vec::with_capacity(256);
    let mut probs = Vec::with_capacity(256);
    let total: f64 = std::f64::consts::PI; // (sum w)^2 for Hermite weights
    for (xa, wa) in rule.nodes().iter().zip(rule.weights()) {
        for (xb, wb) in rule.nodes().iter().zip(rule.weights()) {
            points.push(Complex64::new(*xa, *xb));
            probs.push(wa * wb / total);
        }
    }
    // Rounding leaves the sum a few ulps from 1; rescale exactly.
    let sum: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    normalize_power(points, probs)
}

/// The calibration probe set: QPSK, 16QAM, 64QAM and the Gaussian-moment
/// 256-point grid.
pub fn calibration_probes() -> Result<Vec<(String, Constellation)>> {
    Ok(vec![
        ("qpsk".into(), make_qam(4)?),
        ("qam16".into(), make_qam(16)?),
        ("qam64".into(), make_qam(64)?),
        ("gaussian256".into(), gaussian_like_probe()?),
    ])
}

/// Run the probe grid through the split-step solver and fit the NLIN chi
/// coefficients. `sigma2_ase` is fixed to the dual-polarization analytic
/// value; only the chi vector is fitted.
pub fn calibrate_link(
    link: &LinkParams,
    ssfm_cfg: &SsfmConfig,
    eval_cfg: &EvalConfig,
    powers_dbm: &[f64],
    seed: u64,
) -> Result<(ChiFit, Vec<ChiProbe>)> {
    let probes_def = calibration_probes()?;
    let mut probes = Vec::with_capacity(probes_def.len() * powers_dbm.len());
    let jobs: Vec<(usize, usize)> = (0..probes_def.len())
        .flat_map(|i| (0..powers_dbm.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<ChiProbe>> = jobs
        .iter()
        .map(|(i, j)| {
            let power_w = dbm_to_watts(powers_dbm[*j]);
            measure_probe_variance(
                &probes_def[*i].1,
                link,
                ssfm_cfg,
                eval_cfg,
                power_w,
                derive_seed(seed, (*i * powers_dbm.len() + *j) as u64),
            )
        })
        .collect();
    for r in results {
        probes.push(r?);
    }
    let sigma2_ase = 2.0 * ase_variance(link);
    let fit = fit_chi(&probes, sigma2_ase)?;
    Ok((fit, probes))
}

/// Hard-sampled evaluation through the NLIN surrogate: two independent
/// polarization streams, Monte-Carlo posterior MI summed to bits/4D.
#[derive(Debug, Clone, Copy)]
pub struct NlinEvaluation {
    pub mi_x: MonteCarloMi,
    pub mi_y: MonteCarloMi,
    pub mi_bits_4d: f64,
    pub sigma2_norm: f64,
    pub snr_eff_db: f64,
    pub mu4: f64,
    pub mu6: f64,
    pub entropy_bits: f64,
}

pub fn evaluate_nlin(
    c: &Constellation,
    coeffs: &NlinCoeffs,
    power_w: f64,
    n_symbols: usize,
    seed: u64,
) -> Result<NlinEvaluation> {
    let (mu4, mu6) = c.standardized_moments()?;
    let sigma2 = normalized_noise_variance(coeffs, power_w, mu4, mu6)?;
    let mut results = Vec::with_capacity(2);
    for pol in 0..2u64 {
        let idx = c.sample_sequence(n_symbols, derive_seed(seed, 10 + pol));
        let tx = c.symbols_for(&idx);
        let rx = channel_apply(&tx, sigma2, derive_seed(seed, 20 + pol))?;
        results.push(mi_monte_carlo(&idx, &rx, c, sigma2)?);
    }
    let (mi_x, mi_y) = (results[0], results[1]);
    Ok(NlinEvaluation {
        mi_x,
        mi_y,
        mi_bits_4d: report_4d(mi_x.mi_bits, mi_y.mi_bits),
        sigma2_norm: sigma2,
        snr_eff_db: -10.0 * sigma2.log10(),
        mu4,
        mu6,
        entropy_bits: c.entropy_bits(),
    })
}

/// MB-family MI functional on the NLIN surrogate at fixed launch power:
/// the candidate's own moments set the channel variance.
pub fn nlin_mb_objective<'a>(
    coeffs: &'a NlinCoeffs,
    power_w: f64,
) -> impl Fn(&Constellation) -> Result<f64> + 'a {
    move |cand: &Constellation| {
        let (mu4, mu6) = cand.standardized_moments()?;
        let sigma2 = normalized_noise_variance(coeffs, power_w, mu4, mu6)?;
        crate::metrics::mi_exact_awgn(cand, sigma2)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssfm::StepMode;

    fn assert_close(a: f64, b: f64, tol: f64, msg: &str) {
        assert!(
            (a - b).abs() <= tol,
            "{msg}: expected {b}, got {a} (diff {:.3e})",
            (a - b).abs()
        );
    }

    #[test]
    fn gaussian_probe_has_exact_gaussian_moments() {
        let c = gaussian_like_probe().unwrap();
        assert_eq!(c.len(), 256);
        assert_close(c.power(), 1.0, 1e-12, "probe power");
        let (mu4, mu6) = c.standardized_moments().unwrap();
        assert_close(mu4, 2.0, 1e-9, "probe mu4");
        assert_close(mu6, 6.0, 1e-9, "probe mu6");
    }

    #[test]
    fn dbm_round_trip() {
        for dbm in [-3.0, 0.0, 7.0, 14.0] {
            assert_close(watts_to_dbm(dbm_to_watts(dbm)), dbm, 1e-12, "dbm");
        }
        assert_close(dbm_to_watts(0.0), 1e-3, 1e-18, "0 dBm = 1 mW");
    }

    #[test]
    fn mss_evaluation_is_deterministic() {
        let c = make_qam(4).unwrap();
        let link = LinkParams::single_span_ssmf();
        let ssfm_cfg = SsfmConfig {
            samples_per_symbol: 4,
            step: StepMode::Adaptive,
            max_nonlinear_phase_per_step: 3e-3,
        };
        let eval_cfg = EvalConfig {
            n_symbols: 1 << 11,
            guard_symbols: 128,
        };
        let p = dbm_to_watts(3.0);
        let a = evaluate_mss(&c, &link, &ssfm_cfg, &eval_cfg, p, 42).unwrap();
        let b = evaluate_mss(&c, &link, &ssfm_cfg, &eval_cfg, p, 42).unwrap();
        assert_eq!(a.mi_bits_4d, b.mi_bits_4d);
        assert_eq!(a.snr_eff_db, b.snr_eff_db);
        // Polarizations are statistically symmetric.
        assert_close(a.mi_kde_x_bits, a.mi_kde_y_bits, 0.05, "pol symmetry");
    }

    #[test]
    fn qpsk_low_power_mss_is_ase_limited() {
        // At low power the link is linear: effective SNR should be within
        // ~0.3 dB of the ASE-only prediction.
        let c = make_qam(4).unwrap();
        let link = LinkParams::single_span_ssmf();
        let ssfm_cfg = SsfmConfig {
            samples_per_symbol: 4,
            step: StepMode::Adaptive,
            max_nonlinear_phase_per_step: 3e-3,
        };
        let eval_cfg = EvalConfig {
            n_symbols: 1 << 11,
            guard_symbols: 128,
        };
        let p = dbm_to_watts(0.0);
        let out = evaluate_mss(&c, &link, &ssfm_cfg, &eval_cfg, p, 7).unwrap();
        let sigma2_norm = 2.0 * ase_variance(&link) / p;
        let predicted_snr = -10.0 * sigma2_norm.log10();
        assert_close(out.snr_eff_db, predicted_snr, 0.3, "ASE-limited SNR");
    }

    #[test]
    fn nlin_evaluation_matches_exact_mi() {
        let c = make_qam(16).unwrap();
        let coeffs = NlinCoeffs {
            sigma2_ase: 8.6e-5,
            chi: [1.5e-3, -2.0e-4, 4.0e-5, 6.0e-5],
        };
        let p = dbm_to_watts(4.0);
        let out = evaluate_nlin(&c, &coeffs, p, 100_000, 3).unwrap();
        let exact = crate::metrics::mi_exact_awgn(&c, out.sigma2_norm).unwrap();
        assert!(
            (out.mi_x.mi_bits - exact).abs() < 3.0 * out.mi_x.stderr_bits,
            "pol x MC {} vs exact {}",
            out.mi_x.mi_bits,
            exact
        );
        assert_close(out.mi_bits_4d, out.mi_x.mi_bits + out.mi_y.mi_bits, 1e-12, "4D sum");
    }
}
