//! Receiver chain for the simulation-only evaluator: chromatic dispersion
//! compensation, RRC matched filtering with symbol-rate downsampling,
//! least-squares phase/scale alignment and effective SNR.
//!
//! Timing and transmitter state are known by construction, so there is no
//! blind recovery. The mean nonlinear phase rotation is absorbed by the
//! alignment scalar.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nlin::LinkParams;
use crate::ssfm::{bin_freq_thz, raised_cosine, FftPair, FieldGrid};

/// Remove the accumulated span dispersion: multiply the spectrum by
/// `exp(-i beta2/2 omega^2 L)`, the exact inverse of the linear phase.
pub fn cd_compensate(field: &FieldGrid, link: &LinkParams) -> FieldGrid {
    let n = field.n_samples();
    let fft = FftPair::new(n);
    let beta2 = link.beta2_ps2_per_km();
    let length = link.span_length_km;
    let op: Vec<Complex64> = (0..n)
        .map(|m| {
            let omega = 2.0 * std::f64::consts::PI * bin_freq_thz(m, n, field.sample_rate_ghz);
            Complex64::from_polar(1.0, -0.5 * beta2 * omega * omega * length)
        })
        .collect();
    let apply = |pol: &[Complex64]| {
        let mut buf = pol.to_vec();
        fft.forward(&mut buf);
        for (s, o) in buf.iter_mut().zip(&op) {
            *s *= o;
        }
        fft.inverse(&mut buf);
        buf
    };
    let (px, py) = rayon::join(|| apply(&field.pol_x), || apply(&field.pol_y));
    FieldGrid {
        pol_x: px,
        pol_y: py,
        sample_rate_ghz: field.sample_rate_ghz,
    }
}

/// RRC matched filter followed by sampling at the symbol instants.
/// Returns raw (unscaled) symbol estimates for both polarizations;
/// [`align`] recovers the transmit scale.
pub fn matched_filter_downsample(
    field: &FieldGrid,
    link: &LinkParams,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let ratio = field.sample_rate_ghz / link.symbol_rate_gbd;
    let sps = ratio.round() as usize;
    if sps < 1 || (ratio - sps as f64).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "sample rate {} GHz is not an integer multiple of the symbol rate {} GBd; \
             symbol timing would be unknown",
            field.sample_rate_ghz, link.symbol_rate_gbd
        )));
    }
    let n = field.n_samples();
    let fft = FftPair::new(n);
    let response: Vec<f64> = (0..n)
        .map(|m| {
            let f = bin_freq_thz(m, n, field.sample_rate_ghz) * 1e3;
            raised_cosine(f, link.symbol_rate_gbd, link.rolloff).sqrt()
        })
        .collect();
    let filter_and_sample = |pol: &[Complex64]| {
        let mut buf = pol.to_vec();
        fft.forward(&mut buf);
        for (s, r) in buf.iter_mut().zip(&response) {
            *s *= *r;
        }
        fft.inverse(&mut buf);
        buf.iter().step_by(sps).copied().collect::<Vec<_>>()
    };
    let (sx, sy) = rayon::join(
        || filter_and_sample(&field.pol_x),
        || filter_and_sample(&field.pol_y),
    );
    Ok((sx, sy))
}

/// Joint least-squares phase and scale: one complex scalar
/// `a = sum x_i conj(y_i) / sum |y_i|^2` applied to all received symbols.
pub fn align(rx: &[Complex64], tx: &[Complex64]) -> Result<Vec<Complex64>> {
    if rx.len() != tx.len() || rx.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "align needs equal non-empty sequences, got {} and {}",
            rx.len(),
            tx.len()
        )));
    }
    let energy: f64 = rx.iter().map(|y| y.norm_sqr()).sum();
    if energy <= 0.0 {
        return Err(Error::InvalidParameter(
            "received sequence has zero energy".into(),
        ));
    }
    let cross: Complex64 = tx.iter().zip(rx).map(|(x, y)| x * y.conj()).sum();
    let a = cross / energy;
    Ok(rx.iter().map(|y| a * y).collect())
}

/// The alignment scalar alone (for tests and diagnostics).
pub fn align_scalar(rx: &[Complex64], tx: &[Complex64]) -> Result<Complex64> {
    let energy: f64 = rx.iter().map(|y| y.norm_sqr()).sum();
    if rx.len() != tx.len() || rx.is_empty() || energy <= 0.0 {
        return Err(Error::InvalidParameter("degenerate align input".into()));
    }
    let cross: Complex64 = tx.iter().zip(rx).map(|(x, y)| x * y.conj()).sum();
    Ok(cross / energy)
}

/// Effective SNR in dB: `10 log10( sum |x|^2 / sum |y - x|^2 )`.
/// A zero error vector reports `+inf`.
pub fn effective_snr_db(aligned_rx: &[Complex64], tx: &[Complex64]) -> f64 {
    let signal: f64 = tx.iter().map(|x| x.norm_sqr()).sum();
    let error: f64 = aligned_rx
        .iter()
        .zip(tx)
        .map(|(y, x)| (y - x).norm_sqr())
        .sum();
    if error == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / error).log10()
    }
}

/// RMS error-vector magnitude as a fraction of RMS signal.
pub fn error_vector_magnitude(rx: &[Complex64], tx: &[Complex64]) -> f64 {
    let signal: f64 = tx.iter().map(|x| x.norm_sqr()).sum();
    let error: f64 = rx.iter().zip(tx).map(|(y, x)| (y - x).norm_sqr()).sum();
    (error / signal).sqrt()
}
