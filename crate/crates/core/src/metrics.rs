//! Mutual-information estimators.
//!
//! Three routes with different trust levels: an exact AWGN quadrature
//! oracle, a Monte-Carlo posterior estimator matched to the Gaussian
//! surrogate, and a kernel-density mismatched-decoding estimator that makes
//! no channel assumption (a lower bound on MI in expectation). Dual-pol
//! results are reported per 4D symbol as the sum of the per-polarization
//! values.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::nlin::{log_sum_exp, posterior_scores};
use crate::quadrature::GaussHermite;

const LN_2: f64 = std::f64::consts::LN_2;

/// Entropy in bits of the Bayes posterior at `y`, plus the log-posterior of
/// one selected index, sharing a single stabilized pass.
fn posterior_entropy_bits(y: Complex64, c: &Constellation, sigma2: f64) -> f64 {
    let scores = posterior_scores(y, c, sigma2);
    let lse = log_sum_exp(&scores);
    let mut h = 0.0;
    for s in &scores {
        let post = (s - lse).exp();
        if post > 0.0 {
            h += post * (lse - s);
        }
    }
    h / LN_2
}

fn mi_quadrature(c: &Constellation, sigma2: f64, nodes: usize) -> f64 {
    let rule = GaussHermite::new(nodes);
    let sigma = sigma2.sqrt();
    // E over CN(0, sigma^2): each quadrature axis has std sigma/sqrt(2),
    // and the Gauss-Hermite substitution scales nodes by sqrt(2)*std = sigma.
    let inv_pi = 1.0 / std::f64::consts::PI;
    let per_point: Vec<f64> = c
        .points()
        .par_iter()
        .map(|s| {
            let mut expectation = 0.0;
            for (xa, wa) in rule.nodes().iter().zip(rule.weights()) {
                for (xb, wb) in rule.nodes().iter().zip(rule.weights()) {
                    let y = s + Complex64::new(sigma * xa, sigma * xb);
                    expectation += wa * wb * posterior_entropy_bits(y, c, sigma2);
                }
            }
            expectation * inv_pi
        })
        .collect();
    let cond_entropy: f64 = per_point
        .iter()
        .zip(c.probs())
        .map(|(h, p)| p * h)
        .sum();
    c.entropy_bits() - cond_entropy
}

/// Exact AWGN mutual information `I(X;Y) = H(P_S) - E_y[H(p(.|y))]` in
/// bits/2D, by 2D Gauss-Hermite quadrature around each constellation point.
///
/// Starts at 32 nodes per axis and escalates until two successive rules
/// agree within 1e-4 bits; errors if 128 nodes still have not converged.
pub fn mi_exact_awgn(c: &Constellation, sigma2_norm: f64) -> Result<f64> {
    if !(sigma2_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mi_exact_awgn needs sigma2 > 0, got {sigma2_norm}"
        )));
    }
    const LADDER: [usize; 5] = [32, 48, 64, 96, 128];
    let mut coarse = mi_quadrature(c, sigma2_norm, LADDER[0]);
    let mut worst = f64::INFINITY;
    for nodes in &LADDER[1..] {
        let fine = mi_quadrature(c, sigma2_norm, *nodes);
        worst = (coarse - fine).abs();
        if worst <= 1e-4 {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::QuadratureNotConverged(format!(
        "quadrature MI still moving by {worst:.2e} bits at {} nodes/axis",
        LADDER[LADDER.len() - 1]
    )))
}

/// Monte-Carlo posterior MI estimate.
#[derive(Debug, Clone, Copy)]
pub struct MonteCarloMi {
    /// `H(P_S) - mean(-log2 p(x_i | y_i))`, bits/2D.
    pub mi_bits: f64,
    /// Standard error of the cross-entropy mean, bits.
    pub stderr_bits: f64,
    /// Samples whose posterior at the sent symbol underflowed and was
    /// clamped at 1e-300.
    pub clamped: usize,
}

/// Estimate MI from matched tx/rx symbol pairs using the closed-form Bayes
/// posterior of the Gaussian surrogate channel.
pub fn mi_monte_carlo(
    tx_indices: &[usize],
    rx: &[Complex64],
    c: &Constellation,
    sigma2_norm: f64,
) -> Result<MonteCarloMi> {
    if tx_indices.len() != rx.len() || tx_indices.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need matching non-empty tx/rx, got {} and {}",
            tx_indices.len(),
            rx.len()
        )));
    }
    if !(sigma2_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mi_monte_carlo needs sigma2 > 0, got {sigma2_norm}"
        )));
    }
    let n = tx_indices.len();
    const CHUNK: usize = 4096;
    let partials: Vec<(f64, f64, usize)> = tx_indices
        .par_chunks(CHUNK)
        .zip(rx.par_chunks(CHUNK))
        .map(|(idx_c, rx_c)| {
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut clamped = 0;
            for (&k, y) in idx_c.iter().zip(rx_c) {
                let scores = posterior_scores(*y, c, sigma2_norm);
                let lse = log_sum_exp(&scores);
                let mut post = (scores[k] - lse).exp();
                if post < 1e-300 {
                    post = 1e-300;
                    clamped += 1;
                }
                let ce = -post.log2();
                sum += ce;
                sq += ce * ce;
            }
            (sum, sq, clamped)
        })
        .collect();
    let (sum, sq, clamped) = partials
        .iter()
        .fold((0.0, 0.0, 0usize), |acc, p| {
            (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2)
        });
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    Ok(MonteCarloMi {
        mi_bits: c.entropy_bits() - mean,
        stderr_bits: (var / n as f64).sqrt(),
        clamped,
    })
}

/// Kernel-density MI estimate.
#[derive(Debug, Clone, Copy)]
pub struct KdeMi {
    /// Mismatched-decoding estimate, bits/2D. A lower bound on the true MI
    /// in expectation.
    pub mi_bits: f64,
    /// Constellation points excluded for lack of received samples in a fit
    /// fold (priors renormalized over the rest).
    pub excluded_points: usize,
    /// Evaluation samples skipped because their class was excluded.
    pub skipped_samples: usize,
}

struct ClassKde {
    samples: Vec<Complex64>,
    /// `1 / (2 h^2)` for the isotropic Gaussian kernel.
    half_inv_h2: f64,
    /// `1 / (2 pi h^2 n_k)`, the kernel mixture normalization.
    norm: f64,
    prior: f64,
}

/// Fit per-class isotropic Gaussian kernel mixtures on `fit` samples with
/// the per-class Silverman bandwidth `h = sigma_hat * n_k^(-1/6)`.
fn fit_classes(
    fit_idx: &[usize],
    fit_rx: &[Complex64],
    c: &Constellation,
) -> (Vec<Option<ClassKde>>, usize) {
    let n_classes = c.len();
    let mut grouped: Vec<Vec<Complex64>> = vec![Vec::new(); n_classes];
    for (&k, y) in fit_idx.iter().zip(fit_rx) {
        grouped[k].push(*y);
    }
    let mut excluded = 0;
    let mut classes: Vec<Option<ClassKde>> = Vec::with_capacity(n_classes);
    for (k, samples) in grouped.into_iter().enumerate() {
        let nk = samples.len();
        if nk < 2 {
            excluded += 1;
            classes.push(None);
            continue;
        }
        let mean = samples.iter().sum::<Complex64>() / nk as f64;
        // Per-component sample standard deviation (isotropic).
        let var: f64 =
            samples.iter().map(|y| (y - mean).norm_sqr()).sum::<f64>() / (2.0 * nk as f64);
        let h = (var.sqrt() * (nk as f64).powf(-1.0 / 6.0)).max(1e-6);
        classes.push(Some(ClassKde {
            samples,
            half_inv_h2: 0.5 / (h * h),
            norm: 1.0 / (2.0 * std::f64::consts::PI * h * h * nk as f64),
            prior: c.probs()[k],
        }));
        let _ = k;
    }
    (classes, excluded)
}

/// Evaluate one fold: mean of `log2 q(y|x) / sum_k p_k q(y|s_k)` over the
/// evaluation half, with priors renormalized over the fitted classes.
fn kde_fold(
    fit_idx: &[usize],
    fit_rx: &[Complex64],
    eval_idx: &[usize],
    eval_rx: &[Complex64],
    c: &Constellation,
) -> (f64, usize, usize, usize) {
    let (classes, excluded) = fit_classes(fit_idx, fit_rx, c);
    let prior_total: f64 = classes
        .iter()
        .flatten()
        .map(|cls| cls.prior)
        .sum();

    const CHUNK: usize = 1024;
    let partials: Vec<(f64, usize, usize)> = eval_idx
        .par_chunks(CHUNK)
        .zip(eval_rx.par_chunks(CHUNK))
        .map(|(idx_c, rx_c)| {
            let mut sum = 0.0;
            let mut used = 0usize;
            let mut skipped = 0usize;
            for (&label, y) in idx_c.iter().zip(rx_c) {
                if classes[label].is_none() {
                    skipped += 1;
                    continue;
                }
                let mut q_sent = 0.0;
                let mut q_marginal = 0.0;
                for (k, cls) in classes.iter().enumerate() {
                    let Some(cls) = cls else { continue };
                    let mut kernel_sum = 0.0;
                    for ym in &cls.samples {
                        let arg = (y - ym).norm_sqr() * cls.half_inv_h2;
                        // Kernels beyond exp(-45) contribute < 3e-20.
                        if arg < 45.0 {
                            kernel_sum += (-arg).exp();
                        }
                    }
                    let q = kernel_sum * cls.norm;
                    q_marginal += (cls.prior / prior_total) * q;
                    if k == label {
                        q_sent = q;
                    }
                }
                let q_sent = q_sent.max(1e-300);
                let q_marginal = q_marginal.max(1e-300);
                sum += (q_sent / q_marginal).log2();
                used += 1;
            }
            (sum, used, skipped)
        })
        .collect();

    let (sum, used, skipped) = partials.iter().fold((0.0, 0, 0), |acc, p| {
        (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2)
    });
    (sum / used.max(1) as f64, used, skipped, excluded)
}

/// Kernel-density mismatched-decoding MI estimate in bits/2D.
///
/// Two-fold sample splitting: kernels fitted on one half are evaluated on
/// the other, and the two directions are averaged, so no sample scores its
/// own kernel. Requires at least 100 samples per constellation point on
/// average.
pub fn mi_kde(tx_indices: &[usize], rx: &[Complex64], c: &Constellation) -> Result<KdeMi> {
    if tx_indices.len() != rx.len() || tx_indices.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need matching non-empty tx/rx, got {} and {}",
            tx_indices.len(),
            rx.len()
        )));
    }
    let n = tx_indices.len();
    if n < 100 * c.len() {
        return Err(Error::InvalidParameter(format!(
            "mi_kde needs >= 100 samples per constellation point on average: \
             got {n} for {} points",
            c.len()
        )));
    }
    if let Some(&bad) = tx_indices.iter().find(|&&k| k >= c.len()) {
        return Err(Error::InvalidParameter(format!(
            "tx index {bad} out of range for {} points",
            c.len()
        )));
    }
    let half = n / 2;
    let (idx_a, idx_b) = tx_indices.split_at(half);
    let (rx_a, rx_b) = rx.split_at(half);

    let (mi_ab, _, skip_ab, excl_a) = kde_fold(idx_a, rx_a, idx_b, rx_b, c);
    let (mi_ba, _, skip_ba, excl_b) = kde_fold(idx_b, rx_b, idx_a, rx_a, c);

    Ok(KdeMi {
        mi_bits: 0.5 * (mi_ab + mi_ba),
        excluded_points: excl_a.max(excl_b),
        skipped_samples: skip_ab + skip_ba,
    })
}

/// Dual-polarization rate: sum of the two per-polarization 2D values.
pub fn report_4d(mi_2d_x: f64, mi_2d_y: f64) -> f64 {
    mi_2d_x + mi_2d_y
}

/// `Es/N0` in dB to noise variance for a unit-power constellation.
pub fn snr_db_to_sigma2(es_n0_db: f64) -> f64 {
    10f64.powf(-es_n0_db / 10.0)
}
