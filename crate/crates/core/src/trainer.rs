//! End-to-end shaping trainer.
//!
//! The transmitter holds two trainable parameter sets: raw point locations
//! and probability logits. Each iteration draws a relaxed categorical batch
//! with the Gumbel-Softmax trick, forms soft symbols on the power-normalized
//! constellation, passes them through the NLIN Gaussian surrogate with
//! frozen noise draws, and scores the Bayes posteriors. The objective is the
//! mutual-information proxy `J = H(P_S) - CE` in bits per 2D symbol.
//!
//! Gradients are hand-derived reverse mode over the whole graph, including
//! the paths through the normalization scalar and the moment-dependent
//! channel variance, and verified against central finite differences in the
//! test suite. Batch math is chunk-parallel with a fixed reduction order so
//! results are bitwise reproducible for a fixed seed.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::nlin::{normalized_noise_variance, NlinCoeffs};

/// Rows per parallel work unit. Fixed so the reduction order (and therefore
/// the floating-point result) does not depend on the thread count.
const CHUNK_ROWS: usize = 64;

/// Training hyperparameters. The temperature schedule is
/// `tau_t = max(tau_min, tau0 * exp(-tau_decay * t))`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: u64,
    pub tau0: f64,
    pub tau_min: f64,
    pub tau_decay: f64,
    pub seed: u64,
    /// Total dual-polarization launch power for this run, W.
    pub power_w: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4096,
            learning_rate: 5e-3,
            iterations: 20_000,
            tau0: 10.0,
            tau_min: 1.0,
            tau_decay: 5e-4,
            seed: 1,
            power_w: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(self.tau_min > 0.0) || !(self.tau0 > 0.0) {
            return Err(Error::InvalidParameter(
                "temperatures must be positive".into(),
            ));
        }
        if !(self.power_w > 0.0) {
            return Err(Error::InvalidParameter("power_w must be positive".into()));
        }
        Ok(())
    }
}

/// Adam accumulator over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update descending `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Trainable transmitter state: raw (pre-normalization) point locations and
/// probability logits, plus the optimizer moments.
#[derive(Debug, Clone)]
pub struct TrainState {
    raw_points: Vec<Complex64>,
    logits: Vec<f64>,
    adam: Adam,
    pub temperature: f64,
}

impl TrainState {
    /// Start from an existing constellation: its points become the raw
    /// locations and its probabilities seed the logits.
    pub fn from_constellation(init: &Constellation, tau0: f64) -> Self {
        let n = init.len();
        let logits: Vec<f64> = init
            .probs()
            .iter()
            .map(|p| p.max(1e-12).ln())
            .collect();
        let mean = logits.iter().sum::<f64>() / n as f64;
        Self {
            raw_points: init.points().to_vec(),
            logits: logits.iter().map(|l| l - mean).collect(),
            adam: Adam::new(3 * n),
            temperature: tau0,
        }
    }

    pub fn len(&self) -> usize {
        self.raw_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_points.is_empty()
    }

    pub fn raw_points(&self) -> &[Complex64] {
        &self.raw_points
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn optimizer_step(&self) -> u64 {
        self.adam.step
    }

    /// Current probabilities, `softmax(logits)`.
    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// Effective constellation: raw points power-normalized under the
    /// current probabilities. Satisfies the unit-power constraint exactly.
    pub fn constellation(&self) -> Result<Constellation> {
        crate::constellation::normalize_power(self.raw_points.clone(), self.probs())
    }

    /// Apply one Adam update using gradients of `-J`.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) {
        let n = self.len();
        let mut params = Vec::with_capacity(3 * n);
        params.extend(self.raw_points.iter().map(|s| s.re));
        params.extend(self.raw_points.iter().map(|s| s.im));
        params.extend(self.logits.iter().copied());
        let mut flat = Vec::with_capacity(3 * n);
        flat.extend(grads.points.iter().map(|g| g.re));
        flat.extend(grads.points.iter().map(|g| g.im));
        flat.extend(grads.logits.iter().copied());
        self.adam.step(&mut params, &flat, lr);
        for k in 0..n {
            self.raw_points[k] = Complex64::new(params[k], params[n + k]);
        }
        self.logits.copy_from_slice(&params[2 * n..]);
    }
}

/// Gradients of the loss `-J` with respect to the trainable parameters.
/// Point gradients pack `(d/d Re, d/d Im)` as a complex number.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub points: Vec<Complex64>,
    pub logits: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + logits
            .iter()
            .map(|l| (l - max).exp())
            .sum::<f64>()
            .ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Draw a batch of relaxed categorical rows: each row is
/// `softmax((logits + g) / tau)` with `g` i.i.d. standard Gumbel.
/// Rows sum to 1 within 1e-12; deterministic for a fixed seed.
pub fn gumbel_softmax_sample(
    logits: &[f64],
    tau: f64,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let n = logits.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; batch_size * n];
    let mut scores = vec![0.0; n];
    for row in out.chunks_mut(n) {
        for (s, l) in scores.iter_mut().zip(logits) {
            let mut u: f64 = rng.random();
            // random() yields [0, 1); reject the endpoints so both logs
            // stay finite.
            while u <= 0.0 {
                u = rng.random();
            }
            let gumbel = -(-u.ln()).ln();
            *s = (l + gumbel) / tau;
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (dst, s) in row.iter_mut().zip(&scores) {
            *dst = (s - max).exp();
            sum += *dst;
        }
        for dst in row.iter_mut() {
            *dst /= sum;
        }
    }
    Ok(out)
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    n: usize,
    batch: usize,
    power_w: f64,
    chi: [f64; 4],
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    r_raw: Vec<f64>,
    scale: f64,
    points: Vec<Complex64>,
    m4_raw: f64,
    m6_raw: f64,
    pub mu4: f64,
    pub mu6: f64,
    pub sigma2_norm: f64,
    tau: f64,
    assignments: Vec<f64>,
    noise: Vec<Complex64>,
    received: Vec<Complex64>,
    posteriors: Vec<f64>,
    log_posteriors: Vec<f64>,
    pub entropy_bits: f64,
    pub objective_bits: f64,
}

/// Run the differentiable transmitter-channel-receiver chain on a batch of
/// soft assignment rows and return the objective in bits/2D with the cache
/// for [`backward`].
pub fn forward_objective(
    state: &TrainState,
    coeffs: &NlinCoeffs,
    power_w: f64,
    batch: Vec<f64>,
    tau: f64,
    noise_seed: u64,
) -> Result<(f64, ForwardCache)> {
    let n = state.len();
    assert!(
        batch.len() % n == 0 && !batch.is_empty(),
        "batch must hold whole rows of width {n}"
    );
    let rows = batch.len() / n;

    let probs = softmax(&state.logits);
    let log_probs = log_softmax(&state.logits);

    let r_raw: Vec<f64> = state.raw_points.iter().map(|s| s.norm_sqr()).collect();
    let raw_power: f64 = probs.iter().zip(&r_raw).map(|(p, r)| p * r).sum();
    if !(raw_power > 0.0) || !raw_power.is_finite() {
        return Err(Error::DegenerateConstellation(format!(
            "raw constellation power {raw_power} cannot be normalized"
        )));
    }
    let scale = 1.0 / raw_power.sqrt();
    let points: Vec<Complex64> = state.raw_points.iter().map(|s| s * scale).collect();

    // Distribution moments of the normalized constellation. Unit power by
    // construction, so no denominators.
    let m4_raw: f64 = probs.iter().zip(&r_raw).map(|(p, r)| p * r * r).sum();
    let m6_raw: f64 = probs.iter().zip(&r_raw).map(|(p, r)| p * r * r * r).sum();
    let c2 = scale * scale;
    let mu4 = c2 * c2 * m4_raw;
    let mu6 = c2 * c2 * c2 * m6_raw;

    let sigma2 = normalized_noise_variance(coeffs, power_w, mu4, mu6)?;
    if !(sigma2 > 0.0) {
        return Err(Error::UnphysicalVariance {
            variance: sigma2,
            power_w,
        });
    }
    let sigma = sigma2.sqrt();

    // Frozen unit-variance noise draws (sequential for reproducibility).
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise: Vec<Complex64> = (0..rows)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect();

    let mut received = vec![Complex64::new(0.0, 0.0); rows];
    let mut posteriors = vec![0.0; rows * n];
    let mut log_posteriors = vec![0.0; rows * n];

    let inv_sigma2 = 1.0 / sigma2;
    let ce_partials: Vec<f64> = batch
        .par_chunks(CHUNK_ROWS * n)
        .zip(noise.par_chunks(CHUNK_ROWS))
        .zip(received.par_chunks_mut(CHUNK_ROWS))
        .zip(posteriors.par_chunks_mut(CHUNK_ROWS * n))
        .zip(log_posteriors.par_chunks_mut(CHUNK_ROWS * n))
        .map(|((((t_c, eps_c), y_c), post_c), lnpost_c)| {
            let mut ce_sum = 0.0;
            for (i, eps) in eps_c.iter().enumerate() {
                let t_row = &t_c[i * n..(i + 1) * n];
                let mut x = Complex64::new(0.0, 0.0);
                for (t, s) in t_row.iter().zip(&points) {
                    x += t * s;
                }
                let y = x + sigma * eps;
                y_c[i] = y;

                let lnpost_row = &mut lnpost_c[i * n..(i + 1) * n];
                let mut max = f64::NEG_INFINITY;
                for (dst, (s, lp)) in lnpost_row.iter_mut().zip(points.iter().zip(&log_probs)) {
                    let score = lp - (y - s).norm_sqr() * inv_sigma2;
                    *dst = score;
                    if score > max {
                        max = score;
                    }
                }
                let post_row = &mut post_c[i * n..(i + 1) * n];
                let mut z = 0.0;
                for (p, score) in post_row.iter_mut().zip(lnpost_row.iter()) {
                    *p = (score - max).exp();
                    z += *p;
                }
                let lse = max + z.ln();
                let inv_z = 1.0 / z;
                let mut ce_i = 0.0;
                for k in 0..n {
                    lnpost_row[k] -= lse;
                    post_row[k] *= inv_z;
                    ce_i -= t_row[k] * lnpost_row[k];
                }
                ce_sum += ce_i;
            }
            ce_sum
        })
        .collect();

    let ce_nats: f64 = ce_partials.iter().sum::<f64>() / rows as f64;
    let entropy_nats: f64 = probs
        .iter()
        .zip(&log_probs)
        .map(|(p, lp)| if *p > 0.0 { -p * lp } else { 0.0 })
        .sum();
    let j_nats = entropy_nats - ce_nats;
    let j_bits = j_nats / std::f64::consts::LN_2;
    if !j_bits.is_finite() {
        return Err(Error::NonFinite(format!(
            "objective {j_bits} bits (H={entropy_nats} nats, CE={ce_nats} nats); \
             probabilities may have collapsed"
        )));
    }

    let cache = ForwardCache {
        n,
        batch: rows,
        power_w,
        chi: coeffs.chi,
        probs,
        log_probs,
        r_raw,
        scale,
        points,
        m4_raw,
        m6_raw,
        mu4,
        mu6,
        sigma2_norm: sigma2,
        tau,
        assignments: batch,
        noise,
        received,
        posteriors,
        log_posteriors,
        entropy_bits: entropy_nats / std::f64::consts::LN_2,
        objective_bits: j_bits,
    };
    Ok((j_bits, cache))
}

struct BatchPartial {
    // Softmax-space adjoint `u_j = p_j * d L / d p_j`, accumulated directly
    // to avoid dividing by small probabilities.
    u: Vec<f64>,
    g_points: Vec<Complex64>,
    g_logits: Vec<f64>,
    g_sigma2: f64,
    g_sigma: f64,
}

impl BatchPartial {
    fn zero(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            g_points: vec![Complex64::new(0.0, 0.0); n],
            g_logits: vec![0.0; n],
            g_sigma2: 0.0,
            g_sigma: 0.0,
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += b;
        }
        for (a, b) in self.g_points.iter_mut().zip(&other.g_points) {
            *a += b;
        }
        for (a, b) in self.g_logits.iter_mut().zip(&other.g_logits) {
            *a += b;
        }
        self.g_sigma2 += other.g_sigma2;
        self.g_sigma += other.g_sigma;
    }
}

/// Reverse-mode gradients of `-J` for all trainable parameters.
pub fn backward(state: &TrainState, cache: &ForwardCache) -> Gradients {
    let n = cache.n;
    let rows = cache.batch;
    let beta = 1.0 / rows as f64;
    // The loss is measured in nats here; converting J to bits only rescales
    // by 1/ln 2, applied at the end.
    let sigma2 = cache.sigma2_norm;
    let sigma = sigma2.sqrt();
    let inv_sigma2 = 1.0 / sigma2;
    let points = &cache.points;

    let partials: Vec<BatchPartial> = cache
        .assignments
        .par_chunks(CHUNK_ROWS * n)
        .zip(cache.noise.par_chunks(CHUNK_ROWS))
        .zip(cache.received.par_chunks(CHUNK_ROWS))
        .zip(cache.posteriors.par_chunks(CHUNK_ROWS * n))
        .zip(cache.log_posteriors.par_chunks(CHUNK_ROWS * n))
        .map(|((((t_c, eps_c), y_c), post_c), lnpost_c)| {
            let mut acc = BatchPartial::zero(n);
            let mut g_t = vec![0.0; n];
            for (i, (eps, y)) in eps_c.iter().zip(y_c).enumerate() {
                let t_row = &t_c[i * n..(i + 1) * n];
                let post_row = &post_c[i * n..(i + 1) * n];
                let lnpost_row = &lnpost_c[i * n..(i + 1) * n];

                // Pass 1: adjoints of the posterior scores
                // log w_ij = ln p_j - |y - s_j|^2 / sigma^2.
                let mut g_y = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let e = post_row[j] - t_row[j];
                    let be = beta * e;
                    acc.u[j] += be;
                    let diff = y - points[j];
                    let d = diff.norm_sqr();
                    acc.g_sigma2 += be * d * inv_sigma2 * inv_sigma2;
                    let gd = -be * inv_sigma2;
                    let two_gd_diff = 2.0 * gd * diff;
                    g_y += two_gd_diff;
                    acc.g_points[j] -= two_gd_diff;
                    // Direct dependence of the cross entropy on the soft
                    // assignment weights.
                    g_t[j] = -beta * lnpost_row[j];
                }

                // y = x + sigma * eps.
                acc.g_sigma += g_y.re * eps.re + g_y.im * eps.im;

                // x = sum_k t_k s_k.
                let mut dot = 0.0;
                for j in 0..n {
                    g_t[j] += g_y.re * points[j].re + g_y.im * points[j].im;
                    acc.g_points[j] += t_row[j] * g_y;
                    dot += g_t[j] * t_row[j];
                }

                // Gumbel-Softmax chain: t = softmax((logits + g)/tau).
                let inv_tau = 1.0 / cache.tau;
                for j in 0..n {
                    acc.g_logits[j] += inv_tau * t_row[j] * (g_t[j] - dot);
                }
            }
            acc
        })
        .collect();

    let mut acc = BatchPartial::zero(n);
    for p in &partials {
        acc.merge(p);
    }

    let BatchPartial {
        mut u,
        g_points,
        g_logits,
        mut g_sigma2,
        g_sigma,
    } = acc;

    // sigma = sqrt(sigma2).
    g_sigma2 += g_sigma / (2.0 * sigma);

    // Entropy term of the loss, -H = sum_k p_k ln p_k:
    // dL/dp_k = ln p_k + 1, folded into u-space.
    for k in 0..n {
        if cache.probs[k] > 0.0 {
            u[k] += cache.probs[k] * (cache.log_probs[k] + 1.0);
        }
    }

    // Channel variance: sigma2 = (sigma2_ase + P^3 g(mu4, mu6)) / P.
    let [_, chi1, chi2, chi3] = cache.chi;
    let p2 = cache.power_w * cache.power_w;
    let g_mu4 = g_sigma2 * p2 * (chi1 - 9.0 * chi2 + 2.0 * chi3 * (cache.mu4 - 2.0));
    let g_mu6 = g_sigma2 * p2 * chi2;

    // mu4 = c^4 M4raw, mu6 = c^6 M6raw.
    let c = cache.scale;
    let (c2, c3) = (c * c, c * c * c);
    let (c4, c5, c6) = (c2 * c2, c2 * c3, c3 * c3);
    let mut g_scale = g_mu4 * 4.0 * c3 * cache.m4_raw + g_mu6 * 6.0 * c5 * cache.m6_raw;
    let g_m4 = g_mu4 * c4;
    let g_m6 = g_mu6 * c6;
    let mut g_r = vec![0.0; n];
    for k in 0..n {
        let r = cache.r_raw[k];
        u[k] += cache.probs[k] * (g_m4 * r * r + g_m6 * r * r * r);
        g_r[k] += cache.probs[k] * (g_m4 * 2.0 * r + g_m6 * 3.0 * r * r);
    }

    // Normalized points s_k = c * raw_k.
    let mut grad_points = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        grad_points[k] += c * g_points[k];
        g_scale += g_points[k].re * state.raw_points[k].re
            + g_points[k].im * state.raw_points[k].im;
    }

    // c = raw_power^{-1/2}.
    let g_raw_power = -0.5 * g_scale * c3;
    for k in 0..n {
        u[k] += cache.probs[k] * g_raw_power * cache.r_raw[k];
        g_r[k] += g_raw_power * cache.probs[k];
    }

    // r_k = |raw_k|^2.
    for k in 0..n {
        grad_points[k] += 2.0 * g_r[k] * state.raw_points[k];
    }

    // Softmax closure: grad_logits_j = u_j - p_j * sum(u).
    let u_sum: f64 = u.iter().sum();
    let mut grad_logits = g_logits;
    for j in 0..n {
        grad_logits[j] += u[j] - cache.probs[j] * u_sum;
    }

    // The objective is reported in bits; the cached graph is in nats.
    let to_bits = 1.0 / std::f64::consts::LN_2;
    for g in grad_points.iter_mut() {
        *g *= to_bits;
    }
    for g in grad_logits.iter_mut() {
        *g *= to_bits;
    }

    Gradients {
        points: grad_points,
        logits: grad_logits,
    }
}

/// One recorded training step.
#[derive(Debug, Clone, Copy)]
pub struct HistoryRow {
    pub step: u64,
    pub objective_bits: f64,
    pub entropy_bits: f64,
    pub mu4: f64,
    pub mu6: f64,
    pub temperature: f64,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub constellation: Constellation,
    pub history: Vec<HistoryRow>,
    pub best_objective_bits: f64,
    pub diverged: bool,
}

/// SplitMix64-style stream derivation so each iteration gets independent
/// Gumbel and noise seeds from one master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Smoothing factor for the objective trace used to pick the returned
/// constellation.
const EMA_ALPHA: f64 = 0.02;

/// Full training loop: sample, forward, backward, Adam, with the
/// exponential temperature schedule. Returns the constellation snapshot
/// with the best smoothed objective. On divergence the history collected
/// so far is returned with `diverged` set.
pub fn train(
    config: &TrainConfig,
    coeffs: &NlinCoeffs,
    init: &Constellation,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut state = TrainState::from_constellation(init, config.tau0);
    let mut history = Vec::with_capacity(config.iterations as usize);
    let mut best = init.normalize_power()?;
    let mut best_ema = f64::NEG_INFINITY;
    let mut ema = f64::NAN;
    let mut diverged = false;

    for step in 0..config.iterations {
        let tau = (config.tau0 * (-config.tau_decay * step as f64).exp()).max(config.tau_min);
        state.temperature = tau;
        let gumbel_seed = derive_seed(config.seed, 2 * step);
        let noise_seed = derive_seed(config.seed, 2 * step + 1);

        let batch = gumbel_softmax_sample(&state.logits, tau, config.batch_size, gumbel_seed)?;
        let (j_bits, cache) = match forward_objective(
            &state,
            coeffs,
            config.power_w,
            batch,
            tau,
            noise_seed,
        ) {
            Ok(ok) => ok,
            Err(Error::NonFinite(_)) | Err(Error::DegenerateConstellation(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };

        history.push(HistoryRow {
            step,
            objective_bits: j_bits,
            entropy_bits: cache.entropy_bits,
            mu4: cache.mu4,
            mu6: cache.mu6,
            temperature: tau,
        });

        ema = if ema.is_nan() {
            j_bits
        } else {
            EMA_ALPHA * j_bits + (1.0 - EMA_ALPHA) * ema
        };
        if ema > best_ema {
            best_ema = ema;
            best = state.constellation()?;
        }

        let grads = backward(&state, &cache);
        state.adam_step(&grads, config.learning_rate);
    }

    Ok(TrainOutcome {
        constellation: best,
        history,
        best_objective_bits: best_ema,
        diverged,
    })
}
