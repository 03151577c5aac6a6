//! Constellation representation: point sets with occurrence probabilities,
//! power normalization, standardized moments, entropy, and the QAM /
//! Maxwell-Boltzmann baseline generators.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability sums when validating a distribution.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Default upper bound of the Maxwell-Boltzmann lambda search interval.
/// On a power-normalized 256QAM grid the entropy drops below 2 bits well
/// inside this range.
pub const MB_LAMBDA_MAX: f64 = 20.0;

/// A finite set of complex modulation symbols with occurrence probabilities.
///
/// Probabilities always form a valid distribution. Points are not forced to
/// unit mean power at construction; use [`Constellation::normalize_power`]
/// (or the generators, which normalize) to impose the average-power
/// constraint `sum_k p_k |s_k|^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    probs: Vec<f64>,
}

/// On-disk form: `{"points": [[re, im], ...], "probabilities": [...]}`.
#[derive(Serialize, Deserialize)]
struct ConstellationFile {
    points: Vec<[f64; 2]>,
    probabilities: Vec<f64>,
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {sum}, expected 1 within {PROB_SUM_TOL:e}"
        )));
    }
    Ok(())
}

impl Constellation {
    /// Build a constellation from raw points and probabilities.
    ///
    /// Validates the distribution and shape but does not touch the power.
    pub fn new(points: Vec<Complex64>, probs: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateConstellation(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} points but {} probabilities",
                points.len(),
                probs.len()
            )));
        }
        if points.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::DegenerateConstellation(
                "points must be finite".into(),
            ));
        }
        validate_probs(&probs)?;
        Ok(Self { points, probs })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mean power `sum_k p_k |s_k|^2`.
    pub fn power(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.probs)
            .map(|(s, p)| p * s.norm_sqr())
            .sum()
    }

    /// Scale all points by one positive scalar so the mean power becomes 1.
    /// Probabilities are unchanged.
    pub fn normalize_power(&self) -> Result<Self> {
        let pw = self.power();
        if pw <= 0.0 || !pw.is_finite() {
            return Err(Error::DegenerateConstellation(format!(
                "mean power {pw} cannot be normalized"
            )));
        }
        let scale = 1.0 / pw.sqrt();
        Ok(Self {
            points: self.points.iter().map(|s| s * scale).collect(),
            probs: self.probs.clone(),
        })
    }

    /// 4th- and 6th-order standardized moments of `|s|`:
    /// `mu4 = E|s|^4 / (E|s|^2)^2`, `mu6 = E|s|^6 / (E|s|^2)^3`.
    ///
    /// Scale-invariant, so non-normalized input is accepted.
    pub fn standardized_moments(&self) -> Result<(f64, f64)> {
        let mut m2 = 0.0;
        let mut m4 = 0.0;
        let mut m6 = 0.0;
        for (s, p) in self.points.iter().zip(&self.probs) {
            let r2 = s.norm_sqr();
            m2 += p * r2;
            m4 += p * r2 * r2;
            m6 += p * r2 * r2 * r2;
        }
        if m2 <= 0.0 {
            return Err(Error::DegenerateConstellation(
                "zero mean power has no standardized moments".into(),
            ));
        }
        Ok((m4 / (m2 * m2), m6 / (m2 * m2 * m2)))
    }

    /// Source entropy `H(P_S)` in bits.
    pub fn entropy_bits(&self) -> f64 {
        entropy_bits(&self.probs).expect("probs validated at construction")
    }

    /// Draw `n` i.i.d. symbol indices distributed as `probs`.
    /// Deterministic for a fixed seed.
    pub fn sample_sequence(&self, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Inverse-CDF sampling keeps the output independent of RNG
        // distribution internals.
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        // Guard against rounding leaving the last edge slightly below 1.
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                cdf.partition_point(|edge| *edge <= u)
            })
            .collect()
    }

    /// Map symbol indices to complex symbols.
    pub fn symbols_for(&self, indices: &[usize]) -> Vec<Complex64> {
        indices.iter().map(|&i| self.points[i]).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ConstellationFile {
            points: self.points.iter().map(|s| [s.re, s.im]).collect(),
            probabilities: self.probs.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConstellationFile = serde_json::from_str(text)?;
        Self::new(
            file.points
                .iter()
                .map(|[re, im]| Complex64::new(*re, *im))
                .collect(),
            file.probabilities,
        )
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Scale `points` by one positive scalar so `sum_k probs[k] |c s_k|^2 = 1`.
pub fn normalize_power(points: Vec<Complex64>, probs: Vec<f64>) -> Result<Constellation> {
    Constellation::new(points, probs)?.normalize_power()
}

/// Shannon entropy of a distribution in bits, with `0 log 0 := 0`.
pub fn entropy_bits(probs: &[f64]) -> Result<f64> {
    validate_probs(probs)?;
    Ok(probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum())
}

/// Square QAM grid `{+-1, +-3, ..., +-(sqrt(M)-1)}` per axis before
/// normalization. `m` must be a perfect-square power of 4.
pub fn qam_grid(m: usize) -> Result<Vec<Complex64>> {
    let side = (m as f64).sqrt().round() as usize;
    let valid = side * side == m && side >= 2 && side.is_power_of_two();
    if !valid {
        return Err(Error::UnsupportedQamOrder(m));
    }
    let mut points = Vec::with_capacity(m);
    for i in 0..side {
        for q in 0..side {
            let re = 2.0 * i as f64 - (side as f64 - 1.0);
            let im = 2.0 * q as f64 - (side as f64 - 1.0);
            points.push(Complex64::new(re, im));
        }
    }
    Ok(points)
}

/// Uniform square `M`-QAM, power-normalized.
pub fn make_qam(m: usize) -> Result<Constellation> {
    let points = qam_grid(m)?;
    let probs = vec![1.0 / m as f64; m];
    normalize_power(points, probs)
}

/// Maxwell-Boltzmann shaping `p_k ∝ exp(-lambda |s_k|^2)` on the given
/// (pre-normalization) grid, then power-normalized.
pub fn maxwell_boltzmann(points: &[Complex64], lambda: f64) -> Result<Constellation> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::NegativeLambda(lambda));
    }
    // Subtract the minimum exponent so large lambdas cannot underflow
    // every weight at once.
    let min_r2 = points
        .iter()
        .map(|s| s.norm_sqr())
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = points
        .iter()
        .map(|s| (-lambda * (s.norm_sqr() - min_r2)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    normalize_power(points.to_vec(), probs)
}

/// Find the lambda whose MB distribution on `points` has the requested
/// entropy, by bisection. Entropy is strictly decreasing in lambda.
pub fn mb_lambda_for_entropy(
    points: &[Complex64],
    target_bits: f64,
    lambda_max: f64,
) -> Result<(f64, Constellation)> {
    let h0 = maxwell_boltzmann(points, 0.0)?.entropy_bits();
    let h1 = maxwell_boltzmann(points, lambda_max)?.entropy_bits();
    if target_bits > h0 || target_bits < h1 {
        return Err(Error::InvalidParameter(format!(
            "target entropy {target_bits} bits outside attainable range [{h1}, {h0}]"
        )));
    }
    let (mut lo, mut hi) = (0.0, lambda_max);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if maxwell_boltzmann(points, mid)?.entropy_bits() > target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    Ok((lambda, maxwell_boltzmann(points, lambda)?))
}

/// Maximize a channel MI functional over the MB family on `points`.
///
/// Coarse 21-point scan over `[0, lambda_max]` to bracket the optimum,
/// then golden-section refinement to 1e-4 in lambda. The evaluator
/// receives the shaped, power-normalized constellation.
pub fn optimize_mb_lambda<F>(
    points: &[Complex64],
    lambda_max: f64,
    mut channel_eval: F,
) -> Result<(f64, Constellation)>
where
    F: FnMut(&Constellation) -> Result<f64>,
{
    let mut eval_at = |lambda: f64| -> Result<f64> {
        let c = maxwell_boltzmann(points, lambda)?;
        let mi = channel_eval(&c)?;
        if !mi.is_finite() {
            return Err(Error::NonFinite(format!(
                "channel evaluator returned {mi} at lambda={lambda}"
            )));
        }
        Ok(mi)
    };

    const GRID: usize = 21;
    let step = lambda_max / (GRID - 1) as f64;
    let mut best_idx = 0;
    let mut best_mi = f64::NEG_INFINITY;
    for i in 0..GRID {
        let mi = eval_at(i as f64 * step)?;
        if mi > best_mi {
            best_mi = mi;
            best_idx = i;
        }
    }
    let mut lo = step * best_idx.saturating_sub(1) as f64;
    let mut hi = step * (best_idx + 1).min(GRID - 1) as f64;

    // Golden-section refinement inside the bracketing cell.
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval_at(x1)?;
    let mut f2 = eval_at(x2)?;
    while hi - lo > 1e-4 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval_at(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval_at(x2)?;
        }
    }
    let refined = 0.5 * (lo + hi);
    let refined_mi = eval_at(refined)?;
    // The coarse-scan winner stands if refinement did not improve on it.
    let lambda = if refined_mi >= best_mi {
        refined
    } else {
        step * best_idx as f64
    };
    Ok((lambda, maxwell_boltzmann(points, lambda)?))
}

/// Uniformly random constellation for property tests: points in the unit
/// square, random positive probabilities.
pub fn random_constellation(n: usize, seed: u64) -> Constellation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|w| w / total).collect();
    normalize_power(points, probs).expect("random grid is non-degenerate")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64, msg: &str) {
        assert!(
            (a - b).abs() <= tol,
            "{msg}: expected {b}, got {a} (diff {:.3e})",
            (a - b).abs()
        );
    }

    fn qpsk_unit() -> Vec<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        vec![
            Complex64::new(s, s),
            Complex64::new(s, -s),
            Complex64::new(-s, s),
            Complex64::new(-s, -s),
        ]
    }

    #[test]
    fn normalize_leaves_unit_power_qpsk_unchanged() {
        let c = normalize_power(qpsk_unit(), vec![0.25; 4]).unwrap();
        for (out, orig) in c.points().iter().zip(qpsk_unit()) {
            assert_close(out.re, orig.re, 1e-15, "re");
            assert_close(out.im, orig.im, 1e-15, "im");
        }
    }

    #[test]
    fn normalize_scales_power_two_qpsk_by_inv_sqrt2() {
        let points: Vec<Complex64> = qpsk_unit()
            .iter()
            .map(|s| s * std::f64::consts::SQRT_2)
            .collect();
        let c = normalize_power(points, vec![0.25; 4]).unwrap();
        for (out, unit) in c.points().iter().zip(qpsk_unit()) {
            assert_close(out.re, unit.re, 1e-15, "scaled re");
            assert_close(out.im, unit.im, 1e-15, "scaled im");
        }
    }

    #[test]
    fn normalize_mb_16qam_gives_exact_unit_power() {
        // Oracle: weighted power computed directly on the output.
        let grid = qam_grid(16).unwrap();
        let c = maxwell_boltzmann(&grid, 0.1).unwrap();
        assert_close(c.power(), 1.0, 1e-12, "MB 16QAM power");
    }

    #[test]
    fn normalize_rejects_all_zero_points() {
        let points = vec![Complex64::new(0.0, 0.0); 4];
        let err = normalize_power(points, vec![0.25; 4]).unwrap_err();
        assert!(matches!(err, Error::DegenerateConstellation(_)));
    }

    #[test]
    fn invalid_distribution_is_rejected() {
        let err = normalize_power(qpsk_unit(), vec![0.5, 0.5, 0.5, -0.5]).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution(_)));
        let err = normalize_power(qpsk_unit(), vec![0.3, 0.3, 0.3, 0.3]).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution(_)));
    }

    #[test]
    fn qpsk_moments_are_one() {
        let c = make_qam(4).unwrap();
        let (mu4, mu6) = c.standardized_moments().unwrap();
        assert_close(mu4, 1.0, 1e-14, "QPSK mu4");
        assert_close(mu6, 1.0, 1e-14, "QPSK mu6");
    }

    #[test]
    fn uniform_16qam_moments_match_exact_rationals() {
        // Oracle: exact sums on the {+-1,+-3} grid.
        // E|s|^2 = 10, E|s|^4 = 132, E|s|^6 = 1960
        // => mu4 = 132/100, mu6 = 1960/1000.
        let c = make_qam(16).unwrap();
        let (mu4, mu6) = c.standardized_moments().unwrap();
        assert_close(mu4, 1.32, 1e-12, "16QAM mu4");
        assert_close(mu6, 1.96, 1e-12, "16QAM mu6");
    }

    #[test]
    fn gaussian_cloud_moments_near_2_and_6() {
        // Monte-Carlo oracle: 1e6 equiprobable samples of a circular
        // complex Gaussian.
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let points: Vec<Complex64> = (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let c = Constellation::new(points, vec![1.0 / n as f64; n]).unwrap();
        let (mu4, mu6) = c.standardized_moments().unwrap();
        // mu4 has std ~ sqrt(Var(|z|^4))/sqrt(n)/E^2 ~ 4.9e-3; allow 5 sigma.
        assert_close(mu4, 2.0, 0.025, "Gaussian mu4");
        assert_close(mu6, 6.0, 0.35, "Gaussian mu6");
    }

    #[test]
    fn moments_scale_invariant() {
        let c = random_constellation(16, 3);
        let scaled = Constellation::new(
            c.points().iter().map(|s| s * 3.7).collect(),
            c.probs().to_vec(),
        )
        .unwrap();
        let (a4, a6) = c.standardized_moments().unwrap();
        let (b4, b6) = scaled.standardized_moments().unwrap();
        assert_close(a4, b4, 1e-12, "mu4 scale invariance");
        assert_close(a6, b6, 1e-12, "mu6 scale invariance");
    }

    #[test]
    fn entropy_uniform_256_is_8_bits() {
        assert_close(
            entropy_bits(&vec![1.0 / 256.0; 256]).unwrap(),
            8.0,
            1e-12,
            "H(uniform 256)",
        );
    }

    #[test]
    fn entropy_one_hot_is_zero() {
        let mut p = vec![0.0; 8];
        p[3] = 1.0;
        assert_close(entropy_bits(&p).unwrap(), 0.0, 1e-15, "H(one-hot)");
    }

    #[test]
    fn entropy_half_quarter_quarter() {
        assert_close(
            entropy_bits(&[0.5, 0.25, 0.25]).unwrap(),
            1.5,
            1e-15,
            "H(0.5,0.25,0.25)",
        );
    }

    #[test]
    fn qam4_is_unit_radius_qpsk() {
        let c = make_qam(4).unwrap();
        for s in c.points() {
            assert_close(s.norm(), 1.0, 1e-12, "QPSK radius");
        }
        for p in c.probs() {
            assert_close(*p, 0.25, 1e-15, "QPSK prob");
        }
    }

    #[test]
    fn qam256_entropy_and_power() {
        let c = make_qam(256).unwrap();
        assert_eq!(c.len(), 256);
        assert_close(c.entropy_bits(), 8.0, 1e-12, "256QAM entropy");
        assert_close(c.power(), 1.0, 1e-12, "256QAM power");
    }

    #[test]
    fn qam_rejects_unsupported_orders() {
        for m in [0, 2, 8, 32, 100, 128] {
            assert!(matches!(make_qam(m), Err(Error::UnsupportedQamOrder(_))));
        }
    }

    #[test]
    fn mb_lambda_zero_is_uniform() {
        let grid = qam_grid(16).unwrap();
        let c = maxwell_boltzmann(&grid, 0.0).unwrap();
        for p in c.probs() {
            assert_close(*p, 1.0 / 16.0, 1e-15, "MB lambda=0");
        }
    }

    #[test]
    fn mb_large_lambda_concentrates_on_inner_ring() {
        let grid = qam_grid(64).unwrap();
        let c = maxwell_boltzmann(&grid, 50.0).unwrap();
        let argmax = c
            .probs()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let min_r2 = grid.iter().map(|s| s.norm_sqr()).fold(f64::INFINITY, f64::min);
        assert_close(grid[argmax].norm_sqr(), min_r2, 1e-12, "MB argmax radius");
    }

    #[test]
    fn mb_rejects_negative_lambda() {
        let grid = qam_grid(16).unwrap();
        assert!(matches!(
            maxwell_boltzmann(&grid, -0.1),
            Err(Error::NegativeLambda(_))
        ));
    }

    #[test]
    fn mb_bisection_hits_entropy_target_on_256qam() {
        // Oracle: entropy is strictly decreasing in lambda, so the
        // bisection target is unique.
        let grid = qam_grid(256).unwrap();
        let (lambda, c) = mb_lambda_for_entropy(&grid, 7.0, MB_LAMBDA_MAX).unwrap();
        assert!(lambda > 0.0);
        assert_close(c.entropy_bits(), 7.0, 1e-9, "MB entropy target");
    }

    #[test]
    fn mb_entropy_nonincreasing_in_lambda() {
        let grid = qam_grid(256).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let lambda = i as f64 * 0.5;
            let h = maxwell_boltzmann(&grid, lambda).unwrap().entropy_bits();
            assert!(
                h <= prev + 1e-12,
                "entropy increased at lambda={lambda}: {h} > {prev}"
            );
            prev = h;
        }
    }

    #[test]
    fn sample_one_hot_is_constant() {
        let mut probs = vec![0.0; 4];
        probs[2] = 1.0;
        let c = Constellation::new(qpsk_unit(), probs).unwrap();
        assert!(c.sample_sequence(1000, 1).iter().all(|&i| i == 2));
    }

    #[test]
    fn sample_uniform_frequencies_within_binomial_bounds() {
        let c = make_qam(4).unwrap();
        let n = 1_000_000;
        let idx = c.sample_sequence(n, 42);
        let mut counts = [0usize; 4];
        for i in idx {
            counts[i] += 1;
        }
        // 5 binomial standard deviations around n/4.
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for (k, &cnt) in counts.iter().enumerate() {
            assert!(
                (cnt as f64 - n as f64 * 0.25).abs() < 5.0 * sigma,
                "index {k} frequency {cnt} outside 5 sigma"
            );
        }
    }

    #[test]
    fn sample_same_seed_is_deterministic() {
        let c = make_qam(16).unwrap();
        assert_eq!(c.sample_sequence(5000, 9), c.sample_sequence(5000, 9));
    }

    #[test]
    fn normalize_is_idempotent() {
        let c = random_constellation(32, 11);
        let once = c.normalize_power().unwrap();
        let twice = once.normalize_power().unwrap();
        for (a, b) in once.points().iter().zip(twice.points()) {
            assert!((a - b).norm() < 1e-12, "idempotence violated");
        }
    }

    #[test]
    fn moments_invariant_under_phase_rotation() {
        let c = random_constellation(16, 5);
        let rot = Complex64::from_polar(1.0, 0.83);
        let rotated = Constellation::new(
            c.points().iter().map(|s| s * rot).collect(),
            c.probs().to_vec(),
        )
        .unwrap();
        let (a4, a6) = c.standardized_moments().unwrap();
        let (b4, b6) = rotated.standardized_moments().unwrap();
        assert_close(a4, b4, 1e-12, "mu4 rotation invariance");
        assert_close(a6, b6, 1e-12, "mu6 rotation invariance");
    }

    #[test]
    fn moment_ordering_on_random_constellations() {
        // mu6 >= mu4^2 >= 1 by Jensen / Cauchy-Schwarz on |s|^2.
        for seed in 0..1000 {
            let c = random_constellation(8 + (seed as usize % 24), seed);
            let (mu4, mu6) = c.standardized_moments().unwrap();
            assert!(mu4 >= 1.0 - 1e-12, "mu4 {mu4} < 1 at seed {seed}");
            assert!(
                mu6 >= mu4 * mu4 - 1e-9,
                "mu6 {mu6} < mu4^2 {} at seed {seed}",
                mu4 * mu4
            );
        }
    }

    #[test]
    fn json_round_trip_preserves_full_precision() {
        let c = random_constellation(16, 21);
        let restored = Constellation::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(c.points(), restored.points());
        assert_eq!(c.probs(), restored.probs());
    }
}
