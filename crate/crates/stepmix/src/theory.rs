//! Closed-form probability of misclassifying a two-segment double-jump
//! profile (cluster 4) into the three-segment cluster 3, plus the
//! Monte-Carlo validator that checks it by direct residual contrast.
//!
//! The scenario fixes a true cluster-4 profile whose single change-point
//! falls strictly inside the middle segment of a candidate cluster-3
//! segmentation, with equal prior proportions on the two clusters. The
//! profile lands in cluster 3 exactly when the residual contrast
//! `Q(T3) - Q(T4*)` goes negative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Cluster, Profile, Segmentation};

#[allow(clippy::excessive_precision)]
mod erf {
    //! Complementary error function after Cody's rational Chebyshev
    //! approximations (SPECFUN), accurate to a few ULP across the range.

    const THRESH: f64 = 0.46875;
    const SQRPI: f64 = 5.6418958354775628695e-1;

    const A: [f64; 5] = [
        3.16112374387056560e00,
        1.13864154151050156e02,
        3.77485237685302021e02,
        3.20937758913846947e03,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e01,
        2.44024637934444173e02,
        1.28261652607737228e03,
        2.84423683343917062e03,
    ];
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e00,
        6.61191906371416295e01,
        2.98635138197400131e02,
        8.81952221241769090e02,
        1.71204761263407058e03,
        2.05107837782607147e03,
        1.23033935479799725e03,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e01,
        1.17693950891312499e02,
        5.37181101862009858e02,
        1.62138957456669019e03,
        3.29079923573345963e03,
        4.36261909014324716e03,
        3.43936767414372164e03,
        1.23033935480374942e03,
    ];
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e00,
        1.87295284992346047e00,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];

    /// `exp(-y^2)` split into an exact-truncation part and a small
    /// correction, preserving relative accuracy deep in the tails.
    fn exp_neg_sq(y: f64) -> f64 {
        let ysq = (y * 16.0).trunc() / 16.0;
        let del = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-del).exp()
    }

    pub fn erfc(x: f64) -> f64 {
        let y = x.abs();
        let result = if y <= THRESH {
            let ysq = y * y;
            let mut xnum = A[4] * ysq;
            let mut xden = ysq;
            for i in 0..3 {
                xnum = (xnum + A[i]) * ysq;
                xden = (xden + B[i]) * ysq;
            }
            return 1.0 - x * (xnum + A[3]) / (xden + B[3]);
        } else if y <= 4.0 {
            let mut xnum = C[8] * y;
            let mut xden = y;
            for i in 0..7 {
                xnum = (xnum + C[i]) * y;
                xden = (xden + D[i]) * y;
            }
            exp_neg_sq(y) * (xnum + C[7]) / (xden + D[7])
        } else {
            let ysq = 1.0 / (y * y);
            let mut xnum = P[5] * ysq;
            let mut xden = ysq;
            for i in 0..4 {
                xnum = (xnum + P[i]) * ysq;
                xden = (xden + Q[i]) * ysq;
            }
            let tail = ysq * (xnum + P[4]) / (xden + Q[4]);
            exp_neg_sq(y) * (SQRPI - tail) / y
        };
        if x < 0.0 {
            2.0 - result
        } else {
            result
        }
    }
}

/// Standard normal CDF, accurate to well below 1e-12 via the
/// complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// A cluster-4 profile confronted with a fixed cluster-3 segmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisclassScenario {
    /// Profile length.
    pub n: usize,
    /// First change-point of the candidate cluster-3 segmentation.
    pub t31: usize,
    /// True (cluster 4) change-point, strictly between `t31` and `t32`.
    pub t41_star: usize,
    /// Second change-point of the candidate cluster-3 segmentation.
    pub t32: usize,
    /// Shared jump height.
    pub delta: f64,
    /// True noise standard deviation of the cluster-4 profile.
    pub sigma4_star: f64,
}

impl MisclassScenario {
    pub fn new(
        n: usize,
        t31: usize,
        t41_star: usize,
        t32: usize,
        delta: f64,
        sigma4_star: f64,
    ) -> Result<Self> {
        if n < Profile::MIN_LEN {
            return Err(Error::InvalidScenario(format!("profile length {n} too short")));
        }
        if !(t31 >= 1 && t31 < t41_star && t41_star < t32 && t32 < n) {
            return Err(Error::InvalidScenario(format!(
                "need 1 <= t31 < t41* < t32 <= n-1, got ({t31}, {t41_star}, {t32}) with n = {n}"
            )));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidScenario(format!("delta must be finite, got {delta}")));
        }
        if !(sigma4_star > 0.0 && sigma4_star.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "sigma4_star must be a positive real, got {sigma4_star}"
            )));
        }
        Ok(Self { n, t31, t41_star, t32, delta, sigma4_star })
    }

    /// Length of the overlap segment between `t31` and the true
    /// change-point (the interval `(t31, t41*]`).
    pub fn n2(&self) -> usize {
        self.t41_star - self.t31
    }

    /// Length of the overlap segment between the true change-point and
    /// `t32` (the interval `(t41*, t32]`).
    pub fn n3(&self) -> usize {
        self.t32 - self.t41_star
    }

    /// The variance factor `V = n2 + n3 - (n2 - n3)^2 / n` of the
    /// residual contrast.
    pub fn variance_factor(&self) -> f64 {
        let n2 = self.n2() as f64;
        let n3 = self.n3() as f64;
        n2 + n3 - (n2 - n3) * (n2 - n3) / self.n as f64
    }

    fn cluster3_seg(&self) -> Segmentation {
        Segmentation::new(Cluster::TwoJumps, vec![self.t31, self.t32]).expect("validated")
    }

    fn cluster4_seg(&self) -> Segmentation {
        Segmentation::new(Cluster::OneDoubleJump, vec![self.t41_star]).expect("validated")
    }
}

/// Closed-form probability that the profile is classified into cluster 3:
/// `P = 1 - F(-delta * sqrt(V) / (2 * sigma4*))` with `F` the standard
/// normal CDF.
pub fn misclass_probability(sc: &MisclassScenario) -> Result<f64> {
    let v = sc.variance_factor();
    if v <= 0.0 {
        return Err(Error::InvalidScenario(format!(
            "variance factor must be positive, got {v}"
        )));
    }
    Ok(1.0 - normal_cdf(-sc.delta * v.sqrt() / (2.0 * sc.sigma4_star)))
}

/// Residual sum of squares of `y - delta*T` around its own mean: the
/// classification contrast at a fixed segmentation and jump height.
pub fn q_contrast(y: &Profile, seg: &Segmentation, delta: f64) -> Result<f64> {
    seg.validate_for_length(y.len())?;
    Ok(q_contrast_values(y.values(), seg, delta))
}

fn q_contrast_values(values: &[f64], seg: &Segmentation, delta: f64) -> f64 {
    let n = values.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let w = v - delta * seg.jump_factor(i + 1);
        sum += w;
        sum_sq += w * w;
    }
    sum_sq - sum * sum / n
}

/// Monte-Carlo estimate of the misclassification probability: simulate
/// cluster-4 profiles, evaluate both residual contrasts directly, and count
/// how often the cluster-3 segmentation wins. Draw streams are seeded per
/// replicate, so the estimate is independent of the worker count.
pub fn monte_carlo_misclass(sc: &MisclassScenario, draws: usize, seed: u64) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidScenario("need at least one draw".into()));
    }
    let seg3 = sc.cluster3_seg();
    let seg4 = sc.cluster4_seg();
    let noise = Normal::new(0.0, sc.sigma4_star)
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    let mean4: Vec<f64> = seg4.incidence(sc.n).iter().map(|t| sc.delta * t).collect();

    let hits: usize = (0..draws)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(draw as u64);
            let values: Vec<f64> =
                mean4.iter().map(|m| m + noise.sample(&mut rng)).collect();
            let q3 = q_contrast_values(&values, &seg3, sc.delta);
            let q4 = q_contrast_values(&values, &seg4, sc.delta);
            usize::from(q3 - q4 < 0.0)
        })
        .sum();
    Ok(hits as f64 / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::cm_phi_segment;
    use crate::model::{mean_vector, sample_variance};
    use approx::assert_relative_eq;

    #[test]
    fn normal_cdf_reference_values() {
        // frozen against a 30-digit arbitrary-precision evaluation
        let cases = [
            (0.0, 0.5),
            (1.0, 0.84134474606854294859),
            (-1.0, 0.15865525393145705141),
            (2.0, 0.9772498680518207928),
            (-3.0, 0.0013498980316300945267),
            (0.5, 0.69146246127401310364),
            (-0.5, 0.30853753872598689636),
            (4.743, 0.99999894711865082573),
        ];
        for (x, expected) in cases {
            assert!(
                (normal_cdf(x) - expected).abs() < 1e-12,
                "cdf({x}) = {} vs {expected}",
                normal_cdf(x)
            );
        }
    }

    #[test]
    fn erfc_reference_grid() {
        // frozen against a 30-digit arbitrary-precision evaluation,
        // covering all three approximation branches and both tails
        let cases: [(f64, f64); 27] = [
            (0.0, 1.0),
            (1e-09, 0.999999998871620833),
            (0.1, 0.887537083981715102),
            (0.3, 0.671373240540872584),
            (0.46875, 0.507386526782062008),
            (0.5, 0.479500122186953462),
            (0.75, 0.288844366346484868),
            (1.0, 0.157299207050285131),
            (1.5, 0.0338948535246892729),
            (2.0, 0.00467773498104726584),
            (2.5, 0.00040695201744495894),
            (3.0, 0.0000220904969985854414),
            (3.5, 7.43098372341412746e-7),
            (4.0, 1.54172579002800189e-8),
            (4.5, 1.96616044154288748e-10),
            (5.0, 1.53745979442803485e-12),
            (6.0, 2.15197367124989131e-17),
            (8.0, 1.12242971729829271e-29),
            (10.0, 2.08848758376254476e-45),
            (15.0, 7.21299417245120667e-100),
            (-0.1, 1.1124629160182849),
            (-0.5, 1.52049987781304654),
            (-1.0, 1.84270079294971487),
            (-2.0, 1.99532226501895273),
            (-3.5, 1.99999925690162766),
            (-5.0, 1.99999999999846254),
            (-8.0, 2.0),
        ];
        for (x, expected) in cases {
            let got = super::erf::erfc(x);
            let rel = (got - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
            assert!(rel < 1e-13, "erfc({x}) = {got:e} vs {expected:e} (rel {rel:e})");
        }
        // symmetry across the whole range
        for i in -60..=60 {
            let x = i as f64 / 10.0;
            let s = super::erf::erfc(x) + super::erf::erfc(-x);
            assert!((s - 2.0).abs() < 1e-14, "erfc({x}) + erfc({}) = {s}", -x);
        }
    }

    #[test]
    fn scenario_validation() {
        assert!(MisclassScenario::new(200, 95, 100, 105, -3.0, 1.0).is_ok());
        assert!(MisclassScenario::new(200, 100, 100, 105, -3.0, 1.0).is_err());
        assert!(MisclassScenario::new(200, 95, 100, 200, -3.0, 1.0).is_err());
        assert!(MisclassScenario::new(200, 0, 100, 105, -3.0, 1.0).is_err());
        assert!(MisclassScenario::new(200, 95, 100, 105, -3.0, 0.0).is_err());
    }

    #[test]
    fn zero_jump_is_a_coin_flip() {
        let sc = MisclassScenario::new(200, 95, 100, 105, 0.0, 1.0).unwrap();
        assert_eq!(misclass_probability(&sc).unwrap(), 0.5);
    }

    #[test]
    fn symmetric_segments_simplify_variance_factor() {
        // n2 = n3 = n_m makes the correction term vanish: V = 2 * n_m
        for n_m in [1usize, 3, 7, 20] {
            let sc =
                MisclassScenario::new(200, 100 - n_m, 100, 100 + n_m, -1.0, 1.0).unwrap();
            assert_eq!(sc.n2(), n_m);
            assert_eq!(sc.n3(), n_m);
            assert_relative_eq!(sc.variance_factor(), 2.0 * n_m as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn probability_monotonicities() {
        let p = |delta: f64, sigma: f64, n_m: usize| {
            let sc =
                MisclassScenario::new(200, 100 - n_m, 100, 100 + n_m, delta, sigma).unwrap();
            misclass_probability(&sc).unwrap()
        };
        // increases with noise
        assert!(p(-2.0, 2.0, 5) > p(-2.0, 1.0, 5));
        // decreases with jump magnitude
        assert!(p(-3.0, 1.0, 5) < p(-1.0, 1.0, 5));
        // decreases as the segmentations separate (V grows)
        assert!(p(-1.0, 1.0, 10) < p(-1.0, 1.0, 2));
        // strict interior and vanishing tail
        let interior = p(-2.0, 1.0, 5);
        assert!(interior > 0.0 && interior < 1.0);
        assert!(p(-20.0, 0.1, 20) < 1e-12);
    }

    #[test]
    fn q_contrast_exact_fit_is_zero() {
        let seg = Segmentation::new(Cluster::OneDoubleJump, vec![5]).unwrap();
        let mean = mean_vector(12, Cluster::OneDoubleJump, 3.0, -2.0, &seg).unwrap();
        let y = Profile::new("p", mean).unwrap();
        assert_relative_eq!(q_contrast(&y, &seg, -2.0).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn q_contrast_flat_is_total_variance() {
        let y = Profile::new("p", vec![1.0, 3.0, -1.0, 2.0, 0.0]).unwrap();
        let q = q_contrast(&y, &Segmentation::flat(), -2.0).unwrap();
        assert_relative_eq!(q, 5.0 * sample_variance(y.values()), epsilon = 1e-12);
    }

    #[test]
    fn q_contrast_matches_segment_search_objective() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let n = 24;
            let values: Vec<f64> = (0..n)
                .map(|t| 2.0 - 0.2 * t as f64 + rng.random_range(-1.0..1.0))
                .collect();
            let y = Profile::new("p", values).unwrap();
            for k in [Cluster::OneJump, Cluster::TwoJumps, Cluster::OneDoubleJump] {
                let phi = cm_phi_segment(&y, k, -1.5).unwrap();
                let q = q_contrast(&y, &phi.seg, -1.5).unwrap();
                assert_relative_eq!(q, phi.sigma2 * n as f64, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let sc = MisclassScenario::new(100, 45, 50, 55, -1.0, 1.0).unwrap();
        let p = misclass_probability(&sc).unwrap();
        let draws = 20_000;
        let estimate = monte_carlo_misclass(&sc, draws, 7).unwrap();
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!(
            (estimate - p).abs() <= 3.0 * se,
            "estimate {estimate} vs closed form {p} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let sc = MisclassScenario::new(60, 25, 30, 35, -1.5, 1.0).unwrap();
        let a = monte_carlo_misclass(&sc, 4000, 11).unwrap();
        let b = monte_carlo_misclass(&sc, 4000, 11).unwrap();
        assert_eq!(a, b);
    }
}
