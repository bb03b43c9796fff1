//! Synthetic data generation with ground-truth labels, plus the grid
//! runners for the three benchmark studies.
//!
//! Every profile gets its own counter-based RNG stream (the profile index
//! selects the stream), so generation is bit-reproducible per seed and
//! independent of iteration or worker order.

mod studies;

pub use studies::{run_study, StudyId, StudyOverrides, StudyRow};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{central_support, mean_vector, Cluster, Profile, Segmentation};

/// Gap between the two change-points of simulated two-jump profiles, from
/// the standard offsets: a fraction of the profile length, plus one.
pub fn mid_step_gap(frac: f64, n: usize) -> usize {
    (frac * n as f64).round() as usize + 1
}

/// One simulation design: equal-length profiles, uniform change-point
/// positions over the central support, Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    /// Number of profiles.
    pub s: usize,
    /// Profile length.
    pub n: usize,
    /// True shared jump height.
    pub delta: f64,
    /// Enforced gap between the two change-points of cluster-3 profiles.
    pub mid_step: usize,
    /// Baseline mean.
    pub mu: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    /// Cluster proportions.
    pub pi: [f64; 4],
    pub seed: u64,
}

impl SimDesign {
    pub fn new(s: usize, n: usize, delta: f64, seed: u64) -> Self {
        Self {
            s,
            n,
            delta,
            mid_step: 1,
            mu: 2.0,
            sigma: 1.0,
            pi: [0.25; 4],
            seed,
        }
    }

    pub fn with_mid_step(mut self, gap: usize) -> Self {
        self.mid_step = gap;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_baseline(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    /// Change-point support: the central 80% of the profile.
    pub fn support(&self) -> (usize, usize) {
        central_support(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::InvalidDesign("need at least one profile".into()));
        }
        if self.n < Profile::MIN_LEN {
            return Err(Error::InvalidDesign(format!(
                "profile length {} below the minimum {}",
                self.n,
                Profile::MIN_LEN
            )));
        }
        let (lo, hi) = self.support();
        if lo > hi {
            return Err(Error::InvalidDesign(format!(
                "empty change-point support for length {}",
                self.n
            )));
        }
        if self.mid_step == 0 || lo + self.mid_step > hi {
            return Err(Error::InvalidDesign(format!(
                "cluster-3 gap {} does not fit the support [{lo}, {hi}]",
                self.mid_step
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidDesign(format!(
                "noise standard deviation must be positive, got {}",
                self.sigma
            )));
        }
        if !self.delta.is_finite() || !self.mu.is_finite() {
            return Err(Error::InvalidDesign("delta and mu must be finite".into()));
        }
        if self.pi.iter().any(|&p| p < 0.0) || (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDesign(format!(
                "proportions must be nonnegative and sum to one, got {:?}",
                self.pi
            )));
        }
        Ok(())
    }
}

/// True labels and segmentations behind a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<Cluster>,
    pub segmentations: Vec<Segmentation>,
    pub lengths: Vec<usize>,
    pub delta: f64,
    pub mu: f64,
    pub sigma: f64,
}

fn draw_cluster(rng: &mut impl Rng, pi: &[f64; 4]) -> Cluster {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for k in Cluster::ALL {
        acc += pi[k.index()];
        if u < acc {
            return k;
        }
    }
    Cluster::OneDoubleJump
}

/// Generate a dataset from a design. Each profile draws its cluster, its
/// change-point(s) uniformly over the support (the two-jump cluster places
/// its second point at the enforced gap), and i.i.d. Gaussian noise around
/// the cluster mean.
pub fn generate(design: &SimDesign) -> Result<(Vec<Profile>, GroundTruth)> {
    design.validate()?;
    let (lo, hi) = design.support();
    let noise = Normal::new(0.0, design.sigma)
        .map_err(|e| Error::InvalidDesign(e.to_string()))?;

    let mut profiles = Vec::with_capacity(design.s);
    let mut labels = Vec::with_capacity(design.s);
    let mut segmentations = Vec::with_capacity(design.s);

    for idx in 0..design.s {
        let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
        rng.set_stream(idx as u64);

        let cluster = draw_cluster(&mut rng, &design.pi);
        let seg = match cluster {
            Cluster::Flat => Segmentation::flat(),
            Cluster::OneJump | Cluster::OneDoubleJump => {
                let t = rng.random_range(lo..=hi);
                Segmentation::new(cluster, vec![t])?
            }
            Cluster::TwoJumps => {
                let t1 = rng.random_range(lo..=hi - design.mid_step);
                Segmentation::new(cluster, vec![t1, t1 + design.mid_step])?
            }
        };
        let mean = mean_vector(design.n, cluster, design.mu, design.delta, &seg)?;
        let values: Vec<f64> = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();

        profiles.push(Profile::new(format!("sim{idx:05}"), values)?);
        labels.push(cluster);
        segmentations.push(seg);
    }

    let truth = GroundTruth {
        labels,
        segmentations,
        lengths: vec![design.n; design.s],
        delta: design.delta,
        mu: design.mu,
        sigma: design.sigma,
    };
    Ok((profiles, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_is_reproducible() {
        let design = SimDesign::new(12, 40, -2.0, 77).with_mid_step(5);
        let (a, ta) = generate(&design).unwrap();
        let (b, tb) = generate(&design).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&SimDesign { seed: 78, ..design }).unwrap();
        assert!(a != c);
    }

    #[test]
    fn near_noiseless_profiles_match_their_means() {
        let design = SimDesign::new(20, 50, -5.0, 3).with_noise(1e-9).with_mid_step(7);
        let (profiles, truth) = generate(&design).unwrap();
        for ((y, k), seg) in profiles.iter().zip(&truth.labels).zip(&truth.segmentations) {
            let mean = mean_vector(50, *k, 2.0, -5.0, seg).unwrap();
            for (v, m) in y.values().iter().zip(mean) {
                assert!((v - m).abs() < 1e-6, "profile {} strays from its mean", y.id());
            }
        }
    }

    #[test]
    fn adjacent_gap_places_adjacent_change_points() {
        // gap of 1 (offset 0) forces t32 = t31 + 1
        let design = SimDesign::new(200, 30, -5.0, 5).with_mid_step(1);
        let (_, truth) = generate(&design).unwrap();
        let mut saw_cluster3 = false;
        for (k, seg) in truth.labels.iter().zip(&truth.segmentations) {
            if *k == Cluster::TwoJumps {
                saw_cluster3 = true;
                let cps = seg.change_points();
                assert_eq!(cps[1], cps[0] + 1);
            }
        }
        assert!(saw_cluster3);
    }

    #[test]
    fn change_points_respect_support() {
        let design = SimDesign::new(500, 60, -2.0, 9).with_mid_step(19);
        let (lo, hi) = design.support();
        let (_, truth) = generate(&design).unwrap();
        for seg in &truth.segmentations {
            for &t in seg.change_points() {
                assert!(t >= lo && t <= hi, "change-point {t} outside [{lo}, {hi}]");
            }
            seg.validate_for_length(60).unwrap();
        }
    }

    #[test]
    fn cluster_frequencies_are_balanced() {
        let design = SimDesign::new(10_000, 20, -2.0, 1).with_mid_step(3);
        let (_, truth) = generate(&design).unwrap();
        let mut counts = [0usize; 4];
        for k in &truth.labels {
            counts[k.index()] += 1;
        }
        // 3-sigma binomial band around S/4
        let s = 10_000f64;
        let band = 3.0 * (s * 0.25 * 0.75).sqrt();
        for (k, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - s * 0.25).abs() < band,
                "cluster {} count {c} outside the binomial band",
                k + 1
            );
        }
    }

    #[test]
    fn profile_data_depends_only_on_its_index() {
        // same per-profile streams regardless of how many profiles follow
        let big = SimDesign::new(10, 25, -3.0, 42).with_mid_step(4);
        let small = SimDesign { s: 3, ..big.clone() };
        let (a, _) = generate(&big).unwrap();
        let (b, _) = generate(&small).unwrap();
        for (x, y) in b.iter().zip(&a) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn impossible_designs_are_rejected() {
        assert!(SimDesign::new(0, 40, -2.0, 1).validate().is_err());
        assert!(SimDesign::new(5, 3, -2.0, 1).validate().is_err());
        // gap larger than the support
        assert!(SimDesign::new(5, 20, -2.0, 1).with_mid_step(17).validate().is_err());
        assert!(SimDesign::new(5, 20, -2.0, 1).with_noise(0.0).validate().is_err());
    }

    #[test]
    fn mid_step_gap_offsets() {
        assert_eq!(mid_step_gap(0.0, 100), 1);
        assert_eq!(mid_step_gap(0.3, 100), 31);
        assert_eq!(mid_step_gap(0.6, 100), 61);
        assert_eq!(mid_step_gap(0.3, 250), 76);
    }
}
