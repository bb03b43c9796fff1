//! Domain types and the probabilistic model.
//!
//! A dataset is a collection of intensity profiles. Each profile is modeled
//! as Gaussian noise around a piecewise-constant, non-increasing mean whose
//! shape is dictated by one of four structural clusters sharing a single
//! jump height `delta`:
//!
//! * cluster 1 — constant mean, no jump;
//! * cluster 2 — one jump of `delta`;
//! * cluster 3 — two jumps of `delta` each;
//! * cluster 4 — one jump of `2*delta`.
//!
//! All likelihood arithmetic is carried out in log space.

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// One observed intensity trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    id: String,
    values: Vec<f64>,
}

impl Profile {
    /// Minimum admissible profile length: one point per possible segment
    /// plus slack.
    pub const MIN_LEN: usize = 4;

    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.len() < Self::MIN_LEN {
            return Err(Error::InvalidProfile {
                id,
                reason: format!("length {} is below the minimum {}", values.len(), Self::MIN_LEN),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile {
                id,
                reason: format!("non-finite value {bad}"),
            });
        }
        Ok(Self { id, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The four structural clusters, identified by their jump pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cluster {
    /// No jump; constant mean.
    Flat,
    /// One jump of height `delta`.
    OneJump,
    /// Two jumps of height `delta` each.
    TwoJumps,
    /// One jump of height `2*delta`.
    OneDoubleJump,
}

impl Cluster {
    pub const ALL: [Cluster; 4] = [
        Cluster::Flat,
        Cluster::OneJump,
        Cluster::TwoJumps,
        Cluster::OneDoubleJump,
    ];

    /// 1-based cluster number.
    pub fn number(self) -> u8 {
        match self {
            Cluster::Flat => 1,
            Cluster::OneJump => 2,
            Cluster::TwoJumps => 3,
            Cluster::OneDoubleJump => 4,
        }
    }

    /// 0-based index into per-cluster arrays.
    pub fn index(self) -> usize {
        self.number() as usize - 1
    }

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Cluster::Flat),
            2 => Ok(Cluster::OneJump),
            3 => Ok(Cluster::TwoJumps),
            4 => Ok(Cluster::OneDoubleJump),
            _ => Err(Error::InvalidParams(format!("cluster number {k} not in 1..=4"))),
        }
    }

    /// Number of mean segments for this cluster.
    pub fn segment_count(self) -> usize {
        match self {
            Cluster::Flat => 1,
            Cluster::OneJump | Cluster::OneDoubleJump => 2,
            Cluster::TwoJumps => 3,
        }
    }

    /// Number of change-points (segments minus one).
    pub fn change_point_count(self) -> usize {
        self.segment_count() - 1
    }
}

/// Change-point locations identifying a piecewise-constant mean shape.
///
/// Change-points are stored as the 1-based last index of each non-final
/// segment, so a profile of length `n` splits into segments
/// `[1, t1], [t1+1, t2], ..., [t_last+1, n]`. The jump-count incidence
/// vector is derived on demand, never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    cluster: Cluster,
    change_points: Vec<usize>,
}

impl Segmentation {
    pub fn new(cluster: Cluster, change_points: Vec<usize>) -> Result<Self> {
        if change_points.len() != cluster.change_point_count() {
            return Err(Error::InvalidSegmentation(format!(
                "cluster {} needs {} change-point(s), got {}",
                cluster.number(),
                cluster.change_point_count(),
                change_points.len()
            )));
        }
        if change_points.contains(&0) {
            return Err(Error::InvalidSegmentation(
                "change-points are 1-based and must be >= 1".into(),
            ));
        }
        if change_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSegmentation(format!(
                "change-points must be strictly increasing, got {change_points:?}"
            )));
        }
        Ok(Self { cluster, change_points })
    }

    /// The empty segmentation of the constant cluster.
    pub fn flat() -> Self {
        Self { cluster: Cluster::Flat, change_points: Vec::new() }
    }

    pub fn cluster(&self) -> Cluster {
        self.cluster
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    /// Check that every segment is nonempty within a profile of length `n`.
    pub fn validate_for_length(&self, n: usize) -> Result<()> {
        if let Some(&last) = self.change_points.last() {
            if last > n - 1 {
                return Err(Error::InvalidSegmentation(format!(
                    "change-point {last} outside 1..={} for profile length {n}",
                    n - 1
                )));
            }
        }
        Ok(())
    }

    /// Segment lengths `n_ki`, including the final segment.
    pub fn segment_lengths(&self, n: usize) -> Vec<usize> {
        let mut lens = Vec::with_capacity(self.cluster.segment_count());
        let mut prev = 0usize;
        for &t in &self.change_points {
            lens.push(t - prev);
            prev = t;
        }
        lens.push(n - prev);
        lens
    }

    /// Jump multiplier at 1-based time `t`: how many unit jumps of `delta`
    /// have occurred by `t` (the double jump of cluster 4 counts as two).
    pub fn jump_factor(&self, t: usize) -> f64 {
        match self.cluster {
            Cluster::Flat => 0.0,
            Cluster::OneJump => {
                if t > self.change_points[0] {
                    1.0
                } else {
                    0.0
                }
            }
            Cluster::TwoJumps => {
                if t > self.change_points[1] {
                    2.0
                } else if t > self.change_points[0] {
                    1.0
                } else {
                    0.0
                }
            }
            Cluster::OneDoubleJump => {
                if t > self.change_points[0] {
                    2.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The incidence vector: entry `t-1` holds the jump multiplier at time `t`.
    pub fn incidence(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|t| self.jump_factor(t)).collect()
    }
}

/// Per-profile, per-cluster parameters: baseline mean, variance, and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileParams {
    pub mu: f64,
    pub sigma2: f64,
    pub seg: Segmentation,
}

/// Relative variance floor, applied against each profile's sample variance.
pub const SIGMA2_FLOOR_REL: f64 = 1e-12;

/// Variance floor for one profile: a relative fraction of its sample
/// variance. Exactly constant profiles fall back to the smallest positive
/// f64 so log-space densities stay finite.
pub fn sigma2_floor(values: &[f64]) -> f64 {
    (SIGMA2_FLOOR_REL * sample_variance(values)).max(f64::MIN_POSITIVE)
}

/// Biased (1/n) sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Admissible change-point positions: the central 80% of the profile
/// (the full `1..=n-1` when the profile is too short for the margins to
/// bite). Edge segments shorter than a tenth of the profile are excluded;
/// a one-point edge segment lets a single noisy sample fake a jump.
pub fn central_support(n: usize) -> (usize, usize) {
    let lo = ((0.1 * n as f64).ceil() as usize).max(1);
    let hi = ((0.9 * n as f64).floor() as usize).min(n - 1);
    (lo, hi)
}

/// Shared mixture parameters plus the per-profile, per-cluster table.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    /// Cluster proportions, summing to one.
    pub pi: [f64; 4],
    /// Shared jump height.
    pub delta: f64,
    /// `per_profile[s][k]` holds the parameters of profile `s` under
    /// cluster `k` (0-based index).
    pub per_profile: Vec<[ProfileParams; 4]>,
}

impl MixtureParams {
    pub fn n_profiles(&self) -> usize {
        self.per_profile.len()
    }

    pub fn params(&self, s: usize, k: Cluster) -> &ProfileParams {
        &self.per_profile[s][k.index()]
    }

    pub fn validate(&self, data: &[Profile]) -> Result<()> {
        if self.per_profile.len() != data.len() {
            return Err(Error::InvalidParams(format!(
                "parameter table covers {} profiles, data has {}",
                self.per_profile.len(),
                data.len()
            )));
        }
        if self.pi.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParams(format!("proportions out of [0,1]: {:?}", self.pi)));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("proportions sum to {total}, expected 1")));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParams(format!("delta is not finite: {}", self.delta)));
        }
        for (s, (set, y)) in self.per_profile.iter().zip(data).enumerate() {
            for k in Cluster::ALL {
                let phi = &set[k.index()];
                if phi.seg.cluster() != k {
                    return Err(Error::InvalidParams(format!(
                        "profile {s}: slot {} holds a cluster-{} segmentation",
                        k.number(),
                        phi.seg.cluster().number()
                    )));
                }
                phi.seg.validate_for_length(y.len())?;
                if phi.sigma2 <= 0.0 {
                    return Err(Error::NonPositiveVariance(phi.sigma2));
                }
            }
        }
        Ok(())
    }
}

/// Posterior cluster membership probabilities, one row per profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub tau: Vec<[f64; 4]>,
}

impl Responsibilities {
    pub fn n_profiles(&self) -> usize {
        self.tau.len()
    }

    /// Column sums over profiles.
    pub fn column_sums(&self) -> [f64; 4] {
        let mut sums = [0.0; 4];
        for row in &self.tau {
            for k in 0..4 {
                sums[k] += row[k];
            }
        }
        sums
    }

    pub fn validate(&self) -> Result<()> {
        for (s, row) in self.tau.iter().enumerate() {
            if row.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
                return Err(Error::InvalidParams(format!(
                    "responsibility row {s} out of [0,1]: {row:?}"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParams(format!(
                    "responsibility row {s} sums to {total}"
                )));
            }
        }
        Ok(())
    }
}

/// The piecewise-constant mean vector `m(t) = mu + delta * T(t)` for
/// `t = 1..=n`.
pub fn mean_vector(
    n: usize,
    k: Cluster,
    mu: f64,
    delta: f64,
    seg: &Segmentation,
) -> Result<Vec<f64>> {
    if seg.cluster() != k {
        return Err(Error::InvalidSegmentation(format!(
            "segmentation of cluster {} used with cluster {}",
            seg.cluster().number(),
            k.number()
        )));
    }
    seg.validate_for_length(n)?;
    Ok((1..=n).map(|t| mu + delta * seg.jump_factor(t)).collect())
}

/// Gaussian log-density of a profile under one cluster.
///
/// Returns `-(n/2) * ln(2*pi*sigma2) - ||y - m||^2 / (2*sigma2)`.
pub fn log_density(y: &Profile, k: Cluster, phi: &ProfileParams, delta: f64) -> Result<f64> {
    if phi.sigma2 <= 0.0 {
        return Err(Error::NonPositiveVariance(phi.sigma2));
    }
    if phi.seg.cluster() != k {
        return Err(Error::InvalidSegmentation(format!(
            "segmentation of cluster {} used with cluster {}",
            phi.seg.cluster().number(),
            k.number()
        )));
    }
    phi.seg.validate_for_length(y.len())?;
    let n = y.len() as f64;
    let rss: f64 = y
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let m = phi.mu + delta * phi.seg.jump_factor(i + 1);
            (v - m) * (v - m)
        })
        .sum();
    Ok(-0.5 * n * (LN_2PI + phi.sigma2.ln()) - rss / (2.0 * phi.sigma2))
}

/// `log(sum(exp(vals)))`, stable against under/overflow. Entries equal to
/// negative infinity contribute nothing; an all-infinite input returns
/// negative infinity.
pub fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Per-profile mixture log-likelihood terms `log sum_k pi_k f_k`.
fn profile_mixture_logliks(data: &[Profile], params: &MixtureParams) -> Result<Vec<f64>> {
    let log_pi: [f64; 4] = std::array::from_fn(|k| params.pi[k].ln());
    data.iter()
        .enumerate()
        .map(|(s, y)| {
            let mut terms = [0.0f64; 4];
            for k in Cluster::ALL {
                let lp = log_pi[k.index()];
                terms[k.index()] = if lp == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    lp + log_density(y, k, params.params(s, k), params.delta)?
                };
            }
            Ok(log_sum_exp(&terms))
        })
        .collect()
}

/// Observed-data log-likelihood, computed with log-sum-exp per profile.
pub fn observed_loglik(data: &[Profile], params: &MixtureParams) -> Result<f64> {
    Ok(profile_mixture_logliks(data, params)?.iter().sum())
}

/// Complete-data log-likelihood under hard assignments `z`.
pub fn complete_loglik(data: &[Profile], params: &MixtureParams, z: &[Cluster]) -> Result<f64> {
    if z.len() != data.len() {
        return Err(Error::NotOneHot(format!(
            "{} assignments for {} profiles",
            z.len(),
            data.len()
        )));
    }
    let mut total = 0.0;
    for (s, (y, &k)) in data.iter().zip(z).enumerate() {
        total += params.pi[k.index()].ln() + log_density(y, k, params.params(s, k), params.delta)?;
    }
    Ok(total)
}

/// The EM objective `Q`: the complete-data log-likelihood with hard
/// assignments replaced by responsibilities.
pub fn weighted_complete_loglik(
    data: &[Profile],
    params: &MixtureParams,
    tau: &Responsibilities,
) -> Result<f64> {
    if tau.n_profiles() != data.len() {
        return Err(Error::InvalidParams(format!(
            "{} responsibility rows for {} profiles",
            tau.n_profiles(),
            data.len()
        )));
    }
    let mut total = 0.0;
    for (s, y) in data.iter().enumerate() {
        for k in Cluster::ALL {
            let w = tau.tau[s][k.index()];
            if w == 0.0 {
                continue;
            }
            total += w
                * (params.pi[k.index()].ln()
                    + log_density(y, k, params.params(s, k), params.delta)?);
        }
    }
    Ok(total)
}
