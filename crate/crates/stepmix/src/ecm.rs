//! ECM fitting engine.
//!
//! One iteration alternates an E-step (posterior responsibilities) with a
//! fixed sequence of conditional maximizations: proportions, then the shared
//! jump height, then every per-profile (mean, variance, change-point)
//! triplet. The change-point step is an exhaustive search over admissible
//! segmentations, evaluated in O(1) per candidate from cumulative sums.
//! Multi-start: the best run is kept by observed-data log-likelihood.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    central_support, log_density, log_sum_exp, observed_loglik, sample_variance, sigma2_floor,
    Cluster, MixtureParams, Profile, ProfileParams, Responsibilities, Segmentation,
};
use crate::seeding::mix2;

/// Proportions below this column mass are floored to keep the component alive.
const PI_FLOOR: f64 = 1e-10;

/// Fitting controls.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Number of random initializations; the best final likelihood wins.
    pub nb_init: usize,
    /// Conditional-maximization sweeps per EM iteration.
    pub nb_m_step: usize,
    /// Maximum EM iterations per start.
    pub max_em_iter: usize,
    /// Relative log-likelihood change below which a start has converged.
    pub rel_tol: f64,
    pub seed: u64,
    /// When set, the jump height is pinned to this value: the delta
    /// update is skipped and every step uses the pinned value.
    pub fix_delta: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nb_init: 10,
            nb_m_step: 1,
            max_em_iter: 100,
            rel_tol: 1e-8,
            seed: 0,
            fix_delta: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nb_init < 1 {
            return Err(Error::InvalidConfig("nb_init must be >= 1".into()));
        }
        if self.nb_m_step < 1 {
            return Err(Error::InvalidConfig("nb_m_step must be >= 1".into()));
        }
        if self.max_em_iter < 1 {
            return Err(Error::InvalidConfig("max_em_iter must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must be a positive finite real, got {}",
                self.rel_tol
            )));
        }
        if let Some(d) = self.fix_delta {
            if !d.is_finite() {
                return Err(Error::InvalidConfig(format!("fix_delta must be finite, got {d}")));
            }
        }
        Ok(())
    }
}

/// Outcome of a fit: the winning start's parameters and trajectory.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: MixtureParams,
    /// Responsibilities that produced the final parameters (so that the
    /// fitted proportions are exactly their column means).
    pub tau: Responsibilities,
    /// Observed-data log-likelihood per iteration, starting at the
    /// initialization.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    /// Argmax responsibilities, ties broken toward the smaller cluster.
    pub hard_assignment: Vec<Cluster>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace never empty")
    }
}

/// Cumulative sums of a profile: `sum(i)` is the sum of the first `i`
/// values, so segment sums cost O(1).
pub(crate) struct PrefixSums {
    sy: Vec<f64>,
    sy2: Vec<f64>,
}

impl PrefixSums {
    pub(crate) fn new(values: &[f64]) -> Self {
        let mut sy = Vec::with_capacity(values.len() + 1);
        let mut sy2 = Vec::with_capacity(values.len() + 1);
        sy.push(0.0);
        sy2.push(0.0);
        let (mut a, mut b) = (0.0, 0.0);
        for &v in values {
            a += v;
            b += v * v;
            sy.push(a);
            sy2.push(b);
        }
        Self { sy, sy2 }
    }

    fn total(&self) -> f64 {
        *self.sy.last().unwrap()
    }

    fn total_sq(&self) -> f64 {
        *self.sy2.last().unwrap()
    }

    /// Sum of values at 1-based times in (a, b].
    fn span(&self, a: usize, b: usize) -> f64 {
        self.sy[b] - self.sy[a]
    }
}

/// E-step: posterior responsibilities under the current parameters,
/// computed in log space.
pub fn e_step(data: &[Profile], params: &MixtureParams) -> Result<Responsibilities> {
    let log_pi: [f64; 4] = std::array::from_fn(|k| params.pi[k].ln());
    let rows: Result<Vec<[f64; 4]>> = data
        .par_iter()
        .enumerate()
        .map(|(s, y)| {
            let mut logs = [0.0f64; 4];
            for k in Cluster::ALL {
                let lp = log_pi[k.index()];
                logs[k.index()] = if lp == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    lp + log_density(y, k, params.params(s, k), params.delta)?
                };
            }
            let lse = log_sum_exp(&logs);
            if lse == f64::NEG_INFINITY || lse.is_nan() {
                return Err(Error::DegenerateFit(format!(
                    "profile `{}`: every cluster density vanished",
                    y.id()
                )));
            }
            Ok(std::array::from_fn(|k| (logs[k] - lse).exp()))
        })
        .collect();
    Ok(Responsibilities { tau: rows? })
}

/// CM-step for the proportions: column means of the responsibilities.
pub fn cm_pi(tau: &Responsibilities) -> [f64; 4] {
    let sums = tau.column_sums();
    let s = tau.n_profiles() as f64;
    std::array::from_fn(|k| sums[k] / s)
}

/// Floored proportions used inside the sweep: components whose
/// responsibility mass vanished are kept alive at `PI_FLOOR`.
fn cm_pi_floored(tau: &Responsibilities) -> [f64; 4] {
    let sums = tau.column_sums();
    let s = tau.n_profiles() as f64;
    let mut pi = std::array::from_fn(|k| sums[k] / s);
    if sums.iter().any(|&c| c < PI_FLOOR) {
        for (k, &c) in sums.iter().enumerate() {
            if c < PI_FLOOR {
                pi[k] = PI_FLOOR;
            }
        }
        let total: f64 = pi.iter().sum();
        for p in &mut pi {
            *p /= total;
        }
    }
    pi
}

/// CM-step for the shared jump height: the exact minimizer `A/B` of the
/// responsibility-weighted quadratic, at the current segmentations, means,
/// and variances. Returns `None` when no responsibility mass sits on the
/// jump clusters (`B = 0`), in which case the caller keeps delta unchanged.
pub fn cm_delta(
    data: &[Profile],
    tau: &Responsibilities,
    params: &MixtureParams,
) -> Result<Option<f64>> {
    if tau.n_profiles() != data.len() || params.n_profiles() != data.len() {
        return Err(Error::InvalidParams(
            "responsibilities, parameters, and data must cover the same profiles".into(),
        ));
    }
    let prefixes: Vec<PrefixSums> = data.iter().map(|y| PrefixSums::new(y.values())).collect();
    let (a, b) = delta_numerator_denominator(data, tau, params, &prefixes);
    if b <= 0.0 {
        return Ok(None);
    }
    Ok(Some(a / b))
}

fn delta_numerator_denominator(
    data: &[Profile],
    tau: &Responsibilities,
    params: &MixtureParams,
    prefixes: &[PrefixSums],
) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    for (s, y) in data.iter().enumerate() {
        let n = y.len();
        let pre = &prefixes[s];
        // cluster 2: one unit jump after t21
        {
            let phi = params.params(s, Cluster::OneJump);
            let w = tau.tau[s][Cluster::OneJump.index()] / phi.sigma2;
            let u = phi.seg.change_points()[0];
            let n22 = (n - u) as f64;
            a += w * (pre.span(u, n) - phi.mu * n22);
            b += w * n22;
        }
        // cluster 3: unit jumps after t31 and t32
        {
            let phi = params.params(s, Cluster::TwoJumps);
            let w = tau.tau[s][Cluster::TwoJumps.index()] / phi.sigma2;
            let cps = phi.seg.change_points();
            let (u, v) = (cps[0], cps[1]);
            let n32 = (v - u) as f64;
            let n33 = (n - v) as f64;
            a += w * ((pre.span(u, v) - phi.mu * n32) + 2.0 * (pre.span(v, n) - phi.mu * n33));
            b += w * (n32 + 4.0 * n33);
        }
        // cluster 4: one double jump after t41
        {
            let phi = params.params(s, Cluster::OneDoubleJump);
            let w = tau.tau[s][Cluster::OneDoubleJump.index()] / phi.sigma2;
            let u = phi.seg.change_points()[0];
            let n42 = (n - u) as f64;
            a += w * 2.0 * (pre.span(u, n) - phi.mu * n42);
            b += w * 4.0 * n42;
        }
    }
    (a, b)
}

/// CM-step for the constant cluster: sample mean and biased variance.
pub fn cm_phi_cluster1(y: &Profile) -> ProfileParams {
    let mu = y.values().iter().sum::<f64>() / y.len() as f64;
    let var = sample_variance(y.values());
    ProfileParams {
        mu,
        sigma2: var.max(sigma2_floor(y.values())),
        seg: Segmentation::flat(),
    }
}

/// CM-step for one jump cluster of one profile: exhaustive search over all
/// admissible change-point placements at the fixed jump height, returning
/// the residual-minimizing segmentation with its profiled mean and variance.
///
/// Candidates range over the central support of the profile (see
/// [`central_support`]). Ties break toward the lexicographically smallest
/// change-points.
pub fn cm_phi_segment(y: &Profile, k: Cluster, delta: f64) -> Result<ProfileParams> {
    let pre = PrefixSums::new(y.values());
    cm_phi_segment_with(y, k, delta, &pre)
}

fn cm_phi_segment_with(
    y: &Profile,
    k: Cluster,
    delta: f64,
    pre: &PrefixSums,
) -> Result<ProfileParams> {
    let n = y.len();
    if n < k.segment_count() + 1 {
        return Err(Error::InvalidSegmentation(format!(
            "profile `{}` of length {n} too short for cluster {}",
            y.id(),
            k.number()
        )));
    }
    let nf = n as f64;
    let total = pre.total();
    let total_sq = pre.total_sq();

    // Residual sum of squares of y - delta*T around its own mean, for the
    // candidate whose jump structure is summarized by:
    //   jump_count = sum of T entries, jump_sq = sum of squared T entries,
    //   jump_weighted = sum of y over jump positions weighted by T.
    let rss = |jump_weighted: f64, jump_count: f64, jump_sq: f64| -> f64 {
        let sw = total - delta * jump_count;
        let sw2 = total_sq - 2.0 * delta * jump_weighted + delta * delta * jump_sq;
        sw2 - sw * sw / nf
    };

    let mut best_rss = f64::INFINITY;
    let mut best_cps: Vec<usize> = Vec::new();
    let mut best_sw = 0.0;

    match k {
        Cluster::Flat => {
            return Err(Error::InvalidSegmentation(
                "cluster 1 has no change-points; use cm_phi_cluster1".into(),
            ))
        }
        Cluster::OneJump | Cluster::OneDoubleJump => {
            let f = if k == Cluster::OneJump { 1.0 } else { 2.0 };
            let (lo, hi) = central_support(n);
            for u in lo..=hi {
                let m = (n - u) as f64;
                let tail = pre.span(u, n);
                let r = rss(f * tail, f * m, f * f * m);
                if r < best_rss {
                    best_rss = r;
                    best_cps = vec![u];
                    best_sw = total - delta * f * m;
                }
            }
        }
        Cluster::TwoJumps => {
            let (lo, hi) = central_support(n);
            for u in lo..hi {
                for v in u + 1..=hi {
                    let mid_len = (v - u) as f64;
                    let tail_len = (n - v) as f64;
                    let mid = pre.span(u, v);
                    let tail = pre.span(v, n);
                    let jump_weighted = mid + 2.0 * tail;
                    let jump_count = mid_len + 2.0 * tail_len;
                    let jump_sq = mid_len + 4.0 * tail_len;
                    let r = rss(jump_weighted, jump_count, jump_sq);
                    if r < best_rss {
                        best_rss = r;
                        best_cps = vec![u, v];
                        best_sw = total - delta * jump_count;
                    }
                }
            }
        }
    }

    let seg = Segmentation::new(k, best_cps)?;
    Ok(ProfileParams {
        mu: best_sw / nf,
        sigma2: (best_rss / nf).max(sigma2_floor(y.values())),
        seg,
    })
}

/// One full sweep of conditional maximizations in the fixed order
/// proportions, jump height, per-profile parameters, repeated `nb_m_step`
/// times against the same responsibilities.
pub fn cm_sweep(
    data: &[Profile],
    tau: &Responsibilities,
    params: &MixtureParams,
    nb_m_step: usize,
) -> Result<MixtureParams> {
    let prefixes: Vec<PrefixSums> = data.iter().map(|y| PrefixSums::new(y.values())).collect();
    Ok(sweep_with(data, tau, params, nb_m_step, true, &prefixes)?.0)
}

fn sweep_with(
    data: &[Profile],
    tau: &Responsibilities,
    params: &MixtureParams,
    nb_m_step: usize,
    update_delta: bool,
    prefixes: &[PrefixSums],
) -> Result<(MixtureParams, Vec<String>)> {
    let mut current = params.clone();
    let mut warnings = Vec::new();
    for _ in 0..nb_m_step {
        current.pi = cm_pi_floored(tau);

        if update_delta {
            let (a, b) = delta_numerator_denominator(data, tau, &current, prefixes);
            if b > 0.0 {
                current.delta = a / b;
            } else {
                warnings.push(
                    "delta update skipped: no responsibility mass on jump clusters".into(),
                );
            }
        }

        let delta = current.delta;
        let per_profile: Result<Vec<[ProfileParams; 4]>> = data
            .par_iter()
            .zip(prefixes.par_iter())
            .map(|(y, pre)| {
                Ok([
                    cm_phi_cluster1(y),
                    cm_phi_segment_with(y, Cluster::OneJump, delta, pre)?,
                    cm_phi_segment_with(y, Cluster::TwoJumps, delta, pre)?,
                    cm_phi_segment_with(y, Cluster::OneDoubleJump, delta, pre)?,
                ])
            })
            .collect();
        current.per_profile = per_profile?;
    }
    Ok((current, warnings))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust per-profile noise scale: median absolute successive difference,
/// rescaled to estimate the Gaussian noise standard deviation.
fn robust_noise_scale(values: &[f64]) -> f64 {
    let mut diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    if diffs.is_empty() {
        return 0.0;
    }
    // |d| with d ~ N(0, 2 sigma^2): median(|d|) = sigma * sqrt(2) * 0.6745
    median(&mut diffs) / (std::f64::consts::SQRT_2 * 0.6745)
}

/// Draw a uniformly random admissible change-point pair `u < v` from the
/// central support, unranking a uniform index over all pairs.
fn draw_pair(rng: &mut impl Rng, n: usize) -> (usize, usize) {
    let (lo, hi) = central_support(n);
    let m = hi - lo + 1;
    let count = m * (m - 1) / 2;
    let mut r = rng.random_range(0..count);
    for u in lo..hi {
        let with_this_u = hi - u;
        if r < with_this_u {
            return (u, u + 1 + r);
        }
        r -= with_this_u;
    }
    unreachable!("pair unranking exhausted");
}

/// Random starting parameters.
///
/// Proportions start uniform. Change-points are drawn uniformly over the
/// admissible positions; each baseline mean is the mean of the drawn first
/// segment and each variance starts at the profile's sample variance. The
/// jump height starts from the halved median quarter-mean drop across
/// profiles, pushed away from zero by a tenth of the robust noise scale
/// when it lands too close.
pub fn initialize(data: &[Profile], seed: u64) -> Result<MixtureParams> {
    if data.is_empty() {
        return Err(Error::InvalidParams("cannot initialize on an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut quarter_drops: Vec<f64> = Vec::with_capacity(data.len());
    let mut noise_scales: Vec<f64> = Vec::with_capacity(data.len());
    for y in data {
        let n = y.len();
        let q = (n / 4).max(1);
        let head: f64 = y.values()[..q].iter().sum::<f64>() / q as f64;
        let tail: f64 = y.values()[n - q..].iter().sum::<f64>() / q as f64;
        quarter_drops.push(tail - head);
        noise_scales.push(robust_noise_scale(y.values()));
    }
    let mut delta = median(&mut quarter_drops) / 2.0;
    let scale = median(&mut noise_scales);
    if delta.abs() < 0.1 * scale {
        delta = if delta > 0.0 { 0.1 * scale } else { -0.1 * scale };
    }

    let per_profile: Vec<[ProfileParams; 4]> = data
        .iter()
        .map(|y| {
            let n = y.len();
            let var = sample_variance(y.values()).max(sigma2_floor(y.values()));
            let mean_of = |upto: usize| y.values()[..upto].iter().sum::<f64>() / upto as f64;

            let flat = ProfileParams {
                mu: mean_of(n),
                sigma2: var,
                seg: Segmentation::flat(),
            };
            let (lo, hi) = central_support(n);
            let u2 = rng.random_range(lo..=hi);
            let one = ProfileParams {
                mu: mean_of(u2),
                sigma2: var,
                seg: Segmentation::new(Cluster::OneJump, vec![u2])?,
            };
            let (u3, v3) = draw_pair(&mut rng, n);
            let two = ProfileParams {
                mu: mean_of(u3),
                sigma2: var,
                seg: Segmentation::new(Cluster::TwoJumps, vec![u3, v3])?,
            };
            let u4 = rng.random_range(lo..=hi);
            let double = ProfileParams {
                mu: mean_of(u4),
                sigma2: var,
                seg: Segmentation::new(Cluster::OneDoubleJump, vec![u4])?,
            };
            Ok([flat, one, two, double])
        })
        .collect::<Result<_>>()?;

    Ok(MixtureParams { pi: [0.25; 4], delta, per_profile })
}

struct StartFit {
    params: MixtureParams,
    tau: Responsibilities,
    trace: Vec<f64>,
    converged: bool,
    warnings: Vec<String>,
}

fn run_start(
    data: &[Profile],
    config: &FitConfig,
    prefixes: &[PrefixSums],
    start: usize,
) -> std::result::Result<StartFit, String> {
    let seed = mix2(config.seed, start as u64);
    let mut params = initialize(data, seed).map_err(|e| e.to_string())?;
    if let Some(d) = config.fix_delta {
        params.delta = d;
    }

    let mut trace = vec![observed_loglik(data, &params).map_err(|e| e.to_string())?];
    if !trace[0].is_finite() {
        return Err(format!("start {start}: initial log-likelihood {}", trace[0]));
    }

    let mut warnings = Vec::new();
    let mut converged = false;
    let mut last_tau = None;
    for _ in 0..config.max_em_iter {
        let tau = e_step(data, &params).map_err(|e| e.to_string())?;
        let (next, warns) = sweep_with(
            data,
            &tau,
            &params,
            config.nb_m_step,
            config.fix_delta.is_none(),
            prefixes,
        )
        .map_err(|e| e.to_string())?;
        params = next;
        warnings.extend(warns);
        last_tau = Some(tau);

        let ll = observed_loglik(data, &params).map_err(|e| e.to_string())?;
        if !ll.is_finite() {
            return Err(format!("start {start}: log-likelihood became {ll}"));
        }
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() / (1.0 + prev.abs()) < config.rel_tol {
            converged = true;
            break;
        }
    }

    Ok(StartFit {
        params,
        tau: last_tau.expect("max_em_iter >= 1"),
        trace,
        converged,
        warnings,
    })
}

/// Fit the mixture: `nb_init` independent starts, each alternating the
/// E-step with conditional-maximization sweeps until the relative
/// log-likelihood change falls under `rel_tol` or the iteration cap; the
/// start with the highest final observed-data log-likelihood wins.
pub fn fit(data: &[Profile], config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParams("cannot fit an empty dataset".into()));
    }
    let prefixes: Vec<PrefixSums> = data.iter().map(|y| PrefixSums::new(y.values())).collect();

    let starts: Vec<std::result::Result<StartFit, String>> = (0..config.nb_init)
        .into_par_iter()
        .map(|i| run_start(data, config, &prefixes, i))
        .collect();

    let mut best: Option<StartFit> = None;
    let mut failures = Vec::new();
    for outcome in starts {
        match outcome {
            Ok(s) => {
                let better = match &best {
                    None => true,
                    Some(b) => s.trace.last().unwrap() > b.trace.last().unwrap(),
                };
                if better {
                    best = Some(s);
                }
            }
            Err(msg) => failures.push(msg),
        }
    }

    let best = best.ok_or_else(|| {
        Error::DegenerateFit(format!(
            "all {} starts failed: {}",
            config.nb_init,
            failures.join("; ")
        ))
    })?;

    let hard_assignment = best
        .tau
        .tau
        .iter()
        .map(|row| {
            let mut arg = Cluster::Flat;
            let mut max = row[0];
            for k in Cluster::ALL {
                if row[k.index()] > max {
                    max = row[k.index()];
                    arg = k;
                }
            }
            arg
        })
        .collect();

    Ok(FitResult {
        params: best.params,
        tau: best.tau,
        loglik_trace: best.trace,
        converged: best.converged,
        hard_assignment,
        warnings: best.warnings,
    })
}
