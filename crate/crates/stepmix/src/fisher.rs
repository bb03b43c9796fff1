//! Expected complete-data Fisher information at the fitted parameters, and
//! the standard errors derived from it.
//!
//! The matrix is almost block diagonal: the proportion block is decoupled,
//! the (mu, sigma2) cross block vanishes at the fitted means, and the only
//! coupling ties the shared jump height to every per-profile mean and
//! variance. That structure is an arrowhead matrix, so the full matrix is
//! never materialized: standard errors come from the exact arrowhead
//! inverse (a Schur complement eliminating the per-profile diagonal).

use crate::ecm::FitResult;
use crate::error::{Error, Result};
use crate::model::{Cluster, Profile};

/// The nonzero blocks of the expected complete-data information matrix.
///
/// Per-profile vectors are laid out as `s * 4 + k` with `k` the 0-based
/// cluster index (see [`param_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct InfoBlocks {
    /// Information of the three free proportions.
    pub pi_block: [[f64; 3]; 3],
    /// Information of the shared jump height.
    pub delta_scalar: f64,
    /// Diagonal information of each baseline mean.
    pub mu_diag: Vec<f64>,
    /// Diagonal information of each variance.
    pub sigma2_diag: Vec<f64>,
    /// Cross information between the jump height and each mean.
    pub delta_mu_cross: Vec<f64>,
    /// Cross information between the jump height and each variance.
    pub delta_sigma2_cross: Vec<f64>,
}

/// Index of the (profile, cluster) slot in the per-parameter vectors.
pub fn param_index(s: usize, k: Cluster) -> usize {
    s * 4 + k.index()
}

/// Evaluate every information block at the fitted parameters with the
/// fitted responsibilities.
pub fn expected_information(data: &[Profile], fit: &FitResult) -> Result<InfoBlocks> {
    let params = &fit.params;
    if params.n_profiles() != data.len() || fit.tau.n_profiles() != data.len() {
        return Err(Error::InvalidParams(
            "fit and data must cover the same profiles".into(),
        ));
    }
    if let Some(k) = params.pi.iter().position(|&p| p <= 0.0) {
        return Err(Error::Domain(format!(
            "proportion of cluster {} is zero: the proportion information block is undefined; \
             refit with responsibilities that give every cluster positive mass",
            k + 1
        )));
    }

    let s_count = data.len() as f64;
    let inv_pi4 = 1.0 / params.pi[3];
    let mut pi_block = [[s_count * inv_pi4; 3]; 3];
    for (j, row) in pi_block.iter_mut().enumerate() {
        row[j] = s_count * (1.0 / params.pi[j] + inv_pi4);
    }

    let mut delta_scalar = 0.0;
    let mut mu_diag = vec![0.0; 4 * data.len()];
    let mut sigma2_diag = vec![0.0; 4 * data.len()];
    let mut delta_mu_cross = vec![0.0; 4 * data.len()];
    let mut delta_sigma2_cross = vec![0.0; 4 * data.len()];

    for (s, y) in data.iter().enumerate() {
        let n = y.len() as f64;
        for k in Cluster::ALL {
            let phi = params.params(s, k);
            if phi.sigma2 <= 0.0 {
                return Err(Error::NonPositiveVariance(phi.sigma2));
            }
            let tau = fit.tau.tau[s][k.index()];
            let idx = param_index(s, k);

            mu_diag[idx] = n * tau / phi.sigma2;
            sigma2_diag[idx] = n * tau / (2.0 * phi.sigma2 * phi.sigma2);

            if k == Cluster::Flat {
                continue;
            }
            let lens = phi.seg.segment_lengths(y.len());
            // t_t^2 summed, and t_t summed, over the incidence vector
            let (incidence_sq, incidence_sum) = match k {
                Cluster::OneJump => (lens[1] as f64, lens[1] as f64),
                Cluster::TwoJumps => (
                    (lens[1] + 4 * lens[2]) as f64,
                    (lens[1] + 2 * lens[2]) as f64,
                ),
                Cluster::OneDoubleJump => (4.0 * lens[1] as f64, 2.0 * lens[1] as f64),
                Cluster::Flat => unreachable!(),
            };
            delta_scalar += tau * incidence_sq / phi.sigma2;
            delta_mu_cross[idx] = tau * incidence_sum / phi.sigma2;

            let residual_dot_t: f64 = y
                .values()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let t = phi.seg.jump_factor(i + 1);
                    (v - phi.mu - params.delta * t) * t
                })
                .sum();
            delta_sigma2_cross[idx] =
                tau * residual_dot_t / (phi.sigma2 * phi.sigma2);
        }
    }

    Ok(InfoBlocks {
        pi_block,
        delta_scalar,
        mu_diag,
        sigma2_diag,
        delta_mu_cross,
        delta_sigma2_cross,
    })
}

/// Standard errors derived from [`InfoBlocks`].
///
/// Flagged entries are `NaN` (or `None` for the scalar fields) and carry a
/// diagnostic in `flags`; nothing panics on singular blocks.
#[derive(Debug, Clone)]
pub struct StandardErrors {
    /// All four proportion standard errors; the fourth comes from the
    /// covariance of the three free ones.
    pub pi: Option<[f64; 4]>,
    pub delta: Option<f64>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub flags: Vec<String>,
}

fn invert_3x3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !det.is_finite() || det.abs() <= 1e-14 * scale.powi(3).max(f64::MIN_POSITIVE) {
        return None;
    }
    let inv_det = 1.0 / det;
    // cofactor expansion, transposed
    let cofactor = |i: usize, j: usize| {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        let (c, d) = ((j + 1) % 3, (j + 2) % 3);
        (m[a][c] * m[b][d] - m[a][d] * m[b][c]) * inv_det
    };
    Some(std::array::from_fn(|j| std::array::from_fn(|i| cofactor(i, j))))
}

/// Standard errors from the information blocks.
///
/// The proportion block inverts directly. For the rest, the matrix over
/// (delta, all mu, all sigma2) is an arrowhead: diagonal per-profile blocks
/// bordered by the delta cross terms. Its inverse diagonal is exact:
/// eliminating the per-profile diagonal leaves the jump-height Schur
/// complement `I(delta) - sum b_i^2 / d_i`, and each per-profile diagonal
/// entry picks up `(b_i / d_i)^2` times the inverted complement.
pub fn standard_errors(info: &InfoBlocks) -> StandardErrors {
    let mut flags = Vec::new();

    let pi = match invert_3x3(&info.pi_block) {
        Some(inv) => {
            let var4: f64 = inv.iter().flatten().sum();
            let mut se = [0.0; 4];
            let mut ok = true;
            for j in 0..3 {
                if inv[j][j] < 0.0 {
                    ok = false;
                }
                se[j] = inv[j][j].max(0.0).sqrt();
            }
            se[3] = var4.max(0.0).sqrt();
            if ok {
                Some(se)
            } else {
                flags.push("proportion block inverse has negative diagonal".into());
                None
            }
        }
        None => {
            flags.push("proportion block is singular".into());
            None
        }
    };

    let mut schur = info.delta_scalar;
    let n_params = info.mu_diag.len();
    let mut dead = vec![false; n_params];
    for (i, dead_flag) in dead.iter_mut().enumerate() {
        if info.mu_diag[i] > 0.0 && info.sigma2_diag[i] > 0.0 {
            schur -= info.delta_mu_cross[i].powi(2) / info.mu_diag[i]
                + info.delta_sigma2_cross[i].powi(2) / info.sigma2_diag[i];
        } else {
            *dead_flag = true;
        }
    }
    if dead.iter().any(|&d| d) {
        flags.push(format!(
            "{} (profile, cluster) entries carry no information (zero responsibility); \
             their standard errors are flagged NaN",
            dead.iter().filter(|&&d| d).count()
        ));
    }

    let delta = if schur > 0.0 {
        Some((1.0 / schur).sqrt())
    } else {
        flags.push(format!(
            "jump-height Schur complement is not positive ({schur}); delta standard error \
             unavailable, per-profile errors fall back to their diagonal blocks"
        ));
        None
    };

    let corrected = |d: f64, b: f64| -> f64 {
        let base = 1.0 / d;
        match delta {
            Some(_) => (base + (b / d).powi(2) / schur).sqrt(),
            None => base.sqrt(),
        }
    };

    let mut mu = vec![f64::NAN; n_params];
    let mut sigma2 = vec![f64::NAN; n_params];
    for i in 0..n_params {
        if dead[i] {
            continue;
        }
        mu[i] = corrected(info.mu_diag[i], info.delta_mu_cross[i]);
        sigma2[i] = corrected(info.sigma2_diag[i], info.delta_sigma2_cross[i]);
    }

    StandardErrors { pi, delta, mu, sigma2, flags }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecm::FitResult;
    use crate::model::{
        mean_vector, MixtureParams, ProfileParams, Responsibilities, Segmentation,
    };
    use approx::assert_relative_eq;

    fn synthetic_fit(data: &[Profile], params: MixtureParams, tau: Vec<[f64; 4]>) -> FitResult {
        let hard_assignment = tau
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
        let _ = data;
        FitResult {
            params,
            tau: Responsibilities { tau },
            loglik_trace: vec![0.0],
            converged: true,
            hard_assignment,
            warnings: vec![],
        }
    }

    fn params_for(data: &[Profile], delta: f64, cps: &[(usize, usize)]) -> MixtureParams {
        let per_profile = data
            .iter()
            .zip(cps)
            .map(|(y, &(u, v))| {
                let n = y.len();
                let mu = y.values().iter().sum::<f64>() / n as f64;
                [
                    ProfileParams { mu, sigma2: 1.0, seg: Segmentation::flat() },
                    ProfileParams {
                        mu,
                        sigma2: 1.0,
                        seg: Segmentation::new(Cluster::OneJump, vec![u]).unwrap(),
                    },
                    ProfileParams {
                        mu,
                        sigma2: 1.0,
                        seg: Segmentation::new(Cluster::TwoJumps, vec![u, v]).unwrap(),
                    },
                    ProfileParams {
                        mu,
                        sigma2: 1.0,
                        seg: Segmentation::new(Cluster::OneDoubleJump, vec![u]).unwrap(),
                    },
                ]
            })
            .collect();
        MixtureParams { pi: [0.25; 4], delta, per_profile }
    }

    #[test]
    fn pi_block_uniform_proportions() {
        // 100 profiles, uniform proportions: S * [[8,4,4],[4,8,4],[4,4,8]]
        let data: Vec<Profile> = (0..100)
            .map(|i| Profile::new(format!("p{i}"), vec![0.0, 1.0, 2.0, 3.0]).unwrap())
            .collect();
        let cps: Vec<(usize, usize)> = (0..100).map(|_| (1, 2)).collect();
        let params = params_for(&data, -1.0, &cps);
        let fit = synthetic_fit(&data, params, vec![[0.25; 4]; 100]);
        let info = expected_information(&data, &fit).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let expected = if j == k { 800.0 } else { 400.0 };
                assert_relative_eq!(info.pi_block[j][k], expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn delta_scalar_single_profile_term() {
        // one profile, all responsibility on cluster 2, unit variance,
        // second segment of length 10
        let n = 14;
        let u = 4;
        let seg = Segmentation::new(Cluster::OneJump, vec![u]).unwrap();
        let values = mean_vector(n, Cluster::OneJump, 2.0, -1.0, &seg).unwrap();
        let data = vec![Profile::new("p", values).unwrap()];
        let params = params_for(&data, -1.0, &[(u, u + 2)]);
        let fit = synthetic_fit(&data, params, vec![[0.0, 1.0, 0.0, 0.0]]);
        let info = expected_information(&data, &fit).unwrap();
        assert_relative_eq!(info.delta_scalar, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn delta_scalar_grows_with_segment_lengths() {
        let n = 20;
        let grow = |u2: usize, cps3: (usize, usize), u4: usize| -> f64 {
            let data = vec![Profile::new("p", vec![0.0; n]).unwrap()];
            let mut params = params_for(&data, -1.0, &[(u2, u2 + 1)]);
            params.per_profile[0][1].seg =
                Segmentation::new(Cluster::OneJump, vec![u2]).unwrap();
            params.per_profile[0][2].seg =
                Segmentation::new(Cluster::TwoJumps, vec![cps3.0, cps3.1]).unwrap();
            params.per_profile[0][3].seg =
                Segmentation::new(Cluster::OneDoubleJump, vec![u4]).unwrap();
            let fit = synthetic_fit(&data, params, vec![[0.1, 0.3, 0.3, 0.3]]);
            expected_information(&data, &fit).unwrap().delta_scalar
        };
        let base = grow(10, (8, 14), 10);
        assert!(grow(9, (8, 14), 10) > base, "larger n22 must raise the information");
        assert!(grow(10, (7, 14), 10) > base, "larger n32 must raise the information");
        assert!(grow(10, (8, 13), 10) > base, "larger n33 must raise the information");
        assert!(grow(10, (8, 14), 9) > base, "larger n42 must raise the information");
    }

    #[test]
    fn zero_proportion_is_an_error() {
        let data = vec![Profile::new("p", vec![0.0, 1.0, 2.0, 3.0]).unwrap()];
        let mut params = params_for(&data, -1.0, &[(1, 2)]);
        params.pi = [0.5, 0.5, 0.0, 0.0];
        let fit = synthetic_fit(&data, params, vec![[0.5, 0.5, 0.0, 0.0]]);
        assert!(expected_information(&data, &fit).is_err());
    }

    #[test]
    fn se_delta_without_cross_terms() {
        let info = InfoBlocks {
            pi_block: [[800.0, 400.0, 400.0], [400.0, 800.0, 400.0], [400.0, 400.0, 800.0]],
            delta_scalar: 25.0,
            mu_diag: vec![10.0; 8],
            sigma2_diag: vec![5.0; 8],
            delta_mu_cross: vec![0.0; 8],
            delta_sigma2_cross: vec![0.0; 8],
        };
        let se = standard_errors(&info);
        assert_relative_eq!(se.delta.unwrap(), 0.2, epsilon = 1e-12);
        // block-diagonal case: per-parameter SEs are the reciprocal roots
        for &v in &se.mu {
            assert_relative_eq!(v, (1.0f64 / 10.0).sqrt(), epsilon = 1e-12);
        }
        for &v in &se.sigma2 {
            assert_relative_eq!(v, (1.0f64 / 5.0).sqrt(), epsilon = 1e-12);
        }
        assert!(se.flags.is_empty());
    }

    #[test]
    fn se_pi_symmetric_under_uniform_proportions() {
        let info = InfoBlocks {
            pi_block: [[800.0, 400.0, 400.0], [400.0, 800.0, 400.0], [400.0, 400.0, 800.0]],
            delta_scalar: 25.0,
            mu_diag: vec![10.0; 8],
            sigma2_diag: vec![5.0; 8],
            delta_mu_cross: vec![0.0; 8],
            delta_sigma2_cross: vec![0.0; 8],
        };
        let se = standard_errors(&info).pi.unwrap();
        assert_relative_eq!(se[0], se[1], epsilon = 1e-12);
        assert_relative_eq!(se[1], se[2], epsilon = 1e-12);
        assert!(se[3] > 0.0);
    }

    #[test]
    fn cross_terms_inflate_standard_errors() {
        let base = InfoBlocks {
            pi_block: [[800.0, 400.0, 400.0], [400.0, 800.0, 400.0], [400.0, 400.0, 800.0]],
            delta_scalar: 25.0,
            mu_diag: vec![10.0; 8],
            sigma2_diag: vec![5.0; 8],
            delta_mu_cross: vec![0.0; 8],
            delta_sigma2_cross: vec![0.0; 8],
        };
        let mut coupled = base.clone();
        coupled.delta_mu_cross = vec![1.5; 8];
        coupled.delta_sigma2_cross = vec![0.5; 8];
        let se0 = standard_errors(&base);
        let se1 = standard_errors(&coupled);
        assert!(se1.delta.unwrap() > se0.delta.unwrap());
        assert!(se1.mu[0] > se0.mu[0]);
        assert!(se1.sigma2[0] > se0.sigma2[0]);
    }

    #[test]
    fn singular_blocks_flag_instead_of_crashing() {
        let info = InfoBlocks {
            pi_block: [[0.0; 3]; 3],
            delta_scalar: 1.0,
            mu_diag: vec![0.0; 4],
            sigma2_diag: vec![0.0; 4],
            delta_mu_cross: vec![0.0; 4],
            delta_sigma2_cross: vec![0.0; 4],
        };
        let se = standard_errors(&info);
        assert!(se.pi.is_none());
        assert!(!se.flags.is_empty());
        assert!(se.mu.iter().all(|v| v.is_nan()));
    }
}
