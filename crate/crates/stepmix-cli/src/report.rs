//! Fit report JSON: the full fitted state, standard errors, and the
//! effective configuration, round-trippable for downstream scoring.

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use stepmix::ecm::{FitConfig, FitResult};
use stepmix::fisher::{param_index, StandardErrors};
use stepmix::model::{
    Cluster, MixtureParams, Profile, ProfileParams, Responsibilities, Segmentation,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub nb_init: usize,
    pub nb_m_step: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub fix_delta: Option<f64>,
    pub input: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileReport {
    pub id: String,
    pub n: usize,
    pub cluster_posteriors: [f64; 4],
    pub hard_cluster: u8,
    pub mu_by_cluster: [f64; 4],
    pub sigma2_by_cluster: [f64; 4],
    pub change_points_by_cluster: [Vec<usize>; 4],
}

/// Standard errors with flagged (unavailable) entries as nulls, keeping
/// the JSON free of non-finite floats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeReport {
    pub pi: Option<[f64; 4]>,
    pub delta: Option<f64>,
    pub per_profile: Vec<ProfileSeReport>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSeReport {
    pub mu: [Option<f64>; 4],
    pub sigma2: [Option<f64>; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub generated_at_unix: u64,
    pub seed: u64,
    pub config_echo: ConfigEcho,
    pub converged: bool,
    pub pi: [f64; 4],
    pub delta: f64,
    pub loglik_trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub per_profile: Vec<ProfileReport>,
    pub standard_errors: Option<SeReport>,
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn build_report(
    data: &[Profile],
    result: &FitResult,
    se: Option<&StandardErrors>,
    config: &FitConfig,
    input: &str,
    extra_warnings: &[String],
) -> FitReport {
    let per_profile = data
        .iter()
        .enumerate()
        .map(|(s, y)| {
            let params = &result.params.per_profile[s];
            ProfileReport {
                id: y.id().to_string(),
                n: y.len(),
                cluster_posteriors: result.tau.tau[s],
                hard_cluster: result.hard_assignment[s].number(),
                mu_by_cluster: std::array::from_fn(|k| params[k].mu),
                sigma2_by_cluster: std::array::from_fn(|k| params[k].sigma2),
                change_points_by_cluster: std::array::from_fn(|k| {
                    params[k].seg.change_points().to_vec()
                }),
            }
        })
        .collect();

    let standard_errors = se.map(|se| SeReport {
        pi: se.pi,
        delta: se.delta,
        per_profile: (0..data.len())
            .map(|s| ProfileSeReport {
                mu: std::array::from_fn(|k| {
                    finite_or_none(se.mu[param_index(s, Cluster::ALL[k])])
                }),
                sigma2: std::array::from_fn(|k| {
                    finite_or_none(se.sigma2[param_index(s, Cluster::ALL[k])])
                }),
            })
            .collect(),
        flags: se.flags.clone(),
    });

    let mut warnings = result.warnings.clone();
    warnings.extend_from_slice(extra_warnings);
    warnings.dedup();

    FitReport {
        schema_version: SCHEMA_VERSION,
        generated_at_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed: config.seed,
        config_echo: ConfigEcho {
            nb_init: config.nb_init,
            nb_m_step: config.nb_m_step,
            max_iter: config.max_em_iter,
            tol: config.rel_tol,
            seed: config.seed,
            fix_delta: config.fix_delta,
            input: input.to_string(),
        },
        converged: result.converged,
        pi: result.params.pi,
        delta: result.params.delta,
        loglik_trace: result.loglik_trace.clone(),
        warnings,
        per_profile,
        standard_errors,
    }
}

/// Rebuild the fitted state a report describes, for scoring against truth.
pub fn report_to_fit(report: &FitReport) -> Result<FitResult> {
    if report.schema_version != SCHEMA_VERSION {
        bail!(
            "unsupported report schema version {} (expected {SCHEMA_VERSION})",
            report.schema_version
        );
    }
    let mut per_profile = Vec::with_capacity(report.per_profile.len());
    let mut tau = Vec::with_capacity(report.per_profile.len());
    let mut hard = Vec::with_capacity(report.per_profile.len());
    for p in &report.per_profile {
        let mut set = Vec::with_capacity(4);
        for cluster in Cluster::ALL {
            let k = cluster.index();
            let seg = Segmentation::new(cluster, p.change_points_by_cluster[k].clone())
                .map_err(|e| anyhow!("profile `{}`: {e}", p.id))?;
            set.push(ProfileParams {
                mu: p.mu_by_cluster[k],
                sigma2: p.sigma2_by_cluster[k],
                seg,
            });
        }
        let set: [ProfileParams; 4] =
            set.try_into().expect("exactly four clusters");
        per_profile.push(set);
        tau.push(p.cluster_posteriors);
        hard.push(
            Cluster::from_number(p.hard_cluster)
                .map_err(|e| anyhow!("profile `{}`: {e}", p.id))?,
        );
    }
    Ok(FitResult {
        params: MixtureParams { pi: report.pi, delta: report.delta, per_profile },
        tau: Responsibilities { tau },
        loglik_trace: report.loglik_trace.clone(),
        converged: report.converged,
        hard_assignment: hard,
        warnings: report.warnings.clone(),
    })
}
