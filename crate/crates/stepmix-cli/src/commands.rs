//! Subcommand implementations.

use std::collections::HashMap;
use std::io::Write;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use stepmix::ecm::{fit, FitConfig};
use stepmix::fisher::{expected_information, standard_errors};
use stepmix::metrics;
use stepmix::simulate::{generate, run_study, SimDesign, StudyId, StudyOverrides};
use stepmix::theory::{misclass_probability, monte_carlo_misclass, MisclassScenario};

use crate::report::{build_report, report_to_fit, FitReport};
use crate::trace::{output_writer, read_trace, read_truth, write_trace, write_truth};
use crate::{FitArgs, ReportArgs, SimulateArgs, TheoryArgs};

/// Partial configuration file; command-line flags take precedence over it,
/// and it takes precedence over the defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    nb_init: Option<usize>,
    nb_m_step: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    seed: Option<u64>,
    fix_delta: Option<f64>,
}

fn resolve_config(args: &FitArgs) -> Result<FitConfig> {
    let from_file: ConfigFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("malformed config file {}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    let defaults = FitConfig::default();
    Ok(FitConfig {
        nb_init: args.nb_init.or(from_file.nb_init).unwrap_or(defaults.nb_init),
        nb_m_step: args.nb_m_step.or(from_file.nb_m_step).unwrap_or(defaults.nb_m_step),
        max_em_iter: args.max_iter.or(from_file.max_iter).unwrap_or(defaults.max_em_iter),
        rel_tol: args.tol.or(from_file.tol).unwrap_or(defaults.rel_tol),
        seed: args.seed.or(from_file.seed).unwrap_or(defaults.seed),
        fix_delta: args.fix_delta.or(from_file.fix_delta),
    })
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32> {
    let data = read_trace(&args.input)?;
    let config = resolve_config(args)?;

    let result = fit(&data, &config).map_err(|e| anyhow!("fit failed: {e}"))?;

    let mut extra_warnings = Vec::new();
    if result.params.delta > 0.0 {
        let w = format!(
            "fitted jump height {} is positive; the model describes decreasing steps",
            result.params.delta
        );
        eprintln!("warning: {w}");
        extra_warnings.push(w);
    }

    let se = match expected_information(&data, &result) {
        Ok(info) => Some(standard_errors(&info)),
        Err(e) => {
            let w = format!("standard errors unavailable: {e}");
            eprintln!("warning: {w}");
            extra_warnings.push(w);
            None
        }
    };

    let report = build_report(
        &data,
        &result,
        se.as_ref(),
        &config,
        &args.input.display().to_string(),
        &extra_warnings,
    );
    let mut out = output_writer(Some(&args.out))?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n")?;
    out.flush()?;

    Ok(if result.converged { 0 } else { 2 })
}

/// Parse a `key=value,...` design description.
fn parse_design(spec: &str, default_seed: u64) -> Result<SimDesign> {
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("design entry `{part}` is not key=value"))?;
        fields.insert(key.trim(), value.trim());
    }
    let take = |key: &str| fields.get(key).copied();
    let parse_f64 = |key: &str, v: &str| -> Result<f64> {
        v.parse().map_err(|_| anyhow!("design {key} `{v}` is not a real"))
    };
    let parse_usize = |key: &str, v: &str| -> Result<usize> {
        v.parse().map_err(|_| anyhow!("design {key} `{v}` is not a positive integer"))
    };

    let s = parse_usize("S", take("S").ok_or_else(|| anyhow!("design needs S=<count>"))?)?;
    let n = parse_usize("n", take("n").ok_or_else(|| anyhow!("design needs n=<length>"))?)?;
    let delta =
        parse_f64("delta", take("delta").ok_or_else(|| anyhow!("design needs delta=<jump>"))?)?;
    let seed = match take("seed") {
        Some(v) => v.parse().map_err(|_| anyhow!("design seed `{v}` is not an integer"))?,
        None => default_seed,
    };

    let mut design = SimDesign::new(s, n, delta, seed);
    if let Some(v) = take("sigma") {
        design.sigma = parse_f64("sigma", v)?;
    }
    if let Some(v) = take("mu") {
        design.mu = parse_f64("mu", v)?;
    }
    if let Some(v) = take("mid_step") {
        design.mid_step = parse_usize("mid_step", v)?;
    }
    for key in fields.keys() {
        if !["S", "n", "delta", "seed", "sigma", "mu", "mid_step"].contains(key) {
            bail!("unknown design key `{key}`");
        }
    }
    Ok(design)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    match (&args.design, args.study) {
        (Some(_), Some(_)) => bail!("pass exactly one of --design or --study, not both"),
        (None, None) => bail!("pass one of --design or --study"),
        (Some(spec), None) => {
            let design = parse_design(spec, args.seed.unwrap_or(0))?;
            let (profiles, truth) = generate(&design)?;
            let out = output_writer(args.out.as_deref())?;
            write_trace(out, &profiles)?;
            if let Some(path) = &args.truth_out {
                let ids: Vec<String> = profiles.iter().map(|p| p.id().to_string()).collect();
                write_truth(output_writer(Some(path))?, &ids, &truth)?;
            }
        }
        (None, Some(study)) => {
            let study = StudyId::from_number(study)?;
            let overrides = StudyOverrides {
                replicates: args.replicates,
                sigma: args.sigma,
                seed: args.seed,
                cell_filter: args.cell.clone(),
                ..StudyOverrides::default()
            };
            let rows = run_study(study, &overrides)?;
            let mut w = csv::Writer::from_writer(output_writer(args.out.as_deref())?);
            w.write_record(["study", "cell", "replicate", "metric", "value"])?;
            for row in rows {
                w.write_record(&[
                    row.study.to_string(),
                    row.cell,
                    row.replicate.to_string(),
                    row.metric,
                    row.value.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(0)
}

fn parse_grid<T: std::str::FromStr>(name: &str, spec: &str) -> Result<Vec<T>> {
    let values: Vec<T> = spec
        .split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| anyhow!("{name} entry `{s}` unparseable")))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("{name} grid is empty");
    }
    Ok(values)
}

pub fn cmd_theory(args: &TheoryArgs) -> Result<i32> {
    let deltas: Vec<f64> = parse_grid("delta-grid", &args.delta_grid)?;
    let nms: Vec<usize> = parse_grid("nm-grid", &args.nm_grid)?;

    let mut w = csv::Writer::from_writer(output_writer(args.out.as_deref())?);
    let with_mc = args.mc.is_some();
    if with_mc {
        w.write_record(["delta", "n_m", "v", "p_closed", "p_mc", "note"])?;
    } else {
        w.write_record(["delta", "n_m", "v", "p_closed", "note"])?;
    }

    // symmetric overlap segments of length n_m around the profile center
    let center = args.n / 2;
    for &delta in &deltas {
        for &nm in &nms {
            let mut record = vec![delta.to_string(), nm.to_string()];
            let scenario = if nm >= 1 && center > nm && center + nm <= args.n.saturating_sub(1) {
                MisclassScenario::new(args.n, center - nm, center, center + nm, delta, args.sigma)
                    .ok()
            } else {
                None
            };
            match scenario {
                Some(sc) => {
                    let p = misclass_probability(&sc)?;
                    record.push(sc.variance_factor().to_string());
                    record.push(p.to_string());
                    if let Some(draws) = args.mc {
                        let estimate =
                            monte_carlo_misclass(&sc, draws, args.seed.unwrap_or(0))?;
                        record.push(estimate.to_string());
                    }
                    record.push(String::new());
                }
                None => {
                    record.push(String::new());
                    record.push(String::new());
                    if with_mc {
                        record.push(String::new());
                    }
                    record.push(format!(
                        "scenario invalid: n_m = {nm} does not fit a profile of length {}",
                        args.n
                    ));
                }
            }
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(0)
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.fit)
        .with_context(|| format!("cannot read fit report {}", args.fit.display()))?;
    let report: FitReport = serde_json::from_str(&text)
        .with_context(|| format!("malformed fit report {}", args.fit.display()))?;
    let truth_file = read_truth(&args.truth)?;

    // align truth rows to the report's profile order by id
    let report_ids: Vec<&str> = report.per_profile.iter().map(|p| p.id.as_str()).collect();
    let mut truth_index: HashMap<&str, usize> = HashMap::new();
    for (i, id) in truth_file.ids.iter().enumerate() {
        truth_index.insert(id.as_str(), i);
    }
    let missing: Vec<&&str> =
        report_ids.iter().filter(|id| !truth_index.contains_key(**id)).collect();
    let extra: Vec<&String> = truth_file
        .ids
        .iter()
        .filter(|id| !report_ids.contains(&id.as_str()))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        bail!(
            "profile ids disagree; missing from truth: [{}], absent from report: [{}]",
            missing.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
            extra.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
        );
    }

    let order: Vec<usize> = report_ids.iter().map(|id| truth_index[*id]).collect();
    let truth = stepmix::simulate::GroundTruth {
        labels: order.iter().map(|&i| truth_file.truth.labels[i]).collect(),
        segmentations: order
            .iter()
            .map(|&i| truth_file.truth.segmentations[i].clone())
            .collect(),
        lengths: order.iter().map(|&i| truth_file.truth.lengths[i]).collect(),
        delta: truth_file.truth.delta,
        mu: truth_file.truth.mu,
        sigma: truth_file.truth.sigma,
    };

    let fit = report_to_fit(&report)?;
    let eval = metrics::evaluate(&truth, &fit)?;

    let mut w = csv::Writer::from_writer(output_writer(args.out.as_deref())?);
    w.write_record(["metric", "value"])?;
    if let Some(d_r) = eval.d_r {
        w.write_record(["d_r", &d_r.to_string()])?;
    }
    for (k, v) in &eval.d_inf {
        w.write_record([format!("d_inf_k{k}"), v.to_string()])?;
    }
    w.write_record(["misclass_rate", &eval.misclass_rate.to_string()])?;
    for (k, row) in eval.confusion.iter().enumerate() {
        if !eval.row_present[k] {
            continue;
        }
        for (j, &p) in row.iter().enumerate() {
            w.write_record([format!("confusion_{}_{}", k + 1, j + 1), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(0)
}
