//! Trace and ground-truth CSV files.
//!
//! Trace schema: header `profile_id,t,intensity`, rows grouped by profile
//! with `t` running 1..n without gaps. Truth schema: header
//! `profile_id,cluster,n,change_points,delta,mu,sigma` with change-points
//! semicolon-separated.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use stepmix::model::{Cluster, Profile, Segmentation};
use stepmix::simulate::GroundTruth;

const TRACE_HEADER: [&str; 3] = ["profile_id", "t", "intensity"];
const TRUTH_HEADER: [&str; 7] =
    ["profile_id", "cluster", "n", "change_points", "delta", "mu", "sigma"];

/// Read a trace file into profiles, preserving file order.
pub fn read_trace(path: &Path) -> Result<Vec<Profile>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open trace file {}", path.display()))?;
    let header = reader.headers().context("trace file has no header")?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        bail!(
            "trace header must be `{}`, found `{}`",
            TRACE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        );
    }

    let mut profiles = Vec::new();
    let mut finished: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut current_id: Option<String> = None;
    let mut values: Vec<f64> = Vec::new();

    let mut flush = |id: &str, values: &mut Vec<f64>, line: u64| -> Result<()> {
        let profile = Profile::new(id, std::mem::take(values))
            .map_err(|e| anyhow!("near line {line}: {e}"))?;
        profiles.push(profile);
        Ok(())
    };

    let mut line = 1u64;
    for record in reader.records() {
        let record = record.with_context(|| format!("line {}", line + 1))?;
        line = record.position().map_or(line + 1, |p| p.line());
        if record.len() != 3 {
            bail!("line {line}: expected 3 fields, found {}", record.len());
        }
        let id = record[0].to_string();
        let t: usize = record[1]
            .parse()
            .map_err(|_| anyhow!("line {line}: t `{}` is not a positive integer", &record[1]))?;
        let intensity: f64 = record[2]
            .parse()
            .map_err(|_| anyhow!("line {line}: intensity `{}` is not a real", &record[2]))?;
        if !intensity.is_finite() {
            bail!("line {line}: intensity `{intensity}` is not finite");
        }

        let same_profile = current_id.as_deref() == Some(id.as_str());
        if !same_profile {
            if let Some(prev) = current_id.take() {
                flush(&prev, &mut values, line)?;
                finished.insert(prev);
            }
            if finished.contains(&id) {
                bail!("line {line}: profile `{id}` reappears after its rows ended; rows must be grouped by profile");
            }
            current_id = Some(id);
        }
        let expected_t = values.len() + 1;
        if t != expected_t {
            bail!(
                "line {line}: profile `{}` expects t = {expected_t}, found {t}",
                current_id.as_deref().unwrap_or("?")
            );
        }
        values.push(intensity);
    }
    if let Some(prev) = current_id.take() {
        flush(&prev, &mut values, line)?;
    }
    if profiles.is_empty() {
        bail!("trace file contains no profiles");
    }
    Ok(profiles)
}

/// Write profiles in the trace schema.
pub fn write_trace<W: Write>(writer: W, profiles: &[Profile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for p in profiles {
        for (i, v) in p.values().iter().enumerate() {
            w.write_record(&[p.id().to_string(), (i + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write ground truth in the truth schema, one row per profile.
pub fn write_truth<W: Write>(writer: W, ids: &[String], truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRUTH_HEADER)?;
    for (i, id) in ids.iter().enumerate() {
        let cps = truth.segmentations[i]
            .change_points()
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record(&[
            id.clone(),
            truth.labels[i].number().to_string(),
            truth.lengths[i].to_string(),
            cps,
            truth.delta.to_string(),
            truth.mu.to_string(),
            truth.sigma.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Ground truth re-keyed by profile id, as read back from a truth file.
pub struct TruthFile {
    pub ids: Vec<String>,
    pub truth: GroundTruth,
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open truth file {}", path.display()))?;
    let header = reader.headers().context("truth file has no header")?.clone();
    if header.iter().collect::<Vec<_>>() != TRUTH_HEADER {
        bail!(
            "truth header must be `{}`, found `{}`",
            TRUTH_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        );
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut segmentations = Vec::new();
    let mut lengths = Vec::new();
    let mut delta: Option<f64> = None;
    let mut mu: Option<f64> = None;
    let mut sigma: Option<f64> = None;

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let cluster_num: u8 = record[1]
            .parse()
            .map_err(|_| anyhow!("line {line}: cluster `{}` is not in 1..=4", &record[1]))?;
        let cluster = Cluster::from_number(cluster_num)
            .map_err(|e| anyhow!("line {line}: {e}"))?;
        let n: usize = record[2]
            .parse()
            .map_err(|_| anyhow!("line {line}: n `{}` is not a positive integer", &record[2]))?;
        let cps: Vec<usize> = if record[3].is_empty() {
            Vec::new()
        } else {
            record[3]
                .split(';')
                .map(|s| {
                    s.parse()
                        .map_err(|_| anyhow!("line {line}: change-point `{s}` is not an integer"))
                })
                .collect::<Result<_>>()?
        };
        let seg = Segmentation::new(cluster, cps).map_err(|e| anyhow!("line {line}: {e}"))?;
        seg.validate_for_length(n).map_err(|e| anyhow!("line {line}: {e}"))?;

        let row_delta: f64 = record[4].parse().map_err(|_| anyhow!("line {line}: bad delta"))?;
        let row_mu: f64 = record[5].parse().map_err(|_| anyhow!("line {line}: bad mu"))?;
        let row_sigma: f64 = record[6].parse().map_err(|_| anyhow!("line {line}: bad sigma"))?;
        for (slot, value, name) in [
            (&mut delta, row_delta, "delta"),
            (&mut mu, row_mu, "mu"),
            (&mut sigma, row_sigma, "sigma"),
        ] {
            match slot {
                None => *slot = Some(value),
                Some(existing) if *existing != value => {
                    bail!("line {line}: {name} differs across rows ({existing} vs {value})")
                }
                _ => {}
            }
        }

        ids.push(record[0].to_string());
        labels.push(cluster);
        segmentations.push(seg);
        lengths.push(n);
    }
    if ids.is_empty() {
        bail!("truth file contains no rows");
    }
    Ok(TruthFile {
        ids,
        truth: GroundTruth {
            labels,
            segmentations,
            lengths,
            delta: delta.unwrap(),
            mu: mu.unwrap(),
            sigma: sigma.unwrap(),
        },
    })
}

/// Open `path` for writing, or standard output when absent.
pub fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p)
                .with_context(|| format!("cannot create output file {}", p.display()))?;
            Ok(Box::new(f))
        }
        None => Ok(Box::new(std::io::stdout())),
    }
}
