//! Benchmark study grids.
//!
//! Three studies over the synthetic designs:
//!
//! 1. initialization budget versus inner maximization sweeps, on a fixed
//!    100 x 100 design;
//! 2. joint growth of the number of profiles and their length;
//! 3. classification with the jump height pinned to a multiple of the
//!    truth instead of being estimated.
//!
//! Each (cell, replicate) job draws its own seeds, so grids are
//! reproducible and parallelize without shared RNG state. Results come
//! back as tidy rows, one metric value each.

use rayon::prelude::*;

use crate::ecm::{fit, FitConfig};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::seeding::{mix2, mix3};
use crate::simulate::{generate, mid_step_gap, SimDesign};

/// Which benchmark study to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyId {
    One,
    Two,
    Three,
}

impl StudyId {
    pub fn from_number(id: u8) -> Result<Self> {
        match id {
            1 => Ok(StudyId::One),
            2 => Ok(StudyId::Two),
            3 => Ok(StudyId::Three),
            _ => Err(Error::InvalidDesign(format!("study {id} does not exist; pick 1, 2, or 3"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            StudyId::One => 1,
            StudyId::Two => 2,
            StudyId::Three => 3,
        }
    }
}

/// Optional restrictions of a study grid. `None` fields keep the study's
/// defaults. `s_values`/`n_values` replace the size grid for study 2 and
/// override the fixed sizes of studies 1 and 3 (first element wins there).
#[derive(Debug, Clone, Default)]
pub struct StudyOverrides {
    pub deltas: Option<Vec<f64>>,
    pub mid_step_fracs: Option<Vec<f64>>,
    /// Study 1 only: (nb_init, nb_m_step) couples.
    pub types: Option<Vec<(usize, usize)>>,
    pub s_values: Option<Vec<usize>>,
    pub n_values: Option<Vec<usize>>,
    /// Study 3 only: multiples of the true jump pinned during fitting.
    pub factors: Option<Vec<f64>>,
    pub replicates: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    /// Keep only cells whose key-value description matches every entry of
    /// this comma-separated `key=value` list.
    pub cell_filter: Option<String>,
}

/// One metric value of one replicate of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub study: u8,
    pub cell: String,
    pub replicate: usize,
    pub metric: String,
    pub value: f64,
}

struct Cell {
    label: String,
    s: usize,
    n: usize,
    delta: f64,
    gap: usize,
    sigma: f64,
    nb_init: usize,
    nb_m_step: usize,
    max_em_iter: usize,
    fix_delta: Option<f64>,
}

const DEFAULT_DELTAS: [f64; 4] = [-5.0, -2.0, -1.0, -0.5];
const DEFAULT_FRACS: [f64; 3] = [0.0, 0.3, 0.6];
const DEFAULT_FACTORS: [f64; 7] = [0.8, 0.9, 1.0, 1.1, 1.2, 1.5, 2.0];
const DEFAULT_REPLICATES: usize = 30;

fn frac_label(frac: f64) -> String {
    if frac == 0.0 {
        "0".to_string()
    } else {
        format!("{frac}n")
    }
}

/// Split on commas that sit outside parentheses, so couples like
/// `type=(10,1)` survive.
fn split_cell_spec(spec: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in spec.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                parts.push(current.trim().to_string());
                current = String::new();
            }
            _ => current.push(c),
        }
    }
    if !current.trim().is_empty() {
        parts.push(current.trim().to_string());
    }
    parts
}

/// A cell matches a filter when every `key=value` entry of the filter
/// appears verbatim in the cell label.
fn cell_matches(label: &str, filter: &str) -> bool {
    let cell_parts = split_cell_spec(label);
    split_cell_spec(filter)
        .iter()
        .all(|wanted| cell_parts.iter().any(|part| part == wanted))
}

fn build_cells(study: StudyId, ov: &StudyOverrides) -> Result<Vec<Cell>> {
    let deltas = ov.deltas.clone().unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
    let fracs = ov.mid_step_fracs.clone().unwrap_or_else(|| DEFAULT_FRACS.to_vec());
    let sigma = ov.sigma.unwrap_or(1.0);

    let mut cells = Vec::new();
    match study {
        StudyId::One => {
            let s = ov.s_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(100);
            let n = ov.n_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(100);
            let types = ov
                .types
                .clone()
                .unwrap_or_else(|| vec![(1, 1), (10, 1), (1, 10)]);
            for &delta in &deltas {
                for &frac in &fracs {
                    for &(nb_init, nb_m_step) in &types {
                        // the single-start single-sweep couple gets the same
                        // total iteration budget as the others
                        let max_em_iter =
                            if (nb_init, nb_m_step) == (1, 1) { 1000 } else { 100 };
                        cells.push(Cell {
                            label: format!(
                                "delta={delta},mid_step={},type=({nb_init},{nb_m_step})",
                                frac_label(frac)
                            ),
                            s,
                            n,
                            delta,
                            gap: mid_step_gap(frac, n),
                            sigma,
                            nb_init,
                            nb_m_step,
                            max_em_iter,
                            fix_delta: None,
                        });
                    }
                }
            }
        }
        StudyId::Two => {
            let s_grid = ov.s_values.clone().unwrap_or_else(|| vec![100, 250, 500]);
            let n_grid = ov.n_values.clone().unwrap_or_else(|| vec![100, 250, 500]);
            for &s in &s_grid {
                for &n in &n_grid {
                    for &delta in &deltas {
                        for &frac in &fracs {
                            cells.push(Cell {
                                label: format!(
                                    "S={s},n={n},delta={delta},mid_step={}",
                                    frac_label(frac)
                                ),
                                s,
                                n,
                                delta,
                                gap: mid_step_gap(frac, n),
                                sigma,
                                nb_init: 10,
                                nb_m_step: 1,
                                max_em_iter: 100,
                                fix_delta: None,
                            });
                        }
                    }
                }
            }
        }
        StudyId::Three => {
            let s = ov.s_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(100);
            let n = ov.n_values.as_ref().and_then(|v| v.first().copied()).unwrap_or(250);
            let factors = ov.factors.clone().unwrap_or_else(|| DEFAULT_FACTORS.to_vec());
            for &delta in &deltas {
                for &frac in &fracs {
                    for &factor in &factors {
                        cells.push(Cell {
                            label: format!(
                                "delta={delta},mid_step={},factor={factor}",
                                frac_label(frac)
                            ),
                            s,
                            n,
                            delta,
                            gap: mid_step_gap(frac, n),
                            sigma,
                            nb_init: 10,
                            nb_m_step: 1,
                            max_em_iter: 100,
                            fix_delta: Some(factor * delta),
                        });
                    }
                }
            }
        }
    }

    if let Some(filter) = &ov.cell_filter {
        cells.retain(|c| cell_matches(&c.label, filter));
        if cells.is_empty() {
            return Err(Error::InvalidDesign(format!(
                "cell filter `{filter}` matches no cell of study {}",
                study.number()
            )));
        }
    }
    Ok(cells)
}

fn run_replicate(
    study: StudyId,
    cell: &Cell,
    cell_idx: usize,
    replicate: usize,
    seed_root: u64,
) -> Result<Vec<StudyRow>> {
    let data_seed = mix3(seed_root, cell_idx as u64, replicate as u64);
    let fit_seed = mix2(data_seed, 0xF17);

    let design = SimDesign::new(cell.s, cell.n, cell.delta, data_seed)
        .with_mid_step(cell.gap)
        .with_noise(cell.sigma);
    let (data, truth) = generate(&design)?;

    let config = FitConfig {
        nb_init: cell.nb_init,
        nb_m_step: cell.nb_m_step,
        max_em_iter: cell.max_em_iter,
        rel_tol: 1e-8,
        seed: fit_seed,
        fix_delta: cell.fix_delta,
    };
    let result = fit(&data, &config)?;
    let report = evaluate(&truth, &result)?;

    let mut rows = Vec::new();
    let mut push = |metric: &str, value: f64| {
        rows.push(StudyRow {
            study: study.number(),
            cell: cell.label.clone(),
            replicate,
            metric: metric.to_string(),
            value,
        });
    };
    push("delta_hat", result.params.delta);
    if let Some(d_r) = report.d_r {
        push("d_r", d_r);
    }
    for (k, v) in &report.d_inf {
        push(&format!("d_inf_k{k}"), *v);
    }
    push("misclass", report.misclass_rate);
    push("converged", if result.converged { 1.0 } else { 0.0 });
    let mut assigned = [0usize; 4];
    for k in &result.hard_assignment {
        assigned[k.index()] += 1;
    }
    for (k, &count) in assigned.iter().enumerate() {
        push(&format!("assigned_frac_{}", k + 1), count as f64 / data.len() as f64);
    }
    for (k, row) in report.confusion.iter().enumerate() {
        if !report.row_present[k] {
            continue;
        }
        for (j, &p) in row.iter().enumerate() {
            push(&format!("confusion_{}_{}", k + 1, j + 1), p);
        }
    }
    Ok(rows)
}

/// Run a study grid, one fit per (cell, replicate), and return tidy rows.
pub fn run_study(study: StudyId, overrides: &StudyOverrides) -> Result<Vec<StudyRow>> {
    let cells = build_cells(study, overrides)?;
    let replicates = overrides.replicates.unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        return Err(Error::InvalidDesign("need at least one replicate".into()));
    }
    let seed_root = overrides.seed.unwrap_or(0);

    let mut rows = Vec::new();
    for (cell_idx, cell) in cells.iter().enumerate() {
        let per_replicate: Result<Vec<Vec<StudyRow>>> = (0..replicates)
            .into_par_iter()
            .map(|rep| run_replicate(study, cell, cell_idx, rep, seed_root))
            .collect();
        for chunk in per_replicate? {
            rows.extend(chunk);
        }
    }
    Ok(rows)
}
