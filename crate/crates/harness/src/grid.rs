//! Grid search over learning rate and ρ.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::compare::Stat;
use crate::config::{relative_to, GridConfig, RunConfig};
use crate::error::HarnessError;
use crate::run::{run_on, split_data, RunOptions, RunStatus};

#[derive(Clone, Debug, Serialize)]
pub struct CellRun {
    pub seed: u64,
    pub test_accuracy: f64,
    pub sharpness: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub lr: f64,
    pub rho: Option<f64>,
    pub runs: Vec<CellRun>,
    pub test_accuracy: Option<Stat>,
    pub sharpness: Option<Stat>,
    /// First failure among the cell's runs; failed cells are never selected.
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridResult {
    pub format_version: u32,
    pub seeds: Vec<u64>,
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the selected configuration.
    pub best: Option<usize>,
    pub best_config: Option<RunConfig>,
}

fn dedup_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
    v
}

/// Higher mean accuracy, then lower sharpness, then lower α, then lower ρ.
pub fn rank(a: &GridCell, b: &GridCell) -> Ordering {
    let acc = |c: &GridCell| c.test_accuracy.map_or(f64::NEG_INFINITY, |s| s.mean);
    let sharp = |c: &GridCell| {
        c.sharpness
            .map(|s| s.mean)
            .filter(|m| m.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    acc(b)
        .total_cmp(&acc(a))
        .then(sharp(a).total_cmp(&sharp(b)))
        .then(a.lr.total_cmp(&b.lr))
        .then(a.rho.unwrap_or(0.0).total_cmp(&b.rho.unwrap_or(0.0)))
}

pub fn select(cells: &[GridCell]) -> Option<usize> {
    cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.error.is_none() && c.test_accuracy.is_some_and(|s| s.mean.is_finite()))
        .min_by(|(_, a), (_, b)| rank(a, b))
        .map(|(i, _)| i)
}

pub fn grid_search(
    template: &RunConfig,
    lr: &[f64],
    rho: &[f64],
    seeds: &[u64],
    timing_isolated: bool,
) -> Result<GridResult, HarnessError> {
    if lr.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Validation("grid needs at least one lr and one seed".into()));
    }
    if !rho.is_empty() && template.optimizer.rho().is_none() {
        return Err(HarnessError::Validation(format!(
            "a rho grid needs a sam or gcsam template, got {}",
            template.optimizer.name()
        )));
    }
    let lrs = dedup_sorted(lr);
    let rhos: Vec<Option<f64>> = if rho.is_empty() {
        vec![None]
    } else {
        dedup_sorted(rho).into_iter().map(Some).collect()
    };
    let cfg_for = |lr: f64, rho: Option<f64>| {
        let mut c = template.clone();
        c.optimizer = c.optimizer.with_lr(lr);
        if let Some(r) = rho {
            c.optimizer = c.optimizer.with_rho(r);
        }
        c
    };
    let cells: Vec<(f64, Option<f64>)> = lrs
        .iter()
        .flat_map(|&l| rhos.iter().map(move |&r| (l, r)))
        .collect();
    let splits = split_data(template)?;
    let opts = RunOptions {
        baseline: None,
        timing_isolated,
    };
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let exec = |&(c, seed): &(usize, u64)| {
        let (l, r) = cells[c];
        let cfg = cfg_for(l, r).with_seed(seed);
        let res = run_on(&cfg, &splits, &opts).map_err(|e| e.to_string()).and_then(|o| {
            match o.report.status {
                RunStatus::Failed { error, last_good_step } => {
                    Err(format!("seed {seed} failed after step {last_good_step}: {error}"))
                }
                _ => Ok(CellRun {
                    seed,
                    test_accuracy: o.report.test_accuracy(),
                    sharpness: o.report.sharpness.estimate,
                }),
            }
        });
        (c, res)
    };
    let results: Vec<(usize, Result<CellRun, String>)> = if timing_isolated {
        jobs.iter().map(exec).collect()
    } else {
        jobs.par_iter().map(exec).collect()
    };
    let mut out: Vec<GridCell> = cells
        .iter()
        .map(|&(lr, rho)| GridCell {
            lr,
            rho,
            runs: Vec::new(),
            test_accuracy: None,
            sharpness: None,
            error: None,
        })
        .collect();
    for (c, r) in results {
        match r {
            Ok(run) => out[c].runs.push(run),
            Err(e) => {
                out[c].error.get_or_insert(e);
            }
        }
    }
    for cell in &mut out {
        if cell.error.is_none() {
            let acc: Vec<f64> = cell.runs.iter().map(|r| r.test_accuracy).collect();
            let sh: Vec<f64> = cell.runs.iter().map(|r| r.sharpness).collect();
            cell.test_accuracy = Some(Stat::of(&acc));
            cell.sharpness = Some(Stat::of(&sh));
        }
    }
    let best = select(&out);
    let best_config = best.map(|i| cfg_for(out[i].lr, out[i].rho));
    Ok(GridResult {
        format_version: crate::run::REPORT_VERSION,
        seeds: seeds.to_vec(),
        cells: out,
        best,
        best_config,
    })
}

pub fn run_file(path: &Path, timing_isolated: bool) -> Result<GridResult, HarnessError> {
    let gc = GridConfig::load(path)?;
    let template = RunConfig::load(&relative_to(path, &gc.template))?;
    grid_search(&template, &gc.lr, &gc.rho, &gc.seeds, timing_isolated)
}

pub fn write_grid(g: &GridResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join("grid.json");
    let json = serde_json::to_string_pretty(g).expect("grid serializes");
    fs::write(&path, json + "\n").map_err(|e| HarnessError::io(&path, e))?;
    let mut csv = String::from("lr,rho,test_accuracy_mean,test_accuracy_std,sharpness_mean,sharpness_std,selected,error\n");
    for (i, c) in g.cells.iter().enumerate() {
        let f = |s: Option<Stat>| s.map_or(",".to_string(), |s| format!("{:.17e},{:.17e}", s.mean, s.std));
        writeln!(
            csv,
            "{:.17e},{},{},{},{},{}",
            c.lr,
            c.rho.map_or(String::new(), |r| format!("{r:.17e}")),
            f(c.test_accuracy),
            f(c.sharpness),
            u8::from(g.best == Some(i)),
            c.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        )
        .unwrap();
    }
    let path = dir.join("grid.csv");
    fs::write(&path, csv).map_err(|e| HarnessError::io(&path, e))
}
