//! Side-by-side comparison of optimizers over shared seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{relative_to, CompareConfig, RunConfig};
use crate::error::HarnessError;
use crate::run::{
    run_on, split_data, write_outputs, RunOptions, RunOutcome, RunReport, Splits, Trainer,
};

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std, n }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub run_id: String,
    pub test_accuracy: f64,
    pub sharpness: f64,
    pub mean_step_ns: f64,
    /// This run's mean step time over the first config's at the same seed.
    pub relative_speed: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub config: PathBuf,
    pub optimizer: &'static str,
    pub oracle_calls_per_step: u32,
    pub test_accuracy: Stat,
    pub sharpness: Stat,
    pub relative_speed: Stat,
    pub runs: Vec<RunSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub format_version: u32,
    pub seeds: Vec<u64>,
    pub timing_isolated: bool,
    pub rows: Vec<CompareRow>,
}

impl Comparison {
    pub fn row(&self, label: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let headers = ["config", "optimizer", "test_acc", "sharpness", "speed"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.optimizer.to_string(),
                    format!("{:.4} ± {:.4}", r.test_accuracy.mean, r.test_accuracy.std),
                    format!("{:.5} ± {:.5}", r.sharpness.mean, r.sharpness.std),
                    format!("{:.2} ± {:.2}", r.relative_speed.mean, r.relative_speed.std),
                ]
            })
            .collect();
        let width: Vec<usize> = (0..5)
            .map(|c| {
                cells
                    .iter()
                    .map(|row| row[c].chars().count())
                    .chain([headers[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row
                .iter()
                .zip(&width)
                .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                .collect();
            writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
        };
        line(&mut out, &headers);
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

/// Configs may differ only in optimizer, name and output directory.
pub fn check_comparable(configs: &[RunConfig]) -> Result<(), HarnessError> {
    let key = |c: &RunConfig| {
        let mut v = serde_json::to_value(c).expect("config serializes");
        let o = v.as_object_mut().expect("object");
        o.remove("optimizer");
        o.remove("name");
        o.remove("output_dir");
        v
    };
    let first = key(&configs[0]);
    for (i, c) in configs.iter().enumerate().skip(1) {
        let other = key(c);
        if other != first {
            let fields: Vec<&str> = first
                .as_object()
                .unwrap()
                .iter()
                .filter(|(k, v)| other.get(k.as_str()) != Some(v))
                .map(|(k, _)| k.as_str())
                .collect();
            return Err(HarnessError::Validation(format!(
                "config {i} differs from config 0 outside the optimizer (fields: {})",
                fields.join(", ")
            )));
        }
    }
    Ok(())
}

fn label(cfg: &RunConfig, path: &Path) -> String {
    cfg.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| cfg.optimizer.name().to_string(), |s| s.to_string_lossy().into_owned())
    })
}

/// Runs every config at every seed.
///
/// Runs execute in parallel unless `timing_isolated`, in which case they run
/// one at a time, interleaving configs within each seed so slow drift in
/// machine speed hits every config alike.
pub fn compare(
    configs: &[(PathBuf, RunConfig)],
    seeds: &[u64],
    timing_isolated: bool,
    out: Option<&Path>,
) -> Result<(Comparison, Vec<Vec<RunReport>>), HarnessError> {
    if configs.len() < 2 {
        return Err(HarnessError::Validation("compare needs at least two configs".into()));
    }
    if seeds.is_empty() {
        return Err(HarnessError::Validation("compare needs at least one seed".into()));
    }
    let cfgs: Vec<RunConfig> = configs.iter().map(|(_, c)| c.clone()).collect();
    check_comparable(&cfgs)?;
    let labels: Vec<String> = configs.iter().map(|(p, c)| label(c, p)).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(HarnessError::Validation(format!("duplicate config label `{l}`")));
        }
    }
    // Data depends only on the shared fields, so one split serves every run.
    let splits: Splits = split_data(&cfgs[0])?;
    let opts = RunOptions {
        baseline: None,
        timing_isolated,
    };
    let outcomes = if timing_isolated {
        lockstep(&cfgs, seeds, &splits, &opts)?
    } else {
        let jobs: Vec<(usize, usize)> = (0..seeds.len())
            .flat_map(|s| (0..cfgs.len()).map(move |c| (c, s)))
            .collect();
        jobs.par_iter()
            .map(|&(c, s)| {
                let cfg = cfgs[c].clone().with_seed(seeds[s]);
                run_on(&cfg, &splits, &opts).map(|o| (c, s, o))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut reports: Vec<Vec<Option<RunReport>>> = vec![vec![None; seeds.len()]; cfgs.len()];
    for (c, s, o) in outcomes {
        if let Some(dir) = out {
            write_outputs(&o, &dir.join("runs").join(&labels[c]).join(format!("seed{}", seeds[s])))?;
        }
        reports[c][s] = Some(o.report);
    }
    let reports: Vec<Vec<RunReport>> = reports
        .into_iter()
        .map(|r| r.into_iter().map(|x| x.expect("every job ran")).collect())
        .collect();
    let comparison = summarize(configs, &labels, seeds, &reports, timing_isolated);
    if let Some(dir) = out {
        write_comparison(&comparison, dir)?;
    }
    Ok((comparison, reports))
}

/// Serial execution for timing: per seed, every config advances one epoch
/// in turn (starting config rotating each epoch), so drift in machine speed
/// lands on all configs alike.
fn lockstep(
    cfgs: &[RunConfig],
    seeds: &[u64],
    splits: &Splits,
    opts: &RunOptions,
) -> Result<Vec<(usize, usize, RunOutcome)>, HarnessError> {
    let mut out = Vec::new();
    for (s, &seed) in seeds.iter().enumerate() {
        let seeded: Vec<RunConfig> = cfgs.iter().map(|c| c.clone().with_seed(seed)).collect();
        let mut trainers = seeded
            .iter()
            .map(|c| Trainer::new(c, splits, opts.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let k = trainers.len();
        let mut round = 0;
        while trainers.iter().any(|t| !t.is_done()) {
            for i in 0..k {
                trainers[(i + round + s) % k].advance_epoch()?;
            }
            round += 1;
        }
        for (c, t) in trainers.into_iter().enumerate() {
            out.push((c, s, t.finish()?));
        }
    }
    Ok(out)
}

/// Aggregates from the individual reports only.
pub fn summarize(
    configs: &[(PathBuf, RunConfig)],
    labels: &[String],
    seeds: &[u64],
    reports: &[Vec<RunReport>],
    timing_isolated: bool,
) -> Comparison {
    let rows = reports
        .iter()
        .enumerate()
        .map(|(c, runs)| {
            let runs: Vec<RunSummary> = runs
                .iter()
                .enumerate()
                .map(|(s, r)| RunSummary {
                    seed: seeds[s],
                    run_id: r.run_id.clone(),
                    test_accuracy: r.test_accuracy(),
                    sharpness: r.sharpness.estimate,
                    mean_step_ns: r.timing.mean_step_ns,
                    relative_speed: r.timing.mean_step_ns / reports[0][s].timing.mean_step_ns,
                    failed: matches!(r.status, crate::run::RunStatus::Failed { .. }),
                })
                .collect();
            let pick = |f: fn(&RunSummary) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
            CompareRow {
                label: labels[c].clone(),
                config: configs[c].0.clone(),
                optimizer: configs[c].1.optimizer.name(),
                oracle_calls_per_step: configs[c].1.optimizer.oracle_calls_per_step(),
                test_accuracy: pick(|r| r.test_accuracy),
                sharpness: pick(|r| r.sharpness),
                relative_speed: pick(|r| r.relative_speed),
                runs,
            }
        })
        .collect();
    Comparison {
        format_version: crate::run::REPORT_VERSION,
        seeds: seeds.to_vec(),
        timing_isolated,
        rows,
    }
}

pub fn write_comparison(c: &Comparison, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join("compare.json");
    let json = serde_json::to_string_pretty(c).expect("comparison serializes");
    fs::write(&path, json + "\n").map_err(|e| HarnessError::io(&path, e))?;
    let path = dir.join("compare.txt");
    fs::write(&path, c.to_table()).map_err(|e| HarnessError::io(&path, e))
}

/// Loads a compare file and the run configs it lists.
pub fn load(path: &Path) -> Result<(CompareConfig, Vec<(PathBuf, RunConfig)>), HarnessError> {
    let cc = CompareConfig::load(path)?;
    let configs = cc
        .configs
        .iter()
        .map(|p| {
            let full = relative_to(path, p);
            RunConfig::load(&full).map(|c| (p.clone(), c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((cc, configs))
}
