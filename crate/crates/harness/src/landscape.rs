//! Loss-landscape export around a checkpoint.

use std::fs;
use std::path::Path;

use gcsam::analysis::{
    orthogonal_gaussian_directions, sample_landscape, GridSpec, LandscapeGrid, Normalization,
};
use gcsam::models::MlpOracle;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{relative_to, DatasetPart, LandscapeConfig, RunConfig};
use crate::error::HarnessError;
use crate::run::split_data;

#[derive(Clone, Debug, Serialize)]
pub struct LandscapeReport {
    pub format_version: u32,
    pub spec_hash: String,
    pub checkpoint_step: u64,
    pub dataset: DatasetPart,
    pub rows: usize,
    pub grid: GridSpec,
    pub normalization: Normalization,
    pub direction_seed: u64,
    pub reseeded: bool,
    pub base_loss: f64,
    pub min_loss: f64,
    pub max_loss: f64,
    pub non_finite_cells: usize,
}

pub fn landscape(
    cfg: &RunConfig,
    checkpoint: &Checkpoint,
    grid: &GridSpec,
    normalization: Normalization,
    seed: u64,
    part: DatasetPart,
) -> Result<(LandscapeGrid, LandscapeReport), HarnessError> {
    let params = checkpoint.params_for(&cfg.model)?;
    let splits = split_data(cfg)?;
    let ds = match part {
        DatasetPart::Train => &splits.train,
        DatasetPart::Test => &splits.test,
    };
    let dirs = orthogonal_gaussian_directions(&params, seed, normalization)?;
    let oracle = MlpOracle::new(cfg.model.clone());
    let g = sample_landscape(&oracle, &params, grid, &dirs, &ds.data)?;
    let finite = g.losses.iter().copied().filter(|l| l.is_finite());
    let report = LandscapeReport {
        format_version: crate::run::REPORT_VERSION,
        spec_hash: checkpoint.spec_hash.clone(),
        checkpoint_step: checkpoint.step,
        dataset: part,
        rows: ds.len(),
        grid: *grid,
        normalization,
        direction_seed: seed,
        reseeded: dirs.reseeded,
        base_loss: g.base_loss,
        min_loss: finite.clone().fold(f64::INFINITY, f64::min),
        max_loss: finite.fold(f64::NEG_INFINITY, f64::max),
        non_finite_cells: g.losses.iter().filter(|l| !l.is_finite()).count(),
    };
    Ok((g, report))
}

pub fn run_file(path: &Path) -> Result<(LandscapeGrid, LandscapeReport), HarnessError> {
    let lc = LandscapeConfig::load(path)?;
    let cfg = RunConfig::load(&relative_to(path, &lc.run_config))?;
    let ck = Checkpoint::load(&relative_to(path, &lc.checkpoint))?;
    landscape(&cfg, &ck, &lc.grid, lc.normalization, lc.seed, lc.dataset)
}

pub fn write(grid: &LandscapeGrid, report: &LandscapeReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let path = dir.join("landscape.csv");
    grid.write_csv(&path).map_err(|e| HarnessError::io(&path, e))?;
    let path = dir.join("landscape_report.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, json + "\n").map_err(|e| HarnessError::io(&path, e))
}
