//! Seeded training runs and their reports.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use gcsam::analysis::{
    estimate_sharpness, eval_bound, BoundEvaluation, BoundParams, Radius, SharpnessConfig,
    SharpnessEstimate,
};
use gcsam::data::{
    gen_gaussian_blobs, gen_two_moons, load_csv, minibatches, Dataset, Provenance, SplitSpec,
};
use gcsam::models::{evaluate, init_params, Evaluation, MlpOracle};
use gcsam::optim::{OptimizerState, StepTelemetry};
use gcsam::rng::{derive_seed, PRNG_ID};
use gcsam::ParamSet;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::config::{DataSource, RunConfig, StopMetric};
use crate::error::HarnessError;

pub const REPORT_VERSION: u32 = 1;

/// Train, optional validation, and test splits of the configured data.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    let ds = match &cfg.data.source {
        DataSource::TwoMoons { n, noise, seed } => gen_two_moons(*n, *noise, *seed)?,
        DataSource::GaussianBlobs {
            n,
            centers,
            sigma,
            seed,
        } => gen_gaussian_blobs(*n, centers, *sigma, *seed)?,
        DataSource::Csv { path, label_column } => load_csv(cfg.resolve(path), label_column)?,
    };
    if ds.width() != cfg.model.input_width() {
        return Err(HarnessError::Validation(format!(
            "data has {} features but the model expects {}",
            ds.width(),
            cfg.model.input_width()
        )));
    }
    Ok(ds)
}

pub fn split_data(cfg: &RunConfig) -> Result<Splits, HarnessError> {
    let ds = load_dataset(cfg)?;
    let (train, test) = cfg.data.split.split(&ds)?;
    let (train, val) = match cfg.training.early_stop {
        Some(es) => {
            let spec = SplitSpec {
                test_fraction: es.val_fraction,
                seed: derive_seed(cfg.data.split.seed, "validation"),
            };
            let (t, v) = spec.split(&train)?;
            (t, Some(v))
        }
        None => (train, None),
    };
    if cfg.training.batch_size > train.len() {
        return Err(HarnessError::Validation(format!(
            "batch_size {} exceeds the {} training rows",
            cfg.training.batch_size,
            train.len()
        )));
    }
    Ok(Splits { train, val, test })
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: u64,
    pub mean_batch_loss: f64,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    EarlyStopped { best_epoch: usize },
    /// Training hit a non-finite value; the report describes the parameters
    /// from the last epoch boundary that evaluated finitely, at `last_good_step`.
    Failed { last_good_step: u64, error: String },
}

/// Every seed that influenced the run.
#[derive(Clone, Debug, Serialize)]
pub struct SeedRecord {
    pub run: u64,
    pub model_init: u64,
    pub data: Option<u64>,
    pub split: u64,
    pub validation_split: Option<u64>,
    /// Epoch `e` shuffles with `derive_seed(run, "epoch{e}")`.
    pub batch_order: String,
    pub sharpness: u64,
    pub prng: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct DatasetRecord {
    pub train_rows: usize,
    pub val_rows: Option<usize>,
    pub test_rows: usize,
    pub source: Provenance,
}

/// Wall-clock measurements; the only fields that vary between identical runs.
#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub total_wall_ns: u64,
    pub mean_step_ns: f64,
    pub timing_isolated: bool,
    /// Mean step time divided by the baseline's; present only with a baseline.
    pub relative_speed: Option<f64>,
    pub baseline_run_id: Option<String>,
}

/// Centralization telemetry summed over all steps.
#[derive(Clone, Debug, Default, Serialize)]
pub struct GcStats {
    pub steps: u64,
    pub sum_orig_sq_norm: f64,
    pub sum_gc_sq_norm: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Steps where the centralized norm exceeded the original one.
    pub violations: u64,
}

impl GcStats {
    fn from_telemetry(t: &[StepTelemetry]) -> Self {
        let mut s = GcStats {
            min_ratio: f64::INFINITY,
            max_ratio: 0.0,
            ..Default::default()
        };
        for step in t {
            s.steps += 1;
            s.sum_orig_sq_norm += step.orig_sq_norm;
            s.sum_gc_sq_norm += step.gc_sq_norm;
            if step.orig_sq_norm > 0.0 {
                let r = step.gc_sq_norm / step.orig_sq_norm;
                s.min_ratio = s.min_ratio.min(r);
                s.max_ratio = s.max_ratio.max(r);
            }
            if step.gc_sq_norm > step.orig_sq_norm {
                s.violations += 1;
            }
        }
        if s.steps == 0 {
            s.min_ratio = f64::NAN;
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub format_version: u32,
    pub run_id: String,
    pub status: RunStatus,
    pub optimizer: &'static str,
    pub config: RunConfig,
    pub seeds: SeedRecord,
    pub dataset: DatasetRecord,
    pub num_params: usize,
    pub steps: u64,
    pub oracle_calls: u64,
    pub epochs: Vec<EpochRecord>,
    pub final_train: Evaluation,
    pub final_test: Evaluation,
    pub sharpness: SharpnessEstimate,
    pub bound: Option<BoundEvaluation>,
    pub centralization: GcStats,
    pub timing: Timing,
}

impl RunReport {
    pub fn test_accuracy(&self) -> f64 {
        self.final_test.accuracy.unwrap_or(f64::NAN)
    }

    /// JSON form with the wall-clock block removed, for reproducibility checks.
    pub fn without_timing(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("timing");
        v
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// `(run_id, mean_step_ns)` of a paired baseline run.
    pub baseline: Option<(String, f64)>,
    pub timing_isolated: bool,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub params: ParamSet,
    pub telemetry: Vec<StepTelemetry>,
}

/// Stable identifier from the optimizer, seed and a hash of the config.
pub fn run_id(cfg: &RunConfig) -> String {
    let keyed = RunConfig {
        output_dir: None,
        ..cfg.clone()
    };
    let json = serde_json::to_vec(&keyed).expect("config serializes");
    let hash = hex::encode(Sha256::digest(json));
    let label = cfg.name.clone().unwrap_or_else(|| cfg.optimizer.name().to_string());
    format!("{label}-s{}-{}", cfg.seed, &hash[..8])
}

fn improved(metric: StopMetric, e: &Evaluation, best: Option<f64>) -> (bool, f64) {
    let v = match metric {
        StopMetric::ValLoss => e.mean_loss,
        StopMetric::ValAccuracy => -e.accuracy.unwrap_or(f64::NAN),
    };
    (best.is_none_or(|b| v < b), v)
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let splits = split_data(cfg)?;
    run_on(cfg, &splits, opts)
}

/// Trains on pre-built splits; timing covers only optimization and evaluation.
pub fn run_on(cfg: &RunConfig, splits: &Splits, opts: &RunOptions) -> Result<RunOutcome, HarnessError> {
    let mut t = Trainer::new(cfg, splits, opts.clone())?;
    while t.advance_epoch()? {}
    t.finish()
}

/// A run that can be advanced one epoch at a time, so several runs can be
/// interleaved on one thread. Wall time counts only time spent inside the
/// trainer's own calls.
pub struct Trainer<'a> {
    cfg: RunConfig,
    splits: &'a Splits,
    opts: RunOptions,
    oracle: MlpOracle,
    params: ParamSet,
    state: OptimizerState,
    telemetry: Vec<StepTelemetry>,
    epochs: Vec<EpochRecord>,
    status: RunStatus,
    best: Option<(f64, usize, ParamSet)>,
    /// Parameters at the last epoch boundary that evaluated finitely.
    last_good: (u64, ParamSet),
    since_best: usize,
    epoch: usize,
    done: bool,
    active: Duration,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &RunConfig, splits: &'a Splits, opts: RunOptions) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let start = Instant::now();
        let params = init_params(&cfg.model)?;
        Ok(Trainer {
            cfg: cfg.clone(),
            splits,
            opts,
            oracle: MlpOracle::new(cfg.model.clone()),
            last_good: (0, params.clone()),
            params,
            state: OptimizerState::new(),
            telemetry: Vec::new(),
            epochs: Vec::new(),
            status: RunStatus::Completed,
            best: None,
            since_best: 0,
            epoch: 0,
            done: false,
            active: start.elapsed(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Runs one epoch. Returns false once training has ended.
    pub fn advance_epoch(&mut self) -> Result<bool, HarnessError> {
        if self.done {
            return Ok(false);
        }
        let start = Instant::now();
        let r = self.epoch_inner();
        self.active += start.elapsed();
        r?;
        Ok(!self.done)
    }

    fn epoch_inner(&mut self) -> Result<(), HarnessError> {
        let cfg = &self.cfg;
        let max_steps = cfg.training.max_steps.unwrap_or(u64::MAX);
        let max_epochs = cfg.training.epochs.unwrap_or(usize::MAX);
        if self.epoch >= max_epochs || self.state.step >= max_steps {
            self.done = true;
            return Ok(());
        }
        let epoch = self.epoch;
        let seed = derive_seed(cfg.seed, &format!("epoch{epoch}"));
        let batches = minibatches(&self.splits.train, cfg.training.batch_size, seed, cfg.training.shuffle)?;
        let mut loss_sum = 0.0;
        let mut count = 0u64;
        for batch in &batches {
            if self.state.step >= max_steps {
                break;
            }
            match cfg.optimizer.step(&mut self.params, batch, &self.oracle, &mut self.state) {
                Ok(t) => {
                    loss_sum += t.loss_clean;
                    count += 1;
                    self.telemetry.push(t);
                }
                Err(e) => {
                    self.fail(e.to_string());
                    return Ok(());
                }
            }
        }
        let evals = evaluate(&cfg.model, &self.params, &self.splits.train).and_then(|t| {
            let v = self.splits.val.as_ref().map(|v| evaluate(&cfg.model, &self.params, v));
            Ok((t, v.transpose()?))
        });
        let (train_eval, val_eval) = match evals {
            Ok(e) => e,
            Err(e) => {
                self.fail(format!("evaluation after epoch {epoch}: {e}"));
                return Ok(());
            }
        };
        self.last_good = (self.state.step, self.params.clone());
        self.epochs.push(EpochRecord {
            epoch,
            steps: self.state.step,
            mean_batch_loss: if count > 0 { loss_sum / count as f64 } else { f64::NAN },
            train_loss: train_eval.mean_loss,
            train_accuracy: train_eval.accuracy,
            val_loss: val_eval.map(|e| e.mean_loss),
            val_accuracy: val_eval.and_then(|e| e.accuracy),
        });
        self.epoch += 1;
        if let (Some(es), Some(v)) = (cfg.training.early_stop, val_eval) {
            let (better, value) = improved(es.metric, &v, self.best.as_ref().map(|b| b.0));
            if better {
                self.best = Some((value, epoch, self.params.clone()));
                self.since_best = 0;
            } else {
                self.since_best += 1;
                if self.since_best >= es.patience {
                    let (_, best_epoch, p) = self.best.take().expect("set on first epoch");
                    self.params = p;
                    self.status = RunStatus::EarlyStopped { best_epoch };
                    self.done = true;
                    return Ok(());
                }
            }
        }
        if self.epoch >= max_epochs || self.state.step >= max_steps {
            self.done = true;
        }
        Ok(())
    }

    /// Stops the run and rolls back to the last parameters that evaluated finitely.
    fn fail(&mut self, error: String) {
        let (step, params) = std::mem::replace(&mut self.last_good, (0, ParamSet::new()));
        self.params = params;
        self.status = RunStatus::Failed { last_good_step: step, error };
        self.done = true;
    }

    /// Final evaluation, sharpness probe and report.
    pub fn finish(mut self) -> Result<RunOutcome, HarnessError> {
        while self.advance_epoch()? {}
        let start = Instant::now();
        let cfg = &self.cfg;
        let splits = self.splits;
        let params = self.params;
        let final_train = evaluate(&cfg.model, &params, &splits.train)?;
        let final_test = evaluate(&cfg.model, &params, &splits.test)?;
        let sharpness_seed = derive_seed(cfg.seed, "sharpness");
        let sharpness = estimate_sharpness(
            &self.oracle,
            &params,
            &splits.train.data,
            &SharpnessConfig {
                rho: cfg.sharpness.rho,
                num_directions: cfg.sharpness.num_directions,
                ascent_steps: cfg.sharpness.ascent_steps,
                seed: sharpness_seed,
            },
        )?;
        let active = self.active + start.elapsed();
        let total_wall_ns = u64::try_from(active.as_nanos()).unwrap_or(u64::MAX).max(1);
        let telemetry = self.telemetry;
        let opts = &self.opts;
        let bound = match cfg.bound {
            Some(b) if sharpness.estimate.is_finite() => Some(eval_bound(
                sharpness.base_loss + sharpness.estimate,
                params.global_sq_norm(),
                &BoundParams {
                    n: splits.train.len(),
                    k: params.numel(),
                    delta: b.delta,
                    eta: b.eta,
                    radius: Radius::Rho(cfg.sharpness.rho),
                    constant_term: b.constant_term,
                },
            )?),
            _ => None,
        };

        let mean_step_ns = if telemetry.is_empty() {
            f64::NAN
        } else {
            telemetry.iter().map(|t| t.step_wall_ns as f64).sum::<f64>() / telemetry.len() as f64
        };
        let (relative_speed, baseline_run_id) = match &opts.baseline {
            Some((id, base)) => (Some(mean_step_ns / base), Some(id.clone())),
            None => (None, None),
        };
        let data_seed = match cfg.data.source {
            DataSource::TwoMoons { seed, .. } | DataSource::GaussianBlobs { seed, .. } => Some(seed),
            DataSource::Csv { .. } => None,
        };
        let report = RunReport {
            format_version: REPORT_VERSION,
            run_id: run_id(cfg),
            status: self.status,
            optimizer: cfg.optimizer.name(),
            config: cfg.clone(),
            seeds: SeedRecord {
                run: cfg.seed,
                model_init: cfg.model.seed,
                data: data_seed,
                split: cfg.data.split.seed,
                validation_split: cfg
                    .training
                    .early_stop
                    .map(|_| derive_seed(cfg.data.split.seed, "validation")),
                batch_order: "derive_seed(run, \"epoch{e}\")".into(),
                sharpness: sharpness_seed,
                prng: PRNG_ID,
            },
            dataset: DatasetRecord {
                train_rows: splits.train.len(),
                val_rows: splits.val.as_ref().map(Dataset::len),
                test_rows: splits.test.len(),
                source: splits.train.provenance.clone(),
            },
            num_params: params.numel(),
            steps: self.state.step,
            oracle_calls: telemetry.iter().map(|t| u64::from(t.oracle_calls)).sum(),
            epochs: self.epochs,
            final_train,
            final_test,
            sharpness,
            bound,
            centralization: GcStats::from_telemetry(&telemetry),
            timing: Timing {
                total_wall_ns,
                mean_step_ns,
                timing_isolated: opts.timing_isolated,
                relative_speed,
                baseline_run_id,
            },
        };
        Ok(RunOutcome {
            report,
            params,
            telemetry,
        })
    }
}

/// Writes `report.json`, `steps.csv` and `checkpoint.json` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let report = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    let path = dir.join("report.json");
    fs::write(&path, report + "\n").map_err(|e| HarnessError::io(&path, e))?;

    let mut csv = String::from(StepTelemetry::CSV_HEADER);
    csv.push('\n');
    for t in &outcome.telemetry {
        csv.push_str(&t.csv_row());
        csv.push('\n');
    }
    let path = dir.join("steps.csv");
    fs::write(&path, csv).map_err(|e| HarnessError::io(&path, e))?;

    Checkpoint::new(&outcome.report.config.model, &outcome.params, outcome.report.steps)
        .save(&dir.join("checkpoint.json"))
}

/// Reads `(run_id, mean_step_ns)` from a previous run's `report.json`.
///
/// `reference` may be a run directory, a report file, or a run id looked up
/// as a sibling directory of `out`.
pub fn load_baseline(reference: &str, out: &Path) -> Result<(String, f64), HarnessError> {
    let direct = Path::new(reference);
    let candidates = [
        direct.to_path_buf(),
        direct.join("report.json"),
        out.parent().unwrap_or(Path::new(".")).join(reference).join("report.json"),
    ];
    let path = candidates
        .iter()
        .find(|p| p.is_file())
        .ok_or_else(|| HarnessError::Validation(format!("baseline run `{reference}` not found")))?;
    let v: serde_json::Value = crate::config::load_json(path)?;
    let id = v["run_id"].as_str().unwrap_or(reference).to_string();
    let mean = v["timing"]["mean_step_ns"]
        .as_f64()
        .filter(|m| *m > 0.0)
        .ok_or_else(|| {
            HarnessError::Validation(format!("{}: no positive timing.mean_step_ns", path.display()))
        })?;
    Ok((id, mean))
}
