use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gcsam_harness::config::{relative_to, RunConfig};
use gcsam_harness::run::{load_baseline, run, write_outputs, RunOptions, RunStatus};
use gcsam_harness::{compare, grid, landscape, verify, HarnessError};

#[derive(Parser)]
#[command(name = "gcsam-lab", version, about = "Seeded GCSAM experiments and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the run seed (and the direction seed for `landscape`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Previous run (directory, report.json, or run id next to `--out`) to time against.
    #[arg(long, global = true)]
    baseline: Option<String>,
    /// Run everything serially so step timings are not skewed by sibling runs.
    #[arg(long, global = true)]
    timing_isolated: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write report.json, steps.csv and checkpoint.json.
    Run,
    /// Run several configs over shared seeds and tabulate them.
    Compare,
    /// Sample the loss surface around a checkpoint.
    Landscape,
    /// Evaluate a learning-rate by rho grid and pick the best cell.
    GridSearch,
    /// Run the quick property suites.
    Verify,
}

fn need_config(cli: &Cli) -> Result<&Path, HarnessError> {
    cli.config
        .as_deref()
        .ok_or_else(|| HarnessError::Validation("--config <path> is required".into()))
}

fn out_dir(cli: &Cli, default: PathBuf) -> PathBuf {
    cli.out.clone().unwrap_or(default)
}

fn cmd_run(cli: &Cli) -> Result<u8, HarnessError> {
    let path = need_config(cli)?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    let default = cfg.output_dir.as_ref().map_or_else(
        || PathBuf::from("runs").join(gcsam_harness::run::run_id(&cfg)),
        |d| relative_to(path, d),
    );
    let out = out_dir(cli, default);
    let baseline = cli.baseline.as_deref().map(|b| load_baseline(b, &out)).transpose()?;
    let outcome = run(
        &cfg,
        &RunOptions {
            baseline,
            timing_isolated: cli.timing_isolated,
        },
    )?;
    write_outputs(&outcome, &out)?;
    let r = &outcome.report;
    println!("run {} -> {}", r.run_id, out.display());
    println!(
        "steps {}  train loss {:.6}  test acc {}  sharpness {:.6}  mean step {:.0} ns",
        r.steps,
        r.final_train.mean_loss,
        r.final_test.accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        r.sharpness.estimate,
        r.timing.mean_step_ns
    );
    if let Some(s) = r.timing.relative_speed {
        println!("relative speed {s:.3}");
    }
    if let RunStatus::Failed { last_good_step, error } = &r.status {
        eprintln!("error: run failed after step {last_good_step}: {error}");
        return Ok(2);
    }
    Ok(0)
}

fn cmd_compare(cli: &Cli) -> Result<u8, HarnessError> {
    let path = need_config(cli)?;
    let (cc, configs) = compare::load(path)?;
    let seeds = cli.seed.map_or(cc.seeds, |s| vec![s]);
    let out = out_dir(cli, PathBuf::from("compare-out"));
    let (table, reports) = compare::compare(&configs, &seeds, cli.timing_isolated, Some(&out))?;
    print!("{}", table.to_table());
    let failed = reports
        .iter()
        .flatten()
        .filter(|r| matches!(r.status, RunStatus::Failed { .. }))
        .count();
    if failed > 0 {
        eprintln!("error: {failed} run(s) failed; see {}", out.display());
        return Ok(2);
    }
    Ok(0)
}

fn cmd_landscape(cli: &Cli) -> Result<u8, HarnessError> {
    let path = need_config(cli)?;
    let lc = gcsam_harness::config::LandscapeConfig::load(path)?;
    let cfg = RunConfig::load(&relative_to(path, &lc.run_config))?;
    let ck = gcsam_harness::checkpoint::Checkpoint::load(&relative_to(path, &lc.checkpoint))?;
    let seed = cli.seed.unwrap_or(lc.seed);
    let (g, report) = landscape::landscape(&cfg, &ck, &lc.grid, lc.normalization, seed, lc.dataset)?;
    let out = out_dir(cli, PathBuf::from("landscape-out"));
    landscape::write(&g, &report, &out)?;
    println!(
        "{}x{} grid, base loss {:.6}, range [{:.6}, {:.6}], {} non-finite -> {}",
        g.a.len(),
        g.b.len(),
        report.base_loss,
        report.min_loss,
        report.max_loss,
        report.non_finite_cells,
        out.join("landscape.csv").display()
    );
    Ok(0)
}

fn cmd_grid(cli: &Cli) -> Result<u8, HarnessError> {
    let path = need_config(cli)?;
    let gc = gcsam_harness::config::GridConfig::load(path)?;
    let template = RunConfig::load(&relative_to(path, &gc.template))?;
    let seeds = cli.seed.map_or(gc.seeds, |s| vec![s]);
    let result = grid::grid_search(&template, &gc.lr, &gc.rho, &seeds, cli.timing_isolated)?;
    let out = out_dir(cli, PathBuf::from("grid-out"));
    grid::write_grid(&result, &out)?;
    for c in &result.cells {
        let acc = c.test_accuracy.map_or("failed".to_string(), |s| format!("{:.4}", s.mean));
        println!("lr {:<10} rho {:<10} acc {acc}", c.lr, c.rho.map_or("-".into(), |r| r.to_string()));
    }
    match result.best {
        Some(i) => {
            let b = &result.cells[i];
            println!("best: lr {} rho {}", b.lr, b.rho.map_or("-".into(), |r| r.to_string()));
            Ok(0)
        }
        None => {
            eprintln!("error: every grid cell failed");
            Ok(2)
        }
    }
}

fn cmd_verify(cli: &Cli) -> Result<u8, HarnessError> {
    let results = verify::run_all();
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<24} {} ({:.0} ms)", r.name, r.detail, r.wall_ms);
    }
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        let path = out.join("verify.json");
        let json = serde_json::to_string_pretty(&results).expect("results serialize");
        std::fs::write(&path, json + "\n").map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(if results.iter().all(|r| r.passed) { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run => cmd_run(&cli),
        Command::Compare => cmd_compare(&cli),
        Command::Landscape => cmd_landscape(&cli),
        Command::GridSearch => cmd_grid(&cli),
        Command::Verify => cmd_verify(&cli),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
