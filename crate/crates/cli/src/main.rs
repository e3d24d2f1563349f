//! Command-line interface: tail probability estimation by repeated
//! out-of-sample fusion, with a peaks-over-threshold baseline.

mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use manifest::RunManifest;
use tailfuse::{
    bcurve_csv, down_up_estimate, load_reference_csv, mean_excess_curve, mrl_csv, pot_tail,
    report_csv, run_comparison, run_rosf, trace_csv, variance_study, ColumnSel, DownUpConfig,
    Error as CoreError, FusionConfig, Preset, Scenario, TiltSpec,
};

const EXIT_INPUT: i32 = 1;
const EXIT_METHOD: i32 = 2;

#[derive(Parser)]
#[command(
    name = "tailfuse",
    version,
    about = "Small tail probabilities from samples with no threshold exceedances, by repeated out-of-sample fusion"
)]
struct Cli {
    /// Worker threads (default: available parallelism; env TAILFUSE_WORKERS).
    /// Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repeated fusion, B-curve and Down-Up estimate for one reference CSV.
    Estimate(EstimateArgs),
    /// ROSF-vs-POT comparison study for a scenario file.
    Compare(CompareArgs),
    /// Single-start IM variance study for a scenario file.
    Variance(CompareArgs),
    /// Peaks-over-threshold estimate and interval for one reference CSV.
    Pot(PotArgs),
    /// Mean residual life curve for one reference CSV.
    Mrl(MrlArgs),
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Reference sample CSV.
    #[arg(long)]
    input: PathBuf,
    /// Column name or zero-based index.
    #[arg(long, default_value = "0")]
    column: ColumnSel,
    /// Threshold T whose exceedance probability is sought.
    #[arg(long)]
    threshold: f64,
    /// Number of fusions N.
    #[arg(long)]
    fusions: usize,
    /// Fusion sample size (default: reference size).
    #[arg(long)]
    n1: Option<usize>,
    /// Uniform support as LO,HI (default 0,1.35*T).
    #[arg(long, value_parser = parse_pair)]
    support: Option<(f64, f64)>,
    /// Confidence level behind each bound.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// p-grid increment (default 0.0001).
    #[arg(long)]
    increment: Option<f64>,
    /// Working subsample size for the iteration (default min(1000, N)).
    #[arg(long)]
    subsample: Option<usize>,
    /// Exceedance-probability cap in the order-statistic inequality.
    #[arg(long, default_value_t = 0.95)]
    cap: f64,
    /// Also persist the bound collection as bounds.json.
    #[arg(long, default_value_t = false)]
    save_bounds: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Protocol scale preset overriding the scenario's runs/reps/fusions.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "0")]
    column: ColumnSel,
    #[arg(long)]
    threshold: f64,
    /// Quantile of the data used as the fitting threshold u.
    #[arg(long, default_value_t = 0.8)]
    u_quantile: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct MrlArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "0")]
    column: ColumnSel,
    /// Threshold grid as LO,HI,STEP.
    #[arg(long, value_parser = parse_grid)]
    grid: (f64, f64, f64),
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected LO,HI, got {s:?}"));
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected LO,HI,STEP, got {s:?}"));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().map_err(|e| e.to_string())?;
    }
    if v[2] <= 0.0 || v[1] < v[0] {
        return Err("grid requires LO <= HI and STEP > 0".into());
    }
    Ok((v[0], v[1], v[2]))
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    match s {
        "desk" => Ok(Preset::Desk),
        "paper" => Ok(Preset::Paper),
        other => Err(format!("unknown preset {other:?} (desk|paper)")),
    }
}

/// Method failures get exit code 2 so harness scripts can distinguish them
/// from bad input.
fn exit_code_for(err: &CoreError) -> i32 {
    match err {
        CoreError::NoUpSequence
        | CoreError::NoDownSequence
        | CoreError::GridExhausted { .. }
        | CoreError::TooManyFailures { .. }
        | CoreError::NoConvergence { .. } => EXIT_METHOD,
        CoreError::RunFailed { source, .. } => exit_code_for(source),
        _ => EXIT_INPUT,
    }
}

fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    std::fs::write(path, text)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CoreError> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let reference = load_reference_csv(&args.input, &args.column)?;
    let n1 = args.n1.unwrap_or(reference.len());
    let support = args
        .support
        .unwrap_or_else(|| FusionConfig::default_support(args.threshold));
    let cfg = FusionConfig {
        n_fusions: args.fusions,
        n1,
        support,
        ci_level: args.level,
        seed: args.seed,
        tilt: TiltSpec::Gamma,
    };
    let coll = run_rosf(&reference, args.threshold, &cfg)?;
    write_text(&args.out.join("bcurve.csv"), &bcurve_csv(&coll))?;
    if args.save_bounds {
        write_json(&args.out.join("bounds.json"), &coll.to_json())?;
    }

    let mut du_cfg = DownUpConfig::new(args.increment.unwrap_or(0.0001), args.seed);
    du_cfg.subsample_size = args.subsample.unwrap_or_else(|| coll.len().min(1000));
    du_cfg.cap = args.cap;
    let estimate = down_up_estimate(&coll, &du_cfg);

    // write artifacts for the failure case too, then bail with the method error
    let estimate = match estimate {
        Ok(e) => e,
        Err(err) => {
            let manifest = RunManifest::new(
                "estimate",
                args,
                Some(args.seed),
                vec!["bcurve.csv".into()],
                started.elapsed().as_secs_f64(),
                None,
            );
            manifest.write(&args.out)?;
            return Err(err);
        }
    };

    let capture = estimate.traces.last().expect("estimate has traces");
    write_text(&args.out.join("trace.csv"), &trace_csv(capture))?;
    write_json(
        &args.out.join("estimate.json"),
        &serde_json::json!({
            "schema_version": manifest::SCHEMA_VERSION,
            "p_hat": estimate.p_hat,
            "shift_pair": estimate.shift_pair,
            "rule": estimate.rule,
            "subsample": {"seed": estimate.subsample_seed, "size": estimate.subsample_size},
            "bounds": {
                "attempted": coll.meta.attempted,
                "succeeded": coll.meta.succeeded,
                "min": coll.min(),
                "max": coll.max(),
            },
            "traces": estimate.traces.iter().map(|t| serde_json::json!({
                "start_j": t.start_j,
                "converged_p": t.converged_p,
                "iterations": t.iterations,
                "direction": t.direction,
            })).collect::<Vec<_>>(),
        }),
    )?;
    let manifest = RunManifest::new(
        "estimate",
        args,
        Some(args.seed),
        vec![
            "bcurve.csv".into(),
            "trace.csv".into(),
            "estimate.json".into(),
        ],
        started.elapsed().as_secs_f64(),
        None,
    );
    manifest.write(&args.out)?;
    println!("p_hat = {:.10e}", estimate.p_hat);
    Ok(())
}

fn load_scenario(path: &Path, preset: Option<Preset>) -> Result<Scenario, CoreError> {
    let text = std::fs::read_to_string(path)?;
    let mut scn: Scenario = serde_json::from_str(&text)
        .map_err(|e| CoreError::Scenario(format!("{}: {e}", path.display())))?;
    if let Some(p) = preset {
        p.apply(&mut scn);
    }
    scn.validate()?;
    Ok(scn)
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CoreError> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let scn = load_scenario(&args.scenario, args.preset)?;
    let report = run_comparison(&scn)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_text(&args.out.join("report.csv"), &report_csv(&report))?;
    let manifest = RunManifest::new(
        "compare",
        &(args, &scn),
        Some(scn.seed),
        vec!["report.json".into(), "report.csv".into()],
        started.elapsed().as_secs_f64(),
        args.preset.map(|p| p.runtime_note().to_string()),
    );
    manifest.write(&args.out)?;
    println!(
        "ROSF coverage {:.3} length {:.6} mae {:.6} | POT coverage {:.3} length {:.6} mae {:.6}",
        report.rosf.coverage,
        report.rosf.mean_ci_length,
        report.rosf.mae,
        report.pot.coverage,
        report.pot.mean_ci_length,
        report.pot.mae
    );
    Ok(())
}

fn cmd_variance(args: &CompareArgs) -> Result<(), CoreError> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let scn = load_scenario(&args.scenario, args.preset)?;
    let study = variance_study(&scn)?;
    write_json(&args.out.join("variance.json"), &study)?;
    let manifest = RunManifest::new(
        "variance",
        &(args, &scn),
        Some(scn.seed),
        vec!["variance.json".into()],
        started.elapsed().as_secs_f64(),
        args.preset.map(|p| p.runtime_note().to_string()),
    );
    manifest.write(&args.out)?;
    match study.sd_p_hat {
        Some(sd) => println!("mean p_hat = {:.6e}, sd = {:.6e}", study.mean_p_hat, sd),
        None => println!(
            "mean p_hat = {:.6e}, sd = n/a (single repetition)",
            study.mean_p_hat
        ),
    }
    Ok(())
}

fn cmd_pot(args: &PotArgs) -> Result<(), CoreError> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let sample = load_reference_csv(&args.input, &args.column)?;
    let interval = pot_tail(&sample, args.threshold, args.u_quantile, args.level)?;
    write_json(
        &args.out.join("pot.json"),
        &serde_json::json!({
            "schema_version": manifest::SCHEMA_VERSION,
            "threshold": args.threshold,
            "u_quantile": args.u_quantile,
            "interval": interval,
        }),
    )?;
    let manifest = RunManifest::new(
        "pot",
        args,
        None,
        vec!["pot.json".into()],
        started.elapsed().as_secs_f64(),
        None,
    );
    manifest.write(&args.out)?;
    println!(
        "p_hat = {:.10e}  ci = [{:.10e}, {:.10e}] at level {}",
        interval.point, interval.lower, interval.upper, interval.level
    );
    Ok(())
}

fn cmd_mrl(args: &MrlArgs) -> Result<(), CoreError> {
    let started = Instant::now();
    std::fs::create_dir_all(&args.out)?;
    let sample = load_reference_csv(&args.input, &args.column)?;
    let (lo, hi, step) = args.grid;
    let mut grid = Vec::new();
    let mut u = lo;
    while u <= hi + 1e-12 * step {
        grid.push(u);
        u += step;
    }
    let points = mean_excess_curve(&sample, &grid);
    write_text(&args.out.join("mrl.csv"), &mrl_csv(&points))?;
    let manifest = RunManifest::new(
        "mrl",
        args,
        None,
        vec!["mrl.csv".into()],
        started.elapsed().as_secs_f64(),
        None,
    );
    manifest.write(&args.out)?;
    println!("{} thresholds with exceedances", points.len());
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default exit code for usage errors is 2; the exit-code
            // contract reserves 2 for method failures, so remap to 1.
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let workers = cli.workers.or_else(|| {
        std::env::var("TAILFUSE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(w) = workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: could not configure {w} workers: {e}");
            std::process::exit(EXIT_INPUT);
        }
    }
    let result = match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Variance(args) => cmd_variance(args),
        Command::Pot(args) => cmd_pot(args),
        Command::Mrl(args) => cmd_mrl(args),
    };
    match result {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            let code = exit_code_for(&err);
            if code == EXIT_METHOD {
                eprintln!(
                    "hint: the iteration depends on where max(reference) sits relative to the \
                     threshold; removing the few largest observations (and lowering n1 to match) \
                     or enlarging the reference sample can restore Down-Up convergence"
                );
            }
            std::process::exit(code);
        }
    }
}
