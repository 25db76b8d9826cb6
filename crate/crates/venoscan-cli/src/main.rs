//! Scenario runner and metrics reporter.
//!
//! Subcommands wire the planner, controller, plant, and virtual fixture
//! together and reduce traces to summary statistics. All outputs are
//! deterministic: identical inputs produce byte-identical artifacts.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use venoscan::config::{config_hash, ScenarioConfig};
use venoscan::metrics::compute_metrics;
use venoscan::pathfit::{
    accumulate_arclength, densify_waypoints, fit_scan_path, FittedPath, WaypointSet,
};
use venoscan::planner::{coarse_path, optimize_path, write_sweep_csv};
use venoscan::simworld::{read_trace_csv, run_phri, run_sweep, write_trace_csv, OperatorProfile};
use venoscan::Error;

#[derive(Parser)]
#[command(
    name = "venoscan",
    version,
    about = "Robot-assisted venous compression exam simulator"
)]
struct Cli {
    /// Output directory (env: VENOSCAN_OUTDIR).
    #[arg(long, global = true, env = "VENOSCAN_OUTDIR", default_value = "out")]
    outdir: PathBuf,
    /// Noise seed override for runs with noise enabled.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print per-step details.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a 6D path to a waypoint file and report the reconstruction RMS.
    Fit(FitArgs),
    /// Synthesize the coarse scan path from the scenario phantom.
    Plan(PlanArgs),
    /// Sweep-scan the phantom, optimize the path, and verify with a rescan.
    Sweep(SweepArgs),
    /// Replay an operator profile against the path virtual fixture.
    Phri(PhriArgs),
    /// Reduce a trace CSV to its headline statistics.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Waypoint file (`frame <id>` header, then `px py pz nx ny nz` rows).
    #[arg(long)]
    waypoints: PathBuf,
    /// Output path file (TOML).
    #[arg(long)]
    out: PathBuf,
    /// Scenario providing the fit parameters; defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output waypoint file.
    #[arg(long)]
    out: PathBuf,
    /// Also write the surface cloud to this file.
    #[arg(long)]
    cloud_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct PhriArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Operator profile file (`t pedal fx fy fz` rows).
    #[arg(long)]
    profile: PathBuf,
    /// Optimized path file produced by `sweep`.
    #[arg(long)]
    path: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Trace CSV produced by `sweep` or `phri`.
    #[arg(long)]
    trace: PathBuf,
    /// Also write the report as TOML.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_file(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::Io(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<(ScenarioConfig, String), Error> {
    let text = read_file(path)?;
    let mut cfg = ScenarioConfig::parse(&text)?;
    if let Some(seed) = seed {
        cfg.noise.seed = seed;
    }
    Ok((cfg, config_hash(&text)))
}

/// RMS distance from the densified input samples to the fitted curve at
/// matched arc lengths.
fn reconstruction_rms(
    path: &FittedPath,
    waypoints: &WaypointSet,
    delta_p: f64,
) -> Result<f64, Error> {
    let dense = densify_waypoints(waypoints, delta_p)?;
    let profile = accumulate_arclength(dense.points())?;
    let mut sq = 0.0;
    for (p, &s) in dense.points().iter().zip(&profile.s) {
        sq += (path.position(s) - p).norm_squared();
    }
    Ok((sq / dense.len() as f64).sqrt())
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Fit(args) => {
            let fit_params = match &args.scenario {
                Some(p) => load_scenario(p, cli.seed)?.0.fit,
                None => Default::default(),
            };
            let text = read_file(&args.waypoints)?;
            let (waypoints, frame) = WaypointSet::from_text(&text)?;
            let path = fit_scan_path(&waypoints, &fit_params)?;
            let rms = reconstruction_rms(&path, &waypoints, fit_params.delta_p)?;
            write_file(&args.out, &path.to_toml())?;
            println!("fitted {} waypoints (frame {frame})", waypoints.len());
            println!("total length: {:.4} m", path.total_length());
            println!("reconstruction rms: {:.4} mm", rms * 1e3);
            Ok(())
        }
        Command::Plan(args) => {
            let (cfg, _) = load_scenario(&args.scenario, cli.seed)?;
            let sc = cfg.scenario()?;
            let cloud = sc.phantom.surface_cloud();
            if let Some(cloud_out) = &args.cloud_out {
                write_file(cloud_out, &cloud.to_text())?;
            }
            let (start, end) = cfg.path_endpoints();
            let coarse = coarse_path(&cloud, &start, &end, cfg.path.lateral_bias)?;
            write_file(&args.out, &coarse.to_text("B"))?;
            println!(
                "coarse path: {} waypoints, lateral bias {:.1} mm",
                coarse.len(),
                cfg.path.lateral_bias * 1e3
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let (cfg, hash) = load_scenario(&args.scenario, cli.seed)?;
            let sc = cfg.scenario()?;
            let cloud = sc.phantom.surface_cloud();
            let (start, end) = cfg.path_endpoints();
            let coarse = coarse_path(&cloud, &start, &end, cfg.path.lateral_bias)?;
            let initial = fit_scan_path(&coarse, &sc.fit)?;
            if cli.verbose {
                println!(
                    "initial path: {:.4} m over {} waypoints",
                    initial.total_length(),
                    coarse.len()
                );
            }
            let out = run_sweep(&sc, &initial, cfg.sweep.f_d, cfg.sweep.v_s)?;
            write_file(&cli.outdir.join("trace.csv"), &write_trace_csv(&out.trace))?;
            write_file(&cli.outdir.join("sweep.csv"), &write_sweep_csv(&out.sweep))?;

            let report = optimize_path(&out.sweep, &cloud, &sc.fit, cfg.path.seed_frame)?;
            write_file(
                &cli.outdir.join("optimized_path.toml"),
                &report.path.to_toml(),
            )?;

            let rescan = run_sweep(&sc, &report.path, cfg.sweep.f_d, cfg.sweep.v_s)?;
            write_file(
                &cli.outdir.join("trace_optimized.csv"),
                &write_trace_csv(&rescan.trace),
            )?;

            let run_id = format!("sweep-{}", &hash[..8]);
            let pre = compute_metrics(&out.trace, &run_id, &hash)?;
            let post = compute_metrics(&rescan.trace, &format!("{run_id}-optimized"), &hash)?;
            println!("-- initial path --\n{pre}");
            println!("-- optimized path --\n{post}");
            if post.deviation_mean >= pre.deviation_mean {
                println!("note: deviation did not improve");
            }
            Ok(())
        }
        Command::Phri(args) => {
            let (cfg, hash) = load_scenario(&args.scenario, cli.seed)?;
            let sc = cfg.scenario()?;
            let path = FittedPath::from_toml(&read_file(&args.path)?)
                .map_err(|e| Error::Io(format!("{}: {e}", args.path.display())))?;
            let profile = OperatorProfile::from_text(&read_file(&args.profile)?)?;
            let trace = run_phri(&sc, &path, &profile, cfg.sweep.f_d.min(3.0))?;
            write_file(&cli.outdir.join("trace_phri.csv"), &write_trace_csv(&trace))?;
            let report = compute_metrics(&trace, &format!("phri-{}", &hash[..8]), &hash)?;
            println!("{report}");
            Ok(())
        }
        Command::Metrics(args) => {
            let text = read_file(&args.trace)?;
            let trace = read_trace_csv(&text)?;
            let hash = config_hash(&text);
            let report = compute_metrics(&trace, &format!("metrics-{}", &hash[..8]), &hash)?;
            println!("{report}");
            if let Some(out) = &args.out {
                write_file(out, &report.to_toml())?;
            }
            Ok(())
        }
    }
}
