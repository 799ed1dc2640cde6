//! Batch CLI for the wave-map collapse laboratory.

use clap::{Args, Parser, Subcommand};
use sigma_collapse::config::{SimulateConfig, SweepConfig};
use sigma_collapse::error::{Error, Result};
use sigma_collapse::evolve::{self, StopStatus};
use sigma_collapse::functionals::{compute_constants, make_initial_data};
use sigma_collapse::modulation::{self, modulate_run, MorawetzConfig};
use sigma_collapse::odelab::{fit_rate, solve_ode, OdeModel, OdeVariant, RateModel, SolveOptions};
use sigma_collapse::operators::verify_report;
use sigma_collapse::output::{
    self, read_snapshot, read_t_lambda_csv, write_diagnostics_csv, write_manifest,
    write_modulation_csv, write_ode_csv, write_snapshot, GridInfo,
};
use sigma_collapse::{FieldState, HomotopyClass, QuadratureScheme, RadialGrid};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sigma-collapse", version, about = "Equivariant wave-map collapse laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve soliton-plus-perturbation initial data and write a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Modulation analysis of an existing run directory.
    Modulate(ModulateArgs),
    /// Quadrature evaluation of the profile constants.
    Constants {
        #[arg(long)]
        k: u32,
        /// Absolute quadrature tolerance.
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrete checks of the linearized operator identities.
    VerifyOperators {
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Grid spec: `uniform:N:Rmax`, `geometric:N:Rmin:Rmax`,
        /// or `twozone:N:hin:rc:Rmax`.
        #[arg(long)]
        grid: String,
        /// Number of additional 2x refinement levels.
        #[arg(long, default_value_t = 2)]
        refine: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the reduced blowup ODE; optionally fit a rate law to an
    /// existing `t,lambda` series.
    Ode(OdeArgs),
    /// Cartesian parameter sweep of simulate runs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ModulateArgs {
    /// Run directory containing snapshot files.
    #[arg(long)]
    run: PathBuf,
    /// Morawetz weight exponent.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Morawetz window `t0 t1`; omitted disables the Morawetz functional.
    #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
    morawetz: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OdeArgs {
    /// One of geodesic, riccati, refined, constant-memory.
    #[arg(long)]
    variant: String,
    #[arg(long = "C0")]
    c0: f64,
    #[arg(long)]
    eps0: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Integrate up to this time instead of the blowup stop.
    #[arg(long)]
    t_end: Option<f64>,
    /// Fit both rate models to the `t,lambda` columns of this CSV and
    /// print the fits as JSON on stdout.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config } => {
            let cfg = SimulateConfig::parse_str(&fs::read_to_string(&config)?)?;
            run_simulate(&cfg, &config)?;
            Ok(())
        }
        Command::Modulate(args) => run_modulate(&args),
        Command::Constants { k, tol, out } => {
            let scheme = QuadratureScheme { abs_tol: tol, ..QuadratureScheme::default() };
            let constants = compute_constants(HomotopyClass::new(k)?, &scheme)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&constants)?)?;
            Ok(())
        }
        Command::VerifyOperators { k, lambda, grid, refine, out } => {
            let grid = parse_grid_spec(&grid)?;
            let report = verify_report(HomotopyClass::new(k)?, lambda, &grid, refine)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            Ok(())
        }
        Command::Ode(args) => run_ode(&args),
        Command::Sweep { config } => run_sweep(&config),
    }
}

/// Print to stdout or write to the given file.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_grid_spec(spec: &str) -> Result<RadialGrid> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Config(format!("bad grid spec `{spec}`"));
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad()) };
    let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad()) };
    match parts.as_slice() {
        ["uniform", n, rmax] => RadialGrid::uniform(int(n)?, num(rmax)?),
        ["geometric", n, rmin, rmax] => RadialGrid::geometric(int(n)?, num(rmin)?, num(rmax)?),
        ["twozone", n, hin, rc, rmax] => {
            RadialGrid::two_zone(int(n)?, num(hin)?, num(rc)?, num(rmax)?)
        }
        _ => Err(bad()),
    }
}

/// Echo of the effective simulate configuration for the manifest.
fn config_echo(cfg: &SimulateConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("k".into(), cfg.k.to_string());
    m.insert("epsilon".into(), format!("{}", cfg.epsilon));
    m.insert("c0".into(), format!("{}", cfg.c0));
    m.insert("grid.N".into(), cfg.grid_n.to_string());
    if let Some(h) = cfg.grid_hin {
        m.insert("grid.hin".into(), format!("{h}"));
    }
    if let Some(rc) = cfg.grid_rc {
        m.insert("grid.rc".into(), format!("{rc}"));
    }
    m.insert("grid.Rmax".into(), format!("{}", cfg.grid_rmax));
    m.insert("cfl".into(), format!("{}", cfg.cfl));
    m.insert("T_end".into(), format!("{}", cfg.t_end));
    m.insert("snapshot_stride".into(), cfg.snapshot_stride.to_string());
    m.insert("regrid.depth".into(), cfg.regrid_depth.to_string());
    m.insert("out_dir".into(), cfg.out_dir.clone());
    m
}

struct SimulateSummary {
    status: StopStatus,
    lambda_final: Option<f64>,
    energy_drift: Option<f64>,
}

fn run_simulate(cfg: &SimulateConfig, _config_path: &Path) -> Result<SimulateSummary> {
    let start = Instant::now();
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)
        .map_err(|e| Error::RunDir(format!("{}: {e}", out_dir.display())))?;
    let k = cfg.homotopy_class()?;
    let grid = cfg.build_grid()?;
    let scheme = QuadratureScheme::default();
    let zero = |_r: f64| 0.0;
    let initial = make_initial_data(k, cfg.epsilon, &zero, &zero, cfg.c0, grid, &scheme)?;
    let result = evolve::run(&initial, &cfg.evolve_config())?;

    let mut files = Vec::new();
    for (i, snap) in result.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:06}.bin");
        write_snapshot(&out_dir.join(&name), snap)?;
        files.push(name);
    }
    write_diagnostics_csv(&out_dir.join("diagnostics.csv"), &result.diagnostics)?;
    files.push("diagnostics.csv".into());

    let lambda_final = result
        .snapshots
        .last()
        .and_then(|s| modulation::extract_lambda(s, 1.0).ok())
        .map(|e| e.lambda);
    let energy_drift = match (result.diagnostics.first(), result.diagnostics.last()) {
        (Some(a), Some(b)) if a.energy != 0.0 => Some((b.energy - a.energy).abs() / a.energy.abs()),
        _ => None,
    };
    let status = format!("{:?}", result.status);
    write_manifest(
        &out_dir,
        config_echo(cfg),
        GridInfo::of(&initial.grid),
        &status,
        start.elapsed().as_secs_f64(),
        &files,
    )?;
    Ok(SimulateSummary { status: result.status, lambda_final, energy_drift })
}

fn run_modulate(args: &ModulateArgs) -> Result<()> {
    let start = Instant::now();
    fs::create_dir_all(&args.out)
        .map_err(|e| Error::RunDir(format!("{}: {e}", args.out.display())))?;
    let snapshots: Vec<FieldState> = output::list_snapshots(&args.run)?
        .iter()
        .map(|p| read_snapshot(p))
        .collect::<Result<_>>()?;
    let k = snapshots[0].k;
    let constants = compute_constants(k, &QuadratureScheme::default())?;
    let coeffs = constants.w0_coefficients();
    let trace = modulate_run(&snapshots, &coeffs, 1.0)?;
    write_modulation_csv(&args.out.join("modulation.csv"), &trace)?;
    let mut files = vec!["modulation.csv".to_string()];

    if let Some(window) = &args.morawetz {
        let cfg = MorawetzConfig { delta: args.delta, t0: window[0], t1: window[1] };
        let mut snaps = Vec::new();
        let mut lambdas = Vec::new();
        let mut lambda_dots = Vec::new();
        for (s, row) in snapshots.iter().zip(&trace.rows) {
            if row.status == "ok" {
                snaps.push(s.clone());
                lambdas.push(row.lambda);
                lambda_dots.push(row.lambda_dot);
            }
        }
        let energy = modulation::morawetz_energy(&snaps, &lambdas, &lambda_dots, &coeffs, &cfg)?;
        let json = serde_json::json!({
            "delta": cfg.delta,
            "t0": cfg.t0,
            "t1": cfg.t1,
            "energy": energy,
        });
        fs::write(args.out.join("morawetz.json"), serde_json::to_string_pretty(&json)?)?;
        files.push("morawetz.json".into());
    }

    let mut config = BTreeMap::new();
    config.insert("run".into(), args.run.display().to_string());
    config.insert("delta".into(), format!("{}", args.delta));
    write_manifest(
        &args.out,
        config,
        GridInfo::of(&snapshots[0].grid),
        "Completed",
        start.elapsed().as_secs_f64(),
        &files,
    )?;
    Ok(())
}

fn run_ode(args: &OdeArgs) -> Result<()> {
    let variant = match args.variant.as_str() {
        "geodesic" => OdeVariant::Geodesic,
        "riccati" => OdeVariant::Riccati,
        "refined" => OdeVariant::Refined,
        "constant-memory" => OdeVariant::ConstantMemory,
        other => return Err(Error::Config(format!("unknown variant `{other}`"))),
    };
    let model = OdeModel::new(variant, args.c0, args.eps0, args.kappa)?;
    let opts = SolveOptions { t_end: args.t_end, ..SolveOptions::default() };
    let series = solve_ode(&model, &opts)?;
    match &args.out {
        Some(path) => write_ode_csv(path, &series)?,
        None => print!("{}", output::ode_csv_string(&series)),
    }
    if let Some(t_star_star) = series.t_star_star {
        eprintln!("blowup-time estimate: {t_star_star:.12}");
    }
    if let Some(fit_path) = &args.fit {
        let (ts, lambdas) = read_t_lambda_csv(fit_path)?;
        let pure = fit_rate(&ts, &lambdas, RateModel::PureSelfSimilar)?;
        let log_mod = fit_rate(&ts, &lambdas, RateModel::LogModified)?;
        let json = serde_json::json!({
            "pure_self_similar": pure,
            "log_modified": log_mod,
        });
        println!("{}", serde_json::to_string_pretty(&json)?);
    }
    Ok(())
}

fn run_sweep(config: &Path) -> Result<()> {
    let text = fs::read_to_string(config)?;
    let sweep = SweepConfig::parse_str(&text)?;
    let base_out = sweep
        .base
        .get("out_dir")
        .cloned()
        .ok_or_else(|| Error::Config("missing key `out_dir`".into()))?;
    fs::create_dir_all(&base_out).map_err(|e| Error::RunDir(format!("{base_out}: {e}")))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(n) = std::env::var("SIGMA_COLLAPSE_THREADS") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Config(format!("SIGMA_COLLAPSE_THREADS = `{n}` not a count")))?;
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;

    let points = sweep.points();
    let results: Vec<(BTreeMap<String, String>, std::result::Result<SimulateSummary, String>)> =
        pool.install(|| {
            use rayon::prelude::*;
            points
                .par_iter()
                .enumerate()
                .map(|(i, point)| {
                    let mut point = point.clone();
                    point.insert("out_dir".into(), format!("{base_out}/run_{i:03}"));
                    let summary = SimulateConfig::from_map(&point)
                        .and_then(|cfg| run_simulate(&cfg, config))
                        .map_err(|e| e.to_string());
                    (point, summary)
                })
                .collect()
        });

    let mut csv = String::from("k,epsilon,grid_N,out_dir,status,lambda_final,energy_drift\n");
    let mut any_failed = false;
    for (point, summary) in &results {
        let opt = |v: Option<f64>| v.map(output::fmt_f64).unwrap_or_default();
        let (status, lam, drift) = match summary {
            Ok(s) => (format!("{:?}", s.status), opt(s.lambda_final), opt(s.energy_drift)),
            Err(msg) => {
                any_failed = true;
                (format!("Failed: {}", msg.replace(',', ";")), String::new(), String::new())
            }
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            point["k"], point["epsilon"], point["grid.N"], point["out_dir"], status, lam, drift
        ));
    }
    fs::write(Path::new(&base_out).join("sweep.csv"), csv)?;
    if any_failed {
        return Err(Error::Config("one or more sweep points failed; see sweep.csv".into()));
    }
    Ok(())
}
