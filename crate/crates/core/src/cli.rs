//! Command-line front end: argument parsing, subcommands and output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::indicator::{estimate_support, uniform_directions, Sweeper, SWEEP_CSV_HEADER};
use crate::mesh::{assign_conductivity, generate_mesh};
use crate::monotonicity::{run_suite, write_json_lines, Verdict};
use crate::solver::ForwardSolver;
use crate::wolff::{default_span, integrate_profile, DirectionFrame, TestFunctionParams};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "p-enclose", version, about = "Enclosure method for the weighted p-Laplace equation")]
pub struct Cli {
    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides `workers`).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Integrate the Wolff profile and report its period.
    Wolff,
    /// Solve one forward problem with Wolff boundary data.
    Forward,
    /// Indicator sweep over the tau grid in one direction.
    Sweep,
    /// Reconstruct the convex hull of the inclusion.
    Reconstruct,
    /// Randomized check of the monotonicity inequality.
    Monotonicity,
}

impl Cli {
    /// Configuration file merged with command-line overrides.
    pub fn resolve_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let config = cli.resolve_config()?;
    let workers = if config.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("field `workers`: {e}")))?;
    fs::create_dir_all(&config.out_dir)?;
    pool.install(|| match cli.command {
        Command::Wolff => cmd_wolff(&config),
        Command::Forward => cmd_forward(&config),
        Command::Sweep => cmd_sweep(&config),
        Command::Reconstruct => cmd_reconstruct(&config),
        Command::Monotonicity => cmd_monotonicity(&config),
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut out)?;
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        out.write_all(b"\n")?;
        Ok(())
    })
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn cmd_wolff(config: &RunConfig) -> Result<i32> {
    let span = config.span.unwrap_or_else(|| default_span(config.p));
    let profile = integrate_profile(config.p, config.a0, config.b0, config.ode_step, span)?;
    let summary = profile.summary();
    write_atomic(&config.out_dir.join("wolff_profile.csv"), |out| Ok(profile.write_csv(out)?))?;
    write_json(&config.out_dir.join("wolff_summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ForwardReport {
    p: f64,
    tau: f64,
    t: f64,
    rho: [f64; 2],
    vertices: usize,
    triangles: usize,
    h_max: f64,
    pairing: f64,
    report: crate::solver::SolveReport,
}

fn single_direction(config: &RunConfig) -> Result<(DirectionFrame, f64)> {
    let frame = DirectionFrame::from_angle(config.direction_angle);
    let t = config.t.unwrap_or_else(|| config.domain.support(frame.rho));
    Ok((frame, t))
}

fn cmd_forward(config: &RunConfig) -> Result<i32> {
    let (frame, t) = single_direction(config)?;
    let h = config.mesh_h.min(config.mesh_ratio / config.tau);
    let mesh = generate_mesh(&config.domain, h, config.max_vertices)?;
    let sigma = assign_conductivity(&mesh, &config.inclusion, config.contrast)?;
    let profile = crate::wolff::default_profile(config.p)?;
    let params = TestFunctionParams::new(frame, config.tau, t, &profile)?;
    let u0 = mesh.interpolate(|x| params.value(x))?;
    let trace: Vec<f64> = mesh.boundary_nodes().iter().map(|&i| u0[i]).collect();
    let solver = ForwardSolver::new(&mesh)?;
    let (u, report) = solver.solve(&mesh, &sigma, &trace, config.p, &config.solver_options(), Some(&u0))?;
    write_atomic(&config.out_dir.join("forward_solution.csv"), |out| Ok(u.write_csv(&mesh, out)?))?;
    let summary = ForwardReport {
        p: config.p,
        tau: config.tau,
        t,
        rho: frame.rho,
        vertices: mesh.num_vertices(),
        triangles: mesh.num_triangles(),
        h_max: mesh.h_max(),
        pairing: report.energy,
        report,
    };
    write_json(&config.out_dir.join("forward_report.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    sweep: &'a crate::indicator::SweepResult,
    estimate: Option<crate::geometry::SupportEstimate>,
    failure: Option<String>,
}

fn cmd_sweep(config: &RunConfig) -> Result<i32> {
    let (frame, t) = single_direction(config)?;
    let sweeper = Sweeper::new(config.problem())?;
    let sweep = sweeper.sweep(frame.rho, t)?;
    write_atomic(&config.out_dir.join("sweep.csv"), |out| {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        Ok(sweep.write_csv_rows(out)?)
    })?;
    let (estimate, failure) = match estimate_support(&sweep) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = SweepSummary {
        sweep: &sweep,
        estimate,
        failure,
    };
    write_json(&config.out_dir.join("sweep.json"), &summary)?;
    println!(
        "slope {:.6} sign {:?} usable {}/{}",
        sweep.slope,
        sweep.sign,
        sweep.usable,
        sweep.samples.len()
    );
    Ok(0)
}

fn cmd_reconstruct(config: &RunConfig) -> Result<i32> {
    let started = timestamp();
    let sweeper = Sweeper::new(config.problem())?;
    let rec = sweeper.reconstruct(&uniform_directions(config.directions))?;
    for (k, sweep) in rec.sweeps.iter().enumerate() {
        write_atomic(&config.out_dir.join(format!("sweep_{k:03}.csv")), |out| {
            writeln!(out, "{SWEEP_CSV_HEADER}")?;
            Ok(sweep.write_csv_rows(out)?)
        })?;
    }
    write_json(&config.out_dir.join("hull.json"), &rec)?;
    if let Some(hull) = &rec.hull {
        write_atomic(&config.out_dir.join("hull.csv"), |out| Ok(hull.write_csv(out)?))?;
    }
    let line = rec.summary_line();
    let mut text = format!("{line}\nstarted {started}\nfinished {}\n", timestamp());
    for d in &rec.directions {
        match (&d.estimate, &d.failure) {
            (Some(e), _) => text.push_str(&format!(
                "rho ({:+.4}, {:+.4})  h_hat {:.5}  fit residual {:.2e}  sign {}\n",
                d.rho[0],
                d.rho[1],
                e.h_hat,
                e.slope_fit_residual,
                d.sign.as_i8()
            )),
            (None, Some(f)) => text.push_str(&format!("rho ({:+.4}, {:+.4})  {f}\n", d.rho[0], d.rho[1])),
            (None, None) => {}
        }
    }
    write_atomic(&config.out_dir.join("summary.txt"), |out| Ok(out.write_all(text.as_bytes())?))?;
    println!("{line}");
    Ok(0)
}

fn cmd_monotonicity(config: &RunConfig) -> Result<i32> {
    let records = run_suite(&config.suite())?;
    write_atomic(&config.out_dir.join("monotonicity.jsonl"), |out| write_json_lines(&records, out))?;
    let failed = records.iter().filter(|r| r.report.verdict == Verdict::Fail).count();
    println!("{} cases, {failed} failed (seed {})", records.len(), config.seed);
    Ok(if failed == 0 { 0 } else { EXIT_NUMERICAL })
}

/// Exit code for an error: configuration problems versus numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}
