use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surfdiff::asymptotics::{verification_table, QuadratureSpec, DEFAULT_DIFFUSION_P, DEFAULT_ENERGY_P};
use surfdiff::config::{load_config, ConfigFile};
use surfdiff::driver::{run_convergence_sweep, run_sharp, run_simulation};
use surfdiff::Error;

/// Diffuse-interface surface diffusion lab.
#[derive(Debug, Parser)]
#[command(name = "surfdiff", version, about)]
struct Cli {
    /// Declare that the run must not depend on random numbers. Every code
    /// path is deterministic, so this only records the assertion.
    #[arg(long, global = true)]
    seedless: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory, overriding the configuration file. Relative paths
    /// are placed under $SURFDIFF_OUTPUT_ROOT when it is set.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one diffuse-interface model.
    Run {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Epsilon-convergence sweep against the sharp-interface reference.
    Sweep {
        config: PathBuf,
        /// Cells run concurrently (default: available cores).
        #[arg(long, value_name = "N")]
        workers: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Evolve a closed curve by surface diffusion.
    Sharp {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Check the unit integrals behind the normalizations.
    Verify {
        /// Exponents to check (energy rows are produced for p < 2 only).
        #[arg(long, value_delimiter = ',', value_name = "P,...")]
        p_list: Option<Vec<f64>>,
        /// Half-width of the integration interval.
        #[arg(long, default_value_t = QuadratureSpec::default().z_max)]
        z_max: f64,
        /// Quadrature nodes.
        #[arg(long, default_value_t = QuadratureSpec::default().n)]
        nodes: usize,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;

/// 0 success, 1 bad input, 2 computation failure, 3 tolerance violation.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Parse { .. } | Error::Io(_) => 1,
        Error::Tolerance { .. } => 3,
        _ => 2,
    }
}

fn load(path: &Path, out: &OutputArgs) -> Result<ConfigFile, Error> {
    let mut cfg = load_config(path).map_err(|e| match e {
        Error::Io(io) => Error::Validation {
            field: "config".into(),
            message: format!("{}: {io}", path.display()),
        },
        other => other,
    })?;
    if let Some(dir) = &out.output_dir {
        cfg.output_mut().dir = dir.clone();
    }
    Ok(cfg)
}

fn wrong_kind(path: &Path, expected: &str) -> Error {
    Error::Validation {
        field: "config".into(),
        message: format!("{} does not describe a {expected}", path.display()),
    }
}

fn execute(cli: Cli) -> Result<u8, Error> {
    if cli.seedless {
        log::info!("seedless: no random number generator is used anywhere in the pipeline");
    }
    match cli.command {
        Command::Run { config, out } => {
            let ConfigFile::Run(cfg) = load(&config, &out)? else {
                return Err(wrong_kind(&config, "single run ([model] table)"));
            };
            let report = run_simulation(&cfg)?;
            let s = &report.stats;
            println!(
                "{} steps to t = {:e}; mass drift {:.3e}; u in [{:.4}, {:.4}]; energy {:.6} -> {:.6}",
                s.steps, s.t, s.max_mass_drift, s.u_min, s.u_max, s.energy_initial, s.energy_final
            );
            println!("output: {}", report.dir.display());
        }
        Command::Sweep { config, workers, out } => {
            let ConfigFile::Sweep(cfg) = load(&config, &out)? else {
                return Err(wrong_kind(&config, "sweep ([sweep] table)"));
            };
            let workers = workers
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let table = run_convergence_sweep(&cfg, workers)?;
            println!("{:<6} {:>5} {:>8} {:>12} {:>12} {:>12}", "model", "p", "epsilon", "A_x", "A_x (SI)", "delta");
            for r in &table.rows {
                match &r.outcome {
                    Ok(c) => println!(
                        "{:<6} {:>5} {:>8} {:>12.6} {:>12.6} {:>12.4e}",
                        r.model.kind, r.model.p, r.epsilon, c.ax_diffuse, r.ax_sharp, c.delta
                    ),
                    Err(msg) => println!("{:<6} {:>5} {:>8} failed: {msg}", r.model.kind, r.model.p, r.epsilon),
                }
            }
            for s in &table.slopes {
                println!(
                    "order {} p={} ({} -> {}): {:.3}",
                    s.model.kind, s.model.p, s.epsilon_coarse, s.epsilon_fine, s.order
                );
            }
            println!("output: {}", table.dir.display());
            if table.failures() > 0 {
                eprintln!("error: {} of {} sweep cells failed", table.failures(), table.rows.len());
                return Ok(EXIT_SOLVER);
            }
        }
        Command::Sharp { config, out } => {
            let ConfigFile::Sharp(cfg) = load(&config, &out)? else {
                return Err(wrong_kind(&config, "sharp-interface run ([sharp] table only)"));
            };
            let report = run_sharp(&cfg)?;
            let (first, last) = (&report.samples[0], report.samples.last().expect("final sample"));
            println!(
                "{} steps to t = {:e}; A_x {:.6} -> {:.6}; area {:.6} -> {:.6}",
                report.steps, last.t, first.a_x, last.a_x, first.area, last.area
            );
            println!("output: {}", report.dir.display());
        }
        Command::Verify { p_list, z_max, nodes } => {
            let spec = QuadratureSpec {
                z_max,
                n: nodes,
                ..QuadratureSpec::default()
            };
            let (energy_p, diffusion_p) = match p_list {
                Some(ps) => {
                    if let Some(bad) = ps.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
                        return Err(Error::Validation {
                            field: "p-list".into(),
                            message: format!("exponents must be >= 0, got {bad}"),
                        });
                    }
                    (ps.iter().copied().filter(|&p| p < 2.0).collect(), ps)
                }
                None => (DEFAULT_ENERGY_P.to_vec(), DEFAULT_DIFFUSION_P.to_vec()),
            };
            let rows = verification_table(&energy_p, &diffusion_p, &spec)?;
            println!("{:<24} {:>5} {:>22} {:>12} {:>6}", "integral", "p", "value", "|value-1|", "result");
            let mut worst: Option<Error> = None;
            for r in &rows {
                let p = r.p.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
                println!(
                    "{:<24} {:>5} {:>22.16} {:>12.3e} {:>6}",
                    r.name,
                    p,
                    r.value,
                    r.deviation,
                    if r.passed { "pass" } else { "FAIL" }
                );
                if !r.passed && worst.is_none() {
                    worst = Some(Error::Tolerance {
                        name: format!("{} (p = {p})", r.name),
                        deviation: r.deviation,
                        tolerance: r.tolerance,
                    });
                }
            }
            if let Some(e) = worst {
                return Err(e);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
