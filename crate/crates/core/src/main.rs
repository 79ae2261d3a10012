use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use snl_core::certify::{self, Verdict};
use snl_core::error::IoError;
use snl_core::gradcheck;
use snl_core::io::{self, AnchorsRule, IngestColumns, Method, ResultDocument, ScenarioDocument, SolverOverrides, SweepOptions};
use snl_core::network::SensorNetwork;
use snl_core::solver::StopRule;
use snl_core::Error;

const EXIT_ERROR: u8 = 1;
const EXIT_NOT_CERTIFIED: u8 = 2;

/// Range-based sensor network localization via a canonical-duality saddle
/// method, with a global-equilibrium certificate.
#[derive(Debug, Parser)]
#[command(name = "snl", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalFlags {
    /// Random seed (instance generation, solver initialization)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Termination tolerance [default: 1e-5]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Initial step size
    #[arg(long, global = true)]
    alpha0: Option<f64>,
    /// Step decay exponent, in (0.5, 1]
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Sensing radius
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Iteration cap
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Project the dual onto its nonnegative part instead of the exact feasible set
    #[arg(long, global = true)]
    tau_nonneg: bool,
    /// Record iterates in the trace every this many iterations
    #[arg(long, global = true)]
    trace_every: Option<usize>,
    /// Stop on raw step norms instead of step norms divided by the step size
    #[arg(long, global = true)]
    raw_step_stop: bool,
}

impl GlobalFlags {
    fn overrides(&self) -> SolverOverrides {
        SolverOverrides {
            alpha0: self.alpha0,
            gamma: self.gamma,
            tol: self.tol,
            stop_rule: self.raw_step_stop.then_some(StopRule::Step),
            max_iter: self.max_iter,
            seed: self.seed,
            tau_nonneg: self.tau_nonneg.then_some(true),
            trace_every: self.trace_every,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random network and write it as a scenario file
    Generate {
        /// Number of non-anchor sensors
        #[arg(long)]
        sensors: usize,
        /// Number of anchors [default: max(n+1, ceil(N/5)), an arbitrary choice]
        #[arg(long)]
        anchors: Option<usize>,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Redraw until the network passes both rigidity tests
        #[arg(long)]
        rigid: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Solve a scenario and write a result document
    Solve {
        scenario: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the per-iteration trace as CSV
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Run plain projected descent on the potential instead
        #[arg(long)]
        baseline: bool,
    },
    /// Re-verify the certificate of a result document (exit 0 iff global equilibrium)
    Certify {
        result: PathBuf,
        #[arg(long, default_value_t = certify::DEFAULT_EPS_CERT)]
        eps_cert: f64,
        /// Stationarity tolerance [default: 1e-5 sqrt(nN)]
        #[arg(long)]
        eps_stat: Option<f64>,
    },
    /// Solve random networks over a range of sizes and summarize
    Sweep {
        /// Network sizes
        #[arg(long, value_delimiter = ',', default_values_t = io::DEFAULT_SWEEP_SIZES)]
        sizes: Vec<usize>,
        /// Seeds per size
        #[arg(long, value_delimiter = ',', default_values_t = io::DEFAULT_SWEEP_SEEDS)]
        seeds: Vec<u64>,
        /// Fixed anchor count [default: max(n+1, ceil(N/5)), an arbitrary choice]
        #[arg(long)]
        anchors: Option<usize>,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        /// Summary CSV (stdout when omitted)
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Directory for per-run result documents
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check every analytic derivative against finite differences
    Gradcheck {
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Convert a CSV of positions into a scenario (coordinates are min-max normalized)
    Ingest {
        csv: PathBuf,
        #[arg(long, default_value = "x")]
        x_col: String,
        #[arg(long, default_value = "y")]
        y_col: String,
        #[arg(long)]
        z_col: Option<String>,
        #[arg(long, default_value = "anchor")]
        anchor_col: String,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|source| {
        IoError::File {
            path: path.clone(),
            source,
        }
        .into()
    })
}

fn run(cli: Cli) -> Result<u8, Error> {
    let g = &cli.global;
    match cli.command {
        Command::Generate {
            sensors,
            anchors,
            dimension,
            rigid,
            out,
        } => {
            let m = anchors.unwrap_or_else(|| AnchorsRule::Proportional.anchors(dimension, sensors));
            let radius = g.radius.unwrap_or(io::DEFAULT_SWEEP_RADIUS);
            let seed = g.seed.unwrap_or(0);
            let net = if rigid {
                io::generate_rigid(dimension, sensors, m, radius, seed, io::MAX_GENERATION_ATTEMPTS)?.0
            } else {
                SensorNetwork::random(dimension, sensors, m, radius, seed)?
            };
            ScenarioDocument::from_network(&net, None).save(&out)?;
            Ok(0)
        }
        Command::Solve {
            scenario,
            out,
            trace,
            baseline,
        } => {
            let doc = ScenarioDocument::load(&scenario)?;
            let mut cfg = doc.solver_config();
            g.overrides().apply(&mut cfg);
            let method = if baseline { Method::Baseline } else { Method::Saddle };
            let (result, tr) = io::solve_scenario(&doc, &cfg, method)?;
            result.save(&out)?;
            if let Some(path) = trace {
                io::write_trace_csv(&tr, create(&path)?)?;
            }
            println!(
                "{:?} after {} iterations, verdict {:?}, P = {}",
                result.status,
                result.iterations,
                result.certificate.verdict,
                io::format_f64(result.potential)
            );
            if let Some(r) = &result.error_report {
                println!("rmse {} max error {}", io::format_f64(r.rmse), io::format_f64(r.max_error));
            }
            Ok(0)
        }
        Command::Certify {
            result,
            eps_cert,
            eps_stat,
        } => {
            let doc = ResultDocument::load(&result)?;
            let cert = doc.recertify(eps_cert, eps_stat)?;
            println!("verdict {:?}", cert.verdict);
            println!("max duality residual {}", io::format_f64(cert.max_residual));
            println!("stationarity residual x {}", io::format_f64(cert.stationary_residual_x));
            println!("stationarity residual tau {}", io::format_f64(cert.stationary_residual_tau));
            Ok(if cert.verdict == Verdict::GlobalNE {
                0
            } else {
                EXIT_NOT_CERTIFIED
            })
        }
        Command::Sweep {
            sizes,
            seeds,
            anchors,
            dimension,
            summary,
            out_dir,
        } => {
            let mut opts = SweepOptions {
                sizes,
                seeds,
                dimension,
                radius: g.radius.unwrap_or(io::DEFAULT_SWEEP_RADIUS),
                anchors: anchors.map_or(AnchorsRule::Proportional, AnchorsRule::Fixed),
                ..Default::default()
            };
            g.overrides().apply(&mut opts.cfg);
            let rows = io::run_sweep(&opts, out_dir.as_deref())?;
            match summary {
                Some(path) => io::write_sweep_csv(&rows, create(&path)?)?,
                None => io::write_sweep_csv(&rows, std::io::stdout().lock())?,
            }
            Ok(0)
        }
        Command::Gradcheck { points } => {
            let results = gradcheck::run_gradient_checks(points, g.seed.unwrap_or(0));
            let mut ok = true;
            for r in &results {
                println!(
                    "{} {}: error {:.3e} (tolerance {:.0e})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.error,
                    r.tolerance
                );
                ok &= r.passed;
            }
            Ok(if ok { 0 } else { EXIT_ERROR })
        }
        Command::Ingest {
            csv,
            x_col,
            y_col,
            z_col,
            anchor_col,
            out,
        } => {
            let cols = IngestColumns {
                x: x_col,
                y: y_col,
                z: z_col,
                anchor: anchor_col,
            };
            let radius = g
                .radius
                .ok_or_else(|| IoError::Invalid("ingest needs --radius".into()))?;
            let net = io::ingest_csv(&csv, &cols, radius)?;
            ScenarioDocument::from_network(&net, None).save(&out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
