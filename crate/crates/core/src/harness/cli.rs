//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::{error, info};

use super::config::{config_args, load_config};
use super::experiments::{
    channel_experiment, classical_experiment, convergence_experiment, convergence_table, horizon_experiment,
    horizon_table, lambda_sweep, long_time_experiment, monte_carlo_experiment, resolve_timing, trajectory_experiment,
    ExperimentSpec,
};
use super::table::{Cell, Table};
use crate::error::{Result, WalkError};
use crate::oracles::{
    complete_graph_classical_return, complete_graph_quantum_return, flat_limit, rescaled_reference,
    ring4_classical_return,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub fn exit_code(e: &WalkError) -> i32 {
    match e {
        WalkError::Numerical(_) => EXIT_NUMERICAL,
        WalkError::Io { .. } => EXIT_IO,
        WalkError::InvalidArgument(_) | WalkError::Capacity { .. } | WalkError::Parse(_) => EXIT_USAGE,
    }
}

#[derive(Parser, Debug)]
#[command(name = "percwalk", version, about = "Quantum walks on dynamically percolated graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single stochastic trajectory (quantum).
    #[command(args_override_self = true)]
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Run one trajectory per λ, writing `<out stem>_lambda<λ>.csv` each.
        #[arg(long, value_delimiter = ',', requires = "out")]
        lambda_list: Option<Vec<f64>>,
    },
    /// Exact ensemble evolution with the enumerated step channel.
    #[command(args_override_self = true)]
    Channel(Common),
    /// Trajectory-averaged density matrix.
    #[command(args_override_self = true)]
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trajectories: usize,
    },
    /// Classical walk on the sampled realizations.
    #[command(args_override_self = true)]
    Classical(Common),
    /// Closed-form reference curve.
    #[command(args_override_self = true)]
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Which::Rescaled)]
        which: Which,
    },
    /// Maximum error against the rescaled walk for several step counts.
    #[command(args_override_self = true)]
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
        steps_list: Vec<usize>,
    },
    /// Time until the relative error first reaches each epsilon.
    #[command(args_override_self = true)]
    Horizon {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "500,4000,32000,512000")]
        steps_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1")]
        eps_list: Vec<f64>,
    },
    /// Long-time channel and trajectory with an exponential envelope fit.
    #[command(args_override_self = true)]
    Envelope {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3000)]
        trajectory_steps: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Which {
    Rescaled,
    CompleteQ,
    CompleteC,
    Ring4C,
    Flat,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Csv,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// ring:N, lattice2d:WxH, torus2d:WxH, complete:N or file:PATH
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    time: Option<f64>,
    /// Starting node (0-based).
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record every n-th step.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// key = value parameter file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    /// Fills unset parameters from `preset`. Timing takes any two of tau,
    /// steps and time; missing ones come from the preset's total time first.
    fn resolve(&self, preset: ExperimentSpec) -> Result<ExperimentSpec> {
        let (mut tau, steps, mut time) = (self.tau, self.steps, self.time);
        let given = [tau.is_some(), steps.is_some(), time.is_some()].iter().filter(|&&b| b).count();
        if given < 2 && time.is_none() {
            time = Some(preset.total_time());
        }
        if given == 0 {
            tau = Some(preset.tau);
        }
        let (tau, steps) = resolve_timing(tau, steps, time)?;
        Ok(ExperimentSpec {
            graph: self.graph.clone().unwrap_or(preset.graph),
            lambda: self.lambda.unwrap_or(preset.lambda),
            tau,
            steps,
            // The preset's start node only makes sense on the preset's graph.
            start: self.start.unwrap_or(if self.graph.is_some() { 0 } else { preset.start }),
            seed: self.seed.unwrap_or(preset.seed),
            stride: self.stride.unwrap_or(preset.stride),
            gamma: self.gamma.unwrap_or(preset.gamma),
        })
    }
}

fn emit(table: &Table, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            table.write(path)?;
            info!("wrote {} rows to {}", table.rows().len(), path.display());
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            stdout
                .lock()
                .write_all(table.to_csv().as_bytes())
                .map_err(|e| WalkError::io("<stdout>", e))
        }
    }
}

fn sweep_path(out: &Path, lambda: f64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}_lambda{lambda}{ext}"))
}

fn oracle_table(spec: &ExperimentSpec, which: Which) -> Result<Table> {
    let g = spec.load_graph()?;
    let n = g.node_count();
    let scale = spec.lambda * spec.gamma;
    let curve: Box<dyn Fn(f64) -> f64> = match which {
        Which::Rescaled => {
            let o = rescaled_reference(&g, &spec.walk_config()?, spec.lambda, spec.start, spec.start)?;
            Box::new(move |t| o.evaluate(t))
        }
        Which::CompleteQ => Box::new(move |t| complete_graph_quantum_return(n, scale * t)),
        Which::CompleteC => Box::new(move |t| complete_graph_classical_return(n, scale * t)),
        Which::Ring4C => Box::new(move |t| ring4_classical_return(scale, t)),
        Which::Flat => Box::new(move |_| flat_limit(n)),
    };
    let mut table = Table::new(["t", "p_oracle"]);
    let mut s = 0;
    loop {
        let t = s as f64 * spec.tau;
        table.push_row(vec![Cell::Float(t), Cell::Float(curve(t))]);
        if s == spec.steps {
            break;
        }
        s = (s + spec.stride).min(spec.steps);
    }
    table.meta("experiment", "oracle").meta("which", format!("{which:?}").to_lowercase());
    table
        .meta("graph", &spec.graph)
        .meta("lambda", spec.lambda)
        .meta("tau", spec.tau)
        .meta("steps", spec.steps)
        .meta("start", spec.start)
        .meta("stride", spec.stride)
        .meta("gamma", spec.gamma);
    Ok(table)
}

fn execute(command: Command) -> Result<i32> {
    let (common, table, status) = match command {
        Command::Trajectory {
            common,
            lambda_list: Some(lambdas),
        } => {
            let spec = common.resolve(ExperimentSpec::lattice())?;
            let out = common.out.as_ref().expect("clap requires --out");
            for (lambda, table) in lambda_sweep(&spec, &lambdas)? {
                emit(&table, Some(&sweep_path(out, lambda)))?;
            }
            return Ok(EXIT_OK);
        }
        Command::Trajectory { common, .. } => {
            let t = trajectory_experiment(&common.resolve(ExperimentSpec::lattice())?)?;
            (common, t, EXIT_OK)
        }
        Command::Channel(c) => {
            let t = channel_experiment(&c.resolve(ExperimentSpec::ring_channel())?)?;
            (c, t, EXIT_OK)
        }
        Command::Montecarlo { common, trajectories } => {
            let t = monte_carlo_experiment(&common.resolve(ExperimentSpec::ring_channel())?, trajectories)?;
            (common, t, EXIT_OK)
        }
        Command::Classical(c) => {
            let t = classical_experiment(&c.resolve(ExperimentSpec::complete_graph())?)?;
            (c, t, EXIT_OK)
        }
        Command::Oracle { common, which } => {
            let t = oracle_table(&common.resolve(ExperimentSpec::ring_channel())?, which)?;
            (common, t, EXIT_OK)
        }
        Command::Convergence { common, steps_list } => {
            let spec = common.resolve(ExperimentSpec::convergence())?;
            let points = convergence_experiment(&spec, &steps_list)?;
            (common, convergence_table(&spec, &points), EXIT_OK)
        }
        Command::Horizon {
            common,
            steps_list,
            eps_list,
        } => {
            let spec = common.resolve(ExperimentSpec::horizon())?;
            let points = horizon_experiment(&spec, &steps_list, &eps_list)?;
            (common, horizon_table(&spec, &points), EXIT_OK)
        }
        Command::Envelope {
            common,
            trajectory_steps,
        } => {
            let spec = common.resolve(ExperimentSpec::long_time())?;
            let outcome = long_time_experiment(&spec, trajectory_steps)?;
            let status = match &outcome.fit {
                Ok(f) if f.is_valid() => EXIT_OK,
                Ok(f) => {
                    error!(
                        "envelope fit failed: a = {}, b = {}, residual = {}, converged = {} after {} iterations",
                        f.a, f.b, f.residual, f.converged, f.iterations
                    );
                    EXIT_NUMERICAL
                }
                Err(e) => {
                    error!("envelope fit failed: {e}");
                    exit_code(e)
                }
            };
            (common, outcome.table, status)
        }
    };
    emit(&table, common.out.as_ref())?;
    Ok(status)
}

/// Splices `--config` file values in right after the subcommand so that
/// flags given on the command line, which come later, override them.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let pos = argv.iter().position(|a| a == "--config");
    let inline = argv
        .iter()
        .position(|a| a.to_str().is_some_and(|s| s.starts_with("--config=")));
    let path = match (pos, inline) {
        (Some(i), _) => match argv.get(i + 1) {
            Some(p) => PathBuf::from(p),
            None => return Ok(argv),
        },
        (None, Some(i)) => PathBuf::from(&argv[i].to_str().unwrap()["--config=".len()..]),
        (None, None) => return Ok(argv),
    };
    let extra = config_args(&load_config(&path)?);
    let sub = argv
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(1, |i| i + 2);
    let mut out = argv[..sub.min(argv.len())].to_vec();
    out.extend(extra.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[sub.min(argv.len())..]);
    Ok(out)
}

/// Runs the command line `argv` (program name first) and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_lands_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "lambda = 0.3\n").unwrap();
        let argv: Vec<OsString> = ["percwalk", "channel", "--config", cfg.to_str().unwrap(), "--lambda", "0.9"]
            .iter()
            .map(OsString::from)
            .collect();
        let expanded = expand_config(argv).unwrap();
        assert_eq!(expanded[1], "channel");
        assert_eq!(expanded[2], "--lambda");
        assert_eq!(expanded[3], "0.3");
        let cli = Cli::try_parse_from(expanded).unwrap();
        match cli.command {
            Command::Channel(c) => assert_eq!(c.lambda, Some(0.9)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timing_defaults_follow_preset() {
        let c = Common::try_parse_from_steps(Some(2000));
        let spec = c.resolve(ExperimentSpec::long_time()).unwrap();
        assert_eq!(spec.steps, 2000);
        assert!((spec.tau - 0.05).abs() < 1e-15);
    }

    impl Common {
        fn try_parse_from_steps(steps: Option<usize>) -> Self {
            Common {
                graph: None,
                lambda: None,
                tau: None,
                steps,
                time: None,
                start: None,
                seed: None,
                stride: None,
                gamma: None,
                out: None,
                format: Format::Csv,
                config: None,
            }
        }
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&WalkError::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&WalkError::io("f", std::io::Error::other("x"))), EXIT_IO);
        assert_eq!(exit_code(&WalkError::Capacity { edges: 105, limit: 24 }), EXIT_USAGE);
    }
}
