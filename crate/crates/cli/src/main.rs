use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use epigrow::io::{emit_outputs, execute, parse_config_file, Command, RunSpec};
use epigrow::Error;

/// Epidemics in a growing population: theory, exact simulation, fluid limit.
///
/// Each invocation writes `summary.json`, `run_spec.json` and any CSV
/// tables into one output directory: `--out` if given, otherwise
/// `$EPIGROW_OUT/<command>`, otherwise `epigrow-out/<command>`.
/// Exit status is 0 on success, 2 for invalid input and 3 when a run fails.
#[derive(Debug, Parser)]
#[command(name = "epigrow", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Closed-form quantities: R0, alpha, minor outbreak probability, equilibrium.
    Theory(Flags),
    /// One exact simulation, written as trajectory.csv.
    Simulate(Flags),
    /// Epidemic with its lower and upper branching bounds, written as coupled.csv.
    Couple(Flags),
    /// The deterministic fluid limit, written as ode.csv.
    Ode(Flags),
    /// Replicated simulations with extinction and growth-rate statistics.
    Ensemble(Flags),
    /// One simulation against the fluid limit started at the same point.
    Compare(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON config, flat or as written to run_spec.json; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Latent-period exit rate; selects the SEIR model.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    n0: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long)]
    eps1: Option<f64>,
    #[arg(long)]
    eps2: Option<f64>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    initial_cases: Option<u64>,
    #[arg(long)]
    extinction_horizon: Option<f64>,
    /// Stop ensemble replicates once this many are latent or infectious.
    #[arg(long)]
    takeoff_threshold: Option<u64>,
    #[arg(long)]
    max_events: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// ODE start as `s,e,i,r`.
    #[arg(long, value_delimiter = ',')]
    z0: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "EPIGROW_OUT", hide_env_values = true)]
    out_root: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Map<String, Value> {
        let mut map = Map::new();
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(key.to_string(), v);
            }
        };
        put("lambda", self.lambda.map(Value::from));
        put("mu", self.mu.map(Value::from));
        put("gamma", self.gamma.map(Value::from));
        put("delta", self.delta.map(Value::from));
        put("nu", self.nu.map(Value::from));
        put("n0", self.n0.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("t_max", self.t_max.map(Value::from));
        put("dt", self.dt.map(Value::from));
        put("eps0", self.eps0.map(Value::from));
        put("eps1", self.eps1.map(Value::from));
        put("eps2", self.eps2.map(Value::from));
        put("replicates", self.replicates.map(Value::from));
        put("grid_step", self.grid_step.map(Value::from));
        put("initial_cases", self.initial_cases.map(Value::from));
        put(
            "extinction_horizon",
            self.extinction_horizon.map(Value::from),
        );
        put("takeoff_threshold", self.takeoff_threshold.map(Value::from));
        put("max_events", self.max_events.map(Value::from));
        put("parallelism", self.parallelism.map(Value::from));
        put("z0", self.z0.clone().map(Value::from));
        map
    }
}

/// Config file (if any) flattened, with flags layered on top.
fn resolve(command: Command, flags: &Flags) -> Result<RunSpec, Error> {
    let mut flat = Map::new();
    if let Some(path) = &flags.config {
        let base = parse_config_file(path, Some(command))?;
        for part in [
            serde_json::to_value(base.params).expect("params serialize"),
            serde_json::to_value(base.options).expect("options serialize"),
        ] {
            if let Value::Object(m) = part {
                flat.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
            }
        }
    }
    flat.extend(flags.overrides());
    RunSpec::from_json(Value::Object(flat), Some(command))
}

/// Failure and its exit status.
struct Failure(Error, u8);

fn run(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    let (command, flags) = match &cli.command {
        Cmd::Theory(f) => (Command::Theory, f),
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Couple(f) => (Command::Couple, f),
        Cmd::Ode(f) => (Command::Ode, f),
        Cmd::Ensemble(f) => (Command::Ensemble, f),
        Cmd::Compare(f) => (Command::Compare, f),
    };
    // anything wrong with the config, including an unreadable file, is bad input
    let spec = resolve(command, flags).map_err(|e| Failure(e, 2))?;
    let dir = match (&flags.out, &flags.out_root) {
        (Some(dir), _) => dir.clone(),
        (None, Some(root)) => root.join(command.name()),
        (None, None) => PathBuf::from("epigrow-out").join(command.name()),
    };
    let status = |e: Error| {
        let code = if e.is_validation() { 2 } else { 3 };
        Failure(e, code)
    };
    let output = execute(&spec).map_err(status)?;
    emit_outputs(&output, &dir).map_err(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure(e, code)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
