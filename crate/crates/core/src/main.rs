use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshbal::report::{emit_report, write_atomic, BaseScenario, ReportError, SweepSpec, SweepVar};
use meshbal::scenario::{defaults_template, parse_scenario, ScenarioError, DEFAULT_SEED};

const EXIT_USAGE: u8 = 1;
const EXIT_SCENARIO: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "meshbal", version, about = "Association and load-balancing simulator for 802.11 mesh networks")]
struct Cli {
    /// Print a scenario file holding every default and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario once per policy and repetition.
    Run(Common),
    /// Run a scenario over a list of values of one variable.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// num_stations, file_size_kb, voip_sessions, num_aps or policy.
        #[arg(long)]
        var: SweepVar,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    scenario: Option<PathBuf>,
    /// Builtin scenario: fourcell, mesh_ftp or mesh_voip.
    #[arg(long)]
    builtin: Option<String>,
    /// Comma-separated policy labels, e.g. rssi,airtime+coop,lb+coop.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Base seed; repetition r uses seed + r. Falls back to MESHBAL_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Event trace output (single run only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Policy the summary compares against.
    #[arg(long, default_value = "rssi")]
    baseline: String,
}

enum Failure {
    Usage(String),
    Scenario(String),
    Runtime(String),
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Scenario(e) => Failure::Scenario(e.to_string()),
            ReportError::Validation(m) => Failure::Usage(m),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e.to_string())
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("MESHBAL_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("MESHBAL_SEED is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn execute(common: Common, variable: Option<SweepVar>, values: Vec<String>) -> Result<(), Failure> {
    let base_seed = resolve_seed(common.seed)?;
    let base = match (&common.scenario, &common.builtin) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Scenario(format!("{}: {e}", path.display())))?;
            let mut sc = parse_scenario(&text)?;
            // An explicit seed overrides the file's.
            if common.seed.is_some() || std::env::var_os("MESHBAL_SEED").is_some() {
                sc.seed = base_seed;
            }
            let seed = sc.seed;
            (BaseScenario::File(Box::new(sc)), seed)
        }
        (None, Some(name)) => (BaseScenario::Builtin(name.clone()), base_seed),
        (None, None) => return Err(Failure::Usage("one of --scenario or --builtin is required".into())),
    };
    let (base, base_seed) = base;
    let spec = SweepSpec {
        variable,
        values,
        policies: common.policies,
        repetitions: common.reps,
        base_seed,
        base,
    };
    spec.validate()?;
    let rows = match &common.trace {
        Some(path) => {
            if spec.job_count() != 1 {
                return Err(Failure::Usage(format!("--trace needs exactly one run, got {}", spec.job_count())));
            }
            let file = std::fs::File::create(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            let mut w = std::io::BufWriter::new(file);
            let row = spec.execute_traced(&mut w)?;
            w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
            vec![row]
        }
        None => spec.execute()?,
    };
    let (csv, summary) = emit_report(&rows, &common.baseline)?;
    match &common.out {
        Some(path) => {
            write_atomic(path, &csv).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            print!("{summary}");
        }
        None => {
            print!("{csv}");
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        _ if cli.dump_defaults => {
            print!("{}", defaults_template());
            Ok(())
        }
        Some(Command::Run(common)) => execute(common, None, Vec::new()),
        Some(Command::Sweep { common, var, values }) => execute(common, Some(var), values),
        None => Err(Failure::Usage("expected a subcommand (run, sweep) or --dump-defaults".into())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Scenario(m)) => {
            eprintln!("scenario error: {m}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("runtime error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
