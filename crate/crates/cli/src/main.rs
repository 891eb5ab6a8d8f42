use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flexcoord::coordination::{plan_aggregators, run_with_plans, Scenario, Scheme, SettlementReport};
use flexcoord::io::{export_comparison, export_results, export_sweep, load_scenario, read_scenario, SweepRow};
use flexcoord::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Day-ahead simulation of EV aggregators offering balancing energy under
/// hybrid or DSO-managed TSO-DSO coordination.
#[derive(Parser, Debug)]
#[command(name = "flexcoord", version)]
struct Cli {
    /// Worker threads for per-EV planning (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or both coordination schemes and export the results.
    Simulate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Scheme to run; `both` also prints a comparison table.
        #[arg(long, value_enum, default_value_t = SchemeArg::Both)]
        scheme: SchemeArg,
        /// Output directory; `both` writes one subdirectory per scheme plus comparison.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the scenario once per parameter value and report volume totals.
    Sweep {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Parameter to vary: brp_fee, consumer_price or loading_threshold.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `30,200`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        /// Scheme used for every run (default: the scenario's own scheme).
        #[arg(long, value_enum)]
        scheme: Option<SingleScheme>,
        /// Output directory for sweep.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario and list every violation.
    Validate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Hybrid,
    DsoManaged,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SingleScheme {
    Hybrid,
    DsoManaged,
}

impl From<SingleScheme> for Scheme {
    fn from(s: SingleScheme) -> Self {
        match s {
            SingleScheme::Hybrid => Scheme::Hybrid,
            SingleScheme::DsoManaged => Scheme::DsoManaged,
        }
    }
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Solver { .. } | Error::SingularSystem | Error::LedgerMismatch(_) => EXIT_SOLVER,
            Error::UnknownParameter(_) => EXIT_USAGE,
            _ => EXIT_VALIDATION,
        };
        let message = match e.root() {
            Error::Validation(violations) => {
                let mut m = format!("{e}");
                for v in violations {
                    m.push_str(&format!("\n  {v}"));
                }
                m
            }
            _ => e.to_string(),
        };
        Failure { code, message }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Simulate { scenario, scheme, out } => simulate(&scenario, scheme, out.as_deref()),
        Command::Sweep { scenario, param, values, scheme, out } => {
            sweep(&scenario, &param, &values, scheme.map(Scheme::from), out.as_deref())
        }
        Command::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn simulate(path: &Path, scheme: SchemeArg, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let plans = plan_aggregators(&scenario)?;
    let single = |scheme: Scheme| -> Result<SettlementReport, Failure> {
        let report = run_with_plans(&scenario, scheme, &plans)?;
        print_report(&report);
        Ok(report)
    };
    match scheme {
        SchemeArg::Hybrid | SchemeArg::DsoManaged => {
            let s = if matches!(scheme, SchemeArg::Hybrid) { Scheme::Hybrid } else { Scheme::DsoManaged };
            let report = single(s)?;
            if let Some(dir) = out {
                export_results(&report, dir)?;
            }
        }
        SchemeArg::Both => {
            let hybrid = run_with_plans(&scenario, Scheme::Hybrid, &plans)?;
            let dso = run_with_plans(&scenario, Scheme::DsoManaged, &plans)?;
            print_comparison(&hybrid, &dso);
            if let Some(dir) = out {
                export_results(&hybrid, &dir.join(Scheme::Hybrid.to_string()))?;
                export_results(&dso, &dir.join(Scheme::DsoManaged.to_string()))?;
                export_comparison(&hybrid, &dso, &dir.join("comparison.csv"))?;
            }
        }
    }
    Ok(())
}

fn print_report(r: &SettlementReport) {
    println!("scenario            {}", r.scenario);
    println!("scheme              {}", r.scheme);
    println!("tso cost            {:.2} EUR", r.tso_cost);
    println!("  reserve part      {:.2} EUR", r.reserve_cost);
    println!("dso congestion cost {:.2} EUR", r.dso_congestion_cost);
    println!("aggregator benefit  {:.2} EUR", r.aggregator_benefit);
    println!("planned up/down/da  {:.3} / {:.3} / {:.3} MWh", r.planned.up, r.planned.down, r.planned.da);
    println!("dispatched up/down  {:.3} / {:.3} MWh", r.dispatched.up, r.dispatched.down);
}

fn pct_delta(reference: f64, value: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        100.0 * (value - reference) / reference.abs()
    }
}

fn print_comparison(h: &SettlementReport, d: &SettlementReport) {
    println!(
        "{:<14} {:>14} {:>14} {:>9} {:>14} {:>14} {:>9}",
        "scenario", "tso hybrid", "tso dso-mgd", "delta %", "benefit hybrid", "benefit dso-mgd", "delta %"
    );
    println!(
        "{:<14} {:>14.2} {:>14.2} {:>9.2} {:>14.2} {:>14.2} {:>9.2}",
        h.scenario,
        h.tso_cost,
        d.tso_cost,
        pct_delta(h.tso_cost, d.tso_cost),
        h.aggregator_benefit,
        d.aggregator_benefit,
        pct_delta(h.aggregator_benefit, d.aggregator_benefit),
    );
}

const SWEEPABLE: [&str; 3] = ["brp_fee", "consumer_price", "loading_threshold"];

fn set_param(s: &mut Scenario, param: &str, value: f64) {
    match param {
        "brp_fee" => s.prices.brp_fee = value,
        "consumer_price" => s.prices.consumer_price = value,
        "loading_threshold" => s.dso.loading_threshold = value,
        _ => unreachable!("parameter checked against SWEEPABLE"),
    }
}

fn sweep(path: &Path, param: &str, values: &[f64], scheme: Option<Scheme>, out: Option<&Path>) -> Result<(), Failure> {
    if !SWEEPABLE.contains(&param) {
        return Err(Error::UnknownParameter(format!("{param} (expected one of {})", SWEEPABLE.join(", "))).into());
    }
    if values.is_empty() {
        return Err(usage("--values needs at least one value"));
    }
    let base = load_scenario(path)?;
    let scheme = scheme.unwrap_or(base.scheme);
    println!(
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>14} {:>12}",
        param, "up MWh", "down MWh", "da MWh", "disp up", "disp down", "objective", "benefit"
    );
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut s = base.clone();
        set_param(&mut s, param, value);
        s.validate()?;
        let plans = plan_aggregators(&s)?;
        let r = run_with_plans(&s, scheme, &plans)?;
        let row = SweepRow {
            value,
            scheme,
            planned_up: r.planned.up,
            planned_down: r.planned.down,
            planned_da: r.planned.da,
            dispatched_up: r.dispatched.up,
            dispatched_down: r.dispatched.down,
            planned_objective: r.planned_objective,
            tso_cost: r.tso_cost,
            aggregator_benefit: r.aggregator_benefit,
        };
        println!(
            "{:>12} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>14.2} {:>12.2}",
            value,
            row.planned_up,
            row.planned_down,
            row.planned_da,
            row.dispatched_up,
            row.dispatched_down,
            row.planned_objective,
            row.aggregator_benefit
        );
        rows.push(row);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        export_sweep(param, &rows, &dir.join("sweep.csv"))?;
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), Failure> {
    let (_, violations) = read_scenario(path)?;
    if violations.is_empty() {
        println!("{}: ok", path.display());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure { code: EXIT_VALIDATION, message: format!("{} violation(s)", violations.len()) })
}
