//! `addow` command-line frontend.
//!
//! Errors go to stderr as `error[usage]: ...` (exit 2) or
//! `error[runtime]: ...` (exit 1).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use addow::addow::{addow_lcm, addow_with_profile, min_cost_profile, CostVector};
use addow::classic::{abh, hzz, pro1_pro2};
use addow::estimation::{storey_estimate, storey_schedule, DEFAULT_LAMBDA, DEFAULT_SCHEDULE_EXPONENT};
use addow::harness::{emit_report, run_scenario, write_report, ReportFormat, RunOptions, ScenarioConfig};
use addow::oracle::{expected_power, oracle_solution, GaussianModel};
use addow::stabilize::{null_quantile_table, saddow, NullQuantileTable};
use addow::stepup::{bh, wbh, StepUpOutcome, WeightVector};
use addow::{load_dataset, GroupedPValues, NullEstimates};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "addow", version, about = "Adaptive data-driven optimal weighting for grouped p-values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one procedure on a `group,pvalue[,label]` CSV file
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo scenario (preset or JSON config)
    Simulate(SimulateArgs),
    /// Build a null-quantile table for the stabilized procedure
    NullQuantile(NullQuantileArgs),
    /// Oracle weights and critical alpha of a Gaussian model
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProcedureArg {
    Bh,
    Wbh,
    Ihw,
    Addow,
    AddowLcm,
    Abh,
    Hzz,
    Pro1,
    Pro2,
    Saddow,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV, `-` for stdin
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    procedure: ProcedureArg,
    #[arg(long)]
    alpha: f64,
    /// ne | storey[:lambda] | schedule[:e] | oracle:v1,v2,...
    #[arg(long, default_value = "ne", value_parser = parse_pi0_mode)]
    pi0_mode: Pi0Arg,
    /// Weights for `wbh`, one per group
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Pre-test level for `saddow`
    #[arg(long)]
    beta: Option<f64>,
    /// Null-quantile table for `saddow`
    #[arg(long)]
    table: Option<PathBuf>,
    /// Use the concave-majorant variant (addow and ihw)
    #[arg(long)]
    lcm: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct SimulateArgs {
    /// scenario1 | scenario2 | scenario3
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON scenario configuration
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Null-quantile replicates for stabilized procedures
    #[arg(long)]
    quantile_replicates: Option<usize>,
    #[arg(long, env = "ADDOW_THREADS")]
    threads: Option<usize>,
    /// Output file, stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Directory for reusable null-quantile tables
    #[arg(long)]
    table_cache: Option<PathBuf>,
}

#[derive(Args)]
struct NullQuantileArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    group_sizes: Vec<usize>,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CostsArg {
    /// Every null proportion set to 1
    Ne,
    /// True null proportions
    Ce,
}

#[derive(Args)]
struct OracleArgs {
    /// JSON `{mu, group_sizes, null_counts}`
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    u: f64,
    #[arg(long, value_enum, default_value = "ce")]
    costs: CostsArg,
}

#[derive(Clone, Debug)]
enum Pi0Arg {
    Ne,
    Storey(f64),
    Schedule(f64),
    Oracle(Vec<f64>),
}

fn parse_pi0_mode(s: &str) -> Result<Pi0Arg, String> {
    let (head, tail) = match s.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (s, None),
    };
    let number = |t: &str| t.parse::<f64>().map_err(|_| format!("malformed number '{t}'"));
    match (head, tail) {
        ("ne", None) => Ok(Pi0Arg::Ne),
        ("storey", None) => Ok(Pi0Arg::Storey(DEFAULT_LAMBDA)),
        ("storey", Some(t)) => Ok(Pi0Arg::Storey(number(t)?)),
        ("schedule", None) => Ok(Pi0Arg::Schedule(DEFAULT_SCHEDULE_EXPONENT)),
        ("schedule", Some(t)) => Ok(Pi0Arg::Schedule(number(t)?)),
        ("oracle", Some(t)) => Ok(Pi0Arg::Oracle(t.split(',').map(number).collect::<Result<_, _>>()?)),
        _ => Err(format!("unknown pi0 mode '{s}' (ne, storey:λ, schedule:e, oracle:v1,v2,...)")),
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<addow::Error> for Failure {
    fn from(e: addow::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn open(path: &Path) -> Result<Box<dyn Read>, Failure> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    File::open(path)
        .map(|f| Box::new(BufReader::new(f)) as Box<dyn Read>)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_json(value: &impl serde::Serialize, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}")?;
        }
    }
    Ok(())
}

fn estimates(data: &GroupedPValues, mode: &Pi0Arg) -> Result<NullEstimates, Failure> {
    Ok(match mode {
        Pi0Arg::Ne => NullEstimates::non_estimated(data),
        Pi0Arg::Storey(lambda) => storey_estimate(data, *lambda)?,
        Pi0Arg::Schedule(e) => storey_schedule(data, *e)?,
        Pi0Arg::Oracle(values) => NullEstimates::oracle(data, values.clone())?,
    })
}

struct Analysis {
    outcome: StepUpOutcome,
    extra: Value,
}

fn run_procedure(args: &AnalyzeArgs, data: &GroupedPValues) -> Result<Analysis, Failure> {
    use ProcedureArg::*;
    let p = args.procedure;
    if args.lcm && !matches!(p, Addow | Ihw) {
        return Err(Failure::Usage("--lcm applies to addow and ihw only".into()));
    }
    if args.weights.is_some() != (p == Wbh) {
        return Err(Failure::Usage("--weights is required by wbh and accepted by no other procedure".into()));
    }
    if (args.beta.is_some() || args.table.is_some()) && p != Saddow {
        return Err(Failure::Usage("--beta and --table apply to saddow only".into()));
    }
    let est = estimates(data, &args.pi0_mode)?;
    let alpha = args.alpha;
    let plain = |outcome| Analysis { outcome, extra: Value::Null };
    Ok(match p {
        Bh => plain(bh(data, alpha)),
        Wbh => {
            let w = WeightVector::new(args.weights.clone().unwrap_or_default())?;
            if w.len() != data.num_groups() {
                return Err(Failure::Runtime(format!(
                    "{} weights for {} groups",
                    w.len(),
                    data.num_groups()
                )));
            }
            plain(wbh(data, &w, alpha))
        }
        Ihw | Addow | AddowLcm => {
            let est = if p == Ihw { NullEstimates::non_estimated(data) } else { est };
            if args.lcm || p == AddowLcm {
                plain(addow_lcm(data, &est, alpha))
            } else {
                let profile = min_cost_profile(data, &CostVector::from_estimates(data, &est));
                plain(addow_with_profile(data, &profile, alpha))
            }
        }
        Abh => plain(abh(data, &est, alpha)),
        Hzz => plain(hzz(data, &est, alpha)?),
        Pro1 | Pro2 => {
            let two = pro1_pro2(data, &est, alpha);
            Analysis {
                outcome: if p == Pro1 { two.pro1 } else { two.pro2 },
                extra: json!({ "u_m": two.u_m }),
            }
        }
        Saddow => {
            let (Some(beta), Some(path)) = (args.beta, args.table.as_ref()) else {
                return Err(Failure::Usage("saddow requires --beta and --table".into()));
            };
            let table: NullQuantileTable = read_json(path)?;
            let s = saddow(data, &est, alpha, beta, &table)?;
            Analysis {
                outcome: s.outcome,
                extra: json!({ "phi": s.phi, "z": s.z, "q": s.q, "beta": beta }),
            }
        }
    })
}

fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!("alpha {} outside (0, 1)", args.alpha)));
    }
    let data = load_dataset(open(&args.input)?)?;
    let est = estimates(&data, &args.pi0_mode)?;
    let Analysis { outcome, extra } = run_procedure(&args, &data)?;
    let mut stdout = BufWriter::new(io::stdout().lock());
    match args.format {
        FormatArg::Csv => {
            // the label column marks rejections, so the output loads as a dataset
            eprintln!(
                "info: u_hat={} k_hat={} rejections={}",
                outcome.u_hat,
                outcome.k_hat,
                outcome.num_rejections()
            );
            writeln!(stdout, "group,pvalue,label")?;
            for (g, group) in data.groups().iter().enumerate() {
                for (i, p) in group.pvalues.iter().enumerate() {
                    let flag = u8::from(outcome.rejections.contains(g, i));
                    writeln!(stdout, "{},{p},{flag}", csv_field(&group.name))?;
                }
            }
        }
        FormatArg::Json => {
            let rejections: Vec<Value> = outcome
                .rejections
                .iter()
                .map(|(g, i)| {
                    json!({ "group": data.group(g).name, "index": i, "pvalue": data.group(g).pvalues[i] })
                })
                .collect();
            let mut doc = json!({
                "procedure": args.procedure.to_possible_value().map(|v| v.get_name().to_owned()),
                "alpha": args.alpha,
                "groups": data.groups().iter().map(|g| g.name.as_str()).collect::<Vec<_>>(),
                "pi0": est.pi0(),
                "pi0_mode": est.mode(),
                "u_hat": outcome.u_hat,
                "k_hat": outcome.k_hat,
                "weights": outcome.weights.as_slice(),
                "thresholds": outcome.thresholds,
                "num_rejections": outcome.num_rejections(),
                "rejections": rejections,
            });
            if let (Value::Object(doc), Value::Object(extra)) = (&mut doc, extra) {
                doc.extend(extra);
            }
            let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(stdout, "{text}")?;
        }
    }
    stdout.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), _) => ScenarioConfig::preset(name).map_err(|e| Failure::Usage(e.to_string()))?,
        (None, Some(path)) => read_json(path)?,
        (None, None) => return Err(Failure::Usage("one of --preset or --config is required".into())),
    };
    if let Some(reps) = args.reps {
        config.replications = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(b) = args.quantile_replicates {
        config.quantile_replicates = b;
    }
    if args.threads == Some(0) {
        return Err(Failure::Usage("--threads must be positive".into()));
    }
    let options = RunOptions {
        threads: args.threads,
        table_cache: args.table_cache,
    };
    let report = run_scenario(&config, &options)?;
    match &args.out {
        Some(path) => emit_report(&report, args.format.into(), path)?,
        None => {
            let mut stdout = BufWriter::new(io::stdout().lock());
            write_report(&report, args.format.into(), &mut stdout)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn null_quantile(args: NullQuantileArgs) -> Result<(), Failure> {
    let table = null_quantile_table(&args.group_sizes, args.alpha, args.replicates, args.seed)?;
    write_json(&table, args.out.as_deref())
}

fn oracle(args: OracleArgs) -> Result<(), Failure> {
    let model: GaussianModel = read_json(&args.model)?;
    model.validate()?;
    if !(args.u > 0.0 && args.u <= 1.0) {
        return Err(Failure::Usage(format!("u {} outside (0, 1]", args.u)));
    }
    let (pibar, costs) = match args.costs {
        CostsArg::Ne => (vec![1.0; model.num_groups()], model.non_estimated_costs()),
        CostsArg::Ce => (model.null_fractions(), model.consistent_costs()),
    };
    let critical = model.critical_alpha(&pibar)?;
    let solution = oracle_solution(&model, &costs, args.alpha, args.u)?;
    let power = expected_power(&model, &solution.weights, args.alpha, args.u);
    let doc = json!({
        "alpha": args.alpha,
        "u": args.u,
        "costs": costs.as_slice(),
        "critical_alpha": critical,
        "weights": solution.weights.as_slice(),
        "thresholds": solution.thresholds,
        "multiplier": solution.multiplier,
        "residual": solution.residual,
        "iterations": solution.iterations,
        "expected_power": power,
    });
    write_json(&doc, None)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let text = text.trim_start_matches("error: ").trim_end();
            eprintln!("error[usage]: {text}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::NullQuantile(a) => null_quantile(a),
        Command::Oracle(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error[runtime]: {msg}");
            ExitCode::from(1)
        }
    }
}
