//! Command-line surface: enumerate building blocks, evaluate circuits, run
//! the genetic search, estimate restart overheads, canonicalize circuit
//! files, and tabulate circuits side by side.
//!
//! Outputs are plain JSON and CSV for downstream plotting, byte-stable for a
//! fixed invocation. Every run logs its fully resolved configuration to
//! stderr so results can be reproduced from the log alone.

use std::error::Error;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bellstate::ErrorModel;
use crate::circuit::{builtin, canonicalize, read_circuit, write_circuit, Circuit, Mode};
use crate::evaluator::{evaluate, evaluate_symbolic};
use crate::optimizer::{run_ga, GaConfig};
use crate::permgroup::{classify, enumerate_bell_permutations, enumerate_c2};
use crate::runtime_mc::{simulate_runs, McConfig};

type CliResult<T> = Result<T, Box<dyn Error>>;

/// Parses `argv` (including the program name) and runs the selected command.
/// Returns the process exit status: 0 on success, 2 on usage errors or
/// partially failed comparisons, 1 on any other error.
pub fn cmd_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[derive(Parser)]
#[command(
    name = "purify",
    version,
    about = "Design, evaluate, and optimize entanglement-purification circuits",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count the two-qubit Clifford group and its Bell-permutation classes
    Enumerate(EnumerateArgs),
    /// Evaluate one circuit exactly and print its report as JSON
    Evaluate(EvaluateArgs),
    /// Search for good circuits with the genetic algorithm
    Optimize(OptimizeArgs),
    /// Estimate raw pairs consumed per produced pair under restarts
    Montecarlo(MontecarloArgs),
    /// Rewrite a circuit file to canonical form
    Canonicalize(CanonicalizeArgs),
    /// Tabulate several circuits as CSV at one error model
    Compare(CompareArgs),
}

/// Werner-state error model shared by most commands.
#[derive(Args)]
struct ModelArgs {
    /// Raw-pair Werner fidelity
    #[arg(long, default_value_t = 0.9)]
    f0: f64,
    /// Two-qubit gate success probability
    #[arg(long, default_value_t = 1.0)]
    p2: f64,
    /// Per-qubit measurement report success probability
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
}

impl ModelArgs {
    fn model(&self) -> CliResult<ErrorModel> {
        Ok(ErrorModel::werner(self.f0, self.p2, self.eta)?)
    }

    fn describe(&self) -> String {
        format!("f0={} p2={} eta={}", self.f0, self.p2, self.eta)
    }
}

/// Exactly one circuit source.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// Circuit JSON file
    #[arg(long, value_name = "FILE")]
    circuit: Option<PathBuf>,
    /// Builtin circuit: fig1, single_selection, double_selection,
    /// triple_selection
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
}

impl SourceArgs {
    fn load(&self) -> CliResult<(String, Circuit)> {
        if let Some(name) = &self.builtin {
            return Ok((name.clone(), builtin(name)?));
        }
        let path = self.circuit.as_ref().expect("clap enforces one source");
        Ok((id_of(path), load_circuit(path)?))
    }

    fn describe(&self) -> String {
        match (&self.circuit, &self.builtin) {
            (Some(p), _) => format!("circuit={}", p.display()),
            (_, Some(n)) => format!("builtin={n}"),
            _ => unreachable!("clap enforces one source"),
        }
    }
}

fn id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_circuit(path: &Path) -> CliResult<Circuit> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Ok(read_circuit(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

#[derive(Args)]
struct EnumerateArgs {
    /// Print only the six counts, one per line
    #[arg(long)]
    counts_only: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Also print exact polynomial expressions and first-order coefficients
    #[arg(long)]
    symbolic: bool,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory for best.json, trace.csv, and population/
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// JSON file with a full or partial search configuration
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Register width (pairs)
    #[arg(long)]
    width: Option<usize>,
    /// Maximum executable ops per circuit
    #[arg(long)]
    max_length: Option<usize>,
    /// Register mode: standard or hot_cold
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Minimum pool size per generation
    #[arg(long)]
    population_size: Option<usize>,
    /// Top circuits kept each generation
    #[arg(long)]
    survivors: Option<usize>,
    /// Mutants spawned per survivor
    #[arg(long)]
    children: Option<usize>,
    /// Number of generations
    #[arg(long)]
    generations: Option<usize>,
    /// Master seed for the search
    #[arg(long)]
    seed: Option<u64>,
    /// Disqualify circuits below this single-shot success probability
    #[arg(long)]
    success_floor: Option<f64>,
    /// Fitness penalty on the B component
    #[arg(long)]
    w_b: Option<f64>,
    /// Fitness penalty on the C component
    #[arg(long)]
    w_c: Option<f64>,
    /// Fitness penalty on the D component
    #[arg(long)]
    w_d: Option<f64>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "standard" => Ok(Mode::Standard),
        "hot_cold" => Ok(Mode::HotCold),
        other => Err(format!("unknown mode {other:?} (use standard or hot_cold)")),
    }
}

#[derive(Args)]
struct MontecarloArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of independent trials
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Master seed for the trial streams
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Abort a trial after this many restarts
    #[arg(long, default_value_t = 10_000)]
    max_restarts: usize,
    /// Restart the whole circuit on every failure (no block replays)
    #[arg(long)]
    full_restart_only: bool,
    /// Also write histogram.csv, cumulative.csv, and report.json here
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CanonicalizeArgs {
    /// Circuit JSON file to canonicalize
    input: PathBuf,
    /// Write the canonical form here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Circuit JSON files
    files: Vec<PathBuf>,
    /// Builtin circuits to include (repeatable)
    #[arg(long, value_name = "NAME")]
    builtin: Vec<String>,
    #[command(flatten)]
    model: ModelArgs,
    /// Also estimate N_avg by Monte Carlo
    #[arg(long)]
    with_mc: bool,
    /// Trials per circuit when --with-mc is given
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Master seed when --with-mc is given
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Cmd::Enumerate(a) => cmd_enumerate(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Optimize(a) => cmd_optimize(a),
        Cmd::Montecarlo(a) => cmd_montecarlo(a),
        Cmd::Canonicalize(a) => cmd_canonicalize(a),
        Cmd::Compare(a) => cmd_compare(a),
    }
}

fn cmd_enumerate(args: EnumerateArgs) -> CliResult<i32> {
    eprintln!(
        "resolved config: enumerate counts_only={}",
        args.counts_only
    );
    let c2 = enumerate_c2();
    let set = enumerate_bell_permutations();
    let cls = classify(&set)?;
    let rows = [
        ("c2_elements", c2.len()),
        ("bilateral_operations", set.bilateral_count()),
        ("unique_permutations", set.len()),
        ("a_preserving", cls.counts.a_preserving),
        ("fidelity_trivial", cls.counts.fidelity_trivial),
        ("useful", cls.counts.useful),
    ];
    if args.counts_only {
        for (_, count) in rows {
            println!("{count}");
        }
    } else {
        for (label, count) in rows {
            println!("{label} {count}");
        }
        println!("useful_requiring_swap {}", cls.counts.swap_required);
    }
    Ok(0)
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<i32> {
    eprintln!(
        "resolved config: evaluate {} {} symbolic={}",
        args.source.describe(),
        args.model.describe(),
        args.symbolic
    );
    let (_, circuit) = args.source.load()?;
    let canon = canonicalize(&circuit)?;
    let report = evaluate(&canon, &args.model.model()?)?;
    let mut out = serde_json::to_value(&report)?;
    if args.symbolic {
        let sym = evaluate_symbolic(&canon)?;
        let fo = &sym.first_order;
        out = json!({
            "report": out,
            "symbolic": {
                "success": sym.success_poly.to_string(),
                "unnormalized": sym
                    .unnormalized
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>(),
                "first_order_infidelity": {
                    "constant": fo.constant.to_string(),
                    "f0": fo.coeff_f0.to_string(),
                    "p2": fo.coeff_p2.to_string(),
                    "eta": fo.coeff_eta.to_string(),
                },
            },
        });
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn cmd_optimize(args: OptimizeArgs) -> CliResult<i32> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str::<GaConfig>(
            &fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        )
        .map_err(|e| format!("{}: {e}", path.display()))?,
        None => GaConfig::default(),
    };
    if let Some(v) = args.width {
        cfg.width = v;
    }
    if let Some(v) = args.max_length {
        cfg.max_length = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.population_size {
        cfg.population_size = v;
    }
    if let Some(v) = args.survivors {
        cfg.survivors_per_generation = v;
    }
    if let Some(v) = args.children {
        cfg.children_per_survivor = v;
    }
    if let Some(v) = args.generations {
        cfg.generations = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.w_b {
        cfg.fitness_weights[0] = v;
    }
    if let Some(v) = args.w_c {
        cfg.fitness_weights[1] = v;
    }
    if let Some(v) = args.w_d {
        cfg.fitness_weights[2] = v;
    }
    if args.success_floor.is_some() {
        cfg.success_floor = args.success_floor;
    }
    eprintln!(
        "resolved config: optimize {} ga={}",
        args.model.describe(),
        serde_json::to_string(&cfg)?
    );

    let run = run_ga(&cfg, &args.model.model()?)?;
    let best = run.best();

    fs::create_dir_all(&args.out_dir)?;
    let population_dir = args.out_dir.join("population");
    fs::create_dir_all(&population_dir)?;

    let mut best_circuit = best.circuit.clone();
    if let serde_json::Value::Object(meta) = &mut best_circuit.metadata {
        meta.insert(
            "result".to_string(),
            json!({
                "fitness": best.fitness,
                "success_prob": best.report.success_prob,
                "infidelity": best.report.infidelity(),
            }),
        );
    }
    fs::write(args.out_dir.join("best.json"), write_circuit(&best_circuit))?;

    let mut trace = String::from("generation,best_fitness,best_success\n");
    for (generation, entry) in run.trace.iter().enumerate() {
        trace.push_str(&format!(
            "{generation},{},{}\n",
            entry.fitness, entry.report.success_prob
        ));
    }
    fs::write(args.out_dir.join("trace.csv"), trace)?;

    let mut index = String::from("rank,file,fitness,success_prob,infidelity\n");
    for (rank, member) in run.final_population.iter().enumerate() {
        let file = format!("{rank:04}.json");
        fs::write(population_dir.join(&file), write_circuit(&member.circuit))?;
        index.push_str(&format!(
            "{rank},{file},{},{},{}\n",
            member.fitness,
            member.report.success_prob,
            member.report.infidelity()
        ));
    }
    fs::write(population_dir.join("index.csv"), index)?;

    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "best_fitness": best.fitness,
            "best_infidelity": best.report.infidelity(),
            "best_success_prob": best.report.success_prob,
            "generations": run.trace.len(),
            "population": run.final_population.len(),
            "out_dir": args.out_dir.display().to_string(),
        }))?
    );
    Ok(0)
}

fn cmd_montecarlo(args: MontecarloArgs) -> CliResult<i32> {
    let cfg = McConfig {
        trials: args.trials,
        seed: args.seed,
        max_restarts_per_trial: args.max_restarts,
        full_restart_only: args.full_restart_only,
    };
    eprintln!(
        "resolved config: montecarlo {} {} mc={}",
        args.source.describe(),
        args.model.describe(),
        serde_json::to_string(&cfg)?
    );
    let (_, circuit) = args.source.load()?;
    let report = simulate_runs(&circuit, &args.model.model()?, &cfg)?;

    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        let mut hist = String::from("pairs,count\n");
        for (pairs, count) in &report.pairs_histogram {
            hist.push_str(&format!("{pairs},{count}\n"));
        }
        fs::write(dir.join("histogram.csv"), hist)?;
        let mut cum = String::from("pairs,fraction\n");
        for (pairs, fraction) in &report.cumulative {
            cum.push_str(&format!("{pairs},{fraction}\n"));
        }
        fs::write(dir.join("cumulative.csv"), cum)?;
    }

    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn cmd_canonicalize(args: CanonicalizeArgs) -> CliResult<i32> {
    eprintln!(
        "resolved config: canonicalize input={} out={}",
        args.input.display(),
        args.out
            .as_ref()
            .map_or_else(|| "-".to_string(), |p| p.display().to_string())
    );
    let circuit = load_circuit(&args.input)?;
    let canon = canonicalize(&circuit).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let text = write_circuit(&canon);
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> CliResult<i32> {
    eprintln!(
        "resolved config: compare {} with_mc={} trials={} seed={} builtins={:?} files={:?}",
        args.model.describe(),
        args.with_mc,
        args.trials,
        args.seed,
        args.builtin,
        args.files
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
    );
    let em = args.model.model()?;
    let mc_cfg = McConfig {
        trials: args.trials,
        seed: args.seed,
        ..McConfig::default()
    };

    let mut sources: Vec<(String, CliResult<Circuit>)> = Vec::new();
    for name in &args.builtin {
        sources.push((name.clone(), builtin(name).map_err(Into::into)));
    }
    for path in &args.files {
        sources.push((id_of(path), load_circuit(path)));
    }

    let mut csv =
        String::from("id,width,length,infidelity,success_prob,N,N_avg,b_rel,c_rel,d_rel\n");
    let mut failed = false;
    for (id, loaded) in sources {
        let row = loaded.and_then(|c| {
            let canon = canonicalize(&c)?;
            let report = evaluate(&canon, &em)?;
            let n_avg = if args.with_mc {
                simulate_runs(&c, &em, &mc_cfg)?.n_avg
            } else {
                None
            };
            let [b, c_share, d] = report.infidelity_components;
            Ok(format!(
                "{id},{},{},{},{},{},{},{b},{c_share},{d}\n",
                canon.width,
                report.op_count,
                report.infidelity(),
                report.success_prob,
                report.raw_pairs_best_case,
                n_avg.map_or_else(String::new, |v| v.to_string()),
            ))
        });
        match row {
            Ok(row) => csv.push_str(&row),
            Err(e) => {
                eprintln!("error: {id}: {e}");
                failed = true;
            }
        }
    }

    match &args.out {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(if failed { 2 } else { 0 })
}
