//! `tailorforge`: compile a graph into a SuperNet, then cost and search it.

mod supernet;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tailorforge::enumerator::{enumerate_unique_operators, Manifest};
use tailorforge::graph::export_graph;
use tailorforge::modspace::{apply_subnet, count_variants, SubNetSpec};
use tailorforge::optimizer::{genetic_search, pareto_sweep, write_frontier, Evaluator, SearchConfig};
use tailorforge::predictors::{
    build_latency_lut, build_sensitivity_table, predict_accuracy, predict_memory, AccuracyOracle,
    AnalyticalBackend, CostBackend, FileBackend, FileOracle, LatencyLut, LatencyPredictor, SensitivityTable,
    SyntheticOracle,
};

use supernet::{classify, Invalid, SuperNet};

#[derive(Parser)]
#[command(name = "tailorforge", version, about = "SuperNet compiler, predictors and architecture search")]
struct Cli {
    /// Worker threads for the parallel commands.
    #[arg(long, global = true, env = "TAILORFORGE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a graph and a space config into a SuperNet directory.
    Compile {
        graph: PathBuf,
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Fusion ruleset file, or `none`; defaults to the shipped ruleset.
        #[arg(long)]
        rules: Option<String>,
    },
    /// Print the number of distinct SubNets.
    Count(SuperNetArg),
    /// Write the unique-operator manifest.
    Enumerate {
        #[command(flatten)]
        supernet: SuperNetArg,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Measure every manifest key into a LUT.
    BuildLut {
        #[arg(long)]
        manifest: PathBuf,
        /// `analytical` or `file:<path>`.
        #[arg(long)]
        backend: String,
        #[arg(long)]
        device: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build the per-modification sensitivity table.
    Sensitivity {
        #[command(flatten)]
        supernet: SuperNetArg,
        /// `synthetic:<seed>[:eps=<f>][:base=<f>]` or `file:<path>`.
        #[arg(long)]
        oracle: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Predict latency, energy, memory and accuracy of one SubNet.
    Predict {
        #[command(flatten)]
        supernet: SuperNetArg,
        #[arg(long)]
        spec: String,
        #[arg(long)]
        lut: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Find the most accurate SubNet within a latency budget.
    Search {
        #[command(flatten)]
        predictors: PredictorArgs,
        #[arg(long)]
        budget: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Search many budgets and write the Pareto frontier.
    Sweep {
        #[command(flatten)]
        predictors: PredictorArgs,
        /// Comma-separated list, or `start:stop:count` (inclusive, evenly spaced).
        #[arg(long)]
        budgets: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Emit the graph of one SubNet.
    Export {
        #[command(flatten)]
        supernet: SuperNetArg,
        #[arg(long)]
        spec: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct SuperNetArg {
    /// SuperNet directory written by `compile`.
    #[arg(short, long)]
    supernet: PathBuf,
}

#[derive(Args)]
struct PredictorArgs {
    #[command(flatten)]
    supernet: SuperNetArg,
    #[arg(long)]
    lut: PathBuf,
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
}

impl PredictorArgs {
    fn search_config(&self) -> SearchConfig {
        let d = SearchConfig::default();
        SearchConfig {
            seed: self.seed,
            population: self.population.unwrap_or(d.population),
            generations: self.generations.unwrap_or(d.generations),
            ..d
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn parse_spec(net: &SuperNet, text: &str) -> Result<SubNetSpec> {
    let spec: SubNetSpec = text.parse()?;
    Ok(net.compiled.space.canonicalize(&spec)?)
}

fn parse_budgets(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Invalid(format!("`{s}` is not a budget")));
    let mut budgets = if let [a, b, n] = text.split(':').collect::<Vec<_>>()[..] {
        let (a, b) = (num(a)?, num(b)?);
        let n: usize = n.trim().parse().map_err(|_| Invalid(format!("`{n}` is not a count")))?;
        match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if budgets.is_empty() || budgets.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err(Invalid(format!("`{text}` does not name positive budgets")).into());
    }
    budgets.sort_by(f64::total_cmp);
    Ok(budgets)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    match cli.command {
        Command::Compile { graph, config, output, rules } => {
            let rules_text = match rules.as_deref() {
                None => tailorforge::fixtures::DEFAULT_FUSION_RULES.to_string(),
                Some("none") => tailorforge::enumerator::FusionRules::none().to_text(),
                Some(path) => read(Path::new(path))?,
            };
            let net = SuperNet::create(&output, &read(&graph)?, &read(&config)?, &rules_text)?;
            print!("{}", net.compiled.report);
        }
        Command::Count(arg) => {
            let net = SuperNet::open(&arg.supernet)?;
            println!("{}", count_variants(&net.compiled.space, &net.compiled.model));
        }
        Command::Enumerate { supernet, output } => {
            let net = SuperNet::open(&supernet.supernet)?;
            let e = enumerate_unique_operators(&net.compiled.model, &net.compiled.space, &net.rules)?;
            eprintln!(
                "{} unique keys from {} key computations ({:.3}% of {} naive), {} occurrences",
                e.keys.len(),
                e.work,
                100.0 * e.pruned_fraction(),
                e.naive,
                e.occurrences
            );
            let manifest = Manifest { fusion_ruleset_hash: net.rules.hash(), keys: e.keys };
            write(&output, &manifest.to_text())?;
        }
        Command::BuildLut { manifest, backend, device, output } => {
            let manifest = Manifest::parse(&read(&manifest)?)?;
            let backend: Box<dyn CostBackend> = if backend == "analytical" {
                Box::new(AnalyticalBackend::new(&device))
            } else if let Some(path) = backend.strip_prefix("file:") {
                Box::new(FileBackend::parse(path, &read(Path::new(path))?)?)
            } else {
                return Err(Invalid(format!("unknown backend `{backend}`")).into());
            };
            let created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            let lut = build_latency_lut(&manifest, backend.as_ref(), &device, &created)?;
            eprintln!("measured {} keys on {device}", lut.len());
            write(&output, &lut.to_text())?;
        }
        Command::Sensitivity { supernet, oracle, output } => {
            let net = SuperNet::open(&supernet.supernet)?;
            let space = &net.compiled.space;
            let mut oracle: Box<dyn AccuracyOracle> = if let Some(path) = oracle.strip_prefix("file:") {
                Box::new(FileOracle::parse(space, &read(Path::new(path))?)?)
            } else {
                Box::new(SyntheticOracle::from_spec(space, &oracle)?)
            };
            let table = build_sensitivity_table(space, oracle.as_mut())?;
            write(&output, &table.to_text())?;
        }
        Command::Predict { supernet, spec, lut, table } => {
            let net = SuperNet::open(&supernet.supernet)?;
            let spec = parse_spec(&net, &spec)?;
            println!("spec={spec}");
            if let Some(path) = lut {
                let lut = LatencyLut::parse(&read(&path)?)?;
                let p = LatencyPredictor::new(&net.compiled.model, &lut, &net.rules)?;
                println!("latency_ms={}", p.latency_ms(&spec)?);
                if let Ok(e) = p.energy_mj(&spec) {
                    println!("energy_mj={e}");
                }
            }
            let mem = predict_memory(&spec, &net.compiled.model)?;
            println!("param_bytes={}", mem.param_bytes);
            println!("peak_activation_bytes={}", mem.peak_activation_bytes);
            println!("total_bytes={}", mem.total_bytes);
            if let Some(path) = table {
                let table = SensitivityTable::parse(&read(&path)?)?;
                println!("accuracy={}", predict_accuracy(&spec, &table)?);
            }
        }
        Command::Search { predictors, budget, output } => {
            let net = SuperNet::open(&predictors.supernet.supernet)?;
            let lut = LatencyLut::parse(&read(&predictors.lut)?)?;
            let table = SensitivityTable::parse(&read(&predictors.table)?)?;
            let p = LatencyPredictor::new(&net.compiled.model, &lut, &net.rules)?;
            let eval = Evaluator::new(&net.compiled.space, p, &table);
            let r = genetic_search(&eval, budget, &predictors.search_config())?;
            eprintln!("{} SubNets evaluated", eval.evaluations());
            let text = format!(
                "# tailorforge-search v1\nbudget_ms={budget}\npred_latency_ms={}\npred_accuracy={}\nspec={}\n",
                r.latency_ms, r.accuracy, r.spec
            );
            match output {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Sweep { predictors, budgets, output } => {
            let budgets = parse_budgets(&budgets)?;
            let net = SuperNet::open(&predictors.supernet.supernet)?;
            let lut = LatencyLut::parse(&read(&predictors.lut)?)?;
            let table = SensitivityTable::parse(&read(&predictors.table)?)?;
            let p = LatencyPredictor::new(&net.compiled.model, &lut, &net.rules)?;
            let eval = Evaluator::new(&net.compiled.space, p, &table);
            let sweep = pareto_sweep(&eval, &budgets, &predictors.search_config())?;
            for (b, m) in &sweep.infeasible {
                eprintln!("budget {b} ms infeasible (fastest seen {m} ms)");
            }
            eprintln!("{} frontier points from {} budgets", sweep.points.len(), budgets.len());
            write(&output, &write_frontier(&sweep))?;
        }
        Command::Export { supernet, spec, output } => {
            let net = SuperNet::open(&supernet.supernet)?;
            let spec = parse_spec(&net, &spec)?;
            let g = apply_subnet(&net.compiled.model, &spec)?;
            fs::write(&output, export_graph(&g)).with_context(|| format!("cannot write {}", output.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
