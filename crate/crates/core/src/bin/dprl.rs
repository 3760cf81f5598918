use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dprl::ambiguity::{radius, ConcentrationConfig};
use dprl::experiment::{
    adult_like_surrogate, emit_report, ingest_csv, run_sweep, Ingested, KeyValues, SchemaConfig, SweepConfig,
};
use dprl::privacy::{sensitivity, Dataset, FeatureBounds, MechanismKind, PrivacyBudget};
use dprl::{Error, Result};

#[derive(Parser)]
#[command(name = "dprl", version, about = "Robust regression on locally private tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV through a schema file and print a summary.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Run a privacy-budget sweep and write results.csv and plot.svg.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the ambiguity radius for a mechanism and budget.
    Radius {
        #[arg(long, default_value = "gaussian")]
        mechanism: MechanismKind,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long)]
        px: usize,
        #[arg(long)]
        py: usize,
        /// Record count; without it the big-data concentration term (zero) is used.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        c1: f64,
        #[arg(long, default_value_t = 1.0)]
        c2: f64,
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lower: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        upper: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { csv, schema } => {
            let ingested = ingest_csv(&csv, &SchemaConfig::load(&schema)?)?;
            print_ingest(&ingested);
            Ok(())
        }
        Command::Sweep { config, out } => sweep(&config, &out),
        Command::Radius { mechanism, epsilon, delta, px, py, n, beta, c1, c2, a, lower, upper } => {
            let budget = PrivacyBudget::new(epsilon, delta)?;
            let delta_sens = sensitivity(FeatureBounds::new(lower, upper)?, px)?;
            let cfg = ConcentrationConfig { c1, c2, a, big_data: n.is_none() };
            let r = radius(mechanism, budget, px + py, delta_sens, beta, n.unwrap_or(1), &cfg)?;
            println!("sensitivity={delta_sens}");
            println!("zeta={}", r.zeta_part);
            println!("privacy_part={}", r.privacy_part);
            println!("rho={}", r.rho);
            Ok(())
        }
    }
}

fn print_ingest(ingested: &Ingested) {
    let d = &ingested.dataset;
    println!("rows={}", d.n());
    println!("features={}", d.p_x());
    println!("dropped_rows={}", ingested.dropped_rows);
    println!("bounds=[{}, {}]", d.bounds().lower(), d.bounds().upper());
    println!("columns={}", ingested.feature_names.join(","));
}

fn load_data(kv: &mut KeyValues, base: &Path) -> Result<Dataset> {
    if let Some(csv) = kv.take_str("csv") {
        let schema = match kv.take_str("schema") {
            Some(file) => SchemaConfig::load(&base.join(file))?,
            None => SchemaConfig::from_key_values(kv)?,
        };
        let ingested = ingest_csv(&base.join(csv), &schema)?;
        log::info!("ingested {} rows, {} features", ingested.dataset.n(), ingested.dataset.p_x());
        return Ok(ingested.dataset);
    }
    match kv.take_str("dataset").as_deref() {
        Some("synthetic") => {
            let rows = kv.take_or("synthetic_rows", 3000usize)?;
            let features = kv.take_or("synthetic_features", 10usize)?;
            let seed = kv.take_or("synthetic_seed", 0u64)?;
            adult_like_surrogate(rows, features, seed)
        }
        Some(other) => Err(Error::Config(format!("unknown dataset {other:?}"))),
        None => Err(Error::Config("config needs `csv = PATH` or `dataset = synthetic`".into())),
    }
}

fn sweep(config: &Path, out: &Path) -> Result<()> {
    let mut kv = KeyValues::load(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let data = load_data(&mut kv, base)?;
    let sweep = SweepConfig::from_key_values(&mut kv, data.p_x())?;
    kv.finish()?;
    log::info!(
        "sweeping {} budgets x {} seeds x {} methods on {} rows",
        sweep.epsilons.len(),
        sweep.seeds.len(),
        sweep.methods.len(),
        data.n()
    );
    let table = run_sweep(&data, &sweep)?;
    let failed: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{},{},{}: {e}", r.epsilon, r.method, r.seed)))
        .collect();
    let paths = emit_report(&table, out)?;
    if !failed.is_empty() {
        std::fs::write(out.join("errors.txt"), failed.join("\n") + "\n")?;
        log::warn!("{} cells failed; see errors.txt", failed.len());
    }
    println!("seeds_per_point={}", sweep.seeds.len());
    println!("results={}", paths.csv.display());
    println!("plot={}", paths.svg.display());
    Ok(())
}
