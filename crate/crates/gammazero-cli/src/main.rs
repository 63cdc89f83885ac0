//! Command-line entry point: collect expert data, train the network,
//! evaluate policies, sweep instance sizes, and run the self-check suites.

use clap::{Parser, Subcommand};
use gammazero::harness::{
    cmd_collect, cmd_eval, cmd_generalize, cmd_train, load_trained, write_generalize_csv,
    DomainConfig, EvalMode, RunConfig,
};
use gammazero::GammaError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gammazero", version, about = "Belief-graph guided POMDP planning")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dot-path config overrides, e.g. --set search.n_sims=1000
    #[arg(long = "set", global = true, value_name = "PATH=JSON")]
    overrides: Vec<String>,

    /// Run directory for all outputs.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll expert episodes and write the labeled dataset.
    Collect {
        /// Output file name within the run directory.
        #[arg(long, default_value = "dataset.jsonl")]
        name: String,
    },
    /// Train the network on a dataset and write the parameter file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "params.gznn")]
        name: String,
    },
    /// Evaluate a policy mode over seeded episodes.
    Eval {
        #[arg(long)]
        params: Option<PathBuf>,
        /// random | raw_policy | raw_value | mcts | uniform_mcts | expert
        #[arg(long)]
        mode: String,
    },
    /// Evaluate one parameter file across an instance-size ladder.
    Generalize {
        #[arg(long)]
        params: PathBuf,
        /// JSON file with a list of domain configs; a default RockSample
        /// ladder applies when omitted.
        #[arg(long)]
        ladder: Option<PathBuf>,
        #[arg(long, default_value = "raw_policy")]
        mode: String,
    },
    /// Run the filter-vs-exact, gradient-vs-finite-difference, and
    /// invariant suites; exits nonzero on any failure.
    OracleCheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>, overrides: &[String]) -> Result<RunConfig, GammaError> {
    let mut value: serde_json::Value = match path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => serde_json::json!({}),
    };
    for entry in overrides {
        let (dotted, raw) = entry.split_once('=').ok_or_else(|| {
            GammaError::Config(format!("override '{entry}' is not of the form path=value"))
        })?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        set_path(&mut value, dotted, parsed)?;
    }
    // merge onto defaults so partial configs work
    let mut base = serde_json::to_value(RunConfig::default())?;
    merge(&mut base, value);
    let config: RunConfig = serde_json::from_value(base)?;
    config.validate()?;
    Ok(config)
}

fn set_path(
    value: &mut serde_json::Value,
    dotted: &str,
    new: serde_json::Value,
) -> Result<(), GammaError> {
    let mut cursor = value;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cursor.is_object() {
            *cursor = serde_json::json!({});
        }
        let map = cursor.as_object_mut().expect("object ensured above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), new);
            return Ok(());
        }
        cursor = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    Err(GammaError::Config(format!("empty override path '{dotted}'")))
}

fn merge(base: &mut serde_json::Value, other: serde_json::Value) {
    match (base, other) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            // tagged enums (objects carrying "kind") replace wholesale so a
            // light_dark domain does not inherit rock_sample fields
            if o.contains_key("kind") {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn snapshot_config(config: &RunConfig, out: &Path) -> Result<(), GammaError> {
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    Ok(())
}

fn default_ladder() -> Vec<DomainConfig> {
    [(4usize, 3usize), (6, 5), (8, 6), (10, 8)]
        .iter()
        .map(|&(grid_n, k)| DomainConfig::RockSample {
            grid_n,
            k,
            rock_positions: None,
            placement_seed: grid_n as u64 * 100 + k as u64,
            sensor_halflife: 20.0,
            rewards: Default::default(),
            discount: 0.95,
            horizon: 50,
        })
        .collect()
}

fn run(cli: Cli) -> Result<ExitCode, GammaError> {
    let config = load_config(&cli.config, &cli.overrides)?;
    match cli.command {
        Command::Collect { name } => {
            snapshot_config(&config, &cli.out)?;
            let out_path = cli.out.join(name);
            let dataset = cmd_collect(&config, &out_path)?;
            println!(
                "collected {} samples from {} episodes ({} discarded) -> {}",
                dataset.samples.len(),
                dataset.provenance.episodes,
                dataset.provenance.discarded_episodes,
                out_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { data, name } => {
            snapshot_config(&config, &cli.out)?;
            let params_path = cli.out.join(name);
            let summary = cmd_train(&data, &config, &params_path)?;
            println!(
                "trained {} epochs (best {}), val accuracy {:.3}, val value mse {:.3}{} -> {}",
                summary.epochs_run,
                summary.best_epoch,
                summary.final_val_accuracy,
                summary.final_val_value_mse,
                if summary.diverged { " [diverged]" } else { "" },
                params_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { params, mode } => {
            snapshot_config(&config, &cli.out)?;
            let mode: EvalMode = mode.parse()?;
            let loaded = params.as_deref().map(load_trained).transpose()?;
            let report = cmd_eval(loaded.as_ref(), &config, mode)?;
            let stem = format!("eval_{}", report.mode);
            report.write_csv(&cli.out.join(format!("{stem}.csv")))?;
            std::fs::write(
                cli.out.join(format!("{stem}.json")),
                serde_json::to_string_pretty(&report)?,
            )?;
            if config.evaluation.traces {
                let mut lines = String::new();
                for o in &report.outcomes {
                    for t in &o.traces {
                        lines.push_str(&serde_json::to_string(t)?);
                        lines.push('\n');
                    }
                }
                std::fs::write(cli.out.join(format!("{stem}_trace.jsonl")), lines)?;
            }
            println!(
                "{}: mean return {:.3} +/- {:.3} over {} episodes, {:.4}s mean planning time",
                report.mode,
                report.mean_return,
                report.stderr,
                report.episodes,
                report.mean_plan_seconds
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Generalize {
            params,
            ladder,
            mode,
        } => {
            snapshot_config(&config, &cli.out)?;
            let mode: EvalMode = mode.parse()?;
            let loaded = load_trained(&params)?;
            let ladder: Vec<DomainConfig> = match ladder {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => default_ladder(),
            };
            let rows = cmd_generalize(&loaded, &config, &ladder, mode)?;
            let csv_path = cli.out.join("generalize.csv");
            write_generalize_csv(&rows, &csv_path)?;
            for r in &rows {
                println!(
                    "rocksample({},{}) mean return {:.3} +/- {:.3}",
                    r.grid_n, r.k, r.mean_return, r.stderr
                );
            }
            println!("-> {}", csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck { seed } => {
            let results = gammazero::harness::checks::run_all(seed)?;
            let mut all_ok = true;
            for check in &results {
                println!(
                    "{} {}: {}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.detail
                );
                all_ok &= check.passed;
            }
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
