//! Command-line front end: `run`, `compare`, `synth` and `imbalance`.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
//! failures while running.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::Strategy;
use crate::dataset::{self, imbalance_ratio, Dataset};
use crate::engine::{run_experiment, BudgetPlan, RunOptions};
use crate::error::{Error, Result};
use crate::metrics::{self, aggregate, gain_table, Format, Report};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_BUDGET: usize = 3200;
const DEFAULT_ITERS: usize = 16;
const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Parser)]
#[command(
    name = "alamp",
    version,
    about = "Pool-based active learning simulations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one acquisition function over one or more seeds.
    Run(RunArgs),
    /// Run several acquisition functions with shared seeds and print gains over random.
    Compare(RunArgs),
    /// Write a synthetic Gaussian-blob dataset.
    Synth(SynthArgs),
    /// Subsample a dataset to a target imbalance ratio.
    Imbalance(ImbalanceArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Training embeddings (`label,f1,...,fd` per line).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test embeddings; when absent a stratified part of the training file is held out.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Held-out fraction used when no test file is given.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Synthetic data instead of files: `classes,per_class,dim,std[,seed]`.
    #[arg(long)]
    pub synth: Option<String>,
    /// Acquisition function; `compare` accepts a comma separated list.
    #[arg(long)]
    pub af: Option<String>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// `0..4` (inclusive), `0..=4`, or a comma separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub cost_sensitive: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub per_class: usize,
    #[arg(long)]
    pub dim: usize,
    #[arg(long)]
    pub std: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImbalanceArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub target_ir: f64,
    #[arg(long, default_value_t = 1)]
    pub min_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parameters of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl std::str::FromStr for SynthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidParameter(format!(
                "expected classes,per_class,dim,std[,seed], got `{s}`"
            ))
        };
        let f: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(4..=5).contains(&f.len()) {
            return Err(bad());
        }
        Ok(Self {
            classes: f[0].parse().map_err(|_| bad())?,
            per_class: f[1].parse().map_err(|_| bad())?,
            dim: f[2].parse().map_err(|_| bad())?,
            std: f[3].parse().map_err(|_| bad())?,
            seed: f.get(4).map_or(Ok(0), |v| v.parse()).map_err(|_| bad())?,
        })
    }
}

/// Run configuration as read from a JSON file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub synth: Option<SynthSpec>,
    /// One name, or several for `compare`.
    pub af: Option<AfField>,
    pub budget: Option<usize>,
    pub iters: Option<usize>,
    pub seeds: Option<SeedField>,
    pub cost_sensitive: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AfField {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedField {
    List(Vec<u64>),
    Spec(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files {
        train: PathBuf,
        test: Option<PathBuf>,
        test_fraction: f64,
    },
    Synthetic {
        spec: SynthSpec,
        test_fraction: f64,
    },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub strategies: Vec<Strategy>,
    pub plan: BudgetPlan,
    pub seeds: Vec<u64>,
    pub cost_sensitive: bool,
    pub out: PathBuf,
    pub format: Format,
}

/// Parses `0..4` (inclusive), `0..=4`, or `1,3,5`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidParameter(format!("malformed seed list `{spec}`"));
    let spec = spec.trim();
    if let Some((lo, hi)) = spec.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn parse_strategies(list: &[String]) -> Result<Vec<Strategy>> {
    list.iter()
        .flat_map(|s| s.split(','))
        .map(|s| s.trim().parse())
        .collect()
}

impl RunConfig {
    /// Merges flags over the optional config file over the defaults.
    pub fn resolve(args: &RunArgs, multi_af: bool) -> Result<Self> {
        let file: RunConfigFile = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::InvalidParameter(format!("cannot read config {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    Error::InvalidParameter(format!("invalid config {}: {e}", path.display()))
                })?
            }
            None => RunConfigFile::default(),
        };

        let af_names: Vec<String> = match (&args.af, &file.af) {
            (Some(flag), _) => vec![flag.clone()],
            (None, Some(AfField::One(s))) => vec![s.clone()],
            (None, Some(AfField::Many(v))) => v.clone(),
            (None, None) if multi_af => {
                Strategy::ALL.iter().map(|s| s.name().to_string()).collect()
            }
            (None, None) => vec![Strategy::AlampDiv.name().to_string()],
        };
        let strategies = parse_strategies(&af_names)?;
        if strategies.is_empty() || (!multi_af && strategies.len() != 1) {
            return Err(Error::InvalidParameter(
                "`run` takes exactly one acquisition function".into(),
            ));
        }

        let plan = BudgetPlan::new(
            args.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET),
            args.iters.or(file.iters).unwrap_or(DEFAULT_ITERS),
        )?;

        let seeds = match (&args.seeds, &file.seeds) {
            (Some(flag), _) => parse_seeds(flag)?,
            (None, Some(SeedField::List(v))) => v.clone(),
            (None, Some(SeedField::Spec(s))) => parse_seeds(s)?,
            (None, None) => (0..5).collect(),
        };
        if seeds.is_empty() {
            return Err(Error::InvalidParameter("no seeds given".into()));
        }

        let test_fraction = args
            .test_fraction
            .or(file.test_fraction)
            .unwrap_or(DEFAULT_TEST_FRACTION);
        let synth = match &args.synth {
            Some(s) => Some(s.parse::<SynthSpec>()?),
            None => file.synth,
        };
        let train = args.train.clone().or(file.train);
        let data = match (train, synth) {
            (Some(train), _) => DataSource::Files {
                train,
                test: args.test.clone().or(file.test),
                test_fraction,
            },
            (None, Some(spec)) => DataSource::Synthetic {
                spec,
                test_fraction,
            },
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "either --train or --synth is required".into(),
                ))
            }
        };

        Ok(Self {
            data,
            strategies,
            plan,
            seeds,
            cost_sensitive: args.cost_sensitive.or(file.cost_sensitive).unwrap_or(true),
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("reports")),
            format: args.format.or(file.format).unwrap_or(Format::Json),
        })
    }

    /// Loads or generates `(train, test, name)`.
    pub fn load_data(&self) -> Result<(Dataset, Dataset, String)> {
        match &self.data {
            DataSource::Files {
                train,
                test,
                test_fraction,
            } => {
                let name = train.file_stem().map_or_else(
                    || "dataset".to_string(),
                    |s| s.to_string_lossy().into_owned(),
                );
                let full = dataset::load_dataset(train)?;
                match test {
                    Some(test) => Ok((full, dataset::load_dataset(test)?, name)),
                    None => {
                        let (tr, te) = full.split_stratified(*test_fraction, 0)?;
                        Ok((tr, te, name))
                    }
                }
            }
            DataSource::Synthetic {
                spec,
                test_fraction,
            } => {
                let full = dataset::make_synthetic(
                    spec.classes,
                    spec.per_class,
                    spec.dim,
                    spec.std,
                    spec.seed,
                )?;
                let (tr, te) = full.split_stratified(*test_fraction, spec.seed)?;
                Ok((tr, te, "synthetic".to_string()))
            }
        }
    }
}

fn report_path(dir: &Path, dataset: &str, af: Strategy, tag: &str, format: Format) -> PathBuf {
    dir.join(format!("{dataset}_{af}_{tag}.{}", format.extension()))
}

/// Runs every (strategy, seed) pair, writes per-seed and aggregate files and
/// returns the reports grouped by strategy.
pub fn execute(config: &RunConfig) -> Result<Vec<(Strategy, Vec<Report>)>> {
    let (train, test, name) = config.load_data()?;
    config.plan.check_pool(train.len())?;
    let opts = RunOptions {
        cost_sensitive: config.cost_sensitive,
        dataset_name: name.clone(),
        ..RunOptions::default()
    };
    let jobs: Vec<(Strategy, u64)> = config
        .strategies
        .iter()
        .flat_map(|&af| config.seeds.iter().map(move |&s| (af, s)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(af, seed)| run_experiment(&train, &test, af, config.plan, seed, &opts))
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(&config.out)?;
    let mut grouped = Vec::new();
    for (af, chunk) in config
        .strategies
        .iter()
        .zip(reports.chunks(config.seeds.len()))
    {
        for r in chunk {
            let path = report_path(
                &config.out,
                &name,
                *af,
                &format!("seed{}", r.meta.seed),
                config.format,
            );
            metrics::write_report(r, path, config.format)?;
        }
        let agg = aggregate(chunk)?;
        metrics::write_aggregate(
            &agg,
            report_path(&config.out, &name, *af, "aggregate", config.format),
            config.format,
        )?;
        grouped.push((*af, chunk.to_vec()));
    }
    Ok(grouped)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = RunConfig::resolve(args, false)?;
    let grouped = execute(&config)?;
    for (af, reports) in &grouped {
        let agg = aggregate(reports)?;
        println!(
            "{af}: average accuracy {:.4} (std {:.4}) over {} seed(s); reports in {}",
            agg.average_accuracy.mean,
            agg.average_accuracy.std,
            reports.len(),
            config.out.display()
        );
    }
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<()> {
    let config = RunConfig::resolve(args, true)?;
    let grouped = execute(&config)?;
    let aggregates = grouped
        .iter()
        .map(|(_, r)| aggregate(r))
        .collect::<Result<Vec<_>>>()?;
    let rows = gain_table(&aggregates);
    let table = metrics::gain_table_to_csv(&rows);
    let (_, _, name) = config.load_data()?;
    let path = config
        .out
        .join(format!("{name}_compare.{}", config.format.extension()));
    match config.format {
        Format::Csv => fs::write(&path, &table)?,
        Format::Json => fs::write(&path, serde_json::to_string_pretty(&rows)? + "\n")?,
    }
    print!("{table}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let d = dataset::make_synthetic(args.classes, args.per_class, args.dim, args.std, args.seed)?;
    dataset::write_dataset(&d, &args.out)?;
    println!("wrote {} samples to {}", d.len(), args.out.display());
    Ok(())
}

fn cmd_imbalance(args: &ImbalanceArgs) -> Result<()> {
    let input = dataset::load_dataset(&args.input)?;
    let out = dataset::induce_imbalance(&input, args.target_ir, args.min_per_class, args.seed)?;
    dataset::write_dataset(&out, &args.out)?;
    let achieved = imbalance_ratio(&out.class_counts())?;
    println!("achieved ir {achieved:.4} with {} samples", out.len());
    Ok(())
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Imbalance(a) => cmd_imbalance(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) if e.is_usage() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..4").unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(parse_seeds("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_seeds("7, 9").unwrap(), vec![7, 9]);
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn defaults_follow_protocol() {
        let args = RunArgs {
            synth: Some("3,50,2,0.5".into()),
            ..RunArgs::default()
        };
        let c = RunConfig::resolve(&args, false).unwrap();
        assert_eq!(c.plan, BudgetPlan::new(3200, 16).unwrap());
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert!(c.cost_sensitive);
        assert_eq!(c.strategies, vec![Strategy::AlampDiv]);
        let all = RunConfig::resolve(&args, true).unwrap();
        assert_eq!(all.strategies.len(), 7);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("cfg.json");
        fs::write(
            &cfg,
            r#"{"synth":{"classes":3,"per_class":40,"dim":2,"std":0.5},"af":"margin","budget":60,"iters":3,"seeds":[4],"format":"csv"}"#,
        )
        .unwrap();
        let args = RunArgs {
            config: Some(cfg.clone()),
            af: Some("alamp".into()),
            ..RunArgs::default()
        };
        let c = RunConfig::resolve(&args, false).unwrap();
        assert_eq!(c.strategies, vec![Strategy::Alamp]);
        assert_eq!(c.plan.batch(), 20);
        assert_eq!(c.seeds, vec![4]);
        assert_eq!(c.format, Format::Csv);
    }

    #[test]
    fn usage_errors() {
        let base = RunArgs {
            synth: Some("3,50,2,0.5".into()),
            ..RunArgs::default()
        };
        let bad_af = RunArgs {
            af: Some("entropy".into()),
            ..base.clone()
        };
        assert!(RunConfig::resolve(&bad_af, false).unwrap_err().is_usage());
        let bad_plan = RunArgs {
            budget: Some(3201),
            ..base.clone()
        };
        assert!(RunConfig::resolve(&bad_plan, false).unwrap_err().is_usage());
        let two = RunArgs {
            af: Some("alamp,margin".into()),
            ..base
        };
        assert!(RunConfig::resolve(&two, false).is_err());
        assert!(RunConfig::resolve(&RunArgs::default(), false).is_err());
    }
}
