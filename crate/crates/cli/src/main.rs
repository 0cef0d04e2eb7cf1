use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use acc_core::acquisition::Strategy;
use acc_core::engine::{
    aggregate, load_run, run_suite, write_summary, DatasetKind, InitKind, RunConfig, SuiteResult,
};
use acc_core::oracle::gen_synthetic;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

#[derive(Debug, Parser)]
#[command(name = "acc", version, about = "Active correlation clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Run the active loop for every seed of one configuration.
    Run(RunArgs),
    /// Run the cross product of strategies and noise levels.
    Sweep(SweepArgs),
    /// Aggregate run logs into per-iteration mean/std and AUC tables.
    Report(ReportArgs),
    /// Start the labelling service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    dataset_seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Debug, Args, Default)]
struct ConfigArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kebab::<DatasetKind>)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    data_path: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    dataset_seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta_exp: Option<f64>,
    #[arg(long)]
    subset_size: Option<usize>,
    /// Disable the power transform on entropy scores.
    #[arg(long)]
    no_power_diversity: bool,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    batch_fraction: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_parser = parse_kebab::<InitKind>)]
    init: Option<InitKind>,
    #[arg(long)]
    init_fraction: Option<f64>,
    #[arg(long)]
    init_magnitude: Option<f64>,
    /// Route initial similarities through the noise model.
    #[arg(long)]
    init_noisy: bool,
    #[arg(long)]
    kmeans_k: Option<usize>,
    /// A seed count (`15` means 0..15) or an explicit list (`0,4,9`).
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    /// Output directory for run logs and summaries.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    acq: Option<Strategy>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Print the resolved config as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_value = "uniform,entropy,info-gain")]
    acqs: Vec<Strategy>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0.4")]
    gammas: Vec<f64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run logs (`*.jsonl`) of one configuration.
    files: Vec<PathBuf>,
    /// Directory for `report.csv` and `auc.csv`; prints the report to
    /// stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "sessions")]
    data_dir: PathBuf,
    /// Directory with the UI bundle.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

enum Failure {
    /// Bad input; exit code 2.
    Usage(String),
    /// The work itself failed; exit code 1.
    Run(String),
}

type CliResult<T = ()> = Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if s.contains(',') {
        return s
            .split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|e| format!("bad seed `{x}`: {e}")))
            .collect::<Result<_, _>>()
            .map(Seeds);
    }
    let count: u64 = s.parse().map_err(|e| format!("bad seed count `{s}`: {e}"))?;
    if count == 0 {
        return Err("seed count must be positive".into());
    }
    Ok(Seeds((0..count).collect()))
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(usage)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$target = v; })*
            };
        }
        set!(
            dataset => dataset, label_column => label_column, n => n, k => k, d => d,
            dataset_seed => dataset_seed, alpha => alpha, beta => beta, beta_exp => beta_exp,
            batch_fraction => batch_fraction, iters => iterations, init => init,
            init_fraction => init_fraction, init_magnitude => init_magnitude,
        );
        if let Some(Seeds(seeds)) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if self.data_path.is_some() {
            cfg.data_path = self.data_path.clone();
            if self.dataset.is_none() {
                cfg.dataset = DatasetKind::Csv;
            }
        }
        if self.subset_size.is_some() {
            cfg.subset_size = self.subset_size;
        }
        if self.batch_size.is_some() {
            cfg.batch_size = self.batch_size;
        }
        if self.kmeans_k.is_some() {
            cfg.kmeans_k = self.kmeans_k;
        }
        if self.out.is_some() {
            cfg.output = self.out.clone();
        }
        if self.no_power_diversity {
            cfg.power_diversity = false;
        }
        if self.init_noisy {
            cfg.init_noisy = true;
        }
        Ok(cfg)
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn cmd_gen(args: &GenArgs) -> CliResult {
    let ds = gen_synthetic(args.n, args.k, args.d, args.dataset_seed).map_err(usage)?;
    let sink: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| failed(format!("{}: {e}", path.display())))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = (0..args.d).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(failed)?;
    for (row, label) in ds.features.rows().into_iter().zip(ds.truth.labels()) {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec).map_err(failed)?;
    }
    w.flush().map_err(failed)?;
    Ok(())
}

fn report_suite(suite: &SuiteResult, cfgs: &[RunConfig]) -> CliResult {
    for (i, cfg) in cfgs.iter().enumerate() {
        for rec in suite.records(i) {
            println!(
                "{} gamma={} seed={} final_ari={:.4} auc_ari={:.2} requeried={}",
                rec.acq,
                cfg.gamma,
                rec.seed,
                rec.final_ari(),
                rec.auc_ari(),
                rec.total_requeried()
            );
        }
    }
    let failures: Vec<_> = suite.failures().collect();
    for f in &failures {
        if let Err(msg) = &f.outcome {
            eprintln!("error: {} seed {}: {msg}", cfgs[f.config_index].acq, f.seed);
        }
    }
    if !failures.is_empty() {
        return Err(failed(format!("{} run(s) failed", failures.len())));
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let mut cfg = args.common.resolve()?;
    if let Some(acq) = args.acq {
        cfg.acq = acq;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    cfg.validate().map_err(usage)?;
    if args.dump_config {
        print!("{}", cfg.to_toml().map_err(failed)?);
        return Ok(());
    }
    let dir = out_dir(&cfg);
    let cfgs = [cfg];
    let suite = run_suite(&cfgs, args.common.jobs, Some(&dir)).map_err(failed)?;
    report_suite(&suite, &cfgs)?;
    eprintln!("wrote {} files to {}", suite.files.len(), dir.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CliResult {
    let base = args.common.resolve()?;
    if args.acqs.is_empty() || args.gammas.is_empty() {
        return Err(usage("sweep needs at least one strategy and one gamma"));
    }
    let mut cfgs = Vec::new();
    for &gamma in &args.gammas {
        for &acq in &args.acqs {
            let cfg = RunConfig {
                acq,
                gamma,
                ..base.clone()
            };
            cfg.validate().map_err(usage)?;
            cfgs.push(cfg);
        }
    }
    let dir = out_dir(&base);
    let suite = run_suite(&cfgs, args.common.jobs, Some(&dir)).map_err(failed)?;
    report_suite(&suite, &cfgs)?;
    for (agg, cfg) in suite.aggregates.iter().zip(&cfgs) {
        println!(
            "mean {} gamma={} auc_ari={:.2} auc_ami={:.2}",
            agg.acq,
            cfg.gamma,
            agg.mean_auc_ari(),
            agg.mean_auc_ami()
        );
    }
    eprintln!("wrote {} files to {}", suite.files.len(), dir.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> CliResult {
    if args.files.is_empty() {
        return Err(usage("report needs at least one run log"));
    }
    let records = args
        .files
        .iter()
        .map(|p| load_run(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(usage)?;
    let agg = aggregate(&records).map_err(usage)?;
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(failed)?;
            write_summary(std::slice::from_ref(&agg), &dir.join("report.csv")).map_err(failed)?;
            let auc = std::fs::File::create(dir.join("auc.csv")).map_err(failed)?;
            agg.write_auc_csv(auc).map_err(failed)?;
        }
        None => {
            agg.write_rows_csv(std::io::stdout().lock()).map_err(failed)?;
        }
    }
    eprintln!(
        "{} runs of {} ({}): mean auc_ari {:.2}",
        records.len(),
        agg.acq,
        agg.config_hash,
        agg.mean_auc_ari()
    );
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> CliResult {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse().map_err(usage)?;
    let registry = acc_service::Registry::open(&args.data_dir).map_err(failed)?;
    if let Some(dir) = &args.static_dir {
        if !Path::new(dir).is_dir() {
            return Err(usage(format!("static dir {} does not exist", dir.display())));
        }
    }
    let rt = tokio::runtime::Runtime::new().map_err(failed)?;
    rt.block_on(acc_service::serve(addr, Arc::new(registry), args.static_dir.clone()))
        .map_err(failed)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
