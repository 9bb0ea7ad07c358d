use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cace_core::design::DesignKind;
use cace_core::io::{
    analyze_dataset, emit_design, ingest_csv, read_covariates, write_simulation_csv, AnalysisRequest, ColumnRoles,
    CovariateSelection, DesignSummary, SimulateConfig,
};
use cace_core::reference::{mixture_quantile, MixtureQuantileSpec, DEFAULT_DRAWS, DEFAULT_SEED};
use cace_core::{BayesConfig, CaceError, ErrorKind, Method, QuantileCache, RemInference};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Complier average causal effects under complete randomization and
/// rerandomization.
///
/// Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
#[derive(Debug, Parser)]
#[command(name = "cace", version)]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "CACE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Analyze(AnalyzeArgs),
    Simulate(SimulateArgs),
    Design(DesignArgs),
    Lquantile(LquantileArgs),
}

/// Estimate the effect on compliers for one dataset and print a JSON report.
///
/// Covariates named with --categorical are expanded into indicators
/// `column=level`, one per level except the alphabetically first. Other
/// covariates must be numeric. Empty fields and NA are rejected.
#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// TOML request; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Assigned treatment column (0/1).
    #[arg(long)]
    assigned: Option<String>,
    /// Received treatment column (0/1).
    #[arg(long)]
    received: Option<String>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    categorical: Option<Vec<String>>,
    /// wald, wald-rem, adj-ehw, adj-hc2, adj-hc3 or bayes.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Assignment mechanism of the data: cre or rem.
    #[arg(long)]
    design: Option<String>,
    /// Acceptance probability of the rerandomization rule.
    #[arg(long)]
    pa: Option<f64>,
    /// Monte Carlo draws for the rerandomization quantile.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock time in the report (makes output run-dependent).
    #[arg(long)]
    timing: bool,
}

/// Run a simulation study and print one CSV row per setting and method.
#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// 1000 replications and full-length posterior chains.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Draw a (re)randomized assignment for a covariate file.
#[derive(Debug, Args)]
struct DesignArgs {
    /// CSV of covariates.
    #[arg(long)]
    x: PathBuf,
    /// Columns to balance on; all by default.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[arg(long)]
    n1: usize,
    /// Acceptance probability; 1 gives complete randomization.
    #[arg(long, default_value_t = 1.0)]
    pa: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    max_tries: Option<u64>,
    /// Assignment CSV; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Balance report JSON; stderr by default.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Quantile of the normal/truncated-χ mixture used under rerandomization.
#[derive(Debug, Args)]
struct LquantileArgs {
    #[arg(long)]
    k: usize,
    /// Threshold; conflicts with --pa.
    #[arg(long, conflicts_with = "pa")]
    a: Option<f64>,
    /// Threshold as the pa quantile of χ²_k.
    #[arg(long)]
    pa: Option<f64>,
    #[arg(long)]
    r2: f64,
    #[arg(long, default_value_t = 0.975)]
    p: f64,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CaceError> {
    let res = match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| (path.to_path_buf(), e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|()| stdout.flush())
                .map_err(|e| (PathBuf::from("<stdout>"), e))
        }
    };
    res.map_err(|(path, e)| CaceError::Io {
        path,
        message: e.to_string(),
    })
}

fn missing(flag: &str) -> CaceError {
    CaceError::InvalidConfig(format!("--{flag} is required without --config"))
}

fn build_request(args: &AnalyzeArgs) -> Result<AnalysisRequest, CaceError> {
    let mut req = match &args.config {
        Some(path) => AnalysisRequest::from_toml_file(path)?,
        None => AnalysisRequest {
            data: args.data.clone().ok_or_else(|| missing("data"))?,
            columns: ColumnRoles {
                assigned: args.assigned.clone().ok_or_else(|| missing("assigned"))?,
                received: args.received.clone().ok_or_else(|| missing("received"))?,
                outcome: args.outcome.clone().ok_or_else(|| missing("outcome"))?,
                covariates: Vec::new(),
                categorical: Vec::new(),
            },
            method: Method::Wald,
            alpha: 0.05,
            seed: None,
            design: DesignSummary::default(),
            bayes: BayesConfig::default(),
            rem: RemInference::default(),
            base_dir: None,
        },
    };
    if args.config.is_some() {
        if let Some(d) = &args.data {
            req.data = d.clone();
            req.base_dir = None;
        }
        if let Some(c) = &args.assigned {
            req.columns.assigned = c.clone();
        }
        if let Some(c) = &args.received {
            req.columns.received = c.clone();
        }
        if let Some(c) = &args.outcome {
            req.columns.outcome = c.clone();
        }
    }
    if let Some(c) = &args.covariates {
        req.columns.covariates = c.clone();
    }
    if let Some(c) = &args.categorical {
        req.columns.categorical = c.clone();
    }
    if let Some(m) = args.method {
        req.method = m;
    }
    if let Some(a) = args.alpha {
        req.alpha = a;
    }
    if args.seed.is_some() {
        req.seed = args.seed;
    }
    if let Some(d) = &args.design {
        req.design.kind = match d.as_str() {
            "cre" => DesignKind::Cre,
            "rem" => DesignKind::Rem,
            other => return Err(CaceError::InvalidConfig(format!("unknown design `{other}`"))),
        };
    }
    if args.pa.is_some() {
        req.design.pa = args.pa;
    }
    if let Some(d) = args.draws {
        req.rem.draws = d;
    }
    if let Some(c) = args.chains {
        req.bayes.chains = c;
    }
    if let Some(i) = args.iters {
        req.bayes.iters_per_chain = i;
    }
    if let Some(b) = args.burn_in {
        req.bayes.burn_in = b;
    }
    Ok(req)
}

fn analyze(args: &AnalyzeArgs) -> Result<(), CaceError> {
    let start = Instant::now();
    let req = build_request(args)?;
    let data = ingest_csv(&req.data_path(), &req.columns)?;
    let mut doc = analyze_dataset(&req, &data, &QuantileCache::new())?;
    if args.timing {
        doc.elapsed_seconds = Some(start.elapsed().as_secs_f64());
    }
    let mut json = doc.to_json();
    json.push('\n');
    write_output(args.out.as_deref(), json.as_bytes())
}

fn simulate(args: &SimulateArgs) -> Result<(), CaceError> {
    let mut cfg = SimulateConfig::from_toml_file(&args.config)?;
    if args.full {
        cfg.reps = 1000;
        cfg.bayes = BayesConfig {
            seed: cfg.bayes.seed,
            ..BayesConfig::default()
        };
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let cache = QuantileCache::new();
    let mut rows = Vec::new();
    for setting in cfg.settings()? {
        let result = cfg.run_one(&setting, &cache)?;
        rows.push((setting, result));
    }
    let mut buf = Vec::new();
    write_simulation_csv(&mut buf, &rows)?;
    let out = args.out.as_deref().or(cfg.out.as_deref());
    write_output(out, &buf)
}

fn design(args: &DesignArgs) -> Result<(), CaceError> {
    let sel = CovariateSelection {
        columns: args.columns.clone(),
        categorical: args.categorical.clone(),
    };
    let (x, names) = read_covariates(&args.x, &sel)?;
    let out = emit_design(&x, names, args.n1, args.pa, args.seed, args.max_tries)?;
    let mut z = Vec::new();
    out.write_assignment(&mut z)?;
    write_output(args.out.as_deref(), &z)?;
    let mut json = out.report_json();
    json.push('\n');
    match &args.report {
        Some(path) => write_output(Some(path), json.as_bytes()),
        None => {
            eprint!("{json}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct LquantileOutput {
    k: usize,
    a: f64,
    r2: f64,
    p: f64,
    draws: usize,
    seed: u64,
    quantile: f64,
}

fn lquantile(args: &LquantileArgs) -> Result<(), CaceError> {
    let a = match (args.a, args.pa) {
        (Some(a), None) => a,
        (None, Some(pa)) if pa == 1.0 => f64::INFINITY,
        (None, Some(pa)) => cace_core::design::threshold_from_pa(args.k, pa)?,
        (None, None) => f64::INFINITY,
        (Some(_), Some(_)) => unreachable!("clap rejects --a with --pa"),
    };
    let spec = MixtureQuantileSpec::new(args.k, a, args.r2, args.p)
        .with_draws(args.draws)
        .with_seed(args.seed);
    let q = mixture_quantile(&spec)?;
    let out = LquantileOutput {
        k: args.k,
        a,
        r2: args.r2,
        p: args.p,
        draws: args.draws,
        seed: args.seed,
        quantile: q,
    };
    let mut json = serde_json::to_string_pretty(&out).expect("plain struct serializes");
    json.push('\n');
    write_output(None, json.as_bytes())
}

fn run(cli: &Cli) -> Result<(), CaceError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CaceError::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CaceError::InvalidConfig(e.to_string()))?;
    }
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Design(a) => design(a),
        Command::Lquantile(a) => lquantile(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => EXIT_VALIDATION,
                ErrorKind::Numerical => EXIT_NUMERICAL,
                ErrorKind::Io => EXIT_IO,
            })
        }
    }
}
