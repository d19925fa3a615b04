//! Command-line front end: simulate data, tune N_x, run SMC², produce gold
//! references, run benchmark sweeps and emit result tables.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime abort.

use clap::{Args, Parser, Subcommand};
use smc2::adapt::SwitchPolicy;
use smc2::bench;
use smc2::config::RunConfig;
use smc2::engine::{self, EngineConfig};
use smc2::error::Error;
use smc2::filter::{tune_state_particles, TuneOptions};
use smc2::kernel::KernelKind;
use smc2::model::{build_model, simulate_data, Model, ModelKind, ModelOptions, ParamVector, TimeSeries};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "smc2", about = "SMC² with adaptive PMMH/PG kernel switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic series from one of the built-in models.
    Simulate(SimulateArgs),
    /// Tune the number of state particles to a log-likelihood variance target.
    TuneNx(TuneArgs),
    /// Run SMC² once and write posterior, metrics and diagnostics CSVs.
    Run(RunArgs),
    /// Produce a gold-standard posterior reference from a long PMMH chain.
    Gold(GoldArgs),
    /// Run a benchmark sweep of replicates and emit a results table.
    Bench(BenchArgs),
    /// Aggregate per-run metrics CSVs into a results table.
    Table(TableArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model name: bm | allee | svm | ar1.
    #[arg(long)]
    model: String,
    /// Covariate dimension for the AR(1) model.
    #[arg(long, default_value_t = 20)]
    d_beta: usize,
    /// Lagged observation at t = 1 for the SV-in-mean model.
    #[arg(long, default_value_t = 0.0)]
    y0: f64,
    /// Comma-separated parameter values (defaults to the model's reference
    /// truth).
    #[arg(long)]
    theta: Option<String>,
}

impl ModelArgs {
    fn build(&self) -> Result<(Box<dyn Model>, ParamVector), Error> {
        let kind: ModelKind = self.model.parse()?;
        let opts = ModelOptions {
            d_beta: self.d_beta,
            y0: self.y0,
        };
        let model = build_model(kind, &opts);
        let theta = match &self.theta {
            None => model.reference_params(),
            Some(spec) => {
                let values: Result<Vec<f64>, _> =
                    spec.split(',').map(|v| v.trim().parse::<f64>()).collect();
                let values = values
                    .map_err(|e| Error::invalid(format!("bad --theta value: {e}")))?;
                if values.len() != model.spec().dim() {
                    return Err(Error::invalid(format!(
                        "--theta needs {} values for model {}, got {}",
                        model.spec().dim(),
                        self.model,
                        values.len()
                    )));
                }
                ParamVector::new(values)
            }
        };
        Ok((model, theta))
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Series length.
    #[arg(long = "T")]
    t: usize,
    #[arg(long)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Include the latent truth as an extra column.
    #[arg(long, default_value_t = false)]
    latent: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Data CSV path.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Variance target for the log-likelihood estimator.
    #[arg(long, default_value_t = 1.0)]
    target_var: f64,
    #[arg(long, default_value_t = 10)]
    min_nx: usize,
    #[arg(long, default_value_t = 5120)]
    max_nx: usize,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
}

#[derive(Args, Clone)]
struct RunOverrides {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: Option<String>,
    /// da | dt.
    #[arg(long)]
    mode: Option<String>,
    /// pmmh | pg.
    #[arg(long)]
    default_kernel: Option<String>,
    /// never | always | lag.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    nx_pmmh: Option<usize>,
    #[arg(long)]
    data: Option<PathBuf>,
}

impl RunOverrides {
    /// Load the JSON config and apply flag overrides (flags win).
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::from_json_file(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(model) = &self.model {
            cfg.model = model.clone();
        }
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse()?;
        }
        if let Some(kernel) = &self.default_kernel {
            cfg.default_kernel = kernel.parse()?;
        }
        if let Some(policy) = &self.policy {
            cfg.switch_policy = policy.parse()?;
        }
        if let Some(r) = self.r {
            cfg.r = r;
        }
        if let Some(n_theta) = self.n_theta {
            cfg.n_theta = n_theta;
        }
        if let Some(nx) = self.nx_pmmh {
            cfg.nx_pmmh = nx;
        }
        if let Some(data) = &self.data {
            cfg.data_path = Some(data.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: RunOverrides,
    /// Prefix for the output files (<prefix>_posterior.csv,
    /// <prefix>_metrics.csv, <prefix>_diagnostics.csv).
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct GoldArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    #[arg(long)]
    nx: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    overrides: RunOverrides,
    /// Independent replicates per variant.
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Gold reference JSON; computed from a PMMH chain when absent.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Chain length for the automatic gold reference.
    #[arg(long, default_value_t = 20_000)]
    gold_iterations: usize,
    /// Comma-separated r values to sweep.
    #[arg(long, default_value = "1.0,0.5,0.2,0.05")]
    r_grid: String,
    /// Comma-separated switching policies to sweep.
    #[arg(long, default_value = "never,always,lag")]
    policies: String,
    /// Comma-separated default kernels to sweep.
    #[arg(long, default_value = "pmmh,pg")]
    kernels: String,
    /// Worker threads for replicate parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TableArgs {
    /// Per-run metrics CSV files produced by `run`.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn load_data(cfg: &RunConfig) -> Result<TimeSeries, Error> {
    let path = cfg
        .data_path
        .as_ref()
        .ok_or_else(|| Error::invalid("config field data_path is required for this command"))?;
    if !Path::new(path).exists() {
        return Err(Error::invalid(format!("data_path `{path}` does not exist")));
    }
    TimeSeries::read_csv(Path::new(path))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let (model, theta) = args.model.build()?;
    let mut rng = smc2::rng::substream(args.seed, &[smc2::rng::PHASE_INIT]);
    let (data, latent) = simulate_data(model.as_ref(), &theta, args.t, &mut rng);
    data.write_csv(&args.out, args.latent.then_some(latent.as_slice()))?;
    println!(
        "wrote {} observations for model {} to {}",
        args.t,
        args.model.model,
        args.out.display()
    );
    Ok(())
}

fn cmd_tune(args: &TuneArgs) -> Result<(), Error> {
    let (model, theta) = args.model.build()?;
    let data = TimeSeries::read_csv(&args.data)?;
    let opts = TuneOptions {
        min_nx: args.min_nx,
        max_nx: args.max_nx,
        replicates: args.replicates,
    };
    let (nx, trace) = tune_state_particles(
        model.as_ref(),
        &theta,
        &data,
        args.target_var,
        &opts,
        args.seed,
    )?;
    for (candidate, var) in &trace {
        println!("N_x = {candidate}: variance {var}");
    }
    println!("selected N_x = {nx}");
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let cfg = args.overrides.resolve()?;
    let data = load_data(&cfg)?;
    let model = bench::model_from_config(&cfg, &data)?;
    let result = engine::run(model.as_ref(), &data, EngineConfig::from_run_config(&cfg))?;
    let prefix = &args.out_prefix;
    bench::write_posterior_csv(Path::new(&format!("{prefix}_posterior.csv")), &result)?;
    bench::write_metrics_csv(
        Path::new(&format!("{prefix}_metrics.csv")),
        &cfg,
        &result.metrics,
    )?;
    bench::write_diagnostics_csv(
        Path::new(&format!("{prefix}_diagnostics.csv")),
        &result.diagnostics,
    )?;
    println!(
        "targets {} repeats {} pfc {} log_evidence {}",
        result.metrics.targets,
        result.metrics.mean_repeats,
        result.metrics.pfc,
        result.metrics.log_evidence
    );
    Ok(())
}

fn cmd_gold(args: &GoldArgs) -> Result<(), Error> {
    let (model, _) = args.model.build()?;
    let data = TimeSeries::read_csv(&args.data)?;
    let gold = bench::run_gold(
        model.as_ref(),
        &args.model.model,
        &data,
        args.iterations,
        args.nx,
        args.seed,
    )?;
    gold.write_json(&args.out)?;
    println!("posterior means: {:?}", gold.posterior_mean);
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Error>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| Error::invalid(format!("bad {what} value `{v}`: {e}")))
        })
        .collect()
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Error> {
    if args.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build_global()
            .ok();
    }
    let base_cfg = args.overrides.resolve()?;
    let data = load_data(&base_cfg)?;
    let model = bench::model_from_config(&base_cfg, &data)?;

    let gold = match &args.gold {
        Some(path) => bench::GoldReference::read_json(path)?,
        None => {
            let gold = bench::run_gold(
                model.as_ref(),
                &base_cfg.model,
                &data,
                args.gold_iterations,
                base_cfg.nx_pmmh,
                base_cfg.seed ^ 0x5eed,
            )?;
            let path = args.out.with_extension("gold.json");
            gold.write_json(&path)?;
            eprintln!("gold reference written to {}", path.display());
            gold
        }
    };

    let r_grid: Vec<f64> = parse_list(&args.r_grid, "--r-grid")?;
    let policies: Vec<SwitchPolicy> = parse_list(&args.policies, "--policies")?;
    let kernels: Vec<KernelKind> = parse_list(&args.kernels, "--kernels")?;
    let seeds: Vec<u64> = (0..args.replicates as u64)
        .map(|i| base_cfg.seed.wrapping_add(i))
        .collect();

    // base variant first: never-switch PMMH at r = 1, as in the result tables
    let mut variants: Vec<RunConfig> = Vec::new();
    let mut base = base_cfg.clone();
    base.switch_policy = SwitchPolicy::Never;
    base.default_kernel = KernelKind::Pmmh;
    base.r = 1.0;
    variants.push(base);
    for &policy in &policies {
        for &kernel in &kernels {
            for &r in &r_grid {
                let mut cfg = base_cfg.clone();
                cfg.switch_policy = policy;
                cfg.default_kernel = kernel;
                cfg.r = r;
                if cfg.validate().is_err() {
                    continue; // e.g. DT + PMMH default with switching
                }
                let duplicate = policy == SwitchPolicy::Never
                    && kernel == KernelKind::Pmmh
                    && (r - 1.0).abs() < 1e-12;
                // never-switch PMMH ignores r entirely: keep a single row
                let redundant_pmmh_never =
                    policy == SwitchPolicy::Never && kernel == KernelKind::Pmmh;
                if duplicate || redundant_pmmh_never {
                    continue;
                }
                variants.push(cfg);
            }
        }
    }

    let runs: Vec<bench::VariantRuns> = variants
        .iter()
        .map(|cfg| bench::run_replicates(model.as_ref(), &data, cfg, &seeds, Some(&gold)))
        .collect();
    for v in &runs {
        for (seed, err) in &v.failures {
            eprintln!(
                "replicate failed ({} {} {} r={}, seed {seed}): {err}",
                v.cfg.mode, v.cfg.switch_policy, v.cfg.default_kernel, v.cfg.r
            );
        }
    }
    let rows = bench::bench_table(&runs)?;
    bench::write_table_csv(&args.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_table(args: &TableArgs) -> Result<(), Error> {
    // group per-run metrics rows by variant; the first group is the base
    #[derive(Default)]
    struct Group {
        metrics: Vec<smc2::engine::RunMetrics>,
    }
    let mut order: Vec<(String, String, String, String)> = Vec::new();
    let mut groups: std::collections::HashMap<(String, String, String, String), Group> =
        std::collections::HashMap::new();
    for path in &args.inputs {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(c_method), Some(c_policy), Some(c_kdef), Some(c_r)) = (
            col("method"),
            col("test_kalt"),
            col("kdef"),
            col("r"),
        ) else {
            return Err(Error::invalid(format!(
                "{} is not a metrics CSV (missing variant columns)",
                path.display()
            )));
        };
        for record in reader.records() {
            let record = record?;
            let get = |i: usize| record.get(i).unwrap_or("").to_string();
            let key = (get(c_method), get(c_policy), get(c_kdef), get(c_r));
            let parse_f = |name: &str| -> Result<f64, Error> {
                let i = col(name)
                    .ok_or_else(|| Error::invalid(format!("missing column {name}")))?;
                record
                    .get(i)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad {name}: {e}")))
            };
            let metrics = smc2::engine::RunMetrics {
                mse: Some(parse_f("mse")?),
                pfc: parse_f("pfc")? as u64,
                targets: parse_f("targets")? as u64,
                mean_repeats: parse_f("r_mean")?,
                log_evidence: parse_f("log_evidence")?,
                wall_time_s: 0.0,
                seed: parse_f("seed")? as u64,
            };
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().metrics.push(metrics);
        }
    }
    if order.is_empty() {
        return Err(Error::invalid("no metrics rows found"));
    }
    let base = &groups[&order[0]].metrics;
    let mut rows = Vec::new();
    for key in &order {
        let g = &groups[key];
        let scores = bench::score_runs(&g.metrics, base)?;
        let n = g.metrics.len() as f64;
        rows.push(bench::BenchRow {
            method: key.0.clone(),
            test_kalt: key.1.clone(),
            kdef: key.2.clone(),
            r: key.3.parse().unwrap_or(f64::NAN),
            targets: g.metrics.iter().map(|m| m.targets as f64).sum::<f64>() / n,
            r_mean: g.metrics.iter().map(|m| m.mean_repeats).sum::<f64>() / n,
            releff_mse: scores.releff_mse,
            releff_pfc: scores.releff_pfc,
            releff: scores.releff,
            failures: 0,
        });
    }
    bench::write_table_csv(&args.out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::TuneNx(args) => cmd_tune(args),
        Command::Run(args) => cmd_run(args),
        Command::Gold(args) => cmd_gold(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Table(args) => cmd_table(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::InvalidConfig(_) | Error::Json(_))) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("runtime abort: {e}");
            ExitCode::from(3)
        }
    }
}
