use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use film_core::checkpoint::Checkpoint;
use film_core::config::RunConfig;
use film_core::data::{desk_series, gen_lipschitz, load_csv, split, standardize, Scaler, SplitSpec, TimeSeriesTable};
use film_core::eval::{ks_test, verify_theorem1, verify_theorem2, verify_theorem3, MetricsReport, VerifyReport};
use film_core::legendre::{relative_l2, Lpu};
use film_core::model::{CompiledFilm, FilmModel};
use film_core::spectral::param_count;
use film_core::training::{evaluate_table, naive_last_value, train};

#[derive(Parser)]
#[command(name = "film", version, about = "Legendre-memory forecaster: training, evaluation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the train split, select by validation MSE, write a checkpoint.
    Train(TrainCmd),
    /// Score a checkpoint on the test split.
    Evaluate(EvalCmd),
    /// Forecast the horizon after the last rows of a table.
    Forecast(ForecastCmd),
    /// Project and reconstruct one signal.
    Reconstruct(ReconstructCmd),
    /// Run the rate verifiers.
    Verify(VerifyCmd),
    /// Two-sample Kolmogorov-Smirnov check.
    KsTest(KsCmd),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV with a timestamp column followed by numeric columns.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Use the built-in 10 000-step seasonal+trend+noise series.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Comma-separated columns to keep (for example `OT`).
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    /// `key = value` file; flags given here take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma-separated history multiples, e.g. `1,2,4`.
    #[arg(long)]
    factors: Option<String>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    /// lowest, random or low_random.
    #[arg(long)]
    policy: Option<String>,
    /// Low-rank size, or `none`.
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    revin: Option<bool>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        let overrides: [(&str, Option<String>); 11] = [
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("multiscale_factors", self.factors.clone()),
            ("legendre_order", self.order.map(|v| v.to_string())),
            ("mode_count", self.modes.map(|v| v.to_string())),
            ("mode_policy", self.policy.clone()),
            ("rank", self.rank.clone()),
            ("revin", self.revin.map(|v| v.to_string())),
            ("learning_rate", self.lr.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in overrides {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the best-validation checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct ForecastCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalKind {
    Sine,
    Lipschitz,
}

#[derive(Args)]
struct ReconstructCmd {
    #[arg(long, default_value_t = 1024)]
    length: usize,
    #[arg(long, default_value_t = 128)]
    order: usize,
    #[arg(long, value_enum, default_value = "sine")]
    signal: SignalKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also print `t,original,reconstructed` rows.
    #[arg(long)]
    columns: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Suite {
    All,
    Theorem1,
    Theorem2,
    Theorem3,
}

#[derive(Args)]
struct VerifyCmd {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct KsCmd {
    /// File of numbers (whitespace or comma separated).
    #[arg(long, requires = "sample2", conflicts_with = "checkpoint")]
    sample1: Option<PathBuf>,
    #[arg(long, requires = "sample1")]
    sample2: Option<PathBuf>,
    /// Compare pooled test inputs against pooled forecasts of this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Window stride on the test split (defaults to the horizon).
    #[arg(long)]
    stride: Option<usize>,
}

fn load_table(args: &DataArgs) -> Result<TimeSeriesTable> {
    let table = match (&args.data, args.synthetic) {
        (Some(p), _) => load_csv(p).with_context(|| format!("loading {}", p.display()))?,
        (None, true) => desk_series(args.data_seed)?,
        (None, false) => bail!("pass --data <csv> or --synthetic"),
    };
    match &args.target {
        Some(cols) => {
            let names: Vec<&str> = cols.split(',').map(str::trim).collect();
            Ok(table.select(&names)?)
        }
        None => Ok(table),
    }
}

struct Splits {
    train: TimeSeriesTable,
    val: TimeSeriesTable,
    test: TimeSeriesTable,
}

fn scaled_splits(table: &TimeSeriesTable, scaler: &Scaler) -> Result<Splits> {
    let (a, b, c) = split(table, &SplitSpec::default())?;
    Ok(Splits {
        train: scaler.transform_table(&a)?,
        val: scaler.transform_table(&b)?,
        test: scaler.transform_table(&c)?,
    })
}

fn print_lines(pairs: &[(&str, String)]) {
    for (k, v) in pairs {
        println!("{k}={v}");
    }
}

fn run_train(cmd: &TrainCmd) -> Result<()> {
    let started = Instant::now();
    let mut cfg = cmd.model.resolve()?;
    let table = load_table(&cmd.data)?;
    cfg.model.channels = table.channels();
    cfg.validate()?;
    let (a, _, _) = split(&table, &SplitSpec::default())?;
    let (scaler, _) = standardize(&a, &[])?;
    let sets = scaled_splits(&table, &scaler)?;

    let model = FilmModel::new(cfg.model.clone())?;
    let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(cfg.train.seed));
    let weights: usize = params.experts.iter().map(|w| param_count(w).0).sum();
    let out = train(&model, params, &sets.train, &sets.val, &cfg.train)?;

    let ckpt = Checkpoint {
        config: cfg.clone(),
        params: out.best_params,
        scaler: Some(scaler),
    };
    ckpt.save(&cmd.out).with_context(|| format!("writing {}", cmd.out.display()))?;

    print!("{}", out.history.to_table());
    println!("runtime {:.2}s, checkpoint {}", started.elapsed().as_secs_f64(), cmd.out.display());
    let last = out.history.records.last().expect("at least one epoch");
    let best = out.history.best().expect("at least one epoch");
    print_lines(&[
        ("seed", cfg.train.seed.to_string()),
        ("spectral_params", weights.to_string()),
        ("epochs", out.history.records.len().to_string()),
        ("final_train_mse", format!("{:.10e}", last.train_mse)),
        ("best_epoch", out.best_epoch.to_string()),
        ("best_val_mse", format!("{:.10e}", best.val_mse)),
        ("best_val_mae", format!("{:.10e}", best.val_mae)),
    ]);
    Ok(())
}

fn run_evaluate(cmd: &EvalCmd) -> Result<()> {
    let started = Instant::now();
    let ckpt = Checkpoint::load(&cmd.checkpoint).with_context(|| format!("reading {}", cmd.checkpoint.display()))?;
    let table = load_table(&cmd.data)?;
    let scaler = ckpt.scaler.clone().context("checkpoint has no scaler")?;
    let sets = scaled_splits(&table, &scaler)?;
    let model = FilmModel::new(ckpt.config.model.clone())?;
    model.check_params(&ckpt.params)?;
    let compiled = CompiledFilm::new(&model)?;
    let horizon = ckpt.config.model.horizon;
    let loss = evaluate_table(&compiled, &ckpt.params, &sets.test, 64)?;
    let naive = naive_last_value(&sets.test, model.input_len(), horizon)?;
    let report = MetricsReport {
        horizons: vec![(horizon, loss)],
        runtime_seconds: started.elapsed().as_secs_f64(),
        seed: ckpt.config.train.seed,
        config_echo: ckpt.config.pairs(),
    };
    print!("{}", report.to_table());
    for (k, v) in &report.config_echo {
        println!("# {k} = {v}");
    }
    print!("{}", report.to_lines());
    print_lines(&[
        (&format!("naive_mse_h{horizon}"), format!("{:.10e}", naive.mse)),
        (&format!("naive_mae_h{horizon}"), format!("{:.10e}", naive.mae)),
    ]);
    Ok(())
}

fn run_forecast(cmd: &ForecastCmd) -> Result<()> {
    let ckpt = Checkpoint::load(&cmd.checkpoint).with_context(|| format!("reading {}", cmd.checkpoint.display()))?;
    let table = load_table(&cmd.data)?;
    let scaler = ckpt.scaler.clone().context("checkpoint has no scaler")?;
    let scaled = scaler.transform_table(&table)?;
    let model = FilmModel::new(ckpt.config.model.clone())?;
    let compiled = CompiledFilm::new(&model)?;
    let pred = compiled
        .predict(&ckpt.params, &[scaled.values.view()])?
        .pop()
        .expect("one window");
    let raw = scaler.inverse(pred.view());
    println!("step,{}", table.column_names.join(","));
    for (i, row) in raw.rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
        println!("{},{}", i + 1, cells.join(","));
    }
    Ok(())
}

fn run_reconstruct(cmd: &ReconstructCmd) -> Result<()> {
    let signal: Vec<f64> = match cmd.signal {
        SignalKind::Sine => (0..cmd.length)
            .map(|i| {
                let t = i as f64 / cmd.length as f64;
                (std::f64::consts::TAU * 3.0 * t).sin() + 0.5 * (std::f64::consts::TAU * 7.0 * t + 0.4).cos()
            })
            .collect(),
        SignalKind::Lipschitz => gen_lipschitz(1.0, cmd.length, cmd.seed)?,
    };
    let lpu = Lpu::new(cmd.order, cmd.length)?;
    let back = lpu.round_trip(&signal)?;
    let err = relative_l2(&back.to_vec(), &signal);
    if cmd.columns {
        println!("t,original,reconstructed");
        for (i, (a, b)) in signal.iter().zip(back.iter()).enumerate() {
            println!("{i},{a:.10e},{b:.10e}");
        }
    }
    println!("length {} order {} relative L2 error {:.4}%", cmd.length, cmd.order, 100.0 * err);
    print_lines(&[("relative_error", format!("{err:.10e}"))]);
    Ok(())
}

fn run_verify(cmd: &VerifyCmd) -> Result<bool> {
    let mut reports: Vec<VerifyReport> = Vec::new();
    let want = |s: Suite| cmd.suite == Suite::All || cmd.suite == s;
    if want(Suite::Theorem1) {
        reports.push(verify_theorem1(&[16, 32, 64, 128], cmd.seed)?);
    }
    if want(Suite::Theorem2) {
        reports.push(verify_theorem2(&[16, 64, 256, 1024], 200, 0.1, cmd.seed)?);
    }
    if want(Suite::Theorem3) {
        reports.push(verify_theorem3(64, 64, 16, 1e-3, 1.0, cmd.seed)?);
    }
    for r in &reports {
        println!("{:<4} {:<28} measured {:>12.5e}  expected {:>12.5e}  {}", r.status(), r.name, r.measured, r.expected, r.detail);
    }
    for r in &reports {
        let key = r.name.split('[').next().unwrap_or(&r.name);
        print_lines(&[
            (&format!("{key}_measured"), format!("{:.10e}", r.measured)),
            (&format!("{key}_pass"), r.pass.to_string()),
        ]);
    }
    Ok(reports.iter().all(|r| r.pass))
}

fn read_numbers(path: &PathBuf) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("{}: `{s}` is not a number", path.display())))
        .collect()
}

fn run_ks(cmd: &KsCmd) -> Result<()> {
    let (a, b) = match (&cmd.sample1, &cmd.sample2, &cmd.checkpoint) {
        (Some(p), Some(q), _) => (read_numbers(p)?, read_numbers(q)?),
        (_, _, Some(c)) => {
            let ckpt = Checkpoint::load(c).with_context(|| format!("reading {}", c.display()))?;
            let table = load_table(&cmd.data)?;
            let scaler = ckpt.scaler.clone().context("checkpoint has no scaler")?;
            let test = scaled_splits(&table, &scaler)?.test;
            let model = FilmModel::new(ckpt.config.model.clone())?;
            let compiled = CompiledFilm::new(&model)?;
            let (need, horizon) = (model.input_len(), ckpt.config.model.horizon);
            let stride = cmd.stride.unwrap_or(horizon);
            let origins: Vec<usize> = film_core::data::window_origins(test.len(), need, horizon, stride)?.collect();
            let (mut inputs, mut outputs) = (Vec::new(), Vec::new());
            for chunk in origins.chunks(64) {
                let views: Vec<_> = chunk
                    .iter()
                    .map(|&o| test.values.slice(ndarray::s![o..o + need, ..]))
                    .collect();
                for (v, p) in views.iter().zip(compiled.predict(&ckpt.params, &views)?) {
                    inputs.extend(v.iter().copied());
                    outputs.extend(p.iter().copied());
                }
            }
            (inputs, outputs)
        }
        _ => bail!("pass --sample1/--sample2 or --checkpoint with data"),
    };
    let r = ks_test(&a, &b, cmd.alpha)?;
    println!(
        "KS statistic {:.5} vs threshold {:.5} (alpha {}, n {}, m {}): {}",
        r.statistic,
        r.threshold,
        r.alpha,
        r.n,
        r.m,
        if r.reject { "reject same distribution" } else { "cannot reject" }
    );
    print_lines(&[
        ("ks_statistic", format!("{:.10e}", r.statistic)),
        ("ks_threshold", format!("{:.10e}", r.threshold)),
        ("ks_reject", r.reject.to_string()),
    ]);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(c) => run_train(c).map(|_| true),
        Command::Evaluate(c) => run_evaluate(c).map(|_| true),
        Command::Forecast(c) => run_forecast(c).map(|_| true),
        Command::Reconstruct(c) => run_reconstruct(c).map(|_| true),
        Command::Verify(c) => run_verify(c),
        Command::KsTest(c) => run_ks(c).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
