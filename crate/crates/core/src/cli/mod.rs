//! The `fusionlab` command-line front end.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or data error.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config_text, read_config_file, ModelChoice, RunConfig, Setting, CONFIG_KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "fusionlab", version, about = "Multimodal risk-class laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic complementary-modalities corpus.
    Gen(GenArgs),
    /// Train the fusion transformer on a labeled corpus.
    Train(TrainArgs),
    /// Cross-validate a model in one feature setting.
    Eval(EvalArgs),
    /// Cross-validate with per-fold self-training.
    Selftrain(SelftrainArgs),
    /// Cross-validate after replacing image vectors with noise.
    Ablate(EvalArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 200)]
    n_per_class: usize,
    #[arg(long, default_value_t = 768)]
    dt: usize,
    #[arg(long, default_value_t = 64)]
    di: usize,
    #[arg(long, default_value_t = 4.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    labeled_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// text | image | fusion | multimodal
    #[arg(long)]
    setting: Option<String>,
    /// svm | logreg | forest | stacking | fusion
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct SelftrainArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// ensemble | stacking
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    sample_frac: Option<f64>,
    /// Pool of unlabeled records; defaults to the unlabeled rows of --data.
    #[arg(long)]
    unlabeled: Option<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 12)]
    dt: usize,
    #[arg(long, default_value_t = 10)]
    di: usize,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also check with batch-statistics normalization.
    #[arg(long)]
    batch_stats: bool,
    #[arg(long, hide = true)]
    perturb_grad: bool,
}

fn push(pairs: &mut Vec<(String, String)>, key: &str, v: Option<impl ToString>) {
    if let Some(v) = v {
        pairs.push((key.to_string(), v.to_string()));
    }
}

fn collect_pairs(common: &Common, extra: Vec<(String, String)>) -> crate::Result<Vec<(String, String)>> {
    let mut pairs = match &common.config {
        Some(p) => read_config_file(p)?,
        None => Vec::new(),
    };
    push(&mut pairs, "data", common.data.as_ref());
    push(&mut pairs, "out_dir", common.out_dir.as_ref());
    push(&mut pairs, "seed", common.seed);
    pairs.extend(extra);
    for s in &common.set {
        let (k, v) =
            s.split_once('=').ok_or_else(|| crate::Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn eval_pairs(a: &EvalArgs) -> Vec<(String, String)> {
    let mut p = Vec::new();
    push(&mut p, "setting", a.setting.as_ref());
    push(&mut p, "model", a.model.as_ref());
    push(&mut p, "k", a.k);
    p
}

fn dispatch(cli: Cli) -> crate::Result<i32> {
    match cli.command {
        Command::Gen(a) => commands::gen(
            &crate::dataio::SynthConfig {
                n_per_class: a.n_per_class,
                d_text: a.dt,
                d_image: a.di,
                separation: a.sep,
                sigma: a.sigma,
                labeled_fraction: a.labeled_frac,
                seed: a.seed,
            },
            &a.out,
        ),
        Command::Train(a) => {
            let cfg = RunConfig::from_pairs(&collect_pairs(&a.common, Vec::new())?)?;
            commands::train(&cfg)
        }
        Command::Eval(a) => {
            let cfg = RunConfig::from_pairs(&collect_pairs(&a.common, eval_pairs(&a))?)?;
            commands::eval(&cfg)
        }
        Command::Ablate(a) => {
            let cfg = RunConfig::from_pairs(&collect_pairs(&a.common, eval_pairs(&a))?)?;
            commands::ablate(&cfg)
        }
        Command::Selftrain(a) => {
            let mut extra = eval_pairs(&a.eval);
            push(&mut extra, "strategy", a.strategy.as_ref());
            push(&mut extra, "tau", a.tau);
            push(&mut extra, "rounds", a.rounds);
            push(&mut extra, "sample_fraction", a.sample_frac);
            push(&mut extra, "unlabeled", a.unlabeled.as_ref());
            let cfg = RunConfig::from_pairs(&collect_pairs(&a.eval.common, extra)?)?;
            commands::selftrain(&cfg)
        }
        Command::Gradcheck(a) => commands::gradcheck(&commands::GradcheckRequest {
            seed: a.seed,
            batch: a.batch,
            d_text: a.dt,
            d_image: a.di,
            out: a.out,
            perturb: a.perturb_grad,
            batch_stats: a.batch_stats,
        }),
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
