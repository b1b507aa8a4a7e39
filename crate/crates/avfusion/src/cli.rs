//! Command-line front end: dataset synthesis, training, evaluation,
//! parameter counting, gradient checking, and the architecture listing.
//!
//! Settings resolve as built-in defaults < config file < command-line
//! flags. The config file is flat UTF-8 `key = value` lines with `#`
//! comments; keys are the long flag names with dashes as underscores.
//! Every failure prints one `error: <kind>: <detail>` line and exits
//! non-zero.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::data::{self, SynthConfig};
use crate::error::{AvError, Result};
use crate::gradcheck::{gradcheck, GradReport};
use crate::layers::{self, Activation};
use crate::metrics::{self, MetricReport};
use crate::models::{list_architectures, ArchName, ArchSpec, ForwardOpts, Model};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::trainer::{self, save_checkpoint, Checkpoint, EvalSettings, TrainConfig};

#[derive(Parser)]
#[command(name = "avfusion", version, about = "Audio-visual fusion networks: synthesize data, train, evaluate, inspect")]
struct Cli {
    /// Flat key=value config file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed for anything stochastic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted unimodal and cross-modal labels.
    Synth(SynthArgs),
    /// Train an architecture on an AVFR dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Report exact per-block and total parameter counts.
    CountParams(CountParamsArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// List the architecture catalog.
    List,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    records: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    audio_only: Option<usize>,
    #[arg(long)]
    visual_only: Option<usize>,
    #[arg(long)]
    cross_modal: Option<usize>,
    #[arg(long)]
    audio_dim: Option<usize>,
    #[arg(long)]
    visual_dim: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (AVFR or JSON lines).
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Held-out dataset for per-epoch metrics.
    #[arg(long, value_name = "PATH")]
    valid: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    attn: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    branch_depth: Option<usize>,
    #[arg(long)]
    fusion_depth: Option<usize>,
    /// Replace attention blocks with same-width FC layers.
    #[arg(long)]
    no_attention: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Standardize inputs per dimension using training-set statistics.
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Also save the checkpoint every N epochs.
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<usize>,
    #[arg(long, value_name = "PATH")]
    history: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Append the report as a CSV row.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CountParamsArgs {
    #[arg(long)]
    arch: Option<String>,
    /// Report all catalog entries.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    visual_dim: Option<usize>,
    #[arg(long)]
    audio_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    attn: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    branch_depth: Option<usize>,
    #[arg(long)]
    fusion_depth: Option<usize>,
    #[arg(long)]
    no_attention: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Architecture to check end-to-end (default: all fifteen).
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    visual_dim: Option<usize>,
    #[arg(long)]
    audio_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    attn: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
}

// ── Config file ──────────────────────────────────────────────────────

struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    AvError::InvalidArgument(format!(
                        "config line {}: expected key = value, got {line:?}",
                        i + 1
                    ))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                AvError::InvalidArgument(format!("config value for {key} is invalid: {raw:?}"))
            }),
        }
    }

    fn get_flag(&self, key: &str) -> Result<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn pick<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn need<T: FromStr>(flag: Option<T>, file: &FileConfig, key: &str) -> Result<T> {
    pick(flag, file, key)?
        .ok_or_else(|| AvError::InvalidArgument(format!("missing required setting: {key}")))
}

// ── Entry point ──────────────────────────────────────────────────────

/// Parse arguments, run the selected command, and return the process exit
/// code. All diagnostics go to stderr as a single machine-parseable line.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            1
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => file.get("seed")?,
    };
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, &file, seed, cli.quiet),
        Command::Train(args) => cmd_train(args, &file, seed, cli.quiet),
        Command::Eval(args) => cmd_eval(args, &file),
        Command::CountParams(args) => cmd_count_params(args, &file),
        Command::Gradcheck(args) => cmd_gradcheck(args, &file, cli.quiet),
        Command::List => cmd_list(),
    }
}

// ── synth ────────────────────────────────────────────────────────────

fn cmd_synth(args: &SynthArgs, file: &FileConfig, seed: Option<u64>, quiet: bool) -> Result<()> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        num_classes: pick(args.classes, file, "classes")?.unwrap_or(defaults.num_classes),
        num_records: pick(args.records, file, "records")?.unwrap_or(defaults.num_records),
        audio_dim: pick(args.audio_dim, file, "audio_dim")?.unwrap_or(defaults.audio_dim),
        visual_dim: pick(args.visual_dim, file, "visual_dim")?.unwrap_or(defaults.visual_dim),
        audio_only: pick(args.audio_only, file, "audio_only")?.unwrap_or(defaults.audio_only),
        visual_only: pick(args.visual_only, file, "visual_only")?.unwrap_or(defaults.visual_only),
        cross_modal: pick(args.cross_modal, file, "cross_modal")?.unwrap_or(defaults.cross_modal),
        noise_std: pick(args.noise_std, file, "noise_std")?.unwrap_or(defaults.noise_std),
        distractor_dims: pick(args.distractors, file, "distractors")?
            .unwrap_or(defaults.distractor_dims),
        seed: seed.unwrap_or(defaults.seed),
    };
    let out: PathBuf = need(args.out.clone(), file, "out")?;
    let dataset = cfg.generate()?;
    data::write_records(&dataset.header, dataset.records.iter(), &out)?;
    if !quiet {
        let h = &dataset.header;
        println!(
            "wrote {}: {} records, {} classes ({} audio-only / {} visual-only / {} cross-modal), \
             visual {} ({} signal), audio {} ({} signal), noise_std {}, seed {}",
            out.display(),
            h.num_records,
            h.num_classes,
            cfg.audio_only,
            cfg.visual_only,
            cfg.cross_modal,
            h.visual_dim,
            cfg.visual_signal_dims(),
            h.audio_dim,
            cfg.audio_signal_dims(),
            cfg.noise_std,
            cfg.seed,
        );
    }
    Ok(())
}

// ── train ────────────────────────────────────────────────────────────

/// Desk-scale training defaults; `count-params` keeps the full published
/// widths, but training something 8000 wide is not a sane default on a CPU.
const TRAIN_HIDDEN_DEFAULT: usize = 256;
const TRAIN_ATTN_DEFAULT: usize = 64;

fn arch_spec_for_train(
    args: &TrainArgs,
    file: &FileConfig,
    header_dims: (usize, usize, usize),
) -> Result<ArchSpec> {
    let arch_name: String = pick(args.arch.clone(), file, "arch")?
        .unwrap_or_else(|| "attend_fusion".to_string());
    let name = ArchName::parse(&arch_name)?;
    let mut spec = ArchSpec::defaults(name);
    let (visual_dim, audio_dim, num_classes) = header_dims;
    spec.visual_dim = visual_dim;
    spec.audio_dim = audio_dim;
    spec.num_classes = num_classes;
    spec.hidden_dim = pick(args.hidden, file, "hidden")?.unwrap_or(TRAIN_HIDDEN_DEFAULT);
    spec.attn_dim = pick(args.attn, file, "attn")?.unwrap_or(TRAIN_ATTN_DEFAULT);
    if let Some(rows) = pick(args.rows, file, "rows")? {
        spec.attn_rows = rows;
    }
    if let Some(bd) = pick(args.branch_depth, file, "branch_depth")? {
        spec.branch_depth = bd;
    }
    if let Some(fd) = pick(args.fusion_depth, file, "fusion_depth")? {
        spec.fusion_depth = fd;
    }
    if args.no_attention || file.get_flag("no_attention")? {
        spec.use_attention = false;
    }
    Ok(spec)
}

fn cmd_train(args: &TrainArgs, file: &FileConfig, seed: Option<u64>, quiet: bool) -> Result<()> {
    let data_path: PathBuf = need(args.data.clone(), file, "data")?;
    let mut train_set = data::read_dataset(&data_path)?;
    let valid_path = pick(args.valid.clone(), file, "valid")?;
    let mut valid_set = valid_path.as_deref().map(data::read_dataset).transpose()?;

    let standardize = args.standardize || file.get_flag("standardize")?;
    let norm_stats = if standardize {
        let stats = data::compute_stats(&train_set);
        data::apply_stats(&mut train_set, &stats);
        if let Some(v) = valid_set.as_mut() {
            data::apply_stats(v, &stats);
        }
        Some(stats)
    } else {
        None
    };

    let h = &train_set.header;
    let spec = arch_spec_for_train(
        args,
        file,
        (h.visual_dim as usize, h.audio_dim as usize, h.num_classes as usize),
    )?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        learning_rate: pick(args.lr, file, "lr")?.unwrap_or(defaults.learning_rate),
        epochs: pick(args.epochs, file, "epochs")?.unwrap_or(defaults.epochs),
        batch_size: pick(args.batch_size, file, "batch_size")?.unwrap_or(defaults.batch_size),
        dropout_rate: pick(args.dropout, file, "dropout")?.unwrap_or(defaults.dropout_rate),
        weight_decay: pick(args.weight_decay, file, "weight_decay")?
            .unwrap_or(defaults.weight_decay),
        beta1: pick(args.beta1, file, "beta1")?.unwrap_or(defaults.beta1),
        beta2: pick(args.beta2, file, "beta2")?.unwrap_or(defaults.beta2),
        epsilon: pick(args.epsilon, file, "epsilon")?.unwrap_or(defaults.epsilon),
        seed: seed.unwrap_or(0),
    };
    let eval_settings = EvalSettings {
        k: pick(args.k, file, "k")?.unwrap_or(20),
        threshold: pick(args.threshold, file, "threshold")?.unwrap_or(0.5),
    };
    let checkpoint_path: PathBuf = pick(args.checkpoint.clone(), file, "checkpoint")?
        .unwrap_or_else(|| PathBuf::from("avfusion.avck"));
    let history_path: PathBuf = pick(args.history.clone(), file, "history")?
        .unwrap_or_else(|| PathBuf::from("history.csv"));
    let checkpoint_every = pick(args.checkpoint_every, file, "checkpoint_every")?;

    let mut model = Model::build(spec, cfg.seed)?;
    if !quiet {
        println!(
            "training {} ({} parameters) for {} epochs on {} records",
            model.spec.name.as_str(),
            model.count_params(),
            cfg.epochs,
            train_set.len()
        );
    }

    let mut history = fs::File::create(&history_path)?;
    writeln!(history, "epoch,loss,gap,f1,seconds")?;
    let stats_for_epoch = norm_stats.clone();
    let outcome = trainer::fit(
        &mut model,
        &train_set,
        valid_set.as_ref(),
        &cfg,
        eval_settings,
        |record, model, state| {
            writeln!(
                history,
                "{},{:.12},{:.12},{:.12},{:.3}",
                record.epoch, record.loss, record.gap, record.f1, record.seconds
            )?;
            if !quiet {
                println!(
                    "epoch {:>3}  loss {:.6}  gap {:.4}  f1 {:.4}  ({:.1}s)",
                    record.epoch, record.loss, record.gap, record.f1, record.seconds
                );
            }
            if let Some(every) = checkpoint_every {
                if every > 0 && (record.epoch + 1) % every == 0 {
                    let snapshot = Checkpoint::from_training(model, state, &cfg, record.epoch + 1)
                        .with_norm_stats(stats_for_epoch.clone());
                    save_checkpoint(&snapshot, &checkpoint_path)?;
                }
            }
            Ok(())
        },
    )?;
    let final_checkpoint = outcome.checkpoint.with_norm_stats(norm_stats);
    save_checkpoint(&final_checkpoint, &checkpoint_path)?;
    if !quiet {
        println!(
            "saved checkpoint to {} and history to {}",
            checkpoint_path.display(),
            history_path.display()
        );
    }
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

fn cmd_eval(args: &EvalArgs, file: &FileConfig) -> Result<()> {
    let checkpoint_path: PathBuf = need(args.checkpoint.clone(), file, "checkpoint")?;
    let data_path: PathBuf = need(args.data.clone(), file, "data")?;
    let k = pick(args.k, file, "k")?.unwrap_or(20);
    let threshold = pick(args.threshold, file, "threshold")?.unwrap_or(0.5);

    let checkpoint = trainer::load_checkpoint(&checkpoint_path)?;
    let model = checkpoint.to_model()?;
    let mut dataset = data::read_dataset(&data_path)?;
    if let Some(stats) = &checkpoint.norm_stats {
        data::apply_stats(&mut dataset, stats);
    }
    let report = metrics::evaluate(&model, &dataset, k, threshold)?;
    println!("{}", report.to_json_line());
    if let Some(csv) = pick(args.csv.clone(), file, "csv")? {
        let fresh = !csv.exists();
        let mut out = fs::OpenOptions::new().create(true).append(true).open(&csv)?;
        if fresh {
            writeln!(out, "{}", MetricReport::csv_header())?;
        }
        writeln!(out, "{}", report.to_csv_row())?;
    }
    Ok(())
}

// ── count-params ─────────────────────────────────────────────────────

fn spec_for_count(args: &CountParamsArgs, file: &FileConfig, name: ArchName) -> Result<ArchSpec> {
    let mut spec = ArchSpec::defaults(name);
    if let Some(v) = pick(args.visual_dim, file, "visual_dim")? {
        spec.visual_dim = v;
    }
    if let Some(v) = pick(args.audio_dim, file, "audio_dim")? {
        spec.audio_dim = v;
    }
    if let Some(v) = pick(args.hidden, file, "hidden")? {
        spec.hidden_dim = v;
    }
    if let Some(v) = pick(args.attn, file, "attn")? {
        spec.attn_dim = v;
    }
    if let Some(v) = pick(args.classes, file, "classes")? {
        spec.num_classes = v;
    }
    if let Some(v) = pick(args.rows, file, "rows")? {
        spec.attn_rows = v;
    }
    if let Some(v) = pick(args.branch_depth, file, "branch_depth")? {
        spec.branch_depth = v;
    }
    if let Some(v) = pick(args.fusion_depth, file, "fusion_depth")? {
        spec.fusion_depth = v;
    }
    if args.no_attention || file.get_flag("no_attention")? {
        spec.use_attention = false;
    }
    Ok(spec)
}

fn plan_for(spec: &ArchSpec) -> Result<crate::models::ModelPlan> {
    spec.validate()?;
    let plan = crate::models::catalog::plan(spec)?;
    plan.validate(spec)?;
    Ok(plan)
}

fn cmd_count_params(args: &CountParamsArgs, file: &FileConfig) -> Result<()> {
    let all = args.all || file.get_flag("all")?;
    if all {
        println!("{:<26} {:>14} {:>10}", "architecture", "params", "params(M)");
        for info in list_architectures() {
            let spec = spec_for_count(args, file, info.name)?;
            let total = plan_for(&spec)?.count_params();
            println!(
                "{:<26} {:>14} {:>10.1}",
                info.name.as_str(),
                total,
                total as f64 / 1e6
            );
        }
        return Ok(());
    }
    let arch: String = need(args.arch.clone(), file, "arch")?;
    let name = ArchName::parse(&arch)?;
    let spec = spec_for_count(args, file, name)?;
    let plan = plan_for(&spec)?;
    println!("{}", name.as_str());
    for (group, count) in plan.count_by_group() {
        println!("  {:<12} {:>14} {:>10.1}M", group, count, count as f64 / 1e6);
    }
    let total = plan.count_params();
    println!("  {:<12} {:>14} {:>10.1}M", "total", total, total as f64 / 1e6);
    Ok(())
}

// ── gradcheck ────────────────────────────────────────────────────────

struct CheckRow {
    subject: String,
    seed: u64,
    report: GradReport,
}

fn random_tensor(shape: Vec<usize>, r: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).expect("finite")
}

/// Layer-level checks mirroring the building blocks, one row per layer.
fn layer_checks(seed: u64, eps: f64, tol: f64) -> Result<Vec<CheckRow>> {
    let mut r = rng::rng(rng::derive(seed, 0x99));
    let mut rows = Vec::new();
    let mut push = |name: &str, report: GradReport| {
        rows.push(CheckRow {
            subject: format!("layer:{name}"),
            seed,
            report,
        });
    };

    let x = random_tensor(vec![3, 4], &mut r);
    let fc = layers::FcParams::init(4, 5, Activation::Relu, &mut r);
    push(
        "fc",
        gradcheck(
            &|tape: &mut Tape, vars: &[Var]| {
                let p = layers::FcVars {
                    weight: vars[1],
                    bias: vars[2],
                    activation: Activation::Relu,
                };
                let y = layers::fc_forward(tape, vars[0], &p)?;
                tape.sum(y)
            },
            &[x.clone(), fc.weight.clone(), fc.bias.clone()],
            eps,
            tol,
        )?,
    );

    let res = layers::ResidualParams::two_layer(4, &mut r);
    let res_inputs = vec![
        x.clone(),
        res.inner[0].weight.clone(),
        res.inner[0].bias.clone(),
        res.inner[1].weight.clone(),
        res.inner[1].bias.clone(),
    ];
    let res_vars = |vars: &[Var]| layers::ResidualVars {
        inner: vec![
            layers::FcVars {
                weight: vars[1],
                bias: vars[2],
                activation: Activation::Relu,
            },
            layers::FcVars {
                weight: vars[3],
                bias: vars[4],
                activation: Activation::None,
            },
        ],
    };
    push(
        "residual",
        gradcheck(
            &|tape: &mut Tape, vars: &[Var]| {
                let y = layers::residual_block(tape, vars[0], &res_vars(vars))?;
                tape.sum(y)
            },
            &res_inputs,
            eps,
            tol,
        )?,
    );

    let gate = layers::GateParams::init(4, &mut r);
    let mut gated_inputs = res_inputs.clone();
    gated_inputs.push(gate.weight.clone());
    gated_inputs.push(gate.bias.clone());
    push(
        "gated_residual",
        gradcheck(
            &|tape: &mut Tape, vars: &[Var]| {
                let g = layers::GateVars {
                    weight: vars[5],
                    bias: vars[6],
                };
                let y = layers::gated_residual_block(tape, vars[0], &res_vars(vars), &g)?;
                tape.sum(y)
            },
            &gated_inputs,
            eps,
            tol,
        )?,
    );

    let attn = layers::AttnParams::init(4, &mut r);
    let xr = random_tensor(vec![3, 4], &mut r);
    push(
        "self_attention",
        gradcheck(
            &|tape: &mut Tape, vars: &[Var]| {
                let p = layers::AttnVars {
                    w_query: vars[1],
                    w_key: vars[2],
                    w_value: vars[3],
                };
                let y = layers::self_attention(tape, vars[0], &p)?;
                tape.sum(y)
            },
            &[xr, attn.w_query.clone(), attn.w_key.clone(), attn.w_value.clone()],
            eps,
            tol,
        )?,
    );

    let pa = layers::AttnParams::init(3, &mut r);
    let pv = layers::AttnParams::init(3, &mut r);
    let xa = random_tensor(vec![2, 3], &mut r);
    let xv = random_tensor(vec![4, 3], &mut r);
    push(
        "cross_modal_attention",
        gradcheck(
            &|tape: &mut Tape, vars: &[Var]| {
                let a = layers::AttnVars {
                    w_query: vars[2],
                    w_key: vars[3],
                    w_value: vars[4],
                };
                let v = layers::AttnVars {
                    w_query: vars[5],
                    w_key: vars[6],
                    w_value: vars[7],
                };
                let (va, av) = layers::cross_modal_attention(tape, vars[0], vars[1], &a, &v)?;
                let s1 = tape.sum(va)?;
                let s2 = tape.sum(av)?;
                tape.add(s1, s2)
            },
            &[
                xa,
                xv,
                pa.w_query.clone(),
                pa.w_key.clone(),
                pa.w_value.clone(),
                pv.w_query.clone(),
                pv.w_key.clone(),
                pv.w_value.clone(),
            ],
            eps,
            tol,
        )?,
    );

    let head = layers::FcParams::init(4, 3, Activation::Sigmoid, &mut r);
    push(
        "classifier",
        gradcheck(
            &|tape: &mut Tape, vars: &[Var]| {
                let p = layers::FcVars {
                    weight: vars[1],
                    bias: vars[2],
                    activation: Activation::Sigmoid,
                };
                let y = layers::classifier_head(tape, vars[0], &p)?;
                tape.sum(y)
            },
            &[x, head.weight.clone(), head.bias.clone()],
            eps,
            tol,
        )?,
    );

    Ok(rows)
}

/// End-to-end check: loss(forward(inputs)) differentiated with respect to
/// every model parameter.
pub fn end_to_end_check(
    spec: &ArchSpec,
    seed: u64,
    batch: usize,
    eps: f64,
    tol: f64,
) -> Result<GradReport> {
    let model = Model::build(spec.clone(), seed)?;
    if model.count_params() >= 10_000 {
        return Err(AvError::InvalidArgument(format!(
            "{} parameters is too many for finite differences; use smaller dims",
            model.count_params()
        )));
    }
    // Redraw inputs until every relu preactivation clears the kink by more
    // than the perturbations can move it; central differences are undefined
    // on the kink itself.
    const KINK_MARGIN: f64 = 2e-4;
    let opts = ForwardOpts {
        training: false,
        trainable: false,
        dropout_rate: 0.0,
        seed: 0,
    };
    let mut attempt = 0u64;
    let (visual, audio, labels) = loop {
        let mut r = rng::rng(rng::derive2(seed, 0x7e57, attempt));
        let visual = random_tensor(vec![batch, spec.visual_dim], &mut r);
        let audio = random_tensor(vec![batch, spec.audio_dim], &mut r);
        let labels = Tensor::new(
            vec![batch, spec.num_classes],
            (0..batch * spec.num_classes)
                .map(|_| r.gen_bool(0.5) as u8 as f64)
                .collect(),
        )
        .expect("finite");
        let mut probe = Tape::new();
        model.forward_on_tape(&mut probe, &visual, &audio, opts)?;
        if probe.relu_kink_margin() > KINK_MARGIN {
            break (visual, audio, labels);
        }
        attempt += 1;
        if attempt > 64 {
            return Err(AvError::InvalidArgument(format!(
                "{}: could not find a relu-safe evaluation point",
                spec.name.as_str()
            )));
        }
    };
    let params: Vec<Tensor> = model.params.iter().map(|p| p.tensor.clone()).collect();
    gradcheck(
        &|tape: &mut Tape, vars: &[Var]| {
            let v = tape.constant(visual.clone());
            let a = tape.constant(audio.clone());
            let probs = model.forward_with_vars(
                tape,
                vars,
                v,
                a,
                ForwardOpts {
                    training: false,
                    trainable: true,
                    dropout_rate: 0.0,
                    seed: 0,
                },
            )?;
            trainer::bce_loss(tape, probs, &labels)
        },
        &params,
        eps,
        tol,
    )
}

fn cmd_gradcheck(args: &GradcheckArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let seeds = pick(args.seeds, file, "seeds")?.unwrap_or(5);
    let eps = pick(args.eps, file, "eps")?.unwrap_or(1e-5);
    let tol = pick(args.tol, file, "tol")?.unwrap_or(1e-4);
    let visual_dim = pick(args.visual_dim, file, "visual_dim")?.unwrap_or(6);
    let audio_dim = pick(args.audio_dim, file, "audio_dim")?.unwrap_or(4);
    let hidden = pick(args.hidden, file, "hidden")?.unwrap_or(5);
    let attn = pick(args.attn, file, "attn")?.unwrap_or(4);
    let classes = pick(args.classes, file, "classes")?.unwrap_or(3);
    let batch = pick(args.batch, file, "batch")?.unwrap_or(2);

    let archs: Vec<ArchName> = match pick(args.arch.clone(), file, "arch")? {
        Some(name) => vec![ArchName::parse(&name)?],
        None => crate::models::ALL_ARCHS.to_vec(),
    };

    let mut rows: Vec<CheckRow> = Vec::new();
    for seed in 0..seeds as u64 {
        rows.extend(layer_checks(seed, eps, tol)?);
    }
    for &arch in &archs {
        let spec =
            ArchSpec::defaults(arch).with_dims(visual_dim, audio_dim, hidden, attn, classes);
        for seed in 0..seeds as u64 {
            rows.push(CheckRow {
                subject: format!("model:{}", arch.as_str()),
                seed,
                report: end_to_end_check(&spec, seed, batch, eps, tol)?,
            });
        }
    }

    let mut failures = 0;
    for row in &rows {
        if !row.report.pass || !quiet {
            println!(
                "{:<34} seed {:>2}  {}  {}",
                row.subject,
                row.seed,
                if row.report.pass { "PASS" } else { "FAIL" },
                row.report.describe()
            );
        }
        if !row.report.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(AvError::InvalidArgument(format!(
            "{failures} of {} gradient checks failed",
            rows.len()
        )));
    }
    if !quiet {
        println!("all {} gradient checks passed (eps {eps}, tol {tol})", rows.len());
    }
    Ok(())
}

// ── list ─────────────────────────────────────────────────────────────

fn cmd_list() -> Result<()> {
    println!("{:<26} {:>10}  {}", "architecture", "params(M)", "description");
    for info in list_architectures() {
        let count = plan_for(&info.default_spec)?.count_params();
        println!(
            "{:<26} {:>10.1}  {}",
            info.name.as_str(),
            count as f64 / 1e6,
            info.description
        );
    }
    Ok(())
}
