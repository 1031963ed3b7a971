//! `lsa`: data generation, training, evaluation, sweeps and diagnostics.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 on runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsa_core::config::Config;
use lsa_core::data::{majority_rate, Dataset, Family};
use lsa_core::diagnostics::{dump_attention, gradcheck_seeds, Component};
use lsa_core::encoder::Vocabulary;
use lsa_core::model::ParamFilter;
use lsa_core::plan::{parse_placements, ArchGeometry, ModulationKind};
use lsa_core::train::report::RunStatus;
use lsa_core::train::{evaluate, sweep, train, TrainSettings};
use lsa_core::{checkpoint, Error};

#[derive(Parser, Debug)]
#[command(name = "lsa", version, about = "Language-modulated self-attention experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// `key=value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Model and shuffling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact of the command.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the train and eval splits with their vocabulary.
    GenData,
    /// Train one model and write its report, loss curve and best checkpoint.
    Train,
    /// Evaluate a checkpoint on the eval split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every placement for every configured seed and tabulate.
    Sweep {
        /// Placement set such as `S3:B1,3,5`; repeatable.
        #[arg(long = "sa", value_name = "PLACEMENTS")]
        placements: Vec<String>,
        /// Leave out the attention-free baseline row.
        #[arg(long)]
        no_baseline: bool,
    },
    /// Count parameters, analytically for a named architecture.
    Params {
        /// resnet34, resnet152 or desk.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long = "sa", value_name = "PLACEMENTS")]
        placements: Option<String>,
        /// all, sa_only or modulation_only.
        #[arg(long, default_value = "sa_only")]
        filter: String,
        /// Question encoding width used by analytic modulator counts.
        #[arg(long)]
        h_dim: Option<usize>,
    },
    /// Compare autodiff gradients of a component with central differences.
    Gradcheck {
        #[arg(long)]
        component: String,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Write every attention distribution of a forward pass.
    AttnDump {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of eval samples to run.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

fn resolve(common: &Common) -> Result<Config, Error> {
    let mut cfg = Config::default();
    if let Some(path) = &common.config {
        cfg = Config::load(path)?;
    }
    for kv in &common.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &common.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn millions(n: usize) -> String {
    format!("{:.3}M", n as f64 / 1e6)
}

/// Builds the model and loads `dir` into it, preferring the vocabulary
/// stored next to the weights.
fn load_model(cfg: &Config, dir: &Path) -> Result<(Dataset, lsa_core::model::VqaModel), Error> {
    let mut data = cfg.dataset()?;
    let vocab = dir.join(lsa_core::data::VOCAB_FILE);
    if vocab.exists() {
        data.vocab = Vocabulary::load(&vocab)?;
    }
    let mut model = cfg.build_model(&data)?;
    checkpoint::restore(&mut model.store, &checkpoint::load(dir)?, true)?;
    Ok((data, model))
}

fn run(cli: Cli) -> Result<bool, Error> {
    let cfg = resolve(&cli.common)?;
    let out = cfg.out_dir.clone();
    let header = cfg.header();
    match cli.command {
        Command::GenData => {
            let data = cfg.dataset()?;
            data.save(&out, &header)?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            println!(
                "wrote {} train and {} eval samples to {} (vocabulary {}, eval majority {:.4})",
                data.train.len(),
                data.eval.len(),
                out.display(),
                data.vocab.size(),
                majority_rate(&data.eval)
            );
        }
        Command::Train => {
            let data = cfg.dataset()?;
            let mut model = cfg.build_model(&data)?;
            let outcome = train(&mut model, &data, &TrainSettings::from_config(&cfg), &cfg.hash())?;
            let report = &outcome.report;
            write(&out.join("config.txt"), &cfg.to_text())?;
            write(&out.join("report.txt"), &report.to_text(true))?;
            write(&out.join("loss_curve.txt"), &report.loss_curve_text())?;
            let ckpt = out.join("checkpoint");
            checkpoint::save(&ckpt, &outcome.best, &header)?;
            data.vocab.save(&ckpt.join(lsa_core::data::VOCAB_FILE))?;
            for e in &report.epochs {
                println!("epoch {:>3}  loss {:.4}  eval {:.2}%", e.epoch, e.train_loss, 100.0 * e.eval.tally.accuracy());
            }
            if let RunStatus::Diverged(reason) = &report.status {
                eprintln!("error: training diverged: {reason}");
                return Ok(false);
            }
            if let Some(e) = report.final_eval() {
                println!("best eval accuracy {:.2}% (majority {:.2}%)", 100.0 * e.tally.accuracy(), 100.0 * report.majority_rate);
            }
        }
        Command::Eval { checkpoint: dir } => {
            let (data, model) = load_model(&cfg, &dir)?;
            let r = evaluate(&model, &data, &data.eval, 64)?;
            let mut s = String::new();
            for h in &header {
                let _ = writeln!(s, "# {h}");
            }
            let _ = writeln!(s, "eval_acc: {}", r.tally.accuracy());
            for f in Family::ALL {
                if let Some(a) = r.tally.family_accuracy(f) {
                    let _ = writeln!(s, "eval_acc.{f}: {a}");
                }
            }
            print!("{s}");
        }
        Command::Sweep { placements, no_baseline } => {
            let sets = if placements.is_empty() && !cfg.plan.placements.is_empty() {
                vec![cfg.plan.placements.clone()]
            } else {
                placements.iter().map(|p| parse_placements(p)).collect::<Result<Vec<_>, _>>()?
            };
            if sets.is_empty() && no_baseline {
                return Err(Error::Config("nothing to sweep: give --sa or keep the baseline".into()));
            }
            let data = cfg.dataset()?;
            let table = sweep(&cfg, &sets, !no_baseline, &data)?;
            write(&out.join("sweep.txt"), &table.to_text())?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            for row in &table.rows {
                for (seed, run) in &row.runs {
                    let name = format!("{}-seed{seed}.txt", lsa_core::plan::format_placements(&row.placements).replace([':', ';', ','], "_"));
                    match run {
                        Ok(r) => write(&out.join("runs").join(name), &r.to_text(true))?,
                        Err(e) => eprintln!("warning: {} seed {seed} failed: {e}", row.label),
                    }
                }
            }
            print!("{}", table.to_text());
        }
        Command::Params { arch, placements, filter, h_dim } => {
            let filter: ParamFilter = filter.parse()?;
            let places = match &placements {
                Some(p) => parse_placements(p)?,
                None => cfg.plan.placements.clone(),
            };
            let n = match arch {
                Some(name) => {
                    let geo = ArchGeometry::named(&name)?;
                    let h = h_dim.unwrap_or(cfg.h_dim);
                    let sa = geo.sa_params(&places, cfg.plan.c_bar_ratio)?;
                    let modulation = match cfg.plan.modulation {
                        ModulationKind::None => 0,
                        kind => geo.modulation_params(&places, kind, h, cfg.plan.proj_dim)?,
                    };
                    match filter {
                        ParamFilter::SaOnly => sa,
                        ParamFilter::ModulationOnly => modulation,
                        ParamFilter::All => return Err(Error::Config("analytic mode counts sa_only or modulation_only".into())),
                    }
                }
                None => {
                    let mut c = cfg.clone();
                    c.plan.placements = places;
                    if let Some(h) = h_dim {
                        c.h_dim = h;
                    }
                    let data = c.dataset()?;
                    c.build_model(&data)?.count_parameters(filter)
                }
            };
            println!("{n} ({})", millions(n));
        }
        Command::Gradcheck { component, runs } => {
            let component: Component = component.parse()?;
            if runs == 0 {
                return Err(Error::Config("--runs must be positive".into()));
            }
            let r = gradcheck_seeds(component, cfg.seed..cfg.seed + runs)?;
            println!("component: {component}");
            println!("seeds: {}..{}", cfg.seed, cfg.seed + runs - 1);
            println!("coords: {}", r.coords);
            println!("skipped_at_kinks: {}", r.skipped);
            println!("max_rel_error: {:.3e}", r.max_rel_error);
            if let Some(w) = &r.worst {
                println!("worst: {}[{}] analytic {:.6e} numeric {:.6e}", w.param, w.index, w.analytic, w.numeric);
            }
            println!("tolerance: {:.0e}", r.tolerance);
            println!("result: {}", if r.passed() { "pass" } else { "FAIL" });
            return Ok(r.passed());
        }
        Command::AttnDump { checkpoint: dir, count } => {
            let (data, model) = match &dir {
                Some(d) => load_model(&cfg, d)?,
                None => {
                    let data = cfg.dataset()?;
                    let model = cfg.build_model(&data)?;
                    (data, model)
                }
            };
            let take = count.min(data.eval.len());
            if take == 0 {
                return Err(Error::Config("--count must be positive".into()));
            }
            let target = out.join("attention");
            let entries = dump_attention(&model, &data, &data.eval[..take], &target, &header)?;
            println!("wrote {} maps for {take} samples to {}", entries.len(), target.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
