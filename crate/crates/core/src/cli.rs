//! Command-line front end: `train`, `eval`, `gendata` and `selfcheck`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{gen_synthetic, load_idx, write_idx, Dataset, SyntheticTask, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::logic::TriVal;
use crate::model::{load_checkpoint, save_checkpoint, Metrics};
use crate::reference;
use crate::train::train;
use crate::variation::oracle::{certify_all, CertificationReport, DEFAULT_SEED};
use crate::variation::Calculus;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_COUNTEREXAMPLE: u8 = 3;

/// File names written by `gendata` and read by `eval --data DIR`.
pub const IDX_FILES: [(&str, &str); 2] = [
    ("train-images.idx", "train-labels.idx"),
    ("test-images.idx", "test-labels.idx"),
];

#[derive(Debug, Parser)]
#[command(name = "boolnet", version, about = "Boolean neural networks trained with logic backpropagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.csv, report.json and model.blnb.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective config as JSON and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Evaluate a checkpoint on an IDX dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// A directory written by `gendata`, or an IDX image file (with --labels).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: u8,
    },
    /// Write a synthetic task as IDX files.
    Gendata {
        /// xor2, parityN, parity:N, teacher:M:C or teacher:M:C:SEED.
        #[arg(long)]
        task: String,
        #[arg(long)]
        out: PathBuf,
        /// Teacher seed when the task name does not carry one.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        train_size: usize,
        #[arg(long, default_value_t = 1000)]
        test_size: usize,
    },
    /// Check the logic tables and certify the variation calculus.
    Selfcheck {
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Corrupt one XNOR table entry; used to test that certification fails.
        #[arg(long, hide = true)]
        inject_xnor_fault: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::ShapeMismatch(_)
        | Error::LengthMismatch { .. }
        | Error::LabelOutOfRange { .. }
        | Error::InvalidSchedule(_)
        | Error::IndexOutOfRange { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

/// Caps the worker pool from `BOOLNET_THREADS`, when set.
fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("BOOLNET_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("BOOLNET_THREADS must be a positive integer, got {v:?}")))?;
        // Fails only if a pool already exists, in which case it stays.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train {
            config,
            out,
            print_config,
        } => cmd_train(&config, out, print_config),
        Command::Eval {
            ckpt,
            data,
            labels,
            split,
            threshold,
        } => cmd_eval(&ckpt, &data, labels.as_deref(), split, threshold),
        Command::Gendata {
            task,
            out,
            seed,
            train_size,
            test_size,
        } => cmd_gendata(&task, &out, seed, train_size, test_size),
        Command::Selfcheck {
            json,
            seed,
            inject_xnor_fault,
        } => cmd_selfcheck(json.as_deref(), seed, inject_xnor_fault),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    out: &'a Path,
    iterations: u64,
    epochs: u64,
    last_epoch_loss: f64,
    train_accuracy: Option<f64>,
    test_accuracy: f64,
    reached_target_at: Option<u64>,
    total_flips: &'a [u64],
    seconds: f64,
}

fn cmd_train(config: &Path, out: Option<PathBuf>, print_config: bool) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    if print_config {
        emit(&format!("{}\n", cfg.to_json()))?;
        return Ok(0);
    }
    let out = out
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Config("no output directory (use --out or set \"out\")".into()))?;
    let data = cfg.load_data()?;
    let mut model = cfg.build_model(&data)?;
    let mut opt = cfg.build_optimizer()?;
    let report = train(&mut model, &mut opt, &data, &cfg.train, cfg.optimizer.head_lr)?;

    fs::create_dir_all(&out)?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    save_checkpoint(&model, &opt, &out.join("model.blnb"))?;

    let last = report.final_row();
    print_json(&TrainSummary {
        out: &out,
        iterations: last.iteration,
        epochs: last.epoch,
        last_epoch_loss: last.loss,
        train_accuracy: last.train_accuracy,
        test_accuracy: last.test_accuracy,
        reached_target_at: report.reached_target_at,
        total_flips: &report.total_flips,
        seconds: report.seconds,
    })?;
    Ok(0)
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("file not found: {}", p.display())))
    }
}

fn load_eval_data(data: &Path, labels: Option<&Path>, split: SplitArg, threshold: u8) -> Result<Dataset> {
    let (images, labels) = if data.is_dir() {
        let (i, l) = IDX_FILES[match split {
            SplitArg::Train => 0,
            SplitArg::Test => 1,
        }];
        (data.join(i), data.join(l))
    } else {
        let labels = labels.ok_or_else(|| Error::Config("--labels is required when --data is a file".into()))?;
        (data.to_path_buf(), labels.to_path_buf())
    };
    require_file(&images)?;
    require_file(&labels)?;
    load_idx(&images, &labels, threshold)
}

fn cmd_eval(ckpt: &Path, data: &Path, labels: Option<&Path>, split: SplitArg, threshold: u8) -> Result<u8> {
    require_file(ckpt)?;
    let (model, _) = load_checkpoint(ckpt)?;
    let data = load_eval_data(data, labels, split, threshold)?;
    let metrics: Metrics = model.evaluate(&data)?;
    print_json(&metrics)?;
    Ok(0)
}

#[derive(Serialize)]
struct GendataSummary {
    task: SyntheticTask,
    features: usize,
    classes: usize,
    train_rows: usize,
    test_rows: usize,
    files: Vec<PathBuf>,
}

fn cmd_gendata(task: &str, out: &Path, seed: u64, train_size: usize, test_size: usize) -> Result<u8> {
    let name = if task.starts_with("teacher:") && task.matches(':').count() == 2 {
        format!("{task}:{seed}")
    } else {
        task.to_string()
    };
    let task: SyntheticTask = name.parse()?;
    let data = gen_synthetic(task, train_size, test_size)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (set, (i, l)) in [&data.train, &data.test].into_iter().zip(IDX_FILES) {
        let (i, l) = (out.join(i), out.join(l));
        write_idx(set, &i, &l)?;
        files.extend([i, l]);
    }
    print_json(&GendataSummary {
        task,
        features: data.train.features(),
        classes: data.train.classes,
        train_rows: data.train.len(),
        test_rows: data.test.len(),
        files,
    })?;
    Ok(0)
}

#[derive(Serialize)]
pub struct SelfcheckReport {
    pub passed: bool,
    pub table_entries: usize,
    pub table_mismatches: Vec<reference::Mismatch>,
    #[serde(flatten)]
    pub certification: CertificationReport,
}

pub fn selfcheck(seed: u64, inject_xnor_fault: bool) -> SelfcheckReport {
    let mut calc = Calculus::standard();
    if inject_xnor_fault {
        calc = calc.with_xnor_entry(TriVal::T, TriVal::T, TriVal::F);
    }
    let table_mismatches = reference::check_all();
    let certification = certify_all(&calc, seed);
    SelfcheckReport {
        passed: table_mismatches.is_empty() && certification.passed(),
        table_entries: reference::entry_count(),
        table_mismatches,
        certification,
    }
}

fn cmd_selfcheck(json: Option<&Path>, seed: u64, inject_xnor_fault: bool) -> Result<u8> {
    let report = selfcheck(seed, inject_xnor_fault);
    let mut text = format!(
        "tables: {} entries, {} mismatches\n",
        report.table_entries,
        report.table_mismatches.len()
    );
    for m in &report.table_mismatches {
        let _ = writeln!(text, "  {} [{}]: expected {}, got {}", m.table, m.entry, m.expected, m.actual);
    }
    text += &report.certification.to_text();
    if report.passed {
        text += "selfcheck passed\n";
    }
    emit(&text)?;
    if let Some(path) = json {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if report.passed {
        Ok(0)
    } else {
        let failed: Vec<&str> = report.certification.failed_rules().map(|r| r.rule.as_str()).collect();
        eprintln!(
            "selfcheck failed: {} table mismatches; counterexamples in {}",
            report.table_mismatches.len(),
            if failed.is_empty() { "no rules".to_string() } else { failed.join(", ") }
        );
        Ok(EXIT_COUNTEREXAMPLE)
    }
}
