//! The `moi-mixer` command line: `prepare`, `synth`, `train`, `evaluate`, `count` and `grid`.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 1 for internal failures.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

use crate::dataset::{
    core_filter, load_dataset, parse_tsv, split_leave_one_out, synth_generate, write_dataset,
    EvalTarget, SynthRule,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate_model, flops_table, grid_experiment, pop_baseline, select_hyperparameters, EvalReport,
    FLOPS_CONVENTION,
};
use crate::model::{load_checkpoint, rounded_millions, save_checkpoint, MoiMixerModel};
use crate::training::{train, TrainConfig};

pub const CONFIG_RESOLVED: &str = "config.resolved";
pub const LOG_FILE: &str = "log.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Parser)]
#[command(
    name = "moi-mixer",
    version,
    about = "MOI-Mixer sequential recommendation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter, split and index a `user<TAB>item<TAB>timestamp` log.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = crate::dataset::MIN_INTERACTIONS)]
        min_count: usize,
    },
    /// Write a synthetic processed dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        items: usize,
        #[arg(long, default_value_t = 500)]
        users: usize,
        #[arg(long, default_value_t = 8)]
        min_len: usize,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
        #[arg(long, value_enum, default_value_t = Rule::Successor)]
        rule: Rule,
        #[arg(long)]
        seed: u64,
    },
    /// Train a model on a processed dataset and save a checkpoint.
    Train {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Pick lr and weight decay on validation NDCG@10 before the final run.
        #[arg(long)]
        tune: bool,
    },
    /// Rank held-out items against popularity-sampled negatives.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, required_unless_present = "pop", conflicts_with = "pop")]
        checkpoint: Option<PathBuf>,
        /// Score by training popularity instead of a model.
        #[arg(long)]
        pop: bool,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long, default_value_t = crate::dataset::NUM_NEGATIVES)]
        negatives: usize,
    },
    /// Encoder parameters and FLOPs for the configured model across sequence lengths.
    Count {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and test one model per (k_s, k_c) pair.
    Grid {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2])]
        token_orders: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
        channel_orders: Vec<usize>,
    },
}

#[derive(Debug, Args)]
struct Settings {
    /// `key = value` file of model and training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set hidden=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Rule {
    Successor,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Valid,
    Test,
}

impl Split {
    fn target(self) -> EvalTarget {
        match self {
            Split::Valid => EvalTarget::Valid,
            Split::Test => EvalTarget::Test,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for problems with what the user supplied, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Input(_)
        | Error::Format { .. }
        | Error::EmptyDataset
        | Error::Io { .. } => 2,
        Error::Shape { .. } | Error::Capacity(_) => 1,
    }
}

struct RunDir {
    path: PathBuf,
    log: BufWriter<File>,
}

impl RunDir {
    /// Creates `path`, writes the resolved configuration and opens `log.txt`.
    fn create(path: &Path, resolved: &str) -> Result<Self> {
        fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        write_file(&path.join(CONFIG_RESOLVED), resolved)?;
        let log_path = path.join(LOG_FILE);
        let log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        Ok(RunDir {
            path: path.to_path_buf(),
            log: BufWriter::new(log),
        })
    }

    fn note(&mut self, line: &str) -> Result<()> {
        writeln!(self.log, "{line}").map_err(|e| Error::io(self.path.join(LOG_FILE), e))
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        write_file(&self.path.join(name), content)
    }

    fn finish(mut self) -> Result<()> {
        self.log
            .flush()
            .map_err(|e| Error::io(self.path.join(LOG_FILE), e))
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Prepare {
            input,
            out,
            min_count,
        } => {
            if min_count == 0 {
                return Err(Error::Config("min_count must be at least 1".into()));
            }
            let raw = parse_tsv(&input)?;
            let filtered = core_filter(&raw, min_count)?;
            let ds = split_leave_one_out(&filtered)?;
            let mut run = RunDir::create(
                &out,
                &format!("input = {}\nmin_count = {min_count}\n", input.display()),
            )?;
            write_dataset(&ds, &out)?;
            run.note(&format!(
                "read {} interactions, kept {}",
                raw.len(),
                filtered.len()
            ))?;
            run.note(&ds.stats().to_string())?;
            println!("{}", ds.stats());
            run.finish()
        }
        Command::Synth {
            out,
            items,
            users,
            min_len,
            max_len,
            rule,
            seed,
        } => {
            let rule = match rule {
                Rule::Successor => SynthRule::Successor,
                Rule::Uniform => SynthRule::Uniform,
            };
            let ds = synth_generate(items, users, min_len, max_len, rule, seed)?;
            let mut run = RunDir::create(
                &out,
                &format!("items = {items}\nusers = {users}\nmin_len = {min_len}\nmax_len = {max_len}\nrule = {rule}\nseed = {seed}\n"),
            )?;
            write_dataset(&ds, &out)?;
            run.note(&ds.stats().to_string())?;
            println!("{}", ds.stats());
            run.finish()
        }
        Command::Train {
            settings,
            data,
            out,
            seed,
            tune,
        } => cmd_train(&settings, &data, &out, seed, tune),
        Command::Evaluate {
            data,
            out,
            seed,
            checkpoint,
            pop,
            split,
            negatives,
        } => cmd_evaluate(
            &data,
            &out,
            seed,
            checkpoint.as_deref(),
            pop,
            split,
            negatives,
        ),
        Command::Count { settings, out } => cmd_count(&settings, out.as_deref()),
        Command::Grid {
            settings,
            data,
            out,
            seed,
            token_orders,
            channel_orders,
        } => {
            let mut config = RunConfig::resolve(settings.config.as_deref(), &settings.overrides)?;
            config.train.seed = seed;
            let ds = load_dataset(&data)?;
            config.model.num_items = ds.num_items();
            config.validate()?;
            let mut resolved = config.to_text();
            writeln!(
                resolved,
                "# token_orders = {token_orders:?}\n# channel_orders = {channel_orders:?}"
            )
            .unwrap();
            let mut run = RunDir::create(&out, &resolved)?;
            let table = grid_experiment(
                &ds,
                &config.model,
                &token_orders,
                &channel_orders,
                &config.train,
            )?;
            let mut cells = String::from("k_s\tk_c\tparams\thr@1\thr@10\tndcg@10\n");
            for c in &table.cells {
                c.report.check_invariants()?;
                writeln!(
                    cells,
                    "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                    c.token_order,
                    c.channel_order,
                    c.params.weights,
                    c.report.hr1,
                    c.report.hr10,
                    c.report.ndcg10
                )
                .unwrap();
                run.note(&format!(
                    "k_s={} k_c={} ndcg@10={:.6}",
                    c.token_order, c.channel_order, c.report.ndcg10
                ))?;
            }
            run.write("grid.tsv", &table.to_tsv())?;
            run.write("cells.tsv", &cells)?;
            print!("{}", table.to_tsv());
            run.finish()
        }
    }
}

fn cmd_train(settings: &Settings, data: &Path, out: &Path, seed: u64, tune: bool) -> Result<()> {
    let mut config = RunConfig::resolve(settings.config.as_deref(), &settings.overrides)?;
    config.train.seed = seed;
    let ds = load_dataset(data)?;
    config.model.num_items = ds.num_items();
    config.validate()?;
    let mut run = RunDir::create(out, &config.to_text())?;
    if tune {
        let result = select_hyperparameters(
            &ds,
            &config.model,
            &config.train,
            &TrainConfig::LR_GRID,
            &TrainConfig::WD_GRID,
        )?;
        let mut tsv = String::from("lr\tweight_decay\tvalid_ndcg@10\n");
        for (lr, wd, ndcg) in &result.trials {
            writeln!(tsv, "{lr}\t{wd}\t{ndcg:.6}").unwrap();
        }
        run.write("tuning.tsv", &tsv)?;
        config.train = result.best;
        run.write(CONFIG_RESOLVED, &config.to_text())?;
    }
    let mut model = MoiMixerModel::new(config.model.clone(), seed)?;
    let log = train(
        &mut model,
        &ds.train_sequences(),
        &config.train,
        Some(&mut run.log),
    )?;
    save_checkpoint(&model, &out.join(CHECKPOINT_DIR))?;
    if let Some(last) = log.epochs.last() {
        println!(
            "trained {} epochs, final loss {:.6}",
            log.epochs.len(),
            last.loss
        );
    }
    run.finish()
}

fn cmd_evaluate(
    data: &Path,
    out: &Path,
    seed: u64,
    checkpoint: Option<&Path>,
    pop: bool,
    split: Split,
    negatives: usize,
) -> Result<()> {
    let ds = load_dataset(data)?;
    let model = checkpoint.map(load_checkpoint).transpose()?;
    let mut resolved = format!(
        "seed = {seed}\nsplit = {}\nnegatives = {negatives}\n",
        split.name()
    );
    match &model {
        Some(m) => {
            for (k, v) in m.config().to_pairs() {
                writeln!(resolved, "{k} = {v}").unwrap();
            }
        }
        None => resolved.push_str("baseline = pop\n"),
    }
    let mut run = RunDir::create(out, &resolved)?;
    let report: EvalReport = match (&model, pop) {
        (Some(m), false) => evaluate_model(m, &ds, split.target(), negatives, seed)?,
        (None, true) => pop_baseline(&ds, split.target(), negatives, seed),
        _ => {
            return Err(Error::Config(
                "pass exactly one of --checkpoint or --pop".into(),
            ))
        }
    };
    report
        .check_invariants()
        .map_err(|e| Error::Capacity(e.to_string()))?;
    let ranks: String = report.ranks.iter().map(|r| format!("{r}\n")).collect();
    run.write("report.txt", &report.to_table())?;
    run.write("report.tsv", &report.to_kv())?;
    run.write("ranks.tsv", &ranks)?;
    run.note(&format!(
        "evaluated {} users on the {} split",
        report.ranks.len(),
        split.name()
    ))?;
    print!("{}", report.to_table());
    run.finish()
}

fn cmd_count(settings: &Settings, out: Option<&Path>) -> Result<()> {
    let config = RunConfig::resolve(settings.config.as_deref(), &settings.overrides)?;
    config.validate()?;
    let m = &config.model;
    let p = m.encoder_param_count();
    let mut text = format!("# {FLOPS_CONVENTION}\n");
    writeln!(
        text,
        "params\t{}\t{:.2}M\t(all trainable {})",
        p.weights,
        rounded_millions(p.weights, 2),
        p.total()
    )
    .unwrap();
    writeln!(
        text,
        "flops\ts={}\t{}",
        m.max_len,
        crate::evaluation::count_flops(m)
    )
    .unwrap();
    text.push_str("s\tparams\tflops\n");
    for (s, params, flops) in flops_table(m) {
        writeln!(text, "{s}\t{}\t{flops}", params.weights).unwrap();
    }
    print!("{text}");
    if let Some(dir) = out {
        let mut run = RunDir::create(dir, &config.to_text())?;
        run.write("count.tsv", &text)?;
        run.note("counted encoder parameters and FLOPs")?;
        run.finish()?;
    }
    Ok(())
}
