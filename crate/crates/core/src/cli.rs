//! Command-line front end. The `dcseg` binary only forwards to [`run`].

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval;
use crate::maxflow::BinaryEnergy;
use crate::report::{self, CONFIG_FILE, HISTORY_FILE};
use crate::trainer::{self, Method};

pub const MODEL_FILE: &str = "model.ckpt";
pub const MU_GRID: &str = "0.01,0.1,1,10";

#[derive(Debug, Parser)]
#[command(name = "dcseg", version, about = "Weakly supervised segmentation with discrete proposals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with seed annotations.
    Generate {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a network and write history, checkpoint and resolved config.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Per-image CSV path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run histories by method and epsilon.
    Report {
        /// Run directories, or parents whose subdirectories are runs.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Plot-ready per-epoch CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Minimize a binary submodular energy read from a text file.
    SolveEnergy { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct ConfigSource {
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Dataset directory written by `generate`; generated in memory when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Coupling weight: penalty weight for `penalty`, otherwise both ADMM weights.
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated μ values, each trained under `out/mu_<value>`.
    /// Without a value the grid 0.01,0.1,1,10 is used.
    #[arg(long, conflicts_with = "mu", num_args = 0..=1, default_missing_value = MU_GRID)]
    pub mu_sweep: Option<String>,
}

impl ConfigSource {
    fn resolve(&self) -> Result<Config> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => Config::load(path)?,
            (None, Some(name)) => Config::preset(name)?,
            (None, None) => Config::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.clone(), "expected KEY=VALUE"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_mu(cfg: &mut Config, mu: f64) {
    if cfg.train.method == Method::Penalty {
        cfg.train.penalty_mu = mu;
    } else {
        cfg.train.mu_hat = mu;
        cfg.train.mu_tilde = mu;
    }
}

fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Error::config(
            "out",
            format!("{} is not empty (use --force)", dir.display()),
        ));
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn generate(source: &ConfigSource, out: &Path, force: bool) -> Result<()> {
    let cfg = source.resolve()?;
    prepare_out(out, force)?;
    let (ds, _) = Dataset::generate(&cfg.data)?;
    ds.save(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    eprintln!(
        "wrote {} training and {} validation samples to {}",
        ds.train.len(),
        ds.val.len(),
        out.display()
    );
    Ok(())
}

fn train_one(cfg: &Config, ds: &Dataset, out: &Path) -> Result<f64> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let mut hist_file = fs::File::create(out.join(HISTORY_FILE))?;
    writeln!(hist_file, "{}", trainer::HISTORY_HEADER)?;
    let mut io_err = None;
    let (params, history) = trainer::train_with(&ds.train, &ds.val, &cfg.train, |_, rec| {
        let line = trainer::History { records: vec![*rec] }.to_csv();
        let row = line.lines().nth(1).unwrap_or_default();
        if let Err(e) = writeln!(hist_file, "{row}") {
            io_err.get_or_insert(e);
        }
        eprintln!(
            "epoch {:>3}  ce {:.4}  val dice {:.4}  size ratio {:.3}  violations {}",
            rec.epoch, rec.loss_ce, rec.val_dice_mean, rec.size_ratio_mean, rec.violations
        );
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    checkpoint::save(&params, &out.join(MODEL_FILE))?;
    Ok(history.records.last().map_or(f64::NAN, |r| r.val_dice_mean))
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut cfg = args.source.resolve()?;
    if let Some(m) = args.method {
        cfg.train.method = m;
    }
    if let Some(e) = args.epsilon {
        cfg.train.epsilon = e;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(mu) = args.mu {
        set_mu(&mut cfg, mu);
    }
    cfg.validate()?;
    let ds = match &args.data {
        Some(dir) => {
            // record the generator settings the dataset was actually built with
            if let Ok(text) = fs::read_to_string(dir.join(CONFIG_FILE)) {
                cfg.data = Config::parse(&text)?.data;
            }
            Dataset::load(dir)?
        }
        None => Dataset::generate(&cfg.data)?.0,
    };
    match &args.mu_sweep {
        None => {
            train_one(&cfg, &ds, &args.out)?;
        }
        Some(list) => {
            let mus = list
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config("mu-sweep", format!("cannot parse `{v}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut best: Option<(f64, f64)> = None;
            for mu in mus {
                let mut c = cfg.clone();
                set_mu(&mut c, mu);
                c.validate()?;
                let dice = train_one(&c, &ds, &args.out.join(format!("mu_{mu}")))?;
                if best.is_none_or(|(_, d)| dice > d) {
                    best = Some((mu, dice));
                }
            }
            if let Some((mu, dice)) = best {
                fs::write(args.out.join("best.txt"), format!("mu = {mu}\nval_dice_mean = {dice}\n"))?;
                eprintln!("best mu {mu} (val dice {dice:.4})");
            }
        }
    }
    Ok(())
}

fn evaluate(model: &Path, data: &Path, split: &str, epsilon: f64, out: Option<&Path>) -> Result<()> {
    let params = checkpoint::load(model)?;
    let ds = Dataset::load(data)?;
    let samples = match split {
        "train" => &ds.train,
        "val" => &ds.val,
        other => return Err(Error::config("split", format!("unknown split `{other}`"))),
    };
    let records = eval::evaluate(&params, samples, epsilon)?;
    let csv = eval::to_csv(&records);
    match out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn report_cmd(roots: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut dirs = Vec::new();
    for r in roots {
        let found = report::discover(r)?;
        if found.is_empty() {
            dirs.push(r.clone());
        }
        dirs.extend(found);
    }
    let collected = report::collect(&dirs);
    for (path, why) in &collected.missing {
        eprintln!("warning: missing {}: {why}", path.display());
    }
    let groups = report::aggregate(&collected.runs);
    for g in &groups {
        if let Some(longest) = g.truncated_from {
            eprintln!(
                "warning: {} eps={} runs disagree on epoch count; truncated from {longest} to {}",
                g.method,
                g.epsilon,
                g.rows.len()
            );
        }
    }
    print!("{}", report::summary(&groups));
    if let Some(p) = out {
        fs::write(p, report::to_csv(&groups))?;
    }
    Ok(())
}

fn solve_energy(file: &Path) -> Result<()> {
    let text = fs::read_to_string(file)?;
    let energy = BinaryEnergy::parse_text(&text)?;
    let labels = energy.minimize()?.labels;
    let s: String = labels.iter().map(|&l| if l == 1 { '1' } else { '0' }).collect();
    println!("{s}");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { source, out, force } => generate(source, out, *force),
        Command::Train(args) => train(args),
        Command::Evaluate {
            model,
            data,
            split,
            epsilon,
            out,
        } => evaluate(model, data, split, *epsilon, out.as_deref()),
        Command::Report { runs, out } => report_cmd(runs, out.as_deref()),
        Command::SolveEnergy { file } => solve_energy(file),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
