//! Command-line front end: training, prediction, evaluation and synthesis.
//!
//! Errors surface as a single `error[<category>]: <message>` line on stderr
//! with a non-zero exit status.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::data::{self, InstanceSpec, SampleDataset, SyntheticSpec};
use crate::error::{read_file, write_file, Error, Result};
use crate::eval;
use crate::feature_select::{self, FeatureSelectModel, FeatureSelectOptions, IterationRecord};
use crate::kernels::KernelKind;
use crate::qp::SolverOptions;
use crate::region_select::{self, Bag, BagScoreMode, RegionSelectModel, RegionSelectOptions};

#[derive(Debug, Parser)]
#[command(name = "kselect", version, about = "Feature and region selection for additive-kernel SVMs")]
pub struct Cli {
    /// TOML file with defaults for the shared options; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// Per-bin kernel.
    #[arg(long, global = true, value_enum)]
    pub kernel: Option<KernelArg>,
    /// SVM penalty.
    #[arg(long = "C", global = true)]
    pub c: Option<f64>,
    /// KKT tolerance of the inner dual solver.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub step_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_outer: Option<usize>,
    /// Scale every histogram to unit L1 mass before use.
    #[arg(long = "normalize-l1", global = true)]
    pub normalize_l1: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Linear,
    Chi2,
    Intersection,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Linear => KernelKind::Linear,
            KernelArg::Chi2 => KernelKind::ChiSquare,
            KernelArg::Intersection => KernelKind::Intersection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Weighted,
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthTask {
    Features,
    Instances,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Train bin weights and an SVM on a sample CSV.
    FsTrain {
        /// Training log path (defaults to `<model>.log.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a sample CSV with a feature-selection model.
    FsPredict,
    /// Train instance weights and an SVM on a bag file.
    RsTrain {
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score bags (and their instances) with a region-selection model.
    RsPredict {
        /// Bag aggregation; `weighted` only works for positive training bags.
        #[arg(long, value_enum, default_value = "mean")]
        mode: ModeArg,
        /// Per-instance score CSV.
        #[arg(long)]
        instance_output: Option<PathBuf>,
    },
    /// Average precision and PR curve from a score CSV with `label` and `score` columns.
    Eval,
    /// Write a seeded planted-signal dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "features")]
    pub task: SynthTask,
    /// Positive samples (or bags).
    #[arg(long, default_value_t = 100)]
    pub n_pos: usize,
    /// Negative samples (or bags).
    #[arg(long, default_value_t = 100)]
    pub n_neg: usize,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    /// Number of informative bins, drawn from the seed.
    #[arg(long, default_value_t = 10)]
    pub informative: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 5)]
    pub m_per_bag: usize,
    #[arg(long, default_value_t = 1)]
    pub signal_per_pos: usize,
    /// Seed for the informative-bin choice; defaults to `--seed`.
    #[arg(long)]
    pub bins_seed: Option<u64>,
}

/// Shared options as read from a `--config` TOML file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    kernel: Option<KernelArg>,
    #[serde(rename = "C")]
    c: Option<f64>,
    tol: Option<f64>,
    step_tol: Option<f64>,
    max_outer: Option<usize>,
    normalize_l1: Option<bool>,
    seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum Command {
    FsTrain { log: Option<PathBuf> },
    FsPredict,
    RsTrain { log: Option<PathBuf> },
    RsPredict { mode: BagScoreMode, instance_output: Option<PathBuf> },
    Eval,
    Synth(SynthArgs),
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub kernel: KernelKind,
    pub c: f64,
    pub tol: f64,
    pub step_tol: f64,
    pub max_outer: usize,
    pub normalize: bool,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = read_file(path)?;
                toml::from_str::<ConfigFile>(&text)
                    .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let s = cli.shared;
        let defaults = FeatureSelectOptions::default();
        let config = RunConfig {
            command: match cli.command {
                CommandArgs::FsTrain { log } => Command::FsTrain { log },
                CommandArgs::FsPredict => Command::FsPredict,
                CommandArgs::RsTrain { log } => Command::RsTrain { log },
                CommandArgs::RsPredict { mode, instance_output } => Command::RsPredict {
                    mode: match mode {
                        ModeArg::Weighted => BagScoreMode::Weighted,
                        ModeArg::Mean => BagScoreMode::Mean,
                        ModeArg::Max => BagScoreMode::Max,
                    },
                    instance_output,
                },
                CommandArgs::Eval => Command::Eval,
                CommandArgs::Synth(args) => Command::Synth(args),
            },
            kernel: s.kernel.or(file.kernel).unwrap_or(KernelArg::Chi2).into(),
            c: s.c.or(file.c).unwrap_or(1.0),
            tol: s.tol.or(file.tol).unwrap_or(defaults.solver.tol),
            step_tol: s.step_tol.or(file.step_tol).unwrap_or(defaults.step_tol),
            max_outer: s.max_outer.or(file.max_outer).unwrap_or(defaults.max_outer),
            normalize: s.normalize_l1 || file.normalize_l1.unwrap_or(false),
            seed: s.seed.or(file.seed).unwrap_or(0),
            input: s.input,
            model: s.model,
            output: s.output,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Input(format!("--C must be positive (got {})", self.c)));
        }
        if !(self.tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::Input("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            ..SolverOptions::training()
        }
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Input(format!("missing required flag --{flag}")))
    }
}

/// Executes one command; returns the text printed on stdout.
pub fn run(config: &RunConfig) -> Result<String> {
    match &config.command {
        Command::FsTrain { log } => fs_train(config, log.as_deref()),
        Command::FsPredict => fs_predict(config),
        Command::RsTrain { log } => rs_train(config, log.as_deref()),
        Command::RsPredict { mode, instance_output } => {
            rs_predict(config, *mode, instance_output.as_deref())
        }
        Command::Eval => run_eval(config),
        Command::Synth(args) => synth(config, args),
    }
}

fn load_samples(config: &RunConfig) -> Result<SampleDataset> {
    let mut d = data::load_samples(config.require(&config.input, "input")?)?;
    if config.normalize {
        d.x = d.x.iter().map(data::normalize_l1).collect();
    }
    Ok(d)
}

fn load_bags(config: &RunConfig) -> Result<data::BagFile> {
    let mut f = data::load_bag_file(config.require(&config.input, "input")?)?;
    if config.normalize {
        for bag in &mut f.bags {
            bag.instances = bag.instances.iter().map(data::normalize_l1).collect();
        }
    }
    Ok(f)
}

fn default_log(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".log.csv");
    PathBuf::from(name)
}

fn write_log(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut out = String::from("iteration,objective,step_norm,active\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.iteration, r.objective, r.step_norm, r.active);
    }
    write_file(path, out)?;
    Ok(())
}

fn fs_train(config: &RunConfig, log: Option<&Path>) -> Result<String> {
    let model_path = config.require(&config.model, "model")?;
    let d = load_samples(config)?;
    let opts = FeatureSelectOptions {
        step_tol: config.step_tol,
        max_outer: config.max_outer,
        solver: config.solver(),
        ..Default::default()
    };
    let model = feature_select::train_feature_selection(&d.x, &d.y, config.kernel, config.c, &opts)?;
    model.save(model_path)?;
    write_log(log.map_or_else(|| default_log(model_path), Path::to_path_buf).as_path(), &model.history)?;
    Ok(format!(
        "iterations,{}\nobjective,{}\nselected_features,{}\n",
        model.history.len() - 1,
        model.objective(),
        model.selected_features()
    ))
}

fn write_scores(path: Option<&Path>, text: String) -> Result<String> {
    match path {
        Some(p) => {
            write_file(p, text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn fs_predict(config: &RunConfig) -> Result<String> {
    let model = FeatureSelectModel::load(config.require(&config.model, "model")?)?;
    let d = load_samples(config)?;
    let mut out = String::from("index,label,score\n");
    for (i, (x, y)) in d.x.iter().zip(&d.y).enumerate() {
        let score = model.predict(x)?;
        let _ = writeln!(out, "{i},{},{score}", *y as i64);
    }
    write_scores(config.output.as_deref(), out)
}

fn rs_train(config: &RunConfig, log: Option<&Path>) -> Result<String> {
    let model_path = config.require(&config.model, "model")?;
    let f = load_bags(config)?;
    let opts = RegionSelectOptions {
        step_tol: config.step_tol,
        max_outer: config.max_outer,
        solver: config.solver(),
        ..Default::default()
    };
    let model = region_select::train_region_selection(&f.bags, config.kernel, config.c, &opts)?;
    model.save(model_path)?;
    write_log(log.map_or_else(|| default_log(model_path), Path::to_path_buf).as_path(), &model.history)?;
    Ok(format!(
        "iterations,{}\nobjective,{}\nselected_instances,{}\n",
        model.history.len() - 1,
        model.objective(),
        model.history.last().map_or(0, |r| r.active)
    ))
}

fn rs_predict(config: &RunConfig, mode: BagScoreMode, instance_output: Option<&Path>) -> Result<String> {
    let model = RegionSelectModel::load(config.require(&config.model, "model")?)?;
    let f = load_bags(config)?;
    let mut bags_out = String::from("bag_id,label,score\n");
    let mut inst_out = String::from("bag_id,instance,label,score\n");
    for (b, bag) in f.bags.iter().enumerate() {
        let score = region_select::score_bag(&model, bag, mode)?;
        let _ = writeln!(bags_out, "{},{},{score}", bag.bag_id, bag.label as i64);
        for (k, h) in bag.instances.iter().enumerate() {
            let s = region_select::score_instance(&model, h)?;
            let label = instance_label(&f, b, k, bag);
            let _ = writeln!(inst_out, "{},{k},{label},{s}", bag.bag_id);
        }
    }
    if let Some(p) = instance_output {
        write_file(p, inst_out)?;
    }
    write_scores(config.output.as_deref(), bags_out)
}

/// Ground-truth instance label when the bag file has one, else the bag label.
fn instance_label(f: &data::BagFile, b: usize, k: usize, bag: &Bag) -> i64 {
    match &f.truth {
        Some(t) => {
            if t[b][k] {
                1
            } else {
                -1
            }
        }
        None => bag.label as i64,
    }
}

fn run_eval(config: &RunConfig) -> Result<String> {
    let path = config.require(&config.input, "input")?;
    let text = read_file(path)?;
    let (scores, labels) = parse_score_csv(&text, path)?;
    let ap = eval::average_precision(&scores, &labels)?;
    let curve = eval::pr_curve(&scores, &labels)?;
    if let Some(out) = &config.output {
        eval::write_pr_csv(out, &curve)?;
    }
    Ok(format!("average_precision,{ap}\n"))
}

fn parse_score_csv(text: &str, path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty score file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| err(1, format!("missing '{name}' column")))
    };
    let (label_col, score_col) = (find("label")?, find("score")?);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(err(idx + 1, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let label: f64 = fields[label_col]
            .parse()
            .map_err(|_| err(idx + 1, format!("invalid label '{}'", fields[label_col])))?;
        let score: f64 = fields[score_col]
            .parse()
            .map_err(|_| err(idx + 1, format!("invalid score '{}'", fields[score_col])))?;
        labels.push(label > 0.0);
        scores.push(score);
    }
    Ok((scores, labels))
}

fn synth(config: &RunConfig, args: &SynthArgs) -> Result<String> {
    let out = config.require(&config.output, "output")?;
    let mut base = SyntheticSpec::planted(
        args.n_pos,
        args.n_neg,
        args.dim,
        args.informative,
        args.separation,
        args.bins_seed.unwrap_or(config.seed),
    );
    base.seed = config.seed;
    base.noise_scale = args.noise_scale;
    base.normalize_l1 = config.normalize;
    let bins = base
        .informative_bins
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    match args.task {
        SynthTask::Features => {
            let d = data::generate_planted_features(&base)?;
            data::write_samples(out, &d)?;
        }
        SynthTask::Instances => {
            let g = data::generate_planted_instances(&InstanceSpec {
                base,
                m_per_bag: args.m_per_bag,
                signal_per_pos: args.signal_per_pos,
            })?;
            data::write_bags(out, &g.bags, Some(g.truth.as_slice()))?;
        }
    }
    Ok(format!("informative_bins,{bins}\n"))
}

/// Parses arguments, runs, and maps errors to the one-line stderr format.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("invalid arguments");
                eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
                return 2;
            }
            print!("{e}");
            return 0;
        }
    };
    match RunConfig::from_cli(cli).and_then(|c| run(&c)) {
        Ok(stdout) => {
            print!("{stdout}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            1
        }
    }
}
