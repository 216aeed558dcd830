//! The `jam` command line: `gen`, `train`, `calibrate`, `eval` and `decide`.
//!
//! Settings resolve as defaults, then `--config`, then command flags.
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::{
    calibrate, load_table, save_table, LabeledPrediction, Provenance, ThresholdTable,
};
use crate::config::RunConfig;
use crate::data::{generate, load_csv, save_csv, Dataset};
use crate::decision::{
    compare, estimate, fixed_width_baseline, verify, DecisionRecord, Task, VerificationMethod,
    VerificationPolicy,
};
use crate::error::{JamError, Result};
use crate::format::write_file;
use crate::metrics::{
    comparability_stats, default_tpr_grid, match_tpr, per_bucket_widths, ranges_for,
    verification_rates, ComparabilitySection, EvalReport, VerificationSection,
};
use crate::model::{
    load_model, save_model, train, Activation, Checkpoint, OptimizerKind, SigmaMap,
};

#[derive(Debug, Parser)]
#[command(
    name = "jam",
    version,
    about = "Confidence-aware age estimation pipeline"
)]
pub struct Cli {
    /// Run configuration file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Progress messages on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Fit per-bucket thresholds on held-out data.
    Calibrate(CalibrateArgs),
    /// Evaluate a model (and table) on a dataset.
    Eval(EvalArgs),
    /// Make one decision and print it as a JSON line.
    Decide(DecideArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    #[arg(long)]
    pub noise_base: Option<f64>,
    #[arg(long)]
    pub noise_slope: Option<f64>,
    #[arg(long)]
    pub groups: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub group_noise_mult: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-epoch loss log (CSV).
    #[arg(long)]
    pub log_out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub sigma_map: Option<SigmaMap>,
    #[arg(long)]
    pub sigma_floor: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the sigma-blind fixed-width baseline table here.
    #[arg(long)]
    pub baseline_out: Option<PathBuf>,
    #[arg(long)]
    pub target_fpr: Option<f64>,
    #[arg(long)]
    pub bucket_width: Option<f64>,
    #[arg(long)]
    pub side_split: Option<f64>,
    #[arg(long)]
    pub min_bucket_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMethod {
    Confidence,
    Sr,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Sigma-blind per-bucket offsets, read from `--baseline-table`.
    Fixed,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "estimate")]
    pub task: Task,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub baseline_table: Option<PathBuf>,
    #[arg(long)]
    pub legal: Option<f64>,
    #[arg(long)]
    pub challenge: Option<f64>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: EvalMethod,
    /// Report file (TOML).
    #[arg(long)]
    pub out: PathBuf,
    /// Flat `name,value` summary.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// Per-sample decision records as JSON lines.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Comma-separated feature vector; needs `--model`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub features: Option<Vec<f64>>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Uniform lower multiplier instead of a table file.
    #[arg(long, requires = "ut")]
    pub lt: Option<f64>,
    #[arg(long, requires = "lt")]
    pub ut: Option<f64>,
    #[arg(long)]
    pub legal: Option<f64>,
    #[arg(long)]
    pub challenge: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<VerificationMethod>,
    #[arg(long)]
    pub claimed: Option<f64>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os(), &mut std::io::stdout().lock())
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)
            .map_err(|e| JamError::InvalidConfig(format!("config {}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let ctx = Ctx {
        cfg,
        seed: cli.seed,
        verbose: cli.verbose,
    };
    match &cli.command {
        Command::Gen(a) => ctx.gen(a),
        Command::Train(a) => ctx.train(a),
        Command::Calibrate(a) => ctx.calibrate(a),
        Command::Eval(a) => ctx.eval(a),
        Command::Decide(a) => ctx.decide(a, stdout),
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: Option<u64>,
    verbose: bool,
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

fn labeled(ck: &Checkpoint, data: &Dataset) -> Result<Vec<LabeledPrediction>> {
    let out = ck.model.predict(data)?;
    Ok(data
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| LabeledPrediction {
            mu: out.mu[i],
            sigma: out.sigma[i],
            truth: s.age,
        })
        .collect())
}

fn write_lines(path: &Path, records: &[DecisionRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    write_file(path, &text)
}

fn need_table(path: &Option<PathBuf>, what: &str) -> Result<ThresholdTable> {
    match path {
        Some(p) => load_table(p),
        None => Err(JamError::InvalidConfig(format!("{what} needs --table"))),
    }
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// The seed recorded in derived artifacts: `--seed`, else the training seed.
    fn artifact_seed(&self, ck: &Checkpoint) -> Option<u64> {
        self.seed.or(ck.train.as_ref().map(|t| t.seed))
    }

    fn gen(&self, a: &GenArgs) -> Result<()> {
        let mut g = self.cfg.gen.clone();
        set(&mut g.n, &a.n);
        set(&mut g.input_dim, &a.input_dim);
        set(&mut g.noise_base, &a.noise_base);
        set(&mut g.noise_slope, &a.noise_slope);
        set(&mut g.groups, &a.groups);
        set(&mut g.group_noise_mult, &a.group_noise_mult);
        let data = generate(&g)?;
        save_csv(&data, &a.out)?;
        self.log(format!(
            "wrote {} samples to {}",
            data.len(),
            a.out.display()
        ));
        Ok(())
    }

    fn train(&self, a: &TrainArgs) -> Result<()> {
        let mut spec = self.cfg.model.clone();
        let mut tc = self.cfg.train.clone();
        set(&mut tc.epochs, &a.epochs);
        set(&mut tc.batch_size, &a.batch_size);
        set(&mut tc.learning_rate, &a.learning_rate);
        set(&mut tc.optimizer, &a.optimizer);
        set(&mut tc.validation_fraction, &a.validation_fraction);
        set(&mut spec.activation, &a.activation);
        set(&mut spec.sigma_map, &a.sigma_map);
        set(&mut spec.sigma_floor, &a.sigma_floor);
        set(&mut spec.hidden_dims, &a.hidden_dims);
        let data = load_csv(&a.data)?;
        spec.input_dim = data.input_dim();
        let (model, log) = train(&data, &spec, &self.cfg.loss, &tc)?;
        for e in &log.epochs {
            self.log(format!(
                "epoch {:>3}  loss {:.4}  mae {:.3}  val_mae {}",
                e.epoch,
                e.train.l_total,
                e.train_mae,
                e.validation_mae.map_or("-".into(), |m| format!("{m:.3}"))
            ));
        }
        let ck = Checkpoint {
            model,
            loss: self.cfg.loss,
            train: Some(tc),
        };
        save_model(&a.model_out, &ck)?;
        if let Some(p) = &a.log_out {
            write_file(p, &log.to_csv())?;
        }
        Ok(())
    }

    fn calibrate(&self, a: &CalibrateArgs) -> Result<()> {
        let mut s = self.cfg.calibration;
        set(&mut s.target_fpr, &a.target_fpr);
        set(&mut s.bucket_width, &a.bucket_width);
        set(&mut s.side_split, &a.side_split);
        set(&mut s.min_bucket_n, &a.min_bucket_n);
        s.validate()?;
        let ck = load_model(&a.model)?;
        let data = load_csv(&a.data)?;
        let preds = labeled(&ck, &data)?;
        let provenance = Provenance {
            seed: self.artifact_seed(&ck),
            model: Some(a.model.display().to_string()),
            data: Some(a.data.display().to_string()),
        };
        let mut table = calibrate(&preds, &s)?;
        table.provenance = Some(provenance.clone());
        save_table(&a.out, &table)?;
        self.log(format!(
            "{} buckets, fallback lt {:.3} ut {:.3}",
            table.buckets.len(),
            table.fallback_lt,
            table.fallback_ut
        ));
        if let Some(p) = &a.baseline_out {
            let mut base = fixed_width_baseline(&preds, &s)?;
            base.provenance = Some(provenance);
            save_table(p, &base)?;
        }
        Ok(())
    }

    fn eval(&self, a: &EvalArgs) -> Result<()> {
        let ck = load_model(&a.model)?;
        let data = load_csv(&a.data)?;
        let preds = labeled(&ck, &data)?;
        let mus: Vec<f64> = preds.iter().map(|p| p.mu).collect();
        let truths = data.ages();
        let mut report = EvalReport::estimation(&mus, &truths, &data.groups())?;
        let mut records = Vec::new();

        let mut config = BTreeMap::new();
        config.insert("task".to_string(), format!("{:?}", a.task).to_lowercase());
        config.insert("model".to_string(), a.model.display().to_string());
        config.insert("data".to_string(), a.data.display().to_string());
        if let Some(seed) = self.artifact_seed(&ck) {
            config.insert("seed".to_string(), seed.to_string());
        }

        match a.task {
            Task::Estimate => {
                for p in &preds {
                    records.push(estimate(p.mu, p.sigma)?);
                }
            }
            Task::Verify => {
                let mut policy = self.cfg.policy;
                set(&mut policy.legal_age, &a.legal);
                set(&mut policy.challenge_age, &a.challenge);
                policy.validate()?;
                config.insert(
                    "method".to_string(),
                    format!("{:?}", a.method).to_lowercase(),
                );
                let mut section = VerificationSection {
                    legal_age: policy.legal_age,
                    challenge_age: policy.challenge_age,
                    singular_regression: None,
                    confidence: None,
                    matched: None,
                };
                let mut run = |method: VerificationMethod, table: Option<&ThresholdTable>| {
                    let p = VerificationPolicy { method, ..policy };
                    let recs = preds
                        .iter()
                        .map(|x| verify(x.mu, x.sigma, &p, table))
                        .collect::<Result<Vec<_>>>()?;
                    let rates = verification_rates(&recs, &truths, policy.legal_age)?;
                    records.extend(recs);
                    Ok::<_, JamError>(rates)
                };
                if a.method != EvalMethod::Confidence {
                    section.singular_regression =
                        Some(run(VerificationMethod::SingularRegression, None)?);
                }
                if a.method != EvalMethod::Sr {
                    let table = need_table(&a.table, "the confidence method")?;
                    config.insert("table".to_string(), path_str(&a.table));
                    section.confidence = Some(run(VerificationMethod::Confidence, Some(&table))?);
                    if a.method == EvalMethod::Both {
                        section.matched = Some(match_tpr(
                            &preds,
                            &table,
                            policy.legal_age,
                            policy.challenge_age,
                            &default_tpr_grid(),
                        )?);
                    }
                }
                report.verification = Some(section);
            }
            Task::Compare => {
                let table = need_table(&a.table, "comparability evaluation")?;
                config.insert("table".to_string(), path_str(&a.table));
                let ranges = ranges_for(&preds, &table)?;
                // The true age stands in for the claimed document age.
                for p in &preds {
                    records.push(compare(p.mu, p.sigma, p.truth, &table)?);
                }
                let baseline = match (a.baseline, &a.baseline_table) {
                    (_, Some(p)) => Some(load_table(p)?),
                    (Some(Baseline::Fixed), None) => {
                        return Err(JamError::InvalidConfig(
                            "--baseline fixed needs --baseline-table (written by calibrate --baseline-out)"
                                .into(),
                        ))
                    }
                    (None, None) => None,
                };
                let base_ranges = baseline
                    .as_ref()
                    .map(|b| ranges_for(&preds, b))
                    .transpose()?;
                let confidence = comparability_stats(&ranges, &truths)?;
                let base_stats = base_ranges
                    .as_deref()
                    .map(|r| comparability_stats(r, &truths))
                    .transpose()?;
                if base_stats.is_some() {
                    config.insert("baseline_table".to_string(), path_str(&a.baseline_table));
                }
                report.comparability = Some(ComparabilitySection {
                    median_width_reduction: base_stats
                        .filter(|b| b.median_width > 0.0)
                        .map(|b| 1.0 - confidence.median_width / b.median_width),
                    confidence,
                    baseline: base_stats,
                    per_bucket: per_bucket_widths(&ranges, &table, base_ranges.as_deref()),
                });
            }
        }
        report.config = config;
        report.save(&a.out, a.summary_out.as_deref())?;
        if let Some(p) = &a.records_out {
            write_lines(p, &records)?;
        }
        self.log(format!(
            "overall MAE {:.3} on {} samples",
            report.overall_mae, report.n
        ));
        Ok(())
    }

    fn decide(&self, a: &DecideArgs, stdout: &mut dyn Write) -> Result<()> {
        let (mu, sigma) = match (a.mu, a.sigma, &a.features) {
            (Some(mu), Some(sigma), None) => (mu, sigma),
            (None, None, Some(f)) => {
                let path = a
                    .model
                    .as_ref()
                    .ok_or_else(|| JamError::InvalidConfig("--features needs --model".into()))?;
                let out = load_model(path)?.model.forward(f)?;
                (out.mu[0], out.sigma[0])
            }
            _ => {
                return Err(JamError::InvalidConfig(
                    "give either --mu and --sigma, or --features with --model".into(),
                ))
            }
        };
        let table = match (&a.table, a.lt, a.ut) {
            (Some(p), None, None) => Some(load_table(p)?),
            (None, Some(lt), Some(ut)) => Some(
                ThresholdTable::uniform(lt, ut)
                    .map_err(|e| JamError::InvalidConfig(format!("--lt/--ut: {e}")))?,
            ),
            (None, None, None) => None,
            _ => {
                return Err(JamError::InvalidConfig(
                    "give either --table or --lt with --ut, not both".into(),
                ))
            }
        };
        let record = match a.task {
            Task::Estimate => estimate(mu, sigma)?,
            Task::Verify => {
                let mut policy = self.cfg.policy;
                set(&mut policy.legal_age, &a.legal);
                set(&mut policy.challenge_age, &a.challenge);
                set(&mut policy.method, &a.method);
                verify(mu, sigma, &policy, table.as_ref())?
            }
            Task::Compare => {
                let claimed = a
                    .claimed
                    .ok_or_else(|| JamError::InvalidConfig("compare needs --claimed".into()))?;
                let table = table.ok_or_else(|| {
                    JamError::InvalidConfig("compare needs --table or --lt/--ut".into())
                })?;
                compare(mu, sigma, claimed, &table)?
            }
        };
        writeln!(stdout, "{}", record.to_json_line())
            .map_err(|e| JamError::io(Path::new("<stdout>"), e))
    }
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}
