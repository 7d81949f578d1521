//! `ecal` command-line driver.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when the command fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ecal::causal::CausalMode;
use ecal::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use ecal::checks::{gradient_suite, DEFAULT_KINK_MARGIN};
use ecal::encoders::EncoderKind;
use ecal::experiments::{
    config_hash, noise_sweep, run_loss_ablation, train_and_test, write_loss_ablation_csv, write_noise_ablation_csv,
    write_run_csv, write_summary_csv, Splits, SummaryRow,
};
use ecal::graph::{load_dataset, save_dataset, Dataset};
use ecal::objectives::{Lambdas, PairingMode};
use ecal::stats::{attention_recovery_auc, welch_t_test};
use ecal::synth::{apply_imbalance, generate_benchmark, load_truth, permute_edge_features, save_truth, GroundTruth, Motif, SynthConfig};
use ecal::train::{edge_scores, evaluate, TrainConfig};
use ecal::Error;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "ecal", version, about = "Edge-enhanced causal attention for graph classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic edge-causal benchmark
    GenData(GenDataArgs),
    /// Train a model and write checkpoint and metrics
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// Train with each loss term removed in turn
    AblateLoss(AblateLossArgs),
    /// Evaluate one trained model under increasing edge-feature permutation
    AblateNoise(AblateNoiseArgs),
    /// Welch two-sample t-test
    Ttest(TtestArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Output directory for {train,valid,test}.graphs and .truth files
    #[arg(long)]
    out: PathBuf,
    /// Training graphs
    #[arg(long, default_value_t = 600)]
    num_graphs: usize,
    #[arg(long, default_value_t = 200)]
    num_valid: usize,
    #[arg(long, default_value_t = 400)]
    num_test: usize,
    /// Minority/majority ratio of the training split
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    /// Class separation of motif edge features, in [0, 1]
    #[arg(long, default_value_t = 0.8)]
    edge_signal: f64,
    #[arg(long, default_value_t = 1.0)]
    node_noise: f64,
    /// cycle5 or house
    #[arg(long, default_value = "cycle5")]
    motif: Motif,
    #[arg(long, default_value_t = 5)]
    base_min: usize,
    #[arg(long, default_value_t = 10)]
    base_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory holding train.graphs, valid.graphs, test.graphs (and test.truth)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training set; overrides the directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation set; defaults to the directory's, else the training set
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Test set; defaults to the directory's
    #[arg(long)]
    test: Option<PathBuf>,
    /// Motif ground truth of the test set
    #[arg(long)]
    truth: Option<PathBuf>,
}

struct LoadedData {
    train: Dataset,
    valid: Dataset,
    test: Option<Dataset>,
    truth: Option<GroundTruth>,
}

impl DataArgs {
    fn in_dir(&self, name: &str) -> Option<PathBuf> {
        self.data_dir.as_ref().map(|d| d.join(name))
    }

    fn load(&self) -> Result<LoadedData, Failure> {
        let train_path = self
            .data
            .clone()
            .or_else(|| self.in_dir("train.graphs"))
            .ok_or_else(|| Failure::Usage("one of --data or --data-dir is required".into()))?;
        let train = load_dataset(&train_path)?;
        let valid = match self.valid.clone().or_else(|| self.in_dir("valid.graphs")) {
            Some(p) => load_dataset(p)?,
            None => train.clone(),
        };
        let test = self.test.clone().or_else(|| self.in_dir("test.graphs")).map(load_dataset).transpose()?;
        let truth_path = self
            .truth
            .clone()
            .or_else(|| self.in_dir("test.truth").filter(|p| p.exists()));
        let truth = truth_path.map(load_truth).transpose()?;
        Ok(LoadedData {
            train,
            valid,
            test,
            truth,
        })
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Branch encoder: gcn, gat, egatv1 or egatv2
    #[arg(long, default_value = "egatv2")]
    model: EncoderKind,
    /// Score estimator: auto, gcn, gat, egatv1 or egatv2 (auto: egatv2 for ecal, else the branch encoder)
    #[arg(long, default_value = "auto")]
    estimator: String,
    /// none, cal or ecal
    #[arg(long, default_value = "ecal")]
    causal: CausalMode,
    /// Weight of the KL-to-uniform term
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    lambda1: f64,
    /// Weight of the random-pairing term
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    lambda2: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// perm or full
    #[arg(long, default_value = "perm")]
    pairing: PairingMode,
    /// Never pair a graph with its own trivial representation
    #[arg(long, default_value_t = false)]
    exclude_self_pairs: bool,
    #[arg(long, default_value_t = 32)]
    d_hidden: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Subsample the training minority class to this ratio (1 keeps everything)
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
}

impl ModelArgs {
    fn config(&self) -> Result<TrainConfig, Failure> {
        let estimator = match self.estimator.as_str() {
            "auto" => None,
            other => Some(other.parse::<EncoderKind>()?),
        };
        Ok(TrainConfig {
            encoder: self.model,
            estimator,
            causal: self.causal,
            d_h: self.d_hidden,
            depth: self.depth,
            lambdas: Lambdas::new(self.lambda1, self.lambda2)?,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            pairing: self.pairing,
            exclude_self_pairs: self.exclude_self_pairs,
            ..TrainConfig::default()
        })
    }

    fn prepare_train(&self, ds: Dataset) -> Result<Dataset, Failure> {
        if self.rho == 1.0 {
            return Ok(ds);
        }
        Ok(apply_imbalance(&ds, self.rho, self.seed)?)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory for model.ckpt, run.csv and summary.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Motif ground truth of the dataset, for arc recovery AUC
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Share of arcs whose feature rows are permuted before evaluation
    #[arg(long, default_value_t = 0.0)]
    noise_proportion: f64,
    /// Seed of the permutation
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Random graphs per component
    #[arg(long, default_value_t = 20)]
    graphs: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
}

#[derive(Args, Debug)]
struct AblateLossArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Seeds per variant, counting up from --seed
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Output directory for ablation_loss.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateNoiseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated permutation proportions
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    proportions: Vec<f64>,
    /// Seed of the permutations
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Output directory for ablation_noise.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TtestArgs {
    /// First sample, comma-separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    a: Vec<f64>,
    /// Second sample, comma-separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    b: Vec<f64>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
    /// the command ran but its check did not pass
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other),
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| {
        Failure::Runtime(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn require_test(data: &LoadedData) -> Result<&Dataset, Failure> {
    data.test
        .as_ref()
        .ok_or_else(|| Failure::Usage("a test set is required (--test or --data-dir)".into()))
}

fn gen_data(args: &GenDataArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        num_graphs: args.num_graphs,
        base_nodes: args.base_min..=args.base_max,
        motif: args.motif,
        edge_signal_strength: args.edge_signal,
        node_noise_std: args.node_noise,
        imbalance_ratio: args.rho,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let b = generate_benchmark(&cfg, args.num_valid, args.num_test)?;
    create_dir(&args.out)?;
    for (name, ds, truth) in [
        ("train", &b.train, &b.train_truth),
        ("valid", &b.valid, &b.valid_truth),
        ("test", &b.test, &b.test_truth),
    ] {
        save_dataset(ds, args.out.join(format!("{name}.graphs")))?;
        save_truth(truth, args.out.join(format!("{name}.truth")))?;
        let h = ds.class_histogram();
        println!("{name}: {} graphs, class counts {h:?}", ds.len());
    }
    Ok(())
}

fn train_cmd(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = args.model.config()?;
    let data = args.data.load()?;
    let train = args.model.prepare_train(data.train.clone())?;
    let test = data.test.as_ref().unwrap_or(&data.valid);
    let splits = Splits {
        train: &train,
        valid: &data.valid,
        test,
    };
    let out = train_and_test(&cfg, splits, data.truth.as_ref().filter(|_| data.test.is_some()))?;
    create_dir(&args.out)?;
    save_checkpoint(
        &Checkpoint {
            config: out.model.config,
            seed: cfg.seed,
            params: out.params.clone(),
        },
        args.out.join("model.ckpt"),
    )?;
    write_run_csv(args.out.join("run.csv"), &out.record)?;
    let test_acc = out.record.test_acc.expect("set by train_and_test");
    write_summary_csv(
        args.out.join("summary.csv"),
        &[SummaryRow {
            config_hash: config_hash(&cfg),
            seed: cfg.seed,
            test_acc,
            auc: out.record.auc,
        }],
    )?;
    let which = if data.test.is_some() { "test" } else { "valid" };
    println!("best epoch {} valid_acc={:?}", out.record.best_epoch, out.record.best_valid_acc);
    println!("{which}_acc={test_acc:?}");
    if let Some(a) = out.record.auc {
        println!("auc={a:?}");
    }
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<(), Failure> {
    let (model, ckpt) = load_checkpoint(&args.checkpoint)?;
    let ds = load_dataset(&args.data)?;
    let ds = permute_edge_features(&ds, args.noise_proportion, args.seed)?;
    let ev = evaluate(&model, &ckpt.params, &ds)?;
    println!("accuracy={:?}", ev.accuracy);
    for (c, a) in ev.per_class_accuracy.iter().enumerate() {
        match a {
            Some(a) => println!("class {c} accuracy={a:?}"),
            None => println!("class {c} absent"),
        }
    }
    if let Some(path) = &args.truth {
        let truth = load_truth(path)?;
        truth.check_against(&ds)?;
        match edge_scores(&model, &ckpt.params, &ds)?.and_then(|s| attention_recovery_auc(&s, &truth)) {
            Some(a) => println!("auc={a:?}"),
            None => println!("auc undefined"),
        }
    }
    Ok(())
}

fn gradcheck_cmd(args: &GradcheckArgs) -> Result<(), Failure> {
    if args.graphs == 0 {
        return Err(Failure::Usage("--graphs must be positive".into()));
    }
    let checks = gradient_suite(args.seed, args.graphs, args.eps, DEFAULT_KINK_MARGIN)?;
    let mut failed = Vec::new();
    for c in &checks {
        println!("{:<16} max_rel_err={:.3e}", c.name, c.max_relative_error);
        if !(c.max_relative_error < GRADCHECK_TOLERANCE) {
            failed.push(c.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check above {GRADCHECK_TOLERANCE:e} for {}",
            failed.join(", ")
        )))
    }
}

fn ablate_loss_cmd(args: &AblateLossArgs) -> Result<(), Failure> {
    let cfg = args.model.config()?;
    let data = args.data.load()?;
    let train = args.model.prepare_train(data.train.clone())?;
    let test = require_test(&data)?;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|k| cfg.seed + k).collect();
    let splits = Splits {
        train: &train,
        valid: &data.valid,
        test,
    };
    let table = run_loss_ablation(&cfg, splits, &seeds)?;
    create_dir(&args.out)?;
    write_loss_ablation_csv(args.out.join("ablation_loss.csv"), &table)?;
    for v in &table.variants {
        let (m, s) = v.mean_std();
        println!("{:<5} test_acc {m:.4} +- {s:.4}", v.variant.to_string());
    }
    Ok(())
}

fn ablate_noise_cmd(args: &AblateNoiseArgs) -> Result<(), Failure> {
    let cfg = args.model.config()?;
    if let Some(p) = args.proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Failure::Usage(format!("permutation proportion {p} outside [0, 1]")));
    }
    let data = args.data.load()?;
    let train = args.model.prepare_train(data.train.clone())?;
    let test = require_test(&data)?;
    let splits = Splits {
        train: &train,
        valid: &data.valid,
        test,
    };
    let trained = train_and_test(&cfg, splits, None)?;
    let rows = noise_sweep(&trained.model, &trained.params, test, &args.proportions, args.noise_seed)?;
    create_dir(&args.out)?;
    write_noise_ablation_csv(args.out.join("ablation_noise.csv"), &rows)?;
    for r in &rows {
        println!("proportion {:?} test_acc {:?}", r.proportion, r.accuracy);
    }
    Ok(())
}

fn ttest_cmd(args: &TtestArgs) -> Result<(), Failure> {
    let r = welch_t_test(&args.a, &args.b)?;
    println!("t={:?} df={:?} p={:?}", r.t, r.df, r.p);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::AblateLoss(a) => ablate_loss_cmd(a),
        Command::AblateNoise(a) => ablate_noise_cmd(a),
        Command::Ttest(a) => ttest_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Check(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
    }
}
