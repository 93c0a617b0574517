use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cupart::cnn::{evaluate_loss, train_cnn, CnnArch, CnnTrainConfig, EthCnnParams};
use cupart::codec::{CodingMode, Frame};
use cupart::dataset::{
    build_db_files, gen_synthetic, load_records, manifest_path, save_records, select_split, split_db, BlockInput,
    CtuSample, DatabaseManifest, SourceKind, SplitKind, SynthConfig,
};
use cupart::eval::{
    cmd_bench, cmd_depth_corr, cmd_sweep, verify_tables, write_sweep_csv, EvalContext, Predictor,
};
use cupart::hcpm::ThresholdSet;
use cupart::lstm::{sequence_samples, train_lstm, EthLstmParams, LstmArch, LstmTrainConfig};
use cupart::model_io::{load_model, save_cnn, save_lstm, Model};
use cupart::{Error, DEFAULT_QPS};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cupart", version, about = "CU partition prediction: databases, training, evaluation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Master seed for generation, splitting, initialization and shuffling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Comma-separated QPs.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = DEFAULT_QPS.to_vec())]
    qp_list: Vec<u8>,
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Intra)]
    mode: ModeArg,
    /// Uncertain-zone width in [0, 1]; 0 is the single 0.5 threshold.
    #[arg(long, global = true)]
    d: Option<f64>,
    /// Model file; give the CNN first and the LSTM second.
    #[arg(long, global = true)]
    model: Vec<PathBuf>,
    /// Record database (.cphs).
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    ablation: Option<Ablation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Intra,
    Inter,
}

impl From<ModeArg> for CodingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Intra => CodingMode::Intra,
            ModeArg::Inter => CodingMode::Inter,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    OrigInput,
    ResidueInput,
    CnnOnly,
    CnnLstm,
    NoEarlyTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Stills,
    Sequence,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write synthetic CPHY sources into the --out directory.
    GenData {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Stills)]
        kind: KindArg,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long)]
        density: Option<f64>,
    },
    /// Label CPHY sources with the oracle and write --out plus its manifest.
    BuildDb {
        /// CPHY files or directories containing them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Assign sources of --db to train/val/test and write them into --out.
    SplitDb {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.8, 0.1, 0.1])]
        ratios: Vec<f64>,
    },
    /// Train the CNN on --db and write the model to --out.
    TrainCnn {
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        no_dropout: bool,
    },
    /// Train the LSTM on inter --db with the frozen CNN given by --model.
    TrainLstm {
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value_t = 10)]
        overlap: usize,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Accuracy, RD delta and pre-coded CU reduction of --db.
    Eval {
        #[command(flatten)]
        pred: PredArgs,
    },
    /// Evaluate a list of uncertain-zone widths and check monotonicity.
    Sweep {
        #[command(flatten)]
        pred: PredArgs,
        #[arg(long, value_delimiter = ',')]
        d_values: Option<Vec<f64>>,
        /// Plot-ready CSV of the sweep points.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Time inference, oracle RDO and guided encoding per CTU.
    Bench {
        #[command(flatten)]
        pred: PredArgs,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Compare layer accounting with the reference tables.
    VerifyTables {
        /// Add a bias to every CNN layer (perturbation check).
        #[arg(long)]
        inject_bias: bool,
        /// Override the level-1 LSTM hidden size (perturbation check).
        #[arg(long)]
        lstm_hidden1: Option<usize>,
    },
    /// Correlation of oracle depth maps across GOP distances.
    DepthCorr {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4])]
        gop_distances: Vec<usize>,
    },
}

#[derive(Args, Debug)]
struct PredArgs {
    /// Use the database's own labels as predictions.
    #[arg(long, conflicts_with = "constant")]
    oracle: bool,
    /// Predict this probability for every cell.
    #[arg(long)]
    constant: Option<f32>,
    /// Residue database matching an original-input --db, used for encoding.
    #[arg(long)]
    ref_db: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(Error),
    Verify(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Argument(m) => CliError::Usage(m),
            Error::Verification(m) => CliError::Verify(m),
            e => CliError::Lib(e),
        }
    }
}

type Res<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(CliError::Usage(msg.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {}", m);
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {}", e);
            ExitCode::from(EXIT_DATA)
        }
        Err(CliError::Verify(m)) => {
            eprintln!("verification failed: {}", m);
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    let g = &cli.global;
    match &cli.cmd {
        Cmd::GenData {
            count,
            kind,
            width,
            height,
            frames,
            density,
        } => gen_data(g, *count, *kind, *width, *height, *frames, *density),
        Cmd::BuildDb { inputs } => build(g, inputs),
        Cmd::SplitDb { ratios } => split(g, ratios),
        Cmd::TrainCnn {
            iterations,
            batch_size,
            lr,
            no_dropout,
        } => train_cnn_cmd(g, *iterations, *batch_size, *lr, !*no_dropout),
        Cmd::TrainLstm {
            iterations,
            batch_size,
            window,
            overlap,
            lr,
        } => train_lstm_cmd(g, *iterations, *batch_size, *window, *overlap, *lr),
        Cmd::Eval { pred } => eval(g, pred),
        Cmd::Sweep { pred, d_values, csv } => sweep(g, pred, d_values.as_deref(), csv.as_deref()),
        Cmd::Bench { pred, repeats } => bench(g, pred, *repeats),
        Cmd::VerifyTables {
            inject_bias,
            lstm_hidden1,
        } => verify(g, *inject_bias, *lstm_hidden1),
        Cmd::DepthCorr { inputs, gop_distances } => depth_corr(g, inputs, gop_distances),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Res<&'a Path> {
    match p {
        Some(p) => Ok(p.as_path()),
        None => usage(format!("--{} is required", flag)),
    }
}

/// Creates the parent directory of an output file.
fn ensure_parent(p: &Path) -> Res<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    Ok(())
}

/// Writes pretty JSON to `out` when given, otherwise to stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Res<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    match out {
        Some(p) => {
            ensure_parent(p)?;
            fs::write(p, text + "\n").map_err(Error::from)?
        }
        None => {
            let mut o = std::io::stdout().lock();
            writeln!(o, "{}", text).map_err(Error::from)?;
        }
    }
    Ok(())
}

fn expand_inputs(inputs: &[PathBuf]) -> Res<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(Error::from)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "cphy"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_db(path: &Path) -> Res<(Vec<CtuSample>, DatabaseManifest)> {
    let (mode, records) = load_records(path)?;
    let manifest = DatabaseManifest::load(&manifest_path(path))?;
    if manifest.mode != mode || manifest.record_count != records.len() {
        return Err(Error::Data(format!("{} does not match its manifest", path.display())).into());
    }
    Ok((records, manifest))
}

fn gen_data(
    g: &Global,
    count: usize,
    kind: KindArg,
    width: usize,
    height: usize,
    frames: usize,
    density: Option<f64>,
) -> Res<()> {
    let dir = require(&g.out, "out")?;
    let mut cfg = SynthConfig {
        width,
        height,
        frames,
        ..SynthConfig::default()
    };
    if let Some(d) = density {
        cfg.texture_density = d;
    }
    let kind = match kind {
        KindArg::Stills => SourceKind::Stills,
        KindArg::Sequence => SourceKind::Sequence,
    };
    let seqs = gen_synthetic(g.seed, count, kind, &cfg)?;
    fs::create_dir_all(dir).map_err(Error::from)?;
    for (i, frames) in seqs.iter().enumerate() {
        Frame::save_sequence(&dir.join(format!("src-{:04}.cphy", i)), frames)?;
    }
    eprintln!("wrote {} sources to {}", seqs.len(), dir.display());
    Ok(())
}

fn build(g: &Global, inputs: &[PathBuf]) -> Res<()> {
    let out = require(&g.out, "out")?;
    ensure_parent(out)?;
    let input = match g.ablation {
        None | Some(Ablation::ResidueInput) => BlockInput::Residue,
        Some(Ablation::OrigInput) => {
            if g.mode != ModeArg::Inter {
                return usage("orig-input applies to inter databases");
            }
            BlockInput::Original
        }
        Some(a) => return usage(format!("ablation {:?} does not apply to build-db", a)),
    };
    let files = expand_inputs(inputs)?;
    let (_, manifest) = build_db_files(&files, &g.qp_list, g.mode.into(), input, out)?;
    emit(&manifest, None)
}

fn split(g: &Global, ratios: &[f64]) -> Res<()> {
    let db = require(&g.db, "db")?;
    let dir = require(&g.out, "out")?;
    let ratios: [f64; 3] = match ratios {
        [a, b, c] => [*a, *b, *c],
        _ => return usage("--ratios needs three values"),
    };
    let (records, manifest) = load_db(db)?;
    let assigned = split_db(&manifest, ratios, g.seed)?;
    fs::create_dir_all(dir).map_err(Error::from)?;
    for kind in SplitKind::ALL {
        let (recs, man) = select_split(&records, &assigned, kind)?;
        let path = dir.join(format!("{}.cphs", kind.name()));
        save_records(&path, man.mode, &recs)?;
        man.save(&manifest_path(&path))?;
        eprintln!("{}: {} records", path.display(), recs.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: usize,
    first_loss: Option<f64>,
    last_loss: Option<f64>,
    final_train_loss: Option<f64>,
    loss_curve: Vec<f64>,
}

fn train_cnn_cmd(g: &Global, iterations: usize, batch_size: usize, lr: Option<f64>, dropout: bool) -> Res<()> {
    let db = require(&g.db, "db")?;
    let out = require(&g.out, "out")?;
    ensure_parent(out)?;
    let (records, _) = load_db(db)?;
    let mut cfg = CnnTrainConfig {
        iterations,
        batch_size,
        dropout,
        seed: g.seed,
        ..CnnTrainConfig::default()
    };
    if let Some(lr) = lr {
        cfg.sgd.learning_rate = lr;
    }
    let mut params = EthCnnParams::seeded(g.seed);
    let report = train_cnn(&mut params, &records, &cfg)?;
    save_cnn(out, &params)?;
    let subset = &records[..records.len().min(512)];
    emit(
        &TrainSummary {
            iterations,
            first_loss: report.loss_curve.first().copied(),
            last_loss: report.loss_curve.last().copied(),
            final_train_loss: Some(evaluate_loss(&params, subset)?),
            loss_curve: report.loss_curve,
        },
        None,
    )
}

fn train_lstm_cmd(
    g: &Global,
    iterations: usize,
    batch_size: usize,
    window: usize,
    overlap: usize,
    lr: Option<f64>,
) -> Res<()> {
    let db = require(&g.db, "db")?;
    let out = require(&g.out, "out")?;
    ensure_parent(out)?;
    let (records, manifest) = load_db(db)?;
    if manifest.mode != CodingMode::Inter {
        return usage("train-lstm needs an inter database");
    }
    let cnn = match g.model.as_slice() {
        [p] => expect_cnn(p)?,
        _ => return usage("train-lstm needs exactly one --model (the CNN)"),
    };
    let mut cfg = LstmTrainConfig {
        iterations,
        batch_size,
        window,
        overlap,
        seed: g.seed,
        ..LstmTrainConfig::default()
    };
    if let Some(lr) = lr {
        cfg.sgd.learning_rate = lr;
    }
    let seqs = sequence_samples(&cnn, &records, &manifest)?;
    let mut params = EthLstmParams::seeded(g.seed);
    let report = train_lstm(&mut params, &seqs, &cfg)?;
    save_lstm(out, &params)?;
    emit(
        &TrainSummary {
            iterations,
            first_loss: report.loss_curve.first().copied(),
            last_loss: report.loss_curve.last().copied(),
            final_train_loss: None,
            loss_curve: report.loss_curve,
        },
        None,
    )
}

fn expect_cnn(p: &Path) -> Res<EthCnnParams> {
    match load_model(p)? {
        Model::Cnn(c) => Ok(c),
        Model::Lstm(_) => usage(format!("{} is an LSTM model, expected the CNN", p.display())),
    }
}

fn expect_lstm(p: &Path) -> Res<EthLstmParams> {
    match load_model(p)? {
        Model::Lstm(l) => Ok(l),
        Model::Cnn(_) => usage(format!("{} is a CNN model, expected the LSTM", p.display())),
    }
}

enum Loaded {
    Oracle,
    Constant(f32),
    Cnn(EthCnnParams),
    CnnLstm(EthCnnParams, EthLstmParams),
}

impl Loaded {
    fn predictor(&self) -> Predictor<'_> {
        match self {
            Loaded::Oracle => Predictor::Oracle,
            Loaded::Constant(p) => Predictor::Constant(*p),
            Loaded::Cnn(c) => Predictor::Cnn(c),
            Loaded::CnnLstm(c, l) => Predictor::CnnLstm(c, l),
        }
    }
}

struct Setup {
    records: Vec<CtuSample>,
    manifest: DatabaseManifest,
    coded: Option<Vec<CtuSample>>,
    model: Loaded,
    early_term: bool,
}

fn setup(g: &Global, pred: &PredArgs) -> Res<Setup> {
    let db = require(&g.db, "db")?;
    let (records, manifest) = load_db(db)?;
    if manifest.mode != CodingMode::from(g.mode) {
        return usage(format!("--mode {:?} but the database is {:?}", g.mode, manifest.mode));
    }
    let model = if pred.oracle {
        Loaded::Oracle
    } else if let Some(p) = pred.constant {
        Loaded::Constant(p)
    } else {
        match g.model.as_slice() {
            [] => return usage("give --model, --oracle or --constant"),
            [c] => Loaded::Cnn(expect_cnn(c)?),
            [c, l] if g.ablation == Some(Ablation::CnnOnly) => {
                let _ = expect_lstm(l)?;
                Loaded::Cnn(expect_cnn(c)?)
            }
            [c, l] => Loaded::CnnLstm(expect_cnn(c)?, expect_lstm(l)?),
            _ => return usage("at most two --model files (CNN, LSTM)"),
        }
    };
    if let Loaded::CnnLstm(..) = model {
        if manifest.mode != CodingMode::Inter {
            return usage("an LSTM model needs an inter database");
        }
    }
    if g.ablation == Some(Ablation::CnnLstm) && !matches!(model, Loaded::CnnLstm(..)) {
        return usage("cnn-lstm needs both a CNN and an LSTM --model");
    }
    if g.ablation == Some(Ablation::OrigInput) && manifest.block_input != BlockInput::Original {
        return usage("orig-input evaluation needs a database built with --ablation orig-input");
    }
    let coded = match &pred.ref_db {
        Some(p) => {
            let (recs, man) = load_db(p)?;
            if !man.blocks_are_coded_signal() {
                return usage("--ref-db must store the coded residue");
            }
            Some(recs)
        }
        None => None,
    };
    Ok(Setup {
        records,
        manifest,
        coded,
        model,
        early_term: g.ablation != Some(Ablation::NoEarlyTerm),
    })
}

fn thresholds(g: &Global) -> Res<ThresholdSet> {
    Ok(ThresholdSet::from_width(g.d.unwrap_or(0.0))?)
}

fn eval(g: &Global, pred: &PredArgs) -> Res<()> {
    let s = setup(g, pred)?;
    let ctx = EvalContext::new(s.model.predictor(), &s.records, &s.manifest, s.coded.as_deref())?;
    let report = ctx.evaluate(&thresholds(g)?, Some(g.d.unwrap_or(0.0)), s.early_term)?;
    emit(&report, g.out.as_deref())
}

fn sweep(g: &Global, pred: &PredArgs, d_values: Option<&[f64]>, csv: Option<&Path>) -> Res<()> {
    let s = setup(g, pred)?;
    let grid: Vec<f64> = match d_values {
        Some(v) => v.to_vec(),
        None => (0..=10).map(|i| i as f64 / 10.0).collect(),
    };
    let ctx = EvalContext::new(s.model.predictor(), &s.records, &s.manifest, s.coded.as_deref())?;
    let report = cmd_sweep(&ctx, &grid, s.early_term)?;
    emit(&report, g.out.as_deref())?;
    if let Some(p) = csv {
        ensure_parent(p)?;
        write_sweep_csv(fs::File::create(p).map_err(Error::from)?, &report.points)?;
    }
    if !report.monotone {
        return Err(CliError::Verify(report.violations.join("; ")));
    }
    Ok(())
}

fn bench(g: &Global, pred: &PredArgs, repeats: usize) -> Res<()> {
    let s = setup(g, pred)?;
    let report = cmd_bench(
        s.model.predictor(),
        &s.records,
        &s.manifest,
        &thresholds(g)?,
        s.early_term,
        repeats,
    )?;
    emit(&report, g.out.as_deref())
}

fn verify(g: &Global, inject_bias: bool, lstm_hidden1: Option<usize>) -> Res<()> {
    let cnn = CnnArch {
        bias: inject_bias,
        ..CnnArch::default()
    };
    let mut lstm = LstmArch::default();
    if let Some(h) = lstm_hidden1 {
        if h == 0 {
            return usage("--lstm-hidden1 must be positive");
        }
        lstm.hidden[0] = h;
    }
    let report = verify_tables(&cnn, &lstm);
    emit(&report, g.out.as_deref())?;
    if report.pass {
        eprintln!("all {} table cells match", report.checks.len());
        Ok(())
    } else {
        eprint!("{}", report.diff());
        Err(CliError::Verify(format!("{} table cells differ", report.failures().count())))
    }
}

fn depth_corr(g: &Global, inputs: &[PathBuf], gop_distances: &[usize]) -> Res<()> {
    let mut seqs = Vec::new();
    for p in expand_inputs(inputs)? {
        match Frame::load_sequence(&p) {
            Ok(f) => seqs.push(f),
            Err(e) => log::warn!("skipping {}: {}", p.display(), e),
        }
    }
    if seqs.is_empty() {
        return Err(Error::Data("no readable sequences".into()).into());
    }
    let report = cmd_depth_corr(&seqs, &g.qp_list, g.mode.into(), gop_distances)?;
    emit(&report, g.out.as_deref())
}
