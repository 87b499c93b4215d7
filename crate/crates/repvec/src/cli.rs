//! Command-line front end: train, derive, evaluate, synth.
//!
//! Weights are a persisted artifact, so deriving and evaluating never
//! retrain implicitly. All randomness flows from `--seed`; reruns with
//! identical flags produce byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::evaluation::{
    evaluate, generate_synthetic, render_report_tsv, Protocol, SyntheticConfig,
};
use crate::ontology::{load_ontology, save_ontology, OntologyClass};
use crate::pipeline::{process_classes, weight_inputs, PipelineConfig};
use crate::weights::{build_weight_dataset, load_weights, predict_class_vector, save_weights, train_weights};

#[derive(Debug)]
pub enum CliError {
    /// Invalid invocation; exits with status 2.
    Usage(String),
    /// Failure while running; exits with status 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{}", m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {}", context, err))
}

#[derive(Parser, Debug)]
#[command(name = "repvec", version, about = "Representative vectors for ontology classes")]
pub struct Cli {
    /// Worker threads for per-class stages (default: all processors).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Learn candidate weights over all classes and write them as JSON.
    Train(TrainArgs),
    /// Predict per-class representative vectors with stored weights.
    Derive(DeriveArgs),
    /// Score model, mean, and median representatives against C0.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic embedding table, ontology, and ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Master seed for every stage.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// SVM soft-margin constant.
    #[arg(long, default_value_t = 1.0)]
    pub svm_c: f64,
    #[arg(long, default_value_t = 16)]
    pub kmeans_restarts: usize,
    #[arg(long, default_value_t = 100)]
    pub kmeans_max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub kmeans_tol: f64,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Train weights without the positivity constraint.
    #[arg(long)]
    pub allow_negative: bool,
}

impl PipelineArgs {
    fn to_config(&self) -> Result<PipelineConfig, CliError> {
        if self.svm_c <= 0.0 {
            return Err(CliError::Usage("--svm-c must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(CliError::Usage("--learning-rate must be positive".into()));
        }
        if self.kmeans_tol < 0.0 {
            return Err(CliError::Usage("--kmeans-tol must be nonnegative".into()));
        }
        Ok(PipelineConfig {
            seed: self.seed,
            kmeans_restarts: self.kmeans_restarts,
            kmeans_max_iters: self.kmeans_max_iters,
            kmeans_tol: self.kmeans_tol,
            svm_c: self.svm_c,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            allow_negative: self.allow_negative,
            ..PipelineConfig::default()
        })
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub ontology: PathBuf,
    /// Output weights JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct DeriveArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub ontology: PathBuf,
    /// Weights JSON written by `train`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Output TSV: label followed by the N components of Y.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional TSV dump of all candidate vectors.
    #[arg(long)]
    pub candidates_out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub ontology: PathBuf,
    /// Output report TSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional full-precision JSON sidecar.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "loco")]
    pub protocol: ProtocolArg,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum ProtocolArg {
    Insample,
    Loco,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Protocol {
        match p {
            ProtocolArg::Insample => Protocol::Insample,
            ProtocolArg::Loco => Protocol::Loco,
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub instances: usize,
    #[arg(long)]
    pub dim: usize,
    /// Separation between the two planted modes of each class.
    #[arg(long, default_value_t = 2.0)]
    pub schism: f64,
    /// Per-coordinate noise of the class-label vector.
    #[arg(long, default_value_t = 0.1)]
    pub label_noise: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out_embeddings: PathBuf,
    #[arg(long)]
    pub out_ontology: PathBuf,
    #[arg(long)]
    pub out_truth: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Derive(args) => cmd_derive(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

fn read_inputs(
    embeddings: &Path,
    ontology: &Path,
) -> Result<(EmbeddingTable, Vec<OntologyClass>), CliError> {
    let file = File::open(embeddings)
        .map_err(|e| runtime(&format!("opening embeddings {}", embeddings.display()), e))?;
    let table = load_embeddings(BufReader::new(file))
        .map_err(|e| runtime(&format!("loading embeddings {}", embeddings.display()), e))?;
    let file = File::open(ontology)
        .map_err(|e| runtime(&format!("opening ontology {}", ontology.display()), e))?;
    let classes = load_ontology(BufReader::new(file))
        .map_err(|e| runtime(&format!("loading ontology {}", ontology.display()), e))?;
    Ok((table, classes))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let file =
        File::create(path).map_err(|e| runtime(&format!("creating {}", path.display()), e))?;
    Ok(BufWriter::new(file))
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = args.pipeline.to_config()?;
    let (table, classes) = read_inputs(&args.embeddings, &args.ontology)?;
    let artifacts = process_classes(&classes, &table, &config)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let dataset = build_weight_dataset(&weight_inputs(&artifacts))
        .map_err(|e| runtime("building weight dataset", e))?;
    eprintln!("examples: {}", dataset.len());
    let weights = train_weights(&dataset, &config.train_config())
        .map_err(|e| runtime("training weights", e))?;
    eprintln!("final loss: {:e}", weights.meta.final_loss);
    let mut out = create(&args.out)?;
    save_weights(&weights, &mut out).map_err(|e| runtime("writing weights", e))?;
    out.flush().map_err(|e| runtime("writing weights", e))?;
    Ok(())
}

pub fn cmd_derive(args: &DeriveArgs) -> Result<(), CliError> {
    let config = args.pipeline.to_config()?;
    let (table, classes) = read_inputs(&args.embeddings, &args.ontology)?;
    let file = File::open(&args.weights)
        .map_err(|e| runtime(&format!("opening weights {}", args.weights.display()), e))?;
    let weights = load_weights(BufReader::new(file))
        .map_err(|e| runtime(&format!("loading weights {}", args.weights.display()), e))?;
    let artifacts = process_classes(&classes, &table, &config)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut out = create(&args.out)?;
    for artifact in &artifacts {
        let predicted = predict_class_vector(&artifact.matrix, &weights)
            .map_err(|e| runtime(&format!("predicting class {:?}", artifact.label), e))?;
        write!(out, "{}", artifact.label).map_err(|e| runtime("writing predictions", e))?;
        for x in &predicted {
            write!(out, "\t{}", x).map_err(|e| runtime("writing predictions", e))?;
        }
        writeln!(out).map_err(|e| runtime("writing predictions", e))?;
    }
    out.flush().map_err(|e| runtime("writing predictions", e))?;

    if let Some(path) = &args.candidates_out {
        let mut out = create(path)?;
        for artifact in &artifacts {
            for (j, candidate) in artifact.candidates.as_array().iter().enumerate() {
                write!(out, "{}\tC{}", artifact.label, j + 1)
                    .map_err(|e| runtime("writing candidates", e))?;
                for x in candidate.iter() {
                    write!(out, "\t{}", x).map_err(|e| runtime("writing candidates", e))?;
                }
                writeln!(out).map_err(|e| runtime("writing candidates", e))?;
            }
        }
        out.flush().map_err(|e| runtime("writing candidates", e))?;
    }
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let config = args.pipeline.to_config()?;
    let (table, classes) = read_inputs(&args.embeddings, &args.ontology)?;
    let report = evaluate(&classes, &table, &config, args.protocol.into())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = create(&args.out)?;
    out.write_all(render_report_tsv(&report).as_bytes())
        .map_err(|e| runtime("writing report", e))?;
    out.flush().map_err(|e| runtime("writing report", e))?;
    if let Some(path) = &args.json_out {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &report)
            .map_err(|e| runtime("writing report JSON", e))?;
        out.flush().map_err(|e| runtime("writing report JSON", e))?;
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.classes == 0 || args.instances == 0 || args.dim == 0 {
        return Err(CliError::Usage(
            "--classes, --instances, and --dim must all be at least 1".into(),
        ));
    }
    if args.schism < 0.0 || args.label_noise < 0.0 {
        return Err(CliError::Usage("--schism and --label-noise must be nonnegative".into()));
    }
    let config = SyntheticConfig {
        n_classes: args.classes,
        instances_per_class: args.instances,
        dim: args.dim,
        schism: args.schism,
        label_noise: args.label_noise,
        seed: args.seed,
    };
    let (table, classes, truth) = generate_synthetic(&config);
    let mut out = create(&args.out_embeddings)?;
    table.save(&mut out).map_err(|e| runtime("writing embeddings", e))?;
    out.flush().map_err(|e| runtime("writing embeddings", e))?;
    let mut out = create(&args.out_ontology)?;
    save_ontology(&classes, &mut out).map_err(|e| runtime("writing ontology", e))?;
    out.flush().map_err(|e| runtime("writing ontology", e))?;
    let mut out = create(&args.out_truth)?;
    serde_json::to_writer_pretty(&mut out, &truth).map_err(|e| runtime("writing ground truth", e))?;
    out.flush().map_err(|e| runtime("writing ground truth", e))?;
    Ok(())
}
