use std::path::{Path, PathBuf};

use clap::Subcommand;
use s3a::autoencoder::{encode_stack, load_model, save_model, AutoencoderParams, ModelHeader, TrainingStage};
use s3a::classifier::{train_svm, Label};
use s3a::datakit::{
    average_pool, generate_synthetic, load_features, load_manifest, manifest_dir, resolve_features,
    save_features, save_manifest, square_side, Centering, DatasetManifest, SYNTH_FEATURE_FILE,
};
use s3a::protocol::{render_report, roc_csv, run_combined, run_cross_ethnicity, svm_label, EvalReport, ProtocolKind};
use s3a::trainer::{finetune, pretrain, TrainReport};
use s3a::Matrix;

use crate::config::{ProtocolFlags, RunConfig, SvmFlags, SynthFlags, TrainFlags, CONFIG_HELP};
use crate::{read_text, require, CliError};

const OUT_DIR: &str = "s3a_out";

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature file and manifest.
    Synth {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long, default_value = OUT_DIR)]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: SynthFlags,
    },
    /// Unsupervised L1 pretraining of the encoder stack.
    Pretrain {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "s3a_out/pretrained.s3am")]
        out: PathBuf,
        /// Per-epoch objectives as JSON lines.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Subclass-supervised fine-tuning of a pretrained model.
    Finetune {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "s3a_out/finetuned.s3am")]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Encode every manifest record with a model.
    Extract {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "s3a_out/codes.s3af")]
        out: PathBuf,
        /// Average-pool factor for square image vectors.
        #[arg(long)]
        pool: Option<usize>,
    },
    /// Train the linear SVM on extracted codes.
    TrainSvm {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Codes from `extract`, one column per manifest record.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "s3a_out/svm.json")]
        out: PathBuf,
        #[command(flatten)]
        flags: SvmFlags,
    },
    /// Run the combined or cross-ethnicity protocol.
    Evaluate {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Pretrained model every trial starts from; without it each trial
        /// pretrains on its own training set.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "s3a_out/report.json")]
        out: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        svm: SvmFlags,
        #[command(flatten)]
        protocol: ProtocolFlags,
    },
    /// Print the resolved configuration as JSON, for use as a template.
    Config {
        #[arg(long, help = CONFIG_HELP)]
        config: Option<PathBuf>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an evaluation report as text tables and ROC CSV files.
    Report {
        #[arg(long, default_value = "s3a_out/report.json")]
        report: PathBuf,
        #[arg(long, default_value = OUT_DIR)]
        out_dir: PathBuf,
    },
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { config, out_dir, flags } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            flags.apply(&mut cfg.synth);
            cfg.log("synth");
            let (x, manifest) = generate_synthetic(&cfg.synth)?;
            create_dir(&out_dir)?;
            save_features(&out_dir.join(SYNTH_FEATURE_FILE), &x)?;
            save_manifest(&out_dir.join("manifest.csv"), &manifest)?;
            println!(
                "wrote {} samples of dimension {} to {}",
                x.cols(),
                x.rows(),
                out_dir.display()
            );
        }
        Command::Pretrain {
            config,
            manifest,
            out,
            report,
            flags,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            flags.apply(&mut cfg);
            cfg.log("pretrain");
            let (_, x) = load_inputs(&manifest, &cfg)?;
            let centering = Centering::fit(&x)?;
            let xc = centering.apply(&x)?;
            let dims = cfg.pipeline.hidden_dims_for(x.rows());
            let (params, rep) = pretrain(&xc, &dims, &cfg.pipeline.train)?;
            write_model(&out, &params, &cfg, TrainingStage::Pretrained, centering.mean)?;
            write_report(report.as_deref(), &rep)?;
            println!("pretrained {} -> {:?}, objective {:.6}", x.rows(), dims, rep.final_objective());
        }
        Command::Finetune {
            config,
            manifest,
            model,
            out,
            report,
            flags,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            flags.apply(&mut cfg);
            cfg.log("finetune");
            let (header, params) = load_model(require(&model)?)?;
            if header.training_stage == TrainingStage::Initialized {
                return Err(CliError::StageMismatch(format!(
                    "{} has not been pretrained",
                    model.display()
                )));
            }
            let (m, x) = load_inputs(&manifest, &cfg)?;
            let xc = center_for(&header, &params, &x)?;
            let (params, rep) = finetune(params, &xc, &m.partition()?, &cfg.pipeline.train)?;
            let mean = header.input_mean.unwrap_or_else(|| Centering::fit(&x).expect("non-empty").mean);
            write_model(&out, &params, &cfg, TrainingStage::Finetuned, mean)?;
            write_report(report.as_deref(), &rep)?;
            println!("finetuned, objective {:.6}", rep.final_objective());
        }
        Command::Extract {
            config,
            manifest,
            model,
            out,
            pool,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if pool.is_some() {
                cfg.pool = pool;
            }
            cfg.log("extract");
            let (header, params) = load_model(require(&model)?)?;
            let (_, x) = load_inputs(&manifest, &cfg)?;
            let codes = encode_stack(&params, &center_for(&header, &params, &x)?)?;
            write_features(&out, &codes)?;
            println!("extracted {} codes of dimension {}", codes.cols(), codes.rows());
        }
        Command::TrainSvm {
            config,
            manifest,
            features,
            out,
            flags,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            flags.apply(&mut cfg);
            cfg.log("train-svm");
            let m = read_manifest(&manifest, &cfg)?;
            let codes = load_features(require(&features)?)?;
            if codes.cols() != m.len() {
                return Err(CliError::StageMismatch(format!(
                    "{} holds {} columns for {} manifest records",
                    features.display(),
                    codes.cols(),
                    m.len()
                )));
            }
            let labels: Vec<Label> = m.records.iter().map(|r| svm_label(r.class_label)).collect();
            let svm = train_svm(&codes, &labels, &cfg.pipeline.svm)?;
            create_parent(&out)?;
            svm.save(&out)?;
            let correct = (0..codes.cols())
                .filter(|&c| svm.predict(&codes.column(c)).map(|l| l == labels[c]).unwrap_or(false))
                .count();
            println!("training accuracy {:.4}", correct as f64 / codes.cols() as f64);
        }
        Command::Evaluate {
            config,
            manifest,
            model,
            out,
            train,
            svm,
            protocol,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            train.apply(&mut cfg);
            svm.apply(&mut cfg);
            protocol.apply(&mut cfg);
            cfg.log("evaluate");
            let (m, x) = load_inputs(&manifest, &cfg)?;
            let pretrained = match &model {
                Some(path) => {
                    let (_, params) = load_model(require(path)?)?;
                    check_input_dim(&params, &x)?;
                    Some(params)
                }
                None => None,
            };
            let report = match cfg.protocol {
                ProtocolKind::Combined => run_combined(&m, &x, &cfg.pipeline, pretrained.as_ref())?,
                ProtocolKind::CrossEthnicity => run_cross_ethnicity(&m, &x, &cfg.pipeline, pretrained.as_ref())?,
            };
            create_parent(&out)?;
            write_file(&out, report.to_json()?.as_bytes())?;
            println!("wrote {} cells to {}", report.cells.len(), out.display());
        }
        Command::Config { config, out } => {
            let text = RunConfig::load(config.as_deref())?.to_json();
            match out {
                Some(path) => {
                    create_parent(&path)?;
                    write_file(&path, text.as_bytes())?;
                }
                None => print!("{text}"),
            }
        }
        Command::Report { report, out_dir } => {
            let r = EvalReport::from_json(&read_text(&report)?)?;
            let text = render_report(&r);
            create_dir(&out_dir)?;
            write_file(&out_dir.join("report.txt"), text.as_bytes())?;
            for curve in &r.roc {
                let name = format!("roc_{}.csv", curve.algorithm.name());
                write_file(&out_dir.join(name), roc_csv(&curve.points).as_bytes())?;
            }
            print!("{text}");
        }
    }
    Ok(())
}

fn read_manifest(path: &Path, cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    let mut m = load_manifest(require(path)?)?;
    m.subclass_scheme = cfg.subclass_scheme;
    Ok(m)
}

/// Manifest plus its feature matrix, pooled when configured.
fn load_inputs(path: &Path, cfg: &RunConfig) -> Result<(DatasetManifest, Matrix), CliError> {
    let m = read_manifest(path, cfg)?;
    let dir = manifest_dir(path);
    for r in &m.records {
        let source = match r.feature_ref() {
            Some((file, _)) => dir.join(file),
            None => dir.join(&r.source_path),
        };
        require(&source)?;
    }
    let mut x = resolve_features(&m, &dir)?;
    if let Some(factor) = cfg.pool {
        let side = square_side(x.rows()).ok_or_else(|| {
            CliError::Config(format!("--pool needs square image vectors, got dimension {}", x.rows()))
        })?;
        x = average_pool(&x, side, factor)?;
    }
    Ok((m, x))
}

fn check_input_dim(params: &AutoencoderParams, x: &Matrix) -> Result<(), CliError> {
    if params.input_dim != x.rows() {
        return Err(CliError::StageMismatch(format!(
            "model expects input dimension {}, data has {}",
            params.input_dim,
            x.rows()
        )));
    }
    Ok(())
}

/// Applies the model's stored training mean, or the data's own mean when
/// the model carries none.
fn center_for(header: &ModelHeader, params: &AutoencoderParams, x: &Matrix) -> Result<Matrix, CliError> {
    check_input_dim(params, x)?;
    let centering = match &header.input_mean {
        Some(mean) => Centering { mean: mean.clone() },
        None => Centering::fit(x)?,
    };
    Ok(centering.apply(x)?)
}

fn write_model(
    path: &Path,
    params: &AutoencoderParams,
    cfg: &RunConfig,
    stage: TrainingStage,
    mean: Vec<f64>,
) -> Result<(), CliError> {
    let t = &cfg.pipeline.train;
    let mut header = ModelHeader::for_params(params, t.lambda, t.seed, stage);
    header.input_mean = Some(mean);
    create_parent(path)?;
    save_model(path, &header, params)?;
    Ok(())
}

fn write_features(path: &Path, m: &Matrix) -> Result<(), CliError> {
    create_parent(path)?;
    Ok(save_features(path, m)?)
}

fn write_report(path: Option<&Path>, rep: &TrainReport) -> Result<(), CliError> {
    if let Some(path) = path {
        create_parent(path)?;
        write_file(path, rep.to_jsonl()?.as_bytes())?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(s3a::Error::Io {
        path: path.to_owned(),
        source,
    })
}
