use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use aavit::data::{synth_corpus, Dataset, SampleManifest, Split, SplitCounts, SynthSpec};
use aavit::metrics::{
    ablation_table, aggregate_by_video, eval_table, evaluate, read_scores, write_scores, EvalReport, ScoreRecord,
    DEFAULT_DET_POINTS,
};
use aavit::model::{checkpoint, params};
use aavit::train::{mean_loss, score_split, train, RunConfig, TrainOutcome, FINAL_CHECKPOINT};
use aavit::{Error, HeadKind, Model};

use crate::failure::{CliResult, Failure, OutputContext};

pub const RUN_METADATA_VERSION: u32 = 1;
pub const RUN_FILE: &str = "run.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TEXT: &str = "ablation.txt";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| {
        Failure::output(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| {
        Failure::output(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Loads a run configuration from a config file or a previous run's
/// metadata, then applies `--seed` and `--set` overrides in that order.
pub fn load_config(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> CliResult<RunConfig> {
    let mut cfg = match path {
        None => {
            warn!("no --config given, using full-size model defaults");
            RunConfig::default()
        }
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
            let mut value: Value =
                serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            // run metadata embeds the configuration under "config"
            if let Some(inner) = value.get_mut("config").map(Value::take) {
                value = inner;
            }
            serde_json::from_value(value).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    let cfg = cfg.with_overrides(overrides)?;
    Ok(cfg)
}

pub fn load_manifest(path: &Path) -> CliResult<SampleManifest> {
    Ok(SampleManifest::from_file(path)?)
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub counts: SplitCounts,
    pub image_size: usize,
    pub frames_per_video: usize,
    pub seed: u64,
}

pub fn run_synth(args: &SynthArgs) -> CliResult<()> {
    let mut spec = SynthSpec::new(args.counts, args.image_size, args.seed);
    spec.frames_per_video = args.frames_per_video;
    let manifest = synth_corpus(&args.out, &spec).map_err(|e| match e {
        Error::Io { .. } => Failure::output(e),
        Error::Contract(msg) => Failure::config(msg),
        e => e.into(),
    })?;
    info!("wrote {} images under {}", manifest.entries().len(), args.out.display());
    print!("{}", manifest.summary());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FormatVersions {
    pub checkpoint: u32,
    pub run_metadata: u32,
}

/// Everything needed to repeat a training run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub formats: FormatVersions,
    pub seed: u64,
    pub config: RunConfig,
    pub manifest: String,
    pub parameters: usize,
    pub steps: usize,
    pub batch_order_hash: String,
    pub final_batch_loss: Option<f32>,
    pub train_loss: f64,
    pub best_dev: Option<(usize, f64)>,
}

fn train_one(cfg: &RunConfig, manifest: &SampleManifest, manifest_arg: &Path, out: &Path) -> CliResult<TrainOutcome> {
    let model = Model::<f32>::init(cfg.model.clone())?;
    let parameters = params::count(model.params());
    info!(
        "training {} ({parameters} parameters) for {} epochs, seed {}",
        cfg.model.head_kind.label(),
        cfg.train.epochs,
        cfg.train.seed
    );
    let outcome = train(model, manifest, &cfg.train, Some(out)).map_err(|e| match e {
        Error::Io { .. } => Failure::output(e),
        e => e.into(),
    })?;
    info!("batch order hash {}", outcome.batch_order_hash);
    let train_loss = mean_loss(&outcome.model, &Dataset::load(manifest, Split::Train)?)?;
    info!("train loss {train_loss:.6} after {} steps", outcome.history.len());
    let meta = RunMetadata {
        command: "train".into(),
        formats: FormatVersions {
            checkpoint: checkpoint::FORMAT_VERSION,
            run_metadata: RUN_METADATA_VERSION,
        },
        seed: cfg.train.seed,
        config: cfg.clone(),
        manifest: manifest_arg.display().to_string(),
        parameters,
        steps: outcome.history.len(),
        batch_order_hash: outcome.batch_order_hash.clone(),
        final_batch_loss: outcome.history.last().map(|r| r.loss),
        train_loss,
        best_dev: outcome.best_dev,
    };
    write_file(&out.join(RUN_FILE), to_json(&meta))?;
    Ok(outcome)
}

pub fn run_train(cfg: &RunConfig, manifest_path: &Path, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(manifest_path)?;
    create_dir(out)?;
    train_one(cfg, &manifest, manifest_path, out)?;
    info!("checkpoint written to {}", out.join(FINAL_CHECKPOINT).display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    Frame,
    Video,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub granularity: Granularity,
    pub dev: Option<EvalReport>,
    pub test: Option<EvalReport>,
}

impl Report {
    pub fn table(&self) -> String {
        eval_table(
            &self.model,
            self.dev.as_ref().map(|r| r.eer),
            self.test.as_ref().map(|r| r.eer),
        )
    }
}

fn split_records(
    model: &Model<f32>,
    manifest: &SampleManifest,
    split: Split,
    granularity: Granularity,
) -> CliResult<Vec<ScoreRecord>> {
    let frames = score_split(model, manifest, split)?;
    Ok(match granularity {
        Granularity::Frame => frames,
        Granularity::Video => aggregate_by_video(&frames, manifest)?,
    })
}

fn write_report(report: &Report, out: &Path) -> CliResult<()> {
    write_file(&out.join(REPORT_JSON), to_json(report))?;
    let table = report.table();
    write_file(&out.join(REPORT_TEXT), &table)?;
    print!("{table}");
    Ok(())
}

/// Scores the dev and test splits that the manifest has.
pub fn run_eval(checkpoint_path: &Path, manifest_path: &Path, out: &Path, granularity: Granularity) -> CliResult<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let manifest = load_manifest(manifest_path)?;
    create_dir(out)?;
    let mut reports = [None, None];
    for (slot, split) in [Split::Dev, Split::Test].into_iter().enumerate() {
        if !manifest.has_split(split) {
            continue;
        }
        let records = split_records(&model, &manifest, split, granularity)?;
        write_scores(&out.join(format!("scores_{split}.csv")), &records).output()?;
        reports[slot] = Some(evaluate(&records, DEFAULT_DET_POINTS)?);
    }
    let [dev, test] = reports;
    if dev.is_none() && test.is_none() {
        return Err(Error::Contract("manifest has neither a dev nor a test split".into()).into());
    }
    let report = Report {
        model: model.config().head_kind.label().into(),
        granularity,
        dev,
        test,
    };
    write_report(&report, out)
}

/// Rebuilds a report from existing score files.
pub fn run_report(dev: Option<&Path>, test: Option<&Path>, model: &str, out: Option<&Path>) -> CliResult<()> {
    if dev.is_none() && test.is_none() {
        return Err(Failure::config("report needs --dev and/or --test score files"));
    }
    let load = |p: Option<&Path>| -> CliResult<Option<EvalReport>> {
        p.map(|p| Ok(evaluate(&read_scores(p)?, DEFAULT_DET_POINTS)?))
            .transpose()
    };
    let report = Report {
        model: model.into(),
        granularity: Granularity::Frame,
        dev: load(dev)?,
        test: load(test)?,
    };
    match out {
        Some(out) => {
            create_dir(out)?;
            write_report(&report, out)
        }
        None => {
            print!("{}", report.table());
            Ok(())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub head_kind: HeadKind,
    pub test_eer: f64,
    pub batch_order_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

fn head_dir(kind: HeadKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .expect("head kinds serialize as strings")
}

/// Trains the three head variants with one seed and one data order, then
/// compares their test EER.
pub fn run_ablation(base: &RunConfig, manifest_path: &Path, out: &Path) -> CliResult<()> {
    let manifest = load_manifest(manifest_path)?;
    if !manifest.has_split(Split::Test) {
        return Err(Error::Contract("ablation needs a test split".into()).into());
    }
    create_dir(out)?;
    let mut rows = Vec::new();
    for kind in HeadKind::ALL {
        let mut cfg = base.clone();
        cfg.model.head_kind = kind;
        cfg.validate()?;
        let dir = out.join(head_dir(kind));
        create_dir(&dir)?;
        let outcome = train_one(&cfg, &manifest, manifest_path, &dir)?;
        let records = score_split(&outcome.model, &manifest, Split::Test)?;
        write_scores(&dir.join("scores_test.csv"), &records).output()?;
        let report = evaluate(&records, DEFAULT_DET_POINTS)?;
        info!(
            "{}: test EER {:.4}, batch order {}",
            kind.label(),
            report.eer,
            outcome.batch_order_hash
        );
        rows.push(AblationRow {
            model: kind.label().into(),
            head_kind: kind,
            test_eer: report.eer,
            batch_order_hash: outcome.batch_order_hash,
        });
    }
    if rows.windows(2).any(|w| w[0].batch_order_hash != w[1].batch_order_hash) {
        return Err(Error::Contract("head variants saw different batch orders".into()).into());
    }
    let table_rows: Vec<(&str, f64)> = rows.iter().map(|r| (r.model.as_str(), r.test_eer)).collect();
    let table = ablation_table(&table_rows);
    let report = AblationReport {
        seed: base.train.seed,
        rows,
    };
    write_file(&out.join(ABLATION_JSON), to_json(&report))?;
    write_file(&out.join(ABLATION_TEXT), &table)?;
    print!("{table}");
    Ok(())
}
