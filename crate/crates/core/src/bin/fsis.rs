//! `fsis` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics are a
//! single line on stderr.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use fsis::bundleio::{
    detect_kind, read_annotations, read_bundle, read_json, read_model, write_annotations,
    write_model, Annotation, AnnotationSet, Category, EmbeddingBundle, FileKind,
    ImageInfo, LabelSet, ShotIndex, Split,
};
use fsis::classifier::{train_classifier, ClassLayout, ClassifierModel, ModelDims, TrainConfig};
use fsis::evalkit::{
    evaluate_split, render_table, run_fewshot_episodes, EpisodeConfig, GroundTruth, ImageEval,
    Report, TestImage,
};
use fsis::incremental::{imprint_novel_class, ShotSet};
use fsis::maskops::{rle_encode, Instance};
use fsis::numcore::Tensor;
use fsis::pipeline::{run_inference, InferenceConfig};
use fsis::synthgen::{generate_dataset, write_dataset, SynthConfig};
use fsis::{Error, Result};

#[derive(Parser)]
#[command(name = "fsis", version, about = "Incremental few-shot instance segmentation head")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// SynthConfig JSON; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the base classifier on labelled bundle points.
    Train {
        /// Directory holding the bundles named in the label file.
        #[arg(long)]
        bundles: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        c_mid: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 7.0)]
        gamma: f64,
    },
    /// Imprint a novel class from shot embeddings.
    AddClass {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        class_id: u32,
        /// Shot references `bundle.sifb:point_index`.
        #[arg(long, num_args = 1.., required = true)]
        shots: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the inference pipeline on one bundle.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Evaluate prediction files against annotations.
    Eval {
        /// Directory of prediction JSON files.
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        ann: PathBuf,
        /// Class layout JSON, or a model whose layout is used.
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Repeated 1-shot episodes over a test set.
    Episodes {
        #[arg(long)]
        model: PathBuf,
        /// Directory with test bundles and annotations.json.
        #[arg(long)]
        test: PathBuf,
        /// Directory with shot bundles and shots.json.
        #[arg(long)]
        shots: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        inference: InferenceArgs,
    },
    /// Check a bundle, model or annotation file.
    Validate {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args)]
struct InferenceArgs {
    #[arg(long, default_value_t = 0.95)]
    stability_thresh: f64,
    #[arg(long, default_value_t = 0.7)]
    nms_iou: f64,
    /// Require the bundle's points to be this prompt grid.
    #[arg(long)]
    points_per_side: Option<usize>,
}

impl InferenceArgs {
    fn config(&self) -> InferenceConfig {
        InferenceConfig {
            stability_thresh: self.stability_thresh,
            nms_iou: self.nms_iou,
            points_per_side: self.points_per_side,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            eprintln!("{line} (see --help)");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, out, seed } => synth(config.as_deref(), &out, seed),
        Command::Train {
            bundles,
            labels,
            out,
            lr,
            batch,
            epochs,
            seed,
            c_mid,
            dim,
            gamma,
        } => {
            let cfg = TrainConfig {
                learning_rate: lr,
                point_batch: batch,
                epochs,
                seed,
            };
            train(&bundles, &labels, &out, &cfg, c_mid, dim, gamma)
        }
        Command::AddClass {
            model,
            class_id,
            shots,
            out,
        } => add_class(&model, class_id, &shots, &out),
        Command::Infer {
            model,
            bundle,
            out,
            inference,
        } => infer(&model, &bundle, &out, &inference.config()),
        Command::Eval {
            preds,
            ann,
            layout,
            format,
        } => eval(&preds, &ann, &layout, format),
        Command::Episodes {
            model,
            test,
            shots,
            repeats,
            seed,
            format,
            inference,
        } => {
            let cfg = EpisodeConfig {
                n_repeats: repeats,
                seed,
                inference: inference.config(),
                ..Default::default()
            };
            episodes(&model, &test, &shots, &cfg, format)
        }
        Command::Validate { file } => validate(&file),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn synth(config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let mut cfg: SynthConfig = match config {
        Some(path) => read_json(path)?,
        None => SynthConfig::default(),
    };
    cfg.seed = seed;
    let ds = generate_dataset(&cfg)?;
    write_dataset(&ds, out)?;
    print_json(&json!({
        "command": "synth",
        "out": out,
        "train_images": ds.train.len(),
        "test_images": ds.test.len(),
        "shots": ds.shots.len(),
        "config": cfg,
    }))
}

fn train(
    dir: &Path,
    labels_path: &Path,
    out: &Path,
    cfg: &TrainConfig,
    c_mid: usize,
    d: usize,
    gamma: f64,
) -> Result<()> {
    let labels: LabelSet = read_json(labels_path)?;
    let mut samples: Vec<(Tensor, u32)> = Vec::new();
    let mut c_in = None;
    for entry in &labels.images {
        let bundle = read_bundle(dir.join(&entry.bundle))?;
        if bundle.image_id != entry.image_id || bundle.records.len() != entry.labels.len() {
            return Err(Error::ReferentialIntegrity(vec![format!(
                "{}: label entry (image {}, {} labels) does not match bundle (image {}, {} points)",
                entry.bundle,
                entry.image_id,
                entry.labels.len(),
                bundle.image_id,
                bundle.records.len()
            )]));
        }
        if *c_in.get_or_insert(bundle.c_in) != bundle.c_in {
            return Err(Error::Inconsistent(format!(
                "{}: c_in {} differs from earlier bundles",
                entry.bundle, bundle.c_in
            )));
        }
        for (record, &label) in bundle.records.into_iter().zip(&entry.labels) {
            samples.push((record.embedding, label));
        }
    }
    let c_in = c_in.ok_or_else(|| Error::InvalidConfig("label file lists no bundles".into()))?;
    let dims = ModelDims { c_in, c_mid, d };
    let model = train_classifier(&samples, dims, labels.layout, gamma, cfg)?;
    write_model(&model, out)?;
    print_json(&json!({
        "command": "train",
        "out": out,
        "samples": samples.len(),
        "dims": dims,
        "gamma": gamma,
        "config": cfg,
        "epoch_losses": model.epoch_losses,
    }))
}

/// Splits `path:index` at the last colon.
fn parse_shot_ref(raw: &str) -> Result<(PathBuf, usize)> {
    let bad = || Error::InvalidConfig(format!("shot reference {raw:?} is not bundle.sifb:index"));
    let (path, idx) = raw.rsplit_once(':').ok_or_else(bad)?;
    let idx = idx.parse().map_err(|_| bad())?;
    Ok((PathBuf::from(path), idx))
}

fn load_shot(path: &Path, point: usize) -> Result<Tensor> {
    let bundle = read_bundle(path)?;
    let n = bundle.records.len();
    bundle
        .records
        .into_iter()
        .nth(point)
        .map(|r| r.embedding)
        .ok_or_else(|| {
            Error::ReferentialIntegrity(vec![format!(
                "{}: point {point} out of range ({n} points)",
                path.display()
            )])
        })
}

fn add_class(model_path: &Path, class_id: u32, shots: &[String], out: &Path) -> Result<()> {
    let model = read_model(model_path)?;
    let embeddings = shots
        .iter()
        .map(|s| {
            let (path, idx) = parse_shot_ref(s)?;
            load_shot(&path, idx)
        })
        .collect::<Result<Vec<_>>>()?;
    let shot_set = ShotSet::new(class_id, embeddings)?;
    let updated = imprint_novel_class(&model, &shot_set)?;
    write_model(&updated, out)?;
    print_json(&json!({
        "command": "add-class",
        "out": out,
        "class_id": class_id,
        "shots": shots,
        "active_novel": updated.layout.active_novel(),
    }))
}

fn categories(layout: &ClassLayout) -> Vec<Category> {
    let entry = |id: u32, split: Split| Category {
        id,
        name: format!("class_{id}"),
        split,
    };
    layout
        .base_class_ids
        .iter()
        .map(|&id| entry(id, Split::Base))
        .chain(layout.novel_class_ids.iter().map(|&id| entry(id, Split::Novel)))
        .collect()
}

fn predictions_to_annotations(
    bundle: &EmbeddingBundle,
    instances: &[Instance],
    layout: &ClassLayout,
    info: serde_json::Value,
) -> AnnotationSet {
    AnnotationSet {
        info: Some(info),
        images: vec![ImageInfo {
            id: bundle.image_id,
            height: bundle.height,
            width: bundle.width,
        }],
        annotations: instances
            .iter()
            .enumerate()
            .map(|(i, inst)| Annotation {
                id: i as u64 + 1,
                image_id: bundle.image_id,
                category_id: inst.class_id,
                segmentation: rle_encode(&inst.mask),
                score: Some(inst.score),
            })
            .collect(),
        categories: categories(layout),
    }
}

fn infer(model_path: &Path, bundle_path: &Path, out: &Path, cfg: &InferenceConfig) -> Result<()> {
    let model = read_model(model_path)?;
    let bundle = read_bundle(bundle_path)?;
    let instances = run_inference(&bundle, &model, cfg)?;
    let info = json!({
        "command": "infer",
        "model": model_path,
        "bundle": bundle_path,
        "config": cfg,
    });
    write_annotations(
        &predictions_to_annotations(&bundle, &instances, &model.layout, info),
        out,
    )?;
    Ok(())
}

/// Files in `dir` with the given extension, sorted by name.
fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.extension().is_some_and(|e| e == ext) && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_layout(path: &Path) -> Result<ClassLayout> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    match detect_kind(&bytes) {
        Some(FileKind::Model) => Ok(read_model(path)?.layout),
        _ => {
            let layout: ClassLayout = serde_json::from_slice(&bytes)?;
            layout.validate()?;
            Ok(layout)
        }
    }
}

fn ground_truth(ann: &AnnotationSet, image_id: u64) -> Result<Vec<GroundTruth>> {
    Ok(ann
        .masks_for_image(image_id)?
        .into_iter()
        .map(|(a, mask)| GroundTruth {
            mask,
            category_id: a.category_id,
        })
        .collect())
}

fn row_label(report: &Report) -> &'static str {
    if report.novel.is_some() {
        "incremental"
    } else {
        "base only"
    }
}

fn eval(preds_dir: &Path, ann_path: &Path, layout_path: &Path, format: Format) -> Result<()> {
    let ann = read_annotations(ann_path)?;
    let layout = load_layout(layout_path)?;
    let known: BTreeSet<u64> = ann.images.iter().map(|i| i.id).collect();
    let mut preds: BTreeMap<u64, Vec<Instance>> = BTreeMap::new();
    let mut problems = Vec::new();
    let files = files_with_extension(preds_dir, "json")?;
    for file in &files {
        let set = read_annotations(file)?;
        for (a, mask) in set
            .images
            .iter()
            .map(|i| set.masks_for_image(i.id))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
        {
            if !known.contains(&a.image_id) {
                problems.push(format!(
                    "{}: image {} is not in the annotations",
                    file.display(),
                    a.image_id
                ));
                continue;
            }
            preds.entry(a.image_id).or_default().push(Instance {
                mask,
                class_id: a.category_id,
                score: a.score.unwrap_or(1.0),
                stability: 1.0,
            });
        }
    }
    if !problems.is_empty() {
        return Err(Error::ReferentialIntegrity(problems));
    }
    let gts = ann
        .images
        .iter()
        .map(|i| ground_truth(&ann, i.id))
        .collect::<Result<Vec<_>>>()?;
    let empty = Vec::new();
    let views: Vec<ImageEval<'_>> = ann
        .images
        .iter()
        .zip(&gts)
        .map(|(i, g)| ImageEval {
            preds: preds.get(&i.id).unwrap_or(&empty),
            gts: g,
        })
        .collect();
    let report = evaluate_split(&views, &layout);
    match format {
        Format::Table => print!("{}", render_table(&[(row_label(&report).into(), &report)])),
        Format::Json => print_json(&json!({
            "command": "eval",
            "preds": preds_dir,
            "prediction_files": files.len(),
            "ann": ann_path,
            "layout": layout_path,
            "report": report,
        }))?,
    }
    Ok(())
}

fn episodes(
    model_path: &Path,
    test_dir: &Path,
    shots_dir: &Path,
    cfg: &EpisodeConfig,
    format: Format,
) -> Result<()> {
    let model = read_model(model_path)?;
    let ann = read_annotations(test_dir.join("annotations.json"))?;
    let mut test = Vec::new();
    for path in files_with_extension(test_dir, "sifb")? {
        let bundle = read_bundle(&path)?;
        if ann.image(bundle.image_id).is_none() {
            return Err(Error::ReferentialIntegrity(vec![format!(
                "{}: image {} is not in the annotations",
                path.display(),
                bundle.image_id
            )]));
        }
        let gts = ground_truth(&ann, bundle.image_id)?;
        test.push(TestImage { bundle, gts });
    }
    let index: ShotIndex = read_json(shots_dir.join("shots.json"))?;
    let mut pool: BTreeMap<u32, Vec<Tensor>> = BTreeMap::new();
    for r in &index.shots {
        let shot = load_shot(&shots_dir.join(&r.bundle), r.point)?;
        pool.entry(r.class_id).or_default().push(shot);
    }
    let report = run_fewshot_episodes(&model, &test, &pool, cfg)?;
    match format {
        Format::Table => {
            let mut rows = vec![("base only".to_string(), &report.base_only)];
            for (i, r) in report.episodes.iter().enumerate() {
                rows.push((format!("episode {}", i + 1), r));
            }
            rows.push((format!("mean of {}", report.episodes.len()), &report.mean));
            print!("{}", render_table(&rows));
        }
        Format::Json => print_json(&json!({
            "command": "episodes",
            "model": model_path,
            "test": test_dir,
            "shots": shots_dir,
            "test_images": test.len(),
            "report": report,
        }))?,
    }
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    let summary = match detect_kind(&bytes) {
        Some(FileKind::Bundle) => {
            let b = fsis::bundleio::bundle_from_bytes(&bytes)?;
            json!({
                "kind": "bundle",
                "image_id": b.image_id,
                "points": b.records.len(),
                "c_in": b.c_in,
                "embedding": [b.embed_h, b.embed_w],
                "logits": [b.logit_h, b.logit_w],
                "provenance": b.provenance,
                "notes": b.notes,
            })
        }
        Some(FileKind::Model) => {
            let m: ClassifierModel = fsis::bundleio::model_from_bytes(&bytes)?;
            json!({
                "kind": "model",
                "dims": m.dims(),
                "gamma": m.gamma,
                "layout": m.layout,
            })
        }
        Some(FileKind::Json) => {
            let set: AnnotationSet = serde_json::from_slice(&bytes)?;
            set.validate()?;
            json!({
                "kind": "annotations",
                "images": set.images.len(),
                "annotations": set.annotations.len(),
                "categories": set.categories.len(),
            })
        }
        None => {
            return Err(Error::InvalidConfig(format!(
                "{}: not a bundle, model or annotation file",
                path.display()
            )))
        }
    };
    print_json(&json!({ "file": path, "valid": true, "summary": summary }))
}
