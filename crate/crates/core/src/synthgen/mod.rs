//! Synthetic scenes with known class prototypes.
//!
//! Each class (and the background) has a unit prototype vector in
//! `R^c_in`. A point record's embedding is its prototype plus Gaussian
//! noise, broadcast over the `embed_h×embed_w` grid, and its logits are
//! exactly the mask of the shape under the point. Because the ground truth
//! is known, classifier and pipeline accuracy can be checked directly.

mod scene;

pub use scene::{SceneObject, Shape, ShapeKind, MAX_PLACEMENT_ATTEMPTS};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundleio::{
    write_annotations, write_bundle, write_json, Annotation, AnnotationSet, Category,
    EmbeddingBundle, ImageInfo, LabelEntry, LabelSet, PointRecord, Provenance, ShotIndex, ShotRef,
    Split,
};
use crate::classifier::{ClassLayout, BACKGROUND};
use crate::maskops::{
    erode, grid_points, rle_encode, sample_training_points, LogitGrid, MaskGrid, PromptPoint,
    SampleTarget, StructuringElement,
};
use crate::numcore::{dot, RngState, Tensor};
use crate::{Error, Result};
use scene::Placement;

/// How point logits are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogitMode {
    /// +2 inside the shape, -2 outside.
    #[default]
    Clean,
    /// Values grow with Chebyshev distance from the shape boundary, in
    /// steps of 0.5 up to ±2, so thin bands sit inside the stability band.
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub c_in: usize,
    pub embed_h: usize,
    pub embed_w: usize,
    pub n_base: usize,
    pub n_novel: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Shape bounding-box side range in pixels.
    pub min_size: usize,
    pub max_size: usize,
    /// Every pair of prototypes has cosine below this.
    pub cosine_bound: f64,
    pub sigma: f64,
    pub points_per_side: usize,
    /// Sampled training points per train image.
    pub train_points: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub shots_per_class: usize,
    pub logits: LogitMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 64,
            width: 64,
            c_in: 16,
            embed_h: 8,
            embed_w: 8,
            n_base: 6,
            n_novel: 3,
            min_objects: 1,
            max_objects: 4,
            min_size: 10,
            max_size: 22,
            cosine_bound: 0.3,
            sigma: 0.05,
            points_per_side: 8,
            train_points: 16,
            n_train: 160,
            n_test: 16,
            shots_per_class: 5,
            logits: LogitMode::Clean,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.c_in == 0 || self.embed_h == 0 || self.embed_w == 0 {
            return bad("embedding dimensions must be >= 1");
        }
        if self.n_base == 0 {
            return bad("n_base must be >= 1");
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return bad("need 1 <= min_objects <= max_objects");
        }
        if self.min_size < 5 || self.min_size > self.max_size {
            return bad("need 5 <= min_size <= max_size");
        }
        if self.max_size > self.height.min(self.width) {
            return bad("max_size exceeds the image");
        }
        if !(self.cosine_bound > -1.0 && self.cosine_bound <= 1.0) {
            return bad("cosine_bound must be in (-1, 1]");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and >= 0");
        }
        if self.points_per_side == 0 || self.train_points == 0 {
            return bad("points_per_side and train_points must be >= 1");
        }
        if self.n_novel > 0 && self.shots_per_class == 0 {
            return bad("shots_per_class must be >= 1");
        }
        Ok(())
    }

    pub fn base_ids(&self) -> Vec<u32> {
        (1..=self.n_base as u32).collect()
    }

    pub fn novel_ids(&self) -> Vec<u32> {
        let start = self.n_base as u32 + 1;
        (start..start + self.n_novel as u32).collect()
    }

    pub fn layout(&self) -> Result<ClassLayout> {
        ClassLayout::new(self.base_ids(), self.novel_ids())
    }
}

/// Unit prototype per category; id 0 is the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeTable {
    pub prototypes: BTreeMap<u32, Vec<f64>>,
}

impl PrototypeTable {
    /// Draws unit Gaussian directions, redrawing each one until its cosine
    /// with every earlier prototype is below `bound`.
    pub fn generate(ids: &[u32], dim: usize, bound: f64, rng: &mut RngState) -> Result<Self> {
        let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(ids.len());
        for _ in ids {
            let mut found = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let v: Vec<f64> = (0..dim).map(|_| rng.next_gaussian()).collect();
                let n = dot(&v, &v).sqrt();
                if n == 0.0 {
                    continue;
                }
                let v: Vec<f64> = v.into_iter().map(|x| x / n).collect();
                if accepted.iter().all(|p| dot(p, &v) < bound) {
                    found = Some(v);
                    break;
                }
            }
            accepted.push(found.ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "cannot draw {} prototypes in {dim} dimensions with cosine < {bound}",
                    ids.len()
                ))
            })?);
        }
        Ok(PrototypeTable {
            prototypes: ids.iter().copied().zip(accepted).collect(),
        })
    }

    pub fn get(&self, id: u32) -> Option<&[f64]> {
        self.prototypes.get(&id).map(Vec::as_slice)
    }

    /// Category whose prototype has the highest cosine with `v`.
    pub fn nearest(&self, v: &[f64]) -> u32 {
        let n = dot(v, v).sqrt();
        let mut best = (BACKGROUND, f64::NEG_INFINITY);
        for (&id, p) in &self.prototypes {
            let c = dot(p, v) / n;
            if c > best.1 {
                best = (id, c);
            }
        }
        best.0
    }

    /// `prototype + N(0, sigma²)` per channel, broadcast to `c×h×w`.
    /// Values are rounded to `f32` so they survive a bundle round trip.
    pub fn sample_embedding(&self, id: u32, sigma: f64, h: usize, w: usize, rng: &mut RngState) -> Tensor {
        let proto = &self.prototypes[&id];
        let mut data = Vec::with_capacity(proto.len() * h * w);
        for &p in proto {
            let v = (p + sigma * rng.next_gaussian()) as f32 as f64;
            data.extend(std::iter::repeat_n(v, h * w));
        }
        Tensor::new(vec![proto.len(), h, w], data).expect("sized above")
    }
}

/// A generated dataset in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub layout: ClassLayout,
    pub prototypes: PrototypeTable,
    pub train: Vec<EmbeddingBundle>,
    pub labels: LabelSet,
    pub test: Vec<EmbeddingBundle>,
    pub annotations: AnnotationSet,
    pub shots: Vec<EmbeddingBundle>,
    pub shot_index: ShotIndex,
}

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const SHOT_STREAM: u64 = 3;

pub fn train_bundle_name(i: usize) -> String {
    format!("train_{i:04}.sifb")
}

pub fn test_bundle_name(i: usize) -> String {
    format!("test_{i:04}.sifb")
}

pub fn shot_bundle_name(i: usize) -> String {
    format!("shot_{i:04}.sifb")
}

struct Builder<'a> {
    cfg: &'a SynthConfig,
    prototypes: &'a PrototypeTable,
}

impl Builder<'_> {
    fn placement<'p>(&self, required: Option<&'p [PromptPoint]>) -> Placement<'p> {
        Placement {
            height: self.cfg.height,
            width: self.cfg.width,
            min_size: self.cfg.min_size,
            max_size: self.cfg.max_size,
            required_points: required,
        }
    }

    fn random_classes(&self, pool: &[u32], rng: &mut RngState) -> Vec<u32> {
        let span = self.cfg.max_objects - self.cfg.min_objects + 1;
        let n = self.cfg.min_objects + rng.next_below(span);
        (0..n).map(|_| pool[rng.next_below(pool.len())]).collect()
    }

    fn logits(&self, mask: &MaskGrid) -> LogitGrid {
        let values = match self.cfg.logits {
            LogitMode::Clean => mask.bits().iter().map(|&b| if b { 2.0 } else { -2.0 }).collect(),
            LogitMode::Ramp => ramp(mask),
        };
        LogitGrid::new(mask.height(), mask.width(), values).expect("finite")
    }

    fn record(&self, point: PromptPoint, logits: LogitGrid, class: u32, rng: &mut RngState) -> PointRecord {
        PointRecord {
            point,
            logits,
            embedding: self.prototypes.sample_embedding(
                class,
                self.cfg.sigma,
                self.cfg.embed_h,
                self.cfg.embed_w,
                rng,
            ),
        }
    }

    fn bundle(&self, image_id: u64, records: Vec<PointRecord>) -> EmbeddingBundle {
        EmbeddingBundle {
            image_id,
            height: self.cfg.height,
            width: self.cfg.width,
            provenance: Provenance::Synthetic,
            notes: Some(format!("synthgen seed {}", self.cfg.seed)),
            c_in: self.cfg.c_in,
            embed_h: self.cfg.embed_h,
            embed_w: self.cfg.embed_w,
            logit_h: self.cfg.height,
            logit_w: self.cfg.width,
            records,
        }
    }

    fn background(&self, objects: &[SceneObject]) -> MaskGrid {
        MaskGrid::from_fn(self.cfg.height, self.cfg.width, |y, x| {
            !objects.iter().any(|o| o.mask.get(y, x))
        })
    }
}

/// Logits from the Chebyshev distance to the nearest pixel of opposite
/// membership: ±0.5 on the boundary, ±2 at depth 4 and beyond.
fn ramp(mask: &MaskGrid) -> Vec<f64> {
    const LEVELS: isize = 4;
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let mut out = Vec::with_capacity(mask.bits().len());
    for y in 0..h {
        for x in 0..w {
            let inside = mask.get(y as usize, x as usize);
            let mut depth = LEVELS;
            'search: for r in 1..LEVELS {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy < 0 || xx < 0 || yy >= h || xx >= w {
                            continue;
                        }
                        if mask.get(yy as usize, xx as usize) != inside {
                            depth = r;
                            break 'search;
                        }
                    }
                }
            }
            let v = 0.5 * depth as f64;
            out.push(if inside { v } else { -v });
        }
    }
    out
}

/// Generates prototypes, base-only training scenes with sampled labelled
/// points, grid-prompted test scenes over base and novel classes with
/// exact annotations, and a pool of single-object novel shots.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let (base, novel) = (cfg.base_ids(), cfg.novel_ids());
    let mut ids = vec![BACKGROUND];
    ids.extend(&base);
    ids.extend(&novel);
    let mut rng = RngState::stream(cfg.seed, 0);
    let prototypes = PrototypeTable::generate(&ids, cfg.c_in, cfg.cosine_bound, &mut rng)?;
    let b = Builder { cfg, prototypes: &prototypes };
    let kernel = StructuringElement::default();
    let mut next_image_id = 1u64;

    let mut rng = RngState::stream(cfg.seed, TRAIN_STREAM);
    let mut train = Vec::with_capacity(cfg.n_train);
    let mut label_entries = Vec::with_capacity(cfg.n_train);
    for i in 0..cfg.n_train {
        let classes = b.random_classes(&base, &mut rng);
        let objects = b.placement(None).place(&classes, &mut rng)?;
        let masks: Vec<MaskGrid> = objects.iter().map(|o| o.mask.clone()).collect();
        let background = b.background(&objects);
        let points = sample_training_points(&masks, cfg.height, cfg.width, cfg.train_points, kernel, &mut rng)?;
        let mut records = Vec::with_capacity(points.len());
        let mut labels = Vec::with_capacity(points.len());
        for (point, target) in points {
            let (mask, class) = match target {
                SampleTarget::Instance(k) => (&objects[k].mask, objects[k].class_id),
                SampleTarget::Background => (&background, BACKGROUND),
            };
            records.push(b.record(point, b.logits(mask), class, &mut rng));
            labels.push(class);
        }
        label_entries.push(LabelEntry {
            bundle: train_bundle_name(i),
            image_id: next_image_id,
            labels,
        });
        train.push(b.bundle(next_image_id, records));
        next_image_id += 1;
    }

    let mut rng = RngState::stream(cfg.seed, TEST_STREAM);
    let grid = grid_points(cfg.height, cfg.width, cfg.points_per_side);
    let all_classes: Vec<u32> = base.iter().chain(&novel).copied().collect();
    let mut test = Vec::with_capacity(cfg.n_test);
    let mut images = Vec::with_capacity(cfg.n_test);
    let mut annotations = Vec::new();
    for _ in 0..cfg.n_test {
        let classes = b.random_classes(&all_classes, &mut rng);
        let objects = b.placement(Some(&grid)).place(&classes, &mut rng)?;
        let background = b.background(&objects);
        let mut cache: BTreeMap<Option<usize>, LogitGrid> = BTreeMap::new();
        let mut records = Vec::with_capacity(grid.len());
        for &p in &grid {
            let hit = objects.iter().position(|o| o.mask.get(p.y, p.x));
            let (mask, class) = match hit {
                Some(k) => (&objects[k].mask, objects[k].class_id),
                None => (&background, BACKGROUND),
            };
            let logits = cache.entry(hit).or_insert_with(|| b.logits(mask)).clone();
            records.push(b.record(p, logits, class, &mut rng));
        }
        for o in &objects {
            annotations.push(Annotation {
                id: annotations.len() as u64 + 1,
                image_id: next_image_id,
                category_id: o.class_id,
                segmentation: rle_encode(&o.mask),
                score: None,
            });
        }
        images.push(ImageInfo {
            id: next_image_id,
            height: cfg.height,
            width: cfg.width,
        });
        test.push(b.bundle(next_image_id, records));
        next_image_id += 1;
    }
    let categories = base
        .iter()
        .map(|&id| Category { id, name: format!("base_{id}"), split: Split::Base })
        .chain(novel.iter().map(|&id| Category { id, name: format!("novel_{id}"), split: Split::Novel }))
        .collect();
    let annotations = AnnotationSet {
        info: Some(serde_json::json!({ "generator": "synthgen", "config": cfg })),
        images,
        annotations,
        categories,
    };

    let mut rng = RngState::stream(cfg.seed, SHOT_STREAM);
    let mut shots = Vec::with_capacity(novel.len() * cfg.shots_per_class);
    let mut shot_refs = Vec::with_capacity(shots.capacity());
    for &class in &novel {
        for _ in 0..cfg.shots_per_class {
            let objects = b.placement(None).place(&[class], &mut rng)?;
            let interior = erode(&objects[0].mask, kernel).pixels();
            let (y, x) = interior[rng.next_below(interior.len())];
            let record = b.record(PromptPoint::foreground(x, y), b.logits(&objects[0].mask), class, &mut rng);
            shot_refs.push(ShotRef {
                class_id: class,
                bundle: shot_bundle_name(shots.len()),
                point: 0,
            });
            shots.push(b.bundle(next_image_id, vec![record]));
            next_image_id += 1;
        }
    }

    Ok(SynthDataset {
        config: cfg.clone(),
        labels: LabelSet { layout: layout.clone(), images: label_entries },
        layout,
        prototypes,
        train,
        test,
        annotations,
        shots,
        shot_index: ShotIndex { shots: shot_refs },
    })
}

/// Writes the dataset under `dir`:
///
/// ```text
/// config.json  layout.json  prototypes.json
/// train/train_NNNN.sifb  train/labels.json
/// test/test_NNNN.sifb    test/annotations.json
/// shots/shot_NNNN.sifb   shots/shots.json
/// ```
pub fn write_dataset(ds: &SynthDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["train", "test", "shots"] {
        let path = dir.join(sub);
        std::fs::create_dir_all(&path).map_err(|e| Error::io(path, e))?;
    }
    write_json(&ds.config, dir.join("config.json"))?;
    write_json(&ds.layout, dir.join("layout.json"))?;
    write_json(&ds.prototypes, dir.join("prototypes.json"))?;
    for (i, bundle) in ds.train.iter().enumerate() {
        write_bundle(bundle, dir.join("train").join(train_bundle_name(i)))?;
    }
    write_json(&ds.labels, dir.join("train").join("labels.json"))?;
    for (i, bundle) in ds.test.iter().enumerate() {
        write_bundle(bundle, dir.join("test").join(test_bundle_name(i)))?;
    }
    write_annotations(&ds.annotations, dir.join("test").join("annotations.json"))?;
    for (i, bundle) in ds.shots.iter().enumerate() {
        write_bundle(bundle, dir.join("shots").join(shot_bundle_name(i)))?;
    }
    write_json(&ds.shot_index, dir.join("shots").join("shots.json"))
}
