use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{evaluate_split, GroundTruth, ImageEval, Report};
use crate::bundleio::EmbeddingBundle;
use crate::classifier::ClassifierModel;
use crate::incremental::{imprint_novel_class, remove_novel_class, ShotSet};
use crate::maskops::Instance;
use crate::numcore::{RngState, Tensor};
use crate::pipeline::{run_inference, InferenceConfig};
use crate::{Error, Result};

/// A test image: its bundle and annotated instances.
#[derive(Debug, Clone)]
pub struct TestImage {
    pub bundle: EmbeddingBundle,
    pub gts: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub n_repeats: usize,
    pub n_shots: usize,
    pub seed: u64,
    pub inference: InferenceConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            n_repeats: 10,
            n_shots: 1,
            seed: 0,
            inference: InferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub config: EpisodeConfig,
    /// The base model before any imprinting; its novel split is empty.
    pub base_only: Report,
    pub mean: Report,
    pub episodes: Vec<Report>,
    /// Pool index of each class's shots, per episode.
    pub shots: Vec<BTreeMap<u32, Vec<usize>>>,
}

/// Repeated few-shot evaluation. Each episode draws `n_shots` shots per
/// novel class from its own RNG stream, imprints every novel class, runs
/// inference on all test images, evaluates, and removes the novel rows.
pub fn run_fewshot_episodes(
    base_model: &ClassifierModel,
    test: &[TestImage],
    shot_pool: &BTreeMap<u32, Vec<Tensor>>,
    cfg: &EpisodeConfig,
) -> Result<EpisodeReport> {
    if cfg.n_repeats == 0 || cfg.n_shots == 0 {
        return Err(Error::InvalidConfig("n_repeats and n_shots must be >= 1".into()));
    }
    let layout = &base_model.layout;
    if !layout.active_novel().is_empty() {
        return Err(Error::InvalidConfig(
            "episodes start from a base model with no imprinted novel class".into(),
        ));
    }
    let missing: Vec<u32> = layout
        .novel_class_ids
        .iter()
        .copied()
        .filter(|c| shot_pool.get(c).is_none_or(|p| p.len() < cfg.n_shots))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingShots(missing));
    }

    let evaluate = |model: &ClassifierModel| -> Result<Report> {
        let preds: Vec<Vec<Instance>> = test
            .iter()
            .map(|t| run_inference(&t.bundle, model, &cfg.inference))
            .collect::<Result<_>>()?;
        let images: Vec<ImageEval<'_>> = test
            .iter()
            .zip(&preds)
            .map(|(t, p)| ImageEval { preds: p, gts: &t.gts })
            .collect();
        Ok(evaluate_split(&images, &model.layout))
    };
    let base_only = evaluate(base_model)?;

    let mut episodes = Vec::with_capacity(cfg.n_repeats);
    let mut drawn = Vec::with_capacity(cfg.n_repeats);
    for episode in 0..cfg.n_repeats {
        let mut rng = RngState::stream(cfg.seed, episode as u64);
        let mut model = base_model.clone();
        let mut picks = BTreeMap::new();
        for &class in &layout.novel_class_ids {
            let pool = &shot_pool[&class];
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            // partial Fisher-Yates: first n_shots entries are the draw
            for i in 0..cfg.n_shots {
                let j = i + rng.next_below(pool.len() - i);
                idx.swap(i, j);
            }
            idx.truncate(cfg.n_shots);
            let shots = ShotSet::new(class, idx.iter().map(|&i| pool[i].clone()).collect())?;
            model = imprint_novel_class(&model, &shots)?;
            picks.insert(class, idx);
        }
        episodes.push(evaluate(&model)?);
        for &class in &layout.novel_class_ids {
            model = remove_novel_class(&model, class)?;
        }
        debug_assert_eq!(&model, base_model);
        drawn.push(picks);
    }
    Ok(EpisodeReport {
        config: cfg.clone(),
        base_only,
        mean: Report::mean_of(&episodes),
        episodes,
        shots: drawn,
    })
}
