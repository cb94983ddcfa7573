//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fsis::bundleio::{
    bundle_from_bytes, bundle_to_bytes, model_from_bytes, model_to_bytes, read_annotations,
    write_annotations,
};
use fsis::classifier::{
    classifier_backward, init_model, train_classifier, ClassLayout, ClassifierModel, ModelDims,
    TrainConfig,
};
use fsis::evalkit::{average_precision, GroundTruth, ImageEval};
use fsis::incremental::{imprint_novel_class, remove_novel_class, ShotSet};
use fsis::maskops::{
    erode, nms, sample_training_points, Instance, MaskGrid, SampleTarget, StructuringElement,
};
use fsis::numcore::{norm, softmax_cross_entropy, RngState, Tensor};
use fsis::synthgen::{generate_dataset, SynthConfig};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_input(rng: &mut RngState, shape: [usize; 3]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.next_gaussian()).collect()).unwrap()
}

fn loss(model: &ClassifierModel, x: &Tensor, row: usize) -> f64 {
    let (scores, _) = model.classifier_forward(x).unwrap();
    softmax_cross_entropy(scores.data(), row).unwrap().0
}

/// Signs of both ReLU layers' pre-activations, from a naive zero-padded 3x3 conv.
fn relu_pattern(model: &ClassifierModel, x: &Tensor) -> Vec<bool> {
    let ModelDims { c_in, c_mid, .. } = model.dims();
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let conv = |input: &[f64], cin: usize, weight: &Tensor, bias: &Tensor| {
        let mut out = vec![0.0; c_mid * h * w];
        for o in 0..c_mid {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias.data()[o];
                    for c in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (iy, ix) = (y as isize + ky - 1, xx as isize + kx - 1);
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += weight.data()[((o * cin + c) * 3 + ky as usize) * 3 + kx as usize]
                                        * input[(c * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * h + y) * w + xx] = acc;
                }
            }
        }
        out
    };
    let p = &model.params;
    let pre1 = conv(x.data(), c_in, &p.conv1_weight, &p.conv1_bias);
    let hidden: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
    let pre2 = conv(&hidden, c_mid, &p.conv2_weight, &p.conv2_bias);
    pre1.iter().chain(&pre2).map(|&v| v > 0.0).collect()
}

/// Max relative error of every partial against the fourth-order central
/// difference `(8(L(h) - L(-h)) - (L(2h) - L(-2h))) / 12h`, or `None` if a
/// stencil point flips a ReLU (the loss is then not smooth over the stencil).
fn max_relative_error(model: &ClassifierModel, x: &Tensor, row: usize, h: f64) -> Option<(f64, usize)> {
    let pattern = relu_pattern(model, x);
    let (_, grads) = classifier_backward(model, x, row).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for t in 0..7 {
        for i in 0..grads.tensors()[t].len() {
            let mut at = [0.0; 4];
            for (slot, step) in at.iter_mut().zip([h, -h, 2.0 * h, -2.0 * h]) {
                let mut shifted = model.clone();
                shifted.params.tensors_mut()[t].data_mut()[i] += step;
                if relu_pattern(&shifted, x) != pattern {
                    return None;
                }
                *slot = loss(&shifted, x, row);
            }
            let numeric = (8.0 * (at[0] - at[1]) - (at[2] - at[3])) / (12.0 * h);
            let analytic = grads.tensors()[t].data()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Some((worst, checked))
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let dims = ModelDims { c_in: 4, c_mid: 6, d: 8 };
    let layout = ClassLayout::new(vec![1, 2, 3, 4], vec![]).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut redrawn = 0usize;
    for seed in 0..20u64 {
        let mut model = init_model(dims, layout.clone(), 7.0, 1000 + seed).unwrap();
        let mut rng = RngState::new(seed);
        for t in [&mut model.params.conv1_bias, &mut model.params.conv2_bias, &mut model.params.fc_bias] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.1 * rng.next_gaussian());
        }
        loop {
            let x = random_input(&mut rng, [4, 5, 5]);
            let row = rng.next_below(5);
            match max_relative_error(&model, &x, row, h) {
                Some((err, n)) => {
                    worst = worst.max(err);
                    checked += n;
                    break;
                }
                None => redrawn += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-5 && elapsed < Duration::from_secs(60),
        format!(
            "20 models, {checked} partials, max relative error {worst:.2e} (< 1e-5), \
             {redrawn} inputs redrawn for a ReLU kink inside the h = 1e-4 stencil, {elapsed:.1?} (< 60 s)"
        ),
    )
}

fn cosine_head_exactness() -> Verdict {
    let dims = ModelDims { c_in: 4, c_mid: 6, d: 8 };
    let layout = ClassLayout::new(vec![1, 2, 3], vec![]).unwrap();
    let mut rng = RngState::new(7);
    let mut worst_aligned: f64 = 0.0;
    let mut rescale_equal = 0;
    for case in 0..100u64 {
        let mut model = init_model(dims, layout.clone(), 7.0, case).unwrap();
        let x = random_input(&mut rng, [4, 5, 5]);
        let f = model.feature_extract(&x).unwrap();
        let scale = 0.1 + 10.0 * rng.next_uniform();
        let row: Vec<f64> = f.data().iter().map(|v| scale * v).collect();
        model.params.class_weights.row_mut(2).copy_from_slice(&row);
        let scores = model.cosine_scores(&f).unwrap();
        worst_aligned = worst_aligned.max((scores.data()[2] - 7.0).abs());

        let alpha = 2f64.powi(rng.next_below(41) as i32 - 20);
        let scaled = Tensor::vector(f.data().iter().map(|v| alpha * v).collect());
        let rescaled = model.cosine_scores(&scaled).unwrap();
        if rescaled.data().iter().zip(scores.data()).all(|(a, b)| a.to_bits() == b.to_bits()) {
            rescale_equal += 1;
        }
    }
    check(
        worst_aligned <= 1e-9 && rescale_equal == 100,
        format!(
            "aligned score max |y - 7| = {worst_aligned:.1e} (<= 1e-9); rescaled score vectors bit-equal {rescale_equal}/100"
        ),
    )
}

/// Channel values of a broadcast synthetic embedding.
fn channels(t: &Tensor) -> Vec<f64> {
    let per = t.shape()[1] * t.shape()[2];
    t.data().iter().step_by(per).copied().collect()
}

fn imprinting_correctness() -> Verdict {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let ds = generate_dataset(&cfg).unwrap();
    let mut samples = Vec::new();
    for (bundle, entry) in ds.train.iter().zip(&ds.labels.images) {
        for (r, &label) in bundle.records.iter().zip(&entry.labels) {
            samples.push((r.embedding.clone(), label));
        }
    }
    let dims = ModelDims { c_in: cfg.c_in, ..Default::default() };
    let base = train_classifier(&samples, dims, ds.layout.clone(), 7.0, &TrainConfig::default()).unwrap();
    let base_bytes = model_to_bytes(&base).unwrap();

    let mut pool: BTreeMap<u32, Vec<Tensor>> = BTreeMap::new();
    for (r, bundle) in ds.shot_index.shots.iter().zip(&ds.shots) {
        pool.entry(r.class_id).or_default().push(bundle.records[r.point].embedding.clone());
    }

    let mut bitwise = true;
    let mut restored = true;
    let mut accuracies = Vec::new();
    let mut held_rng = RngState::stream(cfg.seed, 100);
    for episode in 0..10u64 {
        let mut rng = RngState::stream(cfg.seed, 200 + episode);
        let mut model = base.clone();
        for &class in &ds.layout.novel_class_ids {
            let shots = &pool[&class];
            let shot = shots[rng.next_below(shots.len())].clone();
            let f = model.feature_extract(&shot).unwrap();
            let n = norm(f.data());
            let expected: Vec<f64> = f.data().iter().map(|v| v / n).collect();
            model = imprint_novel_class(&model, &ShotSet::new(class, vec![shot]).unwrap()).unwrap();
            let row = model.params.class_weights.row(model.layout.row_of(class).unwrap());
            bitwise &= row.iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits());
        }
        let mut correct = 0;
        for i in 0..200 {
            let class = ds.layout.novel_class_ids[i % ds.layout.novel_class_ids.len()];
            let e = ds.prototypes.sample_embedding(class, cfg.sigma, cfg.embed_h, cfg.embed_w, &mut held_rng);
            debug_assert_eq!(ds.prototypes.nearest(&channels(&e)), class);
            let (row, _) = model.predict_row(&e).unwrap();
            correct += (model.layout.category_of(row) == class) as usize;
        }
        accuracies.push(correct as f64 / 200.0);
        for &class in &ds.layout.novel_class_ids {
            model = remove_novel_class(&model, class).unwrap();
        }
        restored &= model_to_bytes(&model).unwrap() == base_bytes;
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let elapsed = start.elapsed();
    check(
        bitwise && restored && mean >= 0.95 && elapsed < Duration::from_secs(120),
        format!(
            "1-shot row bit-exact: {bitwise}; imprint/remove restores model bytes: {restored}; \
             novel accuracy over 10 episodes x 200 held-out = {:.2}% (>= 95%); {elapsed:.1?} (< 120 s)",
            100.0 * mean
        ),
    )
}

fn random_mask(rng: &mut RngState, h: usize, w: usize, p: f64) -> MaskGrid {
    MaskGrid::from_bits(h, w, (0..h * w).map(|_| rng.next_uniform() < p).collect()).unwrap()
}

fn erode_brute_force(m: &MaskGrid, kh: usize, kw: usize) -> MaskGrid {
    let (rh, rw) = ((kh / 2) as isize, (kw / 2) as isize);
    MaskGrid::from_fn(m.height(), m.width(), |y, x| {
        (-rh..=rh).all(|dy| {
            (-rw..=rw).all(|dx| {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                yy >= 0
                    && xx >= 0
                    && (yy as usize) < m.height()
                    && (xx as usize) < m.width()
                    && m.get(yy as usize, xx as usize)
            })
        })
    })
}

fn pixel_iou(a: &MaskGrid, b: &MaskGrid) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            inter += (a.get(y, x) && b.get(y, x)) as usize;
            union += (a.get(y, x) || b.get(y, x)) as usize;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// All-pairs suppression matrix, then a rank-ordered sweep.
fn nms_reference(items: &[Instance], thresh: f64) -> Vec<usize> {
    let n = items.len();
    let overlaps: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| pixel_iou(&items[i].mask, &items[j].mask) > thresh).collect())
        .collect();
    let mut rank: Vec<usize> = (0..n).collect();
    // insertion sort: stable, descending score
    for i in 1..n {
        let mut j = i;
        while j > 0 && items[rank[j - 1]].score < items[rank[j]].score {
            rank.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in rank {
        if kept.iter().all(|&k| !overlaps[i][k]) {
            kept.push(i);
        }
    }
    kept
}

fn morphology_nms_ap_oracles() -> Verdict {
    let mut erosion_ok = 0;
    for seed in 0..100 {
        let mut rng = RngState::new(seed);
        let m = random_mask(&mut rng, 32, 32, 0.85);
        let (kh, kw) = (1 + 2 * rng.next_below(3), 1 + 2 * rng.next_below(3));
        let k = StructuringElement::new(kh, kw).unwrap();
        erosion_ok += (erode(&m, k) == erode_brute_force(&m, kh, kw)) as usize;
    }

    let mut nms_ok = 0;
    for seed in 0..50 {
        let mut rng = RngState::new(500 + seed);
        let items: Vec<Instance> = (0..20)
            .map(|_| {
                let (y0, x0) = (rng.next_below(12), rng.next_below(12));
                let (h, w) = (3 + rng.next_below(8), 3 + rng.next_below(8));
                Instance {
                    mask: MaskGrid::from_fn(20, 20, |y, x| (y0..y0 + h).contains(&y) && (x0..x0 + w).contains(&x)),
                    class_id: 1 + rng.next_below(3) as u32,
                    score: (rng.next_below(8) as f64) / 8.0,
                    stability: 1.0,
                }
            })
            .collect();
        let thresh = [0.3, 0.5, 0.7][seed as usize % 3];
        let expected: Vec<Instance> = nms_reference(&items, thresh).into_iter().map(|i| items[i].clone()).collect();
        nms_ok += (nms(&items, thresh) == expected) as usize;
    }

    let square = MaskGrid::from_fn(8, 8, |y, x| (2..6).contains(&y) && (2..6).contains(&x));
    let far = MaskGrid::from_fn(8, 8, |y, x| y >= 7 && x >= 6);
    let inst = |mask: &MaskGrid, score| Instance { mask: mask.clone(), class_id: 1, score, stability: 1.0 };
    let gts = [GroundTruth { mask: square.clone(), category_id: 1 }];
    let one = [inst(&square, 0.9)];
    let two = [inst(&far, 0.9), inst(&square, 0.4)];
    let ap_one = average_precision(&[ImageEval { preds: &one, gts: &gts }], 1, 0.5).unwrap();
    let ap_two = average_precision(&[ImageEval { preds: &two, gts: &gts }], 1, 0.5).unwrap();
    let ap_ok = (ap_one - 1.0).abs() <= 1e-12 && (ap_two - 0.5).abs() <= 1e-12;
    check(
        erosion_ok == 100 && nms_ok == 50 && ap_ok,
        format!(
            "erosion = brute force {erosion_ok}/100; NMS = O(n^2) reference {nms_ok}/50; \
             AP50 fixtures {ap_one} (1.0) and {ap_two} (0.5) within 1e-12"
        ),
    )
}

fn instance_balanced_sampling() -> Verdict {
    // 5x5 instance (3x3 after erosion) in a 64x64 image
    let tiny = MaskGrid::from_fn(64, 64, |y, x| (10..15).contains(&y) && (20..25).contains(&x));
    let mut rng = RngState::new(2024);
    let draws = 10_000;
    let points = sample_training_points(&[tiny], 64, 64, draws, StructuringElement::default(), &mut rng).unwrap();
    let hits = points.iter().filter(|(_, t)| *t == SampleTarget::Instance(0)).count();
    let freq = hits as f64 / draws as f64;
    check(
        (freq - 0.5).abs() <= 0.03,
        format!("tiny instance chosen {hits}/{draws} = {:.2}% (50% +/- 3%)", 100.0 * freq),
    )
}

struct CliRun {
    stdout: Vec<u8>,
}

fn cli(dir: &Path, args: &[&str]) -> Result<CliRun, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fsis"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`fsis {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(CliRun { stdout: out.stdout })
}

struct E2eOutput {
    model: Vec<u8>,
    report_json: Vec<u8>,
    table: String,
}

fn e2e_sequence(dir: &Path) -> Result<E2eOutput, String> {
    cli(dir, &["synth", "--out", "data", "--seed", "0"])?;
    cli(
        dir,
        &["train", "--bundles", "data/train", "--labels", "data/train/labels.json", "--out", "base.sifm", "--seed", "0"],
    )?;
    let episodes = |format: &str| {
        cli(
            dir,
            &[
                "episodes", "--model", "base.sifm", "--test", "data/test", "--shots", "data/shots", "--repeats", "10",
                "--seed", "0", "--format", format,
            ],
        )
    };
    let report_json = episodes("json")?.stdout;
    let table = String::from_utf8(episodes("table")?.stdout).map_err(|e| e.to_string())?;
    let model = std::fs::read(dir.join("base.sifm")).map_err(|e| e.to_string())?;
    Ok(E2eOutput { model, report_json, table })
}

fn table_structure_ok(table: &str) -> bool {
    let lines: Vec<&str> = table.lines().collect();
    if lines.len() != 2 + 1 + 10 + 1 {
        return false;
    }
    let groups = lines[0];
    let (o, b, n) = (groups.find("Overall"), groups.find("Base"), groups.find("Novel"));
    let ordered = matches!((o, b, n), (Some(o), Some(b), Some(n)) if o < b && b < n);
    let metrics: Vec<&str> = lines[1].split_whitespace().collect();
    let base_row: Vec<&str> = lines[2].split_whitespace().collect();
    let mean_row: Vec<&str> = lines[13].split_whitespace().collect();
    ordered
        && metrics == ["Method", "AP", "AP50", "AP", "AP50", "AP", "AP50"]
        && base_row.starts_with(&["base", "only"])
        && base_row[base_row.len() - 2..] == ["-", "-"]
        && base_row[base_row.len() - 6..base_row.len() - 2].iter().all(|c| c.parse::<f64>().is_ok())
        && mean_row.starts_with(&["mean", "of", "10"])
        && mean_row[mean_row.len() - 6..].iter().all(|c| c.parse::<f64>().is_ok())
}

fn end_to_end_episodes() -> Verdict {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let a = e2e_sequence(first.path())?;
    let elapsed = start.elapsed();
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = e2e_sequence(second.path())?;
    let deterministic = a.model == b.model && a.report_json == b.report_json && a.table == b.table;

    let v: serde_json::Value = serde_json::from_slice(&a.report_json).map_err(|e| e.to_string())?;
    let mean = &v["report"]["mean"];
    let ap50 = mean["overall"]["ap50"].as_f64().ok_or("report has no overall AP50")?;
    let fmt = |split: &str| match (mean[split]["ap"].as_f64(), mean[split]["ap50"].as_f64()) {
        (Some(ap), Some(ap50)) => format!("{:.1}/{:.1}", 100.0 * ap, 100.0 * ap50),
        _ => "-".into(),
    };
    let structure = table_structure_ok(&a.table);
    check(
        ap50 >= 0.90 && deterministic && elapsed < Duration::from_secs(600) && structure,
        format!(
            "mean overall AP50 {:.2}% (>= 90%); AP/AP50 overall {} base {} novel {}; \
             deterministic: {deterministic}; table structure: {structure}; {elapsed:.1?} (< 600 s)",
            100.0 * ap50,
            fmt("overall"),
            fmt("base"),
            fmt("novel"),
        ),
    )
}

fn format_goldens() -> Verdict {
    let bundle_bytes = std::fs::read(common::fixture("golden.sifb")).map_err(|e| e.to_string())?;
    let model_bytes = std::fs::read(common::fixture("golden.sifm")).map_err(|e| e.to_string())?;
    let bundle = bundle_from_bytes(&bundle_bytes).map_err(|e| e.to_string())?;
    let model = model_from_bytes(&model_bytes).map_err(|e| e.to_string())?;
    let mut identical = bundle_to_bytes(&bundle).unwrap() == bundle_bytes
        && model_to_bytes(&model).unwrap() == model_bytes
        && bundle == common::golden_bundle()
        && model == common::golden_model();

    let ann_path = common::fixture("golden_annotations.json");
    let ann = read_annotations(&ann_path).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_annotations(&ann, tmp.path().join("a.json")).map_err(|e| e.to_string())?;
    identical &= std::fs::read(tmp.path().join("a.json")).unwrap() == std::fs::read(&ann_path).unwrap();

    // generated files round-trip as well
    let ds = generate_dataset(&SynthConfig { n_train: 2, n_test: 2, shots_per_class: 1, ..Default::default() })
        .map_err(|e| e.to_string())?;
    for b in ds.train.iter().chain(&ds.test).chain(&ds.shots) {
        let bytes = bundle_to_bytes(b).unwrap();
        identical &= bundle_to_bytes(&bundle_from_bytes(&bytes).unwrap()).unwrap() == bytes;
    }
    let random = init_model(ModelDims::default(), ds.layout.clone(), 7.0, 3).unwrap();
    let bytes = model_to_bytes(&random).unwrap();
    let back = model_from_bytes(&bytes).unwrap();
    identical &= back == random && model_to_bytes(&back).unwrap() == bytes;

    let mut validated = 0;
    for name in ["golden.sifb", "golden.sifm", "golden_annotations.json"] {
        let path = common::fixture(name);
        if cli(tmp.path(), &["validate", "--file", path.to_str().unwrap()]).is_ok() {
            validated += 1;
        }
    }
    check(
        identical && validated == 3,
        format!("byte-identical round trips: {identical}; fixtures validated with exit 0: {validated}/3"),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("gradient fidelity", gradient_fidelity),
        ("cosine-head exactness", cosine_head_exactness),
        ("morphology/NMS/AP oracles", morphology_nms_ap_oracles),
        ("instance-balanced sampling", instance_balanced_sampling),
        ("format golden files", format_goldens),
        ("imprinting correctness", imprinting_correctness),
        ("end-to-end synthetic episodes", end_to_end_episodes),
    ];
    // optional substring filter, e.g. `cargo test --test acceptance -- gradient`
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let selected: Vec<_> = criteria
        .into_iter()
        .filter(|(name, _)| filter.as_deref().is_none_or(|f| name.contains(f)))
        .collect();
    println!("running {} acceptance criteria", selected.len());
    let mut failed = 0;
    for &(name, run) in &selected {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", selected.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
