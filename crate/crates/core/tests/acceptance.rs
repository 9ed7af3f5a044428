//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remixmatch::ctaugment::AugmentPolicy;
use remixmatch::imaging::{apply_transform, ImageTensor, ParamValue, TransformKind, TransformSpec, MAGNITUDE_BINS};
use remixmatch::model::{backward, forward, Architecture, ModelParams};
use remixmatch::pipeline::{
    align, cross_entropy, cross_entropy_logit_grad, mix_with_weight, mutual_info_decomposition, remixmatch_batch,
    sample_mix_weight, sharpen, BatchConfig, GuessState, Predictor, ProbVector,
};
use remixmatch::runner::{load_datasets, parse_metrics, train, with_workers, TrainConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_dist(classes: usize, rng: &mut ChaCha8Rng) -> ProbVector {
    // Exponentiated spread gives everything from near-uniform to near-one-hot.
    let scale = rng.random_range(0.0..8.0);
    let logits: Vec<f64> = (0..classes).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    ProbVector::softmax(&logits)
}

fn random_image(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> ImageTensor {
    ImageTensor::new(h, w, c, (0..h * w * c).map(|_| rng.random()).collect()).unwrap()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let arch = Architecture {
        height: 8,
        width: 8,
        channels: 3,
        conv_channels: vec![3, 4],
        hidden: 6,
        classes: 3,
    };
    let params = ModelParams::init(&arch, 21).unwrap();
    let count = params.num_parameters();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let images: Vec<_> = (0..3).map(|_| random_image(8, 8, 3, &mut rng)).collect();
    let tc: Vec<_> = (0..3).map(|_| random_dist(3, &mut rng)).collect();
    let tr: Vec<_> = (0..3).map(|_| random_dist(4, &mut rng)).collect();
    let loss = |p: &ModelParams| {
        let out = forward(&arch, p, &images).unwrap();
        (0..3)
            .map(|i| {
                cross_entropy(&tc[i], &out.class_probs[i]).unwrap() / 3.0
                    + 0.5 * cross_entropy(&tr[i], &out.rotation_probs[i]).unwrap() / 3.0
            })
            .sum::<f64>()
    };
    let out = forward(&arch, &params, &images).unwrap();
    let gc: Vec<_> = (0..3).map(|i| cross_entropy_logit_grad(&tc[i], &out.class_probs[i], 1.0 / 3.0)).collect();
    let gr: Vec<_> = (0..3).map(|i| cross_entropy_logit_grad(&tr[i], &out.rotation_probs[i], 0.5 / 3.0)).collect();
    let grads = backward(&arch, &params, &out.cache, &gc, &gr).unwrap();

    let h = 1e-3;
    let mut worst = (0.0f64, String::new());
    for (ti, tensor) in params.tensors.iter().enumerate() {
        for j in 0..tensor.data.len() {
            let mut plus = params.clone();
            plus.tensors[ti].data[j] += h;
            let mut minus = params.clone();
            minus.tensors[ti].data[j] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = grads[ti][j];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}]", tensor.name));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        count <= 1000 && worst.0 < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "{count} parameters in {} tensors, worst relative error {:.2e} at {}, {:.1}s",
            params.tensors.len(),
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn brute_force_mi(preds: &[ProbVector]) -> f64 {
    let n = preds.len() as f64;
    let classes = preds[0].len();
    let marginal: Vec<f64> = (0..classes).map(|y| preds.iter().map(|p| p.as_slice()[y]).sum::<f64>() / n).collect();
    let mut mi = 0.0;
    for p in preds {
        for y in 0..classes {
            let joint = p.as_slice()[y] / n;
            if joint > 0.0 {
                mi += joint * (joint / ((1.0 / n) * marginal[y])).ln();
            }
        }
    }
    mi
}

fn mutual_information_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..64);
        let preds: Vec<_> = (0..n).map(|_| random_dist(5, &mut rng)).collect();
        let mi = mutual_info_decomposition(&preds).unwrap();
        let diff = (mi.fairness - mi.confidence - brute_force_mi(&preds)).abs();
        worst = worst.max(diff);
    }
    check(worst <= 1e-9, format!("100 sets, worst |difference| {worst:.2e}"))
}

fn normalization_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 4];
    for _ in 0..10_000 {
        let classes = rng.random_range(2..12);
        let q = random_dist(classes, &mut rng);
        let p = random_dist(classes, &mut rng);
        let pt = random_dist(classes, &mut rng);
        let a = align(&q, &p, &pt).unwrap();
        let s = sharpen(&q, rng.random_range(0.05..2.0)).unwrap();
        let lambda = sample_mix_weight(0.75, true, &mut rng).unwrap();
        let img = ImageTensor::filled(2, 2, 1, 0.5).unwrap();
        let (_, m) = mix_with_weight(&(img.clone(), q.clone()), &(img, p.clone()), lambda).unwrap();
        let logits: Vec<f64> = (0..classes).map(|_| rng.random_range(-50.0..50.0)).collect();
        let sm = ProbVector::softmax(&logits);
        for (w, v) in worst.iter_mut().zip([&a, &s, &m, &sm]) {
            *w = w.max((v.as_slice().iter().sum::<f64>() - 1.0).abs());
        }
    }
    check(
        worst.iter().all(|&w| w <= 1e-6),
        format!(
            "10^4 inputs, worst |sum - 1|: align {:.1e}, sharpen {:.1e}, mixup {:.1e}, softmax {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn ctaugment_convergence() -> Outcome {
    let mut policy = AugmentPolicy::new(0.99, 0.8, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let handle = policy.sample_for_update(&mut rng).handles[0];
    for _ in 0..1000 {
        policy.update_weights(&[handle], 0.3).unwrap();
    }
    let m = policy.weights(handle.kind, handle.param)[handle.bin];
    let closed_form = 0.3 + 0.7 * 0.99f64.powi(1000);

    // Mixed tables, some entirely at or below the threshold.
    let kinds: Vec<_> = TransformKind::ALL.iter().copied().filter(|k| !k.params().is_empty()).collect();
    for (i, &kind) in kinds.iter().enumerate() {
        for p in 0..kind.params().len() {
            let n = policy.weights(kind, p).len();
            let w: Vec<f64> = if i % 4 == 0 {
                (0..n).map(|_| rng.random_range(0.0..=0.8)).collect()
            } else {
                (0..n).map(|_| rng.random_range(0.5..1.0)).collect()
            };
            policy.set_weights(kind, p, &w).unwrap();
        }
    }
    let (mut drawn, mut fallback, mut bad) = (0usize, 0usize, 0usize);
    for _ in 0..100_000 {
        for h in policy.sample_for_training(&mut rng).handles {
            if policy.training_distribution(h.kind, h.param).is_none() {
                fallback += 1;
                continue;
            }
            drawn += 1;
            if policy.weights(h.kind, h.param)[h.bin] <= 0.8 {
                bad += 1;
            }
        }
    }
    check(
        (m - 0.3).abs() < 1e-3 && (m - closed_form).abs() < 1e-12 && bad == 0 && drawn > 0,
        format!(
            "m = {m:.6} (closed form {closed_form:.6}); {drawn} thresholded bins drawn, {bad} at or below 0.8, {fallback} fallback draws excluded"
        ),
    )
}

struct Uniform(usize);

impl Predictor for Uniform {
    fn predict(&self, images: &[ImageTensor]) -> remixmatch::Result<Vec<ProbVector>> {
        Ok(images.iter().map(|_| ProbVector::uniform(self.0)).collect())
    }
}

fn shape_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let policy = AugmentPolicy::new(0.99, 0.8, 2).unwrap();
    let guess = GuessState::new(4, 128).unwrap();
    let mut seen = Vec::new();
    for b in [1, 2, 4] {
        for k in [1, 2, 8] {
            let labeled: Vec<_> = (0..b).map(|i| (random_image(8, 8, 3, &mut rng), ProbVector::one_hot(4, i % 4))).collect();
            let unlabeled: Vec<_> = (0..b).map(|_| random_image(8, 8, 3, &mut rng)).collect();
            let cfg = BatchConfig { k, ..BatchConfig::default() };
            let out = remixmatch_batch(&labeled, &unlabeled, &policy, &guess, &Uniform(4), &cfg, 7).unwrap();
            let got = (out.labeled.len(), out.unlabeled.len(), out.premix.len());
            if got != (b, b * (k + 1), b) {
                return Err(format!("B={b} K={k}: got {got:?}"));
            }
            seen.push(format!("{b}x{k}"));
        }
    }
    Ok(format!("(B, B(K+1), B) for all of {}", seen.join(" ")))
}

fn spec_at(kind: TransformKind, values: &[(usize, f32)]) -> TransformSpec {
    TransformSpec::with_values(kind, values.iter().map(|&(bin, value)| ParamValue { bin, value }).collect()).unwrap()
}

fn transformation_identities() -> Outcome {
    use TransformKind::*;
    let top = MAGNITUDE_BINS - 1;
    let mid = MAGNITUDE_BINS / 2;
    let mut cases = vec![
        ("identity", TransformSpec::identity()),
        ("brightness B=1", spec_at(Brightness, &[(top, 1.0)])),
        ("color C=1", spec_at(Color, &[(top, 1.0)])),
        ("contrast C=1", spec_at(Contrast, &[(top, 1.0)])),
        ("sharpness S=1", spec_at(Sharpness, &[(top, 1.0)])),
        ("smooth S=1", spec_at(Smooth, &[(top, 1.0)])),
        ("posterize B=8", spec_at(Posterize, &[(top, 8.0)])),
        ("cutout L=0", spec_at(Cutout, &[(0, 0.0)])),
        ("translate_x 0", spec_at(TranslateX, &[(mid, 0.0)])),
        ("translate_y 0", spec_at(TranslateY, &[(mid, 0.0)])),
        ("shear_x 0", spec_at(ShearX, &[(mid, 0.0)])),
        ("shear_y 0", spec_at(ShearY, &[(mid, 0.0)])),
        ("rotate 0", spec_at(Rotate, &[(mid, 0.0)])),
        ("autocontrast 0", spec_at(Autocontrast, &[(0, 0.0)])),
        ("blur 0", spec_at(Blur, &[(0, 0.0)])),
        ("equalize 0", spec_at(Equalize, &[(0, 0.0)])),
        ("invert 0", spec_at(Invert, &[(0, 0.0)])),
    ];
    for m in 0..remixmatch::imaging::RESCALE_METHOD_BINS {
        cases.push(("rescale L=1", spec_at(Rescale, &[(top, 1.0), (m, m as f32)])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f32;
    for (name, spec) in &cases {
        for (h, w, c) in [(8, 8, 1), (16, 12, 3), (5, 9, 3)] {
            let img = random_image(h, w, c, &mut rng);
            let d = apply_transform(&img, spec, &mut rng).max_abs_diff(&img);
            if d > 1e-6 {
                return Err(format!("{name} on {h}x{w}x{c} changed the image by {d:e}"));
            }
            worst = worst.max(d);
        }
    }
    for i in 0..1000 {
        let kind = TransformKind::ALL[rng.random_range(0..TransformKind::ALL.len())];
        let bins: Vec<usize> = kind.params().iter().map(|p| rng.random_range(0..p.bins())).collect();
        let spec = TransformSpec::sample_in_bins(kind, &bins, &mut rng).unwrap();
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let c = if rng.random_bool(0.5) { 1 } else { 3 };
        let img = random_image(h, w, c, &mut rng);
        let out = apply_transform(&img, &spec, &mut rng);
        if out.shape() != img.shape() || out.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("draw {i}: {kind} {:?} broke shape or range", spec.params()));
        }
    }
    Ok(format!(
        "{} identity settings within {worst:.1e}; 1000 random specs keep shape and [0, 1]",
        cases.len()
    ))
}

fn desk_config(extra: &[&str]) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    let base = [
        "image_size=16",
        "channels=3",
        "classes=10",
        "synth_train=2000",
        "synth_test=500",
        "conv_channels=8,16",
        "hidden=64",
        "batch=16",
        "k=2",
        "labels=40",
    ];
    for kv in base.iter().chain(extra) {
        cfg.apply_override(kv).unwrap();
    }
    cfg
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn ssl_uplift() -> Outcome {
    let start = Instant::now();
    let base = desk_config(&["steps=3000", "eval_every=500"]);
    let (train_set, test_set) = load_datasets(&base).unwrap();
    let mut ssl = Vec::new();
    let mut sup = Vec::new();
    for seed in 1..=3u64 {
        for (mode, errors) in [("remixmatch", &mut ssl), ("supervised", &mut sup)] {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.apply_override(&format!("mode={mode}")).unwrap();
            let outcome = with_workers(|| train(&cfg, &train_set, &test_set, None)).unwrap().unwrap();
            errors.push(outcome.final_error);
        }
    }
    let elapsed = start.elapsed();
    let (ms, mu) = (median(ssl.clone()), median(sup.clone()));
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{:.1}", 100.0 * e)).collect::<Vec<_>>().join("/");
    check(
        mu - ms >= 0.05 && elapsed <= Duration::from_secs(30 * 60),
        format!(
            "median error {:.1}% vs supervised {:.1}% (uplift {:.1} pp; seeds {} vs {}), {:.0}s on {} worker(s)",
            100.0 * ms,
            100.0 * mu,
            100.0 * (mu - ms),
            fmt(&ssl),
            fmt(&sup),
            elapsed.as_secs_f64(),
            rayon_workers()
        ),
    )
}

fn rayon_workers() -> usize {
    with_workers(rayon::current_num_threads).unwrap_or(1)
}

fn alignment_effect() -> Outcome {
    let base = desk_config(&[
        "class_skew=10",
        "split=proportional",
        "labels=100",
        "steps=1500",
        "eval_every=50",
        "eval_size=50",
    ]);
    let (train_set, test_set) = load_datasets(&base).unwrap();
    let mut kls = Vec::new();
    for no_align in [false, true] {
        let mut cfg = base.clone();
        cfg.no_align = no_align;
        let outcome = with_workers(|| train(&cfg, &train_set, &test_set, None)).unwrap().unwrap();
        let rows: Vec<_> = outcome.metrics.iter().filter(|r| r.step * 3 > cfg.steps * 2).collect();
        kls.push(rows.iter().map(|r| r.kl).sum::<f64>() / rows.len() as f64);
    }
    check(
        kls[0] < kls[1],
        format!("mean KL over the final third: {:.4} aligned vs {:.4} unaligned", kls[0], kls[1]),
    )
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_remixmatch")
}

fn read_config(path: &Path) -> BTreeMap<String, String> {
    let cfg = TrainConfig::load(path).unwrap();
    TrainConfig::keys().iter().map(|k| (k.to_string(), cfg.get(k).unwrap())).collect()
}

const TINY: &[&str] = &[
    "image_size=8",
    "channels=1",
    "classes=4",
    "synth_train=200",
    "synth_test=100",
    "conv_channels=4",
    "hidden=16",
    "batch=4",
    "labels=20",
    "eval_every=500",
];

fn cli(sub: &str, out: &Path, sets: &[&str], workers: &str) -> Result<String, String> {
    let mut cmd = Command::new(bin());
    cmd.arg(sub).arg("--out").arg(out).env("REMIXMATCH_WORKERS", workers);
    for kv in TINY.iter().chain(sets) {
        cmd.arg("--set").arg(kv);
    }
    let o = cmd.output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{sub} failed: {}", String::from_utf8_lossy(&o.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn ablation_harness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    cli("ablate", dir.path(), &["steps=2000"], "1")?;
    let table = fs::read_to_string(dir.path().join("ablation.csv")).map_err(|e| e.to_string())?;
    let base = read_config(&dir.path().join("baseline/config.txt"));
    let mut variants = Vec::new();
    for line in table.lines().skip(1) {
        let name = line.split(',').next().unwrap();
        let run = dir.path().join(name);
        let rows = parse_metrics(&fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();
        if rows.last().map(|r| r.step) != Some(2000) || !run.join("checkpoint.bin").is_file() {
            return Err(format!("{name} did not complete 2000 steps"));
        }
        if name == "baseline" {
            continue;
        }
        let cfg = read_config(&run.join("config.txt"));
        let diff: Vec<_> = cfg.iter().filter(|(k, v)| base[*k] != **v).map(|(k, v)| format!("{k}={v}")).collect();
        if diff.len() != 1 {
            return Err(format!("{name} differs from baseline in {diff:?}"));
        }
        variants.push(diff[0].clone());
    }
    check(
        variants.len() == 10,
        format!("baseline plus {} variants at 2000 steps: {}", variants.len(), variants.join(" ")),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sets = ["steps=300", "eval_every=50", "seed=9"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli("train", &a, &sets, "1")?;
    cli("train", &b, &sets, "1")?;
    let read = |p: &Path| fs::read(p.join("metrics.csv")).unwrap();
    let (ma, mb) = (read(&a), read(&b));
    check(
        ma == mb && !ma.is_empty(),
        format!("{} bytes of metrics, identical: {}", ma.len(), ma == mb),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient oracle", gradient_oracle),
        ("mutual-information identity", mutual_information_identity),
        ("normalization", normalization_suite),
        ("ctaugment convergence", ctaugment_convergence),
        ("batch shape contract", shape_contract),
        ("transformation identities", transformation_identities),
        ("semi-supervised uplift", ssl_uplift),
        ("distribution alignment", alignment_effect),
        ("ablation harness", ablation_harness),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
