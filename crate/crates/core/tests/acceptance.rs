//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Built with `harness = false` so the lines always reach stdout.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use isomer::codec::external::{encode_external, encoder_flags, ffmpeg_available};
use isomer::codec::{encode_reference, reference, BlockMode, ClipSpec, CodecId};
use isomer::evaluation::{evaluate_all, predict_all, Method};
use isomer::features::{extract_features, FeatureTensor, SlicParams, CHANNELS, SEGMENTS};
use isomer::frame::{CubemapFrame, Plane};
use isomer::geometry::{make_grid, Orientation, OrientationGrid};
use isomer::oracle::{
    build_size_table, normalized_sizes, reduction, relative_sizes, rotational_symmetry_check,
    ClipId, SizeTable, SymmetryConfig,
};
use isomer::predictor::{
    gradient_check, train, ModelConfig, PredictorModel, TargetScale, TrainConfig,
};
use isomer::projection::project_clip;
use isomer::scenes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn cube_clip(frames: Vec<CubemapFrame>) -> ClipSpec {
    ClipSpec::new(frames, 24.0).unwrap()
}

fn orientation_sensitivity() -> Outcome {
    let start = Instant::now();
    let clip = scenes::seam_crosser().render(128, 48);
    let grid = OrientationGrid::default();
    let t = build_size_table(
        &clip,
        &grid,
        CodecId::Reference,
        64,
        24.0,
        ClipId::new("seam", 0),
        1,
    )
    .unwrap();
    let r = reduction(&t);
    let elapsed = start.elapsed();
    outcome(
        r >= 2.0 && elapsed < Duration::from_secs(300),
        format!(
            "seam clip r = {r:.2}% (need >= 2), omega_min {}, {:.1}s (limit 300s)",
            grid.get(t.argmin()),
            secs(elapsed)
        ),
    )
}

fn symmetry() -> Outcome {
    let start = Instant::now();
    let (mut rho90, mut rho45) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let clip = scenes::random_scene(100 + seed, 4).render(64, 12);
        for (shift, out) in [(90.0, &mut rho90), (45.0, &mut rho45)] {
            let rep = rotational_symmetry_check(
                &clip,
                CodecId::Reference,
                32,
                24.0,
                &SymmetryConfig::with_shift(shift),
            )
            .unwrap();
            out.push(rep.correlation.unwrap_or(f64::NAN));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m90, m45) = (mean(&rho90), mean(&rho45));
    let elapsed = start.elapsed();
    outcome(
        m90 >= 0.9 && m45 < m90 && elapsed < Duration::from_secs(600),
        format!(
            "5 clips: mean rho(90) = {m90:.4} (need >= 0.9), mean rho(45) = {m45:.4} (need < rho(90)), {:.1}s",
            secs(elapsed)
        ),
    )
}

/// Recomputes every metric from the raw numbers with plain loops.
fn metric_exactness() -> Outcome {
    let grid = make_grid(45.0, 45.0, 45.0).unwrap();
    let hand: [[u64; 9]; 3] = [
        [1000, 1200, 900, 1100, 1000, 1300, 950, 1010, 1250],
        [5000, 5000, 5001, 4999, 5000, 5000, 5000, 5000, 5000],
        [77, 91, 64, 120, 100, 83, 99, 101, 88],
    ];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
    let mut ok = true;
    let mut tables = Vec::new();
    for (k, sizes) in hand.iter().enumerate() {
        let t = SizeTable::new(
            grid.clone(),
            sizes.to_vec(),
            CodecId::Reference,
            ClipId::new(format!("v{k}"), 0),
        )
        .unwrap();
        let max = *sizes.iter().max().unwrap() as f64;
        let min = *sizes.iter().min().unwrap() as f64;
        ok &= close(reduction(&t), (max - min) / max * 100.0);
        let norm = normalized_sizes(&t);
        for (i, &s) in sizes.iter().enumerate() {
            ok &= close(norm.values[i], (s as f64 - min) / (max - min) * 100.0);
        }
        // the (0, 0) orientation is the centre of a 3x3 grid
        let rel = relative_sizes(&t).unwrap();
        for (i, &s) in sizes.iter().enumerate() {
            ok &= rel[i] == s as i64 - sizes[4] as i64;
        }
        tables.push(t);
    }
    let report = evaluate_all(&[Method::Center, Method::Oracle], &tables, None, 0, 1).unwrap();
    let center: f64 = hand
        .iter()
        .map(|s| {
            let max = *s.iter().max().unwrap() as f64;
            let min = *s.iter().min().unwrap() as f64;
            (1.0 - (s[4] as f64 - min) / (max - min)) * 100.0
        })
        .sum::<f64>()
        / 3.0;
    ok &= close(report.score(Method::Center).unwrap(), center);
    ok &= close(report.score(Method::Oracle).unwrap(), 100.0);
    outcome(
        ok,
        format!(
            "3 hand tables, tolerance 1e-9 relative; CENTER r~ = {:.9} vs {center:.9}",
            report.score(Method::Center).unwrap()
        ),
    )
}

fn random_planes(rng: &mut ChaCha8Rng) -> Vec<Plane> {
    let face = 8 * rng.gen_range(1..4);
    let frames = rng.gen_range(1..5);
    let smooth = rng.gen_bool(0.5);
    (0..frames)
        .map(|_| {
            let base: u8 = rng.gen();
            Plane::from_fn(3 * face, 2 * face, |x, y| {
                if smooth {
                    base.wrapping_add((x + 2 * y) as u8)
                        .wrapping_add(rng.gen_range(0..3))
                } else {
                    rng.gen()
                }
            })
        })
        .collect()
}

fn lossless_codec() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut exact = 0;
    let mut deterministic = 0;
    for _ in 0..100 {
        let planes = random_planes(&mut rng);
        let a = reference::encode(&planes).unwrap();
        let b = reference::encode(&planes).unwrap();
        deterministic += usize::from(a.bitstream == b.bitstream);
        exact += usize::from(reference::decode(&a.bitstream).unwrap() == planes);
    }
    // integer-only content and an integer-only codec: this size is pinned
    // so a different platform producing another byte count fails here
    let pinned = pinned_clip();
    let size = reference::encode(&pinned).unwrap().bitstream.len();
    outcome(
        exact == 100 && deterministic == 100 && size == PINNED_SIZE,
        format!("{exact}/100 bit-exact, {deterministic}/100 deterministic, pinned clip {size} bytes (expect {PINNED_SIZE})"),
    )
}

const PINNED_SIZE: usize = 380;

fn pinned_clip() -> Vec<Plane> {
    (0..4u32)
        .map(|t| {
            Plane::from_fn(48, 32, |x, y| {
                let (x, y) = (x as u32 + 2 * t, y as u32);
                let h = (x / 4).wrapping_mul(2_654_435_761) ^ (y / 4).wrapping_mul(40_503);
                ((h >> 13) & 0xff) as u8 / 2 + (x + y) as u8
            })
        })
        .collect()
}

fn motion_sanity() -> Outcome {
    let pan = encode_reference(&cube_clip(scenes::translating_cubemap(32, 4, 8, 0, 5))).unwrap();
    let field = pan.motion.unwrap();
    let (bx, by) = (field.blocks_x(), field.blocks_y());
    let (mut hits, mut total) = (0, 0);
    for t in 1..field.frame_count() {
        // interior: the reference block lies inside the frame
        for y in 1..by - 1 {
            for x in 2..bx - 1 {
                total += 1;
                let v = field.vector(t, x, y);
                hits += usize::from(
                    field.mode(t, x, y) == BlockMode::Inter && v.dx == 8 && v.dy == 0 && v.dt == -1,
                );
            }
        }
    }
    let share = hits as f64 / total as f64;

    let still = encode_reference(&cube_clip(scenes::static_cubemap(32, 4, 6))).unwrap();
    let field = still.motion.unwrap();
    let zero = (0..field.frame_count()).all(|t| {
        field
            .frame_vectors(t)
            .iter()
            .all(|v| v.dx == 0 && v.dy == 0)
    });
    outcome(
        share >= 0.9 && zero,
        format!("pan: dx = +8 on {:.1}% of {total} interior blocks (need >= 90%); static field all zero: {zero}", 100.0 * share),
    )
}

fn gradient() -> Outcome {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::for_input(8, 12)
    };
    let model = PredictorModel::new(
        cfg,
        TargetScale {
            min: -40.0,
            max: 60.0,
        },
        3,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = FeatureTensor::zeros(8, 12);
    x.data
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-1.0..1.0));
    let target: Vec<f64> = (0..model.config.outputs)
        .map(|_| rng.gen_range(0.0..100.0))
        .collect();
    let r = gradient_check(&model, &x, &target, 1e-3, 400, None, 5).unwrap();
    outcome(
        r.max_relative_error < 1e-4 && r.checked == 400,
        format!(
            "max relative error {:.3e} over {} parameters of {} (need < 1e-4), {} kinks skipped",
            r.max_relative_error,
            r.checked,
            model.params.len(),
            r.skipped_kinks
        ),
    )
}

struct Corpus {
    tables: Vec<SizeTable>,
    features: Vec<(ClipId, FeatureTensor)>,
}

const FACE: usize = 32;
const FRAMES: usize = 8;

fn cue_corpus(seed: u64, count: usize) -> Corpus {
    let grid = OrientationGrid::default();
    let slic = SlicParams {
        superpixels_per_face: 4,
        ..SlicParams::default()
    };
    let mut tables = Vec::new();
    let mut features = Vec::new();
    for (i, scene) in scenes::planted_cue_corpus(seed, count, 30.0)
        .iter()
        .enumerate()
    {
        let clip = scene.render(2 * FACE, FRAMES);
        let id = ClipId::new(format!("cue{seed}_{i:03}"), 0);
        tables.push(
            build_size_table(&clip, &grid, CodecId::Reference, FACE, 24.0, id.clone(), 1).unwrap(),
        );
        let cube = cube_clip(project_clip(&clip, Orientation::IDENTITY, FACE).unwrap());
        features.push((id, extract_features(&cube, &slic).unwrap()));
    }
    Corpus { tables, features }
}

fn training_set(c: &Corpus, scale: &TargetScale) -> Vec<(FeatureTensor, Vec<f64>)> {
    c.features
        .iter()
        .zip(&c.tables)
        .map(|((_, f), t)| (f.clone(), scale.to_target(&relative_sizes(t).unwrap())))
        .collect()
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let train_set = cue_corpus(11, 64);
    let held_out = cue_corpus(12, 32);
    let rel: Vec<Vec<i64>> = train_set
        .tables
        .iter()
        .map(|t| relative_sizes(t).unwrap())
        .collect();
    let scale = TargetScale::from_relative(&rel).unwrap();
    let (h, w) = (
        train_set.features[0].1.height,
        train_set.features[0].1.width,
    );
    let mut model = PredictorModel::new(ModelConfig::for_input(h, w), scale, 1).unwrap();
    let cfg = TrainConfig {
        iterations: 600,
        batch_size: 16,
        seed: 2,
        ..TrainConfig::default()
    };
    train(&mut model, &training_set(&train_set, &scale), &cfg).unwrap();
    let preds: BTreeMap<_, _> =
        predict_all(&model, &held_out.features, &OrientationGrid::default()).unwrap();
    let report = evaluate_all(&Method::ALL, &held_out.tables, Some(&preds), 0, 1000).unwrap();
    let s = |m| report.score(m).unwrap();
    let (random, center, predicted) = (s(Method::Random), s(Method::Center), s(Method::Predicted));
    let elapsed = start.elapsed();
    outcome(
        predicted >= random + 10.0 && predicted >= center + 5.0 && elapsed < Duration::from_secs(1800),
        format!(
            "held-out r~: RANDOM {random:.2}, CENTER {center:.2}, PREDICTED {predicted:.2} (need +10 / +5), {:.1}s",
            secs(elapsed)
        ),
    )
}

fn overfit() -> Outcome {
    let c = cue_corpus(13, 1);
    let t = &c.tables[0];
    let scale = TargetScale::from_relative(&[relative_sizes(t).unwrap()]).unwrap();
    let (h, w) = (c.features[0].1.height, c.features[0].1.width);
    // dropout would keep the training loss from settling on a single example
    let config = ModelConfig {
        dropout: 0.0,
        ..ModelConfig::for_input(h, w)
    };
    let mut model = PredictorModel::new(config, scale, 1).unwrap();
    let cfg = TrainConfig {
        iterations: 500,
        batch_size: 1,
        seed: 3,
        ..TrainConfig::default()
    };
    let log = train(&mut model, &training_set(&c, &scale), &cfg).unwrap();
    let predicted = model
        .predict_orientation(&c.features[0].1, &t.grid)
        .unwrap();
    let truth = t.grid.get(t.argmin());
    outcome(
        predicted == truth,
        format!(
            "predicted {predicted}, oracle {truth}, final loss {:.4}",
            log.last().map(|e| e.loss).unwrap_or(f64::NAN)
        ),
    )
}

fn encoder_flag_strings() -> Outcome {
    let expected = [
        (CodecId::H264, "-preset medium -crf 0 -an"),
        (
            CodecId::Hevc,
            "-preset medium -x265-params lossless=1 -crf 0 -an",
        ),
        (
            CodecId::Vp9,
            "-speed 4 -cpu-used 4 -lossless 1 -qmin 0 -qmax 0 -an",
        ),
    ];
    let flags_ok = expected.iter().all(|(c, f)| encoder_flags(*c) == Some(*f));
    let detail = if ffmpeg_available() {
        let clip = cube_clip(scenes::translating_cubemap(16, 6, 2, 1, 1));
        let a = encode_external(&clip, CodecId::H264).map(|r| r.bytes);
        let b = encode_external(&clip, CodecId::H264).map(|r| r.bytes);
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => (true, format!("x264 deterministic ({a} bytes)")),
            (a, b) => (false, format!("x264 runs differ: {a:?} vs {b:?}")),
        }
    } else {
        (
            true,
            "ffmpeg not installed, determinism not exercised".to_string(),
        )
    };
    outcome(
        flags_ok && detail.0,
        format!("flag strings match: {flags_ok}; {}", detail.1),
    )
}

fn feature_contract() -> Outcome {
    let scene = scenes::random_scene(9, 5);
    let clip = scene.render(96, 10);
    let cube = cube_clip(project_clip(&clip, Orientation::IDENTITY, 48).unwrap());
    let p = SlicParams::default();
    let a = extract_features(&cube, &p).unwrap();
    let b = extract_features(&cube, &p).unwrap();
    let expect = [
        SEGMENTS,
        CHANNELS,
        96usize.div_ceil(8),
        144usize.div_ceil(8),
    ];
    let shape_ok = a.shape() == expect;
    let mut contour_ok = true;
    let mut mv_ok = true;
    for s in 0..SEGMENTS {
        contour_ok &= a.plane(s, 0).iter().all(|&v| (0.0..=1.0).contains(&v));
        for c in [1, 2, 4, 5] {
            mv_ok &= a
                .plane(s, c)
                .iter()
                .all(|&v| v.abs() <= reference::SEARCH_RANGE as f32);
        }
    }
    let identical = a
        .data
        .iter()
        .map(|v| v.to_bits())
        .eq(b.data.iter().map(|v| v.to_bits()));
    outcome(
        shape_ok && contour_ok && mv_ok && identical,
        format!(
            "shape {:?} (expect {expect:?}), contour in [0,1]: {contour_ok}, |mv| <= {}: {mv_ok}, bit-identical: {identical}",
            a.shape(),
            reference::SEARCH_RANGE
        ),
    )
}

fn main() {
    // `cargo test -- --list` comes from the default harness; bare numbers
    // select criteria
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("orientation sensitivity", orientation_sensitivity),
        ("90-degree symmetry", symmetry),
        ("metric exactness", metric_exactness),
        ("lossless reference codec", lossless_codec),
        ("motion oracle sanity", motion_sanity),
        ("gradient check", gradient),
        ("learnability", learnability),
        ("overfit consistency", overfit),
        ("external encoder flags", encoder_flag_strings),
        ("feature tensor contract", feature_contract),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {:>2} {:<26} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
