//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass substrings as arguments to run a subset,
//! e.g. `cargo test --test acceptance -- c06`.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fourier_shapes::adapter::{AdapterClient, AdapterCommand, AdapterError, RequestKind};
use fourier_shapes::contour::default_samples;
use fourier_shapes::objective::model::argmax;
use fourier_shapes::objective::toy::{self, PERSON_DETECTOR, QUADRANT_SIZE, SHAPES3_SIZE};
use fourier_shapes::objective::{
    render_patch, BoundingBox, LinearModel, MlpModel, Model, ModelBinding, NaturalImage, ObjectiveMode, ObjectiveSpec,
    Problem, RasterSettings, SurrogateDetector,
};
use fourier_shapes::optimizer::{run_optimization, Init, OptimizationTrace, OptimizerConfig, TraceSink};
use fourier_shapes::oracle::{
    dense_polygon, gradcheck_problem, gradcheck_raster, point_in_polygon, polygon_distance, FdScheme, FiniteDiffConfig,
    GradcheckReport, Location,
};
use fourier_shapes::raster::{rasterize, winding_number, CanvasSpec};
use fourier_shapes::regularizer::{reg_loss, RegularizerConfig};
use fourier_shapes::{Error, FourierCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- helpers

/// Random contour with `|c_1| ∈ [0.45, 0.7]` and harmonics scaled to stay
/// inside the regularizer's feasible set.
fn feasible_contour(rng: &mut ChaCha8Rng, order: usize) -> FourierCoefficients {
    let cfg = RegularizerConfig::default();
    loop {
        let mut c = FourierCoefficients::zeros(order);
        let r = rng.gen_range(0.45..0.7);
        let phase = rng.gen_range(0.0..TAU);
        c.set(1, r * phase.cos(), r * phase.sin());
        c.set(0, rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        let m = rng.gen_range(0.0..0.1);
        c.set(-1, m * phase.sin(), m * phase.cos());
        for k in 2..=order as i64 {
            for kk in [k, -k] {
                let s = 0.12 / (k * k) as f64;
                c.set(kk, rng.gen_range(-s..s), rng.gen_range(-s..s));
            }
        }
        if reg_loss(&c, &cfg).0 == 0.0 {
            return c;
        }
    }
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, ch: usize) -> NaturalImage {
    NaturalImage::new(h, w, ch, (0..h * w * ch).map(|_| rng.gen_range(0.05..0.95)).collect()).unwrap()
}

fn random_linear(rng: &mut ChaCha8Rng, side: usize, classes: usize) -> LinearModel {
    let p = side * side;
    let weight = (0..classes * p).map(|_| rng.gen_range(-20.0..20.0) / p as f64).collect();
    let bias = (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect();
    LinearModel::new([side, side, 1], classes, weight, bias).unwrap()
}

fn random_mlp(rng: &mut ChaCha8Rng, side: usize, hidden: usize, classes: usize) -> MlpModel {
    let p = side * side;
    let w1 = (0..hidden * p).map(|_| rng.gen_range(-30.0..30.0) / p as f64).collect();
    let b1 = (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let w2 = (0..classes * hidden).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let b2 = (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect();
    MlpModel::new([side, side, 1], hidden, classes, [w1, b1, w2, b2]).unwrap()
}

fn settings(size: usize, order: usize) -> RasterSettings {
    RasterSettings { canvas: CanvasSpec::square(size), samples: default_samples(order) }
}

fn optimizer(steps: usize, seed: u64) -> OptimizerConfig {
    OptimizerConfig { steps, seed, ..Default::default() }
}

fn run(problem: &mut Problem, opt: &OptimizerConfig) -> OptimizationTrace {
    run_optimization(problem, opt, None).unwrap_or_else(|f| panic!("{f}"))
}

// ---------------------------------------------------------------- criteria

fn c01_winding_matches_polygon_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cell = 2.0 / 224.0;
    let (mut agree, mut total, mut contours) = (0usize, 0usize, 0usize);
    while contours < 50 {
        let order = rng.gen_range(2..=6);
        let c = feasible_contour(&mut rng, order);
        if !is_simple(&dense_polygon(&c, 1024).unwrap()) {
            continue;
        }
        contours += 1;
        let poly = dense_polygon(&c, 8192).unwrap();
        let mut points = 0;
        while points < 1000 {
            let p = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if polygon_distance(p, &poly) < 2.0 * cell {
                continue;
            }
            points += 1;
            let inside_oracle = match point_in_polygon(p, &poly).unwrap() {
                Location::Inside => true,
                Location::Outside => false,
                Location::Boundary => unreachable!("point is two cells off the curve"),
            };
            let w = winding_number(&c, p, 256).unwrap().round();
            agree += usize::from((w.abs() >= 1.0) == inside_oracle);
            total += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = agree as f64 / total as f64;
    outcome(
        frac >= 0.999 && secs <= 60.0,
        format!("{agree}/{total} points agree ({:.3}%), {secs:.1} s", 100.0 * frac),
    )
}

fn c02_gradients_match_finite_differences() -> Outcome {
    // h = 1e-5 throughout; the fourth-order stencil removes the O(h^2) truncation
    // error that dominates on pixels sitting almost on a contour sample.
    let fd = FiniteDiffConfig { scheme: FdScheme::Central4, ..Default::default() };
    let mut lines = Vec::new();
    let (mut passed, mut checked, mut excluded, mut passed_2pt) = (0usize, 0usize, 0usize, 0usize);
    let names = ["raster", "generate", "keep", "occlude", "patch"];
    let mut per_mode = [(0usize, 0usize); 5];
    for order in [2usize, 5, 10] {
        for size in [32usize, 64] {
            let mut by_mode = [(0usize, 0usize, 0usize); 5];
            for seed in 0..10u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * order as u64 + 10 * size as u64 + seed);
                let c = feasible_contour(&mut rng, order);
                let raster = settings(size, order);
                let mut reports: Vec<GradcheckReport> = Vec::new();

                let upstream: Vec<f64> = (0..size * size).map(|_| rng.gen_range(-1.0..1.0)).collect();
                reports.push(gradcheck_raster(&c, &raster.canvas, raster.samples, &upstream, &fd).unwrap());

                let mut spec = ObjectiveSpec::new(ObjectiveMode::Generate, 1);
                spec.reg.lambda_reg = 0.5;
                let mut p = Problem {
                    order,
                    raster: raster.clone(),
                    spec,
                    model: Model::Mlp(random_mlp(&mut rng, size, 4, 3)),
                    image: None,
                };
                reports.push(gradcheck_problem(&mut p, &c, &fd).unwrap());

                let x = random_image(&mut rng, size, size, 1);
                let mut p = Problem {
                    order,
                    raster: raster.clone(),
                    spec: ObjectiveSpec::new(ObjectiveMode::SaliencyKeep, 0),
                    model: Model::Mlp(random_mlp(&mut rng, size, 4, 2)),
                    image: Some(x.clone()),
                };
                reports.push(gradcheck_problem(&mut p, &c, &fd).unwrap());

                let mut p = Problem {
                    order,
                    raster: raster.clone(),
                    spec: ObjectiveSpec::new(ObjectiveMode::SaliencyOcclude, 1),
                    model: Model::Linear(random_linear(&mut rng, size, 3)),
                    image: Some(x),
                };
                reports.push(gradcheck_problem(&mut p, &c, &fd).unwrap());

                let scene = random_image(&mut rng, 48, 40, 3);
                let mut spec = ObjectiveSpec::new(ObjectiveMode::PatchAttack, 0);
                spec.boxes = vec![
                    BoundingBox::new(rng.gen_range(14.0..26.0), rng.gen_range(16.0..32.0), 22.0, 28.0),
                    BoundingBox::new(12.0, 12.0, 16.0, 16.0),
                ];
                spec.patch_scale = rng.gen_range(0.4..0.9);
                spec.patch_color = vec![0.9, 0.2, 0.6];
                let mut p = Problem {
                    order,
                    raster: raster.clone(),
                    spec,
                    model: Model::Detector(SurrogateDetector { gain: rng.gen_range(-8.0..-2.0), offset: 1.0 }),
                    image: Some(scene),
                };
                reports.push(gradcheck_problem(&mut p, &c, &fd).unwrap());

                for (slot, r) in by_mode.iter_mut().zip(&reports) {
                    passed_2pt += r.passed_2pt();
                    slot.0 += r.passed();
                    slot.1 += r.checked();
                    slot.2 += r.excluded();
                    for f in r.failures() {
                        eprintln!(
                            "    K={order} {size}x{size} seed {seed}: param {} analytic {:e} numeric {:e}",
                            f.index, f.analytic, f.numeric
                        );
                    }
                }
            }
            let mut parts = Vec::new();
            for ((name, (p, c, e)), total) in names.iter().zip(by_mode).zip(per_mode.iter_mut()) {
                total.0 += p;
                total.1 += c;
                passed += p;
                checked += c;
                excluded += e;
                parts.push(format!("{name} {p}/{c} (excl {e})"));
            }
            lines.push(format!("K={order:<2} {size}x{size}: {}", parts.join(", ")));
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    let all_ok = per_mode.iter().all(|&(p, c)| p as f64 >= 0.99 * c as f64);
    let modes: Vec<String> =
        names.iter().zip(per_mode).map(|(n, (p, c))| format!("{n} {:.2}%", 100.0 * p as f64 / c as f64)).collect();
    outcome(
        all_ok,
        format!(
            "{}; {passed}/{checked} parameters agree, {excluded} excluded near kinks \
             (two-point stencil alone: {passed_2pt}/{checked})",
            modes.join(", ")
        ),
    )
}

fn c03_clockwise_contours_normalize_positive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let canvas = CanvasSpec::square(48);
    let mut worst: f64 = 0.0;
    let mut interior_raw_min: f64 = 0.0;
    for _ in 0..100 {
        let order = rng.gen_range(1..=6);
        let c = feasible_contour(&mut rng, order.max(2));
        let cw = c.reversed();
        let n = default_samples(c.order());
        let (raw_ccw, mask_ccw) = rasterize(&c, &canvas, n).unwrap();
        let (raw_cw, mask_cw) = rasterize(&cw, &canvas, n).unwrap();
        for i in 0..canvas.pixel_count() {
            worst = worst.max((mask_ccw.values[i] - mask_cw.values[i]).abs());
            if raw_ccw.values[i] > 0.999 {
                interior_raw_min = interior_raw_min.min(raw_cw.values[i]);
                worst = worst.max((mask_cw.values[i] - 1.0).abs());
            }
        }
    }
    outcome(
        worst <= 1e-3 && interior_raw_min < -0.99,
        format!("max |mask_cw - mask_ccw| = {worst:.2e}; clockwise interior raw reaches {interior_raw_min:.4}"),
    )
}

fn c04_regularizer_contract() -> Outcome {
    let cfg = RegularizerConfig::default();
    let spectrum = |pairs: &[(i64, f64)]| {
        let order = pairs.iter().map(|p| p.0.unsigned_abs() as usize).max().unwrap();
        let mut c = FourierCoefficients::zeros(order);
        for &(k, a) in pairs {
            c.set(k, a, 0.0);
        }
        c
    };
    let feasible = spectrum(&[(0, 0.3), (1, 1.0), (2, 0.2), (-3, 0.1), (4, 0.15)]);
    let dominance_only = spectrum(&[(1, 1.0), (2, 0.2), (-2, 0.2), (3, 0.2), (-3, 0.2)]);
    let cap_only = spectrum(&[(1, 1.0), (-2, 0.3)]);
    let hand = spectrum(&[(1, 2.0), (2, 1.5)]);
    let r_feasible = reg_loss(&feasible, &cfg).0;
    let r_dom = reg_loss(&dominance_only, &cfg).0;
    let r_cap = reg_loss(&cap_only, &cfg).0;
    let r_hand = reg_loss(&hand, &cfg).0;
    // Independent recomputation of each violated term.
    let dom_expected = 2.0 * 0.8 - 1.0;
    let cap_expected = 0.3 - 0.25;
    let pass = r_feasible == 0.0
        && r_dom > 0.0
        && (r_dom - dom_expected).abs() < 1e-12
        && r_cap > 0.0
        && (r_cap - cap_expected).abs() < 1e-12
        && (r_hand - 2.0).abs() < 1e-12;
    outcome(
        pass,
        format!("feasible {r_feasible}, dominance-only {r_dom:.12}, cap-only {r_cap:.12}, hand case {r_hand:.15}"),
    )
}

fn c05_circle_area() -> Outcome {
    let (_, mask) = rasterize(&FourierCoefficients::circle(1, 0.5), &CanvasSpec::default(), 256).unwrap();
    let err = (mask.mean() - PI / 16.0).abs();
    outcome(err <= 0.01, format!("mean(I) = {:.6}, pi/16 = {:.6}, |diff| = {err:.2e}", mask.mean(), PI / 16.0))
}

fn shapes3_run(order: usize, seed: u64) -> (Option<usize>, f64) {
    let mut problem = Problem {
        order,
        raster: settings(SHAPES3_SIZE, order),
        spec: ObjectiveSpec::new(ObjectiveMode::Generate, SHAPES3_TARGET),
        model: Model::Mlp(toy::shapes3_mlp()),
        image: None,
    };
    // Start from a generic blob near the templates' scale.
    let opt = OptimizerConfig {
        patience: None,
        init: Init::Random { scale: 0.05, min_radius: 0.5 },
        ..optimizer(500, seed)
    };
    let t = run(&mut problem, &opt);
    (t.first_success(), t.last().unwrap().scores[SHAPES3_TARGET])
}

const SHAPES3_TARGET: usize = 1;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c06_generate_reaches_target() -> Outcome {
    let mut hits = 0;
    let mut p8 = Vec::new();
    let mut p2 = Vec::new();
    for seed in 0..10 {
        let (first, p) = shapes3_run(8, seed);
        hits += usize::from(first.is_some_and(|s| s < 500));
        p8.push(p);
        p2.push(shapes3_run(2, seed).1);
    }
    let (m8, m2) = (median(p8), median(p2));
    outcome(
        hits >= 9 && m8 > m2,
        format!("K=8 reaches target in {hits}/10 seeds; median target prob K=8 {m8:.4} vs K=2 {m2:.4}"),
    )
}

fn quadrant_problem(mode: ObjectiveMode, order: usize) -> Problem {
    Problem {
        order,
        raster: settings(QUADRANT_SIZE, order),
        spec: ObjectiveSpec::new(mode, 0),
        model: Model::Linear(toy::quadrant_linear()),
        image: Some(toy::quadrant_image()),
    }
}

fn c07_saliency_keep_and_occlude() -> Outcome {
    const ORDER: usize = 8;
    let mut keep = quadrant_problem(ObjectiveMode::SaliencyKeep, ORDER);
    let tk = run(&mut keep, &optimizer(1200, 0));
    let lk = tk.last().unwrap();
    let keep_ok = lk.area <= 0.35 && argmax(&lk.scores) == 0;

    // A small start already hides the evidence, so early stopping would end
    // the run before the mask has grown.
    let mut occ = quadrant_problem(ObjectiveMode::SaliencyOcclude, ORDER);
    let to = run(&mut occ, &OptimizerConfig { patience: None, ..optimizer(1200, 0) });
    let lo = to.last().unwrap();
    let occ_ok = lo.area >= 0.6 && argmax(&lo.scores) != 0;

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let order = rng.gen_range(1..=8);
        let mut c = FourierCoefficients::zeros(order);
        for v in c.params_mut() {
            *v = rng.gen_range(-0.6..0.6);
        }
        let mut k = quadrant_problem(ObjectiveMode::SaliencyKeep, order);
        let mut o = quadrant_problem(ObjectiveMode::SaliencyOcclude, order);
        k.spec.reg.lambda_reg = 0.0;
        o.spec.reg.lambda_reg = 0.0;
        let lambda_area = rng.gen_range(0.0..3.0);
        k.spec.reg.lambda_area = lambda_area;
        o.spec.reg.lambda_area = lambda_area;
        worst = worst.max((k.evaluate(&c).unwrap().total + o.evaluate(&c).unwrap().total).abs());
    }
    outcome(
        keep_ok && occ_ok && worst <= 1e-9,
        format!(
            "keep: mean {:.3}, top-1 {}; occlude: mean {:.3}, top-1 {} (step {:?}); max |keep + occlude| = {worst:.1e}",
            lk.area,
            argmax(&lk.scores),
            lo.area,
            argmax(&lo.scores),
            to.first_success()
        ),
    )
}

fn person_problem(order: usize) -> Problem {
    let (x, boxes) = toy::person_scene();
    let mut spec = ObjectiveSpec::new(ObjectiveMode::PatchAttack, 0);
    spec.boxes = boxes;
    Problem {
        order,
        raster: settings(32, order),
        spec,
        model: Model::Detector(SurrogateDetector { gain: PERSON_DETECTOR.0, offset: PERSON_DETECTOR.1 }),
        image: Some(x),
    }
}

fn c08_patch_attack_suppresses_detection() -> Outcome {
    const ORDER: usize = 6;
    let (x, boxes) = toy::person_scene();
    let mut hits = 0;
    let mut benign_min: f64 = 1.0;
    let mut finals = Vec::new();
    let mut local = true;
    for seed in 0..10 {
        let mut p = person_problem(ORDER);
        let t = run(&mut p, &optimizer(200, seed));
        let first = t.records[0].scores[0];
        benign_min = benign_min.min(first);
        let last = t.last().unwrap().scores[0];
        finals.push(last);
        hits += usize::from(first >= 0.9 && last < 0.5);

        let (_, mask) = rasterize(&t.final_coefficients, &p.raster.canvas, p.raster.samples).unwrap();
        let r = render_patch(&x, &mask, &boxes, p.spec.patch_scale, &[1.0; 3]).unwrap();
        let foot = &r.footprints[0];
        for row in 0..x.height {
            for col in 0..x.width {
                let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
                let inside = (px - foot.cx).abs() <= foot.w / 2.0 && (py - foot.cy).abs() <= foot.h / 2.0;
                if !inside {
                    for ch in 0..3 {
                        let i = (row * x.width + col) * 3 + ch;
                        local &= r.image.values[i].to_bits() == x.values[i].to_bits();
                    }
                }
            }
        }
    }
    outcome(
        hits >= 9 && local,
        format!(
            "{hits}/10 seeds go from >= 0.9 to < 0.5 (benign min {benign_min:.3}, final max {:.3}); outside pixels bit-identical: {local}",
            finals.iter().cloned().fold(0.0, f64::max)
        ),
    )
}

fn c09_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for run_id in 0..2 {
        let trace = dir.path().join(format!("trace{run_id}.jsonl"));
        let ckpt = dir.path().join(format!("ckpt{run_id}"));
        let mut sink = TraceSink::to_file(&trace, Some(ckpt.clone())).unwrap();
        let mut p = person_problem(5);
        let opt = OptimizerConfig { log_every: 10, patience: None, ..optimizer(60, 42) };
        run_optimization(&mut p, &opt, Some(&mut sink)).unwrap();
        drop(sink);
        traces.push((std::fs::read(&trace).unwrap(), read_dir_sorted(&ckpt)));
    }
    let lib_same = traces[0] == traces[1];

    // Same again through the CLI, with a generate run.
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"shape": {"K": 4, "canvas": {"width": 32, "height": 32}},
            "objective": {"mode": "generate", "target_label": 2,
                          "model": {"kind": "builtin-mlp", "preset": "shapes3"}},
            "optimizer": {"steps": 40, "seed": 9, "log_every": 7, "patience": null}}"#,
    )
    .unwrap();
    let mut cli_runs = Vec::new();
    for run_id in 0..2 {
        let trace = dir.path().join(format!("cli{run_id}.jsonl"));
        let ckpt = dir.path().join(format!("cli_ckpt{run_id}"));
        let status = Command::new(env!("CARGO_BIN_EXE_fshape"))
            .args(["optimize", "--config"])
            .arg(&config)
            .arg("--trace")
            .arg(&trace)
            .arg("--checkpoints")
            .arg(&ckpt)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        cli_runs.push((std::fs::read(&trace).unwrap(), read_dir_sorted(&ckpt)));
    }
    let cli_same = cli_runs[0] == cli_runs[1];
    outcome(
        lib_same && cli_same && traces[0].1.len() == 7 && cli_runs[0].1.len() == 7,
        format!(
            "library traces identical: {lib_same} ({} checkpoints); CLI traces identical: {cli_same} ({} checkpoints)",
            traces[0].1.len(),
            cli_runs[0].1.len()
        ),
    )
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn echo(args: &[&str], timeout_ms: u64) -> AdapterCommand {
    AdapterCommand {
        program: env!("CARGO_BIN_EXE_fshape-echo-adapter").into(),
        args: args.iter().map(|s| s.to_string()).collect(),
        timeout_ms,
    }
}

fn c10_adapter_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let image = NaturalImage::new(
        224,
        224,
        3,
        (0..224 * 224 * 3).map(|_| rng.gen_range(0u8..=255) as f32 as f64 / 255.0).map(|v| v as f32 as f64).collect(),
    )
    .unwrap();
    let mut client = AdapterClient::spawn(&echo(&["--mirror"], 30_000)).unwrap();
    let r = client.forward_backward(&image, &RequestKind::Classify { target: 0 }).unwrap();
    let bit_exact = r.grad.len() == image.values.len()
        && r.grad.iter().zip(&image.values).all(|(a, b)| a.to_bits() == b.to_bits());
    drop(client);

    let mut client = AdapterClient::spawn(&echo(&[], 30_000)).unwrap();
    let r = client.forward_backward(&image, &RequestKind::Classify { target: 0 }).unwrap();
    let uniform = r.grad.iter().all(|&g| g == r.grad[0]) && (r.grad[0] - 1.0 / image.values.len() as f64).abs() < 1e-9;
    drop(client);

    let small = NaturalImage::filled(8, 8, 1, 0.5);
    let classify = RequestKind::Classify { target: 0 };
    let expect_code = |args: &[&str], timeout: u64, want: &str| -> (bool, String) {
        let result = AdapterClient::spawn(&echo(args, timeout)).and_then(|mut c| c.forward_backward(&small, &classify));
        match result {
            Err(e) => (e.code() == want, format!("{args:?} -> {}", e.code())),
            Ok(_) => (false, format!("{args:?} -> ok")),
        }
    };
    let matrix: Vec<(bool, String)> = vec![
        expect_code(&["--version", "2"], 5_000, "E_VERSION"),
        expect_code(&["--hang-hello"], 300, "E_TIMEOUT"),
        expect_code(&["--hang"], 300, "E_TIMEOUT"),
        expect_code(&["--wrong-shape"], 5_000, "E_SHAPE"),
        expect_code(&["--nan"], 5_000, "E_NONFINITE"),
        expect_code(&["--die"], 5_000, "E_TRANSPORT"),
        expect_code(&["--error", "boom"], 5_000, "E_REMOTE"),
        {
            let r = AdapterClient::spawn_command(Command::new("true"), Duration::from_secs(5));
            match r {
                Err(e) => (e.code() == "E_HANDSHAKE", format!("non-adapter -> {}", e.code())),
                Ok(_) => (false, "non-adapter -> ok".into()),
            }
        },
    ];

    // A dying adapter aborts the optimizer cleanly with its trace intact.
    let mut p = Problem {
        order: 2,
        raster: settings(8, 2),
        spec: ObjectiveSpec::new(ObjectiveMode::Generate, 0),
        model: ModelBinding::ExternalAdapter(echo(&["--die"], 5_000)).instantiate().unwrap(),
        image: None,
    };
    let abort_clean = match run_optimization(&mut p, &optimizer(10, 0), None) {
        Err(f) => matches!(f.error, Error::Adapter(AdapterError::Transport(_))) && f.trace.records.is_empty(),
        Ok(_) => false,
    };

    let matrix_ok = matrix.iter().all(|m| m.0);
    for (ok, line) in &matrix {
        println!("    {} {line}", if *ok { "ok  " } else { "BAD " });
    }
    outcome(
        bit_exact && uniform && matrix_ok && abort_clean,
        format!(
            "224x224x3 mirror bit-exact: {bit_exact}; uniform echo grad: {uniform}; fault matrix {}/{}; optimizer abort clean: {abort_clean}",
            matrix.iter().filter(|m| m.0).count(),
            matrix.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("c01 winding vs polygon oracle", c01_winding_matches_polygon_oracle),
        ("c02 gradient fidelity", c02_gradients_match_finite_differences),
        ("c03 clockwise normalization", c03_clockwise_contours_normalize_positive),
        ("c04 regularizer contract", c04_regularizer_contract),
        ("c05 circle area", c05_circle_area),
        ("c06 shape generation", c06_generate_reaches_target),
        ("c07 saliency keep/occlude", c07_saliency_keep_and_occlude),
        ("c08 patch attack", c08_patch_attack_suppresses_detection),
        ("c09 determinism", c09_determinism),
        ("c10 adapter protocol", c10_adapter_protocol),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
