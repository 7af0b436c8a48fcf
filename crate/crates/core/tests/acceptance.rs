//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use biasbench_core::bench::{record_grid, tuple_seed, GridPreset, MdpEnv, RecordOptions, MANIFEST_FILE};
use biasbench_core::format::write_recording;
use biasbench_core::manifest::{DatasetManifest, ManifestEntry};
use biasbench_core::metrics::{
    board_rfu_report, compute_ape, dot_tracking, rfu, AlignMode, FrequencyFit, RFU_CLIP,
};
use biasbench_core::scenes::{DotPreset, LedBoardScene, LedSet, SceneSpec, SpinningDotScene, Waveform};
use biasbench_core::sim::{simulate, SimConfig};
use biasbench_core::tuner::{
    build_demo_dataset, convergence_map, normalize_counts, run_rule_controller, train_bc, tracker_success_experiment,
    FeatureConfig, LearnedPolicy, OptimalRange, RuleConfig, TrainConfig, DEFAULT_MAX_STEP,
};
use biasbench_core::{event_rate, BiasAxis, BiasGrid, BiasSettings, EventRecording};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn axis_max(grid: &BiasGrid, axis: BiasAxis) -> i32 {
    *grid.axis(axis).last().unwrap()
}

/// Lowest thresholds of the desk grid: the noisiest, highest-rate corner.
fn desk_corner() -> BiasSettings {
    let g = GridPreset::DeskThresholds.grid();
    BiasSettings::thresholds(g.axis(BiasAxis::DiffOff)[0], g.axis(BiasAxis::DiffOn)[0])
}

fn grid_cardinality() -> Outcome {
    let mut counts = Vec::new();
    for (preset, want) in [
        (GridPreset::SpinningDot, 38_880),
        (GridPreset::LedBoard, 30_976),
        (GridPreset::VisualOdometry, 6_750),
    ] {
        let grid = preset.grid();
        let product: usize = grid.cardinalities().iter().product();
        ensure!(grid.len() == want && product == want, "{}: {} tuples, want {want}", preset.name(), grid.len());
        let mut entries: Vec<ManifestEntry> = grid
            .tuples()
            .map(|b| ManifestEntry {
                biases: b,
                file: format!("{}.bbe", b).into(),
                duration: 1_000_000,
                seed: tuple_seed(0, &b),
                metrics: None,
            })
            .collect();
        let mut m = DatasetManifest {
            scene_id: preset.name().into(),
            grid,
            entries: entries.clone(),
            scene: None,
            sim: None,
        };
        m.validate().map_err(|e| format!("{}: complete manifest rejected: {e}", preset.name()))?;
        let last = entries.pop().unwrap();
        m.entries = entries.clone();
        ensure!(m.validate().is_err(), "{}: missing entry accepted", preset.name());
        entries.push(entries[0].clone());
        m.entries = entries;
        ensure!(m.validate().is_err(), "{}: duplicate entry accepted", preset.name());
        m.entries.pop();
        let mut outside = last;
        outside.biases.diff_on += 1;
        m.entries.push(outside);
        ensure!(m.validate().is_err(), "{}: off-grid entry accepted", preset.name());
        counts.push(want);
    }
    Ok(format!("{counts:?}"))
}

fn frequency_metric() -> Outcome {
    let scene = LedBoardScene::desk(128, 128, LedSet::Train);
    let cfg = SimConfig::new(128, 128);
    let rec = simulate(&scene, &BiasSettings::default(), &cfg).map_err(|e| e.to_string())?;
    let report = board_rfu_report(&rec, &scene).map_err(|e| e.to_string())?;
    ensure!(report.fits.len() == 16, "{} fits", report.fits.len());
    let rfus: Vec<f64> = report.fits.iter().map(|f| f.rfu.unwrap_or(RFU_CLIP)).collect();
    ensure!(rfus.iter().all(|&r| r < 0.1), "default biases: {rfus:.3?}");
    ensure!(report.valid, "default biases: board not valid");

    let led_grid = GridPreset::LedBoard.grid();
    let top = BiasSettings::thresholds(axis_max(&led_grid, BiasAxis::DiffOff), axis_max(&led_grid, BiasAxis::DiffOn));
    let rec = simulate(&scene, &top, &cfg).map_err(|e| e.to_string())?;
    let report = board_rfu_report(&rec, &scene).map_err(|e| e.to_string())?;
    let lost: Vec<String> = scene
        .leds
        .iter()
        .zip(&report.fits)
        .filter(|(l, f)| l.waveform != Waveform::Square && f.rfu == Some(RFU_CLIP))
        .map(|(l, _)| format!("{:?}@{}", l.waveform, l.frequency))
        .collect();
    ensure!(!lost.is_empty(), "{top}: no slow LED at RFU 2");
    Ok(format!(
        "default max RFU {:.4}; at {top} slow LEDs at RFU 2: {}",
        rfus.iter().cloned().fold(0.0, f64::max),
        lost.join(" ")
    ))
}

fn fit(f_est: f64, delta: f64) -> FrequencyFit {
    FrequencyFit {
        f_est,
        delta_f_est: delta,
        amplitude: 1.0,
        phase: 0.0,
        offset: 0.0,
        iterations: 1,
        degenerate: false,
        f0: None,
        rfu: None,
    }
}

fn rfu_arithmetic() -> Outcome {
    let r = |f, d, f0| rfu(&fit(f, d), f0).unwrap();
    ensure!(r(11.0, 1.0, 10.0) == (1.0 + 1.0) / 10.0, "got {}", r(11.0, 1.0, 10.0));
    ensure!(r(9.0, 1.0, 10.0) == 0.2, "below f0: {}", r(9.0, 1.0, 10.0));
    ensure!(r(50.0, 0.0, 10.0) == 2.0, "clip: {}", r(50.0, 0.0, 10.0));
    ensure!(r(10.0, f64::INFINITY, 10.0) == 2.0, "infinite uncertainty");
    ensure!(r(f64::NAN, 0.0, 10.0) == 2.0, "NaN estimate");
    // reference magnitudes for a good, a usable and a poor estimate
    let refs = [r(100.0, 1.8, 100.0), r(102.0, 2.0, 100.0), r(130.0, 10.0, 100.0)];
    ensure!(
        refs.iter().zip([0.018, 0.04, 0.4]).all(|(a, b)| (a - b).abs() < 1e-12),
        "{refs:?}"
    );
    Ok("0.2, clip 2, references 0.018 / 0.04 / 0.4".into())
}

fn tracking_metric() -> Outcome {
    let scene = SpinningDotScene::desk(128, 128, DotPreset::Grey);
    let cfg = SimConfig::new(128, 128);
    let good = BiasSettings::thresholds(40, 65);
    let m = dot_tracking(&simulate(&scene, &good, &cfg).map_err(|e| e.to_string())?, &scene)
        .map_err(|e| e.to_string())?;
    ensure!(m.tf == 1 && m.tl >= 0.95 && m.n_tracklets <= 2, "{good}: {m:?}");
    let noisy = desk_corner();
    let n = dot_tracking(&simulate(&scene, &noisy, &cfg).map_err(|e| e.to_string())?, &scene)
        .map_err(|e| e.to_string())?;
    ensure!(n.n_tracklets > 5 && n.tl > 0.75, "{noisy}: {n:?}");
    Ok(format!(
        "{good}: TF {} TL {:.3} N {}; {noisy}: TL {:.3} N {}",
        m.tf, m.tl, m.n_tracklets, n.tl, n.n_tracklets
    ))
}

fn bytes(rec: &EventRecording) -> Vec<u8> {
    let mut out = Vec::new();
    write_recording(rec, &mut out).unwrap();
    out
}

fn simulator_invariants() -> Outcome {
    // refractory spacing, every pixel, 20 random tuples
    let led = LedBoardScene::desk(64, 64, LedSet::Train);
    let mut cfg = SimConfig::new(64, 64);
    cfg.duration_us = 300_000;
    cfg.hot_pixel_fraction = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pixels = 0usize;
    for _ in 0..20 {
        let mut b = BiasSettings::default();
        for axis in BiasAxis::ALL {
            b.set(axis, rng.random_range(cfg.limits.min.get(axis)..=cfg.limits.max.get(axis)));
        }
        let bound = 1000.0 * 2f64.powf(-b.refr as f64 / 50.0);
        let rec = simulate(&led, &b, &cfg).map_err(|e| e.to_string())?;
        let mut last: HashMap<(u16, u16), u64> = HashMap::new();
        for e in &rec.events {
            if let Some(prev) = last.insert((e.x, e.y), e.t) {
                ensure!((e.t - prev) as f64 >= bound, "{b}: pixel ({}, {}) gap {} < {bound}", e.x, e.y, e.t - prev);
            }
        }
        pixels += last.len();
    }

    // ER per threshold step over the full desk grid at one seed
    let dot = SpinningDotScene::desk(64, 64, DotPreset::Grey);
    let mut cfg = SimConfig::new(64, 64);
    cfg.duration_us = 500_000;
    let grid = GridPreset::DeskThresholds.grid();
    let offs = grid.axis(BiasAxis::DiffOff).to_vec();
    let ons = grid.axis(BiasAxis::DiffOn).to_vec();
    let mut er = vec![vec![0.0; offs.len()]; ons.len()];
    for (i, &on) in ons.iter().enumerate() {
        for (j, &off) in offs.iter().enumerate() {
            let rec = simulate(&dot, &BiasSettings::thresholds(off, on), &cfg).map_err(|e| e.to_string())?;
            er[i][j] = event_rate(&rec).map_err(|e| e.to_string())?;
        }
    }
    let mut steps = 0;
    for i in 0..ons.len() {
        for j in 0..offs.len() {
            if j + 1 < offs.len() {
                ensure!(er[i][j + 1] <= 1.05 * er[i][j], "on {} off {}->{}: {} -> {}", ons[i], offs[j], offs[j + 1], er[i][j], er[i][j + 1]);
                steps += 1;
            }
            if i + 1 < ons.len() {
                ensure!(er[i + 1][j] <= 1.05 * er[i][j], "off {} on {}->{}: {} -> {}", offs[j], ons[i], ons[i + 1], er[i][j], er[i + 1][j]);
                steps += 1;
            }
        }
    }

    // byte-identical output across worker counts
    let mut cfg = SimConfig::new(64, 64);
    cfg.duration_us = 300_000;
    cfg.seed = 5;
    cfg.hot_pixel_fraction = 0.005;
    let b = BiasSettings::thresholds(-35, -10);
    let runs: Vec<Vec<u8>> = [1, 2, 8]
        .into_iter()
        .map(|k| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
            pool.install(|| bytes(&simulate(&dot, &b, &cfg).unwrap()))
        })
        .collect();
    ensure!(runs[0] == runs[1] && runs[0] == runs[2], "recordings differ across thread counts");
    Ok(format!(
        "refractory over 20 tuples ({pixels} active pixels); {steps} ER steps; {} bytes identical at 1/2/8 threads",
        runs[0].len()
    ))
}

/// Records the desk threshold grid once; shared by the tuner criteria.
fn desk_corpus(dir: &Path) -> Result<DatasetManifest, String> {
    let scene = SpinningDotScene::desk(128, 128, DotPreset::Grey);
    let cfg = SimConfig::new(128, 128);
    let grid = GridPreset::DeskThresholds.grid();
    record_grid(&SceneSpec::SpinningDot(scene), "grey-dot", &grid, &cfg, dir, &RecordOptions::default())
        .map(|r| r.manifest)
        .map_err(|e| e.to_string())
}

/// Largest relative error between analytic and central-difference
/// gradients over a random parameter subset.
fn gradient_check(model: &biasbench_core::tuner::PolicyModel, x: &Array2<f64>, y: &Array2<f64>) -> (f64, usize) {
    let (_, g) = model.loss_and_gradient(x.view(), y.view()).unwrap();
    let analytic = g.flat();
    let base = model.params_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let h = 1e-6;
    for _ in 0..300 {
        let i = rng.random_range(0..base.len());
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params_flat(&p).unwrap();
        let up = probe.loss_and_gradient(x.view(), y.view()).unwrap().0;
        p[i] = base[i] - h;
        probe.set_params_flat(&p).unwrap();
        let down = probe.loss_and_gradient(x.view(), y.view()).unwrap().0;
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(analytic[i].abs());
        if scale > 1e-5 {
            worst = worst.max((numeric - analytic[i]).abs() / scale);
            checked += 1;
        }
    }
    (worst, checked)
}

fn bc_pipeline(dir: &Path, manifest: &DatasetManifest) -> Outcome {
    let scene = SpinningDotScene::desk(128, 128, DotPreset::Grey);
    let range = OptimalRange::grey_dot();
    let features = FeatureConfig::default();
    let demos = build_demo_dataset(manifest, dir, &range, DEFAULT_MAX_STEP, 2000, 0, &features)
        .map_err(|e| e.to_string())?;
    ensure!(demos.len() == 2000, "{} demonstrations", demos.len());
    let tc = TrainConfig::default();
    let (model, hist) = train_bc(&demos, &tc).map_err(|e| e.to_string())?;
    let val = hist.final_val_loss().unwrap();
    ensure!(val <= 0.25, "validation loss {val:.4}");

    let n = 64;
    let mut x = Array2::zeros((n, model.input_dim()));
    let mut y = Array2::zeros((n, 2));
    for (r, d) in demos.iter().take(n).enumerate() {
        x.slice_mut(s![r, ..]).assign(&ndarray::ArrayView1::from(&d.features.values));
        y[(r, 0)] = (d.action.delta_off as f64 / tc.action_scale).clamp(-1.0, 1.0);
        y[(r, 1)] = (d.action.delta_on as f64 / tc.action_scale).clamp(-1.0, 1.0);
    }
    let (grad_err, checked) = gradient_check(&model, &x, &y);
    ensure!(grad_err <= 1e-4, "gradient relative error {grad_err:.2e}");

    let policy = LearnedPolicy { model, features };
    let mut env = MdpEnv::open(&dir.join(MANIFEST_FILE), BiasSettings::thresholds(40, 40), 1).map_err(|e| e.to_string())?;
    let map = convergence_map(&policy, &mut env, 5, 3).map_err(|e| e.to_string())?;
    let (off, on, v) = map.argmin().ok_or("empty convergence map")?;
    ensure!(range.contains(&BiasSettings::thresholds(off, on)), "argmin ({off}, {on}) outside range");

    let mut rates = Vec::new();
    for (o, n) in [(-10, -35), (65, -10), (40, 40)] {
        let start = BiasSettings::thresholds(o, n);
        let r = tracker_success_experiment(&policy, &mut env, &scene, &range, start, 100).map_err(|e| e.to_string())?;
        rates.push(r.success_rate);
        ensure!(r.success_rate >= 0.8, "from ({o}, {n}): success {}", r.success_rate);
    }
    Ok(format!(
        "val {val:.4}; gradient rel err {grad_err:.1e} over {checked} params; argmin ({off}, {on}) = {v:.1}; success {rates:?}"
    ))
}

fn rule_controller(dir: &Path) -> Outcome {
    let cfg = RuleConfig::default();
    let start = desk_corner();
    let mut env = MdpEnv::open(&dir.join(MANIFEST_FILE), start, 2).map_err(|e| e.to_string())?;
    let trace = run_rule_controller(&mut env, start, &cfg, 25).map_err(|e| e.to_string())?;
    ensure!(trace.steps[0].er > cfg.er_hi, "start ER {} not above the band", trace.steps[0].er);
    let k = trace
        .steps
        .iter()
        .position(|s| (cfg.er_lo..=cfg.er_hi).contains(&s.er))
        .ok_or("never entered the band")?;
    ensure!(k <= 20, "entered the band at step {k}");
    ensure!(
        trace.steps[k..].iter().all(|s| s.delta.is_zero()),
        "non-zero action after step {k}"
    );
    Ok(format!(
        "start ER {:.0}; band at step {k} ({}, ER {:.0}); zero actions for {} steps",
        trace.steps[0].er,
        trace.steps[k].biases,
        trace.steps[k].er,
        trace.steps.len() - k
    ))
}

fn normalization() -> Outcome {
    // 20 counts: q (the 90th percentile, rank 18) is 17, v_max is 100
    let mut counts: Vec<u32> = (0..19).collect();
    counts.push(100);
    let v = normalize_counts(&counts);
    ensure!(v[0] == 0.0, "0 -> {}", v[0]);
    ensure!((v[17] - 0.9).abs() < 1e-12, "q -> {}", v[17]);
    ensure!(v[19] == 1.0, "v_max -> {}", v[19]);
    ensure!(v.windows(2).all(|w| w[0] <= w[1]), "not monotone");

    let mut frame = vec![5u32; 100];
    for (i, c) in frame.iter_mut().enumerate().take(10) {
        *c = 6 + i as u32;
    }
    frame[50] = 5000;
    let w = normalize_counts(&frame);
    let mut sorted = frame.clone();
    sorted.sort_unstable();
    let q = sorted[89];
    let qi = frame.iter().position(|&c| c == q).unwrap();
    ensure!(w[50] == 1.0, "hot pixel -> {}", w[50]);
    ensure!((w[qi] - 0.9).abs() < 1e-12, "90th percentile -> {}", w[qi]);
    Ok(format!("0 -> 0, q -> 0.9, v_max -> 1; hot pixel -> 1, p90 ({q}) -> 0.9"))
}

fn ape_utility() -> Outcome {
    let gt: Vec<[f64; 3]> = (0..100)
        .map(|i| {
            let t = i as f64 * 0.1;
            [t.cos() * 2.0, t.sin() * 1.5, 0.05 * t]
        })
        .collect();
    let same = compute_ape(&gt, &gt, AlignMode::Sim3).map_err(|e| e.to_string())?;
    ensure!(same.ape_rmse < 1e-9, "identity {}", same.ape_rmse);
    let shifted: Vec<[f64; 3]> = gt.iter().map(|p| [p[0] + 3.0, p[1] - 1.0, p[2] + 0.5]).collect();
    let off = compute_ape(&gt, &shifted, AlignMode::Sim3).map_err(|e| e.to_string())?;
    ensure!(off.ape_rmse < 1e-9, "rigid offset {}", off.ape_rmse);
    let mut bumped = gt.clone();
    bumped[42][1] += 0.3;
    let one = compute_ape(&gt, &bumped, AlignMode::None).map_err(|e| e.to_string())?;
    let oracle = (0.3f64 * 0.3 / 100.0).sqrt();
    ensure!((one.ape_rmse - oracle).abs() <= 1e-9, "{} vs {oracle}", one.ape_rmse);
    Ok(format!(
        "identity {:.1e}, offset {:.1e}, single pose {:.12} vs {oracle:.12}",
        same.ape_rmse, off.ape_rmse, one.ape_rmse
    ))
}

type Criterion = Box<dyn FnOnce() -> Outcome>;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut corpus: Option<Result<DatasetManifest, String>> = None;
    let mut shared = |dir: &Path| -> Result<DatasetManifest, String> {
        corpus.get_or_insert_with(|| desk_corpus(dir)).clone()
    };

    let criteria: Vec<(&str, Criterion)> = vec![
        ("grid cardinality", Box::new(grid_cardinality)),
        ("frequency metric", Box::new(frequency_metric)),
        ("RFU arithmetic", Box::new(rfu_arithmetic)),
        ("tracking metric", Box::new(tracking_metric)),
        ("simulator invariants", Box::new(simulator_invariants)),
        ("normalization", Box::new(normalization)),
        ("APE utility", Box::new(ape_utility)),
    ];
    let mut failed = 0;
    let mut report = |name: &str, t0: Instant, r: std::thread::Result<Outcome>| {
        let secs = t0.elapsed().as_secs_f64();
        match r {
            Ok(Ok(msg)) => println!("PASS {name}: {msg} ({secs:.0}s)"),
            Ok(Err(msg)) => {
                failed += 1;
                println!("FAIL {name}: {msg} ({secs:.0}s)");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked ({secs:.0}s)");
            }
        }
    };
    for (name, f) in criteria {
        let t0 = Instant::now();
        report(name, t0, catch_unwind(AssertUnwindSafe(f)));
    }
    let t0 = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(|| {
        let m = shared(dir.path())?;
        bc_pipeline(dir.path(), &m)
    }));
    report("BC pipeline", t0, r);
    let t0 = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(|| {
        shared(dir.path())?;
        rule_controller(dir.path())
    }));
    report("rule controller", t0, r);

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
