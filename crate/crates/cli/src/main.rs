use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use biasbench_core::bench::{
    annotate_manifest, record_grid, validity_summary, GridPreset, GridSpec, MdpEnv, MetricKind, RecordOptions,
    MANIFEST_FILE,
};
use biasbench_core::metrics::{metric_heatmap, write_heatmap};
use biasbench_core::scenes::SceneSpec;
use biasbench_core::sim::SimConfig;
use biasbench_core::tuner::{
    build_demo_dataset, run_rule_controller, save_demonstrations, train_bc, FeatureConfig, LearnedPolicy,
    OptimalRange, PolicyModel, RuleConfig, TrainConfig, TuningPolicy, DEFAULT_MAX_STEP,
};
use biasbench_core::{BiasAxis, BiasSettings, DatasetManifest};
use biasbench_service::AppState;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biasbench", version, about = "Event-camera bias tuning workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scene over a bias grid into a manifest directory.
    Record {
        #[arg(long)]
        scene: String,
        /// Grid file (JSON, or TOML by extension).
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        grid: Option<PathBuf>,
        /// Named grid instead of a file, e.g. desk-thresholds.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        parallel: Option<usize>,
        #[arg(long, default_value_t = 128)]
        width: u16,
        #[arg(long, default_value_t = 128)]
        height: u16,
        #[arg(long, default_value_t = 1_000_000)]
        duration_us: u64,
    },
    /// Fraction of grid tuples whose cached metric passes a threshold.
    Validity {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long)]
        threshold: f64,
        /// Valid when below the threshold instead of above it.
        #[arg(long)]
        below: bool,
    },
    /// Compute per-entry metrics from the recordings.
    Metrics {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Write the values back into the manifest.
        #[arg(long)]
        cache: bool,
    },
    /// Heat map of a cached metric over two bias axes, as CSV and PNG.
    Heatmap {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "er")]
        metric: String,
        #[arg(long, default_value = "diff_off")]
        x: String,
        #[arg(long, default_value = "diff_on")]
        y: String,
        #[arg(long)]
        out: PathBuf,
        /// Logarithmic color scale.
        #[arg(long)]
        log: bool,
    },
    /// Scripted-expert demonstrations and behavior cloning.
    TrainBc {
        #[arg(long)]
        manifest: PathBuf,
        /// Optimal range as JSON {"diff_off":[lo,hi],"diff_on":[lo,hi]}.
        #[arg(long)]
        range: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the demonstrations as JSON lines.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run a tuner from a start tuple on a recorded grid.
    Tune {
        /// Trained model; the rule controller is used when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Start thresholds as `diff_off,diff_on`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        start: (i32, i32),
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// HTTP API over every manifest below a directory.
    Serve {
        #[arg(long)]
        manifest_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Where session demonstration logs go; defaults to `<manifest-dir>/demos`.
        #[arg(long)]
        demo_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Er,
    Tracking,
    Rfu,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Er => MetricKind::Er,
            MetricArg::Tracking => MetricKind::Tracking,
            MetricArg::Rfu => MetricKind::Rfu,
        }
    }
}

fn parse_pair(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated integers")?;
    let p = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn load_grid(grid: Option<&Path>, preset: Option<&str>) -> Result<biasbench_core::BiasGrid> {
    if let Some(name) = preset {
        let p: GridPreset = serde_json::from_value(serde_json::Value::String(name.to_string()))
            .with_context(|| format!("unknown grid preset {name:?}"))?;
        return Ok(p.grid());
    }
    let path = grid.expect("clap requires --grid or --preset");
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    Ok(GridSpec::parse(&text, is_toml)?.build()?)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Record {
            scene,
            grid,
            preset,
            out,
            seed,
            parallel,
            width,
            height,
            duration_us,
        } => {
            let spec = SceneSpec::by_id(&scene, width, height).with_context(|| format!("unknown scene {scene:?}"))?;
            let grid = load_grid(grid.as_deref(), preset.as_deref())?;
            let mut cfg = SimConfig::new(width, height);
            cfg.duration_us = duration_us;
            cfg.seed = seed;
            let rep = record_grid(&spec, &scene, &grid, &cfg, &out, &RecordOptions { parallel })?;
            println!(
                "{} tuples: {} simulated, {} kept; manifest {}",
                rep.manifest.entries.len(),
                rep.simulated,
                rep.skipped,
                out.join(MANIFEST_FILE).display()
            );
        }
        Cmd::Validity {
            manifest,
            metric,
            threshold,
            below,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let frac = validity_summary(&m, &metric, |v| if below { v < threshold } else { v > threshold })?;
            let op = if below { "<" } else { ">" };
            println!("{metric} {op} {threshold}: {:.2}% of {} tuples", frac * 100.0, m.entries.len());
        }
        Cmd::Metrics { manifest, metric, cache } => {
            let mut m = DatasetManifest::load(&manifest)?;
            annotate_manifest(&mut m, &manifest_root(&manifest), metric.into())?;
            for e in &m.entries {
                let vals: Vec<String> = e
                    .metrics
                    .iter()
                    .flatten()
                    .map(|(k, v)| format!("{k}={v:.4}"))
                    .collect();
                println!("{} {}", e.biases, vals.join(" "));
            }
            if cache {
                m.save(&manifest)?;
            }
        }
        Cmd::Heatmap {
            manifest,
            metric,
            x,
            y,
            out,
            log,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let (xa, ya): (BiasAxis, BiasAxis) = (x.parse()?, y.parse()?);
            let map = metric_heatmap(&m, &metric, xa, ya)?;
            fs::create_dir_all(&out)?;
            let stem = format!("{metric}_{xa}_{ya}");
            write_heatmap(&map, &out, &stem, log)?;
            if let Some((cx, cy, v)) = map.argmax() {
                println!("max {metric} = {v:.4} at {xa}={cx}, {ya}={cy}");
            }
            println!("wrote {}", out.join(format!("{stem}.csv")).display());
        }
        Cmd::TrainBc {
            manifest,
            range,
            n,
            seed,
            epochs,
            out,
            demos,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let range = OptimalRange::from_json(&fs::read_to_string(&range)?)?;
            let features = FeatureConfig::default();
            let data = build_demo_dataset(&m, &manifest_root(&manifest), &range, DEFAULT_MAX_STEP, n, seed, &features)?;
            if let Some(p) = demos {
                save_demonstrations(&data, &p)?;
            }
            let mut tc = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            if let Some(e) = epochs {
                tc.epochs = e;
            }
            let (model, hist) = train_bc(&data, &tc)?;
            model.save(&out)?;
            println!(
                "{} demonstrations, final train loss {:.4}, validation loss {:.4}; model {}",
                data.len(),
                hist.train_loss.last().copied().unwrap_or(f64::NAN),
                hist.final_val_loss().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Cmd::Tune {
            model,
            manifest,
            start,
            steps,
            seed,
        } => {
            let start = BiasSettings::thresholds(start.0, start.1);
            let mut env = MdpEnv::open(&manifest, start, seed)?;
            match model {
                Some(path) => {
                    let policy = LearnedPolicy {
                        model: PolicyModel::load(&path)?,
                        features: FeatureConfig::default(),
                    };
                    let mut obs = env.reset(start)?;
                    for k in 0..steps {
                        let a = policy.propose(&obs.biases, &obs.frame)?;
                        let from = obs.biases;
                        obs = env.step(a)?;
                        let cached = env.manifest().entry(&obs.biases).and_then(|e| e.metrics.clone());
                        println!("step {k}: {from} + {a} -> {} {:?}", obs.biases, cached.unwrap_or_default());
                    }
                }
                None => {
                    let trace = run_rule_controller(&mut env, start, &RuleConfig::default(), steps.max(1))?;
                    for (k, s) in trace.steps.iter().enumerate() {
                        println!(
                            "step {k}: {} er {:.0} noise {:.3} delta {:?}",
                            s.biases, s.er, s.noise_frac, s.delta
                        );
                    }
                    match trace.converged_at {
                        Some(k) => println!("in band from step {k}"),
                        None => println!("not converged after {} steps", trace.steps.len()),
                    }
                }
            }
        }
        Cmd::Serve {
            manifest_dir,
            port,
            host,
            demo_dir,
        } => {
            let demo_dir = demo_dir.unwrap_or_else(|| manifest_dir.join("demos"));
            let state = AppState::load(&manifest_dir, &demo_dir)?;
            if state.scenes.is_empty() {
                bail!("no {MANIFEST_FILE} found in {} or its subdirectories", manifest_dir.display());
            }
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            println!(
                "serving {} scene(s) on http://{addr}, demonstrations in {}",
                state.scenes.len(),
                demo_dir.display()
            );
            tokio::runtime::Runtime::new()?.block_on(biasbench_service::serve(addr, state))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse().cmd) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
