use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use biasbench_core::bench::{MdpEnv, Observation, MANIFEST_FILE};
use biasbench_core::tuner::{extract_features, Annotator, Demonstration, FeatureConfig};
use biasbench_core::{BiasAction, BiasSettings, DatasetManifest};
use serde::Serialize;
use uuid::Uuid;

use crate::error::{ApiError, ApiResult};

/// One recorded corpus the server can open sessions on.
#[derive(Debug)]
pub struct Scene {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub biases: BiasSettings,
    /// `None` for the entry written at session creation.
    pub action: Option<BiasAction>,
    pub timestamp_ms: u64,
}

#[derive(Debug)]
pub struct Session {
    pub id: Uuid,
    pub scene_id: String,
    pub env: MdpEnv,
    pub obs: Observation,
    pub history: Vec<HistoryEntry>,
    pub demo_count: usize,
    demo_log: PathBuf,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Session {
    pub fn biases(&self) -> BiasSettings {
        self.obs.biases
    }

    /// Event rate of the current window in events per second.
    pub fn window_er(&self) -> f64 {
        let f = &self.obs.frame;
        let n: u64 = f.on_counts.iter().chain(&f.off_counts).map(|&c| c as u64).sum();
        n as f64 / (f.window_length as f64 * 1e-6)
    }

    pub fn cached_metrics(&self) -> Option<BTreeMap<String, f64>> {
        self.env.manifest().entry(&self.obs.biases)?.metrics.clone()
    }

    pub fn adjust(&mut self, action: BiasAction) -> ApiResult<()> {
        self.obs = self.env.step(action)?;
        self.history.push(HistoryEntry {
            biases: self.obs.biases,
            action: Some(action),
            timestamp_ms: now_ms(),
        });
        Ok(())
    }

    pub fn demonstration(&self, action: BiasAction) -> ApiResult<Demonstration> {
        let cfg = FeatureConfig {
            window_us: self.env.window_us(),
            ..FeatureConfig::default()
        };
        Ok(Demonstration {
            features: extract_features(&self.obs.frame, &cfg)?,
            action,
            biases: self.obs.biases,
            scene_id: self.scene_id.clone(),
            annotator: Annotator::Human,
        })
    }
}

#[derive(Debug)]
pub struct AppState {
    pub scenes: BTreeMap<String, Scene>,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
    demo_dir: PathBuf,
    /// Every recorded demonstration line, in global order.
    export: Mutex<Vec<String>>,
}

/// Loads `dir/manifest.json` if present, otherwise one manifest per
/// immediate subdirectory.
pub fn load_scenes(dir: &Path) -> ApiResult<BTreeMap<String, Scene>> {
    let mut paths = Vec::new();
    if dir.join(MANIFEST_FILE).is_file() {
        paths.push(dir.join(MANIFEST_FILE));
    } else {
        let listing = fs::read_dir(dir).map_err(|e| ApiError::Internal(format!("{}: {e}", dir.display())))?;
        for entry in listing.flatten() {
            let p = entry.path().join(MANIFEST_FILE);
            if p.is_file() {
                paths.push(p);
            }
        }
        paths.sort();
    }
    let mut scenes = BTreeMap::new();
    for p in paths {
        let manifest = DatasetManifest::load(&p)?;
        manifest.validate()?;
        let root = p.parent().unwrap_or(Path::new(".")).to_path_buf();
        let id = manifest.scene_id.clone();
        if scenes.insert(id.clone(), Scene { manifest, root }).is_some() {
            return Err(ApiError::Internal(format!("scene {id:?} appears twice under {}", dir.display())));
        }
    }
    Ok(scenes)
}

impl AppState {
    pub fn new(scenes: BTreeMap<String, Scene>, demo_dir: impl Into<PathBuf>) -> ApiResult<Self> {
        let demo_dir = demo_dir.into();
        fs::create_dir_all(&demo_dir).map_err(|e| ApiError::Internal(format!("{}: {e}", demo_dir.display())))?;
        Ok(Self {
            scenes,
            sessions: RwLock::new(HashMap::new()),
            demo_dir,
            export: Mutex::new(Vec::new()),
        })
    }

    pub fn load(manifest_dir: &Path, demo_dir: &Path) -> ApiResult<Self> {
        Self::new(load_scenes(manifest_dir)?, demo_dir)
    }

    pub fn create_session(&self, scene_id: &str, start: BiasSettings) -> ApiResult<Arc<Mutex<Session>>> {
        let scene = self
            .scenes
            .get(scene_id)
            .ok_or_else(|| ApiError::UnknownScene(scene_id.to_string()))?;
        let id = Uuid::new_v4();
        let mut env = MdpEnv::new(scene.manifest.clone(), &scene.root, start, id.as_u64_pair().0)?;
        let obs = env.observe()?;
        let session = Session {
            id,
            scene_id: scene_id.to_string(),
            history: vec![HistoryEntry {
                biases: obs.biases,
                action: None,
                timestamp_ms: now_ms(),
            }],
            env,
            obs,
            demo_count: 0,
            demo_log: self.demo_dir.join(format!("{id}.jsonl")),
        };
        let handle = Arc::new(Mutex::new(session));
        self.sessions
            .write()
            .map_err(|_| ApiError::Internal("session table poisoned".into()))?
            .insert(id, handle.clone());
        Ok(handle)
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        let key = Uuid::parse_str(id).map_err(|_| ApiError::UnknownSession(id.to_string()))?;
        self.sessions
            .read()
            .map_err(|_| ApiError::Internal("session table poisoned".into()))?
            .get(&key)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    /// Appends to the session's log on disk, then to the export order.
    pub fn record_demo(&self, session: &mut Session, action: BiasAction) -> ApiResult<usize> {
        let demo = session.demonstration(action)?;
        let line = serde_json::to_string(&demo).map_err(|e| ApiError::Internal(e.to_string()))?;
        let mut export = self
            .export
            .lock()
            .map_err(|_| ApiError::Internal("export log poisoned".into()))?;
        let io = |e: std::io::Error| ApiError::Internal(format!("{}: {e}", session.demo_log.display()));
        let mut f: File = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&session.demo_log)
            .map_err(io)?;
        f.write_all(format!("{line}\n").as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)?;
        export.push(line);
        session.demo_count += 1;
        Ok(session.demo_count)
    }

    pub fn export(&self) -> ApiResult<String> {
        let lines = self
            .export
            .lock()
            .map_err(|_| ApiError::Internal("export log poisoned".into()))?;
        Ok(lines.iter().map(|l| format!("{l}\n")).collect())
    }

    pub fn demo_dir(&self) -> &Path {
        &self.demo_dir
    }
}
