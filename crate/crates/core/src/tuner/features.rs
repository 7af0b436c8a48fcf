use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::AccumulatedFrame;

pub const POOLED_STATS: &str = "pooled-stats";

/// Piecewise-linear count normalization: counts up to the 90th percentile
/// `q` (nearest rank) fill `[0, 0.9]`, the tail above it fills `[0.9, 1]`.
pub fn normalize_counts(counts: &[u32]) -> Vec<f64> {
    if counts.is_empty() {
        return Vec::new();
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let rank = (0.9 * counts.len() as f64).ceil().max(1.0) as usize;
    let q = sorted[rank - 1] as f64;
    let v_max = sorted[sorted.len() - 1] as f64;
    counts
        .iter()
        .map(|&c| {
            let v = c as f64;
            if v <= q {
                if q > 0.0 {
                    0.9 * v / q
                } else {
                    0.0
                }
            } else {
                0.9 + 0.1 * (v - q) / (v_max - q)
            }
        })
        .collect()
}

/// Both channels of a frame normalized independently, `[on, off]`.
pub fn normalize_frame(frame: &AccumulatedFrame) -> [Vec<f64>; 2] {
    [normalize_counts(&frame.on_counts), normalize_counts(&frame.off_counts)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Tiles along `(x, y)`.
    pub tile_grid: (usize, usize),
    pub extractor: String,
    pub window_us: u64,
    /// Append one whole-frame block after the tiles.
    pub global_block: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tile_grid: (4, 4),
            extractor: POOLED_STATS.to_string(),
            window_us: crate::bench::DEFAULT_WINDOW_US,
            global_block: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub tile_grid: (usize, usize),
    pub extractor: String,
    pub window_us: u64,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Descriptor computed on one tile of one normalized channel.
pub trait TileExtractor: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// `tile` is row-major `w * h`; appends exactly `dim()` values.
    fn describe(&self, tile: &[f64], w: usize, h: usize, out: &mut Vec<f64>);
}

/// `[mean, std, max, nonzero fraction, center of mass x, center of mass y,
/// mean absolute gradient]`, coordinates in tile units.
#[derive(Debug, Clone, Copy, Default)]
pub struct PooledStats;

impl TileExtractor for PooledStats {
    fn id(&self) -> &str {
        POOLED_STATS
    }

    fn dim(&self) -> usize {
        7
    }

    fn describe(&self, tile: &[f64], w: usize, h: usize, out: &mut Vec<f64>) {
        let n = tile.len() as f64;
        let sum: f64 = tile.iter().sum();
        let mean = sum / n;
        let var = tile.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let max = tile.iter().copied().fold(0.0, f64::max);
        let nonzero = tile.iter().filter(|&&v| v > 0.0).count() as f64 / n;
        let (mut cx, mut cy) = (0.0, 0.0);
        if sum > 0.0 {
            for y in 0..h {
                for x in 0..w {
                    let v = tile[y * w + x];
                    cx += v * (x as f64 + 0.5) / w as f64;
                    cy += v * (y as f64 + 0.5) / h as f64;
                }
            }
            cx /= sum;
            cy /= sum;
        }
        let (mut grad, mut pairs) = (0.0, 0usize);
        for y in 0..h {
            for x in 0..w {
                let v = tile[y * w + x];
                if x + 1 < w {
                    grad += (tile[y * w + x + 1] - v).abs();
                    pairs += 1;
                }
                if y + 1 < h {
                    grad += (tile[(y + 1) * w + x] - v).abs();
                    pairs += 1;
                }
            }
        }
        let grad = if pairs > 0 { grad / pairs as f64 } else { 0.0 };
        out.extend_from_slice(&[mean, var.sqrt(), max, nonzero, cx, cy, grad]);
    }
}

/// Built-in extractor for an id.
pub fn extractor(id: &str) -> Result<Box<dyn TileExtractor>> {
    match id {
        POOLED_STATS => Ok(Box::new(PooledStats)),
        other => Err(Error::UnknownExtractor(other.to_string())),
    }
}

/// Feature dimension for a config.
pub fn feature_dim(cfg: &FeatureConfig) -> Result<usize> {
    let blocks = cfg.tile_grid.0 * cfg.tile_grid.1 + usize::from(cfg.global_block);
    Ok(blocks * 2 * extractor(&cfg.extractor)?.dim())
}

pub fn extract_features(frame: &AccumulatedFrame, cfg: &FeatureConfig) -> Result<FeatureVector> {
    let ex = extractor(&cfg.extractor)?;
    extract_features_with(frame, cfg, ex.as_ref())
}

/// Tiles are visited row-major; each tile contributes its ON block then its
/// OFF block. Frames not divisible by the tile grid are zero padded on the
/// right and bottom. The optional whole-frame ON and OFF blocks come last.
pub fn extract_features_with(
    frame: &AccumulatedFrame,
    cfg: &FeatureConfig,
    ex: &dyn TileExtractor,
) -> Result<FeatureVector> {
    let (tx, ty) = cfg.tile_grid;
    if tx == 0 || ty == 0 {
        return Err(Error::InvalidArgument("tile grid must be at least 1x1".into()));
    }
    let (w, h) = (frame.width as usize, frame.height as usize);
    let (tw, th) = (w.div_ceil(tx).max(1), h.div_ceil(ty).max(1));
    let channels = normalize_frame(frame);
    let mut values = Vec::with_capacity((tx * ty + 1) * 2 * ex.dim());
    let mut tile = vec![0.0; tw * th];
    for iy in 0..ty {
        for ix in 0..tx {
            for ch in &channels {
                for y in 0..th {
                    for x in 0..tw {
                        let (gx, gy) = (ix * tw + x, iy * th + y);
                        tile[y * tw + x] = if gx < w && gy < h { ch[gy * w + gx] } else { 0.0 };
                    }
                }
                ex.describe(&tile, tw, th, &mut values);
            }
        }
    }
    if cfg.global_block {
        for ch in &channels {
            ex.describe(ch, w, h, &mut values);
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("extractor {} produced non-finite values", ex.id())));
    }
    Ok(FeatureVector {
        values,
        tile_grid: cfg.tile_grid,
        extractor: ex.id().to_string(),
        window_us: cfg.window_us,
    })
}
