use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bias::BiasAxis;
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

/// Values over two bias axes. `cells[iy][ix]` is NaN where no entry exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub metric: String,
    pub x_axis: BiasAxis,
    pub y_axis: BiasAxis,
    pub x_values: Vec<i32>,
    pub y_values: Vec<i32>,
    pub cells: Vec<Vec<f64>>,
}

impl Heatmap {
    pub fn new(metric: &str, x_axis: BiasAxis, y_axis: BiasAxis, x_values: Vec<i32>, y_values: Vec<i32>) -> Self {
        let cells = vec![vec![f64::NAN; x_values.len()]; y_values.len()];
        Self {
            metric: metric.to_string(),
            x_axis,
            y_axis,
            x_values,
            y_values,
            cells,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.x_values.len() * self.y_values.len()
    }

    pub fn get(&self, x: i32, y: i32) -> Option<f64> {
        let ix = self.x_values.iter().position(|&v| v == x)?;
        let iy = self.y_values.iter().position(|&v| v == y)?;
        Some(self.cells[iy][ix])
    }

    /// `(x, y, value)` of the largest finite cell.
    pub fn argmax(&self) -> Option<(i32, i32, f64)> {
        self.finite_cells().max_by(|a, b| a.2.total_cmp(&b.2))
    }

    pub fn argmin(&self) -> Option<(i32, i32, f64)> {
        self.finite_cells().min_by(|a, b| a.2.total_cmp(&b.2))
    }

    fn finite_cells(&self) -> impl Iterator<Item = (i32, i32, f64)> + '_ {
        self.y_values.iter().enumerate().flat_map(move |(iy, &y)| {
            self.x_values
                .iter()
                .enumerate()
                .map(move |(ix, &x)| (x, y, self.cells[iy][ix]))
                .filter(|c| c.2.is_finite())
        })
    }

    /// Long-format CSV: `<x axis>,<y axis>,<metric>`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([self.x_axis.name(), self.y_axis.name(), self.metric.as_str()])?;
        for (iy, y) in self.y_values.iter().enumerate() {
            for (ix, x) in self.x_values.iter().enumerate() {
                w.write_record([x.to_string(), y.to_string(), self.cells[iy][ix].to_string()])?;
            }
        }
        w.flush().map_err(Error::io_at(path))?;
        Ok(())
    }

    /// Renders one `scale`-pixel square per cell, low values dark blue and
    /// high values yellow, y increasing upward. `log` colors by `ln(1 + v)`.
    pub fn write_png(&self, path: &Path, scale: u32, log: bool) -> Result<()> {
        let (nx, ny) = (self.x_values.len() as u32, self.y_values.len() as u32);
        let tf = |v: f64| if log { v.max(0.0).ln_1p() } else { v };
        let finite: Vec<f64> = self.finite_cells().map(|c| tf(c.2)).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut img = image::RgbImage::new(nx * scale, ny * scale);
        for (px, py, p) in img.enumerate_pixels_mut() {
            let (ix, iy) = ((px / scale) as usize, (ny - 1 - py / scale) as usize);
            let v = self.cells[iy][ix];
            *p = if !v.is_finite() {
                image::Rgb([128, 128, 128])
            } else {
                let u = if hi > lo { (tf(v) - lo) / (hi - lo) } else { 0.5 };
                color(u)
            };
        }
        img.save(path)?;
        Ok(())
    }
}

fn color(u: f64) -> image::Rgb<u8> {
    // piecewise-linear blue -> teal -> yellow
    const STOPS: [[f64; 3]; 3] = [[68.0, 1.0, 84.0], [33.0, 145.0, 140.0], [253.0, 231.0, 37.0]];
    let u = u.clamp(0.0, 1.0) * 2.0;
    let i = (u.floor() as usize).min(1);
    let f = u - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
        .collect();
    image::Rgb([c[0], c[1], c[2]])
}

/// Mean of a cached metric over all other axes, per `(x, y)` cell.
pub fn metric_heatmap(manifest: &DatasetManifest, metric: &str, x_axis: BiasAxis, y_axis: BiasAxis) -> Result<Heatmap> {
    if x_axis == y_axis {
        return Err(Error::InvalidArgument("heat map axes must differ".into()));
    }
    if !manifest.entries.iter().any(|e| e.metric(metric).is_some()) {
        return Err(Error::UnknownMetric(metric.to_string()));
    }
    let mut sums: BTreeMap<(i32, i32), (f64, usize)> = BTreeMap::new();
    for e in &manifest.entries {
        let v = e
            .metric(metric)
            .ok_or_else(|| Error::MissingMetric(e.biases, metric.to_string()))?;
        let cell = sums.entry((e.biases.get(x_axis), e.biases.get(y_axis))).or_insert((0.0, 0));
        cell.0 += v;
        cell.1 += 1;
    }
    let mut map = Heatmap::new(
        metric,
        x_axis,
        y_axis,
        manifest.grid.axis(x_axis).to_vec(),
        manifest.grid.axis(y_axis).to_vec(),
    );
    for ((x, y), (sum, n)) in sums {
        let ix = map.x_values.iter().position(|&v| v == x).expect("grid member");
        let iy = map.y_values.iter().position(|&v| v == y).expect("grid member");
        map.cells[iy][ix] = sum / n as f64;
    }
    Ok(map)
}

/// Writes `<stem>.csv` and `<stem>.png` into `dir`.
pub fn write_heatmap(map: &Heatmap, dir: &Path, stem: &str, log: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
    map.write_csv(&dir.join(format!("{stem}.csv")))?;
    map.write_png(&dir.join(format!("{stem}.png")), 24, log)?;
    let mut f = File::create(dir.join(format!("{stem}.json"))).map_err(Error::io_at(dir))?;
    f.write_all(serde_json::to_string_pretty(map)?.as_bytes())
        .map_err(Error::io_at(dir))?;
    Ok(())
}
