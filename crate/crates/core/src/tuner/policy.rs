use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bias::BiasAction;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"BBM1";
const MODEL_VERSION: u32 = 1;

/// Fully connected tanh network whose output is scaled to a threshold
/// change. Inputs are standardized with a stored per-feature mean and scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    /// Layer widths, input first, output (2) last.
    pub dims: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub action_scale: f64,
    pub input_mean: Array1<f64>,
    pub input_scale: Array1<f64>,
}

/// Gradient with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradient {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        v
    }
}

impl PolicyModel {
    fn check_dims(dims: &[usize], action_scale: f64) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 2 {
            return Err(Error::InvalidArgument(format!("bad layer widths {dims:?}; output must be 2")));
        }
        if !(action_scale > 0.0 && action_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("action scale {action_scale} must be positive")));
        }
        Ok(())
    }

    pub fn zeros(dims: &[usize], action_scale: f64) -> Result<Self> {
        Self::check_dims(dims, action_scale)?;
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|d| Array2::zeros((d[1], d[0]))).collect(),
            biases: dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
            action_scale,
            input_mean: Array1::zeros(dims[0]),
            input_scale: Array1::ones(dims[0]),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: &[usize], action_scale: f64, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(dims, action_scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut m.weights {
            let (o, i) = w.dim();
            let a = (6.0 / (i + o) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-a..a));
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        Gradient {
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        }
        .flat()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters given, model has {}",
                p.len(),
                self.param_count()
            )));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatchFeatures {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Activations of every layer for a batch (rows are samples); the first
    /// entry is the standardized input, the last the output in `(-1, 1)`.
    fn activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push((&x - &self.input_mean) * &self.input_scale);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let z = acts.last().unwrap().dot(&w.t()) + b;
            acts.push(z.mapv(f64::tanh));
        }
        acts
    }

    /// Normalized outputs for a batch.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.activations(x).pop().unwrap())
    }

    /// Mean Euclidean distance between outputs and normalized targets, and
    /// its gradient.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(f64, Gradient)> {
        self.check_input(x.ncols())?;
        if x.nrows() == 0 || y.dim() != (x.nrows(), 2) {
            return Err(Error::InvalidArgument("targets must be n x 2 for n >= 1 inputs".into()));
        }
        let n = x.nrows() as f64;
        let acts = self.activations(x);
        let out = acts.last().unwrap();
        let diff = out - &y;
        let norms = diff.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        let loss = norms.sum() / n;
        // d loss / d out, zero where the prediction is exact
        let mut delta = diff;
        for (mut row, &d) in delta.rows_mut().into_iter().zip(norms.iter()) {
            if d > 0.0 {
                row /= d * n;
            } else {
                row.fill(0.0);
            }
        }
        let layers = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            // through tanh
            delta = delta * acts[l + 1].mapv(|a| 1.0 - a * a);
            gw[l] = delta.t().dot(&acts[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&self.weights[l]);
            }
        }
        Ok((loss, Gradient { weights: gw, biases: gb }))
    }

    /// One observation's proposed change, rounded to integers.
    pub fn act(&self, features: &[f64]) -> Result<BiasAction> {
        self.check_input(features.len())?;
        let x = ArrayView2::from_shape((1, features.len()), features).expect("row vector");
        let out = self.activations(x).pop().unwrap();
        let s = self.action_scale;
        Ok(BiasAction::new(
            (out[(0, 0)] * s).round() as i32,
            (out[(0, 1)] * s).round() as i32,
        ))
    }

    /// `BBM1` file: magic, version, layer count and widths as `u32`, then
    /// `f64` action scale, input mean and scale, and per layer the row-major
    /// weights followed by the biases. Little-endian throughout.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(Error::io_at(path))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(Error::io_at(path))?;
        w.flush().map_err(Error::io_at(path))?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&MODEL_MAGIC)?;
        w.write_u32::<LittleEndian>(MODEL_VERSION)?;
        w.write_u32::<LittleEndian>(self.dims.len() as u32)?;
        for &d in &self.dims {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        w.write_f64::<LittleEndian>(self.action_scale)?;
        for v in self.input_mean.iter().chain(self.input_scale.iter()) {
            w.write_f64::<LittleEndian>(*v)?;
        }
        for v in self.params_flat() {
            w.write_f64::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(Error::io_at(path))?;
        Self::read_from(&mut BufReader::new(f))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let trunc = |what: &'static str| move |_| Error::Truncated { offset: 0, what };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(trunc("magic"))?;
        if magic != MODEL_MAGIC {
            return Err(Error::BadMagic {
                found: magic,
                expected: MODEL_MAGIC,
            });
        }
        let version = r.read_u32::<LittleEndian>().map_err(trunc("version"))?;
        if version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(version as u16));
        }
        let n = r.read_u32::<LittleEndian>().map_err(trunc("layer count"))? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::InvalidArgument(format!("model has {n} layer widths")));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(r.read_u32::<LittleEndian>().map_err(trunc("layer widths"))? as usize);
        }
        let scale = r.read_f64::<LittleEndian>().map_err(trunc("action scale"))?;
        let mut m = Self::zeros(&dims, scale)?;
        let mut read_vec = |len: usize, what: &'static str| -> Result<Vec<f64>> {
            let mut v = vec![0.0; len];
            r.read_f64_into::<LittleEndian>(&mut v).map_err(trunc(what))?;
            Ok(v)
        };
        m.input_mean = Array1::from(read_vec(dims[0], "input mean")?);
        m.input_scale = Array1::from(read_vec(dims[0], "input scale")?);
        let p = read_vec(m.param_count(), "weights")?;
        m.set_params_flat(&p)?;
        Ok(m)
    }
}
