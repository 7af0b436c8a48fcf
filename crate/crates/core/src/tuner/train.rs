use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Demonstration;
use super::expert::DEFAULT_MAX_STEP;
use super::policy::{Gradient, PolicyModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub action_scale: f64,
    pub val_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// L2 penalty on the weights (not the biases), added to the gradient.
    /// The reported losses exclude it.
    pub weight_decay: f64,
    /// Accepted for configuration compatibility; plain regression ignores it.
    pub discount: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 256,
            epochs: 100,
            seed: 0,
            hidden: vec![256, 256],
            action_scale: DEFAULT_MAX_STEP as f64,
            val_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.1,
            discount: 0.99,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainHistory {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied()
    }
}

struct Adam {
    m: Gradient,
    v: Gradient,
    t: i32,
}

impl Adam {
    fn new(model: &PolicyModel) -> Self {
        let zero = Gradient {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        };
        Self {
            m: zero.clone(),
            v: zero,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut PolicyModel, g: &Gradient, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let upd = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        };
        for l in 0..model.weights.len() {
            ndarray::Zip::from(&mut model.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| upd(p, m, v, g));
            ndarray::Zip::from(&mut model.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| upd(p, m, v, g));
        }
    }
}

fn rows(demos: &[Demonstration], idx: &[usize], scale: f64) -> (Array2<f64>, Array2<f64>) {
    let dim = demos[idx[0]].features.dim();
    let mut x = Array2::zeros((idx.len(), dim));
    let mut y = Array2::zeros((idx.len(), 2));
    for (r, &i) in idx.iter().enumerate() {
        let d = &demos[i];
        x.row_mut(r).assign(&ndarray::ArrayView1::from(&d.features.values));
        y[(r, 0)] = (d.action.delta_off as f64 / scale).clamp(-1.0, 1.0);
        y[(r, 1)] = (d.action.delta_on as f64 / scale).clamp(-1.0, 1.0);
    }
    (x, y)
}

/// Behavior cloning by minibatch Adam on the mean Euclidean distance
/// between normalized predicted and demonstrated actions. The last
/// `val_fraction` of a seeded shuffle is held out.
pub fn train_bc(demos: &[Demonstration], cfg: &TrainConfig) -> Result<(PolicyModel, TrainHistory)> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) || !(cfg.weight_decay >= 0.0) || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::InvalidConfig(format!(
            "batch {} lr {} val_fraction {}",
            cfg.batch, cfg.lr, cfg.val_fraction
        )));
    }
    let dim = demos[0].features.dim();
    if let Some(d) = demos.iter().find(|d| d.features.dim() != dim) {
        return Err(Error::DimensionMismatchFeatures {
            expected: dim,
            got: d.features.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..demos.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.val_fraction * demos.len() as f64).round() as usize;
    let n_val = n_val.min(demos.len() - 1);
    let (train_idx, val_idx) = order.split_at(demos.len() - n_val);
    let mut train_idx = train_idx.to_vec();

    let mut dims = vec![dim];
    dims.extend(&cfg.hidden);
    dims.push(2);
    let mut model = PolicyModel::init(&dims, cfg.action_scale, cfg.seed)?;
    let (xt, yt) = rows(demos, &train_idx, cfg.action_scale);
    model.input_mean = xt.mean_axis(Axis(0)).expect("non-empty");
    model.input_scale = xt.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { 1.0 / s } else { 1.0 });
    let val = (!val_idx.is_empty()).then(|| rows(demos, val_idx, cfg.action_scale));

    let mut adam = Adam::new(&model);
    let mut hist = TrainHistory {
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        ..Default::default()
    };
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch) {
            let (x, y) = rows(demos, chunk, cfg.action_scale);
            let (loss, mut g) = model.loss_and_gradient(x.view(), y.view())?;
            if cfg.weight_decay > 0.0 {
                for (gw, w) in g.weights.iter_mut().zip(&model.weights) {
                    gw.scaled_add(cfg.weight_decay, w);
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(format!("epoch {epoch}: batch loss {loss}")));
            }
            adam.step(&mut model, &g, cfg);
        }
        let tl = model.loss_and_gradient(xt.view(), yt.view())?.0;
        let vl = match &val {
            Some((x, y)) => model.loss_and_gradient(x.view(), y.view())?.0,
            None => tl,
        };
        if !tl.is_finite() || !vl.is_finite() {
            return Err(Error::NonFiniteLoss(format!("epoch {epoch}: train {tl} validation {vl}")));
        }
        log::debug!("epoch {epoch}: train {tl:.4} validation {vl:.4}");
        hist.train_loss.push(tl);
        hist.val_loss.push(vl);
    }
    Ok((model, hist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::{BiasAction, BiasSettings};
    use crate::tuner::dataset::Annotator;
    use crate::tuner::features::FeatureVector;

    fn demo(values: Vec<f64>, a: BiasAction) -> Demonstration {
        Demonstration {
            features: FeatureVector {
                values,
                tile_grid: (1, 1),
                extractor: "pooled-stats".into(),
                window_us: 8000,
            },
            action: a,
            biases: BiasSettings::default(),
            scene_id: "t".into(),
            annotator: Annotator::Scripted,
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let demos: Vec<_> = (0..20).map(|_| demo(vec![0.2, 0.5, 0.1], BiasAction::new(50, -75))).collect();
        let cfg = TrainConfig {
            epochs: 200,
            hidden: vec![16, 16],
            lr: 3e-3,
            ..Default::default()
        };
        let (m, h) = train_bc(&demos, &cfg).unwrap();
        assert!(h.final_val_loss().unwrap() < 0.01, "{:?}", h.val_loss.last());
        // momentum overshoots once the loss is small, so monotone descent
        // is only required on the way down
        let descent = h.train_loss.iter().position(|&l| l < 0.05).unwrap();
        for w in h.train_loss[..=descent].windows(2) {
            assert!(w[1] <= w[0]);
        }
        let a = m.act(&[0.2, 0.5, 0.1]).unwrap();
        assert!((a.delta_off - 50).abs() <= 1 && (a.delta_on + 75).abs() <= 1);
    }

    #[test]
    fn deterministic() {
        let demos: Vec<_> = (0..30)
            .map(|i| demo(vec![i as f64 / 30.0, 1.0 - i as f64 / 30.0], BiasAction::new(i, -i)))
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            hidden: vec![8],
            batch: 7,
            ..Default::default()
        };
        let (a, ha) = train_bc(&demos, &cfg).unwrap();
        let (b, hb) = train_bc(&demos, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!((ha.n_train, ha.n_val), (27, 3));
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bc(&[], &TrainConfig::default()), Err(Error::EmptyDataset)));
        let demos = vec![demo(vec![1.0], BiasAction::ZERO), demo(vec![1.0, 2.0], BiasAction::ZERO)];
        assert!(train_bc(&demos, &TrainConfig::default()).is_err());
    }
}
