//! Convolutional regressor from a feature tensor to one relative size per
//! grid orientation.
//!
//! Each of the four temporal segments passes through a trunk of
//! `conv3x3 -> ReLU -> maxpool2` blocks (16/32/64 channels by default). A
//! 1x1 convolution reduces the segment input to 4 channels and another
//! reduces the trunk output to 64; both are flattened at their own
//! resolution and the results of all segments are concatenated, passed
//! through dropout and a fully-connected layer with one output per
//! orientation. The trunk and reducers are shared across segments unless
//! `shared_trunk` is off.
//!
//! All parameters live in one flat `f64` vector; [`Layout`] records where
//! each tensor sits.

pub mod checkpoint;
mod network;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureTensor, CHANNELS, SEGMENTS};
use crate::geometry::{Orientation, OrientationGrid};
use crate::oracle::argmin_f64;

pub use checkpoint::{load_model, save_model};
pub use train::{train, write_training_log, LogEntry, TrainConfig};

pub const INPUT_SKIP: usize = 4;
pub const TRUNK_SKIP: usize = 64;
pub const DEFAULT_OUTPUTS: usize = 361;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature tensor height and width.
    pub input_height: usize,
    pub input_width: usize,
    /// Output channels of each trunk block.
    pub channels: Vec<usize>,
    pub shared_trunk: bool,
    pub dropout: f64,
    /// Multiplier applied to each input channel.
    pub input_scale: Vec<f64>,
    /// Multiplier on the fully-connected output, so unit-scale activations
    /// cover the `[0, 100]` target range.
    pub output_scale: f64,
    pub outputs: usize,
}

impl ModelConfig {
    pub fn for_input(input_height: usize, input_width: usize) -> Self {
        Self {
            input_height,
            input_width,
            channels: vec![16, 32, 64],
            shared_trunk: true,
            dropout: 0.5,
            // motion components span +-16 pixels; dt and contours are unit scale
            input_scale: vec![
                1.0,
                1.0 / 16.0,
                1.0 / 16.0,
                1.0,
                1.0 / 16.0,
                1.0 / 16.0,
                1.0,
            ],
            output_scale: 100.0,
            outputs: DEFAULT_OUTPUTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(
                "trunk needs at least one block with channels".into(),
            ));
        }
        let shrink = 1usize << self.channels.len();
        if self.input_height < shrink || self.input_width < shrink {
            return Err(Error::Config(format!(
                "a {}x{} input is too small for {} pooling stages",
                self.input_height,
                self.input_width,
                self.channels.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.input_scale.len() != CHANNELS {
            return Err(Error::Config(format!("need {CHANNELS} input scales")));
        }
        if self.outputs == 0 || !(self.output_scale > 0.0) {
            return Err(Error::Config(
                "outputs and output scale must be positive".into(),
            ));
        }
        Ok(())
    }

    fn trunk_dims(&self) -> (usize, usize) {
        let k = self.channels.len();
        (self.input_height >> k, self.input_width >> k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.start..self.start + self.len]
    }
}

/// A weight tensor immediately followed by its bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Layer {
    pub weight: Span,
    pub bias: Span,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Layer {
    pub fn split_mut<'a>(&self, g: &'a mut [f64]) -> (&'a mut [f64], &'a mut [f64]) {
        let all = &mut g[self.weight.start..self.bias.start + self.bias.len];
        all.split_at_mut(self.weight.len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamSet {
    pub convs: Vec<Layer>,
    pub skip_in: Layer,
    pub skip_trunk: Layer,
}

/// Positions of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub(crate) sets: Vec<ParamSet>,
    pub(crate) fc: Layer,
    pub(crate) feature_len: usize,
    pub(crate) total: usize,
    shared: bool,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut next = 0;
        let mut layer = |wlen: usize, blen: usize, fan_in: usize, fan_out: usize| {
            let l = Layer {
                weight: Span {
                    start: next,
                    len: wlen,
                },
                bias: Span {
                    start: next + wlen,
                    len: blen,
                },
                fan_in,
                fan_out,
            };
            next += wlen + blen;
            l
        };
        let trunk_c = *cfg.channels.last().unwrap();
        let n_sets = if cfg.shared_trunk { 1 } else { SEGMENTS };
        let mut sets = Vec::with_capacity(n_sets);
        for _ in 0..n_sets {
            let mut convs = Vec::new();
            let mut cin = CHANNELS;
            for &cout in &cfg.channels {
                convs.push(layer(cout * cin * 9, cout, cin * 9, cout * 9));
                cin = cout;
            }
            let skip_in = layer(INPUT_SKIP * CHANNELS, INPUT_SKIP, CHANNELS, INPUT_SKIP);
            let skip_trunk = layer(TRUNK_SKIP * trunk_c, TRUNK_SKIP, trunk_c, TRUNK_SKIP);
            sets.push(ParamSet {
                convs,
                skip_in,
                skip_trunk,
            });
        }
        let (th, tw) = cfg.trunk_dims();
        let per_segment = INPUT_SKIP * cfg.input_height * cfg.input_width + TRUNK_SKIP * th * tw;
        let feature_len = SEGMENTS * per_segment;
        let fc = layer(
            cfg.outputs * feature_len,
            cfg.outputs,
            feature_len,
            cfg.outputs,
        );
        Ok(Self {
            sets,
            fc,
            feature_len,
            total: next,
            shared: cfg.shared_trunk,
        })
    }

    pub(crate) fn set_of(&self, segment: usize) -> usize {
        if self.shared {
            0
        } else {
            segment
        }
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.sets
            .iter()
            .flat_map(|s| s.convs.iter().chain([&s.skip_in, &s.skip_trunk]))
            .chain([&self.fc])
    }

    /// True for weights, false for biases (weight decay applies to weights only).
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.total];
        for l in self.layers() {
            m[l.weight.start..l.weight.start + l.weight.len].fill(true);
        }
        m
    }

    /// Parameter index range of the fully-connected head.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.fc.weight.start..self.fc.bias.start + self.fc.bias.len
    }
}

/// Affine map between relative sizes in bytes and the `[0, 100]` target scale,
/// fixed by the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl TargetScale {
    pub fn from_relative(tables: &[Vec<i64>]) -> Result<Self> {
        let mut it = tables.iter().flatten().map(|&v| v as f64);
        let first = it
            .next()
            .ok_or_else(|| Error::Input("no relative sizes to scale".into()))?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if max <= min {
            return Err(Error::Input(
                "relative sizes are constant across the corpus".into(),
            ));
        }
        Ok(Self { min, max })
    }

    pub fn to_target(&self, relative: &[i64]) -> Vec<f64> {
        relative
            .iter()
            .map(|&v| 100.0 * (v as f64 - self.min) / (self.max - self.min))
            .collect()
    }

    pub fn to_bytes(&self, target: f64) -> f64 {
        self.min + target / 100.0 * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub config: ModelConfig,
    pub scale: TargetScale,
    pub seed: u64,
    pub params: Vec<f64>,
    layout: Layout,
}

impl PredictorModel {
    /// Xavier-uniform weights, zero biases except the head bias, which starts
    /// at the middle of the target range.
    pub fn new(config: ModelConfig, scale: TargetScale, seed: u64) -> Result<Self> {
        let layout = Layout::new(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for l in layout.layers() {
            let a = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            for p in &mut params[l.weight.start..l.weight.start + l.weight.len] {
                *p = rng.gen_range(-a..a);
            }
        }
        let mid = 50.0 / config.output_scale;
        params[layout.fc.bias.start..layout.fc.bias.start + layout.fc.bias.len].fill(mid);
        Ok(Self {
            config,
            scale,
            seed,
            params,
            layout,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        scale: TargetScale,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(&config)?;
        if params.len() != layout.total {
            return Err(Error::Input(format!(
                "{} parameters for a model needing {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            scale,
            seed,
            params,
            layout,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Zeroes the fully-connected head.
    pub fn zero_head(&mut self) {
        let r = self.layout.head_range();
        self.params[r].fill(0.0);
    }

    fn check_input(&self, x: &FeatureTensor) -> Result<()> {
        if x.height != self.config.input_height || x.width != self.config.input_width {
            return Err(Error::Input(format!(
                "feature tensor is {}x{}, model expects {}x{}",
                x.height, x.width, self.config.input_height, self.config.input_width
            )));
        }
        Ok(())
    }

    /// Predicted targets. Dropout is active only when `dropout_rng` is given.
    pub fn forward(
        &self,
        x: &FeatureTensor,
        dropout_rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(network::forward(&self.config, &self.layout, &self.params, x, dropout_rng).output)
    }

    /// Eval-mode forward pass.
    pub fn predict(&self, x: &FeatureTensor) -> Result<Vec<f64>> {
        self.forward(x, None)
    }

    /// Loss of one sample and its gradient accumulated into `grad`.
    pub(crate) fn loss_and_grad(
        &self,
        x: &FeatureTensor,
        target: &[f64],
        dropout_rng: Option<&mut dyn rand::RngCore>,
        grad: &mut [f64],
    ) -> f64 {
        let cache = network::forward(&self.config, &self.layout, &self.params, x, dropout_rng);
        let d = loss_gradient(&cache.output, target);
        network::backward(&self.config, &self.layout, &self.params, &cache, &d, grad);
        loss(&cache.output, target)
    }

    pub fn predict_orientation(
        &self,
        x: &FeatureTensor,
        grid: &OrientationGrid,
    ) -> Result<Orientation> {
        let out = self.predict(x)?;
        select_orientation(&out, grid)
    }
}

/// Grid orientation with the smallest predicted value; ties go to the
/// lexicographically smallest `(pitch, yaw)`.
pub fn select_orientation(predicted: &[f64], grid: &OrientationGrid) -> Result<Orientation> {
    if predicted.len() != grid.len() {
        return Err(Error::Input(format!(
            "{} predictions for a grid of {}",
            predicted.len(),
            grid.len()
        )));
    }
    Ok(grid.get(argmin_f64(predicted)))
}

/// Mean squared error.
pub fn loss(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(
        pred.len(),
        target.len(),
        "prediction and target lengths differ"
    );
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

fn loss_gradient(pred: &[f64], target: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target)
        .map(|(p, t)| 2.0 * (p - t) / n)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Samples dropped because the perturbation flipped a ReLU or pooling choice.
    pub skipped_kinks: usize,
}

/// Compares the analytic gradient with central differences at `epsilon` for
/// `samples` parameters drawn from `range` (the whole vector by default).
/// Refused for models with dropout, whose loss is random.
pub fn gradient_check(
    model: &PredictorModel,
    x: &FeatureTensor,
    target: &[f64],
    epsilon: f64,
    samples: usize,
    range: Option<std::ops::Range<usize>>,
    seed: u64,
) -> Result<GradientCheck> {
    if model.config.dropout > 0.0 {
        return Err(Error::Config(
            "gradient check needs a model without dropout".into(),
        ));
    }
    model.check_input(x)?;
    let range = range.unwrap_or(0..model.params.len());
    if range.is_empty() || range.end > model.params.len() {
        return Err(Error::Config(
            "bad parameter range for gradient check".into(),
        ));
    }
    let mut grad = vec![0.0; model.params.len()];
    model.loss_and_grad(x, target, None, &mut grad);
    let base = network::forward(&model.config, &model.layout, &model.params, x, None).pattern();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    let mut attempts = 0;
    while checked < samples && attempts < samples * 20 {
        attempts += 1;
        let i = rng.gen_range(range.clone());
        let orig = probe.params[i];
        let mut eval = |v: f64| {
            probe.params[i] = v;
            let c = network::forward(&probe.config, &probe.layout, &probe.params, x, None);
            (loss(&c.output, target), c.pattern())
        };
        let (lp, pp) = eval(orig + epsilon);
        let (lm, pm) = eval(orig - epsilon);
        probe.params[i] = orig;
        if pp != base || pm != base {
            skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * epsilon);
        let analytic = grad[i];
        let denom = analytic.abs().max(numeric.abs());
        let err = if denom < 1e-10 {
            (analytic - numeric).abs()
        } else {
            (analytic - numeric).abs() / denom
        };
        worst = worst.max(err);
        checked += 1;
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        checked,
        skipped_kinks: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            channels: vec![4, 6],
            outputs: 9,
            dropout: 0.0,
            ..ModelConfig::for_input(4, 6)
        }
    }

    fn scale() -> TargetScale {
        TargetScale {
            min: -50.0,
            max: 150.0,
        }
    }

    fn random_tensor(h: usize, w: usize, seed: u64) -> FeatureTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = FeatureTensor::zeros(h, w);
        for v in &mut t.data {
            *v = rng.gen_range(-8.0..8.0);
        }
        t
    }

    #[test]
    fn zero_input_and_zero_head_give_zero_output() {
        let mut m = PredictorModel::new(small_config(), scale(), 1).unwrap();
        m.zero_head();
        let out = m.predict(&FeatureTensor::zeros(4, 6)).unwrap();
        assert_eq!(out, vec![0.0; 9]);
    }

    #[test]
    fn output_length_and_determinism() {
        let m = PredictorModel::new(ModelConfig::for_input(8, 12), scale(), 2).unwrap();
        let x = random_tensor(8, 12, 3);
        let a = m.predict(&x).unwrap();
        assert_eq!(a.len(), 361);
        assert_eq!(a, m.predict(&x).unwrap());
        assert!(a.iter().all(|v| v.is_finite()));
        assert!(m.predict(&random_tensor(8, 8, 3)).is_err());
    }

    #[test]
    fn loss_examples() {
        let t = vec![1.0, 2.0, 3.0];
        assert_eq!(loss(&t, &t), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        assert_eq!(loss(&p, &t), 1.0);
        let (a, b) = ([0.5, -2.0, 4.0, 1.0], [1.5, 0.0, 1.0, 1.0]);
        let expected = (1.0 + 4.0 + 9.0 + 0.0) / 4.0;
        assert!((loss(&a, &b) - expected).abs() < 1e-15);
    }

    #[test]
    fn selection_tie_break_and_one_hot() {
        let grid = OrientationGrid::default();
        assert_eq!(
            select_orientation(&vec![3.0; 361], &grid).unwrap(),
            Orientation::new(-45.0, -45.0)
        );
        let mut v = vec![1.0; 361];
        v[grid.center_index()] = 0.0;
        assert_eq!(
            select_orientation(&v, &grid).unwrap(),
            Orientation::IDENTITY
        );
        let affine: Vec<f64> = v.iter().map(|x| 3.0 * x + 11.0).collect();
        assert_eq!(
            select_orientation(&affine, &grid).unwrap(),
            Orientation::IDENTITY
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = PredictorModel::new(small_config(), scale(), 4).unwrap();
        let x = random_tensor(4, 6, 5);
        let target: Vec<f64> = (0..9).map(|i| 10.0 * i as f64).collect();
        let full = gradient_check(&m, &x, &target, 1e-3, 200, None, 6).unwrap();
        assert_eq!(full.checked, 200);
        assert!(full.max_relative_error < 1e-4, "{full:?}");
        let head =
            gradient_check(&m, &x, &target, 1e-3, 200, Some(m.layout().head_range()), 6).unwrap();
        assert!(head.max_relative_error < 1e-7, "{head:?}");
    }

    #[test]
    fn unshared_trunk_gradient() {
        let cfg = ModelConfig {
            shared_trunk: false,
            ..small_config()
        };
        let m = PredictorModel::new(cfg, scale(), 7).unwrap();
        let x = random_tensor(4, 6, 8);
        let target = vec![40.0; 9];
        let r = gradient_check(&m, &x, &target, 1e-3, 200, None, 9).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn gradient_check_refuses_dropout() {
        let cfg = ModelConfig {
            dropout: 0.5,
            ..small_config()
        };
        let m = PredictorModel::new(cfg, scale(), 1).unwrap();
        let r = gradient_check(
            &m,
            &FeatureTensor::zeros(4, 6),
            &[0.0; 9],
            1e-3,
            10,
            None,
            0,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn target_scaling() {
        let s = TargetScale::from_relative(&[vec![-20, 0, 30], vec![80, 0, -10]]).unwrap();
        assert_eq!((s.min, s.max), (-20.0, 80.0));
        assert_eq!(s.to_target(&[-20, 0, 80]), vec![0.0, 20.0, 100.0]);
        assert_eq!(s.to_bytes(20.0), 0.0);
        assert!(TargetScale::from_relative(&[vec![0, 0]]).is_err());
    }

    #[test]
    fn too_small_inputs_are_rejected() {
        assert!(Layout::new(&ModelConfig::for_input(4, 12)).is_err());
    }
}
