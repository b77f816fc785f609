//! LSTM zero-velocity classifier.
//!
//! A stack of standard LSTM layers (input, forget, cell and output gates, no
//! peepholes) reads a window of IMU samples. The final hidden state of the top
//! layer goes through a dense layer and a softmax over (stationary, moving).
//! The label of a window is the state at its last sample.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::augment::small_rotation;
use crate::config::{check_schema, read_json, write_json, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::imu::ImuSequence;
use crate::trial::TrialRecord;

pub const INPUT_SIZE: usize = 6;
pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_LAYERS: usize = 6;
pub const DEFAULT_HIDDEN: usize = 80;
pub const DEFAULT_GATE: f64 = 0.85;
/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-12;

/// One LSTM layer. Gate blocks are stacked in the order input, forget, cell, output;
/// `w` multiplies the concatenation `[x_t, h_{t-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden: usize,
    /// Row-major `4 hidden x (input_size + hidden)`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmLayer {
    fn weights(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((4 * self.hidden, self.input_size + self.hidden), &self.w).expect("validated shape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmModel {
    pub schema_version: u32,
    /// Samples per input window.
    pub window: usize,
    pub layers: Vec<LstmLayer>,
    /// Row-major `2 x hidden`; row 0 scores "stationary".
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
    /// Accelerometer and gyroscope inputs are divided by these before the first layer.
    pub input_scale: [f64; 2],
    pub seed: u64,
}

/// Softmax output for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p_zero: f64,
    pub p_move: f64,
}

impl LstmModel {
    /// Randomly initialized model; weights uniform in `+-1/sqrt(hidden)`,
    /// forget-gate biases at one.
    pub fn new(layers: usize, hidden: usize, window: usize, seed: u64) -> Result<Self> {
        if layers == 0 || hidden == 0 || window == 0 {
            return Err(Error::invalid("LSTM layers, hidden size and window must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        let layers = (0..layers)
            .map(|l| {
                let input_size = if l == 0 { INPUT_SIZE } else { hidden };
                let w = (0..4 * hidden * (input_size + hidden)).map(|_| rng.sample(dist)).collect();
                let mut b = vec![0.0; 4 * hidden];
                b[hidden..2 * hidden].fill(1.0);
                LstmLayer {
                    input_size,
                    hidden,
                    w,
                    b,
                }
            })
            .collect();
        let fc_w = (0..2 * hidden).map(|_| rng.sample(dist)).collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            window,
            layers,
            fc_w,
            fc_b: vec![0.0; 2],
            input_scale: [1.0, 1.0],
            seed,
        })
    }

    /// Six layers of 80 units over 100-sample windows.
    pub fn default_architecture(seed: u64) -> Self {
        Self::new(DEFAULT_LAYERS, DEFAULT_HIDDEN, DEFAULT_WINDOW, seed).expect("positive sizes")
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map_or(0, |l| l.hidden)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>() + self.fc_w.len() + self.fc_b.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "LSTM model")?;
        if self.layers.is_empty() || self.window == 0 {
            return Err(Error::invalid("LSTM model needs at least one layer and a positive window"));
        }
        let mut input = INPUT_SIZE;
        for (i, l) in self.layers.iter().enumerate() {
            if l.input_size != input
                || l.hidden == 0
                || l.w.len() != 4 * l.hidden * (l.input_size + l.hidden)
                || l.b.len() != 4 * l.hidden
            {
                return Err(Error::invalid(format!("LSTM layer {i} has inconsistent shapes")));
            }
            input = l.hidden;
        }
        if self.fc_w.len() != 2 * input || self.fc_b.len() != 2 {
            return Err(Error::invalid("LSTM output layer has inconsistent shapes"));
        }
        if !(self.input_scale.iter().all(|s| *s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("LSTM input scales must be positive"));
        }
        if !self.parameters().all(f64::is_finite) {
            return Err(Error::NonFinite("LSTM parameters".into()));
        }
        Ok(())
    }

    fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b))
            .chain(&self.fc_w)
            .chain(&self.fc_b)
            .copied()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Softmax outputs for a batch of windows of equal length.
    pub fn predict(&self, batch: &[&[[f64; 6]]]) -> Result<Vec<Prediction>> {
        let (probs, _) = self.forward_batch(batch, false)?;
        Ok(probs
            .outer_iter()
            .map(|r| Prediction {
                p_zero: r[0],
                p_move: r[1],
            })
            .collect())
    }
}

/// Forward pass for a single window.
pub fn lstm_forward(model: &LstmModel, x: &[[f64; 6]]) -> Result<Prediction> {
    Ok(model.predict(&[x])?[0])
}

struct StepCache {
    z: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
}

struct ForwardCache {
    /// `[layer][t]`
    steps: Vec<Vec<StepCache>>,
    top_h: Array2<f64>,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl LstmModel {
    fn scaled_inputs(&self, batch: &[&[[f64; 6]]]) -> Result<Vec<Array2<f64>>> {
        let len = batch.first().map_or(0, |x| x.len());
        if batch.is_empty() || len == 0 || batch.iter().any(|x| x.len() != len) {
            return Err(Error::invalid("LSTM batch must be non-empty with equal-length windows"));
        }
        let [sa, sg] = self.input_scale;
        Ok((0..len)
            .map(|t| {
                Array2::from_shape_fn((batch.len(), INPUT_SIZE), |(b, c)| {
                    batch[b][t][c] / if c < 3 { sa } else { sg }
                })
            })
            .collect())
    }

    fn forward_batch(&self, batch: &[&[[f64; 6]]], keep: bool) -> Result<(Array2<f64>, Option<ForwardCache>)> {
        let mut seq = self.scaled_inputs(batch)?;
        let n = batch.len();
        let mut steps = Vec::new();
        for layer in &self.layers {
            let h_dim = layer.hidden;
            let w = layer.weights();
            let bias = ArrayView2::from_shape((1, 4 * h_dim), &layer.b).expect("validated shape");
            let mut h = Array2::<f64>::zeros((n, h_dim));
            let mut c = Array2::<f64>::zeros((n, h_dim));
            let mut outputs = Vec::with_capacity(seq.len());
            let mut cache = Vec::new();
            for x in &seq {
                let mut z = Array2::<f64>::zeros((n, layer.input_size + h_dim));
                z.slice_mut(s![.., ..layer.input_size]).assign(x);
                z.slice_mut(s![.., layer.input_size..]).assign(&h);
                let gates = z.dot(&w.t()) + bias;
                let i = gates.slice(s![.., 0..h_dim]).mapv(sigmoid);
                let f = gates.slice(s![.., h_dim..2 * h_dim]).mapv(sigmoid);
                let g = gates.slice(s![.., 2 * h_dim..3 * h_dim]).mapv(f64::tanh);
                let o = gates.slice(s![.., 3 * h_dim..]).mapv(sigmoid);
                let c_new = &f * &c + &i * &g;
                let tanh_c = c_new.mapv(f64::tanh);
                h = &o * &tanh_c;
                if keep {
                    cache.push(StepCache {
                        z,
                        i,
                        f,
                        g,
                        o,
                        c_prev: c,
                        tanh_c,
                    });
                }
                c = c_new;
                outputs.push(h.clone());
            }
            if keep {
                steps.push(cache);
            }
            seq = outputs;
        }
        let top_h = seq.pop().expect("non-empty window");
        let fc_w = ArrayView2::from_shape((2, self.hidden()), &self.fc_w).expect("validated shape");
        let mut logits = top_h.dot(&fc_w.t());
        for mut row in logits.outer_iter_mut() {
            row[0] += self.fc_b[0];
            row[1] += self.fc_b[1];
            let m = row[0].max(row[1]);
            let (e0, e1) = ((row[0] - m).exp(), (row[1] - m).exp());
            let sum = e0 + e1;
            row[0] = e0 / sum;
            row[1] = e1 / sum;
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LSTM activations".into()));
        }
        Ok((logits, keep.then_some(ForwardCache { steps, top_h })))
    }
}

/// Mean binary cross-entropy of `p` (probability of "stationary") against `y`.
pub fn loss(y: &[bool], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() || y.is_empty() {
        return Err(Error::invalid("loss needs equal, non-empty label and probability lists"));
    }
    let mut clamped = false;
    let sum: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let q = pi.clamp(P_CLAMP, 1.0 - P_CLAMP);
            clamped |= q != pi;
            if yi {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    if clamped {
        log::warn!("probabilities at 0 or 1 clamped to {P_CLAMP} in the loss");
    }
    Ok(sum / y.len() as f64)
}

/// Parameter gradients with the same layout as [`LstmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl Gradients {
    fn check_finite(&self) -> Result<()> {
        for (l, (w, b)) in self.layers.iter().enumerate() {
            if let Some(i) = w.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of layers[{l}].w[{i}]")));
            }
            if let Some(i) = b.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of layers[{l}].b[{i}]")));
            }
        }
        if let Some(i) = self.fc_w.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of fc_w[{i}]")));
        }
        if let Some(i) = self.fc_b.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of fc_b[{i}]")));
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b))
            .chain(&self.fc_w)
            .chain(&self.fc_b)
            .copied()
            .collect()
    }
}

/// Loss and its gradient by backpropagation through time.
pub fn gradient(model: &LstmModel, batch: &[&[[f64; 6]]], labels: &[bool]) -> Result<(f64, Gradients)> {
    if batch.len() != labels.len() {
        return Err(Error::invalid("batch and label counts differ"));
    }
    let (probs, cache) = model.forward_batch(batch, true)?;
    let cache = cache.expect("cache requested");
    let n = batch.len();
    let loss_value = loss(labels, &probs.column(0).to_vec())?;

    // d loss / d logits = (softmax - onehot) / n, onehot = (y, 1 - y)
    let mut dlogits = probs.clone();
    for (mut row, &y) in dlogits.outer_iter_mut().zip(labels) {
        let t = if y { 1.0 } else { 0.0 };
        row[0] = (row[0] - t) / n as f64;
        row[1] = (row[1] - (1.0 - t)) / n as f64;
    }
    let hidden = model.hidden();
    let fc_w = ArrayView2::from_shape((2, hidden), &model.fc_w).expect("validated shape");
    let d_fc_w = dlogits.t().dot(&cache.top_h);
    let d_fc_b = dlogits.sum_axis(Axis(0));
    let dh_top = dlogits.dot(&fc_w);

    let len = batch[0].len();
    // gradient flowing into each layer's hidden outputs, per time step
    let mut dh_in: Vec<Option<Array2<f64>>> = vec![None; len];
    dh_in[len - 1] = Some(dh_top);
    let mut layer_grads = vec![(Vec::new(), Vec::new()); model.layers.len()];
    for (l, layer) in model.layers.iter().enumerate().rev() {
        let h_dim = layer.hidden;
        let w = layer.weights();
        let mut dw = Array2::<f64>::zeros((4 * h_dim, layer.input_size + h_dim));
        let mut db = Array1::<f64>::zeros(4 * h_dim);
        let mut dh_next = Array2::<f64>::zeros((n, h_dim));
        let mut dc_next = Array2::<f64>::zeros((n, h_dim));
        let mut dx_out: Vec<Option<Array2<f64>>> = vec![None; len];
        for t in (0..len).rev() {
            let st = &cache.steps[l][t];
            let mut dh = dh_next;
            if let Some(extra) = &dh_in[t] {
                dh += extra;
            }
            let dc = &dc_next + &(&dh * &st.o * &st.tanh_c.mapv(|v| 1.0 - v * v));
            let d_o = &dh * &st.tanh_c * &st.o * &st.o.mapv(|v| 1.0 - v);
            let d_i = &dc * &st.g * &st.i * &st.i.mapv(|v| 1.0 - v);
            let d_f = &dc * &st.c_prev * &st.f * &st.f.mapv(|v| 1.0 - v);
            let d_g = &dc * &st.i * &st.g.mapv(|v| 1.0 - v * v);
            dc_next = &dc * &st.f;
            let mut dgates = Array2::<f64>::zeros((n, 4 * h_dim));
            dgates.slice_mut(s![.., 0..h_dim]).assign(&d_i);
            dgates.slice_mut(s![.., h_dim..2 * h_dim]).assign(&d_f);
            dgates.slice_mut(s![.., 2 * h_dim..3 * h_dim]).assign(&d_g);
            dgates.slice_mut(s![.., 3 * h_dim..]).assign(&d_o);
            dw += &dgates.t().dot(&st.z);
            db += &dgates.sum_axis(Axis(0));
            let dz = dgates.dot(&w);
            dh_next = dz.slice(s![.., layer.input_size..]).to_owned();
            if l > 0 {
                dx_out[t] = Some(dz.slice(s![.., ..layer.input_size]).to_owned());
            }
        }
        layer_grads[l] = (dw.into_raw_vec_and_offset().0, db.to_vec());
        dh_in = dx_out;
    }
    let grads = Gradients {
        layers: layer_grads,
        fc_w: d_fc_w.into_raw_vec_and_offset().0,
        fc_b: d_fc_b.to_vec(),
    };
    grads.check_finite()?;
    Ok((loss_value, grads))
}

/// A training window and the stationary label of its last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub x: Vec<[f64; 6]>,
    pub y: bool,
}

/// Windows of `window` samples ending at `count` randomly chosen steps of `trial`.
pub fn sample_windows(trial: &TrialRecord, window: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<TrainSample>> {
    let zv = trial.require_zv()?;
    let n = trial.imu.len();
    if window == 0 || n < window {
        return Err(Error::invalid(format!("trial of {n} samples is shorter than the window {window}")));
    }
    let channels: Vec<[f64; 6]> = trial.imu.samples().iter().map(|s| s.channels()).collect();
    let ends = Uniform::new_inclusive(window - 1, n - 1).expect("non-empty range");
    Ok((0..count)
        .map(|_| {
            let end = rng.sample(ends);
            TrainSample {
                x: channels[end + 1 - window..=end].to_vec(),
                y: zv[end],
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub layers: usize,
    pub hidden: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Confidence gate stored alongside the model for inference.
    pub gate: f64,
    pub seed: u64,
    pub augment_rotation: bool,
    /// Largest augmentation rotation, degrees.
    pub max_rotation_deg: f64,
    pub augment_scale: bool,
    /// Scale factors are drawn uniformly from `[1 - scale_spread, 1 + scale_spread]`.
    pub scale_spread: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            layers: DEFAULT_LAYERS,
            hidden: DEFAULT_HIDDEN,
            window: DEFAULT_WINDOW,
            epochs: 300,
            learning_rate: 1e-3,
            batch_size: 256,
            gate: DEFAULT_GATE,
            seed: 0,
            augment_rotation: true,
            max_rotation_deg: 10.0,
            augment_scale: true,
            scale_spread: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "LSTM training config")?;
        if !(self.gate > 0.5 && self.gate < 1.0) {
            return Err(Error::invalid(format!("confidence gate {} must lie in (0.5, 1)", self.gate)));
        }
        if self.layers == 0 || self.hidden == 0 || self.window == 0 || self.batch_size == 0 {
            return Err(Error::invalid("layers, hidden, window and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.max_rotation_deg >= 0.0 && (0.0..1.0).contains(&self.scale_spread)) {
            return Err(Error::invalid("augmentation ranges out of bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    /// Loss of the initial model before any update.
    pub initial: EpochStats,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut LstmModel, grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let params = model
            .layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
            .chain(model.fc_w.iter_mut())
            .chain(model.fc_b.iter_mut());
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Root-mean-square accelerometer and gyroscope norms over the data set.
fn input_scales(data: &[TrainSample]) -> [f64; 2] {
    let (mut a, mut g, mut n) = (0.0, 0.0, 0usize);
    for s in data {
        for x in &s.x {
            a += x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            g += x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
            n += 1;
        }
    }
    let rms = |v: f64| if n > 0 && v > 0.0 { (v / n as f64).sqrt() } else { 1.0 };
    [rms(a), rms(g)]
}

fn augment(x: &[[f64; 6]], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<[f64; 6]> {
    let r = if cfg.augment_rotation {
        small_rotation(rng, cfg.max_rotation_deg.to_radians())
    } else {
        nalgebra::Matrix3::identity()
    };
    let s = if cfg.augment_scale && cfg.scale_spread > 0.0 {
        rng.sample(Uniform::new_inclusive(1.0 - cfg.scale_spread, 1.0 + cfg.scale_spread).expect("valid range"))
    } else {
        1.0
    };
    x.iter()
        .map(|c| {
            let a = r * nalgebra::Vector3::new(c[0], c[1], c[2]) * s;
            let g = r * nalgebra::Vector3::new(c[3], c[4], c[5]) * s;
            [a.x, a.y, a.z, g.x, g.y, g.z]
        })
        .collect()
}

/// Mean loss of `model` over `data`, evaluated in chunks.
pub fn dataset_loss(model: &LstmModel, data: &[TrainSample]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.chunks(256) {
        let xs: Vec<&[[f64; 6]]> = chunk.iter().map(|s| s.x.as_slice()).collect();
        let ys: Vec<bool> = chunk.iter().map(|s| s.y).collect();
        let p: Vec<f64> = model.predict(&xs)?.iter().map(|p| p.p_zero).collect();
        total += loss(&ys, &p)? * chunk.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Adam training with per-epoch seeded shuffling and optional augmentation.
///
/// Returns the parameters with the lowest validation loss (training loss when
/// `validation` is empty).
pub fn train(data: &[TrainSample], validation: &[TrainSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !(data.iter().any(|s| s.y) && data.iter().any(|s| !s.y)) {
        return Err(Error::Training("training data must contain both stationary and moving windows".into()));
    }
    if data.iter().chain(validation).any(|s| s.x.len() != cfg.window) {
        return Err(Error::invalid(format!("every training window must hold {} samples", cfg.window)));
    }
    let mut model = LstmModel::new(cfg.layers, cfg.hidden, cfg.window, cfg.seed)?;
    model.input_scale = input_scales(data);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(model.parameter_count());
    let eval_set = if validation.is_empty() { data } else { validation };

    let initial_train = dataset_loss(&model, data)?;
    let initial = EpochStats {
        train_loss: initial_train,
        validation_loss: dataset_loss(&model, eval_set)?,
    };
    let mut best = (initial.validation_loss, model.clone(), 0);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<Vec<[f64; 6]>> = batch.iter().map(|&i| augment(&data[i].x, cfg, &mut rng)).collect();
            let refs: Vec<&[[f64; 6]]> = xs.iter().map(Vec::as_slice).collect();
            let ys: Vec<bool> = batch.iter().map(|&i| data[i].y).collect();
            let (l, g) = gradient(&model, &refs, &ys).map_err(|e| {
                Error::Training(format!("epoch {epoch}: {e}"))
            })?;
            if !l.is_finite() {
                return Err(Error::Training(format!("loss became {l} in epoch {epoch}")));
            }
            epoch_loss += l * batch.len() as f64;
            adam.step(&mut model, &g.flat(), cfg.learning_rate);
        }
        let stats = EpochStats {
            train_loss: epoch_loss / data.len() as f64,
            validation_loss: dataset_loss(&model, eval_set)?,
        };
        if !stats.validation_loss.is_finite() {
            return Err(Error::Training(format!("validation loss became {} in epoch {epoch}", stats.validation_loss)));
        }
        log::debug!(
            "epoch {epoch}: train {:.5} validation {:.5}",
            stats.train_loss,
            stats.validation_loss
        );
        if stats.validation_loss < best.0 {
            best = (stats.validation_loss, model.clone(), epoch);
        }
        history.push(stats);
    }
    Ok(TrainOutcome {
        model: best.1,
        initial,
        history,
        best_epoch: best.2,
    })
}

/// Per-step probability of "stationary" from the window ending at each step;
/// `None` for the first `window - 1` steps.
pub fn zero_velocity_probabilities(model: &LstmModel, seq: &ImuSequence) -> Result<Vec<Option<f64>>> {
    model.validate()?;
    let w = model.window;
    let n = seq.len();
    if n < w {
        return Err(Error::invalid(format!("sequence of {n} samples is shorter than the LSTM window {w}")));
    }
    let channels: Vec<[f64; 6]> = seq.samples().iter().map(|s| s.channels()).collect();
    let mut out = vec![None; w - 1];
    let ends: Vec<usize> = (w - 1..n).collect();
    for chunk in ends.chunks(256) {
        let xs: Vec<&[[f64; 6]]> = chunk.iter().map(|&e| &channels[e + 1 - w..=e]).collect();
        out.extend(model.predict(&xs)?.into_iter().map(|p| Some(p.p_zero)));
    }
    Ok(out)
}

/// Flags a step stationary when the softmax prefers "stationary" with probability at least `gate`.
pub fn classify(model: &LstmModel, seq: &ImuSequence, gate: f64) -> Result<Vec<bool>> {
    if !(0.5..=1.0).contains(&gate) {
        return Err(Error::invalid(format!("confidence gate {gate} must lie in [0.5, 1]")));
    }
    Ok(gate_flags(&zero_velocity_probabilities(model, seq)?, gate))
}

/// Applies the confidence gate to precomputed probabilities.
pub fn gate_flags(probs: &[Option<f64>], gate: f64) -> Vec<bool> {
    probs
        .iter()
        .map(|p| p.is_some_and(|p| p > 0.5 && p >= gate))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Vec<[f64; 6]> {
        (0..len)
            .map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0)))
            .collect()
    }

    fn flat_params(model: &LstmModel) -> Vec<f64> {
        model.parameters().collect()
    }

    fn set_param(model: &mut LstmModel, idx: usize, value: f64) {
        let p = model
            .layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
            .chain(model.fc_w.iter_mut())
            .chain(model.fc_b.iter_mut())
            .nth(idx)
            .expect("index in range");
        *p = value;
    }

    #[test]
    fn softmax_outputs_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = LstmModel::new(2, 8, 20, 3).unwrap();
        for _ in 0..20 {
            let x = random_window(&mut rng, 20);
            let p = lstm_forward(&model, &x).unwrap();
            assert!((p.p_zero + p.p_move - 1.0).abs() < 1e-12);
            assert!(p.p_zero > 0.0 && p.p_zero < 1.0);
        }
    }

    #[test]
    fn zero_parameters_give_even_odds() {
        let mut model = LstmModel::new(2, 4, 10, 0).unwrap();
        for l in &mut model.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        model.fc_w.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = lstm_forward(&model, &random_window(&mut rng, 10)).unwrap();
        assert_eq!((p.p_zero, p.p_move), (0.5, 0.5));
    }

    #[test]
    fn single_cell_matches_hand_evaluation() {
        let mut model = LstmModel::new(1, 1, 1, 0).unwrap();
        // rows: i, f, g, o; columns: six inputs then h
        let w: Vec<f64> = (0..28).map(|k| 0.05 * (k as f64) - 0.6).collect();
        let b = vec![0.1, -0.2, 0.3, -0.4];
        model.layers[0].w = w.clone();
        model.layers[0].b = b.clone();
        model.fc_w = vec![0.7, -1.1];
        model.fc_b = vec![0.05, -0.02];
        let x = [0.3, -0.5, 0.9, 0.1, -0.2, 0.4];
        let pre = |row: usize| (0..6).map(|c| w[row * 7 + c] * x[c]).sum::<f64>() + b[row];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (i, g, o) = (sig(pre(0)), pre(2).tanh(), sig(pre(3)));
        let c = i * g;
        let h = o * c.tanh();
        let (l0, l1) = (0.7 * h + 0.05, -1.1 * h - 0.02);
        let p0 = l0.exp() / (l0.exp() + l1.exp());
        let p = lstm_forward(&model, &[x]).unwrap();
        assert!((p.p_zero - p0).abs() < 1e-12);
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(&[true], &[1.0]).unwrap(), -(1.0 - P_CLAMP).ln());
        assert!(loss(&[true], &[1.0]).unwrap() < 1e-11);
        assert!((loss(&[true], &[0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((loss(&[true], &[0.0]).unwrap() - (-P_CLAMP.ln())).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<bool> = (0..50).map(|_| rng.random()).collect();
        let p: Vec<f64> = (0..50).map(|_| rng.random_range(0.01..0.99)).collect();
        let oracle = -y
            .iter()
            .zip(&p)
            .map(|(&yi, &pi)| if yi { pi.ln() } else { (1.0 - pi).ln() })
            .sum::<f64>()
            / 50.0;
        assert!((loss(&y, &p).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = LstmModel::new(2, 4, 10, 11).unwrap();
        let xs: Vec<Vec<[f64; 6]>> = (0..3).map(|_| random_window(&mut rng, 10)).collect();
        let refs: Vec<&[[f64; 6]]> = xs.iter().map(Vec::as_slice).collect();
        let ys = [true, false, true];
        let (_, g) = gradient(&model, &refs, &ys).unwrap();
        let analytic = g.flat();
        let params = flat_params(&model);
        assert_eq!(analytic.len(), params.len());
        let eps = 1e-5;
        let loss_at = |m: &LstmModel| {
            let p: Vec<f64> = m.predict(&refs).unwrap().iter().map(|p| p.p_zero).collect();
            loss(&ys, &p).unwrap()
        };
        for (k, (&p0, &ga)) in params.iter().zip(&analytic).enumerate() {
            let mut plus = model.clone();
            set_param(&mut plus, k, p0 + eps);
            let mut minus = model.clone();
            set_param(&mut minus, k, p0 - eps);
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let scale = ga.abs().max(fd.abs());
            assert!((ga - fd).abs() <= 1e-4 * scale + 1e-9, "param {k}: analytic {ga} vs fd {fd}");
        }
    }

    #[test]
    fn duplicated_batch_has_the_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = LstmModel::new(2, 3, 6, 5).unwrap();
        let xs: Vec<Vec<[f64; 6]>> = (0..2).map(|_| random_window(&mut rng, 6)).collect();
        let one: Vec<&[[f64; 6]]> = xs.iter().map(Vec::as_slice).collect();
        let two: Vec<&[[f64; 6]]> = one.iter().chain(&one).copied().collect();
        let (_, g1) = gradient(&model, &one, &[true, false]).unwrap();
        let (_, g2) = gradient(&model, &two, &[true, false, true, false]).unwrap();
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-3));
        }
    }

    #[test]
    fn confident_correct_output_has_small_output_gradient() {
        let mut model = LstmModel::new(1, 2, 4, 1).unwrap();
        model.fc_b = vec![40.0, -40.0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_window(&mut rng, 4);
        let (l, g) = gradient(&model, &[&x], &[true]).unwrap();
        assert!(l < 1e-12);
        assert!(g.fc_w.iter().chain(&g.fc_b).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gate_is_monotone() {
        let probs = vec![None, Some(0.3), Some(0.86), Some(0.9), Some(0.99), Some(0.5)];
        let low = gate_flags(&probs, 0.85);
        let high = gate_flags(&probs, 0.95);
        assert_eq!(low, vec![false, false, true, true, true, false]);
        assert!(high.iter().zip(&low).all(|(h, l)| !h || *l));
        assert!(gate_flags(&probs, 1.0).iter().all(|f| !f));
    }

    #[test]
    fn shape_validation_and_json_round_trip() {
        let model = LstmModel::new(2, 3, 5, 1).unwrap();
        model.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lstm.json");
        model.save(&path).unwrap();
        assert_eq!(LstmModel::load(&path).unwrap(), model);
        let mut bad = model.clone();
        bad.layers[1].w.pop();
        assert!(bad.validate().is_err());
        let d = LstmModel::default_architecture(0);
        assert_eq!(d.layers.len(), 6);
        assert_eq!(d.hidden(), 80);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // stationary windows are quiet, moving windows are not
        let data: Vec<TrainSample> = (0..40)
            .map(|k| {
                let y = k % 2 == 0;
                let amp = if y { 0.01 } else { 1.5 };
                let x = (0..8)
                    .map(|_| {
                        let mut c: [f64; 6] = std::array::from_fn(|_| rng.random_range(-amp..amp));
                        c[2] += 9.8;
                        c
                    })
                    .collect();
                TrainSample { x, y }
            })
            .collect();
        let cfg = TrainConfig {
            layers: 1,
            hidden: 4,
            window: 8,
            epochs: 30,
            learning_rate: 0.02,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let a = train(&data, &[], &cfg).unwrap();
        let b = train(&data, &[], &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let best = a.history[a.best_epoch - 1].validation_loss;
        assert!(best < 0.5 * a.initial.validation_loss);
        let one_class: Vec<_> = data.iter().filter(|s| s.y).cloned().collect();
        assert!(train(&one_class, &[], &cfg).is_err());
    }
}
