//! Kernel SVM motion classifier and motion-adaptive SHOE thresholds.
//!
//! Windows of 200 IMU samples are flattened time-major into 1200 features,
//! with the accelerometer and gyroscope groups each scaled to unit norm.
//! Three pairwise RBF machines vote on walk, run or stair; the vote picks the
//! SHOE threshold used until the next classification.

use std::path::Path;

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{check_schema, read_json, write_json, SCHEMA_VERSION};
use crate::detectors::{self, ImuDetector, ShoeParams};
use crate::error::{Error, Result};
use crate::imu::ImuSequence;
use crate::trial::MotionClass;

/// Samples per motion window.
pub const WINDOW_LEN: usize = 200;
/// Features per motion window.
pub const FEATURES: usize = WINDOW_LEN * 6;
/// Samples between classifications in [`adaptive_detect`].
pub const DEFAULT_INTERVAL: usize = 50;
/// Vote tie-break order, low-threshold motions first.
pub const TIE_ORDER: [MotionClass; 3] = [MotionClass::Walk, MotionClass::Stair, MotionClass::Run];

#[derive(Debug, Clone, PartialEq)]
pub struct MotionWindow {
    pub features: Vec<f64>,
}

/// Builds the normalized feature window over samples `k .. k + 200`,
/// optionally rotating every 3-vector by `rotation` first.
///
/// A channel group that is identically zero stays zero.
pub fn make_motion_window(seq: &ImuSequence, k: usize, rotation: Option<&Matrix3<f64>>) -> Result<MotionWindow> {
    let samples = seq.samples();
    if k + WINDOW_LEN > samples.len() {
        return Err(Error::invalid(format!(
            "motion window at {k} overruns a sequence of {} samples",
            samples.len()
        )));
    }
    let mut features = Vec::with_capacity(FEATURES);
    for s in &samples[k..k + WINDOW_LEN] {
        let (a, g) = match rotation {
            Some(r) => (r * s.accel, r * s.gyro),
            None => (s.accel, s.gyro),
        };
        features.extend_from_slice(&[a.x, a.y, a.z, g.x, g.y, g.z]);
    }
    for offset in [0, 3] {
        let norm = features
            .chunks(6)
            .flat_map(|c| &c[offset..offset + 3])
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for c in features.chunks_mut(6) {
                for v in &mut c[offset..offset + 3] {
                    *v /= norm;
                }
            }
        }
    }
    Ok(MotionWindow { features })
}

/// Windows starting every `stride` samples, each optionally under its own
/// uniformly random rotation.
pub fn extract_windows<R: Rng + ?Sized>(
    seq: &ImuSequence,
    stride: usize,
    mut rotate: Option<&mut R>,
) -> Result<Vec<MotionWindow>> {
    if stride == 0 {
        return Err(Error::invalid("window stride must be positive"));
    }
    if seq.len() < WINDOW_LEN {
        return Ok(Vec::new());
    }
    (0..=seq.len() - WINDOW_LEN)
        .step_by(stride)
        .map(|k| {
            let r = rotate.as_deref_mut().map(crate::augment::uniform_rotation);
            make_motion_window(seq, k, r.as_ref())
        })
        .collect()
}

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmTrainConfig {
    /// RBF kernel coefficient.
    pub gamma: f64,
    /// Soft-margin penalty.
    pub c: f64,
    /// KKT violation tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-3,
            c: 1.0,
            tolerance: 1e-3,
            max_iterations: 10_000_000,
        }
    }
}

/// One binary machine: `f(x) = sum coef_i k(sv_i, x) + bias`, positive means `positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryMachine {
    pub positive: MotionClass,
    pub negative: MotionClass,
    /// Indices into [`SvmModel::support_vectors`].
    pub support: Vec<usize>,
    /// Signed dual coefficients `alpha_i y_i`.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmModel {
    pub schema_version: u32,
    pub gamma: f64,
    pub c: f64,
    pub classes: Vec<MotionClass>,
    pub feature_len: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub machines: Vec<BinaryMachine>,
}

impl SvmModel {
    pub fn validate(&self) -> Result<()> {
        check_schema(self.schema_version, "SVM model")?;
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("SVM kernel coefficient must be positive"));
        }
        if self.support_vectors.iter().any(|v| v.len() != self.feature_len) {
            return Err(Error::invalid("support vector length differs from feature_len"));
        }
        let k = self.classes.len();
        if self.machines.len() != k * (k - 1) / 2 {
            return Err(Error::invalid(format!(
                "{} machines for {k} classes, expected one per class pair",
                self.machines.len()
            )));
        }
        for m in &self.machines {
            if m.support.len() != m.coefficients.len()
                || m.support.iter().any(|&i| i >= self.support_vectors.len())
            {
                return Err(Error::invalid("SVM machine references missing support vectors"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Decision value of every machine, in `machines` order.
    pub fn decision_values(&self, window: &MotionWindow) -> Vec<f64> {
        let k: Vec<f64> = self
            .support_vectors
            .iter()
            .map(|sv| rbf_kernel(sv, &window.features, self.gamma))
            .collect();
        self.machines
            .iter()
            .map(|m| m.support.iter().zip(&m.coefficients).map(|(&i, c)| c * k[i]).sum::<f64>() + m.bias)
            .collect()
    }
}

// libsvm-style SMO on the C-SVC dual with second-order working-set selection.
fn smo(gram: &[Vec<f64>], y: &[f64], cfg: &SvmTrainConfig) -> (Vec<f64>, f64) {
    const TAU: f64 = 1e-12;
    let n = y.len();
    let c = cfg.c;
    let q = |i: usize, j: usize| y[i] * y[j] * gram[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if y[t] > 0.0 {
                    if !lower(alpha[t]) {
                        let diff = gmax + grad[t];
                        gmax2 = gmax2.max(grad[t]);
                        if diff > 0.0 {
                            let quad = gram[i][i] + gram[t][t] - 2.0 * y[i] * q(i, t);
                            let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= obj_min {
                                obj_min = obj;
                                j_sel = Some(t);
                            }
                        }
                    }
                } else if !upper(alpha[t]) {
                    let diff = gmax - grad[t];
                    gmax2 = gmax2.max(-grad[t]);
                    if diff > 0.0 {
                        let quad = gram[i][i] + gram[t][t] + 2.0 * y[i] * q(i, t);
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if gmax + gmax2 < cfg.tolerance {
            break;
        }
        iter += 1;
        if iter > cfg.max_iterations {
            log::warn!("SMO stopped after {} iterations without reaching tolerance", cfg.max_iterations);
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = gram[i][i] + gram[j][j] + 2.0 * qij;
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = gram[i][i] + gram[j][j] - 2.0 * qij;
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(i, t) * di + q(j, t) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    (alpha, -rho)
}

/// Trains one soft-margin RBF machine per unordered class pair.
pub fn train_svm(windows: &[MotionWindow], labels: &[MotionClass], cfg: &SvmTrainConfig) -> Result<SvmModel> {
    if windows.len() != labels.len() {
        return Err(Error::invalid("window and label counts differ"));
    }
    if !(cfg.gamma > 0.0 && cfg.c > 0.0 && cfg.tolerance > 0.0) {
        return Err(Error::invalid("SVM gamma, C and tolerance must be positive"));
    }
    let feature_len = windows.first().map_or(0, |w| w.features.len());
    if windows.iter().any(|w| w.features.len() != feature_len || w.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("training windows must share one length and be finite"));
    }
    let classes: Vec<MotionClass> = MotionClass::ALL
        .into_iter()
        .filter(|c| labels.iter().filter(|&l| l == c).count() > 0)
        .collect();
    if classes.len() < 2 {
        return Err(Error::invalid("SVM training needs at least two motion classes"));
    }
    for c in &classes {
        if labels.iter().filter(|&l| l == c).count() < 2 {
            return Err(Error::invalid(format!("class {c} has fewer than two training windows")));
        }
    }

    let mut sv_index: Vec<Option<usize>> = vec![None; windows.len()];
    let mut support_vectors = Vec::new();
    let mut machines = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let idx: Vec<usize> = (0..windows.len()).filter(|&i| labels[i] == pos || labels[i] == neg).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == pos { 1.0 } else { -1.0 }).collect();
            let gram: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    idx.iter()
                        .map(|&j| rbf_kernel(&windows[i].features, &windows[j].features, cfg.gamma))
                        .collect()
                })
                .collect();
            let (alpha, bias) = smo(&gram, &y, cfg);
            let mut support = Vec::new();
            let mut coefficients = Vec::new();
            for (t, &i) in idx.iter().enumerate() {
                if alpha[t] > 0.0 {
                    let slot = *sv_index[i].get_or_insert_with(|| {
                        support_vectors.push(windows[i].features.clone());
                        support_vectors.len() - 1
                    });
                    support.push(slot);
                    coefficients.push(alpha[t] * y[t]);
                }
            }
            log::debug!("{pos} vs {neg}: {} support vectors", support.len());
            machines.push(BinaryMachine {
                positive: pos,
                negative: neg,
                support,
                coefficients,
                bias,
            });
        }
    }
    Ok(SvmModel {
        schema_version: SCHEMA_VERSION,
        gamma: cfg.gamma,
        c: cfg.c,
        classes,
        feature_len,
        support_vectors,
        machines,
    })
}

/// Majority vote of the pairwise machines, ties resolved by [`TIE_ORDER`].
pub fn classify_motion(model: &SvmModel, window: &MotionWindow) -> MotionClass {
    let mut votes = [0usize; 3];
    let slot = |c: MotionClass| TIE_ORDER.iter().position(|&t| t == c).expect("known class");
    for (m, f) in model.machines.iter().zip(model.decision_values(window)) {
        votes[slot(if f > 0.0 { m.positive } else { m.negative })] += 1;
    }
    let best = *votes.iter().max().expect("three slots");
    TIE_ORDER[votes.iter().position(|&v| v == best).expect("max exists")]
}

/// SHOE threshold for each motion class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTable {
    pub walk: f64,
    pub run: f64,
    pub stair: f64,
}

impl Default for ThresholdTable {
    fn default() -> Self {
        Self {
            walk: 1e7,
            run: 3.5e8,
            stair: 1e7,
        }
    }
}

impl ThresholdTable {
    pub fn uniform(gamma: f64) -> Self {
        Self {
            walk: gamma,
            run: gamma,
            stair: gamma,
        }
    }

    pub fn get(&self, motion: MotionClass) -> f64 {
        match motion {
            MotionClass::Walk => self.walk,
            MotionClass::Run => self.run,
            MotionClass::Stair => self.stair,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.walk, self.run, self.stair].iter().all(|g| *g > 0.0 && g.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("threshold table entries must be positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDetection {
    pub flags: Vec<bool>,
    /// SHOE threshold in force at each step.
    pub thresholds: Vec<f64>,
    /// Motion class in force at each step; `None` before the first classification.
    pub motions: Vec<Option<MotionClass>>,
}

/// SHOE with the threshold switched by the motion classifier.
///
/// Steps before the first full window use the walking threshold. From step
/// 200 on, the 200 samples preceding every `interval`-th step are classified
/// and the resulting threshold holds until the next classification.
pub fn adaptive_detect(
    seq: &ImuSequence,
    model: &SvmModel,
    table: &ThresholdTable,
    shoe: &ShoeParams,
    interval: usize,
) -> Result<AdaptiveDetection> {
    table.validate()?;
    shoe.validate()?;
    if interval == 0 {
        return Err(Error::invalid("classification interval must be positive"));
    }
    if seq.len() < WINDOW_LEN {
        return Err(Error::invalid(format!(
            "adaptive detection needs at least {WINDOW_LEN} samples, got {}",
            seq.len()
        )));
    }
    if model.feature_len != FEATURES {
        return Err(Error::invalid(format!(
            "SVM model expects {} features, motion windows have {FEATURES}",
            model.feature_len
        )));
    }
    let stats = detectors::statistics(seq, &ImuDetector::Shoe(*shoe))?;
    let n = seq.len();
    let mut thresholds = Vec::with_capacity(n);
    let mut motions = Vec::with_capacity(n);
    let mut current: Option<MotionClass> = None;
    for k in 0..n {
        if k >= WINDOW_LEN && (k - WINDOW_LEN).is_multiple_of(interval) {
            let w = make_motion_window(seq, k - WINDOW_LEN, None)?;
            current = Some(classify_motion(model, &w));
        }
        thresholds.push(table.get(current.unwrap_or(MotionClass::Walk)));
        motions.push(current);
    }
    let flags = stats.iter().zip(&thresholds).map(|(s, g)| s < g).collect();
    Ok(AdaptiveDetection {
        flags,
        thresholds,
        motions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu::ImuSample;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn seq_from(f: impl Fn(usize) -> ([f64; 3], [f64; 3]), n: usize) -> ImuSequence {
        let samples = (0..n)
            .map(|k| {
                let (a, g) = f(k);
                ImuSample::new(k as f64 / 200.0, Vector3::from(a), Vector3::from(g))
            })
            .collect();
        ImuSequence::new(samples, 200.0).unwrap()
    }

    fn group_norms(w: &MotionWindow) -> (f64, f64) {
        let mut a = 0.0;
        let mut g = 0.0;
        for c in w.features.chunks(6) {
            a += c[..3].iter().map(|v| v * v).sum::<f64>();
            g += c[3..].iter().map(|v| v * v).sum::<f64>();
        }
        (a.sqrt(), g.sqrt())
    }

    #[test]
    fn constant_input_gives_equal_blocks_and_unit_groups() {
        let seq = seq_from(|_| ([1.0, 2.0, 9.0], [0.1, -0.2, 0.3]), 250);
        let w = make_motion_window(&seq, 10, None).unwrap();
        assert_eq!(w.features.len(), FEATURES);
        let first = &w.features[..6];
        assert!(w.features.chunks(6).all(|c| c == first));
        let (a, g) = group_norms(&w);
        assert!((a - 1.0).abs() < 1e-12 && (g - 1.0).abs() < 1e-12);
        assert!(make_motion_window(&seq, 51, None).is_err());
    }

    #[test]
    fn random_input_groups_are_unit_norm_and_rotation_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nd = Normal::new(0.0, 3.0).unwrap();
        let raw: Vec<[f64; 6]> = (0..200).map(|_| std::array::from_fn(|_| nd.sample(&mut rng))).collect();
        let seq = seq_from(|k| ([raw[k][0], raw[k][1], raw[k][2]], [raw[k][3], raw[k][4], raw[k][5]]), 200);
        let w = make_motion_window(&seq, 0, None).unwrap();
        let (a, g) = group_norms(&w);
        assert!((a - 1.0).abs() < 1e-12 && (g - 1.0).abs() < 1e-12);

        let r = crate::augment::uniform_rotation(&mut rng);
        let rotated = ImuSequence::new(crate::augment::rotate_sample(seq.samples(), &r), 200.0).unwrap();
        let lhs = make_motion_window(&seq, 0, Some(&r)).unwrap();
        let rhs = make_motion_window(&rotated, 0, None).unwrap();
        for (x, y) in lhs.features.iter().zip(&rhs.features) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_values() {
        let x = vec![0.3; 10];
        assert_eq!(rbf_kernel(&x, &x, 1e-3), 1.0);
        let mut y = vec![0.0; 1000];
        y[0] = 1000f64.sqrt();
        let z = vec![0.0; 1000];
        assert!((rbf_kernel(&y, &z, 1e-3) - (-1f64).exp()).abs() < 1e-12);
        assert!((rbf_kernel(&y, &z, 1e-3) - 0.36788).abs() < 1e-5);
    }

    fn blobs(seed: u64, n: usize) -> (Vec<MotionWindow>, Vec<MotionClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 0.05).unwrap();
        let centres = [(MotionClass::Walk, 0.3f64), (MotionClass::Run, 1.3), (MotionClass::Stair, 2.4)];
        let mut w = Vec::new();
        let mut l = Vec::new();
        for (class, ang) in centres {
            for _ in 0..n {
                let a = ang + nd.sample(&mut rng);
                w.push(MotionWindow { features: vec![a.cos(), a.sin()] });
                l.push(class);
            }
        }
        (w, l)
    }

    #[test]
    fn separable_blobs_train_to_full_accuracy() {
        let (w, l) = blobs(5, 7);
        let cfg = SvmTrainConfig {
            gamma: 1.0,
            c: 100.0,
            ..SvmTrainConfig::default()
        };
        let model = train_svm(&w, &l, &cfg).unwrap();
        model.validate().unwrap();
        assert_eq!(model.machines.len(), 3);
        for (x, y) in w.iter().zip(&l) {
            assert_eq!(classify_motion(&model, x), *y);
        }
        // a support vector is classified as its own label
        let sv = &model.support_vectors[0];
        let label = l[w.iter().position(|x| &x.features == sv).unwrap()];
        assert_eq!(classify_motion(&model, &MotionWindow { features: sv.clone() }), label);
    }

    #[test]
    fn two_class_smo_satisfies_kkt() {
        let (w, l) = blobs(11, 10);
        let (w, l): (Vec<_>, Vec<_>) = w.into_iter().zip(l).filter(|(_, c)| *c != MotionClass::Stair).unzip();
        let cfg = SvmTrainConfig {
            gamma: 2.0,
            c: 1.0,
            ..SvmTrainConfig::default()
        };
        let model = train_svm(&w, &l, &cfg).unwrap();
        let m = &model.machines[0];
        // equality constraint sum alpha_i y_i = 0 and box constraint
        let s: f64 = m.coefficients.iter().sum();
        assert!(s.abs() < 1e-9);
        assert!(m.coefficients.iter().all(|c| c.abs() <= cfg.c + 1e-12));
        // margin condition up to the tolerance
        for (x, c) in w.iter().zip(&l) {
            let y = if *c == m.positive { 1.0 } else { -1.0 };
            let f = model.decision_values(x)[0];
            let alpha = m
                .support
                .iter()
                .zip(&m.coefficients)
                .find(|(&i, _)| model.support_vectors[i] == x.features)
                .map_or(0.0, |(_, c)| c.abs());
            if alpha == 0.0 {
                assert!(y * f >= 1.0 - 2e-3, "{}", y * f);
            } else if alpha < cfg.c {
                assert!((y * f - 1.0).abs() < 2e-3, "{}", y * f);
            } else {
                assert!(y * f <= 1.0 + 2e-3);
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let w = vec![MotionWindow { features: vec![1.0] }; 4];
        let l = vec![MotionClass::Run; 4];
        assert!(train_svm(&w, &l, &SvmTrainConfig::default()).is_err());
    }

    fn fixed_model(bias: [f64; 3]) -> SvmModel {
        let pairs = [
            (MotionClass::Walk, MotionClass::Run),
            (MotionClass::Walk, MotionClass::Stair),
            (MotionClass::Run, MotionClass::Stair),
        ];
        SvmModel {
            schema_version: 1,
            gamma: 1e-3,
            c: 1.0,
            classes: MotionClass::ALL.to_vec(),
            feature_len: FEATURES,
            support_vectors: vec![],
            machines: pairs
                .iter()
                .zip(bias)
                .map(|(&(p, n), b)| BinaryMachine {
                    positive: p,
                    negative: n,
                    support: vec![],
                    coefficients: vec![],
                    bias: b,
                })
                .collect(),
        }
    }

    #[test]
    fn vote_and_tie_rules() {
        let w = MotionWindow { features: vec![0.0; FEATURES] };
        // walk beats run and stair: unanimous for walk
        assert_eq!(classify_motion(&fixed_model([1.0, 1.0, 1.0]), &w), MotionClass::Walk);
        // run beats walk, stair beats walk, run beats stair
        assert_eq!(classify_motion(&fixed_model([-1.0, -1.0, 1.0]), &w), MotionClass::Run);
        // cyclic: run > walk, walk > stair, stair > run -> one vote each, walk wins the tie
        assert_eq!(classify_motion(&fixed_model([-1.0, 1.0, -1.0]), &w), MotionClass::Walk);
        // cyclic the other way: walk > run, stair > walk, run > stair
        assert_eq!(classify_motion(&fixed_model([1.0, -1.0, 1.0]), &w), MotionClass::Walk);
    }

    #[test]
    fn uniform_table_degenerates_to_fixed_shoe() {
        let trial = crate::sim::simulate(&crate::sim::GaitProfile::walk(), 8.0).unwrap();
        let shoe = ShoeParams::default();
        let table = ThresholdTable::uniform(2e7);
        let out = adaptive_detect(&trial.imu, &fixed_model([-1.0, -1.0, 1.0]), &table, &shoe, 50).unwrap();
        let fixed = detectors::detect_sequence(&trial.imu, &ImuDetector::Shoe(shoe.with_threshold(2e7))).unwrap();
        assert_eq!(out.flags, fixed.iter().map(|d| d.stationary).collect::<Vec<_>>());
    }

    #[test]
    fn thresholds_follow_classifier_schedule() {
        let trial = crate::sim::simulate(&crate::sim::GaitProfile::walk(), 8.0).unwrap();
        let table = ThresholdTable::default();
        // always votes run
        let out = adaptive_detect(&trial.imu, &fixed_model([-1.0, -1.0, 1.0]), &table, &ShoeParams::default(), 50)
            .unwrap();
        assert!(out.thresholds[..WINDOW_LEN].iter().all(|&g| g == table.walk));
        assert!(out.thresholds[WINDOW_LEN..].iter().all(|&g| g == table.run));
        assert!(out.motions[..WINDOW_LEN].iter().all(Option::is_none));
        assert!(out.thresholds.iter().all(|g| [table.walk, table.run, table.stair].contains(g)));
    }

    #[test]
    fn model_json_round_trip() {
        let (w, l) = blobs(2, 4);
        let model = train_svm(&w, &l, &SvmTrainConfig { gamma: 1.0, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("svm.json");
        model.save(&path).unwrap();
        assert_eq!(SvmModel::load(&path).unwrap(), model);
    }
}
