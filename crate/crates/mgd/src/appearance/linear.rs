//! Trainable logistic-regression baseline over the fixed crop features, with
//! a flat binary model file.

use super::features::{extract_features, FEATURE_COUNT};
use super::{BackendError, ClassifierScore, CropClassifier};
use crate::imgproc::Frame;
use std::io::{Read, Write};
use std::path::Path;

const MODEL_MAGIC: &[u8; 5] = b"MGDL1";

#[derive(Clone, Copy, Debug)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_weight: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 500, l2_weight: 1e-4 }
    }
}

/// Logistic regression over [`extract_features`] output.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    weights: [f64; FEATURE_COUNT],
    bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LinearClassifier {
    pub fn from_weights(weights: [f64; FEATURE_COUNT], bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn weights(&self) -> (&[f64; FEATURE_COUNT], f64) {
        (&self.weights, self.bias)
    }

    pub fn score_features(&self, features: &[f64; FEATURE_COUNT]) -> f64 {
        let z: f64 =
            self.weights.iter().zip (features).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        sigmoid(z)
    }
}

impl CropClassifier for LinearClassifier {
    fn classify(&mut self, crop: &Frame) -> Result<ClassifierScore, BackendError> {
        Ok(ClassifierScore::new(self.score_features(&extract_features(crop))))
    }
}

/// Fit by full-batch gradient descent. Features are standardized with
/// training-set statistics for the descent, then the standardization is
/// folded back into the stored weights so scoring works on raw features and
/// the model file stays a flat weight vector.
pub fn train_linear_classifier(
    samples: &[(Frame, bool)],
    params: &TrainParams,
) -> Result<LinearClassifier, BackendError> {
    let positives = samples.iter().filter(|(_, label)| *label).count();
    if positives == 0 || positives == samples.len() {
        return Err(BackendError::SingleClass);
    }

    let n = samples.len();
    let features: Vec<[f64; FEATURE_COUNT]> =
        samples.iter().map(|(crop, _)| extract_features(crop)).collect();

    let mut mean = [0.0f64; FEATURE_COUNT];
    for f in &features {
        for j in 0..FEATURE_COUNT {
            mean[j] += f[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut std_dev = [0.0f64; FEATURE_COUNT];
    for f in &features {
        for j in 0..FEATURE_COUNT {
            std_dev[j] += (f[j] - mean[j]).powi(2);
        }
    }
    for s in std_dev.iter_mut() {
        *s = (*s / n as f64).sqrt().max(1e-9);
    }
    let standardized: Vec<[f64; FEATURE_COUNT]> = features
        .iter()
        .map(|f| std::array::from_fn(|j| (f[j] - mean[j]) / std_dev[j]))
        .collect();

    let mut w = [0.0f64; FEATURE_COUNT];
    let mut b = 0.0f64;
    for _ in 0..params.epochs {
        let mut grad_w = [0.0f64; FEATURE_COUNT];
        let mut grad_b = 0.0f64;
        for (x, (_, label)) in standardized.iter().zip(samples) {
            let z: f64 = w.iter().zip(x).map(|(wj, xj)| wj * xj).sum::<f64>() + b;
            let err = sigmoid(z) - if *label { 1.0 } else { 0.0 };
            for j in 0..FEATURE_COUNT {
                grad_w[j] += err * x[j];
            }
            grad_b += err;
        }
        for j in 0..FEATURE_COUNT {
            w[j] -= params.learning_rate * (grad_w[j] / n as f64 + params.l2_weight * w[j]);
        }
        b -= params.learning_rate * grad_b / n as f64;
    }

    // Fold the standardization into raw-feature weights.
    let mut weights = [0.0f64; FEATURE_COUNT];
    let mut bias = b;
    for j in 0..FEATURE_COUNT {
        weights[j] = w[j] / std_dev[j];
        bias -= w[j] * mean[j] / std_dev[j];
    }
    Ok(LinearClassifier { weights, bias })
}

/// Write `MGDL1` then 21 little-endian f64 values (20 weights, then bias).
pub fn save_model(path: &Path, model: &LinearClassifier) -> Result<(), BackendError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(MODEL_MAGIC)?;
    for wj in &model.weights {
        file.write_all(&wj.to_le_bytes())?;
    }
    file.write_all(&model.bias.to_le_bytes())?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LinearClassifier, BackendError> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 5];
    file.read_exact(&mut magic)
        .map_err(|_| BackendError::ModelFormat("file too short".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(BackendError::ModelFormat(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut values = [0.0f64; FEATURE_COUNT + 1];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        file.read_exact(&mut buf)
            .map_err(|_| BackendError::ModelFormat("truncated weights".into()))?;
        *v = f64::from_le_bytes(buf);
    }
    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(BackendError::ModelFormat("trailing bytes".into()));
    }
    let mut weights = [0.0f64; FEATURE_COUNT];
    weights.copy_from_slice(&values[..FEATURE_COUNT]);
    Ok(LinearClassifier { weights, bias: values[FEATURE_COUNT] })
}

/// Deterministic toy training set: bright soft blobs (positive) against flat
/// or gently shaded patches (negative). Linearly separable in the crop
/// features. Shared by tests and the acceptance suite.
pub fn toy_training_set(count: usize) -> Vec<(Frame, bool)> {
    assert!(count % 2 == 0);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count / 2 {
        // Positive: Gaussian-ish bright blob, varying position and width.
        let cx = 10.0 + (i % 5) as f64 * 3.0;
        let cy = 10.0 + (i % 7) as f64 * 2.0;
        let sigma = 2.5 + (i % 3) as f64;
        let base = 40 + (i % 4) as u8 * 10;
        let mut px = vec![0u8; 32 * 32];
        for y in 0..32usize {
            for x in 0..32usize {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = base as f64 + 180.0 * (-d2 / (2.0 * sigma * sigma)).exp();
                px[y * 32 + x] = v.min(255.0) as u8;
            }
        }
        samples.push((Frame::new(32, 32, 0, px), true));

        // Negative: flat or slowly shaded patch.
        let slope = (i % 3) as f64 * 0.5;
        let base = 60 + (i % 6) as u8 * 15;
        let mut px = vec![0u8; 32 * 32];
        for y in 0..32usize {
            for x in 0..32usize {
                px[y * 32 + x] = (base as f64 + slope * x as f64).min(255.0) as u8;
            }
        }
        samples.push((Frame::new(32, 32, 0, px), false));
    }
    samples
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_separation() {
        let pos = toy_training_set(2).remove(0);
        let neg = (Frame::filled(32, 32, 0, 80), false);
        let samples = vec![pos.clone(), neg.clone(), pos.clone(), neg.clone()];
        let mut model = train_linear_classifier(&samples, &TrainParams::default()).unwrap();
        assert!(model.classify(&samples[0].0).unwrap().value() > 0.5);
        assert!(model.classify(&neg.0).unwrap().value() < 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let only_pos: Vec<(Frame, bool)> =
            toy_training_set(4).into_iter().filter(|(_, l)| *l).collect();
        assert!(matches!(
            train_linear_classifier(&only_pos, &TrainParams::default()),
            Err(BackendError::SingleClass)
        ));
    }

    #[test]
    fn flipped_labels_flip_score_ordering() {
        let samples = toy_training_set(40);
        let flipped: Vec<(Frame, bool)> =
            samples.iter().map(|(f, l)| (f.clone(), !l)).collect();
        let mut m1 = train_linear_classifier(&samples, &TrainParams::default()).unwrap();
        let mut m2 = train_linear_classifier(&flipped, &TrainParams::default()).unwrap();
        let a1 = m1.classify(&samples[0].0).unwrap().value();
        let b1 = m1.classify(&samples[1].0).unwrap().value();
        let a2 = m2.classify(&samples[0].0).unwrap().value();
        let b2 = m2.classify(&samples[1].0).unwrap().value();
        assert!(a1 > b1);
        assert!(a2 < b2);
    }

    #[test]
    fn separable_set_trains_to_low_loss() {
        let samples = toy_training_set(200);
        let mut model = train_linear_classifier(&samples, &TrainParams::default()).unwrap();
        let mut loss = 0.0;
        let mut correct = 0;
        for (crop, label) in &samples {
            let p = model.classify(crop).unwrap().value().clamp(1e-12, 1.0 - 1e-12);
            loss -= if *label { p.ln() } else { (1.0 - p).ln() };
            if (p > 0.5) == *label {
                correct += 1;
            }
        }
        loss /= samples.len() as f64;
        assert_eq!(correct, samples.len(), "training accuracy must be 100%");
        assert!(loss < 0.1, "final log-loss {loss}");
    }

    #[test]
    fn constant_gray_scores_below_half() {
        let samples = toy_training_set(200);
        let mut model = train_linear_classifier(&samples, &TrainParams::default()).unwrap();
        let gray = Frame::filled(32, 32, 0, 128);
        assert!(model.classify(&gray).unwrap().value() < 0.5);
    }

    #[test]
    fn model_file_round_trip() {
        let samples = toy_training_set(20);
        let model = train_linear_classifier(&samples, &TrainParams::default()).unwrap();
        let dir = std::env::temp_dir().join("mgd_model_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.mgdl");
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 5 + 21 * 8);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = std::env::temp_dir().join("mgd_model_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.mgdl");
        std::fs::write(&path, b"NOPE!aaaaaaaa").unwrap();
        assert!(matches!(load_model(&path), Err(BackendError::ModelFormat(_))));
    }
}
