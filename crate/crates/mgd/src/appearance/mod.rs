//! Local fine detection: a binary classifier over 32×32 crops and a refining
//! detector over larger crops. Both are pluggable — built-in baselines live
//! here, neural backends attach through the external wire protocol.

mod centroid;
mod external;
mod features;
mod linear;

pub use centroid::CentroidDetector;
pub use external::{serve_protocol, ExternalBackend, ProtocolKind, ServeBackend};
pub use features::{extract_features, FEATURE_COUNT};
pub use linear::{
    load_model, save_model, toy_training_set, train_linear_classifier, LinearClassifier,
    TrainParams,
};

use crate::imgproc::{BoundingBox, Frame};
use thiserror::Error;

/// Side of the classifier input crop.
pub const CLASSIFIER_CROP: u32 = 32;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("classifier crop must be {CLASSIFIER_CROP}x{CLASSIFIER_CROP}, got {0}x{1}")]
    WrongCropSize(u32, u32),
    #[error("backend i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed backend message: {0}")]
    Protocol(String),
    #[error("backend aborted by an earlier protocol error")]
    Poisoned,
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("bad model file: {0}")]
    ModelFormat(String),
}

/// Probability of the target class, in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ClassifierScore(f64);

impl ClassifierScore {
    pub fn new(value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "score {value} outside [0, 1]");
        Self(value)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Which pipeline stage produced a detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Motion,
    Classified,
    Refined,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Motion => "motion",
            Stage::Classified => "classified",
            Stage::Refined => "refined",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "motion" => Ok(Stage::Motion),
            "classified" => Ok(Stage::Classified),
            "refined" => Ok(Stage::Refined),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A scored box. Coordinates are full-image once a detection leaves
/// [`detect_crop`]; backends themselves work in crop coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub stage: Stage,
}

/// Binary MAV-vs-clutter scorer over 32×32 crops. Handles are single-writer:
/// one request at a time per handle.
pub trait CropClassifier: Send {
    fn classify(&mut self, crop: &Frame) -> Result<ClassifierScore, BackendError>;
}

/// Refining detector over a local search crop; boxes come back in crop
/// coordinates.
pub trait CropDetector: Send {
    fn detect(&mut self, crop: &Frame) -> Result<Vec<Detection>, BackendError>;
}

/// Accept-everything classifier for ablations and pipeline tests.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassthroughClassifier;

impl CropClassifier for PassthroughClassifier {
    fn classify(&mut self, _crop: &Frame) -> Result<ClassifierScore, BackendError> {
        Ok(ClassifierScore::new(1.0))
    }
}

/// Score one candidate crop. The crop must already be resized to 32×32.
pub fn classify_crop(
    backend: &mut dyn CropClassifier,
    crop: &Frame,
) -> Result<ClassifierScore, BackendError> {
    if crop.width() != CLASSIFIER_CROP || crop.height() != CLASSIFIER_CROP {
        return Err(BackendError::WrongCropSize(crop.width(), crop.height()));
    }
    backend.classify(crop)
}

/// Run the detector on a window cropped at `offset`, gate on confidence
/// (strictly above `min_confidence`), clamp boxes into the window and
/// translate them into full-image coordinates.
pub fn detect_crop(
    backend: &mut dyn CropDetector,
    crop: &Frame,
    offset: (u32, u32),
    min_confidence: f64,
) -> Result<Vec<Detection>, BackendError> {
    let window = BoundingBox::new(0.0, 0.0, crop.width() as f64, crop.height() as f64);
    let dets = backend.detect(crop)?;
    Ok(dets
        .into_iter()
        .filter(|d| d.confidence > min_confidence)
        .filter_map(|d| {
            let clamped = d.bbox.intersection(&window)?;
            Some(Detection {
                bbox: BoundingBox::new(
                    clamped.x + offset.0 as f64,
                    clamped.y + offset.1 as f64,
                    clamped.w,
                    clamped.h,
                ),
                ..d
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passthrough_scores_one() {
        let crop = Frame::filled(32, 32, 0, 128);
        let score = classify_crop(&mut PassthroughClassifier, &crop).unwrap();
        assert_eq!(score.value(), 1.0);
    }

    #[test]
    fn classify_rejects_wrong_crop_size() {
        let crop = Frame::filled(31, 32, 0, 0);
        assert!(matches!(
            classify_crop(&mut PassthroughClassifier, &crop),
            Err(BackendError::WrongCropSize(31, 32))
        ));
    }

    struct FixedDetector(Vec<Detection>);
    impl CropDetector for FixedDetector {
        fn detect(&mut self, _crop: &Frame) -> Result<Vec<Detection>, BackendError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn detect_crop_translates_by_offset() {
        let det = Detection {
            bbox: BoundingBox::new(10.0, 10.0, 8.0, 8.0),
            confidence: 0.9,
            stage: Stage::Refined,
        };
        let crop = Frame::filled(320, 320, 0, 0);
        let out =
            detect_crop(&mut FixedDetector(vec![det]), &crop, (1600, 400), 0.5).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoundingBox::new(1610.0, 410.0, 8.0, 8.0));
    }

    #[test]
    fn detect_crop_gate_is_strict_and_clamps() {
        let inside = Detection {
            bbox: BoundingBox::new(0.0, 0.0, 5.0, 5.0),
            confidence: 0.5, // not strictly above the gate
            stage: Stage::Refined,
        };
        let hanging = Detection {
            bbox: BoundingBox::new(315.0, 315.0, 20.0, 20.0),
            confidence: 0.8,
            stage: Stage::Refined,
        };
        let outside = Detection {
            bbox: BoundingBox::new(400.0, 0.0, 5.0, 5.0),
            confidence: 0.9,
            stage: Stage::Refined,
        };
        let crop = Frame::filled(320, 320, 0, 0);
        let out = detect_crop(
            &mut FixedDetector(vec![inside, hanging, outside]),
            &crop,
            (10, 20),
            0.5,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoundingBox::new(325.0, 335.0, 5.0, 5.0));
    }
}
