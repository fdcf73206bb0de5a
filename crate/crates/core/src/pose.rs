//! Pose and corpus data types plus coordinate normalization.
//!
//! A pose frame is a flat `[J*K]` coordinate vector (joint-major), a
//! sequence is `T >= 1` frames of equal width. Networks consume
//! sequences as `[T x J*K]` matrices via [`PoseSequence::to_matrix`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Skeleton layout: `J` named joints with `K` dims each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonSpec {
    pub j_joints: usize,
    pub k_dims: usize,
    pub joint_names: Vec<String>,
}

impl SkeletonSpec {
    pub fn new(j_joints: usize, k_dims: usize, joint_names: Vec<String>) -> Result<Self> {
        if j_joints == 0 || k_dims == 0 {
            return Err(CoreError::config("skeleton needs J >= 1 and K >= 1"));
        }
        if joint_names.len() != j_joints {
            return Err(CoreError::config("joint name count differs from J"));
        }
        for a in 0..joint_names.len() {
            for b in (a + 1)..joint_names.len() {
                if joint_names[a] == joint_names[b] {
                    return Err(CoreError::config(alloc::format!(
                        "duplicate joint name {}",
                        joint_names[a]
                    )));
                }
            }
        }
        Ok(SkeletonSpec {
            j_joints,
            k_dims,
            joint_names,
        })
    }

    /// Skeleton with generated joint names, for synthetic data.
    pub fn generic(j_joints: usize, k_dims: usize) -> Result<Self> {
        let names = (0..j_joints)
            .map(|j| alloc::format!("joint{j}"))
            .collect();
        SkeletonSpec::new(j_joints, k_dims, names)
    }

    /// Flat coordinate count `J*K`.
    pub fn width(&self) -> usize {
        self.j_joints * self.k_dims
    }
}

/// One pose: flat joint-major coordinates, `coords[j*K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub coords: Vec<f64>,
}

impl PoseFrame {
    pub fn new(coords: Vec<f64>) -> Self {
        PoseFrame { coords }
    }

    pub fn width(&self) -> usize {
        self.coords.len()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }

    pub fn in_unit_range(&self) -> bool {
        self.coords.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

/// `T >= 1` frames of equal width.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    frames: Vec<PoseFrame>,
}

impl PoseSequence {
    pub fn new(frames: Vec<PoseFrame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(CoreError::format("pose sequence must have T >= 1"));
        };
        let width = first.width();
        if frames.iter().any(|f| f.width() != width) {
            return Err(CoreError::format("pose sequence frames differ in width"));
        }
        Ok(PoseSequence { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn frames(&self) -> &[PoseFrame] {
        &self.frames
    }

    /// `[T x J*K]` matrix view for the networks.
    pub fn to_matrix(&self) -> Tensor {
        Tensor::from_fn(self.len(), self.width(), |t, c| self.frames[t].coords[c])
    }

    pub fn from_matrix(m: &Tensor) -> Result<Self> {
        let frames = (0..m.rows())
            .map(|r| PoseFrame::new(m.row(r).to_vec()))
            .collect();
        PoseSequence::new(frames)
    }
}

/// Per-coordinate min/max over a training split. Coordinates whose
/// observed range collapses (max == min) normalize to the constant 0.5
/// and denormalize back to that constant.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl NormalizationParams {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(CoreError::format("normalization min/max lengths differ"));
        }
        for (lo, hi) in min.iter().zip(&max) {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(CoreError::Data(String::from(
                    "normalization bounds must be finite",
                )));
            }
            if hi < lo {
                return Err(CoreError::format("normalization max below min"));
            }
        }
        Ok(NormalizationParams { min, max })
    }

    /// Fits per-coordinate bounds over every frame of the given
    /// sequences (the training split, by convention).
    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a PoseSequence>) -> Result<Self> {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        let mut seen = false;
        for seq in seqs {
            if !seen {
                min = alloc::vec![f64::INFINITY; seq.width()];
                max = alloc::vec![f64::NEG_INFINITY; seq.width()];
                seen = true;
            }
            if seq.width() != min.len() {
                return Err(CoreError::format("sequence width differs across corpus"));
            }
            for frame in seq.frames() {
                if !frame.is_finite() {
                    return Err(CoreError::Data(String::from(
                        "non-finite coordinate in corpus",
                    )));
                }
                for (c, &v) in frame.coords.iter().enumerate() {
                    min[c] = min[c].min(v);
                    max[c] = max[c].max(v);
                }
            }
        }
        if !seen {
            return Err(CoreError::InsufficientData(String::from(
                "cannot fit normalization on an empty corpus",
            )));
        }
        NormalizationParams::new(min, max)
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    /// `(v - min)/(max - min)`, clamped to `[0,1]`.
    pub fn normalize(&self, frame: &PoseFrame) -> Result<PoseFrame> {
        if frame.width() != self.width() {
            return Err(CoreError::format("frame width differs from normalization"));
        }
        if !frame.is_finite() {
            return Err(CoreError::Data(String::from("non-finite coordinate")));
        }
        let coords = frame
            .coords
            .iter()
            .enumerate()
            .map(|(c, &v)| {
                let range = self.max[c] - self.min[c];
                if range == 0.0 {
                    0.5
                } else {
                    ((v - self.min[c]) / range).clamp(0.0, 1.0)
                }
            })
            .collect();
        Ok(PoseFrame::new(coords))
    }

    /// `min + v*(max - min)`.
    pub fn denormalize(&self, frame: &PoseFrame) -> Result<PoseFrame> {
        if frame.width() != self.width() {
            return Err(CoreError::format("frame width differs from normalization"));
        }
        let coords = frame
            .coords
            .iter()
            .enumerate()
            .map(|(c, &v)| self.min[c] + v * (self.max[c] - self.min[c]))
            .collect();
        Ok(PoseFrame::new(coords))
    }

    pub fn normalize_sequence(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        let frames: Result<Vec<_>> = seq.frames().iter().map(|f| self.normalize(f)).collect();
        PoseSequence::new(frames?)
    }

    pub fn denormalize_sequence(&self, seq: &PoseSequence) -> Result<PoseSequence> {
        let frames: Result<Vec<_>> = seq.frames().iter().map(|f| self.denormalize(f)).collect();
        PoseSequence::new(frames?)
    }
}

/// One corpus entry: text tokens and the matching pose sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub poses: PoseSequence,
}
