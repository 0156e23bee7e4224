//! Core data model for person point clouds and sequences.
//!
//! Coordinates are metric with `y` vertical (up-positive). Every type here is
//! immutable once validated and can be shared freely across threads.

mod manifest;
mod normalize;
pub mod ply;

pub use manifest::{
    load_manifest, load_sequence, resolve, save_sequence, DatasetManifest, ManifestEntry, ManifestError,
};
pub use normalize::{normalize_frame, percentile, NormalizedFrame};
pub use ply::{parse_ply, write_ply, PlyError, PlyForm};

use thiserror::Error;

/// Linear RGB triple with channels in `[0, 1]`.
pub type Rgb = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("frame has no points")]
    Empty,
    #[error("{what} has {got} entries but the frame has {points} points")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        points: usize,
    },
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("color channel outside [0, 1] at point {0}")]
    ColorRange(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("sequence has no frames")]
    Empty,
    #[error("timestamps not strictly increasing at frame {0}")]
    NonMonotonicTime(usize),
    #[error("identity_id is empty")]
    MissingIdentity,
    #[error("surgery_id is empty")]
    MissingSurgery,
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: FrameError },
}

/// One timestamped point cloud of a single person.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonFrame {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<Rgb>>,
    pub part_labels: Option<Vec<i32>>,
    pub timestamp_s: f64,
}

impl PersonFrame {
    pub fn new(
        points: Vec<[f64; 3]>,
        colors: Option<Vec<Rgb>>,
        part_labels: Option<Vec<i32>>,
        timestamp_s: f64,
    ) -> Result<Self, FrameError> {
        let frame = Self {
            points,
            colors,
            part_labels,
            timestamp_s,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        let n = self.points.len();
        if n == 0 {
            return Err(FrameError::Empty);
        }
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(FrameError::LengthMismatch {
                    what: "colors",
                    got: c.len(),
                    points: n,
                });
            }
            if let Some(i) = c
                .iter()
                .position(|rgb| rgb.iter().any(|v| !(0.0..=1.0).contains(v)))
            {
                return Err(FrameError::ColorRange(i));
            }
        }
        if let Some(p) = &self.part_labels {
            if p.len() != n {
                return Err(FrameError::LengthMismatch {
                    what: "part_labels",
                    got: p.len(),
                    points: n,
                });
            }
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(FrameError::NonFinite(i));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Ordered frames of one person recorded in one session.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonSequence {
    pub frames: Vec<PersonFrame>,
    pub identity_id: String,
    pub surgery_id: String,
    pub sequence_id: String,
    pub fps: f64,
}

impl PersonSequence {
    pub fn validate(&self) -> Result<(), SequenceError> {
        if self.frames.is_empty() {
            return Err(SequenceError::Empty);
        }
        if self.identity_id.is_empty() {
            return Err(SequenceError::MissingIdentity);
        }
        if self.surgery_id.is_empty() {
            return Err(SequenceError::MissingSurgery);
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(SequenceError::BadFps(self.fps));
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].timestamp_s <= w[0].timestamp_s {
                return Err(SequenceError::NonMonotonicTime(i + 1));
            }
        }
        Ok(())
    }
}
