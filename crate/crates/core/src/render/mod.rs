//! Orthographic projection of person clouds into co-registered depth, color
//! and part-label images.
//!
//! The imaging volume is fixed and metric: rows cover heights `(0, 2.0]` m
//! (row 0 at the top), columns cover `x` in `[-1.0, 1.0)` m, and depth is the
//! `z` coordinate restricted to `[-1.0, 1.0]` m. Each pixel keeps the point
//! with the smallest `z`; ties go to the lowest point index. All three
//! images are filled from that same point.

pub mod pnm;

use thiserror::Error;

use crate::geom::{normalize_frame, PersonFrame, PersonSequence, Rgb};

pub const VOLUME_TOP_M: f64 = 2.0;
pub const VOLUME_HALF_WIDTH_M: f64 = 1.0;
pub const NEAR_DEPTH_M: f64 = -1.0;
pub const FAR_DEPTH_M: f64 = 1.0;
pub const DEFAULT_RESOLUTION: (usize, usize) = (64, 64);
pub const NO_COLOR: Rgb = [0.5, 0.5, 0.5];
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("no point falls inside the imaging volume")]
    EmptyProjection,
    #[error("frame {frame}: no point falls inside the imaging volume")]
    EmptyFrame { frame: usize },
    #[error("resolution {0}x{1} is below the {MIN_SIDE}x{MIN_SIDE} minimum")]
    Resolution(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedImages {
    pub height: usize,
    pub width: usize,
    /// Depth in meters, row-major; meaningful only where `mask` is set.
    pub depth: Vec<f64>,
    pub color: Vec<Rgb>,
    /// Part label per pixel, `-1` where empty or unlabeled.
    pub parts: Vec<i32>,
    pub mask: Vec<bool>,
    /// Whether the source frame carried per-point colors.
    pub has_color: bool,
    /// Index of the point that won each pixel.
    pub source: Vec<Option<u32>>,
    pub near_depth_m: f64,
    pub far_depth_m: f64,
}

impl ProjectedImages {
    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_size_m(&self) -> (f64, f64) {
        (
            VOLUME_TOP_M / self.height as f64,
            2.0 * VOLUME_HALF_WIDTH_M / self.width as f64,
        )
    }

    /// Height above the floor of the center of row `r`.
    pub fn row_height_m(&self, r: usize) -> f64 {
        VOLUME_TOP_M - (r as f64 + 0.5) * self.pixel_size_m().0
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// First and last rows containing a valid pixel.
    pub fn row_span(&self) -> Option<(usize, usize)> {
        let mut rows = (0..self.height).filter(|&r| self.row_has_pixels(r));
        let first = rows.next()?;
        let last = rows.next_back().unwrap_or(first);
        Some((first, last))
    }

    pub fn row_has_pixels(&self, r: usize) -> bool {
        self.mask[r * self.width..(r + 1) * self.width]
            .iter()
            .any(|&m| m)
    }

    /// Leftmost and rightmost valid columns of row `r`.
    pub fn row_extent(&self, r: usize) -> Option<(usize, usize)> {
        let row = &self.mask[r * self.width..(r + 1) * self.width];
        let first = row.iter().position(|&m| m)?;
        let last = row.iter().rposition(|&m| m)?;
        Some((first, last))
    }

    /// Silhouette height in pixels (inclusive row span).
    pub fn silhouette_rows(&self) -> usize {
        self.row_span().map_or(0, |(a, b)| b - a + 1)
    }
}

fn check_resolution((h, w): (usize, usize)) -> Result<(), RenderError> {
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(RenderError::Resolution(h, w));
    }
    Ok(())
}

/// Project an already normalized frame.
pub fn project_person(
    frame: &PersonFrame,
    resolution: (usize, usize),
) -> Result<ProjectedImages, RenderError> {
    check_resolution(resolution)?;
    let (h, w) = resolution;
    let mut depth = vec![0.0; h * w];
    let mut source: Vec<Option<u32>> = vec![None; h * w];

    for (i, p) in frame.points.iter().enumerate() {
        let [x, y, z] = *p;
        let rf = (VOLUME_TOP_M - y) / VOLUME_TOP_M * h as f64;
        let cf = (x + VOLUME_HALF_WIDTH_M) / (2.0 * VOLUME_HALF_WIDTH_M) * w as f64;
        if !(rf >= 0.0 && rf < h as f64 && cf >= 0.0 && cf < w as f64) {
            continue;
        }
        if !(NEAR_DEPTH_M..=FAR_DEPTH_M).contains(&z) {
            continue;
        }
        let idx = rf as usize * w + cf as usize;
        if source[idx].is_none() || z < depth[idx] {
            depth[idx] = z;
            source[idx] = Some(i as u32);
        }
    }

    if source.iter().all(Option::is_none) {
        return Err(RenderError::EmptyProjection);
    }

    let mask: Vec<bool> = source.iter().map(Option::is_some).collect();
    let color = source
        .iter()
        .map(|s| match (s, &frame.colors) {
            (Some(i), Some(c)) => c[*i as usize],
            (Some(_), None) => NO_COLOR,
            (None, _) => [0.0; 3],
        })
        .collect();
    let parts = source
        .iter()
        .map(|s| match (s, &frame.part_labels) {
            (Some(i), Some(l)) => l[*i as usize],
            _ => -1,
        })
        .collect();
    Ok(ProjectedImages {
        height: h,
        width: w,
        depth,
        color,
        parts,
        mask,
        has_color: frame.colors.is_some(),
        source,
        near_depth_m: NEAR_DEPTH_M,
        far_depth_m: FAR_DEPTH_M,
    })
}

/// Normalize and project every frame, preserving frame order.
pub fn render_sequence(
    seq: &PersonSequence,
    resolution: (usize, usize),
) -> Result<Vec<ProjectedImages>, RenderError> {
    check_resolution(resolution)?;
    seq.frames
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let n = normalize_frame(f);
            project_person(&n.frame, resolution).map_err(|e| match e {
                RenderError::EmptyProjection => RenderError::EmptyFrame { frame: k },
                other => other,
            })
        })
        .collect()
}
