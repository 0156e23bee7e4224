//! Geometric person re-identification toolkit.
//!
//! Pipeline: point-cloud frames ([`geom`]) are normalized and projected into
//! metric depth/color/part images ([`render`]), summarized into geometric or
//! appearance descriptors and embedded by a small triplet-trained network
//! ([`embed`]), then scored with probe-gallery metrics and paired statistics
//! ([`evalkit`]). [`saliency`] attributes identity decisions back to pixels
//! and body parts, and [`synthor`] generates walking personnel whose
//! appearance can be made to leak identity or not.

pub mod embed;
pub mod evalkit;
pub mod geom;
pub mod render;
pub mod rng;
pub mod saliency;
pub mod synthor;
