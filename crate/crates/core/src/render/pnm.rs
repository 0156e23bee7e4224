//! Binary PGM/PPM dumps of projected images.

use super::ProjectedImages;
use crate::geom::Rgb;

/// 16-bit PGM of depth in millimeters measured from the near plane.
/// Empty pixels are 0; valid pixels are clamped to at least 1.
pub fn depth_pgm(img: &ProjectedImages) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    for (d, &m) in img.depth.iter().zip(&img.mask) {
        let v: u16 = if m {
            ((d - img.near_depth_m) * 1000.0).round().clamp(1.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

fn byte(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn rgb_ppm(width: usize, height: usize, pixels: &[Rgb]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in pixels {
        out.extend(px.iter().map(|&c| byte(c)));
    }
    out
}

/// 8-bit PPM of the color image; empty pixels are black.
pub fn color_ppm(img: &ProjectedImages) -> Vec<u8> {
    let px: Vec<Rgb> = img
        .color
        .iter()
        .zip(&img.mask)
        .map(|(c, &m)| if m { *c } else { [0.0; 3] })
        .collect();
    rgb_ppm(img.width, img.height, &px)
}

/// 8-bit PGM of part codes shifted by one (0 = empty).
pub fn parts_pgm(img: &ProjectedImages) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.parts.iter().map(|&p| (p + 1).clamp(0, 255) as u8));
    out
}
