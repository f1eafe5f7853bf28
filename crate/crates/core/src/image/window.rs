use super::{GrayImage, Plane};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Boundary rule for windowed operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    Replicate,
}

/// Square sliding window of side `2 * radius + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub radius: usize,
    pub padding: Padding,
}

impl WindowSpec {
    pub fn new(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidParameter("window radius must be >= 1".into()));
        }
        Ok(Self {
            radius,
            padding: Padding::Replicate,
        })
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

/// Separable box mean with replicate padding. Every output sample is
/// accumulated in the same order, so results are translation-equivariant
/// bit-for-bit away from the borders.
pub fn box_mean(img: &Plane, radius: usize) -> Plane {
    let (w, h) = (img.width(), img.height());
    if radius == 0 {
        return img.clone();
    }
    let n = (2 * radius + 1) as f64;
    let r = radius as isize;

    let mut horiz = vec![0.0; w * h];
    horiz
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, out)| {
            let row = &img.data()[y * w..(y + 1) * w];
            let padded: Vec<f64> = (-r..w as isize + r)
                .map(|x| row[x.clamp(0, w as isize - 1) as usize])
                .collect();
            for (x, o) in out.iter_mut().enumerate() {
                let s: f64 = padded[x..x + 2 * radius + 1].iter().sum();
                *o = s / n;
            }
        });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for dy in -r..=r {
            let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
            let src = &horiz[yy * w..(yy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        for d in dst.iter_mut() {
            *d /= n;
        }
    });
    Plane::new(w, h, out).expect("dimensions preserved")
}

/// Local arithmetic mean over the replicate-padded window.
pub fn local_mean(img: &GrayImage, w: WindowSpec) -> GrayImage {
    GrayImage::from_plane_clamped(box_mean(img, w.radius))
}

/// Per-pixel population variance over the window; never negative.
pub fn local_variance(img: &Plane, w: WindowSpec) -> Plane {
    let mean = box_mean(img, w.radius);
    let sq = box_mean(&img.map(|v| v * v), w.radius);
    sq.zip_map(&mean, |s, m| (s - m * m).max(0.0))
}

/// Per-pixel population standard deviation over the window.
pub fn local_std(img: &Plane, w: WindowSpec) -> Plane {
    local_variance(img, w).map(f64::sqrt)
}
