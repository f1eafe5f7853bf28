use super::{GrayImage, Plane};
use crate::error::{Error, Result};

/// Smallest width/height accepted by [`gradient`] and [`mig`].
pub const MIN_GRADIENT_SIZE: usize = 3;

/// Horizontal and vertical derivatives plus their Euclidean magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: Plane,
    pub gy: Plane,
    pub magnitude: Plane,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.magnitude.width()
    }

    pub fn height(&self) -> usize {
        self.magnitude.height()
    }
}

/// 3x3 Sobel derivatives with replicate padding, scaled by 1/4 so that a
/// unit step produces magnitude 1 on the pixels adjacent to the edge.
pub fn gradient(img: &Plane) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    if w < MIN_GRADIENT_SIZE || h < MIN_GRADIENT_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_GRADIENT_SIZE,
        });
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let p = |xx: usize, yy: usize| img.data()[yy * w + xx];
            let dx = (p(xp, ym) - p(xm, ym))
                + 2.0 * (p(xp, y) - p(xm, y))
                + (p(xp, yp) - p(xm, yp));
            let dy = (p(xm, yp) - p(xm, ym))
                + 2.0 * (p(x, yp) - p(x, ym))
                + (p(xp, yp) - p(xp, ym));
            let i = y * w + x;
            gx[i] = dx * 0.25;
            gy[i] = dy * 0.25;
            mag[i] = gx[i].hypot(gy[i]);
        }
    }
    Ok(GradientField {
        gx: Plane::new(w, h, gx)?,
        gy: Plane::new(w, h, gy)?,
        magnitude: Plane::new(w, h, mag)?,
    })
}

/// Mean intensity gradient on the 8-bit scale (intensities x 255).
pub fn mig(img: &GrayImage) -> Result<f64> {
    let g = gradient(img)?;
    Ok(g.magnitude.mean() * 255.0)
}
