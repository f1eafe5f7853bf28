//! Subset-based 2D digital image correlation.
//!
//! Each grid node is matched by an exhaustive integer ZNCC search followed by
//! iterated quadratic-surface refinement on bilinearly resampled subsets.
//! Only rigid translation of subsets is modelled.

use crate::error::{Error, Result};
use crate::image::{GrayImage, Plane};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Displacement gradients are reported in microstrain.
pub const MICROSTRAIN: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DicConfig {
    pub subset_size: usize,
    pub grid_step: usize,
    pub zncc_threshold: f64,
    /// Cap on subpixel refinement iterations.
    pub max_iterations: usize,
    pub search_radius: usize,
    /// Node radius of the strain plane fit.
    pub strain_window: usize,
}

impl Default for DicConfig {
    fn default() -> Self {
        Self {
            subset_size: 21,
            grid_step: 5,
            zncc_threshold: 0.8,
            max_iterations: 10,
            search_radius: 15,
            strain_window: 2,
        }
    }
}

impl DicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subset_size < 5 || self.subset_size % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "subset_size must be odd and >= 5, got {}",
                self.subset_size
            )));
        }
        if self.grid_step == 0 {
            return Err(Error::InvalidParameter("grid_step must be >= 1".into()));
        }
        if !(self.zncc_threshold > 0.0 && self.zncc_threshold <= 1.0) {
            return Err(Error::InvalidParameter("zncc_threshold must lie in (0, 1]".into()));
        }
        if self.search_radius == 0 {
            return Err(Error::InvalidParameter("search_radius must be >= 1".into()));
        }
        Ok(())
    }

    fn half(&self) -> usize {
        self.subset_size / 2
    }
}

/// Zero-normalized cross-correlation; `None` when either subset is flat.
pub fn zncc(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "subset sizes differ");
    if a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= flat_floor(n) || sbb <= flat_floor(n) {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Subsets whose summed squared deviation is below this are treated as flat.
#[inline]
fn flat_floor(n: f64) -> f64 {
    1e-12 * n
}

/// Displacements and scores on the node grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementField {
    pub cols: usize,
    pub rows: usize,
    pub step: usize,
    /// Pixel coordinates of the grid columns and rows.
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// ZNCC at the final position; -1 when no candidate could be scored.
    pub score: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DisplacementField {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn node(&self, i: usize) -> (usize, usize) {
        (self.xs[i % self.cols], self.ys[i / self.cols])
    }

    /// Re-derives validity for another threshold.
    pub fn with_threshold(&self, threshold: f64) -> Self {
        let mut f = self.clone();
        f.valid = f.score.iter().map(|&s| s >= threshold).collect();
        f
    }
}

/// Summed-area tables of values and squared values.
struct Integral {
    w1: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(img: &Plane) -> Self {
        let (w, h) = (img.width(), img.height());
        let w1 = w + 1;
        let mut sum = vec![0.0; w1 * (h + 1)];
        let mut sq = vec![0.0; w1 * (h + 1)];
        for y in 0..h {
            let (mut rs, mut rq) = (0.0, 0.0);
            for x in 0..w {
                let v = img.get(x, y);
                rs += v;
                rq += v * v;
                sum[(y + 1) * w1 + x + 1] = sum[y * w1 + x + 1] + rs;
                sq[(y + 1) * w1 + x + 1] = sq[y * w1 + x + 1] + rq;
            }
        }
        Self { w1, sum, sq }
    }

    /// Sums over the inclusive box `[x0, x1] x [y0, y1]`.
    fn box_sums(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let w1 = self.w1;
        let at = |t: &[f64], x: usize, y: usize| t[y * w1 + x];
        let s = at(&self.sum, x1 + 1, y1 + 1) - at(&self.sum, x0, y1 + 1) - at(&self.sum, x1 + 1, y0)
            + at(&self.sum, x0, y0);
        let q = at(&self.sq, x1 + 1, y1 + 1) - at(&self.sq, x0, y1 + 1) - at(&self.sq, x1 + 1, y0)
            + at(&self.sq, x0, y0);
        (s, q)
    }
}

struct NodeMatch {
    u: f64,
    v: f64,
    score: f64,
}

struct Matcher<'a> {
    reference: &'a Plane,
    deformed: &'a Plane,
    integral: Integral,
    cfg: &'a DicConfig,
}

impl Matcher<'_> {
    fn ref_subset(&self, cx: usize, cy: usize) -> Vec<f64> {
        let h = self.cfg.half();
        let mut out = Vec::with_capacity(self.cfg.subset_size * self.cfg.subset_size);
        for y in cy - h..=cy + h {
            let row = &self.reference.data()[y * self.reference.width()..];
            out.extend_from_slice(&row[cx - h..=cx + h]);
        }
        out
    }

    fn def_subset_at(&self, x: f64, y: f64) -> Vec<f64> {
        let h = self.cfg.half() as isize;
        let mut out = Vec::with_capacity(self.cfg.subset_size * self.cfg.subset_size);
        for j in -h..=h {
            for i in -h..=h {
                out.push(self.deformed.sample_bilinear(x + i as f64, y + j as f64));
            }
        }
        out
    }

    fn score_at(&self, a: &[f64], x: f64, y: f64) -> Option<f64> {
        zncc(a, &self.def_subset_at(x, y))
    }

    fn match_node(&self, cx: usize, cy: usize) -> NodeMatch {
        let failed = NodeMatch {
            u: 0.0,
            v: 0.0,
            score: -1.0,
        };
        let a = self.ref_subset(cx, cy);
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let ac: Vec<f64> = a.iter().map(|v| v - ma).collect();
        let saa: f64 = ac.iter().map(|v| v * v).sum();
        if saa <= flat_floor(n) {
            return failed;
        }
        let half = self.cfg.half() as isize;
        let r = self.cfg.search_radius as isize;
        let (w, h) = (self.deformed.width() as isize, self.deformed.height() as isize);
        let side = self.cfg.subset_size;
        let data = self.deformed.data();
        let mut best: Option<(isize, isize, f64)> = None;
        for dy in -r..=r {
            let y = cy as isize + dy;
            if y - half < 0 || y + half >= h {
                continue;
            }
            for dx in -r..=r {
                let x = cx as isize + dx;
                if x - half < 0 || x + half >= w {
                    continue;
                }
                let (x0, y0) = ((x - half) as usize, (y - half) as usize);
                let (s, q) = self.integral.box_sums(x0, y0, x0 + side - 1, y0 + side - 1);
                let sbb = q - s * s / n;
                if sbb <= flat_floor(n) {
                    continue;
                }
                let mut sab = 0.0;
                for j in 0..side {
                    let row = &data[(y0 + j) * w as usize + x0..][..side];
                    let arow = &ac[j * side..][..side];
                    sab += arow.iter().zip(row).map(|(p, q)| p * q).sum::<f64>();
                }
                let score = sab / (saa * sbb).sqrt();
                if best.is_none_or(|(_, _, b)| score > b) {
                    best = Some((dx, dy, score));
                }
            }
        }
        let Some((ix, iy, _)) = best else {
            return failed;
        };
        let (mut px, mut py) = (cx as f64 + ix as f64, cy as f64 + iy as f64);
        let Some(mut best_score) = self.score_at(&a, px, py) else {
            return failed;
        };
        let mut step = 1.0;
        for _ in 0..self.cfg.max_iterations {
            let mut grid = [0.0; 9];
            let mut ok = true;
            for (k, g) in grid.iter_mut().enumerate() {
                let (i, j) = ((k % 3) as f64 - 1.0, (k / 3) as f64 - 1.0);
                if i == 0.0 && j == 0.0 {
                    *g = best_score;
                    continue;
                }
                match self.score_at(&a, px + i * step, py + j * step) {
                    Some(s) => *g = s,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let Some((ox, oy)) = quadratic_peak(&grid) else {
                break;
            };
            let (nx, ny) = (px + ox * step, py + oy * step);
            if let Some(s) = self.score_at(&a, nx, ny) {
                if s > best_score {
                    best_score = s;
                    px = nx;
                    py = ny;
                }
            }
            step *= 0.5;
            if (ox * step).abs() < 1e-4 && (oy * step).abs() < 1e-4 {
                break;
            }
        }
        NodeMatch {
            u: px - cx as f64,
            v: py - cy as f64,
            score: best_score,
        }
    }
}

/// Peak of the least-squares quadratic through a 3x3 grid sampled at offsets
/// -1, 0, 1; `None` unless the surface has a maximum. The offset is clamped
/// to the sampled cell.
fn quadratic_peak(g: &[f64; 9]) -> Option<(f64, f64)> {
    let at = |i: i32, j: i32| g[((j + 1) * 3 + i + 1) as usize];
    let mut gx = 0.0;
    let mut gy = 0.0;
    let mut gxx = 0.0;
    let mut gyy = 0.0;
    let mut gxy = 0.0;
    for j in -1..=1 {
        for i in -1..=1 {
            let v = at(i, j);
            gx += i as f64 * v;
            gy += j as f64 * v;
            gxy += (i * j) as f64 * v;
            gxx += (3 * i * i - 2) as f64 * v;
            gyy += (3 * j * j - 2) as f64 * v;
        }
    }
    // Closed-form least-squares coefficients on the 3x3 stencil.
    let a1 = gx / 6.0;
    let a2 = gy / 6.0;
    let a3 = gxx / 6.0;
    let a5 = gyy / 6.0;
    let a4 = gxy / 4.0;
    let det = 4.0 * a3 * a5 - a4 * a4;
    if !(a3 < 0.0 && det > 0.0) {
        return None;
    }
    let ox = (-2.0 * a5 * a1 + a4 * a2) / det;
    let oy = (-2.0 * a3 * a2 + a4 * a1) / det;
    if !(ox.is_finite() && oy.is_finite()) {
        return None;
    }
    Some((ox.clamp(-1.0, 1.0), oy.clamp(-1.0, 1.0)))
}

/// Grid node coordinates along one axis for the given subset half-width.
fn axis_nodes(len: usize, half: usize, step: usize) -> Vec<usize> {
    if len < 2 * half + 1 {
        return Vec::new();
    }
    (half..len - half).step_by(step).collect()
}

pub fn match_field(reference: &GrayImage, deformed: &GrayImage, cfg: &DicConfig) -> Result<DisplacementField> {
    cfg.validate()?;
    reference.same_dims(deformed)?;
    let half = cfg.half();
    let xs = axis_nodes(reference.width(), half, cfg.grid_step);
    let ys = axis_nodes(reference.height(), half, cfg.grid_step);
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::ImageTooSmall {
            width: reference.width(),
            height: reference.height(),
            min: cfg.subset_size,
        });
    }
    let matcher = Matcher {
        reference,
        deformed,
        integral: Integral::new(deformed),
        cfg,
    };
    let nodes: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let matches: Vec<NodeMatch> = nodes
        .par_iter()
        .map(|&(x, y)| matcher.match_node(x, y))
        .collect();
    let valid = matches.iter().map(|m| m.score >= cfg.zncc_threshold).collect();
    Ok(DisplacementField {
        cols: xs.len(),
        rows: ys.len(),
        step: cfg.grid_step,
        u: matches.iter().map(|m| m.u).collect(),
        v: matches.iter().map(|m| m.v).collect(),
        score: matches.iter().map(|m| m.score).collect(),
        valid,
        xs,
        ys,
    })
}

/// Percentage of grid nodes with a valid match.
pub fn edca(field: &DisplacementField) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    100.0 * field.valid.iter().filter(|&&v| v).count() as f64 / field.len() as f64
}

/// Strain components in microstrain, on the displacement grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrainField {
    pub cols: usize,
    pub rows: usize,
    pub exx: Vec<f64>,
    pub eyy: Vec<f64>,
    pub gxy: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Plane fit of `u` and `v` over a `(2 window + 1)^2` node neighbourhood.
/// Nodes whose neighbourhood is incomplete or holds an invalid match are
/// invalid.
pub fn strain(field: &DisplacementField, window: usize) -> StrainField {
    let (cols, rows) = (field.cols, field.rows);
    let n = cols * rows;
    let mut out = StrainField {
        cols,
        rows,
        exx: vec![0.0; n],
        eyy: vec![0.0; n],
        gxy: vec![0.0; n],
        valid: vec![false; n],
    };
    let wr = window as isize;
    // Symmetric full windows make the normal equations diagonal.
    let sxx: f64 = (-wr..=wr)
        .map(|i| {
            let d = (i * field.step as isize) as f64;
            d * d
        })
        .sum::<f64>()
        * (2 * window + 1) as f64;
    if sxx == 0.0 {
        return out;
    }
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            if c < window || r < window || c + window >= cols || r + window >= rows {
                continue;
            }
            let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
            let mut complete = true;
            'win: for j in -wr..=wr {
                for i in -wr..=wr {
                    let idx = (r as isize + j) as usize * cols + (c as isize + i) as usize;
                    if !field.valid[idx] {
                        complete = false;
                        break 'win;
                    }
                    let dx = (i * field.step as isize) as f64;
                    let dy = (j * field.step as isize) as f64;
                    ux += dx * field.u[idx];
                    uy += dy * field.u[idx];
                    vx += dx * field.v[idx];
                    vy += dy * field.v[idx];
                }
            }
            if !complete {
                continue;
            }
            out.exx[k] = ux / sxx * MICROSTRAIN;
            out.eyy[k] = vy / sxx * MICROSTRAIN;
            out.gxy[k] = (uy + vx) / sxx * MICROSTRAIN;
            out.valid[k] = true;
        }
    }
    out
}

/// Mean and standard deviation of each strain component over valid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrainSummary {
    pub valid_nodes: usize,
    pub mean_exx: f64,
    pub mean_eyy: f64,
    pub mean_gxy: f64,
    pub std_exx: f64,
    pub std_eyy: f64,
    pub std_gxy: f64,
    /// Mean absolute value per component.
    pub mean_abs_exx: f64,
    pub mean_abs_eyy: f64,
    pub mean_abs_gxy: f64,
}

impl StrainField {
    pub fn summary(&self) -> StrainSummary {
        let pick = |c: &[f64]| -> Vec<f64> {
            c.iter()
                .zip(&self.valid)
                .filter(|(_, &v)| v)
                .map(|(x, _)| *x)
                .collect()
        };
        let stats = |xs: &[f64]| -> (f64, f64, f64) {
            if xs.is_empty() {
                return (0.0, 0.0, 0.0);
            }
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            let ma = xs.iter().map(|x| x.abs()).sum::<f64>() / n;
            (m, var.sqrt(), ma)
        };
        let (exx, eyy, gxy) = (pick(&self.exx), pick(&self.eyy), pick(&self.gxy));
        let (a, b, c) = (stats(&exx), stats(&eyy), stats(&gxy));
        StrainSummary {
            valid_nodes: exx.len(),
            mean_exx: a.0,
            mean_eyy: b.0,
            mean_gxy: c.0,
            std_exx: a.1,
            std_eyy: b.1,
            std_gxy: c.1,
            mean_abs_exx: a.2,
            mean_abs_eyy: b.2,
            mean_abs_gxy: c.2,
        }
    }
}

/// Convenience: match then fit strain with the configured window.
pub fn correlate(reference: &GrayImage, deformed: &GrayImage, cfg: &DicConfig) -> Result<(DisplacementField, StrainField)> {
    let field = match_field(reference, deformed, cfg)?;
    let s = strain(&field, cfg.strain_window);
    Ok((field, s))
}
