//! Dual-channel Retinex enhancement and exposure fusion.
//!
//! The positive channel `I` and the negative channel `1 - I` are enhanced
//! independently (illumination gamma correction, reflectance smoothing with
//! the multiscale guided filter), then fused with the original image using
//! well-exposedness times local-contrast weights and linearly stretched.

use crate::error::{Error, Result};
use crate::guided::{multiscale_filter_plane, GuidedFilterParams};
use crate::image::{box_mean, local_std, GrayImage, Plane, WindowSpec};
use serde::{Deserialize, Serialize};

/// All tunables of the enhancement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Gamma adjustment coefficient.
    pub alpha: f64,
    /// Reflectance regularizer.
    pub delta: f64,
    /// Radius of the local mean driving the gamma exponent.
    pub mean_window: usize,
    /// Guided-filter radii, applied in order.
    pub scales: Vec<usize>,
    /// Lower/upper percentiles of the final linear stretch.
    pub stretch_lo: f64,
    pub stretch_hi: f64,
    /// Width of the well-exposedness Gaussian around 0.5.
    pub fusion_sigma: f64,
    /// Radius of the local standard deviation used as contrast weight.
    pub contrast_radius: usize,
    /// Added to the contrast weight so flat inputs still get a vote.
    pub contrast_epsilon: f64,
    /// Carried in its own config section.
    #[serde(skip)]
    pub filter: GuidedFilterParams,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            delta: 1e-3,
            mean_window: 15,
            scales: vec![2, 5, 9],
            stretch_lo: 1.0,
            stretch_hi: 99.0,
            fusion_sigma: 0.2,
            contrast_radius: 2,
            contrast_epsilon: 1e-3,
            filter: GuidedFilterParams::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be > 0");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be > 0");
        }
        if self.mean_window < 1 || self.contrast_radius < 1 {
            return bad("window radii must be >= 1");
        }
        if !(0.0 <= self.stretch_lo && self.stretch_lo < self.stretch_hi && self.stretch_hi <= 100.0)
        {
            return bad("need 0 <= stretch_lo < stretch_hi <= 100");
        }
        if !(self.fusion_sigma > 0.0 && self.contrast_epsilon > 0.0) {
            return bad("fusion_sigma and contrast_epsilon must be > 0");
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return bad("scales must be a non-empty list of radii >= 1");
        }
        self.filter.validate()
    }
}

/// An image and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub positive: GrayImage,
    pub negative: GrayImage,
}

/// Illumination and reflectance layers of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinexLayers {
    pub illumination: GrayImage,
    pub reflection: Plane,
}

pub fn split_channels(img: &GrayImage) -> ChannelPair {
    ChannelPair {
        positive: img.clone(),
        negative: GrayImage::from_plane_clamped(img.map(|v| 1.0 - v)),
    }
}

/// `gamma(m) = (alpha + mu(m))^(2 mu(m) - 1)` for local mean `mu`.
#[inline]
pub fn gamma_exponent(alpha: f64, mu: f64) -> f64 {
    (alpha + mu).powf(2.0 * mu - 1.0)
}

/// Adaptive gamma correction `L' = L^gamma(m)`; `0^gamma` is 0.
pub fn gamma_correct(l: &GrayImage, cfg: &FusionConfig) -> Result<GrayImage> {
    let w = WindowSpec::new(cfg.mean_window)?;
    let mu = box_mean(l, w.radius);
    let out = l.zip_map(&mu, |v, m| {
        let g = gamma_exponent(cfg.alpha, m.clamp(0.0, 1.0));
        if v <= 0.0 {
            0.0
        } else {
            v.powf(g)
        }
    });
    Ok(GrayImage::from_plane_clamped(out))
}

/// Initial reflectance `R = L / (L' + delta)`.
pub fn init_reflection(l: &GrayImage, l_prime: &GrayImage, delta: f64) -> Result<Plane> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be > 0".into()));
    }
    l.same_dims(l_prime)?;
    Ok(l.zip_map(l_prime, |a, b| a / (b + delta)))
}

/// Decomposes one channel: illumination initialized to the channel itself,
/// gamma-corrected; reflectance from the regularized quotient.
pub fn decompose(ch: &GrayImage, cfg: &FusionConfig) -> Result<(GrayImage, RetinexLayers)> {
    let l_prime = gamma_correct(ch, cfg)?;
    let reflection = init_reflection(ch, &l_prime, cfg.delta)?;
    Ok((
        l_prime,
        RetinexLayers {
            illumination: ch.clone(),
            reflection,
        },
    ))
}

/// Enhances a single channel: `clamp(L' * R')` with `R'` the multiscale
/// guided-filtered reflectance.
pub fn enhance_channel(ch: &GrayImage, cfg: &FusionConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let (l_prime, layers) = decompose(ch, cfg)?;
    let r_prime = multiscale_filter_plane(&layers.reflection, &cfg.filter, &cfg.scales)?
        .map(|r| r.max(0.0));
    Ok(GrayImage::from_plane_clamped(l_prime.zip_map(&r_prime, |l, r| l * r)))
}

/// Per-pixel normalized weighted average: weight = well-exposedness
/// Gaussian times (local standard deviation + epsilon). No stretch.
pub fn fuse_weighted(inputs: &[&GrayImage], cfg: &FusionConfig) -> Result<GrayImage> {
    let first = inputs.first().ok_or(Error::EmptyInput)?;
    for img in inputs {
        first.same_dims(img)?;
    }
    let w = WindowSpec::new(cfg.contrast_radius)?;
    let two_s2 = 2.0 * cfg.fusion_sigma * cfg.fusion_sigma;
    let weights: Vec<Plane> = inputs
        .iter()
        .map(|img| {
            let contrast = local_std(img, w);
            img.zip_map(&contrast, |v, c| {
                (-(v - 0.5) * (v - 0.5) / two_s2).exp() * (c + cfg.contrast_epsilon)
            })
        })
        .collect();
    let n = first.len();
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (img, wt) in inputs.iter().zip(&weights) {
            let wk = wt.data()[k];
            num += wk * img.data()[k];
            den += wk;
        }
        *o = if den > 0.0 { num / den } else { first.data()[k] };
    }
    Ok(GrayImage::from_plane_clamped(Plane::new(
        first.width(),
        first.height(),
        out,
    )?))
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Maps the `lo`/`hi` percentiles onto 0/1, clamping outside. Images with a
/// degenerate percentile range are returned unchanged.
pub fn linear_stretch(img: &GrayImage, lo: f64, hi: f64) -> GrayImage {
    let mut sorted = img.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let a = percentile(&sorted, lo);
    let b = percentile(&sorted, hi);
    if !(b - a > 1e-12) {
        return img.clone();
    }
    GrayImage::from_plane_clamped(img.map(|v| (v - a) / (b - a)))
}

/// Fuses the original with the enhanced positive channel and the
/// re-complemented enhanced negative channel, then stretches.
pub fn fuse(
    original: &GrayImage,
    pos_enh: &GrayImage,
    neg_enh: &GrayImage,
    cfg: &FusionConfig,
) -> Result<GrayImage> {
    let neg_back = GrayImage::from_plane_clamped(neg_enh.map(|v| 1.0 - v));
    let fused = fuse_weighted(&[pos_enh, &neg_back, original], cfg)?;
    Ok(linear_stretch(&fused, cfg.stretch_lo, cfg.stretch_hi))
}

/// Full enhancement: split, enhance both channels, fuse and stretch.
pub fn enhance(img: &GrayImage, cfg: &FusionConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let pair = split_channels(img);
    let (pos, neg) = rayon::join(
        || enhance_channel(&pair.positive, cfg),
        || enhance_channel(&pair.negative, cfg),
    );
    fuse(img, &pos?, &neg?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_is_exact_complement() {
        let pair = split_channels(&GrayImage::filled(3, 3, 0.3));
        assert!(pair.positive.data().iter().all(|&v| v == 0.3));
        assert!(pair.negative.data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
        let pair = split_channels(&GrayImage::filled(2, 2, 0.0));
        assert!(pair.negative.data().iter().all(|&v| v == 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = GrayImage::from_fn(9, 9, |_, _| rng.random::<f64>());
        let pair = split_channels(&img);
        for (a, b) in pair.positive.data().iter().zip(pair.negative.data()) {
            assert!((a + b - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn mid_gray_mean_gives_identity_gamma() {
        // Checkerboard of 0.3/0.7 has local mean exactly 0.5 in the interior.
        let img = GrayImage::filled(40, 40, 0.5);
        let out = gamma_correct(&img, &FusionConfig::default()).unwrap();
        assert_eq!(gamma_exponent(0.5, 0.5), 1.0);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dark_region_exponent_exceeds_one_at_default_alpha() {
        // (0.5 + 0.2)^(2*0.2 - 1) = 0.7^-0.6 ~ 1.2386: the default darkens.
        let g = gamma_exponent(0.5, 0.2);
        assert!((g - 0.7f64.powf(-0.6)).abs() < 1e-15);
        assert!((g - 1.2386).abs() < 1e-4);
        let img = GrayImage::filled(20, 20, 0.2);
        let out = gamma_correct(&img, &FusionConfig::default()).unwrap();
        assert!(out.get(10, 10) < 0.2);
    }

    #[test]
    fn unit_illumination_is_fixed() {
        let img = GrayImage::filled(16, 16, 1.0);
        let out = gamma_correct(&img, &FusionConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn reflection_quotient() {
        let l = GrayImage::filled(2, 2, 0.5);
        let r = init_reflection(&l, &l, 1e-3).unwrap();
        assert!((r.get(0, 0) - 0.5 / 0.501).abs() < 1e-15);
        assert!((r.get(0, 0) - 0.9980).abs() < 1e-4);
        let z = GrayImage::filled(2, 2, 0.0);
        assert_eq!(init_reflection(&z, &l, 1e-3).unwrap().get(1, 1), 0.0);
        let tiny = init_reflection(&l, &GrayImage::filled(2, 2, 0.25), 1e-12).unwrap();
        assert!((tiny.get(0, 0) - 2.0).abs() < 1e-9);
        assert!(init_reflection(&l, &l, 0.0).is_err());
    }

    #[test]
    fn constant_channel_survives_enhancement() {
        let cfg = FusionConfig::default();
        let out = enhance_channel(&GrayImage::filled(32, 32, 0.5), &cfg).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 2e-2));
        let zeros = enhance_channel(&GrayImage::filled(32, 32, 0.0), &cfg).unwrap();
        assert!(zeros.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_inputs_fuse_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_fn(16, 16, |_, _| rng.random::<f64>());
        let out = fuse_weighted(&[&img, &img, &img], &FusionConfig::default()).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn well_exposed_input_dominates() {
        // Weights at 0 and 1 are equal (symmetric Gaussian), so the
        // normalized average is exactly the midpoint.
        let cfg = FusionConfig::default();
        let mid = GrayImage::filled(8, 8, 0.5);
        let dark = GrayImage::filled(8, 8, 0.0);
        let bright = GrayImage::filled(8, 8, 1.0);
        let out = fuse_weighted(&[&mid, &dark, &bright], &cfg).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let w_edge = (-0.25f64 / (2.0 * 0.04)).exp();
        assert!(w_edge < 0.05);
    }

    #[test]
    fn stretch_is_identity_on_full_range() {
        let img = GrayImage::from_fn(101, 1, |x, _| x as f64 / 100.0);
        let cfg = FusionConfig::default();
        let sorted = img.data().to_vec();
        let a = percentile(&sorted, 1.0);
        let b = percentile(&sorted, 99.0);
        // Extend the tails so the 1st/99th percentiles land on 0 and 1.
        let padded = GrayImage::from_fn(1000, 1, |x, _| {
            if x < 20 {
                0.0
            } else if x >= 980 {
                1.0
            } else {
                (x - 20) as f64 / 959.0
            }
        });
        let out = linear_stretch(&padded, cfg.stretch_lo, cfg.stretch_hi);
        for (p, q) in out.data().iter().zip(padded.data()) {
            assert!((p - q).abs() <= 1.0 / 255.0);
        }
        assert!((a - 0.01).abs() < 1e-12 && (b - 0.99).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = FusionConfig::default();
        assert!(c.validate().is_ok());
        c.stretch_lo = 99.0;
        assert!(c.validate().is_err());
        let c = FusionConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn enhance_is_deterministic_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = GrayImage::from_fn(48, 40, |_, _| rng.random::<f64>() * 0.3);
        let cfg = FusionConfig::default();
        let a = enhance(&img, &cfg).unwrap();
        let b = enhance(&img, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
