//! End-to-end experiment protocols built from the pipeline stages.

use crate::dic::{correlate, edca, DicConfig, StrainSummary};
use crate::error::{Error, Result};
use crate::fsim::{fsim, FsimConstants};
use crate::fusion::{enhance, FusionConfig};
use crate::image::{mig, GrayImage};
use crate::restoration::{
    grayscale_average, optimize_params, OptimizerSettings, TurbulenceParams, DEFAULT_FRAMES,
    DEFAULT_NSR,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RestoreOrder {
    /// Restore every frame, then average the restored frames.
    #[default]
    RestoreThenAverage,
    /// Average the frames, then restore the mean image once.
    AverageThenRestore,
}

impl std::str::FromStr for RestoreOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "restore-then-average" => Ok(Self::RestoreThenAverage),
            "average-then-restore" => Ok(Self::AverageThenRestore),
            _ => Err(Error::InvalidParameter(format!("unknown restore order {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestorationConfig {
    pub nsr: f64,
    pub beta: f64,
    pub omega: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Frames per grayscale average.
    pub frames: usize,
    pub order: RestoreOrder,
}

impl Default for RestorationConfig {
    fn default() -> Self {
        let init = TurbulenceParams::default();
        let opt = OptimizerSettings::default();
        Self {
            nsr: DEFAULT_NSR,
            beta: init.beta,
            omega: init.omega,
            max_iterations: opt.max_iterations,
            tolerance: opt.tolerance,
            frames: DEFAULT_FRAMES,
            order: RestoreOrder::default(),
        }
    }
}

impl RestorationConfig {
    pub fn init(&self) -> TurbulenceParams {
        TurbulenceParams {
            beta: self.beta,
            omega: self.omega,
        }
    }

    pub fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            nsr: self.nsr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.init().validate()?;
        if !(self.nsr >= 0.0 && self.nsr.is_finite()) {
            return Err(Error::InvalidParameter("nsr must be >= 0".into()));
        }
        if self.frames == 0 {
            return Err(Error::InvalidParameter("frames must be >= 1".into()));
        }
        Ok(())
    }
}

/// Strain error of one processing strategy, in microstrain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyStrain {
    /// Mean over DIC runs of the mean absolute strain over valid nodes.
    pub abs_exx: f64,
    pub abs_eyy: f64,
    pub abs_gxy: f64,
    /// Mean over DIC runs of the signed mean strain.
    pub mean_exx: f64,
    pub mean_eyy: f64,
    pub mean_gxy: f64,
    pub edca: f64,
    pub dic_runs: usize,
}

impl StrategyStrain {
    fn from_runs(runs: &[(StrainSummary, f64)]) -> Self {
        let n = runs.len().max(1) as f64;
        let avg = |f: &dyn Fn(&StrainSummary) -> f64| runs.iter().map(|(s, _)| f(s)).sum::<f64>() / n;
        Self {
            abs_exx: avg(&|s| s.mean_abs_exx),
            abs_eyy: avg(&|s| s.mean_abs_eyy),
            abs_gxy: avg(&|s| s.mean_abs_gxy),
            mean_exx: avg(&|s| s.mean_exx),
            mean_eyy: avg(&|s| s.mean_eyy),
            mean_gxy: avg(&|s| s.mean_gxy),
            edca: runs.iter().map(|(_, e)| e).sum::<f64>() / n,
            dic_runs: runs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub index: usize,
    pub mig_raw: f64,
    pub mig_fused: f64,
    /// FSIM against the enhanced reference, before and after restoration.
    pub fsim_fused: f64,
    pub fsim_restored: f64,
    pub beta: f64,
    pub omega: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazeReport {
    pub frames: usize,
    pub order: RestoreOrder,
    pub fused: StrategyStrain,
    pub averaged: StrategyStrain,
    pub restored: StrategyStrain,
    /// Per-frame restoration records; empty for `AverageThenRestore` except
    /// for the single averaged entry.
    pub per_frame: Vec<FrameRecord>,
}

fn strain_run(reference: &GrayImage, img: &GrayImage, dic: &DicConfig) -> Result<(StrainSummary, f64)> {
    let (field, s) = correlate(reference, img, dic)?;
    Ok((s.summary(), edca(&field)))
}

/// Static heat-haze protocol over the first `restoration.frames` frames:
/// (1) each fused frame, (2) the average of the fused frames, (3) fused
/// frames restored against the enhanced reference and averaged.
pub fn run_haze_experiment(
    reference: &GrayImage,
    frames: &[GrayImage],
    fusion: &FusionConfig,
    dic: &DicConfig,
    restoration: &RestorationConfig,
) -> Result<HazeReport> {
    fusion.validate()?;
    dic.validate()?;
    restoration.validate()?;
    let n = restoration.frames;
    if frames.len() < n {
        return Err(Error::InsufficientFrames {
            need: n,
            got: frames.len(),
        });
    }
    let frames = &frames[..n];
    for f in frames {
        reference.same_dims(f)?;
    }
    let reference_e = enhance(reference, fusion)?;
    let fused: Vec<GrayImage> = frames
        .par_iter()
        .map(|f| enhance(f, fusion))
        .collect::<Result<_>>()?;

    let fused_runs: Vec<(StrainSummary, f64)> = fused
        .par_iter()
        .map(|f| strain_run(&reference_e, f, dic))
        .collect::<Result<_>>()?;
    let mean_fused = grayscale_average(&fused)?;
    let averaged = strain_run(&reference_e, &mean_fused, dic)?;

    let init = restoration.init();
    let settings = restoration.settings();
    let (restored_img, per_frame) = match restoration.order {
        RestoreOrder::RestoreThenAverage => {
            let outs: Vec<(GrayImage, FrameRecord)> = fused
                .par_iter()
                .enumerate()
                .map(|(i, f)| {
                    let (img, rep) = optimize_params(&reference_e, f, init, &settings)?;
                    Ok((
                        img,
                        FrameRecord {
                            index: i,
                            mig_raw: mig(&frames[i])?,
                            mig_fused: mig(f)?,
                            fsim_fused: rep.initial_fsim,
                            fsim_restored: rep.final_fsim,
                            beta: rep.params.beta,
                            omega: rep.params.omega,
                            iterations: rep.iterations,
                            converged: rep.converged,
                        },
                    ))
                })
                .collect::<Result<_>>()?;
            let (imgs, recs): (Vec<_>, Vec<_>) = outs.into_iter().unzip();
            (grayscale_average(&imgs)?, recs)
        }
        RestoreOrder::AverageThenRestore => {
            let (img, rep) = optimize_params(&reference_e, &mean_fused, init, &settings)?;
            let rec = FrameRecord {
                index: 0,
                mig_raw: mig(&grayscale_average(frames)?)?,
                mig_fused: mig(&mean_fused)?,
                fsim_fused: rep.initial_fsim,
                fsim_restored: rep.final_fsim,
                beta: rep.params.beta,
                omega: rep.params.omega,
                iterations: rep.iterations,
                converged: rep.converged,
            };
            (img, vec![rec])
        }
    };
    let restored = strain_run(&reference_e, &restored_img, dic)?;
    Ok(HazeReport {
        frames: n,
        order: restoration.order,
        fused: StrategyStrain::from_runs(&fused_runs),
        averaged: StrategyStrain::from_runs(&[averaged]),
        restored: StrategyStrain::from_runs(&[restored]),
        per_frame,
    })
}

/// Quality of one degraded frame before and after enhancement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExposureTrial {
    pub mig_before: f64,
    pub mig_after: f64,
    /// EDCA of the frame matched against the reference.
    pub edca_before: f64,
    pub edca_after: f64,
    pub strain_before: StrainSummary,
    pub strain_after: StrainSummary,
}

/// Matches `frame` and `enhance(frame)` against `reference`. When
/// `enhance_reference` is set, the enhanced frame is matched against the
/// enhanced reference, as when a whole sequence is processed. Both enhanced
/// images are quantized to 8 bits, as if written to disk.
pub fn exposure_trial(
    reference: &GrayImage,
    frame: &GrayImage,
    enhance_reference: bool,
    fusion: &FusionConfig,
    dic: &DicConfig,
) -> Result<ExposureTrial> {
    let enhanced = enhance(frame, fusion)?.quantized();
    let reference_after = if enhance_reference {
        enhance(reference, fusion)?.quantized()
    } else {
        reference.clone()
    };
    let (sb, eb) = strain_run(reference, frame, dic)?;
    let (sa, ea) = strain_run(&reference_after, &enhanced, dic)?;
    Ok(ExposureTrial {
        mig_before: mig(frame)?,
        mig_after: mig(&enhanced)?,
        edca_before: eb,
        edca_after: ea,
        strain_before: sb,
        strain_after: sa,
    })
}

/// FSIM of `img` against `reference` with default constants.
pub fn fsim_default(reference: &GrayImage, img: &GrayImage) -> Result<f64> {
    fsim(reference, img, FsimConstants::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{gen_speckle, SpeckleSpec};

    fn speckle(seed: u64) -> GrayImage {
        gen_speckle(&SpeckleSpec {
            width: 96,
            height: 96,
            dot_density: 20.0,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn too_few_frames_names_requirement() {
        let r = speckle(1);
        let frames = vec![r.clone(); 14];
        let err = run_haze_experiment(
            &r,
            &frames,
            &FusionConfig::default(),
            &DicConfig::default(),
            &RestorationConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientFrames { need: 15, got: 14 }));
        assert!(err.to_string().contains("15"));
    }

    #[test]
    fn identical_frames_give_zero_strain() {
        let r = speckle(2);
        let frames = vec![r.clone(); 3];
        let cfg = RestorationConfig {
            frames: 3,
            ..Default::default()
        };
        let rep = run_haze_experiment(&r, &frames, &FusionConfig::default(), &DicConfig::default(), &cfg)
            .unwrap();
        for s in [&rep.fused, &rep.averaged, &rep.restored] {
            assert!(s.abs_exx < 1e-6 && s.abs_eyy < 1e-6 && s.abs_gxy < 1e-6, "{s:?}");
            assert!(s.edca > 99.0);
        }
        assert_eq!(rep.fused.dic_runs, 3);
        assert_eq!(rep.per_frame.len(), 3);
    }

    #[test]
    fn restore_order_parses() {
        assert_eq!("average-then-restore".parse::<RestoreOrder>().unwrap(), RestoreOrder::AverageThenRestore);
        assert!("sideways".parse::<RestoreOrder>().is_err());
    }
}
