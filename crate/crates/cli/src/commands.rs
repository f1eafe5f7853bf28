use crate::report::{sig6, to_report_json, FileStatus, RunManifest};
use hotdic::config::PipelineConfig;
use hotdic::dic::{correlate, edca, DisplacementField, StrainField, StrainSummary};
use hotdic::experiment::{run_haze_experiment, HazeReport, RestoreOrder};
use hotdic::fsim::{fsim, FsimConstants};
use hotdic::fusion::enhance;
use hotdic::image::{mig, read_image, write_image};
use hotdic::restoration::{grayscale_average, optimize_params, RestorationReport};
use hotdic::synthesis::{degrade_exposure, degrade_haze, gen_speckle, add_noise, ExposureMode, HazeSpec, SpeckleSpec};
use hotdic::GrayImage;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<hotdic::Error> for CliError {
    fn from(e: hotdic::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Shared state of one invocation.
pub struct Context {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub manifest: RunManifest,
}

impl Context {
    pub fn new(command: &str, config: PipelineConfig, out: PathBuf) -> Self {
        let manifest = RunManifest::new(command, config.to_flat_string());
        Self {
            config,
            out,
            manifest,
        }
    }

    fn ensure_out_dir(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Failed(format!("{}: {e}", self.out.display())))
    }

    fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        self.manifest.outputs.push(path.clone());
        Ok(path)
    }

    fn write_report<T: Serialize>(&mut self, value: &T) -> CliResult<PathBuf> {
        let text = to_report_json(value)?;
        self.write_text("report.json", &text)
    }

    fn write_image(&mut self, path: PathBuf, img: &GrayImage) -> CliResult<()> {
        write_image(&path, img)?;
        self.manifest.outputs.push(path);
        Ok(())
    }

    fn load(&mut self, path: &Path) -> CliResult<GrayImage> {
        match read_image(path) {
            Ok(img) => {
                self.manifest.inputs.push(FileStatus::ok(path));
                Ok(img)
            }
            Err(e) => {
                self.manifest.inputs.push(FileStatus::failed(path, &e));
                Err(e.into())
            }
        }
    }

    pub fn write_manifest(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        let path = self.out.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Speckle,
    Under,
    Over,
    Haze,
}

pub fn synth(ctx: &mut Context, kind: SynthKind, count: usize, gain: Option<f64>, noise: f64) -> CliResult<()> {
    if count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }
    ctx.ensure_out_dir()?;
    let base: SpeckleSpec = ctx.config.speckle.clone();
    match kind {
        SynthKind::Speckle | SynthKind::Under | SynthKind::Over => {
            let mode = match kind {
                SynthKind::Under => Some((ExposureMode::Under, gain.unwrap_or(0.15))),
                SynthKind::Over => Some((ExposureMode::Over, gain.unwrap_or(3.0))),
                _ => None,
            };
            let images: Vec<(u64, GrayImage, Option<GrayImage>)> = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let seed = base.seed.wrapping_add(i);
                    let clean = gen_speckle(&SpeckleSpec { seed, ..base.clone() })?;
                    let degraded = match mode {
                        Some((m, g)) => {
                            let d = degrade_exposure(&clean, m, g)?.image;
                            Some(add_noise(&d, noise, seed.wrapping_add(1 << 32))?)
                        }
                        None => None,
                    };
                    Ok((seed, clean, degraded))
                })
                .collect::<hotdic::Result<_>>()?;
            let label = match kind {
                SynthKind::Under => "under",
                SynthKind::Over => "over",
                _ => "speckle",
            };
            for (i, (seed, clean, degraded)) in images.into_iter().enumerate() {
                ctx.manifest.seeds.push(seed);
                ctx.write_image(ctx.out.join(format!("speckle_{i:03}.pgm")), &clean)?;
                if let Some(d) = degraded {
                    ctx.write_image(ctx.out.join(format!("{label}_{i:03}.pgm")), &d)?;
                }
            }
        }
        SynthKind::Haze => {
            let reference = gen_speckle(&base)?;
            ctx.manifest.seeds.push(base.seed);
            let haze: HazeSpec = ctx.config.haze_spec();
            let frames: Vec<(u64, GrayImage)> = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let seed = haze.seed.wrapping_add(i);
                    degrade_haze(&reference, &HazeSpec { seed, ..haze.clone() }).map(|f| (seed, f))
                })
                .collect::<hotdic::Result<_>>()?;
            ctx.write_image(ctx.out.join("reference.pgm"), &reference)?;
            for (i, (seed, f)) in frames.into_iter().enumerate() {
                ctx.manifest.seeds.push(seed);
                ctx.write_image(ctx.out.join(format!("haze_{i:03}.pgm")), &f)?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FuseEntry {
    input: PathBuf,
    output: Option<PathBuf>,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    mig_before: Option<f64>,
    mig_after: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FuseReport {
    files: Vec<FuseEntry>,
    processed: usize,
    mig_improved: usize,
}

pub fn fuse(ctx: &mut Context, inputs: &[PathBuf]) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::Usage("fuse needs at least one input image".into()));
    }
    ctx.ensure_out_dir()?;
    let cfg = ctx.config.fusion_config();
    let out = ctx.out.clone();
    let results: Vec<Result<(PathBuf, f64, f64), String>> = inputs
        .par_iter()
        .map(|p| {
            let run = || -> hotdic::Result<(PathBuf, f64, f64)> {
                let img = read_image(p)?;
                let fused = enhance(&img, &cfg)?;
                let dest = out.join(format!("{}_fused.pgm", stem(p)));
                write_image(&dest, &fused)?;
                Ok((dest, mig(&img)?, mig(&fused.quantized())?))
            };
            run().map_err(|e| e.to_string())
        })
        .collect();
    let mut files = Vec::new();
    for (p, r) in inputs.iter().zip(results) {
        match r {
            Ok((dest, before, after)) => {
                ctx.manifest.inputs.push(FileStatus::ok(p));
                ctx.manifest.outputs.push(dest.clone());
                files.push(FuseEntry {
                    input: p.clone(),
                    output: Some(dest),
                    status: "ok",
                    error: None,
                    mig_before: Some(before),
                    mig_after: Some(after),
                });
            }
            Err(e) => {
                eprintln!("hotdic: {}: {e}", p.display());
                ctx.manifest.inputs.push(FileStatus::failed(p, &e));
                files.push(FuseEntry {
                    input: p.clone(),
                    output: None,
                    status: "failed",
                    error: Some(e),
                    mig_before: None,
                    mig_after: None,
                });
            }
        }
    }
    let report = FuseReport {
        processed: files.iter().filter(|f| f.status == "ok").count(),
        mig_improved: files
            .iter()
            .filter(|f| matches!((f.mig_before, f.mig_after), (Some(a), Some(b)) if b > a))
            .count(),
        files,
    };
    ctx.write_report(&report)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RestoreOutput<'a> {
    reference: &'a Path,
    target: &'a Path,
    output: PathBuf,
    nsr: f64,
    report: RestorationReport,
}

pub fn restore(ctx: &mut Context, reference: &Path, target: &Path) -> CliResult<()> {
    ctx.ensure_out_dir()?;
    let r = ctx.load(reference)?;
    let t = ctx.load(target)?;
    let rc = ctx.config.restoration.clone();
    let (img, rep) = optimize_params(&r, &t, rc.init(), &rc.settings())?;
    let dest = ctx.out.join(format!("{}_restored.pgm", stem(target)));
    ctx.write_image(dest.clone(), &img)?;
    let nsr = rc.nsr;
    println!(
        "fsim {:.6} -> {:.6} beta {} omega {} iterations {}",
        rep.initial_fsim,
        rep.final_fsim,
        sig6(rep.params.beta),
        sig6(rep.params.omega),
        rep.iterations
    );
    ctx.write_report(&RestoreOutput {
        reference,
        target,
        output: dest,
        nsr,
        report: rep,
    })?;
    Ok(())
}

/// `out` may name the mean image directly (`mean.pgm`) or a directory.
pub fn average(ctx: &mut Context, inputs: &[PathBuf]) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::Usage("average needs at least one input image".into()));
    }
    let dest = if hotdic::image::ImageFormat::from_path(&ctx.out).is_ok() {
        let file = ctx.out.clone();
        ctx.out = file
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        file
    } else {
        ctx.out.join("mean.pgm")
    };
    ctx.ensure_out_dir()?;
    let mut frames = Vec::with_capacity(inputs.len());
    for p in inputs {
        frames.push(ctx.load(p)?);
    }
    let mean = grayscale_average(&frames)?;
    ctx.write_image(dest, &mean)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FsimReport<'a> {
    reference: &'a Path,
    target: &'a Path,
    fsim: f64,
}

pub fn fsim_cmd(ctx: &mut Context, a: &Path, b: &Path) -> CliResult<()> {
    let ia = ctx.load(a)?;
    let ib = ctx.load(b)?;
    let score = fsim(&ia, &ib, FsimConstants::default())?;
    println!("{score:.6}");
    ctx.ensure_out_dir()?;
    ctx.write_report(&FsimReport {
        reference: a,
        target: b,
        fsim: score,
    })?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct MigEntry {
    path: PathBuf,
    mig: Option<f64>,
    status: &'static str,
}

pub fn mig_cmd(ctx: &mut Context, inputs: &[PathBuf]) -> CliResult<()> {
    if inputs.is_empty() {
        return Err(CliError::Usage("mig needs at least one input image".into()));
    }
    let mut entries = Vec::new();
    for p in inputs {
        let v = ctx.load(p).ok().and_then(|img| mig(&img).ok());
        match v {
            Some(m) => println!("{}\t{m:.6}", p.display()),
            None => eprintln!("hotdic: {}: unreadable", p.display()),
        }
        entries.push(MigEntry {
            path: p.clone(),
            mig: v,
            status: if v.is_some() { "ok" } else { "failed" },
        });
    }
    ctx.ensure_out_dir()?;
    ctx.write_report(&entries)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DicReport<'a> {
    reference: &'a Path,
    deformed: &'a Path,
    nodes: usize,
    edca: f64,
    strain: StrainSummary,
}

fn dic_csv(field: &DisplacementField, strain: &StrainField) -> String {
    let mut s = String::from("x,y,u,v,zncc,exx,eyy,gxy,valid\n");
    for i in 0..field.len() {
        let (x, y) = field.node(i);
        let valid = field.valid[i] && strain.valid[i];
        let _ = writeln!(
            s,
            "{x},{y},{},{},{},{},{},{},{}",
            sig6(field.u[i]),
            sig6(field.v[i]),
            sig6(field.score[i]),
            sig6(strain.exx[i]),
            sig6(strain.eyy[i]),
            sig6(strain.gxy[i]),
            u8::from(valid)
        );
    }
    s
}

pub fn dic_cmd(ctx: &mut Context, reference: &Path, deformed: &Path) -> CliResult<()> {
    ctx.ensure_out_dir()?;
    let r = ctx.load(reference)?;
    let d = ctx.load(deformed)?;
    let (field, strain) = correlate(&r, &d, &ctx.config.dic)?;
    let e = edca(&field);
    println!("edca {}%", sig6(e));
    ctx.write_text("dic.csv", &dic_csv(&field, &strain))?;
    ctx.write_report(&DicReport {
        reference,
        deformed,
        nodes: field.len(),
        edca: e,
        strain: strain.summary(),
    })?;
    Ok(())
}

/// Percentage reduction of each strain component relative to the fused strategy.
#[derive(Debug, Serialize)]
struct Reductions {
    averaged_exx: f64,
    averaged_eyy: f64,
    averaged_gxy: f64,
    restored_exx: f64,
    restored_eyy: f64,
    restored_gxy: f64,
}

#[derive(Debug, Serialize)]
struct ExperimentReport<'a> {
    reference: &'a Path,
    frame_paths: Vec<&'a Path>,
    #[serde(flatten)]
    result: HazeReport,
    reduction_percent: Reductions,
}

fn reduction(base: f64, v: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (base - v) / base
    }
}

pub fn experiment_haze(
    ctx: &mut Context,
    reference: &Path,
    frames: &[PathBuf],
    order: Option<RestoreOrder>,
) -> CliResult<()> {
    if let Some(o) = order {
        ctx.config.restoration.order = o;
        ctx.manifest.config = ctx.config.to_flat_string();
    }
    let need = ctx.config.restoration.frames;
    if frames.len() < need {
        return Err(CliError::Usage(format!(
            "experiment-haze needs at least {need} frames for grayscale averaging, got {}",
            frames.len()
        )));
    }
    ctx.ensure_out_dir()?;
    let r = ctx.load(reference)?;
    let mut imgs = Vec::with_capacity(frames.len());
    for p in frames {
        imgs.push(ctx.load(p)?);
    }
    let c = &ctx.config;
    let rep = run_haze_experiment(&r, &imgs, &c.fusion_config(), &c.dic, &c.restoration)?;
    let f = &rep.fused;
    let red = Reductions {
        averaged_exx: reduction(f.abs_exx, rep.averaged.abs_exx),
        averaged_eyy: reduction(f.abs_eyy, rep.averaged.abs_eyy),
        averaged_gxy: reduction(f.abs_gxy, rep.averaged.abs_gxy),
        restored_exx: reduction(f.abs_exx, rep.restored.abs_exx),
        restored_eyy: reduction(f.abs_eyy, rep.restored.abs_eyy),
        restored_gxy: reduction(f.abs_gxy, rep.restored.abs_gxy),
    };
    println!("strategy      |exx|      |eyy|      |gxy|  (microstrain)");
    for (name, s) in [("fused", &rep.fused), ("averaged", &rep.averaged), ("restored", &rep.restored)] {
        println!("{name:<9} {:>10} {:>10} {:>10}", sig6(s.abs_exx), sig6(s.abs_eyy), sig6(s.abs_gxy));
    }
    let report = ExperimentReport {
        reference,
        frame_paths: frames.iter().take(need).map(PathBuf::as_path).collect(),
        result: rep,
        reduction_percent: red,
    };
    ctx.write_report(&report)?;
    Ok(())
}
