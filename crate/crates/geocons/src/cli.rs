//! Command-line front end. [`run`] is the whole program minus process exit.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use geocons_core::fusion::{build_global_cloud_with, build_static_cloud_with, DenoiseOrder, FusionConfig, VoxelSize};
use geocons_core::geo_loss::{dynamic_alignment_loss_with, geo_loss_grad_with, geo_loss_with, GeoLossConfig, SplatMode};
use geocons_core::metrics::{mvcs_with, reprojection_error_with, MetricsConfig};
use geocons_core::oracle::{
    perturb, render, Background, DynamicPrimitive, PerturbationSpec, ScenePreset, Shape, TrajectorySpec,
};
use geocons_core::training::{lambda_depth, LossWeights};
use geocons_core::{CameraIntrinsics, Error as CoreError, Vec3};

use crate::dfr::DepthRaster;
use crate::error::IoError;
use crate::exec::RayonExecutor;
use crate::manifest::{read_manifest, sha256_hex, write_manifest, LoadedManifest};
use crate::ply::{write_ply, PlyFormat};
use crate::report::{self, Object};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Input(#[from] IoError),
    #[error("invalid input: {0}")]
    Invalid(CoreError),
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) | CliError::Invalid(_) => EXIT_INPUT,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Undefined(_) | CoreError::EmptyInput(_) => CliError::Compute(e.to_string()),
            other => CliError::Invalid(other),
        }
    }
}

fn write_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Compute(format!("cannot write {}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "geocons", version, about = "Multi-view geometric consistency for depth video")]
pub struct Cli {
    /// Worker threads; 0 uses all cores. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render an analytic scene into a manifest directory.
    Synth(SynthArgs),
    /// Fuse a manifest into a point cloud and write it as PLY.
    Fuse(FuseArgs),
    /// Compute the geometric consistency loss.
    Loss(LossArgs),
    /// Write the loss gradient with respect to each depth map as DFR rasters.
    Grad(GradArgs),
    /// Compute the multi-view consistency score and reprojection error.
    Metrics(MetricsArgs),
    /// Print the depth-loss weight schedule.
    Schedule(ScheduleArgs),
    /// Write a perturbed copy of a manifest.
    Perturb(PerturbArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SceneArg {
    Plane,
    Sphere,
    Box,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TrajArg {
    Static,
    Orbit,
    Dolly,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderArg {
    OutliersFirst,
    VoxelFirst,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplatArg {
    Average,
    Nearest,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "box")]
    pub scene: SceneArg,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, value_enum, default_value = "orbit")]
    pub traj: TrajArg,
    /// Focal length in pixels; defaults to `100 · size / 128`.
    #[arg(long)]
    pub focal: Option<f64>,
    /// Depth given to pixels that miss everything; they are invalid otherwise.
    #[arg(long)]
    pub far_plane: Option<f64>,
    /// Add a small sphere sliding sideways across the scene.
    #[arg(long)]
    pub dynamic: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct FusionArgs {
    /// Voxel edge in world units; 0 disables. Default: 1% of the cloud diagonal.
    #[arg(long)]
    pub voxel: Option<f64>,
    #[arg(long)]
    pub no_outliers: bool,
    #[arg(long, default_value_t = 16)]
    pub outlier_k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub std_ratio: f64,
    #[arg(long, value_enum, default_value = "outliers-first")]
    pub order: OrderArg,
}

impl FusionArgs {
    fn config(&self) -> FusionConfig {
        FusionConfig {
            voxel: self.voxel.map_or(FusionConfig::default().voxel, VoxelSize::from_world_units),
            remove_outliers: !self.no_outliers,
            outlier_k: self.outlier_k,
            outlier_std_ratio: self.std_ratio,
            order: match self.order {
                OrderArg::OutliersFirst => DenoiseOrder::OutliersThenVoxel,
                OrderArg::VoxelFirst => DenoiseOrder::VoxelThenOutliers,
            },
            ..FusionConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct LossFlags {
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dynamic_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    pub prob_similarity: f64,
    #[arg(long, value_enum, default_value = "average")]
    pub splat: SplatArg,
}

impl LossFlags {
    fn config(&self) -> GeoLossConfig {
        GeoLossConfig {
            delta: self.delta,
            dynamic_threshold: self.dynamic_threshold,
            prob_similarity: self.prob_similarity,
            splat: match self.splat {
                SplatArg::Average => SplatMode::Average,
                SplatArg::Nearest => SplatMode::NearestDepth,
            },
            ..GeoLossConfig::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub ascii: bool,
    /// Include a per-point motion_prob property.
    #[arg(long)]
    pub motion_prob: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    pub manifest: PathBuf,
    #[command(flatten)]
    pub loss: LossFlags,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct GradArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub loss: LossFlags,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub rel_tol: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,1")]
    pub offsets: Vec<i64>,
    #[arg(long, default_value_t = 0.5)]
    pub dynamic_threshold: f64,
    /// Denoise the reprojection-error cloud with the fusion flags; by default
    /// it is the exact union.
    #[arg(long)]
    pub denoise: bool,
    #[command(flatten)]
    pub fusion: FusionArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 0.0001)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_geo: f64,
    #[arg(long, default_value_t = 20000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1000)]
    pub every: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rot_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    pub trans: f64,
    /// Depth scale applied to odd frames.
    #[arg(long)]
    pub scale_odd: Option<f64>,
    /// Depth scale per frame, comma separated; overrides --scale-odd.
    #[arg(long, value_delimiter = ',')]
    pub scale: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs the command, writing
/// normal output to `out`. Help and version requests print to `out` and
/// succeed.
pub fn run<I, T, W>(args: I, out: &mut W) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(|e| CliError::Compute(e.to_string()))?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let exec = RayonExecutor::new(cli.threads).map_err(|e| CliError::Compute(e.to_string()))?;
    match cli.command {
        Command::Synth(a) => synth(&a, out),
        Command::Fuse(a) => fuse(&exec, &a, out),
        Command::Loss(a) => loss(&exec, &a, out),
        Command::Grad(a) => grad(&exec, &a, out),
        Command::Metrics(a) => metrics(&exec, &a, out),
        Command::Schedule(a) => schedule(&a, out),
        Command::Perturb(a) => perturb_cmd(&a, out),
    }
}

fn emit<W: Write>(out: &mut W, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Compute(format!("cannot write output: {e}")))
}

fn load(path: &Path) -> Result<LoadedManifest, CliError> {
    let mut m = read_manifest(path)?;
    // Report the manifest by file name so reports do not depend on the
    // working directory.
    if let Some(name) = path.file_name() {
        m.digests[0].0 = name.to_string_lossy().into_owned();
    }
    Ok(m)
}

fn synth<W: Write>(a: &SynthArgs, out: &mut W) -> Result<(), CliError> {
    let (mut scene, target) = geocons_core::oracle::SceneSpec::preset(match a.scene {
        SceneArg::Plane => ScenePreset::Plane,
        SceneArg::Sphere => ScenePreset::Sphere,
        SceneArg::Box => ScenePreset::Box,
    });
    if let Some(far) = a.far_plane {
        scene.background = Background::FarPlane(far);
    }
    if a.dynamic {
        let n = a.frames.max(1);
        scene.dynamic = Some(DynamicPrimitive {
            shape: Shape::Sphere {
                center: target + Vec3::new(-0.4, -0.2, -0.9),
                radius: 0.15,
            },
            offsets: (0..n).map(|i| Vec3::new(0.8 * i as f64 / n as f64, 0.0, 0.0)).collect(),
        });
    }
    let traj = TrajectorySpec::preset(
        match a.traj {
            TrajArg::Static => "static",
            TrajArg::Orbit => "orbit",
            TrajArg::Dolly => "dolly",
        },
        a.frames,
        target,
    )?;
    let focal = a.focal.unwrap_or(100.0 * a.size as f64 / 128.0);
    let k = CameraIntrinsics::centered(focal, a.size, a.size)?;
    let frames = render(&scene, &traj, &k)?;
    let path = write_manifest(&a.out, &frames, None)?;
    emit(out, &format!("wrote {} frames to {}\n", frames.len(), path.display()))
}

fn fuse<W: Write>(exec: &RayonExecutor, a: &FuseArgs, out: &mut W) -> Result<(), CliError> {
    let m = load(&a.manifest)?;
    let cfg = a.fusion.config();
    let cloud = build_global_cloud_with(exec, &m.frames, &cfg)?;
    let format = if a.ascii { PlyFormat::Ascii } else { PlyFormat::BinaryLittleEndian };
    let mut bytes = Vec::new();
    write_ply(&mut bytes, &cloud, format, a.motion_prob).map_err(|e| write_err(&a.out, e))?;
    std::fs::write(&a.out, &bytes).map_err(|e| write_err(&a.out, e))?;
    if a.json {
        let mut result = Object::new();
        result
            .set("points", cloud.len() as u64)
            .set("ply_sha256", sha256_hex(&bytes));
        let mut doc = report::envelope("fuse", fusion_echo(&cfg), &m.digests);
        doc.set("result", result);
        emit(out, &report::to_string(&doc.into_value()))
    } else {
        emit(out, &format!("{} points -> {}\n", cloud.len(), a.out.display()))
    }
}

fn fusion_echo(cfg: &FusionConfig) -> Object {
    let mut c = Object::new();
    c.set("fusion", report::fusion_config(cfg));
    c
}

fn loss<W: Write>(exec: &RayonExecutor, a: &LossArgs, out: &mut W) -> Result<(), CliError> {
    let m = load(&a.manifest)?;
    let lcfg = a.loss.config();
    lcfg.validate()?;
    let fcfg = a.fusion.config();
    let cloud = build_static_cloud_with(exec, &m.frames, &fcfg, lcfg.dynamic_threshold)?;
    let l = geo_loss_with(exec, &m.frames, &cloud, &lcfg)?;
    let has_motion = m.frames.iter().any(|f| f.motion().is_some());
    let dynamic = if has_motion {
        Some(dynamic_alignment_loss_with(exec, &m.frames, &lcfg)?)
    } else {
        None
    };
    if a.json {
        let mut config = fusion_echo(&fcfg);
        config.set("loss", report::loss_config(&lcfg));
        let mut result = report::loss_result(&l, cloud.len());
        match &dynamic {
            Some(d) => {
                let mut o = Object::new();
                o.set("loss", d.loss)
                    .set("dynamic_pixels", d.per_frame.iter().map(|f| f.dynamic_pixels as u64).sum::<u64>())
                    .set("matched_pixels", d.per_frame.iter().map(|f| f.matched_pixels as u64).sum::<u64>());
                result.set("dynamic", o);
            }
            None => {
                result
                    .set("dynamic", Value::Null)
                    .set("dynamic_null_reason", "no motion probability maps");
            }
        }
        let mut doc = report::envelope("loss", config, &m.digests);
        doc.set("result", result);
        emit(out, &report::to_string(&doc.into_value()))
    } else {
        let mut text = format!("l_geo {}\n", l.loss);
        if let Some(d) = dynamic {
            text.push_str(&format!("l_dynamic {}\n", d.loss));
        }
        let empty = l.empty_frames();
        if !empty.is_empty() {
            text.push_str(&format!("frames without cloud hits: {empty:?}\n"));
        }
        emit(out, &text)
    }
}

fn grad<W: Write>(exec: &RayonExecutor, a: &GradArgs, out: &mut W) -> Result<(), CliError> {
    let m = load(&a.manifest)?;
    let lcfg = a.loss.config();
    lcfg.validate()?;
    let fcfg = a.fusion.config();
    let cloud = build_static_cloud_with(exec, &m.frames, &fcfg, lcfg.dynamic_threshold)?;
    let grads = geo_loss_grad_with(exec, &m.frames, &cloud, &lcfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| write_err(&a.out, e))?;
    let mut files = Vec::new();
    for (i, g) in grads.iter().enumerate() {
        let name = format!("grad_{i:04}.dfr");
        let path = a.out.join(&name);
        let bytes = DepthRaster::from_raster(g).to_bytes();
        std::fs::write(&path, &bytes).map_err(|e| write_err(&path, e))?;
        let nonzero = g.as_slice().iter().filter(|v| **v != 0.0).count();
        files.push((name, sha256_hex(&bytes), nonzero));
    }
    if a.json {
        let mut config = fusion_echo(&fcfg);
        config.set("loss", report::loss_config(&lcfg));
        let list: Vec<Value> = files
            .iter()
            .map(|(name, digest, nonzero)| {
                let mut o = Object::new();
                o.set("path", name.as_str())
                    .set("sha256", digest.as_str())
                    .set("nonzero", *nonzero as u64);
                o.into_value()
            })
            .collect();
        let mut result = Object::new();
        result.set("files", list);
        let mut doc = report::envelope("grad", config, &m.digests);
        doc.set("result", result);
        emit(out, &report::to_string(&doc.into_value()))
    } else {
        emit(out, &format!("wrote {} gradient rasters to {}\n", files.len(), a.out.display()))
    }
}

fn metrics<W: Write>(exec: &RayonExecutor, a: &MetricsArgs, out: &mut W) -> Result<(), CliError> {
    let m = load(&a.manifest)?;
    let mcfg = MetricsConfig {
        mvcs_rel_tol: a.rel_tol,
        neighbor_offsets: a.offsets.clone(),
        reproj_voxel: None,
        dynamic_threshold: a.dynamic_threshold,
    };
    mcfg.validate()?;
    let fcfg = if a.denoise { a.fusion.config() } else { FusionConfig::disabled() };
    let mv = mvcs_with(exec, &m.frames, &mcfg);
    let re = reprojection_error_with(exec, &m.frames, &mcfg, &fcfg)?;
    if a.json {
        let mut config = fusion_echo(&fcfg);
        config.set("metrics", report::metrics_config(&mcfg));
        let mut result = Object::new();
        match &mv {
            Ok(mv) => {
                result.set("mvcs", mv.score).set("mvcs_detail", report::mvcs_result(mv));
            }
            Err(e) => {
                result.number("mvcs", None, &e.to_string());
            }
        }
        result
            .set("reproj_error", re.mean)
            .set("reproj_detail", report::reprojection_result(&re));
        let mut doc = report::envelope("metrics", config, &m.digests);
        doc.set("result", result);
        emit(out, &report::to_string(&doc.into_value()))
    } else {
        let mvcs = match &mv {
            Ok(mv) => format!("{}", mv.score),
            Err(e) => format!("undefined ({e})"),
        };
        emit(out, &format!("mvcs {mvcs}\nreproj_error {}\n", re.mean))
    }
}

fn schedule<W: Write>(a: &ScheduleArgs, out: &mut W) -> Result<(), CliError> {
    let w = LossWeights {
        alpha_ramp: a.alpha,
        lambda_geo: a.lambda_geo,
    };
    w.validate()?;
    if a.every == 0 {
        return Err(CliError::Usage("--every must be at least 1".into()));
    }
    let steps: Vec<u64> = (0..=a.steps).step_by(a.every as usize).collect();
    if a.json {
        let rows: Vec<Value> = steps
            .iter()
            .map(|&s| {
                let mut o = Object::new();
                o.set("step", s).set("lambda_depth", lambda_depth(s, &w));
                o.into_value()
            })
            .collect();
        let mut config = Object::new();
        config.set("alpha", a.alpha).set("lambda_geo", a.lambda_geo);
        let mut result = Object::new();
        result.set("rows", rows);
        let mut doc = report::envelope("schedule", config, &[]);
        doc.set("result", result);
        emit(out, &report::to_string(&doc.into_value()))
    } else {
        let mut text = String::from("step\tlambda_depth\n");
        for s in steps {
            text.push_str(&format!("{s}\t{}\n", lambda_depth(s, &w)));
        }
        emit(out, &text)
    }
}

fn perturb_cmd<W: Write>(a: &PerturbArgs, out: &mut W) -> Result<(), CliError> {
    let m = load(&a.manifest)?;
    let per_frame_scale = if !a.scale.is_empty() {
        a.scale.clone()
    } else if let Some(f) = a.scale_odd {
        PerturbationSpec::odd_frame_scale(m.frames.len(), f)
    } else {
        Vec::new()
    };
    let spec = PerturbationSpec {
        depth_noise_sigma: a.sigma,
        pose_rot_deg: a.rot_deg,
        pose_trans: a.trans,
        per_frame_scale,
        seed: a.seed,
    };
    let frames = perturb(&m.frames, &spec)?;
    let path = write_manifest(&a.out, &frames, m.scene_scale)?;
    emit(out, &format!("wrote {} frames to {}\n", frames.len(), path.display()))
}
