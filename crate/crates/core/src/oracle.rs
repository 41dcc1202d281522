//! Analytic ray-cast scenes producing exactly consistent frame sets, plus
//! seeded perturbations of such sets.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::frames::{Frame, FrameSet, MotionProbMap};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};
use crate::math::{Mat3, Vec3};
use crate::raster::Raster;

/// Smallest ray parameter accepted as a hit.
const T_MIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Infinite two-sided plane through `point`.
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned box.
    Cuboid { min: Vec3, max: Vec3 },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Shape::Plane { point, normal } => {
                if !point.is_finite() || normal.normalized().is_none() {
                    return Err(invalid("plane", "needs a finite point and non-zero normal"));
                }
            }
            Shape::Sphere { center, radius } => {
                if !center.is_finite() || !(radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("sphere", format!("radius must be positive, got {radius}")));
                }
            }
            Shape::Cuboid { min, max } => {
                let ok = min.is_finite() && max.is_finite() && max.x > min.x && max.y > min.y && max.z > min.z;
                if !ok {
                    return Err(invalid("box", "max must exceed min on every axis"));
                }
            }
        }
        Ok(())
    }

    pub fn translated(&self, by: Vec3) -> Shape {
        match *self {
            Shape::Plane { point, normal } => Shape::Plane { point: point + by, normal },
            Shape::Sphere { center, radius } => Shape::Sphere { center: center + by, radius },
            Shape::Cuboid { min, max } => Shape::Cuboid { min: min + by, max: max + by },
        }
    }

    /// Camera placements that make the scene ill-defined.
    fn encloses(&self, p: Vec3) -> bool {
        match *self {
            Shape::Plane { point, normal } => libm::fabs(normal.dot(p - point)) < 1e-12,
            Shape::Sphere { center, radius } => p.distance_squared(center) <= radius * radius,
            Shape::Cuboid { min, max } => {
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z
            }
        }
    }

    /// Smallest `t > 0` with `origin + t·dir` on the surface.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match *self {
            Shape::Plane { point, normal } => {
                let denom = normal.dot(dir);
                if denom == 0.0 {
                    return None;
                }
                let t = normal.dot(point - origin) / denom;
                (t > T_MIN).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let half_b = dir.dot(oc);
                let c = oc.dot(oc) - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = libm::sqrt(disc);
                let near = (-half_b - sq) / a;
                if near > T_MIN {
                    return Some(near);
                }
                let far = (-half_b + sq) / a;
                (far > T_MIN).then_some(far)
            }
            Shape::Cuboid { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for (o, d, lo, hi) in [
                    (origin.x, dir.x, min.x, max.x),
                    (origin.y, dir.y, min.y, max.y),
                    (origin.z, dir.z, min.z, max.z),
                ] {
                    if d == 0.0 {
                        if o < lo || o > hi {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((lo - o) / d, (hi - o) / d);
                    let (near, far) = if a < b { (a, b) } else { (b, a) };
                    t0 = t0.max(near);
                    t1 = t1.min(far);
                }
                if t0 > t1 {
                    return None;
                }
                if t0 > T_MIN {
                    Some(t0)
                } else if t1 > T_MIN {
                    Some(t1)
                } else {
                    None
                }
            }
        }
    }

    /// Distance from `p` to the surface.
    pub fn surface_distance(&self, p: Vec3) -> f64 {
        match *self {
            Shape::Plane { point, normal } => {
                let n = normal.normalized().unwrap_or(normal);
                libm::fabs(n.dot(p - point))
            }
            Shape::Sphere { center, radius } => libm::fabs(p.distance(center) - radius),
            Shape::Cuboid { min, max } => {
                let outside = Vec3::new(
                    (min.x - p.x).max(p.x - max.x).max(0.0),
                    (min.y - p.y).max(p.y - max.y).max(0.0),
                    (min.z - p.z).max(p.z - max.z).max(0.0),
                );
                let out = outside.norm();
                if out > 0.0 {
                    out
                } else {
                    [p.x - min.x, max.x - p.x, p.y - min.y, max.y - p.y, p.z - min.z, max.z - p.z]
                        .into_iter()
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }
}

/// Primitive that moves rigidly; `offsets[i]` is its translation in frame `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicPrimitive {
    pub shape: Shape,
    pub offsets: Vec<Vec3>,
}

/// What pixels that miss every primitive receive.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Background {
    /// Marked invalid.
    #[default]
    Invalid,
    /// Valid, at this constant z-depth in every camera.
    FarPlane(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub primitives: Vec<Shape>,
    pub dynamic: Option<DynamicPrimitive>,
    pub background: Background,
}

/// Scene presets, each centered on a look-at target two units in front of
/// the default camera.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenePreset {
    Plane,
    Sphere,
    Box,
}

impl SceneSpec {
    pub fn new(primitives: Vec<Shape>) -> Self {
        Self {
            primitives,
            dynamic: None,
            background: Background::Invalid,
        }
    }

    /// Preset scene together with its natural look-at target.
    pub fn preset(kind: ScenePreset) -> (SceneSpec, Vec3) {
        let target = Vec3::new(0.0, 0.0, 2.0);
        let shape = match kind {
            ScenePreset::Plane => Shape::Plane {
                point: target,
                normal: Vec3::new(0.0, 0.0, -1.0),
            },
            ScenePreset::Sphere => Shape::Sphere {
                center: target,
                radius: 0.6,
            },
            ScenePreset::Box => Shape::Cuboid {
                min: target - Vec3::new(0.5, 0.5, 0.5),
                max: target + Vec3::new(0.5, 0.5, 0.5),
            },
        };
        (SceneSpec::new(alloc::vec![shape]), target)
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.primitives.is_empty() && self.dynamic.is_none() {
            return Err(invalid("scene", "needs at least one primitive"));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        if let Some(d) = &self.dynamic {
            d.shape.validate()?;
            if d.offsets.len() != frames {
                return Err(Error::LengthMismatch {
                    context: "dynamic primitive offsets",
                    expected: frames,
                    actual: d.offsets.len(),
                });
            }
        }
        if let Background::FarPlane(d) = self.background {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("background", format!("far plane must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrajectoryKind {
    /// Every frame at the start pose.
    Static,
    /// Circle around the target in the horizontal plane spanning `arc_deg`.
    Orbit { arc_deg: f64 },
    /// Straight approach towards the target, `step` world units per frame.
    Dolly { step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub frames: usize,
    pub target: Vec3,
    /// Start distance from the target.
    pub radius: f64,
    /// Camera offset along world `y` (negative is up).
    pub height: f64,
}

impl TrajectorySpec {
    pub fn new(kind: TrajectoryKind, frames: usize, target: Vec3) -> Self {
        Self {
            kind,
            frames,
            target,
            radius: 2.0,
            height: -0.4,
        }
    }

    /// Default orbit (40°) or dolly (0.6 units total) for a preset target.
    pub fn preset(kind: &str, frames: usize, target: Vec3) -> Result<Self> {
        let kind = match kind {
            "static" => TrajectoryKind::Static,
            "orbit" => TrajectoryKind::Orbit { arc_deg: 40.0 },
            "dolly" => TrajectoryKind::Dolly {
                step: 0.6 / frames.max(2).saturating_sub(1) as f64,
            },
            other => return Err(invalid("trajectory", format!("unknown kind `{other}`"))),
        };
        Ok(Self::new(kind, frames, target))
    }

    pub fn poses(&self) -> Result<Vec<CameraPose>> {
        if self.frames == 0 {
            return Err(invalid("frames", "trajectory needs at least one frame"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) || !self.height.is_finite() {
            return Err(invalid("radius", "must be positive and finite"));
        }
        let down = Vec3::new(0.0, 1.0, 0.0);
        let n = self.frames;
        (0..n)
            .map(|i| {
                let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                let (dist, angle) = match self.kind {
                    TrajectoryKind::Static => (self.radius, 0.0),
                    TrajectoryKind::Orbit { arc_deg } => (self.radius, (s - 0.5) * arc_deg.to_radians()),
                    TrajectoryKind::Dolly { step } => (self.radius - step * i as f64, 0.0),
                };
                if dist <= 0.0 || dist.is_nan() {
                    return Err(invalid("dolly", format!("camera {i} reaches or passes the target")));
                }
                let eye = self.target
                    + Vec3::new(dist * libm::sin(angle), self.height, -dist * libm::cos(angle));
                CameraPose::look_at(eye, self.target, down)
            })
            .collect()
    }
}

/// Ray-casts every frame. Pixels on the dynamic primitive get motion
/// probability 1, all others 0; motion maps are attached only when the scene
/// has a dynamic primitive.
pub fn render(scene: &SceneSpec, traj: &TrajectorySpec, k: &CameraIntrinsics) -> Result<FrameSet> {
    k.validate()?;
    let poses = traj.poses()?;
    scene.validate(poses.len())?;
    poses
        .iter()
        .enumerate()
        .map(|(i, pose)| render_frame(scene, i, pose, k))
        .collect::<Result<Vec<_>>>()
        .and_then(FrameSet::new)
}

fn render_frame(scene: &SceneSpec, index: usize, pose: &CameraPose, k: &CameraIntrinsics) -> Result<Frame> {
    let eye = pose.center();
    let dynamic = scene
        .dynamic
        .as_ref()
        .map(|d| d.shape.translated(d.offsets[index]));
    for (p, shape) in scene.primitives.iter().chain(dynamic.as_ref()).enumerate() {
        if shape.encloses(eye) {
            return Err(Error::CameraInsidePrimitive { frame: index, primitive: p });
        }
    }
    let (w, h) = (k.width, k.height);
    let mut depth = Raster::filled(w, h, 0.0);
    let mut motion = Raster::filled(w, h, 0.0);
    for v in 0..h {
        for u in 0..w {
            let dir = pose.rotation().mul_vec(k.ray_direction(u as f64, v as f64));
            let mut best = scene
                .primitives
                .iter()
                .filter_map(|s| s.intersect(eye, dir))
                .fold(f64::INFINITY, f64::min);
            let mut moving = false;
            if let Some(t) = dynamic.and_then(|s| s.intersect(eye, dir)) {
                if t < best {
                    best = t;
                    moving = true;
                }
            }
            if best.is_finite() {
                *depth.get_mut(u, v) = best;
                *motion.get_mut(u, v) = if moving { 1.0 } else { 0.0 };
            } else if let Background::FarPlane(far) = scene.background {
                *depth.get_mut(u, v) = far;
            }
        }
    }
    let motion = match scene.dynamic {
        Some(_) => Some(MotionProbMap::new(motion)?),
        None => None,
    };
    Frame::new(DepthMap::from_values(depth), *pose, *k, motion)
}

/// Seeded perturbations applied by [`perturb`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PerturbationSpec {
    /// Standard deviation of additive Gaussian depth noise.
    pub depth_noise_sigma: f64,
    /// Rotation applied about a random camera-frame axis, in degrees.
    pub pose_rot_deg: f64,
    /// Camera-center displacement in a random direction, world units.
    pub pose_trans: f64,
    /// Multiplicative depth factor per frame; empty means no scaling.
    pub per_frame_scale: Vec<f64>,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn noise(sigma: f64, seed: u64) -> Self {
        Self {
            depth_noise_sigma: sigma,
            seed,
            ..Default::default()
        }
    }

    /// `factor` on odd frames, 1 elsewhere.
    pub fn odd_frame_scale(frames: usize, factor: f64) -> Vec<f64> {
        (0..frames).map(|i| if i % 2 == 1 { factor } else { 1.0 }).collect()
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        for (name, v) in [
            ("depth_noise_sigma", self.depth_noise_sigma),
            ("pose_rot_deg", self.pose_rot_deg),
            ("pose_trans", self.pose_trans),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        if !self.per_frame_scale.is_empty() {
            if self.per_frame_scale.len() != frames {
                return Err(Error::LengthMismatch {
                    context: "per_frame_scale",
                    expected: frames,
                    actual: self.per_frame_scale.len(),
                });
            }
            if let Some(s) = self.per_frame_scale.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                return Err(invalid("per_frame_scale", format!("factors must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// Rotates a camera about an axis given in its own frame, keeping its center.
pub fn rotate_about_camera_axis(pose: &CameraPose, axis: Vec3, angle_rad: f64) -> Result<CameraPose> {
    let axis = axis
        .normalized()
        .ok_or_else(|| invalid("axis", "rotation axis must be non-zero"))?;
    let r = pose.rotation().mul_mat(&Mat3::from_axis_angle(axis, angle_rad));
    CameraPose::new(r, pose.translation())
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// Scales, adds noise to, and jitters the poses of every frame. Each frame
/// draws from its own ChaCha stream, so the result depends only on the spec.
/// Validity masks are preserved; noisy depths are floored at a tiny positive
/// fraction of the original.
pub fn perturb(frames: &FrameSet, spec: &PerturbationSpec) -> Result<FrameSet> {
    spec.validate(frames.len())?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            let scale = spec.per_frame_scale.get(i).copied().unwrap_or(1.0);
            let mut out = f.clone();
            if scale != 1.0 || spec.depth_noise_sigma > 0.0 {
                let sigma = spec.depth_noise_sigma;
                let depth = f.depth().map_valid(|_, d| {
                    let mut d2 = d * scale;
                    if sigma > 0.0 {
                        let n: f64 = rng.sample(StandardNormal);
                        d2 += sigma * n;
                    }
                    d2.max(d * 1e-6)
                })?;
                out = out.with_depth(depth)?;
            }
            let mut pose = *f.pose();
            if spec.pose_rot_deg > 0.0 {
                let axis = random_unit(&mut rng);
                pose = rotate_about_camera_axis(&pose, axis, spec.pose_rot_deg.to_radians())?;
            }
            if spec.pose_trans > 0.0 {
                let dir = random_unit(&mut rng);
                pose = CameraPose::new(*pose.rotation(), pose.translation() + dir * spec.pose_trans)?;
            }
            Ok(out.with_pose(pose))
        })
        .collect::<Result<Vec<_>>>()
        .and_then(FrameSet::new)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k128() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).unwrap()
    }

    fn from_origin(target: Vec3) -> TrajectorySpec {
        TrajectorySpec {
            height: 0.0,
            radius: target.norm(),
            ..TrajectorySpec::new(TrajectoryKind::Static, 1, target)
        }
    }

    #[test]
    fn fronto_parallel_plane_has_constant_depth() {
        let target = Vec3::new(0.0, 0.0, 2.0);
        let scene = SceneSpec::new(alloc::vec![Shape::Plane { point: target, normal: Vec3::new(0.0, 0.0, 1.0) }]);
        let frames = render(&scene, &from_origin(target), &k128()).unwrap();
        let d = frames.frames()[0].depth();
        assert_eq!(d.valid_count(), 128 * 128);
        assert!(d.values().as_slice().iter().all(|z| *z == 2.0));
    }

    #[test]
    fn sphere_center_pixel() {
        let target = Vec3::new(0.0, 0.0, 5.0);
        let scene = SceneSpec::new(alloc::vec![Shape::Sphere { center: target, radius: 1.0 }]);
        let frames = render(&scene, &from_origin(target), &k128()).unwrap();
        assert_eq!(frames.frames()[0].depth().depth(64, 64), Some(4.0));
        assert_eq!(frames.frames()[0].depth().depth(0, 0), None);
    }

    #[test]
    fn camera_inside_is_rejected() {
        let scene = SceneSpec::new(alloc::vec![Shape::Sphere { center: Vec3::new(0.0, 0.0, 2.0), radius: 3.0 }]);
        let traj = TrajectorySpec::new(TrajectoryKind::Static, 2, Vec3::new(0.0, 0.0, 2.0));
        assert!(matches!(render(&scene, &traj, &k128()), Err(Error::CameraInsidePrimitive { .. })));
    }

    #[test]
    fn box_slab_hits_front_face() {
        let b = Shape::Cuboid { min: Vec3::new(-1.0, -1.0, 3.0), max: Vec3::new(1.0, 1.0, 4.0) };
        assert_eq!(b.intersect(Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0)), Some(3.0));
        assert_eq!(b.intersect(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)), None);
        assert_eq!(b.surface_distance(Vec3::new(0.0, 0.0, 3.0)), 0.0);
    }

    #[test]
    fn far_plane_background() {
        let target = Vec3::new(0.0, 0.0, 5.0);
        let mut scene = SceneSpec::new(alloc::vec![Shape::Sphere { center: target, radius: 1.0 }]);
        scene.background = Background::FarPlane(50.0);
        let frames = render(&scene, &from_origin(target), &k128()).unwrap();
        assert_eq!(frames.frames()[0].depth().depth(0, 0), Some(50.0));
    }

    #[test]
    fn dynamic_primitive_sets_motion() {
        let (mut scene, target) = SceneSpec::preset(ScenePreset::Plane);
        scene.dynamic = Some(DynamicPrimitive {
            shape: Shape::Sphere { center: Vec3::new(0.5, 0.0, 1.5), radius: 0.2 },
            offsets: alloc::vec![Vec3::ZERO, Vec3::new(0.05, 0.0, 0.0)],
        });
        let traj = TrajectorySpec::new(TrajectoryKind::Static, 2, target);
        let frames = render(&scene, &traj, &k128()).unwrap();
        let m = frames.frames()[0].motion().unwrap();
        assert!(m.raster().as_slice().iter().all(|p| *p == 0.0 || *p == 1.0));
        assert_eq!(m.get(64, 64), 0.0);
        let dynamic = m.raster().as_slice().iter().filter(|p| **p == 1.0).count();
        assert!(dynamic > 0 && dynamic < 128 * 128);
    }

    #[test]
    fn trajectory_validation() {
        assert!(TrajectorySpec::preset("spiral", 4, Vec3::ZERO).is_err());
        let t = TrajectorySpec::new(TrajectoryKind::Dolly { step: 1.0 }, 3, Vec3::new(0.0, 0.0, 2.0));
        assert!(t.poses().is_err());
        let t = TrajectorySpec::new(TrajectoryKind::Static, 0, Vec3::ZERO);
        assert!(t.poses().is_err());
    }

    #[test]
    fn identity_perturbation_is_bit_exact() {
        let (scene, target) = SceneSpec::preset(ScenePreset::Box);
        let traj = TrajectorySpec::preset("orbit", 3, target).unwrap();
        let k = CameraIntrinsics::centered(30.0, 32, 32).unwrap();
        let frames = render(&scene, &traj, &k).unwrap();
        assert_eq!(perturb(&frames, &PerturbationSpec::default()).unwrap(), frames);
    }

    #[test]
    fn perturbation_is_deterministic() {
        let (scene, target) = SceneSpec::preset(ScenePreset::Sphere);
        let traj = TrajectorySpec::preset("dolly", 3, target).unwrap();
        let k = CameraIntrinsics::centered(30.0, 32, 32).unwrap();
        let frames = render(&scene, &traj, &k).unwrap();
        let spec = PerturbationSpec {
            depth_noise_sigma: 0.01,
            pose_rot_deg: 0.5,
            pose_trans: 0.01,
            per_frame_scale: PerturbationSpec::odd_frame_scale(3, 1.1),
            seed: 42,
        };
        let a = perturb(&frames, &spec).unwrap();
        assert_eq!(a, perturb(&frames, &spec).unwrap());
        assert_ne!(a, perturb(&frames, &PerturbationSpec { seed: 43, ..spec.clone() }).unwrap());
        for (p, f) in a.iter().zip(frames.iter()) {
            assert_eq!(p.depth().valid(), f.depth().valid());
        }
        assert!(perturb(&frames, &PerturbationSpec { per_frame_scale: alloc::vec![1.0], ..spec }).is_err());
    }

    #[test]
    fn camera_axis_rotation_keeps_center() {
        let pose = CameraPose::look_at(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let r = rotate_about_camera_axis(&pose, Vec3::new(0.0, 1.0, 0.0), 0.1).unwrap();
        assert_eq!(r.center(), pose.center());
    }
}
