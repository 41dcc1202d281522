use geocons_core::fusion::{
    build_global_cloud_with, remove_statistical_outliers, union_cloud, voxel_downsample, DenoiseOrder, FusionConfig,
    PointCloud, VoxelSize,
};
use geocons_core::geo_loss::{
    dynamic_alignment_loss, geo_loss, geo_loss_grad, partition_by_motion, reproject_cloud_with_mode, GeoLossConfig,
    SplatMode,
};
use geocons_core::metrics::{mvcs, reprojection_error, MetricsConfig};
use geocons_core::oracle::{
    perturb, render, DynamicPrimitive, PerturbationSpec, ScenePreset, SceneSpec, Shape, TrajectoryKind,
    TrajectorySpec,
};
use geocons_core::{build_global_cloud, CameraIntrinsics, CameraPose, FrameSet, Mat3, Sequential, Vec3};

fn preset(kind: ScenePreset, traj: &str, frames: usize, size: usize) -> (FrameSet, SceneSpec) {
    let (scene, target) = SceneSpec::preset(kind);
    let traj = TrajectorySpec::preset(traj, frames, target).unwrap();
    let k = CameraIntrinsics::centered(size as f64 * 0.78, size, size).unwrap();
    (render(&scene, &traj, &k).unwrap(), scene)
}

#[test]
fn fused_box_points_lie_on_the_surface() {
    let (frames, scene) = preset(ScenePreset::Box, "orbit", 8, 48);
    let cloud = build_global_cloud(&frames, &FusionConfig::disabled()).unwrap();
    assert_eq!(cloud.len(), frames.total_valid_pixels());
    let worst = cloud
        .points()
        .iter()
        .map(|p| scene.primitives[0].surface_distance(*p))
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "max surface distance {worst}");
}

#[test]
fn voxel_centroids_stay_near_members() {
    let (frames, _) = preset(ScenePreset::Sphere, "orbit", 6, 48);
    let raw = union_cloud(&Sequential, &frames);
    for size in [0.01, 0.05, 0.2] {
        let down = voxel_downsample(&raw, size).unwrap();
        let mut worst = 0.0f64;
        let mut members = 0;
        for (i, c) in down.points().iter().enumerate() {
            for prov in down.provenance(i) {
                let f = &frames.frames()[prov.frame as usize];
                let (u, v) = (prov.pixel.u as usize, prov.pixel.v as usize);
                let p = geocons_core::geometry::backproject_pixel(u, v, f.depth().depth(u, v).unwrap(), f.intrinsics(), f.pose());
                worst = worst.max(p.distance(*c));
                members += 1;
            }
        }
        assert_eq!(members, raw.len());
        assert!(worst < size * 3f64.sqrt());
        assert_eq!(voxel_downsample(&down, size).unwrap().len(), down.len());
    }
}

#[test]
fn outlier_removal_returns_a_subset() {
    let (frames, _) = preset(ScenePreset::Box, "dolly", 4, 32);
    let raw = union_cloud(&Sequential, &frames);
    let kept = remove_statistical_outliers(&raw, 8, 1.0);
    assert!(kept.len() <= raw.len());
    let mut j = 0;
    for p in kept.points() {
        while raw.points()[j] != *p {
            j += 1;
        }
        j += 1;
    }
}

#[test]
fn denoise_orders_both_run() {
    let (frames, _) = preset(ScenePreset::Sphere, "orbit", 4, 32);
    for order in [DenoiseOrder::OutliersThenVoxel, DenoiseOrder::VoxelThenOutliers] {
        let cfg = FusionConfig { order, ..FusionConfig::default() };
        let c = build_global_cloud_with(&Sequential, &frames, &cfg).unwrap();
        assert!(!c.is_empty() && c.len() < frames.total_valid_pixels());
    }
}

#[test]
fn static_oracle_is_exactly_consistent() {
    for kind in [ScenePreset::Plane, ScenePreset::Sphere, ScenePreset::Box] {
        let (frames, _) = preset(kind, "static", 4, 32);
        let cloud = build_global_cloud(&frames, &FusionConfig::disabled()).unwrap();
        let l = geo_loss(&frames, &cloud, &GeoLossConfig::default()).unwrap();
        assert!(l.loss < 1e-12);
        assert_eq!(mvcs(&frames, &MetricsConfig::default()).unwrap().score, 100.0);
        let r = reprojection_error(&frames, &MetricsConfig::default(), &FusionConfig::disabled()).unwrap();
        assert!(r.mean < 1e-9);
    }
}

#[test]
fn odd_frame_scaling_zeroes_mvcs_on_the_plane() {
    let (frames, _) = preset(ScenePreset::Plane, "orbit", 6, 32);
    let spec = PerturbationSpec {
        per_frame_scale: PerturbationSpec::odd_frame_scale(6, 1.5),
        ..Default::default()
    };
    let scaled = perturb(&frames, &spec).unwrap();
    assert_eq!(mvcs(&scaled, &MetricsConfig::default()).unwrap().score, 0.0);
}

#[test]
fn mvcs_is_symmetric_under_reversal() {
    let (frames, _) = preset(ScenePreset::Box, "orbit", 5, 32);
    let noisy = perturb(&frames, &PerturbationSpec::noise(0.02, 3)).unwrap();
    let cfg = MetricsConfig::default();
    let a = mvcs(&noisy, &cfg).unwrap();
    let b = mvcs(&noisy.reversed(), &cfg).unwrap();
    assert_eq!(a.consistent, b.consistent);
    assert_eq!(a.in_bounds, b.in_bounds);
}

#[test]
fn metrics_are_gauge_invariant() {
    let (frames, _) = preset(ScenePreset::Sphere, "orbit", 4, 32);
    let noisy = perturb(&frames, &PerturbationSpec::noise(0.01, 9)).unwrap();
    let g = CameraPose::new(
        Mat3::from_axis_angle(Vec3::new(1.0, 2.0, -0.5).normalized().unwrap(), 0.7),
        Vec3::new(3.0, -1.0, 2.0),
    )
    .unwrap();
    let moved = noisy.transformed(&g);
    let cfg = MetricsConfig::default();
    let a = mvcs(&noisy, &cfg).unwrap().score;
    let b = mvcs(&moved, &cfg).unwrap().score;
    assert!((a - b).abs() < 1e-6);
    // The voxel grid is axis-aligned, so invariance holds only without it.
    let fusion = FusionConfig {
        voxel: VoxelSize::Disabled,
        ..FusionConfig::default()
    };
    let a = reprojection_error(&noisy, &cfg, &fusion).unwrap().mean;
    let b = reprojection_error(&moved, &cfg, &fusion).unwrap().mean;
    assert!((a - b).abs() < 1e-6);
    let ca = build_global_cloud(&noisy, &FusionConfig::disabled()).unwrap();
    let cb = build_global_cloud(&moved, &FusionConfig::disabled()).unwrap();
    let la = geo_loss(&noisy, &ca, &GeoLossConfig::default()).unwrap().loss;
    let lb = geo_loss(&moved, &cb, &GeoLossConfig::default()).unwrap().loss;
    assert!((la - lb).abs() < 1e-9);
}

#[test]
fn smaller_voxels_shrink_reprojection_error() {
    let (frames, _) = preset(ScenePreset::Plane, "orbit", 4, 48);
    let cfg = MetricsConfig::default();
    let errors: Vec<f64> = [0.04, 0.01]
        .iter()
        .map(|s| {
            let fusion = FusionConfig {
                voxel: VoxelSize::Absolute(*s),
                remove_outliers: false,
                ..FusionConfig::default()
            };
            reprojection_error(&frames, &cfg, &fusion).unwrap().mean
        })
        .collect();
    assert!(errors[1] < errors[0], "{errors:?}");
}

#[test]
fn loss_lies_below_delta_and_grows_with_noise() {
    let (frames, _) = preset(ScenePreset::Sphere, "static", 3, 32);
    let cfg = GeoLossConfig::default();
    let mut last = -1.0;
    for sigma in [0.0, 0.005, 0.02] {
        let noisy = perturb(&frames, &PerturbationSpec::noise(sigma, 1)).unwrap();
        let cloud = build_global_cloud(&noisy, &FusionConfig::disabled()).unwrap();
        let l = geo_loss(&noisy, &cloud, &cfg).unwrap().loss;
        assert!((0.0..cfg.delta).contains(&l));
        assert!(l > last);
        last = l;
    }
}

#[test]
fn gradient_magnitude_is_one_over_t_v() {
    let (frames, _) = preset(ScenePreset::Box, "orbit", 3, 24);
    let noisy = perturb(&frames, &PerturbationSpec::noise(0.01, 5)).unwrap();
    let cloud = build_global_cloud(&noisy, &FusionConfig::disabled()).unwrap();
    let cfg = GeoLossConfig::default();
    let l = geo_loss(&noisy, &cloud, &cfg).unwrap();
    let grads = geo_loss_grad(&noisy, &cloud, &cfg).unwrap();
    for (g, f) in grads.iter().zip(&l.per_frame) {
        let w = 1.0 / (3.0 * f.considered_pixels as f64);
        let nonzero = g.as_slice().iter().filter(|v| **v != 0.0).count();
        assert!(g.as_slice().iter().all(|v| *v == 0.0 || *v == w || *v == -w));
        // Exact zero residuals contribute no gradient.
        assert!(nonzero <= f.considered_pixels - f.clipped_pixels);
        assert!(nonzero > 0);
    }
}

#[test]
fn nearest_depth_splat_keeps_front_surface() {
    let k = CameraIntrinsics::centered(10.0, 4, 4).unwrap();
    let mut cloud = PointCloud::new();
    cloud.push(Vec3::new(0.0, 0.0, 2.0), &[], 0.0);
    cloud.push(Vec3::new(0.0, 0.0, 4.0), &[], 0.0);
    let front = reproject_cloud_with_mode(&cloud, &k, &CameraPose::IDENTITY, SplatMode::NearestDepth);
    let mean = reproject_cloud_with_mode(&cloud, &k, &CameraPose::IDENTITY, SplatMode::Average);
    let (u, v) = (2, 2);
    assert_eq!(front.value(u, v), Some(2.0));
    assert_eq!(mean.value(u, v), Some(3.0));
    assert_eq!(mean.hit_count(u, v), 2);
}

fn dynamic_scene(frames: usize) -> FrameSet {
    let (mut scene, target) = SceneSpec::preset(ScenePreset::Plane);
    let shape = Shape::Sphere {
        center: target + Vec3::new(-0.3, 0.0, -0.8),
        radius: 0.2,
    };
    scene.dynamic = Some(DynamicPrimitive {
        shape,
        offsets: (0..frames).map(|i| Vec3::new(0.1 * i as f64, 0.0, 0.0)).collect(),
    });
    let traj = TrajectorySpec {
        height: 0.0,
        ..TrajectorySpec::new(TrajectoryKind::Static, frames, target)
    };
    render(&scene, &traj, &CameraIntrinsics::centered(30.0, 40, 40).unwrap()).unwrap()
}

#[test]
fn motion_masks_match_analytic_membership() {
    let frames = dynamic_scene(3);
    let (scene, target) = SceneSpec::preset(ScenePreset::Plane);
    let shape = Shape::Sphere {
        center: target + Vec3::new(-0.3, 0.0, -0.8),
        radius: 0.2,
    };
    for (i, f) in frames.iter().enumerate() {
        let moving = shape.translated(Vec3::new(0.1 * i as f64, 0.0, 0.0));
        let m = f.motion().unwrap();
        for v in 0..40 {
            for u in 0..40 {
                let dir = f.pose().rotation().mul_vec(f.intrinsics().ray_direction(u as f64, v as f64));
                let eye = f.pose().center();
                let hit_dyn = moving.intersect(eye, dir);
                let hit_static = scene.primitives[0].intersect(eye, dir);
                let expect = match (hit_dyn, hit_static) {
                    (Some(a), Some(b)) => a < b,
                    (Some(_), None) => true,
                    _ => false,
                };
                assert_eq!(m.get(u, v), if expect { 1.0 } else { 0.0 });
            }
        }
    }
}

#[test]
fn dynamic_pixels_are_excluded_from_the_static_loss() {
    let frames = dynamic_scene(3);
    let cfg = GeoLossConfig::default();
    let parts = partition_by_motion(&frames, &cfg);
    assert!(parts.iter().all(|p| p.dynamic_count() > 0));
    let cloud = geocons_core::fusion::build_static_cloud_with(&Sequential, &frames, &FusionConfig::disabled(), 0.5).unwrap();
    let l = geo_loss(&frames, &cloud, &cfg).unwrap();
    assert!(l.loss < 1e-12);
    for (p, f) in parts.iter().zip(&l.per_frame) {
        assert_eq!(p.static_count(), f.static_pixels);
    }
    let d = dynamic_alignment_loss(&frames, &cfg).unwrap();
    assert!(d.loss.is_finite() && d.loss >= 0.0);
    assert!(d.per_frame.iter().any(|f| f.matched_pixels > 0));
}
