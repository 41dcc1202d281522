use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use geocons::manifest::{read_manifest, write_manifest};
use geocons::{DepthRaster, IoError};
use geocons_core::oracle::{render, DynamicPrimitive, ScenePreset, SceneSpec, Shape, TrajectorySpec};
use geocons_core::{CameraIntrinsics, Vec3};

const IDENTITY: &str = "[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]";

fn write_raster(dir: &Path, name: &str, w: u32, h: u32, data: Vec<f32>) {
    DepthRaster { width: w, height: h, data }.write(&dir.join(name)).unwrap();
}

fn manifest(dir: &Path, pose: &str, depth: &str, motion: Option<&str>) -> std::path::PathBuf {
    let motion = motion.map(|m| format!(r#""motion_prob_path": "{m}","#)).unwrap_or_default();
    let text = format!(
        r#"{{"version": 1, "frames": [{{"depth_path": "{depth}", {motion} "pose": {pose},
            "intrinsics": {{"fx": 2, "fy": 2, "cx": 0.5, "cy": 0.5, "width": 2, "height": 2}}}}]}}"#
    );
    let path = dir.join("manifest.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn random_raster_round_trip_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<f32> = (0..64 * 64)
        .map(|i| match i % 97 {
            0 => f32::NAN,
            1 => f32::INFINITY,
            2 => -1.0,
            _ => rng.random_range(0.01..50.0),
        })
        .collect();
    let r = DepthRaster { width: 64, height: 64, data };
    let back = DepthRaster::from_bytes(&r.to_bytes(), Path::new("mem")).unwrap();
    let bits = |r: &DepthRaster| r.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&r));
    assert_eq!(back.to_bytes(), r.to_bytes());
}

#[test]
fn nan_is_read_as_invalid() {
    let r = DepthRaster { width: 2, height: 1, data: vec![f32::NAN, 1.5] };
    let d = DepthRaster::from_bytes(&r.to_bytes(), Path::new("mem")).unwrap().to_depth();
    assert!(!d.is_valid(0, 0));
    assert_eq!(d.depth(1, 0), Some(1.5));
    assert!(DepthRaster::from_depth(&d).data[0].is_nan());
}

#[test]
fn single_frame_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_raster(dir.path(), "d.dfr", 2, 2, vec![1.0; 4]);
    let m = read_manifest(&manifest(dir.path(), IDENTITY, "d.dfr", None)).unwrap();
    assert_eq!(m.frames.len(), 1);
    assert_eq!(m.frames.total_valid_pixels(), 4);
    assert_eq!(m.digests.len(), 2);
    assert_eq!(m.digests[1].1.len(), 64);
}

#[test]
fn truncated_raster_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = DepthRaster { width: 2, height: 2, data: vec![1.0; 4] }.to_bytes();
    bytes.truncate(12 + 3 * 4);
    std::fs::write(dir.path().join("d.dfr"), bytes).unwrap();
    let err = read_manifest(&manifest(dir.path(), IDENTITY, "d.dfr", None)).unwrap_err();
    assert_eq!(err.kind(), "truncated");
}

#[test]
fn reflected_pose_names_the_frame() {
    let dir = tempfile::tempdir().unwrap();
    write_raster(dir.path(), "d.dfr", 2, 2, vec![1.0; 4]);
    let flip = "[1,0,0,0, 0,1,0,0, 0,0,-1,0, 0,0,0,1]";
    let err = read_manifest(&manifest(dir.path(), flip, "d.dfr", None)).unwrap_err();
    assert_eq!(err.kind(), "pose");
    assert_eq!(err.frame(), Some(0));
    assert!(err.to_string().starts_with("frame 0"));
}

#[test]
fn distinct_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let err = read_manifest(&p.join("absent.json")).unwrap_err();
    assert_eq!(err.kind(), "missing_file");

    let err = read_manifest(&manifest(p, IDENTITY, "absent.dfr", None)).unwrap_err();
    assert!(matches!(err, IoError::MissingFile { .. }));

    write_raster(p, "big.dfr", 3, 2, vec![1.0; 6]);
    let err = read_manifest(&manifest(p, IDENTITY, "big.dfr", None)).unwrap_err();
    assert_eq!(err.kind(), "dimension_mismatch");
    assert_eq!(err.frame(), Some(0));

    write_raster(p, "d.dfr", 2, 2, vec![1.0; 4]);
    let err = read_manifest(&manifest(p, "[1,0,0]", "d.dfr", None)).unwrap_err();
    assert_eq!(err.kind(), "pose");

    write_raster(p, "m.dfr", 2, 2, vec![0.0, 0.5, 1.0, 2.0]);
    let err = read_manifest(&manifest(p, IDENTITY, "d.dfr", Some("m.dfr"))).unwrap_err();
    assert_eq!(err.kind(), "frame");

    std::fs::write(p.join("bad.json"), "{not json").unwrap();
    assert_eq!(read_manifest(&p.join("bad.json")).unwrap_err().kind(), "parse");

    std::fs::write(p.join("v2.json"), r#"{"version": 2, "frames": []}"#).unwrap();
    assert_eq!(read_manifest(&p.join("v2.json")).unwrap_err().kind(), "version");
}

#[test]
fn written_manifests_reload() {
    let (mut scene, target) = SceneSpec::preset(ScenePreset::Box);
    scene.dynamic = Some(DynamicPrimitive {
        shape: Shape::Sphere { center: Vec3::new(0.3, 0.0, 1.0), radius: 0.1 },
        offsets: vec![Vec3::ZERO; 3],
    });
    let traj = TrajectorySpec::preset("orbit", 3, target).unwrap();
    let frames = render(&scene, &traj, &CameraIntrinsics::centered(20.0, 24, 24).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), &frames, Some(1.5)).unwrap();
    let back = read_manifest(&path).unwrap();
    assert_eq!(back.scene_scale, Some(1.5));
    for (a, b) in back.frames.iter().zip(frames.iter()) {
        assert_eq!(a.pose(), b.pose());
        assert_eq!(a.intrinsics(), b.intrinsics());
        assert_eq!(a.depth().valid(), b.depth().valid());
        assert_eq!(a.motion().unwrap().raster(), b.motion().unwrap().raster());
        for (x, y) in a.depth().values().as_slice().iter().zip(b.depth().values().as_slice()) {
            if y.is_finite() && *y > 0.0 {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }
}
