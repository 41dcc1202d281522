//! Deterministic JSON reports.
//!
//! Objects are `serde_json` maps, which keep keys sorted, and floats are
//! printed as the shortest decimal that round-trips. A non-finite or
//! undefined number is written as `null` next to a `<key>_null_reason`
//! string.

use serde_json::{Map, Value};

use geocons_core::fusion::{DenoiseOrder, FusionConfig, VoxelSize};
use geocons_core::geo_loss::{FrameLoss, GeoLoss, GeoLossConfig, SplatMode};
use geocons_core::metrics::{MetricsConfig, Mvcs, ReprojectionError};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default)]
pub struct Object(Map<String, Value>);

impl Object {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.0.insert(key.to_owned(), value.into());
        self
    }

    /// Inserts `value`, or `null` plus a reason when it is missing or not finite.
    pub fn number(&mut self, key: &str, value: Option<f64>, reason: &str) -> &mut Self {
        match value.filter(|v| v.is_finite()) {
            Some(v) => self.set(key, v),
            None => {
                let why = match value {
                    Some(v) => format!("{reason} (value was {v})"),
                    None => reason.to_owned(),
                };
                self.set(key, Value::Null).set(&format!("{key}_null_reason"), why)
            }
        }
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

impl From<Object> for Value {
    fn from(o: Object) -> Value {
        o.into_value()
    }
}

pub fn to_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

/// Common envelope: tool identity, config echo and input digests.
pub fn envelope(command: &str, config: Object, digests: &[(String, String)]) -> Object {
    let mut tool = Object::new();
    tool.set("name", TOOL).set("version", VERSION);
    let inputs: Vec<Value> = digests
        .iter()
        .map(|(p, d)| {
            let mut o = Object::new();
            o.set("path", p.as_str()).set("sha256", d.as_str());
            o.into_value()
        })
        .collect();
    let mut out = Object::new();
    out.set("command", command)
        .set("config", config)
        .set("inputs", inputs)
        .set("tool", tool);
    out
}

pub fn fusion_config(cfg: &FusionConfig) -> Object {
    let mut o = Object::new();
    match cfg.voxel {
        VoxelSize::Disabled => o.set("voxel", "disabled"),
        VoxelSize::Absolute(s) => o.set("voxel", s),
        VoxelSize::RelativeToDiagonal(r) => o.set("voxel_relative_to_diagonal", r),
    };
    o.set("remove_outliers", cfg.remove_outliers)
        .set("outlier_k", cfg.outlier_k as u64)
        .set("outlier_std_ratio", cfg.outlier_std_ratio)
        .set(
            "order",
            match cfg.order {
                DenoiseOrder::OutliersThenVoxel => "outliers_then_voxel",
                DenoiseOrder::VoxelThenOutliers => "voxel_then_outliers",
            },
        );
    o
}

pub fn loss_config(cfg: &GeoLossConfig) -> Object {
    let mut o = Object::new();
    o.set("delta", cfg.delta)
        .set("dynamic_threshold", cfg.dynamic_threshold)
        .set("prob_similarity", cfg.prob_similarity)
        .set("neighbor_radius", cfg.neighbor_radius as u64)
        .set(
            "splat",
            match cfg.splat {
                SplatMode::Average => "average",
                SplatMode::NearestDepth => "nearest_depth",
            },
        );
    o
}

pub fn metrics_config(cfg: &MetricsConfig) -> Object {
    let mut o = Object::new();
    o.set("mvcs_rel_tol", cfg.mvcs_rel_tol)
        .set("neighbor_offsets", cfg.neighbor_offsets.clone())
        .set("dynamic_threshold", cfg.dynamic_threshold);
    o
}

fn frame_loss(i: usize, f: &FrameLoss) -> Value {
    let mut o = Object::new();
    o.set("frame", i as u64)
        .set("loss", f.loss)
        .set("valid_pixels", f.valid_pixels as u64)
        .set("static_pixels", f.static_pixels as u64)
        .set("considered_pixels", f.considered_pixels as u64)
        .set("clipped_pixels", f.clipped_pixels as u64)
        .number("hit_rate", f.hit_rate(), "frame has no static valid pixels")
        .number("clipped_fraction", f.clipped_fraction(), "no pixel received a cloud point");
    o.into_value()
}

pub fn loss_result(loss: &GeoLoss, fused_points: usize) -> Object {
    let mut o = Object::new();
    o.number("l_geo", Some(loss.loss), "loss is not finite")
        .set("fused_points", fused_points as u64)
        .set(
            "empty_frames",
            loss.empty_frames().into_iter().map(|i| i as u64).collect::<Vec<_>>(),
        )
        .set(
            "per_frame",
            loss.per_frame.iter().enumerate().map(|(i, f)| frame_loss(i, f)).collect::<Vec<_>>(),
        );
    o
}

pub fn mvcs_result(m: &Mvcs) -> Object {
    let mut o = Object::new();
    o.set("score", m.score)
        .set("consistent", m.consistent)
        .set("in_bounds", m.in_bounds)
        .set(
            "pairs",
            m.pairs
                .iter()
                .map(|p| {
                    let mut o = Object::new();
                    o.set("source", p.source as u64)
                        .set("target", p.target as u64)
                        .set("consistent", p.consistent)
                        .set("in_bounds", p.in_bounds);
                    o.into_value()
                })
                .collect::<Vec<_>>(),
        );
    o
}

pub fn reprojection_result(r: &ReprojectionError) -> Object {
    let mut o = Object::new();
    o.set("mean", r.mean).set("fused_points", r.fused_points as u64).set(
        "per_frame",
        r.per_frame
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut o = Object::new();
                o.set("frame", i as u64)
                    .set("pixels", f.pixels)
                    .number("mean", f.mean(), "no pixel of this frame was measured");
                o.into_value()
            })
            .collect::<Vec<_>>(),
    );
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_with_reason() {
        let mut o = Object::new();
        o.number("a", Some(f64::NAN), "bad").number("b", Some(0.1), "unused").number("c", None, "missing");
        assert_eq!(
            serde_json::to_string(&o.into_value()).unwrap(),
            r#"{"a":null,"a_null_reason":"bad (value was NaN)","b":0.1,"c":null,"c_null_reason":"missing"}"#
        );
    }
}
