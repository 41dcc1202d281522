//! PLY export of fused point clouds.

use std::io::Write;

use geocons_core::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlyFormat {
    #[default]
    BinaryLittleEndian,
    Ascii,
}

/// Serializes `cloud` with float `x y z` and, if requested, a float
/// `motion_prob` property.
pub fn write_ply<W: Write>(out: &mut W, cloud: &PointCloud, format: PlyFormat, motion_prob: bool) -> std::io::Result<()> {
    let fmt = match format {
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
        PlyFormat::Ascii => "ascii",
    };
    write!(out, "ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len())?;
    out.write_all(b"property float x\nproperty float y\nproperty float z\n")?;
    if motion_prob {
        out.write_all(b"property float motion_prob\n")?;
    }
    out.write_all(b"end_header\n")?;
    for (p, prob) in cloud.points().iter().zip(cloud.motion_prob()) {
        let mut row = vec![p.x as f32, p.y as f32, p.z as f32];
        if motion_prob {
            row.push(*prob as f32);
        }
        match format {
            PlyFormat::BinaryLittleEndian => {
                for v in row {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            PlyFormat::Ascii => {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use geocons_core::Vec3;

    #[test]
    fn ascii_layout() {
        let cloud = PointCloud::from_points(vec![Vec3::new(1.0, 2.5, -3.0)]);
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud, PlyFormat::Ascii, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 1\n"));
        assert!(text.ends_with("end_header\n1 2.5 -3 0\n"));
    }

    #[test]
    fn binary_size() {
        let cloud = PointCloud::from_points(vec![Vec3::ZERO; 3]);
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud, PlyFormat::BinaryLittleEndian, false).unwrap();
        let header = buf.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(buf.len() - header, 3 * 12);
    }
}
