//! ASCII PLY export for colored point clouds.

use super::vec3::Vec3;
use std::fmt::Write as _;

/// Serializes points with RGB colors as an ASCII PLY point cloud.
pub fn write_point_cloud_ply(points: &[(Vec3, [u8; 3])]) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    writeln!(out, "element vertex {}", points.len()).unwrap();
    out.push_str(
        "property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\n\
         end_header\n",
    );
    for (p, [r, g, b]) in points {
        writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, r, g, b).unwrap();
    }
    out
}

/// Maps `t` in [0, 1] to a blue-to-red heat color (low = blue, high = red).
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    let g = (80.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8;
    [r, g, b]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ply_header_and_rows() {
        let pts = vec![
            (Vec3::new(0.0, 1.0, 2.0), [255u8, 0, 0]),
            (Vec3::new(-1.5, 0.25, 0.0), [0u8, 0, 255]),
        ];
        let s = write_point_cloud_ply(&pts);
        assert!(s.starts_with("ply\nformat ascii 1.0\nelement vertex 2\n"));
        assert!(s.contains("0 1 2 255 0 0\n"));
        assert!(s.contains("-1.5 0.25 0 0 0 255\n"));
    }

    #[test]
    fn heat_color_endpoints() {
        assert_eq!(heat_color(0.0), [0, 0, 255]);
        assert_eq!(heat_color(1.0), [255, 0, 0]);
    }
}
