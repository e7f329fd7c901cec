//! Shared palm-patch protocol.
//!
//! The guiding hand and the articulated body must lay out the *same* grid of
//! palm points so the hand-matching loss can pair them index-by-index. This
//! module owns that layout: a 9×11 grid (99 points) covering an 80×100 mm
//! palm/finger footprint, five fingertip probe offsets, the wrist-marker
//! offset, and the outer-palm anchor offset.
//!
//! Conventions (shared by both producers):
//! - The patch plane is spanned by the thumb axis `t` (rows, 9 samples over
//!   80 mm) and the finger axis `f` (columns, 11 samples over 100 mm), both
//!   orthogonal to the palm normal.
//! - The grid is centered on the wrist point, so every offset grid is
//!   symmetric under negating either axis; mirroring maps the point set to
//!   itself with the column-reversal index map ([`patch_mirror_index`]).
//! - All lengths here are protocol constants in meters; they deliberately do
//!   not scale with body stature so that body and hand grids always agree.

use crate::geometry::Vec3;

/// Rows of the palm grid, laid out along the thumb axis.
pub const PATCH_ROWS: usize = 9;
/// Columns of the palm grid, laid out along the finger axis.
pub const PATCH_COLS: usize = 11;
/// Total palm-patch points.
pub const PATCH_COUNT: usize = PATCH_ROWS * PATCH_COLS;
/// Grid spacing in meters (10 mm → 80 mm × 100 mm footprint).
pub const PATCH_SPACING: f64 = 0.01;
/// Number of fingertip probe points.
pub const FINGERTIP_COUNT: usize = 5;
/// Wrist markers sit at ± this offset along the thumb axis (meters).
pub const WRIST_MARKER_OFFSET: f64 = 0.02;
/// The second outer-palm anchor sits this far from the wrist along the
/// outward palm direction (meters).
pub const PALM_ANCHOR_OFFSET: f64 = 0.02;
/// Default palm-to-object clearance for a wrap grasp (meters).
pub const DEFAULT_CLEARANCE: f64 = 0.015;

/// (thumb-axis, finger-axis) offsets of the 99 grid points, row-major:
/// index = row·11 + col, row offset a = (row−4)·10 mm, col offset
/// b = (col−5)·10 mm.
pub fn patch_offsets() -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(PATCH_COUNT);
    for i in 0..PATCH_ROWS {
        let a = (i as f64 - 4.0) * PATCH_SPACING;
        for j in 0..PATCH_COLS {
            let b = (j as f64 - 5.0) * PATCH_SPACING;
            out.push((a, b));
        }
    }
    out
}

/// (thumb-axis, finger-axis) offsets of the five fingertip probes. They sit
/// on the thumb-axis line (finger offset 0), which is stable under the
/// mirror map.
pub fn fingertip_offsets() -> [(f64, f64); FINGERTIP_COUNT] {
    [(-0.04, 0.0), (-0.02, 0.0), (0.0, 0.0), (0.02, 0.0), (0.04, 0.0)]
}

/// Index map induced on the patch by negating the finger axis: row fixed,
/// column reversed. An involution.
pub fn patch_mirror_index(idx: usize) -> usize {
    debug_assert!(idx < PATCH_COUNT);
    let i = idx / PATCH_COLS;
    let j = idx % PATCH_COLS;
    i * PATCH_COLS + (PATCH_COLS - 1 - j)
}

/// World-space patch points for a palm centered at `wrist` with the given
/// thumb and finger axes.
pub fn palm_points(wrist: Vec3, thumb_axis: Vec3, finger_axis: Vec3) -> Vec<Vec3> {
    patch_offsets()
        .iter()
        .map(|&(a, b)| wrist + thumb_axis * a + finger_axis * b)
        .collect()
}

/// The two wrist markers: `wrist ± WRIST_MARKER_OFFSET · thumb_axis`,
/// ordered (+thumb, −thumb) so the pairing between body and hand markers is
/// fixed.
pub fn wrist_markers(wrist: Vec3, thumb_axis: Vec3) -> [Vec3; 2] {
    [
        wrist + thumb_axis * WRIST_MARKER_OFFSET,
        wrist - thumb_axis * WRIST_MARKER_OFFSET,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_grid_dimensions_and_footprint() {
        let offs = patch_offsets();
        assert_eq!(offs.len(), 99);
        let a_min = offs.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
        let a_max = offs.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max);
        let b_min = offs.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let b_max = offs.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        // 80 mm across the thumb axis, 100 mm across the finger axis.
        assert!((a_max - a_min - 0.08).abs() < 1e-15);
        assert!((b_max - b_min - 0.10).abs() < 1e-15);
        // Centered: symmetric extremes.
        assert_eq!(a_max, -a_min);
        assert_eq!(b_max, -b_min);
    }

    #[test]
    fn mirror_index_is_involution_and_negates_finger_offset() {
        let offs = patch_offsets();
        for idx in 0..PATCH_COUNT {
            let m = patch_mirror_index(idx);
            assert_eq!(patch_mirror_index(m), idx);
            assert_eq!(offs[idx].0, offs[m].0);
            assert_eq!(offs[idx].1, -offs[m].1);
        }
    }

    #[test]
    fn fingertips_lie_on_thumb_axis_and_are_sign_symmetric() {
        let tips = fingertip_offsets();
        assert_eq!(tips.len(), 5);
        for &(a, b) in &tips {
            assert_eq!(b, 0.0);
            assert!(tips.iter().any(|&(a2, _)| a2 == -a));
        }
    }

    #[test]
    fn palm_points_match_manual_layout() {
        let w = Vec3::new(1.0, 2.0, 3.0);
        let t = Vec3::new(0.0, 0.0, 1.0);
        let f = Vec3::new(0.0, 1.0, 0.0);
        let pts = palm_points(w, t, f);
        assert_eq!(pts.len(), 99);
        // Row 0, col 0: a=-0.04, b=-0.05.
        assert!((pts[0] - Vec3::new(1.0, 1.95, 2.96)).norm() < 1e-15);
        // Center point is the wrist itself.
        assert!((pts[4 * 11 + 5] - w).norm() < 1e-15);
        let markers = wrist_markers(w, t);
        assert!((markers[0] - Vec3::new(1.0, 2.0, 3.02)).norm() < 1e-15);
        assert!((markers[1] - Vec3::new(1.0, 2.0, 2.98)).norm() < 1e-15);
    }
}
