//! Quasi-uniform unit directions on the sphere.

use super::vec3::Vec3;

/// `n` quasi-uniform unit directions from a Fibonacci lattice.
///
/// Deterministic for a fixed `n`: point `i` sits at height
/// `z = 1 - (2i+1)/n` and azimuth `i` times the golden angle.
pub fn sphere_directions(n: usize) -> Vec<Vec3> {
    assert!(n > 0, "need at least one direction");
    if n == 1 {
        return vec![Vec3::new(0.0, 0.0, 1.0)];
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
