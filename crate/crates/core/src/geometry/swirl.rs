use core::f64::consts::PI;

fn rotate(z: [f64; 2], sign: f64) -> [f64; 2] {
    let angle = sign * libm::sin(PI * libm::hypot(z[0], z[1]));
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    [c * z[0] - s * z[1], s * z[0] + c * z[1]]
}

/// Rotate `z` about the origin by `sin(π‖z‖)`.
pub fn swirl(z: [f64; 2]) -> [f64; 2] {
    rotate(z, 1.0)
}

/// Inverse of [`swirl`]: the angle depends only on the norm, which the
/// rotation preserves.
pub fn swirl_inverse(z: [f64; 2]) -> [f64; 2] {
    rotate(z, -1.0)
}
