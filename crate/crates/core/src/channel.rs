//! Line-of-sight rate model and its concave lower bound in the UAV position.
//!
//! Rates here are spectral efficiencies in bps/Hz; callers multiply by the
//! bandwidth when assembling throughput or average-rate constraints.

use crate::geometry::Point;
use std::f64::consts::{LN_2, LOG2_E};

/// Channel-to-noise ratio `gamma0 / (H^2 + |q - u|^2)`.
pub fn channel_to_noise(q: Point, user: Point, gamma0: f64, altitude: f64) -> f64 {
    gamma0 / (altitude * altitude + q.dist_sq(user))
}

/// `share * log2(1 + power * ratio / share)`, extended by 0 at `share = 0`.
pub fn rate(share: f64, power: f64, ratio: f64) -> f64 {
    if share <= 0.0 {
        return 0.0;
    }
    let snr = power * ratio;
    if snr <= 0.0 {
        return 0.0;
    }
    let x = snr / share;
    if x.is_finite() {
        share * x.ln_1p() / LN_2
    } else {
        // share is subnormal-small: log(1 + c/a) ~ log c - log a
        share * (snr.ln() - share.ln()) / LN_2
    }
}

/// Rate at the UAV position `q` for a user at `user`.
pub fn rate_at(q: Point, user: Point, share: f64, power: f64, gamma0: f64, altitude: f64) -> f64 {
    rate(share, power, channel_to_noise(q, user, gamma0, altitude))
}

/// Spectral efficiency with the UAV directly above the user and the whole band.
pub fn zenith_rate(power: f64, gamma0: f64, altitude: f64) -> f64 {
    (power * gamma0 / (altitude * altitude)).ln_1p() / LN_2
}

/// First-order coefficients of the lower bound anchored at a local point.
///
/// The bound is `base_rate - slope * (|q - u|^2 - ref_sq_dist)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaCoefficients {
    pub base_rate: f64,
    pub slope: f64,
    pub ref_sq_dist: f64,
    /// `P gamma0 / share`; infinite in the limit `share -> 0`.
    pub epsilon: f64,
}

impl ScaCoefficients {
    pub fn zero() -> Self {
        Self { base_rate: 0.0, slope: 0.0, ref_sq_dist: 0.0, epsilon: 0.0 }
    }

    /// Surrogate value for a squared horizontal distance.
    pub fn eval_sq(&self, sq_dist: f64) -> f64 {
        self.base_rate - self.slope * (sq_dist - self.ref_sq_dist)
    }
}

pub fn sca_coefficients(
    q_local: Point,
    user: Point,
    share: f64,
    power: f64,
    gamma0: f64,
    altitude: f64,
) -> ScaCoefficients {
    if share <= 0.0 || power <= 0.0 {
        return ScaCoefficients::zero();
    }
    let d0 = q_local.dist_sq(user);
    let tau = altitude * altitude + d0;
    let epsilon = power * gamma0 / share;
    let base_rate = rate(share, power * gamma0, 1.0 / tau);
    // share * eps is P*gamma0 exactly; writing it that way stays finite as share -> 0.
    let slope = if epsilon.is_finite() {
        power * gamma0 * LOG2_E / (tau * (tau + epsilon))
    } else {
        0.0
    };
    ScaCoefficients { base_rate, slope, ref_sq_dist: d0, epsilon }
}

/// Concave lower bound of [`rate_at`] in `q`, tight at `q = q_local`.
pub fn sca_lower_bound(
    q: Point,
    q_local: Point,
    user: Point,
    share: f64,
    power: f64,
    gamma0: f64,
    altitude: f64,
) -> f64 {
    sca_coefficients(q_local, user, share, power, gamma0, altitude).eval_sq(q.dist_sq(user))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::RadioParams;

    #[test]
    fn zero_share_gives_zero() {
        assert_eq!(rate(0.0, 1.0, 1e6), 0.0);
        assert_eq!(rate(0.3, 0.0, 1e6), 0.0);
        let c = sca_coefficients(Point::new(10.0, 0.0), Point::default(), 0.0, 0.01, 1e7, 50.0);
        assert_eq!(c.eval_sq(1e6), 0.0);
    }

    #[test]
    fn tiny_share_is_finite_and_small() {
        let r = rate(1e-300, 0.01, 3e4);
        assert!(r.is_finite() && r >= 0.0 && r < 1e-290);
    }

    #[test]
    fn zenith_ratio_standard() {
        let radio = RadioParams::standard();
        let g = channel_to_noise(Point::new(3.0, 4.0), Point::new(3.0, 4.0), radio.gamma0(), radio.altitude_m);
        assert!((g - 10f64.powf(7.9) / 2500.0).abs() / g < 1e-12);
    }

    #[test]
    fn reflection_symmetry() {
        let u = Point::new(100.0, -20.0);
        let d = Point::new(37.0, 11.0);
        let a = channel_to_noise(u + d, u, 1e7, 50.0);
        let b = channel_to_noise(u - d, u, 1e7, 50.0);
        assert_eq!(a, b);
    }

    #[test]
    fn tangent_at_anchor() {
        let u = Point::new(0.0, 0.0);
        let ql = Point::new(300.0, -400.0);
        let exact = rate_at(ql, u, 0.4, 0.01, 7.9e7, 50.0);
        let lb = sca_lower_bound(ql, ql, u, 0.4, 0.01, 7.9e7, 50.0);
        assert!((exact - lb).abs() <= 1e-12 * exact);
    }
}
