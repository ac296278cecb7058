//! Camera poses and rotation helpers.
//!
//! Waypoints live in a 4-DoF space: a world-frame position plus a yaw about the
//! world z axis. Roll and pitch are fixed at zero throughout the pipeline; the
//! quaternion type exists so rotation distances can be expressed on SO(3).

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the quaternion norm accepted by [`UnitQuaternion::new`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite angle {theta}")));
    }
    Ok(wrap(theta))
}

/// Infallible wrap for angles already known to be finite.
pub fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Camera waypoint: position in meters plus yaw in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose")]
pub struct Pose4 {
    pub p: Vector3<f64>,
    pub theta: f64,
}

#[derive(Deserialize)]
struct RawPose {
    p: [f64; 3],
    theta: f64,
}

impl TryFrom<RawPose> for Pose4 {
    type Error = Error;

    fn try_from(raw: RawPose) -> Result<Self> {
        Pose4::new(Vector3::from(raw.p), raw.theta)
    }
}

impl Pose4 {
    /// Builds a pose, wrapping `theta`. Rejects non-finite components.
    pub fn new(p: Vector3<f64>, theta: f64) -> Result<Self> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite position [{}, {}, {}]",
                p.x, p.y, p.z
            )));
        }
        Ok(Pose4 {
            p,
            theta: wrap_angle(theta)?,
        })
    }

    pub fn from_xyz(x: f64, y: f64, z: f64, theta: f64) -> Result<Self> {
        Self::new(Vector3::new(x, y, z), theta)
    }

    /// Unit viewing direction in the horizontal plane.
    pub fn forward(&self) -> Vector3<f64> {
        Vector3::new(self.theta.cos(), self.theta.sin(), 0.0)
    }

    pub fn quaternion(&self) -> UnitQuaternion {
        yaw_to_quat_unchecked(self.theta)
    }
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    /// Accepts components whose norm is within [`UNIT_NORM_TOL`] of one.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = UnitQuaternion { w, x, y, z };
        q.check()?;
        Ok(q)
    }

    pub fn identity() -> Self {
        UnitQuaternion {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes arbitrary nonzero components.
    pub fn normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero or non-finite quaternion".into(),
            ));
        }
        Ok(UnitQuaternion {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn neg(&self) -> Self {
        UnitQuaternion {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "quaternion norm {n} is not 1"
            )));
        }
        Ok(())
    }
}

/// Rotation of `theta` about the world z axis.
pub fn yaw_to_quat(theta: f64) -> Result<UnitQuaternion> {
    if !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite yaw {theta}")));
    }
    Ok(yaw_to_quat_unchecked(theta))
}

fn yaw_to_quat_unchecked(theta: f64) -> UnitQuaternion {
    let half = 0.5 * theta;
    UnitQuaternion {
        w: half.cos(),
        x: 0.0,
        y: 0.0,
        z: half.sin(),
    }
}

/// Geodesic angle on SO(3) between two rotations, in `[0, π]`.
///
/// Computed from the relative rotation `conj(a) * b` as
/// `2·atan2(|vec|, |w|)`, which stays accurate near zero and π and
/// identifies `q` with `-q`.
pub fn rot_distance(a: &UnitQuaternion, b: &UnitQuaternion) -> Result<f64> {
    a.check()?;
    b.check()?;
    // conj(a) * b
    let w = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
    let x = a.w * b.x - a.x * b.w - a.y * b.z + a.z * b.y;
    let y = a.w * b.y + a.x * b.z - a.y * b.w - a.z * b.x;
    let z = a.w * b.z - a.x * b.y + a.y * b.x - a.z * b.w;
    let v = (x * x + y * y + z * z).sqrt();
    Ok(2.0 * v.atan2(w.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(wrap_angle(TAU).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(PI + 0.1).unwrap(), -PI + 0.1, epsilon = 1e-12);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn yaw_quaternion_examples() {
        let q = yaw_to_quat(0.0).unwrap().components();
        assert_eq!(q, [1.0, 0.0, 0.0, 0.0]);

        let q = yaw_to_quat(PI).unwrap().components();
        assert_abs_diff_eq!(q[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[3], 1.0, epsilon = 1e-15);

        let q = yaw_to_quat(PI / 2.0).unwrap().components();
        let c = (PI / 4.0).cos();
        let s = (PI / 4.0).sin();
        assert_abs_diff_eq!(q[0], c, epsilon = 1e-15);
        assert_abs_diff_eq!(q[3], s, epsilon = 1e-15);
        assert!(yaw_to_quat(f64::NAN).is_err());
    }

    #[test]
    fn rotation_distance_examples() {
        let q = UnitQuaternion::normalize(0.3, -0.2, 0.7, 0.1).unwrap();
        assert_abs_diff_eq!(rot_distance(&q, &q).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rot_distance(&q, &q.neg()).unwrap(), 0.0, epsilon = 1e-15);
        let a = yaw_to_quat(0.0).unwrap();
        let b = yaw_to_quat(PI / 2.0).unwrap();
        assert_abs_diff_eq!(rot_distance(&a, &b).unwrap(), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(UnitQuaternion::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(UnitQuaternion::new(1.0, 0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn pose_json_wraps_theta() {
        let p: Pose4 = serde_json::from_str(r#"{"p":[1,2,3],"theta":7.0}"#).unwrap();
        assert_abs_diff_eq!(p.theta, 7.0 - TAU, epsilon = 1e-12);
        let back = serde_json::to_string(&p).unwrap();
        let again: Pose4 = serde_json::from_str(&back).unwrap();
        assert_eq!(p, again);
    }

    fn unit_quat() -> impl Strategy<Value = UnitQuaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::normalize(w, x, y, z).unwrap())
    }

    proptest! {
        #[test]
        fn yaw_distance_matches_wrapped_difference(a in -20.0..20.0f64, b in -20.0..20.0f64) {
            let d = rot_distance(&yaw_to_quat(a).unwrap(), &yaw_to_quat(b).unwrap()).unwrap();
            let expected = wrap_angle(a - b).unwrap().abs();
            prop_assert!((d - expected).abs() <= 1e-9, "{d} vs {expected}");
        }

        #[test]
        fn wrap_is_idempotent_and_congruent(x in -1e4..1e4f64) {
            let w = wrap_angle(x).unwrap();
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            let k = ((x - w) / TAU).round();
            prop_assert!((x - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn rotation_distance_is_a_metric(a in unit_quat(), b in unit_quat(), c in unit_quat()) {
            let ab = rot_distance(&a, &b).unwrap();
            let ba = rot_distance(&b, &a).unwrap();
            let bc = rot_distance(&b, &c).unwrap();
            let ac = rot_distance(&a, &c).unwrap();
            prop_assert!((0.0..=PI + 1e-12).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
