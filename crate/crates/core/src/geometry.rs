//! Directional camera sensing model.
//!
//! A camera sees a closed angular sector `[theta_min, theta_min + fov]`
//! (degrees, counter-clockwise from +x) and its detection confidence decays
//! as `exp(-eta * r)` up to a hard range cutoff `r_max`. Everything in this
//! module is a pure function over `Copy` values.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rotation granularity of a camera, in degrees.
pub const ROTATION_STEP_DEG: f64 = 30.0;

/// Slack applied to closed-interval angle comparisons so that boundary
/// azimuths produced by `atan2` still count as inside.
const ANGLE_EPS_DEG: f64 = 1e-9;

/// A point or displacement in the plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (other - self).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector pointing at `deg` degrees.
    pub fn from_angle_deg(deg: f64) -> Self {
        let rad = deg.to_radians();
        Self::new(rad.cos(), rad.sin())
    }

    /// Linear interpolation `self + (other - self) * t`.
    pub fn lerp(self, other: Vec2, t: f64) -> Self {
        self + (other - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Range and azimuth of a target as seen from a sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarOffset {
    pub r: f64,
    /// Degrees in `[0, 360)`.
    pub theta: f64,
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let v = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if v >= 360.0 {
        0.0
    } else {
        v
    }
}

/// Sensing parameters shared by every camera of a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingParams {
    /// Field of view in degrees.
    pub fov: f64,
    /// Hard detection range in meters.
    pub r_max: f64,
    /// Exponential range-decay rate in 1/m.
    pub eta: f64,
    /// Minimum confidence for a valid detection report.
    pub p_th: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            fov: 60.0,
            r_max: 3.0,
            eta: 1.0,
            p_th: (-0.5f64).exp(),
        }
    }
}

impl SensingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov <= 360.0) {
            return Err(Error::config("sensing.fov", "must lie in (0, 360]"));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(Error::config(
                "sensing.r_max",
                "must be positive and finite",
            ));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "sensing.eta",
                "must be non-negative and finite",
            ));
        }
        if !(0.0..=1.0).contains(&self.p_th) {
            return Err(Error::config("sensing.p_th", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Pose of a camera at `position` whose sector is centred on `bisector_deg`.
    pub fn pose_facing(&self, position: Vec2, bisector_deg: f64) -> SensorPose {
        SensorPose {
            position,
            theta_min: normalize_deg(bisector_deg - self.fov / 2.0),
            fov: self.fov,
            r_max: self.r_max,
            eta: self.eta,
        }
    }
}

/// Placement and optics of one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub position: Vec2,
    /// Start of the sector, degrees in `[0, 360)`.
    pub theta_min: f64,
    /// Sector width in degrees, `(0, 360]`.
    pub fov: f64,
    pub r_max: f64,
    pub eta: f64,
}

impl SensorPose {
    pub fn new(position: Vec2, theta_min: f64, fov: f64, r_max: f64, eta: f64) -> Result<Self> {
        if !position.is_finite() {
            return Err(Error::config("pose.position", "must be finite"));
        }
        let pose = Self {
            position,
            theta_min: normalize_deg(theta_min),
            fov,
            r_max,
            eta,
        };
        SensingParams {
            fov,
            r_max,
            eta,
            p_th: 0.0,
        }
        .validate()?;
        Ok(pose)
    }

    /// End of the sector, wrapped into `[0, 360)`.
    pub fn theta_max(&self) -> f64 {
        normalize_deg(self.theta_min + self.fov)
    }

    /// Direction of the sector's centre line.
    pub fn bisector(&self) -> f64 {
        normalize_deg(self.theta_min + self.fov / 2.0)
    }
}

/// Range and azimuth of `target` relative to the sensor position.
///
/// A target on top of the sensor maps to `r = 0, theta = 0`.
pub fn to_polar(sensor: &SensorPose, target: Vec2) -> PolarOffset {
    let d = target - sensor.position;
    let r = d.norm();
    if r == 0.0 {
        return PolarOffset { r: 0.0, theta: 0.0 };
    }
    PolarOffset {
        r,
        theta: normalize_deg(d.y.atan2(d.x).to_degrees()),
    }
}

/// Whether azimuth `theta_o` falls in the closed sector of `pose`,
/// including sectors that wrap through 0°.
pub fn angular_mask(pose: &SensorPose, theta_o: f64) -> bool {
    if pose.fov >= 360.0 {
        return true;
    }
    let offset = normalize_deg(theta_o - pose.theta_min);
    offset <= pose.fov + ANGLE_EPS_DEG || offset >= 360.0 - ANGLE_EPS_DEG
}

/// Range-only confidence: `exp(-eta r)` on `[0, r_max]`, zero beyond.
pub fn range_decay(r: f64, eta: f64, r_max: f64) -> f64 {
    if (0.0..=r_max).contains(&r) {
        (-eta * r).exp()
    } else {
        0.0
    }
}

/// Confidence of a single-TTI observation of `target`.
pub fn sensing_power(pose: &SensorPose, target: Vec2) -> f64 {
    let polar = to_polar(pose, target);
    if polar.r > pose.r_max || !angular_mask(pose, polar.theta) {
        return 0.0;
    }
    range_decay(polar.r, pose.eta, pose.r_max)
}

/// Largest per-sample confidence over a sampled path; `0` for an empty path.
pub fn trajectory_confidence<I>(pose: &SensorPose, positions: I) -> f64
where
    I: IntoIterator<Item = Vec2>,
{
    positions
        .into_iter()
        .map(|p| sensing_power(pose, p))
        .fold(0.0, f64::max)
}

/// Turns the camera by `steps` increments of 30°. Returns the new pose and
/// the number of increments to be paid for.
pub fn rotate_pose(pose: &SensorPose, steps: i32) -> (SensorPose, u32) {
    let rotated = SensorPose {
        theta_min: normalize_deg(pose.theta_min + f64::from(steps) * ROTATION_STEP_DEG),
        ..*pose
    };
    (rotated, steps.unsigned_abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(theta_min: f64, fov: f64) -> SensorPose {
        SensorPose::new(Vec2::ZERO, theta_min, fov, 3.0, 1.0).unwrap()
    }

    #[test]
    fn polar_axis_aligned() {
        let p = pose(0.0, 60.0);
        let a = to_polar(&p, Vec2::new(1.0, 0.0));
        assert_eq!((a.r, a.theta), (1.0, 0.0));
        let b = to_polar(&p, Vec2::new(0.0, 2.0));
        assert_eq!(b.r, 2.0);
        assert!((b.theta - 90.0).abs() < 1e-12);
        let at = SensorPose::new(Vec2::new(1.0, 1.0), 0.0, 60.0, 3.0, 1.0).unwrap();
        let c = to_polar(&at, Vec2::new(1.0, 1.0));
        assert_eq!((c.r, c.theta), (0.0, 0.0));
    }

    #[test]
    fn mask_interior_exterior_and_wrap() {
        assert!(angular_mask(&pose(0.0, 60.0), 30.0));
        assert!(!angular_mask(&pose(0.0, 60.0), 61.0));
        assert!(angular_mask(&pose(330.0, 60.0), 10.0));
        // closed at both ends
        assert!(angular_mask(&pose(330.0, 60.0), 330.0));
        assert!(angular_mask(&pose(330.0, 60.0), 30.0));
    }

    #[test]
    fn wrap_arc_matches_degree_enumeration() {
        let p = pose(330.0, 60.0);
        for d in 0..360 {
            let expected = d >= 330 || d <= 30;
            assert_eq!(angular_mask(&p, f64::from(d)), expected, "deg {d}");
        }
    }

    #[test]
    fn range_decay_values() {
        assert_eq!(range_decay(0.0, 1.0, 3.0), 1.0);
        assert_eq!(range_decay(3.1, 1.0, 3.0), 0.0);
        assert!((range_decay(0.5, 1.0, 3.0) - 0.606_530_659_712_633).abs() < 1e-12);
        // closed at r_max
        assert_eq!(range_decay(3.0, 1.0, 3.0), (-3.0f64).exp());
    }

    #[test]
    fn sensing_power_cases() {
        let p = pose(0.0, 60.0);
        let inside = Vec2::from_angle_deg(30.0) * 0.5;
        assert!((sensing_power(&p, inside) - (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(sensing_power(&p, Vec2::new(-0.5, 0.0)), 0.0);
        assert_eq!(sensing_power(&p, Vec2::from_angle_deg(30.0) * 3.2), 0.0);
    }

    #[test]
    fn trajectory_confidence_cases() {
        let p = pose(0.0, 60.0);
        assert_eq!(trajectory_confidence(&p, Vec::new()), 0.0);
        let behind = [Vec2::new(-1.0, 0.0), Vec2::new(-1.0, 1.0)];
        assert_eq!(trajectory_confidence(&p, behind), 0.0);
        let single = [Vec2::new(-1.0, 0.0), Vec2::new(0.2, 0.0)];
        assert!((trajectory_confidence(&p, single) - 0.818_730_753_077_981_8).abs() < 1e-12);
    }

    #[test]
    fn rotation() {
        let p = pose(0.0, 60.0);
        assert_eq!(rotate_pose(&p, 0), (p, 0));
        let (q, n) = rotate_pose(&p, 2);
        assert_eq!((q.theta_min, n), (60.0, 2));
        let (q, n) = rotate_pose(&pose(350.0, 60.0), 1);
        assert!((q.theta_min - 20.0).abs() < 1e-12);
        assert_eq!(n, 1);
        let (q, n) = rotate_pose(&p, -3);
        assert_eq!((q.theta_min, n), (270.0, 3));
    }

    #[test]
    fn rejects_bad_pose() {
        assert!(SensorPose::new(Vec2::ZERO, 0.0, 0.0, 3.0, 1.0).is_err());
        assert!(SensorPose::new(Vec2::ZERO, 0.0, 60.0, -1.0, 1.0).is_err());
        assert!(SensorPose::new(Vec2::new(f64::NAN, 0.0), 0.0, 60.0, 3.0, 1.0).is_err());
    }
}
