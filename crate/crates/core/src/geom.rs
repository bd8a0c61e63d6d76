//! Vector, quaternion and rigid pose algebra.
//!
//! Everything here is plain `f64` arithmetic with a fixed evaluation order so
//! that results are bit-reproducible across runs. Quaternions are stored as
//! `w, x, y, z` and kept on the `w >= 0` hemisphere.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm below which a vector or quaternion is considered degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeomError {
    #[error("degenerate vector (norm below {DEGENERATE_NORM:e})")]
    DegenerateVector,
    #[error("degenerate quaternion (norm below {DEGENERATE_NORM:e})")]
    DegenerateQuaternion,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Result<Vec3, GeomError> {
        let n = self.norm();
        if !(n >= DEGENERATE_NORM) {
            return Err(GeomError::DegenerateVector);
        }
        Ok(self / n)
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn clamp(self, lo: Vec3, hi: Vec3) -> Vec3 {
        Vec3::new(
            self.x.clamp(lo.x, hi.x),
            self.y.clamp(lo.y, hi.y),
            self.z.clamp(lo.z, hi.z),
        )
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Component by axis index (0, 1, 2).
    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {i} out of range"),
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// `d_L2`: Euclidean distance between two points.
pub fn euclidean_distance(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm()
}

/// `d_cos`: cosine of the angle between two directions, in `[-1, 1]`.
pub fn cosine_similarity(u: Vec3, v: Vec3) -> Result<f64, GeomError> {
    let nu = u.norm();
    let nv = v.norm();
    if !(nu >= DEGENERATE_NORM && nv >= DEGENERATE_NORM) {
        return Err(GeomError::DegenerateVector);
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unit quaternion in `w, x, y, z` order on the canonical hemisphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = GeomError;
    fn try_from(a: [f64; 4]) -> Result<Self, GeomError> {
        quat_normalize(a)
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

/// Normalizes four raw components into a canonical unit quaternion.
///
/// The sign is fixed so that `w > 0`, or when `w == 0` the first nonzero of
/// `x, y, z` is positive.
pub fn quat_normalize(raw: [f64; 4]) -> Result<UnitQuat, GeomError> {
    if raw.iter().any(|c| !c.is_finite()) {
        return Err(GeomError::DegenerateQuaternion);
    }
    // Pre-scale so huge components do not overflow the sum of squares.
    let scale = raw.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Err(GeomError::DegenerateQuaternion);
    }
    let s = [raw[0] / scale, raw[1] / scale, raw[2] / scale, raw[3] / scale];
    let n = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + s[3] * s[3]).sqrt();
    if !(n * scale >= DEGENERATE_NORM) {
        return Err(GeomError::DegenerateQuaternion);
    }
    Ok(UnitQuat::canonical(s[0] / n, s[1] / n, s[2] / n, s[3] / n))
}

/// Norm of four raw quaternion components.
pub fn quat_norm(raw: [f64; 4]) -> f64 {
    let scale = raw.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s = raw.map(|c| c / scale);
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + s[3] * s[3]).sqrt() * scale
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        // Adding 0.0 turns -0.0 into +0.0 so equal rotations serialize equally.
        if flip {
            Self { w: -w + 0.0, x: -x + 0.0, y: -y + 0.0, z: -z + 0.0 }
        } else {
            Self { w: w + 0.0, x: x + 0.0, y: y + 0.0, z: z + 0.0 }
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis`. A zero axis gives identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Ok(a) = axis.normalized() else {
            return Self::IDENTITY;
        };
        let (s, c) = (angle * 0.5).sin_cos();
        Self::canonical(c, a.x * s, a.y * s, a.z * s)
    }

    /// Intrinsic X-then-Y-then-Z rotation: `Rx(a) * Ry(b) * Rz(c)`.
    pub fn from_euler_xyz(angles: Vec3) -> Self {
        let qx = Self::from_axis_angle(Vec3::X, angles.x);
        let qy = Self::from_axis_angle(Vec3::Y, angles.y);
        let qz = Self::from_axis_angle(Vec3::Z, angles.z);
        qx.mul(qy).mul(qz)
    }

    /// Inverse of [`UnitQuat::from_euler_xyz`]; the middle angle is in `[-pi/2, pi/2]`.
    pub fn to_euler_xyz(self) -> Vec3 {
        let m = self.to_matrix();
        let b = m[0][2].clamp(-1.0, 1.0).asin();
        let a = (-m[1][2]).atan2(m[2][2]);
        let c = (-m[0][1]).atan2(m[0][0]);
        Vec3::new(a, b, c)
    }

    /// Exponential map: rotation of `|v|` radians about `v`.
    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            return Self::IDENTITY;
        }
        Self::from_axis_angle(v / angle, angle)
    }

    /// Logarithm map, the inverse of [`UnitQuat::from_rotation_vector`] with
    /// angle in `[0, pi]`.
    pub fn to_rotation_vector(self) -> Vec3 {
        let (axis, angle) = self.to_axis_angle();
        axis * angle
    }

    /// Rotation angle in `[0, pi]` and unit axis (x axis for the identity).
    pub fn to_axis_angle(self) -> (Vec3, f64) {
        let v = Vec3::new(self.x, self.y, self.z);
        let s = v.norm();
        if s < DEGENERATE_NORM {
            return (Vec3::X, 0.0);
        }
        let angle = 2.0 * s.atan2(self.w);
        (v / s, angle)
    }

    /// Hamilton product `self * o`, renormalized and canonicalized.
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, o: UnitQuat) -> UnitQuat {
        let w = self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z;
        let x = self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y;
        let y = self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x;
        let z = self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w;
        quat_normalize([w, x, y, z]).unwrap_or(Self::IDENTITY)
    }

    pub fn conjugate(self) -> UnitQuat {
        Self::canonical(self.w, -self.x, -self.y, -self.z)
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        quat_rotate(self, v)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Angle in `[0, pi]` of the rotation taking `self` to `o`.
    pub fn angle_to(self, o: UnitQuat) -> f64 {
        let d = (self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z).abs();
        2.0 * d.min(1.0).acos()
    }
}

pub fn quat_rotate(q: UnitQuat, v: Vec3) -> Vec3 {
    // v' = v + 2w (u x v) + 2 u x (u x v)
    let u = Vec3::new(q.x, q.y, q.z);
    let t = u.cross(v) * 2.0;
    v + t * q.w + u.cross(t)
}

/// Applies an intrinsic X, Y, Z incremental rotation of `delta` radians to `q`.
pub fn euler_increment(q: UnitQuat, delta: Vec3) -> UnitQuat {
    q.mul(UnitQuat::from_euler_xyz(delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub pos: Vec3,
    pub rot: UnitQuat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { pos: Vec3::ZERO, rot: UnitQuat::IDENTITY };

    pub const fn new(pos: Vec3, rot: UnitQuat) -> Self {
        Self { pos, rot }
    }

    pub const fn translation(pos: Vec3) -> Self {
        Self { pos, rot: UnitQuat::IDENTITY }
    }

    pub const fn rotation(rot: UnitQuat) -> Self {
        Self { pos: Vec3::ZERO, rot }
    }

    pub fn compose(self, local: Pose) -> Pose {
        pose_compose(self, local)
    }

    pub fn inverse(self) -> Pose {
        pose_inverse(self)
    }

    pub fn transform_point(self, p: Vec3) -> Vec3 {
        self.pos + self.rot.rotate(p)
    }
}

/// `parent * local`: the pose of `local` expressed in the parent's outer frame.
pub fn pose_compose(parent: Pose, local: Pose) -> Pose {
    Pose {
        pos: parent.pos + parent.rot.rotate(local.pos),
        rot: parent.rot.mul(local.rot),
    }
}

pub fn pose_inverse(p: Pose) -> Pose {
    let inv = p.rot.conjugate();
    Pose { pos: -inv.rotate(p.pos), rot: inv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const TOL: f64 = 1e-9;

    fn close(a: Vec3, b: Vec3) -> bool {
        (a - b).max_abs() < TOL
    }

    fn qclose(a: UnitQuat, b: UnitQuat) -> bool {
        a.to_array().iter().zip(b.to_array()).all(|(x, y)| (x - y).abs() < TOL)
    }

    // Independent rotation-matrix oracle: Rz(theta) and Rx(theta).
    fn rz(theta: f64, v: Vec3) -> Vec3 {
        let (s, c) = theta.sin_cos();
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    fn rx(theta: f64, v: Vec3) -> Vec3 {
        let (s, c) = theta.sin_cos();
        Vec3::new(v.x, c * v.y - s * v.z, s * v.y + c * v.z)
    }

    fn rot90z() -> UnitQuat {
        UnitQuat::from_axis_angle(Vec3::Z, FRAC_PI_2)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(Vec3::ZERO, Vec3::ZERO), 0.0);
        assert_eq!(euclidean_distance(Vec3::X, Vec3::ZERO), 1.0);
        assert_eq!(euclidean_distance(Vec3::new(1.0, 2.0, 2.0), Vec3::ZERO), 3.0);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(Vec3::X, Vec3::X).unwrap(), 1.0);
        assert_eq!(cosine_similarity(Vec3::X, Vec3::Y).unwrap(), 0.0);
        let c = cosine_similarity(Vec3::new(1.0, 1.0, 0.0), Vec3::X).unwrap();
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            cosine_similarity(Vec3::ZERO, Vec3::X),
            Err(GeomError::DegenerateVector)
        );
        assert_eq!(
            cosine_similarity(Vec3::X, Vec3::splat(1e-13)),
            Err(GeomError::DegenerateVector)
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(quat_normalize([2.0, 0.0, 0.0, 0.0]).unwrap(), UnitQuat::IDENTITY);
        assert_eq!(quat_normalize([-1.0, 0.0, 0.0, 0.0]).unwrap(), UnitQuat::IDENTITY);
        assert_eq!(
            quat_normalize([1.0, 1.0, 1.0, 1.0]).unwrap().to_array(),
            [0.5, 0.5, 0.5, 0.5]
        );
        assert_eq!(quat_normalize([0.0; 4]), Err(GeomError::DegenerateQuaternion));
        assert_eq!(
            quat_normalize([1e-13, 0.0, 0.0, 0.0]),
            Err(GeomError::DegenerateQuaternion)
        );
        let big = quat_normalize([1e300, 1e300, 0.0, 0.0]).unwrap();
        assert!((big.w() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rotate_examples() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(UnitQuat::IDENTITY.rotate(v), v);
        assert!(close(rot90z().rotate(Vec3::X), rz(FRAC_PI_2, Vec3::X)));
        assert!(close(rot90z().rotate(Vec3::X), Vec3::Y));
        let rot180x = UnitQuat::from_axis_angle(Vec3::X, PI);
        assert!(close(rot180x.rotate(Vec3::Y), rx(PI, Vec3::Y)));
        assert!(close(rot180x.rotate(Vec3::Y), -Vec3::Y));
    }

    #[test]
    fn compose_examples() {
        let p = Pose::new(Vec3::new(0.3, -1.0, 2.0), UnitQuat::from_axis_angle(Vec3::Y, 0.4));
        let c = pose_compose(Pose::IDENTITY, p);
        assert!(close(c.pos, p.pos) && qclose(c.rot, p.rot));

        let c = pose_compose(Pose::translation(Vec3::X), Pose::translation(Vec3::Y));
        assert!(close(c.pos, Vec3::new(1.0, 1.0, 0.0)));

        let c = pose_compose(Pose::rotation(rot90z()), Pose::translation(Vec3::X));
        assert!(close(c.pos, rz(FRAC_PI_2, Vec3::X)));
        assert!(qclose(c.rot, rot90z()));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(pose_inverse(Pose::IDENTITY), Pose::IDENTITY);
        let t = pose_inverse(Pose::translation(Vec3::new(1.0, 2.0, 3.0)));
        assert!(close(t.pos, Vec3::new(-1.0, -2.0, -3.0)));
        let p = Pose::new(Vec3::X, rot90z());
        let inv = pose_inverse(p);
        assert!(close(inv.pos, Vec3::new(0.0, 1.0, 0.0)));
        assert!(qclose(inv.rot, UnitQuat::from_axis_angle(Vec3::Z, -FRAC_PI_2)));
        let id = pose_compose(p, inv);
        assert!(close(id.pos, Vec3::ZERO) && qclose(id.rot, UnitQuat::IDENTITY));
    }

    #[test]
    fn euler_examples() {
        let q = UnitQuat::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.7);
        assert!(qclose(euler_increment(q, Vec3::ZERO), q));
        let once = euler_increment(UnitQuat::IDENTITY, Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert!(qclose(once, rot90z()));
        let twice = euler_increment(once, Vec3::new(0.0, 0.0, FRAC_PI_2));
        assert!(qclose(twice, UnitQuat::from_axis_angle(Vec3::Z, PI)));
    }

    #[test]
    fn euler_round_trip_and_order() {
        let angles = Vec3::new(0.3, -0.6, 1.1);
        let q = UnitQuat::from_euler_xyz(angles);
        assert!(close(q.to_euler_xyz(), angles));
        // Intrinsic XYZ: rotate by z first in the body frame, then y, then x.
        let v = Vec3::new(0.2, 0.5, -0.9);
        let expect = rx(angles.x, {
            let (s, c) = angles.y.sin_cos();
            let w = rz(angles.z, v);
            Vec3::new(c * w.x + s * w.z, w.y, -s * w.x + c * w.z)
        });
        assert!(close(q.rotate(v), expect));
    }

    #[test]
    fn axis_angle_round_trip() {
        let axis = Vec3::new(1.0, -2.0, 0.5).normalized().unwrap();
        let q = UnitQuat::from_axis_angle(axis, 2.5);
        let (a, ang) = q.to_axis_angle();
        assert!(close(a, axis));
        assert!((ang - 2.5).abs() < TOL);
        assert_eq!(UnitQuat::IDENTITY.to_axis_angle().1, 0.0);
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn quat() -> impl Strategy<Value = UnitQuat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter_map("degenerate", |(w, x, y, z)| quat_normalize([w, x, y, z]).ok())
    }

    fn pose() -> impl Strategy<Value = Pose> {
        (vec3(), quat()).prop_map(|(p, q)| Pose::new(p, q))
    }

    fn pose_close(a: Pose, b: Pose) -> bool {
        close(a.pos, b.pos) && qclose(a.rot, b.rot)
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in vec3(), b in vec3(), c in vec3()) {
            prop_assert!(euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + TOL);
            prop_assert_eq!(euclidean_distance(a, b), euclidean_distance(b, a));
        }

        #[test]
        fn cosine_scale_invariant(u in vec3(), v in vec3(), s in 0.01..100.0f64, t in 0.01..100.0f64) {
            prop_assume!(u.norm() > 1e-6 && v.norm() > 1e-6);
            let a = cosine_similarity(u * s, v * t).unwrap();
            let b = cosine_similarity(u, v).unwrap();
            prop_assert!((a - b).abs() < TOL);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn rotation_is_isometry(q in quat(), u in vec3(), v in vec3()) {
            let (ru, rv) = (q.rotate(u), q.rotate(v));
            prop_assert!((ru.norm() - u.norm()).abs() < TOL);
            prop_assert!((ru.dot(rv) - u.dot(v)).abs() < 1e-8);
        }

        #[test]
        fn compose_associative(a in pose(), b in pose(), c in pose()) {
            let l = pose_compose(pose_compose(a, b), c);
            let r = pose_compose(a, pose_compose(b, c));
            prop_assert!(pose_close(l, r));
            prop_assert!(pose_close(pose_compose(Pose::IDENTITY, a), a));
            prop_assert!(pose_close(pose_compose(a, Pose::IDENTITY), a));
        }

        #[test]
        fn inverse_gives_identity(p in pose()) {
            prop_assert!(pose_close(pose_compose(p, pose_inverse(p)), Pose::IDENTITY));
            prop_assert!(pose_close(pose_compose(pose_inverse(p), p), Pose::IDENTITY));
        }

        #[test]
        fn normalize_idempotent(q in quat()) {
            let again = quat_normalize(q.to_array()).unwrap();
            prop_assert!(qclose(again, q));
            prop_assert!(q.w() >= 0.0);
            prop_assert!((quat_norm(q.to_array()) - 1.0).abs() < TOL);
        }

        #[test]
        fn rotation_vector_negation_inverts(x in -0.2..0.2f64, y in -0.2..0.2f64, z in -0.2..0.2f64) {
            let v = Vec3::new(x, y, z);
            let q = UnitQuat::from_rotation_vector(v).mul(UnitQuat::from_rotation_vector(-v));
            prop_assert!(q.angle_to(UnitQuat::IDENTITY) < 1e-12);
            prop_assert!((UnitQuat::from_rotation_vector(v).to_rotation_vector() - v).max_abs() < 1e-12);
        }

        #[test]
        fn euler_decomposition_inverts(a in -3.0..3.0f64, b in -1.5..1.5f64, c in -3.0..3.0f64) {
            let q = UnitQuat::from_euler_xyz(Vec3::new(a, b, c));
            let back = UnitQuat::from_euler_xyz(q.to_euler_xyz());
            prop_assert!(q.angle_to(back) < 1e-7);
        }
    }
}
