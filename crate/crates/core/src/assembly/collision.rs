//! Exact overlap tests between convex primitives placed in the world.

use crate::geom::{Pose, Vec3};
use crate::model::{ConvexShape, ShapeGeometry};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorldShape {
    Box { center: Vec3, axes: [Vec3; 3], half_extents: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn around(center: Vec3, half: Vec3) -> Self {
        Self { min: center - half, max: center + half }
    }

    pub fn union(self, o: Aabb) -> Aabb {
        Aabb { min: self.min.min(o.min), max: self.max.max(o.max) }
    }

    /// Closed-interval intersection (touching counts).
    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x
            && o.min.x <= self.max.x
            && self.min.y <= o.max.y
            && o.min.y <= self.max.y
            && self.min.z <= o.max.z
            && o.min.z <= self.max.z
    }
}

impl WorldShape {
    /// Places a part-local shape given the part's world pose.
    pub fn place(shape: &ConvexShape, part_pose: Pose) -> Self {
        let world = part_pose.compose(shape.offset);
        match shape.geometry {
            ShapeGeometry::Box { half_extents } => WorldShape::Box {
                center: world.pos,
                axes: [world.rot.rotate(Vec3::X), world.rot.rotate(Vec3::Y), world.rot.rotate(Vec3::Z)],
                half_extents,
            },
            ShapeGeometry::Sphere { radius } => WorldShape::Sphere { center: world.pos, radius },
        }
    }

    pub fn center(&self) -> Vec3 {
        match *self {
            WorldShape::Box { center, .. } | WorldShape::Sphere { center, .. } => center,
        }
    }

    pub fn aabb(&self) -> Aabb {
        match *self {
            WorldShape::Box { center, axes, half_extents } => {
                let half = axes[0].abs() * half_extents.x
                    + axes[1].abs() * half_extents.y
                    + axes[2].abs() * half_extents.z;
                Aabb::around(center, half)
            }
            WorldShape::Sphere { center, radius } => Aabb::around(center, Vec3::splat(radius)),
        }
    }

    /// Half-length of the shape's projection onto unit axis `l`.
    fn projected_radius(&self, l: Vec3) -> f64 {
        match *self {
            WorldShape::Box { axes, half_extents, .. } => {
                half_extents.x * axes[0].dot(l).abs()
                    + half_extents.y * axes[1].dot(l).abs()
                    + half_extents.z * axes[2].dot(l).abs()
            }
            WorldShape::Sphere { radius, .. } => radius,
        }
    }
}

/// Strict overlap: shapes that only touch do not overlap.
pub fn shapes_overlap(a: &WorldShape, b: &WorldShape) -> bool {
    match (a, b) {
        (WorldShape::Sphere { center: ca, radius: ra }, WorldShape::Sphere { center: cb, radius: rb }) => {
            let r = ra + rb;
            (*ca - *cb).norm_squared() < r * r
        }
        (WorldShape::Sphere { center, radius }, WorldShape::Box { center: bc, axes, half_extents })
        | (WorldShape::Box { center: bc, axes, half_extents }, WorldShape::Sphere { center, radius }) => {
            sphere_box_overlap(*center, *radius, *bc, axes, *half_extents)
        }
        (WorldShape::Box { axes: aa, .. }, WorldShape::Box { axes: ba, .. }) => {
            box_box_overlap(a, aa, b, ba)
        }
    }
}

fn sphere_box_overlap(center: Vec3, radius: f64, bc: Vec3, axes: &[Vec3; 3], half: Vec3) -> bool {
    let d = center - bc;
    let local = Vec3::new(d.dot(axes[0]), d.dot(axes[1]), d.dot(axes[2]));
    let closest = local.clamp(-half, half);
    (local - closest).norm_squared() < radius * radius
}

/// Separating-axis test over the 3 + 3 face normals and the 9 edge cross
/// products. Near-zero cross products (parallel edges) are skipped; the face
/// axes already cover those cases.
fn box_box_overlap(a: &WorldShape, aa: &[Vec3; 3], b: &WorldShape, ba: &[Vec3; 3]) -> bool {
    let t = b.center() - a.center();
    let separated_on = |axis: Vec3| {
        let n2 = axis.norm_squared();
        if n2 < 1e-20 {
            return false;
        }
        let l = axis / n2.sqrt();
        t.dot(l).abs() >= a.projected_radius(l) + b.projected_radius(l)
    };
    for axis in aa.iter().chain(ba.iter()) {
        if separated_on(*axis) {
            return false;
        }
    }
    for ea in aa {
        for eb in ba {
            if separated_on(ea.cross(*eb)) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::UnitQuat;

    fn unit_box(center: Vec3) -> WorldShape {
        WorldShape::place(
            &ConvexShape::new(ShapeGeometry::Box { half_extents: Vec3::splat(0.5) }, Pose::IDENTITY),
            Pose::translation(center),
        )
    }

    #[test]
    fn boxes_far_and_coincident() {
        assert!(!shapes_overlap(&unit_box(Vec3::ZERO), &unit_box(Vec3::new(3.0, 0.0, 0.0))));
        assert!(shapes_overlap(&unit_box(Vec3::ZERO), &unit_box(Vec3::ZERO)));
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert!(!shapes_overlap(&unit_box(Vec3::ZERO), &unit_box(Vec3::X)));
        assert!(shapes_overlap(&unit_box(Vec3::ZERO), &unit_box(Vec3::new(0.999, 0.0, 0.0))));
    }

    #[test]
    fn sphere_penetrating_box_face() {
        let sphere = WorldShape::Sphere { center: Vec3::new(0.55, 0.0, 0.0), radius: 0.1 };
        assert!(shapes_overlap(&unit_box(Vec3::ZERO), &sphere));
        assert!(shapes_overlap(&sphere, &unit_box(Vec3::ZERO)));
        // Exactly representable so the gap is exactly zero.
        let touching = WorldShape::Sphere { center: Vec3::new(0.75, 0.0, 0.0), radius: 0.25 };
        assert!(!shapes_overlap(&unit_box(Vec3::ZERO), &touching));
    }

    #[test]
    fn sphere_near_box_corner() {
        // Corner (0.5,0.5,0.5); centre 0.1 further along the diagonal in each axis
        // is sqrt(3)*0.1 = 0.173 away.
        let c = Vec3::splat(0.6);
        assert!(!shapes_overlap(&unit_box(Vec3::ZERO), &WorldShape::Sphere { center: c, radius: 0.17 }));
        assert!(shapes_overlap(&unit_box(Vec3::ZERO), &WorldShape::Sphere { center: c, radius: 0.18 }));
    }

    #[test]
    fn boxes_rotated_about_different_axes() {
        let h = Vec3::splat(0.5);
        let a = WorldShape::place(
            &ConvexShape::new(ShapeGeometry::Box { half_extents: h }, Pose::IDENTITY),
            Pose::rotation(UnitQuat::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_4)),
        );
        let b = WorldShape::place(
            &ConvexShape::new(ShapeGeometry::Box { half_extents: h }, Pose::IDENTITY),
            Pose::new(Vec3::new(1.35, 0.0, 0.0), UnitQuat::from_axis_angle(Vec3::X, std::f64::consts::FRAC_PI_4)),
        );
        // Extents along x: a reaches 0.7071, b reaches 1.35 - 0.5 = 0.85 -> apart.
        assert!(!shapes_overlap(&a, &b));
        let b_close = WorldShape::place(
            &ConvexShape::new(ShapeGeometry::Box { half_extents: h }, Pose::IDENTITY),
            Pose::new(Vec3::new(1.15, 0.0, 0.0), UnitQuat::from_axis_angle(Vec3::X, std::f64::consts::FRAC_PI_4)),
        );
        assert!(shapes_overlap(&a, &b_close));
    }

    #[test]
    fn rotated_box_aabb() {
        let s = WorldShape::place(
            &ConvexShape::new(ShapeGeometry::Box { half_extents: Vec3::new(1.0, 0.5, 0.5) }, Pose::IDENTITY),
            Pose::rotation(UnitQuat::from_axis_angle(Vec3::Z, std::f64::consts::FRAC_PI_2)),
        );
        let bb = s.aabb();
        assert!((bb.max - Vec3::new(0.5, 1.0, 0.5)).max_abs() < 1e-12);
    }
}
