//! Floor-plane geometry. The world is y-up; the floor lies in the x–z plane.

use serde::{Deserialize, Serialize};

use super::types::{RoomNode, RoomNodeKind, Vec3};
use crate::error::{Error, Result};

const DEGENERATE_LEN: f64 = 1e-9;

/// A room element projected onto the floor plane as a 2D segment `a → b`
/// (coordinates are `(x, z)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2 {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment2 {
    /// Projects a thin box onto its long horizontal axis, through the middle
    /// of its short axis.
    pub fn from_node(node: &RoomNode) -> Result<Self> {
        let (x0, x1) = (node.bbox_min[0], node.bbox_max[0]);
        let (z0, z1) = (node.bbox_min[2], node.bbox_max[2]);
        let (dx, dz) = (x1 - x0, z1 - z0);
        if dx.max(dz) < DEGENERATE_LEN {
            return Err(Error::Geometry(format!(
                "{:?} node has a zero-length floor projection",
                node.kind
            )));
        }
        Ok(if dx >= dz {
            let zc = 0.5 * (z0 + z1);
            Segment2 {
                a: [x0, zc],
                b: [x1, zc],
            }
        } else {
            let xc = 0.5 * (x0 + x1);
            Segment2 {
                a: [xc, z0],
                b: [xc, z1],
            }
        })
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = (((p[0] - self.a[0]) * d[0] + (p[1] - self.a[1]) * d[1]) / len2).clamp(0.0, 1.0);
        let q = [self.a[0] + t * d[0], self.a[1] + t * d[1]];
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }
}

pub fn floor_point(p: &Vec3) -> [f64; 2] {
    [p[0], p[2]]
}

/// Distance in the floor plane from a point to the boundary of a floor
/// node's rectangle.
pub fn floor_boundary_distance(floor: &RoomNode, p: [f64; 2]) -> f64 {
    let (x0, x1) = (floor.bbox_min[0], floor.bbox_max[0]);
    let (z0, z1) = (floor.bbox_min[2], floor.bbox_max[2]);
    let inside = p[0] >= x0 && p[0] <= x1 && p[1] >= z0 && p[1] <= z1;
    if inside {
        (p[0] - x0).min(x1 - p[0]).min(p[1] - z0).min(z1 - p[1])
    } else {
        let dx = (x0 - p[0]).max(0.0).max(p[0] - x1);
        let dz = (z0 - p[1]).max(0.0).max(p[1] - z1);
        (dx * dx + dz * dz).sqrt()
    }
}

/// 2D distance between a room node and a point: segment distance for
/// walls, doors and windows, rectangle-boundary distance for the floor.
pub fn room_point_distance(node: &RoomNode, p: &Vec3) -> Result<f64> {
    let q = floor_point(p);
    if node.kind.is_linear() {
        Ok(Segment2::from_node(node)?.distance(q))
    } else {
        Ok(floor_boundary_distance(node, q))
    }
}

/// Unit vector in the floor plane, perpendicular to the wall's supporting
/// line, on the side its normal points to. Returned as a 3-vector with zero
/// y component.
pub fn wall_inward_axis(wall: &RoomNode) -> Result<(Vec3, [f64; 2])> {
    if wall.kind != RoomNodeKind::Wall {
        return Err(Error::Geometry(format!(
            "signed distance requires a wall, got {:?}",
            wall.kind
        )));
    }
    let seg = Segment2::from_node(wall)?;
    let d = [seg.b[0] - seg.a[0], seg.b[1] - seg.a[1]];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let mut w = [-d[1] / len, d[0] / len];
    let side = w[0] * wall.normal[0] + w[1] * wall.normal[2];
    if side.abs() < 1e-9 {
        return Err(Error::Geometry(
            "wall normal has no component across the wall line".into(),
        ));
    }
    if side < 0.0 {
        w = [-w[0], -w[1]];
    }
    Ok(([w[0], 0.0, w[1]], seg.a))
}

/// Signed floor-plane distance from `point` to the wall's supporting line;
/// positive on the side the wall normal points to.
pub fn signed_wall_distance(wall: &RoomNode, point: &Vec3) -> Result<f64> {
    let (w, a) = wall_inward_axis(wall)?;
    Ok((point[0] - a[0]) * w[0] + (point[2] - a[1]) * w[2])
}

/// Four axis-aligned facing directions, measured as azimuth `atan2(z, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrientationClass {
    Deg0,
    Deg90,
    Deg180,
    Deg270,
}

impl OrientationClass {
    pub const ALL: [OrientationClass; 4] = [
        OrientationClass::Deg0,
        OrientationClass::Deg90,
        OrientationClass::Deg180,
        OrientationClass::Deg270,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    pub fn degrees(self) -> f64 {
        90.0 * self.index() as f64
    }

    pub fn unit_vector(self) -> Vec3 {
        match self {
            OrientationClass::Deg0 => [1.0, 0.0, 0.0],
            OrientationClass::Deg90 => [0.0, 0.0, 1.0],
            OrientationClass::Deg180 => [-1.0, 0.0, 0.0],
            OrientationClass::Deg270 => [0.0, 0.0, -1.0],
        }
    }
}

pub fn discretize_orientation(orientation: &Vec3) -> Result<OrientationClass> {
    let n = super::types::norm(orientation);
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!(
            "orientation must be a unit vector, has norm {n}"
        )));
    }
    let horizontal = orientation[0].hypot(orientation[2]);
    if horizontal < 1e-9 {
        return Err(Error::Ambiguous(
            "vertical orientation has no azimuth".into(),
        ));
    }
    let az = orientation[2].atan2(orientation[0]).to_degrees().rem_euclid(360.0);
    Ok(OrientationClass::from_index((az / 90.0).round() as usize))
}

/// Quarter-turn rotation about the vertical axis through `pivot`, sending
/// `+x` to `+z`.
pub fn rotate_point(p: &Vec3, pivot: &Vec3, quarter_turns: u32) -> Vec3 {
    let (mut x, mut z) = (p[0] - pivot[0], p[2] - pivot[2]);
    for _ in 0..quarter_turns % 4 {
        (x, z) = (-z, x);
    }
    [x + pivot[0], p[1], z + pivot[2]]
}

pub fn rotate_direction(v: &Vec3, quarter_turns: u32) -> Vec3 {
    rotate_point(v, &[0.0; 3], quarter_turns)
}

/// Rotates an axis-aligned box; the result is again axis-aligned.
pub fn rotate_box(lo: &Vec3, hi: &Vec3, pivot: &Vec3, quarter_turns: u32) -> (Vec3, Vec3) {
    let a = rotate_point(lo, pivot, quarter_turns);
    let b = rotate_point(hi, pivot, quarter_turns);
    let mut nlo = [0.0; 3];
    let mut nhi = [0.0; 3];
    for k in 0..3 {
        nlo[k] = a[k].min(b[k]);
        nhi[k] = a[k].max(b[k]);
    }
    (nlo, nhi)
}

pub fn rotate_size(size: &Vec3, quarter_turns: u32) -> Vec3 {
    if quarter_turns % 2 == 1 {
        [size[2], size[1], size[0]]
    } else {
        *size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_wall() -> RoomNode {
        RoomNode {
            kind: RoomNodeKind::Wall,
            bbox_min: [0.0, 0.0, 0.0],
            bbox_max: [1.0, 2.5, 0.0],
            normal: [0.0, 0.0, 1.0],
        }
    }

    #[test]
    fn signed_distance_examples() {
        let w = x_wall();
        assert_eq!(signed_wall_distance(&w, &[0.5, 0.0, 2.0]).unwrap(), 2.0);
        assert_eq!(signed_wall_distance(&w, &[0.5, 0.0, -2.0]).unwrap(), -2.0);
        assert_eq!(signed_wall_distance(&w, &[0.3, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn signed_distance_follows_normal() {
        let mut w = x_wall();
        w.normal = [0.0, 0.0, -1.0];
        assert_eq!(signed_wall_distance(&w, &[0.5, 0.0, 2.0]).unwrap(), -2.0);
    }

    #[test]
    fn degenerate_wall_is_rejected() {
        let mut w = x_wall();
        w.bbox_max = [0.0, 2.5, 0.0];
        assert!(matches!(
            signed_wall_distance(&w, &[0.0; 3]),
            Err(Error::Geometry(_))
        ));
        let mut d = x_wall();
        d.kind = RoomNodeKind::Door;
        assert!(matches!(
            signed_wall_distance(&d, &[0.0; 3]),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn orientation_classes() {
        assert_eq!(
            discretize_orientation(&[1.0, 0.0, 0.0]).unwrap(),
            OrientationClass::Deg0
        );
        assert_eq!(
            discretize_orientation(&[0.0, 0.0, 1.0]).unwrap(),
            OrientationClass::Deg90
        );
        // azimuth of (-0.9998, 0, 0.02) is about 178.85 degrees
        let v = [-0.9998, 0.0, 0.02];
        let n = super::super::types::norm(&v);
        let u = [v[0] / n, 0.0, v[2] / n];
        assert_eq!(discretize_orientation(&u).unwrap(), OrientationClass::Deg180);
        assert_eq!(
            discretize_orientation(&[0.0, 0.0, -1.0]).unwrap(),
            OrientationClass::Deg270
        );
        assert!(matches!(
            discretize_orientation(&[0.0, 1.0, 0.0]),
            Err(Error::Ambiguous(_))
        ));
    }

    #[test]
    fn quarter_turn_maps_x_to_z() {
        let r = rotate_direction(&[1.0, 0.0, 0.0], 1);
        assert_eq!(r, [0.0, 0.0, 1.0]);
        for c in OrientationClass::ALL {
            let rotated = rotate_direction(&c.unit_vector(), 1);
            assert_eq!(
                discretize_orientation(&rotated).unwrap(),
                OrientationClass::from_index(c.index() + 1)
            );
        }
    }

    #[test]
    fn floor_distance_inside_and_outside() {
        let floor = RoomNode {
            kind: RoomNodeKind::Floor,
            bbox_min: [0.0, 0.0, 0.0],
            bbox_max: [4.0, 0.0, 3.0],
            normal: [0.0, 1.0, 0.0],
        };
        assert_eq!(floor_boundary_distance(&floor, [1.0, 1.5]), 1.0);
        assert_eq!(floor_boundary_distance(&floor, [7.0, 7.0]), 5.0);
    }

    #[test]
    fn segment_distance_clamps_to_endpoints() {
        let s = Segment2::from_node(&x_wall()).unwrap();
        assert_eq!(s.distance([4.0, 4.0]), 5.0);
        assert_eq!(s.distance([0.5, -1.0]), 1.0);
    }
}
