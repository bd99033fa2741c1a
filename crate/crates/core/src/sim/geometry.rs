//! Vehicle footprints and camera line of sight in the ground plane.
//!
//! Positions follow SUMO: `x` east, `y` north, the reference point is the
//! front-bumper center and headings are degrees clockwise from north.

use std::ops::{Add, Mul, Sub};

use super::{SimParams, VehicleState};

pub const VEHICLE_LENGTH_M: f64 = 4.0;
pub const VEHICLE_WIDTH_M: f64 = 1.8;
/// How far the target's own body is shrunk before testing self-occlusion.
pub const SELF_OCCLUSION_EPS_M: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Rotated 90° clockwise: for a heading vector this points to the right.
    pub fn perp(self) -> Vec2 {
        Vec2::new(self.y, -self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Unit vector for a SUMO heading (0° = north, clockwise).
pub fn heading_unit(heading_deg: f64) -> Vec2 {
    let rad = heading_deg.to_radians();
    Vec2::new(rad.sin(), rad.cos())
}

/// A rectangle given by its center, unit long axis and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub axis: Vec2,
    pub half_len: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn shrunk(&self, eps: f64) -> Self {
        Self {
            half_len: self.half_len - eps,
            half_width: self.half_width - eps,
            ..*self
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_len.hypot(self.half_width)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let u = self.axis * self.half_len;
        let v = self.axis.perp() * self.half_width;
        [
            self.center + u + v,
            self.center + u - v,
            self.center - u - v,
            self.center - u + v,
        ]
    }

    /// Whether the closed segment `a`–`b` touches the closed rectangle
    /// (Liang–Barsky clipping in the rectangle's frame).
    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        let side = self.axis.perp();
        let rel = a - self.center;
        let d = b - a;
        let p0 = [rel.dot(self.axis), rel.dot(side)];
        let dir = [d.dot(self.axis), d.dot(side)];
        let half = [self.half_len, self.half_width];
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..2 {
            if dir[k] == 0.0 {
                if p0[k].abs() > half[k] {
                    return false;
                }
                continue;
            }
            let mut ta = (-half[k] - p0[k]) / dir[k];
            let mut tb = (half[k] - p0[k]) / dir[k];
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

/// Squared distance from `p` to the segment `a`–`b`.
pub fn point_segment_dist2(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(d) / len2).clamp(0.0, 1.0)
    };
    let q = a + d * t;
    (p - q).dot(p - q)
}

impl VehicleState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x_m, self.y_m)
    }

    pub fn direction(&self) -> Vec2 {
        heading_unit(self.heading_deg)
    }

    /// The 4.0 m × 1.8 m body extending backward from the front bumper.
    pub fn footprint(&self) -> OrientedRect {
        let axis = self.direction();
        OrientedRect {
            center: self.position() - axis * (VEHICLE_LENGTH_M / 2.0),
            axis,
            half_len: VEHICLE_LENGTH_M / 2.0,
            half_width: VEHICLE_WIDTH_M / 2.0,
        }
    }

    /// Front and rear plate positions: the midpoints of the short edges.
    pub fn plate_points(&self) -> [Vec2; 2] {
        let front = self.position();
        [front, front - self.direction() * VEHICLE_LENGTH_M]
    }
}

/// Whether the camera at `eye` looking along `forward` can read a plate at
/// `plate`, ignoring occlusion.
pub(crate) fn in_view(eye: Vec2, forward: Vec2, plate: Vec2, p: &SimParams) -> bool {
    let to_plate = plate - eye;
    let dist = to_plate.norm();
    if dist > p.perception_m || dist == 0.0 {
        return false;
    }
    let cos = (to_plate.dot(forward) / dist).clamp(-1.0, 1.0);
    cos.acos().to_degrees() <= p.fov_deg / 2.0
}

/// Line-of-sight test for one plate point against precomputed occluder bodies.
pub(crate) fn sight_clear<'a>(
    eye: Vec2,
    plate: Vec2,
    target_body: &OrientedRect,
    occluders: impl IntoIterator<Item = &'a OrientedRect>,
) -> bool {
    if target_body
        .shrunk(SELF_OCCLUSION_EPS_M)
        .intersects_segment(eye, plate)
    {
        return false;
    }
    occluders.into_iter().all(|body| {
        let r = body.bounding_radius();
        point_segment_dist2(body.center, eye, plate) > r * r || !body.intersects_segment(eye, plate)
    })
}

/// Whether `observer`'s camera (front-bumper center) can read either plate of
/// `target`. `others` are the potential occluders; entries equal to the
/// observer or the target are skipped.
pub fn plate_visible(
    observer: &VehicleState,
    target: &VehicleState,
    others: &[VehicleState],
    p: &SimParams,
) -> bool {
    let eye = observer.position();
    let forward = observer.direction();
    let body = target.footprint();
    let occluders: Vec<OrientedRect> = others
        .iter()
        .filter(|o| o.vehicle != observer.vehicle && o.vehicle != target.vehicle)
        .map(VehicleState::footprint)
        .collect();
    target
        .plate_points()
        .into_iter()
        .any(|plate| in_view(eye, forward, plate, p) && sight_clear(eye, plate, &body, &occluders))
}

/// Vehicles within communication range of `observer` (excluding itself).
pub fn hearing_set<'a>(
    observer: &VehicleState,
    all: &'a [VehicleState],
    p: &SimParams,
) -> Vec<&'a VehicleState> {
    let here = observer.position();
    all.iter()
        .filter(|v| v.vehicle != observer.vehicle && v.position().distance(here) <= p.comm_range_m)
        .collect()
}
