//! Visibility recomputed from first principles: rectangle corners from a
//! rotation matrix, separating-axis segment tests, bearings via atan2.

use zkpot::sim::{SimParams, VehicleState};

pub const LEN: f64 = 4.0;
pub const WIDTH: f64 = 1.8;

pub type P = (f64, f64);

/// Unit heading in the math frame: SUMO 0° north clockwise is 90° math.
fn dir(heading_deg: f64) -> P {
    let phi = (90.0 - heading_deg).to_radians();
    (phi.cos(), phi.sin())
}

/// Corners of the body, optionally shrunk by `eps` on every side.
pub fn corners(v: &VehicleState, eps: f64) -> [P; 4] {
    let (dx, dy) = dir(v.heading_deg);
    let (rx, ry) = (dy, -dx);
    let (front, back) = (-eps, -(LEN - eps));
    let half = WIDTH / 2.0 - eps;
    let at = |along: f64, side: f64| {
        (
            v.x_m + dx * along + rx * side,
            v.y_m + dy * along + ry * side,
        )
    };
    [
        at(front, half),
        at(front, -half),
        at(back, -half),
        at(back, half),
    ]
}

pub fn plates(v: &VehicleState) -> [P; 2] {
    let (dx, dy) = dir(v.heading_deg);
    [(v.x_m, v.y_m), (v.x_m - dx * LEN, v.y_m - dy * LEN)]
}

fn project(points: &[P], axis: P) -> (f64, f64) {
    points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let d = p.0 * axis.0 + p.1 * axis.1;
            (lo.min(d), hi.max(d))
        })
}

/// Closed segment against closed convex quadrilateral.
pub fn segment_hits_quad(a: P, b: P, quad: &[P; 4]) -> bool {
    let seg = [a, b];
    let mut axes = vec![(-(b.1 - a.1), b.0 - a.0)];
    for i in 0..4 {
        let (p, q) = (quad[i], quad[(i + 1) % 4]);
        axes.push((-(q.1 - p.1), q.0 - p.0));
    }
    axes.into_iter()
        .filter(|ax| ax.0 != 0.0 || ax.1 != 0.0)
        .all(|ax| {
            let (s0, s1) = project(&seg, ax);
            let (q0, q1) = project(quad, ax);
            s1 >= q0 && q1 >= s0
        })
}

pub fn dist(a: P, b: P) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Exhaustive: every plate point, every other vehicle as an occluder.
pub fn sees(
    observer: &VehicleState,
    target: &VehicleState,
    all: &[VehicleState],
    p: &SimParams,
) -> bool {
    let eye = (observer.x_m, observer.y_m);
    let own = corners(target, 0.01);
    plates(target).into_iter().any(|pl| {
        let d = dist(eye, pl);
        if d > p.perception_m || d == 0.0 {
            return false;
        }
        let bearing = (pl.0 - eye.0).atan2(pl.1 - eye.1).to_degrees();
        let off = (bearing - observer.heading_deg + 540.0).rem_euclid(360.0) - 180.0;
        if off.abs() > p.fov_deg / 2.0 {
            return false;
        }
        if segment_hits_quad(eye, pl, &own) {
            return false;
        }
        all.iter()
            .filter(|o| o.vehicle != observer.vehicle && o.vehicle != target.vehicle)
            .all(|o| !segment_hits_quad(eye, pl, &corners(o, 0.0)))
    })
}

pub fn hears(a: &VehicleState, b: &VehicleState, p: &SimParams) -> bool {
    dist((a.x_m, a.y_m), (b.x_m, b.y_m)) <= p.comm_range_m
}
