//! Scenario builders used across the integration tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zkpot::sim::{assign_identities, Scenario, Tick, VehicleState};

/// Vehicles wandering in a `side`×`side` square: random start, heading
/// drift, varied speed, and about one in ten missing from any given tick.
pub fn random_walk(n: usize, ticks: usize, side: f64, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.gen_range(0.0..side),
                rng.gen_range(0.0..side),
                rng.gen_range(0.0..360.0),
                rng.gen_range(0.0..15.0),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(ticks);
    for t in 0..ticks {
        let mut states = Vec::new();
        for (i, v) in pos.iter_mut().enumerate() {
            if t > 0 {
                v.2 = (v.2 + rng.gen_range(-20.0..20.0f64)).rem_euclid(360.0);
                let rad = v.2.to_radians();
                v.0 = (v.0 + v.3 * rad.sin()).clamp(0.0, side);
                v.1 = (v.1 + v.3 * rad.cos()).clamp(0.0, side);
            }
            if rng.gen_bool(0.9) {
                states.push(VehicleState {
                    vehicle: i,
                    x_m: v.0,
                    y_m: v.1,
                    heading_deg: v.2,
                    speed_mps: v.3,
                });
            }
        }
        out.push(Tick {
            time_ms: t as u64 * 1000,
            states,
        });
    }
    Scenario {
        vehicles: assign_identities((0..n).map(|i| format!("w{i}")), seed),
        ticks: out,
        dropped_rows: 0,
    }
}

/// Stationary vehicles placed by hand, one tick.
pub fn still(placed: &[(f64, f64, f64)], seed: u64) -> Scenario {
    let states = placed
        .iter()
        .enumerate()
        .map(|(i, &(x, y, h))| VehicleState {
            vehicle: i,
            x_m: x,
            y_m: y,
            heading_deg: h,
            speed_mps: 0.0,
        })
        .collect();
    Scenario {
        vehicles: assign_identities((0..placed.len()).map(|i| format!("s{i}")), seed),
        ticks: vec![Tick { time_ms: 0, states }],
        dropped_rows: 0,
    }
}
