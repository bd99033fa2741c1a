use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::crypto::{NumberPlate, Pseudonym, SharedSecret};

/// Speed of every vehicle in a synthetic formation.
pub const SYNTH_SPEED_MPS: f64 = 10.0;
pub const SYNTH_TICK_MS: u64 = 1_000;

/// Who a trace belongs to: fixed for the whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VehicleIdentity {
    pub key: String,
    pub pseudonym: Pseudonym,
    pub plate: NumberPlate,
}

impl VehicleIdentity {
    pub fn shared_secret(&self) -> SharedSecret {
        SharedSecret::new(&self.pseudonym, &self.plate)
    }
}

/// One vehicle at one tick. `vehicle` indexes [`Scenario::vehicles`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub vehicle: usize,
    pub x_m: f64,
    pub y_m: f64,
    pub heading_deg: f64,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tick {
    pub time_ms: u64,
    pub states: Vec<VehicleState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub vehicles: Vec<VehicleIdentity>,
    pub ticks: Vec<Tick>,
    /// Trace rows skipped because the vehicle type is not a sedan.
    pub dropped_rows: usize,
}

impl Scenario {
    pub fn identity(&self, state: &VehicleState) -> &VehicleIdentity {
        &self.vehicles[state.vehicle]
    }

    /// Replaces every pseudonym and plate with fresh draws from `seed`,
    /// keeping the geometry.
    pub fn reassign_identities(&mut self, seed: u64) {
        let keys: Vec<String> = self.vehicles.iter().map(|v| v.key.clone()).collect();
        self.vehicles = assign_identities(keys, seed);
    }
}

/// Hands out a distinct random pseudonym and plate per trace key, in order of
/// first request.
#[derive(Debug, Clone)]
pub struct IdentityAllocator {
    rng: ChaCha8Rng,
    pseudonyms: HashSet<Pseudonym>,
    plates: HashSet<NumberPlate>,
    index: HashMap<String, usize>,
    vehicles: Vec<VehicleIdentity>,
}

impl IdentityAllocator {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            pseudonyms: HashSet::new(),
            plates: HashSet::new(),
            index: HashMap::new(),
            vehicles: Vec::new(),
        }
    }

    /// Index of `key`, allocating an identity the first time it is seen.
    pub fn intern(&mut self, key: &str) -> usize {
        if let Some(&i) = self.index.get(key) {
            return i;
        }
        let pseudonym = loop {
            let p = Pseudonym::random(&mut self.rng);
            if self.pseudonyms.insert(p) {
                break p;
            }
        };
        let plate = loop {
            let p = NumberPlate::random(&mut self.rng);
            if self.plates.insert(p.clone()) {
                break p;
            }
        };
        let i = self.vehicles.len();
        self.index.insert(key.to_owned(), i);
        self.vehicles.push(VehicleIdentity {
            key: key.to_owned(),
            pseudonym,
            plate,
        });
        i
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn vehicles(&self) -> &[VehicleIdentity] {
        &self.vehicles
    }

    pub fn into_vehicles(self) -> Vec<VehicleIdentity> {
        self.vehicles
    }
}

/// Draws a distinct pseudonym and plate for each key, in order.
pub fn assign_identities(
    keys: impl IntoIterator<Item = String>,
    seed: u64,
) -> Vec<VehicleIdentity> {
    let mut alloc = IdentityAllocator::new(seed);
    for key in keys {
        alloc.intern(&key);
    }
    alloc.into_vehicles()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formation {
    /// One lane heading north, vehicles `spacing` apart.
    Line,
    /// `ceil(sqrt(n))` parallel lanes `spacing` apart, vehicles `spacing`
    /// apart within a lane. Even lanes drive north, odd lanes south.
    Grid,
    /// Evenly spaced on a circle of circumference `n · spacing`, driving
    /// counter-clockwise.
    Ring,
}

impl FromStr for Formation {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "line" => Ok(Formation::Line),
            "grid" => Ok(Formation::Grid),
            "ring" => Ok(Formation::Ring),
            other => Err(SimError::BadParams(format!("unknown formation {other:?}"))),
        }
    }
}

impl fmt::Display for Formation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formation::Line => "line",
            Formation::Grid => "grid",
            Formation::Ring => "ring",
        })
    }
}

fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

pub fn synth_scenario(
    kind: Formation,
    n_vehicles: usize,
    spacing_m: f64,
    ticks: usize,
    seed: u64,
) -> Result<Scenario, SimError> {
    if n_vehicles == 0 {
        return Err(SimError::BadParams("n_vehicles must be at least 1".into()));
    }
    if !(spacing_m.is_finite() && spacing_m > 0.0) {
        return Err(SimError::BadParams(format!(
            "spacing must be positive, got {spacing_m}"
        )));
    }
    if ticks == 0 {
        return Err(SimError::BadParams("ticks must be at least 1".into()));
    }
    let cols = (n_vehicles as f64).sqrt().ceil() as usize;
    let radius = n_vehicles as f64 * spacing_m / std::f64::consts::TAU;

    let state_at = |i: usize, t_s: f64| -> VehicleState {
        let (x_m, y_m, heading_deg) = match kind {
            Formation::Line => (0.0, i as f64 * spacing_m + SYNTH_SPEED_MPS * t_s, 0.0),
            Formation::Grid => {
                let lane = i % cols;
                let y0 = (i / cols) as f64 * spacing_m;
                if lane.is_multiple_of(2) {
                    (lane as f64 * spacing_m, y0 + SYNTH_SPEED_MPS * t_s, 0.0)
                } else {
                    (lane as f64 * spacing_m, y0 - SYNTH_SPEED_MPS * t_s, 180.0)
                }
            }
            Formation::Ring => {
                let phi = std::f64::consts::TAU * i as f64 / n_vehicles as f64
                    + SYNTH_SPEED_MPS * t_s / radius;
                // counter-clockwise tangent, converted to clockwise-from-north
                let travel = phi + std::f64::consts::FRAC_PI_2;
                (
                    radius * phi.cos(),
                    radius * phi.sin(),
                    normalize_heading(90.0 - travel.to_degrees()),
                )
            }
        };
        VehicleState {
            vehicle: i,
            x_m,
            y_m,
            heading_deg,
            speed_mps: SYNTH_SPEED_MPS,
        }
    };

    let ticks = (0..ticks)
        .map(|t| {
            let time_ms = t as u64 * SYNTH_TICK_MS;
            let t_s = time_ms as f64 / 1000.0;
            Tick {
                time_ms,
                states: (0..n_vehicles).map(|i| state_at(i, t_s)).collect(),
            }
        })
        .collect();
    let keys = (0..n_vehicles).map(|i| format!("{kind}{i}"));
    Ok(Scenario {
        vehicles: assign_identities(keys, seed),
        ticks,
        dropped_rows: 0,
    })
}
