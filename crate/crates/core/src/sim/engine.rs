use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use rayon::prelude::*;

use super::fcd::FcdReader;
use super::geometry::{in_view, sight_clear, OrientedRect, Vec2, VEHICLE_LENGTH_M};
use super::metrics::{StationSummary, TickMetrics};
use super::scenario::{Scenario, Tick, VehicleIdentity, VehicleState};
use super::{SimError, SimParams};
use crate::crypto::{derive_public_key, PublicKey};
use crate::station::{Event, Observation, Prover, RecoveredCpm, VerifierState};
use crate::wire::{decode_cpm, encode_cpm, Cpm, PerceivedObject, MAX_OBJECTS};

/// Margin added to the perception range when collecting candidate targets
/// and occluders: a body can reach this far behind its reference point.
const BODY_REACH_M: f64 = VEHICLE_LENGTH_M + 1.0;

/// Per-station output of the parallel sensing pass: visible vehicles and the CPM to send.
type Built = (Vec<usize>, Option<Cpm>);

/// One tick's output.
#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub metrics: TickMetrics,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub metrics: Vec<TickMetrics>,
    pub events: Vec<Event>,
    pub stations: Vec<StationSummary>,
}

impl SimOutput {
    pub fn metrics_csv(&self) -> String {
        super::metrics::metrics_csv(&self.metrics)
    }

    pub fn event_log(&self) -> String {
        event_log(&self.events)
    }
}

pub fn event_log(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_log_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Track {
    object_id: u8,
    first_seen_ms: u64,
}

/// Stable object ids for the vehicles a station currently sees. An id is
/// freed as soon as its vehicle drops out of view.
#[derive(Debug, Clone, Default)]
struct ObjectTracker {
    tracks: HashMap<usize, Track>,
}

impl ObjectTracker {
    /// `visible` must be sorted. Vehicles beyond the id space are left out.
    fn update(&mut self, visible: &[usize], now_ms: u64) -> Vec<(usize, Track)> {
        let now: HashSet<usize> = visible.iter().copied().collect();
        self.tracks.retain(|v, _| now.contains(v));
        let mut used = [false; MAX_OBJECTS];
        for t in self.tracks.values() {
            used[usize::from(t.object_id)] = true;
        }
        let mut next_free = 0;
        let mut out = Vec::with_capacity(visible.len());
        for &v in visible {
            let track = match self.tracks.get(&v) {
                Some(t) => *t,
                None => {
                    while next_free < MAX_OBJECTS && used[next_free] {
                        next_free += 1;
                    }
                    if next_free == MAX_OBJECTS {
                        continue;
                    }
                    used[next_free] = true;
                    let t = Track {
                        object_id: next_free as u8,
                        first_seen_ms: now_ms,
                    };
                    self.tracks.insert(v, t);
                    t
                }
            };
            out.push((v, track));
        }
        out
    }
}

struct Station {
    prover: Prover,
    verifier: VerifierState,
    tracker: ObjectTracker,
    proofs_sent: u64,
    proofs_received: u64,
    confirmations: u64,
}

/// Uniform hash grid over the positions of one tick.
struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vec2], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(*p, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(p: Vec2, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Every point within one cell size of `p` (and some farther ones), sorted.
    fn near(&self, p: Vec2) -> Vec<usize> {
        let (cx, cy) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn quantize(state: &VehicleState, object_id: u8) -> PerceivedObject {
    let cm = |m: f64| {
        (m * 100.0)
            .round()
            .clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
    };
    PerceivedObject {
        object_id,
        x_cm: cm(state.x_m),
        y_cm: cm(state.y_m),
        speed_cms: (state.speed_mps * 100.0)
            .round()
            .clamp(0.0, f64::from(u16::MAX)) as u16,
        heading_cdeg: ((state.heading_deg * 100.0).round() as i64).rem_euclid(36_000) as u16,
    }
}

/// Which vehicles each observer can read a plate of and hear, as indices
/// into `states` (sorted by vehicle). Pure; observers run in parallel.
pub(crate) fn visibility(states: &[VehicleState], p: &SimParams) -> Vec<Vec<usize>> {
    let positions: Vec<Vec2> = states.iter().map(VehicleState::position).collect();
    let bodies: Vec<OrientedRect> = states.iter().map(VehicleState::footprint).collect();
    let reach = p.perception_m + BODY_REACH_M;
    let grid = Grid::new(&positions, reach);
    (0..states.len())
        .into_par_iter()
        .map(|o| {
            let observer = &states[o];
            let eye = positions[o];
            let forward = observer.direction();
            let near: Vec<usize> = grid
                .near(eye)
                .into_iter()
                .filter(|&i| i != o && positions[i].distance(eye) <= reach)
                .collect();
            near.iter()
                .copied()
                .filter(|&t| {
                    if positions[t].distance(eye) > p.comm_range_m {
                        return false;
                    }
                    let occluders = near.iter().filter(|&&i| i != t).map(|&i| &bodies[i]);
                    states[t].plate_points().into_iter().any(|plate| {
                        in_view(eye, forward, plate, p)
                            && sight_clear(eye, plate, &bodies[t], occluders.clone())
                    })
                })
                .collect()
        })
        .collect()
}

/// Tick-by-tick driver. Feed it ticks in time order together with the
/// identity table (which may grow between ticks).
pub struct Simulation {
    params: SimParams,
    stations: Vec<Option<Station>>,
    keys: Vec<PublicKey>,
    last_time: Option<u64>,
    last_seen: HashMap<usize, u64>,
}

impl Simulation {
    pub fn new(params: SimParams) -> Result<Self, SimError> {
        params.validate()?;
        Ok(Self {
            params,
            stations: Vec::new(),
            keys: Vec::new(),
            last_time: None,
            last_seen: HashMap::new(),
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Station of vehicle `v`, once it has appeared.
    pub fn verifier(&self, v: usize) -> Option<&VerifierState> {
        self.stations.get(v)?.as_ref().map(|s| &s.verifier)
    }

    fn check_tick(
        &self,
        tick: &Tick,
        vehicles: &[VehicleIdentity],
    ) -> Result<Vec<VehicleState>, SimError> {
        if let Some(prev) = self.last_time {
            if tick.time_ms <= prev {
                return Err(SimError::NonMonotonicTime {
                    line: 0,
                    previous_ms: prev,
                    time_ms: tick.time_ms,
                });
            }
            if tick.time_ms - prev <= self.params.comm_delay_ms {
                return Err(SimError::BadParams(format!(
                    "comm_delay_ms {} is not shorter than the tick interval {} ms",
                    self.params.comm_delay_ms,
                    tick.time_ms - prev
                )));
            }
        }
        let mut states = tick.states.clone();
        states.sort_by_key(|s| s.vehicle);
        for w in states.windows(2) {
            if w[0].vehicle == w[1].vehicle {
                return Err(SimError::InvalidScenario(format!(
                    "vehicle {} appears twice at {} ms",
                    w[0].vehicle, tick.time_ms
                )));
            }
        }
        if let Some(s) = states.iter().find(|s| s.vehicle >= vehicles.len()) {
            return Err(SimError::InvalidScenario(format!(
                "unknown vehicle index {}",
                s.vehicle
            )));
        }
        if let Some(s) = states
            .iter()
            .find(|s| !(s.x_m.is_finite() && s.y_m.is_finite() && s.heading_deg.is_finite()))
        {
            return Err(SimError::InvalidScenario(format!(
                "non-finite state for vehicle {}",
                s.vehicle
            )));
        }
        Ok(states)
    }

    fn ensure_vehicles(&mut self, vehicles: &[VehicleIdentity]) {
        if self.keys.len() < vehicles.len() {
            let wf = self.params.wf;
            let fresh: Vec<PublicKey> = vehicles[self.keys.len()..]
                .par_iter()
                .map(|v| derive_public_key(&v.shared_secret(), wf))
                .collect();
            self.keys.extend(fresh);
        }
        if self.stations.len() < vehicles.len() {
            self.stations.resize_with(vehicles.len(), || None);
        }
    }

    pub fn step(
        &mut self,
        tick: &Tick,
        vehicles: &[VehicleIdentity],
    ) -> Result<TickReport, SimError> {
        let states = self.check_tick(tick, vehicles)?;
        self.ensure_vehicles(vehicles);
        let now = tick.time_ms;
        let p = self.params;

        for s in &states {
            self.stations[s.vehicle].get_or_insert_with(|| {
                let id = vehicles[s.vehicle].pseudonym;
                Station {
                    prover: Prover::with_cadence(id, p.wf, p.cadence_ms),
                    verifier: VerifierState::new(id, p.verifier),
                    tracker: ObjectTracker::default(),
                    proofs_sent: 0,
                    proofs_received: 0,
                    confirmations: 0,
                }
            });
        }

        // (1) who reads whose plate
        let visible = visibility(&states, &p);

        // (2) provers build and encode their messages
        let mut present: Vec<&mut Station> = Vec::with_capacity(states.len());
        {
            let mut want = states.iter().map(|s| s.vehicle).peekable();
            for (v, slot) in self.stations.iter_mut().enumerate() {
                if want.peek() == Some(&v) {
                    want.next();
                    present.push(slot.as_mut().expect("station created above"));
                }
            }
        }
        let built: Vec<Result<Built, SimError>> = present
            .par_iter_mut()
            .enumerate()
            .map(|(o, station)| {
                let targets: Vec<usize> = visible[o].iter().map(|&i| states[i].vehicle).collect();
                let sightings = station.tracker.update(&targets, now);
                let by_vehicle: BTreeMap<usize, usize> =
                    visible[o].iter().map(|&i| (states[i].vehicle, i)).collect();
                let observations: Vec<Observation> = sightings
                    .iter()
                    .map(|(v, t)| Observation {
                        target_id: vehicles[*v].pseudonym,
                        plate: vehicles[*v].plate.clone(),
                        object_id: t.object_id,
                        first_seen_ms: t.first_seen_ms,
                        last_seen_ms: now,
                    })
                    .collect();
                let proofs = station.prover.step(&observations, now);
                station.proofs_sent += proofs.len() as u64;
                let seen: Vec<usize> = sightings.iter().map(|(v, _)| *v).collect();
                if sightings.is_empty() && proofs.is_empty() {
                    return Ok((seen, None));
                }
                let cpm = Cpm {
                    sender: *station.prover.id(),
                    timestamp_ms: now,
                    objects: sightings
                        .iter()
                        .map(|(v, t)| quantize(&states[by_vehicle[v]], t.object_id))
                        .collect(),
                    proofs,
                };
                let bytes =
                    encode_cpm(&cpm).map_err(|e| SimError::Internal(format!("encode: {e}")))?;
                let decoded =
                    decode_cpm(&bytes).map_err(|e| SimError::Internal(format!("decode: {e}")))?;
                if decoded != cpm {
                    return Err(SimError::Internal(
                        "codec round trip changed a message".into(),
                    ));
                }
                Ok((seen, Some(decoded)))
            })
            .collect();
        let mut sightings = Vec::with_capacity(built.len());
        let mut cpms = Vec::with_capacity(built.len());
        for b in built {
            let (seen, cpm) = b?;
            sightings.push(seen);
            cpms.push(cpm);
        }
        let recovered: Vec<Option<RecoveredCpm<'_>>> = cpms
            .par_iter()
            .map(|c| c.as_ref().map(RecoveredCpm::recover))
            .collect();

        // (3) + (4) delivery within range, then local sightings and ingest
        let positions: Vec<Vec2> = states.iter().map(VehicleState::position).collect();
        let radio = Grid::new(&positions, p.comm_range_m);
        let keys = &self.keys;
        let arrive = now + p.comm_delay_ms;
        let events: Vec<Vec<Event>> = present
            .par_iter_mut()
            .enumerate()
            .map(|(r, station)| {
                let mut out = Vec::new();
                station.verifier.gc(now);
                for &v in &sightings[r] {
                    out.extend(station.verifier.note_local_key(keys[v], now));
                }
                for s in radio.near(positions[r]) {
                    if s == r || positions[s].distance(positions[r]) > p.comm_range_m {
                        continue;
                    }
                    if let Some(msg) = &recovered[s] {
                        station.proofs_received += msg.cpm().proofs.len() as u64;
                        out.extend(station.verifier.ingest_recovered(msg, arrive).events);
                    }
                }
                station.confirmations += out.len() as u64;
                out
            })
            .collect();

        // (5) metrics
        let confirmed_keys: HashSet<PublicKey> = present
            .iter()
            .flat_map(|s| s.verifier.confirmed().map(|(k, _)| *k))
            .collect();
        let mut observed: HashSet<usize> = sightings.iter().flatten().copied().collect();
        for &v in &observed {
            self.last_seen.insert(v, now);
        }
        if p.observed_window_ms > 0 {
            observed = states
                .iter()
                .map(|s| s.vehicle)
                .filter(|v| {
                    self.last_seen
                        .get(v)
                        .is_some_and(|&t| now - t <= p.observed_window_ms)
                })
                .collect();
        }
        let confirmed = observed
            .iter()
            .filter(|&&v| confirmed_keys.contains(&self.keys[v]))
            .count();
        let mut proofs = 0;
        let mut proofs_confirmed = 0;
        for msg in recovered.iter().flatten() {
            proofs += msg.keys().len();
            proofs_confirmed += msg
                .keys()
                .iter()
                .filter(|k| k.as_ref().is_ok_and(|k| confirmed_keys.contains(k)))
                .count();
        }
        self.last_time = Some(now);
        Ok(TickReport {
            metrics: TickMetrics::new(
                now,
                states.len(),
                observed.len(),
                confirmed,
                proofs,
                proofs_confirmed,
            ),
            events: events.into_iter().flatten().collect(),
        })
    }

    pub fn station_summaries(&self, vehicles: &[VehicleIdentity]) -> Vec<StationSummary> {
        self.stations
            .iter()
            .enumerate()
            .filter_map(|(v, s)| {
                let s = s.as_ref()?;
                let d = s.verifier.diagnostics();
                Some(StationSummary {
                    key: vehicles[v].key.clone(),
                    pseudonym: vehicles[v].pseudonym,
                    proofs_sent: s.proofs_sent,
                    proofs_received: s.proofs_received,
                    confirmations: s.confirmations,
                    recovery_failed: d.recovery_failed,
                    quota_dropped: d.quota_dropped,
                })
            })
            .collect()
    }
}

/// Runs every tick of `scenario` and collects the metrics, events and
/// per-station totals.
pub fn run_simulation(scenario: &Scenario, params: &SimParams) -> Result<SimOutput, SimError> {
    if scenario.ticks.is_empty() {
        return Err(SimError::InvalidScenario("scenario has no ticks".into()));
    }
    let mut sim = Simulation::new(*params)?;
    let mut metrics = Vec::with_capacity(scenario.ticks.len());
    let mut events = Vec::new();
    for tick in &scenario.ticks {
        let report = sim.step(tick, &scenario.vehicles)?;
        metrics.push(report.metrics);
        events.extend(report.events);
    }
    Ok(SimOutput {
        metrics,
        events,
        stations: sim.station_summaries(&scenario.vehicles),
    })
}

/// Streams a trace through the simulator, handing each tick's report to
/// `sink` as soon as it is computed. Returns the per-station totals.
pub fn run_fcd_stream<R: BufRead>(
    mut reader: FcdReader<R>,
    params: &SimParams,
    mut sink: impl FnMut(&TickReport) -> Result<(), SimError>,
) -> Result<Vec<StationSummary>, SimError> {
    let mut sim = Simulation::new(*params)?;
    let mut any = false;
    while let Some(tick) = reader.next_tick()? {
        let report = sim.step(&tick, reader.vehicles())?;
        sink(&report)?;
        any = true;
    }
    if !any {
        return Err(SimError::InvalidScenario("scenario has no ticks".into()));
    }
    Ok(sim.station_summaries(reader.vehicles()))
}
