//! Brute-force re-run of a scenario: exhaustive visibility, keys from the
//! bigint curve, and the verifier rules replayed over flat record lists.

use std::collections::{BTreeMap, HashMap, HashSet};

use zkpot::sim::{Scenario, SimParams, TickMetrics};
use zkpot::Pseudonym;

use super::curve::secp256k1;
use super::geom::{hears, sees};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEvent {
    pub time_ms: u64,
    pub station: Pseudonym,
    pub key: Vec<u8>,
    pub provers: Vec<Pseudonym>,
}

pub struct Replay {
    pub metrics: Vec<TickMetrics>,
    pub events: Vec<OracleEvent>,
}

struct Rec {
    prover: usize,
    key: Vec<u8>,
    at: u64,
}

#[derive(Default)]
struct Station {
    recs: Vec<Rec>,
    local: HashMap<Vec<u8>, u64>,
    confirmed: HashMap<Vec<u8>, u64>,
    last_proof: HashMap<usize, u64>,
    first_seen: HashMap<usize, u64>,
}

/// The secret bytes spelled out by hand: hex pseudonym, a bar, the plate.
pub fn secret_bytes(pseudonym: &Pseudonym, plate: &str) -> Vec<u8> {
    let mut out: Vec<u8> = pseudonym
        .as_bytes()
        .iter()
        .flat_map(|b| format!("{b:02x}").into_bytes())
        .collect();
    out.push(b'|');
    out.extend_from_slice(plate.as_bytes());
    out
}

pub fn replay(s: &Scenario, p: &SimParams) -> Replay {
    let curve = secp256k1();
    let wf = p.wf.iterations();
    let v = &p.verifier;
    let keys: Vec<Vec<u8>> = s
        .vehicles
        .iter()
        .map(|id| curve.public_key(&secret_bytes(&id.pseudonym, id.plate.as_str()), wf))
        .collect();
    let pseudo = |i: usize| s.vehicles[i].pseudonym;

    let mut stations: BTreeMap<usize, Station> = BTreeMap::new();
    let mut last_seen: HashMap<usize, u64> = HashMap::new();
    let mut metrics = Vec::new();
    let mut events = Vec::new();

    for tick in &s.ticks {
        let now = tick.time_ms;
        let arrive = now + p.comm_delay_ms;
        let mut states = tick.states.clone();
        states.sort_by_key(|x| x.vehicle);
        let ids: Vec<usize> = states.iter().map(|x| x.vehicle).collect();
        for &i in &ids {
            stations.entry(i).or_default();
        }

        // visible[a] = targets a reads and hears, ascending
        let visible: Vec<Vec<usize>> = states
            .iter()
            .map(|o| {
                states
                    .iter()
                    .filter(|t| t.vehicle != o.vehicle && hears(o, t, p) && sees(o, t, &states, p))
                    .map(|t| t.vehicle)
                    .collect()
            })
            .collect();
        assert!(
            visible.iter().all(|v| v.len() <= 255),
            "oracle assumes no id overflow"
        );

        // provers
        let mut sent: Vec<Vec<usize>> = Vec::new();
        for (a, &o) in ids.iter().enumerate() {
            let st = stations.get_mut(&o).unwrap();
            let prev = std::mem::take(&mut st.first_seen);
            for &t in &visible[a] {
                st.first_seen
                    .insert(t, prev.get(&t).copied().unwrap_or(now));
            }
            let mut due: Vec<(Option<u64>, u64, Pseudonym, usize)> = visible[a]
                .iter()
                .filter(|t| {
                    st.last_proof
                        .get(t)
                        .is_none_or(|&l| now - l >= p.cadence_ms)
                })
                .map(|&t| {
                    (
                        st.last_proof.get(&t).copied(),
                        st.first_seen[&t],
                        pseudo(t),
                        t,
                    )
                })
                .collect();
            due.sort();
            due.truncate(8);
            let targets: Vec<usize> = due.into_iter().map(|d| d.3).collect();
            for &t in &targets {
                st.last_proof.insert(t, now);
            }
            sent.push(targets);
        }

        // receivers
        for (b, &r) in ids.iter().enumerate() {
            let st = stations.get_mut(&r).unwrap();
            let expired: Vec<Vec<u8>> = st
                .confirmed
                .iter()
                .filter(|(_, &c)| now - c > v.ttl_confirmed_ms)
                .map(|(k, _)| k.clone())
                .collect();
            for k in &expired {
                st.recs.retain(|x| &x.key != k);
                st.local.remove(k);
                st.confirmed.remove(k);
            }
            let confirmed = st.confirmed.clone();
            st.recs
                .retain(|x| confirmed.contains_key(&x.key) || now - x.at <= v.ttl_ms);
            st.local
                .retain(|k, l| confirmed.contains_key(k) || now - *l <= v.ttl_ms);

            let try_confirm = |st: &mut Station,
                               key: &[u8],
                               at: u64,
                               events: &mut Vec<OracleEvent>| {
                let mut provers: Vec<Pseudonym> = st
                    .recs
                    .iter()
                    .filter(|x| x.key == key)
                    .map(|x| pseudo(x.prover))
                    .collect();
                let local = v.local_counts && st.local.contains_key(key);
                if provers.is_empty() || provers.len() + usize::from(local) < v.confirm_threshold {
                    return;
                }
                st.confirmed.insert(key.to_vec(), at);
                if local {
                    provers.push(pseudo(r));
                }
                provers.sort();
                events.push(OracleEvent {
                    time_ms: at,
                    station: pseudo(r),
                    key: key.to_vec(),
                    provers,
                });
            };

            for &t in &visible[b] {
                st.local.insert(keys[t].clone(), now);
                if !st.confirmed.contains_key(&keys[t]) {
                    try_confirm(st, &keys[t], now, &mut events);
                }
            }
            for (a, &sender) in ids.iter().enumerate() {
                if sender == r || !hears(&states[a], &states[b], p) {
                    continue;
                }
                for &t in &sent[a] {
                    let key = &keys[t];
                    if st.recs.iter().any(|x| x.prover == sender && &x.key == key) {
                        continue;
                    }
                    let open = st
                        .recs
                        .iter()
                        .filter(|x| x.prover == sender && !st.confirmed.contains_key(&x.key))
                        .count();
                    if open >= v.quota_limit {
                        continue;
                    }
                    st.recs.push(Rec {
                        prover: sender,
                        key: key.clone(),
                        at: arrive,
                    });
                    if !st.confirmed.contains_key(key) {
                        try_confirm(st, key, arrive, &mut events);
                    }
                }
            }
        }

        // metrics
        let confirmed: HashSet<&Vec<u8>> = ids
            .iter()
            .flat_map(|i| stations[i].confirmed.keys())
            .collect();
        let mut observed: HashSet<usize> = visible.iter().flatten().copied().collect();
        for &t in &observed {
            last_seen.insert(t, now);
        }
        if p.observed_window_ms > 0 {
            observed = ids
                .iter()
                .copied()
                .filter(|i| {
                    last_seen
                        .get(i)
                        .is_some_and(|&t| now - t <= p.observed_window_ms)
                })
                .collect();
        }
        let n_confirmed = observed
            .iter()
            .filter(|&&t| confirmed.contains(&keys[t]))
            .count();
        let proofs: usize = sent.iter().map(Vec::len).sum();
        let proofs_confirmed = sent
            .iter()
            .flatten()
            .filter(|&&t| confirmed.contains(&keys[t]))
            .count();
        metrics.push(TickMetrics::new(
            now,
            ids.len(),
            observed.len(),
            n_confirmed,
            proofs,
            proofs_confirmed,
        ));
    }
    Replay { metrics, events }
}
