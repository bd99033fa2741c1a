use std::collections::HashMap;

use super::{Observation, DEFAULT_CADENCE_MS};
use crate::crypto::{make_proof, Pseudonym, SharedSecret, WorkFactor};
use crate::wire::{prefix_of, ProofEntry, MAX_PROOFS};

/// Emits at most one proof per observed vehicle per cadence period, and at
/// most [`MAX_PROOFS`] per message.
#[derive(Debug, Clone)]
pub struct Prover {
    id: Pseudonym,
    wf: WorkFactor,
    cadence_ms: u64,
    last_proof_ms: HashMap<SharedSecret, u64>,
}

impl Prover {
    pub fn new(id: Pseudonym, wf: WorkFactor) -> Self {
        Self::with_cadence(id, wf, DEFAULT_CADENCE_MS)
    }

    pub fn with_cadence(id: Pseudonym, wf: WorkFactor, cadence_ms: u64) -> Self {
        Self {
            id,
            wf,
            cadence_ms,
            last_proof_ms: HashMap::new(),
        }
    }

    pub fn id(&self) -> &Pseudonym {
        &self.id
    }

    pub fn last_proof_ms(&self, ss: &SharedSecret) -> Option<u64> {
        self.last_proof_ms.get(ss).copied()
    }

    /// Builds proofs for the observations that are due. Never-proven vehicles
    /// go first, then the longest-unproven; ties break on first sighting and
    /// then pseudonym. Overflow waits for the next message.
    pub fn step(&mut self, observations: &[Observation], now_ms: u64) -> Vec<ProofEntry> {
        let mut due: Vec<(Option<u64>, u64, Pseudonym, usize, SharedSecret)> = observations
            .iter()
            .enumerate()
            .filter_map(|(idx, obs)| {
                let ss = SharedSecret::new(&obs.target_id, &obs.plate);
                let last = self.last_proof_ms(&ss);
                match last {
                    Some(t) if now_ms.saturating_sub(t) < self.cadence_ms => None,
                    _ => Some((last, obs.first_seen_ms, obs.target_id, idx, ss)),
                }
            })
            .collect();
        due.sort_by_key(|a| (a.0, a.1, a.2));
        due.truncate(MAX_PROOFS);

        due.into_iter()
            .map(|(_, _, target, idx, ss)| {
                let sig = make_proof(&ss, &self.id, self.wf);
                self.last_proof_ms.insert(ss, now_ms);
                ProofEntry {
                    object_id: observations[idx].object_id,
                    prefix: prefix_of(&target),
                    sig,
                }
            })
            .collect()
    }
}
