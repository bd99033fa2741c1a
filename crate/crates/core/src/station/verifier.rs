use std::collections::{BTreeMap, HashMap};

use super::{Event, EventKind};
use crate::crypto::{
    derive_public_key, recover_key, CryptoError, Pseudonym, PublicKey, SharedSecret, WorkFactor,
};
use crate::wire::{Cpm, PerceivedObject, ProofEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifierConfig {
    /// Unmatched proofs kept per prover before further proofs are ignored.
    pub quota_limit: usize,
    /// Lifetime of an unconfirmed proof.
    pub ttl_ms: u64,
    /// Lifetime of a confirmed key group, counted from confirmation.
    pub ttl_confirmed_ms: u64,
    /// Independent sources needed for confirmation; at least 2.
    pub confirm_threshold: usize,
    /// Whether the station's own sighting counts as one source.
    pub local_counts: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            quota_limit: 8,
            ttl_ms: 5_000,
            ttl_confirmed_ms: 10_000,
            confirm_threshold: 2,
            local_counts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofRecord {
    pub prover: Pseudonym,
    pub entry: ProofEntry,
    pub recovered_key: PublicKey,
    pub received_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub recovery_failed: u64,
    pub quota_dropped: u64,
    pub duplicates: u64,
    pub evicted: u64,
}

/// A CPM whose proof keys have been recovered against its sender. Recovery
/// depends only on the message, so one broadcast can be recovered once and
/// handed to every receiver.
#[derive(Debug, Clone)]
pub struct RecoveredCpm<'a> {
    cpm: &'a Cpm,
    keys: Vec<Result<PublicKey, CryptoError>>,
}

impl<'a> RecoveredCpm<'a> {
    pub fn recover(cpm: &'a Cpm) -> Self {
        let keys = cpm
            .proofs
            .iter()
            .map(|entry| recover_key(&cpm.sender, &entry.sig))
            .collect();
        Self { cpm, keys }
    }

    pub fn cpm(&self) -> &'a Cpm {
        self.cpm
    }

    pub fn keys(&self) -> &[Result<PublicKey, CryptoError>] {
        &self.keys
    }
}

/// A received object passed on to planning, tagged with its confirmation state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardedObject {
    pub sender: Pseudonym,
    pub object: PerceivedObject,
    pub confirmed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    pub events: Vec<Event>,
    pub forwarded: Vec<ForwardedObject>,
}

#[derive(Debug, Clone, Default)]
struct KeyGroup {
    /// At most one record per prover.
    records: Vec<ProofRecord>,
    local_ms: Option<u64>,
    confirmed_ms: Option<u64>,
}

impl KeyGroup {
    fn has_prover(&self, prover: &Pseudonym) -> bool {
        self.records.iter().any(|r| &r.prover == prover)
    }

    fn is_empty(&self) -> bool {
        self.records.is_empty() && self.local_ms.is_none()
    }
}

/// Proof database of one station. Single writer; every mutation emits its
/// events synchronously.
#[derive(Debug, Clone)]
pub struct VerifierState {
    owner: Pseudonym,
    config: VerifierConfig,
    by_key: BTreeMap<PublicKey, KeyGroup>,
    unmatched: HashMap<Pseudonym, usize>,
    objects: HashMap<(Pseudonym, u8), PublicKey>,
    diagnostics: Diagnostics,
}

impl VerifierState {
    pub fn new(owner: Pseudonym, config: VerifierConfig) -> Self {
        assert!(
            config.confirm_threshold >= 2,
            "confirmation needs two sources"
        );
        Self {
            owner,
            config,
            by_key: BTreeMap::new(),
            unmatched: HashMap::new(),
            objects: HashMap::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn owner(&self) -> &Pseudonym {
        &self.owner
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    pub fn unmatched_count(&self, prover: &Pseudonym) -> usize {
        self.unmatched.get(prover).copied().unwrap_or(0)
    }

    /// Number of stored remote proof records.
    pub fn record_count(&self) -> usize {
        self.by_key.values().map(|g| g.records.len()).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &ProofRecord> {
        self.by_key.values().flat_map(|g| g.records.iter())
    }

    pub fn is_confirmed(&self, key: &PublicKey) -> bool {
        self.by_key
            .get(key)
            .is_some_and(|g| g.confirmed_ms.is_some())
    }

    /// Confirmed keys with their confirmation times.
    pub fn confirmed(&self) -> impl Iterator<Item = (&PublicKey, u64)> {
        self.by_key
            .iter()
            .filter_map(|(k, g)| g.confirmed_ms.map(|t| (k, t)))
    }

    pub fn ingest(&mut self, cpm: &Cpm, now_ms: u64) -> IngestOutcome {
        self.ingest_recovered(&RecoveredCpm::recover(cpm), now_ms)
    }

    /// Stores the message's proofs and forwards its objects. Keys are always
    /// recovered against the message sender, so a proof relayed by anyone
    /// else lands under an unrelated key.
    pub fn ingest_recovered(&mut self, msg: &RecoveredCpm<'_>, now_ms: u64) -> IngestOutcome {
        let cpm = msg.cpm();
        let mut outcome = IngestOutcome::default();
        if cpm.sender == self.owner {
            return outcome;
        }
        for (entry, key) in cpm.proofs.iter().zip(msg.keys()) {
            let Ok(key) = key else {
                self.diagnostics.recovery_failed += 1;
                continue;
            };
            if let Some(event) = self.insert_proof(cpm.sender, *entry, *key, now_ms) {
                outcome.events.push(event);
            }
        }
        outcome.forwarded = cpm
            .objects
            .iter()
            .map(|object| ForwardedObject {
                sender: cpm.sender,
                object: *object,
                confirmed: self
                    .objects
                    .get(&(cpm.sender, object.object_id))
                    .is_some_and(|k| self.is_confirmed(k)),
            })
            .collect();
        outcome
    }

    fn insert_proof(
        &mut self,
        prover: Pseudonym,
        entry: ProofEntry,
        key: PublicKey,
        now_ms: u64,
    ) -> Option<Event> {
        if self.by_key.get(&key).is_some_and(|g| g.has_prover(&prover)) {
            self.diagnostics.duplicates += 1;
            return None;
        }
        let unmatched = self.unmatched_count(&prover);
        if unmatched >= self.config.quota_limit {
            self.diagnostics.quota_dropped += 1;
            return None;
        }
        let group = self.by_key.entry(key).or_default();
        group.records.push(ProofRecord {
            prover,
            entry,
            recovered_key: key,
            received_ms: now_ms,
        });
        let confirmed = group.confirmed_ms.is_some();
        self.objects.insert((prover, entry.object_id), key);
        if confirmed {
            return None;
        }
        self.unmatched.insert(prover, unmatched + 1);
        self.try_confirm(key, now_ms)
    }

    /// Registers the station's own sighting of the vehicle behind `ss`.
    pub fn note_local(&mut self, ss: &SharedSecret, wf: WorkFactor, now_ms: u64) -> Option<Event> {
        self.note_local_key(derive_public_key(ss, wf), now_ms)
    }

    /// Same as [`note_local`](Self::note_local) with the key already derived.
    pub fn note_local_key(&mut self, key: PublicKey, now_ms: u64) -> Option<Event> {
        let group = self.by_key.entry(key).or_default();
        group.local_ms = Some(now_ms);
        if group.confirmed_ms.is_some() {
            return None;
        }
        self.try_confirm(key, now_ms)
    }

    fn try_confirm(&mut self, key: PublicKey, now_ms: u64) -> Option<Event> {
        let group = self.by_key.get_mut(&key)?;
        let local = self.config.local_counts && group.local_ms.is_some();
        let sources = group.records.len() + usize::from(local);
        if group.records.is_empty() || sources < self.config.confirm_threshold {
            return None;
        }
        group.confirmed_ms = Some(now_ms);
        let mut provers: Vec<Pseudonym> = group.records.iter().map(|r| r.prover).collect();
        for prover in &provers {
            release(&mut self.unmatched, prover);
        }
        if local {
            provers.push(self.owner);
        }
        provers.sort();
        Some(Event {
            time_ms: now_ms,
            station: self.owner,
            kind: EventKind::ObjectConfirmed,
            key,
            provers,
        })
    }

    /// Drops unconfirmed proofs older than `ttl_ms` and confirmed groups older
    /// than `ttl_confirmed_ms`. Returns the number of proof records removed.
    pub fn gc(&mut self, now_ms: u64) -> usize {
        let VerifierConfig {
            ttl_ms,
            ttl_confirmed_ms,
            ..
        } = self.config;
        let mut evicted = 0;
        let mut dead = Vec::new();
        for (key, group) in self.by_key.iter_mut() {
            match group.confirmed_ms {
                Some(t) if now_ms.saturating_sub(t) > ttl_confirmed_ms => {
                    evicted += group.records.len();
                    dead.push((*key, std::mem::take(&mut group.records)));
                    group.local_ms = None;
                }
                Some(_) => {}
                None => {
                    let (keep, old): (Vec<_>, Vec<_>) = std::mem::take(&mut group.records)
                        .into_iter()
                        .partition(|r| now_ms.saturating_sub(r.received_ms) <= ttl_ms);
                    group.records = keep;
                    for r in &old {
                        release(&mut self.unmatched, &r.prover);
                    }
                    evicted += old.len();
                    if group
                        .local_ms
                        .is_some_and(|t| now_ms.saturating_sub(t) > ttl_ms)
                    {
                        group.local_ms = None;
                    }
                    if !old.is_empty() {
                        dead.push((*key, old));
                    }
                }
            }
        }
        for (key, records) in dead {
            for r in records {
                let slot = (r.prover, r.entry.object_id);
                if self.objects.get(&slot) == Some(&key) {
                    self.objects.remove(&slot);
                }
            }
        }
        self.by_key.retain(|_, g| !g.is_empty());
        self.diagnostics.evicted += evicted as u64;
        evicted
    }
}

fn release(unmatched: &mut HashMap<Pseudonym, usize>, prover: &Pseudonym) {
    if let Some(n) = unmatched.get_mut(prover) {
        *n -= 1;
        if *n == 0 {
            unmatched.remove(prover);
        }
    }
}
