//! The two stages added to a collective-perception station: a prover that
//! attaches proofs to outgoing CPMs, and a verifier that gates incoming
//! objects until independent proofs about them agree.

mod prover;
mod verifier;

pub use prover::Prover;
pub use verifier::{
    Diagnostics, ForwardedObject, IngestOutcome, ProofRecord, RecoveredCpm, VerifierConfig,
    VerifierState,
};

use std::fmt;
use std::str::FromStr;

use crate::crypto::{NumberPlate, Pseudonym, PublicKey};

pub const DEFAULT_CADENCE_MS: u64 = 3_000;

/// A vehicle this station both heard (pseudonym) and saw (plate).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub target_id: Pseudonym,
    pub plate: NumberPlate,
    pub object_id: u8,
    pub first_seen_ms: u64,
    pub last_seen_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    ObjectConfirmed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ObjectConfirmed => "ObjectConfirmed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A verifier event. `provers` lists every independent source in ascending
/// order; the station itself appears there when its own sighting counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time_ms: u64,
    pub station: Pseudonym,
    pub kind: EventKind,
    pub key: PublicKey,
    pub provers: Vec<Pseudonym>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed event line: {0}")]
pub struct EventParseError(pub String);

impl Event {
    /// `time_ms,station_hex,event_kind,key_hex,prover_hex;prover_hex;...`
    pub fn to_log_line(&self) -> String {
        let provers: Vec<String> = self.provers.iter().map(Pseudonym::to_hex).collect();
        format!(
            "{},{},{},{},{}",
            self.time_ms,
            self.station,
            self.kind,
            self.key,
            provers.join(";")
        )
    }
}

impl FromStr for Event {
    type Err = EventParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let err = || EventParseError(line.to_string());
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(err());
        }
        let kind = match fields[2] {
            "ObjectConfirmed" => EventKind::ObjectConfirmed,
            _ => return Err(err()),
        };
        let provers = fields[4]
            .split(';')
            .map(Pseudonym::from_hex)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        Ok(Event {
            time_ms: fields[0].parse().map_err(|_| err())?,
            station: fields[1].parse().map_err(|_| err())?,
            kind,
            key: PublicKey::from_hex(fields[3]).map_err(|_| err())?,
            provers,
        })
    }
}
