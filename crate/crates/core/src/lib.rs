//! Proof of traffic: vehicles that independently saw the same car publish
//! zero-knowledge proofs, and any third party holding two of them can confirm
//! the car exists without learning its pseudonym or plate.
//!
//! * [`crypto`]: shared-secret derivation, proofs, key recovery, matching.
//! * [`wire`]: the extended CPM and its 70-byte proof entries.
//! * [`station`]: prover and gatekeeping verifier state machines.
//! * [`sim`]: traffic simulator producing the confirmation metrics.

pub mod crypto;
pub mod sim;
pub mod station;
pub mod wire;

pub use crypto::{
    canonicalize_shared_secret, derive_public_key, derive_scalar, make_proof, match_proofs,
    recover_key, CryptoError, NumberPlate, PrivateScalar, ProofSignature, Pseudonym, PublicKey,
    SharedSecret, WorkFactor,
};
pub use sim::{run_simulation, SimError, SimParams, TickMetrics};
pub use station::{Event, EventKind, Observation, Prover, VerifierConfig, VerifierState};
pub use wire::{Cpm, PerceivedObject, ProofEntry, WireError};
