//! Hand-built CPMs for verifier scripts.

use rand_chacha::ChaCha8Rng;
use zkpot::wire::prefix_of;
use zkpot::{
    make_proof, Cpm, NumberPlate, PerceivedObject, ProofEntry, Pseudonym, SharedSecret,
    VerifierConfig, VerifierState, WorkFactor,
};

pub fn object(object_id: u8) -> PerceivedObject {
    PerceivedObject {
        object_id,
        x_cm: 0,
        y_cm: 1000,
        speed_cms: 0,
        heading_cdeg: 0,
    }
}

/// A CPM from `sender` carrying one proof per target, object ids 0, 1, ...
pub fn cpm(sender: Pseudonym, targets: &[(Pseudonym, SharedSecret)], t: u64) -> Cpm {
    Cpm {
        sender,
        timestamp_ms: t,
        objects: (0..targets.len() as u8).map(object).collect(),
        proofs: targets
            .iter()
            .enumerate()
            .map(|(i, (id, ss))| ProofEntry {
                object_id: i as u8,
                prefix: prefix_of(id),
                sig: make_proof(ss, &sender, WorkFactor::ONE),
            })
            .collect(),
    }
}

pub fn target(rng: &mut ChaCha8Rng) -> (Pseudonym, SharedSecret) {
    let id = Pseudonym::random(rng);
    (id, SharedSecret::new(&id, &NumberPlate::random(rng)))
}

pub fn verifier(rng: &mut ChaCha8Rng) -> VerifierState {
    VerifierState::new(Pseudonym::random(rng), VerifierConfig::default())
}
