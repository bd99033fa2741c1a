//! Zero-knowledge proof of a shared secret over secp256k1.
//!
//! Two vehicles that both heard a target's pseudonym and saw its number plate
//! hold the same secret. Each hashes the secret into a private scalar and signs
//! its *own* pseudonym with it. Anyone holding two such signatures recovers a
//! public key from each; equal keys from distinct provers mean both provers
//! know the same secret, while neither signature reveals it.

mod vectors;

pub use vectors::{generate_vectors, read_vectors, write_vectors, TestVector, VectorError};

use std::fmt;
use std::num::NonZeroU32;
use std::str::FromStr;

use k256::ecdsa::{RecoveryId, Signature, SigningKey, VerifyingKey};
use k256::elliptic_curve::scalar::IsHigh;
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::elliptic_curve::PrimeField;
use k256::{NonZeroScalar, Scalar};
use rand::Rng;
use sha2::{Digest, Sha256};

pub const PSEUDONYM_LEN: usize = 16;
pub const PLATE_MAX_LEN: usize = 12;
pub const PUBLIC_KEY_LEN: usize = 33;
pub const SIGNATURE_LEN: usize = 65;

/// Byte placed between the pseudonym hex and the plate. Neither part can
/// contain it, which keeps the encoding injective.
const SECRET_SEPARATOR: u8 = b'|';

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("pseudonym must not be all-zero")]
    InvalidPseudonym,
    #[error("pseudonym must be {PSEUDONYM_LEN} bytes, got {0}")]
    PseudonymLength(usize),
    #[error("plate is empty after canonicalization")]
    EmptyPlate,
    #[error("plate contains invalid character {0:?}")]
    InvalidPlateChar(char),
    #[error("plate has {0} characters, at most {PLATE_MAX_LEN} allowed")]
    PlateTooLong(usize),
    #[error("shared secret must not be empty")]
    EmptySecret,
    #[error("work factor must be at least 1")]
    ZeroWorkFactor,
    #[error("recovery id must be 0 or 1, got {0}")]
    InvalidRecoveryId(u8),
    #[error("signature component out of range")]
    SignatureOutOfRange,
    #[error("no public key can be recovered from the signature")]
    RecoveryFailed,
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("invalid hex: {0}")]
    InvalidHex(String),
}

impl From<hex::FromHexError> for CryptoError {
    fn from(e: hex::FromHexError) -> Self {
        CryptoError::InvalidHex(e.to_string())
    }
}

/// A 128-bit V2X pseudonym. The all-zero value is reserved for "unknown".
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pseudonym([u8; PSEUDONYM_LEN]);

impl Pseudonym {
    pub fn new(bytes: [u8; PSEUDONYM_LEN]) -> Result<Self, CryptoError> {
        if bytes == [0; PSEUDONYM_LEN] {
            return Err(CryptoError::InvalidPseudonym);
        }
        Ok(Self(bytes))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let array: [u8; PSEUDONYM_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::PseudonymLength(bytes.len()))?;
        Self::new(array)
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        Self::from_slice(&hex::decode(text.trim())?)
    }

    /// Draws a uniformly random non-zero pseudonym.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let mut bytes = [0u8; PSEUDONYM_LEN];
            rng.fill(&mut bytes);
            if let Ok(p) = Self::new(bytes) {
                return p;
            }
        }
    }

    pub fn as_bytes(&self) -> &[u8; PSEUDONYM_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pseudonym({})", self.to_hex())
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Pseudonym {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

/// A number plate in canonical form: ASCII uppercase letters and digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NumberPlate(String);

impl NumberPlate {
    /// Canonicalizes raw plate text. Whitespace, `-`, `.`, `_` and `·` are
    /// dropped and letters are uppercased; anything else is rejected.
    pub fn parse(raw: &str) -> Result<Self, CryptoError> {
        let mut text = String::with_capacity(raw.len());
        for c in raw.chars() {
            if c.is_whitespace() || matches!(c, '-' | '.' | '_' | '·') {
                continue;
            }
            if !c.is_ascii_alphanumeric() {
                return Err(CryptoError::InvalidPlateChar(c));
            }
            text.push(c.to_ascii_uppercase());
        }
        match text.len() {
            0 => Err(CryptoError::EmptyPlate),
            len if len > PLATE_MAX_LEN => Err(CryptoError::PlateTooLong(len)),
            _ => Ok(Self(text)),
        }
    }

    /// Draws a plate shaped like `AB1234` or `ABC123`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        const LETTERS: &[u8] = b"ABCDEFGHJKLMNPRSTUVWXYZ";
        let letters = rng.gen_range(2..=3);
        let digits = rng.gen_range(3..=4);
        let mut text = String::with_capacity(letters + digits);
        for _ in 0..letters {
            text.push(LETTERS[rng.gen_range(0..LETTERS.len())] as char);
        }
        for _ in 0..digits {
            text.push(char::from(b'0' + rng.gen_range(0..10u8)));
        }
        Self(text)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NumberPlate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NumberPlate {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// The secret shared by everyone who both heard and saw one vehicle.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SharedSecret(Vec<u8>);

impl SharedSecret {
    /// `hex(pseudonym) | PLATE`.
    pub fn new(target: &Pseudonym, plate: &NumberPlate) -> Self {
        let mut bytes = Vec::with_capacity(2 * PSEUDONYM_LEN + 1 + plate.as_str().len());
        bytes.extend_from_slice(target.to_hex().as_bytes());
        bytes.push(SECRET_SEPARATOR);
        bytes.extend_from_slice(plate.as_str().as_bytes());
        Self(bytes)
    }

    /// Wraps raw secret bytes, e.g. when replaying a test-vector file.
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Result<Self, CryptoError> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(CryptoError::EmptySecret);
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

pub fn canonicalize_shared_secret(
    target_id: &Pseudonym,
    plate: &str,
) -> Result<SharedSecret, CryptoError> {
    Ok(SharedSecret::new(target_id, &NumberPlate::parse(plate)?))
}

/// Number of chained SHA-256 applications during scalar derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WorkFactor(NonZeroU32);

impl WorkFactor {
    pub const ONE: WorkFactor = WorkFactor(NonZeroU32::MIN);

    pub fn new(iterations: u32) -> Result<Self, CryptoError> {
        NonZeroU32::new(iterations)
            .map(Self)
            .ok_or(CryptoError::ZeroWorkFactor)
    }

    pub fn iterations(self) -> u32 {
        self.0.get()
    }
}

impl Default for WorkFactor {
    fn default() -> Self {
        Self::ONE
    }
}

impl fmt::Display for WorkFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A private key in `(0, n)`.
#[derive(Clone, Copy)]
pub struct PrivateScalar(NonZeroScalar);

impl PrivateScalar {
    pub fn from_bytes(bytes: &[u8; 32]) -> Option<Self> {
        Option::<NonZeroScalar>::from(NonZeroScalar::from_repr((*bytes).into())).map(Self)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_repr().into()
    }
}

impl fmt::Debug for PrivateScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateScalar(..)")
    }
}

/// A secp256k1 point in 33-byte SEC1 compressed form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_compressed(bytes: &[u8]) -> Result<Self, CryptoError> {
        let key =
            k256::PublicKey::from_sec1_bytes(bytes).map_err(|_| CryptoError::InvalidPublicKey)?;
        Ok(Self::from_point(&key))
    }

    pub fn from_hex(text: &str) -> Result<Self, CryptoError> {
        Self::from_compressed(&hex::decode(text.trim())?)
    }

    fn from_point(key: &k256::PublicKey) -> Self {
        let encoded = key.to_encoded_point(true);
        let mut bytes = [0u8; PUBLIC_KEY_LEN];
        bytes.copy_from_slice(encoded.as_bytes());
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A recoverable ECDSA signature `V ‖ R ‖ S` with big-endian `R` and `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProofSignature {
    pub v: u8,
    pub r: [u8; 32],
    pub s: [u8; 32],
}

impl ProofSignature {
    /// Checks `v ∈ {0, 1}`, `0 < r < n` and `0 < s ≤ n/2`.
    pub fn validate(&self) -> Result<(), CryptoError> {
        if self.v > 1 {
            return Err(CryptoError::InvalidRecoveryId(self.v));
        }
        let r = scalar_from_bytes(&self.r).ok_or(CryptoError::SignatureOutOfRange)?;
        let s = scalar_from_bytes(&self.s).ok_or(CryptoError::SignatureOutOfRange)?;
        if bool::from(r.is_zero()) || bool::from(s.is_zero()) || bool::from(s.is_high()) {
            return Err(CryptoError::SignatureOutOfRange);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> [u8; SIGNATURE_LEN] {
        let mut out = [0u8; SIGNATURE_LEN];
        out[0] = self.v;
        out[1..33].copy_from_slice(&self.r);
        out[33..].copy_from_slice(&self.s);
        out
    }
}

fn scalar_from_bytes(bytes: &[u8; 32]) -> Option<Scalar> {
    Option::from(Scalar::from_repr((*bytes).into()))
}

fn iterated_sha256(message: &[u8], wf: WorkFactor) -> [u8; 32] {
    let mut digest: [u8; 32] = Sha256::digest(message).into();
    for _ in 1..wf.iterations() {
        digest = Sha256::digest(digest).into();
    }
    digest
}

/// Hashes `ss`, `ss‖ss`, `ss‖ss‖ss`, … until `accept` takes the digest.
fn derive_digest(
    ss: &SharedSecret,
    wf: WorkFactor,
    accept: impl Fn(&[u8; 32]) -> bool,
) -> [u8; 32] {
    let mut candidate = ss.as_bytes().to_vec();
    loop {
        let digest = iterated_sha256(&candidate, wf);
        if accept(&digest) {
            return digest;
        }
        candidate.extend_from_slice(ss.as_bytes());
    }
}

pub fn derive_scalar(ss: &SharedSecret, wf: WorkFactor) -> PrivateScalar {
    let digest = derive_digest(ss, wf, |d| PrivateScalar::from_bytes(d).is_some());
    PrivateScalar::from_bytes(&digest).expect("accepted digest is a valid scalar")
}

pub fn public_key_of(sk: &PrivateScalar) -> PublicKey {
    PublicKey::from_point(&k256::PublicKey::from_secret_scalar(&sk.0))
}

pub fn derive_public_key(ss: &SharedSecret, wf: WorkFactor) -> PublicKey {
    public_key_of(&derive_scalar(ss, wf))
}

fn message_digest(message_id: &Pseudonym) -> [u8; 32] {
    Sha256::digest(message_id.as_bytes()).into()
}

/// Signs `message_id` with an RFC 6979 nonce and returns the low-s form.
pub fn sign_pseudonym(sk: &PrivateScalar, message_id: &Pseudonym) -> ProofSignature {
    let signing_key = SigningKey::from(sk.0);
    let (mut signature, mut recovery_id) = signing_key
        .sign_prehash_recoverable(&message_digest(message_id))
        .expect("32-byte prehash is always signable");
    if let Some(normalized) = signature.normalize_s() {
        signature = normalized;
        recovery_id = RecoveryId::new(!recovery_id.is_y_odd(), recovery_id.is_x_reduced());
    }
    // An x-coordinate above n happens with probability ~2^-128 and cannot be
    // expressed in the one-bit V field.
    assert!(
        !recovery_id.is_x_reduced(),
        "nonce point x-coordinate exceeds n"
    );
    let (r, s) = signature.split_bytes();
    ProofSignature {
        v: u8::from(recovery_id.is_y_odd()),
        r: r.into(),
        s: s.into(),
    }
}

pub fn make_proof(ss: &SharedSecret, prover_id: &Pseudonym, wf: WorkFactor) -> ProofSignature {
    sign_pseudonym(&derive_scalar(ss, wf), prover_id)
}

/// Recovers the signing key. Unrelated inputs still yield *some* key; only
/// comparison with another proof gives a verdict.
pub fn recover_key(message_id: &Pseudonym, sig: &ProofSignature) -> Result<PublicKey, CryptoError> {
    if sig.v > 1 {
        return Err(CryptoError::RecoveryFailed);
    }
    let signature =
        Signature::from_scalars(sig.r, sig.s).map_err(|_| CryptoError::RecoveryFailed)?;
    let recovery_id = RecoveryId::new(sig.v == 1, false);
    let key =
        VerifyingKey::recover_from_prehash(&message_digest(message_id), &signature, recovery_id)
            .map_err(|_| CryptoError::RecoveryFailed)?;
    Ok(PublicKey::from_point(&key.into()))
}

/// True iff both proofs recover to the same key and come from distinct provers.
pub fn match_proofs(
    a: (&Pseudonym, &ProofSignature),
    b: (&Pseudonym, &ProofSignature),
) -> Result<bool, CryptoError> {
    let key_a = recover_key(a.0, a.1)?;
    let key_b = recover_key(b.0, b.1)?;
    Ok(a.0 != b.0 && key_a == key_b)
}
