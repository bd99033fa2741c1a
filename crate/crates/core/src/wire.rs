//! Byte layout of the extended collective perception message.
//!
//! All multi-byte integers are big-endian.
//!
//! ```text
//! CPM           version(1)=1 ‖ sender(16) ‖ timestamp_ms(8)
//!               ‖ n_objects(1) ‖ PerceivedObject × n_objects
//!               ‖ n_proofs(1)  ‖ ProofEntry × n_proofs          (n_proofs ≤ 8)
//! PerceivedObject  object_id(1) ‖ x_cm(i32) ‖ y_cm(i32) ‖ speed_cms(u16) ‖ heading_cdeg(u16)
//! ProofEntry       object_id(1) ‖ prefix(4) ‖ v(1) ‖ r(32) ‖ s(32)
//! ```

use crate::crypto::{CryptoError, ProofSignature, Pseudonym, PSEUDONYM_LEN};

pub const CPM_VERSION: u8 = 1;
pub const PROOF_ENTRY_LEN: usize = 70;
pub const PERCEIVED_OBJECT_LEN: usize = 13;
pub const CPM_HEADER_LEN: usize = 1 + PSEUDONYM_LEN + 8;
/// Length of a CPM with no objects and no proofs.
pub const CPM_EMPTY_LEN: usize = CPM_HEADER_LEN + 1 + 1;
pub const MAX_PROOFS: usize = 8;
pub const MAX_OBJECTS: usize = u8::MAX as usize;
pub const HEADING_LIMIT_CDEG: u16 = 36_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("proof entry must be {PROOF_ENTRY_LEN} bytes, got {0}")]
    TruncatedEntry(usize),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("recovery id must be 0 or 1, got {0}")]
    InvalidRecoveryId(u8),
    #[error("signature r or s out of range")]
    SignatureOutOfRange,
    #[error("unsupported CPM version {0}")]
    BadVersion(u8),
    #[error("{0} proof entries exceed the limit of {MAX_PROOFS}")]
    TooManyProofs(usize),
    #[error("{0} perceived objects exceed the limit of {MAX_OBJECTS}")]
    TooManyObjects(usize),
    #[error("proof refers to object {0}, which is not in the message")]
    DanglingObjectRef(u8),
    #[error("object id {0} appears twice")]
    DuplicateObjectId(u8),
    #[error("heading {0} cdeg is not below 36000")]
    InvalidHeading(u16),
    #[error("sender pseudonym is invalid")]
    InvalidSender,
    #[error("message truncated at byte {offset}: needed {needed} more")]
    Truncated { offset: usize, needed: usize },
}

impl From<CryptoError> for WireError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::InvalidRecoveryId(v) => WireError::InvalidRecoveryId(v),
            _ => WireError::SignatureOutOfRange,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProofEntry {
    pub object_id: u8,
    pub prefix: [u8; 4],
    pub sig: ProofSignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerceivedObject {
    pub object_id: u8,
    pub x_cm: i32,
    pub y_cm: i32,
    pub speed_cms: u16,
    pub heading_cdeg: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpm {
    pub sender: Pseudonym,
    pub timestamp_ms: u64,
    pub objects: Vec<PerceivedObject>,
    pub proofs: Vec<ProofEntry>,
}

impl Cpm {
    pub fn encoded_len(&self) -> usize {
        CPM_EMPTY_LEN
            + PERCEIVED_OBJECT_LEN * self.objects.len()
            + PROOF_ENTRY_LEN * self.proofs.len()
    }

    pub fn object(&self, object_id: u8) -> Option<&PerceivedObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Checks the invariants shared by encoding and decoding.
    pub fn validate(&self) -> Result<(), WireError> {
        if self.objects.len() > MAX_OBJECTS {
            return Err(WireError::TooManyObjects(self.objects.len()));
        }
        if self.proofs.len() > MAX_PROOFS {
            return Err(WireError::TooManyProofs(self.proofs.len()));
        }
        let mut seen = [false; 256];
        for o in &self.objects {
            if o.heading_cdeg >= HEADING_LIMIT_CDEG {
                return Err(WireError::InvalidHeading(o.heading_cdeg));
            }
            if std::mem::replace(&mut seen[o.object_id as usize], true) {
                return Err(WireError::DuplicateObjectId(o.object_id));
            }
        }
        for p in &self.proofs {
            p.sig.validate()?;
            if !seen[p.object_id as usize] {
                return Err(WireError::DanglingObjectRef(p.object_id));
            }
        }
        Ok(())
    }
}

/// The leading four bytes of a pseudonym. Only a filter hint; never a verdict.
pub fn prefix_of(p: &Pseudonym) -> [u8; 4] {
    let mut out = [0u8; 4];
    out.copy_from_slice(&p.as_bytes()[..4]);
    out
}

fn write_entry(e: &ProofEntry, out: &mut [u8]) {
    out[0] = e.object_id;
    out[1..5].copy_from_slice(&e.prefix);
    out[5] = e.sig.v;
    out[6..38].copy_from_slice(&e.sig.r);
    out[38..70].copy_from_slice(&e.sig.s);
}

pub fn encode_proof_entry(e: &ProofEntry) -> Result<[u8; PROOF_ENTRY_LEN], WireError> {
    e.sig.validate()?;
    let mut out = [0u8; PROOF_ENTRY_LEN];
    write_entry(e, &mut out);
    Ok(out)
}

pub fn decode_proof_entry(bytes: &[u8]) -> Result<ProofEntry, WireError> {
    if bytes.len() < PROOF_ENTRY_LEN {
        return Err(WireError::TruncatedEntry(bytes.len()));
    }
    if bytes.len() > PROOF_ENTRY_LEN {
        return Err(WireError::TrailingBytes(bytes.len() - PROOF_ENTRY_LEN));
    }
    let mut prefix = [0u8; 4];
    prefix.copy_from_slice(&bytes[1..5]);
    let mut r = [0u8; 32];
    r.copy_from_slice(&bytes[6..38]);
    let mut s = [0u8; 32];
    s.copy_from_slice(&bytes[38..70]);
    let entry = ProofEntry {
        object_id: bytes[0],
        prefix,
        sig: ProofSignature { v: bytes[5], r, s },
    };
    entry.sig.validate()?;
    Ok(entry)
}

pub fn encode_cpm(m: &Cpm) -> Result<Vec<u8>, WireError> {
    m.validate()?;
    let mut out = Vec::with_capacity(m.encoded_len());
    out.push(CPM_VERSION);
    out.extend_from_slice(m.sender.as_bytes());
    out.extend_from_slice(&m.timestamp_ms.to_be_bytes());
    out.push(m.objects.len() as u8);
    for o in &m.objects {
        out.push(o.object_id);
        out.extend_from_slice(&o.x_cm.to_be_bytes());
        out.extend_from_slice(&o.y_cm.to_be_bytes());
        out.extend_from_slice(&o.speed_cms.to_be_bytes());
        out.extend_from_slice(&o.heading_cdeg.to_be_bytes());
    }
    out.push(m.proofs.len() as u8);
    for p in &m.proofs {
        let start = out.len();
        out.resize(start + PROOF_ENTRY_LEN, 0);
        write_entry(p, &mut out[start..]);
    }
    debug_assert_eq!(out.len(), m.encoded_len());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let rest = self.bytes.len() - self.offset;
        if rest < n {
            return Err(WireError::Truncated {
                offset: self.offset,
                needed: n - rest,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
}

/// Decodes one CPM from the front of `bytes`, returning it with the number of
/// bytes consumed.
pub fn decode_cpm_prefix(bytes: &[u8]) -> Result<(Cpm, usize), WireError> {
    let mut r = Reader { bytes, offset: 0 };
    let version = r.u8()?;
    if version != CPM_VERSION {
        return Err(WireError::BadVersion(version));
    }
    let sender = Pseudonym::new(r.array()?).map_err(|_| WireError::InvalidSender)?;
    let timestamp_ms = u64::from_be_bytes(r.array()?);
    let n_objects = r.u8()? as usize;
    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        objects.push(PerceivedObject {
            object_id: r.u8()?,
            x_cm: i32::from_be_bytes(r.array()?),
            y_cm: i32::from_be_bytes(r.array()?),
            speed_cms: u16::from_be_bytes(r.array()?),
            heading_cdeg: u16::from_be_bytes(r.array()?),
        });
    }
    let n_proofs = r.u8()? as usize;
    if n_proofs > MAX_PROOFS {
        return Err(WireError::TooManyProofs(n_proofs));
    }
    let mut proofs = Vec::with_capacity(n_proofs);
    for _ in 0..n_proofs {
        proofs.push(decode_proof_entry(r.take(PROOF_ENTRY_LEN)?)?);
    }
    let cpm = Cpm {
        sender,
        timestamp_ms,
        objects,
        proofs,
    };
    cpm.validate()?;
    Ok((cpm, r.offset))
}

pub fn decode_cpm(bytes: &[u8]) -> Result<Cpm, WireError> {
    let (cpm, used) = decode_cpm_prefix(bytes)?;
    if used != bytes.len() {
        return Err(WireError::TrailingBytes(bytes.len() - used));
    }
    Ok(cpm)
}
