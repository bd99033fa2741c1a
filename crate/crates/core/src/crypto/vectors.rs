//! Hex test-vector files, one proof per line:
//!
//! ```text
//! ss_hex,prover_id_hex,wf,v,r_hex,s_hex,pk_compressed_hex
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    derive_public_key, make_proof, CryptoError, NumberPlate, ProofSignature, Pseudonym, PublicKey,
    SharedSecret, WorkFactor,
};

pub const VECTOR_HEADER: &str = "# ss_hex,prover_id_hex,wf,v,r_hex,s_hex,pk_compressed_hex";

#[derive(Debug, thiserror::Error)]
pub enum VectorError {
    #[error("line {line}: expected 7 comma-separated fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: {field}: {source}")]
    Field {
        line: usize,
        field: &'static str,
        source: CryptoError,
    },
    #[error("line {line}: bad work factor {text:?}")]
    WorkFactor { line: usize, text: String },
    #[error("line {line}: bad recovery id {text:?}")]
    RecoveryId { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestVector {
    pub ss: SharedSecret,
    pub prover: Pseudonym,
    pub wf: WorkFactor,
    pub sig: ProofSignature,
    pub public_key: PublicKey,
}

impl TestVector {
    pub fn compute(ss: SharedSecret, prover: Pseudonym, wf: WorkFactor) -> Self {
        let sig = make_proof(&ss, &prover, wf);
        let public_key = derive_public_key(&ss, wf);
        Self {
            ss,
            prover,
            wf,
            sig,
            public_key,
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            hex::encode(self.ss.as_bytes()),
            self.prover.to_hex(),
            self.wf,
            self.sig.v,
            hex::encode(self.sig.r),
            hex::encode(self.sig.s),
            self.public_key.to_hex()
        )
    }

    pub fn parse_line(text: &str, line: usize) -> Result<Self, VectorError> {
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(VectorError::FieldCount {
                line,
                got: fields.len(),
            });
        }
        let field = |field: &'static str| {
            move |source: CryptoError| VectorError::Field {
                line,
                field,
                source,
            }
        };
        let ss_bytes = hex::decode(fields[0]).map_err(|e| field("ss")(e.into()))?;
        let ss = SharedSecret::from_bytes(ss_bytes).map_err(field("ss"))?;
        let prover = Pseudonym::from_hex(fields[1]).map_err(field("prover"))?;
        let wf = fields[2]
            .parse::<u32>()
            .ok()
            .and_then(|n| WorkFactor::new(n).ok())
            .ok_or_else(|| VectorError::WorkFactor {
                line,
                text: fields[2].to_string(),
            })?;
        let v = fields[3]
            .parse::<u8>()
            .map_err(|_| VectorError::RecoveryId {
                line,
                text: fields[3].to_string(),
            })?;
        let r = decode_32(fields[4]).map_err(field("r"))?;
        let s = decode_32(fields[5]).map_err(field("s"))?;
        let public_key = PublicKey::from_hex(fields[6]).map_err(field("pk"))?;
        Ok(Self {
            ss,
            prover,
            wf,
            sig: ProofSignature { v, r, s },
            public_key,
        })
    }
}

fn decode_32(text: &str) -> Result<[u8; 32], CryptoError> {
    let bytes = hex::decode(text)?;
    bytes
        .try_into()
        .map_err(|_| CryptoError::SignatureOutOfRange)
}

pub fn read_vectors<R: BufRead>(reader: R) -> Result<Vec<TestVector>, VectorError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(TestVector::parse_line(trimmed, idx + 1)?);
    }
    Ok(out)
}

pub fn write_vectors<W: Write>(mut writer: W, vectors: &[TestVector]) -> io::Result<()> {
    writeln!(writer, "{VECTOR_HEADER}")?;
    for v in vectors {
        writeln!(writer, "{}", v.to_line())?;
    }
    Ok(())
}

/// Random (target, plate, prover) triples from a seeded generator.
pub fn generate_vectors(count: usize, seed: u64, wf: WorkFactor) -> Vec<TestVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let target = Pseudonym::random(&mut rng);
            let plate = NumberPlate::random(&mut rng);
            let prover = Pseudonym::random(&mut rng);
            TestVector::compute(SharedSecret::new(&target, &plate), prover, wf)
        })
        .collect()
}
