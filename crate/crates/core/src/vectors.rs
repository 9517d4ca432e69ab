//! Conformance test vectors for the address derivation.
//!
//! File format: one vector per line, four space-separated fields —
//! `hex(base) hex(ptk) u hex(expected_mac)` — with `#` comments allowed.
//! The known-answer vectors were frozen against an independent SHA-256
//! reference implementation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mac::MacAddress;
use crate::rerand::{derive_rerand_mac, Ptk};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConformanceVector {
    pub base: MacAddress,
    pub ptk: Ptk,
    pub u: u64,
    pub expected: MacAddress,
}

impl ConformanceVector {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.base.to_hex(),
            self.ptk.to_hex(),
            self.u,
            self.expected.to_hex()
        )
    }

    pub fn parse_line(line: &str) -> Result<ConformanceVector, VectorError> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(VectorError::Malformed(line.to_string()));
        }
        Ok(ConformanceVector {
            base: MacAddress::from_hex(fields[0])
                .map_err(|_| VectorError::Malformed(line.to_string()))?,
            ptk: Ptk::from_hex(fields[1]).ok_or_else(|| VectorError::Malformed(line.to_string()))?,
            u: fields[2]
                .parse()
                .map_err(|_| VectorError::Malformed(line.to_string()))?,
            expected: MacAddress::from_hex(fields[3])
                .map_err(|_| VectorError::Malformed(line.to_string()))?,
        })
    }

    /// Re-derives the address and compares.
    pub fn check(&self) -> bool {
        derive_rerand_mac(self.base, &self.ptk, self.u) == self.expected
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VectorError {
    #[error("malformed vector line: {0:?}")]
    Malformed(String),
    #[error("{failed} of {total} vectors mismatched")]
    Mismatch { failed: usize, total: usize },
}

/// The frozen known-answer vectors (independent SHA-256 reference).
pub fn known_answer_vectors() -> Vec<ConformanceVector> {
    let parse = |b: &str, p: [u8; 32], u: u64, e: &str| ConformanceVector {
        base: MacAddress::from_hex(b).unwrap(),
        ptk: Ptk(p),
        u,
        expected: MacAddress::from_hex(e).unwrap(),
    };
    vec![
        parse("020000000001", [0u8; 32], 0, "1a5da7c7a12b"),
        parse(
            "0a1b2c3d4e5f",
            core::array::from_fn(|i| i as u8),
            56_666_666,
            "9657ef5ebe69",
        ),
        parse(
            "c6ffb2040506",
            [0xFF; 32],
            (1 << 40) + 12_345,
            "8a35332bd6a4",
        ),
    ]
}

/// Known-answer vectors plus `n` seeded random ones, expected values
/// computed by this implementation (for cross-implementation checks).
pub fn generate_vectors(seed: u64, n: usize) -> Vec<ConformanceVector> {
    let mut out = known_answer_vectors();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let mut octets = [0u8; 6];
        rng.fill_bytes(&mut octets);
        let base = MacAddress(octets).with_randomized_bits();
        let ptk = Ptk::from_rng(&mut rng);
        let u = rng.next_u64();
        out.push(ConformanceVector {
            base,
            ptk,
            u,
            expected: derive_rerand_mac(base, &ptk, u),
        });
    }
    out
}

pub fn write_vectors(vectors: &[ConformanceVector]) -> String {
    let mut s = String::from("# base ptk u expected_mac\n");
    for v in vectors {
        s.push_str(&v.to_line());
        s.push('\n');
    }
    s
}

pub fn read_vectors(text: &str) -> Result<Vec<ConformanceVector>, VectorError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(ConformanceVector::parse_line)
        .collect()
}

/// Checks every vector; Ok(total) when all pass.
pub fn check_vectors(vectors: &[ConformanceVector]) -> Result<usize, VectorError> {
    let failed = vectors.iter().filter(|v| !v.check()).count();
    if failed == 0 {
        Ok(vectors.len())
    } else {
        Err(VectorError::Mismatch {
            failed,
            total: vectors.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_answers_pass() {
        assert_eq!(check_vectors(&known_answer_vectors()).unwrap(), 3);
    }

    #[test]
    fn file_round_trip() {
        let vectors = generate_vectors(11, 5);
        let text = write_vectors(&vectors);
        let back = read_vectors(&text).unwrap();
        assert_eq!(back, vectors);
        assert_eq!(check_vectors(&back).unwrap(), 8);
    }

    #[test]
    fn tampered_vector_fails() {
        let mut vectors = known_answer_vectors();
        vectors[0].expected = MacAddress([0x02, 0, 0, 0, 0, 0]);
        assert_eq!(
            check_vectors(&vectors).unwrap_err(),
            VectorError::Mismatch {
                failed: 1,
                total: 3
            }
        );
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(read_vectors("02000000 zz 3").is_err());
        assert!(read_vectors("# only comments\n").unwrap().is_empty());
    }
}
