//! Exact-arithmetic stand-in for the real scheme: the same five operations
//! over plain integers, with a multiplicative-depth counter and a magnitude
//! check against the plaintext modulus. Anywhere the real backend would
//! decrypt wrongly (value escaping centered `Z_t`, depth past the level
//! budget), the mock raises instead of silently wrapping — which makes it
//! the semantic oracle for the real backend and a cheap auditor for
//! circuit depth.

use super::{HeError, HeParams};

/// Exact payload plus depth accounting. `depth` counts consumed levels
/// (ciphertext-ciphertext multiplications only, mirroring the real level
/// counter); `circuit_depth` counts multiplications of either kind along
/// the deepest input-output path, which is what a depth audit reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockCiphertext {
    pub values: Vec<i128>,
    pub depth: u8,
    pub circuit_depth: u8,
}

/// Mock backend session: checks magnitudes against `t/2` and depth against
/// the level budget, mirroring where the real scheme stops decrypting
/// correctly.
#[derive(Debug, Clone)]
pub struct MockSession {
    pub params: HeParams,
}

impl MockSession {
    pub fn new(params: HeParams) -> Self {
        Self { params }
    }

    fn check_magnitude(&self, values: &[i128]) -> Result<(), HeError> {
        let half = self.params.t / 2;
        for v in values {
            if v.unsigned_abs() >= half as u128 {
                return Err(HeError::MagnitudeOverflow { value: *v, half_t: half });
            }
        }
        Ok(())
    }

    pub fn encrypt(&self, payload: &[i64]) -> Result<MockCiphertext, HeError> {
        if payload.len() > self.params.payload_capacity() {
            return Err(HeError::PayloadTooLong {
                len: payload.len(),
                capacity: self.params.payload_capacity(),
            });
        }
        let mut values = vec![0i128; self.params.ring_dim];
        for (slot, v) in values.iter_mut().zip(payload) {
            *slot = *v as i128;
        }
        self.check_magnitude(&values)?;
        Ok(MockCiphertext { values, depth: 0, circuit_depth: 0 })
    }

    pub fn decrypt(&self, ct: &MockCiphertext) -> Result<Vec<i64>, HeError> {
        self.check_magnitude(&ct.values)?;
        Ok(ct.values.iter().map(|v| *v as i64).collect())
    }

    pub fn add_ct(
        &self,
        a: &MockCiphertext,
        b: &MockCiphertext,
    ) -> Result<MockCiphertext, HeError> {
        let values: Vec<i128> = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        self.check_magnitude(&values)?;
        Ok(MockCiphertext {
            values,
            depth: a.depth.max(b.depth),
            circuit_depth: a.circuit_depth.max(b.circuit_depth),
        })
    }

    pub fn add_plain(&self, a: &MockCiphertext, pt: &[i64]) -> Result<MockCiphertext, HeError> {
        let mut values = a.values.clone();
        for (slot, v) in values.iter_mut().zip(pt) {
            *slot += *v as i128;
        }
        self.check_magnitude(&values)?;
        Ok(MockCiphertext { values, depth: a.depth, circuit_depth: a.circuit_depth })
    }

    pub fn mul_plain(&self, a: &MockCiphertext, pt: &[i64]) -> Result<MockCiphertext, HeError> {
        let values = self.negacyclic(&a.values, pt.iter().map(|v| *v as i128))?;
        Ok(MockCiphertext { values, depth: a.depth, circuit_depth: a.circuit_depth + 1 })
    }

    pub fn mul_ct(
        &self,
        a: &MockCiphertext,
        b: &MockCiphertext,
    ) -> Result<MockCiphertext, HeError> {
        let depth = a.depth.max(b.depth) + 1;
        if depth > self.params.levels {
            return Err(HeError::LevelExceeded { needed: depth, available: self.params.levels });
        }
        let values = self.negacyclic(&a.values, b.values.iter().copied())?;
        Ok(MockCiphertext {
            values,
            depth,
            circuit_depth: a.circuit_depth.max(b.circuit_depth) + 1,
        })
    }

    fn negacyclic(
        &self,
        a: &[i128],
        b: impl Iterator<Item = i128>,
    ) -> Result<Vec<i128>, HeError> {
        let n = self.params.ring_dim;
        let mut out = vec![0i128; n];
        for (j, bj) in b.enumerate() {
            if bj == 0 {
                continue;
            }
            for (i, ai) in a.iter().enumerate() {
                if *ai == 0 {
                    continue;
                }
                let k = i + j;
                if k < n {
                    out[k] += ai * bj;
                } else {
                    out[k - n] -= ai * bj;
                }
            }
        }
        self.check_magnitude(&out)?;
        Ok(out)
    }
}
