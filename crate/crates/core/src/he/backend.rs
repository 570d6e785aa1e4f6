//! Uniform operation surface over the real BFV scheme and the exact mock,
//! plus role-scoped key bundles for the distributed setting (the cloud's
//! bundle holds evaluation material only — nothing in it can decrypt).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bfv::{self, Ciphertext, KeyMaterial, Plaintext, PublicKey, RelinKey, SecretKey};
use super::mock::{MockCiphertext, MockSession};
use super::{HeError, HeParams};

/// The five homomorphic operations plus encrypt/decrypt, generic over the
/// backing scheme.
pub trait HeOps {
    type Ct: Clone;

    fn params(&self) -> &HeParams;
    fn encrypt_payload(&mut self, payload: &[i64]) -> Result<Self::Ct, HeError>;
    fn decrypt_payload(&self, ct: &Self::Ct, len: usize) -> Result<Vec<i64>, HeError>;
    fn add_ct(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct, HeError>;
    fn add_plain(&self, a: &Self::Ct, pt: &[i64]) -> Result<Self::Ct, HeError>;
    fn mul_plain(&self, a: &Self::Ct, pt: &[i64]) -> Result<Self::Ct, HeError>;
    fn mul_ct(&self, a: &Self::Ct, b: &Self::Ct) -> Result<Self::Ct, HeError>;
    /// Multiplicative depth consumed so far (level counter).
    fn depth(ct: &Self::Ct) -> u8;
}

/// In-process session over the real scheme; owns all key material (it plays
/// every role at once) and a seeded generator for deterministic streams.
pub struct BfvSession {
    pub params: HeParams,
    pub keys: KeyMaterial,
    rng: ChaCha8Rng,
}

impl BfvSession {
    pub fn new(params: HeParams, seed: u64) -> Result<Self, HeError> {
        params.validate()?;
        Ok(Self { params, keys: bfv::keygen(&params, seed), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn measure_noise(&self, ct: &Ciphertext, expected: &[i64]) -> Result<u128, HeError> {
        let pt = Plaintext::encode(expected, &self.params)?;
        bfv::measure_noise(&self.params, &self.keys.sk, ct, &pt)
    }
}

impl HeOps for BfvSession {
    type Ct = Ciphertext;

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn encrypt_payload(&mut self, payload: &[i64]) -> Result<Ciphertext, HeError> {
        let pt = Plaintext::encode(payload, &self.params)?;
        bfv::encrypt(&self.params, &self.keys.pk, &pt, &mut self.rng)
    }

    fn decrypt_payload(&self, ct: &Ciphertext, len: usize) -> Result<Vec<i64>, HeError> {
        Ok(bfv::decrypt(&self.params, &self.keys.sk, ct)?.decode(len))
    }

    fn add_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        bfv::add_ct(&self.params, a, b)
    }

    fn add_plain(&self, a: &Ciphertext, pt: &[i64]) -> Result<Ciphertext, HeError> {
        bfv::add_plain(&self.params, a, &Plaintext::encode(pt, &self.params)?)
    }

    fn mul_plain(&self, a: &Ciphertext, pt: &[i64]) -> Result<Ciphertext, HeError> {
        bfv::mul_plain(&self.params, a, &Plaintext::encode(pt, &self.params)?)
    }

    fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        bfv::mul_ct(&self.params, &self.keys.rlk, a, b)
    }

    fn depth(ct: &Ciphertext) -> u8 {
        ct.level
    }
}

impl HeOps for MockSession {
    type Ct = MockCiphertext;

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn encrypt_payload(&mut self, payload: &[i64]) -> Result<MockCiphertext, HeError> {
        self.encrypt(payload)
    }

    fn decrypt_payload(&self, ct: &MockCiphertext, len: usize) -> Result<Vec<i64>, HeError> {
        Ok(self.decrypt(ct)?[..len].to_vec())
    }

    fn add_ct(&self, a: &MockCiphertext, b: &MockCiphertext) -> Result<MockCiphertext, HeError> {
        MockSession::add_ct(self, a, b)
    }

    fn add_plain(&self, a: &MockCiphertext, pt: &[i64]) -> Result<MockCiphertext, HeError> {
        MockSession::add_plain(self, a, pt)
    }

    fn mul_plain(&self, a: &MockCiphertext, pt: &[i64]) -> Result<MockCiphertext, HeError> {
        MockSession::mul_plain(self, a, pt)
    }

    fn mul_ct(&self, a: &MockCiphertext, b: &MockCiphertext) -> Result<MockCiphertext, HeError> {
        MockSession::mul_ct(self, a, b)
    }

    fn depth(ct: &MockCiphertext) -> u8 {
        ct.depth
    }
}

/// Evaluation-only session for the cloud role: holds the relinearization
/// key and nothing else, so `encrypt`/`decrypt` are structurally
/// unavailable (they return [`HeError::RoleForbidden`]).
pub struct CloudSession {
    pub params: HeParams,
    pub rlk: RelinKey,
}

impl HeOps for CloudSession {
    type Ct = Ciphertext;

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn encrypt_payload(&mut self, _payload: &[i64]) -> Result<Ciphertext, HeError> {
        Err(HeError::RoleForbidden("cloud"))
    }

    fn decrypt_payload(&self, _ct: &Ciphertext, _len: usize) -> Result<Vec<i64>, HeError> {
        Err(HeError::RoleForbidden("cloud"))
    }

    fn add_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        bfv::add_ct(&self.params, a, b)
    }

    fn add_plain(&self, a: &Ciphertext, pt: &[i64]) -> Result<Ciphertext, HeError> {
        bfv::add_plain(&self.params, a, &Plaintext::encode(pt, &self.params)?)
    }

    fn mul_plain(&self, a: &Ciphertext, pt: &[i64]) -> Result<Ciphertext, HeError> {
        bfv::mul_plain(&self.params, a, &Plaintext::encode(pt, &self.params)?)
    }

    fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        bfv::mul_ct(&self.params, &self.rlk, a, b)
    }

    fn depth(ct: &Ciphertext) -> u8 {
        ct.level
    }
}

/// Sensor-side material: can encrypt, cannot decrypt.
#[derive(Debug, Clone)]
pub struct SensorKeys {
    pub params: HeParams,
    pub pk: PublicKey,
}

/// Cloud-side material: evaluation only. No secret key exists here, so the
/// cloud role is incapable of decryption by construction.
#[derive(Debug, Clone)]
pub struct CloudKeys {
    pub params: HeParams,
    pub rlk: RelinKey,
}

/// Actuator-side material: holds the secret key.
#[derive(Debug, Clone)]
pub struct ActuatorKeys {
    pub params: HeParams,
    pub sk: SecretKey,
}

/// Split key material by role.
pub fn split_roles(params: &HeParams, keys: &KeyMaterial) -> (SensorKeys, CloudKeys, ActuatorKeys) {
    (
        SensorKeys { params: *params, pk: keys.pk.clone() },
        CloudKeys { params: *params, rlk: keys.rlk.clone() },
        ActuatorKeys { params: *params, sk: keys.sk.clone() },
    )
}


#[cfg(test)]
mod noise_debug {
    use super::*;

    #[test]
    #[ignore = "manual debug"]
    fn mul_noise_breakdown() {
        for t_log in [20u32, 24, 28, 30] {
            let params = HeParams { t: 1 << t_log, canary: false, ..HeParams::default() };
            let mut s = BfvSession::new(params, 17).unwrap();
            let e3 = s.encrypt_payload(&[3]).unwrap();
            let e4 = s.encrypt_payload(&[4]).unwrap();
            let n_fresh = s.measure_noise(&e3, &[3]).unwrap();
            let prod = s.mul_ct(&e3, &e4).unwrap();
            let n_prod = s.measure_noise(&prod, &[12]).unwrap();
            let delta = params.delta();
            println!(
                "t=2^{t_log}: fresh={n_fresh} (2^{:.1}), prod={n_prod} (2^{:.1}), delta/2=2^{:.1}",
                (n_fresh as f64).log2(),
                (n_prod as f64).log2(),
                (delta as f64 / 2.0).log2()
            );
        }
    }
}

#[cfg(test)]
mod latency_probe {
    use super::*;

    #[test]
    #[ignore = "manual probe"]
    fn mul_ct_latency() {
        let params = HeParams::default();
        let mut s = BfvSession::new(params, 1).unwrap();
        let a = s.encrypt_payload(&[123]).unwrap();
        let b = s.encrypt_payload(&[-45]).unwrap();
        // warm up
        for _ in 0..3 {
            s.mul_ct(&a, &b).unwrap();
        }
        let start = std::time::Instant::now();
        let reps = 64;
        for _ in 0..reps {
            std::hint::black_box(s.mul_ct(&a, &b).unwrap());
        }
        let per = start.elapsed() / reps;
        println!("mul_ct: {per:?} each; 16 products = {:?}", per * 16);
        let start = std::time::Instant::now();
        for _ in 0..reps {
            std::hint::black_box(s.mul_plain(&a, &[77]).unwrap());
        }
        println!("mul_plain: {:?} each", start.elapsed() / reps);
    }
}
