//! Leveled homomorphic arithmetic over integer vectors: a textbook
//! RLWE/BFV-style scheme supporting one ciphertext-ciphertext
//! multiplication level, plus an exact mock backend with depth and
//! magnitude accounting that serves as its semantic oracle.

pub mod backend;
pub mod bfv;
pub mod mock;
pub mod poly;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    split_roles, ActuatorKeys, BfvSession, CloudKeys, CloudSession, HeOps, SensorKeys,
};
pub use bfv::{
    add_ct, add_plain, decrypt, encrypt, keygen, measure_noise, mul_ct, mul_plain, Ciphertext,
    KeyMaterial, Plaintext, PublicKey, RelinKey, SecretKey,
};
pub use mock::{MockCiphertext, MockSession};
pub use poly::CoeffModulus;

#[derive(Debug, Error)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("payload of {len} values exceeds capacity {capacity}")]
    PayloadTooLong { len: usize, capacity: usize },
    #[error("plaintext value {value} outside centered Z_t for t = {t}")]
    PlaintextOutOfRange { value: i128, t: u64 },
    #[error("ring dimension mismatch: got {got}, expected {expected}")]
    RingDimMismatch { got: usize, expected: usize },
    #[error("ciphertext of size {0} needs relinearization first")]
    UnrelinearizedCiphertext(usize),
    #[error("multiplicative depth {needed} exceeds the configured level budget {available}")]
    LevelExceeded { needed: u8, available: u8 },
    #[error("decryption noise overflow detected (canary read {canary})")]
    NoiseOverflow { canary: i128 },
    #[error("mock magnitude overflow: |{value}| >= t/2 = {half_t}")]
    MagnitudeOverflow { value: i128, half_t: u64 },
    #[error("parameter certification failed: {0}")]
    CertificationFailed(String),
    #[error("bad ciphertext wire data: {0}")]
    BadWireData(String),
    #[error("operation requires key material the {0} role does not hold")]
    RoleForbidden(&'static str),
}

/// Parameters of the leveled scheme.
///
/// `modulus` is the ciphertext modulus, `t` the plaintext modulus, `levels`
/// the number of ciphertext-ciphertext multiplications any value may pass
/// through. These are toy parameters chosen for measurability, not for
/// security, and every key file emitted from them says so.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeParams {
    pub ring_dim: usize,
    pub modulus: CoeffModulus,
    pub t: u64,
    pub sigma: f64,
    pub relin_base_log: u32,
    pub levels: u8,
    /// Test mode: reserve the top coefficient as an always-zero canary that
    /// flags decryption-noise overflow probabilistically.
    pub canary: bool,
}

impl Default for HeParams {
    /// Full-encryption defaults. The 64-bit wire words pin the ciphertext
    /// modulus at `2^64`, and with one multiplication level the noise
    /// budget then certifies a plaintext modulus of `2^20` (the
    /// multiplication noise carries an intrinsic `t * ring_dim * noise`
    /// term, so `t` cannot be pushed further without a larger `q`).
    fn default() -> Self {
        Self {
            ring_dim: 256,
            modulus: CoeffModulus::Pow2(64),
            t: 1 << 20,
            sigma: 3.2,
            relin_base_log: 8,
            levels: 1,
            canary: true,
        }
    }
}

impl HeParams {
    /// Parameters for partially encrypted sessions (plaintext tap products
    /// only). Without ciphertext-ciphertext multiplications the noise stays
    /// small and a much larger plaintext space is certified, which buys
    /// finer quantization.
    pub fn partial_profile() -> Self {
        Self { t: 1 << 32, ..Self::default() }
    }
}

impl HeParams {
    pub fn validate(&self) -> Result<(), HeError> {
        if !self.ring_dim.is_power_of_two() || self.ring_dim < 2 {
            return Err(HeError::InvalidParams(format!(
                "ring dimension {} must be a power of two >= 2",
                self.ring_dim
            )));
        }
        if (self.t as u128) >= self.modulus.value() {
            return Err(HeError::InvalidParams(format!(
                "plaintext modulus {} must be below the ciphertext modulus {}",
                self.t,
                self.modulus.value()
            )));
        }
        if self.t < 2 {
            return Err(HeError::InvalidParams("plaintext modulus must exceed 1".into()));
        }
        if self.t > 1 << 40 {
            return Err(HeError::InvalidParams(
                "plaintext modulus above 2^40 breaks exact decoding".into(),
            ));
        }
        if self.sigma <= 0.0 {
            return Err(HeError::InvalidParams("sigma must be positive".into()));
        }
        if self.levels < 1 {
            return Err(HeError::InvalidParams("at least one level is required".into()));
        }
        if self.levels > 15 {
            return Err(HeError::InvalidParams(
                "level counter is a wire-format nibble; levels must be <= 15".into(),
            ));
        }
        if self.relin_base_log == 0 || self.relin_base_log > 32 {
            return Err(HeError::InvalidParams("relin base log must be in 1..=32".into()));
        }
        if let CoeffModulus::Pow2(bits) = self.modulus {
            if !(2..=64).contains(&bits) {
                return Err(HeError::InvalidParams("pow2 modulus bits must be 2..=64".into()));
            }
        }
        Ok(())
    }

    /// How many payload coefficients fit (one is lost to the canary).
    pub fn payload_capacity(&self) -> usize {
        if self.canary {
            self.ring_dim - 1
        } else {
            self.ring_dim
        }
    }

    pub fn delta(&self) -> u64 {
        (self.modulus.value() / self.t as u128) as u64
    }
}

/// Serialized form of the parameters (used inside configs and key files).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeParamsFile {
    pub ring_dim: usize,
    pub modulus_kind: String,
    pub modulus_value: String,
    pub t: u64,
    pub sigma: f64,
    pub relin_base_log: u32,
    pub levels: u8,
    pub canary: bool,
}

impl HeParamsFile {
    pub fn from_params(p: &HeParams) -> Self {
        let (kind, value) = match p.modulus {
            CoeffModulus::Pow2(bits) => ("pow2".to_string(), bits.to_string()),
            CoeffModulus::Prime(q) => ("prime".to_string(), q.to_string()),
        };
        Self {
            ring_dim: p.ring_dim,
            modulus_kind: kind,
            modulus_value: value,
            t: p.t,
            sigma: p.sigma,
            relin_base_log: p.relin_base_log,
            levels: p.levels,
            canary: p.canary,
        }
    }

    pub fn into_params(self) -> Result<HeParams, HeError> {
        let modulus = match self.modulus_kind.as_str() {
            "pow2" => CoeffModulus::Pow2(
                self.modulus_value
                    .parse()
                    .map_err(|e| HeError::InvalidParams(format!("bad pow2 bits: {e}")))?,
            ),
            "prime" => CoeffModulus::Prime(
                self.modulus_value
                    .parse()
                    .map_err(|e| HeError::InvalidParams(format!("bad prime: {e}")))?,
            ),
            other => {
                return Err(HeError::InvalidParams(format!("unknown modulus kind {other}")))
            }
        };
        let params = HeParams {
            ring_dim: self.ring_dim,
            modulus,
            t: self.t,
            sigma: self.sigma,
            relin_base_log: self.relin_base_log,
            levels: self.levels,
            canary: self.canary,
        };
        params.validate()?;
        Ok(params)
    }
}

/// Result of the empirical depth-1 certification.
#[derive(Debug, Clone)]
pub struct CertReport {
    pub params: HeParams,
    /// Worst noise observed across the certification circuits.
    pub max_noise: u128,
    /// Decryption succeeds while noise < delta/2; this is delta/2 / max_noise.
    pub margin_factor: f64,
    pub trials: usize,
    pub pass: bool,
}

/// Certify empirically that random depth-1 circuits with the given payload
/// magnitudes decrypt correctly with at least an 8x noise margin.
///
/// The circuit profile mirrors the encrypted FIR step: `terms` products of
/// a (possibly ciphertext) factor bounded by `mag_a` with a ciphertext
/// factor bounded by `mag_b`, summed homomorphically.
pub fn certify_depth1(
    params: &HeParams,
    mag_a: u64,
    mag_b: u64,
    terms: usize,
    full_mode: bool,
    trials: usize,
    seed: u64,
) -> Result<CertReport, HeError> {
    use rand::{Rng, SeedableRng};
    params.validate()?;
    let sum_bound = (mag_a as u128) * (mag_b as u128) * terms as u128;
    if sum_bound >= (params.t / 2) as u128 {
        return Err(HeError::CertificationFailed(format!(
            "payload profile needs t/2 > {sum_bound}, got {}",
            params.t / 2
        )));
    }
    let keys = bfv::keygen(params, seed ^ 0x5eed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: u128 = 0;
    for _ in 0..trials {
        let mut acc: Option<Ciphertext> = None;
        let mut acc_plain: i128 = 0;
        for _ in 0..terms {
            let a = rng.random_range(-(mag_a as i64)..=mag_a as i64);
            let b = rng.random_range(-(mag_b as i64)..=mag_b as i64);
            let pt_b = Plaintext::encode(&[b], params)?;
            let ct_b = bfv::encrypt(params, &keys.pk, &pt_b, &mut rng)?;
            let prod = if full_mode {
                let pt_a = Plaintext::encode(&[a], params)?;
                let ct_a = bfv::encrypt(params, &keys.pk, &pt_a, &mut rng)?;
                bfv::mul_ct(params, &keys.rlk, &ct_a, &ct_b)?
            } else {
                bfv::mul_plain(params, &ct_b, &Plaintext::encode(&[a], params)?)?
            };
            acc_plain += a as i128 * b as i128;
            acc = Some(match acc {
                Some(prev) => bfv::add_ct(params, &prev, &prod)?,
                None => prod,
            });
        }
        let acc = acc.expect("at least one term");
        let mut expected = vec![0i64; params.ring_dim];
        expected[0] = acc_plain as i64;
        let noise =
            bfv::measure_noise(params, &keys.sk, &acc, &Plaintext { coeffs: expected.clone() })?;
        worst = worst.max(noise);
        let decrypted = bfv::decrypt(params, &keys.sk, &acc)?;
        if decrypted.coeffs[0] as i128 != acc_plain {
            return Err(HeError::CertificationFailed(format!(
                "decryption mismatch: {} vs {}",
                decrypted.coeffs[0], acc_plain
            )));
        }
    }
    let budget = (params.delta() / 2) as f64;
    let margin_factor = if worst == 0 { f64::INFINITY } else { budget / worst as f64 };
    Ok(CertReport {
        params: *params,
        max_noise: worst,
        margin_factor,
        trials,
        pass: margin_factor >= 8.0,
    })
}

/// Choose certified parameters for a payload profile. The ciphertext
/// modulus stays fixed (the wire format pins coefficients to 64-bit words),
/// `t` is set to the smallest power of two holding the worst-case sum, and
/// if the noise margin falls short the relinearization base is walked down
/// (smaller digits add less relinearization noise at higher cost).
pub fn search_params(
    base: &HeParams,
    mag_a: u64,
    mag_b: u64,
    terms: usize,
    full_mode: bool,
    seed: u64,
) -> Result<CertReport, HeError> {
    let need = 2 * (mag_a as u128) * (mag_b as u128) * (terms as u128);
    let t = (need.next_power_of_two() as u64).max(base.t);
    let mut last_err = None;
    for base_log in [base.relin_base_log, 8, 4, 2] {
        let candidate = HeParams { t, relin_base_log: base_log, ..*base };
        if candidate.validate().is_err() {
            continue;
        }
        match certify_depth1(&candidate, mag_a, mag_b, terms, full_mode, 40, seed) {
            Ok(report) if report.pass => return Ok(report),
            Ok(report) => {
                last_err = Some(HeError::CertificationFailed(format!(
                    "margin {:.1}x below 8x at t = {t}, base 2^{base_log}",
                    report.margin_factor
                )));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| {
        HeError::CertificationFailed("no candidate parameters fit the profile".into())
    }))
}
