//! Textbook leveled BFV over `Z_q[X]/(X^n + 1)`: scale-by-`floor(q/t)`
//! encoding, ternary secrets, centered-binomial noise, relinearization by
//! base-`w` digit decomposition, and explicit level bookkeeping.
//!
//! No security is claimed at the parameter sizes used here; every emitted
//! key file carries a toy-parameters marker. The scheme exists to make the
//! cost and exactness of encrypted controller evaluation measurable, not to
//! protect anything.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::poly::{
    sample_noise, sample_ternary, sample_uniform, tensor_product_exact, CoeffModulus, Poly,
};
use super::{HeError, HeParams};

/// Plaintext: centered coefficient vector over `Z_t`, full ring length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plaintext {
    pub coeffs: Vec<i64>,
}

impl Plaintext {
    /// Pack an integer payload into the low coefficients (zero padded).
    pub fn encode(payload: &[i64], params: &HeParams) -> Result<Plaintext, HeError> {
        let cap = params.payload_capacity();
        if payload.len() > cap {
            return Err(HeError::PayloadTooLong { len: payload.len(), capacity: cap });
        }
        let half = (params.t / 2) as i64;
        for v in payload {
            if *v < -half || *v >= half {
                return Err(HeError::PlaintextOutOfRange { value: *v as i128, t: params.t });
            }
        }
        let mut coeffs = vec![0i64; params.ring_dim];
        coeffs[..payload.len()].copy_from_slice(payload);
        Ok(Plaintext { coeffs })
    }

    pub fn decode(&self, len: usize) -> Vec<i64> {
        self.coeffs[..len].to_vec()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecretKey {
    pub(crate) s: Poly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublicKey {
    /// `p0 = -(a s + e)`, `p1 = a`
    pub(crate) p0: Poly,
    pub(crate) p1: Poly,
}

/// Relinearization key: `rlk_i = (-(a_i s + e_i) + w^i s^2, a_i)` for each
/// base-`w` digit position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelinKey {
    pub(crate) pairs: Vec<(Poly, Poly)>,
    pub(crate) base_log: u32,
}

/// Everything keygen produces; regenerable from the seed.
#[derive(Debug, Clone)]
pub struct KeyMaterial {
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub rlk: RelinKey,
    pub seed: u64,
}

/// Ciphertext: two (or, transiently, three) polynomials plus the level
/// counter counting ciphertext-ciphertext multiplications on its history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub(crate) polys: Vec<Poly>,
    pub level: u8,
}

impl Ciphertext {
    pub fn size(&self) -> usize {
        self.polys.len()
    }
}

fn delta(params: &HeParams) -> u64 {
    (params.modulus.value() / params.t as u128) as u64
}

pub fn keygen(params: &HeParams, seed: u64) -> KeyMaterial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.ring_dim;
    let q = params.modulus;
    let s = sample_ternary(n, q, &mut rng);
    let a = sample_uniform(n, q, &mut rng);
    let e = sample_noise(n, params.sigma, q, &mut rng);
    let p0 = a.mul(&s, q).add(&e, q).neg(q);

    // relin key: digits of s^2 in base w
    let s2 = s.mul(&s, q);
    let digits = relin_digit_count(params);
    let mut pairs = Vec::with_capacity(digits as usize);
    let mut w_pow: u128 = 1;
    for _ in 0..digits {
        let a_i = sample_uniform(n, q, &mut rng);
        let e_i = sample_noise(n, params.sigma, q, &mut rng);
        let base = a_i.mul(&s, q).add(&e_i, q).neg(q);
        let shifted = s2.scalar_mul(q.reduce(w_pow), q);
        pairs.push((base.add(&shifted, q), a_i));
        w_pow <<= params.relin_base_log;
    }
    KeyMaterial {
        sk: SecretKey { s },
        pk: PublicKey { p0, p1: a },
        rlk: RelinKey { pairs, base_log: params.relin_base_log },
        seed,
    }
}

pub(crate) fn relin_digit_count(params: &HeParams) -> u32 {
    let q_bits = match params.modulus {
        CoeffModulus::Pow2(bits) => bits,
        CoeffModulus::Prime(p) => 64 - p.leading_zeros(),
    };
    q_bits.div_ceil(params.relin_base_log)
}

/// Plaintext lifted to `Z_q` as `Delta * m`.
fn lift_plaintext(pt: &Plaintext, params: &HeParams) -> Poly {
    let d = delta(params) as i128;
    let q = params.modulus;
    Poly { coeffs: pt.coeffs.iter().map(|m| q.from_i128(*m as i128 * d)).collect() }
}

/// Plaintext as a raw integer polynomial in `Z_q` (no Delta), for
/// plaintext-ciphertext products.
fn raw_plaintext(pt: &Plaintext, params: &HeParams) -> Poly {
    let q = params.modulus;
    Poly { coeffs: pt.coeffs.iter().map(|m| q.from_i128(*m as i128)).collect() }
}

pub fn encrypt(
    params: &HeParams,
    pk: &PublicKey,
    pt: &Plaintext,
    rng: &mut ChaCha8Rng,
) -> Result<Ciphertext, HeError> {
    params.validate()?;
    let n = params.ring_dim;
    let q = params.modulus;
    if pt.coeffs.len() != n {
        return Err(HeError::RingDimMismatch { got: pt.coeffs.len(), expected: n });
    }
    let u = sample_ternary(n, q, rng);
    let e1 = sample_noise(n, params.sigma, q, rng);
    let e2 = sample_noise(n, params.sigma, q, rng);
    let c0 = pk.p0.mul(&u, q).add(&e1, q).add(&lift_plaintext(pt, params), q);
    let c1 = pk.p1.mul(&u, q).add(&e2, q);
    Ok(Ciphertext { polys: vec![c0, c1], level: 0 })
}

/// Raw decryption to the noisy phase `c0 + c1 s` (centered).
fn phase(params: &HeParams, sk: &SecretKey, ct: &Ciphertext) -> Result<Poly, HeError> {
    if ct.size() != 2 {
        return Err(HeError::UnrelinearizedCiphertext(ct.size()));
    }
    let q = params.modulus;
    Ok(ct.polys[0].add(&ct.polys[1].mul(&sk.s, q), q))
}

fn decode_phase(params: &HeParams, v: &Poly) -> Plaintext {
    let q = params.modulus.value();
    let t = params.t as i128;
    let coeffs = v
        .coeffs
        .iter()
        .map(|c| {
            let centered = params.modulus.center(*c);
            // m = round(t * v / q), computed exactly: |v| <= q/2 so t*v fits
            // i128 for t up to 2^40 and q up to 2^64.
            let num = t * centered;
            let qi = q as i128;
            let m = if num >= 0 { (num + qi / 2) / qi } else { (num - qi / 2) / qi };
            // reduce mod t to the centered range
            let mut m = m.rem_euclid(t);
            if m >= t / 2 {
                m -= t;
            }
            m as i64
        })
        .collect();
    Plaintext { coeffs }
}

pub fn decrypt(params: &HeParams, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext, HeError> {
    let v = phase(params, sk, ct)?;
    let pt = decode_phase(params, &v);
    if params.canary {
        let last = params.ring_dim - 1;
        if pt.coeffs[last] != 0 {
            return Err(HeError::NoiseOverflow { canary: pt.coeffs[last] as i128 });
        }
    }
    Ok(pt)
}

/// Exact noise magnitude of a ciphertext, measured with the secret key
/// against a known plaintext: `max |centered(phase - Delta m)|`.
pub fn measure_noise(
    params: &HeParams,
    sk: &SecretKey,
    ct: &Ciphertext,
    expected: &Plaintext,
) -> Result<u128, HeError> {
    let v = phase(params, sk, ct)?;
    let q = params.modulus;
    let d = delta(params) as i128;
    let mut worst: u128 = 0;
    for (c, m) in v.coeffs.iter().zip(&expected.coeffs) {
        let residual = q.center(q.from_i128(q.center(*c) - d * *m as i128));
        worst = worst.max(residual.unsigned_abs());
    }
    Ok(worst)
}

pub fn add_ct(params: &HeParams, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
    check_pair(params, a, b)?;
    let q = params.modulus;
    let polys = a.polys.iter().zip(&b.polys).map(|(x, y)| x.add(y, q)).collect();
    Ok(Ciphertext { polys, level: a.level.max(b.level) })
}

pub fn add_plain(params: &HeParams, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, HeError> {
    if a.size() != 2 {
        return Err(HeError::UnrelinearizedCiphertext(a.size()));
    }
    let q = params.modulus;
    let mut polys = a.polys.clone();
    polys[0] = polys[0].add(&lift_plaintext(pt, params), q);
    Ok(Ciphertext { polys, level: a.level })
}

/// Multiply by a plaintext polynomial. Does not consume a level; noise
/// scales with the plaintext magnitude instead.
pub fn mul_plain(params: &HeParams, a: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext, HeError> {
    if a.size() != 2 {
        return Err(HeError::UnrelinearizedCiphertext(a.size()));
    }
    let q = params.modulus;
    let raw = raw_plaintext(pt, params);
    let polys = a.polys.iter().map(|p| p.mul(&raw, q)).collect();
    Ok(Ciphertext { polys, level: a.level })
}

/// Ciphertext-ciphertext multiplication with relinearization. Refused
/// before any computation if the resulting level would exceed `L`.
pub fn mul_ct(
    params: &HeParams,
    rlk: &RelinKey,
    a: &Ciphertext,
    b: &Ciphertext,
) -> Result<Ciphertext, HeError> {
    check_pair(params, a, b)?;
    let level = a.level.max(b.level) + 1;
    if level > params.levels {
        return Err(HeError::LevelExceeded { needed: level, available: params.levels });
    }
    let q = params.modulus;
    let t = params.t;

    // Tensor over the integers, then scale by t/q with rounding.
    let d0 = scaled_tensor(&a.polys[0], &b.polys[0], q, t);
    let mut mid = tensor_product_exact(&a.polys[0], &b.polys[1], q);
    for (x, y) in mid.iter_mut().zip(tensor_product_exact(&a.polys[1], &b.polys[0], q)) {
        x.add(&y);
    }
    let d1 = scale_accumulated(mid.into_iter(), q, t);
    let d2 = scaled_tensor(&a.polys[1], &b.polys[1], q, t);

    // Relinearize d2 via its base-w digits.
    let digits = decompose(&d2, q, rlk.base_log);
    let mut c0 = d0;
    let mut c1 = d1;
    for (digit, (r0, r1)) in digits.iter().zip(&rlk.pairs) {
        c0 = c0.add(&digit.mul(r0, q), q);
        c1 = c1.add(&digit.mul(r1, q), q);
    }
    Ok(Ciphertext { polys: vec![c0, c1], level })
}

fn check_pair(params: &HeParams, a: &Ciphertext, b: &Ciphertext) -> Result<(), HeError> {
    if a.size() != 2 || b.size() != 2 {
        return Err(HeError::UnrelinearizedCiphertext(a.size().max(b.size())));
    }
    if a.polys[0].len() != params.ring_dim || b.polys[0].len() != params.ring_dim {
        return Err(HeError::RingDimMismatch {
            got: a.polys[0].len().max(b.polys[0].len()),
            expected: params.ring_dim,
        });
    }
    Ok(())
}

/// `round(t * (a *_negacyclic b) / q) mod q`, exact.
fn scaled_tensor(a: &Poly, b: &Poly, q: CoeffModulus, t: u64) -> Poly {
    scale_accumulated(tensor_product_exact(a, b, q).into_iter(), q, t)
}

fn scale_accumulated(
    acc: impl Iterator<Item = super::poly::I192>,
    q: CoeffModulus,
    t: u64,
) -> Poly {
    match q {
        CoeffModulus::Pow2(bits) => {
            // t is a power of two here or not; general: round(v * t / 2^bits)
            // = round(v / 2^(bits - log2 t)) when t is a power of two, else
            // via big integers.
            if t.is_power_of_two() {
                let shift = bits - t.trailing_zeros();
                Poly {
                    coeffs: acc
                        .map(|v| q.from_i128(v.round_shift(shift)))
                        .collect(),
                }
            } else {
                scale_via_big(acc, q, t)
            }
        }
        CoeffModulus::Prime(_) => scale_via_big(acc, q, t),
    }
}

fn scale_via_big(
    acc: impl Iterator<Item = super::poly::I192>,
    q: CoeffModulus,
    t: u64,
) -> Poly {
    use num_bigint::BigInt;
    let qv = BigInt::from(q.value());
    let coeffs = acc
        .map(|v| {
            let num = v.to_big() * t;
            let half = &qv / 2;
            let rounded: BigInt = if num >= BigInt::from(0) {
                (num + &half) / &qv
            } else {
                (num - &half) / &qv
            };
            let r = rounded.mod_floor_big(&qv);
            let (_, digits) = r.to_u64_digits();
            digits.first().copied().unwrap_or(0)
        })
        .collect();
    Poly { coeffs }
}

trait ModFloorBig {
    fn mod_floor_big(&self, m: &num_bigint::BigInt) -> num_bigint::BigInt;
}

impl ModFloorBig for num_bigint::BigInt {
    fn mod_floor_big(&self, m: &num_bigint::BigInt) -> num_bigint::BigInt {
        let r = self % m;
        if r.sign() == num_bigint::Sign::Minus {
            r + m
        } else {
            r
        }
    }
}

/// Base-w digits of a polynomial's non-negative residues, lowest first.
#[allow(clippy::needless_range_loop)]
fn decompose(p: &Poly, q: CoeffModulus, base_log: u32) -> Vec<Poly> {
    let q_bits = match q {
        CoeffModulus::Pow2(bits) => bits,
        CoeffModulus::Prime(pr) => 64 - pr.leading_zeros(),
    };
    let digits = q_bits.div_ceil(base_log);
    let mask = (1u128 << base_log) - 1;
    let mut out = vec![Poly::zero(p.len()); digits as usize];
    for (i, c) in p.coeffs.iter().enumerate() {
        let mut v = *c as u128;
        for d in out.iter_mut() {
            d.coeffs[i] = (v & mask) as u64;
            v >>= base_log;
        }
    }
    out
}

