//! Negacyclic polynomial arithmetic over `Z_q[X]/(X^n + 1)`.
//!
//! Coefficients are raw `u64` residues in `[0, q)`. Two modulus kinds are
//! supported: powers of two up to `2^64` (reduction is a mask, or free
//! wrapping at exactly 64 bits) and NTT-friendly primes below `2^63`
//! (`q = 1 mod 2n`), where a number-theoretic transform provides a fast
//! multiplication path. Schoolbook multiplication is the reference for both
//! and the default for power-of-two moduli; the two are cross-checked in
//! tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Coefficient modulus: a power of two (bits in `2..=64`) or an odd prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoeffModulus {
    Pow2(u32),
    Prime(u64),
}

impl CoeffModulus {
    /// Modulus value as u128 (`2^64` does not fit `u64`).
    pub fn value(&self) -> u128 {
        match self {
            CoeffModulus::Pow2(bits) => 1u128 << bits,
            CoeffModulus::Prime(p) => *p as u128,
        }
    }

    pub fn reduce(&self, x: u128) -> u64 {
        match self {
            CoeffModulus::Pow2(64) => x as u64,
            CoeffModulus::Pow2(bits) => (x as u64) & ((1u64 << bits) - 1),
            CoeffModulus::Prime(p) => (x % *p as u128) as u64,
        }
    }

    /// Centered representative in `(-q/2, q/2]`-ish (half-open at the top).
    pub fn center(&self, x: u64) -> i128 {
        let q = self.value();
        let x = x as u128;
        if x >= q / 2 {
            x as i128 - q as i128
        } else {
            x as i128
        }
    }

    /// Residue of a signed value.
    pub fn from_i128(&self, x: i128) -> u64 {
        let q = self.value() as i128;
        let r = x.rem_euclid(q);
        r as u64
    }

    fn add(&self, a: u64, b: u64) -> u64 {
        match self {
            CoeffModulus::Pow2(64) => a.wrapping_add(b),
            CoeffModulus::Pow2(bits) => a.wrapping_add(b) & ((1u64 << bits) - 1),
            CoeffModulus::Prime(p) => {
                let s = a as u128 + b as u128;
                (if s >= *p as u128 { s - *p as u128 } else { s }) as u64
            }
        }
    }

    fn sub(&self, a: u64, b: u64) -> u64 {
        match self {
            CoeffModulus::Pow2(64) => a.wrapping_sub(b),
            CoeffModulus::Pow2(bits) => a.wrapping_sub(b) & ((1u64 << bits) - 1),
            CoeffModulus::Prime(p) => {
                if a >= b {
                    a - b
                } else {
                    (a as u128 + (p - b) as u128) as u64
                }
            }
        }
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        match self {
            CoeffModulus::Pow2(64) => a.wrapping_mul(b),
            CoeffModulus::Pow2(bits) => a.wrapping_mul(b) & ((1u64 << bits) - 1),
            CoeffModulus::Prime(p) => ((a as u128 * b as u128) % *p as u128) as u64,
        }
    }
}

/// Dense polynomial of fixed length `n` (the ring dimension).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Poly {
    pub coeffs: Vec<u64>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        Self { coeffs: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Poly, q: CoeffModulus) -> Poly {
        Poly {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| q.add(*a, *b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Poly, q: CoeffModulus) -> Poly {
        Poly {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| q.sub(*a, *b))
                .collect(),
        }
    }

    pub fn neg(&self, q: CoeffModulus) -> Poly {
        Poly { coeffs: self.coeffs.iter().map(|a| q.sub(0, *a)).collect() }
    }

    pub fn scalar_mul(&self, s: u64, q: CoeffModulus) -> Poly {
        Poly { coeffs: self.coeffs.iter().map(|a| q.mul(*a, s)).collect() }
    }

    /// Negacyclic product reduced mod `q`. Uses the NTT when the modulus
    /// supports it, schoolbook otherwise.
    pub fn mul(&self, other: &Poly, q: CoeffModulus) -> Poly {
        if let CoeffModulus::Prime(p) = q {
            if let Some(plan) = NttPlan::new(p, self.len()) {
                return plan.negacyclic_mul(self, other);
            }
        }
        self.mul_schoolbook(other, q)
    }

    /// Reference schoolbook negacyclic multiplication:
    /// `c_k = sum_{i+j=k} a_i b_j - sum_{i+j=k+n} a_i b_j (mod q)`.
    pub fn mul_schoolbook(&self, other: &Poly, q: CoeffModulus) -> Poly {
        let n = self.len();
        let mut out = vec![0u64; n];
        match q {
            CoeffModulus::Pow2(64) => {
                // Wrapping u64 arithmetic is exact arithmetic mod 2^64.
                for (i, a) in self.coeffs.iter().enumerate() {
                    if *a == 0 {
                        continue;
                    }
                    for (j, b) in other.coeffs.iter().enumerate() {
                        let prod = a.wrapping_mul(*b);
                        let k = i + j;
                        if k < n {
                            out[k] = out[k].wrapping_add(prod);
                        } else {
                            out[k - n] = out[k - n].wrapping_sub(prod);
                        }
                    }
                }
            }
            _ => {
                for (i, a) in self.coeffs.iter().enumerate() {
                    if *a == 0 {
                        continue;
                    }
                    for (j, b) in other.coeffs.iter().enumerate() {
                        let prod = q.mul(*a, *b);
                        let k = i + j;
                        if k < n {
                            out[k] = q.add(out[k], prod);
                        } else {
                            out[k - n] = q.sub(out[k - n], prod);
                        }
                    }
                }
            }
        }
        Poly { coeffs: out }
    }

    pub fn max_centered_abs(&self, q: CoeffModulus) -> u128 {
        self.coeffs.iter().map(|c| q.center(*c).unsigned_abs()).max().unwrap_or(0)
    }
}

/// Uniform polynomial over `Z_q`.
pub fn sample_uniform(n: usize, q: CoeffModulus, rng: &mut ChaCha8Rng) -> Poly {
    let coeffs = (0..n)
        .map(|_| match q {
            CoeffModulus::Pow2(64) => rng.random::<u64>(),
            CoeffModulus::Pow2(bits) => rng.random::<u64>() & ((1u64 << bits) - 1),
            CoeffModulus::Prime(p) => rng.random_range(0..p),
        })
        .collect();
    Poly { coeffs }
}

/// Uniform ternary polynomial with coefficients in `{-1, 0, 1}`.
pub fn sample_ternary(n: usize, q: CoeffModulus, rng: &mut ChaCha8Rng) -> Poly {
    let coeffs = (0..n)
        .map(|_| match rng.random_range(0..3u8) {
            0 => 0,
            1 => 1,
            _ => q.reduce(q.value() - 1),
        })
        .collect();
    Poly { coeffs }
}

/// Centered binomial noise with variance `k/2`, approximating a discrete
/// Gaussian of the configured standard deviation (`k = round(2 sigma^2)`).
pub fn sample_noise(n: usize, sigma: f64, q: CoeffModulus, rng: &mut ChaCha8Rng) -> Poly {
    let k = (2.0 * sigma * sigma).round().max(1.0) as u32;
    let coeffs = (0..n)
        .map(|_| {
            let mut acc: i64 = 0;
            for _ in 0..k {
                acc += rng.random_range(0..2u8) as i64;
                acc -= rng.random_range(0..2u8) as i64;
            }
            q.from_i128(acc as i128)
        })
        .collect();
    Poly { coeffs }
}

/// Forward/inverse negacyclic NTT tables for a prime `q = 1 mod 2n`.
pub struct NttPlan {
    q: u64,
    n: usize,
    /// powers of psi (2n-th root), bit-reversed order for the forward pass
    psi_pow: Vec<u64>,
    psi_inv_pow: Vec<u64>,
    n_inv: u64,
}

fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc: u64 = 1;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = ((acc as u128 * base as u128) % q as u128) as u64;
        }
        base = ((base as u128 * base as u128) % q as u128) as u64;
        exp >>= 1;
    }
    acc
}

impl NttPlan {
    /// Build a plan if `q` is prime with `q = 1 mod 2n`. Primality is not
    /// verified here; a failed root search simply yields `None`.
    pub fn new(q: u64, n: usize) -> Option<NttPlan> {
        if !n.is_power_of_two() || (q - 1) % (2 * n as u64) != 0 {
            return None;
        }
        let psi = find_primitive_2nth_root(q, n)?;
        let psi_inv = pow_mod(psi, q - 2, q);
        let mut psi_pow = vec![0u64; n];
        let mut psi_inv_pow = vec![0u64; n];
        let mut p = 1u64;
        let mut pi = 1u64;
        for i in 0..n {
            psi_pow[i] = p;
            psi_inv_pow[i] = pi;
            p = ((p as u128 * psi as u128) % q as u128) as u64;
            pi = ((pi as u128 * psi_inv as u128) % q as u128) as u64;
        }
        let n_inv = pow_mod(n as u64, q - 2, q);
        Some(NttPlan { q, n, psi_pow, psi_inv_pow, n_inv })
    }

    /// Twist by powers of psi, then an in-place cyclic NTT (Cooley-Tukey).
    fn forward(&self, a: &mut [u64]) {
        let (q, n) = (self.q, self.n);
        for (i, v) in a.iter_mut().enumerate() {
            *v = ((*v as u128 * self.psi_pow[i] as u128) % q as u128) as u64;
        }
        bit_reverse_permute(a);
        let mut len = 2;
        while len <= n {
            // omega_len = psi^(2n/len)
            let w_len = pow_mod_psi(&self.psi_pow, 2 * n / len, q);
            for chunk in a.chunks_mut(len) {
                let mut w: u64 = 1;
                for j in 0..len / 2 {
                    let u = chunk[j];
                    let v = ((chunk[j + len / 2] as u128 * w as u128) % q as u128) as u64;
                    let sum = u as u128 + v as u128;
                    chunk[j] = (if sum >= q as u128 { sum - q as u128 } else { sum }) as u64;
                    chunk[j + len / 2] = if u >= v { u - v } else { (u as u128 + (q - v) as u128) as u64 };
                    w = ((w as u128 * w_len as u128) % q as u128) as u64;
                }
            }
            len <<= 1;
        }
    }

    fn inverse(&self, a: &mut [u64]) {
        let (q, n) = (self.q, self.n);
        // Gentleman-Sande, inverse butterflies
        let mut len = n;
        while len >= 2 {
            let w_len = pow_mod(pow_mod_psi(&self.psi_pow, 2 * n / len, q), q - 2, q);
            for chunk in a.chunks_mut(len) {
                let mut w: u64 = 1;
                for j in 0..len / 2 {
                    let u = chunk[j];
                    let v = chunk[j + len / 2];
                    let sum = u as u128 + v as u128;
                    chunk[j] = (if sum >= q as u128 { sum - q as u128 } else { sum }) as u64;
                    let diff = if u >= v { u - v } else { (u as u128 + (q - v) as u128) as u64 };
                    chunk[j + len / 2] = ((diff as u128 * w as u128) % q as u128) as u64;
                    w = ((w as u128 * w_len as u128) % q as u128) as u64;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(a);
        for (i, v) in a.iter_mut().enumerate() {
            let t = ((*v as u128 * self.psi_inv_pow[i] as u128) % q as u128) as u64;
            *v = ((t as u128 * self.n_inv as u128) % q as u128) as u64;
        }
    }

    pub fn negacyclic_mul(&self, a: &Poly, b: &Poly) -> Poly {
        let mut fa = a.coeffs.clone();
        let mut fb = b.coeffs.clone();
        self.forward(&mut fa);
        self.forward(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = ((*x as u128 * *y as u128) % self.q as u128) as u64;
        }
        self.inverse(&mut fa);
        Poly { coeffs: fa }
    }
}

/// psi^k from the precomputed power table (k may equal n, folded via
/// psi^n = -1).
fn pow_mod_psi(psi_pow: &[u64], k: usize, q: u64) -> u64 {
    let n = psi_pow.len();
    if k < n {
        psi_pow[k]
    } else {
        // psi^(n + r) = -psi^r
        let r = k - n;
        q - psi_pow[r]
    }
}

fn bit_reverse_permute(a: &mut [u64]) {
    let n = a.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i as u32).reverse_bits() >> (32 - bits);
        let j = j as usize;
        if i < j {
            a.swap(i, j);
        }
    }
}

fn find_primitive_2nth_root(q: u64, n: usize) -> Option<u64> {
    let order = 2 * n as u64;
    let exp = (q - 1) / order;
    for candidate in 2..200u64 {
        let psi = pow_mod(candidate, exp, q);
        // psi has order dividing 2n; primitive iff psi^n = -1
        if pow_mod(psi, n as u64, q) == q - 1 {
            return Some(psi);
        }
    }
    None
}

/// Signed 192-bit accumulator for exact tensor products (value = hi * 2^128
/// + lo, two's complement).
#[derive(Debug, Clone, Copy, Default)]
pub struct I192 {
    hi: i64,
    lo: u128,
}

impl I192 {
    pub fn add_i128(&mut self, x: i128) {
        let xl = x as u128;
        let xh: i64 = if x < 0 { -1 } else { 0 };
        let (lo, carry) = self.lo.overflowing_add(xl);
        self.lo = lo;
        self.hi = self.hi.wrapping_add(xh).wrapping_add(carry as i64);
    }

    pub fn add(&mut self, other: &I192) {
        let (lo, carry) = self.lo.overflowing_add(other.lo);
        self.lo = lo;
        self.hi = self.hi.wrapping_add(other.hi).wrapping_add(carry as i64);
    }

    /// `round(value / 2^shift)` with ties toward positive infinity (the
    /// half-up convention of adding 2^(shift-1) then flooring). Requires the
    /// result to fit in `i128`.
    pub fn round_shift(mut self, shift: u32) -> i128 {
        debug_assert!((1..128).contains(&shift));
        self.add_i128(1i128 << (shift - 1));
        // arithmetic shift right across the limbs
        let lo_part = self.lo >> shift;
        let hi_part = (self.hi as i128) << (128 - shift);
        hi_part | lo_part as i128
    }

    pub fn to_big(self) -> num_bigint::BigInt {
        num_bigint::BigInt::from(self.hi) * (num_bigint::BigInt::from(1u128 << 127) * 2)
            + num_bigint::BigInt::from(self.lo)
    }
}

/// Exact negacyclic product over the integers of two centered-representative
/// polynomials, returned as 192-bit accumulators per coefficient.
pub fn tensor_product_exact(a: &Poly, b: &Poly, q: CoeffModulus) -> Vec<I192> {
    let n = a.len();
    let ac: Vec<i128> = a.coeffs.iter().map(|c| q.center(*c)).collect();
    let bc: Vec<i128> = b.coeffs.iter().map(|c| q.center(*c)).collect();
    let mut out = vec![I192::default(); n];
    for (i, ai) in ac.iter().enumerate() {
        if *ai == 0 {
            continue;
        }
        for (j, bj) in bc.iter().enumerate() {
            let prod = ai * bj;
            let k = i + j;
            if k < n {
                out[k].add_i128(prod);
            } else {
                out[k - n].add_i128(-prod);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const GOLDILOCKS: u64 = 0xffff_ffff_0000_0001;

    #[test]
    fn ntt_roundtrip_and_schoolbook_agreement() {
        let q = CoeffModulus::Prime(GOLDILOCKS);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [128usize, 256] {
            let plan = NttPlan::new(GOLDILOCKS, n).expect("goldilocks supports NTT");
            for _ in 0..5 {
                let a = sample_uniform(n, q, &mut rng);
                let b = sample_uniform(n, q, &mut rng);
                let fast = plan.negacyclic_mul(&a, &b);
                let slow = a.mul_schoolbook(&b, q);
                assert_eq!(fast, slow);
            }
        }
    }

    #[test]
    fn negacyclic_wraparound_sign() {
        // (X^{n-1}) * X = X^n = -1
        let q = CoeffModulus::Pow2(64);
        let n = 8;
        let mut a = Poly::zero(n);
        a.coeffs[n - 1] = 1;
        let mut b = Poly::zero(n);
        b.coeffs[1] = 1;
        let c = a.mul(&b, q);
        assert_eq!(q.center(c.coeffs[0]), -1);
        assert!(c.coeffs[1..].iter().all(|v| *v == 0));
    }

    #[test]
    fn pow2_wrapping_matches_generic_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 32;
        let q64 = CoeffModulus::Pow2(64);
        let q20 = CoeffModulus::Pow2(20);
        let a = sample_uniform(n, q20, &mut rng);
        let b = sample_uniform(n, q20, &mut rng);
        let c = a.mul_schoolbook(&b, q20);
        // same computation done mod 2^64 then reduced agrees
        let c64 = a.mul_schoolbook(&b, q64);
        for (x, y) in c.coeffs.iter().zip(&c64.coeffs) {
            assert_eq!(*x, y & ((1u64 << 20) - 1));
        }
    }

    #[test]
    fn i192_accumulator_matches_bigint() {
        use num_bigint::BigInt;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut acc = I192::default();
            let mut big = BigInt::from(0);
            for _ in 0..300 {
                let x = (rand::Rng::random::<i64>(&mut rng) as i128)
                    * (rand::Rng::random::<i64>(&mut rng) as i128 >> 1);
                acc.add_i128(x);
                big += BigInt::from(x);
            }
            assert_eq!(acc.to_big(), big);
            let shift = 34u32;
            let rounded = acc.round_shift(shift);
            let expect = (big + (BigInt::from(1) << (shift - 1))) >> shift;
            assert_eq!(BigInt::from(rounded), expect);
        }
    }

    #[test]
    fn noise_sampler_is_centered_and_bounded() {
        let q = CoeffModulus::Pow2(40);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = 3.2;
        let p = sample_noise(4096, sigma, q, &mut rng);
        let k = (2.0 * sigma * sigma).round() as i128;
        let mut sum = 0i128;
        for c in &p.coeffs {
            let v = q.center(*c);
            assert!(v.abs() <= k, "binomial sample out of range");
            sum += v;
        }
        let mean = sum as f64 / 4096.0;
        assert!(mean.abs() < 0.5, "mean {mean} drifts");
    }
}
