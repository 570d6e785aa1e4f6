//! Fixed-point quantization into the centered residue set
//! `Z_q = {-floor(q/2), ..., ceil(q/2)-1}`, the integer reformulation of a
//! state-space controller, recovery back to reals, and a conservative
//! overflow-horizon prediction.
//!
//! The controller update runs in scaled integer arithmetic
//!
//! ```text
//! z(k+1) = round(s1*A) z(k) + round(s2*B) round(s1^{k+1} s5 y(k))
//! v(k)   = round(s3*C) z(k) + round(s4*D) round(s1^{k+1} s5 y(k))
//! ```
//!
//! with `z(0) = round(s0*x0)`, which reproduces the real controller up to
//! quantization error provided `s0 = s2*s5` and `s1*s4 = s2*s3`. The factor
//! `s1` accumulates step by step, so for `s1 > 1` and finite `q` the state
//! eventually leaves `Z_q`. Overflow here is a *flag*, not an error: the
//! computation keeps running in wrapped arithmetic to emulate the undetected
//! failure mode of an encrypted implementation.

use num_bigint::BigInt;
use num_bigint::Sign;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::StateSpace;

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("cannot quantize non-finite value {0}")]
    NonFinite(f64),
    #[error("scaling factor must be >= 1, got {0}")]
    ScaleTooSmall(f64),
    #[error("modulus must exceed 1, got {0}")]
    ModulusTooSmall(u128),
    #[error("modulus {0} exceeds the 2^63 fast-path cap")]
    ModulusTooLarge(u128),
    #[error("scaling constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("entry {value} does not fit Z_q with q = {q}")]
    OutOfRange { value: i128, q: u128 },
    #[error("input width {got}, controller expects {expected}")]
    WidthMismatch { got: usize, expected: usize },
}

/// The scaling factors `s0..s7` plus the modulus cardinality `q`.
///
/// `s0..s5` govern the integer controller, `s6`/`s7` the FIR path. The
/// constructor enforces the two coupling constraints this reformulation
/// relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingProfile {
    s: [f64; 8],
    q: u128,
}

/// Serialized form: keys "s0".."s7" and "q" as a decimal string so moduli
/// beyond 2^53 survive JSON number round-trips.
#[derive(Debug, Serialize, Deserialize)]
struct ScalingProfileFile {
    s0: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
    s5: f64,
    s6: f64,
    s7: f64,
    q: String,
}

impl ScalingProfile {
    pub fn new(s: [f64; 8], q: u128) -> Result<Self, QuantError> {
        if q <= 1 {
            return Err(QuantError::ModulusTooSmall(q));
        }
        for (i, si) in s.iter().enumerate() {
            if !si.is_finite() || *si < 1.0 {
                return Err(QuantError::ConstraintViolated(format!("s{i} = {si} must be >= 1")));
            }
        }
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        if rel(s[0], s[2] * s[5]) > 1e-12 {
            return Err(QuantError::ConstraintViolated(format!(
                "s0 = {} must equal s2*s5 = {}",
                s[0],
                s[2] * s[5]
            )));
        }
        if rel(s[1] * s[4], s[2] * s[3]) > 1e-12 {
            return Err(QuantError::ConstraintViolated(format!(
                "s1*s4 = {} must equal s2*s3 = {}",
                s[1] * s[4],
                s[2] * s[3]
            )));
        }
        Ok(Self { s, q })
    }

    /// The simple uniform choice `s0..s4 = s`, `s5 = 1` (and `s6 = s7 = s`
    /// for the FIR path), which satisfies both constraints.
    pub fn uniform(s: f64, q: u128) -> Result<Self, QuantError> {
        Self::new([s, s, s, s, s, 1.0, s, s], q)
    }

    pub fn s(&self, i: usize) -> f64 {
        self.s[i]
    }

    pub fn q(&self) -> u128 {
        self.q
    }

    pub fn to_json(&self) -> String {
        let f = ScalingProfileFile {
            s0: self.s[0],
            s1: self.s[1],
            s2: self.s[2],
            s3: self.s[3],
            s4: self.s[4],
            s5: self.s[5],
            s6: self.s[6],
            s7: self.s[7],
            q: self.q.to_string(),
        };
        serde_json::to_string_pretty(&f).expect("profile serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, QuantError> {
        let f: ScalingProfileFile = serde_json::from_str(json)
            .map_err(|e| QuantError::ConstraintViolated(format!("bad profile JSON: {e}")))?;
        let q: u128 = f
            .q
            .parse()
            .map_err(|e| QuantError::ConstraintViolated(format!("bad modulus string: {e}")))?;
        Self::new([f.s0, f.s1, f.s2, f.s3, f.s4, f.s5, f.s6, f.s7], q)
    }
}

/// Round to nearest with ties away from zero, i.e. `round(s*x)`.
/// The recovered value `result/s` is within `1/(2s)` of `x`.
pub fn quantize(x: f64, s: f64) -> Result<i128, QuantError> {
    if !x.is_finite() {
        return Err(QuantError::NonFinite(x));
    }
    if s < 1.0 {
        return Err(QuantError::ScaleTooSmall(s));
    }
    Ok((s * x).round() as i128)
}

fn floor_half(q: u128) -> i128 {
    (q / 2) as i128
}

fn ceil_half(q: u128) -> i128 {
    q.div_ceil(2) as i128
}

/// Centered representative of `x` modulo `q`, in `[-floor(q/2), ceil(q/2)-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZqValue {
    rep: i128,
    q: u128,
}

impl ZqValue {
    pub fn wrap_i128(x: i128, q: u128) -> Result<Self, QuantError> {
        if q <= 1 {
            return Err(QuantError::ModulusTooSmall(q));
        }
        if q > 1 << 126 {
            return Err(QuantError::ModulusTooLarge(q));
        }
        Ok(Self { rep: wrap_rep_i128(x, q), q })
    }

    pub fn rep(&self) -> i128 {
        self.rep
    }

    pub fn q(&self) -> u128 {
        self.q
    }

    /// Wrapped sum. Panics if the moduli differ. Representatives stay below
    /// `2^125` in magnitude, so the intermediate sum is exact in `i128`.
    pub fn add(&self, other: &ZqValue) -> ZqValue {
        assert_eq!(self.q, other.q, "modulus mismatch");
        ZqValue { rep: wrap_rep_i128(self.rep + other.rep, self.q), q: self.q }
    }

    /// Wrapped product. Panics if the moduli differ; requires `q <= 2^63`
    /// so products of representatives stay exact in `i128`.
    pub fn mul(&self, other: &ZqValue) -> ZqValue {
        assert_eq!(self.q, other.q, "modulus mismatch");
        assert!(self.q <= 1 << 63, "product fast path needs q <= 2^63");
        ZqValue { rep: wrap_rep_i128(self.rep * other.rep, self.q), q: self.q }
    }
}

fn wrap_rep_i128(x: i128, q: u128) -> i128 {
    let qi = q as i128;
    let mut r = x.rem_euclid(qi); // in [0, q)
    if r >= ceil_half(q) {
        r -= qi;
    }
    r
}

/// Centered representative congruent to a big integer modulo `q`.
pub fn zq_wrap(x: &BigInt, q: u128) -> Result<ZqValue, QuantError> {
    if q <= 1 {
        return Err(QuantError::ModulusTooSmall(q));
    }
    if q > 1 << 126 {
        return Err(QuantError::ModulusTooLarge(q));
    }
    let qb = BigInt::from(q);
    let mut r = x % &qb;
    if r.sign() == Sign::Minus {
        r += &qb;
    }
    // r in [0, q)
    let half = BigInt::from(ceil_half(q));
    if r >= half {
        r -= &qb;
    }
    let (sign, digits) = r.to_u64_digits();
    let mut mag: u128 = 0;
    for (i, d) in digits.iter().enumerate().take(2) {
        mag |= (*d as u128) << (64 * i);
    }
    let rep = if sign == Sign::Minus { -(mag as i128) } else { mag as i128 };
    Ok(ZqValue { rep, q })
}

/// Dense integer matrix with `i128` entries (row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i128>,
}

impl IMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i128] {
        &self.data
    }

    pub fn max_abs(&self) -> i128 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Max absolute row sum (induced infinity norm).
    pub fn inf_norm(&self) -> u128 {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .map(|v| v.unsigned_abs())
                    .sum::<u128>()
            })
            .max()
            .unwrap_or(0)
    }
}

impl std::ops::Index<(usize, usize)> for IMatrix {
    type Output = i128;
    fn index(&self, (i, j): (usize, usize)) -> &i128 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut i128 {
        &mut self.data[i * self.cols + j]
    }
}

fn quantize_matrix(m: &crate::lti::Matrix, s: f64, q: u128) -> Result<IMatrix, QuantError> {
    let mut out = IMatrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let z = quantize(m[(i, j)], s)?;
            if z < -floor_half(q) || z > ceil_half(q) - 1 {
                return Err(QuantError::OutOfRange { value: z, q });
            }
            out[(i, j)] = z;
        }
    }
    Ok(out)
}

/// What a recovered vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoverKind {
    /// Controller output `v(k)`: divide by `s1^{k+1} * s4 * s5`.
    Input,
    /// Controller state `z(k)`: divide by `s0 * s1^k`.
    State,
}

/// Recover the real-valued vector behind scaled integers at step `k`.
pub fn recover(v: &[i128], k: u64, profile: &ScalingProfile, kind: RecoverKind) -> Vec<f64> {
    let denom = match kind {
        RecoverKind::Input => profile.s(1).powi(k as i32 + 1) * profile.s(4) * profile.s(5),
        RecoverKind::State => profile.s(0) * profile.s(1).powi(k as i32),
    };
    v.iter().map(|z| *z as f64 / denom).collect()
}

/// Result of one integer controller step.
#[derive(Debug, Clone)]
pub struct IntegerStep {
    /// Scaled integer controller output `v(k)`.
    pub v: Vec<i128>,
    /// True once any intermediate has left `Z_q` at or before this step.
    pub overflowed: bool,
    /// Rigorous bound on `|recover(v, k) - u_exact(k)|` per component,
    /// accumulated from the actual magnitudes seen so far. Only meaningful
    /// while `overflowed` is false.
    pub error_bound: f64,
}

/// Integer-arithmetic reformulation of a state-space controller. Mutable
/// stepping object with single ownership per control session.
#[derive(Debug, Clone)]
pub struct IntegerController {
    pub a_bar: IMatrix,
    pub b_bar: IMatrix,
    pub c_bar: IMatrix,
    pub d_bar: IMatrix,
    z: Vec<i128>,
    k: u64,
    profile: ScalingProfile,
    overflowed: bool,
    /// Infinity-norm bound on the recovered-state error, updated each step.
    state_err: f64,
    /// Cached real-matrix norms for the error recursion.
    a_inf: f64,
    b_inf: f64,
    c_inf: f64,
    d_inf: f64,
}

/// Quantize a controller into integer matrices, failing if any entry leaves
/// `Z_q`. The fast stepping path needs `q <= 2^63`.
pub fn to_integer_controller(
    sys: &StateSpace,
    profile: &ScalingProfile,
) -> Result<IntegerController, QuantError> {
    let q = profile.q();
    if q > 1 << 63 {
        return Err(QuantError::ModulusTooLarge(q));
    }
    let a_bar = quantize_matrix(&sys.a, profile.s(1), q)?;
    let b_bar = quantize_matrix(&sys.b, profile.s(2), q)?;
    let c_bar = quantize_matrix(&sys.c, profile.s(3), q)?;
    let d_bar = quantize_matrix(&sys.d, profile.s(4), q)?;
    let mut z = Vec::with_capacity(sys.order());
    for x in &sys.x0 {
        let zi = quantize(*x, profile.s(0))?;
        if zi < -floor_half(q) || zi > ceil_half(q) - 1 {
            return Err(QuantError::OutOfRange { value: zi, q });
        }
        z.push(zi);
    }
    Ok(IntegerController {
        a_bar,
        b_bar,
        c_bar,
        d_bar,
        z,
        k: 0,
        overflowed: false,
        state_err: 1.0 / (2.0 * profile.s(0)),
        a_inf: sys.a.inf_norm(),
        b_inf: sys.b.inf_norm(),
        c_inf: sys.c.inf_norm(),
        d_inf: sys.d.inf_norm(),
        profile: profile.clone(),
    })
}

impl IntegerController {
    pub fn state(&self) -> &[i128] {
        &self.z
    }

    pub fn step_index(&self) -> u64 {
        self.k
    }

    pub fn profile(&self) -> &ScalingProfile {
        &self.profile
    }

    pub fn has_overflowed(&self) -> bool {
        self.overflowed
    }

    pub fn inputs(&self) -> usize {
        self.b_bar.cols()
    }

    pub fn order(&self) -> usize {
        self.a_bar.rows()
    }

    /// Reinitialize the state to `round(s0 * x)` and reset the accumulation
    /// of `s1`, as an external refresh does. The supplied `x` typically
    /// carries the error of a previous recovery, so the re-quantization
    /// rounding *adds* to the current bound rather than replacing it.
    pub fn reinitialize(&mut self, x: &[f64]) -> Result<(), QuantError> {
        if x.len() != self.order() {
            return Err(QuantError::WidthMismatch { got: x.len(), expected: self.order() });
        }
        let q = self.profile.q();
        for (zi, xi) in self.z.iter_mut().zip(x) {
            let v = quantize(*xi, self.profile.s(0))?;
            if v < -floor_half(q) || v > ceil_half(q) - 1 {
                return Err(QuantError::OutOfRange { value: v, q });
            }
            *zi = v;
        }
        self.k = 0;
        self.state_err += 1.0 / (2.0 * self.profile.s(0));
        Ok(())
    }

    /// Prescale an input sample as the sensor would: `round(s1^{k+1} s5 y)`.
    ///
    /// Exact for integral `s1` and `s5` (big-integer path); otherwise
    /// computed in `f64`, which is exact while `s1^{k+1} s5 |y| < 2^53`.
    fn prescale(&self, y: f64) -> (i128, bool) {
        let s1 = self.profile.s(1);
        let s5 = self.profile.s(5);
        let exp = self.k + 1;
        if s1.fract() == 0.0 && s5.fract() == 0.0 && y.is_finite() {
            let factor = BigInt::from(s1 as u64).pow(exp as u32) * BigInt::from(s5 as u64);
            let scaled = round_big_times_f64(&factor, y);
            let wrapped = zq_wrap(&scaled, self.profile.q()).expect("valid modulus");
            let in_range = in_zq(&scaled, self.profile.q());
            (wrapped.rep(), !in_range)
        } else {
            let v = (s1.powi(exp as i32) * s5 * y).round();
            if v.abs() >= 2f64.powi(126) {
                // Far beyond any supported modulus: certainly overflowed.
                (wrap_rep_i128(v as i128, self.profile.q()), true)
            } else {
                let vi = v as i128;
                let wrapped = wrap_rep_i128(vi, self.profile.q());
                (wrapped, wrapped != vi)
            }
        }
    }

    /// One step of the integer controller. Overflow raises a flag and the
    /// arithmetic continues in wrapped `Z_q`, mimicking an undetected
    /// overflow inside an encrypted evaluation.
    pub fn step(&mut self, y: &[f64]) -> Result<IntegerStep, QuantError> {
        if y.len() != self.inputs() {
            return Err(QuantError::WidthMismatch { got: y.len(), expected: self.inputs() });
        }
        let q = self.profile.q();
        let half_lo = -floor_half(q);
        let half_hi = ceil_half(q) - 1;
        let mut overflow = self.overflowed;

        let mut y_scaled = Vec::with_capacity(y.len());
        for yi in y {
            if !yi.is_finite() {
                return Err(QuantError::NonFinite(*yi));
            }
            let (rep, over) = self.prescale(*yi);
            overflow |= over;
            y_scaled.push(rep);
        }

        // v(k) = C_bar z + D_bar y_scaled, exact in i128 then wrapped.
        let n = self.order();
        let mut v = Vec::with_capacity(self.c_bar.rows());
        for i in 0..self.c_bar.rows() {
            let mut acc: i128 = 0;
            for j in 0..n {
                acc += self.c_bar[(i, j)] * self.z[j];
            }
            for (j, ys) in y_scaled.iter().enumerate() {
                acc += self.d_bar[(i, j)] * ys;
            }
            let wrapped = wrap_rep_i128(acc, q);
            overflow |= wrapped != acc || acc < half_lo || acc > half_hi;
            v.push(wrapped);
        }

        // z(k+1) = A_bar z + B_bar y_scaled.
        let mut zn = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc: i128 = 0;
            for j in 0..n {
                acc += self.a_bar[(i, j)] * self.z[j];
            }
            for (j, ys) in y_scaled.iter().enumerate() {
                acc += self.b_bar[(i, j)] * ys;
            }
            let wrapped = wrap_rep_i128(acc, q);
            overflow |= wrapped != acc;
            zn.push(wrapped);
        }

        // Error-bound recursion on recovered values (see module docs): each
        // quantized matrix contributes 1/2 per entry against the actual
        // magnitudes, each prescaled input 1/2 of its own scale.
        let s = &self.profile;
        let denom_state = s.s(0) * s.s(1).powi(self.k as i32 + 1);
        let denom_out = s.s(1).powi(self.k as i32 + 1) * s.s(4) * s.s(5);
        let dy = 1.0 / (2.0 * s.s(1).powi(self.k as i32 + 1) * s.s(5));
        let z_l1: f64 = self.z.iter().map(|z| z.unsigned_abs() as f64).sum();
        let y_l1: f64 = y_scaled.iter().map(|z| z.unsigned_abs() as f64).sum();
        let out_err = self.c_inf * self.state_err
            + 0.5 * (z_l1 + y_l1) / denom_out
            + self.d_inf * dy;
        self.state_err = self.a_inf * self.state_err
            + self.b_inf * dy
            + 0.5 * (z_l1 + y_l1) / denom_state;

        self.z = zn;
        self.k += 1;
        self.overflowed = overflow;
        Ok(IntegerStep { v, overflowed: overflow, error_bound: out_err })
    }
}

fn in_zq(x: &BigInt, q: u128) -> bool {
    let lo = BigInt::from(-floor_half(q));
    let hi = BigInt::from(ceil_half(q) - 1);
    *x >= lo && *x <= hi
}

/// `round(factor * y)` with ties away from zero, exactly, for a big integer
/// factor and an `f64` value (decomposed as mantissa * 2^exponent).
fn round_big_times_f64(factor: &BigInt, y: f64) -> BigInt {
    if y == 0.0 {
        return BigInt::from(0);
    }
    // f64 = sign * mant * 2^exp with mant an integer below 2^53.
    let bits = y.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, exp) = if raw_exp == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1 << 52), raw_exp - 1075)
    };
    let prod = factor * BigInt::from(mant) * BigInt::from(sign);
    if exp >= 0 {
        prod << (exp as u64)
    } else {
        // round(prod / 2^shift) with ties away from zero: add half in the
        // sign direction, then truncate toward zero (BigInt `/` truncates).
        let shift = (-exp) as u64;
        let half = BigInt::from(1) << (shift - 1);
        let adj = if prod.sign() == Sign::Minus { prod - half } else { prod + half };
        &adj / (BigInt::from(1) << shift)
    }
}

/// Conservative overflow horizon: how many steps are provably safe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Worst-case magnitudes converge below the modulus bound; the
    /// controller can run forever (the `s1 = 1`, nilpotent case).
    Unbounded,
    /// Safe for exactly this many steps; 0 means the construction bound is
    /// already violated.
    Steps(u64),
}

/// Largest `T` such that propagating worst-case per-component bounds on
/// `z(k)`, the prescaled input and `v(k)` stays strictly inside `Z_q` for all
/// `k < T`, for any input with `|y| <= y_max`. The bound propagation iterates
/// `Z(k+1) = |A_bar| Z(k) + |B_bar| Y(k)` componentwise in exact big-integer
/// arithmetic with every rounding pushed upward, so no admissible run can
/// overflow before the returned horizon.
pub fn overflow_horizon(ctrl: &IntegerController, y_max: f64) -> Horizon {
    assert!(y_max >= 0.0, "y_max must be non-negative");
    let profile = ctrl.profile();
    let q = profile.q();
    let hi = BigInt::from(floor_half(q).min(ceil_half(q) - 1)); // symmetric safe bound
    let s1 = profile.s(1);
    let l = ctrl.inputs();
    let m = ctrl.c_bar.rows();

    // Upper bound on |round(s1^{k+1} s5 y)| for |y| <= y_max.
    let y_bound = |k: u64| -> Option<BigInt> {
        let scale = s1.powi(k as i32 + 1) * profile.s(5) * y_max;
        if !scale.is_finite() || scale >= 2f64.powi(500) {
            return None; // astronomically large: certain overflow
        }
        // ceil with a safety bump covers both f64 rounding and the 1/2 tie
        Some(BigInt::from(scale.ceil() as i128) + 1)
    };
    let abs_matvec = |mat: &IMatrix, v: &[BigInt]| -> Vec<BigInt> {
        (0..mat.rows())
            .map(|i| {
                (0..mat.cols())
                    .map(|j| BigInt::from(mat[(i, j)].unsigned_abs()) * &v[j])
                    .sum()
            })
            .collect()
    };

    let mut z_bound: Vec<BigInt> =
        ctrl.z.iter().map(|z| BigInt::from(z.unsigned_abs())).collect();
    if z_bound.iter().any(|z| *z > hi) {
        return Horizon::Steps(0);
    }

    let max_steps: u64 = 1_000_000;
    let constant_input = s1 <= 1.0;
    for k in 0..max_steps {
        let yb = match y_bound(k) {
            Some(b) => b,
            None => return Horizon::Steps(k),
        };
        if yb > hi {
            return Horizon::Steps(k);
        }
        let yv = vec![yb; l];
        let mut vb = abs_matvec(&ctrl.c_bar, &z_bound);
        for (vi, di) in vb.iter_mut().zip(abs_matvec(&ctrl.d_bar, &yv)) {
            *vi += di;
        }
        if vb.iter().take(m).any(|v| *v > hi) {
            return Horizon::Steps(k);
        }
        let mut zn = abs_matvec(&ctrl.a_bar, &z_bound);
        for (zi, bi) in zn.iter_mut().zip(abs_matvec(&ctrl.b_bar, &yv)) {
            *zi += bi;
        }
        if zn.iter().any(|z| *z > hi) {
            // step k is fine, z(k+1) would overflow while being formed
            return Horizon::Steps(k + 1);
        }
        // With s1 <= 1 the input bound is constant and the bound map is
        // monotone, so reaching an exact componentwise fixed point means no
        // later step can ever overflow.
        if constant_input && zn == z_bound {
            return Horizon::Unbounded;
        }
        z_bound = zn;
    }
    Horizon::Steps(max_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{Matrix, SignalTrace, StateSpace};

    fn scalar_ctrl(a: f64, b: f64, c: f64, d: f64, x0: f64) -> StateSpace {
        StateSpace::new(
            Matrix::new(1, 1, vec![a]).unwrap(),
            Matrix::new(1, 1, vec![b]).unwrap(),
            Matrix::new(1, 1, vec![c]).unwrap(),
            Matrix::new(1, 1, vec![d]).unwrap(),
            vec![x0],
        )
        .unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.516, 100.0).unwrap(), 52);
        assert_eq!(quantize(0.0, 12345.0).unwrap(), 0);
        // tie rounds away from zero
        assert_eq!(quantize(-0.005, 100.0).unwrap(), -1);
        assert_eq!(quantize(0.005, 100.0).unwrap(), 1);
        assert!(matches!(quantize(f64::NAN, 10.0), Err(QuantError::NonFinite(_))));
        assert!(matches!(quantize(1.0, 0.5), Err(QuantError::ScaleTooSmall(_))));
    }

    #[test]
    fn quantize_error_bound_grid() {
        for i in -2000..=2000 {
            let x = i as f64 * 0.00173;
            for s in [1.0, 10.0, 100.0, 4096.0] {
                let z = quantize(x, s).unwrap();
                assert!(
                    (x - z as f64 / s).abs() <= 1.0 / (2.0 * s) + 1e-15,
                    "x={x}, s={s}, z={z}"
                );
            }
        }
    }

    #[test]
    fn profile_constraints_enforced() {
        assert!(ScalingProfile::uniform(100.0, 1 << 16).is_ok());
        // s0 != s2*s5
        assert!(ScalingProfile::new([2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 100).is_err());
        // s1*s4 != s2*s3
        assert!(ScalingProfile::new([1.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 100).is_err());
        // q too small
        assert!(matches!(
            ScalingProfile::uniform(1.0, 1),
            Err(QuantError::ModulusTooSmall(1))
        ));
        // the s1=1 footnote choice: s2=s3=s5=s, s0=s4=s^2
        let s = 7.0;
        assert!(ScalingProfile::new([s * s, 1.0, s, s, s * s, s, s, s], 1 << 30).is_ok());
    }

    #[test]
    fn profile_json_roundtrip_large_q() {
        let q: u128 = (1 << 64) + 12345; // beyond 2^53 and beyond u64 JSON numbers
        let p = ScalingProfile::new([1.0; 8], q).unwrap();
        let json = p.to_json();
        assert!(json.contains(&q.to_string()));
        let back = ScalingProfile::from_json(&json).unwrap();
        assert_eq!(back.q(), q);
    }

    #[test]
    fn zq_wrap_examples() {
        let q: u128 = 1 << 10;
        assert_eq!(zq_wrap(&BigInt::from(q), q).unwrap().rep(), 0);
        // x = ceil(q/2) wraps to -floor(q/2) for even q
        assert_eq!(zq_wrap(&BigInt::from(512), q).unwrap().rep(), -512);
        assert_eq!(zq_wrap(&BigInt::from(511), q).unwrap().rep(), 511);
        assert_eq!(zq_wrap(&BigInt::from(-513), q).unwrap().rep(), 511);
    }

    #[test]
    fn zq_add_is_homomorphic_modulo_q() {
        let mut rng = crate::test_support::rng(3);
        let q: u128 = 1 << 20;
        for _ in 0..1000 {
            let a = (crate::test_support::next_u64(&mut rng) as i128) - (1 << 63);
            let b = (crate::test_support::next_u64(&mut rng) as i128) - (1 << 63);
            let wa = ZqValue::wrap_i128(a, q).unwrap();
            let wb = ZqValue::wrap_i128(b, q).unwrap();
            let direct = zq_wrap(&(BigInt::from(a) + BigInt::from(b)), q).unwrap();
            assert_eq!(wa.add(&wb), direct);
            let prod = zq_wrap(&(BigInt::from(a) * BigInt::from(b)), q).unwrap();
            assert_eq!(wa.mul(&wb), prod);
        }
    }

    #[test]
    fn integer_controller_zero_system() {
        let profile = ScalingProfile::uniform(100.0, 1 << 30).unwrap();
        let sys = StateSpace::zero(2, 2, 1);
        let mut ctrl = to_integer_controller(&sys, &profile).unwrap();
        assert_eq!(ctrl.a_bar.max_abs(), 0);
        let step = ctrl.step(&[1.0, -1.0]).unwrap();
        assert_eq!(step.v, vec![0]);
        assert!(!step.overflowed);
    }

    #[test]
    fn quantized_matrices_recover_within_half_step() {
        let mut rng = crate::test_support::rng(19);
        let s = 1000.0;
        let profile = ScalingProfile::uniform(s, 1 << 40).unwrap();
        for _ in 0..20 {
            let sys = crate::test_support::random_stable_system(&mut rng, 3, 2, 2);
            let ctrl = to_integer_controller(&sys, &profile).unwrap();
            let pairs = [
                (&ctrl.a_bar, &sys.a),
                (&ctrl.b_bar, &sys.b),
                (&ctrl.c_bar, &sys.c),
                (&ctrl.d_bar, &sys.d),
            ];
            for (quantized, original) in pairs {
                for i in 0..original.rows() {
                    for j in 0..original.cols() {
                        let recovered = quantized[(i, j)] as f64 / s;
                        assert!(
                            (recovered - original[(i, j)]).abs() <= 1.0 / (2.0 * s),
                            "entry ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn construction_overflow_detected() {
        let profile = ScalingProfile::uniform(100.0, 64).unwrap();
        let sys = scalar_ctrl(0.9, 1.0, 1.0, 0.0, 0.0);
        // round(100 * 0.9) = 90 > 31 = ceil(64/2) - 1
        assert!(matches!(
            to_integer_controller(&sys, &profile),
            Err(QuantError::OutOfRange { .. })
        ));
    }

    #[test]
    fn overflow_flag_raised_at_big_int_first_exit() {
        let profile = ScalingProfile::uniform(100.0, 1 << 16).unwrap();
        let sys = scalar_ctrl(0.9, 1.0, 1.0, 0.0, 0.0);
        let mut ctrl = to_integer_controller(&sys, &profile).unwrap();

        // big-integer oracle of the same recursion: a_bar=90, b_bar=c_bar=100
        let half_hi = BigInt::from((1u64 << 15) - 1);
        let half_lo = BigInt::from(-(1i64 << 15));
        let in_range = |x: &BigInt| *x >= half_lo && *x <= half_hi;
        let mut z = BigInt::from(0);
        let mut first_exit = None;
        for k in 0..30u32 {
            let y_scaled = BigInt::from(100u64).pow(k + 1); // round(100^{k+1} * 1.0)
            let v = BigInt::from(100) * &z;
            let zn = BigInt::from(90) * &z + BigInt::from(100) * &y_scaled;
            if first_exit.is_none() && (!in_range(&y_scaled) || !in_range(&v) || !in_range(&zn)) {
                first_exit = Some(k);
            }
            z = zn;
        }
        let expect_k = first_exit.expect("oracle must overflow");

        let mut got_k = None;
        for k in 0..30u64 {
            let step = ctrl.step(&[1.0]).unwrap();
            if step.overflowed {
                got_k = Some(k);
                break;
            }
        }
        assert_eq!(got_k, Some(expect_k as u64));
    }

    #[test]
    fn recovery_matches_plaintext_before_overflow() {
        let mut rng = crate::test_support::rng(17);
        for trial in 0..20 {
            let sys = crate::test_support::random_stable_system(&mut rng, 3, 2, 2);
            let profile = ScalingProfile::uniform(1024.0, 1 << 62).unwrap();
            let mut ctrl = match to_integer_controller(&sys, &profile) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let inputs = crate::test_support::random_trace(&mut rng, 2, 12);
            let (_, outputs) = crate::lti::simulate(&sys, &inputs, 12).unwrap();
            for k in 0..12u64 {
                let step = ctrl.step(inputs.sample(k as usize)).unwrap();
                if step.overflowed {
                    break;
                }
                let rec = recover(&step.v, k, &profile, RecoverKind::Input);
                for (r, u) in rec.iter().zip(outputs.sample(k as usize)) {
                    assert!(
                        (r - u).abs() <= step.error_bound + 1e-12,
                        "trial {trial} k={k}: |{r} - {u}| > {}",
                        step.error_bound
                    );
                }
            }
        }
    }

    #[test]
    fn recover_identity_scaling() {
        let profile = ScalingProfile::new([1.0; 8], 1 << 20).unwrap();
        assert_eq!(recover(&[7], 0, &profile, RecoverKind::Input), vec![7.0]);
        assert_eq!(recover(&[0], 5, &profile, RecoverKind::Input), vec![0.0]);
    }

    #[test]
    fn roundtrip_quantize_recover_bound() {
        let profile = ScalingProfile::uniform(100.0, 1 << 40).unwrap();
        let k = 2u64;
        let scale = profile.s(1).powi(k as i32 + 1) * profile.s(4) * profile.s(5);
        for i in -50..50 {
            let x = i as f64 * 0.137;
            let v = quantize(x, scale).unwrap();
            let rec = recover(&[v], k, &profile, RecoverKind::Input);
            assert!((rec[0] - x).abs() <= 1.0 / (2.0 * scale) + 1e-12);
        }
    }

    #[test]
    fn horizon_unbounded_for_nilpotent_s1_one() {
        // s1 = 1 with nilpotent integer dynamics: accumulation is affectless.
        let s = 4.0;
        let profile = ScalingProfile::new([s * s, 1.0, s, s, s * s, s, s, s], 1 << 40).unwrap();
        let sys = StateSpace::new(
            Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.5]]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let ctrl = to_integer_controller(&sys, &profile).unwrap();
        assert_eq!(overflow_horizon(&ctrl, 10.0), Horizon::Unbounded);
    }

    #[test]
    fn horizon_small_finite_and_monotone_in_q() {
        let sys = scalar_ctrl(0.9, 1.0, 1.0, 0.2, 0.0);
        let mut horizons = Vec::new();
        for log_q in [10u32, 20, 30, 40] {
            let profile = ScalingProfile::uniform(10.0, 1 << log_q).unwrap();
            let ctrl = to_integer_controller(&sys, &profile).unwrap();
            match overflow_horizon(&ctrl, 5.0) {
                Horizon::Steps(t) => horizons.push(t),
                Horizon::Unbounded => panic!("s1 = 10 cannot be unbounded"),
            }
        }
        assert!(horizons[0] >= 1, "q=2^10 should allow at least constructing");
        for w in horizons.windows(2) {
            assert!(w[0] <= w[1], "horizon must not decrease with q: {horizons:?}");
        }
    }

    #[test]
    fn horizon_is_conservative_randomized() {
        let mut rng = crate::test_support::rng(29);
        let sys = scalar_ctrl(0.8, 1.0, 1.0, 0.3, 0.5);
        let profile = ScalingProfile::uniform(16.0, 1 << 24).unwrap();
        let ctrl0 = to_integer_controller(&sys, &profile).unwrap();
        let y_max = 3.0;
        let t = match overflow_horizon(&ctrl0, y_max) {
            Horizon::Steps(t) => t,
            Horizon::Unbounded => panic!("expected finite"),
        };
        assert!(t >= 1);
        for _ in 0..200 {
            let mut ctrl = ctrl0.clone();
            for _ in 0..t {
                let y = if crate::test_support::next_u64(&mut rng) % 2 == 0 {
                    y_max
                } else {
                    -y_max
                };
                let step = ctrl.step(&[y]).unwrap();
                assert!(!step.overflowed, "overflow before predicted horizon {t}");
            }
        }
    }
}

/// Row-major integer matrix as nested i64 rows, for wire payloads.
pub type WireMatrix = Vec<Vec<i64>>;

impl IntegerController {
    /// Matrices as nested i64 rows for session setup on the wire (entries
    /// fit i64 because the fast-path modulus is capped at 2^63).
    pub fn wire_matrices(&self) -> (WireMatrix, WireMatrix, WireMatrix, WireMatrix) {
        let conv = |mat: &IMatrix| -> WireMatrix {
            (0..mat.rows())
                .map(|i| (0..mat.cols()).map(|j| mat[(i, j)] as i64).collect())
                .collect()
        };
        (conv(&self.a_bar), conv(&self.b_bar), conv(&self.c_bar), conv(&self.d_bar))
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn zq_ring_laws_match_big_integer_oracle(
            a in any::<i64>(),
            b in any::<i64>(),
            c in any::<i64>(),
            q_log in 2u32..60,
        ) {
            let q = 1u128 << q_log;
            let (wa, wb, wc) = (
                ZqValue::wrap_i128(a as i128, q).unwrap(),
                ZqValue::wrap_i128(b as i128, q).unwrap(),
                ZqValue::wrap_i128(c as i128, q).unwrap(),
            );
            // commutativity and associativity, exactly
            prop_assert_eq!(wa.add(&wb), wb.add(&wa));
            prop_assert_eq!(wa.mul(&wb), wb.mul(&wa));
            prop_assert_eq!(wa.add(&wb).add(&wc), wa.add(&wb.add(&wc)));
            prop_assert_eq!(wa.mul(&wb).mul(&wc), wa.mul(&wb.mul(&wc)));
            // against the big-integer oracle
            let big = BigInt::from(a) * BigInt::from(b) + BigInt::from(c);
            prop_assert_eq!(wa.mul(&wb).add(&wc), zq_wrap(&big, q).unwrap());
        }

        #[test]
        fn quantize_bound_holds(x in -1e6f64..1e6, s in 1.0f64..1e6) {
            let z = quantize(x, s).unwrap();
            prop_assert!((x - z as f64 / s).abs() <= 1.0 / (2.0 * s) + 1e-9 / s);
        }

        #[test]
        fn wrap_is_idempotent_and_in_range(x in any::<i64>(), q_log in 1u32..63) {
            let q = 1u128 << q_log;
            let w = ZqValue::wrap_i128(x as i128, q).unwrap();
            prop_assert!(w.rep() >= -((q / 2) as i128));
            prop_assert!(w.rep() < q.div_ceil(2) as i128);
            prop_assert_eq!(ZqValue::wrap_i128(w.rep(), q).unwrap(), w);
        }
    }
}
