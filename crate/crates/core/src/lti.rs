//! Dense discrete-time LTI systems: simulation, stability tests, Markov
//! parameters, the explicit output formula, and an H-infinity norm
//! measurement on a frequency grid.
//!
//! Everything here is plain `f64` linear algebra on small dense matrices
//! (the intended scale is a handful of states, not thousands). Matrices are
//! stored row-major so they serialize naturally as arrays of row arrays.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix entries must be integers: entry ({row},{col}) = {value}")]
    NonIntegerEntry { row: usize, col: usize, value: f64 },
    #[error("system must be Schur stable (spectral radius {0})")]
    Unstable(f64),
    #[error("frequency grid needs at least 64 points, got {0}")]
    GridTooCoarse(usize),
    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("feedthrough loop is ill-posed (I - Dp*Dc singular)")]
    IllPosedLoop,
}

/// Dense row-major matrix of `f64` entries. Rows and columns are at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LtiError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LtiError::DimensionMismatch(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LtiError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LtiError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_row_vecs(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LtiError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LtiError::DimensionMismatch(format!(
                "add {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LtiError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LtiError> {
        if self.cols != other.rows {
            return Err(LtiError::DimensionMismatch(format!(
                "mul {}x{} with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LtiError> {
        if v.len() != self.cols {
            return Err(LtiError::DimensionMismatch(format!(
                "matvec {}x{} with vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, x)| a * x).sum())
            .collect())
    }

    /// Matrix power by repeated squaring. Requires a square matrix.
    pub fn pow(&self, mut e: u32) -> Result<Matrix, LtiError> {
        if !self.is_square() {
            return Err(LtiError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let mut base = self.clone();
        let mut acc = Matrix::identity(self.rows);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.matmul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.matmul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Induced infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        Matrix { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Discrete-time state-space system
/// `x(k+1) = A x(k) + B y(k)`, `u(k) = C x(k) + D y(k)` with `x(0) = x0`.
///
/// The same type houses plants and controllers; `l` inputs, `m` outputs,
/// `n` states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub x0: Vec<f64>,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, x0: Vec<f64>) -> Result<Self, LtiError> {
        if !a.is_square() {
            return Err(LtiError::NotSquare { rows: a.rows(), cols: a.cols() });
        }
        let n = a.rows();
        if b.rows() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "B has {} rows, A is {}x{}",
                b.rows(),
                n,
                n
            )));
        }
        if c.cols() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "C has {} cols, A is {}x{}",
                c.cols(),
                n,
                n
            )));
        }
        if d.rows() != c.rows() || d.cols() != b.cols() {
            return Err(LtiError::DimensionMismatch(format!(
                "D is {}x{}, expected {}x{}",
                d.rows(),
                d.cols(),
                c.rows(),
                b.cols()
            )));
        }
        if x0.len() != n {
            return Err(LtiError::DimensionMismatch(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                n
            )));
        }
        Ok(Self { a, b, c, d, x0 })
    }

    /// Number of states.
    pub fn order(&self) -> usize {
        self.a.rows()
    }

    /// Number of inputs (width of y).
    pub fn inputs(&self) -> usize {
        self.b.cols()
    }

    /// Number of outputs (width of u).
    pub fn outputs(&self) -> usize {
        self.c.rows()
    }

    pub fn zero(n: usize, l: usize, m: usize) -> Self {
        Self {
            a: Matrix::zeros(n, n),
            b: Matrix::zeros(n, l),
            c: Matrix::zeros(m, n),
            d: Matrix::zeros(m, l),
            x0: vec![0.0; n],
        }
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self, LtiError> {
        if x0.len() != self.order() {
            return Err(LtiError::DimensionMismatch(format!(
                "x0 has length {}, expected {}",
                x0.len(),
                self.order()
            )));
        }
        self.x0 = x0;
        Ok(self)
    }
}

/// Fixed-width signal samples with a sampling period. The width is uniform
/// across samples; `dt` is carried for file output and is not used by the
/// discrete-index simulation itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    dt: f64,
    width: usize,
    samples: Vec<Vec<f64>>,
}

impl SignalTrace {
    pub fn new(dt: f64, width: usize) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { dt, width, samples: Vec::new() }
    }

    pub fn from_samples(dt: f64, samples: Vec<Vec<f64>>) -> Result<Self, LtiError> {
        assert!(dt > 0.0, "dt must be positive");
        let width = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != width) {
            return Err(LtiError::DimensionMismatch("ragged samples".into()));
        }
        Ok(Self { dt, width, samples })
    }

    /// All-zero trace of the given shape.
    pub fn zeros(dt: f64, width: usize, len: usize) -> Self {
        Self { dt, width, samples: vec![vec![0.0; width]; len] }
    }

    pub fn push(&mut self, sample: Vec<f64>) {
        assert_eq!(sample.len(), self.width, "sample width mismatch");
        self.samples.push(sample);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k]
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

/// Step the recursion `x(k+1) = A x(k) + B y(k)`, `u(k) = C x(k) + D y(k)`
/// for `steps` steps. Returns the visited states `x(0..steps)` and outputs
/// `u(0..steps)` as traces of length `steps`.
pub fn simulate(
    sys: &StateSpace,
    inputs: &SignalTrace,
    steps: usize,
) -> Result<(SignalTrace, SignalTrace), LtiError> {
    if inputs.width() != sys.inputs() {
        return Err(LtiError::DimensionMismatch(format!(
            "input width {} but system has {} inputs",
            inputs.width(),
            sys.inputs()
        )));
    }
    if steps > inputs.len() {
        return Err(LtiError::IndexOutOfRange { index: steps, len: inputs.len() });
    }
    let mut x = sys.x0.clone();
    let mut states = SignalTrace::new(inputs.dt(), sys.order());
    let mut outputs = SignalTrace::new(inputs.dt(), sys.outputs());
    for k in 0..steps {
        let y = inputs.sample(k);
        let mut u = sys.c.matvec(&x)?;
        for (ui, di) in u.iter_mut().zip(sys.d.matvec(y)?) {
            *ui += di;
        }
        states.push(x.clone());
        outputs.push(u);
        let mut xn = sys.a.matvec(&x)?;
        for (xi, bi) in xn.iter_mut().zip(sys.b.matvec(y)?) {
            *xi += bi;
        }
        x = xn;
    }
    Ok((states, outputs))
}

/// The closed-form output
/// `u(k) = C A^k x0 + sum_{j=0}^{k-1} C A^j B y(k-1-j) + D y(k)`.
///
/// Independent of `simulate` (no shared recursion), which makes the two
/// usable as oracles for each other.
pub fn explicit_output(sys: &StateSpace, inputs: &SignalTrace, k: usize) -> Result<Vec<f64>, LtiError> {
    if k >= inputs.len() {
        return Err(LtiError::IndexOutOfRange { index: k, len: inputs.len() });
    }
    if inputs.width() != sys.inputs() {
        return Err(LtiError::DimensionMismatch(format!(
            "input width {} but system has {} inputs",
            inputs.width(),
            sys.inputs()
        )));
    }
    // C A^k x0, then sum_j C A^j B y(k-1-j) with C A^j accumulated on the fly
    let mut acc = sys.c.matmul(&sys.a.pow(k as u32)?)?.matvec(&sys.x0)?;
    let mut caj = sys.c.clone();
    for j in 0..k {
        let term = caj.matmul(&sys.b)?.matvec(inputs.sample(k - 1 - j))?;
        for (a, t) in acc.iter_mut().zip(term) {
            *a += t;
        }
        caj = caj.matmul(&sys.a)?;
    }
    let dy = sys.d.matvec(inputs.sample(k))?;
    for (a, t) in acc.iter_mut().zip(dy) {
        *a += t;
    }
    Ok(acc)
}

/// Largest eigenvalue magnitude of a square matrix.
pub fn spectral_radius(a: &Matrix) -> Result<f64, LtiError> {
    if !a.is_square() {
        return Err(LtiError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let eigs = a.to_dmatrix().complex_eigenvalues();
    Ok(eigs.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Schur stability with a strict margin: stable iff the spectral radius is
/// below `1 - 1e-9`, so marginal systems are not misclassified by rounding.
pub fn is_schur(a: &Matrix) -> Result<bool, LtiError> {
    Ok(spectral_radius(a)? < 1.0 - 1e-9)
}

/// Outcome of the exact integer stability test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegerStability {
    /// `a^n = 0` exactly: every eigenvalue is zero, the matrix is Schur stable.
    StableNilpotent,
    /// Some eigenvalue is a nonzero integer-matrix eigenvalue, hence |·| >= 1.
    Unstable,
}

/// Exact stability test for integer matrices: an integer matrix is Schur
/// stable iff it is nilpotent (`a^n = 0`), because any nonzero eigenvalue of
/// an integer matrix has modulus at least one. Computed in exact big-integer
/// arithmetic so no rounding can flip the verdict.
pub fn integer_schur_check(a: &Matrix) -> Result<IntegerStability, LtiError> {
    if !a.is_square() {
        return Err(LtiError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() || v.fract() != 0.0 {
                return Err(LtiError::NonIntegerEntry { row: i, col: j, value: v });
            }
            entries.push(BigInt::from(v as i64));
        }
    }
    // Square up to a^n by repeated squaring; nilpotency index never exceeds n.
    let mul = |p: &[BigInt], q: &[BigInt]| -> Vec<BigInt> {
        let mut out = vec![BigInt::from(0); n * n];
        for i in 0..n {
            for k in 0..n {
                let pik = &p[i * n + k];
                if pik.sign() == num_bigint::Sign::NoSign {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += pik * &q[k * n + j];
                }
            }
        }
        out
    };
    let mut power = entries;
    let mut exp = 1usize;
    while exp < n {
        power = mul(&power, &power);
        exp *= 2;
    }
    let nilpotent = power.iter().all(|v| v.sign() == num_bigint::Sign::NoSign);
    Ok(if nilpotent { IntegerStability::StableNilpotent } else { IntegerStability::Unstable })
}

/// First `count + 1` Markov parameters `(D, CB, CAB, ..., C A^{count-1} B)`.
pub fn markov_parameters(sys: &StateSpace, count: usize) -> Result<Vec<Matrix>, LtiError> {
    let mut out = Vec::with_capacity(count + 1);
    out.push(sys.d.clone());
    let mut caj = sys.c.clone();
    for _ in 0..count {
        out.push(caj.matmul(&sys.b)?);
        caj = caj.matmul(&sys.a)?;
    }
    Ok(out)
}

/// Largest singular value of the transfer matrix `C (e^{i theta} I - A)^{-1} B + D`
/// at a single frequency, computed through the real 2n x 2n embedding so only
/// real linear algebra is involved.
fn frequency_gain(sys: &StateSpace, theta: f64) -> f64 {
    let n = sys.order();
    let (l, m) = (sys.inputs(), sys.outputs());
    let (re, im) = (theta.cos(), theta.sin());
    // [[re*I - A, -im*I], [im*I, re*I - A]] [Xr; Xi] = [B; 0]
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = -sys.a[(i, j)];
            big[(i, j)] = v;
            big[(n + i, n + j)] = v;
        }
        big[(i, i)] += re;
        big[(n + i, n + i)] += re;
        big[(i, n + i)] = -im;
        big[(n + i, i)] = im;
    }
    let mut rhs = DMatrix::<f64>::zeros(2 * n, l);
    for i in 0..n {
        for j in 0..l {
            rhs[(i, j)] = sys.b[(i, j)];
        }
    }
    let x = big.lu().solve(&rhs).expect("resolvent is nonsingular off the spectrum");
    let xr = x.rows(0, n).into_owned();
    let xi = x.rows(n, n).into_owned();
    let c = sys.c.to_dmatrix();
    let g_re = &c * xr + sys.d.to_dmatrix();
    let g_im = &c * xi;
    // Real embedding [[Gr, -Gi], [Gi, Gr]] has the singular values of G, doubled.
    let mut emb = DMatrix::<f64>::zeros(2 * m, 2 * l);
    for i in 0..m {
        for j in 0..l {
            emb[(i, j)] = g_re[(i, j)];
            emb[(m + i, l + j)] = g_re[(i, j)];
            emb[(i, l + j)] = -g_im[(i, j)];
            emb[(m + i, j)] = g_im[(i, j)];
        }
    }
    emb.singular_values().max()
}

/// H-infinity norm on a dense frequency grid over `[0, pi]` with one local
/// golden-section refinement around the grid maximizer. The result is a lower
/// bound that converges from below as the grid is refined; nested grids
/// (doubling `grid_points - 1`) make it monotone non-decreasing.
pub fn hinf_norm(sys: &StateSpace, grid_points: usize) -> Result<f64, LtiError> {
    if grid_points < 64 {
        return Err(LtiError::GridTooCoarse(grid_points));
    }
    let rho = spectral_radius(&sys.a)?;
    if rho >= 1.0 - 1e-9 {
        return Err(LtiError::Unstable(rho));
    }
    if sys.a.max_abs() == 0.0 && sys.b.max_abs() == 0.0 && sys.c.max_abs() == 0.0 {
        // Pure gain: the transfer matrix is D at every frequency.
        let d = sys.d.to_dmatrix();
        return Ok(d.singular_values().max());
    }
    let mut best = 0.0_f64;
    let mut best_idx = 0usize;
    for i in 0..grid_points {
        let theta = std::f64::consts::PI * i as f64 / (grid_points - 1) as f64;
        let g = frequency_gain(sys, theta);
        if g > best {
            best = g;
            best_idx = i;
        }
    }
    // Golden-section refinement on the bracket around the grid maximizer.
    let step = std::f64::consts::PI / (grid_points - 1) as f64;
    let lo = (best_idx as f64 - 1.0).max(0.0) * step;
    let hi = ((best_idx + 1) as f64 * step).min(std::f64::consts::PI);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (frequency_gain(sys, c), frequency_gain(sys, d));
    for _ in 0..48 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = frequency_gain(sys, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = frequency_gain(sys, d);
        }
    }
    Ok(best.max(fc).max(fd))
}

/// JSON model file with fixed keys "a", "b", "c", "d", "x0", "dt";
/// matrices are arrays of row arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpaceFile {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub dt: f64,
}

impl StateSpaceFile {
    pub fn from_system(sys: &StateSpace, dt: f64) -> Self {
        Self {
            a: sys.a.to_row_vecs(),
            b: sys.b.to_row_vecs(),
            c: sys.c.to_row_vecs(),
            d: sys.d.to_row_vecs(),
            x0: sys.x0.clone(),
            dt,
        }
    }

    pub fn into_system(self) -> Result<(StateSpace, f64), LtiError> {
        let sys = StateSpace::new(
            Matrix::from_rows(&self.a)?,
            Matrix::from_rows(&self.b)?,
            Matrix::from_rows(&self.c)?,
            Matrix::from_rows(&self.d)?,
            self.x0,
        )?;
        Ok((sys, self.dt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scalar_sys(a: f64, b: f64, c: f64, d: f64, x0: f64) -> StateSpace {
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
    fn zero_system_outputs_zero() {
        let sys = StateSpace::zero(3, 2, 2);
        let inputs = SignalTrace::from_samples(0.1, vec![vec![1.0, -2.0]; 10]).unwrap();
        let (_, outputs) = simulate(&sys, &inputs, 10).unwrap();
        assert!(outputs.samples().iter().all(|u| u.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn explicit_output_empty_sum_at_k0() {
        let sys = scalar_sys(0.3, 1.0, 2.0, 5.0, 7.0);
        let inputs = SignalTrace::from_samples(0.1, vec![vec![3.0]]).unwrap();
        let u0 = explicit_output(&sys, &inputs, 0).unwrap();
        // C x0 + D y(0) = 2*7 + 5*3
        assert!((u0[0] - 29.0).abs() < 1e-12);
    }

    #[test]
    fn explicit_output_hand_value() {
        // A=0.5, B=C=1, D=0, x0=0, y = 1: u(2) = y(1) + 0.5 y(0) = 1.5
        let sys = scalar_sys(0.5, 1.0, 1.0, 0.0, 0.0);
        let inputs = SignalTrace::from_samples(0.1, vec![vec![1.0]; 3]).unwrap();
        let u2 = explicit_output(&sys, &inputs, 2).unwrap();
        assert!((u2[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn simulate_matches_explicit_output_random_stable() {
        let mut rng = crate::test_support::rng(42);
        for _ in 0..100 {
            let sys = crate::test_support::random_stable_system(&mut rng, 3, 2, 2);
            let inputs = crate::test_support::random_trace(&mut rng, 2, 100);
            let (_, outputs) = simulate(&sys, &inputs, 100).unwrap();
            for k in (0..100).step_by(7) {
                let ue = explicit_output(&sys, &inputs, k).unwrap();
                for (a, b) in outputs.sample(k).iter().zip(&ue) {
                    assert!((a - b).abs() < 1e-9, "k={k}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn spectral_radius_zero_and_triangular() {
        let z = Matrix::zeros(3, 3);
        assert_eq!(spectral_radius(&z).unwrap(), 0.0);
        assert!(is_schur(&z).unwrap());
        let t = Matrix::from_rows(&[vec![0.3, 17.0], vec![0.0, 0.9]]).unwrap();
        assert!((spectral_radius(&t).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(spectral_radius(&m), Err(LtiError::NotSquare { .. })));
    }

    #[test]
    fn integer_schur_shift_and_identity() {
        let shift = Matrix::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(integer_schur_check(&shift).unwrap(), IntegerStability::StableNilpotent);
        let id = Matrix::identity(3);
        assert_eq!(integer_schur_check(&id).unwrap(), IntegerStability::Unstable);
    }

    #[test]
    fn integer_schur_rejects_non_integer() {
        let m = Matrix::from_rows(&[vec![0.5]]).unwrap();
        assert!(matches!(integer_schur_check(&m), Err(LtiError::NonIntegerEntry { .. })));
    }

    #[test]
    fn integer_schur_agrees_with_eigenvalues() {
        let mut rng = crate::test_support::rng(7);
        for _ in 0..200 {
            let n = 1 + (crate::test_support::next_u64(&mut rng) % 4) as usize;
            let mut data = Vec::with_capacity(n * n);
            for _ in 0..n * n {
                data.push(((crate::test_support::next_u64(&mut rng) % 5) as f64) - 2.0);
            }
            let m = Matrix::new(n, n, data).unwrap();
            let verdict = integer_schur_check(&m).unwrap();
            let rho = spectral_radius(&m).unwrap();
            match verdict {
                IntegerStability::StableNilpotent => assert!(rho < 0.5, "rho={rho}"),
                IntegerStability::Unstable => assert!(rho > 0.5, "rho={rho}"),
            }
        }
    }

    #[test]
    fn markov_parameters_basics() {
        let sys = scalar_sys(0.5, 1.0, 1.0, 2.0, 0.0);
        let params = markov_parameters(&sys, 2).unwrap();
        assert_eq!(params.len(), 3);
        assert!((params[0][(0, 0)] - 2.0).abs() < 1e-15);
        assert!((params[1][(0, 0)] - 1.0).abs() < 1e-15);
        assert!((params[2][(0, 0)] - 0.5).abs() < 1e-15);
        let only_d = markov_parameters(&sys, 0).unwrap();
        assert_eq!(only_d.len(), 1);
    }

    #[test]
    fn markov_equals_impulse_response() {
        let mut rng = crate::test_support::rng(11);
        let sys = crate::test_support::random_stable_system(&mut rng, 4, 2, 3).with_x0(vec![0.0; 4]).unwrap();
        let count = 8;
        let params = markov_parameters(&sys, count).unwrap();
        for input_idx in 0..2 {
            let mut samples = vec![vec![0.0; 2]; count + 1];
            samples[0][input_idx] = 1.0;
            let impulse = SignalTrace::from_samples(0.1, samples).unwrap();
            let (_, outputs) = simulate(&sys, &impulse, count + 1).unwrap();
            for j in 0..=count {
                for out_idx in 0..3 {
                    let expect = params[j][(out_idx, input_idx)];
                    let got = outputs.sample(j)[out_idx];
                    assert!((expect - got).abs() < 1e-12, "j={j}: {expect} vs {got}");
                }
            }
        }
    }

    #[test]
    fn hinf_norm_examples() {
        let zero = StateSpace::zero(2, 2, 2);
        assert!(hinf_norm(&zero, 64).unwrap() < 1e-12);

        let mut gain = StateSpace::zero(1, 2, 2);
        gain.d = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((hinf_norm(&gain, 64).unwrap() - 3.0).abs() < 1e-9);

        let sys = scalar_sys(0.5, 1.0, 1.0, 0.0, 0.0);
        assert!((hinf_norm(&sys, 128).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn hinf_norm_rejects_unstable_and_coarse_grid() {
        let sys = scalar_sys(1.5, 1.0, 1.0, 0.0, 0.0);
        assert!(matches!(hinf_norm(&sys, 128), Err(LtiError::Unstable(_))));
        let stable = scalar_sys(0.5, 1.0, 1.0, 0.0, 0.0);
        assert!(matches!(hinf_norm(&stable, 63), Err(LtiError::GridTooCoarse(63))));
    }

    #[test]
    fn hinf_norm_monotone_on_nested_grids() {
        let mut rng = crate::test_support::rng(23);
        for _ in 0..10 {
            let sys = crate::test_support::random_stable_system(&mut rng, 4, 2, 2);
            let g65 = hinf_norm(&sys, 65).unwrap();
            let g129 = hinf_norm(&sys, 129).unwrap();
            let g257 = hinf_norm(&sys, 257).unwrap();
            assert!(g65 <= g129 + 1e-12);
            assert!(g129 <= g257 + 1e-12);
        }
    }

    #[test]
    fn model_file_roundtrip() {
        let mut rng = crate::test_support::rng(5);
        let sys = crate::test_support::random_stable_system(&mut rng, 3, 1, 2);
        let file = StateSpaceFile::from_system(&sys, 0.1);
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"a\":") && json.contains("\"x0\":") && json.contains("\"dt\":"));
        let parsed: StateSpaceFile = serde_json::from_str(&json).unwrap();
        let (back, dt) = parsed.into_system().unwrap();
        assert_eq!(back, sys);
        assert_eq!(dt, 0.1);
    }
}
