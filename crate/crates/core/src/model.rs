//! Value types shared by every stage of the repair pipeline.
//!
//! All types are immutable once constructed; operations return new values.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative factor in the full-column-rank test for constraint matrices.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Feasibility tolerance, scaled by `1 + ‖Â‖_F ‖C‖_F`.
pub const DEFAULT_FEAS_TOL: f64 = 1e-10;
/// Absolute threshold for counting an eigenvalue as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Dense real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                row: idx / cols.max(1),
                col: idx % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. All rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), ncols, data)
    }

    /// An n×1 column matrix.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    /// A 1×n row matrix.
    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Self::new(1, values.len(), values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            data: out,
        })
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn transpose_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply ({}x{})^T by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = vec![0.0; self.cols * rhs.cols];
        for k in 0..self.rows {
            let rhs_row = rhs.row(k);
            for i in 0..self.cols {
                let a = self.get(k, i);
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out[i * rhs.cols..(i + 1) * rhs.cols]
                    .iter_mut()
                    .zip(rhs_row)
                {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.cols,
            cols: rhs.cols,
            data: out,
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for a {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    fn zip_with(&self, rhs: &Self, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch(format!(
                "cannot {op} {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "subtract", |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Frobenius inner product `trace(rhsᵀ self)`.
    pub fn frobenius_dot(&self, rhs: &Self) -> Result<f64> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch(format!(
                "inner product of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(dot(&self.data, &rhs.data))
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Row sums `A·1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    /// Column sums `1ᵀA`.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, v) in sums.iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        sums
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec())
    }

    /// Singular values in descending order. Empty matrices have none.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(Vec::new());
        }
        let svd = nalgebra::linalg::SVD::try_new(self.to_nalgebra(), false, false, f64::EPSILON, 0)
            .ok_or(Error::SvdFailure)?;
        let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(values)
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A full-column-rank `n×m` matrix whose columns encode `m` linear invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    matrix: DenseMatrix,
}

impl ConstraintSet {
    /// Validates with the default rank tolerance.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        Self::validate(matrix, DEFAULT_RANK_TOL)
    }

    /// Accepts `matrix` when `σ_min > rank_tol · σ_max · max(n, m)`.
    pub fn validate(matrix: DenseMatrix, rank_tol: f64) -> Result<Self> {
        let (n, m) = matrix.shape();
        if m == 0 || n < m {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix must satisfy rows >= cols >= 1, got {n}x{m}"
            )));
        }
        let sv = matrix.singular_values()?;
        let sigma_max = sv[0];
        let sigma_min = sv[m - 1];
        let threshold = rank_tol * sigma_max * n.max(m) as f64;
        if sigma_min.is_nan() || sigma_min <= threshold || sigma_max == 0.0 {
            return Err(Error::RankDeficient {
                sigma_min,
                threshold,
            });
        }
        Ok(Self { matrix })
    }

    /// Single invariant `cᵀx`.
    pub fn single(c: &[f64]) -> Result<Self> {
        if c.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroVector);
        }
        Self::new(DenseMatrix::column(c)?)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Number of invariants `m`.
    pub fn count(&self) -> usize {
        self.matrix.cols()
    }

    /// `Cᵀx` for a state vector.
    pub fn invariants_of(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.transpose().matvec(x)
    }
}

/// Outcome of a projection: the repaired operator and its diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct RepairResult {
    /// The learned operator `Â` as supplied.
    pub original: DenseMatrix,
    /// `A* = Â + Δ`.
    pub corrected: DenseMatrix,
    /// `Δ = A* − Â`, computed first. `corrected` is derived from it.
    pub correction: DenseMatrix,
    /// `CᵀÂ`.
    pub violation_before: DenseMatrix,
    /// `CᵀA*` (minus the affine target when one was given).
    pub violation_after: DenseMatrix,
    pub correction_fro_norm: f64,
    pub correction_rank: usize,
}

/// Time grid with states and the conserved quantities `Cᵀx(t_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub invariant_values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn invariant_count(&self) -> usize {
        self.invariant_values.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeMode {
    Continuous,
    Discrete,
}

/// Parameters of the Markov-generator demonstration run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub noise_variance: f64,
    pub x0: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub seed: u64,
    pub mode: TimeMode,
}

impl ExperimentConfig {
    /// Default configuration for state dimension `n`.
    pub fn with_dim(n: usize) -> Self {
        Self {
            n,
            noise_variance: 5e-2,
            x0: default_x0(n),
            t_final: 10.0,
            dt: 0.01,
            seed: 42,
            mode: TimeMode::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if !self.noise_variance.is_finite() || self.noise_variance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.dt < self.t_final)
            || !self.t_final.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt < t_final, got dt = {}, t_final = {}",
                self.dt, self.t_final
            )));
        }
        if self.x0.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "x0 has length {}, expected {}",
                self.x0.len(),
                self.n
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be finite".into()));
        }
        Ok(())
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::with_dim(3)
    }
}

/// `(0.7, 0.2, 0.1)` for three states, uniform `1/n` otherwise.
pub fn default_x0(n: usize) -> Vec<f64> {
    if n == 3 {
        vec![0.7, 0.2, 0.1]
    } else {
        vec![1.0 / n as f64; n]
    }
}
