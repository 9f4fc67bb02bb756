//! Frobenius-nearest conservative operators.
//!
//! For a full-column-rank constraint matrix `C` (n×m) the feasible set
//! `{M : CᵀM = 0}` is a linear subspace of n×n matrices, and its Frobenius
//! projection acts column by column through
//!
//! ```text
//! P_C = I − C (CᵀC)⁻¹ Cᵀ,        A* = P_C Â = Â − C (CᵀC)⁻¹ CᵀÂ.
//! ```
//!
//! The correction `Δ = A* − Â` is determined entirely by the violation `CᵀÂ`
//! and has rank `rank(CᵀÂ) ≤ m`. With a single invariant `c` it is the
//! rank-one update `−c cᵀÂ / ‖c‖²`.
//!
//! Cost: the Gram matrix `CᵀC` is factored once (O(m³) after O(nm²) to
//! form it), after which each projection is O(mn²). Nothing of size n×n is
//! formed unless a [`Projector`] is requested explicitly.

use crate::diagnostics::{correction_rank, RankPolicy};
use crate::error::{Error, Result};
use crate::model::{dot, ConstraintSet, DenseMatrix, RepairResult};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    fn factor(a: &DenseMatrix) -> Result<Self> {
        let dim = a.rows();
        let mut lower = vec![0.0; dim * dim];
        for j in 0..dim {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= lower[j * dim + k] * lower[j * dim + k];
            }
            if !diag.is_finite() || diag <= 0.0 {
                return Err(Error::GramSolveFailure { pivot: j });
            }
            let ljj = diag.sqrt();
            lower[j * dim + j] = ljj;
            for i in (j + 1)..dim {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= lower[i * dim + k] * lower[j * dim + k];
                }
                lower[i * dim + j] = s / ljj;
            }
        }
        Ok(Self { dim, lower })
    }

    /// Solves `L Lᵀ x = b` in place.
    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        let l = &self.lower;
        for i in 0..n {
            let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }

    /// `(L Lᵀ)⁻¹ B` column by column.
    fn solve_matrix(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rhs.rows(), rhs.cols()).into_vec();
        let cols = rhs.cols();
        let mut buf = vec![0.0; self.dim];
        for j in 0..cols {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = rhs.get(i, j);
            }
            self.solve_in_place(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                out[i * cols + j] = *b;
            }
        }
        DenseMatrix::new(rhs.rows(), cols, out).expect("finite solve of a validated system")
    }

    fn inverse(&self) -> DenseMatrix {
        let inv = self.solve_matrix(&DenseMatrix::identity(self.dim));
        symmetrize(&inv)
    }
}

/// `(A + Aᵀ)/2`, exactly symmetric.
fn symmetrize(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| 0.5 * (a.get(i, j) + a.get(j, i)))
}

fn gram_factor(constraints: &ConstraintSet) -> Result<Cholesky> {
    let c = constraints.matrix();
    Cholesky::factor(&c.transpose_matmul(c)?)
}

fn check_operator(a_hat: &DenseMatrix, n: usize) -> Result<()> {
    if !a_hat.is_square() || a_hat.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but constraints act on dimension {n}",
            a_hat.rows(),
            a_hat.cols()
        )));
    }
    Ok(())
}

/// `Δ = −C Y` with `G Y = CᵀÂ − B`, refined once.
///
/// The Gram route solves with `κ(C)²` conditioning; a second solve against
/// the leftover violation `Cᵀ(Â − C Y) − B` recovers the lost digits. The
/// correction is returned whole so that `Â + Δ` is the only rounding between
/// the stored correction and the corrected operator.
fn refined_correction(
    solve: impl Fn(&DenseMatrix) -> Result<DenseMatrix>,
    c: &DenseMatrix,
    a_hat: &DenseMatrix,
    violation: &DenseMatrix,
    target: Option<&DenseMatrix>,
) -> Result<DenseMatrix> {
    let coeffs = solve(violation)?;
    let first = a_hat.sub(&c.matmul(&coeffs)?)?;
    let mut leftover = c.transpose_matmul(&first)?;
    if let Some(b) = target {
        leftover = leftover.sub(b)?;
    }
    let coeffs = coeffs.add(&solve(&leftover)?)?;
    Ok(c.matmul(&coeffs)?.scale(-1.0))
}

fn assemble(
    a_hat: &DenseMatrix,
    correction: DenseMatrix,
    constraint: &DenseMatrix,
    violation_before: DenseMatrix,
    target: Option<&DenseMatrix>,
) -> Result<RepairResult> {
    let corrected = a_hat.add(&correction)?;
    let mut violation_after = constraint.transpose_matmul(&corrected)?;
    if let Some(b) = target {
        violation_after = violation_after.sub(b)?;
    }
    let correction_fro_norm = correction.fro_norm();
    let correction_rank = correction_rank(&correction, RankPolicy::default())?;
    Ok(RepairResult {
        original: a_hat.clone(),
        corrected,
        correction,
        violation_before,
        violation_after,
        correction_fro_norm,
        correction_rank,
    })
}

/// Orthogonal projector onto `ker(Cᵀ)` with the cached Gram inverse.
#[derive(Clone, Debug)]
pub struct Projector {
    matrix: DenseMatrix,
    constraint: ConstraintSet,
    gram_inverse: DenseMatrix,
}

impl Projector {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    /// `(CᵀC)⁻¹`, m×m.
    pub fn gram_inverse(&self) -> &DenseMatrix {
        &self.gram_inverse
    }

    /// Repairs `a_hat` with the cached Gram inverse: `Â − C (G⁻¹ CᵀÂ)`.
    pub fn project(&self, a_hat: &DenseMatrix) -> Result<RepairResult> {
        let c = self.constraint.matrix();
        check_operator(a_hat, c.rows())?;
        let violation = c.transpose_matmul(a_hat)?;
        let correction =
            refined_correction(|v| self.gram_inverse.matmul(v), c, a_hat, &violation, None)?;
        assemble(a_hat, correction, c, violation, None)
    }
}

/// `P = I − c cᵀ / ‖c‖²`.
pub fn build_projector_single(c: &[f64]) -> Result<Projector> {
    let norm_sq = dot(c, c);
    if norm_sq == 0.0 {
        return Err(Error::ZeroVector);
    }
    let n = c.len();
    let matrix = DenseMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        // c_i c_j is symmetric in (i, j), so P is exactly symmetric.
        delta - c[i] * c[j] / norm_sq
    });
    Ok(Projector {
        matrix,
        constraint: ConstraintSet::single(c)?,
        gram_inverse: DenseMatrix::new(1, 1, vec![1.0 / norm_sq])?,
    })
}

/// `P_C = I − C (CᵀC)⁻¹ Cᵀ`, formed by projecting the identity and
/// symmetrizing.
pub fn build_projector(constraints: &ConstraintSet) -> Result<Projector> {
    let c = constraints.matrix();
    let n = c.rows();
    let gram = gram_factor(constraints)?;
    let identity = DenseMatrix::identity(n);
    let correction = refined_correction(
        |v| Ok(gram.solve_matrix(v)),
        c,
        &identity,
        &c.transpose(),
        None,
    )?;
    let matrix = symmetrize(&identity.add(&correction)?);
    Ok(Projector {
        matrix,
        constraint: constraints.clone(),
        gram_inverse: gram.inverse(),
    })
}

/// Rank-one repair `A* = Â − c cᵀÂ / ‖c‖²` for a single invariant.
pub fn project_single(a_hat: &DenseMatrix, c: &[f64]) -> Result<RepairResult> {
    let norm_sq = dot(c, c);
    if norm_sq == 0.0 {
        return Err(Error::ZeroVector);
    }
    let n = c.len();
    check_operator(a_hat, n)?;
    let c_col = DenseMatrix::column(c)?;
    let violation = c_col.transpose_matmul(a_hat)?;
    let correction = DenseMatrix::from_fn(n, n, |i, j| -c[i] * (violation.get(0, j) / norm_sq));
    assemble(a_hat, correction, &c_col, violation, None)
}

/// Rank-m repair `A* = Â − C (CᵀC)⁻¹ CᵀÂ`.
pub fn project_multi(a_hat: &DenseMatrix, constraints: &ConstraintSet) -> Result<RepairResult> {
    let c = constraints.matrix();
    check_operator(a_hat, c.rows())?;
    let gram = gram_factor(constraints)?;
    let violation = c.transpose_matmul(a_hat)?;
    let correction = refined_correction(|v| Ok(gram.solve_matrix(v)), c, a_hat, &violation, None)?;
    assemble(a_hat, correction, c, violation, None)
}

/// Nearest `M` with `CᵀM = B`: `A* = Â − C (CᵀC)⁻¹ (CᵀÂ − B)`.
///
/// `violation_before` and `violation_after` are measured against `B`.
pub fn project_affine(
    a_hat: &DenseMatrix,
    constraints: &ConstraintSet,
    target: &DenseMatrix,
) -> Result<RepairResult> {
    let c = constraints.matrix();
    check_operator(a_hat, c.rows())?;
    if target.shape() != (c.cols(), c.rows()) {
        return Err(Error::DimensionMismatch(format!(
            "affine target must be {}x{}, got {}x{}",
            c.cols(),
            c.rows(),
            target.rows(),
            target.cols()
        )));
    }
    let gram = gram_factor(constraints)?;
    let violation = c.transpose_matmul(a_hat)?.sub(target)?;
    let correction = refined_correction(
        |v| Ok(gram.solve_matrix(v)),
        c,
        a_hat,
        &violation,
        Some(target),
    )?;
    assemble(a_hat, correction, c, violation, Some(target))
}
