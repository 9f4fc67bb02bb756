//! Violation, rank and spectral measurements for repaired operators.

use nalgebra::linalg::Schur;

use crate::error::{Error, Result};
use crate::model::{ConstraintSet, DenseMatrix, DEFAULT_ZERO_TOL};

/// Numerical-rank threshold `relative · σ_max · max(rows, cols, min_dim)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankPolicy {
    pub relative: f64,
    pub min_dim: usize,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self {
            relative: 1e-10,
            min_dim: 4,
        }
    }
}

impl RankPolicy {
    pub fn threshold(&self, sigma_max: f64, dim: usize) -> f64 {
        self.relative * sigma_max * dim.max(self.min_dim) as f64
    }
}

/// Number of singular values above the policy threshold.
pub fn correction_rank(delta: &DenseMatrix, policy: RankPolicy) -> Result<usize> {
    let sv = delta.singular_values()?;
    let Some(&sigma_max) = sv.first() else {
        return Ok(0);
    };
    if sigma_max == 0.0 {
        return Ok(0);
    }
    let tol = policy.threshold(sigma_max, delta.rows().max(delta.cols()));
    Ok(sv.iter().filter(|s| **s > tol).count())
}

/// `CᵀA` together with its norms.
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationReport {
    pub violation_matrix: DenseMatrix,
    pub max_abs: f64,
    pub fro_norm: f64,
    /// Euclidean norm of each row of `CᵀA`, one per invariant.
    pub per_invariant_norms: Vec<f64>,
}

impl ViolationReport {
    pub fn from_matrix(violation_matrix: DenseMatrix) -> Self {
        let per_invariant_norms = (0..violation_matrix.rows())
            .map(|i| {
                violation_matrix
                    .row(i)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        Self {
            max_abs: violation_matrix.max_abs(),
            fro_norm: violation_matrix.fro_norm(),
            per_invariant_norms,
            violation_matrix,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs == 0.0
    }
}

pub fn violation(a: &DenseMatrix, constraints: &ConstraintSet) -> Result<ViolationReport> {
    let c = constraints.matrix();
    if !a.is_square() || a.rows() != c.rows() {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but constraints act on dimension {}",
            a.rows(),
            a.cols(),
            c.rows()
        )));
    }
    Ok(ViolationReport::from_matrix(c.transpose_matmul(a)?))
}

/// Scaled feasibility bound `feas_tol · (1 + ‖A‖_F ‖C‖_F)`.
pub fn feasibility_bound(feas_tol: f64, a: &DenseMatrix, constraints: &ConstraintSet) -> f64 {
    feas_tol * (1.0 + a.fro_norm() * constraints.matrix().fro_norm())
}

/// Eigenvalue as a `(re, im)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn distance(&self, other: &Eigenvalue) -> f64 {
        (self.re - other.re).hypot(self.im - other.im)
    }
}

/// Eigenvalues sorted by descending real part, then descending imaginary part.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Eigenvalue>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() == 0 {
        return Ok(Vec::new());
    }
    let scale = a.fro_norm();
    if scale == 0.0 {
        return Ok(vec![Eigenvalue { re: 0.0, im: 0.0 }; a.rows()]);
    }
    // The QR iteration deflates on a purely relative test, which never fires on
    // a tiny subdiagonal next to zero diagonals. A shift by ‖A‖_F restores it
    // at the cost of O(ε‖A‖) error, the same order as the backward error.
    let shifted = a.add(&DenseMatrix::identity(a.rows()).scale(scale))?;
    let (schur, shift) = match Schur::try_new(a.to_nalgebra(), f64::EPSILON, 10_000) {
        Some(s) => (s, 0.0),
        None => (
            Schur::try_new(shifted.to_nalgebra(), f64::EPSILON, 10_000)
                .ok_or(Error::EigenFailure)?,
            scale,
        ),
    };
    let mut values: Vec<Eigenvalue> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Eigenvalue {
            re: z.re - shift,
            im: z.im,
        })
        .collect();
    if values
        .iter()
        .any(|e| !e.re.is_finite() || !e.im.is_finite())
    {
        return Err(Error::EigenFailure);
    }
    values.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    Ok(values)
}

/// Spectra of `Â` and `A*` and how far the repair moved them.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues_before: Vec<Eigenvalue>,
    pub eigenvalues_after: Vec<Eigenvalue>,
    pub zero_eigenvalue_count_after: usize,
    /// Largest distance in a greedy nearest-pair matching of the two spectra.
    /// A heuristic summary, not a perturbation bound.
    pub max_pairing_shift: f64,
}

/// Greedy matching: repeatedly pair the closest unmatched eigenvalues.
fn greedy_pairing_shift(before: &[Eigenvalue], after: &[Eigenvalue]) -> f64 {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(before.len() * after.len());
    for (i, x) in before.iter().enumerate() {
        for (j, y) in after.iter().enumerate() {
            pairs.push((x.distance(y), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_before = vec![false; before.len()];
    let mut used_after = vec![false; after.len()];
    let mut shift: f64 = 0.0;
    for (d, i, j) in pairs {
        if used_before[i] || used_after[j] {
            continue;
        }
        used_before[i] = true;
        used_after[j] = true;
        shift = shift.max(d);
    }
    shift
}

pub fn spectrum_report(
    a_hat: &DenseMatrix,
    a_star: &DenseMatrix,
    zero_tol: f64,
) -> Result<SpectrumReport> {
    if a_hat.shape() != a_star.shape() {
        return Err(Error::DimensionMismatch(format!(
            "spectra of {}x{} and {}x{}",
            a_hat.rows(),
            a_hat.cols(),
            a_star.rows(),
            a_star.cols()
        )));
    }
    let eigenvalues_before = eigenvalues(a_hat)?;
    let eigenvalues_after = eigenvalues(a_star)?;
    let zero_eigenvalue_count_after = eigenvalues_after
        .iter()
        .filter(|e| e.modulus() <= zero_tol)
        .count();
    let max_pairing_shift = greedy_pairing_shift(&eigenvalues_before, &eigenvalues_after);
    Ok(SpectrumReport {
        eigenvalues_before,
        eigenvalues_after,
        zero_eigenvalue_count_after,
        max_pairing_shift,
    })
}

/// [`spectrum_report`] with the default zero tolerance.
pub fn default_spectrum_report(
    a_hat: &DenseMatrix,
    a_star: &DenseMatrix,
) -> Result<SpectrumReport> {
    spectrum_report(a_hat, a_star, DEFAULT_ZERO_TOL)
}
