//! Brute-force reference solvers for checking the closed-form projection.
//!
//! Nothing here calls into [`crate::projection`]. The column problems
//! `min ‖m_j − â_j‖ s.t. Cᵀm_j = b_j` are solved through their Lagrange
//! stationarity system with Gaussian elimination, and the projector is
//! rebuilt from an explicit orthonormal basis of `ker(Cᵀ)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{dot, ConstraintSet, DenseMatrix};

/// Upper bound on the state dimension the oracles accept.
pub const MAX_ORACLE_DIM: usize = 32;

/// Stationarity system `[[I, C], [Cᵀ, 0]] (m, λ) = (â, b)`.
#[derive(Clone, Debug)]
pub struct KktSystem {
    dimension: usize,
    lhs: DenseMatrix,
}

impl KktSystem {
    pub fn new(constraints: &ConstraintSet) -> Self {
        let c = constraints.matrix();
        let (n, m) = c.shape();
        let lhs = DenseMatrix::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
            (true, true) => f64::from(u8::from(i == j)),
            (true, false) => c.get(i, j - n),
            (false, true) => c.get(j, i - n),
            (false, false) => 0.0,
        });
        Self {
            dimension: n + m,
            lhs,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn lhs(&self) -> &DenseMatrix {
        &self.lhs
    }

    /// Gaussian elimination with partial pivoting on a copy of the system.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.dimension;
        debug_assert_eq!(rhs.len(), n);
        let mut a = self.lhs.as_slice().to_vec();
        let mut b = rhs.to_vec();
        let scale = self.lhs.max_abs().max(1.0);
        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("nonempty range");
            if pivot_abs <= 1e-13 * scale {
                return None;
            }
            if pivot_row != k {
                for j in 0..n {
                    a.swap(k * n + j, pivot_row * n + j);
                }
                b.swap(k, pivot_row);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let factor = a[i * n + k] / pivot;
                if factor == 0.0 {
                    continue;
                }
                for j in k..n {
                    a[i * n + j] -= factor * a[k * n + j];
                }
                b[i] -= factor * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| a[i * n + j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i * n + i];
        }
        Some(x)
    }
}

fn check_dims(a_hat: &DenseMatrix, constraints: &ConstraintSet) -> Result<()> {
    let n = constraints.state_dim();
    if a_hat.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but constraints act on dimension {n}",
            a_hat.rows(),
            a_hat.cols()
        )));
    }
    if n > MAX_ORACLE_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle dimension {n} exceeds {MAX_ORACLE_DIM}"
        )));
    }
    Ok(())
}

/// Solves each column problem through its KKT system. `rhs`, when given, is
/// the m×n matrix whose columns are the targets `b_j` (zero otherwise).
pub fn kkt_project_columns(
    a_hat: &DenseMatrix,
    constraints: &ConstraintSet,
    rhs: Option<&DenseMatrix>,
) -> Result<DenseMatrix> {
    check_dims(a_hat, constraints)?;
    let (n, m) = constraints.matrix().shape();
    if let Some(b) = rhs {
        if b.shape() != (m, n) {
            return Err(Error::DimensionMismatch(format!(
                "KKT right-hand side must be {m}x{n}, got {}x{}",
                b.rows(),
                b.cols()
            )));
        }
    }
    let system = KktSystem::new(constraints);
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let mut col_rhs = a_hat.column_vec(j);
        col_rhs.extend((0..m).map(|i| rhs.map_or(0.0, |b| b.get(i, j))));
        let sol = system
            .solve(&col_rhs)
            .ok_or(Error::SingularKkt { column: j })?;
        for i in 0..n {
            out[i * n + j] = sol[i];
        }
    }
    DenseMatrix::new(n, n, out)
}

fn subtract_projection(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let coef = dot(q, v);
        for (vi, qi) in v.iter_mut().zip(q) {
            *vi -= coef * qi;
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Orthonormal basis of `ker(Cᵀ)` as a list of n-vectors.
///
/// The columns of `C` are orthonormalized first (modified Gram–Schmidt, two
/// passes), then standard basis vectors are orthogonalized against everything
/// found so far, always taking the one with the largest remaining component.
pub fn nullspace_basis(constraints: &ConstraintSet) -> Result<Vec<Vec<f64>>> {
    let c = constraints.matrix();
    let (n, m) = c.shape();
    if n > MAX_ORACLE_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle dimension {n} exceeds {MAX_ORACLE_DIM}"
        )));
    }
    let mut range: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut v = c.column_vec(j);
        subtract_projection(&mut v, &range);
        subtract_projection(&mut v, &range);
        if normalize(&mut v) == 0.0 {
            return Err(Error::RankDeficient {
                sigma_min: 0.0,
                threshold: 0.0,
            });
        }
        range.push(v);
    }
    let mut kernel: Vec<Vec<f64>> = Vec::with_capacity(n - m);
    let mut used = vec![false; n];
    while kernel.len() < n - m {
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (i, _) in used.iter().enumerate().filter(|(_, u)| !**u) {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            for _ in 0..2 {
                subtract_projection(&mut e, &range);
                subtract_projection(&mut e, &kernel);
            }
            let norm = dot(&e, &e).sqrt();
            if best.as_ref().is_none_or(|b| norm > b.2) {
                best = Some((i, e, norm));
            }
        }
        let (i, mut v, _) = best.expect("kernel dimension bounded by unused basis vectors");
        used[i] = true;
        normalize(&mut v);
        subtract_projection(&mut v, &range);
        subtract_projection(&mut v, &kernel);
        normalize(&mut v);
        kernel.push(v);
    }
    Ok(kernel)
}

/// `Q Qᵀ` for an orthonormal basis `Q` of `ker(Cᵀ)`.
pub fn nullspace_projector(constraints: &ConstraintSet) -> Result<DenseMatrix> {
    let n = constraints.state_dim();
    let basis = nullspace_basis(constraints)?;
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        basis.iter().map(|q| q[i] * q[j]).sum()
    }))
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random `M` with `CᵀM = 0`, from a seeded standard-normal `R` projected by
/// the null-space oracle.
pub fn feasible_sampler(constraints: &ConstraintSet, seed: u64) -> Result<DenseMatrix> {
    let n = constraints.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = gaussian_matrix(&mut rng, n, n);
    nullspace_projector(constraints)?.matmul(&r)
}

/// A seeded test problem `(Â, C)`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub seed: u64,
    pub a_hat: DenseMatrix,
    pub constraints: ConstraintSet,
}

/// `n ∈ 2..=8`, `m ∈ 1..=min(3, n)`, standard normal entries. `C` is
/// resampled until `σ_min/σ_max > 1e-3`.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8usize);
    let m = rng.random_range(1..=3usize.min(n));
    random_instance_with_dims(&mut rng, seed, n, m)
}

pub fn random_instance_with_dims(rng: &mut impl Rng, seed: u64, n: usize, m: usize) -> Instance {
    let a_hat = gaussian_matrix(rng, n, n);
    let constraints = loop {
        let c = gaussian_matrix(rng, n, m);
        let sv = c.singular_values().expect("small dense SVD");
        if sv[m - 1] > 1e-3 * sv[0] {
            break ConstraintSet::new(c).expect("well-conditioned sample");
        }
    };
    Instance {
        seed,
        a_hat,
        constraints,
    }
}
