//! Linear dynamics and conservation drift.
//!
//! Continuous time uses fixed-step classical RK4. One RK4 step maps `x` to a
//! polynomial in `dt·A` applied to `x`, so when `CᵀA = 0` every step keeps
//! `Cᵀx` fixed up to roundoff.
//!
//! In discrete time `x_{k+1} = A x_k`. A repaired operator with `CᵀA = 0`
//! sends `Cᵀx_k` to zero for every `k ≥ 1`, which means the invariant stays
//! constant only when `Cᵀx_0 = 0`. To conserve a nonzero quantity, repair the
//! step operator with [`crate::projection::project_affine`] and target
//! `B = Cᵀ`, so that `CᵀA = Cᵀ`.

use crate::error::{Error, Result};
use crate::model::{ConstraintSet, DenseMatrix, Trajectory};

fn check_system(a: &DenseMatrix, constraints: &ConstraintSet, x0: &[f64]) -> Result<()> {
    let n = constraints.state_dim();
    if !a.is_square() || a.rows() != n || x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "operator {}x{}, constraints on dimension {n}, initial state of length {}",
            a.rows(),
            a.cols(),
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "initial state must be finite".into(),
        ));
    }
    Ok(())
}

fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| yi + alpha * xi).collect()
}

fn rk4_step(a: &DenseMatrix, x: &[f64], h: f64) -> Vec<f64> {
    let mv = |v: &[f64]| a.matvec(v).expect("dimensions checked");
    let k1 = mv(x);
    let k2 = mv(&axpy(0.5 * h, &k1, x));
    let k3 = mv(&axpy(0.5 * h, &k2, x));
    let k4 = mv(&axpy(h, &k3, x));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Time grid `0, dt, 2dt, …` ending exactly at `t_final`.
///
/// When `t_final / dt` is within `1e-9` of an integer the grid is uniform;
/// otherwise the last step is shortened.
pub fn time_grid(t_final: f64, dt: f64) -> Result<Vec<f64>> {
    if !dt.is_finite() || dt <= 0.0 || !t_final.is_finite() || t_final < dt {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_final >= dt, got dt = {dt}, t_final = {t_final}"
        )));
    }
    let ratio = t_final / dt;
    let nearest = ratio.round();
    let (full_steps, partial) = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        (nearest as usize, false)
    } else {
        (ratio.floor() as usize, true)
    };
    let mut times: Vec<f64> = (0..=full_steps).map(|k| k as f64 * dt).collect();
    if partial {
        times.push(t_final);
    } else if let Some(last) = times.last_mut() {
        *last = t_final;
    }
    Ok(times)
}

fn invariant_values(constraints: &ConstraintSet, x: &[f64]) -> Vec<f64> {
    constraints.invariants_of(x).expect("dimensions checked")
}

/// Integrates `ẋ = A x` over `[0, t_final]` with RK4 and step `dt`.
pub fn simulate_continuous(
    a: &DenseMatrix,
    constraints: &ConstraintSet,
    x0: &[f64],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_system(a, constraints, x0)?;
    let times = time_grid(t_final, dt)?;
    let mut states = Vec::with_capacity(times.len());
    let mut invariants = Vec::with_capacity(times.len());
    states.push(x0.to_vec());
    invariants.push(invariant_values(constraints, x0));
    for (k, w) in times.windows(2).enumerate() {
        let x = rk4_step(a, states.last().expect("nonempty"), w[1] - w[0]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: k + 1,
                time: w[1],
            });
        }
        invariants.push(invariant_values(constraints, &x));
        states.push(x);
    }
    Ok(Trajectory {
        times,
        states,
        invariant_values: invariants,
    })
}

/// Iterates `x_{k+1} = A x_k` for `steps` steps; stores `steps + 1` states.
pub fn simulate_discrete(
    a: &DenseMatrix,
    constraints: &ConstraintSet,
    x0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    check_system(a, constraints, x0)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut invariants = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    invariants.push(invariant_values(constraints, x0));
    for k in 1..=steps {
        let x = a.matvec(states.last().expect("nonempty"))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: k,
                time: k as f64,
            });
        }
        invariants.push(invariant_values(constraints, &x));
        states.push(x);
    }
    Ok(Trajectory {
        times: (0..=steps).map(|k| k as f64).collect(),
        states,
        invariant_values: invariants,
    })
}

/// Deviation of `Cᵀx(t_k)` from `Cᵀx(t_0)`, measured in the ∞-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub max_drift: f64,
    pub final_drift: f64,
    pub drift_series: Vec<Vec<f64>>,
}

pub fn drift_report(traj: &Trajectory) -> DriftReport {
    let Some(base) = traj.invariant_values.first() else {
        return DriftReport {
            max_drift: 0.0,
            final_drift: 0.0,
            drift_series: Vec::new(),
        };
    };
    let drift_series: Vec<Vec<f64>> = traj
        .invariant_values
        .iter()
        .map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    let inf_norm = |v: &Vec<f64>| v.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
    let max_drift = drift_series.iter().map(inf_norm).fold(0.0, f64::max);
    let final_drift = drift_series.last().map_or(0.0, inf_norm);
    DriftReport {
        max_drift,
        final_drift,
        drift_series,
    }
}
