//! Seeded comparison of the closed-form projection against the oracles.

use crate::error::Result;
use crate::oracle::{kkt_project_columns, nullspace_projector, random_instance};
use crate::projection::{build_projector, project_affine, project_multi};

/// Tolerance on `max |A*_kkt − A*| / (1 + ‖Â‖_F)`.
pub const KKT_TOL: f64 = 1e-9;
/// Tolerance on `max |QQᵀ − P_C|`.
pub const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTestReport {
    pub instances: usize,
    /// Worst scaled discrepancy between the KKT oracle and `project_multi`.
    pub kkt_discrepancy: f64,
    /// Worst discrepancy between the null-space projector and `build_projector`.
    pub projector_discrepancy: f64,
    /// Worst scaled discrepancy for the affine variant.
    pub affine_discrepancy: f64,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.kkt_discrepancy <= KKT_TOL
            && self.affine_discrepancy <= KKT_TOL
            && self.projector_discrepancy <= PROJECTOR_TOL
    }
}

/// Runs the oracle equivalence checks on seeds `0..count`.
pub fn self_test(count: usize) -> Result<SelfTestReport> {
    let mut report = SelfTestReport {
        instances: count,
        kkt_discrepancy: 0.0,
        projector_discrepancy: 0.0,
        affine_discrepancy: 0.0,
    };
    for seed in 0..count as u64 {
        let inst = random_instance(seed);
        let scale = 1.0 + inst.a_hat.fro_norm();

        let closed = project_multi(&inst.a_hat, &inst.constraints)?;
        let kkt = kkt_project_columns(&inst.a_hat, &inst.constraints, None)?;
        report.kkt_discrepancy = report
            .kkt_discrepancy
            .max(kkt.sub(&closed.corrected)?.max_abs() / scale);

        let p = build_projector(&inst.constraints)?;
        let q = nullspace_projector(&inst.constraints)?;
        report.projector_discrepancy = report
            .projector_discrepancy
            .max(q.sub(p.matrix())?.max_abs());

        // affine target: a perturbed copy of the current violation
        let target = closed.violation_before.scale(0.5);
        let affine = project_affine(&inst.a_hat, &inst.constraints, &target)?;
        let kkt_affine = kkt_project_columns(&inst.a_hat, &inst.constraints, Some(&target))?;
        report.affine_discrepancy = report
            .affine_discrepancy
            .max(kkt_affine.sub(&affine.corrected)?.max_abs() / scale);
    }
    Ok(report)
}
