//! Cross-checks between independent routes to the same dynamics.
//!
//! * `analytic_vs_matrix`: closed-form harmonic imbalance against correlation
//!   matrix propagation, for every finite range `D < ceil(N/2)` and all-to-all.
//! * `sector_equivalence`: quantum evolution in the initial excitation sector
//!   against evolution in the whole truncated space.
//! * `linear_limit`: semiclassical and quantum JC (`g = 0`) and BH (`U = 0`)
//!   against the harmonic closed form.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Trajectory;
use crate::error::Result;
use crate::harmonic::{self, HarmonicParams};
use crate::model::UnitModel;
use crate::network::{single_particle_hamiltonian, Connectivity, NetworkSpec};
use crate::quantum::{self, QuantumOptions, Restriction};
use crate::semiclassical::{self, ode::IntegratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub suite: String,
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn new(suite: &str, name: String, max_error: f64, tolerance: f64) -> Self {
        OracleCheck { suite: suite.into(), name, max_error, tolerance, passed: max_error <= tolerance }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &OracleCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn grid(t_max: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|k| t_max * k as f64 / samples as f64).collect()
}

/// Closed form against correlation-matrix propagation for all `N` up to `n_max`.
pub fn analytic_vs_matrix(n_max: usize, points: usize, tol: f64) -> Result<Vec<OracleCheck>> {
    let times = grid(10.0, points - 1);
    let np = 3;
    let mut checks = Vec::new();
    for n in 2..=n_max {
        let conns = (1..n.div_ceil(2)).map(|d| Connectivity::FiniteRange { d }).chain([Connectivity::AllToAll]);
        for conn in conns {
            let spec = NetworkSpec::new(n, 1.0, conn);
            let p = HarmonicParams::from_network(&spec, 0.0, np)?;
            let h: DMatrix<Complex64> = single_particle_hamiltonian(&spec, 0.0, &spec.realization(0.0))?;
            let matrix = harmonic::correlation_trajectory(&h, np, &times)?;
            let closed = times.iter().map(|&t| harmonic::imbalance(&p, t)).collect::<Result<Vec<_>>>()?;
            checks.push(OracleCheck::new(
                "analytic_vs_matrix",
                format!("N={n} {conn:?}"),
                max_diff(&closed, &matrix.imbalance),
                tol,
            ));
        }
    }
    Ok(checks)
}

/// Sector-restricted against full-space quantum evolution.
pub fn sector_equivalence(tol: f64) -> Result<Vec<OracleCheck>> {
    let times = grid(5.0, 50);
    let cases = [
        (NetworkSpec::new(3, 1.0, Connectivity::AllToAll), UnitModel::jc(1.0, 1.5), 2),
        (NetworkSpec::new(4, 1.0, Connectivity::FiniteRange { d: 1 }), UnitModel::bh(1.0, 0.7), 3),
    ];
    let mut checks = Vec::new();
    for (spec, model, np) in cases {
        let run = |r| quantum::simulate(&spec, &model, np, &times, &QuantumOptions { restriction: Some(r), ..Default::default() });
        let sector = run(Restriction::Sector(np))?;
        let full = run(Restriction::Full)?;
        checks.push(OracleCheck::new(
            "sector_equivalence",
            format!("{} N={} Np={np}", model.kind().name(), spec.n),
            max_diff(&sector.imbalance, &full.imbalance),
            tol,
        ));
    }
    Ok(checks)
}

/// Interaction-free engines against the harmonic closed form.
pub fn linear_limit(n: usize, np: u32, t_max: f64, tol: f64) -> Result<Vec<OracleCheck>> {
    let spec = NetworkSpec::new(n, 1.0, Connectivity::AllToAll);
    let cfg = IntegratorConfig::sampled(t_max, 400, 1e-3);
    let times = cfg.sample_times();
    let p = HarmonicParams::from_network(&spec, 1.0, np)?;
    let reference = times.iter().map(|&t| harmonic::imbalance(&p, t)).collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    let mut push = |name: &str, traj: Trajectory| {
        checks.push(OracleCheck::new("linear_limit", name.into(), max_diff(&reference, &traj.imbalance), tol));
    };
    let jc = UnitModel::jc(1.0, 0.0);
    let bh = UnitModel::bh(1.0, 0.0);
    push("semiclassical jc g=0", semiclassical::simulate(&spec, &jc, np, &cfg)?);
    push("semiclassical bh U=0", semiclassical::simulate(&spec, &bh, np, &cfg)?);
    push("quantum jc g=0", quantum::simulate(&spec, &jc, np, &times, &QuantumOptions::default())?);
    push("quantum bh U=0", quantum::simulate(&spec, &bh, np, &times, &QuantumOptions::default())?);
    Ok(checks)
}

/// All suites at their default sizes and tolerances.
pub fn run_all() -> Result<OracleReport> {
    let mut checks = analytic_vs_matrix(20, 500, 1e-8)?;
    checks.extend(sector_equivalence(1e-10)?);
    checks.extend(linear_limit(3, 4, 20.0, 1e-6)?);
    Ok(OracleReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let mut checks = analytic_vs_matrix(7, 100, 1e-8).unwrap();
        checks.extend(sector_equivalence(1e-10).unwrap());
        checks.extend(linear_limit(3, 2, 5.0, 1e-6).unwrap());
        let report = OracleReport { checks };
        let bad: Vec<_> = report.failures().collect();
        assert!(bad.is_empty(), "{bad:?}");
        // N=7: D in {1, 2, 3} plus all-to-all
        assert_eq!(report.checks.iter().filter(|c| c.name.starts_with("N=7 ")).count(), 4);
    }

    #[test]
    fn failing_check_is_reported() {
        let c = OracleCheck::new("s", "x".into(), 1e-3, 1e-6);
        assert!(!c.passed);
        assert!(!OracleReport { checks: vec![c] }.passed());
    }
}
