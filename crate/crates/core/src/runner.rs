//! Dispatch a resolved [`RunConfig`] to its engine.

use std::time::Instant;

use crate::config::{Engine, RunConfig};
use crate::diagnostics::{eta_from_trajectory, LocalizationSummary, Trajectory};
use crate::error::Result;
use crate::harmonic::{self, HarmonicParams};
use crate::lindblad;
use crate::network::single_particle_hamiltonian;
use crate::quantum::{self, QuantumState};
use crate::semiclassical;

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: RunConfig,
    pub trajectory: Trajectory,
    pub summary: LocalizationSummary,
    /// Final many-body state of a quantum run.
    pub final_state: Option<QuantumState>,
    pub wall_time: f64,
}

/// Run the trajectory described by `cfg` and reduce it to `eta`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let (spec, model, np) = (&cfg.network, &cfg.model, cfg.np);
    let mut final_state = None;
    let mut trajectory = match cfg.engine {
        Engine::Harmonic => {
            let times = cfg.times();
            if spec.disorder.is_clean() {
                harmonic::clean_trajectory(&HarmonicParams::from_network(spec, model.omega_c(), np)?, &times)?
            } else {
                let h = single_particle_hamiltonian(spec, model.omega_c(), &spec.realization(model.omega_c()))?;
                harmonic::correlation_trajectory(&h, np, &times)?
            }
        }
        Engine::SemiclassicalJc | Engine::SemiclassicalBh => semiclassical::simulate(spec, model, np, &cfg.integrator)?,
        Engine::Quantum => {
            let (traj, psi) = quantum::simulate_with_final(spec, model, np, &cfg.times(), &cfg.quantum)?;
            final_state = Some(psi);
            traj
        }
        Engine::Lindblad => {
            let rates = cfg.rates.unwrap_or_default();
            lindblad::simulate(spec, model, np, rates, &cfg.times(), &cfg.open)?
        }
    };
    trajectory.set_meta("engine", cfg.engine.name());
    let summary = eta_from_trajectory(&trajectory, np)?;
    Ok(RunOutput { config: cfg.clone(), trajectory, summary, final_state, wall_time: start.elapsed().as_secs_f64() })
}
