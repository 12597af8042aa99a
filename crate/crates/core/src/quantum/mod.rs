//! Exact closed-system evolution on a truncated many-body basis.

pub mod basis;
pub mod chebyshev;
pub mod hamiltonian;
pub mod krylov;

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Drift, Trajectory};
use crate::error::{Error, Result};
use crate::model::UnitModel;
use crate::network::NetworkSpec;

pub use basis::{count_dimension, BasisIndex, Restriction, DEFAULT_DIM_CAP};
pub use hamiltonian::{assemble_hamiltonian, SparseHamiltonian};
pub use krylov::{propagate, DenseEvolution, PropagationStats, Propagator, PropagatorOptions};

/// Allowed deviation of `<psi|psi>` from one.
pub const NORM_TOL: f64 = 1e-9;

/// Pure state over a [`BasisIndex`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
}

impl QuantumState {
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Little-endian dump: `u64` dimension, then `(re, im)` pairs of `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.amplitudes.len() as u64).to_le_bytes())?;
        for a in &self.amplitudes {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        let mut amplitudes = Vec::with_capacity(dim.min(1 << 24));
        for _ in 0..dim {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            amplitudes.push(Complex64::new(re, f64::from_le_bytes(word)));
        }
        Ok(QuantumState { amplitudes })
    }
}

/// `|Np, 0, ..., 0>` on `test_site`'s cavity with every qubit down.
pub fn initial_fock_state(basis: &BasisIndex, test_site: usize, np: u32) -> Result<QuantumState> {
    if test_site >= basis.n_sites() {
        return Err(Error::OutsideBasis(format!("test site {test_site} outside {} units", basis.n_sites())));
    }
    let mut n = vec![0; basis.n_sites()];
    n[test_site] = np;
    let code = basis.encode(&n, &vec![0; basis.n_sites()])?;
    let k = basis
        .index_of(code)
        .ok_or_else(|| Error::OutsideBasis(format!("Fock state with {np} bosons on unit {test_site} is not in the basis")))?;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
    amplitudes[k] = Complex64::new(1.0, 0.0);
    Ok(QuantumState { amplitudes })
}

/// Per-site `<n_i>` and, when the basis has qubits, `<sigma^z_i>`.
pub fn site_observables(basis: &BasisIndex, psi: &[Complex64]) -> (Vec<f64>, Option<Vec<f64>>) {
    let n_sites = basis.n_sites();
    let mut n = vec![0.0; n_sites];
    let mut up = vec![0.0; n_sites];
    for (k, a) in psi.iter().enumerate() {
        let p = a.norm_sqr();
        if p == 0.0 {
            continue;
        }
        for (i, &l) in basis.locals(k).iter().enumerate() {
            n[i] += p * f64::from(basis.boson(l));
            up[i] += p * f64::from(basis.qubit(l));
        }
    }
    let sz = basis.has_qubits().then(|| up.iter().map(|u| 2.0 * u - 1.0).collect());
    (n, sz)
}

/// `<sum_i (n_i + sigma^+_i sigma^-_i)>`.
pub fn total_excitation(basis: &BasisIndex, psi: &[Complex64]) -> f64 {
    psi.iter().enumerate().map(|(k, a)| a.norm_sqr() * f64::from(basis.excitation(k))).sum()
}

/// Evolve `psi0` under `h`, recording occupations, imbalance, and for JC
/// bases the qubit inversions. Norm, energy and excitation drifts are kept.
pub fn evolve(
    h: &SparseHamiltonian,
    basis: &BasisIndex,
    psi0: &QuantumState,
    times: &[f64],
    opts: &PropagatorOptions,
) -> Result<Trajectory> {
    evolve_with_final(h, basis, psi0, times, opts).map(|(traj, _)| traj)
}

/// [`evolve`], also returning the state at the last sample time.
pub fn evolve_with_final(
    h: &SparseHamiltonian,
    basis: &BasisIndex,
    psi0: &QuantumState,
    times: &[f64],
    opts: &PropagatorOptions,
) -> Result<(Trajectory, QuantumState)> {
    if h.dim() != basis.dim() || psi0.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: psi0.dim().min(h.dim()) });
    }
    let defect = h.hermiticity_defect();
    if defect > 0.0 {
        return Err(Error::NotHermitian(defect));
    }
    let norm0 = psi0.norm();
    if (norm0 - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm0));
    }
    let mut traj = Trajectory::new(basis.n_sites());
    if basis.has_qubits() {
        traj = traj.with_sigma_z();
    }
    let mut norm = Drift::new("norm", 1.0);
    let mut energy = Drift::new("energy", h.expectation(&psi0.amplitudes));
    let excitations: Vec<f64> = (0..basis.dim()).map(|k| f64::from(basis.excitation(k))).collect();
    let excitation_of = |psi: &[Complex64]| -> f64 { psi.iter().zip(&excitations).map(|(a, e)| a.norm_sqr() * e).sum() };
    let mut excitation = Drift::new("excitation", excitation_of(&psi0.amplitudes));
    let mut last = Vec::new();
    let stats = propagate(h, &psi0.amplitudes, times, opts, |k, t, psi| {
        let nrm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !nrm.is_finite() {
            return Err(Error::Integration { t, reason: "non-finite state".into() });
        }
        norm.update(nrm);
        excitation.update(excitation_of(psi));
        let (n, sz) = site_observables(basis, psi);
        traj.push(t, n, sz);
        if k + 1 == times.len() {
            last = psi.to_vec();
        }
        Ok(())
    })?;
    // energy at every Krylov step boundary comes with the propagator; add the endpoint
    energy.update(stats.initial_energy + stats.max_energy_drift);
    if !last.is_empty() {
        energy.update(h.expectation(&last));
    }
    if norm.max_abs > NORM_TOL {
        log::warn!("state norm drifted by {:e}", norm.max_abs);
    }
    traj.drift.extend([norm, energy, excitation]);
    traj.set_meta("dimension", basis.dim());
    traj.set_meta("restriction", basis.restriction());
    traj.set_meta("krylov", opts);
    traj.set_meta("stats", stats);
    Ok((traj, QuantumState { amplitudes: last }))
}

/// Basis restriction and propagator settings for a closed quantum run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumOptions {
    /// Defaults to the `M = Np` excitation sector.
    pub restriction: Option<Restriction>,
    pub dim_cap: usize,
    pub krylov: PropagatorOptions,
}

impl Default for QuantumOptions {
    fn default() -> Self {
        QuantumOptions { restriction: None, dim_cap: DEFAULT_DIM_CAP, krylov: PropagatorOptions::default() }
    }
}

/// Exact run from the standard initial Fock state; disorder from `spec.seed`.
pub fn simulate(
    spec: &NetworkSpec,
    model: &UnitModel,
    np: u32,
    times: &[f64],
    opts: &QuantumOptions,
) -> Result<Trajectory> {
    simulate_with_final(spec, model, np, times, opts).map(|(traj, _)| traj)
}

/// [`simulate`], also returning the final state.
pub fn simulate_with_final(
    spec: &NetworkSpec,
    model: &UnitModel,
    np: u32,
    times: &[f64],
    opts: &QuantumOptions,
) -> Result<(Trajectory, QuantumState)> {
    spec.validate()?;
    model.validate()?;
    if np == 0 {
        return Err(Error::invalid("Np", "must be >= 1"));
    }
    let restriction = opts.restriction.unwrap_or(Restriction::Sector(np));
    let basis = BasisIndex::build_capped(spec.n, np, model.kind(), restriction, opts.dim_cap)?;
    let h = assemble_hamiltonian(spec, model, &basis, &spec.realization(model.omega_c()))?;
    let psi0 = initial_fock_state(&basis, 0, np)?;
    evolve_with_final(&h, &basis, &psi0, times, &opts.krylov)
}
