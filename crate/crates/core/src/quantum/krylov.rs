//! Short-time Lanczos propagation of `e^{-iHt} psi`.
//!
//! A Krylov space of at most `m` vectors is built from the current state with
//! full reorthogonalization. In that space `psi(t + s) ~ |psi| V e^{-iTs} e_1`
//! and the neglected remainder is estimated by `beta_m |[e^{-iTs} e_1]_m|`.
//! Each Krylov space is reused for every requested time inside the step it
//! certifies, so dense output costs no extra matrix-vector products.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::SparseHamiltonian;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// Adaptive Lanczos steps; each Krylov space serves every sample it covers.
    Lanczos,
    /// One Chebyshev expansion per sample interval.
    #[default]
    Chebyshev,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagatorOptions {
    pub method: Propagator,
    /// Maximum Krylov dimension (Lanczos).
    pub max_dim: usize,
    /// Per-step bound on the estimated remainder (Lanczos) or on the
    /// dropped expansion coefficients (Chebyshev).
    pub tol: f64,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        PropagatorOptions { method: Propagator::default(), max_dim: 30, tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub steps: usize,
    pub matvecs: usize,
    /// `<H>` of the initial state and its largest deviation at step boundaries,
    /// read off the first Lanczos coefficient at no extra cost.
    pub initial_energy: f64,
    pub max_energy_drift: f64,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

struct KrylovSpace {
    basis: Vec<Vec<Complex64>>,
    /// `<psi|H|psi>` of the seed state.
    energy: f64,
    /// Eigenpairs of the tridiagonal projection.
    evals: Vec<f64>,
    evecs: DMatrix<f64>,
    /// `beta_m`; zero after an invariant subspace was found.
    residual: f64,
    scale: f64,
}

impl KrylovSpace {
    fn build(h: &SparseHamiltonian, psi: &[Complex64], max_dim: usize, stats: &mut PropagationStats) -> Self {
        let scale = norm(psi);
        let max_dim = max_dim.min(h.dim()).max(1);
        let mut basis: Vec<Vec<Complex64>> = vec![psi.iter().map(|x| x / scale).collect()];
        let mut alpha = Vec::with_capacity(max_dim);
        let mut beta: Vec<f64> = Vec::with_capacity(max_dim);
        let mut w = vec![Complex64::new(0.0, 0.0); psi.len()];
        let hnorm = h.norm_bound().max(f64::MIN_POSITIVE);
        let residual = loop {
            let j = basis.len() - 1;
            h.apply(&basis[j], &mut w);
            stats.matvecs += 1;
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // three-term recurrence, then one full reorthogonalization pass
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= vi * a;
            }
            if j > 0 {
                let b = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= vi * b;
                }
            }
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            let b = norm(&w);
            if b <= 1e-13 * hnorm {
                break 0.0;
            }
            if basis.len() == max_dim {
                break b;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        };
        let m = alpha.len();
        let t = DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                alpha[r]
            } else if r + 1 == c {
                beta[r]
            } else if c + 1 == r {
                beta[c]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        KrylovSpace {
            energy: alpha[0] * scale * scale,
            basis,
            evals: eig.eigenvalues.iter().copied().collect(),
            evecs: eig.eigenvectors,
            residual,
            scale,
        }
    }

    /// Coefficients `e^{-iTs} e_1` in the Krylov basis.
    fn coefficients(&self, s: f64) -> Vec<Complex64> {
        let m = self.evals.len();
        let phase: Vec<Complex64> =
            (0..m).map(|k| Complex64::from_polar(self.evecs[(0, k)], -self.evals[k] * s)).collect();
        (0..m).map(|r| (0..m).map(|k| phase[k] * self.evecs[(r, k)]).sum()).collect()
    }

    fn error(&self, s: f64) -> f64 {
        if self.residual == 0.0 {
            return 0.0;
        }
        self.residual * self.coefficients(s).last().map_or(0.0, |c| c.norm())
    }

    /// Largest step in `(0, limit]` whose estimated remainder stays under `tol`.
    fn admissible_step(&self, limit: f64, tol: f64) -> f64 {
        if self.error(limit) <= tol {
            return limit;
        }
        let (mut lo, mut hi) = (0.0, limit);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.error(mid) <= tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn state(&self, s: f64, out: &mut [Complex64]) {
        let c = self.coefficients(s);
        out.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        for (v, ck) in self.basis.iter().zip(&c) {
            let ck = ck * self.scale;
            for (o, vi) in out.iter_mut().zip(v) {
                *o += ck * vi;
            }
        }
    }
}

/// Propagate `psi0` and hand each requested state to `observe`.
///
/// `times` must be non-decreasing and start at or after 0; `psi0` is taken to
/// be the state at time 0.
pub fn propagate<F>(
    h: &SparseHamiltonian,
    psi0: &[Complex64],
    times: &[f64],
    opts: &PropagatorOptions,
    observe: F,
) -> Result<PropagationStats>
where
    F: FnMut(usize, f64, &[Complex64]) -> Result<()>,
{
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    match opts.method {
        Propagator::Lanczos => propagate_lanczos(h, psi0, times, opts, observe),
        Propagator::Chebyshev => super::chebyshev::propagate_chebyshev(h, psi0, times, opts.tol, observe),
    }
}

pub fn propagate_lanczos<F>(
    h: &SparseHamiltonian,
    psi0: &[Complex64],
    times: &[f64],
    opts: &PropagatorOptions,
    mut observe: F,
) -> Result<PropagationStats>
where
    F: FnMut(usize, f64, &[Complex64]) -> Result<()>,
{
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.len() });
    }
    if opts.max_dim < 2 || !(opts.tol > 0.0) {
        return Err(Error::invalid("krylov", "max_dim must be >= 2 and tol > 0"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Contract("sample times must be non-negative and non-decreasing".into()));
    }
    let mut stats = PropagationStats::default();
    let mut psi = psi0.to_vec();
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    let mut t = 0.0;
    let mut next = 0;
    let mut first = true;
    while next < times.len() && times[next] <= t {
        observe(next, times[next], &psi)?;
        next += 1;
    }
    while next < times.len() {
        let space = KrylovSpace::build(h, &psi, opts.max_dim, &mut stats);
        if first {
            stats.initial_energy = space.energy;
            first = false;
        }
        stats.max_energy_drift = stats.max_energy_drift.max((space.energy - stats.initial_energy).abs());
        let remaining = times[times.len() - 1] - t;
        let tau = space.admissible_step(remaining, opts.tol);
        if tau <= remaining * 1e-14 {
            return Err(Error::Integration { t, reason: "Krylov step underflow".into() });
        }
        stats.steps += 1;
        while next < times.len() && times[next] - t <= tau {
            space.state(times[next] - t, &mut out);
            observe(next, times[next], &out)?;
            next += 1;
        }
        if next == times.len() {
            break;
        }
        space.state(tau, &mut psi);
        t += tau;
    }
    Ok(stats)
}

/// Reference propagator by dense diagonalization, for small instances.
pub struct DenseEvolution {
    evals: Vec<f64>,
    evecs: DMatrix<f64>,
}

/// Largest dimension accepted by [`DenseEvolution`].
pub const DENSE_LIMIT: usize = 4000;

impl DenseEvolution {
    pub fn new(h: &SparseHamiltonian) -> Result<Self> {
        if h.dim() > DENSE_LIMIT {
            return Err(Error::DimensionCap { dimension: h.dim() as u128, cap: DENSE_LIMIT });
        }
        if !h.is_hermitian() {
            return Err(Error::NotHermitian(h.hermiticity_defect()));
        }
        let eig = SymmetricEigen::new(h.to_dense());
        Ok(DenseEvolution { evals: eig.eigenvalues.iter().copied().collect(), evecs: eig.eigenvectors })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.evals
    }

    /// `e^{-iHt} psi0`.
    pub fn evolve(&self, psi0: &[Complex64], t: f64) -> Vec<Complex64> {
        let n = self.evals.len();
        let coeffs: Vec<Complex64> = (0..n)
            .map(|k| {
                let overlap: Complex64 = (0..n).map(|r| psi0[r] * self.evecs[(r, k)]).sum();
                overlap * Complex64::from_polar(1.0, -self.evals[k] * t)
            })
            .collect();
        (0..n).map(|r| (0..n).map(|k| coeffs[k] * self.evecs[(r, k)]).sum()).collect()
    }
}
