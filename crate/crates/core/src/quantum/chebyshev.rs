//! Chebyshev expansion of `e^{-iH dt}` between consecutive sample times.
//!
//! With the spectrum mapped into `[-1, 1]` by `H = c + r X`,
//! `e^{-iH dt} = e^{-ic dt} sum_k a_k T_k(X)` where `a_k` are the Chebyshev
//! coefficients of `x -> e^{-i r dt x}`. They are obtained by quadrature at
//! Chebyshev nodes, which is exact up to aliasing of coefficients that are
//! already far below the truncation tolerance. No reorthogonalization is
//! needed, so long windows at strong coupling are markedly cheaper than with
//! Lanczos stepping.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hamiltonian::SparseHamiltonian;
use super::krylov::PropagationStats;
use crate::error::{Error, Result};

/// Spectral interval `[lo, hi]` enclosing every eigenvalue of `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBounds {
    pub lo: f64,
    pub hi: f64,
}

impl SpectralBounds {
    /// Gershgorin discs: always safe, often loose.
    pub fn gershgorin(h: &SparseHamiltonian) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..h.dim() {
            let (mut d, mut off) = (0.0, 0.0);
            for (c, v) in h.row(r) {
                if c == r {
                    d = v;
                } else {
                    off += v.abs();
                }
            }
            lo = f64::min(lo, d - off);
            hi = f64::max(hi, d + off);
        }
        SpectralBounds { lo, hi }
    }

    /// Lanczos Ritz extremes widened by their residuals plus a safety margin,
    /// clipped to the Gershgorin interval.
    pub fn estimate(h: &SparseHamiltonian) -> Self {
        let outer = Self::gershgorin(h);
        let dim = h.dim();
        let m = dim.min(60);
        if dim <= 60 {
            let e = SymmetricEigen::new(h.to_dense()).eigenvalues;
            let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let pad = 1e-9 * (hi - lo).max(lo.abs().max(hi.abs())).max(1.0);
            return SpectralBounds { lo: lo - pad, hi: hi + pad };
        }
        // fixed seed: the estimate, and therefore every trajectory, is reproducible
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n0);
        let mut basis = vec![v];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut w = vec![0.0; dim];
        let mut last_beta = 0.0;
        for j in 0..m {
            for (r, out) in w.iter_mut().enumerate() {
                *out = h.row(r).map(|(c, val)| val * basis[j][c]).sum();
            }
            alpha.push(basis[j].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
            for _ in 0..2 {
                for q in &basis {
                    let c: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            last_beta = b;
            if j + 1 == m || b < 1e-12 {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let k = alpha.len();
        let t = DMatrix::from_fn(k, k, |r, c| match r.abs_diff(c) {
            0 => alpha[r],
            1 => beta[r.min(c)],
            _ => 0.0,
        });
        let eig = SymmetricEigen::new(t);
        let (mut imin, mut imax) = (0, 0);
        for i in 0..k {
            if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                imin = i;
            }
            if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        let resid = |i: usize| last_beta * eig.eigenvectors[(k - 1, i)].abs();
        let (lo, hi) = (eig.eigenvalues[imin], eig.eigenvalues[imax]);
        let margin = 0.02 * (hi - lo) + 1e-9;
        SpectralBounds {
            lo: (lo - resid(imin) - margin).max(outer.lo),
            hi: (hi + resid(imax) + margin).min(outer.hi),
        }
    }

    fn center(&self) -> f64 {
        0.5 * (self.hi + self.lo)
    }

    fn radius(&self) -> f64 {
        (0.5 * (self.hi - self.lo)).max(1e-300)
    }
}

/// Coefficients `a_k` of `e^{-i z x}` on `[-1, 1]`, truncated once they fall
/// below `tol`.
pub fn expansion_coefficients(z: f64, tol: f64) -> Vec<Complex64> {
    let kmax = (z.abs() * 1.5) as usize + 80;
    let nodes = 2 * kmax + 64;
    let samples: Vec<(f64, Complex64)> = (0..nodes)
        .map(|j| {
            let theta = PI * (j as f64 + 0.5) / nodes as f64;
            (theta, Complex64::from_polar(1.0, -z * theta.cos()))
        })
        .collect();
    let mut coeffs = Vec::new();
    let mut small = 0;
    for k in 0..kmax {
        let sum: Complex64 = samples.iter().map(|(theta, f)| f * (k as f64 * theta).cos()).sum();
        let a = sum * if k == 0 { 1.0 } else { 2.0 } / nodes as f64;
        coeffs.push(a);
        if (k as f64) > z.abs() && a.norm() < tol {
            small += 1;
            if small == 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    coeffs
}

/// `psi <- e^{-iH dt} psi` given precomputed coefficients.
fn apply_expansion(
    h: &SparseHamiltonian,
    bounds: SpectralBounds,
    dt: f64,
    coeffs: &[Complex64],
    psi: &mut [Complex64],
    work: &mut [Vec<Complex64>; 3],
    stats: &mut PropagationStats,
) {
    let (c, r) = (bounds.center(), bounds.radius());
    let [prev, cur, next] = work;
    // X v = (H v - c v) / r
    let scaled = |v: &[Complex64], out: &mut [Complex64]| {
        h.apply(v, out);
        for (o, x) in out.iter_mut().zip(v) {
            *o = (*o - x * c) / r;
        }
    };
    prev.copy_from_slice(psi);
    let mut acc: Vec<Complex64> = psi.iter().map(|x| x * coeffs[0]).collect();
    if coeffs.len() > 1 {
        scaled(prev, cur);
        stats.matvecs += 1;
        acc.iter_mut().zip(cur.iter()).for_each(|(a, x)| *a += x * coeffs[1]);
        for ak in &coeffs[2..] {
            scaled(cur, next);
            stats.matvecs += 1;
            for ((n, p), a) in next.iter_mut().zip(prev.iter()).zip(acc.iter_mut()) {
                *n = *n * 2.0 - p;
                *a += *n * ak;
            }
            std::mem::swap(prev, cur);
            std::mem::swap(cur, next);
        }
    }
    let phase = Complex64::from_polar(1.0, -c * dt);
    for (p, a) in psi.iter_mut().zip(acc) {
        *p = a * phase;
    }
}

/// Propagate through `times` by one Chebyshev expansion per sample interval.
pub fn propagate_chebyshev<F>(
    h: &SparseHamiltonian,
    psi0: &[Complex64],
    times: &[f64],
    tol: f64,
    mut observe: F,
) -> Result<PropagationStats>
where
    F: FnMut(usize, f64, &[Complex64]) -> Result<()>,
{
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.len() });
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Contract("sample times must be non-negative and non-decreasing".into()));
    }
    let mut stats = PropagationStats { initial_energy: h.expectation(psi0), ..Default::default() };
    let mut bounds = SpectralBounds::estimate(h);
    let mut safe = false;
    let norm0 = psi0.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let mut psi = psi0.to_vec();
    let mut work = [vec![Complex64::new(0.0, 0.0); h.dim()], vec![Complex64::new(0.0, 0.0); h.dim()], vec![Complex64::new(0.0, 0.0); h.dim()]];
    let mut cache: Option<(f64, Vec<Complex64>)> = None;
    let mut t = 0.0;
    for (k, &target) in times.iter().enumerate() {
        let dt = target - t;
        if dt > 0.0 {
            loop {
                let z = bounds.radius() * dt;
                let coeffs = match &cache {
                    Some((zc, c)) if *zc == z => c.clone(),
                    _ => {
                        let c = expansion_coefficients(z, tol);
                        cache = Some((z, c.clone()));
                        c
                    }
                };
                let mut trial = psi.clone();
                apply_expansion(h, bounds, dt, &coeffs, &mut trial, &mut work, &mut stats);
                let norm = trial.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                // eigenvalues outside the assumed interval make the series blow up
                if (norm - norm0).abs() > 1e-10 * norm0.max(1.0) && !safe {
                    log::debug!("spectral estimate too tight; retrying with Gershgorin bounds");
                    bounds = SpectralBounds::gershgorin(h);
                    safe = true;
                    cache = None;
                    continue;
                }
                if !norm.is_finite() {
                    return Err(Error::Integration { t: target, reason: "Chebyshev expansion diverged".into() });
                }
                psi = trial;
                stats.steps += 1;
                break;
            }
            t = target;
        }
        observe(k, target, &psi)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::krylov::DenseEvolution;

    fn random_symmetric(n: usize, seed: u64) -> SparseHamiltonian {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![Vec::new(); n];
        for r in 0..n {
            rows[r].push((r, rng.random::<f64>() * 40.0 + 5.0));
            for c in r + 1..n {
                if rng.random::<f64>() < 0.1 {
                    let v = 3.0 * (rng.random::<f64>() - 0.5);
                    rows[r].push((c, v));
                    rows[c].push((r, v));
                }
            }
        }
        SparseHamiltonian::from_rows(rows).unwrap()
    }

    #[test]
    fn coefficients_reproduce_the_exponential() {
        for z in [0.0, 0.3, 5.0, 40.0] {
            let a = expansion_coefficients(z, 1e-15);
            for x in [-1.0, -0.3, 0.0, 0.77, 1.0f64] {
                let theta = x.acos();
                let series: Complex64 = a.iter().enumerate().map(|(k, ak)| ak * (k as f64 * theta).cos()).sum();
                assert!((series - Complex64::from_polar(1.0, -z * x)).norm() < 1e-13, "z={z} x={x}");
            }
        }
    }

    #[test]
    fn bounds_enclose_spectrum() {
        let h = random_symmetric(200, 2);
        let e = SymmetricEigen::new(h.to_dense()).eigenvalues;
        let b = SpectralBounds::estimate(&h);
        let g = SpectralBounds::gershgorin(&h);
        assert!(e.iter().all(|&x| x >= b.lo && x <= b.hi));
        assert!(b.lo >= g.lo && b.hi <= g.hi);
    }

    #[test]
    fn matches_dense_oracle() {
        let h = random_symmetric(250, 7);
        let mut psi: Vec<Complex64> = (0..250).map(|i| Complex64::new((i as f64).cos(), 0.1 * i as f64 % 1.0)).collect();
        let n = psi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|x| *x /= n);
        let dense = DenseEvolution::new(&h).unwrap();
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.4).collect();
        propagate_chebyshev(&h, &psi, &times, 1e-14, |_, t, state| {
            let reference = dense.evolve(&psi, t);
            let err = state.iter().zip(&reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-9, "t={t} err={err}");
            Ok(())
        })
        .unwrap();
    }
}
