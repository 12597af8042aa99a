//! Closed-form dynamics of harmonic networks and the correlation-matrix route.
//!
//! For a clean ring the hopping matrix is circulant, so plane waves diagonalize
//! it: mode `k` rotates at `omega_c - J s_k` with
//! `s_k = sum_{d in offsets} cos(2 pi k d / N)`. Starting from `Np` bosons on
//! unit 0 every mode carries amplitude `sqrt(Np / N)`, which yields the
//! imbalance formulas below. The correlation matrix `C = <x x^dagger>`
//! propagated by `e^{-iht}` gives the same observables for any `h`, including
//! disordered ones, and serves as the independent check on the formulas.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::diagnostics::Trajectory;
use crate::error::{Error, Result};
use crate::network::{Connectivity, NetworkSpec};

/// Tolerance on the imaginary part of the finite-range double sum.
const IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicParams {
    pub n: usize,
    pub connectivity: Connectivity,
    pub j: f64,
    pub omega_c: f64,
    pub np: u32,
}

impl HarmonicParams {
    pub fn new(n: usize, connectivity: Connectivity, j: f64, np: u32) -> Result<Self> {
        let p = HarmonicParams { n, connectivity: connectivity.canonical(n), j, omega_c: 0.0, np };
        p.validate()?;
        Ok(p)
    }

    pub fn from_network(spec: &NetworkSpec, omega_c: f64, np: u32) -> Result<Self> {
        spec.validate()?;
        let mut p = HarmonicParams::new(spec.n, spec.connectivity, spec.j, np)?;
        p.omega_c = omega_c;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("N", "need at least 2 units"));
        }
        if self.np == 0 {
            return Err(Error::invalid("Np", "need at least one boson in the test unit"));
        }
        if !(self.j >= 0.0) {
            return Err(Error::invalid("J", "hopping must be >= 0"));
        }
        if let Connectivity::FiniteRange { d: 0 } = self.connectivity {
            return Err(Error::invalid("D", "finite range needs D >= 1"));
        }
        Ok(())
    }

    fn npf(&self) -> f64 {
        f64::from(self.np)
    }

    /// Period of the all-to-all imbalance, `2 pi / (N J)`.
    pub fn all_to_all_period(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.j)
    }
}

/// `f(k) = sum_{d=1}^{D} cos(2 pi k d / N)` in closed form,
/// `cos((D+1) pi k / N) sin(D pi k / N) / sin(pi k / N)`.
pub fn f_of_k(n: usize, d: usize, k: usize) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(Error::Contract(format!("f(k) needs 1 <= k <= N-1, got k = {k}, N = {n}")));
    }
    if d == 0 || d >= n.div_ceil(2) {
        return Err(Error::Contract(format!("f(k) needs 1 <= D < ceil(N/2), got D = {d}, N = {n}")));
    }
    let (nf, df, kf) = (n as f64, d as f64, k as f64);
    Ok((PI * kf * (df + 1.0) / nf).cos() * (PI * kf * df / nf).sin() / (PI * kf / nf).sin())
}

/// Finite-range imbalance with `f(k)` precomputed for one parameter set.
#[derive(Clone, Debug)]
pub struct FiniteRangeImbalance {
    params: HarmonicParams,
    d: usize,
    f: Vec<f64>,
}

impl FiniteRangeImbalance {
    pub fn new(params: HarmonicParams) -> Result<Self> {
        params.validate()?;
        let d = match params.connectivity.canonical(params.n) {
            Connectivity::FiniteRange { d } => d,
            Connectivity::AllToAll => {
                return Err(Error::Contract(
                    "finite-range imbalance called with D >= ceil(N/2); use the all-to-all form".into(),
                ))
            }
        };
        let f = (1..params.n).map(|k| f_of_k(params.n, d, k)).collect::<Result<Vec<_>>>()?;
        Ok(FiniteRangeImbalance { params, d, f })
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        let p = &self.params;
        let w = 2.0 * p.j * t;
        let mut double = Complex64::new(0.0, 0.0);
        for &fk in &self.f {
            for &fk2 in &self.f {
                double += Complex64::from_polar(1.0, w * (fk2 - fk));
            }
        }
        if double.im.abs() > IMAG_TOL {
            return Err(Error::Contract(format!(
                "imaginary part {:e} of the mode double sum at t = {t}",
                double.im
            )));
        }
        let single: f64 = self.f.iter().map(|&fk| 2.0 * (w * (fk - self.d as f64)).cos()).sum();
        let nf = p.n as f64;
        Ok(2.0 * p.npf() / (nf * nf) * (1.0 + double.re + single) - p.npf())
    }
}

pub fn imbalance_finite_range(p: &HarmonicParams, t: f64) -> Result<f64> {
    FiniteRangeImbalance::new(*p)?.at(t)
}

/// `P(t) = Np/N^2 [1 + (N-1)(N + 4 cos(N J t) - 3)]`.
pub fn imbalance_all_to_all(p: &HarmonicParams, t: f64) -> f64 {
    let nf = p.n as f64;
    p.npf() / (nf * nf) * (1.0 + (nf - 1.0) * (nf + 4.0 * (nf * p.j * t).cos() - 3.0))
}

/// `eta = 1 - 4/N + 4/N^2`.
pub fn eta_all_to_all_closed_form(n: usize) -> f64 {
    let nf = n as f64;
    1.0 - 4.0 / nf + 4.0 / (nf * nf)
}

/// Closed-form imbalance for either connectivity.
pub fn imbalance(p: &HarmonicParams, t: f64) -> Result<f64> {
    match p.connectivity.canonical(p.n) {
        Connectivity::AllToAll => Ok(imbalance_all_to_all(p, t)),
        Connectivity::FiniteRange { .. } => imbalance_finite_range(p, t),
    }
}

/// Mode sums `s_k` of the clean circulant hopping pattern.
fn mode_sums(p: &HarmonicParams) -> Result<Vec<f64>> {
    let n = p.n;
    match p.connectivity.canonical(n) {
        Connectivity::AllToAll => Ok((0..n).map(|k| if k == 0 { (n - 1) as f64 } else { -1.0 }).collect()),
        Connectivity::FiniteRange { d } => {
            let mut s = vec![2.0 * d as f64];
            for k in 1..n {
                s.push(2.0 * f_of_k(n, d, k)?);
            }
            Ok(s)
        }
    }
}

/// Site occupations of a clean network at time `t`, from the plane-wave solution.
pub fn site_occupations_clean(p: &HarmonicParams, t: f64) -> Result<Vec<f64>> {
    let s = mode_sums(p)?;
    Ok(occupations_from_modes(p, &s, &twiddles(p.n), t))
}

/// `exp(2 pi i m / N)` for `m = 0..N`.
fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n).map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / n as f64)).collect()
}

fn occupations_from_modes(p: &HarmonicParams, s: &[f64], tw: &[Complex64], t: f64) -> Vec<f64> {
    let n = p.n;
    let nf = n as f64;
    let scale = p.npf() / (nf * nf);
    let phases: Vec<Complex64> = s.iter().map(|&sk| Complex64::from_polar(1.0, p.j * sk * t)).collect();
    (0..n)
        .map(|site| {
            // walk k * site mod N without a division per term
            let mut m = 0;
            let mut amp = Complex64::new(0.0, 0.0);
            for &ph in &phases {
                amp += tw[m] * ph;
                m += site;
                if m >= n {
                    m -= n;
                }
            }
            scale * amp.norm_sqr()
        })
        .collect()
}

/// All-to-all: the uniform mode has frequency `(N-1) J`, all others `-J`, so
/// `n_0 = Np/N^2 |e^{i(N-1)Jt} + (N-1) e^{-iJt}|^2` and every other site
/// holds `Np/N^2 |e^{i(N-1)Jt} - e^{-iJt}|^2`.
fn occupations_all_to_all(p: &HarmonicParams, t: f64) -> Vec<f64> {
    let nf = p.n as f64;
    let scale = p.npf() / (nf * nf);
    let uniform = Complex64::from_polar(1.0, (nf - 1.0) * p.j * t);
    let rest = Complex64::from_polar(1.0, -p.j * t);
    let mut occ = vec![scale * (uniform - rest).norm_sqr(); p.n];
    occ[0] = scale * (uniform + (nf - 1.0) * rest).norm_sqr();
    occ
}

/// Harmonic trajectory of a clean network sampled at `times`.
pub fn clean_trajectory(p: &HarmonicParams, times: &[f64]) -> Result<Trajectory> {
    let mut traj = Trajectory::new(p.n);
    if p.connectivity.is_all_to_all(p.n) {
        for &t in times {
            traj.push(t, occupations_all_to_all(p, t), None);
        }
    } else {
        let s = mode_sums(p)?;
        let tw = twiddles(p.n);
        for &t in times {
            traj.push(t, occupations_from_modes(p, &s, &tw, t), None);
        }
    }
    traj.set_meta("method", "plane_wave_closed_form");
    Ok(traj)
}

/// Harmonic trajectory for an arbitrary single-particle matrix, via the
/// correlation matrix.
pub fn correlation_trajectory(h: &DMatrix<Complex64>, np: u32, times: &[f64]) -> Result<Trajectory> {
    let n = h.nrows();
    let prop = CorrelationPropagator::new(h)?;
    let c0 = initial_correlation(n, np);
    let mut traj = Trajectory::new(n);
    for &t in times {
        let c = prop.propagate(&c0, t);
        let occ = (0..n).map(|i| c[(i, i)].re - 1.0).collect();
        traj.push(t, occ, None);
    }
    traj.set_meta("method", "correlation_matrix");
    Ok(traj)
}

/// `C(0) = <x x^dagger>` for `Np` bosons on unit 0 and vacuum elsewhere:
/// `diag(1 + Np, 1, ..., 1)`.
pub fn initial_correlation(n: usize, np: u32) -> DMatrix<Complex64> {
    let mut c = DMatrix::identity(n, n);
    c[(0, 0)] += Complex64::new(f64::from(np), 0.0);
    c
}

/// `P = 2 C_00 - tr C + (N - 2)`.
pub fn imbalance_from_correlation(c: &DMatrix<Complex64>) -> f64 {
    let n = c.nrows() as f64;
    2.0 * c[(0, 0)].re - c.trace().re + (n - 2.0)
}

/// Largest entry of `|h - h^dagger|`.
pub fn hermiticity_defect(h: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigendecomposition of `h`, cached for propagation to many times.
#[derive(Clone, Debug)]
pub struct CorrelationPropagator {
    energies: DVector<f64>,
    modes: DMatrix<Complex64>,
}

impl CorrelationPropagator {
    pub fn new(h: &DMatrix<Complex64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::DimensionMismatch { expected: h.nrows(), found: h.ncols() });
        }
        let defect = hermiticity_defect(h);
        let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if defect > 1e-12 * scale {
            return Err(Error::NotHermitian(defect));
        }
        let eig = SymmetricEigen::new(h.clone());
        Ok(CorrelationPropagator { energies: eig.eigenvalues, modes: eig.eigenvectors })
    }

    /// `e^{-iht}`.
    pub fn unitary(&self, t: f64) -> DMatrix<Complex64> {
        let mut scaled = self.modes.clone();
        for (mut col, &e) in scaled.column_iter_mut().zip(self.energies.iter()) {
            col *= Complex64::from_polar(1.0, -e * t);
        }
        scaled * self.modes.adjoint()
    }

    /// `C(t) = e^{-iht} C(0) e^{iht}`.
    pub fn propagate(&self, c0: &DMatrix<Complex64>, t: f64) -> DMatrix<Complex64> {
        if t == 0.0 {
            return c0.clone();
        }
        let u = self.unitary(t);
        &u * c0 * u.adjoint()
    }
}

pub fn propagate_correlation_matrix(
    h: &DMatrix<Complex64>,
    c0: &DMatrix<Complex64>,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    if c0.shape() != h.shape() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), found: c0.nrows() });
    }
    Ok(CorrelationPropagator::new(h)?.propagate(c0, t))
}
