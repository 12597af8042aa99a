//! Mean-field dynamics of Jaynes-Cummings and Bose-Hubbard networks.
//!
//! Operator products are factorized into products of expectation values,
//! `alpha_i = <a_i>`, `beta_i = <sigma_i^->`, `w_i = <sigma_i^z>`. All hopping
//! (connectivity and disorder) enters through the single-particle matrix `h`,
//! whose diagonal already carries the cavity frequencies:
//!
//! ```text
//! JC:  alpha_i' = -i (h alpha)_i - i g beta_i
//!      beta_i'  = -i omega_q beta_i + i g alpha_i w_i
//!      w_i'     = 2 i g (alpha_i^* beta_i - alpha_i beta_i^*)
//! BH:  alpha_i' = -i (h alpha)_i + i U |alpha_i|^2 alpha_i
//! ```

pub mod ode;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Drift, Trajectory};
use crate::error::{Error, Result};
use crate::model::UnitModel;
use crate::network::{single_particle_hamiltonian_real, NetworkSpec};

pub use ode::{integrate, IntegrationStats, IntegratorConfig, Method};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Bloch-sphere violations above this are logged.
const BLOCH_WARN: f64 = 1e-6;

/// `h x` for a real symmetric single-particle matrix, with fast paths for the
/// clean circulant patterns.
#[derive(Clone, Debug, PartialEq)]
pub enum Hopping {
    /// Equal coupling `t` between every pair.
    AllToAll { onsite: Vec<f64>, t: f64 },
    /// Ring with equal coupling `t` to `d` neighbours on each side (`2d < n`).
    Ring { onsite: Vec<f64>, t: f64, d: usize },
    /// Anything else, stored row-wise without the diagonal.
    Sparse { onsite: Vec<f64>, rows: Vec<Vec<(usize, f64)>> },
}

impl Hopping {
    pub fn from_matrix(h: &DMatrix<f64>) -> Result<Self> {
        let n = h.nrows();
        if n != h.ncols() {
            return Err(Error::DimensionMismatch { expected: n, found: h.ncols() });
        }
        for i in 0..n {
            for j in 0..i {
                if h[(i, j)] != h[(j, i)] {
                    return Err(Error::NotHermitian((h[(i, j)] - h[(j, i)]).abs()));
                }
            }
        }
        let onsite: Vec<f64> = (0..n).map(|i| h[(i, i)]).collect();
        if n >= 2 {
            let t = h[(0, 1)];
            if (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == t)) {
                return Ok(Hopping::AllToAll { onsite, t });
            }
            // circulant ring: row 0 nonzero exactly on offsets 1..=d and n-d..n
            let d = (1..n).take_while(|&o| h[(0, o)] != 0.0).count();
            if d >= 1 && 2 * d < n {
                let t = h[(0, 1)];
                let pattern = |o: usize| if o != 0 && (o <= d || o >= n - d) { t } else { 0.0 };
                if (0..n).all(|i| (0..n).all(|j| i == j || h[(i, j)] == pattern((j + n - i) % n))) {
                    return Ok(Hopping::Ring { onsite, t, d });
                }
            }
        }
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && h[(i, j)] != 0.0).map(|j| (j, h[(i, j)])).collect())
            .collect();
        Ok(Hopping::Sparse { onsite, rows })
    }

    pub fn from_network(spec: &NetworkSpec, omega_c: f64) -> Result<Self> {
        spec.validate()?;
        let h = single_particle_hamiltonian_real(spec, omega_c, &spec.realization(omega_c))?;
        Hopping::from_matrix(&h)
    }

    pub fn len(&self) -> usize {
        self.onsite().len()
    }

    pub fn is_empty(&self) -> bool {
        self.onsite().is_empty()
    }

    pub fn onsite(&self) -> &[f64] {
        match self {
            Hopping::AllToAll { onsite, .. } | Hopping::Ring { onsite, .. } | Hopping::Sparse { onsite, .. } => onsite,
        }
    }

    /// `out = h x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        match self {
            Hopping::AllToAll { onsite, t } => {
                let total: Complex64 = x.iter().sum();
                for i in 0..x.len() {
                    out[i] = x[i] * onsite[i] + (total - x[i]) * *t;
                }
            }
            Hopping::Ring { onsite, t, d } => {
                let n = x.len();
                let d = *d;
                let mut fwd: Complex64 = (1..=d).map(|o| x[o % n]).sum();
                let mut bwd: Complex64 = (1..=d).map(|o| x[(n - o) % n]).sum();
                for i in 0..n {
                    out[i] = x[i] * onsite[i] + (fwd + bwd) * *t;
                    // slide both windows one site forward
                    fwd += x[(i + d + 1) % n] - x[(i + 1) % n];
                    bwd += x[i] - x[(i + n - d) % n];
                }
            }
            Hopping::Sparse { onsite, rows } => {
                for (i, row) in rows.iter().enumerate() {
                    let mut acc = x[i] * onsite[i];
                    for &(j, v) in row {
                        acc += x[j] * v;
                    }
                    out[i] = acc;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JcParams {
    pub omega_q: f64,
    pub g: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhParams {
    #[serde(rename = "U")]
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiclassicalStateJC {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub w: Vec<f64>,
}

impl SemiclassicalStateJC {
    /// `alpha_0 = sqrt(Np)`, other cavities empty, every qubit in its ground state.
    pub fn initial(n: usize, np: u32) -> Self {
        let mut alpha = vec![Complex64::new(0.0, 0.0); n];
        alpha[0] = Complex64::new(f64::from(np).sqrt(), 0.0);
        SemiclassicalStateJC { alpha, beta: vec![Complex64::new(0.0, 0.0); n], w: vec![-1.0; n] }
    }

    /// `Q = sum_i |alpha_i|^2 + (w_i + 1) / 2`.
    pub fn charge(&self) -> f64 {
        self.alpha.iter().map(|a| a.norm_sqr()).sum::<f64>() + self.w.iter().map(|w| 0.5 * (w + 1.0)).sum::<f64>()
    }

    fn pack(&self) -> Vec<Complex64> {
        let mut y = Vec::with_capacity(3 * self.alpha.len());
        y.extend_from_slice(&self.alpha);
        y.extend_from_slice(&self.beta);
        y.extend(self.w.iter().map(|&w| Complex64::new(w, 0.0)));
        y
    }

    fn unpack(y: &[Complex64]) -> Self {
        let n = y.len() / 3;
        SemiclassicalStateJC {
            alpha: y[..n].to_vec(),
            beta: y[n..2 * n].to_vec(),
            w: y[2 * n..].iter().map(|z| z.re).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemiclassicalStateBH {
    pub alpha: Vec<Complex64>,
}

impl SemiclassicalStateBH {
    pub fn initial(n: usize, np: u32) -> Self {
        let mut alpha = vec![Complex64::new(0.0, 0.0); n];
        alpha[0] = Complex64::new(f64::from(np).sqrt(), 0.0);
        SemiclassicalStateBH { alpha }
    }

    pub fn norm(&self) -> f64 {
        self.alpha.iter().map(|a| a.norm_sqr()).sum()
    }
}

fn jc_rhs_packed(hop: &Hopping, p: JcParams, y: &[Complex64], dy: &mut [Complex64]) {
    let n = y.len() / 3;
    let (alpha, rest) = y.split_at(n);
    let (beta, w) = rest.split_at(n);
    let (da, rest) = dy.split_at_mut(n);
    let (db, dw) = rest.split_at_mut(n);
    hop.apply(alpha, da);
    for i in 0..n {
        da[i] = -I * (da[i] + beta[i] * p.g);
        db[i] = -I * beta[i] * p.omega_q + I * alpha[i] * (p.g * w[i].re);
        // 2ig(z - z*) with z = alpha^* beta is real: -4 g Im z
        dw[i] = Complex64::new(-4.0 * p.g * (alpha[i].conj() * beta[i]).im, 0.0);
    }
}

fn bh_rhs_packed(hop: &Hopping, p: BhParams, y: &[Complex64], dy: &mut [Complex64]) {
    hop.apply(y, dy);
    for (d, a) in dy.iter_mut().zip(y) {
        *d = -I * *d + I * a * (p.u * a.norm_sqr());
    }
}

/// Time derivative of the JC mean-field state.
pub fn rhs_jc(state: &SemiclassicalStateJC, params: &JcParams, hop: &Hopping) -> SemiclassicalStateJC {
    let y = state.pack();
    let mut dy = vec![Complex64::new(0.0, 0.0); y.len()];
    jc_rhs_packed(hop, *params, &y, &mut dy);
    SemiclassicalStateJC::unpack(&dy)
}

/// Time derivative of the BH mean-field state.
pub fn rhs_bh(state: &SemiclassicalStateBH, params: &BhParams, hop: &Hopping) -> SemiclassicalStateBH {
    let mut dy = vec![Complex64::new(0.0, 0.0); state.alpha.len()];
    bh_rhs_packed(hop, *params, &state.alpha, &mut dy);
    SemiclassicalStateBH { alpha: dy }
}

fn finish(traj: &mut Trajectory, stats: IntegrationStats, cfg: &IntegratorConfig) {
    traj.set_meta("integrator", cfg);
    traj.set_meta("stats", stats);
}

pub fn run_jc(
    hop: &Hopping,
    params: JcParams,
    state0: &SemiclassicalStateJC,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = state0.alpha.len();
    if hop.len() != n {
        return Err(Error::DimensionMismatch { expected: hop.len(), found: n });
    }
    let mut traj = Trajectory::new(n).with_sigma_z();
    let mut charge = Drift::new("charge", state0.charge());
    let mut bloch = 0.0f64;
    let stats = integrate(
        |_, y, dy| jc_rhs_packed(hop, params, y, dy),
        &state0.pack(),
        cfg,
        |t, y| {
            let s = SemiclassicalStateJC::unpack(y);
            charge.update(s.charge());
            for (b, &w) in s.beta.iter().zip(&s.w) {
                let excess = (b.norm_sqr() - 0.25 * (1.0 - w * w)).max(w.abs() - 1.0);
                bloch = bloch.max(excess);
            }
            traj.push(t, s.alpha.iter().map(|a| a.norm_sqr()).collect(), Some(s.w));
            Ok(())
        },
    )?;
    if bloch > BLOCH_WARN {
        log::warn!("mean-field qubit left the Bloch sphere by {bloch:e}; consider a smaller step");
    }
    traj.drift.push(charge);
    traj.set_meta("bloch_violation", bloch);
    finish(&mut traj, stats, cfg);
    Ok(traj)
}

pub fn run_bh(
    hop: &Hopping,
    params: BhParams,
    state0: &SemiclassicalStateBH,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = state0.alpha.len();
    if hop.len() != n {
        return Err(Error::DimensionMismatch { expected: hop.len(), found: n });
    }
    let mut traj = Trajectory::new(n);
    let mut norm = Drift::new("norm", state0.norm());
    let stats = integrate(
        |_, y, dy| bh_rhs_packed(hop, params, y, dy),
        &state0.alpha,
        cfg,
        |t, y| {
            let occ: Vec<f64> = y.iter().map(|a| a.norm_sqr()).collect();
            norm.update(occ.iter().sum());
            traj.push(t, occ, None);
            Ok(())
        },
    )?;
    traj.drift.push(norm);
    finish(&mut traj, stats, cfg);
    Ok(traj)
}

/// Mean-field run from the standard initial condition (`Np` bosons on unit 0).
pub fn simulate(spec: &NetworkSpec, model: &UnitModel, np: u32, cfg: &IntegratorConfig) -> Result<Trajectory> {
    model.validate()?;
    let hop = Hopping::from_network(spec, model.omega_c())?;
    match *model {
        UnitModel::JaynesCummings { omega_q, g, .. } => {
            run_jc(&hop, JcParams { omega_q, g }, &SemiclassicalStateJC::initial(spec.n, np), cfg)
        }
        UnitModel::BoseHubbard { u, .. } => run_bh(&hop, BhParams { u }, &SemiclassicalStateBH::initial(spec.n, np), cfg),
        UnitModel::Harmonic { .. } => run_bh(&hop, BhParams { u: 0.0 }, &SemiclassicalStateBH::initial(spec.n, np), cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{imbalance, HarmonicParams};
    use crate::network::{Connectivity, DisorderSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dense_apply(h: &DMatrix<f64>, x: &[Complex64]) -> Vec<Complex64> {
        (0..x.len()).map(|i| (0..x.len()).map(|j| x[j] * h[(i, j)]).sum()).collect()
    }

    #[test]
    fn hopping_fast_paths_match_dense() {
        let x: Vec<Complex64> = (0..11).map(|i| c((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
        for conn in [Connectivity::AllToAll, Connectivity::FiniteRange { d: 1 }, Connectivity::FiniteRange { d: 4 }] {
            let spec = NetworkSpec::new(11, 0.8, conn);
            let h = single_particle_hamiltonian_real(&spec, 1.5, &spec.realization(1.5)).unwrap();
            let hop = Hopping::from_matrix(&h).unwrap();
            match conn {
                Connectivity::AllToAll => assert!(matches!(hop, Hopping::AllToAll { .. })),
                _ => assert!(matches!(hop, Hopping::Ring { .. })),
            }
            let mut out = vec![c(0.0, 0.0); 11];
            hop.apply(&x, &mut out);
            for (a, b) in out.iter().zip(dense_apply(&h, &x)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        let spec = NetworkSpec::new(11, 0.8, Connectivity::FiniteRange { d: 2 })
            .with_disorder(DisorderSpec { delta_omega: 0.1, delta_j: 0.1 })
            .with_seed(3);
        let h = single_particle_hamiltonian_real(&spec, 1.5, &spec.realization(1.5)).unwrap();
        let hop = Hopping::from_matrix(&h).unwrap();
        assert!(matches!(hop, Hopping::Sparse { .. }));
        let mut out = vec![c(0.0, 0.0); 11];
        hop.apply(&x, &mut out);
        for (a, b) in out.iter().zip(dense_apply(&h, &x)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn decoupled_jc_is_linear() {
        let spec = NetworkSpec::new(4, 1.0, Connectivity::AllToAll);
        let hop = Hopping::from_network(&spec, 2.0).unwrap();
        let mut s = SemiclassicalStateJC::initial(4, 5);
        s.alpha[2] = c(0.3, -0.4);
        let d = rhs_jc(&s, &JcParams { omega_q: 2.0, g: 0.0 }, &hop);
        // alpha' = -i omega_c alpha + i J sum_{j != i} alpha_j
        let total: Complex64 = s.alpha.iter().sum();
        for i in 0..4 {
            let expected = -I * s.alpha[i] * 2.0 + I * (total - s.alpha[i]);
            assert!((d.alpha[i] - expected).norm() < 1e-14);
            assert_eq!(d.beta[i], c(0.0, 0.0));
            assert_eq!(d.w[i], 0.0);
        }
    }

    #[test]
    fn inversion_rate_is_real() {
        let spec = NetworkSpec::new(3, 1.0, Connectivity::AllToAll);
        let hop = Hopping::from_network(&spec, 1.0).unwrap();
        let s = SemiclassicalStateJC {
            alpha: vec![c(1.0, 2.0), c(-0.5, 0.1), c(0.0, 0.3)],
            beta: vec![c(0.2, -0.1), c(0.1, 0.4), c(-0.3, 0.0)],
            w: vec![-0.5, 0.2, 0.9],
        };
        let p = JcParams { omega_q: 1.0, g: 0.7 };
        let y = s.pack();
        let mut dy = vec![c(0.0, 0.0); 9];
        jc_rhs_packed(&hop, p, &y, &mut dy);
        for i in 0..3 {
            let z = s.alpha[i].conj() * s.beta[i];
            let literal = I * 2.0 * p.g * (z - z.conj());
            assert!(literal.im.abs() < 1e-15);
            assert!((dy[6 + i].re - literal.re).abs() < 1e-14);
            assert_eq!(dy[6 + i].im, 0.0);
        }
    }

    #[test]
    fn dimer_follows_cosine() {
        let spec = NetworkSpec::new(2, 1.0, Connectivity::AllToAll);
        let cfg = IntegratorConfig { t_max: 20.0, ..Default::default() };
        let traj = simulate(&spec, &UnitModel::Harmonic { omega_c: 1.0 }, 10, &cfg).unwrap();
        for (t, p) in traj.times.iter().zip(&traj.imbalance) {
            assert!((p - 10.0 * (2.0 * t).cos()).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn bh_dimer_conserves_norm() {
        let spec = NetworkSpec::new(2, 1.0, Connectivity::AllToAll);
        let cfg = IntegratorConfig::default();
        let traj = simulate(&spec, &UnitModel::bh(1.0, 1.0), 10, &cfg).unwrap();
        assert!(traj.drift("norm").unwrap().max_abs < 1e-8);
        assert!((traj.times.last().unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn zero_interaction_matches_harmonic() {
        for conn in [Connectivity::AllToAll, Connectivity::FiniteRange { d: 1 }] {
            let spec = NetworkSpec::new(5, 1.0, conn);
            let hp = HarmonicParams::new(5, conn, 1.0, 4).unwrap();
            let cfg = IntegratorConfig { t_max: 20.0, ..Default::default() };
            for model in [UnitModel::bh(1.0, 0.0), UnitModel::jc(1.0, 0.0)] {
                let traj = simulate(&spec, &model, 4, &cfg).unwrap();
                for (t, p) in traj.times.iter().zip(&traj.imbalance) {
                    assert!((p - imbalance(&hp, *t).unwrap()).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn jc_charge_conserved_and_on_bloch_sphere() {
        let spec = NetworkSpec::new(4, 1.0, Connectivity::AllToAll);
        let cfg = IntegratorConfig { t_max: 20.0, ..Default::default() };
        let traj = simulate(&spec, &UnitModel::jc(1.0, 3.0), 10, &cfg).unwrap();
        assert!(traj.drift("charge").unwrap().max_rel() < 1e-6);
        let bloch = traj.metadata["bloch_violation"].as_f64().unwrap();
        assert!(bloch < 1e-6, "{bloch}");
    }

    #[test]
    fn step_refinement_tightens_drift() {
        let spec = NetworkSpec::new(3, 1.0, Connectivity::AllToAll);
        let model = UnitModel::bh(1.0, 2.0);
        let coarse = IntegratorConfig { dt: 4e-3, sample_every: 5, t_max: 20.0, ..Default::default() };
        let fine = IntegratorConfig { dt: 2e-3, sample_every: 10, t_max: 20.0, ..Default::default() };
        let a = simulate(&spec, &model, 10, &coarse).unwrap().drift("norm").unwrap().max_abs;
        let b = simulate(&spec, &model, 10, &fine).unwrap().drift("norm").unwrap().max_abs;
        assert!(b < a, "{b} !< {a}");
    }

    #[test]
    fn adaptive_agrees_with_fixed_step() {
        let spec = NetworkSpec::new(4, 1.0, Connectivity::AllToAll);
        let model = UnitModel::bh(1.0, 1.5);
        let fixed = IntegratorConfig { t_max: 10.0, ..Default::default() };
        let adaptive = IntegratorConfig { method: Method::Rk45, ..fixed };
        let a = simulate(&spec, &model, 10, &fixed).unwrap();
        let b = simulate(&spec, &model, 10, &adaptive).unwrap();
        for (pa, pb) in a.imbalance.iter().zip(&b.imbalance) {
            assert!((pa - pb).abs() < 1e-6);
        }
    }
}
