//! Imbalance-derived localization metrics.
//!
//! The test unit is site 0. With `n_i(t)` the boson number on unit `i`, the
//! imbalance is `P(t) = 2 n_0(t) - sum_j n_j(t)` and the degree of
//! localization over an observation window is `eta = (Np + P_min) / (2 Np)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default floor on the total occupation below which `Z(t)` is undefined.
pub const Z_FLOOR: f64 = 1e-6;

/// Running record of how far a conserved quantity strayed from its initial value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub name: String,
    pub initial: f64,
    pub max_abs: f64,
}

impl Drift {
    pub fn new(name: impl Into<String>, initial: f64) -> Self {
        Drift { name: name.into(), initial, max_abs: 0.0 }
    }

    pub fn update(&mut self, value: f64) {
        let d = (value - self.initial).abs();
        if d > self.max_abs || d.is_nan() {
            self.max_abs = d;
        }
    }

    pub fn max_rel(&self) -> f64 {
        if self.initial == 0.0 {
            self.max_abs
        } else {
            self.max_abs / self.initial.abs()
        }
    }
}

/// Sampled evolution of site occupations and the derived imbalance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n_sites: usize,
    pub times: Vec<f64>,
    /// One row of `N` occupations per sample.
    pub occupations: Vec<Vec<f64>>,
    pub imbalance: Vec<f64>,
    /// `Z(t) = P(t) / sum_j n_j(t)`; `None` once the total falls below the floor.
    pub z: Option<Vec<Option<f64>>>,
    /// Qubit inversions `<sigma^z_i>` for JC engines.
    pub sigma_z: Option<Vec<Vec<f64>>>,
    pub drift: Vec<Drift>,
    pub metadata: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    z_floor: f64,
    #[serde(skip)]
    z_lost: bool,
}

impl Trajectory {
    pub fn new(n_sites: usize) -> Self {
        Trajectory { n_sites, z_floor: Z_FLOOR, ..Default::default() }
    }

    pub fn with_sigma_z(mut self) -> Self {
        self.sigma_z = Some(Vec::new());
        self
    }

    pub fn with_z(mut self, floor: f64) -> Self {
        self.z = Some(Vec::new());
        self.z_floor = floor;
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append a sample; the imbalance (and `Z`, when tracked) is derived here.
    pub fn push(&mut self, t: f64, n: Vec<f64>, sigma_z: Option<Vec<f64>>) {
        debug_assert_eq!(n.len(), self.n_sites);
        let total: f64 = n.iter().sum();
        let p = 2.0 * n[0] - total;
        if let Some(z) = self.z.as_mut() {
            if total < self.z_floor {
                self.z_lost = true;
            }
            z.push(if self.z_lost { None } else { Some(p / total) });
        }
        if let (Some(rows), Some(sz)) = (self.sigma_z.as_mut(), sigma_z) {
            rows.push(sz);
        }
        self.times.push(t);
        self.occupations.push(n);
        self.imbalance.push(p);
    }

    pub fn total_occupation(&self, sample: usize) -> f64 {
        self.occupations[sample].iter().sum()
    }

    pub fn set_meta(&mut self, key: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.metadata.insert(key.to_string(), v);
        }
    }

    pub fn drift(&self, name: &str) -> Option<&Drift> {
        self.drift.iter().find(|d| d.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub eta: f64,
    #[serde(rename = "P_min")]
    pub p_min: f64,
    pub t_at_min: f64,
    /// End of the observation window the minimum was taken over.
    pub t_max: f64,
    #[serde(rename = "Np")]
    pub np: u32,
    pub samples: usize,
}

/// Degree of localization from the grid minimum of `P(t)`.
pub fn eta_from_trajectory(traj: &Trajectory, np: u32) -> Result<LocalizationSummary> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if np == 0 {
        return Err(Error::invalid("Np", "must be >= 1"));
    }
    let (idx, p_min) = traj
        .imbalance
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bp), (i, p)| if p < bp { (i, p) } else { (bi, bp) });
    let npf = f64::from(np);
    let eta = ((npf + p_min) / (2.0 * npf)).clamp(0.0, 1.0);
    Ok(LocalizationSummary {
        eta,
        p_min,
        t_at_min: traj.times[idx],
        t_max: *traj.times.last().unwrap(),
        np,
        samples: traj.len(),
    })
}

/// Mean imbalance over the last `fraction` of the sampled window.
pub fn late_time_mean_imbalance(traj: &Trajectory, fraction: f64) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let t_end = *traj.times.last().unwrap();
    let t_start = t_end * (1.0 - fraction.clamp(0.0, 1.0));
    let tail: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.imbalance)
        .filter(|(t, _)| **t >= t_start)
        .map(|(_, p)| *p)
        .collect();
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Unit count at which `eta(N)` turns from decreasing to increasing.
///
/// The series must be ordered by `N`. `N*` is the discrete argmin (ties go to
/// the smaller `N`); a minimum on either end of the series means there is no
/// reversal and `None` is returned.
pub fn detect_n_star(series: &[(usize, f64)]) -> Option<usize> {
    if series.len() < 3 {
        return None;
    }
    let mut best = 0;
    for (i, &(_, eta)) in series.iter().enumerate() {
        if eta < series[best].1 {
            best = i;
        }
    }
    if best == 0 || best == series.len() - 1 {
        None
    } else {
        Some(series[best].0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj_from(ps: &[(f64, f64, f64)]) -> Trajectory {
        let mut t = Trajectory::new(2);
        for &(time, n0, n1) in ps {
            t.push(time, vec![n0, n1], None);
        }
        t
    }

    #[test]
    fn constant_full_imbalance_is_localized() {
        let traj = traj_from(&[(0.0, 10.0, 0.0), (1.0, 10.0, 0.0), (2.0, 10.0, 0.0)]);
        let s = eta_from_trajectory(&traj, 10).unwrap();
        assert_eq!(s.eta, 1.0);
        assert_eq!(s.p_min, 10.0);
    }

    #[test]
    fn dimer_swing_is_delocalized() {
        let traj = traj_from(&[(0.0, 10.0, 0.0), (1.0, 5.0, 5.0), (2.0, 0.0, 10.0)]);
        let s = eta_from_trajectory(&traj, 10).unwrap();
        assert_eq!(s.eta, 0.0);
        assert_eq!(s.t_at_min, 2.0);
    }

    #[test]
    fn empty_trajectory_rejected() {
        assert!(matches!(eta_from_trajectory(&Trajectory::new(2), 10), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn imbalance_identity_holds() {
        let traj = traj_from(&[(0.0, 3.0, 1.5)]);
        assert_eq!(traj.imbalance[0], 2.0 * 3.0 - 4.5);
    }

    #[test]
    fn z_goes_missing_below_floor() {
        let mut t = Trajectory::new(2).with_z(1e-3);
        t.push(0.0, vec![1.0, 0.0], None);
        t.push(1.0, vec![1e-4, 0.0], None);
        t.push(2.0, vec![0.5, 0.0], None);
        let z = t.z.as_ref().unwrap();
        assert_eq!(z[0], Some(1.0));
        assert_eq!(z[1], None);
        assert_eq!(z[2], None);
    }

    #[test]
    fn n_star_absent_for_monotone() {
        let series: Vec<(usize, f64)> =
            (2..=10).map(|n| (n, 1.0 - 4.0 / n as f64 + 4.0 / (n * n) as f64)).collect();
        assert_eq!(detect_n_star(&series), None);
        let falling: Vec<(usize, f64)> = (2..=10).map(|n| (n, 1.0 / n as f64)).collect();
        assert_eq!(detect_n_star(&falling), None);
    }

    #[test]
    fn n_star_at_interior_minimum() {
        let series = vec![(2, 0.9), (3, 0.5), (4, 0.3), (5, 0.3), (6, 0.6)];
        assert_eq!(detect_n_star(&series), Some(4));
    }

    #[test]
    fn late_mean_uses_tail() {
        let traj = traj_from(&[(0.0, 10.0, 0.0), (1.0, 10.0, 0.0), (2.0, 5.0, 5.0), (3.0, 5.0, 5.0)]);
        assert_eq!(late_time_mean_imbalance(&traj, 0.5).unwrap(), 0.0);
    }
}
