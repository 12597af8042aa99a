//! Explicit Runge-Kutta integrators for complex state vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classic fixed-step fourth-order scheme; bitwise reproducible.
    Rk4,
    /// Dormand-Prince 5(4) with error control.
    Rk45,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for `Rk4`, initial step for `Rk45`.
    pub dt: f64,
    pub t_max: f64,
    /// Samples are taken every `sample_every * dt`.
    pub sample_every: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { method: Method::Rk4, dt: 1e-3, t_max: 50.0, sample_every: 10, rtol: 1e-9, atol: 1e-12 }
    }
}

impl IntegratorConfig {
    /// Fixed-step configuration producing `samples` intervals over `[0, t_max]`
    /// with a step no larger than `max_dt`.
    pub fn sampled(t_max: f64, samples: usize, max_dt: f64) -> Self {
        let interval = t_max / samples.max(1) as f64;
        let sample_every = (interval / max_dt).ceil().max(1.0) as usize;
        IntegratorConfig { dt: interval / sample_every as f64, t_max, sample_every, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", "step must be positive"));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::invalid("t_max", "window must be positive"));
        }
        if self.sample_every == 0 {
            return Err(Error::invalid("sample_every", "must be >= 1"));
        }
        if self.method == Method::Rk45 && !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::invalid("rtol", "adaptive tolerances must be positive"));
        }
        Ok(())
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_every as f64
    }

    /// Number of sampling intervals in the window.
    pub fn n_intervals(&self) -> usize {
        (self.t_max / self.sample_interval() + 1e-9).floor() as usize
    }

    /// Sample times `k * interval`, `k = 0..=n_intervals`.
    pub fn sample_times(&self) -> Vec<f64> {
        let h = self.sample_interval();
        (0..=self.n_intervals()).map(|k| k as f64 * h).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
}

fn check_finite(t: f64, y: &[Complex64]) -> Result<()> {
    if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration { t, reason: "state became non-finite".into() })
    }
}

/// Integrate `y' = rhs(t, y)` from `y0`, calling `observe` at every sample time
/// (including `t = 0`).
pub fn integrate<F, O>(rhs: F, y0: &[Complex64], cfg: &IntegratorConfig, observe: O) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &[Complex64]) -> Result<()>,
{
    cfg.validate()?;
    check_finite(0.0, y0)?;
    match cfg.method {
        Method::Rk4 => rk4(rhs, y0, cfg, observe),
        Method::Rk45 => dopri5(rhs, y0, cfg, observe),
    }
}

/// One classic RK4 step of size `h` in place, using caller-owned scratch.
pub struct Rk4Stepper {
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    tmp: Vec<Complex64>,
}

impl Rk4Stepper {
    pub fn new(dim: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Rk4Stepper { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    pub fn step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &mut [Complex64])
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
    {
        let half = 0.5 * h;
        rhs(t, y, &mut self.k1);
        for ((tmp, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = yi + k * half;
        }
        rhs(t + half, &self.tmp, &mut self.k2);
        for ((tmp, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = yi + k * half;
        }
        rhs(t + half, &self.tmp, &mut self.k3);
        for ((tmp, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = yi + k * h;
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        let w = h / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
    }
}

fn rk4<F, O>(mut rhs: F, y0: &[Complex64], cfg: &IntegratorConfig, mut observe: O) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &[Complex64]) -> Result<()>,
{
    let mut y = y0.to_vec();
    let mut stepper = Rk4Stepper::new(y.len());
    let mut stats = IntegrationStats::default();
    observe(0.0, &y)?;
    let mut step = 0usize;
    let interval = cfg.sample_interval();
    for k in 1..=cfg.n_intervals() {
        for _ in 0..cfg.sample_every {
            // time from the step counter, not by accumulation
            let t = step as f64 * cfg.dt;
            stepper.step(&mut rhs, t, cfg.dt, &mut y);
            step += 1;
        }
        stats.accepted_steps += cfg.sample_every;
        // same expression as `sample_times`, so grids compare exactly
        let t = k as f64 * interval;
        check_finite(t, &y)?;
        observe(t, &y)?;
    }
    stats.rhs_evaluations = 4 * stats.accepted_steps;
    Ok(stats)
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn dopri5<F, O>(mut rhs: F, y0: &[Complex64], cfg: &IntegratorConfig, mut observe: O) -> Result<IntegrationStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &[Complex64]) -> Result<()>,
{
    let dim = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut y = y0.to_vec();
    let mut y_new = vec![zero; dim];
    let mut tmp = vec![zero; dim];
    let mut k: Vec<Vec<Complex64>> = vec![vec![zero; dim]; 7];
    let mut stats = IntegrationStats::default();

    observe(0.0, &y)?;
    let mut t = 0.0;
    let mut h = cfg.dt;
    rhs(t, &y, &mut k[0]);
    stats.rhs_evaluations += 1;
    let interval = cfg.sample_interval();

    for sample in 1..=cfg.n_intervals() {
        let target = sample as f64 * interval;
        while t < target {
            let last = target - t <= h * (1.0 + 1e-12);
            let step = if last { target - t } else { h };
            if step < 1e-14 * target.max(1.0) {
                return Err(Error::Integration { t, reason: format!("step size underflow (h = {step:e})") });
            }
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        if A[s][j] != 0.0 {
                            acc += kj[i] * (A[s][j] * step);
                        }
                    }
                    tmp[i] = acc;
                }
                rhs(t + C[s] * step, &tmp, &mut k[s]);
                stats.rhs_evaluations += 1;
            }
            // stage 7 is evaluated at the fifth-order solution
            y_new.copy_from_slice(&tmp);
            let mut err_sq = 0.0;
            for i in 0..dim {
                let mut e = zero;
                for (s, ks) in k.iter().enumerate() {
                    if E[s] != 0.0 {
                        e += ks[i] * E[s];
                    }
                }
                let scale = cfg.atol + cfg.rtol * y[i].norm().max(y_new[i].norm());
                err_sq += (e.norm() * step / scale).powi(2);
            }
            let err = (err_sq / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration { t, reason: "non-finite error estimate".into() });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                stats.accepted_steps += 1;
                if !last {
                    h = step * factor;
                }
            } else {
                stats.rejected_steps += 1;
                h = step * factor.min(1.0);
            }
        }
        check_finite(t, &y)?;
        observe(t, &y)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(omega: f64) -> impl FnMut(f64, &[Complex64], &mut [Complex64]) {
        move |_, y, dy| {
            dy[0] = Complex64::new(0.0, -omega) * y[0];
        }
    }

    fn final_error(cfg: &IntegratorConfig, omega: f64) -> f64 {
        let mut last = (0.0, Complex64::new(0.0, 0.0));
        integrate(oscillator(omega), &[Complex64::new(1.0, 0.0)], cfg, |t, y| {
            last = (t, y[0]);
            Ok(())
        })
        .unwrap();
        (last.1 - Complex64::from_polar(1.0, -omega * last.0)).norm()
    }

    #[test]
    fn rk4_is_fourth_order() {
        let mut cfg = IntegratorConfig { dt: 0.02, t_max: 10.0, sample_every: 50, ..Default::default() };
        let e1 = final_error(&cfg, 2.0);
        cfg.dt = 0.01;
        cfg.sample_every = 100;
        let e2 = final_error(&cfg, 2.0);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn rk45_meets_tolerance() {
        let cfg = IntegratorConfig {
            method: Method::Rk45,
            dt: 0.1,
            t_max: 20.0,
            sample_every: 1,
            rtol: 1e-10,
            atol: 1e-12,
        };
        assert!(final_error(&cfg, 3.0) < 1e-7);
    }

    #[test]
    fn samples_on_grid() {
        let cfg = IntegratorConfig { dt: 0.01, t_max: 1.0, sample_every: 10, ..Default::default() };
        let mut times = Vec::new();
        integrate(oscillator(1.0), &[Complex64::new(1.0, 0.0)], &cfg, |t, _| {
            times.push(t);
            Ok(())
        })
        .unwrap();
        assert_eq!(times.len(), 11);
        assert_eq!(times, cfg.sample_times());
        let cfg45 = IntegratorConfig { method: Method::Rk45, ..cfg };
        let mut times45 = Vec::new();
        integrate(oscillator(1.0), &[Complex64::new(1.0, 0.0)], &cfg45, |t, _| {
            times45.push(t);
            Ok(())
        })
        .unwrap();
        for (a, b) in times45.iter().zip(&times) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let cfg = IntegratorConfig { dt: 0.1, t_max: 100.0, sample_every: 1, ..Default::default() };
        let err = integrate(
            |_, y: &[Complex64], dy: &mut [Complex64]| dy[0] = y[0] * y[0] * y[0],
            &[Complex64::new(10.0, 0.0)],
            &cfg,
            |_, _| Ok(()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
    }

    #[test]
    fn sampled_config_hits_requested_grid() {
        let cfg = IntegratorConfig::sampled(50.0, 5000, 1e-3);
        assert_eq!(cfg.sample_every, 10);
        assert_eq!(cfg.n_intervals(), 5000);
        assert!((cfg.dt - 1e-3).abs() < 1e-15);
    }
}
