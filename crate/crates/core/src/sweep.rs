//! Parameter sweeps and disorder ensembles.
//!
//! A plan is a base configuration plus one or two axes. Every grid point and
//! ensemble member becomes an independent run with its own seed, derived from
//! the base seed, the axis indices and the replicate index, so results do not
//! depend on execution order or thread count. Failed points are recorded and
//! the sweep carries on.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Engine, RawConfig, RunConfig};
use crate::error::{Error, Result};
use crate::lindblad::OpenSystemRates;
use crate::network::DisorderSpec;
use crate::runner;

/// Sweepable parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "Np")]
    Np,
    #[serde(rename = "D")]
    D,
    #[serde(rename = "J")]
    J,
    #[serde(rename = "g")]
    G,
    #[serde(rename = "U")]
    U,
    #[serde(rename = "omega_c")]
    OmegaC,
    #[serde(rename = "kappa")]
    Kappa,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "gamma_phi")]
    GammaPhi,
    #[serde(rename = "delta_omega")]
    DeltaOmega,
    #[serde(rename = "delta_J")]
    DeltaJ,
    #[serde(rename = "t_max")]
    TMax,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::N => "N",
            Param::Np => "Np",
            Param::D => "D",
            Param::J => "J",
            Param::G => "g",
            Param::U => "U",
            Param::OmegaC => "omega_c",
            Param::Kappa => "kappa",
            Param::Gamma => "gamma",
            Param::GammaPhi => "gamma_phi",
            Param::DeltaOmega => "delta_omega",
            Param::DeltaJ => "delta_J",
            Param::TMax => "t_max",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Param::N | Param::Np | Param::D)
    }

    /// Write `value` into a raw configuration.
    pub fn apply(self, raw: &mut RawConfig, value: f64) -> Result<()> {
        let count = || -> Result<u64> {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u64)
            } else {
                Err(Error::invalid(self.name(), format!("needs a non-negative integer, got {value}")))
            }
        };
        match self {
            Param::N => raw.n = Some(count()? as usize),
            Param::Np => raw.np = Some(count()? as u32),
            Param::D => {
                raw.d = Some(count()? as usize);
                raw.connectivity = None;
            }
            Param::J => raw.j = Some(value),
            Param::G => raw.g = Some(value),
            Param::U => raw.u = Some(value),
            Param::OmegaC => raw.omega_c = Some(value),
            Param::Kappa => raw.rates.get_or_insert_with(OpenSystemRates::default).kappa = value,
            Param::Gamma => raw.rates.get_or_insert_with(OpenSystemRates::default).gamma = value,
            Param::GammaPhi => raw.rates.get_or_insert_with(OpenSystemRates::default).gamma_phi = value,
            Param::DeltaOmega => raw.disorder.get_or_insert_with(DisorderSpec::default).delta_omega = value,
            Param::DeltaJ => raw.disorder.get_or_insert_with(DisorderSpec::default).delta_j = value,
            Param::TMax => raw.t_max = Some(value),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(param: Param, values: impl IntoIterator<Item = f64>) -> Self {
        Axis { param, values: values.into_iter().collect() }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Overrides the engine of `base` when given.
    #[serde(default)]
    pub engine: Option<Engine>,
    pub base: RawConfig,
    pub axes: Vec<Axis>,
    /// Disorder ensemble size per grid point.
    #[serde(default = "one")]
    pub replicates: usize,
    /// Base seed; defaults to the seed of `base`, then 0.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one run: a hash of the base seed, the axis indices and the replicate.
pub fn point_seed(base: u64, index: &[usize], replicate: usize) -> u64 {
    let mut h = mix(base);
    for &i in index {
        h = mix(h ^ i as u64);
    }
    mix(h ^ (replicate as u64).wrapping_mul(0x2545_f491_4f6c_dd1d))
}

impl SweepPlan {
    pub fn new(base: RawConfig, axes: Vec<Axis>) -> Self {
        SweepPlan { engine: None, base, axes, replicates: 1, seed: None }
    }

    pub fn with_replicates(mut self, r: usize) -> Self {
        self.replicates = r;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.or(self.base.seed).unwrap_or(0)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    pub fn n_points(&self) -> usize {
        self.shape().iter().product()
    }

    /// Axis indices of the `k`-th point in row-major order.
    pub fn unravel(&self, mut k: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for (i, &s) in shape.iter().enumerate().rev() {
            idx[i] = k % s;
            k /= s;
        }
        idx
    }

    /// Configuration of one run.
    pub fn point_config(&self, index: &[usize], replicate: usize) -> Result<RunConfig> {
        let mut raw = self.base.clone();
        if let Some(e) = self.engine {
            raw.engine = Some(e);
        }
        for (axis, &i) in self.axes.iter().zip(index) {
            axis.param.apply(&mut raw, axis.values[i])?;
        }
        raw.seed = Some(point_seed(self.base_seed(), index, replicate));
        raw.resolve()
    }

    /// Checks the grid and that every point resolves to a valid run.
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::invalid("axes", "a sweep has one or two axes"));
        }
        if self.axes.len() == 2 && self.axes[0].param == self.axes[1].param {
            return Err(Error::invalid("axes", "the two axes must differ"));
        }
        for a in &self.axes {
            if a.values.is_empty() {
                return Err(Error::invalid(a.param.name(), "grid is empty"));
            }
            if a.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(a.param.name(), "grid values must be finite"));
            }
            if a.param.is_integer() && a.values.iter().any(|v| v.fract() != 0.0) {
                return Err(Error::invalid(a.param.name(), "grid values must be integers"));
            }
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates", "must be >= 1"));
        }
        for k in 0..self.n_points() {
            self.point_config(&self.unravel(k), 0)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub replicate: usize,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Number of successful replicates aggregated.
    pub count: usize,
}

impl EtaStats {
    fn from_values(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        Some(EtaStats {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: v.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub index: Vec<usize>,
    pub coords: Vec<f64>,
    pub eta: Option<EtaStats>,
    /// Per-replicate values, `None` where the run failed.
    pub values: Vec<Option<f64>>,
    pub seeds: Vec<u64>,
    pub failures: Vec<PointFailure>,
    /// Summed over replicates, seconds.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub shape: Vec<usize>,
    /// Row-major over the axes.
    pub points: Vec<PointResult>,
    pub wall_time: f64,
}

impl SweepResult {
    pub fn point(&self, index: &[usize]) -> &PointResult {
        let k = index.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i);
        &self.points[k]
    }

    /// Mean `eta` at every point, `None` where all replicates failed.
    pub fn mean_eta(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.eta.map(|e| e.mean)).collect()
    }

    pub fn n_failures(&self) -> usize {
        self.points.iter().map(|p| p.failures.len()).sum()
    }
}

/// Run every point on the current rayon pool, measuring `eta`.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    run_sweep_with(plan, |cfg| Ok(runner::run(cfg)?.summary.eta))
}

/// Like [`run_sweep`] on a dedicated pool of `threads` workers.
pub fn run_sweep_on(plan: &SweepPlan, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("threads", e.to_string()))?;
    pool.install(|| run_sweep(plan))
}

/// Sweep with a custom per-run measurement.
pub fn run_sweep_with<F>(plan: &SweepPlan, measure: F) -> Result<SweepResult>
where
    F: Fn(&RunConfig) -> Result<f64> + Sync,
{
    plan.validate()?;
    let start = Instant::now();
    let r = plan.replicates;
    let jobs: Vec<(usize, usize)> = (0..plan.n_points()).flat_map(|k| (0..r).map(move |rep| (k, rep))).collect();
    let outcomes: Vec<(u64, Result<f64>, f64)> = jobs
        .par_iter()
        .map(|&(k, rep)| {
            let index = plan.unravel(k);
            let seed = point_seed(plan.base_seed(), &index, rep);
            let t0 = Instant::now();
            let value = plan.point_config(&index, rep).and_then(|cfg| measure(&cfg));
            (seed, value, t0.elapsed().as_secs_f64())
        })
        .collect();

    let mut points = Vec::with_capacity(plan.n_points());
    for (k, chunk) in outcomes.chunks(r).enumerate() {
        let index = plan.unravel(k);
        let coords = plan.axes.iter().zip(&index).map(|(a, &i)| a.values[i]).collect();
        let mut values = Vec::with_capacity(r);
        let mut failures = Vec::new();
        for (rep, (seed, value, _)) in chunk.iter().enumerate() {
            match value {
                Ok(v) => values.push(Some(*v)),
                Err(e) => {
                    log::warn!("sweep point {index:?} replicate {rep} failed: {e}");
                    failures.push(PointFailure { replicate: rep, seed: *seed, kind: e.kind().into(), message: e.to_string() });
                    values.push(None);
                }
            }
        }
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        points.push(PointResult {
            index,
            coords,
            eta: EtaStats::from_values(&ok),
            values,
            seeds: chunk.iter().map(|c| c.0).collect(),
            failures,
            wall_time: chunk.iter().map(|c| c.2).sum(),
        });
    }
    Ok(SweepResult { plan: plan.clone(), shape: plan.shape(), points, wall_time: start.elapsed().as_secs_f64() })
}

/// `eta(D)` curves of the semiclassical BH network, one per `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityScan {
    pub u_values: Vec<f64>,
    pub d_values: Vec<usize>,
    /// `eta[u][d]`, `None` where the run failed.
    pub eta: Vec<Vec<Option<f64>>>,
}

/// Semiclassical BH scan over interaction strengths and neighbour counts.
/// `base` supplies window and sampling; `N` and `Np` are set here.
pub fn connectivity_scan_bh(n: usize, np: u32, u_values: &[f64], d_values: &[usize], base: RawConfig) -> Result<ConnectivityScan> {
    let mut raw = base;
    raw.engine = Some(Engine::SemiclassicalBh);
    raw.n = Some(n);
    raw.np = Some(np);
    let plan = SweepPlan::new(
        raw,
        vec![Axis::new(Param::U, u_values.iter().copied()), Axis::new(Param::D, d_values.iter().map(|&d| d as f64))],
    );
    let result = run_sweep(&plan)?;
    let means = result.mean_eta();
    Ok(ConnectivityScan {
        u_values: u_values.to_vec(),
        d_values: d_values.to_vec(),
        eta: means.chunks(d_values.len()).map(|c| c.to_vec()).collect(),
    })
}
