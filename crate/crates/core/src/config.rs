//! Run configuration: JSON file plus command-line overrides, resolved into a
//! fully validated [`RunConfig`].
//!
//! Parameters are in units of the hopping rate (`J = 1` unless overridden).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{OpenOptions, OpenStepper, OpenSystemRates};
use crate::model::{ModelKind, UnitModel};
use crate::network::{Connectivity, DisorderSpec, NetworkSpec};
use crate::quantum::{Propagator, PropagatorOptions, QuantumOptions, Restriction, DEFAULT_DIM_CAP};
use crate::semiclassical::ode::{IntegratorConfig, Method};

/// Default observation window for interacting engines.
pub const DEFAULT_T_MAX: f64 = 50.0;
/// Default number of sampling intervals over the window.
pub const DEFAULT_SAMPLES: usize = 5000;
/// Largest fixed step for the semiclassical integrator.
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_OMEGA_C: f64 = 1.0;
pub const DEFAULT_NP: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Closed-form harmonic dynamics (correlation matrix when disordered).
    #[serde(alias = "harmonic-analytic")]
    Harmonic,
    SemiclassicalJc,
    SemiclassicalBh,
    Quantum,
    Lindblad,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Harmonic => "harmonic",
            Engine::SemiclassicalJc => "semiclassical-jc",
            Engine::SemiclassicalBh => "semiclassical-bh",
            Engine::Quantum => "quantum",
            Engine::Lindblad => "lindblad",
        }
    }

    /// Same configuration and seed give byte-identical output.
    pub fn is_fixed_step(self, method: Method) -> bool {
        !matches!(self, Engine::SemiclassicalJc | Engine::SemiclassicalBh) || method == Method::Rk4
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::invalid("engine", format!("unknown engine {s:?}")))
    }
}

/// Configuration file as written by the user; every field optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub engine: Option<Engine>,
    /// Unit model for the quantum and lindblad engines.
    pub model: Option<ModelKind>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    #[serde(rename = "Np")]
    pub np: Option<u32>,
    pub connectivity: Option<Connectivity>,
    /// Shorthand for `{"type": "finite_range", "D": ...}`.
    #[serde(rename = "D")]
    pub d: Option<usize>,
    pub disorder: Option<DisorderSpec>,
    pub seed: Option<u64>,
    pub omega_c: Option<f64>,
    pub omega_q: Option<f64>,
    pub g: Option<f64>,
    #[serde(rename = "U")]
    pub u: Option<f64>,
    pub t_max: Option<f64>,
    pub samples: Option<usize>,
    pub dt: Option<f64>,
    pub method: Option<Method>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub propagator: Option<Propagator>,
    pub krylov_dim: Option<usize>,
    pub krylov_tol: Option<f64>,
    pub restriction: Option<Restriction>,
    pub dim_cap: Option<usize>,
    pub rates: Option<OpenSystemRates>,
    pub z_floor: Option<f64>,
    pub element_cap: Option<usize>,
    pub stepper: Option<OpenStepper>,
}

/// Values given on the command line; they take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub engine: Option<Engine>,
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
    pub samples: Option<usize>,
    pub n: Option<usize>,
    pub np: Option<u32>,
    pub j: Option<f64>,
    pub g: Option<f64>,
    pub u: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_phi: Option<f64>,
    pub d: Option<usize>,
    pub all_to_all: bool,
    pub delta_omega: Option<f64>,
    pub delta_j: Option<f64>,
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => { $(if o.$field.is_some() { self.$field = o.$field; })* };
        }
        set!(engine, seed, t_max, samples, n, np, j, g, u);
        if let Some(d) = o.d {
            self.d = Some(d);
            self.connectivity = None;
        }
        if o.all_to_all {
            self.d = None;
            self.connectivity = Some(Connectivity::AllToAll);
        }
        if o.delta_omega.is_some() || o.delta_j.is_some() {
            let dis = self.disorder.get_or_insert_with(DisorderSpec::default);
            if let Some(v) = o.delta_omega {
                dis.delta_omega = v;
            }
            if let Some(v) = o.delta_j {
                dis.delta_j = v;
            }
        }
        if o.kappa.is_some() || o.gamma.is_some() || o.gamma_phi.is_some() {
            let r = self.rates.get_or_insert_with(OpenSystemRates::default);
            if let Some(v) = o.kappa {
                r.kappa = v;
            }
            if let Some(v) = o.gamma {
                r.gamma = v;
            }
            if let Some(v) = o.gamma_phi {
                r.gamma_phi = v;
            }
        }
    }

    /// Fill defaults and check cross-field consistency.
    pub fn resolve(&self) -> Result<RunConfig> {
        let engine = self.engine.ok_or_else(|| Error::invalid("engine", "missing"))?;
        let n = self.n.ok_or_else(|| Error::invalid("N", "missing"))?;
        let connectivity = match (self.connectivity, self.d) {
            (Some(_), Some(_)) => return Err(Error::invalid("D", "give either D or connectivity, not both")),
            (Some(c), None) => c,
            (None, Some(d)) => Connectivity::FiniteRange { d },
            (None, None) => Connectivity::AllToAll,
        };
        let seed = self.seed.unwrap_or(0);
        let network = NetworkSpec::new(n, self.j.unwrap_or(1.0), connectivity)
            .with_disorder(self.disorder.unwrap_or_default())
            .with_seed(seed);
        network.validate()?;
        let dis = network.disorder;
        for (field, v) in [("delta_omega", dis.delta_omega), ("delta_J", dis.delta_j)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(field, "half-width must be finite and >= 0"));
            }
        }

        let kind = match engine {
            Engine::Harmonic => expect_model(self.model, ModelKind::Harmonic)?,
            Engine::SemiclassicalJc => expect_model(self.model, ModelKind::JaynesCummings)?,
            Engine::SemiclassicalBh => expect_model(self.model, ModelKind::BoseHubbard)?,
            Engine::Quantum | Engine::Lindblad => self.model.unwrap_or(ModelKind::JaynesCummings),
        };
        let omega_c = self.omega_c.unwrap_or(DEFAULT_OMEGA_C);
        let model = match kind {
            ModelKind::Harmonic => {
                reject_unused("g", self.g, kind)?;
                reject_unused("U", self.u, kind)?;
                reject_unused("omega_q", self.omega_q, kind)?;
                UnitModel::Harmonic { omega_c }
            }
            ModelKind::JaynesCummings => {
                reject_unused("U", self.u, kind)?;
                UnitModel::JaynesCummings { omega_c, omega_q: self.omega_q.unwrap_or(omega_c), g: self.g.unwrap_or(1.0) }
            }
            ModelKind::BoseHubbard => {
                reject_unused("g", self.g, kind)?;
                reject_unused("omega_q", self.omega_q, kind)?;
                UnitModel::bh(omega_c, self.u.unwrap_or(1.0))
            }
        };
        model.validate()?;

        let np = self.np.unwrap_or(DEFAULT_NP);
        if np == 0 {
            return Err(Error::invalid("Np", "must be >= 1"));
        }
        let samples = self.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(Error::invalid("samples", "must be >= 1"));
        }
        let t_max = match engine {
            Engine::Harmonic if network.connectivity().is_all_to_all(n) && network.j > 0.0 => {
                // the window must contain the first minimum of the periodic imbalance
                let period = 2.0 * std::f64::consts::PI / (n as f64 * network.j);
                self.t_max.map_or(period, |t| t.max(period))
            }
            _ => self.t_max.unwrap_or(DEFAULT_T_MAX),
        };
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::invalid("t_max", "window must be positive"));
        }

        let mut integrator = IntegratorConfig::sampled(t_max, samples, self.dt.unwrap_or(DEFAULT_DT));
        integrator.method = self.method.unwrap_or(Method::Rk4);
        integrator.rtol = self.rtol.unwrap_or(integrator.rtol);
        integrator.atol = self.atol.unwrap_or(integrator.atol);
        integrator.validate()?;
        let semiclassical = matches!(engine, Engine::SemiclassicalJc | Engine::SemiclassicalBh);
        for (field, given) in [
            ("dt", self.dt.is_some()),
            ("method", self.method.is_some()),
            ("rtol", self.rtol.is_some()),
            ("atol", self.atol.is_some()),
        ] {
            if given && !semiclassical {
                return Err(Error::invalid(field, format!("only used by semiclassical engines, not {}", engine.name())));
            }
        }

        let mut krylov = PropagatorOptions::default();
        krylov.method = self.propagator.unwrap_or(krylov.method);
        krylov.max_dim = self.krylov_dim.unwrap_or(krylov.max_dim);
        krylov.tol = self.krylov_tol.unwrap_or(krylov.tol);
        if krylov.max_dim < 2 {
            return Err(Error::invalid("krylov_dim", "must be >= 2"));
        }
        if !(krylov.tol > 0.0) {
            return Err(Error::invalid("krylov_tol", "must be positive"));
        }
        let quantum = QuantumOptions {
            restriction: self.restriction,
            dim_cap: self.dim_cap.unwrap_or(DEFAULT_DIM_CAP),
            krylov,
        };
        for (field, given) in [
            ("propagator", self.propagator.is_some()),
            ("krylov_dim", self.krylov_dim.is_some()),
            ("krylov_tol", self.krylov_tol.is_some()),
            ("dim_cap", self.dim_cap.is_some()),
        ] {
            if given && engine != Engine::Quantum {
                return Err(Error::invalid(field, "only used by the quantum engine"));
            }
        }
        if let Some(r) = self.restriction {
            if engine != Engine::Quantum {
                return Err(Error::invalid("restriction", "sector evolution is only available for the closed quantum engine"));
            }
            match r {
                Restriction::Sector(m) if m != np => {
                    return Err(Error::invalid("restriction", format!("initial state lies in sector {np}, not {m}")))
                }
                Restriction::AtMost(m) if m < np => {
                    return Err(Error::invalid("restriction", format!("initial state has {np} excitations, more than {m}")))
                }
                _ => {}
            }
        }

        let rates = match (engine, self.rates) {
            (Engine::Lindblad, None) => return Err(Error::invalid("rates", "the lindblad engine needs dissipation rates")),
            (Engine::Lindblad, Some(r)) => {
                r.validate()?;
                Some(r.for_model(&model))
            }
            (_, Some(_)) => return Err(Error::invalid("rates", format!("rates only apply to the lindblad engine, not {}", engine.name()))),
            (_, None) => None,
        };
        let mut open = OpenOptions::default();
        for (field, given) in [
            ("z_floor", self.z_floor.is_some()),
            ("element_cap", self.element_cap.is_some()),
            ("stepper", self.stepper.is_some()),
        ] {
            if given && engine != Engine::Lindblad {
                return Err(Error::invalid(field, "only used by the lindblad engine"));
            }
        }
        open.z_floor = self.z_floor.unwrap_or(open.z_floor);
        open.element_cap = self.element_cap.unwrap_or(open.element_cap);
        open.stepper = self.stepper.unwrap_or(open.stepper);
        if !(open.z_floor >= 0.0) {
            return Err(Error::invalid("z_floor", "must be >= 0"));
        }

        Ok(RunConfig { engine, network, model, np, t_max, samples, integrator, quantum, rates, open, seed })
    }
}

fn expect_model(given: Option<ModelKind>, wanted: ModelKind) -> Result<ModelKind> {
    match given {
        Some(k) if k != wanted => Err(Error::invalid("model", format!("engine requires model {}", wanted.name()))),
        _ => Ok(wanted),
    }
}

fn reject_unused(field: &str, v: Option<f64>, kind: ModelKind) -> Result<()> {
    match v {
        Some(_) => Err(Error::invalid(field, format!("not a parameter of {} units", kind.name()))),
        None => Ok(()),
    }
}

/// Fully resolved run; serialized verbatim into every output artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub engine: Engine,
    pub network: NetworkSpec,
    pub model: UnitModel,
    #[serde(rename = "Np")]
    pub np: u32,
    pub t_max: f64,
    /// Sampling intervals; the trajectory has `samples + 1` points.
    pub samples: usize,
    pub integrator: IntegratorConfig,
    pub quantum: QuantumOptions,
    pub rates: Option<OpenSystemRates>,
    pub open: OpenOptions,
    pub seed: u64,
}

impl RunConfig {
    /// Parse a file (if any), apply overrides and resolve.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut raw = match path {
            Some(p) => RawConfig::from_file(p)?,
            None => RawConfig::default(),
        };
        raw.apply(overrides);
        raw.resolve()
    }

    /// Sample times `k t_max / samples`.
    pub fn times(&self) -> Vec<f64> {
        let s = self.samples as f64;
        (0..=self.samples).map(|k| self.t_max * k as f64 / s).collect()
    }

    /// Same run with a different seed (the disorder realization follows).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.network.seed = seed;
        self
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(json: &str) -> Result<RunConfig> {
        RawConfig::from_json(json)?.resolve()
    }

    #[test]
    fn minimal_harmonic_config() {
        let cfg = resolve(r#"{"engine":"harmonic","N":50,"J":1,"Np":10,"connectivity":{"type":"all_to_all"}}"#).unwrap();
        assert_eq!(cfg.model, UnitModel::Harmonic { omega_c: DEFAULT_OMEGA_C });
        assert_eq!(cfg.samples, DEFAULT_SAMPLES);
        // window is one period of the all-to-all imbalance
        assert!((cfg.t_max - 2.0 * std::f64::consts::PI / 50.0).abs() < 1e-15);
        assert_eq!(cfg.times().len(), DEFAULT_SAMPLES + 1);
    }

    #[test]
    fn harmonic_window_never_shorter_than_a_period() {
        let cfg = resolve(r#"{"engine":"harmonic","N":4,"t_max":0.1}"#).unwrap();
        assert!((cfg.t_max - std::f64::consts::PI / 2.0).abs() < 1e-15);
        let cfg = resolve(r#"{"engine":"harmonic","N":4,"t_max":7}"#).unwrap();
        assert_eq!(cfg.t_max, 7.0);
        let cfg = resolve(r#"{"engine":"harmonic","N":9,"D":1}"#).unwrap();
        assert_eq!(cfg.t_max, DEFAULT_T_MAX);
    }

    #[test]
    fn lindblad_without_rates_names_rates() {
        let err = resolve(r#"{"engine":"lindblad","N":3,"Np":5}"#).unwrap_err();
        assert_eq!(err.field(), Some("rates"));
        let err = resolve(r#"{"engine":"quantum","N":3,"rates":{"kappa":0.1}}"#).unwrap_err();
        assert_eq!(err.field(), Some("rates"));
    }

    #[test]
    fn flags_override_file() {
        let mut raw = RawConfig::from_json(r#"{"engine":"semiclassical-jc","N":5,"g":2}"#).unwrap();
        raw.apply(&Overrides { g: Some(40.0), d: Some(1), ..Default::default() });
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.model, UnitModel::jc(1.0, 40.0));
        assert_eq!(cfg.network.connectivity, Connectivity::FiniteRange { d: 1 });

        let mut raw = RawConfig::from_json(r#"{"engine":"lindblad","N":3,"rates":{"kappa":0.5,"gamma":0.2}}"#).unwrap();
        raw.apply(&Overrides { kappa: Some(0.01), all_to_all: true, ..Default::default() });
        let cfg = raw.resolve().unwrap();
        assert_eq!(cfg.rates, Some(OpenSystemRates::new(0.01, 0.2, 0.0)));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = resolve(r#"{"engine":"harmonic","N":5,"colour":"red"}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn contradictions_name_the_field() {
        let cases = [
            (r#"{"engine":"lindblad","N":3,"rates":{"kappa":0.1},"restriction":{"sector":3}}"#, "restriction"),
            (r#"{"engine":"quantum","N":3,"Np":2,"restriction":{"sector":3}}"#, "restriction"),
            (r#"{"engine":"semiclassical-bh","N":3,"g":1}"#, "g"),
            (r#"{"engine":"semiclassical-jc","N":3,"U":1}"#, "U"),
            (r#"{"engine":"semiclassical-jc","N":3,"model":"bh"}"#, "model"),
            (r#"{"engine":"harmonic","N":5,"D":1,"connectivity":{"type":"all_to_all"}}"#, "D"),
            (r#"{"engine":"quantum","N":3,"dt":0.1}"#, "dt"),
            (r#"{"engine":"harmonic","N":3,"propagator":"lanczos"}"#, "propagator"),
            (r#"{"engine":"quantum","N":3,"stepper":"rk4"}"#, "stepper"),
            (r#"{"engine":"harmonic","N":1}"#, "N"),
            (r#"{"engine":"harmonic","N":3,"Np":0}"#, "Np"),
            (r#"{"engine":"harmonic","N":3,"samples":0}"#, "samples"),
            (r#"{"engine":"harmonic","N":3,"disorder":{"delta_omega":-1}}"#, "delta_omega"),
            (r#"{"engine":"lindblad","N":3,"rates":{"kappa":-1}}"#, "kappa"),
            (r#"{"N":3}"#, "engine"),
        ];
        for (json, field) in cases {
            let err = resolve(json).unwrap_err();
            assert_eq!(err.field(), Some(field), "{json}: {err}");
        }
    }

    #[test]
    fn bh_lindblad_drops_qubit_rates() {
        let cfg = resolve(r#"{"engine":"lindblad","model":"bh","N":2,"rates":{"kappa":0.1,"gamma":0.3}}"#).unwrap();
        assert_eq!(cfg.rates, Some(OpenSystemRates::new(0.1, 0.0, 0.0)));
    }

    #[test]
    fn semiclassical_grid_matches_samples() {
        let cfg = resolve(r#"{"engine":"semiclassical-bh","N":3,"t_max":10,"samples":100,"dt":0.003}"#).unwrap();
        assert_eq!(cfg.integrator.n_intervals(), 100);
        assert!(cfg.integrator.dt <= 0.003);
        assert!((cfg.integrator.sample_interval() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn engine_names_parse() {
        assert_eq!("harmonic-analytic".parse::<Engine>().unwrap(), Engine::Harmonic);
        assert_eq!("semiclassical-bh".parse::<Engine>().unwrap(), Engine::SemiclassicalBh);
        assert_eq!("warp".parse::<Engine>().unwrap_err().field(), Some("engine"));
    }

    #[test]
    fn with_seed_moves_disorder_seed() {
        let cfg = resolve(r#"{"engine":"harmonic","N":3}"#).unwrap().with_seed(77);
        assert_eq!((cfg.seed, cfg.network.seed), (77, 77));
    }
}
