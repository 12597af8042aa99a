//! Local unit Hamiltonians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Harmonic,
    #[serde(rename = "jc")]
    JaynesCummings,
    #[serde(rename = "bh")]
    BoseHubbard,
}

impl ModelKind {
    pub fn has_qubit(self) -> bool {
        matches!(self, ModelKind::JaynesCummings)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Harmonic => "harmonic",
            ModelKind::JaynesCummings => "jc",
            ModelKind::BoseHubbard => "bh",
        }
    }
}

/// Hamiltonian of a single unit.
///
/// * `Harmonic`: `omega_c a^dagger a`
/// * `JaynesCummings`: `omega_c a^dagger a + omega_q sigma^+ sigma^- + g (a sigma^+ + a^dagger sigma^-)`
/// * `BoseHubbard`: `omega_c a^dagger a - (U/2) n^2` (attractive for `U > 0`)
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UnitModel {
    Harmonic { omega_c: f64 },
    #[serde(rename = "jc")]
    JaynesCummings { omega_c: f64, omega_q: f64, g: f64 },
    #[serde(rename = "bh")]
    BoseHubbard {
        omega_c: f64,
        #[serde(rename = "U")]
        u: f64,
    },
}

impl UnitModel {
    /// Resonant JC unit (`omega_q = omega_c`).
    pub fn jc(omega_c: f64, g: f64) -> Self {
        UnitModel::JaynesCummings { omega_c, omega_q: omega_c, g }
    }

    pub fn bh(omega_c: f64, u: f64) -> Self {
        UnitModel::BoseHubbard { omega_c, u }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            UnitModel::Harmonic { .. } => ModelKind::Harmonic,
            UnitModel::JaynesCummings { .. } => ModelKind::JaynesCummings,
            UnitModel::BoseHubbard { .. } => ModelKind::BoseHubbard,
        }
    }

    pub fn omega_c(&self) -> f64 {
        match *self {
            UnitModel::Harmonic { omega_c }
            | UnitModel::JaynesCummings { omega_c, .. }
            | UnitModel::BoseHubbard { omega_c, .. } => omega_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |field: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be finite"))
            }
        };
        match *self {
            UnitModel::Harmonic { omega_c } => finite("omega_c", omega_c),
            UnitModel::JaynesCummings { omega_c, omega_q, g } => {
                finite("omega_c", omega_c)?;
                finite("omega_q", omega_q)?;
                finite("g", g)?;
                if g < 0.0 {
                    return Err(Error::invalid("g", "coupling must be >= 0"));
                }
                Ok(())
            }
            UnitModel::BoseHubbard { omega_c, u } => {
                finite("omega_c", omega_c)?;
                finite("U", u)?;
                if u < 0.0 {
                    return Err(Error::invalid("U", "attractive convention requires U >= 0"));
                }
                Ok(())
            }
        }
    }
}
