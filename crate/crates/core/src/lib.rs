//! Localization and self-trapping of bosons in networks of coupled cavities.
//!
//! A network of `N` units on a ring, coupled with hopping `J` either to `D`
//! neighbours on each side or all-to-all, is loaded with `Np` bosons on unit 0
//! and left to evolve. The crate provides
//!
//! * closed-form harmonic results and a correlation-matrix cross-check ([`harmonic`]),
//! * mean-field Jaynes-Cummings and Bose-Hubbard dynamics ([`semiclassical`]),
//! * exact evolution on a truncated many-body basis ([`quantum`]),
//! * local Lindblad dynamics with cavity loss and qubit decay/dephasing ([`lindblad`]),
//! * localization diagnostics ([`diagnostics`]) and parameter sweeps ([`sweep`]).

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harmonic;
pub mod io;
pub mod lindblad;
pub mod model;
pub mod network;
pub mod oracle;
pub mod quantum;
pub mod runner;
pub mod semiclassical;
pub mod sweep;

pub use error::{Error, Result};
