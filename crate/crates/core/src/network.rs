//! Network topology, hopping structure and disorder realizations.
//!
//! Units sit on a ring indexed `0..N`. Finite-range coupling connects every
//! unit to its `D` nearest neighbours on each side; once `D >= ceil(N/2)` that
//! set already covers every other unit and the topology is treated as
//! all-to-all. Every engine consumes the network through the single-particle
//! matrix `h` built here, so connectivity and disorder enter in one place.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Connectivity {
    /// Ring with `D` neighbours on each side.
    FiniteRange {
        #[serde(rename = "D")]
        d: usize,
    },
    AllToAll,
}

impl Connectivity {
    /// Canonical form for a network of `n` units: finite range with
    /// `D >= ceil(n/2)` is all-to-all.
    pub fn canonical(self, n: usize) -> Connectivity {
        match self {
            Connectivity::FiniteRange { d } if d >= n.div_ceil(2) => Connectivity::AllToAll,
            other => other,
        }
    }

    pub fn is_all_to_all(self, n: usize) -> bool {
        matches!(self.canonical(n), Connectivity::AllToAll)
    }
}

/// Half-widths of the uniform disorder distributions.
///
/// `delta_omega` is measured in units of the cavity frequency and `delta_J`
/// in units of the hopping rate, so `delta_omega = 0.01` means cavity
/// frequencies spread over `omega_c * (1 +/- 0.01)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    #[serde(default)]
    pub delta_omega: f64,
    #[serde(default, rename = "delta_J")]
    pub delta_j: f64,
}

impl DisorderSpec {
    pub fn is_clean(&self) -> bool {
        self.delta_omega == 0.0 && self.delta_j == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub connectivity: Connectivity,
    #[serde(default)]
    pub disorder: DisorderSpec,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(n: usize, j: f64, connectivity: Connectivity) -> Self {
        NetworkSpec { n, j, connectivity, disorder: DisorderSpec::default(), seed: 0 }
    }

    pub fn with_disorder(mut self, disorder: DisorderSpec) -> Self {
        self.disorder = disorder;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("N", format!("need at least 2 units, got {}", self.n)));
        }
        if !(self.j >= 0.0) || !self.j.is_finite() {
            return Err(Error::invalid("J", format!("hopping must be finite and >= 0, got {}", self.j)));
        }
        if let Connectivity::FiniteRange { d } = self.connectivity {
            if d == 0 {
                return Err(Error::invalid("D", "finite range needs D >= 1"));
            }
        }
        let dis = &self.disorder;
        if !(dis.delta_omega >= 0.0) || !dis.delta_omega.is_finite() {
            return Err(Error::invalid("delta_omega", "half-width must be finite and >= 0"));
        }
        if !(dis.delta_j >= 0.0) || !dis.delta_j.is_finite() {
            return Err(Error::invalid("delta_J", "half-width must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity.canonical(self.n)
    }

    /// Ring offsets `d` such that unit `i` couples to `i + d mod N`.
    pub fn neighbor_offsets(&self) -> Vec<usize> {
        neighbor_offsets(self)
    }

    /// Connected pairs `(i, j)` with `i < j`, in lexicographic order.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let offsets = self.neighbor_offsets();
        let mut bonds = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if offsets.binary_search(&(j - i)).is_ok() {
                    bonds.push((i, j));
                }
            }
        }
        bonds
    }

    /// Disorder realization drawn from this spec's own seed.
    pub fn realization(&self, omega_c: f64) -> DisorderRealization {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        sample_disorder(self, omega_c, &mut rng)
    }
}

pub fn neighbor_offsets(spec: &NetworkSpec) -> Vec<usize> {
    let n = spec.n;
    match spec.connectivity() {
        Connectivity::AllToAll => (1..n).collect(),
        Connectivity::FiniteRange { d } => {
            let mut offsets: Vec<usize> =
                (1..=d).flat_map(|d| [d % n, (n - d % n) % n]).filter(|&o| o != 0).collect();
            offsets.sort_unstable();
            offsets.dedup();
            offsets
        }
    }
}

/// Onsite and bond shifts for one disorder draw, in absolute energy units.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderRealization {
    pub epsilon_site: Vec<f64>,
    /// Symmetric, zero on the diagonal and on unconnected pairs.
    pub epsilon_bond: DMatrix<f64>,
}

impl DisorderRealization {
    pub fn clean(n: usize) -> Self {
        DisorderRealization { epsilon_site: vec![0.0; n], epsilon_bond: DMatrix::zeros(n, n) }
    }

    pub fn len(&self) -> usize {
        self.epsilon_site.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epsilon_site.is_empty()
    }
}

/// Draw onsite shifts `eps_i ~ U[-delta_omega * omega_c, delta_omega * omega_c]`
/// and bond shifts `eps_ij = eps_ji ~ U[-delta_J * J, delta_J * J]` on existing
/// bonds.
///
/// The number and order of draws never depend on the widths, so switching one
/// kind of disorder off leaves the other kind's values untouched, and zero
/// widths give exact zeros.
pub fn sample_disorder<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    omega_c: f64,
    rng: &mut R,
) -> DisorderRealization {
    let n = spec.n;
    let w_site = spec.disorder.delta_omega * omega_c.abs();
    let w_bond = spec.disorder.delta_j * spec.j;
    let mut uniform = |w: f64| w * (2.0 * rng.random::<f64>() - 1.0);

    let epsilon_site: Vec<f64> = (0..n).map(|_| uniform(w_site)).collect();
    let mut epsilon_bond = DMatrix::zeros(n, n);
    for (i, j) in spec.bonds() {
        let e = uniform(w_bond);
        epsilon_bond[(i, j)] = e;
        epsilon_bond[(j, i)] = e;
    }
    DisorderRealization { epsilon_site, epsilon_bond }
}

/// Real symmetric single-particle matrix: `h_ii = omega_c + eps_i`,
/// `h_ij = -(J + eps_ij)` on bonds.
pub fn single_particle_hamiltonian_real(
    spec: &NetworkSpec,
    omega_c: f64,
    realization: &DisorderRealization,
) -> Result<DMatrix<f64>> {
    let n = spec.n;
    if realization.epsilon_site.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: realization.epsilon_site.len() });
    }
    let shape = realization.epsilon_bond.shape();
    if shape != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, found: shape.0.max(shape.1) });
    }
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = omega_c + realization.epsilon_site[i];
    }
    for (i, j) in spec.bonds() {
        let t = -(spec.j + realization.epsilon_bond[(i, j)]);
        h[(i, j)] = t;
        h[(j, i)] = t;
    }
    Ok(h)
}

pub fn single_particle_hamiltonian(
    spec: &NetworkSpec,
    omega_c: f64,
    realization: &DisorderRealization,
) -> Result<DMatrix<Complex64>> {
    Ok(single_particle_hamiltonian_real(spec, omega_c, realization)?
        .map(|x| Complex64::new(x, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, d: usize) -> NetworkSpec {
        NetworkSpec::new(n, 1.0, Connectivity::FiniteRange { d })
    }

    #[test]
    fn offsets_nearest_neighbour_ring() {
        assert_eq!(ring(5, 1).neighbor_offsets(), vec![1, 4]);
    }

    #[test]
    fn offsets_all_to_all() {
        let spec = NetworkSpec::new(5, 1.0, Connectivity::AllToAll);
        assert_eq!(spec.neighbor_offsets(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn half_ring_range_is_all_to_all() {
        let spec = ring(4, 2);
        assert_eq!(spec.connectivity(), Connectivity::AllToAll);
        assert_eq!(spec.neighbor_offsets(), vec![1, 2, 3]);
        assert_eq!(ring(5, 3).connectivity(), Connectivity::AllToAll);
        // odd N: D = (N-1)/2 already couples every pair but keeps its label
        assert_eq!(ring(5, 2).connectivity(), Connectivity::FiniteRange { d: 2 });
    }

    #[test]
    fn dimer_matrix() {
        let spec = NetworkSpec::new(2, 0.7, Connectivity::AllToAll);
        let h = single_particle_hamiltonian(&spec, 3.0, &DisorderRealization::clean(2)).unwrap();
        assert_eq!(h[(0, 0)].re, 3.0);
        assert_eq!(h[(1, 1)].re, 3.0);
        assert_eq!(h[(0, 1)].re, -0.7);
        assert_eq!(h[(1, 0)].re, -0.7);
    }

    #[test]
    fn four_site_ring_bonds() {
        let spec = ring(4, 1);
        let h = single_particle_hamiltonian_real(&spec, 0.0, &DisorderRealization::clean(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dist = (j + 4 - i) % 4;
                let expected = if dist == 1 || dist == 3 { -1.0 } else { 0.0 };
                assert_eq!(h[(i, j)], expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn clean_disorder_is_zero() {
        let spec = NetworkSpec::new(6, 1.0, Connectivity::AllToAll).with_seed(9);
        let r = spec.realization(1.0);
        assert!(r.epsilon_site.iter().all(|&e| e == 0.0));
        assert!(r.epsilon_bond.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn disorder_within_widths_and_symmetric() {
        let spec = ring(9, 2)
            .with_disorder(DisorderSpec { delta_omega: 0.01, delta_j: 0.1 })
            .with_seed(42);
        let omega_c = 5.0;
        let r = spec.realization(omega_c);
        assert!(r.epsilon_site.iter().all(|e| e.abs() <= 0.01 * omega_c));
        let bonds = spec.bonds();
        for i in 0..9 {
            assert_eq!(r.epsilon_bond[(i, i)], 0.0);
            for j in 0..9 {
                assert_eq!(r.epsilon_bond[(i, j)], r.epsilon_bond[(j, i)]);
                assert!(r.epsilon_bond[(i, j)].abs() <= 0.1);
                let (a, b) = (i.min(j), i.max(j));
                if i != j && !bonds.contains(&(a, b)) {
                    assert_eq!(r.epsilon_bond[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_realization() {
        let spec = NetworkSpec::new(7, 1.0, Connectivity::AllToAll)
            .with_disorder(DisorderSpec { delta_omega: 0.1, delta_j: 0.1 })
            .with_seed(1234);
        assert_eq!(spec.realization(2.0), spec.realization(2.0));
        let other = spec.clone().with_seed(1235).realization(2.0);
        assert_ne!(spec.realization(2.0), other);
    }

    #[test]
    fn mismatched_realization_rejected() {
        let spec = NetworkSpec::new(4, 1.0, Connectivity::AllToAll);
        let err = single_particle_hamiltonian(&spec, 1.0, &DisorderRealization::clean(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn validation() {
        assert!(NetworkSpec::new(1, 1.0, Connectivity::AllToAll).validate().is_err());
        assert!(NetworkSpec::new(3, -1.0, Connectivity::AllToAll).validate().is_err());
        assert!(ring(5, 0).validate().is_err());
        assert!(ring(5, 1).validate().is_ok());
    }

    #[test]
    fn json_block_round_trip() {
        let text = r#"{"N":10,"J":1.0,"connectivity":{"type":"finite_range","D":2},
                       "disorder":{"delta_omega":0.01,"delta_J":0.0},"seed":7}"#;
        let spec: NetworkSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.connectivity, Connectivity::FiniteRange { d: 2 });
        assert_eq!(spec.seed, 7);
        let back: NetworkSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let a2a: Connectivity = serde_json::from_str(r#"{"type":"all_to_all"}"#).unwrap();
        assert_eq!(a2a, Connectivity::AllToAll);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn canonical_range_matches_all_to_all(n in 2usize..40) {
                let half = n.div_ceil(2);
                let a = single_particle_hamiltonian_real(
                    &ring(n, half), 1.0, &DisorderRealization::clean(n)).unwrap();
                let b = single_particle_hamiltonian_real(
                    &NetworkSpec::new(n, 1.0, Connectivity::AllToAll), 1.0,
                    &DisorderRealization::clean(n)).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn disordered_h_is_hermitian_with_real_spectrum(
                n in 2usize..12, d in 1usize..6, seed in any::<u64>()
            ) {
                let spec = ring(n, d)
                    .with_disorder(DisorderSpec { delta_omega: 0.1, delta_j: 0.3 })
                    .with_seed(seed);
                let h = single_particle_hamiltonian(&spec, 1.0, &spec.realization(1.0)).unwrap();
                prop_assert_eq!(&h, &h.adjoint());
                let eig = nalgebra::SymmetricEigen::new(h.clone());
                let recon = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| Complex64::new(x, 0.0)))
                    * eig.eigenvectors.adjoint();
                prop_assert!((recon - h).norm() < 1e-10);
            }

            #[test]
            fn sparsity_pattern_independent_of_seed(
                n in 3usize..12, d in 1usize..6, s1 in any::<u64>(), s2 in any::<u64>()
            ) {
                let base = ring(n, d).with_disorder(DisorderSpec { delta_omega: 0.0, delta_j: 0.2 });
                let a = base.clone().with_seed(s1).realization(1.0);
                let b = base.with_seed(s2).realization(1.0);
                for (x, y) in a.epsilon_bond.iter().zip(b.epsilon_bond.iter()) {
                    prop_assert_eq!(*x == 0.0, *y == 0.0);
                }
            }
        }
    }
}
