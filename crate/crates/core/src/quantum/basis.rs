//! Truncated many-body Fock basis.
//!
//! Each unit carries a boson number `n in 0..=Np` and, for JC units, a qubit
//! bit `s`. The local state is packed as `l = n + (Np + 1) s` and a basis
//! state as the mixed-radix code `sum_i l_i d^i` with local dimension `d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;

/// Largest basis the engines will build unless told otherwise.
pub const DEFAULT_DIM_CAP: usize = 2_000_000;

/// Which part of the truncated product space to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restriction {
    Full,
    /// Total excitation `sum_i (n_i + s_i)` equal to `M`.
    Sector(u32),
    /// Total excitation at most `M`; closed under loss.
    AtMost(u32),
}

#[derive(Clone, Debug)]
pub struct BasisIndex {
    n_sites: usize,
    np: u32,
    qubits: bool,
    restriction: Restriction,
    local_dim: u64,
    /// Sorted codes; `None` for the full space, where index and code coincide.
    codes: Option<Vec<u64>>,
    dim: usize,
    /// Row-major `dim x n_sites` local states.
    locals: Vec<u8>,
}

fn local_dim(np: u32, qubits: bool) -> u64 {
    (u64::from(np) + 1) * if qubits { 2 } else { 1 }
}

/// Number of basis states without enumerating them.
pub fn count_dimension(n_sites: usize, np: u32, kind: ModelKind, restriction: Restriction) -> u128 {
    let qubits = kind.has_qubit();
    match restriction {
        Restriction::Full => u128::from(local_dim(np, qubits)).pow(n_sites as u32),
        Restriction::Sector(m) | Restriction::AtMost(m) => {
            // ways[e] = number of configurations of the sites so far with excitation e
            let m = m as usize;
            let mut ways = vec![0u128; m + 1];
            ways[0] = 1;
            for _ in 0..n_sites {
                let mut next = vec![0u128; m + 1];
                for (e, &w) in ways.iter().enumerate() {
                    if w == 0 {
                        continue;
                    }
                    for s in 0..=usize::from(qubits) {
                        for n in 0..=np as usize {
                            let k = e + n + s;
                            if k <= m {
                                next[k] += w;
                            }
                        }
                    }
                }
                ways = next;
            }
            match restriction {
                Restriction::Sector(_) => ways[m],
                _ => ways.iter().sum(),
            }
        }
    }
}

impl BasisIndex {
    pub fn build(n_sites: usize, np: u32, kind: ModelKind, restriction: Restriction) -> Result<Self> {
        Self::build_capped(n_sites, np, kind, restriction, DEFAULT_DIM_CAP)
    }

    pub fn build_capped(n_sites: usize, np: u32, kind: ModelKind, restriction: Restriction, cap: usize) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::invalid("N", "must be >= 1"));
        }
        if np >= 255 {
            return Err(Error::invalid("Np", "must be < 255 for the quantum basis"));
        }
        let dimension = count_dimension(n_sites, np, kind, restriction);
        if dimension > cap as u128 {
            return Err(Error::DimensionCap { dimension, cap });
        }
        let qubits = kind.has_qubit();
        let d = local_dim(np, qubits);
        let excitation = |l: u64| (l % (u64::from(np) + 1)) + l / (u64::from(np) + 1);
        let codes = match restriction {
            Restriction::Full => None,
            Restriction::Sector(m) | Restriction::AtMost(m) => {
                let exact = matches!(restriction, Restriction::Sector(_));
                let m = u64::from(m);
                let mut out = Vec::with_capacity(dimension as usize);
                // depth-first over sites, most significant first, so codes come out sorted
                let mut stack: Vec<(usize, u64, u64)> = vec![(n_sites, 0, 0)];
                while let Some((left, code, used)) = stack.pop() {
                    if left == 0 {
                        if !exact || used == m {
                            out.push(code);
                        }
                        continue;
                    }
                    let weight = d.pow(left as u32 - 1);
                    for l in (0..d).rev() {
                        let e = used + excitation(l);
                        if e <= m {
                            stack.push((left - 1, code + l * weight, e));
                        }
                    }
                }
                debug_assert!(out.windows(2).all(|w| w[0] < w[1]));
                Some(out)
            }
        };
        let dim = dimension as usize;
        let mut basis = BasisIndex { n_sites, np, qubits, restriction, local_dim: d, codes, dim, locals: Vec::new() };
        let mut locals = vec![0u8; dim * n_sites];
        for (k, row) in locals.chunks_exact_mut(n_sites).enumerate() {
            let mut c = basis.code(k);
            for l in row.iter_mut() {
                *l = (c % d) as u8;
                c /= d;
            }
        }
        basis.locals = locals;
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn np(&self) -> u32 {
        self.np
    }

    pub fn has_qubits(&self) -> bool {
        self.qubits
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn local_dim(&self) -> u64 {
        self.local_dim
    }

    /// Packed code of basis state `k`.
    pub fn code(&self, k: usize) -> u64 {
        match &self.codes {
            None => k as u64,
            Some(c) => c[k],
        }
    }

    /// Index of a packed code, if it lies in this basis.
    pub fn index_of(&self, code: u64) -> Option<usize> {
        match &self.codes {
            None => (code < self.dim as u64).then_some(code as usize),
            Some(c) => c.binary_search(&code).ok(),
        }
    }

    /// Local states of basis state `k`, site 0 first.
    pub fn locals(&self, k: usize) -> &[u8] {
        &self.locals[k * self.n_sites..(k + 1) * self.n_sites]
    }

    pub fn boson(&self, local: u8) -> u32 {
        u32::from(local) % (self.np + 1)
    }

    pub fn qubit(&self, local: u8) -> u32 {
        u32::from(local) / (self.np + 1)
    }

    /// Pack occupations and qubit bits into a code (`qubits` ignored for BH).
    pub fn encode(&self, n: &[u32], s: &[u32]) -> Result<u64> {
        if n.len() != self.n_sites || (self.qubits && s.len() != self.n_sites) {
            return Err(Error::DimensionMismatch { expected: self.n_sites, found: n.len() });
        }
        let mut code = 0u64;
        for i in (0..self.n_sites).rev() {
            let bit = if self.qubits { s[i] } else { 0 };
            if n[i] > self.np || bit > 1 {
                return Err(Error::OutsideBasis(format!("site {i} state (n={}, s={bit}) beyond truncation", n[i])));
            }
            code = code * self.local_dim + u64::from(n[i] + (self.np + 1) * bit);
        }
        Ok(code)
    }

    /// Occupations and qubit bits of basis state `k`.
    pub fn decode(&self, k: usize) -> (Vec<u32>, Vec<u32>) {
        self.locals(k).iter().map(|&l| (self.boson(l), self.qubit(l))).unzip()
    }

    /// Total excitation `sum_i (n_i + s_i)` of basis state `k`.
    pub fn excitation(&self, k: usize) -> u32 {
        self.locals(k).iter().map(|&l| self.boson(l) + self.qubit(l)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u128, k: u128) -> u128 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn jc_full_dimension_of_five_units() {
        assert_eq!(count_dimension(5, 10, ModelKind::JaynesCummings, Restriction::Full), 22u128.pow(5));
        match BasisIndex::build(5, 10, ModelKind::JaynesCummings, Restriction::Full) {
            Err(Error::DimensionCap { dimension, .. }) => assert_eq!(dimension, 5_153_632),
            other => panic!("expected cap refusal, got {other:?}"),
        }
    }

    #[test]
    fn bh_full_and_sector_dimensions() {
        let full = BasisIndex::build(3, 4, ModelKind::BoseHubbard, Restriction::Full).unwrap();
        assert_eq!(full.dim(), 125);
        let sector = BasisIndex::build(3, 4, ModelKind::BoseHubbard, Restriction::Sector(4)).unwrap();
        assert_eq!(sector.dim(), binomial(6, 2) as usize);
        // enumeration agrees with brute force over the full space
        let brute = (0..full.dim()).filter(|&k| full.excitation(k) == 4).count();
        assert_eq!(brute, 15);
    }

    #[test]
    fn at_most_is_union_of_sectors() {
        let kind = ModelKind::JaynesCummings;
        let total: u128 = (0..=5).map(|m| count_dimension(3, 5, kind, Restriction::Sector(m))).sum();
        assert_eq!(count_dimension(3, 5, kind, Restriction::AtMost(5)), total);
        assert_eq!(total, 1 + 6 + 18 + 38 + 66 + 102);
    }

    #[test]
    fn encode_rejects_beyond_truncation() {
        let b = BasisIndex::build(2, 3, ModelKind::JaynesCummings, Restriction::Full).unwrap();
        assert!(matches!(b.encode(&[4, 0], &[0, 0]), Err(Error::OutsideBasis(_))));
        let code = b.encode(&[3, 0], &[0, 1]).unwrap();
        assert_eq!(b.decode(b.index_of(code).unwrap()), (vec![3, 0], vec![0, 1]));
    }

    #[test]
    fn sector_excludes_other_excitations() {
        let b = BasisIndex::build(2, 3, ModelKind::JaynesCummings, Restriction::Sector(3)).unwrap();
        assert!(b.index_of(b.encode(&[3, 0], &[0, 0]).unwrap()).is_some());
        assert!(b.index_of(b.encode(&[3, 0], &[1, 0]).unwrap()).is_none());
    }

    proptest! {
        #[test]
        fn index_and_code_are_inverse(
            n in 1usize..5, np in 0u32..5, jc in any::<bool>(), m in 0u32..8, which in 0u8..3
        ) {
            let kind = if jc { ModelKind::JaynesCummings } else { ModelKind::BoseHubbard };
            let restriction = match which { 0 => Restriction::Full, 1 => Restriction::Sector(m), _ => Restriction::AtMost(m) };
            let b = BasisIndex::build(n, np, kind, restriction).unwrap();
            prop_assert_eq!(b.dim() as u128, count_dimension(n, np, kind, restriction));
            for k in 0..b.dim() {
                prop_assert_eq!(b.index_of(b.code(k)), Some(k));
                let (occ, bits) = b.decode(k);
                prop_assert_eq!(b.encode(&occ, &bits).unwrap(), b.code(k));
                match restriction {
                    Restriction::Sector(m) => prop_assert_eq!(b.excitation(k), m),
                    Restriction::AtMost(m) => prop_assert!(b.excitation(k) <= m),
                    Restriction::Full => {}
                }
            }
        }
    }
}
