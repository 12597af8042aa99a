//! Many-body Hamiltonian on a truncated basis, stored as real symmetric CSR.
//!
//! With real hopping and real unit couplings every matrix element is real,
//! so the Hermitian matrix is stored as a symmetric real one.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::basis::BasisIndex;
use crate::error::{Error, Result};
use crate::model::UnitModel;
use crate::network::{single_particle_hamiltonian_real, DisorderRealization, NetworkSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseHamiltonian {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseHamiltonian {
    /// Build from per-row `(col, value)` lists; duplicate columns are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if c >= dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: c + 1 });
                }
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(SparseHamiltonian { dim, row_ptr, cols, vals })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// All stored entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, Complex64::new(v, 0.0))))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(p) => self.vals[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    /// Largest `|H_rc - H_cr^*|`; zero for matrices built by [`assemble_hamiltonian`].
    pub fn hermiticity_defect(&self) -> f64 {
        (0..self.dim)
            .flat_map(|r| self.row(r).map(move |(c, v)| (v - self.get(c, r)).abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() == 0.0
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.cols[p]] * self.vals[p];
            }
            *out = acc;
        }
    }

    /// `<x|H|x>` (real for Hermitian `H`).
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        (0..self.dim)
            .map(|r| {
                let hx: Complex64 = self.row(r).map(|(c, v)| x[c] * v).sum();
                (x[r].conj() * hx).re
            })
            .sum()
    }

    /// Gershgorin bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim).map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// Many-body Hamiltonian of the network on `basis`.
///
/// Diagonal: `sum_i h_ii n_i` plus `omega_q s_i` (JC) or `-(U/2) n_i^2` (BH).
/// Off-diagonal: `h_ij a_i^dagger a_j` on every bond and `g (a sigma^+ + h.c.)`
/// on every JC unit. Transitions leaving the basis are dropped.
pub fn assemble_hamiltonian(
    spec: &NetworkSpec,
    model: &UnitModel,
    basis: &BasisIndex,
    realization: &DisorderRealization,
) -> Result<SparseHamiltonian> {
    model.validate()?;
    if spec.n != basis.n_sites() {
        return Err(Error::DimensionMismatch { expected: spec.n, found: basis.n_sites() });
    }
    if model.kind().has_qubit() != basis.has_qubits() {
        return Err(Error::Contract(format!("basis does not match the {} model", model.kind().name())));
    }
    let h = single_particle_hamiltonian_real(spec, model.omega_c(), realization)?;
    let bonds: Vec<(usize, usize, f64)> = spec.bonds().into_iter().map(|(i, j)| (i, j, h[(i, j)])).collect();
    let (omega_q, g, u) = match *model {
        UnitModel::JaynesCummings { omega_q, g, .. } => (omega_q, g, 0.0),
        UnitModel::BoseHubbard { u, .. } => (0.0, 0.0, u),
        UnitModel::Harmonic { .. } => (0.0, 0.0, 0.0),
    };
    let n_sites = basis.n_sites();
    let stride = basis.np() as u64 + 1;
    let pow: Vec<u64> = (0..n_sites).map(|i| basis.local_dim().pow(i as u32)).collect();

    let rows = (0..basis.dim())
        .map(|k| {
            let code = basis.code(k);
            let locals = basis.locals(k);
            let occ: Vec<u32> = locals.iter().map(|&l| basis.boson(l)).collect();
            let mut row = Vec::new();
            let mut diag = 0.0;
            for i in 0..n_sites {
                let n = f64::from(occ[i]);
                diag += h[(i, i)] * n - 0.5 * u * n * n;
                if basis.has_qubits() {
                    diag += omega_q * f64::from(basis.qubit(locals[i]));
                }
            }
            row.push((k, diag));
            let mut push = |target: u64, v: f64| {
                if let Some(c) = basis.index_of(target) {
                    row.push((c, v));
                }
            };
            for &(i, j, hij) in &bonds {
                // a_i^dagger a_j and a_j^dagger a_i
                for (to, from) in [(i, j), (j, i)] {
                    if occ[from] > 0 && occ[to] < basis.np() {
                        let amp = f64::from((occ[to] + 1) * occ[from]).sqrt();
                        push(code + pow[to] - pow[from], hij * amp);
                    }
                }
            }
            if basis.has_qubits() && g != 0.0 {
                for i in 0..n_sites {
                    let (n, s) = (occ[i], basis.qubit(locals[i]));
                    // a sigma^+ : (n, g) -> (n-1, e);  a^dagger sigma^- : (n, e) -> (n+1, g)
                    if s == 0 && n > 0 {
                        push(code - pow[i] + stride * pow[i], g * f64::from(n).sqrt());
                    } else if s == 1 && n < basis.np() {
                        push(code + pow[i] - stride * pow[i], g * f64::from(n + 1).sqrt());
                    }
                }
            }
            row
        })
        .collect();
    SparseHamiltonian::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::network::Connectivity;
    use crate::quantum::basis::Restriction;
    use nalgebra::SymmetricEigen;

    fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn jc_doublet_splits_by_two_g() {
        // two uncoupled units, one excitation: each unit contributes a doublet
        let spec = NetworkSpec::new(2, 0.0, Connectivity::AllToAll);
        let basis = BasisIndex::build(2, 1, ModelKind::JaynesCummings, Restriction::Sector(1)).unwrap();
        assert_eq!(basis.dim(), 4);
        let h = assemble_hamiltonian(&spec, &UnitModel::jc(1.0, 0.3), &basis, &DisorderRealization::clean(2)).unwrap();
        let e = sorted_eigenvalues(h.to_dense());
        for (got, want) in e.iter().zip([0.7, 0.7, 1.3, 1.3]) {
            assert!((got - want).abs() < 1e-14, "{e:?}");
        }
    }

    #[test]
    fn linear_limit_spectrum_is_sum_of_single_particle_levels() {
        let spec = NetworkSpec::new(2, 0.7, Connectivity::AllToAll);
        let clean = DisorderRealization::clean(2);
        let single = sorted_eigenvalues(single_particle_hamiltonian_real(&spec, 1.3, &clean).unwrap());
        // two bosons with Np = 2: occupy the two levels with e_a + e_b, a <= b
        let mut expected = vec![];
        for a in 0..2 {
            for b in a..2 {
                expected.push(single[a] + single[b]);
            }
        }
        expected.sort_by(f64::total_cmp);
        let basis = BasisIndex::build(2, 2, ModelKind::BoseHubbard, Restriction::Sector(2)).unwrap();
        let h = assemble_hamiltonian(&spec, &UnitModel::bh(1.3, 0.0), &basis, &clean).unwrap();
        let got = sorted_eigenvalues(h.to_dense());
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
        // g = 0 JC: every qubit configuration adds omega_q per excited qubit
        let basis = BasisIndex::build(2, 2, ModelKind::JaynesCummings, Restriction::Sector(2)).unwrap();
        let h = assemble_hamiltonian(&spec, &UnitModel::jc(1.3, 0.0), &basis, &clean).unwrap();
        let got = sorted_eigenvalues(h.to_dense());
        let mut expected = vec![];
        // two photons (3 states), one photon + one qubit (2 x 2), two qubits (1)
        for a in 0..2 {
            for b in a..2 {
                expected.push(single[a] + single[b]);
            }
        }
        for a in 0..2 {
            expected.push(single[a] + 1.3);
            expected.push(single[a] + 1.3);
        }
        expected.push(2.6);
        expected.sort_by(f64::total_cmp);
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
    }

    #[test]
    fn exactly_symmetric_with_disorder() {
        let spec = NetworkSpec::new(3, 1.0, Connectivity::AllToAll)
            .with_disorder(crate::network::DisorderSpec { delta_omega: 0.1, delta_j: 0.1 })
            .with_seed(9);
        let real = spec.realization(1.0);
        for (model, kind) in [(UnitModel::jc(1.0, 0.8), ModelKind::JaynesCummings), (UnitModel::bh(1.0, 0.5), ModelKind::BoseHubbard)] {
            let basis = BasisIndex::build(3, 3, kind, Restriction::Full).unwrap();
            let h = assemble_hamiltonian(&spec, &model, &basis, &real).unwrap();
            assert!(h.is_hermitian());
            assert_eq!(h.hermiticity_defect(), 0.0);
        }
    }

    #[test]
    fn closed_hamiltonian_conserves_excitation() {
        let spec = NetworkSpec::new(3, 1.0, Connectivity::FiniteRange { d: 1 });
        let basis = BasisIndex::build(3, 3, ModelKind::JaynesCummings, Restriction::Full).unwrap();
        let h = assemble_hamiltonian(&spec, &UnitModel::jc(1.0, 0.8), &basis, &DisorderRealization::clean(3)).unwrap();
        for r in 0..h.dim() {
            for (c, _) in h.row(r) {
                assert_eq!(basis.excitation(r), basis.excitation(c));
            }
        }
    }

    #[test]
    fn hopping_matrix_element() {
        let spec = NetworkSpec::new(2, 0.5, Connectivity::AllToAll);
        let basis = BasisIndex::build(2, 3, ModelKind::BoseHubbard, Restriction::Sector(3)).unwrap();
        let h = assemble_hamiltonian(&spec, &UnitModel::bh(1.0, 0.0), &basis, &DisorderRealization::clean(2)).unwrap();
        let from = basis.index_of(basis.encode(&[2, 1], &[]).unwrap()).unwrap();
        let to = basis.index_of(basis.encode(&[3, 0], &[]).unwrap()).unwrap();
        // <3,0| a_0^dagger a_1 |2,1> = sqrt(3 * 1)
        assert!((h.get(to, from) + 0.5 * 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_basis() {
        let spec = NetworkSpec::new(2, 1.0, Connectivity::AllToAll);
        let basis = BasisIndex::build(2, 2, ModelKind::BoseHubbard, Restriction::Full).unwrap();
        assert!(assemble_hamiltonian(&spec, &UnitModel::jc(1.0, 1.0), &basis, &DisorderRealization::clean(2)).is_err());
        let spec3 = NetworkSpec::new(3, 1.0, Connectivity::AllToAll);
        assert!(assemble_hamiltonian(&spec3, &UnitModel::bh(1.0, 1.0), &basis, &DisorderRealization::clean(3)).is_err());
    }
}
