//! Local Lindblad dynamics with cavity loss, qubit decay and qubit dephasing.
//!
//! ```text
//! drho/dt = -i[H, rho] + kappa sum_j L[a_j] + gamma sum_j L[sigma^-_j] + gamma_phi sum_j L[sigma^z_j]
//! L[A] = (2 A rho A^dagger - A^dagger A rho - rho A^dagger A) / 2
//! ```
//!
//! Loss lowers the total excitation by one and dephasing keeps it, while `H`
//! conserves it. Starting from a Fock state the density matrix therefore
//! stays block diagonal in the excitation number `M`, and only those blocks
//! (over the basis with at most `Np` excitations) are stored and propagated.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Drift, Trajectory, Z_FLOOR};
use crate::error::{Error, Result};
use crate::model::UnitModel;
use crate::network::NetworkSpec;
use crate::quantum::chebyshev::SpectralBounds;
use crate::quantum::{assemble_hamiltonian, BasisIndex, Restriction, SparseHamiltonian};
use crate::semiclassical::ode::Rk4Stepper;

/// Default cap on stored density-matrix elements.
pub const DEFAULT_ELEMENT_CAP: usize = 40_000;

/// Largest tolerated `|tr rho - 1|` before a run is aborted.
pub const TRACE_ABORT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSystemRates {
    pub kappa: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub gamma_phi: f64,
}

impl OpenSystemRates {
    pub fn new(kappa: f64, gamma: f64, gamma_phi: f64) -> Self {
        OpenSystemRates { kappa, gamma, gamma_phi }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("kappa", self.kappa), ("gamma", self.gamma), ("gamma_phi", self.gamma_phi)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(field, "rate must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.kappa == 0.0 && self.gamma == 0.0 && self.gamma_phi == 0.0
    }

    /// Qubit channels do not exist without qubits.
    pub fn for_model(self, model: &UnitModel) -> Self {
        if model.kind().has_qubit() {
            self
        } else {
            if self.gamma != 0.0 || self.gamma_phi != 0.0 {
                log::warn!("gamma and gamma_phi are ignored for {} units", model.kind().name());
            }
            OpenSystemRates { gamma: 0.0, gamma_phi: 0.0, ..self }
        }
    }
}

/// `(source, target, amplitude)` of a jump operator that maps each basis state
/// to at most one other.
type JumpMap = Vec<(usize, usize, f64)>;

#[derive(Clone, Debug)]
struct Block {
    /// Global basis indices, ascending.
    members: Vec<usize>,
    h: SparseHamiltonian,
    /// Diagonal of `sum_A rate_A A^dagger A` over loss channels.
    loss: Vec<f64>,
    /// Qubit excitation pattern as a bit mask.
    qubits: Vec<u64>,
    offset: usize,
}

/// Block-diagonal density matrix, packed row-major block after block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDensityMatrix {
    pub dims: Vec<usize>,
    pub data: Vec<Complex64>,
}

impl BlockDensityMatrix {
    fn offsets(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.dims.iter().scan(0, |off, &d| {
            let o = *off;
            *off += d * d;
            Some((o, d))
        })
    }

    pub fn trace(&self) -> Complex64 {
        self.offsets().map(|(o, d)| (0..d).map(|k| self.data[o + k * d + k]).sum::<Complex64>()).sum()
    }

    /// `max |rho - rho^dagger|` over all blocks.
    pub fn hermiticity_defect(&self) -> f64 {
        trace_and_defect(&self.dims, &self.data).1
    }

    /// Replace `rho` by `(rho + rho^dagger) / 2`.
    pub fn symmetrize(&mut self) {
        symmetrize(&self.dims, &mut self.data);
    }

    /// `tr rho^2`.
    pub fn purity(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.offsets()
            .filter(|&(_, d)| d > 0)
            .map(|(o, d)| {
                let m = DMatrix::from_fn(d, d, |r, c| self.data[o + r * d + c]);
                SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn trace_and_defect(dims: &[usize], data: &[Complex64]) -> (Complex64, f64) {
    let (mut tr, mut defect, mut o) = (ZERO, 0.0f64, 0);
    for &d in dims {
        for k in 0..d {
            tr += data[o + k * d + k];
            for l in k..d {
                defect = defect.max((data[o + k * d + l] - data[o + l * d + k].conj()).norm());
            }
        }
        o += d * d;
    }
    (tr, defect)
}

fn symmetrize(dims: &[usize], data: &mut [Complex64]) {
    let mut o = 0;
    for &d in dims {
        for k in 0..d {
            for l in k..d {
                let v = 0.5 * (data[o + k * d + l] + data[o + l * d + k].conj());
                data[o + k * d + l] = v;
                data[o + l * d + k] = v.conj();
            }
        }
        o += d * d;
    }
}

/// Lindblad generator restricted to excitation blocks.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    basis: BasisIndex,
    rates: OpenSystemRates,
    blocks: Vec<Block>,
    /// `feeds[M]`: loss channels carrying block `M + 1` into block `M`, with rates.
    feeds: Vec<Vec<(f64, JumpMap)>>,
    /// Block and in-block index of every basis state.
    location: Vec<(usize, usize)>,
    len: usize,
}

impl LindbladGenerator {
    /// Generator for the network on the basis with at most `Np` excitations.
    pub fn new(spec: &NetworkSpec, model: &UnitModel, np: u32, rates: OpenSystemRates, element_cap: usize) -> Result<Self> {
        spec.validate()?;
        let rates = rates.for_model(model);
        let basis = BasisIndex::build(spec.n, np, model.kind(), Restriction::AtMost(np))?;
        let h = assemble_hamiltonian(spec, model, &basis, &spec.realization(model.omega_c()))?;
        Self::from_parts(&h, basis, rates, element_cap)
    }

    /// `h` must be excitation conserving on `basis`.
    pub fn from_parts(h: &SparseHamiltonian, basis: BasisIndex, rates: OpenSystemRates, element_cap: usize) -> Result<Self> {
        rates.validate()?;
        if h.dim() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), found: h.dim() });
        }
        let top = (0..basis.dim()).map(|k| basis.excitation(k)).max().unwrap_or(0) as usize;
        let mut members = vec![Vec::new(); top + 1];
        let mut location = vec![(0, 0); basis.dim()];
        for k in 0..basis.dim() {
            let m = basis.excitation(k) as usize;
            location[k] = (m, members[m].len());
            members[m].push(k);
        }
        let elements: usize = members.iter().map(|m| m.len() * m.len()).sum();
        if elements > element_cap {
            return Err(Error::DimensionCap { dimension: elements as u128, cap: element_cap });
        }
        let n_sites = basis.n_sites();
        let stride = u64::from(basis.np()) + 1;
        let pow: Vec<u64> = (0..n_sites).map(|i| basis.local_dim().pow(i as u32)).collect();

        let mut blocks = Vec::with_capacity(members.len());
        let mut offset = 0;
        for (m, mem) in members.into_iter().enumerate() {
            let mut rows = Vec::with_capacity(mem.len());
            for &g in &mem {
                let mut row = Vec::new();
                for (c, v) in h.row(g) {
                    let (mc, lc) = location[c];
                    if mc != m {
                        return Err(Error::Contract("Hamiltonian does not conserve the excitation number".into()));
                    }
                    row.push((lc, v));
                }
                rows.push(row);
            }
            let loss = mem
                .iter()
                .map(|&g| {
                    basis.locals(g).iter().map(|&l| {
                        rates.kappa * f64::from(basis.boson(l)) + rates.gamma * f64::from(basis.qubit(l))
                    }).sum()
                })
                .collect();
            let qubits = mem
                .iter()
                .map(|&g| basis.locals(g).iter().enumerate().map(|(i, &l)| u64::from(basis.qubit(l)) << i).sum())
                .collect();
            let d = mem.len();
            blocks.push(Block { members: mem, h: SparseHamiltonian::from_rows(rows)?, loss, qubits, offset });
            offset += d * d;
        }

        let mut feeds: Vec<Vec<(f64, JumpMap)>> = vec![Vec::new(); blocks.len()];
        for src in 1..blocks.len() {
            for j in 0..n_sites {
                let mut photon = JumpMap::new();
                let mut decay = JumpMap::new();
                for (ls, &g) in blocks[src].members.iter().enumerate() {
                    let l = basis.locals(g)[j];
                    let (n, s) = (basis.boson(l), basis.qubit(l));
                    let code = basis.code(g);
                    if n > 0 && rates.kappa > 0.0 {
                        if let Some(t) = basis.index_of(code - pow[j]) {
                            photon.push((ls, location[t].1, f64::from(n).sqrt()));
                        }
                    }
                    if s == 1 && rates.gamma > 0.0 {
                        if let Some(t) = basis.index_of(code - stride * pow[j]) {
                            decay.push((ls, location[t].1, 1.0));
                        }
                    }
                }
                if !photon.is_empty() {
                    feeds[src - 1].push((rates.kappa, photon));
                }
                if !decay.is_empty() {
                    feeds[src - 1].push((rates.gamma, decay));
                }
            }
        }
        Ok(LindbladGenerator { basis, rates, blocks, feeds, location, len: offset })
    }

    pub fn basis(&self) -> &BasisIndex {
        &self.basis
    }

    pub fn rates(&self) -> OpenSystemRates {
        self.rates
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.members.len()).collect()
    }

    /// Number of stored density-matrix elements.
    pub fn packed_len(&self) -> usize {
        self.len
    }

    /// `|psi><psi|` for a basis state.
    pub fn pure_state(&self, basis_index: usize) -> Result<BlockDensityMatrix> {
        if basis_index >= self.basis.dim() {
            return Err(Error::OutsideBasis(format!("basis index {basis_index}")));
        }
        let (m, l) = self.location[basis_index];
        let mut data = vec![ZERO; self.len];
        let b = &self.blocks[m];
        data[b.offset + l * b.members.len() + l] = Complex64::new(1.0, 0.0);
        Ok(BlockDensityMatrix { dims: self.block_dims(), data })
    }

    /// Upper bound on the rate of the fastest mode of the generator.
    pub fn spectral_width(&self) -> f64 {
        let coherent = self
            .blocks
            .iter()
            .filter(|b| b.members.len() > 1)
            .map(|b| {
                let s = SpectralBounds::estimate(&b.h);
                s.hi - s.lo
            })
            .fold(0.0, f64::max);
        let loss = self.blocks.iter().flat_map(|b| b.loss.iter().copied()).fold(0.0, f64::max);
        coherent + loss + 2.0 * self.rates.gamma_phi * self.basis.n_sites() as f64
    }

    /// `drho/dt` on the packed blocks.
    pub fn rhs(&self, rho: &[Complex64], drho: &mut [Complex64]) {
        let mut scratch = Vec::new();
        self.rhs_with(rho, drho, &mut scratch);
    }

    fn rhs_with(&self, rho: &[Complex64], drho: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        let i = Complex64::new(0.0, 1.0);
        let dephase = 2.0 * self.rates.gamma_phi;
        for (m, b) in self.blocks.iter().enumerate() {
            let d = b.members.len();
            let r = &rho[b.offset..b.offset + d * d];
            // X = H rho, then -i[H, rho] = -i (X - X^dagger) for Hermitian rho
            scratch.clear();
            scratch.resize(d * d, ZERO);
            for k in 0..d {
                let xrow = &mut scratch[k * d..(k + 1) * d];
                for (c, v) in b.h.row(k) {
                    for (x, y) in xrow.iter_mut().zip(&r[c * d..(c + 1) * d]) {
                        *x += y * v;
                    }
                }
            }
            let out = &mut drho[b.offset..b.offset + d * d];
            for k in 0..d {
                for l in 0..d {
                    let comm = scratch[k * d + l] - scratch[l * d + k].conj();
                    let mut v = -i * comm - r[k * d + l] * (0.5 * (b.loss[k] + b.loss[l]));
                    if dephase != 0.0 {
                        let flips = (b.qubits[k] ^ b.qubits[l]).count_ones();
                        v -= r[k * d + l] * (dephase * f64::from(flips));
                    }
                    out[k * d + l] = v;
                }
            }
            if m + 1 < self.blocks.len() {
                let src = &self.blocks[m + 1];
                let ds = src.members.len();
                let rs = &rho[src.offset..src.offset + ds * ds];
                for (rate, map) in &self.feeds[m] {
                    for &(s1, t1, a1) in map {
                        let w = rate * a1;
                        for &(s2, t2, a2) in map {
                            out[t1 * d + t2] += rs[s1 * ds + s2] * (w * a2);
                        }
                    }
                }
            }
        }
    }

    /// Embed the blocks into a dense matrix over the whole basis.
    pub fn to_dense(&self, rho: &BlockDensityMatrix) -> DMatrix<Complex64> {
        let mut out = DMatrix::from_element(self.basis.dim(), self.basis.dim(), ZERO);
        for b in &self.blocks {
            let d = b.members.len();
            for (k, &gk) in b.members.iter().enumerate() {
                for (l, &gl) in b.members.iter().enumerate() {
                    out[(gk, gl)] = rho.data[b.offset + k * d + l];
                }
            }
        }
        out
    }

    /// Per-site `<n_j>` and, with qubits, `<sigma^z_j>` from the diagonal.
    pub fn site_observables(&self, rho: &[Complex64]) -> (Vec<f64>, Option<Vec<f64>>) {
        let n_sites = self.basis.n_sites();
        let (mut n, mut up) = (vec![0.0; n_sites], vec![0.0; n_sites]);
        for b in &self.blocks {
            let d = b.members.len();
            for (k, &g) in b.members.iter().enumerate() {
                let p = rho[b.offset + k * d + k].re;
                for (j, &l) in self.basis.locals(g).iter().enumerate() {
                    n[j] += p * f64::from(self.basis.boson(l));
                    up[j] += p * f64::from(self.basis.qubit(l));
                }
            }
        }
        let sz = self.basis.has_qubits().then(|| up.iter().map(|u| 2.0 * u - 1.0).collect());
        (n, sz)
    }

    /// `<sum_j (n_j + sigma^+_j sigma^-_j)>`.
    pub fn total_excitation(&self, rho: &[Complex64]) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(m, b)| {
                let d = b.members.len();
                m as f64 * (0..d).map(|k| rho[b.offset + k * d + k].re).sum::<f64>()
            })
            .sum()
    }
}

/// Time stepper for the master equation.
///
/// The generator is linear and time independent, so a step is a polynomial
/// in `h L`: classic RK4 is its degree-4 Taylor truncation. `Taylor` keeps
/// adding terms until they drop below round-off, which allows steps of a few
/// inverse generator widths while staying accurate to machine precision; RK4
/// needs much smaller steps to keep fast coherences from losing phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenStepper {
    Rk4,
    #[default]
    Taylor,
}

impl OpenStepper {
    /// Largest `h * width` per step.
    fn reach(self) -> f64 {
        match self {
            OpenStepper::Rk4 => 0.1,
            OpenStepper::Taylor => 4.0,
        }
    }
}

/// Settings specific to open-system runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenOptions {
    /// `Z(t)` is reported missing once the total occupation drops below this.
    pub z_floor: f64,
    pub element_cap: usize,
    /// Smallest eigenvalue of `rho` is checked every this many samples (0: never).
    pub positivity_every: usize,
    pub stepper: OpenStepper,
}

impl Default for OpenOptions {
    fn default() -> Self {
        OpenOptions { z_floor: Z_FLOOR, element_cap: DEFAULT_ELEMENT_CAP, positivity_every: 50, stepper: OpenStepper::default() }
    }
}

const TAYLOR_TOL: f64 = 1e-16;
const TAYLOR_MAX_TERMS: usize = 80;

/// `y <- exp(h L) y` by a Taylor series truncated at round-off.
fn taylor_step(
    gen: &LindbladGenerator,
    y: &mut [Complex64],
    h: f64,
    term: &mut Vec<Complex64>,
    next: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
) -> std::result::Result<(), usize> {
    term.clear();
    term.extend_from_slice(y);
    next.resize(y.len(), ZERO);
    let scale = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut small = 0;
    for k in 1..=TAYLOR_MAX_TERMS {
        gen.rhs_with(term, next, scratch);
        let c = h / k as f64;
        let mut size = 0.0f64;
        for (t, (yy, n)) in term.iter_mut().zip(y.iter_mut().zip(next.iter())) {
            *t = n * c;
            *yy += *t;
            size = size.max(t.norm());
        }
        // two consecutive negligible terms: the tail is below round-off
        small = if size <= TAYLOR_TOL * scale { small + 1 } else { 0 };
        if small == 2 {
            return Ok(());
        }
    }
    Err(TAYLOR_MAX_TERMS)
}

/// Evolve `rho0` and sample it at `times` (increasing, starting at 0).
///
/// Steps are fitted into each sampling interval so that they resolve the
/// fastest mode of the generator. After each step `rho` is made exactly
/// Hermitian; the removed defect is recorded as the `hermiticity` drift.
pub fn evolve_open(
    gen: &LindbladGenerator,
    rho0: &BlockDensityMatrix,
    times: &[f64],
    opts: &OpenOptions,
) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times", "must start at 0 and increase"));
    }
    if rho0.data.len() != gen.packed_len() || rho0.dims != gen.block_dims() {
        return Err(Error::DimensionMismatch { expected: gen.packed_len(), found: rho0.data.len() });
    }
    let tr0 = rho0.trace();
    if (tr0.re - 1.0).abs() > 1e-8 || tr0.im.abs() > 1e-8 {
        return Err(Error::NotNormalized(tr0.norm()));
    }
    let width = gen.spectral_width().max(f64::MIN_POSITIVE);
    let reach = opts.stepper.reach();

    let mut traj = Trajectory::new(gen.basis.n_sites()).with_z(opts.z_floor);
    if gen.basis.has_qubits() {
        traj = traj.with_sigma_z();
    }
    let dims = gen.block_dims();
    let mut rho = rho0.data.clone();
    let mut trace = Drift::new("trace", 1.0);
    let mut hermiticity = Drift::new("hermiticity", 0.0);
    let excitation0 = gen.total_excitation(&rho);
    let mut excitation = Drift::new("excitation", excitation0);
    let mut excitation_rise = 0.0f64;
    let mut previous_excitation = excitation0;
    let mut min_eig = f64::INFINITY;
    let mut rk4 = Rk4Stepper::new(if opts.stepper == OpenStepper::Rk4 { rho.len() } else { 0 });
    let (mut term, mut next, mut scratch) = (Vec::new(), Vec::new(), Vec::new());

    let mut record = |k: usize, t: f64, rho: &[Complex64], traj: &mut Trajectory| {
        let (n, sz) = gen.site_observables(rho);
        traj.push(t, n, sz);
        let e = gen.total_excitation(rho);
        excitation.update(e);
        excitation_rise = excitation_rise.max(e - previous_excitation);
        previous_excitation = e;
        if opts.positivity_every > 0 && k % opts.positivity_every == 0 {
            let m = BlockDensityMatrix { dims: dims.clone(), data: rho.to_vec() }.min_eigenvalue();
            min_eig = min_eig.min(m);
        }
    };
    record(0, 0.0, &rho, &mut traj);
    let mut steps = 0usize;
    let mut h_max = 0.0f64;
    for (k, w) in times.windows(2).enumerate() {
        let interval = w[1] - w[0];
        let substeps = (interval * width / reach).ceil().max(1.0) as usize;
        let h = interval / substeps as f64;
        h_max = h_max.max(h);
        for s in 0..substeps {
            let t = w[0] + (s + 1) as f64 * h;
            match opts.stepper {
                OpenStepper::Rk4 => {
                    let mut rhs = |_: f64, y: &[Complex64], dy: &mut [Complex64]| gen.rhs_with(y, dy, &mut scratch);
                    rk4.step(&mut rhs, t - h, h, &mut rho);
                }
                OpenStepper::Taylor => taylor_step(gen, &mut rho, h, &mut term, &mut next, &mut scratch)
                    .map_err(|n| Error::Integration { t, reason: format!("Taylor series did not converge in {n} terms") })?,
            }
            steps += 1;
            let (tr, defect) = trace_and_defect(&dims, &rho);
            hermiticity.update(defect);
            symmetrize(&dims, &mut rho);
            if !tr.re.is_finite() {
                return Err(Error::Integration { t, reason: "non-finite density matrix".into() });
            }
            let drift = (tr - 1.0).norm();
            trace.update(tr.re);
            if drift > TRACE_ABORT {
                return Err(Error::TraceDrift { t, drift, limit: TRACE_ABORT });
            }
        }
        record(k + 1, w[1], &rho, &mut traj);
    }
    if min_eig < -1e-8 {
        log::warn!("density matrix developed a negative eigenvalue {min_eig:e}");
    }
    traj.drift.extend([trace, hermiticity, excitation]);
    traj.set_meta("stepper", opts.stepper);
    traj.set_meta("max_step", h_max);
    traj.set_meta("steps", steps);
    traj.set_meta("generator_width", width);
    traj.set_meta("rates", gen.rates);
    traj.set_meta("block_dims", &dims);
    traj.set_meta("excitation_max_rise", excitation_rise);
    if min_eig.is_finite() {
        traj.set_meta("min_eigenvalue", min_eig);
    }
    traj.set_meta("final_purity", BlockDensityMatrix { dims, data: rho }.purity());
    Ok(traj)
}

/// Open-system run from `|Np, 0, ..., 0><Np, 0, ..., 0|` with all qubits down.
pub fn simulate(
    spec: &NetworkSpec,
    model: &UnitModel,
    np: u32,
    rates: OpenSystemRates,
    times: &[f64],
    opts: &OpenOptions,
) -> Result<Trajectory> {
    model.validate()?;
    if np == 0 {
        return Err(Error::invalid("Np", "must be >= 1"));
    }
    let gen = LindbladGenerator::new(spec, model, np, rates, opts.element_cap)?;
    let psi0 = crate::quantum::initial_fock_state(gen.basis(), 0, np)?;
    let k = psi0.amplitudes.iter().position(|a| a.re == 1.0).expect("Fock state has one unit amplitude");
    let rho0 = gen.pure_state(k)?;
    evolve_open(&gen, &rho0, times, opts)
}

/// Jump operators `(rate, A)` on a basis, as dense matrices: `a_j` with
/// `kappa`, and for qubit bases `sigma^-_j` with `gamma` and `sigma^z_j` with
/// `gamma_phi`. Operators that would leave the basis are truncated.
pub fn dense_jump_operators(basis: &BasisIndex, rates: OpenSystemRates) -> Result<Vec<(f64, DMatrix<Complex64>)>> {
    rates.validate()?;
    let dim = basis.dim();
    let stride = u64::from(basis.np()) + 1;
    let mut ops = Vec::new();
    for j in 0..basis.n_sites() {
        let pow = basis.local_dim().pow(j as u32);
        let mut a = DMatrix::from_element(dim, dim, ZERO);
        let mut sm = DMatrix::from_element(dim, dim, ZERO);
        let mut sz = DMatrix::from_element(dim, dim, ZERO);
        for k in 0..dim {
            let l = basis.locals(k)[j];
            let (n, s) = (basis.boson(l), basis.qubit(l));
            let code = basis.code(k);
            if n > 0 {
                if let Some(t) = basis.index_of(code - pow) {
                    a[(t, k)] = Complex64::new(f64::from(n).sqrt(), 0.0);
                }
            }
            if s == 1 {
                if let Some(t) = basis.index_of(code - stride * pow) {
                    sm[(t, k)] = Complex64::new(1.0, 0.0);
                }
            }
            sz[(k, k)] = Complex64::new(if s == 1 { 1.0 } else { -1.0 }, 0.0);
        }
        ops.push((rates.kappa, a));
        if basis.has_qubits() {
            ops.push((rates.gamma, sm));
            ops.push((rates.gamma_phi, sz));
        }
    }
    Ok(ops)
}

/// Dense reference generator `-i[H, rho] + sum rate (A rho A^dagger - {A^dagger A, rho} / 2)`.
pub fn lindblad_rhs(
    rho: &DMatrix<Complex64>,
    h: &DMatrix<Complex64>,
    jumps: &[(f64, DMatrix<Complex64>)],
) -> Result<DMatrix<Complex64>> {
    let n = rho.nrows();
    if rho.ncols() != n || h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: h.nrows() });
    }
    let i = Complex64::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * (-i);
    for (rate, a) in jumps {
        if !(*rate >= 0.0) {
            return Err(Error::invalid("rate", "must be >= 0"));
        }
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
        }
        if *rate == 0.0 {
            continue;
        }
        let ad = a.adjoint();
        let ada = &ad * a;
        out += (a * rho * &ad - (&ada * rho + rho * &ada) * Complex64::new(0.5, 0.0)) * Complex64::new(*rate, 0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::network::Connectivity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_block_state(gen: &LindbladGenerator, seed: u64) -> BlockDensityMatrix {
        // rho = B B^dagger / tr, blockwise
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = gen.block_dims();
        let mut data = Vec::new();
        for &d in &dims {
            let b = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let r = &b * b.adjoint();
            for k in 0..d {
                for l in 0..d {
                    data.push(r[(k, l)]);
                }
            }
        }
        let mut rho = BlockDensityMatrix { dims, data };
        let tr = rho.trace().re;
        rho.data.iter_mut().for_each(|x| *x /= tr);
        rho
    }

    fn grid(t_max: f64, samples: usize) -> Vec<f64> {
        (0..=samples).map(|k| t_max * k as f64 / samples as f64).collect()
    }

    fn small_jc() -> (NetworkSpec, UnitModel) {
        (NetworkSpec::new(2, 1.0, Connectivity::AllToAll), UnitModel::jc(1.0, 0.7))
    }

    #[test]
    fn block_generator_matches_dense_reference() {
        let (spec, model) = small_jc();
        let rates = OpenSystemRates::new(0.3, 0.2, 0.1);
        let gen = LindbladGenerator::new(&spec, &model, 3, rates, DEFAULT_ELEMENT_CAP).unwrap();
        let rho = random_block_state(&gen, 5);
        let mut d = vec![ZERO; gen.packed_len()];
        gen.rhs(&rho.data, &mut d);
        let got = gen.to_dense(&BlockDensityMatrix { dims: gen.block_dims(), data: d });

        let basis = gen.basis().clone();
        let h = assemble_hamiltonian(&spec, &model, &basis, &spec.realization(1.0)).unwrap();
        let hd = h.to_dense().map(|v| Complex64::new(v, 0.0));
        let expected = lindblad_rhs(&gen.to_dense(&rho), &hd, &dense_jump_operators(&basis, rates).unwrap()).unwrap();
        assert!((got - expected).norm() < 1e-12);
    }

    #[test]
    fn derivative_is_traceless_and_hermitian() {
        let (spec, model) = small_jc();
        let gen = LindbladGenerator::new(&spec, &model, 3, OpenSystemRates::new(0.5, 0.4, 0.3), DEFAULT_ELEMENT_CAP).unwrap();
        for seed in 0..5 {
            let rho = random_block_state(&gen, seed);
            let mut d = vec![ZERO; gen.packed_len()];
            gen.rhs(&rho.data, &mut d);
            let drho = BlockDensityMatrix { dims: gen.block_dims(), data: d };
            assert!(drho.trace().norm() < 1e-12);
            assert!(drho.hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn rejects_negative_rates() {
        let (spec, model) = small_jc();
        let err = LindbladGenerator::new(&spec, &model, 2, OpenSystemRates::new(-0.1, 0.0, 0.0), DEFAULT_ELEMENT_CAP);
        assert!(matches!(err, Err(Error::InvalidParameter { field, .. }) if field == "kappa"));
        let m = DMatrix::from_element(2, 2, ZERO);
        assert!(lindblad_rhs(&m, &DMatrix::from_element(3, 3, ZERO), &[]).is_err());
    }

    #[test]
    fn bh_ignores_qubit_channels() {
        let spec = NetworkSpec::new(2, 1.0, Connectivity::AllToAll);
        let gen = LindbladGenerator::new(&spec, &UnitModel::bh(1.0, 1.0), 2, OpenSystemRates::new(0.1, 0.5, 0.5), DEFAULT_ELEMENT_CAP).unwrap();
        assert_eq!(gen.rates(), OpenSystemRates::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn closed_limit_conserves_purity() {
        let (spec, model) = small_jc();
        let times = grid(5.0, 50);
        let traj = simulate(&spec, &model, 3, OpenSystemRates::default(), &times, &OpenOptions::default()).unwrap();
        assert!((traj.metadata["final_purity"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn closed_limit_matches_pure_state_evolution() {
        let spec = NetworkSpec::new(3, 1.0, Connectivity::AllToAll);
        let model = UnitModel::jc(1.0, 1.3);
        let times = grid(10.0, 100);
        let open = simulate(&spec, &model, 2, OpenSystemRates::default(), &times, &OpenOptions::default()).unwrap();
        let closed = crate::quantum::simulate(&spec, &model, 2, &times, &Default::default()).unwrap();
        for (a, b) in open.imbalance.iter().zip(&closed.imbalance) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn damped_cavity_decays_exponentially() {
        let spec = NetworkSpec::new(2, 0.0, Connectivity::AllToAll);
        let kappa = 0.2;
        let times = grid(10.0, 100);
        let traj = simulate(&spec, &UnitModel::Harmonic { omega_c: 1.0 }, 1, OpenSystemRates::new(kappa, 0.0, 0.0), &times, &OpenOptions::default()).unwrap();
        for (t, n) in traj.times.iter().zip(&traj.occupations) {
            assert!((n[0] - (-kappa * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn dephasing_preserves_populations() {
        let spec = NetworkSpec::new(2, 1.0, Connectivity::AllToAll);
        let model = UnitModel::jc(1.0, 0.0);
        let times = grid(5.0, 50);
        let with = simulate(&spec, &model, 2, OpenSystemRates::new(0.0, 0.0, 0.7), &times, &OpenOptions::default()).unwrap();
        let without = simulate(&spec, &model, 2, OpenSystemRates::default(), &times, &OpenOptions::default()).unwrap();
        for (a, b) in with.occupations.iter().zip(&without.occupations) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        for (a, b) in with.sigma_z.as_ref().unwrap().iter().zip(without.sigma_z.as_ref().unwrap()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn damping_never_adds_excitations() {
        let (spec, model) = small_jc();
        let times = grid(10.0, 500);
        let traj = simulate(&spec, &model, 3, OpenSystemRates::new(0.1, 0.1, 0.05), &times, &OpenOptions::default()).unwrap();
        assert!(traj.metadata["excitation_max_rise"].as_f64().unwrap() <= 1e-12);
        assert!(traj.drift("trace").unwrap().max_abs < 1e-10);
        assert!(traj.drift("hermiticity").unwrap().max_abs < 1e-10);
        assert!(traj.metadata["min_eigenvalue"].as_f64().unwrap() > -1e-8);
        assert!(traj.z.as_ref().unwrap().iter().all(|z| z.is_some()));
    }

    #[test]
    fn steppers_agree() {
        let (spec, model) = small_jc();
        let rates = OpenSystemRates::new(0.2, 0.1, 0.05);
        let times = grid(4.0, 40);
        let taylor = simulate(&spec, &model, 3, rates, &times, &OpenOptions::default()).unwrap();
        let opts = OpenOptions { stepper: OpenStepper::Rk4, ..Default::default() };
        let rk4 = simulate(&spec, &model, 3, rates, &times, &opts).unwrap();
        for (a, b) in taylor.imbalance.iter().zip(&rk4.imbalance) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn element_cap_is_enforced() {
        let spec = NetworkSpec::new(3, 1.0, Connectivity::AllToAll);
        let r = LindbladGenerator::new(&spec, &UnitModel::jc(1.0, 1.0), 5, OpenSystemRates::new(0.1, 0.1, 0.0), 1000);
        assert!(matches!(r, Err(Error::DimensionCap { .. })));
        let basis_dim = crate::quantum::count_dimension(3, 5, ModelKind::JaynesCummings, Restriction::AtMost(5));
        assert_eq!(basis_dim, 231);
    }
}
