//! Product basis, atom geometry and assembly of the rotating-frame XY Hamiltonian.
//!
//! Every frequency held by the types in this module is an ordinary frequency
//! in MHz (so `U/h`, `Ω/2π`, ...). Assembly multiplies by 2π exactly once and
//! returns `H/ħ` in rad/µs, which is what the propagators consume.
//!
//! Frame and sign conventions, for `N` atoms driven by one global microwave field:
//!
//! ```text
//! H/ħ = Σᵢ 2π(−Δ_mw + δᵢ) n↑ᵢ
//!     + Σᵢ 2π(Ω_mw/2)(e^{iφ} σ⁻ᵢ + e^{−iφ} σ⁺ᵢ)
//!     + Σ_{i<j} 2π U_ij (σ⁺ᵢσ⁻ⱼ + σ⁻ᵢσ⁺ⱼ)
//!     + Σᵢ [2π(−Δ_mw − δ_Z + s₀) n₀ᵢ + 2π(Ω_R/2)(|0⟩⟨↑|ᵢ + h.c.)]
//!     − (i/2) Σᵢ Γᵢ n↑ᵢ
//! ```
//!
//! so a lone atom with light shift δ is resonant at `Δ_mw = δ`, and the
//! `|↑↑⟩ ↔ |+⟩` line of an interacting pair sits at `Δ_mw = −U`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calculated C₃ for the 61D₃/₂ – 62P₁/₂ pair, in MHz·µm³.
pub const C3_MHZ_UM3: f64 = 7456.0;

/// Relative tolerance used for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// One local level of an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// |↑⟩, the nD state; the one the addressing beam shifts.
    Up,
    /// |↓⟩, the n'P state.
    Down,
    /// |0⟩, the Zeeman neighbour of |↑⟩ reached by Raman leakage.
    Zero,
    /// Atom left in the ground state by a failed excitation. Inert.
    Ground,
}

impl Level {
    pub fn symbol(self) -> char {
        match self {
            Level::Up => 'u',
            Level::Down => 'd',
            Level::Zero => '0',
            Level::Ground => 'g',
        }
    }

    pub fn from_symbol(c: char) -> Option<Level> {
        match c {
            'u' | 'U' | '↑' => Some(Level::Up),
            'd' | 'D' | '↓' => Some(Level::Down),
            '0' => Some(Level::Zero),
            'g' | 'G' => Some(Level::Ground),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Ordered set of local levels shared by every atom.
///
/// The order is always `up, down[, zero][, ground]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelScheme {
    levels: Vec<Level>,
}

impl LevelScheme {
    pub fn new(with_zero: bool, with_ground: bool) -> Self {
        let mut levels = vec![Level::Up, Level::Down];
        if with_zero {
            levels.push(Level::Zero);
        }
        if with_ground {
            levels.push(Level::Ground);
        }
        Self { levels }
    }

    pub fn spin_half() -> Self {
        Self::new(false, false)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn local_dim(&self) -> usize {
        self.levels.len()
    }

    pub fn has(&self, level: Level) -> bool {
        self.levels.contains(&level)
    }

    pub fn index_of(&self, level: Level) -> Option<usize> {
        self.levels.iter().position(|&l| l == level)
    }
}

/// Tensor-product basis of `n_atoms` copies of one [`LevelScheme`].
///
/// Atom 0 is the most significant digit, so for two spin-1/2 atoms the
/// ordering is `uu, ud, du, dd`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProductBasis {
    scheme: LevelScheme,
    n_atoms: usize,
    dim: usize,
}

impl ProductBasis {
    pub fn new(scheme: LevelScheme, n_atoms: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::domain("a basis needs at least one atom"));
        }
        let dim = (scheme.local_dim() as u32)
            .checked_pow(n_atoms as u32)
            .filter(|&d| d <= 1 << 16)
            .ok_or_else(|| Error::domain(format!("{n_atoms} atoms exceed the dense-matrix limit")))?
            as usize;
        Ok(Self { scheme, n_atoms, dim })
    }

    pub fn scheme(&self) -> &LevelScheme {
        &self.scheme
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn stride(&self, atom: usize) -> usize {
        self.scheme.local_dim().pow((self.n_atoms - 1 - atom) as u32)
    }

    /// Local level index of `atom` inside basis state `index`.
    pub fn digit(&self, index: usize, atom: usize) -> usize {
        (index / self.stride(atom)) % self.scheme.local_dim()
    }

    pub fn level(&self, index: usize, atom: usize) -> Level {
        self.scheme.levels[self.digit(index, atom)]
    }

    pub fn levels_of(&self, index: usize) -> Vec<Level> {
        (0..self.n_atoms).map(|a| self.level(index, a)).collect()
    }

    /// Index reached by replacing the level of `atom` in `index` with `level`.
    fn with_level(&self, index: usize, atom: usize, level: Level) -> Option<usize> {
        let new = self.scheme.index_of(level)?;
        let old = self.digit(index, atom);
        let stride = self.stride(atom);
        Some(index - old * stride + new * stride)
    }

    pub fn index(&self, levels: &[Level]) -> Result<usize> {
        if levels.len() != self.n_atoms {
            return Err(Error::Dimension {
                what: "basis label",
                expected: self.n_atoms,
                found: levels.len(),
            });
        }
        levels.iter().try_fold(0usize, |acc, &l| {
            let d = self
                .scheme
                .index_of(l)
                .ok_or_else(|| Error::domain(format!("level `{l}` is not part of the scheme")))?;
            Ok(acc * self.scheme.local_dim() + d)
        })
    }

    pub fn ket(&self, levels: &[Level]) -> Result<DVector<Complex64>> {
        let mut v = DVector::zeros(self.dim);
        v[self.index(levels)?] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    /// Parses a label such as `"ud"` or `"↑↓"` into a basis ket.
    pub fn ket_str(&self, label: &str) -> Result<DVector<Complex64>> {
        let levels = label
            .chars()
            .map(|c| {
                Level::from_symbol(c).ok_or_else(|| Error::Pattern {
                    pattern: label.to_string(),
                    reason: format!("unknown level symbol `{c}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.ket(&levels)
    }

    pub fn label(&self, index: usize) -> String {
        self.levels_of(index).iter().map(|l| l.symbol()).collect()
    }
}

/// Atom positions (µm) and the dipolar coupling coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomArray {
    positions: Vec<[f64; 3]>,
    c3: f64,
    overrides: BTreeMap<(usize, usize), f64>,
}

impl AtomArray {
    /// `c3` is in MHz·µm³ (frequency convention, `U/h = c3/R³`). Its sign is kept.
    pub fn new(positions: Vec<[f64; 3]>, c3: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::domain("an atom array needs at least one atom"));
        }
        if !c3.is_finite() || positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::domain("positions and c3 must be finite"));
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if distance(&positions[i], &positions[j]) == 0.0 {
                    return Err(Error::SingularGeometry { i, j });
                }
            }
        }
        Ok(Self {
            positions,
            c3,
            overrides: BTreeMap::new(),
        })
    }

    /// Two atoms on the quantization axis (z), `separation` µm apart.
    pub fn pair(separation: f64, c3: f64) -> Result<Self> {
        Self::new(vec![[0.0, 0.0, 0.0], [0.0, 0.0, separation]], c3)
    }

    /// Replaces the `C₃/R³` value of pair `(i, j)` by a fixed `U/h` in MHz.
    pub fn with_override(mut self, i: usize, j: usize, coupling: f64) -> Result<Self> {
        self.check_pair(i, j)?;
        if !coupling.is_finite() {
            return Err(Error::domain("coupling override must be finite"));
        }
        self.overrides.insert((i.min(j), i.max(j)), coupling);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn c3(&self) -> f64 {
        self.c3
    }

    pub fn overrides(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.overrides
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.positions[i], &self.positions[j])
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::domain(format!("pair coupling needs two distinct atoms, got ({i}, {i})")));
        }
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::domain(format!("atom index out of range for {n} atoms: ({i}, {j})")));
        }
        Ok(())
    }

    /// `U_ij/h` in MHz.
    pub fn pair_coupling(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        if let Some(&u) = self.overrides.get(&(i.min(j), i.max(j))) {
            return Ok(u);
        }
        let r = self.distance(i, j);
        if r == 0.0 {
            return Err(Error::SingularGeometry { i, j });
        }
        Ok(self.c3 / (r * r * r))
    }

    pub fn coupling_table(&self) -> Result<CouplingTable> {
        let n = self.len();
        let mut table = CouplingTable::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                table.set(i, j, self.pair_coupling(i, j)?);
            }
        }
        Ok(table)
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Symmetric table of `U_ij/h` (MHz) with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    n: usize,
    values: Vec<f64>,
}

impl CouplingTable {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, u: f64) {
        if i != j {
            self.values[i * self.n + j] = u;
            self.values[j * self.n + i] = u;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            values: self.values.iter().map(|u| u * factor).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Microwave {
    /// Ω_mw/2π, MHz.
    pub rabi: f64,
    /// Δ_mw/2π = (ω − ω₀)/2π, MHz.
    pub detuning: f64,
    /// Drive phase, rad.
    pub phase: f64,
}

impl Microwave {
    pub fn new(rabi: f64, detuning: f64) -> Self {
        Self {
            rabi,
            detuning,
            phase: 0.0,
        }
    }

    pub fn off() -> Self {
        Self::default()
    }
}

/// Raman coupling of |↑⟩ to the Zeeman level |0⟩ on one atom (all MHz).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RamanTerm {
    pub rabi: f64,
    /// Splitting δ between |↑⟩ and |0⟩; |0⟩ lies below |↑⟩.
    pub zeeman_split: f64,
    /// Extra light shift of |0⟩.
    pub zero_shift: f64,
}

/// Controls of one piecewise-constant epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub microwave: Microwave,
    /// δᵢ, MHz.
    pub light_shift: Vec<f64>,
    pub raman: Vec<RamanTerm>,
    /// Γᵢ, µs⁻¹. Population (not amplitude) decay rate of |↑⟩ᵢ.
    pub scattering: Vec<f64>,
    pub couplings: CouplingTable,
}

impl HamiltonianSpec {
    pub fn new(n_atoms: usize) -> Self {
        Self {
            microwave: Microwave::off(),
            light_shift: vec![0.0; n_atoms],
            raman: vec![RamanTerm::default(); n_atoms],
            scattering: vec![0.0; n_atoms],
            couplings: CouplingTable::zeros(n_atoms),
        }
    }

    pub fn from_array(array: &AtomArray) -> Result<Self> {
        let mut spec = Self::new(array.len());
        spec.couplings = array.coupling_table()?;
        Ok(spec)
    }

    pub fn with_microwave(mut self, microwave: Microwave) -> Self {
        self.microwave = microwave;
        self
    }

    pub fn with_light_shift(mut self, light_shift: Vec<f64>) -> Self {
        self.light_shift = light_shift;
        self
    }

    pub fn with_scattering(mut self, scattering: Vec<f64>) -> Self {
        self.scattering = scattering;
        self
    }

    pub fn with_raman(mut self, raman: Vec<RamanTerm>) -> Self {
        self.raman = raman;
        self
    }

    pub fn n_atoms(&self) -> usize {
        self.light_shift.len()
    }

    pub fn is_lossy(&self) -> bool {
        self.scattering.iter().any(|&g| g > 0.0)
    }

    fn validate(&self, n_atoms: usize) -> Result<()> {
        let checks = [
            ("light shifts", self.light_shift.len()),
            ("raman terms", self.raman.len()),
            ("scattering rates", self.scattering.len()),
            ("coupling table", self.couplings.n_atoms()),
        ];
        for (what, found) in checks {
            if found != n_atoms {
                return Err(Error::Dimension {
                    what,
                    expected: n_atoms,
                    found,
                });
            }
        }
        if self.scattering.iter().any(|&g| g < 0.0 || !g.is_finite()) {
            return Err(Error::domain("scattering rates must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Dense square operator over a [`ProductBasis`]. Hamiltonians are `H/ħ` in rad/µs.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix(DMatrix<Complex64>);

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                what: "operator (square)",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |H − H†|`.
    pub fn hermitian_deviation(&self) -> f64 {
        let h = &self.0;
        let n = h.nrows();
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((h[(i, j)] - h[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_TOL * self.max_abs().max(1.0)
    }

    pub fn commutator(&self, other: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// `⟨a|O|b⟩`.
    pub fn matrix_element(&self, a: &DVector<Complex64>, b: &DVector<Complex64>) -> Result<Complex64> {
        for v in [a, b] {
            if v.len() != self.dim() {
                return Err(Error::Dimension {
                    what: "state vector",
                    expected: self.dim(),
                    found: v.len(),
                });
            }
        }
        Ok(a.dotc(&(&self.0 * b)))
    }
}

/// Assembles `H/ħ` (rad/µs) for the given controls.
pub fn build_hamiltonian(basis: &ProductBasis, spec: &HamiltonianSpec) -> Result<OperatorMatrix> {
    let n = basis.n_atoms();
    spec.validate(n)?;
    let dim = basis.dim();
    let scheme = basis.scheme();
    let with_zero = scheme.has(Level::Zero);
    let mw = spec.microwave;
    let drive = Complex64::from_polar(TAU * mw.rabi / 2.0, -mw.phase);
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);

    for k in 0..dim {
        let mut diag = Complex64::new(0.0, 0.0);
        for i in 0..n {
            match basis.level(k, i) {
                Level::Up => {
                    diag += Complex64::new(
                        TAU * (-mw.detuning + spec.light_shift[i]),
                        -0.5 * spec.scattering[i],
                    );
                    if with_zero && spec.raman[i].rabi != 0.0 {
                        let k0 = basis.with_level(k, i, Level::Zero).expect("zero level present");
                        let c = Complex64::new(TAU * spec.raman[i].rabi / 2.0, 0.0);
                        h[(k0, k)] += c;
                        h[(k, k0)] += c;
                    }
                }
                Level::Down => {
                    if mw.rabi != 0.0 {
                        let ku = basis.with_level(k, i, Level::Up).expect("up level present");
                        // ⟨↑|H|↓⟩ = 2π(Ω/2)e^{−iφ}
                        h[(ku, k)] += drive;
                        h[(k, ku)] += drive.conj();
                    }
                }
                Level::Zero => {
                    let r = spec.raman[i];
                    diag += TAU * (-mw.detuning - r.zeeman_split + r.zero_shift);
                }
                Level::Ground => {}
            }
        }
        h[(k, k)] += diag;

        for i in 0..n {
            for j in i + 1..n {
                let u = spec.couplings.get(i, j);
                if u == 0.0 {
                    continue;
                }
                let (li, lj) = (basis.level(k, i), basis.level(k, j));
                let swapped = match (li, lj) {
                    (Level::Up, Level::Down) => Some((Level::Down, Level::Up)),
                    (Level::Down, Level::Up) => Some((Level::Up, Level::Down)),
                    _ => None,
                };
                if let Some((ni, nj)) = swapped {
                    let k2 = basis.with_level(k, i, ni).and_then(|x| basis.with_level(x, j, nj));
                    h[(k2.expect("spin levels present"), k)] += TAU * u;
                }
            }
        }
    }
    Ok(OperatorMatrix(h))
}

/// The microwave term alone, `Σᵢ 2π(Ω/2)(e^{iφ}σ⁻ᵢ + e^{−iφ}σ⁺ᵢ)`.
pub fn drive_operator(basis: &ProductBasis, rabi: f64, phase: f64) -> Result<OperatorMatrix> {
    let spec = HamiltonianSpec::new(basis.n_atoms()).with_microwave(Microwave {
        rabi,
        detuning: 0.0,
        phase,
    });
    build_hamiltonian(basis, &spec)
}

/// `|⟨a|H_drive|b⟩| / 2π` in MHz.
pub fn drive_matrix_element(
    drive: &OperatorMatrix,
    a: &DVector<Complex64>,
    b: &DVector<Complex64>,
) -> Result<f64> {
    Ok(drive.matrix_element(a, b)?.norm() / TAU)
}

/// `Σᵢ n↑ᵢ`.
pub fn excitation_number(basis: &ProductBasis) -> OperatorMatrix {
    let dim = basis.dim();
    let mut m = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let count = (0..basis.n_atoms()).filter(|&i| basis.level(k, i) == Level::Up).count();
        m[(k, k)] = Complex64::new(count as f64, 0.0);
    }
    OperatorMatrix(m)
}

/// Permutation operator exchanging the local states of atoms `i` and `j`.
pub fn swap_operator(basis: &ProductBasis, i: usize, j: usize) -> OperatorMatrix {
    let dim = basis.dim();
    let mut m = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let (li, lj) = (basis.level(k, i), basis.level(k, j));
        let k2 = basis
            .with_level(k, i, lj)
            .and_then(|x| basis.with_level(x, j, li))
            .expect("levels from the same scheme");
        m[(k2, k)] = Complex64::new(1.0, 0.0);
    }
    OperatorMatrix(m)
}

/// Eigen-decomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigenmodes {
    /// rad/µs, ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: DMatrix<Complex64>,
}

impl Eigenmodes {
    /// Eigenvalues divided by 2π, i.e. in MHz.
    pub fn frequencies(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / TAU).collect()
    }
}

pub fn eigenmodes(h: &OperatorMatrix) -> Result<Eigenmodes> {
    let deviation = h.hermitian_deviation();
    if deviation > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::NonHermitian { deviation });
    }
    // symmetrize so the solver sees an exactly Hermitian input
    let m = h.matrix();
    let sym = (m + m.adjoint()).map(|z| z * 0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigenmodes { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::SQRT_2;

    fn pair_basis() -> ProductBasis {
        ProductBasis::new(LevelScheme::spin_half(), 2).unwrap()
    }

    fn bright_dark(basis: &ProductBasis) -> (DVector<Complex64>, DVector<Complex64>) {
        let ud = basis.ket_str("ud").unwrap();
        let du = basis.ket_str("du").unwrap();
        let s = Complex64::new(1.0 / SQRT_2, 0.0);
        ((&ud + &du) * s, (&ud - &du) * s)
    }

    #[test]
    fn pair_coupling_values() {
        let a = AtomArray::pair(12.0, C3_MHZ_UM3).unwrap();
        assert_abs_diff_eq!(a.pair_coupling(0, 1).unwrap(), 7456.0 / 1728.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.pair_coupling(0, 1).unwrap(), 4.3148, epsilon = 1e-4);

        let a = AtomArray::pair(25.0, C3_MHZ_UM3).unwrap().with_override(1, 0, 0.40).unwrap();
        assert_eq!(a.pair_coupling(0, 1).unwrap(), 0.40);

        let a = AtomArray::pair(7.0, 0.0).unwrap();
        assert_eq!(a.pair_coupling(1, 0).unwrap(), 0.0);
    }

    #[test]
    fn pair_coupling_errors() {
        let a = AtomArray::pair(12.0, C3_MHZ_UM3).unwrap();
        assert!(matches!(a.pair_coupling(1, 1), Err(Error::Domain(_))));
        assert!(matches!(a.pair_coupling(0, 2), Err(Error::Domain(_))));
        let err = AtomArray::new(vec![[1.0, 2.0, 3.0], [0.0; 3], [1.0, 2.0, 3.0]], 1.0).unwrap_err();
        assert_eq!(err, Error::SingularGeometry { i: 0, j: 2 });
    }

    #[test]
    fn basis_ordering() {
        let b = pair_basis();
        assert_eq!(b.dim(), 4);
        assert_eq!(b.label(0), "uu");
        assert_eq!(b.label(1), "ud");
        assert_eq!(b.label(2), "du");
        assert_eq!(b.label(3), "dd");
        let b = ProductBasis::new(LevelScheme::new(true, true), 3).unwrap();
        assert_eq!(b.dim(), 64);
        for k in 0..b.dim() {
            assert_eq!(b.index(&b.levels_of(k)).unwrap(), k);
        }
    }

    #[test]
    fn exchange_spectrum() {
        let b = pair_basis();
        let mut spec = HamiltonianSpec::new(2);
        spec.couplings.set(0, 1, 0.40);
        let h = build_hamiltonian(&b, &spec).unwrap();
        let f = eigenmodes(&h).unwrap().frequencies();
        for (got, want) in f.iter().zip([-0.40, 0.0, 0.0, 0.40]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_atom_shift() {
        let b = ProductBasis::new(LevelScheme::spin_half(), 1).unwrap();
        let spec = HamiltonianSpec::new(1).with_light_shift(vec![4.8]);
        let f = eigenmodes(&build_hamiltonian(&b, &spec).unwrap()).unwrap().frequencies();
        assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 4.8, epsilon = 1e-12);
    }

    #[test]
    fn zero_controls_give_zero_matrix() {
        let h = build_hamiltonian(&pair_basis(), &HamiltonianSpec::new(2)).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let spec = HamiltonianSpec::new(3);
        assert!(matches!(
            build_hamiltonian(&pair_basis(), &spec),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn bright_and_dark_eigenvectors() {
        let b = pair_basis();
        let mut spec = HamiltonianSpec::new(2);
        spec.couplings.set(0, 1, 0.40);
        let modes = eigenmodes(&build_hamiltonian(&b, &spec).unwrap()).unwrap();
        let (bright, dark) = bright_dark(&b);
        // lowest is |−⟩, highest is |+⟩
        assert_abs_diff_eq!(modes.vectors.column(0).dotc(&dark).norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(modes.vectors.column(3).dotc(&bright).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_hamiltonian_has_identity_eigenvectors() {
        let h = OperatorMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(2.0, 0.0),
        ])))
        .unwrap();
        let m = eigenmodes(&h).unwrap();
        assert_eq!(m.values, vec![-1.0, 2.0, 3.0]);
        for (col, row) in [(0, 1), (1, 2), (2, 0)] {
            assert_abs_diff_eq!(m.vectors[(row, col)].norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn addressed_exchange_splitting_matches_two_by_two() {
        let b = pair_basis();
        let mut spec = HamiltonianSpec::new(2).with_light_shift(vec![4.8, 0.0]);
        spec.couplings.set(0, 1, 0.40);
        let f = eigenmodes(&build_hamiltonian(&b, &spec).unwrap()).unwrap().frequencies();
        // exchange block [[δ, U], [U, 0]] : eigenvalues (δ ± √(δ² + 4U²))/2
        let disc = (4.8f64 * 4.8 + 4.0 * 0.16).sqrt();
        let block: Vec<f64> = f.iter().copied().filter(|x| x.abs() > 1e-9 && (x - 4.8).abs() > 1e-9).collect();
        assert_eq!(block.len(), 2);
        assert_abs_diff_eq!(block[1] - block[0], disc, epsilon = 1e-12);
        assert_abs_diff_eq!(disc, 4.866, epsilon = 1e-3);
    }

    #[test]
    fn non_hermitian_input_is_refused() {
        let b = ProductBasis::new(LevelScheme::spin_half(), 1).unwrap();
        let spec = HamiltonianSpec::new(1).with_scattering(vec![0.03]);
        let h = build_hamiltonian(&b, &spec).unwrap();
        assert!(matches!(eigenmodes(&h), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn drive_matrix_elements() {
        let b = pair_basis();
        let drive = drive_operator(&b, 1.6, 0.0).unwrap();
        let (bright, dark) = bright_dark(&b);
        let uu = b.ket_str("uu").unwrap();
        assert_abs_diff_eq!(drive_matrix_element(&drive, &bright, &uu).unwrap(), SQRT_2 * 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(drive_matrix_element(&drive, &bright, &uu).unwrap(), 1.1314, epsilon = 1e-4);
        assert_eq!(drive_matrix_element(&drive, &dark, &uu).unwrap(), 0.0);

        let one = ProductBasis::new(LevelScheme::spin_half(), 1).unwrap();
        let d1 = drive_operator(&one, 1.6, 0.3).unwrap();
        let el = drive_matrix_element(&d1, &one.ket_str("d").unwrap(), &one.ket_str("u").unwrap()).unwrap();
        assert_abs_diff_eq!(el, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn drive_phase_convention() {
        let one = ProductBasis::new(LevelScheme::spin_half(), 1).unwrap();
        let d = drive_operator(&one, 1.0, 0.7).unwrap();
        let up = one.ket_str("u").unwrap();
        let down = one.ket_str("d").unwrap();
        let el = d.matrix_element(&up, &down).unwrap();
        assert_abs_diff_eq!(el.arg(), -0.7, epsilon = 1e-12);
    }

    #[test]
    fn raman_and_zero_level_terms() {
        let b = ProductBasis::new(LevelScheme::new(true, false), 1).unwrap();
        let spec = HamiltonianSpec::new(1)
            .with_light_shift(vec![4.8])
            .with_raman(vec![RamanTerm {
                rabi: 5.0,
                zeeman_split: 15.0,
                zero_shift: 1.0,
            }]);
        let h = build_hamiltonian(&b, &spec).unwrap();
        let (u, z) = (0, 2);
        assert_abs_diff_eq!(h.matrix()[(z, z)].re / TAU, -14.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.matrix()[(u, u)].re / TAU, 4.8, epsilon = 1e-12);
        assert_abs_diff_eq!(h.matrix()[(u, z)].re / TAU, 2.5, epsilon = 1e-12);
        assert!(h.is_hermitian());
    }

    #[test]
    fn ground_level_is_inert() {
        let b = ProductBasis::new(LevelScheme::new(false, true), 2).unwrap();
        let mut spec = HamiltonianSpec::new(2)
            .with_microwave(Microwave::new(1.0, 0.3))
            .with_light_shift(vec![2.0, 1.0]);
        spec.couplings.set(0, 1, 0.5);
        let h = build_hamiltonian(&b, &spec).unwrap();
        let g = b.index(&[Level::Ground, Level::Ground]).unwrap();
        for k in 0..b.dim() {
            assert_eq!(h.matrix()[(g, k)].norm(), 0.0);
            assert_eq!(h.matrix()[(k, g)].norm(), 0.0);
        }
    }

    #[test]
    fn scattering_is_anti_hermitian_on_up() {
        let b = ProductBasis::new(LevelScheme::spin_half(), 1).unwrap();
        let h = build_hamiltonian(&b, &HamiltonianSpec::new(1).with_scattering(vec![0.2])).unwrap();
        assert_abs_diff_eq!(h.matrix()[(0, 0)].im, -0.1, epsilon = 1e-15);
        assert_eq!(h.matrix()[(1, 1)].im, 0.0);
    }
}
