//! Piecewise-constant time evolution.
//!
//! A [`Schedule`] is a list of [`Segment`]s, each holding the controls of one
//! epoch. [`evolve`] propagates exactly with `exp(−iHt)`: through the
//! eigendecomposition when `H` is Hermitian, or through a dense matrix
//! exponential when scattering makes it non-Hermitian (norm loss then equals
//! scattered probability). [`integrate_reference`] is an independent fixed-step
//! RK4 integrator kept for cross-validation only.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::spinmodel::{build_hamiltonian, eigenmodes, HamiltonianSpec, Level, OperatorMatrix, ProductBasis};

const TIME_EPS: f64 = 1e-12;

/// Complex amplitudes over a product basis. The squared norm drops below one
/// only through scattering loss.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    basis: ProductBasis,
    amplitudes: DVector<Complex64>,
}

impl QuantumState {
    pub fn new(basis: ProductBasis, amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::Dimension {
                what: "state amplitudes",
                expected: basis.dim(),
                found: amplitudes.len(),
            });
        }
        let n2 = amplitudes.norm_squared();
        if !(n2 > 0.0) || n2 > 1.0 + 1e-9 || !n2.is_finite() {
            return Err(Error::domain(format!("state norm² must lie in (0, 1], got {n2}")));
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn basis_state(basis: &ProductBasis, levels: &[Level]) -> Result<Self> {
        let v = basis.ket(levels)?;
        Ok(Self {
            basis: basis.clone(),
            amplitudes: v,
        })
    }

    /// Basis state from a label such as `"ud"`.
    pub fn from_label(basis: &ProductBasis, label: &str) -> Result<Self> {
        let v = basis.ket_str(label)?;
        Ok(Self {
            basis: basis.clone(),
            amplitudes: v,
        })
    }

    /// `(|a⟩ + e^{iθ}|b⟩)/√2` for two distinct basis labels.
    pub fn superposition(basis: &ProductBasis, a: &str, b: &str, theta: f64) -> Result<Self> {
        let ka = basis.ket_str(a)?;
        let kb = basis.ket_str(b)?;
        let v = (ka + kb * Complex64::from_polar(1.0, theta)) * Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self::new(basis.clone(), v)
    }

    pub fn basis(&self) -> &ProductBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn amplitude(&self, label: &str) -> Result<Complex64> {
        Ok(self.amplitudes[self.basis.index(&parse_levels(label)?)?])
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &QuantumState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }

    /// Distance after removing the global phase.
    pub fn distance_up_to_phase(&self, other: &QuantumState) -> f64 {
        let ip = self.amplitudes.dotc(&other.amplitudes);
        let phase = if ip.norm() > 0.0 { ip / ip.norm() } else { Complex64::new(1.0, 0.0) };
        (&self.amplitudes * phase - &other.amplitudes).norm()
    }

    pub fn distance(&self, other: &QuantumState) -> f64 {
        (&self.amplitudes - &other.amplitudes).norm()
    }

    pub(crate) fn with_amplitudes(&self, amplitudes: DVector<Complex64>) -> Self {
        Self {
            basis: self.basis.clone(),
            amplitudes,
        }
    }

    pub fn populations(&self, patterns: &[&str]) -> Result<Vec<f64>> {
        populations(self, patterns)
    }
}

fn parse_levels(label: &str) -> Result<Vec<Level>> {
    label
        .chars()
        .map(|c| {
            Level::from_symbol(c).ok_or_else(|| Error::Pattern {
                pattern: label.to_string(),
                reason: format!("unknown level symbol `{c}`"),
            })
        })
        .collect()
}

/// Per-atom basis pattern; `None` is a wildcard (`*`, `·`, `.` or `?`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern(Vec<Option<Level>>);

impl Pattern {
    pub fn parse(text: &str, n_atoms: usize) -> Result<Self> {
        let err = |reason: String| Error::Pattern {
            pattern: text.to_string(),
            reason,
        };
        let slots = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '*' | '·' | '.' | '?' => Ok(None),
                c => Level::from_symbol(c).map(Some).ok_or_else(|| err(format!("unknown symbol `{c}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if slots.len() != n_atoms {
            return Err(err(format!("expected {n_atoms} atom symbols, found {}", slots.len())));
        }
        Ok(Self(slots))
    }

    pub fn matches(&self, levels: &[Level]) -> bool {
        self.0.iter().zip(levels).all(|(p, l)| p.map_or(true, |p| p == *l))
    }
}

/// Absolute probabilities of the given basis patterns.
pub fn populations(state: &QuantumState, patterns: &[&str]) -> Result<Vec<f64>> {
    let basis = state.basis();
    let parsed = patterns
        .iter()
        .map(|p| Pattern::parse(p, basis.n_atoms()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; parsed.len()];
    for (k, amp) in state.amplitudes().iter().enumerate() {
        let p = amp.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let levels = basis.levels_of(k);
        for (o, pat) in out.iter_mut().zip(&parsed) {
            if pat.matches(&levels) {
                *o += p;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ramp {
    /// Instantaneous switching.
    #[default]
    None,
    /// Light shifts go linearly from the previous segment's values to this
    /// segment's values, sampled at the midpoints of `substeps` sub-intervals.
    Linear { substeps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// µs.
    pub duration: f64,
    pub spec: HamiltonianSpec,
    pub ramp: Ramp,
}

impl Segment {
    pub fn new(duration: f64, spec: HamiltonianSpec) -> Self {
        Self {
            duration,
            spec,
            ramp: Ramp::None,
        }
    }

    pub fn ramped(mut self, substeps: usize) -> Self {
        self.ramp = Ramp::Linear { substeps };
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
    record_times: Vec<f64>,
}

impl Schedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration >= 0.0) || !s.duration.is_finite() {
                return Err(Error::Schedule(format!("segment {k} has invalid duration {}", s.duration)));
            }
            if let Ramp::Linear { substeps } = s.ramp {
                if substeps < 2 {
                    return Err(Error::Schedule(format!("segment {k}: a ramp needs at least 2 substeps")));
                }
            }
        }
        if let Some(n) = segments.first().map(|s| s.spec.n_atoms()) {
            if let Some(bad) = segments.iter().find(|s| s.spec.n_atoms() != n) {
                return Err(Error::Dimension {
                    what: "segment atom count",
                    expected: n,
                    found: bad.spec.n_atoms(),
                });
            }
        }
        Ok(Self {
            segments,
            record_times: Vec::new(),
        })
    }

    /// Sets the record grid (µs from the start of the schedule).
    pub fn with_records(mut self, times: Vec<f64>) -> Result<Self> {
        let total = self.total_duration();
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Schedule("record times must be finite and non-negative".into()));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Schedule("record times must be non-decreasing".into()));
        }
        if let Some(&last) = times.last() {
            if last > total + TIME_EPS * total.max(1.0) {
                return Err(Error::Schedule(format!("record time {last} lies beyond the schedule end {total}")));
            }
        }
        self.record_times = times;
        Ok(self)
    }

    /// Records only the final state.
    pub fn with_final_record(self) -> Self {
        let total = self.total_duration();
        Self {
            record_times: vec![total],
            ..self
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn record_times(&self) -> &[f64] {
        &self.record_times
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// This schedule followed by `other`; records of `other` are shifted.
    pub fn then(&self, other: &Schedule) -> Result<Schedule> {
        let offset = self.total_duration();
        let mut segments = self.segments.clone();
        segments.extend(other.segments.iter().cloned());
        let mut records = self.record_times.clone();
        records.extend(other.record_times.iter().map(|t| t + offset));
        Schedule::new(segments)?.with_records(records)
    }

    /// Constant-Hamiltonian pieces, with ramps expanded into sub-intervals.
    fn pieces(&self) -> Vec<(f64, HamiltonianSpec)> {
        let mut out = Vec::new();
        let mut previous: Option<&Vec<f64>> = None;
        for seg in &self.segments {
            match seg.ramp {
                Ramp::None => out.push((seg.duration, seg.spec.clone())),
                Ramp::Linear { substeps } => {
                    let n = seg.spec.n_atoms();
                    let from = previous.cloned().unwrap_or_else(|| vec![0.0; n]);
                    let dt = seg.duration / substeps as f64;
                    for k in 0..substeps {
                        let x = (k as f64 + 0.5) / substeps as f64;
                        let mut spec = seg.spec.clone();
                        spec.light_shift = from
                            .iter()
                            .zip(&seg.spec.light_shift)
                            .map(|(a, b)| a + (b - a) * x)
                            .collect();
                        out.push((dt, spec));
                    }
                }
            }
            previous = Some(&seg.spec.light_shift);
        }
        out
    }
}

/// `exp(−iH·dt)` for a Hamiltonian in rad/µs and `dt` in µs.
pub fn propagator(h: &OperatorMatrix, dt: f64) -> Result<DMatrix<Complex64>> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("propagation time must be finite and ≥ 0, got {dt}")));
    }
    check_finite(h)?;
    Ok(PieceGenerator::new(h)?.matrix(dt))
}

fn check_finite(h: &OperatorMatrix) -> Result<()> {
    if h.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("Hamiltonian has non-finite entries".into()));
    }
    Ok(())
}

/// Cached generator of `exp(−iH·t)` for one constant Hamiltonian.
enum PieceGenerator {
    Hermitian {
        values: Vec<f64>,
        vectors: DMatrix<Complex64>,
    },
    General {
        h: DMatrix<Complex64>,
        cache: Vec<(u64, DMatrix<Complex64>)>,
    },
}

impl PieceGenerator {
    fn new(h: &OperatorMatrix) -> Result<Self> {
        check_finite(h)?;
        if h.is_hermitian() {
            let modes = eigenmodes(h)?;
            Ok(Self::Hermitian {
                values: modes.values,
                vectors: modes.vectors,
            })
        } else {
            Ok(Self::General {
                h: h.matrix().clone(),
                cache: Vec::new(),
            })
        }
    }

    fn matrix(&mut self, dt: f64) -> DMatrix<Complex64> {
        match self {
            Self::Hermitian { values, vectors } => {
                let phases = DVector::from_iterator(
                    values.len(),
                    values.iter().map(|&l| Complex64::from_polar(1.0, -l * dt)),
                );
                let mut scaled = vectors.clone();
                for (mut col, ph) in scaled.column_iter_mut().zip(phases.iter()) {
                    col *= *ph;
                }
                scaled * vectors.adjoint()
            }
            Self::General { h, cache } => {
                let key = dt.to_bits();
                if let Some((_, m)) = cache.iter().find(|(k, _)| *k == key) {
                    return m.clone();
                }
                let m = (&*h * Complex64::new(0.0, -dt)).exp();
                if cache.len() < 64 {
                    cache.push((key, m.clone()));
                }
                m
            }
        }
    }

    fn apply(&mut self, dt: f64, psi: &DVector<Complex64>) -> DVector<Complex64> {
        if dt <= 0.0 {
            return psi.clone();
        }
        match self {
            Self::Hermitian { values, vectors } => {
                let mut c = vectors.adjoint() * psi;
                for (ck, &l) in c.iter_mut().zip(values.iter()) {
                    *ck *= Complex64::from_polar(1.0, -l * dt);
                }
                &*vectors * c
            }
            Self::General { .. } => self.matrix(dt) * psi,
        }
    }
}

fn check_state(state: &QuantumState, schedule: &Schedule) -> Result<()> {
    if let Some(seg) = schedule.segments().first() {
        let n = state.basis().n_atoms();
        if seg.spec.n_atoms() != n {
            return Err(Error::Dimension {
                what: "schedule atom count",
                expected: n,
                found: seg.spec.n_atoms(),
            });
        }
    }
    Ok(())
}

/// Exact piecewise-constant evolution; returns the state at every record time.
pub fn evolve(state: &QuantumState, schedule: &Schedule) -> Result<Vec<(f64, QuantumState)>> {
    check_state(state, schedule)?;
    let basis = state.basis();
    let records = schedule.record_times();
    let mut out = Vec::with_capacity(records.len());
    let mut next = 0;
    let mut psi = state.amplitudes().clone();
    let mut t = 0.0;

    for (duration, spec) in schedule.pieces() {
        if duration == 0.0 {
            continue;
        }
        let t_end = t + duration;
        let mut generator: Option<PieceGenerator> = None;
        let ensure = |g: &mut Option<PieceGenerator>| -> Result<()> {
            if g.is_none() {
                *g = Some(PieceGenerator::new(&build_hamiltonian(basis, &spec)?)?);
            }
            Ok(())
        };
        while next < records.len() && records[next] <= t_end + TIME_EPS {
            ensure(&mut generator)?;
            let g = generator.as_mut().expect("initialized");
            let amps = g.apply((records[next] - t).max(0.0), &psi);
            out.push((records[next], state.with_amplitudes(amps)));
            next += 1;
        }
        ensure(&mut generator)?;
        psi = generator.as_mut().expect("initialized").apply(duration, &psi);
        check_amplitudes(&psi)?;
        t = t_end;
    }
    for &r in &records[next..] {
        out.push((r, state.with_amplitudes(psi.clone())));
    }
    Ok(out)
}

/// Final state after the whole schedule.
pub fn evolve_final(state: &QuantumState, schedule: &Schedule) -> Result<QuantumState> {
    let s = schedule.clone().with_final_record();
    Ok(evolve(state, &s)?.pop().expect("one record").1)
}

fn check_amplitudes(psi: &DVector<Complex64>) -> Result<()> {
    if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric("state amplitudes became non-finite".into()));
    }
    Ok(())
}

/// Fixed-step classical RK4 on `dψ/dt = −iHψ`. Each constant piece is cut at
/// record times and split into equal steps no longer than `step`.
pub fn integrate_reference(
    state: &QuantumState,
    schedule: &Schedule,
    step: f64,
) -> Result<Vec<(f64, QuantumState)>> {
    check_state(state, schedule)?;
    let min_duration = schedule
        .segments()
        .iter()
        .map(|s| s.duration)
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(step > 0.0) || (min_duration.is_finite() && step > min_duration / 10.0 * (1.0 + 1e-12)) {
        return Err(Error::Schedule(format!(
            "reference step {step} µs exceeds a tenth of the shortest segment ({min_duration} µs)"
        )));
    }
    let basis = state.basis();
    let records = schedule.record_times();
    let mut out = Vec::with_capacity(records.len());
    let mut next = 0;
    let mut psi = state.amplitudes().clone();
    let mut t = 0.0;

    for (duration, spec) in schedule.pieces() {
        if duration == 0.0 {
            continue;
        }
        let h = build_hamiltonian(basis, &spec)?.into_matrix() * Complex64::new(0.0, -1.0);
        let t_end = t + duration;
        let mut cursor = t;
        while next < records.len() && records[next] <= t_end + TIME_EPS {
            let r = records[next].max(cursor);
            psi = rk4_span(&h, &psi, r - cursor, step);
            cursor = r;
            out.push((records[next], state.with_amplitudes(psi.clone())));
            next += 1;
        }
        psi = rk4_span(&h, &psi, t_end - cursor, step);
        check_amplitudes(&psi)?;
        t = t_end;
    }
    for &r in &records[next..] {
        out.push((r, state.with_amplitudes(psi.clone())));
    }
    Ok(out)
}

/// `generator` is `−iH`.
fn rk4_span(generator: &DMatrix<Complex64>, psi: &DVector<Complex64>, span: f64, step: f64) -> DVector<Complex64> {
    if span <= 0.0 {
        return psi.clone();
    }
    let n = (span / step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let half = Complex64::new(h / 2.0, 0.0);
    let full = Complex64::new(h, 0.0);
    let sixth = Complex64::new(h / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    let mut y = psi.clone();
    for _ in 0..n {
        let k1 = generator * &y;
        let k2 = generator * (&y + &k1 * half);
        let k3 = generator * (&y + &k2 * half);
        let k4 = generator * (&y + &k3 * full);
        y += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    y
}

/// A scattering event recorded by [`evolve_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub atom: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Normalized states at the record times.
    pub records: Vec<(f64, QuantumState)>,
    pub jumps: Vec<Jump>,
}

/// One quantum-jump trajectory. Scattering events reset the atom to the inert
/// ground level (jump operator `√Γᵢ |g⟩⟨↑|ᵢ`), so the scheme must contain
/// `ground` whenever some Γᵢ > 0. Jumps are resolved to `max_step`.
pub fn evolve_trajectory<R: Rng + ?Sized>(
    state: &QuantumState,
    schedule: &Schedule,
    max_step: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    check_state(state, schedule)?;
    if !(max_step > 0.0) {
        return Err(Error::Schedule("trajectory step must be positive".into()));
    }
    let basis = state.basis();
    let lossy = schedule.segments().iter().any(|s| s.spec.is_lossy());
    if lossy && !basis.scheme().has(Level::Ground) {
        return Err(Error::domain("jump trajectories need the ground level in the scheme"));
    }
    let records = schedule.record_times();
    let mut out = Vec::with_capacity(records.len());
    let mut jumps = Vec::new();
    let mut next = 0;
    let mut psi = state.amplitudes().clone();
    psi.unscale_mut(psi.norm());
    let mut threshold: f64 = rng.gen();
    let mut t = 0.0;

    for (duration, spec) in schedule.pieces() {
        if duration == 0.0 {
            continue;
        }
        let mut generator = PieceGenerator::new(&build_hamiltonian(basis, &spec)?)?;
        let t_end = t + duration;
        while t < t_end - TIME_EPS {
            let stop = records
                .get(next)
                .copied()
                .filter(|&r| r < t_end)
                .unwrap_or(t_end)
                .min(t + max_step)
                .max(t);
            psi = generator.apply(stop - t, &psi);
            t = stop;
            if psi.norm_squared() < threshold {
                let atom = choose_jump(basis, &spec, &psi, rng);
                psi = apply_jump(basis, &psi, atom);
                jumps.push(Jump { time: t, atom });
                threshold = rng.gen();
            }
            while next < records.len() && records[next] <= t + TIME_EPS {
                let n = psi.norm();
                out.push((records[next], state.with_amplitudes(psi.unscale(n))));
                next += 1;
            }
        }
        t = t_end;
    }
    let n = psi.norm();
    for &r in &records[next..] {
        out.push((r, state.with_amplitudes(psi.unscale(n))));
    }
    Ok(Trajectory { records: out, jumps })
}

fn choose_jump<R: Rng + ?Sized>(basis: &ProductBasis, spec: &HamiltonianSpec, psi: &DVector<Complex64>, rng: &mut R) -> usize {
    let weights: Vec<f64> = (0..basis.n_atoms())
        .map(|i| {
            let up: f64 = psi
                .iter()
                .enumerate()
                .filter(|(k, _)| basis.level(*k, i) == Level::Up)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            spec.scattering[i] * up
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn apply_jump(basis: &ProductBasis, psi: &DVector<Complex64>, atom: usize) -> DVector<Complex64> {
    let mut out = DVector::zeros(psi.len());
    for (k, z) in psi.iter().enumerate() {
        if basis.level(k, atom) == Level::Up {
            let mut levels = basis.levels_of(k);
            levels[atom] = Level::Ground;
            out[basis.index(&levels).expect("ground present")] += *z;
        }
    }
    let n = out.norm();
    if n > 0.0 { out.unscale(n) } else { psi.unscale(psi.norm()) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinmodel::{LevelScheme, Microwave};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn one() -> ProductBasis {
        ProductBasis::new(LevelScheme::spin_half(), 1).unwrap()
    }

    fn two() -> ProductBasis {
        ProductBasis::new(LevelScheme::spin_half(), 2).unwrap()
    }

    fn exchange(u: f64) -> HamiltonianSpec {
        let mut s = HamiltonianSpec::new(2);
        s.couplings.set(0, 1, u);
        s
    }

    fn unitarity_error(m: &DMatrix<Complex64>) -> f64 {
        let id = DMatrix::<Complex64>::identity(m.nrows(), m.ncols());
        (m.adjoint() * m - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn propagator_identity_at_zero_time() {
        let h = build_hamiltonian(&two(), &exchange(0.4).with_microwave(Microwave::new(1.0, 0.2))).unwrap();
        let p = propagator(&h, 0.0).unwrap();
        assert!(unitarity_error(&p) < 1e-13);
        assert!((p - DMatrix::<Complex64>::identity(4, 4)).norm() < 1e-13);
    }

    #[test]
    fn single_atom_pi_pulse() {
        let b = one();
        let h = build_hamiltonian(&b, &HamiltonianSpec::new(1).with_microwave(Microwave::new(1.6, 0.0))).unwrap();
        let p = propagator(&h, 0.3125).unwrap();
        assert!(unitarity_error(&p) < 1e-12);
        let out = &p * b.ket_str("u").unwrap();
        assert_abs_diff_eq!(out[1].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn half_exchange_period() {
        let b = two();
        let h = build_hamiltonian(&b, &exchange(0.40)).unwrap();
        let out = propagator(&h, 0.625).unwrap() * b.ket_str("ud").unwrap();
        assert_abs_diff_eq!(out[2].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lossy_propagator_is_contractive() {
        let b = two();
        let spec = exchange(0.4).with_microwave(Microwave::new(1.0, 0.0)).with_scattering(vec![0.5, 0.0]);
        let h = build_hamiltonian(&b, &spec).unwrap();
        let p = propagator(&h, 2.0).unwrap();
        let sv = p.singular_values();
        assert!(sv.iter().all(|&s| s <= 1.0 + 1e-10));
        assert!(sv.iter().any(|&s| s < 0.99));
    }

    #[test]
    fn propagator_rejects_bad_input() {
        let b = one();
        let h = build_hamiltonian(&b, &HamiltonianSpec::new(1)).unwrap();
        assert!(propagator(&h, -1.0).is_err());
        let mut m = h.into_matrix();
        m[(0, 0)] = Complex64::new(f64::NAN, 0.0);
        let bad = OperatorMatrix::from_matrix(m).unwrap();
        assert!(matches!(propagator(&bad, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn populations_with_wildcards() {
        let b = two();
        let s = QuantumState::from_label(&b, "ud").unwrap();
        assert_eq!(populations(&s, &["ud"]).unwrap(), vec![1.0]);
        let s = QuantumState::superposition(&b, "ud", "du", 0.0).unwrap();
        let p = populations(&s, &["u*", "↑·", "*d", "uu"]).unwrap();
        for (x, y) in p.iter().zip([0.5, 0.5, 0.5, 0.0]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
        assert!(matches!(populations(&s, &["u"]), Err(Error::Pattern { .. })));
        assert!(matches!(populations(&s, &["ux"]), Err(Error::Pattern { .. })));
    }

    #[test]
    fn quarter_exchange_period_splits_population() {
        let b = two();
        let s = QuantumState::from_label(&b, "ud").unwrap();
        let sched = Schedule::new(vec![Segment::new(0.3125, exchange(0.4))]).unwrap().with_final_record();
        let out = evolve(&s, &sched).unwrap();
        assert_abs_diff_eq!(out[0].1.populations(&["ud"]).unwrap()[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn records_and_zero_duration() {
        let b = two();
        let s = QuantumState::from_label(&b, "ud").unwrap();
        let empty = Schedule::new(vec![]).unwrap().with_records(vec![0.0]).unwrap();
        assert_eq!(evolve(&s, &empty).unwrap()[0].1, s);
        let zero = Schedule::new(vec![Segment::new(0.0, exchange(0.4))]).unwrap().with_final_record();
        assert_eq!(evolve(&s, &zero).unwrap()[0].1, s);

        let sched = Schedule::new(vec![Segment::new(1.0, exchange(0.4)), Segment::new(1.0, HamiltonianSpec::new(2))])
            .unwrap()
            .with_records(vec![0.0, 0.5, 1.0, 1.5, 2.0])
            .unwrap();
        let out = evolve(&s, &sched).unwrap();
        assert_eq!(out.len(), 5);
        let p: Vec<f64> = out.iter().map(|(_, st)| st.populations(&["ud"]).unwrap()[0]).collect();
        assert_abs_diff_eq!(p[1], (2.0 * PI * 0.4 * 0.5).cos().powi(2), epsilon = 1e-12);
        // frozen by the empty second segment
        assert_abs_diff_eq!(p[2], p[3], epsilon = 1e-12);
        assert_abs_diff_eq!(p[3], p[4], epsilon = 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::new(vec![Segment::new(-1.0, HamiltonianSpec::new(1))]).is_err());
        assert!(Schedule::new(vec![Segment::new(1.0, HamiltonianSpec::new(1)).ramped(1)]).is_err());
        let s = Schedule::new(vec![Segment::new(1.0, HamiltonianSpec::new(1))]).unwrap();
        assert!(s.clone().with_records(vec![0.5, 0.2]).is_err());
        assert!(s.clone().with_records(vec![1.5]).is_err());
        assert!(Schedule::new(vec![Segment::new(1.0, HamiltonianSpec::new(1)), Segment::new(1.0, HamiltonianSpec::new(2))]).is_err());
        let st = QuantumState::from_label(&two(), "ud").unwrap();
        assert!(matches!(evolve(&st, &s), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reference_integrator_refuses_large_steps() {
        let s = Schedule::new(vec![Segment::new(0.1, exchange(0.4))]).unwrap().with_final_record();
        let st = QuantumState::from_label(&two(), "ud").unwrap();
        assert!(matches!(integrate_reference(&st, &s, 0.02), Err(Error::Schedule(_))));
        assert!(integrate_reference(&st, &s, 0.01).is_ok());
    }

    #[test]
    fn reference_integrator_identity_on_zero_hamiltonian() {
        let st = QuantumState::superposition(&two(), "ud", "dd", 0.3).unwrap();
        let s = Schedule::new(vec![Segment::new(1.0, HamiltonianSpec::new(2))]).unwrap().with_final_record();
        let out = integrate_reference(&st, &s, 0.01).unwrap();
        assert!(out[0].1.distance(&st) < 1e-15);
    }

    #[test]
    fn rabi_closed_form_both_routes() {
        let b = one();
        let st = QuantumState::from_label(&b, "u").unwrap();
        let omega = 1.6;
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let s = Schedule::new(vec![Segment::new(2.0, HamiltonianSpec::new(1).with_microwave(Microwave::new(omega, 0.0)))])
            .unwrap()
            .with_records(times.clone())
            .unwrap();
        let exact = evolve(&st, &s).unwrap();
        let reference = integrate_reference(&st, &s, 1e-3).unwrap();
        for ((t, a), (_, b)) in exact.iter().zip(&reference) {
            let closed = (PI * omega * t).sin().powi(2);
            assert_abs_diff_eq!(a.populations(&["d"]).unwrap()[0], closed, epsilon = 1e-12);
            assert_abs_diff_eq!(b.populations(&["d"]).unwrap()[0], closed, epsilon = 1e-8);
        }
    }

    #[test]
    fn freeze_bound_generalized_rabi() {
        let b = two();
        let (u, d) = (0.40, 4.8);
        let spec = exchange(u).with_light_shift(vec![d, 0.0]);
        let st = QuantumState::from_label(&b, "du").unwrap();
        let period = 1.0 / (d * d + 4.0 * u * u).sqrt();
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * period / 1000.0).collect();
        let s = Schedule::new(vec![Segment::new(2.0 * period, spec)]).unwrap().with_records(times).unwrap();
        let max = evolve(&st, &s)
            .unwrap()
            .iter()
            .map(|(_, x)| x.populations(&["ud"]).unwrap()[0])
            .fold(0.0, f64::max);
        let bound = u * u / (u * u + (d / 2.0).powi(2));
        assert_abs_diff_eq!(max, bound, epsilon = 1e-6);
        assert_abs_diff_eq!(bound, 0.0270, epsilon = 1e-4);
    }

    #[test]
    fn imprint_two_pi_leaves_state_nearly_unchanged() {
        let b = two();
        let st = QuantumState::superposition(&b, "ud", "du", -PI / 2.0).unwrap();
        let spec = exchange(0.40).with_light_shift(vec![4.8, 0.0]);
        let tau = 1.0 / 4.8;
        assert_abs_diff_eq!(tau, 0.20833, epsilon = 1e-5);
        let s = Schedule::new(vec![Segment::new(tau, spec)]).unwrap();
        let out = evolve_final(&st, &s).unwrap();
        let p = out.populations(&["ud"]).unwrap()[0];
        assert!((p - 0.5).abs() <= 0.027);
        assert!(out.overlap(&st) > 0.97);
    }

    #[test]
    fn ramp_interpolates_from_previous_segment() {
        let b = one();
        let st = QuantumState::superposition(&b, "u", "d", 0.0).unwrap();
        // phase of |↑⟩ relative to |↓⟩ after a 0→δ ramp of length T is −2π δ T/2
        let (delta, t) = (3.0, 0.4);
        let s = Schedule::new(vec![Segment::new(t, HamiltonianSpec::new(1).with_light_shift(vec![delta])).ramped(8)]).unwrap();
        let out = evolve_final(&st, &s).unwrap();
        let rel = out.amplitude("u").unwrap() / out.amplitude("d").unwrap();
        assert_abs_diff_eq!(rel.arg(), -(2.0 * PI * delta * t / 2.0 - 2.0 * PI), epsilon = 1e-12);
    }

    #[test]
    fn trajectory_without_loss_matches_evolve() {
        use rand::SeedableRng;
        let b = two();
        let st = QuantumState::from_label(&b, "ud").unwrap();
        let s = Schedule::new(vec![Segment::new(1.0, exchange(0.4).with_microwave(Microwave::new(0.5, 0.1)))])
            .unwrap()
            .with_records(vec![0.25, 0.5, 1.0])
            .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let traj = evolve_trajectory(&st, &s, 0.01, &mut rng).unwrap();
        assert!(traj.jumps.is_empty());
        for ((_, a), (_, b)) in traj.records.iter().zip(evolve(&st, &s).unwrap().iter()) {
            assert!(a.distance(b) < 1e-10);
        }
    }

    #[test]
    fn trajectories_reproduce_loss_rate() {
        use rand::SeedableRng;
        let b = ProductBasis::new(LevelScheme::new(false, true), 1).unwrap();
        let st = QuantumState::from_label(&b, "u").unwrap();
        let gamma = 0.5;
        let s = Schedule::new(vec![Segment::new(2.0, HamiltonianSpec::new(1).with_scattering(vec![gamma]))])
            .unwrap()
            .with_final_record();
        let n = 4000;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut jumped = 0;
        for _ in 0..n {
            let tr = evolve_trajectory(&st, &s, 0.01, &mut rng).unwrap();
            if !tr.jumps.is_empty() {
                jumped += 1;
                assert_eq!(tr.records[0].1.populations(&["g"]).unwrap()[0], 1.0);
            }
        }
        let p = jumped as f64 / n as f64;
        let expected = 1.0 - (-gamma * 2.0f64).exp();
        assert!((p - expected).abs() < 4.0 * (expected * (1.0 - expected) / n as f64).sqrt() + 0.005);

        let no_ground = ProductBasis::new(LevelScheme::spin_half(), 1).unwrap();
        let st = QuantumState::from_label(&no_ground, "u").unwrap();
        assert!(evolve_trajectory(&st, &s, 0.01, &mut rng).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_spec() -> impl Strategy<Value = HamiltonianSpec> {
            (0.0f64..3.0, -3.0f64..3.0, 0.0f64..6.28, -5.0f64..5.0, -5.0f64..5.0, -2.0f64..2.0).prop_map(
                |(om, det, ph, d1, d2, u)| {
                    let mut s = HamiltonianSpec::new(2)
                        .with_microwave(Microwave { rabi: om, detuning: det, phase: ph })
                        .with_light_shift(vec![d1, d2]);
                    s.couplings.set(0, 1, u);
                    s
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn norm_is_conserved(specs in prop::collection::vec((arb_spec(), 0.0f64..25.0), 1..5)) {
                let b = two();
                let st = QuantumState::superposition(&b, "uu", "du", 0.4).unwrap();
                let segs = specs.into_iter().map(|(s, d)| Segment::new(d, s)).collect();
                let s = Schedule::new(segs).unwrap();
                let out = evolve_final(&st, &s).unwrap();
                prop_assert!((1.0 - out.norm_sqr()).abs() < 1e-10);
            }

            #[test]
            fn composition(a in (arb_spec(), 0.0f64..3.0), c in (arb_spec(), 0.0f64..3.0)) {
                let b = two();
                let st = QuantumState::from_label(&b, "ud").unwrap();
                let sa = Schedule::new(vec![Segment::new(a.1, a.0)]).unwrap();
                let sc = Schedule::new(vec![Segment::new(c.1, c.0)]).unwrap();
                let two_step = evolve_final(&evolve_final(&st, &sa).unwrap(), &sc).unwrap();
                let joined = evolve_final(&st, &sa.then(&sc).unwrap()).unwrap();
                prop_assert!(two_step.distance(&joined) < 1e-10);
            }

            #[test]
            fn u_sign_does_not_change_populations(u in -3.0f64..3.0, d1 in -4.0f64..4.0, t in 0.0f64..5.0) {
                let b = two();
                let st = QuantumState::from_label(&b, "ud").unwrap();
                let run = |u: f64| {
                    let s = Schedule::new(vec![Segment::new(t, exchange(u).with_light_shift(vec![d1, 0.0]))]).unwrap();
                    evolve_final(&st, &s).unwrap().probabilities()
                };
                let (p, m) = (run(u), run(-u));
                let dist: f64 = p.iter().zip(&m).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                prop_assert!(dist < 1e-12);
            }

            #[test]
            fn lossy_norm_non_increasing(g in 0.0f64..1.0, om in 0.0f64..2.0) {
                let b = two();
                let st = QuantumState::from_label(&b, "uu").unwrap();
                let spec = exchange(0.4).with_microwave(Microwave::new(om, 0.0)).with_scattering(vec![g, 0.0]);
                let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
                let s = Schedule::new(vec![Segment::new(3.0, spec)]).unwrap().with_records(times).unwrap();
                let norms: Vec<f64> = evolve(&st, &s).unwrap().iter().map(|(_, x)| x.norm_sqr()).collect();
                prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            }
        }
    }
}
