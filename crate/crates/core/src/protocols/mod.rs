//! Canned experiments: light-shift spectroscopy, two-atom microwave
//! spectroscopy, enhanced Rabi oscillations, spin exchange with freeze windows
//! and phase imprints, and the Raman leakage probe.
//!
//! Every scan point is simulated independently; points run in parallel and
//! shot noise for point `k` is drawn from [`derived_rng`]`(seed, k)`, so
//! results do not depend on the number of worker threads.

pub mod fit;
mod exchange;
mod rabi;
mod spectroscopy;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evolve::{evolve, QuantumState, Schedule};
use crate::optics::{addressing_effect, AddressingEffect, AddressingOptions, BeamSpec};
use crate::readout::{
    detection_probabilities, prepare_with_inefficiency, sample_shots, DetectionDistribution, DetectionModel,
};
use crate::spinmodel::{AtomArray, HamiltonianSpec, Level, LevelScheme, Microwave, ProductBasis};

pub use exchange::{
    exchange_experiment, freeze_duration, phase_imprint, raman_leakage_probe, ExchangeParams, FreezeTiming,
    FreezeWindow, PhaseImprintParams, Preparation, RamanProbeParams,
};
pub use fit::{fit_rabi_line, fit_sinusoid, rabi_lineshape, FitError, PeakFit, SinusoidFit};
pub use rabi::{rabi_pair, RabiPairParams};
pub use spectroscopy::{lightshift_spectroscopy, spectroscopy_map, LightshiftParams, SpectroscopyMapParams};

/// Readout and sampling settings shared by all protocols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub eta: f64,
    pub detection: DetectionModel,
    /// Repetitions per point; 0 reports exact probabilities.
    pub shots: usize,
    pub seed: u64,
}

impl Default for Readout {
    fn default() -> Self {
        Self {
            eta: 1.0,
            detection: DetectionModel::default(),
            shots: 0,
            seed: 0,
        }
    }
}

/// Everything about the apparatus a protocol needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub array: AtomArray,
    pub beams: Vec<BeamSpec>,
    pub addressing: AddressingOptions,
    /// Include photon scattering from the addressing beams as loss.
    pub scattering: bool,
    /// Include the Zeeman level |0⟩ and Raman leakage into it.
    pub zero_level: bool,
    /// Include the ground level (needed when η < 1).
    pub ground_level: bool,
    pub microwave: Microwave,
    pub readout: Readout,
}

/// A constraint violated by a setup or protocol parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub(crate) fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn violations_to_error(v: Vec<Violation>) -> Result<()> {
    if v.is_empty() {
        return Ok(());
    }
    let text: Vec<String> = v.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
    Err(Error::Domain(text.join("; ")))
}

impl Setup {
    pub fn new(array: AtomArray) -> Self {
        Self {
            array,
            beams: Vec::new(),
            addressing: AddressingOptions::default(),
            scattering: false,
            zero_level: false,
            ground_level: false,
            microwave: Microwave::off(),
            readout: Readout::default(),
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let r = &self.readout;
        if !(0.0..=1.0).contains(&r.eta) {
            out.push(Violation::new("readout.eta", format!("η must lie in [0, 1], got {}", r.eta)));
        } else if r.eta < 1.0 && !self.ground_level {
            out.push(Violation::new("levels.ground", "η < 1 needs the ground level"));
        }
        if !(0.0..=1.0).contains(&r.detection.flip_probability) {
            out.push(Violation::new("readout.flip_probability", "must lie in [0, 1]"));
        }
        for (k, beam) in self.beams.iter().enumerate() {
            if let Err(e) = beam.validate() {
                out.push(Violation::new(format!("beams[{k}]"), e.to_string()));
            }
        }
        let mw = &self.microwave;
        if !(mw.rabi >= 0.0) || !mw.rabi.is_finite() {
            out.push(Violation::new("microwave.rabi_mhz", "must be finite and ≥ 0"));
        }
        if !mw.detuning.is_finite() || !mw.phase.is_finite() {
            out.push(Violation::new("microwave", "detuning and phase must be finite"));
        }
        if !(self.addressing.tau_6p_ns > 0.0) {
            out.push(Violation::new("addressing.tau_6p_ns", "must be > 0"));
        }
        out
    }

    pub(crate) fn scheme(&self) -> LevelScheme {
        LevelScheme::new(self.zero_level, self.ground_level)
    }

    pub(crate) fn basis(&self, n_atoms: usize) -> Result<ProductBasis> {
        ProductBasis::new(self.scheme(), n_atoms)
    }

    /// Beam effect on every atom of `array`.
    pub fn effect_on(&self, array: &AtomArray) -> Result<AddressingEffect> {
        addressing_effect(&self.beams, array, &self.addressing)
    }

    /// Hamiltonian of `array` under `microwave` with the addressing `effect`
    /// applied, honouring the scattering and |0⟩ switches.
    pub(crate) fn spec(&self, array: &AtomArray, microwave: Microwave, effect: &AddressingEffect) -> Result<HamiltonianSpec> {
        let mut spec = HamiltonianSpec::from_array(array)?
            .with_microwave(microwave)
            .with_light_shift(effect.light_shift.clone());
        if self.scattering {
            spec = spec.with_scattering(effect.scattering.clone());
        }
        if self.zero_level {
            spec = spec.with_raman(effect.raman_terms());
        }
        Ok(spec)
    }

    pub(crate) fn single_atom(&self, atom: usize) -> Result<AtomArray> {
        AtomArray::new(vec![self.array.positions()[atom]], self.array.c3())
    }

    pub(crate) fn pair_coupling(&self) -> Result<f64> {
        if self.array.len() < 2 {
            return Err(Error::domain("this protocol needs at least two atoms"));
        }
        self.array.pair_coupling(0, 1)
    }
}

/// Detection distributions at every record time of `schedule`, averaged over
/// the preparation mixture of `recipe`.
pub(crate) fn detect(
    setup: &Setup,
    basis: &ProductBasis,
    recipe: &[Level],
    schedule: &Schedule,
) -> Result<Vec<DetectionDistribution>> {
    let branches = prepare_with_inefficiency(basis, recipe, setup.readout.eta)?;
    let lossy = lossy_atoms(schedule, basis.n_atoms());
    let traces = branches
        .iter()
        .map(|b| evolve(&b.state, schedule))
        .collect::<Result<Vec<_>>>()?;
    (0..schedule.record_times().len())
        .map(|k| {
            let mixture: Vec<(f64, QuantumState)> = branches
                .iter()
                .zip(&traces)
                .map(|(b, trace)| (b.probability, trace[k].1.clone()))
                .collect();
            detection_probabilities(&mixture, &lossy, &setup.readout.detection)
        })
        .collect()
}

pub(crate) fn lossy_atoms(schedule: &Schedule, n: usize) -> Vec<bool> {
    (0..n)
        .map(|i| schedule.segments().iter().any(|s| s.spec.scattering.get(i).is_some_and(|&g| g > 0.0)))
        .collect()
}

/// Observed pattern probabilities and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Observed {
    pub probabilities: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub(crate) fn observe(readout: &Readout, dist: &DetectionDistribution, stream: u64) -> Result<Observed> {
    if readout.shots == 0 {
        let p = dist.probabilities().to_vec();
        let n = p.len();
        return Ok(Observed {
            probabilities: p,
            stderr: vec![0.0; n],
        });
    }
    // renormalise round-off before sampling
    let total: f64 = dist.probabilities().iter().sum();
    let p: Vec<f64> = dist.probabilities().iter().map(|x| x.max(0.0) / total).collect();
    let data = sample_shots(&p, dist.n_atoms(), readout.shots, readout.seed, stream)?;
    Ok(Observed {
        probabilities: data.frequencies,
        stderr: data.stderr,
    })
}

/// Runs `f` over `items` in parallel, keeping input order.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(usize, &T) -> Result<U> + Sync) -> Result<Vec<U>> {
    items.par_iter().enumerate().map(|(k, x)| f(k, x)).collect()
}

/// Scan values: an explicit list or `points` evenly spaced values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range(GridRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn linspace(start: f64, stop: f64, points: usize) -> Self {
        Grid::Range(GridRange { start, stop, points })
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range(r) if r.points == 1 => vec![r.start],
            Grid::Range(r) => (0..r.points)
                .map(|k| {
                    if k + 1 == r.points {
                        r.stop
                    } else {
                        r.start + (r.stop - r.start) * k as f64 / (r.points - 1) as f64
                    }
                })
                .collect(),
        }
    }

    pub(crate) fn check(&self, field: &str, out: &mut Vec<Violation>) {
        if let Grid::Range(r) = self {
            if r.points == 0 {
                out.push(Violation::new(field, "a grid needs at least one point"));
            }
            if !r.start.is_finite() || !r.stop.is_finite() {
                out.push(Violation::new(field, "grid bounds must be finite"));
            }
        }
        let v = self.values();
        if v.is_empty() {
            out.push(Violation::new(field, "a grid needs at least one point"));
        } else if v.iter().any(|x| !x.is_finite()) {
            out.push(Violation::new(field, "grid values must be finite"));
        }
    }

    /// Checks a grid of times: non-negative and non-decreasing.
    pub(crate) fn check_times(&self, field: &str, out: &mut Vec<Violation>) {
        let before = out.len();
        self.check(field, out);
        if out.len() > before {
            return;
        }
        let v = self.values();
        if v.iter().any(|&t| t < 0.0) {
            out.push(Violation::new(field, "times must be ≥ 0"));
        }
        if v.windows(2).any(|w| w[1] < w[0]) {
            out.push(Violation::new(field, "times must be non-decreasing"));
        }
    }
}

/// One output column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

/// Tabulated protocol output plus fitted quantities and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub protocol: String,
    pub seed: u64,
    pub shots: usize,
    pub columns: Vec<Column>,
    /// Fitted and derived quantities.
    pub summary: Map<String, Value>,
    /// Fit failures and other non-fatal diagnostics.
    pub flags: Vec<String>,
}

impl ExperimentResult {
    pub(crate) fn new(protocol: &str, readout: &Readout) -> Self {
        Self {
            protocol: protocol.to_string(),
            seed: readout.seed,
            shots: readout.shots,
            columns: Vec::new(),
            summary: Map::new(),
            flags: Vec::new(),
        }
    }

    pub(crate) fn push_column(&mut self, name: &str, unit: &str, values: Vec<f64>) {
        self.columns.push(Column {
            name: name.to_string(),
            unit: unit.to_string(),
            values,
        });
    }

    pub(crate) fn put(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.to_string(), v);
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }

    /// Header row plus one line per point, `\n`-terminated. Numbers use the
    /// shortest representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in 0..self.rows() {
            let cells: Vec<String> = self.columns.iter().map(|c| format!("{:?}", c.values[row])).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// An initial state and schedule that a protocol simulates; used to
/// cross-check the propagator against the reference integrator.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub initial: QuantumState,
    pub schedule: Schedule,
}

/// Protocol selector with parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    LightshiftSpectroscopy(LightshiftParams),
    SpectroscopyMap(SpectroscopyMapParams),
    RabiPair(RabiPairParams),
    Exchange(ExchangeParams),
    PhaseImprint(PhaseImprintParams),
    RamanProbe(RamanProbeParams),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::LightshiftSpectroscopy(_) => "lightshift_spectroscopy",
            Protocol::SpectroscopyMap(_) => "spectroscopy_map",
            Protocol::RabiPair(_) => "rabi_pair",
            Protocol::Exchange(_) => "exchange",
            Protocol::PhaseImprint(_) => "phase_imprint",
            Protocol::RamanProbe(_) => "raman_probe",
        }
    }

    /// Parameter problems; field names are relative to the protocol section.
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        match self {
            Protocol::LightshiftSpectroscopy(p) => p.violations(setup),
            Protocol::SpectroscopyMap(p) => p.violations(setup),
            Protocol::RabiPair(p) => p.violations(setup),
            Protocol::Exchange(p) => p.violations(setup),
            Protocol::PhaseImprint(p) => p.violations(setup),
            Protocol::RamanProbe(p) => p.violations(setup),
        }
    }

    pub fn run(&self, setup: &Setup) -> Result<ExperimentResult> {
        match self {
            Protocol::LightshiftSpectroscopy(p) => lightshift_spectroscopy(setup, p),
            Protocol::SpectroscopyMap(p) => spectroscopy_map(setup, p),
            Protocol::RabiPair(p) => rabi_pair(setup, p),
            Protocol::Exchange(p) => exchange_experiment(setup, p),
            Protocol::PhaseImprint(p) => phase_imprint(setup, p),
            Protocol::RamanProbe(p) => raman_leakage_probe(setup, p),
        }
    }

    /// Representative pure-state evolutions simulated by [`Protocol::run`].
    pub fn scenarios(&self, setup: &Setup) -> Result<Vec<Scenario>> {
        match self {
            Protocol::LightshiftSpectroscopy(p) => spectroscopy::lightshift_scenarios(setup, p),
            Protocol::SpectroscopyMap(p) => spectroscopy::map_scenarios(setup, p),
            Protocol::RabiPair(p) => rabi::scenarios(setup, p),
            Protocol::Exchange(p) => exchange::exchange_scenarios(setup, p),
            Protocol::PhaseImprint(p) => exchange::imprint_scenarios(setup, p),
            Protocol::RamanProbe(p) => exchange::raman_scenarios(setup, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_values() {
        assert_eq!(Grid::linspace(0.0, 1.0, 5).values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Grid::linspace(2.0, 3.0, 1).values(), vec![2.0]);
        let g = Grid::linspace(0.0, 0.3, 4).values();
        assert_eq!(*g.last().unwrap(), 0.3);
        let mut v = Vec::new();
        Grid::Values(vec![0.0, 2.0, 1.0]).check_times("t", &mut v);
        assert_eq!(v.len(), 1);
        v.clear();
        Grid::linspace(0.0, 1.0, 0).check("g", &mut v);
        assert!(!v.is_empty());
    }

    #[test]
    fn grid_serde_forms() {
        let a: Grid = serde_json::from_str("[1.0, 2.5]").unwrap();
        assert_eq!(a, Grid::Values(vec![1.0, 2.5]));
        let b: Grid = serde_json::from_str(r#"{"start": 0, "stop": 1, "points": 3}"#).unwrap();
        assert_eq!(b.values(), vec![0.0, 0.5, 1.0]);
        assert!(serde_json::from_str::<Grid>(r#"{"start": 0, "stop": 1, "pts": 3}"#).is_err());
    }

    #[test]
    fn csv_uses_round_trip_formatting() {
        let mut r = ExperimentResult::new("x", &Readout::default());
        r.push_column("a", "", vec![0.1, 1.0, 1e-20]);
        r.push_column("b", "", vec![1.0 / 3.0, f64::NAN, 2.0]);
        let csv = r.to_csv();
        assert_eq!(csv.lines().next(), Some("a,b"));
        let second: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(second, vec![0.1, 1.0 / 3.0]);
        assert!(csv.ends_with("1e-20,2.0\n"));
        assert!(csv.contains("NaN"));
    }

    #[test]
    fn setup_violations() {
        let mut s = Setup::new(AtomArray::pair(25.0, 7456.0).unwrap());
        assert!(s.violations().is_empty());
        s.readout.eta = 0.88;
        assert_eq!(s.violations()[0].field, "levels.ground");
        s.readout.eta = 1.2;
        assert_eq!(s.violations()[0].field, "readout.eta");
    }
}
