use serde::{Deserialize, Serialize};

use super::{detect, observe, par_map, violations_to_error, ExperimentResult, Grid, Scenario, Setup, Violation};
use crate::error::{Error, Result};
use crate::evolve::{QuantumState, Schedule, Segment};
use crate::optics::{
    addressing_effect, effect_from_light_shifts, intensity_fraction, AddressingEffect, AddressingOptions, ShiftMode,
};
use crate::protocols::fit::fit_rabi_line;
use crate::spinmodel::{
    build_hamiltonian, drive_operator, eigenmodes, AtomArray, HamiltonianSpec, Level, Microwave, ProductBasis,
};

fn default_addressing_detunings() -> Grid {
    Grid::Values(vec![
        -5000.0, -3000.0, -2000.0, -1300.0, -800.0, 800.0, 1300.0, 2000.0, 3000.0, 5000.0,
    ])
}

fn default_scan_points() -> usize {
    81
}

/// Microwave spectroscopy of one addressed atom for a series of beam
/// detunings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightshiftParams {
    #[serde(default = "default_addressing_detunings")]
    pub addressing_detunings_mhz: Grid,
    /// Microwave pulse length; a π pulse by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_us: Option<f64>,
    /// Width of the microwave scan around the expected line; 8 Ω_mw by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_span_mhz: Option<f64>,
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    /// Which atom of the array is probed.
    #[serde(default)]
    pub atom: usize,
}

impl Default for LightshiftParams {
    fn default() -> Self {
        Self {
            addressing_detunings_mhz: default_addressing_detunings(),
            pulse_us: None,
            scan_span_mhz: None,
            scan_points: default_scan_points(),
            atom: 0,
        }
    }
}

impl LightshiftParams {
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        let mut out = Vec::new();
        self.addressing_detunings_mhz.check("addressing_detunings_mhz", &mut out);
        if self.addressing_detunings_mhz.values().contains(&0.0) {
            out.push(Violation::new("addressing_detunings_mhz", "a zero detuning has no light shift"));
        }
        if setup.beams.is_empty() {
            out.push(Violation::new("beams", "light-shift spectroscopy needs an addressing beam"));
        }
        if !(setup.microwave.rabi > 0.0) {
            out.push(Violation::new("microwave.rabi_mhz", "spectroscopy needs a microwave drive"));
        }
        if self.pulse_us.is_some_and(|t| !(t > 0.0) || !t.is_finite()) {
            out.push(Violation::new("pulse_us", "must be finite and > 0"));
        }
        if self.scan_span_mhz.is_some_and(|s| !(s > 0.0) || !s.is_finite()) {
            out.push(Violation::new("scan_span_mhz", "must be finite and > 0"));
        }
        if self.scan_points < 5 {
            out.push(Violation::new("scan_points", "the line fit needs at least 5 points"));
        }
        if self.atom >= setup.array.len() {
            out.push(Violation::new("atom", format!("no atom {} in a {}-atom array", self.atom, setup.array.len())));
        }
        out
    }

    fn pulse(&self, setup: &Setup) -> f64 {
        self.pulse_us.unwrap_or(0.5 / setup.microwave.rabi)
    }

    fn span(&self, setup: &Setup) -> f64 {
        self.scan_span_mhz.unwrap_or(8.0 * setup.microwave.rabi)
    }
}

struct LineSetting {
    array: AtomArray,
    effect: AddressingEffect,
    perturbative: f64,
    dressed: f64,
    scan: Vec<f64>,
}

fn line_setting(setup: &Setup, p: &LightshiftParams, detuning: f64) -> Result<LineSetting> {
    let array = setup.single_atom(p.atom)?;
    let beams: Vec<_> = setup
        .beams
        .iter()
        .map(|b| {
            let mut b = b.clone();
            b.detuning = detuning;
            b
        })
        .collect();
    let effect = addressing_effect(&beams, &array, &setup.addressing)?;
    let with_mode = |mode| -> Result<f64> {
        let options = AddressingOptions { mode, ..setup.addressing };
        Ok(addressing_effect(&beams, &array, &options)?.light_shift[0])
    };
    let perturbative = with_mode(ShiftMode::Perturbative)?;
    let dressed = with_mode(ShiftMode::Dressed)?;
    // the scan is centred on the textbook expectation, not on the simulated value
    let span = p.span(setup);
    let n = p.scan_points;
    let scan = (0..n)
        .map(|k| perturbative - span / 2.0 + span * k as f64 / (n - 1) as f64)
        .collect();
    Ok(LineSetting {
        array,
        effect,
        perturbative,
        dressed,
        scan,
    })
}

fn line_schedule(setup: &Setup, s: &LineSetting, mw_detuning: f64, pulse: f64) -> Result<Schedule> {
    let mw = Microwave {
        detuning: mw_detuning,
        ..setup.microwave
    };
    let spec = setup.spec(&s.array, mw, &s.effect)?;
    Ok(Schedule::new(vec![Segment::new(pulse, spec)])?.with_final_record())
}

/// For every addressing detuning, scans the microwave across the addressed
/// atom's line and fits the line center, which measures the light shift.
/// The spin-flip signal is the probability of detecting the atom as lost.
pub fn lightshift_spectroscopy(setup: &Setup, p: &LightshiftParams) -> Result<ExperimentResult> {
    let mut v = setup.violations();
    v.extend(p.violations(setup));
    violations_to_error(v)?;
    let detunings = p.addressing_detunings_mhz.values();
    let pulse = p.pulse(setup);
    let basis = setup.basis(1)?;
    let settings = detunings
        .iter()
        .map(|&d| line_setting(setup, p, d))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(usize, usize)> = (0..detunings.len())
        .flat_map(|i| (0..p.scan_points).map(move |j| (i, j)))
        .collect();
    let signal = par_map(&points, |k, &(i, j)| {
        let s = &settings[i];
        let schedule = line_schedule(setup, s, s.scan[j], pulse)?;
        let dist = detect(setup, &basis, &[Level::Up], &schedule)?.remove(0);
        Ok(observe(&setup.readout, &dist, k as u64)?.probabilities[1])
    })?;

    let mut result = ExperimentResult::new("lightshift_spectroscopy", &setup.readout);
    let (mut centers, mut errors, mut ok) = (Vec::new(), Vec::new(), Vec::new());
    for (i, s) in settings.iter().enumerate() {
        let y = &signal[i * p.scan_points..(i + 1) * p.scan_points];
        match fit_rabi_line(&s.scan, y, setup.microwave.rabi, pulse) {
            Ok(fit) => {
                centers.push(fit.center);
                errors.push(fit.center_err);
                ok.push(1.0);
            }
            Err(e) => {
                centers.push(f64::NAN);
                errors.push(f64::NAN);
                ok.push(0.0);
                result.flags.push(format!("line fit failed at Δ_addr = {} MHz: {e}", detunings[i]));
            }
        }
    }
    result.push_column("delta_addr_mhz", "MHz", detunings);
    result.push_column("fitted_shift_mhz", "MHz", centers);
    result.push_column("fitted_shift_stderr_mhz", "MHz", errors);
    result.push_column("perturbative_mhz", "MHz", settings.iter().map(|s| s.perturbative).collect());
    result.push_column("dressed_mhz", "MHz", settings.iter().map(|s| s.dressed).collect());
    result.push_column("fit_ok", "", ok);
    result.put("pulse_us", pulse);
    result.put("microwave_rabi_mhz", setup.microwave.rabi);
    result.put("shift_mode", setup.addressing.mode);
    Ok(result)
}

pub(crate) fn lightshift_scenarios(setup: &Setup, p: &LightshiftParams) -> Result<Vec<Scenario>> {
    violations_to_error(p.violations(setup))?;
    let basis = setup.basis(1)?;
    let detunings = p.addressing_detunings_mhz.values();
    let mut out = Vec::new();
    for &d in pick(&detunings) {
        let s = line_setting(setup, p, d)?;
        let mid = s.scan[s.scan.len() / 2];
        out.push(Scenario {
            label: format!("line Δ_addr={d}"),
            initial: QuantumState::basis_state(&basis, &[Level::Up])?,
            schedule: line_schedule(setup, &s, mid, p.pulse(setup))?,
        });
    }
    Ok(out)
}

/// First, middle and last element.
pub(crate) fn pick<T>(v: &[T]) -> Vec<&T> {
    let mut idx = vec![0, v.len() / 2, v.len().saturating_sub(1)];
    idx.dedup();
    idx.into_iter().filter_map(|k| v.get(k)).collect()
}

fn default_delta_omega0() -> Grid {
    Grid::Values(vec![0.0, 4.0])
}

fn default_delta_mw() -> Grid {
    Grid::linspace(-1.0, 5.0, 121)
}

/// Microwave spectroscopy of the array from |↑…↑⟩ while the target atom
/// carries a light shift Δω₀ (other atoms get the beam's cross-talk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopyMapParams {
    #[serde(default = "default_delta_omega0")]
    pub delta_omega0_mhz: Grid,
    #[serde(default = "default_delta_mw")]
    pub delta_mw_mhz: Grid,
    /// Pulse length; π/(√2 Ω_mw) by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_us: Option<f64>,
    #[serde(default)]
    pub target_atom: usize,
}

impl Default for SpectroscopyMapParams {
    fn default() -> Self {
        Self {
            delta_omega0_mhz: default_delta_omega0(),
            delta_mw_mhz: default_delta_mw(),
            pulse_us: None,
            target_atom: 0,
        }
    }
}

impl SpectroscopyMapParams {
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        let mut out = Vec::new();
        self.delta_omega0_mhz.check("delta_omega0_mhz", &mut out);
        self.delta_mw_mhz.check("delta_mw_mhz", &mut out);
        if self.target_atom >= setup.array.len() {
            out.push(Violation::new("target_atom", "no such atom"));
        }
        match self.pulse_us {
            Some(t) if !(t >= 0.0) || !t.is_finite() => out.push(Violation::new("pulse_us", "must be finite and ≥ 0")),
            None if !(setup.microwave.rabi > 0.0) => {
                out.push(Violation::new("pulse_us", "needed when the microwave Rabi frequency is 0"))
            }
            _ => {}
        }
        if let Some(beam) = setup.beams.first() {
            if self.delta_omega0_mhz.values().iter().any(|d| d * beam.detuning < 0.0) {
                out.push(Violation::new("delta_omega0_mhz", "light shifts must share the sign of the beam detuning"));
            }
        }
        out
    }

    fn pulse(&self, setup: &Setup) -> f64 {
        self.pulse_us
            .unwrap_or(0.5 / (std::f64::consts::SQRT_2 * setup.microwave.rabi))
    }
}

/// Light-shift profile for target shift `delta0`: the first beam's intensity
/// profile sets the cross-talk on the other atoms.
fn map_effect(setup: &Setup, target: usize, delta0: f64) -> Result<AddressingEffect> {
    let n = setup.array.len();
    match setup.beams.first() {
        Some(beam) => {
            let f = |i: usize| intensity_fraction(beam, &setup.array.positions()[i]);
            let ft = f(target);
            if ft <= 0.0 {
                return Err(Error::domain("the target atom sits outside the addressing beam"));
            }
            let shifts: Vec<f64> = (0..n).map(|i| delta0 * f(i) / ft).collect();
            effect_from_light_shifts(&shifts, beam.detuning, &setup.addressing)
        }
        None => {
            let mut e = AddressingEffect::none(n, &setup.addressing);
            e.light_shift[target] = delta0;
            Ok(e)
        }
    }
}

fn map_schedule(setup: &Setup, effect: &AddressingEffect, mw_detuning: f64, pulse: f64) -> Result<Schedule> {
    let mw = Microwave {
        detuning: mw_detuning,
        ..setup.microwave
    };
    let spec = setup.spec(&setup.array, mw, effect)?;
    Ok(Schedule::new(vec![Segment::new(pulse, spec)])?.with_final_record())
}

/// An eigenstate with one spin flipped, seen from |↑…↑⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    /// Microwave detuning at which the transition is resonant, MHz.
    pub detuning: f64,
    /// |⟨e|H_drive|↑…↑⟩|/2π, MHz.
    pub coupling: f64,
}

/// Resonances from |↑…↑⟩ to the single-flip eigenstates of the undriven
/// Hamiltonian with the given light shifts.
pub fn flip_transitions(array: &AtomArray, light_shift: &[f64], rabi: f64, phase: f64) -> Result<Vec<Transition>> {
    let basis = ProductBasis::new(crate::spinmodel::LevelScheme::spin_half(), array.len())?;
    let spec = HamiltonianSpec::from_array(array)?.with_light_shift(light_shift.to_vec());
    let modes = eigenmodes(&build_hamiltonian(&basis, &spec)?)?;
    let drive = drive_operator(&basis, rabi, phase)?;
    let all_up = basis.index(&vec![Level::Up; array.len()])?;
    let e_up = light_shift.iter().sum::<f64>();
    let freqs = modes.frequencies();
    let mut out = Vec::new();
    for (k, &e) in freqs.iter().enumerate() {
        let v = modes.vectors.column(k);
        let single: f64 = (0..basis.dim())
            .filter(|&s| basis.levels_of(s).iter().filter(|&&l| l == Level::Down).count() == 1)
            .map(|s| v[s].norm_sqr())
            .sum();
        if single < 0.5 {
            continue;
        }
        let coupling = (0..basis.dim())
            .map(|s| v[s].conj() * drive.matrix()[(s, all_up)])
            .sum::<num_complex::Complex64>()
            .norm()
            / std::f64::consts::TAU;
        out.push(Transition {
            detuning: e_up - e,
            coupling,
        });
    }
    out.sort_by(|a, b| a.detuning.total_cmp(&b.detuning));
    Ok(out)
}

/// Local minima deeper than 5% of the trace's full range.
fn dips(x: &[f64], y: &[f64]) -> Vec<f64> {
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let threshold = hi - 0.05 * (hi - lo);
    if !(hi - lo > 1e-6) {
        return Vec::new();
    }
    (1..y.len().saturating_sub(1))
        .filter(|&k| y[k] < y[k - 1] && y[k] <= y[k + 1] && y[k] < threshold)
        .map(|k| x[k])
        .collect()
}

/// Probability of detecting every atom as recaptured (|↑…↑⟩) after a
/// microwave pulse, over the (Δω₀, Δ_mw) grid.
pub fn spectroscopy_map(setup: &Setup, p: &SpectroscopyMapParams) -> Result<ExperimentResult> {
    let mut v = setup.violations();
    v.extend(p.violations(setup));
    violations_to_error(v)?;
    let shifts = p.delta_omega0_mhz.values();
    let mws = p.delta_mw_mhz.values();
    let n = setup.array.len();
    let basis = setup.basis(n)?;
    let pulse = p.pulse(setup);
    let effects = shifts
        .iter()
        .map(|&d| map_effect(setup, p.target_atom, d))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<(usize, usize)> = (0..shifts.len())
        .flat_map(|i| (0..mws.len()).map(move |j| (i, j)))
        .collect();
    let recipe = vec![Level::Up; n];
    let observed = par_map(&points, |k, &(i, j)| {
        let schedule = map_schedule(setup, &effects[i], mws[j], pulse)?;
        let dist = detect(setup, &basis, &recipe, &schedule)?.remove(0);
        let o = observe(&setup.readout, &dist, k as u64)?;
        Ok((o.probabilities[0], o.stderr[0]))
    })?;

    let mut result = ExperimentResult::new("spectroscopy_map", &setup.readout);
    result.push_column("delta_mw_mhz", "MHz", points.iter().map(|&(_, j)| mws[j]).collect());
    result.push_column("delta_omega0_mhz", "MHz", points.iter().map(|&(i, _)| shifts[i]).collect());
    result.push_column("p_uu", "", observed.iter().map(|o| o.0).collect());
    result.push_column("p_uu_stderr", "", observed.iter().map(|o| o.1).collect());

    let mut lines = Vec::new();
    for (i, effect) in effects.iter().enumerate() {
        let y: Vec<f64> = observed[i * mws.len()..(i + 1) * mws.len()].iter().map(|o| o.0).collect();
        let predicted = flip_transitions(&setup.array, &effect.light_shift, setup.microwave.rabi, setup.microwave.phase)?;
        lines.push(serde_json::json!({
            "delta_omega0_mhz": shifts[i],
            "light_shift_mhz": effect.light_shift,
            "observed_dips_mhz": dips(&mws, &y),
            "predicted_transitions": predicted,
        }));
    }
    result.put("pulse_us", pulse);
    result.put("lines", lines);
    Ok(result)
}

pub(crate) fn map_scenarios(setup: &Setup, p: &SpectroscopyMapParams) -> Result<Vec<Scenario>> {
    violations_to_error(p.violations(setup))?;
    let n = setup.array.len();
    let basis = setup.basis(n)?;
    let mws = p.delta_mw_mhz.values();
    let mut out = Vec::new();
    for &d in pick(&p.delta_omega0_mhz.values()) {
        let effect = map_effect(setup, p.target_atom, d)?;
        for &mw in pick(&mws) {
            out.push(Scenario {
                label: format!("map Δω₀={d} Δ_mw={mw}"),
                initial: QuantumState::basis_state(&basis, &vec![Level::Up; n])?,
                schedule: map_schedule(setup, &effect, mw, p.pulse(setup))?,
            });
        }
    }
    Ok(out)
}
