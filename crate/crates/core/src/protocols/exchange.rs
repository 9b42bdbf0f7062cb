use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::fit::{fit_sinusoid, SinusoidFit};
use super::{detect, observe, violations_to_error, ExperimentResult, Grid, Scenario, Setup, Violation};
use crate::error::{Error, Result};
use crate::evolve::{evolve, evolve_final, QuantumState, Schedule, Segment};
use crate::optics::AddressingEffect;
use crate::readout::DetectionDistribution;
use crate::spinmodel::{Level, Microwave};

/// How |↑↓⟩ is obtained before the exchange dynamics starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preparation {
    /// Address atom 0 and drive atom 1 from |↑⟩ to |↓⟩ with a global
    /// microwave π pulse, starting from |↑↑⟩.
    #[default]
    Simulated,
    /// Start directly in |↑↓⟩.
    Ideal,
}

/// An interval, counted from the end of preparation, during which the
/// addressing beams are on and the exchange is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeWindow {
    pub start_us: f64,
    pub duration_us: f64,
}

impl FreezeWindow {
    pub fn end(&self) -> f64 {
        self.start_us + self.duration_us
    }
}

fn check_windows(windows: &[FreezeWindow], horizon: Option<f64>, field: &str, out: &mut Vec<Violation>) {
    for (k, w) in windows.iter().enumerate() {
        if !(w.start_us >= 0.0) || !w.start_us.is_finite() || !(w.duration_us >= 0.0) || !w.duration_us.is_finite() {
            out.push(Violation::new(format!("{field}[{k}]"), "start and duration must be finite and ≥ 0"));
        } else if horizon.is_some_and(|h| w.end() > h + 1e-12) {
            out.push(Violation::new(format!("{field}[{k}]"), "window extends beyond the last time point"));
        }
    }
    let mut sorted: Vec<(usize, &FreezeWindow)> = windows.iter().enumerate().collect();
    sorted.sort_by(|a, b| a.1.start_us.total_cmp(&b.1.start_us));
    for pair in sorted.windows(2) {
        if pair[1].1.start_us < pair[0].1.end() {
            out.push(Violation::new(
                format!("{field}[{}]", pair[1].0),
                format!("window overlaps {field}[{}]", pair[0].0),
            ));
        }
    }
}

fn prep_duration(setup: &Setup, prep: Preparation) -> f64 {
    match prep {
        Preparation::Simulated => 0.5 / setup.microwave.rabi,
        Preparation::Ideal => 0.0,
    }
}

fn recipe(prep: Preparation) -> [Level; 2] {
    match prep {
        Preparation::Simulated => [Level::Up, Level::Up],
        Preparation::Ideal => [Level::Up, Level::Down],
    }
}

/// Preparation pulse, then free exchange interleaved with freeze windows up to
/// `end` (counted from the end of preparation).
fn sequence(setup: &Setup, prep: Preparation, windows: &[FreezeWindow], end: f64) -> Result<Schedule> {
    let array = &setup.array;
    let effect = setup.effect_on(array)?;
    let idle = AddressingEffect::none(array.len(), &setup.addressing);
    let free = setup.spec(array, Microwave::off(), &idle)?;
    let frozen = setup.spec(array, Microwave::off(), &effect)?;
    let mut segments = Vec::new();
    if prep == Preparation::Simulated {
        segments.push(Segment::new(prep_duration(setup, prep), setup.spec(array, setup.microwave, &effect)?));
    }
    let mut sorted = windows.to_vec();
    sorted.sort_by(|a, b| a.start_us.total_cmp(&b.start_us));
    let mut cursor = 0.0;
    for w in &sorted {
        if w.start_us > cursor {
            segments.push(Segment::new(w.start_us - cursor, free.clone()));
        }
        segments.push(Segment::new(w.duration_us, frozen.clone()));
        cursor = w.end();
    }
    if end > cursor {
        segments.push(Segment::new(end - cursor, free));
    }
    Schedule::new(segments)
}

fn trace(setup: &Setup, prep: Preparation, windows: &[FreezeWindow], times: &[f64]) -> Result<Vec<DetectionDistribution>> {
    let end = times.iter().copied().fold(0.0, f64::max);
    let offset = prep_duration(setup, prep);
    let schedule = sequence(setup, prep, windows, end)?.with_records(times.iter().map(|t| t + offset).collect())?;
    detect(setup, &setup.basis(2)?, &recipe(prep), &schedule)
}

/// Fraction of the pure |↑↑⟩ preparation that ends in |↑↓⟩.
pub(crate) fn preparation_fidelity(setup: &Setup, prep: Preparation) -> Result<f64> {
    if prep == Preparation::Ideal {
        return Ok(1.0);
    }
    let basis = setup.basis(2)?;
    let schedule = sequence(setup, prep, &[], 0.0)?;
    let out = evolve_final(&QuantumState::basis_state(&basis, &[Level::Up, Level::Up])?, &schedule)?;
    Ok(out.amplitude("ud")?.norm_sqr())
}

fn two_atoms(setup: &Setup, out: &mut Vec<Violation>) {
    if setup.array.len() != 2 {
        out.push(Violation::new("atoms.positions_um", "exchange protocols need exactly two atoms"));
    }
}

fn needs_prep_drive(setup: &Setup, prep: Preparation, out: &mut Vec<Violation>) {
    if prep == Preparation::Simulated && !(setup.microwave.rabi > 0.0) {
        out.push(Violation::new("microwave.rabi_mhz", "simulated preparation needs a microwave π pulse"));
    }
}

fn default_times() -> Grid {
    Grid::linspace(0.0, 4.0, 161)
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Spin exchange from |↑↓⟩ with optional freeze windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeParams {
    /// Record times, µs after the end of preparation.
    #[serde(default = "default_times")]
    pub times_us: Grid,
    #[serde(default)]
    pub preparation: Preparation,
    #[serde(default)]
    pub windows: Vec<FreezeWindow>,
}

impl Default for ExchangeParams {
    fn default() -> Self {
        Self {
            times_us: default_times(),
            preparation: Preparation::default(),
            windows: Vec::new(),
        }
    }
}

impl ExchangeParams {
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        let mut out = Vec::new();
        self.times_us.check_times("times_us", &mut out);
        two_atoms(setup, &mut out);
        needs_prep_drive(setup, self.preparation, &mut out);
        let horizon = self.times_us.values().into_iter().fold(0.0, f64::max);
        check_windows(&self.windows, Some(horizon), "windows", &mut out);
        out
    }
}

fn pattern_columns(result: &mut ExperimentResult, observed: &[(Vec<f64>, Vec<f64>)]) {
    for (k, name) in ["p_uu", "p_ud", "p_du", "p_dd"].iter().enumerate() {
        result.push_column(name, "", observed.iter().map(|o| o.0[k]).collect());
    }
    result.push_column("p_ud_stderr", "", observed.iter().map(|o| o.1[1]).collect());
}

fn observe_trace(setup: &Setup, dists: &[DetectionDistribution], offset: u64) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    dists
        .iter()
        .enumerate()
        .map(|(k, d)| observe(&setup.readout, d, offset + k as u64).map(|o| (o.probabilities, o.stderr)))
        .collect()
}

fn select(times: &[f64], values: &[f64], keep: impl Fn(f64) -> bool, shift: f64) -> (Vec<f64>, Vec<f64>) {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| keep(**t))
        .map(|(t, v)| (t - shift, *v))
        .unzip()
}

/// P(↑↓) and the other detection patterns versus time after preparation.
/// Without windows the trace gets a free-frequency fit; with windows the
/// parts before the first and after the last window get fixed-frequency (2U)
/// fits with the frozen time removed, and each window reports its largest
/// change of P(↑↓) against the value at its start.
pub fn exchange_experiment(setup: &Setup, p: &ExchangeParams) -> Result<ExperimentResult> {
    let mut v = setup.violations();
    v.extend(p.violations(setup));
    violations_to_error(v)?;
    let times = p.times_us.values();
    let observed = observe_trace(setup, &trace(setup, p.preparation, &p.windows, &times)?, 0)?;
    let u = setup.pair_coupling()?;

    let mut result = ExperimentResult::new("exchange", &setup.readout);
    result.push_column("time_us", "µs", times.clone());
    pattern_columns(&mut result, &observed);
    let p_ud: Vec<f64> = observed.iter().map(|o| o.0[1]).collect();

    result.put("coupling_mhz", u);
    result.put("exchange_frequency_mhz", 2.0 * u);
    result.put("preparation_fidelity", preparation_fidelity(setup, p.preparation)?);
    result.put("preparation_us", prep_duration(setup, p.preparation));

    if p.windows.is_empty() {
        match fit_sinusoid(&times, &p_ud, None) {
            Ok(f) => result.put("free_fit", f),
            Err(e) => result.flags.push(format!("free-frequency fit failed: {e}")),
        }
    } else {
        let mut sorted = p.windows.clone();
        sorted.sort_by(|a, b| a.start_us.total_cmp(&b.start_us));
        let first = sorted[0].start_us;
        let last = sorted.last().expect("non-empty").end();
        let frozen: f64 = sorted.iter().map(|w| w.duration_us).sum();
        let (tb, yb) = select(&times, &p_ud, |t| t <= first, 0.0);
        let (ta, ya) = select(&times, &p_ud, |t| t >= last, frozen);
        let before = fit_sinusoid(&tb, &yb, Some(2.0 * u));
        let after = fit_sinusoid(&ta, &ya, Some(2.0 * u));
        match &before {
            Ok(f) => result.put("pre_window_fit", f),
            Err(e) => result.flags.push(format!("pre-window fit failed: {e}")),
        }
        match &after {
            Ok(f) => result.put("post_window_fit", f),
            Err(e) => result.flags.push(format!("post-window fit failed: {e}")),
        }
        if let (Ok(b), Ok(a)) = (&before, &after) {
            result.put("amplitude_ratio", a.amplitude / b.amplitude);
            result.put("phase_jump_rad", wrap_signed(a.phase - b.phase));
        }
        let plateaus: Vec<f64> = sorted
            .iter()
            .map(|w| {
                let inside: Vec<f64> = select(&times, &p_ud, |t| t >= w.start_us && t <= w.end(), 0.0).1;
                let start = inside.first().copied().unwrap_or(f64::NAN);
                inside.iter().fold(0.0f64, |m, x| m.max((x - start).abs()))
            })
            .collect();
        result.put("window_max_change", plateaus);
    }
    Ok(result)
}

fn wrap_signed(x: f64) -> f64 {
    let mut p = x.rem_euclid(TAU);
    if p > PI {
        p -= TAU;
    }
    p
}

pub(crate) fn exchange_scenarios(setup: &Setup, p: &ExchangeParams) -> Result<Vec<Scenario>> {
    violations_to_error(p.violations(setup))?;
    let times = p.times_us.values();
    let end = times.iter().copied().fold(0.0, f64::max);
    let offset = prep_duration(setup, p.preparation);
    let schedule = sequence(setup, p.preparation, &p.windows, end)?.with_records(times.iter().map(|t| t + offset).collect())?;
    Ok(vec![Scenario {
        label: "exchange".into(),
        initial: QuantumState::basis_state(&setup.basis(2)?, &recipe(p.preparation))?,
        schedule,
    }])
}

/// How the freeze time for a target phase is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeTiming {
    /// τ = φ/(2π√(δ² + 4U²)): the addressed pair's exact splitting, so that
    /// φ = 2π returns the pair state exactly.
    #[default]
    Dressed,
    /// τ = φ/(2πδ), ignoring the coupling during the window.
    Nominal,
}

/// Freeze duration (µs) imprinting `phase` (rad) with light-shift difference
/// `delta` and coupling `u` (MHz).
pub fn freeze_duration(phase: f64, delta: f64, u: f64, timing: FreezeTiming) -> Result<f64> {
    let rate = match timing {
        FreezeTiming::Dressed => delta.hypot(2.0 * u),
        FreezeTiming::Nominal => delta.abs(),
    };
    if !(rate > 0.0) || !phase.is_finite() || phase < 0.0 {
        return Err(Error::domain("a freeze window needs a non-zero light shift and a phase ≥ 0"));
    }
    Ok(phase / (TAU * rate))
}

fn default_phases() -> Vec<f64> {
    vec![2.0, 2.5, 3.0]
}

/// Freeze windows that imprint a dynamical phase on |↑↓⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseImprintParams {
    #[serde(default = "default_times")]
    pub times_us: Grid,
    /// Window start; a quarter exchange period 1/(8U) by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start_us: Option<f64>,
    /// Imprinted phases in units of π.
    #[serde(default = "default_phases")]
    pub phases_pi: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub timing: FreezeTiming,
    #[serde(default)]
    pub preparation: Preparation,
}

impl Default for PhaseImprintParams {
    fn default() -> Self {
        Self {
            times_us: default_times(),
            window_start_us: None,
            phases_pi: default_phases(),
            timing: FreezeTiming::default(),
            preparation: Preparation::default(),
        }
    }
}

impl PhaseImprintParams {
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        let mut out = Vec::new();
        self.times_us.check_times("times_us", &mut out);
        two_atoms(setup, &mut out);
        needs_prep_drive(setup, self.preparation, &mut out);
        if setup.beams.is_empty() {
            out.push(Violation::new("beams", "phase imprinting needs an addressing beam"));
        }
        if self.phases_pi.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            out.push(Violation::new("phases_pi", "phases must be finite and ≥ 0"));
        }
        if self.window_start_us.is_some_and(|t| !(t >= 0.0) || !t.is_finite()) {
            out.push(Violation::new("window_start_us", "must be finite and ≥ 0"));
        }
        if !out.is_empty() {
            return out;
        }
        match self.windows(setup) {
            Ok(ws) => {
                let horizon = self.times_us.values().into_iter().fold(0.0, f64::max);
                let ws: Vec<FreezeWindow> = ws.into_iter().map(|w| w.1).collect();
                for (k, w) in ws.iter().enumerate() {
                    if w.end() > horizon {
                        out.push(Violation::new(format!("phases_pi[{k}]"), "freeze window ends after the last time point"));
                    }
                }
            }
            Err(e) => out.push(Violation::new("phases_pi", e.to_string())),
        }
        out
    }

    fn start(&self, setup: &Setup) -> Result<f64> {
        Ok(match self.window_start_us {
            Some(t) => t,
            None => 1.0 / (8.0 * setup.pair_coupling()?.abs()),
        })
    }

    /// (phase in units of π, window) per requested phase.
    fn windows(&self, setup: &Setup) -> Result<Vec<(f64, FreezeWindow)>> {
        let effect = setup.effect_on(&setup.array)?;
        let delta = effect.light_shift[0] - effect.light_shift[1];
        let u = setup.pair_coupling()?;
        let start = self.start(setup)?;
        self.phases_pi
            .iter()
            .map(|&ph| {
                let duration_us = freeze_duration(ph * PI, delta, u, self.timing)?;
                Ok((ph, FreezeWindow { start_us: start, duration_us }))
            })
            .collect()
    }
}

/// Population variance.
fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// The unfrozen reference trace plus one trace per imprinted phase, in long
/// format. For every phase the summary compares the post-window trace with
/// the reference delayed by the window length, reports the post-window
/// variance of P(↑↓), and the phase of a 2U fixed-frequency fit (frozen time
/// removed) relative to the reference fit, in [0, 2π).
pub fn phase_imprint(setup: &Setup, p: &PhaseImprintParams) -> Result<ExperimentResult> {
    let mut v = setup.violations();
    v.extend(p.violations(setup));
    violations_to_error(v)?;
    let times = p.times_us.values();
    let m = times.len() as u64;
    let u = setup.pair_coupling()?;
    let windows = p.windows(setup)?;

    let reference = observe_trace(setup, &trace(setup, p.preparation, &[], &times)?, 0)?;
    let ref_ud: Vec<f64> = reference.iter().map(|o| o.0[1]).collect();
    let ref_fit = fit_sinusoid(&times, &ref_ud, Some(2.0 * u));

    let mut result = ExperimentResult::new("phase_imprint", &setup.readout);
    let (mut c_phase, mut c_window, mut c_time, mut c_ud, mut c_err) = (vec![], vec![], vec![], vec![], vec![]);
    let mut push = |phase: f64, window: f64, obs: &[(Vec<f64>, Vec<f64>)]| {
        for (t, o) in times.iter().zip(obs) {
            c_phase.push(phase);
            c_window.push(window);
            c_time.push(*t);
            c_ud.push(o.0[1]);
            c_err.push(o.1[1]);
        }
    };
    push(0.0, 0.0, &reference);

    match &ref_fit {
        Ok(f) => result.put("reference_fit", f),
        Err(e) => result.flags.push(format!("reference fit failed: {e}")),
    }
    let mut per_phase = Vec::new();
    for (s, (phase_pi, w)) in windows.iter().enumerate() {
        let obs = observe_trace(setup, &trace(setup, p.preparation, &[*w], &times)?, (s as u64 + 1) * m)?;
        push(*phase_pi, w.duration_us, &obs);
        let ud: Vec<f64> = obs.iter().map(|o| o.0[1]).collect();
        let (t_post, y_post) = select(&times, &ud, |t| t >= w.end() - 1e-12, 0.0);
        // the unfrozen dynamics delayed by the window, evaluated exactly
        let delayed_times: Vec<f64> = t_post.iter().map(|t| t - w.duration_us).collect();
        let delayed: Vec<f64> = trace(setup, p.preparation, &[], &delayed_times)?
            .iter()
            .map(|d| d.probabilities()[1])
            .collect();
        let deviation = y_post
            .iter()
            .zip(&delayed)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let shifted: Vec<f64> = t_post.iter().map(|t| t - w.duration_us).collect();
        let post_fit: std::result::Result<SinusoidFit, _> = fit_sinusoid(&shifted, &y_post, Some(2.0 * u));
        let offset = match (&post_fit, &ref_fit) {
            (Ok(a), Ok(b)) => Some((a.phase - b.phase).rem_euclid(TAU)),
            _ => None,
        };
        if let Err(e) = &post_fit {
            result.flags.push(format!("post-window fit failed for φ = {phase_pi}π: {e}"));
        }
        per_phase.push(serde_json::json!({
            "phase_pi": phase_pi,
            "window_start_us": w.start_us,
            "tau_us": w.duration_us,
            "post_window_points": y_post.len(),
            "post_window_variance": variance(&y_post),
            "max_deviation_from_delayed_reference": deviation,
            "phase_offset_rad": offset,
            "post_window_fit": post_fit.ok(),
        }));
    }
    result.push_column("phase_pi", "π", c_phase);
    result.push_column("window_us", "µs", c_window);
    result.push_column("time_us", "µs", c_time);
    result.push_column("p_ud", "", c_ud);
    result.push_column("p_ud_stderr", "", c_err);
    result.put("coupling_mhz", u);
    result.put("timing", p.timing);
    result.put("imprints", per_phase);
    Ok(result)
}

pub(crate) fn imprint_scenarios(setup: &Setup, p: &PhaseImprintParams) -> Result<Vec<Scenario>> {
    violations_to_error(p.violations(setup))?;
    let times = p.times_us.values();
    let end = times.iter().copied().fold(0.0, f64::max);
    let offset = prep_duration(setup, p.preparation);
    let basis = setup.basis(2)?;
    p.windows(setup)?
        .into_iter()
        .map(|(ph, w)| {
            Ok(Scenario {
                label: format!("imprint φ={ph}π"),
                initial: QuantumState::basis_state(&basis, &recipe(p.preparation))?,
                schedule: sequence(setup, p.preparation, &[w], end)?
                    .with_records(times.iter().map(|t| t + offset).collect())?,
            })
        })
        .collect()
}

fn default_probe_windows() -> Vec<FreezeWindow> {
    vec![FreezeWindow {
        start_us: 0.625,
        duration_us: 0.6,
    }]
}

fn default_step() -> f64 {
    0.002
}

/// Transfer to the Zeeman level |0⟩ over a preparation + freeze sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamanProbeParams {
    #[serde(default = "default_probe_windows")]
    pub windows: Vec<FreezeWindow>,
    #[serde(default)]
    pub preparation: Preparation,
    /// Sampling step of the record grid.
    #[serde(default = "default_step")]
    pub step_us: f64,
    /// Free evolution after the last window.
    #[serde(default = "default_tail")]
    pub tail_us: f64,
}

fn default_tail() -> f64 {
    0.5
}

impl Default for RamanProbeParams {
    fn default() -> Self {
        Self {
            windows: default_probe_windows(),
            preparation: Preparation::default(),
            step_us: default_step(),
            tail_us: default_tail(),
        }
    }
}

impl RamanProbeParams {
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        let mut out = Vec::new();
        two_atoms(setup, &mut out);
        needs_prep_drive(setup, self.preparation, &mut out);
        if !setup.zero_level {
            out.push(Violation::new("levels.zero", "the Raman probe needs the |0⟩ level"));
        }
        if !(self.step_us > 0.0) || !self.step_us.is_finite() {
            out.push(Violation::new("step_us", "must be finite and > 0"));
        }
        if !(self.tail_us >= 0.0) || !self.tail_us.is_finite() {
            out.push(Violation::new("tail_us", "must be finite and ≥ 0"));
        }
        check_windows(&self.windows, None, "windows", &mut out);
        out
    }

    fn schedule(&self, setup: &Setup) -> Result<Schedule> {
        let end = self.windows.iter().map(|w| w.end()).fold(0.0, f64::max) + self.tail_us;
        let s = sequence(setup, self.preparation, &self.windows, end)?;
        let total = s.total_duration();
        let n = (total / self.step_us).floor() as usize;
        let mut records: Vec<f64> = (0..=n).map(|k| k as f64 * self.step_us).filter(|&t| t <= total).collect();
        if records.last().is_none_or(|&t| t < total) {
            records.push(total);
        }
        s.with_records(records)
    }
}

/// Population of |0⟩ on each atom over the whole sequence, preparation
/// included, starting from the prepared state without excitation errors.
/// Reports the maximum together with the two-level bounds Ω_R²/(Ω_R² + Δ²)
/// for Δ = δ_Z and for the full up–zero detuning δ + δ_Z − zero_shift.
pub fn raman_leakage_probe(setup: &Setup, p: &RamanProbeParams) -> Result<ExperimentResult> {
    let mut v = setup.violations();
    v.extend(p.violations(setup));
    violations_to_error(v)?;
    let basis = setup.basis(2)?;
    let schedule = p.schedule(setup)?;
    let initial = QuantumState::basis_state(&basis, &recipe(p.preparation))?;
    let records = evolve(&initial, &schedule)?;
    let zero: Vec<[f64; 2]> = records
        .iter()
        .map(|(_, s)| {
            let z = s.populations(&["0*", "*0"])?;
            Ok([z[0], z[1]])
        })
        .collect::<Result<_>>()?;

    let mut result = ExperimentResult::new("raman_probe", &setup.readout);
    result.push_column("time_us", "µs", records.iter().map(|r| r.0).collect());
    result.push_column("p_zero_0", "", zero.iter().map(|z| z[0]).collect());
    result.push_column("p_zero_1", "", zero.iter().map(|z| z[1]).collect());
    let max = zero.iter().fold(0.0f64, |m, z| m.max(z[0]).max(z[1]));
    let effect = setup.effect_on(&setup.array)?;
    let omega = effect.raman_rabi[0];
    let bound = |d: f64| if omega == 0.0 { 0.0 } else { omega * omega / (omega * omega + d * d) };
    let detuning = effect.light_shift[0] + effect.zeeman_split - effect.zero_shift;
    result.put("max_transfer", max);
    result.put("raman_rabi_mhz", omega);
    result.put("two_level_bound", bound(effect.zeeman_split));
    result.put("shifted_two_level_bound", bound(detuning));
    result.put("sequence_us", schedule.total_duration());
    Ok(result)
}

pub(crate) fn raman_scenarios(setup: &Setup, p: &RamanProbeParams) -> Result<Vec<Scenario>> {
    violations_to_error(p.violations(setup))?;
    let basis = setup.basis(2)?;
    Ok(vec![Scenario {
        label: "raman probe".into(),
        initial: QuantumState::basis_state(&basis, &recipe(p.preparation))?,
        schedule: p.schedule(setup)?,
    }])
}
