use serde::{Deserialize, Serialize};

use super::fit::fit_sinusoid;
use super::{detect, observe, violations_to_error, ExperimentResult, Grid, Scenario, Setup, Violation};
use crate::error::Result;
use crate::evolve::{QuantumState, Schedule, Segment};
use crate::optics::AddressingEffect;
use crate::readout::DetectionDistribution;
use crate::spinmodel::{AtomArray, Level, Microwave};

fn default_times() -> Grid {
    Grid::linspace(0.0, 2.0, 201)
}

/// Resonant Rabi oscillations of a lone atom and of the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiPairParams {
    #[serde(default = "default_times")]
    pub times_us: Grid,
    /// Microwave detuning for the lone atom.
    #[serde(default)]
    pub single_detuning_mhz: f64,
    /// Microwave detuning for the pair; −U (the |↑↑⟩ ↔ |+⟩ line) by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_detuning_mhz: Option<f64>,
}

impl Default for RabiPairParams {
    fn default() -> Self {
        Self {
            times_us: default_times(),
            single_detuning_mhz: 0.0,
            pair_detuning_mhz: None,
        }
    }
}

impl RabiPairParams {
    pub fn violations(&self, setup: &Setup) -> Vec<Violation> {
        let mut out = Vec::new();
        self.times_us.check_times("times_us", &mut out);
        if setup.array.len() != 2 {
            out.push(Violation::new("atoms.positions_um", "the pair Rabi protocol needs exactly two atoms"));
        }
        if !self.single_detuning_mhz.is_finite() || self.pair_detuning_mhz.is_some_and(|d| !d.is_finite()) {
            out.push(Violation::new("pair_detuning_mhz", "detunings must be finite"));
        }
        out
    }
}

fn trace_schedule(setup: &Setup, array: &AtomArray, detuning: f64, times: &[f64]) -> Result<Schedule> {
    let mw = Microwave { detuning, ..setup.microwave };
    let spec = setup.spec(array, mw, &AddressingEffect::none(array.len(), &setup.addressing))?;
    let end = times.last().copied().unwrap_or(0.0);
    Schedule::new(vec![Segment::new(end, spec)])?.with_records(times.to_vec())
}

fn pair_detuning(setup: &Setup, p: &RabiPairParams) -> Result<f64> {
    Ok(match p.pair_detuning_mhz {
        Some(d) => d,
        None => -setup.pair_coupling()?,
    })
}

/// Single-atom trace at `single_detuning_mhz` and pair trace at −U, each
/// fitted with a free-frequency sinusoid; reports the frequency ratio and
/// the largest |↓↓⟩ (both lost) probability of the pair trace.
pub fn rabi_pair(setup: &Setup, p: &RabiPairParams) -> Result<ExperimentResult> {
    let mut v = setup.violations();
    v.extend(p.violations(setup));
    violations_to_error(v)?;
    let times = p.times_us.values();
    let m = times.len() as u64;

    let single = setup.single_atom(0)?;
    let single_schedule = trace_schedule(setup, &single, p.single_detuning_mhz, &times)?;
    let single_dist = detect(setup, &setup.basis(1)?, &[Level::Up], &single_schedule)?;

    let pair_det = pair_detuning(setup, p)?;
    let pair_schedule = trace_schedule(setup, &setup.array, pair_det, &times)?;
    let pair_dist = detect(setup, &setup.basis(2)?, &[Level::Up, Level::Up], &pair_schedule)?;

    let observe_all = |dists: &[DetectionDistribution], offset: u64| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        dists
            .iter()
            .enumerate()
            .map(|(k, d)| observe(&setup.readout, d, offset + k as u64).map(|o| (o.probabilities, o.stderr)))
            .collect()
    };
    let s_obs = observe_all(&single_dist, 0)?;
    let p_obs = observe_all(&pair_dist, m)?;

    let mut result = ExperimentResult::new("rabi_pair", &setup.readout);
    let single_up: Vec<f64> = s_obs.iter().map(|o| o.0[0]).collect();
    let pair_uu: Vec<f64> = p_obs.iter().map(|o| o.0[0]).collect();
    let pair_dd: Vec<f64> = p_obs.iter().map(|o| o.0[3]).collect();
    result.push_column("time_us", "µs", times.clone());
    result.push_column("p_single_up", "", single_up.clone());
    result.push_column("p_single_up_stderr", "", s_obs.iter().map(|o| o.1[0]).collect());
    result.push_column("p_pair_uu", "", pair_uu.clone());
    result.push_column("p_pair_uu_stderr", "", p_obs.iter().map(|o| o.1[0]).collect());
    result.push_column("p_pair_dd", "", pair_dd.clone());

    result.put("pair_detuning_mhz", pair_det);
    result.put("max_p_dd", pair_dd.iter().fold(0.0f64, |a, &b| a.max(b)));
    let single_fit = fit_sinusoid(&times, &single_up, None);
    let pair_fit = fit_sinusoid(&times, &pair_uu, None);
    match &single_fit {
        Ok(f) => result.put("single_fit", f),
        Err(e) => result.flags.push(format!("single-atom fit failed: {e}")),
    }
    match &pair_fit {
        Ok(f) => result.put("pair_fit", f),
        Err(e) => result.flags.push(format!("pair fit failed: {e}")),
    }
    if let (Ok(s), Ok(pf)) = (&single_fit, &pair_fit) {
        let ratio = pf.frequency / s.frequency;
        let err = ratio * ((pf.frequency_err / pf.frequency).powi(2) + (s.frequency_err / s.frequency).powi(2)).sqrt();
        result.put("frequency_ratio", ratio);
        result.put("frequency_ratio_err", err);
    }
    Ok(result)
}

pub(crate) fn scenarios(setup: &Setup, p: &RabiPairParams) -> Result<Vec<Scenario>> {
    violations_to_error(p.violations(setup))?;
    let times = p.times_us.values();
    let single = setup.single_atom(0)?;
    Ok(vec![
        Scenario {
            label: "rabi single".into(),
            initial: QuantumState::basis_state(&setup.basis(1)?, &[Level::Up])?,
            schedule: trace_schedule(setup, &single, p.single_detuning_mhz, &times)?,
        },
        Scenario {
            label: "rabi pair".into(),
            initial: QuantumState::basis_state(&setup.basis(2)?, &[Level::Up, Level::Up])?,
            schedule: trace_schedule(setup, &setup.array, pair_detuning(setup, p)?, &times)?,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(u: f64, rabi: f64) -> Setup {
        let array = AtomArray::pair(25.0, 7456.0).unwrap().with_override(0, 1, u).unwrap();
        let mut s = Setup::new(array);
        s.microwave = Microwave::new(rabi, 0.0);
        s
    }

    #[test]
    fn perturbative_ratio_is_sqrt_two() {
        let s = setup(4.09, 0.2);
        let p = RabiPairParams {
            times_us: Grid::linspace(0.0, 12.0, 241),
            ..Default::default()
        };
        let r = rabi_pair(&s, &p).unwrap();
        let ratio = r.summary_f64("frequency_ratio").unwrap();
        assert!((ratio - std::f64::consts::SQRT_2).abs() < 1e-3, "{ratio}");
        assert!(r.summary_f64("max_p_dd").unwrap() < 0.01);
    }

    #[test]
    fn needs_two_atoms() {
        let mut s = setup(4.09, 1.6);
        s.array = AtomArray::new(vec![[0.0; 3]], 7456.0).unwrap();
        assert!(rabi_pair(&s, &RabiPairParams::default()).is_err());
    }
}
