//! Addressing-beam physics: Rabi frequency from power, Gaussian cross-talk,
//! light shifts, off-resonant scattering and Raman leakage to |0⟩.
//!
//! Frequencies are ordinary frequencies in MHz, lengths in µm, powers in mW.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinmodel::{AtomArray, RamanTerm};

/// Calculated addressing Rabi frequency Ω_addr/2π at the reference power.
pub const OMEGA_REF_MHZ: f64 = 158.0;
/// Reference incident power for [`OMEGA_REF_MHZ`].
pub const POWER_REF_MW: f64 = 30.0;
pub const WAIST_UM: f64 = 3.4;
/// 6P₁/₂ lifetime.
pub const TAU_6P_NS: f64 = 121.0;
/// Zeeman splitting between |↑⟩ and |0⟩ at 7 G.
pub const ZEEMAN_SPLIT_MHZ: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub power: f64,
    pub waist: f64,
    /// A point on the beam axis.
    pub center: [f64; 3],
    /// Propagation direction; normalized on use.
    pub axis: [f64; 3],
    /// Δ_addr, detuning from the 6P₁/₂ ↔ nD₃/₂ transition.
    pub detuning: f64,
    pub omega_ref: f64,
    pub power_ref: f64,
}

impl BeamSpec {
    /// Beam with the reference Rabi frequency, focused on `center` and
    /// propagating along x (transverse to the atom axis).
    pub fn new(power: f64, detuning: f64, center: [f64; 3]) -> Self {
        Self {
            power,
            waist: WAIST_UM,
            center,
            axis: [1.0, 0.0, 0.0],
            detuning,
            omega_ref: OMEGA_REF_MHZ,
            power_ref: POWER_REF_MW,
        }
    }

    pub fn with_waist(mut self, waist: f64) -> Self {
        self.waist = waist;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.waist > 0.0) || !self.waist.is_finite() {
            return Err(Error::domain(format!("beam waist must be positive, got {}", self.waist)));
        }
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(Error::domain(format!("beam power must be non-negative, got {}", self.power)));
        }
        if !(self.power_ref > 0.0) || !(self.omega_ref >= 0.0) {
            return Err(Error::domain("beam reference point must have positive power and non-negative Rabi frequency"));
        }
        let a2: f64 = self.axis.iter().map(|x| x * x).sum();
        if !(a2 > 0.0) || !a2.is_finite() {
            return Err(Error::domain("beam axis must be a non-zero vector"));
        }
        Ok(())
    }
}

/// Ω_addr/2π for the beam's power, scaling as √P from the reference point.
pub fn addressing_rabi(beam: &BeamSpec) -> Result<f64> {
    if beam.power < 0.0 || !beam.power.is_finite() {
        return Err(Error::domain(format!("beam power must be non-negative, got {}", beam.power)));
    }
    Ok(beam.omega_ref * (beam.power / beam.power_ref).sqrt())
}

/// Fraction of the peak intensity seen at `pos`: `exp(−2r²/w²)` with `r` the
/// distance to the beam axis. Axial variation is neglected.
pub fn intensity_fraction(beam: &BeamSpec, pos: &[f64; 3]) -> f64 {
    let norm = beam.axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    let axis = beam.axis.map(|x| x / norm);
    let d = [pos[0] - beam.center[0], pos[1] - beam.center[1], pos[2] - beam.center[2]];
    let along: f64 = d.iter().zip(&axis).map(|(a, b)| a * b).sum();
    let r2 = (d.iter().map(|x| x * x).sum::<f64>() - along * along).max(0.0);
    (-2.0 * r2 / (beam.waist * beam.waist)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    /// Ω²/4Δ.
    #[default]
    Perturbative,
    /// Exact shift of the two-level dressed state.
    Dressed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightShift {
    /// Δω₀/2π, MHz.
    pub value: f64,
    /// Set when the perturbative formula is used outside |Δ| ≥ 2Ω.
    pub outside_regime: bool,
}

pub fn light_shift(omega: f64, detuning: f64, mode: ShiftMode) -> Result<LightShift> {
    if !omega.is_finite() || detuning.is_nan() {
        return Err(Error::domain("light shift needs finite inputs"));
    }
    match mode {
        ShiftMode::Perturbative => {
            if detuning == 0.0 {
                return Err(Error::domain("perturbative light shift needs a non-zero detuning"));
            }
            let value = if detuning.is_infinite() { 0.0 } else { omega * omega / (4.0 * detuning) };
            Ok(LightShift {
                value,
                outside_regime: detuning.abs() < 2.0 * omega.abs(),
            })
        }
        ShiftMode::Dressed => {
            let value = if detuning.is_infinite() {
                0.0
            } else {
                let d = detuning.abs();
                // (√(Δ² + Ω²) − |Δ|)/2 written without cancellation
                let mag = 0.5 * omega * omega / (d.hypot(omega) + d);
                // on resonance the two dressed branches are symmetric; report no net shift
                if mag.is_nan() || detuning == 0.0 { 0.0 } else { detuning.signum() * mag }
            };
            Ok(LightShift {
                value,
                outside_regime: false,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringLifetime {
    /// τ↑ in µs; `None` when the beam is off.
    pub lifetime: Option<f64>,
    /// Γ = 1/τ↑ in µs⁻¹.
    pub rate: f64,
}

/// Lifetime of |↑⟩ against scattering through 6P: τ↑ = (2Δ/Ω)² τ_6P,
/// from the excited-state admixture (Ω/2Δ)². This is 4·(Δ/Ω)²τ_6P.
pub fn scattering_lifetime(omega: f64, detuning: f64, tau_6p_ns: f64) -> Result<ScatteringLifetime> {
    if detuning == 0.0 || detuning.is_nan() {
        return Err(Error::domain("scattering lifetime needs a non-zero detuning"));
    }
    if !(tau_6p_ns > 0.0) {
        return Err(Error::domain("τ_6P must be positive"));
    }
    let admixture = (omega / (2.0 * detuning)).powi(2);
    let rate = admixture / (tau_6p_ns * 1e-3);
    if rate == 0.0 {
        return Ok(ScatteringLifetime {
            lifetime: None,
            rate: 0.0,
        });
    }
    Ok(ScatteringLifetime {
        lifetime: Some(1.0 / rate),
        rate,
    })
}

/// Effective Raman coupling |↑⟩ ↔ |0⟩, Ω²/(2√3 Δ) = (2/√3)·Ω²/4Δ.
pub fn raman_coupling(omega: f64, detuning: f64) -> Result<f64> {
    if detuning == 0.0 || detuning.is_nan() {
        return Err(Error::domain("raman coupling needs a non-zero detuning"));
    }
    Ok(omega * omega / (2.0 * 3f64.sqrt() * detuning))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddressingOptions {
    pub mode: ShiftMode,
    pub tau_6p_ns: f64,
    pub zeeman_split: f64,
    pub zero_shift: f64,
}

impl Default for AddressingOptions {
    fn default() -> Self {
        Self {
            mode: ShiftMode::Perturbative,
            tau_6p_ns: TAU_6P_NS,
            zeeman_split: ZEEMAN_SPLIT_MHZ,
            zero_shift: 0.0,
        }
    }
}

/// Per-atom consequences of a set of addressing beams.
#[derive(Debug, Clone, PartialEq)]
pub struct AddressingEffect {
    /// δᵢ, MHz.
    pub light_shift: Vec<f64>,
    /// Γᵢ, µs⁻¹.
    pub scattering: Vec<f64>,
    /// Ω_Raman,ᵢ, MHz.
    pub raman_rabi: Vec<f64>,
    pub zeeman_split: f64,
    pub zero_shift: f64,
}

impl AddressingEffect {
    pub fn none(n_atoms: usize, options: &AddressingOptions) -> Self {
        Self {
            light_shift: vec![0.0; n_atoms],
            scattering: vec![0.0; n_atoms],
            raman_rabi: vec![0.0; n_atoms],
            zeeman_split: options.zeeman_split,
            zero_shift: options.zero_shift,
        }
    }

    pub fn raman_terms(&self) -> Vec<RamanTerm> {
        self.raman_rabi
            .iter()
            .map(|&rabi| RamanTerm {
                rabi,
                zeeman_split: self.zeeman_split,
                zero_shift: self.zero_shift,
            })
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|x| x * factor).collect();
        Self {
            light_shift: s(&self.light_shift),
            scattering: s(&self.scattering),
            raman_rabi: s(&self.raman_rabi),
            zeeman_split: self.zeeman_split,
            zero_shift: self.zero_shift,
        }
    }
}

/// Evaluates every beam at every atom. Each beam acts through its local Rabi
/// frequency Ω√f; contributions of several beams add.
pub fn addressing_effect(
    beams: &[BeamSpec],
    array: &AtomArray,
    options: &AddressingOptions,
) -> Result<AddressingEffect> {
    let mut effect = AddressingEffect::none(array.len(), options);
    for beam in beams {
        beam.validate()?;
        let omega = addressing_rabi(beam)?;
        for (i, pos) in array.positions().iter().enumerate() {
            let local = omega * intensity_fraction(beam, pos).sqrt();
            effect.light_shift[i] += light_shift(local, beam.detuning, options.mode)?.value;
            effect.scattering[i] += scattering_lifetime(local, beam.detuning, options.tau_6p_ns)?.rate;
            effect.raman_rabi[i] += raman_coupling(local, beam.detuning)?;
        }
    }
    Ok(effect)
}

/// Addressing effect that produces prescribed perturbative light shifts with
/// beams at `detuning`: Γ = δ/(Δ·τ_6P) and Ω_Raman = 2δ/√3 follow from
/// δ = Ω²/4Δ.
pub fn effect_from_light_shifts(shifts: &[f64], detuning: f64, options: &AddressingOptions) -> Result<AddressingEffect> {
    if !detuning.is_finite() || detuning == 0.0 {
        return Err(Error::domain("addressing detuning must be finite and non-zero"));
    }
    if shifts.iter().any(|d| !d.is_finite() || d * detuning < 0.0) {
        return Err(Error::domain("light shifts must be finite and share the sign of the detuning"));
    }
    let tau_us = options.tau_6p_ns * 1e-3;
    let mut effect = AddressingEffect::none(shifts.len(), options);
    effect.light_shift = shifts.to_vec();
    effect.scattering = shifts.iter().map(|d| d / (detuning * tau_us)).collect();
    effect.raman_rabi = shifts.iter().map(|d| 2.0 * d.abs() / 3f64.sqrt()).collect();
    Ok(effect)
}
