//! Preparation inefficiency, state-selective detection and shot sampling.
//!
//! Detection maps every local level to one of two outcomes. The de-excitation
//! pulse returns |↑⟩ to the ground state where it is recaptured, while |↓⟩
//! and |0⟩ are lost. An atom that never left the ground state is recaptured,
//! and so is an atom that scattered a photon from the addressing beam (6P
//! decays back to the ground state).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::QuantumState;
use crate::spinmodel::{Level, ProductBasis};

/// Measured Rydberg excitation efficiency.
pub const ETA_DEFAULT: f64 = 0.88;
/// Largest atom count for which the 2^N preparation mixture is expanded.
pub const MAX_MIXTURE_ATOMS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreparationModel {
    pub eta: f64,
}

impl PreparationModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::domain(format!("excitation efficiency η must lie in [0, 1], got {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn ideal() -> Self {
        Self { eta: 1.0 }
    }

    pub fn is_ideal(&self) -> bool {
        self.eta == 1.0
    }
}

/// One member of the preparation mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub probability: f64,
    /// Which atoms were excited successfully.
    pub excited: Vec<bool>,
    pub state: QuantumState,
}

/// Expands the product recipe into the 2^N mixture where each atom is, with
/// probability η, in its recipe level and otherwise left in `ground`.
/// Zero-probability branches are dropped.
pub fn prepare_with_inefficiency(basis: &ProductBasis, recipe: &[Level], eta: f64) -> Result<Vec<Branch>> {
    let model = PreparationModel::new(eta)?;
    let n = basis.n_atoms();
    if recipe.len() != n {
        return Err(Error::Dimension {
            what: "preparation recipe",
            expected: n,
            found: recipe.len(),
        });
    }
    if n > MAX_MIXTURE_ATOMS {
        return Err(Error::domain(format!("preparation mixture limited to {MAX_MIXTURE_ATOMS} atoms, got {n}")));
    }
    if !model.is_ideal() && !basis.scheme().has(Level::Ground) {
        return Err(Error::domain("η < 1 needs the ground level in the scheme"));
    }
    let mut branches = Vec::new();
    for mask in 0..(1usize << n) {
        let excited: Vec<bool> = (0..n).map(|i| mask & (1 << (n - 1 - i)) != 0).collect();
        let k = excited.iter().filter(|&&e| e).count() as i32;
        let probability = model.eta.powi(k) * (1.0 - model.eta).powi(n as i32 - k);
        if probability == 0.0 {
            continue;
        }
        let levels: Vec<Level> = recipe
            .iter()
            .zip(&excited)
            .map(|(&l, &e)| if e { l } else { Level::Ground })
            .collect();
        branches.push(Branch {
            probability,
            excited,
            state: QuantumState::basis_state(basis, &levels)?,
        });
    }
    Ok(branches)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Recaptured,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    /// Outcome assigned to population lost by scattering.
    pub scattered: Outcome,
    /// Independent per-atom probability of reporting the wrong outcome.
    pub flip_probability: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            scattered: Outcome::Recaptured,
            flip_probability: 0.0,
        }
    }
}

impl DetectionModel {
    pub fn outcome(&self, level: Level) -> Outcome {
        match level {
            Level::Up | Level::Ground => Outcome::Recaptured,
            Level::Down | Level::Zero => Outcome::Lost,
        }
    }
}

/// Probabilities over `{recaptured, lost}^N`. Pattern index bit `N−1−i` is set
/// when atom `i` is lost, so for two atoms the order is RR, RL, LR, LL.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionDistribution {
    n_atoms: usize,
    probabilities: Vec<f64>,
}

impl DetectionDistribution {
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, outcomes: &[Outcome]) -> f64 {
        self.probabilities[pattern_index(outcomes)]
    }

    /// Marginal probability that `atom` is recaptured.
    pub fn recaptured(&self, atom: usize) -> f64 {
        let bit = 1 << (self.n_atoms - 1 - atom);
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(k, _)| k & bit == 0)
            .map(|(_, p)| p)
            .sum()
    }
}

pub fn pattern_index(outcomes: &[Outcome]) -> usize {
    outcomes
        .iter()
        .fold(0, |acc, o| (acc << 1) | usize::from(*o == Outcome::Lost))
}

/// `"RL"`-style label of a pattern index.
pub fn pattern_label(index: usize, n_atoms: usize) -> String {
    (0..n_atoms)
        .map(|i| if index & (1 << (n_atoms - 1 - i)) != 0 { 'L' } else { 'R' })
        .collect()
}

/// Mixture-averaged detection probabilities. `branches` pairs each evolved
/// state with its mixture weight. Missing norm (scattering loss) is assigned to
/// the atoms flagged in `lossy_atoms`, which report `model.scattered`; the other
/// atoms keep the outcome statistics of the surviving state.
pub fn detection_probabilities(
    branches: &[(f64, QuantumState)],
    lossy_atoms: &[bool],
    model: &DetectionModel,
) -> Result<DetectionDistribution> {
    let n = branches
        .first()
        .map(|(_, s)| s.basis().n_atoms())
        .ok_or_else(|| Error::Distribution("no branches to detect".into()))?;
    if !lossy_atoms.is_empty() && lossy_atoms.len() != n {
        return Err(Error::Dimension {
            what: "lossy atom flags",
            expected: n,
            found: lossy_atoms.len(),
        });
    }
    if !(0.0..=1.0).contains(&model.flip_probability) {
        return Err(Error::domain("flip probability must lie in [0, 1]"));
    }
    let weight_sum: f64 = branches.iter().map(|(w, _)| w).sum();
    if (weight_sum - 1.0).abs() > 1e-9 || branches.iter().any(|(w, _)| *w < 0.0) {
        return Err(Error::Distribution(format!("mixture weights sum to {weight_sum}")));
    }

    let mut probs = vec![0.0; 1 << n];
    for (weight, state) in branches {
        let basis = state.basis();
        if basis.n_atoms() != n {
            return Err(Error::Dimension {
                what: "branch atom count",
                expected: n,
                found: basis.n_atoms(),
            });
        }
        let mut surviving = vec![0.0; 1 << n];
        for (k, amp) in state.amplitudes().iter().enumerate() {
            let p = amp.norm_sqr();
            if p > 0.0 {
                let outcomes: Vec<Outcome> = basis.levels_of(k).into_iter().map(|l| model.outcome(l)).collect();
                surviving[pattern_index(&outcomes)] += p;
            }
        }
        let norm: f64 = surviving.iter().sum();
        let deficit = (1.0 - norm).max(0.0);
        for (k, p) in surviving.iter().enumerate() {
            probs[k] += weight * p;
        }
        if deficit > 0.0 {
            let redirect = |k: usize| -> usize {
                (0..n).fold(k, |acc, i| {
                    if lossy_atoms.get(i).copied().unwrap_or(false) {
                        let bit = 1 << (n - 1 - i);
                        match model.scattered {
                            Outcome::Recaptured => acc & !bit,
                            Outcome::Lost => acc | bit,
                        }
                    } else {
                        acc
                    }
                })
            };
            if norm > 0.0 {
                for (k, p) in surviving.iter().enumerate() {
                    probs[redirect(k)] += weight * deficit * p / norm;
                }
            } else {
                probs[redirect(0)] += weight * deficit;
            }
        }
    }

    if model.flip_probability > 0.0 {
        for i in 0..n {
            let bit = 1 << (n - 1 - i);
            let e = model.flip_probability;
            let before = probs.clone();
            for (k, p) in probs.iter_mut().enumerate() {
                *p = (1.0 - e) * before[k] + e * before[k ^ bit];
            }
        }
    }
    Ok(DetectionDistribution {
        n_atoms: n,
        probabilities: probs,
    })
}

/// Counter-based generator for grid point `index` of a run seeded with
/// `seed`: ChaCha8 keyed by the seed, with the point index as stream id. The
/// draws of one point do not depend on how many points were evaluated before it.
pub fn derived_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Simulated repetitions of one experimental setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotDataset {
    pub n_atoms: usize,
    pub seed: u64,
    pub stream: u64,
    /// Pattern index of every shot.
    pub outcomes: Vec<u32>,
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    /// √(p̂(1−p̂)/n) per pattern.
    pub stderr: Vec<f64>,
}

impl ShotDataset {
    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    /// Detection bitstring of one shot, `R`/`L` per atom.
    pub fn bitstring(&self, shot: usize) -> String {
        pattern_label(self.outcomes[shot] as usize, self.n_atoms)
    }
}

/// Multinomial draws of `shots` repetitions from a detection distribution.
pub fn sample_shots(probabilities: &[f64], n_atoms: usize, shots: usize, seed: u64, stream: u64) -> Result<ShotDataset> {
    if probabilities.len() != 1 << n_atoms {
        return Err(Error::Dimension {
            what: "detection distribution",
            expected: 1 << n_atoms,
            found: probabilities.len(),
        });
    }
    if probabilities.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(Error::Distribution("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Distribution(format!("probabilities sum to {total}, not 1")));
    }
    if shots == 0 {
        return Err(Error::Distribution("at least one shot is needed".into()));
    }
    let mut cumulative = Vec::with_capacity(probabilities.len());
    let mut acc = 0.0;
    for p in probabilities {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let last_nonzero = probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0);

    let mut rng = derived_rng(seed, stream);
    let mut counts = vec![0u64; probabilities.len()];
    let outcomes: Vec<u32> = (0..shots)
        .map(|_| {
            let x = rng.gen::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= x).min(last_nonzero);
            counts[k] += 1;
            k as u32
        })
        .collect();
    let n = shots as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let stderr = frequencies.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(ShotDataset {
        n_atoms,
        seed,
        stream,
        outcomes,
        counts,
        frequencies,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{evolve, Schedule, Segment};
    use crate::spinmodel::{HamiltonianSpec, LevelScheme, Microwave};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn basis(n: usize, ground: bool) -> ProductBasis {
        ProductBasis::new(LevelScheme::new(false, ground), n).unwrap()
    }

    fn mixture(branches: Vec<Branch>) -> Vec<(f64, QuantumState)> {
        branches.into_iter().map(|b| (b.probability, b.state)).collect()
    }

    #[test]
    fn preparation_branches() {
        let b = basis(2, true);
        let br = prepare_with_inefficiency(&b, &[Level::Up, Level::Up], 1.0).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].state, QuantumState::from_label(&b, "uu").unwrap());

        let br = prepare_with_inefficiency(&b, &[Level::Up, Level::Up], 0.88).unwrap();
        let p: Vec<f64> = br.iter().map(|x| x.probability).collect();
        for (got, want) in p.iter().zip([0.0144, 0.1056, 0.1056, 0.7744]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(br[3].state, QuantumState::from_label(&b, "uu").unwrap());
        assert_eq!(br[1].state, QuantumState::from_label(&b, "gu").unwrap());

        let br = prepare_with_inefficiency(&b, &[Level::Up, Level::Up], 0.0).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].state, QuantumState::from_label(&b, "gg").unwrap());
    }

    #[test]
    fn preparation_errors() {
        assert!(prepare_with_inefficiency(&basis(2, true), &[Level::Up, Level::Up], 1.2).is_err());
        assert!(prepare_with_inefficiency(&basis(2, false), &[Level::Up, Level::Up], 0.9).is_err());
        assert!(prepare_with_inefficiency(&basis(2, true), &[Level::Up], 0.9).is_err());
    }

    #[test]
    fn mapping_is_total() {
        let m = DetectionModel::default();
        assert_eq!(m.outcome(Level::Up), Outcome::Recaptured);
        assert_eq!(m.outcome(Level::Ground), Outcome::Recaptured);
        assert_eq!(m.outcome(Level::Down), Outcome::Lost);
        assert_eq!(m.outcome(Level::Zero), Outcome::Lost);
    }

    #[test]
    fn detection_of_pure_states() {
        let b = basis(2, false);
        let d = detection_probabilities(
            &[(1.0, QuantumState::from_label(&b, "ud").unwrap())],
            &[],
            &DetectionModel::default(),
        )
        .unwrap();
        assert_eq!(d.probability(&[Outcome::Recaptured, Outcome::Lost]), 1.0);
        assert_eq!(pattern_label(1, 2), "RL");

        let b = basis(2, true);
        let br = prepare_with_inefficiency(&b, &[Level::Up, Level::Up], 0.88).unwrap();
        let d = detection_probabilities(&mixture(br), &[], &DetectionModel::default()).unwrap();
        assert_abs_diff_eq!(d.probabilities()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_matches_single_atom_closed_form() {
        let b = basis(1, true);
        let eta = 0.88;
        let omega = 1.6;
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        let sched = Schedule::new(vec![Segment::new(1.0, HamiltonianSpec::new(1).with_microwave(Microwave::new(omega, 0.0)))])
            .unwrap()
            .with_records(times.clone())
            .unwrap();
        let branches = prepare_with_inefficiency(&b, &[Level::Up], eta).unwrap();
        let evolved: Vec<Vec<(f64, QuantumState)>> =
            branches.iter().map(|br| evolve(&br.state, &sched).unwrap()).collect();
        for (k, t) in times.iter().enumerate() {
            let mix: Vec<(f64, QuantumState)> = branches
                .iter()
                .zip(&evolved)
                .map(|(br, ev)| (br.probability, ev[k].1.clone()))
                .collect();
            let d = detection_probabilities(&mix, &[], &DetectionModel::default()).unwrap();
            assert_abs_diff_eq!(d.probabilities()[1], eta * (PI * omega * t).sin().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_deficit_goes_to_lossy_atoms() {
        let b = basis(2, false);
        let st = QuantumState::new(b.clone(), b.ket_str("ud").unwrap() * num_complex::Complex64::new(0.8, 0.0)).unwrap();
        let d = detection_probabilities(&[(1.0, st.clone())], &[true, false], &DetectionModel::default()).unwrap();
        assert_abs_diff_eq!(d.probabilities()[1], 1.0, epsilon = 1e-12);
        let lost = DetectionModel {
            scattered: Outcome::Lost,
            ..Default::default()
        };
        let d = detection_probabilities(&[(1.0, st)], &[true, false], &lost).unwrap();
        assert_abs_diff_eq!(d.probabilities()[1], 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probabilities()[3], 0.36, epsilon = 1e-12);
    }

    #[test]
    fn flip_probability_mixes_outcomes() {
        let b = basis(1, false);
        let model = DetectionModel {
            flip_probability: 0.1,
            ..Default::default()
        };
        let d = detection_probabilities(&[(1.0, QuantumState::from_label(&b, "u").unwrap())], &[], &model).unwrap();
        assert_abs_diff_eq!(d.probabilities()[0], 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(d.recaptured(0), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn sampling_basics() {
        let ds = sample_shots(&[1.0, 0.0, 0.0, 0.0], 2, 100, 7, 0).unwrap();
        assert_eq!(ds.counts, vec![100, 0, 0, 0]);
        assert_eq!(ds.stderr[0], 0.0);
        assert_eq!(ds.bitstring(0), "RR");
        assert_eq!(ds.shots(), 100);

        let a = sample_shots(&[0.2, 0.3, 0.1, 0.4], 2, 500, 42, 3).unwrap();
        let b = sample_shots(&[0.2, 0.3, 0.1, 0.4], 2, 500, 42, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_shots(&[0.2, 0.3, 0.1, 0.4], 2, 500, 42, 4).unwrap();
        assert_ne!(a.outcomes, c.outcomes);
        assert_abs_diff_eq!(a.frequencies.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampling_rejects_bad_distributions() {
        assert!(sample_shots(&[0.5, 0.4], 1, 10, 0, 0).is_err());
        assert!(sample_shots(&[1.5, -0.5], 1, 10, 0, 0).is_err());
        assert!(sample_shots(&[0.5, 0.5, 0.0], 1, 10, 0, 0).is_err());
        assert!(sample_shots(&[0.5, 0.5], 1, 0, 0, 0).is_err());
    }

    #[test]
    fn binomial_concentration() {
        let n = 100_000;
        let tol = 3.0 * (0.25 / n as f64).sqrt();
        let inside = (0..200u64)
            .filter(|&seed| {
                let ds = sample_shots(&[0.5, 0.5], 1, n, seed, 0).unwrap();
                (ds.frequencies[0] - 0.5).abs() <= tol
            })
            .count();
        assert!(inside >= 198, "{inside} of 200 seeds inside 3σ");
    }

    #[test]
    fn large_sample_converges() {
        let p = [0.6, 0.25, 0.1, 0.05];
        let n = 1_000_000;
        let ds = sample_shots(&p, 2, n, 2024, 0).unwrap();
        for (f, q) in ds.frequencies.iter().zip(p) {
            assert!((f - q).abs() < 4.0 * (q * (1.0 - q) / n as f64).sqrt());
        }
    }
}
