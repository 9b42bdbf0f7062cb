//! Least-squares fits used to extract frequencies, phases and line centers.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("data span {span} µs covers less than one period at {frequency} MHz")]
    InsufficientSpan { span: f64, frequency: f64 },

    #[error("degenerate data: fitted amplitude {amplitude:.3e} (rms residual {residual:.3e})")]
    Degenerate { amplitude: f64, residual: f64 },

    #[error("fit did not converge after {iterations} iterations (rms residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("fit input contains non-finite values or mismatched lengths")]
    BadInput,
}

/// `offset + amplitude·cos(2π·frequency·t + phase)`, amplitude ≥ 0 and
/// phase in (−π, π]. Uncertainties are 1σ from the residual scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub amplitude_err: f64,
    pub frequency_err: f64,
    pub phase_err: f64,
    pub offset_err: f64,
}

impl SinusoidFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (TAU * self.frequency * t + self.phase).cos()
    }
}

fn check_input(t: &[f64], y: &[f64]) -> Result<(), FitError> {
    if t.len() != y.len() || t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(FitError::BadInput);
    }
    Ok(())
}

/// Linear least squares of `c + A cos ωt + B sin ωt`; returns (c, A, B, rss).
fn linear_fit(t: &[f64], y: &[f64], frequency: f64) -> Option<(f64, f64, f64, f64, Matrix3<f64>)> {
    let w = TAU * frequency;
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let row = Vector3::new(1.0, (w * ti).cos(), (w * ti).sin());
        ata += row * row.transpose();
        aty += row * yi;
    }
    let inv = ata.try_inverse()?;
    let p = inv * aty;
    let rss = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let r = yi - (p[0] + p[1] * (w * ti).cos() + p[2] * (w * ti).sin());
            r * r
        })
        .sum();
    Some((p[0], p[1], p[2], rss, inv))
}

fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(TAU);
    if p > PI {
        p -= TAU;
    }
    p
}

/// Sinusoid fit with a free or fixed frequency (MHz, times in µs).
///
/// Free mode needs at least 8 points and the data must span at least one
/// period of the fitted frequency. The frequency is located by a scan of the
/// variable-projection residual, refined by golden-section search, and then
/// polished together with the other parameters by Gauss-Newton.
pub fn fit_sinusoid(t: &[f64], y: &[f64], fixed_frequency: Option<f64>) -> Result<SinusoidFit, FitError> {
    check_input(t, y)?;
    match fixed_frequency {
        Some(f) => fit_fixed(t, y, f),
        None => fit_free(t, y),
    }
}

fn fit_fixed(t: &[f64], y: &[f64], frequency: f64) -> Result<SinusoidFit, FitError> {
    let n = t.len();
    if n < 4 {
        return Err(FitError::TooFewPoints { needed: 4, got: n });
    }
    let (c, a, b, rss, inv) = linear_fit(t, y, frequency).ok_or(FitError::Degenerate {
        amplitude: 0.0,
        residual: f64::NAN,
    })?;
    let sigma2 = rss / (n - 3) as f64;
    let amplitude = a.hypot(b);
    let phase = wrap_phase((-b).atan2(a));
    // propagate the (A, B) covariance to amplitude and phase
    let (va, vb, vab) = (inv[(1, 1)] * sigma2, inv[(2, 2)] * sigma2, inv[(1, 2)] * sigma2);
    let (amp_err, phase_err) = if amplitude > 0.0 {
        let (ca, cb) = (a / amplitude, b / amplitude);
        let var_amp = ca * ca * va + cb * cb * vb + 2.0 * ca * cb * vab;
        let var_phase = (cb * cb * va + ca * ca * vb - 2.0 * ca * cb * vab) / (amplitude * amplitude);
        (var_amp.max(0.0).sqrt(), var_phase.max(0.0).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(SinusoidFit {
        amplitude,
        frequency,
        phase,
        offset: c,
        residual: (rss / n as f64).sqrt(),
        amplitude_err: amp_err,
        frequency_err: 0.0,
        phase_err,
        offset_err: (inv[(0, 0)] * sigma2).max(0.0).sqrt(),
    })
}

fn golden_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-15 * (lo.abs() + hi.abs()).max(1e-300) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 { x1 } else { x2 }
}

fn fit_free(t: &[f64], y: &[f64]) -> Result<SinusoidFit, FitError> {
    let n = t.len();
    if n < 8 {
        return Err(FitError::TooFewPoints { needed: 8, got: n });
    }
    let (tmin, tmax) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = tmax - tmin;
    if !(span > 0.0) {
        return Err(FitError::BadInput);
    }
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    gaps.sort_by(f64::total_cmp);
    let nyquist = 0.5 / gaps[gaps.len() / 2];

    let mean = y.iter().sum::<f64>() / n as f64;
    let total_ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if total_ss <= (1e-10 * scale).powi(2) * n as f64 {
        return Err(FitError::Degenerate {
            amplitude: 0.0,
            residual: (total_ss / n as f64).sqrt(),
        });
    }

    let rss_at = |f: f64| linear_fit(t, y, f).map_or(f64::INFINITY, |r| r.3);
    // start below one period so that sub-period data is recognised as such
    let f_lo = 0.25 / span;
    let df = 1.0 / (20.0 * span);
    let steps = ((nyquist - f_lo) / df).ceil().max(1.0) as usize;
    let (mut best_f, mut best_rss) = (f_lo, f64::INFINITY);
    for k in 0..=steps {
        let f = f_lo + k as f64 * df;
        let r = rss_at(f);
        if r < best_rss {
            best_rss = r;
            best_f = f;
        }
    }
    let f0 = golden_min((best_f - df).max(f_lo * 0.5), best_f + df, rss_at);
    let (c, a, b, _, _) = linear_fit(t, y, f0).ok_or(FitError::Degenerate {
        amplitude: 0.0,
        residual: best_rss,
    })?;
    if span * f0 < 1.0 {
        return Err(FitError::InsufficientSpan { span, frequency: f0 });
    }
    let mut p = Vector4::new(c, a.hypot(b), f0, (-b).atan2(a));

    if p[1] <= 1e-8 * scale {
        return Err(FitError::Degenerate {
            amplitude: p[1],
            residual: (best_rss / n as f64).sqrt(),
        });
    }

    // Gauss-Newton polish on (offset, amplitude, frequency, phase)
    let resid = |p: &Vector4<f64>| -> f64 {
        t.iter()
            .zip(y)
            .map(|(&ti, &yi)| (yi - p[0] - p[1] * (TAU * p[2] * ti + p[3]).cos()).powi(2))
            .sum()
    };
    let jacobian = |p: &Vector4<f64>| -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let th = TAU * p[2] * ti + p[3];
            let (s, co) = th.sin_cos();
            let row = Vector4::new(1.0, co, -p[1] * s * TAU * ti, -p[1] * s);
            let r = yi - p[0] - p[1] * co;
            jtj += row * row.transpose();
            jtr += row * r;
        }
        (jtj, jtr)
    };
    let mut rss = resid(&p);
    let mut converged = false;
    let max_iter = 100;
    let mut lambda = 1e-12;
    for _ in 0..max_iter {
        let (jtj, jtr) = jacobian(&p);
        let mut damped = jtj;
        for k in 0..4 {
            damped[(k, k)] *= 1.0 + lambda;
        }
        let Some(step) = damped.try_inverse().map(|m| m * jtr) else {
            break;
        };
        let candidate = p + step;
        let new_rss = resid(&candidate);
        if new_rss <= rss {
            let rel = (step[2] / p[2]).abs();
            p = candidate;
            let improvement = rss - new_rss;
            rss = new_rss;
            lambda = (lambda * 0.1).max(1e-15);
            if rel < 1e-13 || improvement <= 1e-15 * rss.max(1e-300) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e8 {
                // no descent direction left: the variable-projection optimum stands
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(FitError::NonConvergence {
            iterations: max_iter,
            residual: (rss / n as f64).sqrt(),
        });
    }
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    p[3] = wrap_phase(p[3]);
    if span * p[2] < 1.0 {
        return Err(FitError::InsufficientSpan { span, frequency: p[2] });
    }

    let (jtj, _) = jacobian(&p);
    let sigma2 = rss / (n - 4) as f64;
    let cov = jtj.try_inverse().unwrap_or_else(|| Matrix4::from_element(f64::INFINITY));
    let err = |k: usize| (cov[(k, k)] * sigma2).max(0.0).sqrt();
    Ok(SinusoidFit {
        amplitude: p[1],
        frequency: p[2],
        phase: p[3],
        offset: p[0],
        residual: (rss / n as f64).sqrt(),
        amplitude_err: err(1),
        frequency_err: err(2),
        phase_err: err(3),
        offset_err: err(0),
    })
}

/// Spin-flip probability after a square pulse of Rabi frequency `rabi` and
/// length `duration`, at detuning `detuning` (all MHz / µs).
pub fn rabi_lineshape(detuning: f64, rabi: f64, duration: f64) -> f64 {
    let g2 = rabi * rabi + detuning * detuning;
    if g2 == 0.0 {
        return 0.0;
    }
    rabi * rabi / g2 * (PI * g2.sqrt() * duration).sin().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakFit {
    pub center: f64,
    pub center_err: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual: f64,
}

/// Fits `offset + amplitude·L(x − center)` with the symmetric square-pulse
/// line `L` of known Rabi frequency and pulse length. The center is located by
/// scanning the data grid and refined by golden-section search on the
/// variable-projection residual.
pub fn fit_rabi_line(x: &[f64], y: &[f64], rabi: f64, duration: f64) -> Result<PeakFit, FitError> {
    check_input(x, y)?;
    let n = x.len();
    if n < 5 {
        return Err(FitError::TooFewPoints { needed: 5, got: n });
    }
    let project = |center: f64| -> (f64, f64, f64) {
        let mut ata = nalgebra::Matrix2::zeros();
        let mut aty = nalgebra::Vector2::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let row = nalgebra::Vector2::new(1.0, rabi_lineshape(xi - center, rabi, duration));
            ata += row * row.transpose();
            aty += row * yi;
        }
        match ata.try_inverse() {
            Some(inv) => {
                let p = inv * aty;
                let rss = x
                    .iter()
                    .zip(y)
                    .map(|(&xi, &yi)| (yi - p[0] - p[1] * rabi_lineshape(xi - center, rabi, duration)).powi(2))
                    .sum();
                (p[0], p[1], rss)
            }
            None => (0.0, 0.0, f64::INFINITY),
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&k| x[k]).collect();
    let step = xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let (mut best, mut best_rss) = (xs[0], f64::INFINITY);
    for &c in &xs {
        let (_, amp, rss) = project(c);
        if amp > 0.0 && rss < best_rss {
            best = c;
            best_rss = rss;
        }
    }
    if !best_rss.is_finite() {
        return Err(FitError::Degenerate {
            amplitude: 0.0,
            residual: f64::NAN,
        });
    }
    let center = golden_min(best - step, best + step, |c| project(c).2);
    let (offset, amplitude, rss) = project(center);
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let residual = (rss / n as f64).sqrt();
    if amplitude <= 1e-8 * scale {
        return Err(FitError::Degenerate { amplitude, residual });
    }
    // curvature of the residual gives the center uncertainty
    let h = (step * 1e-3).max(1e-9);
    let curvature = (project(center + h).2 - 2.0 * rss + project(center - h).2) / (h * h);
    let sigma2 = rss / (n - 3) as f64;
    let center_err = if curvature > 0.0 {
        (2.0 * sigma2 / curvature).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(PeakFit {
        center,
        center_err,
        amplitude,
        offset,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize, stop: f64) -> Vec<f64> {
        (0..n).map(|k| stop * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_exchange_trace() {
        let t = grid(201, 5.0);
        let y: Vec<f64> = t.iter().map(|&x| (TAU * 0.40 * x).cos().powi(2)).collect();
        let fit = fit_sinusoid(&t, &y, None).unwrap();
        assert!((fit.frequency / 0.80 - 1.0).abs() < 1e-6, "{}", fit.frequency);
        assert_abs_diff_eq!(fit.amplitude, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.offset, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.phase, 0.0, epsilon = 1e-8);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn recovers_parameters_with_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let t = grid(120, 3.0);
        let y: Vec<f64> = t
            .iter()
            .map(|&x| 0.3 + 0.2 * (TAU * 2.25 * x - 1.0).cos() + 0.01 * (rng.gen::<f64>() - 0.5))
            .collect();
        let fit = fit_sinusoid(&t, &y, None).unwrap();
        assert!((fit.frequency - 2.25).abs() < 5.0 * fit.frequency_err + 1e-6);
        assert!(fit.frequency_err > 0.0 && fit.frequency_err < 1e-2);
        assert_abs_diff_eq!(fit.phase, -1.0, epsilon = 0.02);
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let t = grid(50, 2.0);
        let y = vec![0.7; 50];
        assert!(matches!(fit_sinusoid(&t, &y, None), Err(FitError::Degenerate { .. })));
    }

    #[test]
    fn too_few_or_too_short() {
        let t = grid(6, 2.0);
        let y: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        assert!(matches!(fit_sinusoid(&t, &y, None), Err(FitError::TooFewPoints { .. })));
        let t = grid(40, 0.5);
        let y: Vec<f64> = t.iter().map(|&x| (TAU * 0.3 * x).cos()).collect();
        assert!(matches!(fit_sinusoid(&t, &y, None), Err(FitError::InsufficientSpan { .. })));
        assert!(matches!(fit_sinusoid(&[0.0, f64::NAN], &[1.0, 2.0], Some(1.0)), Err(FitError::BadInput)));
    }

    #[test]
    fn fixed_frequency_phase_shift() {
        let t = grid(100, 4.0);
        let a: Vec<f64> = t.iter().map(|&x| 0.5 + 0.5 * (TAU * 0.8 * x).cos()).collect();
        let b: Vec<f64> = t.iter().map(|&x| 0.5 - 0.5 * (TAU * 0.8 * x).cos()).collect();
        let fa = fit_sinusoid(&t, &a, Some(0.8)).unwrap();
        let fb = fit_sinusoid(&t, &b, Some(0.8)).unwrap();
        assert_abs_diff_eq!((fb.phase - fa.phase).abs(), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(fb.amplitude, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fa.eval(1.3), 0.5 +0.5 * (TAU * 0.8 * 1.3).cos(), epsilon = 1e-12);
    }

    #[test]
    fn line_center_exact() {
        let (rabi, tau) = (0.1, 5.0);
        let x: Vec<f64> = (0..81).map(|k| 4.3 + k as f64 * 0.0125).collect();
        let y: Vec<f64> = x.iter().map(|&d| 0.05 + 0.9 * rabi_lineshape(d - 4.7831, rabi, tau)).collect();
        let fit = fit_rabi_line(&x, &y, rabi, tau).unwrap();
        assert_abs_diff_eq!(fit.center, 4.7831, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.amplitude, 0.9, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.offset, 0.05, epsilon = 1e-8);
    }

    #[test]
    fn flat_line_is_degenerate() {
        let x: Vec<f64> = (0..21).map(|k| k as f64 * 0.1).collect();
        let y = vec![0.0; 21];
        assert!(fit_rabi_line(&x, &y, 0.1, 5.0).is_err());
    }

    #[test]
    fn lineshape_on_resonance_pi_pulse() {
        assert_abs_diff_eq!(rabi_lineshape(0.0, 0.1, 5.0), 1.0, epsilon = 1e-15);
        assert_eq!(rabi_lineshape(0.0, 0.0, 5.0), 0.0);
    }
}
