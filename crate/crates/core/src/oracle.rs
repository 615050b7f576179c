//! Closed-form reference results used to validate the simulator: the
//! no-feedback Franson `G²(τ)`, its visibility, the two-photon amplitudes,
//! Weisskopf-Wigner populations and the exact delayed-amplitude solution for
//! feedback. All absolute prefactors (`η²`) are set to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub gamma_a: f64,
    pub gamma_b: f64,
    /// Interferometer delay `T`.
    pub delay: f64,
    pub phi_t: f64,
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b), ("delay", self.delay)] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }
}

/// `G²(τ)` of the no-feedback Franson setup, piecewise in `τ` relative to
/// `±T`.
pub fn g2_closed_form(tau: f64, p: &AnalyticParams) -> f64 {
    let (ga, gb, t, phi) = (p.gamma_a, p.gamma_b, p.delay, p.phi_t);
    let ea = (-ga * t / 2.0).exp();
    if tau < -t {
        0.0
    } else if tau < 0.0 {
        (-gb * (tau + t)).exp() / (4.0 * ga)
    } else if tau < t {
        let bracket = 1.0
            + 0.5 * (-gb * t).exp()
            + ea * (2.0 * phi).cos()
            + ((-gb * t / 2.0).exp() + (-(ga + gb) * t / 2.0).exp()) * phi.cos();
        (-gb * tau).exp() / (2.0 * ga) * bracket
    } else {
        // e^{-Γ_b τ} e^{Γ_b T} and e^{-Γ_b τ} e^{Γ_b T/2} are combined before
        // exponentiating so that large Γ_b T cannot overflow.
        let bracket_decaying = (-gb * tau).exp()
            * (1.0 + 0.5 * (-gb * t).exp() + ea + ea * (2.0 * phi).cos()
                + (1.0 + ea) * (-gb * t / 2.0).exp() * phi.cos());
        let bracket_growing = 0.5 * (-gb * (tau - t)).exp()
            + (1.0 + ea) * (-gb * (tau - t / 2.0)).exp() * phi.cos();
        (bracket_decaying + bracket_growing) / (2.0 * ga)
    }
}

/// Visibility of the central-peak oscillation at `τ = 0` between
/// `φ_T = 0` and `φ_T = π/2`.
pub fn visibility_closed_form(gamma_a_t: f64, gamma_b_t: f64) -> f64 {
    let a = 1.0 + 0.5 * (-gamma_b_t).exp();
    let b = (-gamma_a_t / 2.0).exp();
    let c = (-gamma_b_t / 2.0).exp() + (-(gamma_a_t + gamma_b_t) / 2.0).exp();
    (2.0 * b + c) / (2.0 * a + c)
}

/// Central-peak height for well separated peaks (`Γ_a T ≪ Γ_b T`), in
/// units with `Γ_a = 1`.
pub fn central_peak_limit(phi_t: f64, gamma_a_t: f64) -> f64 {
    0.25 * (1.0 + (-gamma_a_t / 2.0).exp() * (2.0 * phi_t).cos())
}

/// Amplitude for photon 1 reaching detector 1 at `t1` after delay `r1` and
/// photon 2 reaching detector 2 at `t2` after delay `r2` (each delay `0` or
/// `T`). Undelayed contributions carry the path phase `e^{iφ_T}`, the same
/// convention as the simulator.
pub fn two_photon_amplitude(t1: f64, t2: f64, r1: f64, r2: f64, p: &AnalyticParams) -> C64 {
    let s1 = t1 - r1;
    let s2 = t2 - r2;
    if s1 < 0.0 || s2 < s1 {
        return C64::new(0.0, 0.0);
    }
    let mag = (-p.gamma_a / 2.0 * s1 - p.gamma_b / 2.0 * (s2 - s1)).exp();
    let shorts = [r1, r2].iter().filter(|&&r| r == 0.0).count() as f64;
    C64::from_polar(mag, p.phi_t * shorts)
}

/// Full detector amplitude `½ Σ_{r1,r2} Ψ_{r1 r2}(t1, t2)`.
pub fn detector_amplitude(t1: f64, t2: f64, p: &AnalyticParams) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for r1 in [0.0, p.delay] {
        for r2 in [0.0, p.delay] {
            acc += two_photon_amplitude(t1, t2, r1, r2, p);
        }
    }
    acc * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub g_a: f64,
    pub g_b: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
}

/// Two-photon spectral amplitude at detunings `omega` (photon 1) and
/// `omega_prime` (photon 2) from the respective transitions.
pub fn spectral_amplitude(omega: f64, omega_prime: f64, p: &SpectralParams) -> C64 {
    let i = C64::new(0.0, 1.0);
    let d1 = i * (omega + omega_prime) - p.gamma_a / 2.0;
    let d2 = i * omega_prime - p.gamma_b / 2.0;
    -p.g_a * p.g_b / (d1 * d2)
}

/// Weisskopf-Wigner populations of `|a>` and `|b>` after starting in `|a>`.
pub fn ww_populations(t: f64, gamma_a: f64, gamma_b: f64) -> (f64, f64) {
    let pa = (-gamma_a * t).exp();
    let delta = gamma_a - gamma_b;
    // (e^{δt} − 1)/δ, continuous through δ = 0
    let ratio = if (delta * t).abs() < 1e-12 { t } else { (delta * t).exp_m1() / delta };
    (pa, gamma_a * pa * ratio)
}

/// `|c_a(t)|²` for the delayed amplitude equation
///
/// `ċ(t) = −(Γ_a/2) c(t) + (Γ_a/2) e^{iφ} e^{−Γ_b τ/2} c(t − τ) Θ(t − τ)`, `c(0) = 1`.
///
/// The returning field only re-excites `a` if the emitter is still in `b`,
/// whose amplitude decays at `Γ_b/2` during the round trip; `gamma_b = 0`
/// gives the two-level form. The solution is evaluated exactly as the sum
/// over round trips `c(t) = Σ_n (κβ)^n (t − nτ)^n / n! e^{−κ(t − nτ)}`,
/// `κ = Γ_a/2`, `β = e^{iφ} e^{−Γ_b τ/2}`, so any time grid is accepted.
pub fn dde_population(times: &[f64], gamma_a: f64, gamma_b: f64, tau_fb: f64, phi_fb: f64) -> Result<Vec<f64>> {
    let mut errs = Vec::new();
    if !(gamma_a > 0.0 && gamma_a.is_finite()) {
        errs.push(format!("gamma_a must be positive, got {gamma_a}"));
    }
    if !(gamma_b >= 0.0 && gamma_b.is_finite()) {
        errs.push(format!("gamma_b must be non-negative, got {gamma_b}"));
    }
    if !(tau_fb > 0.0 && tau_fb.is_finite()) {
        errs.push(format!("tau_fb must be positive, got {tau_fb}"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        errs.push("times must be finite and non-negative".into());
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }
    let kappa = gamma_a / 2.0;
    let beta = C64::from_polar((-gamma_b * tau_fb / 2.0).exp(), phi_fb);
    Ok(times
        .iter()
        .map(|&t| {
            let mut c = C64::new(0.0, 0.0);
            let mut n = 0;
            let mut weight = C64::new(1.0, 0.0); // (κβ)^n / n!
            while t - n as f64 * tau_fb >= 0.0 {
                let s = t - n as f64 * tau_fb;
                c += weight * s.powi(n) * (-kappa * s).exp();
                n += 1;
                weight *= kappa * beta / n as f64;
            }
            c.norm_sqr()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn fig3(phi_t: f64) -> AnalyticParams {
        AnalyticParams { gamma_a: 1.0, gamma_b: 4.0, delay: 2.5, phi_t }
    }

    #[test]
    fn g2_branches() {
        let p = fig3(0.3);
        assert_eq!(g2_closed_form(-2.0 * p.delay, &p), 0.0);
        assert!((g2_closed_form(-p.delay, &p) - 0.25).abs() < 1e-15);
        let q = AnalyticParams { gamma_a: 1.0, gamma_b: 1.0, delay: 4.0, phi_t: 0.0 };
        let want = 0.5 * (1.0 + 0.5 * (-4f64).exp() + 2.0 * (-2f64).exp() + (-4f64).exp());
        assert!((g2_closed_form(0.0, &q) - want).abs() < 1e-14);
        assert!((want / 0.5 - 1.29815).abs() < 1e-5);
    }

    #[test]
    fn g2_late_branch_is_finite_for_large_rates() {
        let p = AnalyticParams { gamma_a: 1.0, gamma_b: 400.0, delay: 5.0, phi_t: 0.0 };
        let v = g2_closed_form(5.0, &p);
        assert!(v.is_finite() && (v - 0.25).abs() < 1e-3, "{v}");
    }

    #[test]
    fn g2_side_peaks_ignore_phase() {
        for phi in [0.0, FRAC_PI_4, FRAC_PI_2] {
            let p = fig3(phi);
            assert!((g2_closed_form(-p.delay, &p) - 0.25).abs() < 1e-15);
            // the +T side peak carries only e^{-Γ_b T/2}-suppressed phase terms
            let side = g2_closed_form(p.delay, &p);
            assert!((side - 0.25).abs() / 0.25 < 0.02, "{side}");
        }
    }

    #[test]
    fn g2_from_amplitudes_matches_closed_form() {
        // integrate |Ψ(t1, t1 + τ)|² over t1 on a fine grid
        for phi in [0.0, 1.1] {
            let p = fig3(phi);
            for tau in [-1.7, -0.4, 0.6, 1.9, 3.3] {
                let h = 2e-4;
                let s: f64 = (0..150_000)
                    .map(|k| detector_amplitude(k as f64 * h, k as f64 * h + tau, &p).norm_sqr() * h)
                    .sum();
                let want = g2_closed_form(tau, &p);
                assert!((s - want).abs() < 2e-3 * want.max(0.05), "tau={tau}: {s} vs {want}");
            }
        }
    }

    #[test]
    fn visibility_examples_and_limits() {
        assert!((visibility_closed_form(4.0, 4.0) - 0.195).abs() < 5e-4);
        assert!((visibility_closed_form(2.5, 10.0) - 0.290).abs() < 0.02);
        for ga_t in [0.5, 2.0, 5.0] {
            let v = visibility_closed_form(ga_t, 200.0);
            assert!((v - (-ga_t / 2.0f64).exp()).abs() < 1e-12);
        }
        assert!((visibility_closed_form(1e-12, 1e-12) - 0.8).abs() < 1e-9);
        assert!((visibility_closed_form(1e-9, 200.0) - 1.0).abs() < 1e-6);
        for x in [0.1, 1.0, 7.0] {
            for y in [0.1, 3.0, 20.0] {
                let v = visibility_closed_form(x, y);
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn visibility_agrees_with_branch_three() {
        for (x, y) in [(2.5, 10.0), (4.0, 4.0), (1.0, 3.0)] {
            let h = |phi| g2_closed_form(0.0, &AnalyticParams { gamma_a: 1.0, gamma_b: y / x, delay: x, phi_t: phi });
            let v = (h(0.0) - h(FRAC_PI_2)) / (h(0.0) + h(FRAC_PI_2));
            assert!((v - visibility_closed_form(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn central_peak_limit_values() {
        let x: f64 = 3.0;
        assert!((central_peak_limit(0.0, x) - (1.0 + (-x / 2.0).exp()) / 4.0).abs() < 1e-15);
        assert!((central_peak_limit(FRAC_PI_2, x) - (1.0 - (-x / 2.0).exp()) / 4.0).abs() < 1e-15);
        assert!((central_peak_limit(FRAC_PI_4, x) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn amplitude_step_functions() {
        let p = fig3(0.0);
        assert_eq!(two_photon_amplitude(1.0, 3.0, p.delay, 0.0, &p), C64::new(0.0, 0.0));
        assert_eq!(two_photon_amplitude(2.0, 1.0, 0.0, 0.0, &p), C64::new(0.0, 0.0));
        let (t1, t2) = (0.7, 1.5);
        let a = two_photon_amplitude(t1, t2, 0.0, 0.0, &p).norm_sqr();
        let want = (-p.gamma_a * t1 - p.gamma_b * (t2 - t1)).exp();
        assert!((a - want).abs() < 1e-15);
    }

    #[test]
    fn amplitude_marginal_is_upper_level_decay() {
        let p = fig3(0.0);
        let h = 1e-4;
        for t1 in [0.0, 0.5, 2.0] {
            let m: f64 = (0..40_000)
                .map(|k| two_photon_amplitude(t1, t1 + (k as f64 + 0.5) * h, 0.0, 0.0, &p).norm_sqr() * h)
                .sum();
            let got = m * p.gamma_b;
            assert!((got / (-p.gamma_a * t1).exp() - 1.0).abs() < 0.01, "{got}");
        }
    }

    #[test]
    fn spectral_amplitude_shape() {
        let p = SpectralParams { g_a: 0.3, g_b: 0.7, gamma_a: 1.0, gamma_b: 2.0 };
        let peak = spectral_amplitude(0.0, 0.0, &p).norm();
        assert!((peak - 0.21 / 0.5).abs() < 1e-14);
        let w = p.gamma_b / 2.0;
        let half = spectral_amplitude(-w, w, &p).norm_sqr();
        assert!((half / (peak * peak) - 0.5).abs() < 1e-14);
        let (x, y) = (0.37, -1.2);
        assert!((spectral_amplitude(-x, -y, &p) - spectral_amplitude(x, y, &p).conj()).norm() < 1e-15);
    }

    #[test]
    fn ww_examples() {
        assert_eq!(ww_populations(0.0, 1.0, 2.0), (1.0, 0.0));
        let (a, b) = ww_populations(1.0, 1.0, 1.0);
        let e = (-1f64).exp();
        assert!((a - e).abs() < 1e-15 && (b - e).abs() < 1e-15);
        let (a, b) = ww_populations(60.0, 1.0, 0.5);
        assert!(a < 1e-20 && b < 1e-10);
        let h = 1e-5;
        for t in [0.1, 1.0, 3.0] {
            let d = (ww_populations(t + h, 1.3, 0.7).0 - ww_populations(t - h, 1.3, 0.7).0) / (2.0 * h);
            assert!((d + 1.3 * ww_populations(t, 1.3, 0.7).0).abs() < 1e-8);
        }
    }

    #[test]
    fn dde_before_first_return_is_free_decay() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
        for phi in [0.0, 1.0, PI] {
            let pop = dde_population(&times, 1.0, 1.0, 1.0, phi).unwrap();
            for (t, p) in times.iter().zip(pop) {
                assert!((p - (-t).exp()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dde_second_interval_closed_form() {
        let (g, tau) = (1.0, 1.0);
        let times: Vec<f64> = (100..200).map(|k| k as f64 * 0.01).collect();
        let pop = dde_population(&times, g, 0.0, tau, 0.0).unwrap();
        for (t, p) in times.iter().zip(pop) {
            let c = (-g * t / 2.0).exp() * (1.0 + g / 2.0 * (t - tau) * (g * tau / 2.0).exp());
            assert!((p - c * c).abs() < 1e-13);
        }
    }

    #[test]
    fn dde_feedback_phase_direction() {
        let times: Vec<f64> = (0..=500).map(|k| k as f64 * 0.01).collect();
        let slow = dde_population(&times, 1.0, 1.0, 1.0, 2.0 * PI).unwrap();
        let fast = dde_population(&times, 1.0, 1.0, 1.0, PI).unwrap();
        for (k, t) in times.iter().enumerate() {
            let free = (-t).exp();
            assert!(slow[k] >= free - 1e-14);
            if *t > 1.0 && *t <= 2.0 {
                assert!(fast[k] < free);
            }
        }
    }

    #[test]
    fn dde_solves_its_equation() {
        // central differences of c(t) against the right-hand side
        let (g, gb, tau, phi) = (1.0, 0.6, 0.8, 0.9);
        let kappa = g / 2.0;
        let beta = C64::from_polar((-gb * tau / 2.0f64).exp(), phi);
        let amp = |t: f64| -> C64 {
            let mut c = C64::new(0.0, 0.0);
            let mut w = C64::new(1.0, 0.0);
            let mut n = 0;
            while t - n as f64 * tau >= 0.0 {
                let s = t - n as f64 * tau;
                c += w * s.powi(n) * (-kappa * s).exp();
                n += 1;
                w *= kappa * beta / n as f64;
            }
            c
        };
        let h = 1e-6;
        for t in [1.3, 2.1, 3.7] {
            let lhs = (amp(t + h) - amp(t - h)) / (2.0 * h);
            let rhs = -kappa * amp(t) + kappa * beta * amp(t - tau);
            assert!((lhs - rhs).norm() < 1e-7);
        }
        let pop = dde_population(&[2.1], g, gb, tau, phi).unwrap();
        assert!((pop[0] - amp(2.1).norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn dde_rejects_bad_input() {
        assert!(dde_population(&[0.0], 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(dde_population(&[-1.0], 1.0, 1.0, 1.0, 0.0).is_err());
    }
}
