//! Simulation parameters and the one-step stroboscopic unitaries.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::chain::{Channel, Path, SYSTEM_DIM};
use crate::error::{Error, Result};
use crate::tensor::{expm_antihermitian, unitarity_defect, ComplexTensor, TruncationPolicy, C64};

/// Largest `rate * dt` accepted by [`ModelParams::validate`].
pub const MAX_RATE_STEP: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Decay rate of the upper transition `a -> b`.
    pub gamma_a: f64,
    /// Decay rate of the lower transition `b -> c`.
    pub gamma_b: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Feedback delay in steps.
    pub m: usize,
    /// Feedback round-trip phase.
    pub phi_fb: f64,
    /// Interferometer delay in steps.
    pub n_t: usize,
    /// Short/long path phase of the interferometer.
    pub phi_t: f64,
    pub feedback_enabled: bool,
    pub truncation: TruncationPolicy,
    /// Local dimension of every time bin (`p - 1` photons at most).
    pub photon_cutoff: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl ModelParams {
    /// No feedback, `Γ_aT = 2.5`, `Γ_bT = 10`, `Δt = 0.05/Γ_a`, `Γ_a t_max = 10`.
    pub fn benchmark() -> Self {
        Self {
            gamma_a: 1.0,
            gamma_b: 4.0,
            dt: 0.05,
            n_steps: 200,
            m: 0,
            phi_fb: 0.0,
            n_t: 50,
            phi_t: 0.0,
            feedback_enabled: false,
            truncation: TruncationPolicy::default(),
            photon_cutoff: 2,
        }
    }

    /// `Γ_aT = Γ_bT = 4` with feedback at `Γ_aτ_FB = 1`, `Δt = 0.2/Γ_a`,
    /// `Γ_a t_max = 20`.
    pub fn feedback_visibility() -> Self {
        Self {
            gamma_a: 1.0,
            gamma_b: 1.0,
            dt: 0.2,
            n_steps: 100,
            m: 5,
            phi_fb: 0.0,
            n_t: 20,
            phi_t: 0.0,
            feedback_enabled: true,
            truncation: TruncationPolicy::default(),
            photon_cutoff: 2,
        }
    }

    /// `Γ_a = Γ_b` with feedback at `Γ_aτ_FB = 1`, `Δt = 0.05/Γ_a`.
    pub fn dynamics() -> Self {
        Self {
            gamma_a: 1.0,
            gamma_b: 1.0,
            dt: 0.05,
            n_steps: 200,
            m: 20,
            phi_fb: 0.0,
            n_t: 20,
            phi_t: 0.0,
            feedback_enabled: true,
            truncation: TruncationPolicy::default(),
            photon_cutoff: 2,
        }
    }

    /// Feedback delay in steps actually used by the simulation (zero without feedback).
    pub fn loop_steps(&self) -> usize {
        if self.feedback_enabled {
            self.m
        } else {
            0
        }
    }

    pub fn t_max(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn delay_time(&self) -> f64 {
        self.n_t as f64 * self.dt
    }

    pub fn feedback_delay(&self) -> f64 {
        self.loop_steps() as f64 * self.dt
    }

    /// Checks every invariant and returns a copy with both phases reduced to
    /// `[0, 2π)`. All violations are reported together.
    pub fn validate(&self) -> Result<ModelParams> {
        let mut errs = Vec::new();
        let positive = |name: &str, v: f64, errs: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        };
        positive("gamma_a", self.gamma_a, &mut errs);
        positive("gamma_b", self.gamma_b, &mut errs);
        positive("dt", self.dt, &mut errs);
        if self.feedback_enabled && self.m == 0 {
            errs.push("m must be >= 1 when feedback_enabled".into());
        }
        if self.n_t == 0 {
            errs.push("n_t must be >= 1".into());
        }
        if self.dt > 0.0 {
            for (name, rate) in [("gamma_a", self.gamma_a), ("gamma_b", self.gamma_b)] {
                if rate.is_finite() && rate * self.dt > MAX_RATE_STEP {
                    errs.push(format!(
                        "{name}*dt = {} exceeds the discretization bound {MAX_RATE_STEP}",
                        rate * self.dt
                    ));
                }
            }
        }
        for (name, phi) in [("phi_fb", self.phi_fb), ("phi_t", self.phi_t)] {
            if !phi.is_finite() {
                errs.push(format!("{name} must be finite, got {phi}"));
            }
        }
        if self.photon_cutoff < 2 {
            errs.push(format!(
                "photon_cutoff must be >= 2 to hold one photon per bin, got {}",
                self.photon_cutoff
            ));
        }
        if let Err(Error::InvalidParams(mut e)) = self.truncation.validate() {
            errs.append(&mut e);
        }
        if !errs.is_empty() {
            return Err(Error::InvalidParams(errs));
        }
        let mut out = self.clone();
        out.phi_fb = reduce_phase(self.phi_fb);
        out.phi_t = reduce_phase(self.phi_t);
        Ok(out)
    }
}

pub fn reduce_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// What a gate expects to find at each of its sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateRole {
    System,
    /// Fresh bin of the current step.
    Emit(Channel, Path),
    /// Channel-1 bin re-entering the emitter after one loop round trip.
    Feedback(Path),
}

/// One-step unitary over the system and the bins it couples to. The matrix
/// conserves the excitation number (`|a>` counts 2, `|b>` 1, each photon 1),
/// so it is stored as its nonzero entries only.
#[derive(Clone, Debug)]
pub struct StroboscopicGate {
    roles: Vec<GateRole>,
    dims: Vec<usize>,
    /// `(row, col, value)` over the row-major product basis of `dims`.
    entries: Vec<(usize, usize, C64)>,
}

/// `coef * |to><from|_system ⊗ b_site`, added to the generator together with
/// `-conj(coef)` times its adjoint.
struct Coupling {
    coef: C64,
    sys_from: usize,
    sys_to: usize,
    site: usize,
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;

impl StroboscopicGate {
    pub fn build(params: &ModelParams) -> Result<Self> {
        let params = params.validate()?;
        let p = params.photon_cutoff;
        let xa = (params.gamma_a * params.dt).sqrt();
        let xb = (params.gamma_b * params.dt).sqrt();
        let split = std::f64::consts::FRAC_1_SQRT_2;
        let i = C64::new(0.0, 1.0);

        let mut roles = vec![
            GateRole::Emit(Channel::Two, Path::Short),
            GateRole::Emit(Channel::Two, Path::Long),
            GateRole::Emit(Channel::One, Path::Short),
            GateRole::Emit(Channel::One, Path::Long),
            GateRole::System,
        ];
        let mut couplings = Vec::new();
        // lower transition, Markovian in both modes: -i√(Γ_bΔt)(σ₊ B₂ + h.c.)
        for site in [0, 1] {
            couplings.push(Coupling { coef: -i * xb * split, sys_from: C, sys_to: B, site });
        }
        if params.feedback_enabled {
            roles.push(GateRole::Feedback(Path::Short));
            roles.push(GateRole::Feedback(Path::Long));
            // √(Γ_aΔt/2)[σ₊(B₁ − e^{iφ_FB} B_fb) − h.c.]: the upper transition
            // couples to the outgoing and the returning field with equal weight,
            // so the decay rate before the first round trip is Γ_a.
            let x = (0.5 * params.gamma_a * params.dt).sqrt() * split;
            let back = -C64::from_polar(1.0, params.phi_fb) * x;
            for site in [2, 3] {
                couplings.push(Coupling { coef: C64::new(x, 0.0), sys_from: B, sys_to: A, site });
            }
            for site in [5, 6] {
                couplings.push(Coupling { coef: back, sys_from: B, sys_to: A, site });
            }
        } else {
            for site in [2, 3] {
                couplings.push(Coupling { coef: -i * xa * split, sys_from: B, sys_to: A, site });
            }
        }
        let dims: Vec<usize> = roles
            .iter()
            .map(|r| if *r == GateRole::System { SYSTEM_DIM } else { p })
            .collect();
        let entries = exponentiate(&dims, 4, &couplings)?;
        Ok(Self { roles, dims, entries })
    }

    pub fn roles(&self) -> &[GateRole] {
        &self.roles
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    /// The same gate times `e^{iθ}`; observables must not notice.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let ph = C64::from_polar(1.0, theta);
        let mut out = self.clone();
        out.entries.iter_mut().for_each(|e| e.2 *= ph);
        out
    }

    pub fn to_dense(&self) -> ComplexTensor {
        let n = self.dim();
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for &(r, c, v) in &self.entries {
            data[r * n + c] = v;
        }
        ComplexTensor::new(vec![n, n], data).expect("gate entries are finite")
    }

    pub fn unitarity_defect(&self) -> Result<f64> {
        unitarity_defect(&self.to_dense())
    }

    /// Matrix element `<out|U|in>` between product basis states given as
    /// one local index per site.
    pub fn element(&self, out: &[usize], inp: &[usize]) -> C64 {
        let r = flat_index(&self.dims, out);
        let c = flat_index(&self.dims, inp);
        self.entries
            .iter()
            .find(|e| e.0 == r && e.1 == c)
            .map_or(C64::new(0.0, 0.0), |e| e.2)
    }
}

fn flat_index(dims: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (i, d)| acc * d + i)
}

fn unflatten(dims: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        idx[k] = flat % dims[k];
        flat /= dims[k];
    }
    idx
}

/// Builds the generator block by block (one block per excitation number) and
/// exponentiates each block separately.
fn exponentiate(dims: &[usize], sys_site: usize, couplings: &[Coupling]) -> Result<Vec<(usize, usize, C64)>> {
    let n: usize = dims.iter().product();
    let excitation = |idx: &[usize]| -> usize {
        idx.iter()
            .enumerate()
            .map(|(k, &v)| if k == sys_site { SYSTEM_DIM - 1 - v } else { v })
            .sum()
    };
    let mut blocks: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for flat in 0..n {
        blocks.entry(excitation(&unflatten(dims, flat))).or_default().push(flat);
    }

    let mut entries = Vec::new();
    for members in blocks.values() {
        let size = members.len();
        let pos: BTreeMap<usize, usize> = members.iter().enumerate().map(|(k, &f)| (f, k)).collect();
        let mut g = vec![C64::new(0.0, 0.0); size * size];
        for (col, &flat) in members.iter().enumerate() {
            let idx = unflatten(dims, flat);
            for c in couplings {
                let occ = idx[c.site];
                // coef |to><from| b
                if idx[sys_site] == c.sys_from && occ > 0 {
                    let mut out = idx.clone();
                    out[sys_site] = c.sys_to;
                    out[c.site] = occ - 1;
                    let row = pos[&flat_index(dims, &out)];
                    g[row * size + col] += c.coef * (occ as f64).sqrt();
                }
                // -conj(coef) |from><to| b†
                if idx[sys_site] == c.sys_to && occ + 1 < dims[c.site] {
                    let mut out = idx.clone();
                    out[sys_site] = c.sys_from;
                    out[c.site] = occ + 1;
                    let row = pos[&flat_index(dims, &out)];
                    g[row * size + col] -= c.coef.conj() * ((occ + 1) as f64).sqrt();
                }
            }
        }
        let u = expm_antihermitian(&ComplexTensor::new(vec![size, size], g)?)?;
        for (r, &fr) in members.iter().enumerate() {
            for (c, &fc) in members.iter().enumerate() {
                let v = u.data()[r * size + c];
                if v != C64::new(0.0, 0.0) {
                    entries.push((fr, fc, v));
                }
            }
        }
    }
    entries.sort_by_key(|e| (e.0, e.1));
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb_params() -> ModelParams {
        ModelParams { gamma_a: 1.0, dt: 0.05, m: 20, ..ModelParams::dynamics() }
    }

    #[test]
    fn validate_accepts_feedback_setup() {
        assert!(fb_params().validate().is_ok());
    }

    #[test]
    fn validate_names_every_violation() {
        let p = ModelParams { dt: 0.0, feedback_enabled: true, m: 0, n_t: 0, ..ModelParams::benchmark() };
        let Err(Error::InvalidParams(errs)) = p.validate() else { panic!("expected failure") };
        assert!(errs.iter().any(|e| e.contains("dt must be positive")), "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("m must be")));
        assert!(errs.iter().any(|e| e.starts_with("n_t")));
    }

    #[test]
    fn validate_rejects_coarse_grid_and_tiny_cutoff() {
        let p = ModelParams { dt: 0.1, photon_cutoff: 1, ..ModelParams::benchmark() };
        let Err(Error::InvalidParams(errs)) = p.validate() else { panic!() };
        assert!(errs.iter().any(|e| e.contains("gamma_b*dt")));
        assert!(errs.iter().any(|e| e.contains("photon_cutoff")));
    }

    #[test]
    fn validate_reduces_phases() {
        let p = ModelParams { phi_fb: 2.0 * TAU + 0.5, phi_t: -0.5, ..fb_params() };
        let v = p.validate().unwrap();
        assert!((v.phi_fb - 0.5).abs() < 1e-12);
        assert!((v.phi_t - (TAU - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gates_are_unitary() {
        for p in [ModelParams::benchmark(), ModelParams::feedback_visibility(), fb_params()] {
            let g = StroboscopicGate::build(&p).unwrap();
            assert!(g.unitarity_defect().unwrap() <= 1e-12);
        }
        let p3 = ModelParams { photon_cutoff: 3, ..ModelParams::feedback_visibility() };
        let g = StroboscopicGate::build(&p3).unwrap();
        assert_eq!(g.dim(), 3 * 3usize.pow(6));
        assert!(g.unitarity_defect().unwrap() <= 1e-12);
    }

    #[test]
    fn decoupled_upper_transition_leaves_channel_one_alone() {
        // Γ_a = 0 is outside the validated domain, so build the generator directly.
        let dims = [2, 2, 2, 2, 3];
        let i = C64::new(0.0, 1.0);
        let cpl: Vec<Coupling> = [0, 1]
            .into_iter()
            .map(|site| Coupling { coef: -i * 0.3, sys_from: C, sys_to: B, site })
            .collect();
        let entries = exponentiate(&dims, 4, &cpl).unwrap();
        for &(r, c, v) in &entries {
            let (ro, co) = (unflatten(&dims, r), unflatten(&dims, c));
            if ro[2..4] != co[2..4] || ro[4] == A && co[4] != A || co[4] == A && ro[4] != A {
                assert!(v.norm() < 1e-12, "{ro:?} <- {co:?}: {v}");
            }
        }
        let a_vac = flat_index(&dims, &[0, 0, 0, 0, A]);
        let diag = entries.iter().find(|e| e.0 == a_vac && e.1 == a_vac).unwrap().2;
        assert!((diag - 1.0).norm() < 1e-12);
    }

    #[test]
    fn first_order_feedback_emission_amplitude() {
        let p = fb_params();
        let g = StroboscopicGate::build(&p).unwrap();
        let amp = g.element(&[0, 0, 1, 0, B, 0, 0], &[0, 0, 0, 0, A, 0, 0]);
        let want = -(p.gamma_a * p.dt).sqrt() / 2.0;
        assert!(((amp - want) / want).norm() < 2.0 * p.gamma_a * p.dt, "{amp}");
    }

    #[test]
    fn first_order_markovian_emission_probability() {
        let p = ModelParams::benchmark();
        let g = StroboscopicGate::build(&p).unwrap();
        let s = g.element(&[0, 0, 1, 0, B], &[0, 0, 0, 0, A]).norm_sqr();
        let l = g.element(&[0, 0, 0, 1, B], &[0, 0, 0, 0, A]).norm_sqr();
        let x = p.gamma_a * p.dt;
        assert!(((s + l) / x - 1.0).abs() < 2.0 * x);
    }

    #[test]
    fn feedback_phase_is_periodic() {
        let g0 = StroboscopicGate::build(&fb_params()).unwrap().to_dense();
        let p = ModelParams { phi_fb: TAU, ..fb_params() };
        let g1 = StroboscopicGate::build(&p).unwrap().to_dense();
        assert!(g0.max_abs_diff(&g1).unwrap() < 1e-12);
    }

    #[test]
    fn global_phase_multiplies_every_entry() {
        let g = StroboscopicGate::build(&ModelParams::benchmark()).unwrap();
        let h = g.with_global_phase(0.7);
        assert!(h.unitarity_defect().unwrap() < 1e-12);
        let (a, b) = (g.to_dense(), h.to_dense());
        let ph = C64::from_polar(1.0, 0.7);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x * ph - y).norm() < 1e-15);
        }
    }
}
