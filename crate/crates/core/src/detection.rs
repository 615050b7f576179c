//! Photon coincidences at the two Franson detectors.
//!
//! A rearranged chain holds, per detection slot `u`, the co-located
//! short/long arrival bins of both channels. Detector `i` at slot `u` is
//! `a_i(u) = (a_{i,S}(u) + a_{i,L}(u))/2`, and the two-time coincidence is
//! `G²(u_j, u_k) = ||a_2(u_k) a_1(u_j) psi||² / Δt²`.
//!
//! Two evaluators are provided. [`G2Method::Exchange`] carries the bins of
//! each detection slot to the front of the chain by bin exchanges, applies
//! the detector operators there and reads off the norm; it touches the chain
//! `O(N²)` times and is meant for small chains and cross-checks.
//! [`G2Method::Transfer`] computes the same numbers from transfer
//! environments: with the center on the first site everything to the right
//! is right-canonical, so `<N_1(u_j) N_2(u_k)>` only needs a left
//! environment swept past the two detector pairs.
//!
//! Grouping bins by arrival time is expensive in itself: the photon time
//! ordering makes the bond dimension of the grouped chain grow like `2 n_t`.
//! [`G2Method::TwoPhoton`] avoids it. The emitter starts in `|a>` and the
//! dynamics conserves excitation number, so once both detectors have clicked
//! only `|vacuum, c>` is left and `a_2 a_1 psi` is a single number, a sum of
//! four entries of the two-photon amplitude `Ψ(channel-1 bin, channel-2
//! bin)`. That matrix is read directly off a chain in emission order, where
//! bonds are small; the sector assumption is checked against the population
//! of `|c>`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{annihilation, kron, BinChain, Channel, Path, Stage};
use crate::error::{Error, Result};
use crate::evolution::{check_detection_layout, detection_label, detection_slots, label_for_detection, set_delay_phase, Evolver};
use crate::model::ModelParams;
use crate::tensor::{gemm, ComplexTensor, TruncationPolicy, C64};

/// Half width, in steps, of the window searched for the central peak.
pub const PEAK_HALF_WINDOW: usize = 2;

/// Rows whose first detector expectation is below this are skipped: the
/// coincidence is bounded by it times the norm of the second detector.
const ROW_SKIP: f64 = 1e-28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum G2Method {
    /// Transfer environments over a rearranged chain.
    Transfer,
    /// Bin exchanges over a rearranged chain.
    Exchange,
    /// Two-photon amplitudes of a labeled or rearranged chain.
    TwoPhoton,
}

/// Largest tolerated mismatch between the two-photon weight and the
/// population of `|c>`.
const SECTOR_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct G2Grid {
    pub dt: f64,
    /// Number of detection slots `N_det`.
    pub n_det: usize,
    /// Row-major `G²(u_j, u_k)`; `j` is the detector-1 slot, `k` detector 2.
    pub g2_two_time: Vec<f64>,
    /// `G²(τ)` at `τ = (i - N_det + 1)·Δt`.
    pub g2_tau: Vec<f64>,
    /// Factor applied on top of `1/Δt²`; always one.
    pub normalization: f64,
}

impl G2Grid {
    pub fn from_two_time(dt: f64, n_det: usize, g2_two_time: Vec<f64>) -> Result<Self> {
        if g2_two_time.len() != n_det * n_det {
            return Err(Error::Shape(format!(
                "{} entries for a {n_det}x{n_det} grid",
                g2_two_time.len()
            )));
        }
        let g2_tau = g2_tau(&g2_two_time, n_det, dt);
        Ok(Self { dt, n_det, g2_two_time, g2_tau, normalization: 1.0 })
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.g2_two_time[j * self.n_det + k]
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.g2_tau.len()).map(|i| (i as f64 - (self.n_det as f64 - 1.0)) * self.dt).collect()
    }

    /// Index into `g2_tau` of `τ = steps·Δt`.
    pub fn tau_index(&self, steps: i64) -> Option<usize> {
        let i = steps + self.n_det as i64 - 1;
        (i >= 0 && (i as usize) < self.g2_tau.len()).then_some(i as usize)
    }

    pub fn max_value(&self) -> f64 {
        self.g2_tau.iter().copied().fold(0.0, f64::max)
    }
}

/// `Δt·Σ_j G²(u_j, u_j + s)` for every shift `s = -(n-1)..=(n-1)`.
pub fn g2_tau(two_time: &[f64], n: usize, dt: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut out = vec![0.0; 2 * n - 1];
    for j in 0..n {
        for k in 0..n {
            out[k + n - 1 - j] += two_time[j * n + k];
        }
    }
    out.iter_mut().for_each(|v| *v *= dt);
    out
}

/// `(a ⊗ 1 + 1 ⊗ a)/2` on a short/long bin pair.
pub fn detector_operator(photon_cutoff: usize) -> ComplexTensor {
    let a = annihilation(photon_cutoff);
    let id = ComplexTensor::identity(photon_cutoff);
    let sum: Vec<C64> = kron(&a, &id)
        .data()
        .iter()
        .zip(kron(&id, &a).data())
        .map(|(x, y)| (x + y) * 0.5)
        .collect();
    let d = photon_cutoff * photon_cutoff;
    ComplexTensor::new(vec![d, d], sum).expect("square operator")
}

/// `A^dag A` for the detector operator `A`.
pub fn detector_number(photon_cutoff: usize) -> ComplexTensor {
    let a = detector_operator(photon_cutoff);
    a.adjoint().and_then(|ad| ad.matmul(&a)).expect("square operator")
}

/// `G²` with the evaluator suited to the chain: two-photon amplitudes for a
/// labeled chain, transfer environments for a rearranged one.
pub fn g2_two_time(chain: &BinChain, dt: f64) -> Result<G2Grid> {
    let method = match chain.stage() {
        Stage::Labeled { .. } => G2Method::TwoPhoton,
        _ => G2Method::Transfer,
    };
    g2_two_time_with(chain, dt, method)
}

pub fn g2_two_time_with(chain: &BinChain, dt: f64, method: G2Method) -> Result<G2Grid> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(vec![format!("dt must be positive, got {dt}")]));
    }
    let (n, raw) = match method {
        G2Method::Transfer => {
            check_detection_layout(chain)?;
            let n = detection_slots(chain);
            (n, two_time_transfer(chain, n)?)
        }
        G2Method::Exchange => {
            let n_t = check_detection_layout(chain)?;
            let n = detection_slots(chain);
            (n, two_time_exchange(chain, n, n_t)?)
        }
        G2Method::TwoPhoton => {
            let n_t = match chain.stage() {
                Stage::Labeled { n_t, .. } | Stage::Rearranged { n_t, .. } => n_t,
                _ => return Err(Error::Contract("chain has not been prepared for detection".into())),
            };
            two_time_two_photon(chain, n_t)?
        }
    };
    let scale = 1.0 / (dt * dt);
    G2Grid::from_two_time(dt, n, raw.into_iter().map(|v| v * scale).collect())
}

/// Two-site block of a detector pair with the detector number applied.
struct PairBlock {
    l: usize,
    dd: usize,
    r: usize,
    theta: Vec<C64>,
    op_theta: Vec<C64>,
}

impl PairBlock {
    fn new(chain: &BinChain, pos: usize, number: &ComplexTensor) -> Self {
        let (l, d1, m, a) = chain.site_data(pos);
        let (_, d2, r, b) = chain.site_data(pos + 1);
        let theta = gemm(a, b, l * d1, m, d2 * r);
        let dd = d1 * d2;
        let mut op_theta = Vec::with_capacity(theta.len());
        for x in 0..l {
            op_theta.extend(gemm(number.data(), &theta[x * dd * r..(x + 1) * dd * r], dd, dd, r));
        }
        Self { l, dd, r, theta, op_theta }
    }

    /// `E' = Σ_p Θ_p^dag E Φ_p` with `Φ = Θ` or `N·Θ`.
    fn step(&self, env: &[C64], with_op: bool) -> Vec<C64> {
        let phi = if with_op { &self.op_theta } else { &self.theta };
        let x = gemm(env, phi, self.l, self.l, self.dd * self.r);
        let rows = self.l * self.dd;
        let mut out = vec![C64::new(0.0, 0.0); self.r * self.r];
        for row in 0..rows {
            let t = &self.theta[row * self.r..(row + 1) * self.r];
            let xr = &x[row * self.r..(row + 1) * self.r];
            for (a, ta) in t.iter().enumerate() {
                let ta = ta.conj();
                if ta.re == 0.0 && ta.im == 0.0 {
                    continue;
                }
                for (o, xv) in out[a * self.r..(a + 1) * self.r].iter_mut().zip(xr) {
                    *o += ta * xv;
                }
            }
        }
        out
    }

    /// Trace of `step(env, true)`, i.e. the expectation value when the
    /// remainder of the chain is right-canonical.
    fn close(&self, env: &[C64]) -> f64 {
        let x = gemm(env, &self.op_theta, self.l, self.l, self.dd * self.r);
        self.theta.iter().zip(&x).map(|(t, v)| (t.conj() * v).re).sum()
    }
}

fn two_time_transfer(chain: &BinChain, n: usize) -> Result<Vec<f64>> {
    let mut c = chain.clone();
    c.move_center(0)?;
    let number = detector_number(c.photon_cutoff());
    // Pair q covers sites 2q, 2q+1: even q is detector 2 of slot q/2, odd q
    // detector 1.
    let pairs: Vec<PairBlock> = (0..2 * n).map(|q| PairBlock::new(&c, 2 * q, &number)).collect();
    let mut prefix = Vec::with_capacity(2 * n);
    let mut env = vec![C64::new(1.0, 0.0)];
    for pair in &pairs {
        let next = pair.step(&env, false);
        prefix.push(env);
        env = next;
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..2 * n)
        .into_par_iter()
        .map(|q1| {
            let mut out = Vec::new();
            let mut env = pairs[q1].step(&prefix[q1], true);
            let first: f64 = (0..pairs[q1].r).map(|a| env[a * pairs[q1].r + a].re).sum();
            if first.abs() <= ROW_SKIP {
                return out;
            }
            // The last pair of the opposite detector.
            let last = if q1 % 2 == 0 { 2 * n - 1 } else { 2 * n - 2 };
            let mut q2 = q1 + 1;
            while q2 <= last {
                if q2 % 2 != q1 % 2 {
                    let v = pairs[q2].close(&env);
                    let (j, k) = if q1 % 2 == 1 { (q1 / 2, q2 / 2) } else { (q2 / 2, q1 / 2) };
                    out.push((j * n + k, v));
                }
                if q2 < last {
                    env = pairs[q2].step(&env, false);
                }
                q2 += 1;
            }
            out
        })
        .collect();
    let mut grid = vec![0.0; n * n];
    for (idx, v) in rows.into_iter().flatten() {
        grid[idx] = v;
    }
    Ok(grid)
}

fn two_time_exchange(chain: &BinChain, n: usize, n_t: usize) -> Result<Vec<f64>> {
    let a = detector_operator(chain.photon_cutoff());
    let nt = n_t as i64;
    let lookup = |c: &BinChain, key: (Channel, Path, i64)| {
        c.position(key.0, key.1, key.2)
            .ok_or_else(|| Error::Contract(format!("missing detection bin {key:?}")))
    };
    let mut grid = vec![0.0; n * n];
    for j in 0..n {
        let mut c = chain.clone();
        for (offset, target) in [(2, 0), (3, 1)] {
            let pos = lookup(&c, detection_label(j as i64, offset, nt))?;
            c.move_bin(pos, target)?;
        }
        c.apply_block(0, &a)?;
        // Each detector-2 pair is carried next to the first one; earlier
        // pairs are pushed back, later ones keep their positions.
        for k in 0..n {
            for (offset, target) in [(0, 2), (1, 3)] {
                let pos = lookup(&c, detection_label(k as i64, offset, nt))?;
                c.move_bin(pos, target)?;
            }
            grid[j * n + k] = c.block_norm_sqr_after(2, &a)?;
        }
    }
    Ok(grid)
}

/// Component `k` of the physical index of a site as an `l x r` matrix.
fn component(chain: &BinChain, pos: usize, k: usize) -> (usize, usize, Vec<C64>) {
    let (l, d, r, data) = chain.site_data(pos);
    let mut out = Vec::with_capacity(l * r);
    for a in 0..l {
        out.extend_from_slice(&data[(a * d + k) * r..(a * d + k + 1) * r]);
    }
    (l, r, out)
}

fn vec_mat(v: &[C64], m: &(usize, usize, Vec<C64>)) -> Vec<C64> {
    let (l, r, data) = m;
    let mut out = vec![C64::new(0.0, 0.0); *r];
    for a in 0..*l {
        if v[a] == C64::new(0.0, 0.0) {
            continue;
        }
        for (o, x) in out.iter_mut().zip(&data[a * r..(a + 1) * r]) {
            *o += v[a] * x;
        }
    }
    out
}

fn mat_vec(m: &(usize, usize, Vec<C64>), v: &[C64]) -> Vec<C64> {
    let (l, r, data) = m;
    (0..*l).map(|a| data[a * r..(a + 1) * r].iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// `<psi|P_c|psi>` by a full left-to-right sweep.
fn upper_free_population(chain: &BinChain) -> f64 {
    let sys = chain.system_position();
    let mut env = vec![C64::new(1.0, 0.0)];
    for pos in 0..chain.len() {
        let (l, d, r, _) = chain.site_data(pos);
        let comps: Vec<usize> = if pos == sys { vec![2] } else { (0..d).collect() };
        let mut next = vec![C64::new(0.0, 0.0); r * r];
        for k in comps {
            let m = component(chain, pos, k);
            let x = gemm(&env, &m.2, l, l, r);
            for a in 0..l {
                for b in 0..r {
                    let c = m.2[a * r + b].conj();
                    if c == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (o, xv) in next[b * r..(b + 1) * r].iter_mut().zip(&x[a * r..(a + 1) * r]) {
                        *o += c * xv;
                    }
                }
            }
        }
        env = next;
    }
    env[0].re
}

fn two_time_two_photon(chain: &BinChain, n_t: usize) -> Result<(usize, Vec<f64>)> {
    let len = chain.len();
    let sys = chain.system_position();
    let nt = n_t as i64;
    let background: Vec<_> = (0..len).map(|pos| component(chain, pos, if pos == sys { 2 } else { 0 })).collect();
    let photon: Vec<_> = (0..len).map(|pos| (pos != sys).then(|| component(chain, pos, 1))).collect();
    let channel: Vec<Option<Channel>> = chain.labels().iter().map(|l| l.bin().map(|b| b.channel)).collect();

    let mut prefix = vec![vec![C64::new(1.0, 0.0)]];
    for m in &background {
        let next = vec_mat(prefix.last().unwrap(), m);
        prefix.push(next);
    }
    let mut suffix = vec![vec![C64::new(1.0, 0.0)]; len + 1];
    for pos in (0..len).rev() {
        suffix[pos] = mat_vec(&background[pos], &suffix[pos + 1]);
    }

    // psi[(p, q)] with p the earlier position.
    let mut psi = std::collections::HashMap::new();
    for p in 0..len {
        let (Some(first), Some(ch)) = (&photon[p], channel[p]) else { continue };
        let mut row = vec_mat(&prefix[p], first);
        for q in p + 1..len {
            if let (Some(second), Some(ch2)) = (&photon[q], channel[q]) {
                if ch2 != ch {
                    let v: C64 = vec_mat(&row, second).iter().zip(&suffix[q + 1]).map(|(a, b)| a * b).sum();
                    psi.insert((p, q), v);
                }
            }
            row = vec_mat(&row, &background[q]);
        }
    }
    let weight: f64 = psi.values().map(|z| z.norm_sqr()).sum();
    let p_c = upper_free_population(chain);
    if (weight - p_c).abs() > SECTOR_TOL {
        return Err(Error::Contract(format!(
            "state is not confined to one photon per channel (two-photon weight {weight:.3e}, population of c {p_c:.3e})"
        )));
    }

    let n = chain
        .labels()
        .iter()
        .filter_map(|l| l.bin())
        .map(|b| b.slot + if b.path == Path::Long { nt } else { 0 } + 1)
        .max()
        .unwrap_or(0)
        .max(0) as usize;
    let amp = |p: Option<usize>, q: Option<usize>| -> C64 {
        match (p, q) {
            (Some(p), Some(q)) => *psi.get(&(p.min(q), p.max(q))).unwrap_or(&C64::new(0.0, 0.0)),
            _ => C64::new(0.0, 0.0),
        }
    };
    let mut grid = vec![0.0; n * n];
    for j in 0..n as i64 {
        let d1 = [chain.position(Channel::One, Path::Short, j), chain.position(Channel::One, Path::Long, j - nt)];
        for k in 0..n as i64 {
            let d2 = [chain.position(Channel::Two, Path::Short, k), chain.position(Channel::Two, Path::Long, k - nt)];
            let mut sum = C64::new(0.0, 0.0);
            for &x in &d1 {
                for &y in &d2 {
                    sum += amp(x, y);
                }
            }
            grid[j as usize * n + k as usize] = sum.norm_sqr() / 16.0;
        }
    }
    Ok((n, grid))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CentralPeak {
    pub height: f64,
    pub tau: f64,
    pub index: usize,
}

/// Maximum of `curve` over `center_steps ± half_window` (in steps of `dt`
/// from `τ = 0`, the middle entry).
pub fn central_peak(curve: &[f64], dt: f64, center_steps: i64, half_window: usize) -> Result<CentralPeak> {
    if curve.len() % 2 != 1 {
        return Err(Error::Shape(format!("a τ-curve has odd length, got {}", curve.len())));
    }
    let zero = (curve.len() / 2) as i64;
    let lo = zero + center_steps - half_window as i64;
    let hi = zero + center_steps + half_window as i64;
    if lo < 0 || hi >= curve.len() as i64 {
        return Err(Error::Contract(format!(
            "peak window [{lo}, {hi}] lies outside a curve of length {}",
            curve.len()
        )));
    }
    let mut best = lo as usize;
    for i in lo as usize..=hi as usize {
        if curve[i] > curve[best] {
            best = i;
        }
    }
    Ok(CentralPeak { height: curve[best], tau: (best as i64 - zero) as f64 * dt, index: best })
}

/// Central peak of `grid`, searched around `τ = -τ_FB` (or `0` without feedback).
pub fn central_peak_of(grid: &G2Grid, params: &ModelParams) -> Result<CentralPeak> {
    central_peak(&grid.g2_tau, grid.dt, -(params.loop_steps() as i64), PEAK_HALF_WINDOW)
}

pub fn central_peak_height(grid: &G2Grid, params: &ModelParams) -> Result<f64> {
    central_peak_of(grid, params).map(|p| p.height)
}

/// Largest deviation between the peak-normalized `grid.g2_tau` and the
/// peak-normalized closed form. The discontinuities at `τ = -T, 0, T` are
/// left out, both for the comparison and for the normalizing maxima: a bin
/// straddling a jump samples neither side of it.
pub fn closed_form_deviation(grid: &G2Grid, analytic: &crate::oracle::AnalyticParams) -> f64 {
    let taus = grid.taus();
    let keep: Vec<usize> = (0..taus.len())
        .filter(|&i| {
            let x = taus[i] / analytic.delay;
            let s = x.round();
            !(s.abs() <= 1.0 && (x - s).abs() < 1e-9)
        })
        .collect();
    let oracle: Vec<f64> = taus.iter().map(|&t| crate::oracle::g2_closed_form(t, analytic)).collect();
    let peak_mps = keep.iter().map(|&i| grid.g2_tau[i]).fold(0.0, f64::max);
    let peak_oracle = keep.iter().map(|&i| oracle[i]).fold(0.0, f64::max);
    // A vanishing or non-finite curve cannot be normalized; never report it
    // as a perfect match.
    if !(peak_mps > 0.0 && peak_mps.is_finite() && peak_oracle > 0.0) {
        return f64::INFINITY;
    }
    keep.iter()
        .map(|&i| (grid.g2_tau[i] / peak_mps - oracle[i] / peak_oracle).abs())
        .fold(0.0, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
}

/// `(H_0 - H_{π/2})/(H_0 + H_{π/2})`.
pub fn visibility_from_heights(h0: f64, h1: f64) -> Result<f64> {
    let sum = h0 + h1;
    if !(sum.abs() > 1e-14) {
        return Err(Error::UndefinedVisibility { h0, h1 });
    }
    Ok((h0 - h1) / sum)
}

#[derive(Clone, Debug, Serialize)]
pub struct VisibilityResult {
    pub visibility: f64,
    pub peak_0: CentralPeak,
    pub peak_half_pi: CentralPeak,
    /// Steps actually simulated.
    pub steps: usize,
    /// `pop_a + pop_b` at the end of the simulation.
    pub residual: f64,
    pub max_bond: usize,
    pub warnings: Vec<String>,
}

/// `G²` grids of one evolution at the given delay
/// phases.
pub fn g2_for_phases(chain: BinChain, params: &ModelParams, phases: &[f64]) -> Result<Vec<G2Grid>> {
    let base = label_for_detection(chain, params.n_t, 0.0)?;
    phases
        .par_iter()
        .map(|&phi| {
            let mut c = base.clone();
            set_delay_phase(&mut c, phi)?;
            g2_two_time(&c, params.dt)
        })
        .collect()
}

/// Evolves, rearranges and evaluates `G²` at the delay phase `params.phi_t`.
pub fn g2_curve(params: &ModelParams) -> Result<G2Grid> {
    let params = params.validate()?;
    let rec = crate::evolution::evolve(&params)?;
    Ok(g2_for_phases(rec.final_chain, &params, &[params.phi_t])?.remove(0))
}

/// Runs `params.n_steps` steps, then evaluates the central peak at
/// `φ_T = 0` and `φ_T = π/2`.
pub fn visibility(params: &ModelParams) -> Result<VisibilityResult> {
    let params = params.validate()?;
    let mut ev = Evolver::new(&params)?;
    ev.run(params.n_steps)?;
    visibility_of(ev, &params)
}

/// Like [`visibility`], but keeps evolving until `pop_a + pop_b <= tol` (at
/// least `params.n_steps`, at most `max_steps` steps).
pub fn visibility_until_decayed(params: &ModelParams, tol: f64, max_steps: usize) -> Result<VisibilityResult> {
    let params = params.validate()?;
    let mut ev = Evolver::new(&params)?;
    ev.run(params.n_steps.min(max_steps))?;
    let reached = ev.run_until_decayed(tol, max_steps)?;
    let mut res = visibility_of(ev, &params)?;
    if !reached {
        res.warnings.push(format!("residual {:.3e} above {tol:e} after {max_steps} steps", res.residual));
    }
    Ok(res)
}

fn visibility_of(ev: Evolver, params: &ModelParams) -> Result<VisibilityResult> {
    let residual = ev.residual();
    let rec = ev.finish();
    let steps = rec.steps();
    let grids = g2_for_phases(rec.final_chain, params, &[0.0, FRAC_PI_2])?;
    let peak_0 = central_peak_of(&grids[0], params)?;
    let peak_half_pi = central_peak_of(&grids[1], params)?;
    let visibility = visibility_from_heights(peak_0.height, peak_half_pi.height)?;
    Ok(VisibilityResult {
        visibility,
        peak_0,
        peak_half_pi,
        steps,
        residual,
        max_bond: rec.max_bond,
        warnings: rec.warnings,
    })
}

/// Grid and numerics of a visibility sweep. Times are in units of the
/// interferometer delay `T`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub gamma_a_t: Vec<f64>,
    pub gamma_b_t: Vec<f64>,
    /// `τ_FB / T`.
    pub fb_delay: f64,
    /// `Δt / T`.
    pub dt: f64,
    pub phi_fb: f64,
    /// Each point evolves until `pop_a + pop_b` drops below this.
    pub residual_tol: f64,
    pub max_steps: usize,
    pub truncation: TruncationPolicy,
    pub photon_cutoff: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            gamma_a_t: vec![2.0, 3.0, 4.0, 5.0],
            gamma_b_t: vec![2.0, 3.0, 4.0, 5.0],
            fb_delay: 0.25,
            dt: 0.05,
            phi_fb: 0.0,
            residual_tol: 1e-4,
            max_steps: 4000,
            truncation: TruncationPolicy::default(),
            photon_cutoff: 2,
        }
    }
}

impl SweepSpec {
    /// Parameters of one grid point with `T = 1`.
    pub fn point(&self, gamma_a_t: f64, gamma_b_t: f64, feedback: bool) -> Result<ModelParams> {
        let mut errs = Vec::new();
        let n_t = (1.0 / self.dt).round();
        if !(self.dt > 0.0) || (n_t * self.dt - 1.0).abs() > 1e-9 {
            errs.push(format!("dt = {} must divide T = 1", self.dt));
        }
        let m = (self.fb_delay / self.dt).round();
        if feedback && (!(self.fb_delay > 0.0) || (m * self.dt - self.fb_delay).abs() > 1e-9) {
            errs.push(format!("fb_delay = {} must be a positive multiple of dt", self.fb_delay));
        }
        if !errs.is_empty() {
            return Err(Error::InvalidParams(errs));
        }
        ModelParams {
            gamma_a: gamma_a_t,
            gamma_b: gamma_b_t,
            dt: self.dt,
            n_steps: n_t as usize,
            m: if feedback { m as usize } else { 0 },
            phi_fb: self.phi_fb,
            n_t: n_t as usize,
            phi_t: 0.0,
            feedback_enabled: feedback,
            truncation: self.truncation,
            photon_cutoff: self.photon_cutoff,
        }
        .validate()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepFailure {
    pub gamma_a_t: f64,
    pub gamma_b_t: f64,
    pub feedback: bool,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub gamma_a_t: f64,
    pub gamma_b_t: f64,
    pub v_no_fb: Option<f64>,
    pub v_fb: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VisibilityMap {
    pub gamma_a_t: Vec<f64>,
    pub gamma_b_t: Vec<f64>,
    /// `τ_FB / T`.
    pub fb_delay: f64,
    /// Indexed `[i][j]` for `gamma_a_t[i]`, `gamma_b_t[j]`; `None` where the
    /// point failed.
    pub v_no_fb: Vec<Vec<Option<f64>>>,
    pub v_fb: Vec<Vec<Option<f64>>>,
    pub failures: Vec<SweepFailure>,
    pub warnings: Vec<String>,
}

impl VisibilityMap {
    pub fn ratio(&self, i: usize, j: usize) -> Option<f64> {
        match (self.v_fb[i][j], self.v_no_fb[i][j]) {
            (Some(f), Some(n)) if n != 0.0 => Some(f / n),
            _ => None,
        }
    }

    pub fn rows(&self) -> Vec<SweepRow> {
        let mut out = Vec::new();
        for (i, &ga) in self.gamma_a_t.iter().enumerate() {
            for (j, &gb) in self.gamma_b_t.iter().enumerate() {
                out.push(SweepRow {
                    gamma_a_t: ga,
                    gamma_b_t: gb,
                    v_no_fb: self.v_no_fb[i][j],
                    v_fb: self.v_fb[i][j],
                    ratio: self.ratio(i, j),
                });
            }
        }
        out
    }
}

/// Visibilities with and without feedback on the whole grid. A failing
/// point is recorded and the sweep continues; only an invalid spec is an
/// error.
pub fn visibility_sweep(spec: &SweepSpec) -> Result<VisibilityMap> {
    if spec.gamma_a_t.is_empty() || spec.gamma_b_t.is_empty() {
        return Err(Error::InvalidParams(vec!["sweep grid is empty".into()]));
    }
    let mut jobs = Vec::new();
    for (i, &ga) in spec.gamma_a_t.iter().enumerate() {
        for (j, &gb) in spec.gamma_b_t.iter().enumerate() {
            for fb in [false, true] {
                // Surface spec errors before spending any time.
                spec.point(ga, gb, fb)?;
                jobs.push((i, j, fb));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(i, j, fb)| {
            let p = spec.point(spec.gamma_a_t[i], spec.gamma_b_t[j], fb)?;
            visibility_until_decayed(&p, spec.residual_tol, spec.max_steps)
        })
        .collect();
    let (na, nb) = (spec.gamma_a_t.len(), spec.gamma_b_t.len());
    let mut map = VisibilityMap {
        gamma_a_t: spec.gamma_a_t.clone(),
        gamma_b_t: spec.gamma_b_t.clone(),
        fb_delay: spec.fb_delay,
        v_no_fb: vec![vec![None; nb]; na],
        v_fb: vec![vec![None; nb]; na],
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    for (&(i, j, fb), res) in jobs.iter().zip(results) {
        let (ga, gb) = (spec.gamma_a_t[i], spec.gamma_b_t[j]);
        match res {
            Ok(r) => {
                let slot = if fb { &mut map.v_fb } else { &mut map.v_no_fb };
                slot[i][j] = Some(r.visibility);
                for w in r.warnings {
                    map.warnings.push(format!("({ga}, {gb}, feedback={fb}): {w}"));
                }
            }
            Err(e) => map.failures.push(SweepFailure {
                gamma_a_t: ga,
                gamma_b_t: gb,
                feedback: fb,
                message: e.to_string(),
            }),
        }
    }
    Ok(map)
}
