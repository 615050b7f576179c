//! Step-by-step time evolution of the emitter and its output field, and the
//! regrouping of the emitted bins by detection time.
//!
//! Layout during evolution (feedback mode):
//!
//! ```text
//! [S2 L2 S1 L1]_0 ... [S2 L2 S1 L1]_{k-1}  SYS  [S1 L1]_k ... [S1 L1]_{k+m-1}
//! ```
//!
//! Everything left of the emitter has left the loop; to the right sits the
//! feedback line, oldest bin first. Each step inserts four fresh bins left of
//! the emitter, applies the gate across fresh bins, emitter and the two
//! returning bins, sends the fresh channel-1 pair to the back of the line and
//! steps the emitter over the returning pair. Without feedback the line is
//! empty and no swaps are needed.

use serde::Serialize;

use crate::chain::{number_operator, projector, BinChain, BinKind, BinLabel, Channel, Path, SiteLabel, Stage};
use crate::error::{Error, Result};
use crate::model::{ModelParams, StroboscopicGate};
use crate::tensor::C64;

/// Accumulated discarded weight above which a run carries a warning.
pub const DISCARD_ALARM: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct EvolutionRecord {
    pub params: ModelParams,
    pub times: Vec<f64>,
    pub pop_a: Vec<f64>,
    pub pop_b: Vec<f64>,
    pub norm: Vec<f64>,
    pub final_chain: BinChain,
    /// `max |1 - ||psi|||` over the run.
    pub norm_drift: f64,
    pub max_bond: usize,
    pub warnings: Vec<String>,
}

/// Time series without the chain, for serialization.
#[derive(Clone, Debug, Serialize)]
pub struct DynamicsRow {
    pub t: f64,
    pub pop_a: f64,
    pub pop_b: f64,
    pub norm: f64,
}

impl EvolutionRecord {
    pub fn rows(&self) -> Vec<DynamicsRow> {
        (0..self.times.len())
            .map(|k| DynamicsRow { t: self.times[k], pop_a: self.pop_a[k], pop_b: self.pop_b[k], norm: self.norm[k] })
            .collect()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

pub struct Evolver {
    params: ModelParams,
    gate: StroboscopicGate,
    chain: BinChain,
    step: usize,
    times: Vec<f64>,
    pop_a: Vec<f64>,
    pop_b: Vec<f64>,
    norm: Vec<f64>,
    max_bond: usize,
}

impl Evolver {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let params = params.validate()?;
        let gate = StroboscopicGate::build(&params)?;
        Self::with_gate(&params, gate)
    }

    /// Uses a prebuilt gate; it must match `params`.
    pub fn with_gate(params: &ModelParams, gate: StroboscopicGate) -> Result<Self> {
        let params = params.validate()?;
        let expected = if params.feedback_enabled { 7 } else { 5 };
        if gate.roles().len() != expected {
            return Err(Error::Contract("gate does not match the feedback mode".into()));
        }
        let chain = BinChain::new(&params)?;
        Ok(Self {
            params,
            gate,
            chain,
            step: 0,
            times: vec![0.0],
            pop_a: vec![1.0],
            pop_b: vec![0.0],
            norm: vec![1.0],
            max_bond: 1,
        })
    }

    pub fn chain(&self) -> &BinChain {
        &self.chain
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn residual(&self) -> f64 {
        self.pop_a.last().unwrap() + self.pop_b.last().unwrap()
    }

    pub fn step(&mut self) -> Result<()> {
        let k = self.step as i64;
        let m = self.params.loop_steps() as i64;
        let s = self.chain.system_position();
        let fresh = [
            (Channel::Two, Path::Short, k),
            (Channel::Two, Path::Long, k),
            (Channel::One, Path::Short, k + m),
            (Channel::One, Path::Long, k + m),
        ];
        for (i, (c, p, slot)) in fresh.into_iter().enumerate() {
            self.chain.insert_vacuum(s + i, BinLabel::new(c, p, slot, BinKind::Emission))?;
        }
        if m > 0 {
            for (off, path) in [(5, Path::Short), (6, Path::Long)] {
                if self.chain.position(Channel::One, path, k) != Some(s + off) {
                    return Err(Error::Contract(format!(
                        "returning bin for slot {k} is not next to the emitter"
                    )));
                }
            }
        }
        self.chain.apply_gate(&self.gate, s)?;
        if m > 0 {
            let last = self.chain.len() - 1;
            self.chain.move_bin(s + 3, last)?;
            self.chain.move_bin(s + 2, last - 1)?;
            self.chain.move_bin(s + 2, s + 4)?;
        }
        self.step += 1;
        self.record()
    }

    fn record(&mut self) -> Result<()> {
        let sys = self.chain.system_position();
        let pa = self.chain.local_expectation(sys, &projector(0))?.re;
        let pb = self.chain.local_expectation(sys, &projector(1))?.re;
        let norm = self.chain.norm();
        if !(pa.is_finite() && pb.is_finite() && norm.is_finite()) {
            return Err(Error::Numeric(format!("non-finite state at step {}", self.step)));
        }
        self.times.push(self.step as f64 * self.params.dt);
        self.pop_a.push(pa);
        self.pop_b.push(pb);
        self.norm.push(norm);
        self.max_bond = self.max_bond.max(self.chain.max_bond());
        Ok(())
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Keeps stepping until `pop_a + pop_b <= tol` or `max_steps` in total
    /// have been taken. Returns whether the tolerance was reached.
    pub fn run_until_decayed(&mut self, tol: f64, max_steps: usize) -> Result<bool> {
        while self.residual() > tol {
            if self.step >= max_steps {
                return Ok(false);
            }
            self.step()?;
        }
        Ok(true)
    }

    pub fn finish(mut self) -> EvolutionRecord {
        self.chain.set_stage(Stage::Evolved);
        let norm_drift = self.norm.iter().map(|n| (1.0 - n).abs()).fold(0.0, f64::max);
        let mut warnings = Vec::new();
        let dw = self.chain.discarded_weight();
        if dw > DISCARD_ALARM {
            warnings.push(format!("accumulated discarded weight {dw:e} exceeds {DISCARD_ALARM:e}"));
        }
        let mut params = self.params;
        params.n_steps = self.step;
        EvolutionRecord {
            params,
            times: self.times,
            pop_a: self.pop_a,
            pop_b: self.pop_b,
            norm: self.norm,
            final_chain: self.chain,
            norm_drift,
            max_bond: self.max_bond,
            warnings,
        }
    }
}

/// Runs `params.n_steps` steps from the upper state.
pub fn evolve(params: &ModelParams) -> Result<EvolutionRecord> {
    let mut ev = Evolver::new(params)?;
    ev.run(params.n_steps)?;
    Ok(ev.finish())
}

/// `pop_a + pop_b` at the end of the run.
pub fn excitation_residual(record: &EvolutionRecord) -> f64 {
    record.pop_a.last().unwrap() + record.pop_b.last().unwrap()
}

/// Total excitation number: two for `|a>`, one for `|b>`, one per photon.
pub fn excitation_total(chain: &mut BinChain) -> Result<f64> {
    let (n1, n2) = channel_photon_numbers(chain)?;
    let sys = chain.system_position();
    let pa = chain.local_expectation(sys, &projector(0))?.re;
    let pb = chain.local_expectation(sys, &projector(1))?.re;
    Ok(n1 + n2 + 2.0 * pa + pb)
}

/// Expected photon numbers in channel 1 and channel 2.
pub fn channel_photon_numbers(chain: &mut BinChain) -> Result<(f64, f64)> {
    let n = number_operator(chain.photon_cutoff());
    let mut totals = (0.0, 0.0);
    for (label, v) in chain.bin_expectations(&n)? {
        match label.channel {
            Channel::One => totals.0 += v.re,
            Channel::Two => totals.1 += v.re,
        }
    }
    Ok(totals)
}

/// Label of the site expected at position `4u + offset` of the detection layout.
pub(crate) fn detection_label(u: i64, offset: usize, n_t: i64) -> (Channel, Path, i64) {
    match offset {
        0 => (Channel::Two, Path::Short, u),
        1 => (Channel::Two, Path::Long, u - n_t),
        2 => (Channel::One, Path::Short, u),
        _ => (Channel::One, Path::Long, u - n_t),
    }
}

/// Number of detection slots of a rearranged chain.
pub fn detection_slots(chain: &BinChain) -> usize {
    (chain.len() - 1) / 4
}

/// Checks that `chain` is laid out as detection groups
/// `[S2(u) L2(u-n_t) S1(u) L1(u-n_t)]` followed by the emitter.
pub fn check_detection_layout(chain: &BinChain) -> Result<usize> {
    let Stage::Rearranged { n_t, .. } = chain.stage() else {
        return Err(Error::Contract("chain has not been rearranged for detection".into()));
    };
    let n = chain.len();
    if n % 4 != 1 || chain.labels()[n - 1] != SiteLabel::System {
        return Err(Error::Contract("detection layout needs groups of four bins and a trailing emitter".into()));
    }
    for (pos, label) in chain.labels()[..n - 1].iter().enumerate() {
        let want = detection_label((pos / 4) as i64, pos % 4, n_t as i64);
        if label.bin().map(|b| b.key()) != Some(want) {
            return Err(Error::Contract(format!("unexpected {label:?} at position {pos}")));
        }
    }
    Ok(n_t)
}

/// Regroups the bins by arrival time at the detectors: slot `u` holds the
/// short-path bins that left at `u` and the long-path bins that left at
/// `u - n_t`, with vacuum pads where no bin exists. Short-path bins then pick
/// up the delay phase `e^{i phi_t n}`.
///
/// The emitted bins already form the layout for a zero delay. The delay is
/// then built up one step at a time: each round pushes every long-path pair
/// one group to the right, so every intermediate chain is a valid detection
/// layout for a shorter delay and bond dimensions stay those of a physical
/// state.
pub fn rearrange_for_detection(mut chain: BinChain, n_t: usize, phi_t: f64) -> Result<BinChain> {
    if chain.stage() != Stage::Evolved {
        return Err(Error::Contract("chain must be fully evolved before rearrangement".into()));
    }
    let last_slot = chain
        .labels()
        .iter()
        .filter_map(|l| l.bin().map(|b| b.slot))
        .max()
        .unwrap_or(-1);
    let sys = chain.system_position();
    let end = chain.len() - 1;
    chain.move_bin(sys, end)?;

    // Zero-delay layout: fill every missing bin of groups 0..=last_slot.
    for u in 0..=last_slot {
        for offset in 0..4 {
            let (c, p, slot) = detection_label(u, offset, 0);
            if chain.position(c, p, slot).is_none() {
                chain.insert_vacuum(4 * u as usize + offset, BinLabel::new(c, p, slot, BinKind::VacuumPad))?;
            }
        }
    }
    let zero_delay_groups = (last_slot + 1) as usize;
    chain.set_stage(Stage::Rearranged { n_t: 0, phi_t: 0.0 });
    check_detection_layout(&chain)?;

    for r in 0..n_t as i64 {
        let n_groups = zero_delay_groups + r as usize;
        let new = n_groups as i64;
        for (offset, (c, p, slot)) in [(0, detection_label(new, 0, r + 1)), (1, detection_label(new, 2, r + 1))] {
            chain.insert_vacuum(4 * n_groups + offset, BinLabel::new(c, p, slot, BinKind::VacuumPad))?;
        }
        // Right to left, group u goes from [S2 L2 S1 L1] to [S2 S1] and the
        // next group from [S2 S1] to [S2 L2 S1 L1].
        for u in (0..n_groups).rev() {
            let base = 4 * u;
            chain.move_bin(base + 3, base + 5)?;
            chain.move_bin(base + 1, base + 3)?;
        }
        for (offset, path) in [(1, Path::Long), (3, Path::Long)] {
            let channel = if offset == 1 { Channel::Two } else { Channel::One };
            chain.insert_vacuum(offset, BinLabel::new(channel, path, -r - 1, BinKind::VacuumPad))?;
        }
        chain.set_stage(Stage::Rearranged { n_t: (r + 1) as usize, phi_t: 0.0 });
    }
    check_detection_layout(&chain)?;
    set_delay_phase(&mut chain, phi_t)?;
    Ok(chain)
}

/// Records the interferometer delay without moving any bin and applies the
/// delay phase. Detection then reads the arrival slots off the labels.
pub fn label_for_detection(mut chain: BinChain, n_t: usize, phi_t: f64) -> Result<BinChain> {
    if chain.stage() != Stage::Evolved {
        return Err(Error::Contract("chain must be fully evolved before detection".into()));
    }
    chain.set_stage(Stage::Labeled { n_t, phi_t: 0.0 });
    set_delay_phase(&mut chain, phi_t)?;
    Ok(chain)
}

/// Changes the delay phase carried by the short-path bins of a rearranged or
/// labeled chain to `phi_t`.
pub fn set_delay_phase(chain: &mut BinChain, phi_t: f64) -> Result<()> {
    let (n_t, current, rearranged) = match chain.stage() {
        Stage::Rearranged { n_t, phi_t } => (n_t, phi_t, true),
        Stage::Labeled { n_t, phi_t } => (n_t, phi_t, false),
        _ => return Err(Error::Contract("delay phase needs a chain prepared for detection".into())),
    };
    let delta = phi_t - current;
    if delta != 0.0 {
        let p = chain.photon_cutoff();
        let phases: Vec<C64> = (0..p).map(|n| C64::from_polar(1.0, delta * n as f64)).collect();
        let op = crate::chain::diagonal(&phases);
        for pos in 0..chain.len() {
            if matches!(chain.labels()[pos], SiteLabel::Bin(b) if b.path == Path::Short) {
                chain.apply_local(pos, &op)?;
            }
        }
    }
    chain.set_stage(if rearranged { Stage::Rearranged { n_t, phi_t } } else { Stage::Labeled { n_t, phi_t } });
    Ok(())
}
