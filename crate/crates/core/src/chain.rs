//! Matrix-product state over one emitter site and a growing set of photon
//! time bins.
//!
//! Every site tensor has axes `(left bond, physical, right bond)`. The chain
//! is kept in mixed-canonical form around a single orthogonality center:
//! sites left of it are left-isometries, sites right of it right-isometries.
//! Sites are addressed by label; positions change with every swap.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GateRole, ModelParams, StroboscopicGate};
use crate::tensor::{gemm, qr_matrix, svd_truncated, ComplexTensor, TruncationPolicy, C64};

/// Emitter levels `a`, `b`, `c` in that order.
pub const SYSTEM_DIM: usize = 3;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// Photon from the upper transition `a -> b`.
    One,
    /// Photon from the lower transition `b -> c`.
    Two,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Path {
    Short,
    Long,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinKind {
    Emission,
    VacuumPad,
}

/// A time bin. `slot` is the step at which the bin's content leaves the
/// emitter region towards the detectors (channel-1 light spends the loop
/// delay in the feedback line first); it is negative only for the leading
/// pads of the long paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinLabel {
    pub channel: Channel,
    pub path: Path,
    pub slot: i64,
    pub kind: BinKind,
}

impl BinLabel {
    pub fn new(channel: Channel, path: Path, slot: i64, kind: BinKind) -> Self {
        Self { channel, path, slot, kind }
    }

    pub fn key(&self) -> BinKey {
        (self.channel, self.path, self.slot)
    }
}

impl fmt::Display for BinLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ch = if self.channel == Channel::One { 1 } else { 2 };
        let p = if self.path == Path::Short { 'S' } else { 'L' };
        write!(f, "{p}{ch}[{}]", self.slot)?;
        if self.kind == BinKind::VacuumPad {
            write!(f, "*")?;
        }
        Ok(())
    }
}

pub type BinKey = (Channel, Path, i64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteLabel {
    System,
    Bin(BinLabel),
}

impl SiteLabel {
    pub fn bin(&self) -> Option<&BinLabel> {
        match self {
            SiteLabel::Bin(b) => Some(b),
            SiteLabel::System => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Stage {
    Evolving,
    Evolved,
    /// Grouped by detection slot, with the delay phase applied.
    Rearranged { n_t: usize, phi_t: f64 },
    /// Still in emission order, with the interferometer delay recorded and
    /// the delay phase applied.
    Labeled { n_t: usize, phi_t: f64 },
}

#[derive(Clone, Debug)]
struct Site {
    left: usize,
    phys: usize,
    right: usize,
    data: Vec<C64>,
}

impl Site {
    fn product(state: &[C64]) -> Self {
        Site { left: 1, phys: state.len(), right: 1, data: state.to_vec() }
    }

    /// Vacuum bin threaded through a bond of dimension `chi`.
    fn vacuum(chi: usize, phys: usize) -> Self {
        let mut data = vec![ZERO; chi * phys * chi];
        for a in 0..chi {
            data[a * phys * chi + a] = ONE;
        }
        Site { left: chi, phys, right: chi, data }
    }
}

#[derive(Clone, Debug)]
pub struct BinChain {
    sites: Vec<Site>,
    labels: Vec<SiteLabel>,
    index: HashMap<BinKey, usize>,
    center: usize,
    policy: TruncationPolicy,
    photon_cutoff: usize,
    stage: Stage,
    discarded_weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub labels: Vec<String>,
    pub bond_dims: Vec<usize>,
    pub center: usize,
    pub norm: f64,
    pub discarded_weight: f64,
    pub stage: Stage,
}

impl BinChain {
    /// Emitter in `|a>` followed by the empty feedback line: `m` channel-1
    /// short/long pad pairs for output slots `0..m`, oldest first.
    pub fn new(params: &ModelParams) -> Result<Self> {
        let params = params.validate()?;
        let mut chain = Self {
            sites: vec![Site::product(&[ONE, ZERO, ZERO])],
            labels: vec![SiteLabel::System],
            index: HashMap::new(),
            center: 0,
            policy: params.truncation,
            photon_cutoff: params.photon_cutoff,
            stage: Stage::Evolving,
            discarded_weight: 0.0,
        };
        for slot in 0..params.loop_steps() as i64 {
            for path in [Path::Short, Path::Long] {
                let pos = chain.len();
                chain.insert_vacuum(pos, BinLabel::new(Channel::One, path, slot, BinKind::VacuumPad))?;
            }
        }
        Ok(chain)
    }

    /// Factorizes a dense state (row-major over `labels`) into a chain.
    pub fn from_dense(
        labels: Vec<SiteLabel>,
        photon_cutoff: usize,
        amplitudes: &[C64],
        policy: TruncationPolicy,
        stage: Stage,
    ) -> Result<Self> {
        if labels.iter().filter(|l| **l == SiteLabel::System).count() != 1 {
            return Err(Error::Contract("a chain holds exactly one system site".into()));
        }
        let dims: Vec<usize> = labels
            .iter()
            .map(|l| if *l == SiteLabel::System { SYSTEM_DIM } else { photon_cutoff })
            .collect();
        let total: usize = dims.iter().product();
        if total != amplitudes.len() {
            return Err(Error::Shape(format!(
                "{} amplitudes for a space of dimension {total}",
                amplitudes.len()
            )));
        }
        let mut sites = Vec::with_capacity(dims.len());
        let mut rest = amplitudes.to_vec();
        let mut left = 1;
        for (k, &d) in dims.iter().enumerate() {
            if k + 1 == dims.len() {
                sites.push(Site { left, phys: d, right: 1, data: rest.clone() });
                break;
            }
            let rows = left * d;
            let cols = rest.len() / rows;
            let f = svd_truncated(&rest, rows, cols, &TruncationPolicy::default())?;
            sites.push(Site { left, phys: d, right: f.keep, data: f.u });
            rest = f.vt;
            for (i, s) in f.s.iter().enumerate() {
                rest[i * cols..(i + 1) * cols].iter_mut().for_each(|z| *z *= s);
            }
            left = f.keep;
        }
        let mut chain = Self {
            center: sites.len() - 1,
            sites,
            labels,
            index: HashMap::new(),
            policy,
            photon_cutoff,
            stage,
            discarded_weight: 0.0,
        };
        chain.rebuild_index()?;
        Ok(chain)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (pos, l) in self.labels.iter().enumerate() {
            if let SiteLabel::Bin(b) = l {
                if self.index.insert(b.key(), pos).is_some() {
                    return Err(Error::Contract(format!("duplicate bin label {b}")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn labels(&self) -> &[SiteLabel] {
        &self.labels
    }

    pub fn label(&self, pos: usize) -> Result<SiteLabel> {
        self.labels.get(pos).copied().ok_or(Error::OutOfRange { pos, len: self.len() })
    }

    pub fn position(&self, channel: Channel, path: Path, slot: i64) -> Option<usize> {
        self.index.get(&(channel, path, slot)).copied()
    }

    pub fn system_position(&self) -> usize {
        self.labels
            .iter()
            .position(|l| *l == SiteLabel::System)
            .expect("chain always holds the system site")
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub(crate) fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn photon_cutoff(&self) -> usize {
        self.photon_cutoff
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    /// Sum of the relative weights dropped by all decompositions so far.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    pub fn phys_dim(&self, pos: usize) -> Result<usize> {
        self.sites.get(pos).map(|s| s.phys).ok_or(Error::OutOfRange { pos, len: self.len() })
    }

    /// Bond dimensions between neighbouring sites (`len - 1` entries).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.len() - 1].iter().map(|s| s.right).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Norm of the state, read off the orthogonality center.
    pub fn norm(&self) -> f64 {
        self.sites[self.center].data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            labels: self
                .labels
                .iter()
                .map(|l| match l {
                    SiteLabel::System => "SYS".to_string(),
                    SiteLabel::Bin(b) => b.to_string(),
                })
                .collect(),
            bond_dims: self.bond_dims(),
            center: self.center,
            norm: self.norm(),
            discarded_weight: self.discarded_weight,
            stage: self.stage,
        }
    }

    fn check_pos(&self, pos: usize) -> Result<()> {
        if pos < self.len() {
            Ok(())
        } else {
            Err(Error::OutOfRange { pos, len: self.len() })
        }
    }

    fn shift_center_right(&mut self) {
        let c = self.center;
        let (l, d, r) = (self.sites[c].left, self.sites[c].phys, self.sites[c].right);
        let (q, rm, k) = qr_matrix(&self.sites[c].data, l * d, r);
        self.sites[c] = Site { left: l, phys: d, right: k, data: q };
        let next = &mut self.sites[c + 1];
        next.data = gemm(&rm, &next.data, k, r, next.phys * next.right);
        next.left = k;
        self.center += 1;
    }

    fn shift_center_left(&mut self) {
        let c = self.center;
        let (l, d, r) = (self.sites[c].left, self.sites[c].phys, self.sites[c].right);
        let cols = d * r;
        // M = R^dag Q^dag from the QR decomposition of M^dag.
        let mut adj = vec![ZERO; cols * l];
        for i in 0..l {
            for j in 0..cols {
                adj[j * l + i] = self.sites[c].data[i * cols + j].conj();
            }
        }
        let (q, rm, k) = qr_matrix(&adj, cols, l);
        let mut qd = vec![ZERO; k * cols];
        for j in 0..cols {
            for i in 0..k {
                qd[i * cols + j] = q[j * k + i].conj();
            }
        }
        let mut rd = vec![ZERO; l * k];
        for i in 0..k {
            for j in 0..l {
                rd[j * k + i] = rm[i * l + j].conj();
            }
        }
        self.sites[c] = Site { left: k, phys: d, right: r, data: qd };
        let prev = &mut self.sites[c - 1];
        prev.data = gemm(&prev.data, &rd, prev.left * prev.phys, l, k);
        prev.right = k;
        self.center -= 1;
    }

    /// Moves the orthogonality center to `pos` by QR sweeps.
    pub fn move_center(&mut self, pos: usize) -> Result<()> {
        self.check_pos(pos)?;
        while self.center < pos {
            self.shift_center_right();
        }
        while self.center > pos {
            self.shift_center_left();
        }
        Ok(())
    }

    /// Two-site tensor of `pos, pos + 1` as a row-major `(l, d1, d2, r)` array.
    fn merge_pair(&self, pos: usize) -> Vec<C64> {
        let (a, b) = (&self.sites[pos], &self.sites[pos + 1]);
        gemm(&a.data, &b.data, a.left * a.phys, a.right, b.phys * b.right)
    }

    /// Exchanges the sites at `pos` and `pos + 1`. The center ends at
    /// `pos + 1` if `center_right`, otherwise at `pos`.
    fn swap_with_center(&mut self, pos: usize, center_right: bool) -> Result<()> {
        if self.center < pos {
            self.move_center(pos)?;
        } else if self.center > pos + 1 {
            self.move_center(pos + 1)?;
        }
        let theta = self.merge_pair(pos);
        let (l, d1) = (self.sites[pos].left, self.sites[pos].phys);
        let (d2, r) = (self.sites[pos + 1].phys, self.sites[pos + 1].right);
        let mut swapped = vec![ZERO; theta.len()];
        for a in 0..l {
            for i in 0..d1 {
                for j in 0..d2 {
                    let src = ((a * d1 + i) * d2 + j) * r;
                    let dst = ((a * d2 + j) * d1 + i) * r;
                    swapped[dst..dst + r].copy_from_slice(&theta[src..src + r]);
                }
            }
        }
        self.split_pair(pos, &swapped, l, d2, d1, r, center_right)?;
        self.labels.swap(pos, pos + 1);
        for p in [pos, pos + 1] {
            if let SiteLabel::Bin(b) = self.labels[p] {
                self.index.insert(b.key(), p);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn split_pair(
        &mut self,
        pos: usize,
        theta: &[C64],
        l: usize,
        d1: usize,
        d2: usize,
        r: usize,
        center_right: bool,
    ) -> Result<()> {
        let cols = d2 * r;
        let mut f = svd_truncated(theta, l * d1, cols, &self.policy)?;
        self.discarded_weight += f.discarded_weight;
        let k = f.keep;
        if center_right {
            for (i, s) in f.s.iter().enumerate() {
                f.vt[i * cols..(i + 1) * cols].iter_mut().for_each(|z| *z *= s);
            }
            self.center = pos + 1;
        } else {
            for row in f.u.chunks_mut(k) {
                row.iter_mut().zip(&f.s).for_each(|(z, s)| *z *= s);
            }
            self.center = pos;
        }
        self.sites[pos] = Site { left: l, phys: d1, right: k, data: f.u };
        self.sites[pos + 1] = Site { left: k, phys: d2, right: r, data: f.vt };
        Ok(())
    }

    /// Like [`Self::swap_adjacent`] with an explicit final center side.
    pub fn swap_adjacent_center(&mut self, pos: usize, center_right: bool) -> Result<()> {
        self.check_pos(pos + 1)?;
        self.swap_with_center(pos, center_right)
    }

    /// Exchanges the sites at `pos` and `pos + 1`, leaving the global state
    /// unchanged. The center stays on the side of the pair it came from.
    pub fn swap_adjacent(&mut self, pos: usize) -> Result<()> {
        self.check_pos(pos + 1)?;
        let right = self.center > pos;
        self.swap_with_center(pos, right)
    }

    /// Carries the site at `from` to `to` by adjacent swaps; the center
    /// travels with it.
    pub fn move_bin(&mut self, from: usize, to: usize) -> Result<()> {
        self.check_pos(from)?;
        self.check_pos(to)?;
        let mut p = from;
        while p < to {
            self.swap_with_center(p, true)?;
            p += 1;
        }
        while p > to {
            self.swap_with_center(p - 1, false)?;
            p -= 1;
        }
        if from == to {
            self.move_center(to)?;
        }
        Ok(())
    }

    /// Inserts a vacuum bin so that it ends up at position `pos`.
    pub fn insert_vacuum(&mut self, pos: usize, label: BinLabel) -> Result<()> {
        if pos > self.len() {
            return Err(Error::OutOfRange { pos, len: self.len() });
        }
        if self.index.contains_key(&label.key()) {
            return Err(Error::Contract(format!("bin {label} already present")));
        }
        let chi = if pos == self.len() { 1 } else { self.sites[pos].left };
        self.sites.insert(pos, Site::vacuum(chi, self.photon_cutoff));
        self.labels.insert(pos, SiteLabel::Bin(label));
        if self.center >= pos && self.len() > 1 {
            self.center += 1;
        }
        for (p, l) in self.labels.iter().enumerate().skip(pos) {
            if let SiteLabel::Bin(b) = l {
                self.index.insert(b.key(), p);
            }
        }
        Ok(())
    }

    fn check_op(&self, pos: usize, op: &ComplexTensor) -> Result<usize> {
        self.check_pos(pos)?;
        let d = self.sites[pos].phys;
        if op.dims() != [d, d] {
            return Err(Error::Shape(format!(
                "operator of shape {:?} on site {pos} of dimension {d}",
                op.dims()
            )));
        }
        Ok(d)
    }

    /// `<psi|O_pos|psi>`.
    pub fn local_expectation(&mut self, pos: usize, op: &ComplexTensor) -> Result<C64> {
        self.check_op(pos, op)?;
        self.move_center(pos)?;
        Ok(site_expectation(&self.sites[pos], op))
    }

    /// Applies a single-site operator at `pos` (center moved there first, so
    /// a non-unitary operator only rescales the center).
    pub fn apply_local(&mut self, pos: usize, op: &ComplexTensor) -> Result<()> {
        let d = self.check_op(pos, op)?;
        self.move_center(pos)?;
        let site = &mut self.sites[pos];
        let r = site.right;
        let o = op.data();
        let mut out = vec![ZERO; site.data.len()];
        for a in 0..site.left {
            for i in 0..d {
                let dst = (a * d + i) * r;
                for j in 0..d {
                    let v = o[i * d + j];
                    if v == ZERO {
                        continue;
                    }
                    let src = (a * d + j) * r;
                    for c in 0..r {
                        out[dst + c] += v * site.data[src + c];
                    }
                }
            }
        }
        site.data = out;
        Ok(())
    }

    /// `<psi|O|psi>` for every bin, in one left-to-right sweep.
    pub fn bin_expectations(&mut self, op: &ComplexTensor) -> Result<Vec<(BinLabel, C64)>> {
        let mut out = Vec::new();
        self.move_center(0)?;
        for pos in 0..self.len() {
            self.move_center(pos)?;
            if let SiteLabel::Bin(b) = self.labels[pos] {
                self.check_op(pos, op)?;
                out.push((b, site_expectation(&self.sites[pos], op)));
            }
        }
        Ok(out)
    }

    /// Contracts the sites `start..start + n` into a `(l, D, r)` block,
    /// after moving the center inside it.
    fn block(&mut self, start: usize, n: usize) -> Result<(Vec<C64>, usize, usize, usize)> {
        if n == 0 {
            return Err(Error::Shape("empty block".into()));
        }
        self.check_pos(start + n - 1)?;
        if self.center < start {
            self.move_center(start)?;
        } else if self.center >= start + n {
            self.move_center(start + n - 1)?;
        }
        let first = &self.sites[start];
        let l = first.left;
        let mut data = first.data.clone();
        let mut rows = l * first.phys;
        let mut right = first.right;
        for s in &self.sites[start + 1..start + n] {
            data = gemm(&data, &s.data, rows, right, s.phys * s.right);
            rows *= s.phys;
            right = s.right;
        }
        Ok((data, l, rows / l, right))
    }

    /// `||O psi||^2` for an operator on the contiguous block starting at `start`.
    pub fn block_norm_sqr_after(&mut self, start: usize, op: &ComplexTensor) -> Result<f64> {
        let d = op.dims().first().copied().unwrap_or(0);
        let n = self.block_len_for(start, d)?;
        let (theta, l, dd, r) = self.block(start, n)?;
        let out = apply_block_dense(op, &theta, l, dd, r)?;
        Ok(out.iter().map(|z| z.norm_sqr()).sum())
    }

    /// `<psi|O|psi>` for an operator on the contiguous block starting at `start`.
    pub fn block_expectation(&mut self, start: usize, op: &ComplexTensor) -> Result<C64> {
        let d = op.dims().first().copied().unwrap_or(0);
        let n = self.block_len_for(start, d)?;
        let (theta, l, dd, r) = self.block(start, n)?;
        let out = apply_block_dense(op, &theta, l, dd, r)?;
        Ok(theta.iter().zip(&out).map(|(a, b)| a.conj() * b).sum())
    }

    /// Applies an arbitrary (not necessarily unitary) operator to the block
    /// starting at `start` and re-factorizes it; the center ends on the last
    /// site of the block.
    pub fn apply_block(&mut self, start: usize, op: &ComplexTensor) -> Result<()> {
        let d = op.dims().first().copied().unwrap_or(0);
        let n = self.block_len_for(start, d)?;
        let (theta, l, dd, r) = self.block(start, n)?;
        let out = apply_block_dense(op, &theta, l, dd, r)?;
        self.refactor(start, n, out, l, r)
    }

    /// Bond and physical dimensions plus the row-major `(l, d, r)` data of a site.
    pub(crate) fn site_data(&self, pos: usize) -> (usize, usize, usize, &[C64]) {
        let s = &self.sites[pos];
        (s.left, s.phys, s.right, &s.data)
    }

    /// Number of sites from `start` whose physical dimensions multiply to `d`.
    fn block_len_for(&self, start: usize, d: usize) -> Result<usize> {
        self.check_pos(start)?;
        let mut prod = 1;
        for (k, s) in self.sites[start..].iter().enumerate() {
            prod *= s.phys;
            if prod == d {
                return Ok(k + 1);
            }
            if prod > d {
                break;
            }
        }
        Err(Error::Shape(format!("operator dimension {d} does not match a block at {start}")))
    }

    /// Applies `gate` to the sites `start..start + gate.roles().len()` and
    /// re-factorizes them by successive SVDs. The center ends on the last
    /// site of the block.
    pub fn apply_gate(&mut self, gate: &StroboscopicGate, start: usize) -> Result<()> {
        let n = gate.roles().len();
        self.check_pos(start + n - 1)?;
        for (k, role) in gate.roles().iter().enumerate() {
            let label = self.labels[start + k];
            let ok = match (role, label) {
                (GateRole::System, SiteLabel::System) => true,
                (GateRole::Emit(c, p), SiteLabel::Bin(b)) => b.channel == *c && b.path == *p,
                (GateRole::Feedback(p), SiteLabel::Bin(b)) => b.channel == Channel::One && b.path == *p,
                _ => false,
            };
            if !ok || self.sites[start + k].phys != gate.dims()[k] {
                return Err(Error::Contract(format!(
                    "gate expects {role:?} at position {}, found {label:?}",
                    start + k
                )));
            }
        }
        let (theta, l, dd, r) = self.block(start, n)?;
        let mut out = vec![ZERO; theta.len()];
        for a in 0..l {
            let src = &theta[a * dd * r..(a + 1) * dd * r];
            let dst = &mut out[a * dd * r..(a + 1) * dd * r];
            for &(row, col, v) in gate.entries() {
                let s = &src[col * r..(col + 1) * r];
                if s.iter().all(|z| *z == ZERO) {
                    continue;
                }
                for (o, x) in dst[row * r..(row + 1) * r].iter_mut().zip(s) {
                    *o += v * x;
                }
            }
        }
        self.refactor(start, n, out, l, r)
    }

    /// Splits a `(l, D, r)` block back into sites `start..start + n`.
    fn refactor(&mut self, start: usize, n: usize, block: Vec<C64>, l: usize, r: usize) -> Result<()> {
        let mut rest = block;
        let mut left = l;
        for k in 0..n - 1 {
            let d = self.sites[start + k].phys;
            let rows = left * d;
            let cols = rest.len() / rows;
            let f = svd_truncated(&rest, rows, cols, &self.policy)?;
            self.discarded_weight += f.discarded_weight;
            self.sites[start + k] = Site { left, phys: d, right: f.keep, data: f.u };
            rest = f.vt;
            for (i, s) in f.s.iter().enumerate() {
                rest[i * cols..(i + 1) * cols].iter_mut().for_each(|z| *z *= s);
            }
            left = f.keep;
        }
        let last = start + n - 1;
        let d = self.sites[last].phys;
        if rest.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric(format!("non-finite amplitude after gate at {start}")));
        }
        self.sites[last] = Site { left, phys: d, right: r, data: rest };
        self.center = last;
        Ok(())
    }

    /// Full state vector, row-major over the current site order. Only for
    /// small chains.
    pub fn to_dense(&self) -> Result<ComplexTensor> {
        let dims: Vec<usize> = self.sites.iter().map(|s| s.phys).collect();
        let total: usize = dims.iter().product();
        if total > 1 << 24 {
            return Err(Error::Shape(format!("dense state of dimension {total} is too large")));
        }
        let mut data = self.sites[0].data.clone();
        let mut rows = self.sites[0].phys;
        let mut right = self.sites[0].right;
        for s in &self.sites[1..] {
            data = gemm(&data, &s.data, rows, right, s.phys * s.right);
            rows *= s.phys;
            right = s.right;
        }
        ComplexTensor::new(dims, data)
    }

    /// Multiplies the whole state by `e^{i theta}`.
    pub fn apply_global_phase(&mut self, theta: f64) {
        let ph = C64::from_polar(1.0, theta);
        self.sites[self.center].data.iter_mut().for_each(|z| *z *= ph);
    }
}

fn site_expectation(site: &Site, op: &ComplexTensor) -> C64 {
    let (d, r) = (site.phys, site.right);
    let o = op.data();
    let mut acc = ZERO;
    for a in 0..site.left {
        for i in 0..d {
            for j in 0..d {
                let v = o[i * d + j];
                if v == ZERO {
                    continue;
                }
                let (si, sj) = ((a * d + i) * r, (a * d + j) * r);
                let mut inner = ZERO;
                for c in 0..r {
                    inner += site.data[si + c].conj() * site.data[sj + c];
                }
                acc += v * inner;
            }
        }
    }
    acc
}

fn apply_block_dense(op: &ComplexTensor, theta: &[C64], l: usize, d: usize, r: usize) -> Result<Vec<C64>> {
    if op.dims() != [d, d] {
        return Err(Error::Shape(format!("operator {:?} on block of dimension {d}", op.dims())));
    }
    let mut out = Vec::with_capacity(theta.len());
    for a in 0..l {
        out.extend(gemm(op.data(), &theta[a * d * r..(a + 1) * d * r], d, d, r));
    }
    Ok(out)
}

/// Photon annihilation operator on one bin.
pub fn annihilation(p: usize) -> ComplexTensor {
    let mut data = vec![ZERO; p * p];
    for n in 1..p {
        data[(n - 1) * p + n] = C64::new((n as f64).sqrt(), 0.0);
    }
    ComplexTensor::new(vec![p, p], data).expect("finite")
}

pub fn number_operator(p: usize) -> ComplexTensor {
    diagonal(&(0..p).map(|n| C64::new(n as f64, 0.0)).collect::<Vec<_>>())
}

/// `|level><level|` on the emitter.
pub fn projector(level: usize) -> ComplexTensor {
    let mut d = vec![ZERO; SYSTEM_DIM];
    d[level] = ONE;
    diagonal(&d)
}

pub fn diagonal(values: &[C64]) -> ComplexTensor {
    let n = values.len();
    let mut data = vec![ZERO; n * n];
    for (i, v) in values.iter().enumerate() {
        data[i * n + i] = *v;
    }
    ComplexTensor::new(vec![n, n], data).expect("finite")
}

/// Kronecker product of square operators, first factor slowest.
pub fn kron(a: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
    let (n, m) = (a.dims()[0], b.dims()[0]);
    let mut data = vec![ZERO; n * m * n * m];
    for i in 0..n {
        for j in 0..n {
            let x = a.data()[i * n + j];
            if x == ZERO {
                continue;
            }
            for k in 0..m {
                for l in 0..m {
                    data[(i * m + k) * n * m + j * m + l] = x * b.data()[k * m + l];
                }
            }
        }
    }
    ComplexTensor::new(vec![n * m, n * m], data).expect("finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(channel: Channel, path: Path, slot: i64) -> SiteLabel {
        SiteLabel::Bin(BinLabel::new(channel, path, slot, BinKind::Emission))
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    /// Random normalized state on [sys, four bins].
    fn random_chain(seed: u64) -> BinChain {
        let labels = vec![
            SiteLabel::System,
            bin(Channel::One, Path::Short, 0),
            bin(Channel::One, Path::Long, 0),
            bin(Channel::Two, Path::Short, 0),
            bin(Channel::Two, Path::Long, 0),
        ];
        let mut s = seed;
        let mut amps: Vec<C64> = (0..48).map(|_| C64::new(lcg(&mut s), lcg(&mut s))).collect();
        let n = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|z| *z /= n);
        BinChain::from_dense(labels, 2, &amps, TruncationPolicy::default(), Stage::Evolving).unwrap()
    }

    fn fidelity(a: &BinChain, b: &BinChain) -> f64 {
        a.to_dense().unwrap().inner(&b.to_dense().unwrap()).unwrap().norm()
    }

    #[test]
    fn fresh_chain_is_upper_state() {
        let p = ModelParams::dynamics();
        let mut c = BinChain::new(&p).unwrap();
        assert_eq!(c.len(), 1 + 2 * p.m);
        assert!((c.norm() - 1.0).abs() < 1e-15);
        let pa = c.local_expectation(0, &projector(0)).unwrap();
        let pb = c.local_expectation(0, &projector(1)).unwrap();
        assert!((pa - 1.0).norm() < 1e-15 && pb.norm() < 1e-15);
        for (_, n) in c.bin_expectations(&number_operator(2)).unwrap() {
            assert!(n.norm() < 1e-15);
        }
        for pos in 1..c.len() {
            assert_eq!(c.phys_dim(pos).unwrap(), 2);
        }
    }

    #[test]
    fn no_feedback_chain_has_no_pads() {
        let c = BinChain::new(&ModelParams::benchmark()).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn from_dense_roundtrip() {
        let c = random_chain(1);
        assert!((c.norm() - 1.0).abs() < 1e-12);
        assert!((fidelity(&c, &c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swap_twice_is_identity() {
        let c0 = random_chain(2);
        for pos in 0..4 {
            let mut c = c0.clone();
            c.swap_adjacent(pos).unwrap();
            c.swap_adjacent(pos).unwrap();
            assert_eq!(c.labels(), c0.labels());
            assert!(fidelity(&c0, &c) >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn swap_permutes_dense_state() {
        let c0 = random_chain(3);
        let mut c = c0.clone();
        c.swap_adjacent(1).unwrap();
        let before = c0.to_dense().unwrap();
        let after = c.to_dense().unwrap().permute(&[0, 2, 1, 3, 4]).unwrap();
        assert!(before.max_abs_diff(&after).unwrap() < 1e-12);
        assert_eq!(c.position(Channel::One, Path::Short, 0), Some(2));
    }

    #[test]
    fn swap_of_vacuum_bins_keeps_product_form() {
        let mut c = BinChain::new(&ModelParams::feedback_visibility()).unwrap();
        c.swap_adjacent(1).unwrap();
        c.swap_adjacent(3).unwrap();
        assert!(c.bond_dims().iter().all(|&b| b == 1));
    }

    #[test]
    fn swap_preserves_two_site_observables_of_entangled_pair() {
        // (|10> - |01>)/√2 on two bins next to the emitter in |c>.
        let labels = vec![SiteLabel::System, bin(Channel::One, Path::Short, 0), bin(Channel::Two, Path::Short, 0)];
        let mut amps = vec![ZERO; 12];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        amps[2 * 4 + 2] = C64::new(h, 0.0);
        amps[2 * 4 + 1] = C64::new(-h, 0.0);
        let mut c = BinChain::from_dense(labels, 2, &amps, TruncationPolicy::default(), Stage::Evolving).unwrap();
        let a = annihilation(2);
        let ad = a.adjoint().unwrap();
        let hop = kron(&ad, &a);
        let nn = kron(&number_operator(2), &number_operator(2));
        let before = (c.block_expectation(1, &hop).unwrap(), c.block_expectation(1, &nn).unwrap());
        c.swap_adjacent(1).unwrap();
        // after the swap the pair is reversed, so the hopping term is transposed
        let after = (c.block_expectation(1, &kron(&a, &ad)).unwrap(), c.block_expectation(1, &nn).unwrap());
        assert!((before.0 - after.0).norm() < 1e-12);
        assert!((before.1 - after.1).norm() < 1e-12);
        assert!((before.0 + 0.5).norm() < 1e-12);
    }

    #[test]
    fn move_bin_and_back() {
        let c0 = random_chain(4);
        let mut c = c0.clone();
        c.move_bin(0, 4).unwrap();
        let expect: Vec<SiteLabel> = c0.labels()[1..].iter().copied().chain([SiteLabel::System]).collect();
        assert_eq!(c.labels(), &expect[..]);
        assert_eq!(c.system_position(), 4);
        assert!((c.norm() - 1.0).abs() < 4e-12);
        c.move_bin(4, 0).unwrap();
        assert_eq!(c.labels(), c0.labels());
        assert!(fidelity(&c0, &c) >= 1.0 - 1e-12);
    }

    #[test]
    fn swaps_preserve_number_expectations() {
        let mut c = random_chain(5);
        let n = number_operator(2);
        let mut before = c.bin_expectations(&n).unwrap();
        for pos in [0, 1, 2, 3, 2, 1, 0, 3] {
            c.swap_adjacent(pos).unwrap();
        }
        let mut after = c.bin_expectations(&n).unwrap();
        before.sort_by_key(|(b, _)| b.key());
        after.sort_by_key(|(b, _)| b.key());
        for ((b1, x), (b2, y)) in before.iter().zip(&after) {
            assert_eq!(b1, b2);
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn insert_vacuum_tensors_on_vacuum() {
        let c0 = random_chain(6);
        let mut c = c0.clone();
        c.insert_vacuum(2, BinLabel::new(Channel::Two, Path::Short, 7, BinKind::VacuumPad)).unwrap();
        assert_eq!(c.position(Channel::Two, Path::Short, 0), Some(4));
        let d = c.to_dense().unwrap();
        let d0 = c0.to_dense().unwrap();
        // amplitudes with the new bin occupied vanish; the rest is the old state
        for (k, z) in d.data().iter().enumerate() {
            let idx = (k / 8) % 2;
            if idx == 1 {
                assert_eq!(*z, ZERO);
            }
        }
        assert!((d.norm() - d0.norm()).abs() < 1e-14);
        assert!(c.insert_vacuum(0, BinLabel::new(Channel::Two, Path::Short, 7, BinKind::Emission)).is_err());
    }

    #[test]
    fn center_moves_keep_state() {
        let c0 = random_chain(7);
        let mut c = c0.clone();
        c.move_center(0).unwrap();
        c.move_center(3).unwrap();
        assert!(fidelity(&c0, &c) >= 1.0 - 1e-12);
        assert!((c.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_expectation_hermitian_is_real() {
        let mut c = random_chain(8);
        for pos in 0..5 {
            let op = if pos == 0 { projector(1) } else { number_operator(2) };
            assert!(c.local_expectation(pos, &op).unwrap().im.abs() < 1e-10);
        }
        assert!(matches!(c.local_expectation(0, &number_operator(2)), Err(Error::Shape(_))));
        assert!(matches!(c.swap_adjacent(4), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn snapshot_serializes() {
        let c = random_chain(9);
        let json = serde_json::to_string(&c.snapshot()).unwrap();
        assert!(json.contains("\"SYS\""));
    }
}
