//! Dense complex tensors with the handful of operations the simulator needs:
//! pairwise contraction, truncated singular value decomposition across a
//! bipartition of the axes, and exponentials of anti-Hermitian generators.
//!
//! Storage is row-major over the axes: the last axis varies fastest. Every
//! reshape is therefore pure index arithmetic and never moves data.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Singular values at or below this fraction of the largest one are treated
/// as exact zeros (round-off from rank-deficient blocks) and always dropped.
pub const ZERO_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    dims: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(dims: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Shape(format!("zero-length axis in {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {len} amplitudes, got {}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numeric("non-finite amplitude".into()));
        }
        Ok(Self { dims, data })
    }

    /// Skips validation; callers guarantee `data.len() == prod(dims)`.
    pub(crate) fn from_raw(dims: Vec<usize>, data: Vec<C64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self::from_raw(dims.to_vec(), vec![C64::new(0.0, 0.0); len])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = C64::new(1.0, 0.0);
        }
        t
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(vec![r, c], rows.concat())
    }

    pub fn vector(data: Vec<C64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    fn strides(dims: &[usize]) -> Vec<usize> {
        let mut s = vec![1; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * dims[i + 1];
        }
        s
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        assert_eq!(idx.len(), self.dims.len());
        let off: usize = idx
            .iter()
            .zip(Self::strides(&self.dims))
            .map(|(i, s)| {
                debug_assert!(*i < self.dims[0].max(*i + 1));
                i * s
            })
            .sum();
        self.data[off]
    }

    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() || dims.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        Ok(Self::from_raw(dims, self.data))
    }

    /// Reorders axes: axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.rank();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Shape(format!(
                "{perm:?} is not a permutation of {n} axes"
            )));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let src_strides = Self::strides(&self.dims);
        let dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; n];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[off]);
            for ax in (0..n).rev() {
                idx[ax] += 1;
                off += strides[ax];
                if idx[ax] < dims[ax] {
                    break;
                }
                off -= strides[ax] * dims[ax];
                idx[ax] = 0;
            }
        }
        Ok(Self::from_raw(dims, out))
    }

    pub fn conj(&self) -> Self {
        Self::from_raw(self.dims.clone(), self.data.iter().map(|z| z.conj()).collect())
    }

    pub fn scale(&mut self, c: C64) {
        self.data.iter_mut().for_each(|z| *z *= c);
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>` over all entries.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "inner product of {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "comparing {:?} with {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    fn square_dim(&self) -> Result<usize> {
        match self.dims.as_slice() {
            [r, c] if r == c => Ok(*r),
            d => Err(Error::Shape(format!("expected a square matrix, got {d:?}"))),
        }
    }

    pub fn adjoint(&self) -> Result<Self> {
        let [r, c] = self.dims[..] else {
            return Err(Error::Shape(format!("adjoint of rank-{} tensor", self.rank())));
        };
        let mut out = vec![C64::new(0.0, 0.0); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j].conj();
            }
        }
        Ok(Self::from_raw(vec![c, r], out))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract(self, other, &[(1, 0)])
    }

}

/// Row-major `(m x k) * (k x n)` accumulated into a fresh buffer.
pub(crate) fn gemm(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip.re == 0.0 && aip.im == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// Contracts `a` and `b` over the listed `(axis_of_a, axis_of_b)` pairs.
/// The result carries the free axes of `a` followed by those of `b`.
pub fn contract(a: &ComplexTensor, b: &ComplexTensor, axis_pairs: &[(usize, usize)]) -> Result<ComplexTensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(ia, ib) in axis_pairs {
        if ia >= a.rank() || ib >= b.rank() {
            return Err(Error::Shape(format!(
                "axis pair ({ia}, {ib}) out of range for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        if std::mem::replace(&mut used_a[ia], true) || std::mem::replace(&mut used_b[ib], true) {
            return Err(Error::Shape(format!("axis repeated in {axis_pairs:?}")));
        }
        if a.dims[ia] != b.dims[ib] {
            return Err(Error::Shape(format!(
                "cannot contract axis {ia} (len {}) with axis {ib} (len {})",
                a.dims[ia], b.dims[ib]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&i| !used_b[i]).collect();

    let perm_a: Vec<usize> = free_a.iter().copied().chain(axis_pairs.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = axis_pairs.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.dims[i]).product();
    let k: usize = axis_pairs.iter().map(|p| a.dims[p.0]).product();
    let n: usize = free_b.iter().map(|&i| b.dims[i]).product();
    let data = gemm(&pa.data, &pb.data, m, k, n);
    let dims = free_a
        .iter()
        .map(|&i| a.dims[i])
        .chain(free_b.iter().map(|&i| b.dims[i]))
        .collect();
    Ok(ComplexTensor::from_raw(dims, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Largest relative Frobenius norm `sqrt(sum(dropped s^2) / sum(s^2))`
    /// that a single decomposition may discard; the reported discarded
    /// weight is the square of that quantity.
    pub epsilon: f64,
    pub max_bond: Option<usize>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { epsilon: 0.0, max_bond: None }
    }
}

impl TruncationPolicy {
    pub fn lossless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            errs.push(format!("truncation epsilon must be >= 0, got {}", self.epsilon));
        }
        if self.max_bond == Some(0) {
            errs.push("truncation max_bond must be >= 1".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Number of singular values to keep and the relative weight discarded.
    pub fn keep(&self, singulars: &[f64]) -> (usize, f64) {
        let total: f64 = singulars.iter().map(|s| s * s).sum();
        if singulars.is_empty() || total == 0.0 {
            return (1.min(singulars.len()), 0.0);
        }
        let floor = ZERO_CUTOFF * singulars[0];
        let mut keep = singulars.iter().take_while(|&&s| s > floor).count().max(1);
        let mut dropped: f64 = singulars[keep..].iter().map(|s| s * s).sum();
        while keep > 1 {
            let next = singulars[keep - 1] * singulars[keep - 1];
            if dropped + next > self.epsilon * self.epsilon * total {
                break;
            }
            dropped += next;
            keep -= 1;
        }
        if let Some(cap) = self.max_bond {
            while keep > cap.max(1) {
                dropped += singulars[keep - 1] * singulars[keep - 1];
                keep -= 1;
            }
        }
        (keep, dropped / total)
    }
}

#[derive(Clone, Debug)]
pub struct SvdSplit {
    /// Left axes followed by the new bond axis.
    pub left: ComplexTensor,
    pub singulars: Vec<f64>,
    /// New bond axis followed by the remaining axes in their original order.
    pub right: ComplexTensor,
    pub discarded_weight: f64,
}

impl SvdSplit {
    /// Multiplies the singular values into the right factor.
    pub fn absorb_right(mut self) -> (ComplexTensor, ComplexTensor) {
        let k = self.singulars.len();
        let cols = self.right.len() / k;
        for (i, s) in self.singulars.iter().enumerate() {
            self.right.data[i * cols..(i + 1) * cols].iter_mut().for_each(|z| *z *= s);
        }
        (self.left, self.right)
    }

    /// Multiplies the singular values into the left factor.
    pub fn absorb_left(mut self) -> (ComplexTensor, ComplexTensor) {
        let k = self.singulars.len();
        for row in self.left.data.chunks_mut(k) {
            row.iter_mut().zip(&self.singulars).for_each(|(z, s)| *z *= s);
        }
        (self.left, self.right)
    }
}

/// Splits `t` into `left * diag(singulars) * right` across the bipartition
/// (`left_axes`, remaining axes), truncated according to `policy`.
pub fn svd_split(t: &ComplexTensor, left_axes: &[usize], policy: &TruncationPolicy) -> Result<SvdSplit> {
    let n = t.rank();
    let mut is_left = vec![false; n];
    for &ax in left_axes {
        if ax >= n || std::mem::replace(&mut is_left[ax], true) {
            return Err(Error::Shape(format!("bad left axes {left_axes:?} for rank {n}")));
        }
    }
    if left_axes.is_empty() || left_axes.len() == n {
        return Err(Error::Shape(format!(
            "left axes {left_axes:?} must be a proper nonempty subset of {n} axes"
        )));
    }
    let right_axes: Vec<usize> = (0..n).filter(|&i| !is_left[i]).collect();
    let perm: Vec<usize> = left_axes.iter().chain(&right_axes).copied().collect();
    let left_dims: Vec<usize> = left_axes.iter().map(|&i| t.dims[i]).collect();
    let right_dims: Vec<usize> = right_axes.iter().map(|&i| t.dims[i]).collect();
    let rows: usize = left_dims.iter().product();
    let cols: usize = right_dims.iter().product();

    let permuted;
    let src = if perm.iter().enumerate().all(|(i, &p)| i == p) {
        t
    } else {
        permuted = t.permute(&perm)?;
        &permuted
    };
    let f = svd_truncated(&src.data, rows, cols, policy)?;

    let mut ld = left_dims;
    ld.push(f.keep);
    let mut rd = vec![f.keep];
    rd.extend(right_dims);
    Ok(SvdSplit {
        left: ComplexTensor::from_raw(ld, f.u),
        singulars: f.s,
        right: ComplexTensor::from_raw(rd, f.vt),
        discarded_weight: f.discarded_weight,
    })
}

/// Truncated thin SVD of a row-major matrix, in row-major storage.
pub(crate) struct Factorization {
    /// `rows x keep`
    pub u: Vec<C64>,
    pub s: Vec<f64>,
    /// `keep x cols`
    pub vt: Vec<C64>,
    pub keep: usize,
    pub discarded_weight: f64,
}

pub(crate) fn svd_truncated(
    data: &[C64],
    rows: usize,
    cols: usize,
    policy: &TruncationPolicy,
) -> Result<Factorization> {
    let (u, s, vt) = svd_matrix(data, rows, cols)?;
    let (keep, discarded_weight) = policy.keep(&s);
    let full = s.len();
    let mut uk = Vec::with_capacity(rows * keep);
    for i in 0..rows {
        uk.extend_from_slice(&u[i * full..i * full + keep]);
    }
    let mut vt = vt;
    vt.truncate(keep * cols);
    let mut s = s;
    s.truncate(keep);
    Ok(Factorization { u: uk, s, vt, keep, discarded_weight })
}

/// Thin SVD of a row-major `rows x cols` matrix. Returns row-major
/// `U (rows x r)`, descending singular values and `V^dag (r x cols)`.
fn svd_matrix(data: &[C64], rows: usize, cols: usize) -> Result<(Vec<C64>, Vec<f64>, Vec<C64>)> {
    let m = MatRef::from_row_major_slice(data, rows, cols);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD of {rows}x{cols} matrix failed: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite singular values in {rows}x{cols} SVD")));
    }
    let r = s.len();
    let mut ud = Vec::with_capacity(rows * r);
    for i in 0..rows {
        ud.extend((0..r).map(|j| u[(i, j)]));
    }
    let mut vd = Vec::with_capacity(r * cols);
    for i in 0..r {
        vd.extend((0..cols).map(|j| v[(j, i)].conj()));
    }
    Ok((ud, s, vd))
}

/// Thin QR of a row-major `rows x cols` block: returns `(Q, R)` row-major with
/// inner dimension `min(rows, cols)`.
pub(crate) fn qr_matrix(data: &[C64], rows: usize, cols: usize) -> (Vec<C64>, Vec<C64>, usize) {
    let qr = MatRef::from_row_major_slice(data, rows, cols).qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let k = rows.min(cols);
    let mut qd = Vec::with_capacity(rows * k);
    for i in 0..rows {
        qd.extend((0..k).map(|j| q[(i, j)]));
    }
    let mut rd = Vec::with_capacity(k * cols);
    for i in 0..k {
        rd.extend((0..cols).map(|j| r[(i, j)]));
    }
    (qd, rd, k)
}

/// Largest entry of `|g + g^dag|`.
pub fn anti_hermitian_defect(g: &ComplexTensor) -> Result<f64> {
    let n = g.square_dim()?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((g.data[i * n + j] + g.data[j * n + i].conj()).norm());
        }
    }
    Ok(worst)
}

/// `exp(g)` for anti-Hermitian `g`, through the eigendecomposition of the
/// Hermitian matrix `i g`.
pub fn expm_antihermitian(g: &ComplexTensor) -> Result<ComplexTensor> {
    let n = g.square_dim()?;
    let defect = anti_hermitian_defect(g)?;
    if defect > 1e-12 {
        return Err(Error::Contract(format!(
            "generator is not anti-Hermitian: |g + g^dag|_max = {defect:e}"
        )));
    }
    let i = C64::new(0.0, 1.0);
    let h = Mat::<C64>::from_fn(n, n, |r, c| (i * g.data[r * n + c] + (i * g.data[c * n + r]).conj()) * 0.5);
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigendecomposition of {n}x{n} generator failed: {e:?}")))?;
    let v = eig.U();
    let phases: Vec<C64> = eig.S().column_vector().iter().map(|l| C64::from_polar(1.0, -l.re)).collect();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        for c in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += v[(r, k)] * phases[k] * v[(c, k)].conj();
            }
            out[r * n + c] = acc;
        }
    }
    Ok(ComplexTensor::from_raw(vec![n, n], out))
}

/// `max |U^dag U - I|`.
pub fn unitarity_defect(u: &ComplexTensor) -> Result<f64> {
    let n = u.square_dim()?;
    let prod = u.adjoint()?.matmul(u)?;
    prod.max_abs_diff(&ComplexTensor::identity(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    /// Small deterministic generator so the unit tests need no RNG crate.
    pub(crate) struct Lcg(u64);
    impl Lcg {
        pub(crate) fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        }
        fn tensor(&mut self, dims: &[usize]) -> ComplexTensor {
            let n = dims.iter().product();
            let data = (0..n).map(|_| C64::new(self.next(), self.next())).collect();
            ComplexTensor::new(dims.to_vec(), data).unwrap()
        }
    }

    #[test]
    fn contract_identity_vector() {
        let v = ComplexTensor::vector(vec![C64::new(0.3, -1.0), c(2.0)]).unwrap();
        let out = contract(&ComplexTensor::identity(2), &v, &[(1, 0)]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn contract_identity_times_swap() {
        let x = ComplexTensor::from_rows(&[vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]]).unwrap();
        let out = ComplexTensor::identity(2).matmul(&x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn contract_matches_loop_oracle() {
        let mut rng = Lcg(7);
        let a = rng.tensor(&[3, 4]);
        let b = rng.tensor(&[4, 2]);
        let out = contract(&a, &b, &[(1, 0)]).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..4 {
                    acc += a.get(&[i, k]) * b.get(&[k, j]);
                }
                assert!((out.get(&[i, j]) - acc).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn contract_orders_free_axes_a_then_b() {
        let mut rng = Lcg(11);
        let a = rng.tensor(&[2, 3, 4]);
        let b = rng.tensor(&[5, 3]);
        let out = contract(&a, &b, &[(1, 1)]).unwrap();
        assert_eq!(out.dims(), &[2, 4, 5]);
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..3 {
            acc += a.get(&[1, k, 2]) * b.get(&[4, k]);
        }
        assert!((out.get(&[1, 2, 4]) - acc).norm() < 1e-13);
    }

    #[test]
    fn contract_rejects_mismatch() {
        let a = ComplexTensor::zeros(&[2, 3]);
        let b = ComplexTensor::zeros(&[2, 3]);
        assert!(matches!(contract(&a, &b, &[(1, 0)]), Err(Error::Shape(_))));
    }

    #[test]
    fn permute_roundtrip() {
        let mut rng = Lcg(3);
        let a = rng.tensor(&[2, 3, 4, 5]);
        let p = a.permute(&[2, 0, 3, 1]).unwrap();
        assert_eq!(p.dims(), &[4, 2, 5, 3]);
        assert_eq!(p.get(&[3, 1, 4, 2]), a.get(&[1, 2, 3, 4]));
        let back = p.permute(&[1, 3, 0, 2]).unwrap();
        assert_eq!(back, a);
    }

    fn reconstruct(s: &SvdSplit) -> ComplexTensor {
        let (l, r) = s.clone().absorb_right();
        let ll = l.rank();
        contract(&l, &r, &[(ll - 1, 0)]).unwrap()
    }

    #[test]
    fn svd_rank_one_product_state() {
        let u = [c(0.6), C64::new(0.0, 0.8)];
        let v = [c(1.0 / 2f64.sqrt()), c(-1.0 / 2f64.sqrt())];
        let data = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let t = ComplexTensor::new(vec![2, 2], data).unwrap();
        let s = svd_split(&t, &[0], &TruncationPolicy::default()).unwrap();
        assert_eq!(s.singulars.len(), 1);
        assert!((s.singulars[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_lossless_random() {
        let mut rng = Lcg(5);
        let t = rng.tensor(&[4, 4]);
        let s = svd_split(&t, &[0], &TruncationPolicy::default()).unwrap();
        assert_eq!(s.discarded_weight, 0.0);
        let err = reconstruct(&s).max_abs_diff(&t).unwrap() / t.norm();
        assert!(err < 1e-12, "{err}");
        assert!(s.singulars.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_split_multi_axis() {
        let mut rng = Lcg(9);
        let t = rng.tensor(&[2, 3, 2, 4]);
        let s = svd_split(&t, &[2, 0], &TruncationPolicy::default()).unwrap();
        assert_eq!(s.left.dims()[..2], [2, 2]);
        assert_eq!(s.right.dims()[1..], [3, 4]);
        // left (ax2, ax0, k) x right (k, ax1, ax3) -> (ax2, ax0, ax1, ax3)
        let back = reconstruct(&s).permute(&[1, 2, 0, 3]).unwrap();
        assert!(back.max_abs_diff(&t).unwrap() < 1e-12);
    }

    /// Builds U diag(sv) V^dag from random unitaries (QR of random matrices).
    fn with_spectrum(sv: &[f64], n: usize, seed: u64) -> ComplexTensor {
        let mut rng = Lcg(seed);
        let a = rng.tensor(&[n, n]);
        let b = rng.tensor(&[n, n]);
        let (qa, _, _) = qr_matrix(a.data(), n, n);
        let (qb, _, _) = qr_matrix(b.data(), n, n);
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                for (k, s) in sv.iter().enumerate() {
                    out[i * n + j] += qa[i * n + k] * s * qb[j * n + k].conj();
                }
            }
        }
        ComplexTensor::new(vec![n, n], out).unwrap()
    }

    #[test]
    fn svd_truncation_thresholds() {
        let t = with_spectrum(&[1.0, 1e-9], 3, 21);
        let keep_both = TruncationPolicy { epsilon: 1e-12, max_bond: None };
        let s = svd_split(&t, &[0], &keep_both).unwrap();
        assert_eq!(s.singulars.len(), 2);
        assert!((s.singulars[1] - 1e-9).abs() < 1e-15);

        let drop_one = TruncationPolicy { epsilon: 1e-6, max_bond: None };
        let s = svd_split(&t, &[0], &drop_one).unwrap();
        assert_eq!(s.singulars.len(), 1);
        assert!((s.discarded_weight - 1e-18).abs() < 1e-21, "{}", s.discarded_weight);
    }

    #[test]
    fn svd_max_bond_cap() {
        let mut rng = Lcg(13);
        let t = rng.tensor(&[6, 6]);
        let p = TruncationPolicy { epsilon: 0.0, max_bond: Some(2) };
        let s = svd_split(&t, &[0], &p).unwrap();
        assert_eq!(s.singulars.len(), 2);
        assert!(s.discarded_weight > 0.0);
    }

    #[test]
    fn svd_rejects_improper_split() {
        let t = ComplexTensor::zeros(&[2, 2]);
        assert!(svd_split(&t, &[], &TruncationPolicy::default()).is_err());
        assert!(svd_split(&t, &[0, 1], &TruncationPolicy::default()).is_err());
    }

    #[test]
    fn expm_zero_is_identity() {
        let u = expm_antihermitian(&ComplexTensor::zeros(&[4, 4])).unwrap();
        assert!(u.max_abs_diff(&ComplexTensor::identity(4)).unwrap() < 1e-15);
    }

    #[test]
    fn expm_real_rotation() {
        let th = 0.3;
        let g = ComplexTensor::from_rows(&[vec![c(0.0), c(th)], vec![c(-th), c(0.0)]]).unwrap();
        let u = expm_antihermitian(&g).unwrap();
        let want = ComplexTensor::from_rows(&[
            vec![c(th.cos()), c(th.sin())],
            vec![c(-th.sin()), c(th.cos())],
        ])
        .unwrap();
        assert!(u.max_abs_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn expm_rejects_hermitian_input() {
        let g = ComplexTensor::from_rows(&[vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]]).unwrap();
        assert!(matches!(expm_antihermitian(&g), Err(Error::Contract(_))));
    }

    #[test]
    fn expm_inverse_and_unitarity_large() {
        let mut rng = Lcg(17);
        let n = 48;
        let a = rng.tensor(&[n, n]);
        let g_data: Vec<C64> = (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                (a.data()[i * n + j] - a.data()[j * n + i].conj()) * 0.5
            })
            .collect();
        let g = ComplexTensor::new(vec![n, n], g_data).unwrap();
        let u = expm_antihermitian(&g).unwrap();
        assert!(unitarity_defect(&u).unwrap() < 1e-12);
        let mut neg = g.clone();
        neg.scale(c(-1.0));
        let back = u.matmul(&expm_antihermitian(&neg).unwrap()).unwrap();
        assert!(back.max_abs_diff(&ComplexTensor::identity(n)).unwrap() < 1e-10);
    }
}
