//! Real matrix product states with a stripped logarithmic scale.
//!
//! The state represented is `exp(log_scale) · A₀ A₁ ⋯ A_{L-1}`. The chain is
//! kept in mixed canonical form around `center`, and the center tensor is
//! kept at unit Frobenius norm, so `log_scale` is the log of the vector norm.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) mod linalg;

use linalg::{ensure_sequential, lq_rm, matmul_rm, matmul_tn, qr_rm, svd_rm};

/// Default discarded-weight tolerance.
pub const DEFAULT_CUTOFF: f64 = 1e-12;
/// Singular values closer than this (relative) are kept or dropped together.
pub const TIE_TOL: f64 = 1e-10;
/// A post-update norm at or below this fraction of the pre-update norm is a null branch.
pub const NULL_TOL: f64 = 1e-14;

const CHECKPOINT_MAGIC: &[u8; 8] = b"CHLBMPS\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub cutoff: f64,
    pub max_chi: Option<usize>,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { cutoff: DEFAULT_CUTOFF, max_chi: None }
    }
}

impl TruncationPolicy {
    pub fn new(cutoff: f64, max_chi: Option<usize>) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::InvalidPolicy(format!("cutoff {cutoff} must be positive")));
        }
        if max_chi == Some(0) {
            return Err(Error::InvalidPolicy("max_chi must be at least 1".into()));
        }
        Ok(TruncationPolicy { cutoff, max_chi })
    }

    pub fn capped(max_chi: usize) -> Self {
        TruncationPolicy { cutoff: DEFAULT_CUTOFF, max_chi: Some(max_chi.max(1)) }
    }

    /// Number of singular values to keep from a nonincreasing spectrum.
    pub fn rank(&self, s: &[f64]) -> usize {
        if s.is_empty() {
            return 0;
        }
        let total: f64 = s.iter().map(|x| x * x).sum();
        let mut k = s.len();
        let mut discarded = 0.0;
        while k > 1 {
            let next = discarded + s[k - 1] * s[k - 1];
            if next > self.cutoff * total {
                break;
            }
            discarded = next;
            k -= 1;
        }
        while k < s.len() && s[k] > 0.0 && s[k] >= s[k - 1] * (1.0 - TIE_TOL) {
            k += 1;
        }
        match self.max_chi {
            Some(c) => k.min(c),
            None => k,
        }
    }
}

/// A site tensor with index order `(left, physical, right)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub l: usize,
    pub d: usize,
    pub r: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(l: usize, d: usize, r: usize) -> Self {
        Tensor3 { l, d, r, data: vec![0.0; l * d * r] }
    }

    pub fn from_data(l: usize, d: usize, r: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), l * d * r, "tensor data does not match its shape");
        Tensor3 { l, d, r, data }
    }

    #[inline]
    pub fn idx(&self, a: usize, s: usize, b: usize) -> usize {
        (a * self.d + s) * self.r + b
    }

    #[inline]
    pub fn get(&self, a: usize, s: usize, b: usize) -> f64 {
        self.data[self.idx(a, s, b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, s: usize, b: usize, v: f64) {
        let i = self.idx(a, s, b);
        self.data[i] = v;
    }

    /// `Σ_s v[s] A[:, s, :]` as a row-major `l × r` matrix.
    pub fn contract_physical(&self, v: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.l * self.r];
        for a in 0..self.l {
            for (s, &w) in v.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &self.data[self.idx(a, s, 0)..self.idx(a, s, 0) + self.r];
                for (dst, x) in m[a * self.r..(a + 1) * self.r].iter_mut().zip(src) {
                    *dst += w * x;
                }
            }
        }
        m
    }

    fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// A sparse local operator on one or two sites, `(out, in, value)` triples.
/// Two-site indices are `s₁·d + s₂` with the left site most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOp {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl LocalOp {
    pub fn from_dense(dim: usize, m: &[f64]) -> Self {
        assert_eq!(m.len(), dim * dim, "operator is not {dim}x{dim}");
        let entries = (0..dim)
            .flat_map(|o| (0..dim).map(move |i| (o, i)))
            .filter_map(|(o, i)| {
                let v = m[o * dim + i];
                (v != 0.0).then_some((o, i, v))
            })
            .collect();
        LocalOp { dim, entries }
    }

    pub fn diagonal(v: &[f64]) -> Self {
        let entries = v.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i, i, x)).collect();
        LocalOp { dim: v.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim * self.dim];
        for &(o, i, v) in &self.entries {
            m[o * self.dim + i] += v;
        }
        m
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &LocalOp) -> LocalOp {
        assert_eq!(self.dim, other.dim);
        let a = self.to_dense();
        let b = other.to_dense();
        LocalOp::from_dense(self.dim, &matmul_rm(&a, self.dim, self.dim, &b, self.dim))
    }

    /// Tensor product `self ⊗ other` of two single-site operators.
    pub fn kron(&self, other: &LocalOp) -> LocalOp {
        let d = other.dim;
        let entries = self
            .entries
            .iter()
            .flat_map(|&(o1, i1, v1)| other.entries.iter().map(move |&(o2, i2, v2)| (o1 * d + o2, i1 * d + i2, v1 * v2)))
            .collect();
        LocalOp { dim: self.dim * d, entries }
    }
}

fn apply_op_to_block(op: &LocalOp, src: &[f64], l: usize, r: usize) -> Vec<f64> {
    let n = op.dim;
    let mut out = vec![0.0; l * n * r];
    for a in 0..l {
        for &(o, i, v) in &op.entries {
            let s = (a * n + i) * r;
            let t = (a * n + o) * r;
            for b in 0..r {
                out[t + b] += v * src[s + b];
            }
        }
    }
    out
}

/// `(sign, ln|x|)` of a scalar that may be too large or small for `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogScalar {
    pub sign: f64,
    pub ln_abs: f64,
}

impl LogScalar {
    pub const ZERO: LogScalar = LogScalar { sign: 0.0, ln_abs: f64::NEG_INFINITY };

    pub fn value(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    d: usize,
    tensors: Vec<Tensor3>,
    center: usize,
    log_scale: f64,
    peak_bond: usize,
}

impl Mps {
    /// Product state from one (unnormalized) vector per site.
    pub fn product(d: usize, sites: &[Vec<f64>]) -> Result<Mps> {
        ensure_sequential();
        if sites.is_empty() {
            return Err(Error::EmptyInput("product state with no sites"));
        }
        let mut log_scale = 0.0;
        let mut tensors = Vec::with_capacity(sites.len());
        for v in sites {
            if v.len() != d {
                return Err(Error::LengthMismatch(v.len(), d));
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                log_scale = f64::NEG_INFINITY;
                tensors.push(Tensor3::from_data(1, d, 1, v.clone()));
            } else {
                log_scale += n.ln();
                tensors.push(Tensor3::from_data(1, d, 1, v.iter().map(|x| x / n).collect()));
            }
        }
        Ok(Mps { d, tensors, center: 0, log_scale, peak_bond: 1 })
    }

    /// Arbitrary tensors; brought to canonical form and compressed under `policy`.
    pub fn from_tensors(tensors: Vec<Tensor3>, log_scale: f64, policy: &TruncationPolicy) -> Result<Mps> {
        ensure_sequential();
        let first = tensors.first().ok_or(Error::EmptyInput("MPS with no sites"))?;
        let d = first.d;
        let last = tensors.len() - 1;
        for (j, t) in tensors.iter().enumerate() {
            let left_ok = if j == 0 { t.l == 1 } else { t.l == tensors[j - 1].r };
            if t.d != d || !left_ok || (j == last && t.r != 1) || t.data.len() != t.l * t.d * t.r {
                return Err(Error::Checkpoint(format!("inconsistent tensor shape at site {j}")));
            }
        }
        let peak = tensors.iter().map(|t| t.r).max().unwrap_or(1);
        let mut mps = Mps { d, tensors, center: 0, log_scale, peak_bond: peak };
        mps.normalize_center();
        mps.move_center(last);
        mps.compress(policy)?;
        mps.peak_bond = mps.max_bond();
        Ok(mps)
    }

    /// `ca·a + cb·b` as a direct sum, canonicalized and compressed. The
    /// orthogonal factorizations carry out the cancellation, so small
    /// differences keep full relative accuracy in their norm.
    pub fn linear_combination(a: &Mps, ca: f64, b: &Mps, cb: f64) -> Result<Mps> {
        let n = a.len();
        if n != b.len() {
            return Err(Error::LengthMismatch(n, b.len()));
        }
        if a.d != b.d {
            return Err(Error::LengthMismatch(a.d, b.d));
        }
        let m = a.log_scale.max(b.log_scale);
        if m == f64::NEG_INFINITY {
            return Ok(a.clone());
        }
        let wa = ca * (a.log_scale - m).exp();
        let wb = cb * (b.log_scale - m).exp();
        let d = a.d;
        let mut tensors = Vec::with_capacity(n);
        for (j, (ta, tb)) in a.tensors.iter().zip(&b.tensors).enumerate() {
            let first = j == 0;
            let last = j + 1 == n;
            if first && last {
                let data = ta.data.iter().zip(&tb.data).map(|(x, y)| wa * x + wb * y).collect();
                tensors.push(Tensor3::from_data(1, d, 1, data));
                continue;
            }
            let l = if first { 1 } else { ta.l + tb.l };
            let r = if last { 1 } else { ta.r + tb.r };
            let mut t = Tensor3::zeros(l, d, r);
            let (fa, fb) = if first { (wa, wb) } else { (1.0, 1.0) };
            for (src, off_l, off_r, w) in [(ta, 0, 0, fa), (tb, if first { 0 } else { ta.l }, if last { 0 } else { ta.r }, fb)] {
                for x in 0..src.l {
                    for s in 0..d {
                        for y in 0..src.r {
                            t.set(x + off_l, s, y + off_r, w * src.get(x, s, y));
                        }
                    }
                }
            }
            tensors.push(t);
        }
        let mut out = Mps::from_tensors(tensors, m, &TruncationPolicy::default())?;
        out.peak_bond = out.max_bond();
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn phys_dim(&self) -> usize {
        self.d
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn is_null(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY
    }

    pub fn tensors(&self) -> &[Tensor3] {
        &self.tensors
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.len() - 1].iter().map(|t| t.r).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Largest bond dimension seen since construction or the last reset.
    pub fn peak_bond(&self) -> usize {
        self.peak_bond
    }

    pub fn reset_peak(&mut self) {
        self.peak_bond = self.max_bond();
    }

    pub fn scale_by_ln(&mut self, ln_factor: f64) {
        self.log_scale += ln_factor;
    }

    fn set_null(&mut self) {
        self.log_scale = f64::NEG_INFINITY;
    }

    fn normalize_center(&mut self) -> f64 {
        let t = &mut self.tensors[self.center];
        let n = t.norm();
        if n == 0.0 || !n.is_finite() {
            self.set_null();
            return 0.0;
        }
        t.data.iter_mut().for_each(|x| *x /= n);
        self.log_scale += n.ln();
        n
    }

    /// Move the orthogonality center to site `to` with QR/LQ sweeps.
    pub fn move_center(&mut self, to: usize) {
        assert!(to < self.len(), "center {to} out of range");
        let d = self.d;
        while self.center < to {
            let c = self.center;
            let t = &self.tensors[c];
            let (l, r) = (t.l, t.r);
            let (q, rr) = qr_rm(&t.data, l * d, r);
            let k = q.len() / (l * d);
            self.tensors[c] = Tensor3::from_data(l, d, k, q);
            let next = &self.tensors[c + 1];
            let (nr, nd) = (next.r, next.d);
            let merged = matmul_rm(&rr, k, r, &next.data, nd * nr);
            self.tensors[c + 1] = Tensor3::from_data(k, nd, nr, merged);
            self.center += 1;
        }
        while self.center > to {
            let c = self.center;
            let t = &self.tensors[c];
            let (l, r) = (t.l, t.r);
            let (lm, q) = lq_rm(&t.data, l, d * r);
            let k = q.len() / (d * r);
            self.tensors[c] = Tensor3::from_data(k, d, r, q);
            let prev = &self.tensors[c - 1];
            let (pl, pd) = (prev.l, prev.d);
            let merged = matmul_rm(&prev.data, pl * pd, l, &lm, k);
            self.tensors[c - 1] = Tensor3::from_data(pl, pd, k, merged);
            self.center -= 1;
        }
    }

    /// Sweep right to left truncating every bond under `policy`; center ends at 0.
    pub fn compress(&mut self, policy: &TruncationPolicy) -> Result<()> {
        if self.is_null() {
            return Ok(());
        }
        let last = self.len() - 1;
        self.move_center(last);
        let d = self.d;
        for j in (0..last).rev() {
            let t = &self.tensors[j + 1];
            let (l, r) = (t.l, t.r);
            let (u, s, vt) = svd_rm(&t.data, l, d * r)?;
            let kfull = s.len();
            let k = policy.rank(&s).max(1);
            let vt: Vec<f64> = vt[..k * d * r].to_vec();
            let mut us = vec![0.0; l * k];
            for a in 0..l {
                for b in 0..k {
                    us[a * k + b] = u[a * kfull + b] * s[b];
                }
            }
            self.tensors[j + 1] = Tensor3::from_data(k, d, r, vt);
            let prev = &self.tensors[j];
            let (pl, pd) = (prev.l, prev.d);
            let merged = matmul_rm(&prev.data, pl * pd, l, &us, k);
            self.tensors[j] = Tensor3::from_data(pl, pd, k, merged);
            self.center = j;
            self.normalize_center();
            if self.is_null() {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Apply a two-site operator on sites `(j, j+1)` and split with `policy`.
    ///
    /// The center ends on whichever of the two sites lies in the direction
    /// it was travelling, so a left-to-right pass of updates costs no extra sweeps.
    pub fn apply_two_site(&mut self, j: usize, op: &LocalOp, policy: &TruncationPolicy) -> Result<()> {
        if j + 1 >= self.len() {
            return Err(Error::SiteOutOfRange { site: j + 1, len: self.len() });
        }
        assert_eq!(op.dim, self.d * self.d, "two-site operator has the wrong dimension");
        if self.is_null() {
            return Ok(());
        }
        let d = self.d;
        let rightward = self.center <= j;
        self.move_center(if rightward { j } else { j + 1 });
        let (a, b) = (&self.tensors[j], &self.tensors[j + 1]);
        let (l, m, r) = (a.l, a.r, b.r);
        let theta = matmul_rm(&a.data, l * d, m, &b.data, d * r);
        let theta = apply_op_to_block(op, &theta, l, r);
        let (u, mut s, vt) = svd_rm(&theta, l * d, d * r)?;
        let kfull = s.len();
        let k = policy.rank(&s).max(1);
        let kept: f64 = s[..k].iter().map(|x| x * x).sum::<f64>().sqrt();
        if kept <= NULL_TOL {
            self.set_null();
            return Ok(());
        }
        s.truncate(k);
        s.iter_mut().for_each(|x| *x /= kept);
        self.log_scale += kept.ln();

        let mut left = vec![0.0; l * d * k];
        for row in 0..l * d {
            left[row * k..(row + 1) * k].copy_from_slice(&u[row * kfull..row * kfull + k]);
        }
        let mut right = vt[..k * d * r].to_vec();
        if rightward {
            for (b, sv) in s.iter().enumerate() {
                right[b * d * r..(b + 1) * d * r].iter_mut().for_each(|x| *x *= sv);
            }
            self.center = j + 1;
        } else {
            for row in 0..l * d {
                for (b, sv) in s.iter().enumerate() {
                    left[row * k + b] *= sv;
                }
            }
            self.center = j;
        }
        self.tensors[j] = Tensor3::from_data(l, d, k, left);
        self.tensors[j + 1] = Tensor3::from_data(k, d, r, right);
        self.peak_bond = self.peak_bond.max(k);
        Ok(())
    }

    /// Apply a one-site operator at site `j` (the center moves there).
    pub fn apply_one_site(&mut self, j: usize, op: &LocalOp) -> Result<()> {
        if j >= self.len() {
            return Err(Error::SiteOutOfRange { site: j, len: self.len() });
        }
        assert_eq!(op.dim, self.d, "one-site operator has the wrong dimension");
        if self.is_null() {
            return Ok(());
        }
        self.move_center(j);
        let t = &self.tensors[j];
        let out = apply_op_to_block(op, &t.data, t.l, t.r);
        let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= NULL_TOL {
            self.set_null();
            return Ok(());
        }
        self.tensors[j].data = out.into_iter().map(|x| x / n).collect();
        self.log_scale += n.ln();
        Ok(())
    }

    /// `Σ_σ Π_j v_j[σ_j] ψ(σ)` where `vecs(j)` supplies the vector for site `j`.
    pub fn contract_vectors<'a, F>(&self, vecs: F) -> LogScalar
    where
        F: Fn(usize) -> &'a [f64],
    {
        if self.is_null() {
            return LogScalar::ZERO;
        }
        let mut env = vec![1.0];
        let mut ln_acc = self.log_scale;
        for (j, t) in self.tensors.iter().enumerate() {
            let m = t.contract_physical(vecs(j));
            env = matmul_rm(&env, 1, t.l, &m, t.r);
            let scale = env.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale == 0.0 {
                return LogScalar::ZERO;
            }
            env.iter_mut().for_each(|x| *x /= scale);
            ln_acc += scale.ln();
        }
        LogScalar { sign: env[0].signum(), ln_abs: ln_acc + env[0].abs().ln() }
    }

    /// Like [`Mps::contract_vectors`], but sites `(j, j+1)` are contracted with
    /// each of `pair_vecs` (length `d²`, left site most significant) in turn.
    pub fn contract_vectors_pair<'a, F>(&self, vecs: F, j: usize, pair_vecs: &[Vec<f64>]) -> Result<Vec<LogScalar>>
    where
        F: Fn(usize) -> &'a [f64],
    {
        let n = self.len();
        if j + 1 >= n {
            return Err(Error::SiteOutOfRange { site: j + 1, len: n });
        }
        if self.is_null() {
            return Ok(vec![LogScalar::ZERO; pair_vecs.len()]);
        }
        let d = self.d;
        let mut left = vec![1.0];
        let mut ln_acc = self.log_scale;
        for (k, t) in self.tensors[..j].iter().enumerate() {
            let m = t.contract_physical(vecs(k));
            left = matmul_rm(&left, 1, t.l, &m, t.r);
            let scale = left.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale == 0.0 {
                return Ok(vec![LogScalar::ZERO; pair_vecs.len()]);
            }
            left.iter_mut().for_each(|x| *x /= scale);
            ln_acc += scale.ln();
        }
        let mut right = vec![1.0];
        for k in (j + 2..n).rev() {
            let t = &self.tensors[k];
            let m = t.contract_physical(vecs(k));
            right = matmul_rm(&m, t.l, t.r, &right, 1);
            let scale = right.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if scale == 0.0 {
                return Ok(vec![LogScalar::ZERO; pair_vecs.len()]);
            }
            right.iter_mut().for_each(|x| *x /= scale);
            ln_acc += scale.ln();
        }
        let (a, b) = (&self.tensors[j], &self.tensors[j + 1]);
        // (d·d_l-contracted) left env times A, then B times right env
        let la = matmul_rm(&left, 1, a.l, &a.data, d * a.r);
        let br = matmul_rm(&b.data, b.l * d, b.r, &right, 1);
        let mut pair = vec![0.0; d * d];
        for s1 in 0..d {
            for s2 in 0..d {
                pair[s1 * d + s2] = (0..a.r).map(|m| la[s1 * a.r + m] * br[m * d + s2]).sum();
            }
        }
        Ok(pair_vecs
            .iter()
            .map(|w| {
                let v: f64 = w.iter().zip(&pair).map(|(x, y)| x * y).sum();
                if v == 0.0 {
                    LogScalar::ZERO
                } else {
                    LogScalar { sign: v.signum(), ln_abs: ln_acc + v.abs().ln() }
                }
            })
            .collect())
    }

    /// `Σ_σ ψ(σ) φ(π(σ))` with an optional per-site permutation `π` of `other`'s
    /// physical index.
    pub fn inner(&self, other: &Mps, perm: Option<&[usize]>) -> Result<LogScalar> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        if self.d != other.d {
            return Err(Error::LengthMismatch(self.d, other.d));
        }
        if self.is_null() || other.is_null() {
            return Ok(LogScalar::ZERO);
        }
        let d = self.d;
        let mut env = vec![1.0];
        let mut ln_acc = self.log_scale + other.log_scale;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            let t = matmul_rm(&env, a.l, b.l, &b.data, d * b.r);
            let t = match perm {
                None => t,
                Some(p) => permute_physical(&t, a.l, d, b.r, p),
            };
            env = matmul_tn(&a.data, a.l * d, a.r, &t, b.r);
            let scale = env.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if scale == 0.0 {
                return Ok(LogScalar::ZERO);
            }
            env.iter_mut().for_each(|x| *x /= scale);
            ln_acc += scale.ln();
        }
        Ok(LogScalar { sign: env[0].signum(), ln_abs: ln_acc + env[0].abs().ln() })
    }

    /// `⟨ψ| O_{site0} O_{x} |ψ⟩ / ⟨ψ|ψ⟩` for every `x > site0`, sharing one sweep.
    pub fn two_point(&self, site0: usize, op0: &LocalOp, opx: &LocalOp) -> Result<Vec<f64>> {
        let n = self.len();
        if site0 >= n {
            return Err(Error::SiteOutOfRange { site: site0, len: n });
        }
        let mut work = self.clone();
        if work.is_null() {
            return Ok(vec![0.0; n - site0 - 1]);
        }
        work.move_center(site0);
        let d = self.d;
        let t = &work.tensors[site0];
        let mut env = {
            let applied = apply_op_to_block(op0, &t.data, t.l, t.r);
            matmul_tn(&t.data, t.l * d, t.r, &applied, t.r)
        };
        let mut out = Vec::with_capacity(n - site0 - 1);
        for t in &work.tensors[site0 + 1..] {
            let et = matmul_rm(&env, t.l, t.l, &t.data, d * t.r);
            let inserted = apply_op_to_block(opx, &et, t.l, t.r);
            let closed: f64 = (0..t.l * d)
                .flat_map(|row| (0..t.r).map(move |b| (row, b)))
                .map(|(row, b)| t.data[row * t.r + b] * inserted[row * t.r + b])
                .sum();
            out.push(closed);
            env = matmul_tn(&t.data, t.l * d, t.r, &et, t.r);
        }
        Ok(out)
    }

    /// Full amplitude vector, site 0 most significant. Exponential in length.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut acc = vec![1.0];
        let mut rows = 1;
        for t in &self.tensors {
            acc = matmul_rm(&acc, rows, t.l, &t.data, t.d * t.r);
            rows *= t.d;
        }
        let scale = self.log_scale.exp();
        acc.into_iter().map(|x| x * scale).collect()
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let u32s = [CHECKPOINT_VERSION, self.d as u32, self.len() as u32, self.center as u32, self.peak_bond as u32];
        for x in u32s {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.log_scale.to_le_bytes())?;
        for t in &self.tensors {
            for x in [t.l as u32, t.d as u32, t.r as u32] {
                w.write_all(&x.to_le_bytes())?;
            }
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Mps> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf) as usize)
        };
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(Error::VersionMismatch { found: version as u64, expected: CHECKPOINT_VERSION as u64 });
        }
        let d = read_u32(&mut r)?;
        let len = read_u32(&mut r)?;
        let center = read_u32(&mut r)?;
        let peak_bond = read_u32(&mut r)?;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let log_scale = f64::from_le_bytes(f64buf);
        if len == 0 || center >= len {
            return Err(Error::Checkpoint(format!("invalid length {len} or center {center}")));
        }
        let mut tensors = Vec::with_capacity(len);
        for j in 0..len {
            let (l, td, rr) = (read_u32(&mut r)?, read_u32(&mut r)?, read_u32(&mut r)?);
            let prev_r = if j == 0 { 1 } else { tensors.last().map(|t: &Tensor3| t.r).unwrap_or(1) };
            if td != d || l != prev_r || (j + 1 == len && rr != 1) {
                return Err(Error::Checkpoint(format!("inconsistent tensor shape at site {j}")));
            }
            let n = l * td * rr;
            let mut bytes = vec![0u8; n * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor3::from_data(l, td, rr, data));
        }
        ensure_sequential();
        Ok(Mps { d, tensors, center, log_scale, peak_bond })
    }
}

fn permute_physical(t: &[f64], l: usize, d: usize, r: usize, perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; t.len()];
    for a in 0..l {
        for s in 0..d {
            let src = (a * d + perm[s]) * r;
            let dst = (a * d + s) * r;
            out[dst..dst + r].copy_from_slice(&t[src..src + r]);
        }
    }
    out
}
