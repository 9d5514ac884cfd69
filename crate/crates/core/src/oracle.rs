//! Dense density-matrix reference engine for short chains.
//!
//! Everything here is brute force over the full `2^L × 2^L` matrix and shares
//! no code with the tensor-network engine, so the two can validate each other.

use num_complex::Complex64 as C64;

use crate::circuit::{MeasurementRecord, Model, SlotKind};
use crate::error::{Error, Result};
use crate::statevector::{model_initial_state, PureState};
use crate::symmetry::{check_length, projector_set, sym_gate, ChargeLabel, Mat4, PairOutcome};

/// Largest chain the oracle accepts.
pub const MAX_ORACLE_SITES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// Gates become the dephasing channel; start from the sector-mixed state.
    Channel,
    /// Gates act by unitary conjugation; start from the pure initial state and
    /// run the record's scramble circuit first.
    Unitary,
}

/// A dense operator, row-major; site 0 is the most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    len: usize,
    dim: usize,
    data: Vec<C64>,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn check_oracle(len: usize) -> Result<()> {
    check_length(len)?;
    if len > MAX_ORACLE_SITES {
        return Err(Error::TooLarge { len, max: MAX_ORACLE_SITES, what: "the dense oracle" });
    }
    Ok(())
}

impl DenseOperator {
    pub fn zeros(len: usize) -> Result<Self> {
        check_oracle(len)?;
        let dim = 1 << len;
        Ok(DenseOperator { len, dim, data: vec![zero(); dim * dim] })
    }

    pub fn identity(len: usize) -> Result<Self> {
        let mut m = Self::zeros(len)?;
        for i in 0..m.dim {
            m.data[i * m.dim + i] = C64::new(1.0, 0.0);
        }
        Ok(m)
    }

    /// `|ψ⟩⟨ψ|`, normalized.
    pub fn from_pure(state: &PureState) -> Result<Self> {
        let mut m = Self::zeros(state.len())?;
        let a = state.amplitudes();
        let n = state.norm_sqr();
        for i in 0..m.dim {
            for j in 0..m.dim {
                m.data[i * m.dim + j] = a[i] * a[j].conj() / n;
            }
        }
        Ok(m)
    }

    /// Maximally mixed state on the flip-even part of `label`'s charge sector, by enumeration.
    pub fn sector_mixed(label: ChargeLabel, len: usize) -> Result<Self> {
        let mut m = Self::zeros(len)?;
        let mask = m.dim - 1;
        let allowed = |i: usize| (i.count_ones() as i64 - (len / 2) as i64).abs() == label.charge_offset();
        let count = (0..m.dim).filter(|&i| allowed(i)).count() as f64;
        for j in (0..m.dim).filter(|&j| allowed(j)) {
            m.data[j * m.dim + j] += 1.0 / count;
            m.data[(j ^ mask) * m.dim + j] += 1.0 / count;
        }
        Ok(m)
    }

    pub fn from_real(len: usize, data: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(len)?;
        if data.len() != m.data.len() {
            return Err(Error::LengthMismatch(data.len(), m.data.len()));
        }
        m.data = data.iter().map(|&x| C64::new(x, 0.0)).collect();
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Real parts, with the largest imaginary part.
    pub fn to_real(&self) -> (Vec<f64>, f64) {
        let im = self.data.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
        (self.data.iter().map(|z| z.re).collect(), im)
    }

    fn quads(&self, bond: usize) -> Result<Vec<[usize; 4]>> {
        if bond == 0 || bond >= self.len {
            return Err(Error::BondOutOfRange { bond, len: self.len });
        }
        let hi = 1usize << (self.len - bond);
        let lo = hi >> 1;
        Ok((0..self.dim).filter(|i| i & (hi | lo) == 0).map(|b| [b, b | lo, b | hi, b | hi | lo]).collect())
    }

    /// `X ↦ A X` with `A` on a 1-based bond.
    pub fn left_mul(&mut self, bond: usize, a: &Mat4) -> Result<()> {
        let dim = self.dim;
        for q in self.quads(bond)? {
            for c in 0..dim {
                let v: [C64; 4] = std::array::from_fn(|k| self.data[q[k] * dim + c]);
                let w = a.apply(v);
                for k in 0..4 {
                    self.data[q[k] * dim + c] = w[k];
                }
            }
        }
        Ok(())
    }

    /// `X ↦ X B` with `B` on a 1-based bond.
    pub fn right_mul(&mut self, bond: usize, b: &Mat4) -> Result<()> {
        let dim = self.dim;
        for q in self.quads(bond)? {
            for r in 0..dim {
                let v: [C64; 4] = std::array::from_fn(|k| self.data[r * dim + q[k]]);
                for k in 0..4 {
                    self.data[r * dim + q[k]] = (0..4).map(|m| v[m] * b.0[m][k]).sum();
                }
            }
        }
        Ok(())
    }

    /// `X ↦ U X U†`.
    pub fn conjugate(&mut self, bond: usize, u: &Mat4) -> Result<()> {
        self.left_mul(bond, u)?;
        self.right_mul(bond, &u.adjoint())
    }

    /// `X ↦ P X P`.
    pub fn project(&mut self, bond: usize, outcome: PairOutcome) -> Result<()> {
        let p = *projector_set().get(outcome);
        self.left_mul(bond, &p)?;
        self.right_mul(bond, &p)
    }

    /// `X ↦ Σ_k P_k X P_k`.
    pub fn apply_channel(&mut self, bond: usize) -> Result<()> {
        let mut acc = Self::zeros(self.len)?;
        for o in PairOutcome::ALL {
            let mut branch = self.clone();
            branch.project(bond, o)?;
            acc.data.iter_mut().zip(&branch.data).for_each(|(a, b)| *a += b);
        }
        *self = acc;
        Ok(())
    }

    /// `X ↦ Π X Π` with `Π` the occupation projector of a 1-based site.
    pub fn project_site(&mut self, site: usize, occupied: bool) -> Result<()> {
        if site == 0 || site > self.len {
            return Err(Error::SiteOutOfRange { site, len: self.len });
        }
        let bit = 1usize << (self.len - site);
        let keep = |i: usize| ((i & bit) != 0) == occupied;
        let dim = self.dim;
        for i in 0..dim {
            for j in 0..dim {
                if !(keep(i) && keep(j)) {
                    self.data[i * dim + j] = zero();
                }
            }
        }
        Ok(())
    }

    /// `Tr(A† B)`.
    pub fn hs_inner(&self, other: &DenseOperator) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn hs_distance(&self, other: &DenseOperator) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Largest violation of `[X, N] = 0` and `[X, X^{⊗L}] = 0`.
    pub fn symmetry_residual(&self) -> f64 {
        let mask = self.dim - 1;
        let mut res: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i.count_ones() != j.count_ones() {
                    res = res.max(self.get(i, j).norm());
                }
                res = res.max((self.get(i, j ^ mask) - self.get(i ^ mask, j)).norm());
            }
        }
        res
    }

    /// `Tr(ρ ρ̂_x)/Tr(ρ²)` with `ρ̂_x = σ⁺_x σ⁻_0 ρ σ⁺_0 σ⁻_x`, sites 0-based.
    pub fn renyi2_corr(&self, site0: usize, x: usize) -> Result<f64> {
        let sx = site0 + x;
        if x == 0 || sx >= self.len {
            return Err(Error::SiteOutOfRange { site: sx, len: self.len });
        }
        let b0 = 1usize << (self.len - 1 - site0);
        let bx = 1usize << (self.len - 1 - sx);
        // σ⁺_x σ⁻_0 |i⟩ is |i ^ b0 ^ bx⟩ when site0 is occupied and site x is empty
        let hop = |i: usize| (i & b0 != 0 && i & bx == 0).then_some(i ^ b0 ^ bx);
        let dim = self.dim;
        let mut hat = vec![zero(); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                if let (Some(a), Some(b)) = (hop(i), hop(j)) {
                    hat[a * dim + b] = self.get(i, j);
                }
            }
        }
        let num: C64 = (0..dim * dim).map(|k| self.data[k].conj() * hat[k]).sum();
        let den = self.hs_inner(self);
        Ok((num / den).re)
    }

    /// Variance of the number of ones on the leftmost `ell` sites, normalized by the trace.
    pub fn charge_variance(&self, ell: usize) -> Result<f64> {
        if ell == 0 || ell > self.len {
            return Err(Error::SiteOutOfRange { site: ell, len: self.len });
        }
        let tr = self.trace().re;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..self.dim {
            let n = (i >> (self.len - ell)).count_ones() as f64;
            let w = self.get(i, i).re / tr;
            m1 += w * n;
            m2 += w * n * n;
        }
        Ok(m2 - m1 * m1)
    }
}

fn u1_gate_matrix(g: &crate::circuit::U1GateParams) -> Mat4 {
    let mut m = Mat4::zeros();
    m.0[0][0] = C64::from_polar(1.0, g.alpha);
    m.0[3][3] = C64::from_polar(1.0, g.beta);
    for a in 0..2 {
        for b in 0..2 {
            m.0[1 + a][1 + b] = g.block[a][b];
        }
    }
    m
}

fn apply_slot(rho: &mut DenseOperator, kind: &SlotKind, pos: usize, mode: OracleMode) -> Result<()> {
    match (*kind, mode) {
        (SlotKind::Gate(_), OracleMode::Channel) => rho.apply_channel(pos),
        (SlotKind::Gate(g), OracleMode::Unitary) => rho.conjugate(pos, &sym_gate(g)),
        (SlotKind::U1Gate(g), OracleMode::Unitary) => rho.conjugate(pos, &u1_gate_matrix(&g)),
        (SlotKind::Measure(Some(o)), _) => rho.project(pos, o),
        (SlotKind::SiteMeasure(Some(o)), OracleMode::Unitary) => rho.project_site(pos, o),
        (k, m) => Err(Error::InconsistentRecord(format!("slot {k:?} is not supported in {m:?} mode"))),
    }
}

/// `P(m | hypothesis)` by exact forward evolution of the full density matrix.
pub fn dense_oracle(record: &MeasurementRecord, hypothesis: ChargeLabel, mode: OracleMode) -> Result<f64> {
    check_oracle(record.len)?;
    let mut rho = match mode {
        OracleMode::Channel => {
            if record.model != Model::U1xZ2 {
                return Err(Error::InconsistentRecord("channel mode needs a u1xz2 record".into()));
            }
            DenseOperator::sector_mixed(hypothesis, record.len)?
        }
        OracleMode::Unitary => {
            let mut rho = DenseOperator::from_pure(&model_initial_state(record.model, hypothesis, record.len)?)?;
            for slot in record.scramble.slots() {
                apply_slot(&mut rho, &slot.kind, slot.pos, mode)?;
            }
            rho
        }
    };
    for slot in record.hybrid.slots() {
        apply_slot(&mut rho, &slot.kind, slot.pos, mode)?;
    }
    Ok(rho.trace().re)
}

/// The identity evolved through the record's hybrid slots in reverse, with
/// channels for gates and projections for measurements.
pub fn dense_dual_identity(record: &MeasurementRecord) -> Result<DenseOperator> {
    let mut rho = DenseOperator::identity(record.len)?;
    for slot in record.hybrid.slots().rev() {
        apply_slot(&mut rho, &slot.kind, slot.pos, OracleMode::Channel)?;
    }
    Ok(rho)
}

/// `|ψ_Q⟩⟨ψ_Q|` after `steps` brickwork layers of the dephasing channel.
pub fn dense_channel_scramble(label: ChargeLabel, len: usize, steps: usize) -> Result<DenseOperator> {
    let mut rho = DenseOperator::from_pure(&crate::symmetry::initial_state(label, len)?)?;
    for _ in 0..steps {
        for parity in [1, 0] {
            for bond in crate::circuit::half_step_bonds(len, parity) {
                rho.apply_channel(bond)?;
            }
        }
    }
    Ok(rho)
}

/// `P(m | N)` of a U(1) record under the pair-symmetrizing dynamics, by
/// evolving the full probability vector over `2^L` bitstrings.
pub fn dense_classical_likelihood(record: &MeasurementRecord, hypothesis: ChargeLabel) -> Result<f64> {
    check_oracle(record.len)?;
    if record.model != Model::U1 {
        return Err(Error::InconsistentRecord("classical oracle needs a u1 record".into()));
    }
    let len = record.len;
    let n = crate::u1::particle_number(hypothesis, len) as u32;
    let count = (0..1usize << len).filter(|i| i.count_ones() == n).count() as f64;
    let mut probs: Vec<f64> =
        (0..1usize << len).map(|i| if i.count_ones() == n { 1.0 / count } else { 0.0 }).collect();
    for slot in record.hybrid.slots() {
        match slot.kind {
            SlotKind::U1Gate(_) => {
                let (hi, lo) = (1usize << (len - slot.pos), 1usize << (len - slot.pos - 1));
                for i in 0..probs.len() {
                    if i & hi == 0 && i & lo != 0 {
                        let j = i ^ hi ^ lo;
                        let avg = 0.5 * (probs[i] + probs[j]);
                        probs[i] = avg;
                        probs[j] = avg;
                    }
                }
            }
            SlotKind::SiteMeasure(Some(o)) => {
                let bit = 1usize << (len - slot.pos);
                for (i, p) in probs.iter_mut().enumerate() {
                    if (i & bit != 0) != o {
                        *p = 0.0;
                    }
                }
            }
            k => return Err(Error::InconsistentRecord(format!("unexpected slot {k:?}"))),
        }
    }
    Ok(probs.iter().sum())
}

/// `Σ_s p_s p_{T s} / Σ_s p_s²` on a dense probability vector, where `T` moves
/// a particle from `site0 + x` to `site0` (0-based sites).
pub fn dense_classical_c2(len: usize, probs: &[f64], site0: usize, x: usize) -> Result<f64> {
    let sx = site0 + x;
    if x == 0 || sx >= len || probs.len() != 1 << len {
        return Err(Error::SiteOutOfRange { site: sx, len });
    }
    let (b0, bx) = (1usize << (len - 1 - site0), 1usize << (len - 1 - sx));
    let mut num = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if i & b0 == 0 && i & bx != 0 {
            num += p * probs[i ^ b0 ^ bx];
        }
    }
    let den: f64 = probs.iter().map(|p| p * p).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::{likelihood_exact, run_generation_with};

    #[test]
    fn unitary_mode_agrees_with_pure_state_replay() {
        for seed in 0..6 {
            let label = ChargeLabel::BOTH[seed as usize % 2];
            let (rec, _) = run_generation_with(label, 4, 0.5, seed, 16).unwrap();
            for hyp in ChargeLabel::BOTH {
                let exact = likelihood_exact(&rec, hyp).unwrap().exp();
                let oracle = dense_oracle(&rec, hyp, OracleMode::Unitary).unwrap();
                assert!((exact - oracle).abs() < 1e-12, "{exact} vs {oracle}");
            }
        }
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        for seed in 0..5 {
            let (rec, _) = run_generation_with(ChargeLabel::One, 6, 0.4, seed, 36).unwrap();
            for hyp in ChargeLabel::BOTH {
                let p = dense_oracle(&rec, hyp, OracleMode::Channel).unwrap();
                assert!((-1e-15..=1.0 + 1e-12).contains(&p));
            }
        }
    }

    #[test]
    fn no_measurements_means_certainty() {
        let (rec, _) = run_generation_with(ChargeLabel::ZeroPlus, 4, 0.0, 3, 16).unwrap();
        for mode in [OracleMode::Channel, OracleMode::Unitary] {
            assert!((dense_oracle(&rec, ChargeLabel::One, mode).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_long_for_oracle() {
        assert!(matches!(DenseOperator::identity(8), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn closed_form_correlators() {
        let len = 4;
        let mixed = DenseOperator::identity(len).unwrap();
        for x in 1..len {
            assert!((mixed.renyi2_corr(0, x).unwrap() - 0.25).abs() < 1e-14);
        }
        let mut vacuum = DenseOperator::zeros(len).unwrap();
        vacuum.data[0] = C64::new(1.0, 0.0);
        assert_eq!(vacuum.renyi2_corr(1, 2).unwrap(), 0.0);
        assert!(mixed.renyi2_corr(2, 2).is_err());
    }

    #[test]
    fn charge_variance_closed_forms() {
        let half = DenseOperator::sector_mixed(ChargeLabel::ZeroPlus, 4).unwrap();
        assert!(half.charge_variance(4).unwrap().abs() < 1e-14);
        // 6 half-filling strings: left pair holds 0, 1, 2 ones in 1, 4, 1 of them
        assert!((half.charge_variance(2).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn channel_preserves_strong_symmetry() {
        let (rec, _) = run_generation_with(ChargeLabel::One, 6, 0.5, 8, 36).unwrap();
        let mut rho = DenseOperator::sector_mixed(ChargeLabel::ZeroPlus, 6).unwrap();
        for slot in rec.hybrid.slots() {
            apply_slot(&mut rho, &slot.kind, slot.pos, OracleMode::Channel).unwrap();
            assert!(rho.symmetry_residual() < 1e-12);
        }
    }
}
