//! Vectorized density operators as matrix product states.
//!
//! Each site carries a row qubit `r` and a column qubit `c` combined into the
//! physical index `2r + c`, so an operator `X` becomes a vector with entries
//! `X[r₀r₁…, c₀c₁…]`. Every map in this module is real, so the engine works in
//! real arithmetic throughout.

use std::sync::OnceLock;

use crate::circuit::{MeasurementRecord, Model, SlotKind};
use crate::error::{Error, Result};
use crate::mps::{LocalOp, LogScalar, Mps, Tensor3, TruncationPolicy};
use crate::symmetry::{binomial, check_length, initial_state, projector_set, ChargeLabel, PairOutcome};

/// Vectorized identity on one site.
pub const TRACE_VEC: [f64; 4] = [1.0, 0.0, 0.0, 1.0];
/// Swaps the row and column qubit of a site: `2r + c ↦ 2c + r`.
pub const ROW_COL_SWAP: [usize; 4] = [0, 2, 1, 3];
/// Overlaps at or below this fraction of their Cauchy–Schwarz bound count as zero.
pub const NULL_OVERLAP: f64 = 1e-14;

type Real4 = [[f64; 4]; 4];

/// Superoperator of `X ↦ A X B` on two sites.
pub fn two_site_superop(a: &Real4, b: &Real4) -> LocalOp {
    let mut g = vec![0.0; 256];
    for out in 0..16 {
        let (s1, s2) = (out / 4, out % 4);
        let (r1, c1, r2, c2) = (s1 / 2, s1 % 2, s2 / 2, s2 % 2);
        for inp in 0..16 {
            let (t1, t2) = (inp / 4, inp % 4);
            let (r1p, c1p, r2p, c2p) = (t1 / 2, t1 % 2, t2 / 2, t2 % 2);
            g[out * 16 + inp] = a[2 * r1 + r2][2 * r1p + r2p] * b[2 * c1p + c2p][2 * c1 + c2];
        }
    }
    LocalOp::from_dense(16, &g)
}

/// Superoperator of `X ↦ a X b` on one site.
pub fn one_site_superop(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> LocalOp {
    let mut g = vec![0.0; 16];
    for out in 0..4 {
        let (r, c) = (out / 2, out % 2);
        for inp in 0..4 {
            let (rp, cp) = (inp / 2, inp % 2);
            g[out * 4 + inp] = a[r][rp] * b[cp][c];
        }
    }
    LocalOp::from_dense(4, &g)
}

fn real_projector(outcome: PairOutcome) -> Real4 {
    projector_set().get(outcome).to_real()
}

/// `X ↦ P_m X P_m`.
pub fn measurement_superop(outcome: PairOutcome) -> &'static LocalOp {
    static OPS: OnceLock<[LocalOp; 3]> = OnceLock::new();
    let ops = OPS.get_or_init(|| {
        PairOutcome::ALL.map(|o| {
            let p = real_projector(o);
            two_site_superop(&p, &p)
        })
    });
    &ops[outcome.index()]
}

/// The dephasing channel `X ↦ Σ_k P_k X P_k`.
pub fn channel_superop() -> &'static LocalOp {
    static OP: OnceLock<LocalOp> = OnceLock::new();
    OP.get_or_init(|| {
        let mut g = vec![0.0; 256];
        for o in PairOutcome::ALL {
            for (x, y) in g.iter_mut().zip(measurement_superop(o).to_dense()) {
                *x += y;
            }
        }
        LocalOp::from_dense(16, &g)
    })
}

/// `Tr(P_m ·)` as a two-site functional: `(tr ⊗ tr)ᵀ · (P_m ⊗ P_m)`.
fn outcome_functionals() -> &'static Vec<Vec<f64>> {
    static W: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    W.get_or_init(|| {
        PairOutcome::ALL
            .iter()
            .map(|&o| {
                let mut w = vec![0.0; 16];
                for &(out, inp, v) in measurement_superop(o).entries() {
                    w[inp] += TRACE_VEC[out / 4] * TRACE_VEC[out % 4] * v;
                }
                w
            })
            .collect()
    })
}

fn check_bond(bond: usize, len: usize) -> Result<usize> {
    if bond == 0 || bond >= len {
        return Err(Error::BondOutOfRange { bond, len });
    }
    Ok(bond - 1)
}

/// A vectorized density operator on `L` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMps {
    mps: Mps,
}

impl DensityMps {
    pub fn from_mps(mps: Mps) -> Result<Self> {
        if mps.phys_dim() != 4 {
            return Err(Error::LengthMismatch(mps.phys_dim(), 4));
        }
        Ok(DensityMps { mps })
    }

    pub fn mps(&self) -> &Mps {
        &self.mps
    }

    pub fn len(&self) -> usize {
        self.mps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mps.is_empty()
    }

    pub fn is_null(&self) -> bool {
        self.mps.is_null()
    }

    pub fn log_scale(&self) -> f64 {
        self.mps.log_scale()
    }

    pub fn max_bond(&self) -> usize {
        self.mps.max_bond()
    }

    pub fn peak_bond(&self) -> usize {
        self.mps.peak_bond()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.mps.bond_dims()
    }

    /// The identity operator.
    pub fn identity(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidLength(len));
        }
        let mps = Mps::product(4, &vec![TRACE_VEC.to_vec(); len])?;
        Ok(DensityMps { mps })
    }

    /// `|ψ_Q⟩⟨ψ_Q|` for the pair-product initial state of `label`.
    pub fn initial_projector(label: ChargeLabel, len: usize) -> Result<Self> {
        check_length(len)?;
        let psi = initial_state(label, 2)?;
        let zp = initial_state(ChargeLabel::ZeroPlus, 2)?;
        let mut tensors = Vec::with_capacity(len);
        for pair in 0..len / 2 {
            let amps: Vec<f64> = if pair == 0 { &psi } else { &zp }.amplitudes().iter().map(|a| a.re).collect();
            let mut rho = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    rho[i][j] = amps[i] * amps[j];
                }
            }
            let (a, b) = split_pair_operator(&rho);
            tensors.push(a);
            tensors.push(b);
        }
        let mps = Mps::from_tensors(tensors, 0.0, &TruncationPolicy::default())?;
        Ok(DensityMps { mps })
    }

    /// The maximally mixed state on the parity-even part of the charge sector of `label`.
    ///
    /// With `S` the allowed numbers of ones, this is `(Π_S + X^{⊗L} Π_S) / Tr Π_S`,
    /// assembled as a direct sum of two count-tracking operators and compressed.
    pub fn sector_mixed(label: ChargeLabel, len: usize) -> Result<Self> {
        check_length(len)?;
        let half = len / 2;
        let counts: Vec<usize> = match label {
            ChargeLabel::ZeroPlus => vec![half],
            ChargeLabel::One => vec![half - 1, half + 1],
        };
        let dim: u128 = counts.iter().map(|&n| binomial(len as u64, n as u64)).sum();
        let (lo, hi) = (counts[0], *counts.last().unwrap());
        // reachable running counts after `j` sites
        let range = |j: usize| (lo.saturating_sub(len - j))..=(j.min(hi));
        let mut tensors = Vec::with_capacity(len);
        for j in 0..len {
            let left: Vec<usize> = range(j).collect();
            let right: Vec<usize> = range(j + 1).collect();
            let (nl, nr) = (left.len(), right.len());
            let (tl, tr) = if j == 0 { (1, 2 * nr) } else if j + 1 == len { (2 * nl, 1) } else { (2 * nl, 2 * nr) };
            let mut t = Tensor3::zeros(tl, 4, tr);
            for (a, &n) in left.iter().enumerate() {
                for (b, &m) in right.iter().enumerate() {
                    let block = |branch: usize, s: usize| -> Option<(usize, usize, usize)> {
                        let row = if j == 0 { 0 } else { branch * nl + a };
                        let col = if j + 1 == len { 0 } else { branch * nr + b };
                        if j + 1 == len && !counts.contains(&m) {
                            return None;
                        }
                        Some((row, s, col))
                    };
                    // diagonal branch: |0⟩⟨0| keeps the count, |1⟩⟨1| increments it
                    // flipped branch: |1⟩⟨0| keeps the count, |0⟩⟨1| increments it
                    let pairs: [(usize, usize); 2] = if m == n { [(0, 0), (1, 2)] } else if m == n + 1 { [(0, 3), (1, 1)] } else { continue };
                    for (branch, s) in pairs {
                        if let Some((row, s, col)) = block(branch, s) {
                            t.set(row, s, col, 1.0);
                        }
                    }
                }
            }
            tensors.push(t);
        }
        let ln_dim = (dim as f64).ln();
        let mps = Mps::from_tensors(tensors, -ln_dim, &TruncationPolicy::default())?;
        Ok(DensityMps { mps })
    }

    /// Apply the dephasing channel on a 1-based bond.
    pub fn apply_channel(&mut self, bond: usize, policy: &TruncationPolicy) -> Result<()> {
        let j = check_bond(bond, self.len())?;
        self.mps.apply_two_site(j, channel_superop(), policy)
    }

    /// Apply `X ↦ P_m X P_m` on a 1-based bond. The trace drops to the Born weight.
    pub fn apply_forced_measurement(
        &mut self,
        bond: usize,
        outcome: PairOutcome,
        policy: &TruncationPolicy,
    ) -> Result<()> {
        let j = check_bond(bond, self.len())?;
        self.mps.apply_two_site(j, measurement_superop(outcome), policy)
    }

    /// Apply an arbitrary two-site superoperator on a 1-based bond.
    pub fn apply_superop(&mut self, bond: usize, op: &LocalOp, policy: &TruncationPolicy) -> Result<()> {
        let j = check_bond(bond, self.len())?;
        self.mps.apply_two_site(j, op, policy)
    }

    /// Normalized weights of the outcomes `(1, s, a)` on a 1-based bond.
    pub fn born_probs_bond(&self, bond: usize) -> Result<[f64; 3]> {
        let j = check_bond(bond, self.len())?;
        let w = self.mps.contract_vectors_pair(|_| &TRACE_VEC[..], j, outcome_functionals())?;
        let total = self.trace();
        if !(total.sign > 0.0) {
            return Err(Error::NonPositiveTrace(total.value()));
        }
        let mut p = [0.0; 3];
        for (pk, wk) in p.iter_mut().zip(&w) {
            *pk = (wk.sign * (wk.ln_abs - total.ln_abs).exp()).max(0.0);
        }
        let sum: f64 = p.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::NonPositiveTrace(sum));
        }
        p.iter_mut().for_each(|x| *x /= sum);
        Ok(p)
    }

    pub fn trace(&self) -> LogScalar {
        self.mps.contract_vectors(|_| &TRACE_VEC[..])
    }

    /// `Tr(a† b)`; real because both operators are real.
    pub fn hs_inner(&self, other: &DensityMps) -> Result<LogScalar> {
        self.mps.inner(&other.mps, None)
    }

    /// `Tr(a b)`.
    pub fn trace_against(&self, other: &DensityMps) -> Result<LogScalar> {
        self.mps.inner(&other.mps, Some(&ROW_COL_SWAP))
    }

    /// `ln Tr(a b)`, `-inf` when the overlap is zero to working precision.
    pub fn ln_trace_against(&self, other: &DensityMps) -> Result<f64> {
        let v = self.trace_against(other)?;
        // |Tr(ab)| ≤ ‖a‖ ‖b‖, and the norms are exactly the stripped log scales
        let bound = self.log_scale() + other.log_scale();
        if v.sign <= 0.0 || v.ln_abs <= bound + NULL_OVERLAP.ln() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(v.ln_abs)
    }

    /// Hilbert–Schmidt distance `‖a − b‖₂`, computed from the canonicalized
    /// difference so that it is accurate far below `sqrt(ε)·‖a‖`.
    pub fn hs_distance(&self, other: &DensityMps) -> Result<f64> {
        let diff = Mps::linear_combination(&self.mps, 1.0, &other.mps, -1.0)?;
        Ok(if diff.is_null() { 0.0 } else { diff.log_scale().exp() })
    }

    /// `1 − Tr(X Xᵀ)/Tr(X X)`-style defect: zero iff the operator is symmetric
    /// (Hermitian, being real). Quadratic in the deviation.
    pub fn hermiticity_defect(&self) -> Result<f64> {
        let swapped = self.mps.inner(&self.mps, Some(&ROW_COL_SWAP))?;
        let norm = self.mps.inner(&self.mps, None)?;
        if norm.sign == 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 - swapped.sign * (swapped.ln_abs - norm.ln_abs).exp())
    }

    /// Dense `2^L × 2^L` matrix, row-major. Exponential in length.
    pub fn to_dense_matrix(&self) -> Vec<f64> {
        let len = self.len();
        let dim = 1usize << len;
        let vec = self.mps.to_dense();
        let mut out = vec![0.0; dim * dim];
        for (idx, x) in vec.into_iter().enumerate() {
            let (mut row, mut col) = (0usize, 0usize);
            for site in 0..len {
                let s = (idx >> (2 * (len - 1 - site))) & 3;
                row = (row << 1) | (s >> 1);
                col = (col << 1) | (s & 1);
            }
            out[row * dim + col] = x;
        }
        out
    }

    /// `Tr(ρ A_x ρ B_x)`-type quantities: `Tr(ρ · Φ_0 Φ_x(ρ))` for one-site
    /// superoperators, normalized by `Tr(ρ²)`, for every `x > site0`.
    pub fn two_point_superop(&self, site0: usize, op0: &LocalOp, opx: &LocalOp) -> Result<Vec<f64>> {
        self.mps.two_point(site0, op0, opx)
    }

    /// Expectation values `Tr(ρ D)` for a product of one-site diagonal weights.
    pub fn trace_with(&self, site_vecs: &[Vec<f64>]) -> Result<LogScalar> {
        if site_vecs.len() != self.len() {
            return Err(Error::LengthMismatch(site_vecs.len(), self.len()));
        }
        Ok(self.mps.contract_vectors(|j| &site_vecs[j][..]))
    }

    pub fn write_checkpoint<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.mps.write_checkpoint(w)
    }

    pub fn read_checkpoint<R: std::io::Read>(r: R) -> Result<Self> {
        DensityMps::from_mps(Mps::read_checkpoint(r)?)
    }
}

/// Split a two-site operator (rows `2r₁+r₂`, columns `2c₁+c₂`) into two
/// site tensors by SVD.
fn split_pair_operator(op: &Real4) -> (Tensor3, Tensor3) {
    // regroup to (s₁, s₂) with s = 2r + c
    let mut m = vec![0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            let (r1, r2, c1, c2) = (r / 2, r % 2, c / 2, c % 2);
            m[(2 * r1 + c1) * 4 + 2 * r2 + c2] = op[r][c];
        }
    }
    let (u, s, vt) = crate::mps::linalg::svd_rm(&m, 4, 4).expect("4x4 SVD");
    let k = s.iter().filter(|&&x| x > 1e-14 * s[0]).count().max(1);
    let mut a = Tensor3::zeros(1, 4, k);
    let mut b = Tensor3::zeros(k, 4, 1);
    for i in 0..4 {
        for x in 0..k {
            a.set(0, i, x, u[i * 4 + x] * s[x]);
            b.set(x, i, 0, vt[x * 4 + i]);
        }
    }
    (a, b)
}

fn require_u1xz2(record: &MeasurementRecord) -> Result<()> {
    if record.model != Model::U1xZ2 {
        return Err(Error::InconsistentRecord(format!(
            "the noisy decoder needs a {} record, got {}",
            Model::U1xZ2.tag(),
            record.model.tag()
        )));
    }
    Ok(())
}

/// Evolve the identity through the record's hybrid slots in reverse order,
/// with every gate replaced by the dephasing channel and every measurement
/// forced to its recorded outcome. All maps are self-adjoint, so this is the
/// adjoint of the forward noisy evolution applied to the identity.
pub fn dual_evolve_identity(record: &MeasurementRecord, policy: &TruncationPolicy) -> Result<DensityMps> {
    require_u1xz2(record)?;
    let mut dm = DensityMps::identity(record.len)?;
    for slot in record.hybrid.slots().rev() {
        match slot.kind {
            SlotKind::Gate(_) => dm.apply_channel(slot.pos, policy)?,
            SlotKind::Measure(Some(o)) => dm.apply_forced_measurement(slot.pos, o, policy)?,
            _ => return Err(Error::InconsistentRecord(format!("unexpected slot {:?}", slot.kind))),
        }
        if dm.is_null() {
            break;
        }
    }
    Ok(dm)
}

/// `ln P(m | hypothesis)` under the fully dephased dynamics.
pub fn likelihood_noisy(
    record: &MeasurementRecord,
    hypothesis: ChargeLabel,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let dual = dual_evolve_identity(record, policy)?;
    dual.ln_trace_against(&DensityMps::sector_mixed(hypothesis, record.len)?)
}

/// Both hypotheses' noisy log likelihoods from one dual evolution, in
/// `ChargeLabel::BOTH` order, plus the peak bond dimension reached.
pub fn likelihoods_noisy(record: &MeasurementRecord, policy: &TruncationPolicy) -> Result<([f64; 2], usize)> {
    let dual = dual_evolve_identity(record, policy)?;
    let mut out = [f64::NEG_INFINITY; 2];
    for (o, label) in out.iter_mut().zip(ChargeLabel::BOTH) {
        *o = dual.ln_trace_against(&DensityMps::sector_mixed(label, record.len)?)?;
    }
    Ok((out, dual.peak_bond()))
}

/// Peak bond dimension of the dual evolution of a record.
pub fn peak_bond_of_run(record: &MeasurementRecord, policy: &TruncationPolicy) -> Result<usize> {
    Ok(dual_evolve_identity(record, policy)?.peak_bond())
}

/// Channel-only brickwork of `steps` layers applied to `dm`.
pub fn channel_scramble(dm: &mut DensityMps, steps: usize, policy: &TruncationPolicy) -> Result<()> {
    let len = dm.len();
    for _ in 0..steps {
        for parity in [1, 0] {
            for bond in crate::circuit::half_step_bonds(len, parity) {
                dm.apply_channel(bond, policy)?;
            }
        }
    }
    Ok(())
}

/// A trajectory of the dephased dynamics with Born-sampled outcomes.
#[derive(Clone, Debug)]
pub struct NoisyTrajectory {
    /// Outcomes as a record. The gate angles are drawn but play no role; the
    /// scramble stage is empty because the start is already the sector-mixed state.
    pub record: MeasurementRecord,
    /// Final conditional state, unnormalized: its trace is `p(m)`.
    pub state: DensityMps,
    /// Peak bond dimension of the forward run.
    pub peak_bond: usize,
}

/// Run `steps` layers of the dephased brickwork from `σ_label`, Born-sampling
/// every measurement from the current state.
///
/// Uses `stream(seed, 0)`: the hybrid schedule first, then one uniform per measurement.
pub fn sample_noisy_trajectory(
    label: ChargeLabel,
    len: usize,
    p: f64,
    seed: u64,
    steps: usize,
    policy: &TruncationPolicy,
) -> Result<NoisyTrajectory> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, 0);
    let mut hybrid = crate::circuit::sample_schedule(len, p, steps, &mut rng)?;
    let mut dm = DensityMps::sector_mixed(label, len)?;
    dm.mps.reset_peak();
    let mut log_weight = 0.0;
    for slot in hybrid.slots_mut() {
        match &mut slot.kind {
            SlotKind::Gate(_) => dm.apply_channel(slot.pos, policy)?,
            SlotKind::Measure(outcome) => {
                let probs = dm.born_probs_bond(slot.pos)?;
                let u: f64 = rng.random();
                let mut k = 0;
                let mut acc = 0.0;
                for (i, &pi) in probs.iter().enumerate() {
                    if pi > 0.0 {
                        k = i;
                        acc += pi;
                        if u < acc {
                            break;
                        }
                    }
                }
                let o = PairOutcome::ALL[k];
                log_weight += probs[k].ln();
                dm.apply_forced_measurement(slot.pos, o, policy)?;
                *outcome = Some(o);
            }
            _ => unreachable!("sample_schedule only emits gates and measurements"),
        }
    }
    let record = MeasurementRecord {
        version: crate::circuit::FORMAT_VERSION,
        model: Model::U1xZ2,
        len,
        p,
        seed,
        label,
        scramble_steps: 0,
        scramble: crate::circuit::Schedule::empty(len),
        hybrid,
        log_weight: log_weight.min(0.0),
    };
    let peak_bond = dm.peak_bond();
    Ok(NoisyTrajectory { record, state: dm, peak_bond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Schedule, Slot};
    use crate::rng::stream;
    use crate::statevector::run_generation_with;
    use proptest::prelude::*;
    use rand::Rng;

    fn mat_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    fn random_channel_state(len: usize, seed: u64, p: f64) -> DensityMps {
        let policy = TruncationPolicy::default();
        let mut rng = stream(seed, 7);
        let mut dm = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, len).unwrap();
        for _ in 0..len {
            for parity in [1, 0] {
                for bond in crate::circuit::half_step_bonds(len, parity) {
                    if rng.random::<f64>() < p {
                        let probs = dm.born_probs_bond(bond).unwrap();
                        let u: f64 = rng.random();
                        let k = if u < probs[0] { 0 } else if u < probs[0] + probs[1] { 1 } else { 2 };
                        dm.apply_forced_measurement(bond, PairOutcome::ALL[k], &policy).unwrap();
                    } else {
                        dm.apply_channel(bond, &policy).unwrap();
                    }
                }
            }
        }
        dm
    }

    #[test]
    fn identity_basics() {
        for len in [2, 5, 8] {
            let id = DensityMps::identity(len).unwrap();
            assert!((id.trace().value() - 2f64.powi(len as i32)).abs() < 1e-9);
            assert_eq!(id.max_bond(), 1);
            assert!((id.hs_inner(&id).unwrap().value() - 2f64.powi(len as i32)).abs() < 1e-9);
        }
    }

    #[test]
    fn sector_mixed_two_sites() {
        let zp = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, 2).unwrap().to_dense_matrix();
        let expected_zp = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(mat_close(&zp, &expected_zp, 1e-14));
        let one = DensityMps::sector_mixed(ChargeLabel::One, 2).unwrap().to_dense_matrix();
        let expected_one = [0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.5];
        assert!(mat_close(&one, &expected_one, 1e-14));
    }

    #[test]
    fn sector_mixed_matches_enumeration() {
        for len in [4usize, 6] {
            let dim = 1usize << len;
            let mask = dim - 1;
            for label in ChargeLabel::BOTH {
                let dm = DensityMps::sector_mixed(label, len).unwrap();
                assert!((dm.trace().value() - 1.0).abs() < 1e-12);
                assert!(dm.max_bond() <= 2 * (len / 2 + 1));
                let m = dm.to_dense_matrix();
                let allowed = |i: usize| {
                    let q = i.count_ones() as i64 - (len / 2) as i64;
                    q.abs() == label.charge_offset()
                };
                let norm = (0..dim).filter(|&i| allowed(i)).count() as f64;
                for i in 0..dim {
                    for j in 0..dim {
                        let expected = if allowed(j) && (i == j || i == j ^ mask) { 1.0 / norm } else { 0.0 };
                        assert!((m[i * dim + j] - expected).abs() < 1e-12, "L={len} {label} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn channel_is_trace_preserving_and_idempotent() {
        let policy = TruncationPolicy::default();
        let dm = random_channel_state(6, 3, 0.4);
        let before = dm.trace().value();
        let mut once = dm.clone();
        once.apply_channel(3, &policy).unwrap();
        assert!((once.trace().value() - before).abs() < 1e-10);
        let mut twice = once.clone();
        twice.apply_channel(3, &policy).unwrap();
        assert!(once.hs_distance(&twice).unwrap() < 1e-10);
    }

    #[test]
    fn channel_fixes_pair_singlet() {
        let policy = TruncationPolicy::default();
        let s = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, 2).unwrap();
        let mut t = s.clone();
        t.apply_channel(1, &policy).unwrap();
        assert!(s.hs_distance(&t).unwrap() < 1e-14);
    }

    #[test]
    fn forced_measurements_on_singlet() {
        let policy = TruncationPolicy::default();
        let s = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, 2).unwrap();
        let mut kept = s.clone();
        kept.apply_forced_measurement(1, PairOutcome::S, &policy).unwrap();
        assert!((kept.trace().value() - 1.0).abs() < 1e-14);
        let mut gone = s.clone();
        gone.apply_forced_measurement(1, PairOutcome::A, &policy).unwrap();
        assert!(gone.is_null());
        assert_eq!(gone.trace().value(), 0.0);
    }

    #[test]
    fn outcome_traces_sum_to_parent() {
        let policy = TruncationPolicy::default();
        let dm = random_channel_state(6, 11, 0.3);
        let parent = dm.trace().value();
        for bond in 1..6 {
            let mut total = 0.0;
            let probs = dm.born_probs_bond(bond).unwrap();
            for (k, o) in PairOutcome::ALL.iter().enumerate() {
                let mut child = dm.clone();
                child.apply_forced_measurement(bond, *o, &policy).unwrap();
                let t = child.trace().value();
                assert!((t / parent - probs[k]).abs() < 1e-10);
                total += t;
            }
            assert!((total - parent).abs() < 1e-10 * parent.abs());
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn born_probs_need_positive_trace() {
        let mut dm = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, 2).unwrap();
        dm.apply_forced_measurement(1, PairOutcome::One, &TruncationPolicy::default()).unwrap();
        assert!(matches!(dm.born_probs_bond(1), Err(Error::NonPositiveTrace(_))));
        assert!(matches!(dm.born_probs_bond(2), Err(Error::BondOutOfRange { .. })));
    }

    #[test]
    fn hs_inner_is_nonnegative_and_lengths_checked() {
        let dm = random_channel_state(4, 5, 0.5);
        assert!(dm.hs_inner(&dm).unwrap().sign > 0.0);
        let other = DensityMps::identity(6).unwrap();
        assert!(matches!(dm.hs_inner(&other), Err(Error::LengthMismatch(4, 6))));
    }

    fn record_with(len: usize, slots: Vec<Vec<Slot>>) -> MeasurementRecord {
        let (mut rec, _) = run_generation_with(ChargeLabel::ZeroPlus, len, 0.0, 1, 0).unwrap();
        rec.hybrid = Schedule { len, layers: vec![slots] };
        rec
    }

    #[test]
    fn dual_evolution_trivial_cases() {
        let policy = TruncationPolicy::default();
        let (rec, _) = run_generation_with(ChargeLabel::ZeroPlus, 4, 0.0, 1, 0).unwrap();
        let empty = MeasurementRecord { hybrid: Schedule::empty(4), ..rec.clone() };
        let dual = dual_evolve_identity(&empty, &policy).unwrap();
        assert!(dual.hs_distance(&DensityMps::identity(4).unwrap()).unwrap() < 1e-12);
        // zero measurement slots: probability one
        for label in ChargeLabel::BOTH {
            assert!(likelihood_noisy(&rec, label, &policy).unwrap().abs() < 1e-12);
        }

        let one = record_with(2, vec![vec![Slot { pos: 1, kind: SlotKind::Measure(Some(PairOutcome::One)) }], vec![]]);
        let dual = dual_evolve_identity(&one, &policy).unwrap();
        assert!((dual.trace().value() - 2.0).abs() < 1e-14);
        // |00⟩⟨00| + |11⟩⟨11| has operator Schmidt rank two
        assert_eq!(dual.peak_bond(), 2);
    }

    #[test]
    fn final_slot_completeness() {
        let policy = TruncationPolicy::default();
        let (rec, _) = run_generation_with(ChargeLabel::One, 6, 0.5, 42, 36).unwrap();
        let with_final = |kind: SlotKind| {
            let mut r = rec.clone();
            let slot = r.hybrid.layers.last_mut().unwrap().last_mut().unwrap().last_mut().unwrap();
            slot.kind = kind;
            r
        };
        let parent = with_final(SlotKind::Gate(crate::symmetry::GateParams::new(0.3, 1.1)));
        for label in ChargeLabel::BOTH {
            let parent_p = likelihood_noisy(&parent, label, &policy).unwrap().exp();
            let total: f64 = PairOutcome::ALL
                .iter()
                .map(|&o| likelihood_noisy(&with_final(SlotKind::Measure(Some(o))), label, &policy).unwrap().exp())
                .sum();
            assert!((total - parent_p).abs() < 1e-9, "{total} vs {parent_p}");
        }
        let mut u1 = rec.clone();
        u1.model = Model::U1;
        assert!(dual_evolve_identity(&u1, &policy).is_err());
    }

    #[test]
    fn dual_state_is_hermitian() {
        let policy = TruncationPolicy::default();
        let (rec, _) = run_generation_with(ChargeLabel::ZeroPlus, 6, 0.5, 9, 36).unwrap();
        let dual = dual_evolve_identity(&rec, &policy).unwrap();
        let m = dual.to_dense_matrix();
        let dim = 64;
        let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..dim {
            for j in 0..dim {
                assert!((m[i * dim + j] - m[j * dim + i]).abs() < 1e-10 * scale);
            }
        }
        assert!(dual.hermiticity_defect().unwrap().abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dm = random_channel_state(6, 8, 0.3);
        let mut buf = Vec::new();
        dm.write_checkpoint(&mut buf).unwrap();
        assert_eq!(DensityMps::read_checkpoint(&buf[..]).unwrap(), dm);
    }

    #[test]
    fn initial_projector_is_pure_state() {
        for label in ChargeLabel::BOTH {
            let dm = DensityMps::initial_projector(label, 6).unwrap();
            let psi = initial_state(label, 6).unwrap();
            let m = dm.to_dense_matrix();
            let a = psi.amplitudes();
            for i in 0..64 {
                for j in 0..64 {
                    assert!((m[i * 64 + j] - a[i].re * a[j].re).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn noisy_trajectories_are_self_consistent() {
        let policy = TruncationPolicy::default();
        for seed in 0..4 {
            let traj = sample_noisy_trajectory(ChargeLabel::ZeroPlus, 6, 0.4, seed, 6, &policy).unwrap();
            traj.record.validate().unwrap();
            let tr = traj.state.trace();
            assert!((tr.ln_abs - traj.record.log_weight).abs() < 1e-9);
            // the dual evolution sees the same probability
            let ll = likelihood_noisy(&traj.record, ChargeLabel::ZeroPlus, &policy).unwrap();
            assert!((ll - traj.record.log_weight).abs() < 1e-9);
            let again = sample_noisy_trajectory(ChargeLabel::ZeroPlus, 6, 0.4, seed, 6, &policy).unwrap();
            assert_eq!(again.record, traj.record);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn channel_layers_preserve_trace(seed in 0u64..500) {
            let policy = TruncationPolicy::default();
            let mut dm = random_channel_state(6, seed, 0.3);
            let t0 = dm.trace().value();
            channel_scramble(&mut dm, 1, &policy).unwrap();
            prop_assert!((dm.trace().value() - t0).abs() < 1e-10 * t0.abs().max(1.0));
        }

        #[test]
        fn channel_is_idempotent_on_random_states(seed in 0u64..500, bond in 1usize..6) {
            let policy = TruncationPolicy::default();
            let mut once = random_channel_state(6, seed, 0.5);
            once.apply_channel(bond, &policy).unwrap();
            let mut twice = once.clone();
            twice.apply_channel(bond, &policy).unwrap();
            prop_assert!(once.hs_distance(&twice).unwrap() < 1e-10);
        }
    }
}
