//! Exact dense pure-state simulation.
//!
//! Used to generate Born-sampled records and, by forcing the recorded
//! outcomes, as the optimal decoder's likelihood backend.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::circuit::{
    sample_schedule, scramble_schedule_steps, MeasurementRecord, Model, Schedule, Slot, SlotKind, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::symmetry::{check_length, initial_state, sym_gate, ChargeLabel, GateParams, Mat4, PairOutcome};
use crate::u1;

/// Largest chain the dense simulator accepts.
pub const MAX_DENSE_SITES: usize = 24;

/// Below this the three measurement probabilities signal a corrupt state.
pub const CORRUPT_PROBABILITY: f64 = 1e-15;

/// Forced weights at or below this are treated as exactly zero. Rounding
/// residue of an orthogonal projection on a normalized state is O(1e-32).
pub const NULL_WEIGHT: f64 = 1e-24;

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    len: usize,
    amps: Vec<C64>,
    /// Sum of `ln` of every projection weight stripped so far; `-inf` once null.
    log_norm: f64,
}

impl PureState {
    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<C64>) -> Self {
        assert!(amps.len().is_power_of_two() && amps.len() >= 2);
        let len = amps.len().trailing_zeros() as usize;
        PureState { len, amps, log_norm: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn is_null(&self) -> bool {
        self.log_norm == f64::NEG_INFINITY
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨N⟩ − L/2` with `N` the number of ones.
    pub fn charge_expectation(&self) -> f64 {
        let n: f64 = self.amps.iter().enumerate().map(|(i, a)| a.norm_sqr() * i.count_ones() as f64).sum();
        n / self.norm_sqr() - (self.len / 2) as f64
    }

    fn bond_bits(&self, bond: usize) -> Result<(usize, usize)> {
        if bond == 0 || bond >= self.len {
            return Err(Error::BondOutOfRange { bond, len: self.len });
        }
        let hi = 1usize << (self.len - bond);
        Ok((hi, hi >> 1))
    }

    fn site_bit(&self, site: usize) -> Result<usize> {
        if site == 0 || site > self.len {
            return Err(Error::SiteOutOfRange { site, len: self.len });
        }
        Ok(1usize << (self.len - site))
    }

    /// Calls `f(i00, i01, i10, i11)` for every amplitude quadruple of a bond.
    fn for_each_quad(&self, bond: usize, mut f: impl FnMut(usize, usize, usize, usize)) -> Result<()> {
        let (hi, lo) = self.bond_bits(bond)?;
        let block = hi << 1;
        for outer in (0..self.amps.len()).step_by(block) {
            for base in outer..outer + lo {
                f(base, base + lo, base + hi, base + hi + lo);
            }
        }
        Ok(())
    }

    /// Apply an arbitrary two-site matrix on `bond`.
    pub fn apply_mat4(&mut self, bond: usize, m: &Mat4) -> Result<()> {
        let (hi, lo) = self.bond_bits(bond)?;
        let block = hi << 1;
        let amps = &mut self.amps;
        for outer in (0..amps.len()).step_by(block) {
            for base in outer..outer + lo {
                let idx = [base, base + lo, base + hi, base + hi + lo];
                let v = m.apply(idx.map(|i| amps[i]));
                for (k, &i) in idx.iter().enumerate() {
                    amps[i] = v[k];
                }
            }
        }
        Ok(())
    }

    /// Symmetric gate on `bond`; only the `{01, 10}` block is touched.
    pub fn apply_gate(&mut self, bond: usize, params: GateParams) -> Result<()> {
        let es = C64::from_polar(1.0, params.phi);
        let ea = C64::from_polar(1.0, params.theta);
        let diag = (es + ea) * 0.5;
        let off = (es - ea) * 0.5;
        self.apply_mid_block(bond, [[diag, off], [off, diag]], C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    /// Phases on `|00⟩`, `|11⟩` and a 2×2 block on `(|01⟩, |10⟩)`.
    pub fn apply_mid_block(&mut self, bond: usize, block: [[C64; 2]; 2], ph00: C64, ph11: C64) -> Result<()> {
        let (hi, lo) = self.bond_bits(bond)?;
        let step = hi << 1;
        let trivial = ph00 == C64::new(1.0, 0.0) && ph11 == C64::new(1.0, 0.0);
        let amps = &mut self.amps;
        for outer in (0..amps.len()).step_by(step) {
            for base in outer..outer + lo {
                let (i01, i10) = (base + lo, base + hi);
                let (a, b) = (amps[i01], amps[i10]);
                amps[i01] = block[0][0] * a + block[0][1] * b;
                amps[i10] = block[1][0] * a + block[1][1] * b;
                if !trivial {
                    amps[base] *= ph00;
                    amps[base + hi + lo] *= ph11;
                }
            }
        }
        Ok(())
    }

    /// Born probabilities `(⟨P¹⟩, ⟨Pˢ⟩, ⟨Pᵃ⟩)` on `bond`, assuming unit norm.
    pub fn bond_probabilities(&self, bond: usize) -> Result<[f64; 3]> {
        let mut w = [0.0; 3];
        let amps = &self.amps;
        self.for_each_quad(bond, |i00, i01, i10, i11| {
            w[0] += amps[i00].norm_sqr() + amps[i11].norm_sqr();
            w[1] += 0.5 * (amps[i01] + amps[i10]).norm_sqr();
            w[2] += 0.5 * (amps[i10] - amps[i01]).norm_sqr();
        })?;
        Ok(w)
    }

    fn project_bond(&mut self, bond: usize, outcome: PairOutcome, weight: f64) -> Result<()> {
        if weight <= NULL_WEIGHT {
            self.amps.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
            self.log_norm = f64::NEG_INFINITY;
            return Ok(());
        }
        let scale = 1.0 / weight.sqrt();
        let (hi, lo) = self.bond_bits(bond)?;
        let step = hi << 1;
        let zero = C64::new(0.0, 0.0);
        let amps = &mut self.amps;
        for outer in (0..amps.len()).step_by(step) {
            for base in outer..outer + lo {
                let (i00, i01, i10, i11) = (base, base + lo, base + hi, base + hi + lo);
                match outcome {
                    PairOutcome::One => {
                        amps[i00] *= scale;
                        amps[i11] *= scale;
                        amps[i01] = zero;
                        amps[i10] = zero;
                    }
                    PairOutcome::S => {
                        let m = (amps[i01] + amps[i10]) * (0.5 * scale);
                        amps[i01] = m;
                        amps[i10] = m;
                        amps[i00] = zero;
                        amps[i11] = zero;
                    }
                    PairOutcome::A => {
                        let d = (amps[i10] - amps[i01]) * (0.5 * scale);
                        amps[i10] = d;
                        amps[i01] = -d;
                        amps[i00] = zero;
                        amps[i11] = zero;
                    }
                }
            }
        }
        self.log_norm += weight.ln();
        Ok(())
    }

    /// Born-sample a two-site measurement on `bond`, project and renormalize.
    pub fn measure_bond<R: Rng + ?Sized>(&mut self, bond: usize, rng: &mut R) -> Result<(PairOutcome, f64)> {
        let w = self.bond_probabilities(bond)?;
        let total: f64 = w.iter().sum();
        if w.iter().all(|&x| x < CORRUPT_PROBABILITY) {
            return Err(Error::CorruptState(CORRUPT_PROBABILITY));
        }
        let u = rng.random::<f64>() * total;
        let outcome = if u < w[0] {
            PairOutcome::One
        } else if u < w[0] + w[1] || w[2] == 0.0 {
            PairOutcome::S
        } else {
            PairOutcome::A
        };
        let weight = w[outcome.index()];
        self.project_bond(bond, outcome, weight)?;
        Ok((outcome, weight))
    }

    /// Project onto a given outcome and return its weight `⟨P_m⟩`.
    ///
    /// A zero weight leaves the state null (`log_norm = -inf`); further
    /// operations on a null state are no-ops.
    pub fn force_outcome(&mut self, bond: usize, outcome: PairOutcome) -> Result<f64> {
        if self.is_null() {
            self.bond_bits(bond)?;
            return Ok(0.0);
        }
        let weight = self.bond_probabilities(bond)?[outcome.index()];
        self.project_bond(bond, outcome, weight)?;
        Ok(if self.is_null() { 0.0 } else { weight })
    }

    /// Probability that `site` is occupied, assuming unit norm.
    pub fn site_probability(&self, site: usize) -> Result<f64> {
        let bit = self.site_bit(site)?;
        Ok(self.amps.iter().enumerate().filter(|(i, _)| i & bit != 0).map(|(_, a)| a.norm_sqr()).sum())
    }

    fn project_site(&mut self, site: usize, occupied: bool, weight: f64) -> Result<()> {
        let bit = self.site_bit(site)?;
        if weight <= NULL_WEIGHT {
            self.amps.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
            self.log_norm = f64::NEG_INFINITY;
            return Ok(());
        }
        let scale = 1.0 / weight.sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i & bit != 0) == occupied {
                *a *= scale;
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
        self.log_norm += weight.ln();
        Ok(())
    }

    pub fn measure_site<R: Rng + ?Sized>(&mut self, site: usize, rng: &mut R) -> Result<(bool, f64)> {
        let p1 = self.site_probability(site)?;
        let p0 = self.norm_sqr() - p1;
        if p0.max(p1) < CORRUPT_PROBABILITY {
            return Err(Error::CorruptState(CORRUPT_PROBABILITY));
        }
        let occupied = rng.random::<f64>() * (p0 + p1) < p1;
        let weight = if occupied { p1 } else { p0 };
        self.project_site(site, occupied, weight)?;
        Ok((occupied, weight))
    }

    pub fn force_site(&mut self, site: usize, occupied: bool) -> Result<f64> {
        if self.is_null() {
            self.site_bit(site)?;
            return Ok(0.0);
        }
        let p1 = self.site_probability(site)?;
        let weight = if occupied { p1 } else { self.norm_sqr() - p1 };
        self.project_site(site, occupied, weight)?;
        Ok(if self.is_null() { 0.0 } else { weight })
    }

    /// Apply a gate slot, or force a measurement slot's recorded outcome.
    pub fn apply_slot(&mut self, slot: &Slot) -> Result<()> {
        if self.is_null() {
            return Ok(());
        }
        match slot.kind {
            SlotKind::Gate(g) => self.apply_gate(slot.pos, g),
            SlotKind::U1Gate(g) => self.apply_mid_block(
                slot.pos,
                g.block,
                C64::from_polar(1.0, g.alpha),
                C64::from_polar(1.0, g.beta),
            ),
            SlotKind::Measure(Some(o)) => self.force_outcome(slot.pos, o).map(|_| ()),
            SlotKind::SiteMeasure(Some(o)) => self.force_site(slot.pos, o).map(|_| ()),
            SlotKind::Measure(None) | SlotKind::SiteMeasure(None) => {
                Err(Error::InconsistentRecord(format!("slot at {} has no outcome", slot.pos)))
            }
        }
    }

    /// Apply a gate slot, or Born-sample a measurement slot and record the outcome.
    pub fn sample_slot<R: Rng + ?Sized>(&mut self, slot: &mut Slot, rng: &mut R) -> Result<()> {
        match &mut slot.kind {
            SlotKind::Measure(o) => {
                *o = Some(self.measure_bond(slot.pos, rng)?.0);
                Ok(())
            }
            SlotKind::SiteMeasure(o) => {
                *o = Some(self.measure_site(slot.pos, rng)?.0);
                Ok(())
            }
            _ => self.apply_slot(slot),
        }
    }

    pub fn apply_schedule(&mut self, sched: &Schedule) -> Result<()> {
        sched.slots().try_for_each(|s| self.apply_slot(s))
    }
}

/// Apply `sym_gate` through the generic path; used to cross-check the fast one.
pub fn apply_gate_generic(state: &mut PureState, bond: usize, params: GateParams) -> Result<()> {
    state.apply_mat4(bond, &sym_gate(params))
}

fn check_dense(len: usize) -> Result<()> {
    check_length(len)?;
    if len > MAX_DENSE_SITES {
        return Err(Error::TooLarge { len, max: MAX_DENSE_SITES, what: "dense simulation" });
    }
    Ok(())
}

/// Starting state of `model` for hypothesis `label`.
pub fn model_initial_state(model: Model, label: ChargeLabel, len: usize) -> Result<PureState> {
    match model {
        Model::U1xZ2 => initial_state(label, len),
        Model::U1 => u1::initial_state(label, len),
    }
}

/// Generate one Born-sampled record of the U(1)⋊Z2 model.
///
/// The record's stream is `stream(seed, 0)`: it first draws the scramble
/// circuit, then the hybrid schedule, then the measurement outcomes.
pub fn run_generation(label: ChargeLabel, len: usize, p: f64, seed: u64) -> Result<(MeasurementRecord, PureState)> {
    run_generation_with(label, len, p, seed, len * len)
}

pub fn run_generation_with(
    label: ChargeLabel,
    len: usize,
    p: f64,
    seed: u64,
    scramble_steps: usize,
) -> Result<(MeasurementRecord, PureState)> {
    let (rec, state, _) = generate_impl(label, len, p, seed, scramble_steps, false)?;
    Ok((rec, state))
}

/// Generate a record and, in lockstep, replay it on the other hypothesis.
///
/// Returns `(record, ln P(m | other label))`. The replay performs exactly the
/// operations [`likelihood_exact`] would, so the value is bitwise identical;
/// only the shared scramble circuit is sampled once.
pub fn generate_with_rival(
    label: ChargeLabel,
    len: usize,
    p: f64,
    seed: u64,
    scramble_steps: usize,
) -> Result<(MeasurementRecord, f64)> {
    let (rec, _, rival) = generate_impl(label, len, p, seed, scramble_steps, true)?;
    Ok((rec, rival.expect("rival requested")))
}

fn generate_impl(
    label: ChargeLabel,
    len: usize,
    p: f64,
    seed: u64,
    scramble_steps: usize,
    with_rival: bool,
) -> Result<(MeasurementRecord, PureState, Option<f64>)> {
    check_dense(len)?;
    let mut rng = stream(seed, 0);
    let scramble = scramble_schedule_steps(len, scramble_steps, &mut rng)?;
    let mut hybrid = sample_schedule(len, p, len, &mut rng)?;
    let mut state = initial_state(label, len)?;
    let mut rival = if with_rival { Some(initial_state(label.other(), len)?) } else { None };
    for slot in scramble.slots() {
        state.apply_slot(slot)?;
        if let Some(r) = rival.as_mut() {
            r.apply_slot(slot)?;
        }
    }
    for slot in hybrid.slots_mut() {
        state.sample_slot(slot, &mut rng)?;
        if let Some(r) = rival.as_mut() {
            r.apply_slot(slot)?;
        }
    }
    let rec = MeasurementRecord {
        version: FORMAT_VERSION,
        model: Model::U1xZ2,
        len,
        p,
        seed,
        label,
        scramble_steps,
        scramble,
        hybrid,
        log_weight: state.log_norm(),
    };
    Ok((rec, state, rival.map(|r| r.log_norm())))
}

/// `ln P(m | hypothesis)` by exact replay: prepare the hypothesis state, run
/// the record's scramble circuit, then force every hybrid slot.
pub fn likelihood_exact(record: &MeasurementRecord, hypothesis: ChargeLabel) -> Result<f64> {
    check_dense(record.len)?;
    let mut state = model_initial_state(record.model, hypothesis, record.len)?;
    state.apply_schedule(&record.scramble)?;
    state.apply_schedule(&record.hybrid)?;
    Ok(state.log_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::singlet_sym;

    fn random_state(len: usize, seed: u64) -> PureState {
        let mut rng = stream(seed, 9);
        let mut amps: Vec<C64> =
            (0..1usize << len).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= n);
        PureState::from_amplitudes(amps)
    }

    #[test]
    fn identity_gate_is_noop() {
        let mut s = random_state(4, 1);
        let before = s.clone();
        s.apply_gate(2, GateParams::new(0.0, 0.0)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn gates_preserve_norm_and_match_generic_path() {
        let mut rng = stream(3, 3);
        let mut fast = random_state(6, 2);
        let mut slow = fast.clone();
        for _ in 0..20 {
            let bond = 1 + (rng.random::<u32>() % 5) as usize;
            let g = GateParams::sample(&mut rng);
            fast.apply_gate(bond, g).unwrap();
            apply_gate_generic(&mut slow, bond, g).unwrap();
        }
        assert!((fast.norm_sqr() - 1.0).abs() < 1e-12);
        let diff = fast.amplitudes().iter().zip(slow.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn phase_on_singlet() {
        let mut s = PureState::from_amplitudes(singlet_sym().to_vec());
        s.apply_gate(1, GateParams::new(0.3, std::f64::consts::PI)).unwrap();
        for (a, b) in s.amplitudes().iter().zip(singlet_sym()) {
            assert!((a + b).norm() < 1e-15);
        }
    }

    #[test]
    fn bond_out_of_range() {
        let mut s = random_state(4, 4);
        assert!(matches!(s.apply_gate(4, GateParams::new(0.1, 0.2)), Err(Error::BondOutOfRange { .. })));
        assert!(matches!(s.apply_gate(0, GateParams::new(0.1, 0.2)), Err(Error::BondOutOfRange { .. })));
    }

    #[test]
    fn deterministic_measurements_on_eigenstates() {
        let mut rng = stream(0, 0);
        let mut s = initial_state(ChargeLabel::ZeroPlus, 6).unwrap();
        for bond in [1, 3, 5] {
            let (o, w) = s.measure_bond(bond, &mut rng).unwrap();
            assert_eq!(o, PairOutcome::S);
            assert!((w - 1.0).abs() < 1e-15);
        }
        let mut zero = PureState::from_amplitudes(vec![C64::new(1.0, 0.0), C64::default(), C64::default(), C64::default()]);
        let (o, w) = zero.measure_bond(1, &mut rng).unwrap();
        assert_eq!((o, w), (PairOutcome::One, 1.0));
    }

    #[test]
    fn probabilities_are_complete() {
        for seed in 0..10 {
            let s = random_state(5, seed);
            for bond in 1..5 {
                let w = s.bond_probabilities(bond).unwrap();
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corrupt_state_detected() {
        let mut s = PureState::from_amplitudes(vec![C64::default(); 4]);
        assert!(matches!(s.measure_bond(1, &mut stream(0, 0)), Err(Error::CorruptState(_))));
    }

    #[test]
    fn forced_weights() {
        let singlet = PureState::from_amplitudes(singlet_sym().to_vec());
        let mut s = singlet.clone();
        assert!((s.force_outcome(1, PairOutcome::S).unwrap() - 1.0).abs() < 1e-15);
        let mut s = singlet.clone();
        assert_eq!(s.force_outcome(1, PairOutcome::A).unwrap(), 0.0);
        assert!(s.is_null());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = PureState::from_amplitudes(vec![
            C64::default(),
            C64::new(h, 0.0),
            C64::default(),
            C64::new(h, 0.0),
        ]);
        assert!((s.force_outcome(1, PairOutcome::One).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn generation_at_zero_rate_has_no_outcomes() {
        let (rec, _) = run_generation_with(ChargeLabel::One, 4, 0.0, 9, 4).unwrap();
        assert_eq!(rec.hybrid.n_measurements(), 0);
        assert_eq!(rec.log_weight, 0.0);
        rec.validate().unwrap();
    }

    #[test]
    fn replay_reproduces_log_weight_exactly() {
        for seed in 0..5 {
            let (rec, state) = run_generation(ChargeLabel::ZeroPlus, 6, 0.4, seed).unwrap();
            assert_eq!(likelihood_exact(&rec, rec.label).unwrap(), rec.log_weight);
            assert_eq!(state.log_norm(), rec.log_weight);
            assert!(rec.log_weight <= 0.0);
        }
    }

    #[test]
    fn rival_replay_matches_likelihood_exact() {
        for seed in 0..4 {
            let (rec, rival) = generate_with_rival(ChargeLabel::One, 6, 0.5, seed, 36).unwrap();
            assert_eq!(likelihood_exact(&rec, ChargeLabel::ZeroPlus).unwrap(), rival);
        }
    }

    #[test]
    fn impossible_outcome_has_zero_likelihood() {
        // Without scrambling, P¹ on bond 1 is certain for |ψ_1⟩ and impossible for |s⟩.
        let (rec, _) = run_generation_with(ChargeLabel::One, 2, 1.0, 5, 0).unwrap();
        let first = rec.hybrid.slots().next().unwrap();
        assert_eq!(first.kind, SlotKind::Measure(Some(PairOutcome::One)));
        assert_eq!(likelihood_exact(&rec, ChargeLabel::ZeroPlus).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn charge_is_conserved() {
        let mut rng = stream(8, 8);
        let mut s = initial_state(ChargeLabel::One, 8).unwrap();
        let q0 = s.charge_expectation();
        let sched = sample_schedule(8, 0.3, 8, &mut rng).unwrap();
        for mut slot in sched.slots().copied() {
            s.sample_slot(&mut slot, &mut rng).unwrap();
            assert!((s.charge_expectation() - q0).abs() < 1e-10);
        }
    }

    #[test]
    fn too_large_for_dense() {
        assert!(matches!(run_generation(ChargeLabel::One, 26, 0.1, 0), Err(Error::TooLarge { .. })));
    }
}
