//! The scalar U(1) model: exact record generation with U(1) gates and
//! single-site occupation measurements, and its fully dephased classical
//! decoder over probability distributions.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::circuit::{half_step_bonds, Layer, MeasurementRecord, Model, Schedule, Slot, SlotKind, U1GateParams, FORMAT_VERSION};
use crate::decoders::{posterior, Posterior};
use crate::error::{Error, Result};
use crate::mps::{LocalOp, LogScalar, Mps, Tensor3, TruncationPolicy};
use crate::rng::{derive_seed, stream};
use crate::statevector::{PureState, MAX_DENSE_SITES};
use crate::swssb::{distance_grid, reference_site, CorrelatorSeries, PhiTerm};
use crate::symmetry::{binomial, check_length, ChargeLabel};

/// Particle number of hypothesis `label`: `L/2` for `ZeroPlus`, `L/2 + 1` for `One`.
pub fn particle_number(label: ChargeLabel, len: usize) -> usize {
    match label {
        ChargeLabel::ZeroPlus => len / 2,
        ChargeLabel::One => len / 2 + 1,
    }
}

/// Evenly spread product configuration with `n` particles; site 0 is the most
/// significant bit.
pub fn spread_configuration(n: usize, len: usize) -> usize {
    (0..len).fold(0usize, |acc, k| {
        let occupied = (k + 1) * n / len > k * n / len;
        (acc << 1) | occupied as usize
    })
}

/// Product state with the hypothesis' particle number.
pub fn initial_state(label: ChargeLabel, len: usize) -> Result<PureState> {
    check_length(len)?;
    let config = spread_configuration(particle_number(label, len), len);
    let mut amps = vec![C64::new(0.0, 0.0); 1 << len];
    amps[config] = C64::new(1.0, 0.0);
    Ok(PureState::from_amplitudes(amps))
}

/// Uniform phases on `|00⟩`, `|11⟩` and a Haar-random U(2) middle block.
pub fn sample_u1_gate<R: Rng + ?Sized>(rng: &mut R) -> U1GateParams {
    let alpha = rng.random::<f64>() * TAU;
    let beta = rng.random::<f64>() * TAU;
    let g: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (z1, z2) = (C64::new(g[0], g[1]) / n, C64::new(g[2], g[3]) / n);
    let phase = C64::from_polar(1.0, rng.random::<f64>() * TAU);
    let block = [[phase * z1, -phase * z2.conj()], [phase * z2, phase * z1.conj()]];
    U1GateParams { alpha, beta, block }
}

fn gate_half_step<R: Rng + ?Sized>(len: usize, parity: usize, rng: &mut R) -> Vec<Slot> {
    half_step_bonds(len, parity).map(|bond| Slot { pos: bond, kind: SlotKind::U1Gate(sample_u1_gate(rng)) }).collect()
}

/// `n_steps` layers of odd gates, even gates, then each site measured with
/// probability `p` (1-based sites, ascending, outcomes unset).
pub fn sample_u1_schedule<R: Rng + ?Sized>(len: usize, p: f64, n_steps: usize, rng: &mut R) -> Result<Schedule> {
    check_length(len)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidRate(p));
    }
    let layers = (0..n_steps)
        .map(|_| {
            let odd = gate_half_step(len, 1, rng);
            let even = gate_half_step(len, 0, rng);
            let meas: Vec<Slot> = (1..=len)
                .filter(|_| rng.random::<f64>() < p)
                .map(|site| Slot { pos: site, kind: SlotKind::SiteMeasure(None) })
                .collect();
            vec![odd, even, meas] as Layer
        })
        .collect();
    Ok(Schedule { len, layers })
}

/// Gate-only U(1) brickwork.
pub fn u1_scramble_schedule<R: Rng + ?Sized>(len: usize, n_steps: usize, rng: &mut R) -> Result<Schedule> {
    check_length(len)?;
    let layers = (0..n_steps).map(|_| vec![gate_half_step(len, 1, rng), gate_half_step(len, 0, rng)]).collect();
    Ok(Schedule { len, layers })
}

/// One Born-sampled record of the U(1) model: `scramble_steps` gate layers from
/// the spread product state, then `L` hybrid layers. Stream `stream(seed, 0)`
/// draws the scramble, the hybrid schedule, then the outcomes.
pub fn generate_u1_record(
    label: ChargeLabel,
    len: usize,
    p: f64,
    seed: u64,
    scramble_steps: usize,
) -> Result<(MeasurementRecord, PureState)> {
    if len > MAX_DENSE_SITES {
        return Err(Error::TooLarge { len, max: MAX_DENSE_SITES, what: "dense U(1) generation" });
    }
    let mut rng = stream(seed, 0);
    let scramble = u1_scramble_schedule(len, scramble_steps, &mut rng)?;
    let mut hybrid = sample_u1_schedule(len, p, len, &mut rng)?;
    let mut state = initial_state(label, len)?;
    state.apply_schedule(&scramble)?;
    for slot in hybrid.slots_mut() {
        state.sample_slot(slot, &mut rng)?;
    }
    let rec = MeasurementRecord {
        version: FORMAT_VERSION,
        model: Model::U1,
        len,
        p,
        seed,
        label,
        scramble_steps,
        scramble,
        hybrid,
        log_weight: state.log_norm(),
    };
    Ok((rec, state))
}

/// Pair-symmetrizing twirl on `(|00⟩, |01⟩, |10⟩, |11⟩)`.
pub fn twirl_op() -> &'static LocalOp {
    static OP: OnceLock<LocalOp> = OnceLock::new();
    OP.get_or_init(|| {
        #[rustfmt::skip]
        let m = [
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.5, 0.5, 0.0,
            0.0, 0.5, 0.5, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        LocalOp::from_dense(4, &m)
    })
}

const ONES: [f64; 2] = [1.0, 1.0];
const EMPTY: [f64; 2] = [1.0, 0.0];
const FULL: [f64; 2] = [0.0, 1.0];

/// Unnormalized probability distribution over bitstrings as a `d = 2` MPS.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalDist {
    mps: Mps,
}

impl ClassicalDist {
    pub fn from_mps(mps: Mps) -> Result<Self> {
        if mps.phys_dim() != 2 {
            return Err(Error::LengthMismatch(mps.phys_dim(), 2));
        }
        Ok(ClassicalDist { mps })
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

    pub fn peak_bond(&self) -> usize {
        self.mps.peak_bond()
    }

    /// The flat vector `|1⟩⟩`.
    pub fn flat(len: usize) -> Result<Self> {
        ClassicalDist::from_mps(Mps::product(2, &vec![ONES.to_vec(); len])?)
    }

    /// Uniform distribution over the `C(L, n)` bitstrings with `n` particles.
    pub fn uniform_sector(n: usize, len: usize) -> Result<Self> {
        check_length(len)?;
        if n > len {
            return Err(Error::EmptySector { charge_offset: n as i64 - (len / 2) as i64, parity: "any", len });
        }
        let range = |j: usize| (n.saturating_sub(len - j))..=(j.min(n));
        let tensors = (0..len)
            .map(|j| {
                let (left, right): (Vec<usize>, Vec<usize>) = (range(j).collect(), range(j + 1).collect());
                let mut t = Tensor3::zeros(left.len(), 2, right.len());
                for (a, &c) in left.iter().enumerate() {
                    for (b, &c2) in right.iter().enumerate() {
                        if c2 == c || c2 == c + 1 {
                            t.set(a, c2 - c, b, 1.0);
                        }
                    }
                }
                t
            })
            .collect();
        let ln_norm = -(binomial(len as u64, n as u64) as f64).ln();
        ClassicalDist::from_mps(Mps::from_tensors(tensors, ln_norm, &TruncationPolicy::default())?)
    }

    /// Distribution from a dense probability vector (site 0 most significant).
    pub fn from_dense(len: usize, probs: &[f64]) -> Result<Self> {
        if probs.len() != 1 << len {
            return Err(Error::LengthMismatch(probs.len(), 1 << len));
        }
        let mut tensors = Vec::with_capacity(len);
        let mut rest = probs.to_vec();
        let mut rows = 1usize;
        for _ in 0..len - 1 {
            let cols = rest.len() / (rows * 2);
            let (u, s, vt) = crate::mps::linalg::svd_rm(&rest, rows * 2, cols)?;
            let k = s.iter().filter(|&&x| x > 1e-14 * s[0].max(f64::MIN_POSITIVE)).count().max(1);
            let kfull = s.len();
            let mut left = vec![0.0; rows * 2 * k];
            for r in 0..rows * 2 {
                left[r * k..(r + 1) * k].copy_from_slice(&u[r * kfull..r * kfull + k]);
            }
            tensors.push(Tensor3::from_data(rows, 2, k, left));
            rest = (0..k).flat_map(|a| vt[a * cols..(a + 1) * cols].iter().map(|v| v * s[a]).collect::<Vec<_>>()).collect();
            rows = k;
        }
        tensors.push(Tensor3::from_data(rows, 2, 1, rest));
        ClassicalDist::from_mps(Mps::from_tensors(tensors, 0.0, &TruncationPolicy::default())?)
    }

    /// `Σ_s p_s`.
    pub fn total_weight(&self) -> LogScalar {
        self.mps.contract_vectors(|_| &ONES[..])
    }

    /// `ln Σ_s p_s²/(Σ_s p_s)²`.
    pub fn ln_purity(&self) -> Result<f64> {
        let tot = self.total_weight();
        if tot.sign <= 0.0 {
            return Err(Error::NonPositiveTrace(tot.value()));
        }
        Ok(2.0 * (self.mps.log_scale() - tot.ln_abs))
    }

    /// Twirl the pair on a 1-based bond.
    pub fn twirl(&mut self, bond: usize, policy: &TruncationPolicy) -> Result<()> {
        if bond == 0 || bond >= self.len() {
            return Err(Error::BondOutOfRange { bond, len: self.len() });
        }
        self.mps.apply_two_site(bond - 1, twirl_op(), policy)
    }

    /// Probability that the 1-based `site` is occupied.
    pub fn occupation_probability(&self, site: usize) -> Result<f64> {
        if site == 0 || site > self.len() {
            return Err(Error::SiteOutOfRange { site, len: self.len() });
        }
        let tot = self.total_weight();
        if tot.sign <= 0.0 {
            return Err(Error::NonPositiveTrace(tot.value()));
        }
        let occ = self.mps.contract_vectors(|j| if j == site - 1 { &FULL[..] } else { &ONES[..] });
        Ok((occ.value().max(0.0) * (-tot.ln_abs).exp()).clamp(0.0, 1.0))
    }

    /// Occupation measurement of a 1-based site: forced when `forced` is set,
    /// otherwise sampled from `rng`. Returns the outcome and its conditional probability.
    pub fn site_measure<R: Rng + ?Sized>(
        &mut self,
        site: usize,
        forced: Option<bool>,
        rng: &mut R,
    ) -> Result<(bool, f64)> {
        let p1 = self.occupation_probability(site)?;
        let occupied = match forced {
            Some(o) => o,
            None => rng.random::<f64>() < p1,
        };
        let weight = if occupied { p1 } else { 1.0 - p1 };
        let proj = LocalOp::diagonal(if occupied { &FULL } else { &EMPTY });
        self.mps.apply_one_site(site - 1, &proj)?;
        Ok((occupied, weight))
    }

    /// `Σ_s p_s p_{T s} / Σ_s p_s²` for every `x > 0`, where `T` moves a
    /// particle from `site0 + x` to `site0` (0-based sites).
    pub fn c2_profile(&self, site0: usize) -> Result<Vec<f64>> {
        static OPS: OnceLock<(LocalOp, LocalOp)> = OnceLock::new();
        let (raise, lower) = OPS.get_or_init(|| {
            (LocalOp::from_dense(2, &[0.0, 0.0, 1.0, 0.0]), LocalOp::from_dense(2, &[0.0, 1.0, 0.0, 0.0]))
        });
        if self.is_null() {
            return Err(Error::NonPositiveTrace(0.0));
        }
        self.mps.two_point(site0, raise, lower)
    }

    /// Dense probability vector, site 0 most significant.
    pub fn to_dense(&self) -> Vec<f64> {
        self.mps.to_dense()
    }
}

/// Classical correlator at one distance.
pub fn classical_c2(dist: &ClassicalDist, site0: usize, x: usize) -> Result<f64> {
    if x == 0 || site0 + x >= dist.len() {
        return Err(Error::SiteOutOfRange { site: site0 + x, len: dist.len() });
    }
    Ok(dist.c2_profile(site0)?[x - 1])
}

fn require_u1(record: &MeasurementRecord) -> Result<()> {
    if record.model != Model::U1 {
        return Err(Error::InconsistentRecord(format!("expected a u1 record, found {}", record.model.tag())));
    }
    Ok(())
}

/// `ln P(m | N)` under the dephased dynamics, starting from the uniform
/// distribution on the hypothesis' sector.
pub fn likelihood_classical(record: &MeasurementRecord, hypothesis: ChargeLabel, policy: &TruncationPolicy) -> Result<f64> {
    require_u1(record)?;
    let mut dist = ClassicalDist::uniform_sector(particle_number(hypothesis, record.len), record.len)?;
    let mut ln_w = 0.0;
    let mut rng = stream(0, 0);
    for slot in record.hybrid.slots() {
        match slot.kind {
            SlotKind::U1Gate(_) => dist.twirl(slot.pos, policy)?,
            SlotKind::SiteMeasure(Some(o)) => {
                let (_, w) = dist.site_measure(slot.pos, Some(o), &mut rng)?;
                if w <= 0.0 || dist.is_null() {
                    return Ok(f64::NEG_INFINITY);
                }
                ln_w += w.ln();
            }
            k => return Err(Error::InconsistentRecord(format!("unexpected slot {k:?} in a u1 record"))),
        }
    }
    Ok(ln_w)
}

/// Posterior of the classical decoder.
pub fn decode_classical(record: &MeasurementRecord, policy: &TruncationPolicy) -> Result<Posterior> {
    let lc = likelihood_classical(record, record.label, policy)?;
    let lw = likelihood_classical(record, record.label.other(), policy)?;
    posterior(record.label, lc, lw)
}

/// Generate one U(1) record with the exact dynamics and decode it classically.
pub fn u1_generate_and_decode(
    label: ChargeLabel,
    len: usize,
    p: f64,
    seed: u64,
    scramble_steps: usize,
    policy: &TruncationPolicy,
) -> Result<Posterior> {
    let (rec, _) = generate_u1_record(label, len, p, seed, scramble_steps)?;
    decode_classical(&rec, policy)
}

/// Forward classical trajectory of `steps` layers from the uniform half-filled
/// distribution, with Born-sampled occupation measurements.
pub fn sample_classical_trajectory(
    len: usize,
    p: f64,
    seed: u64,
    steps: usize,
    policy: &TruncationPolicy,
) -> Result<(ClassicalDist, f64)> {
    let mut rng = stream(seed, 0);
    let mut dist = ClassicalDist::uniform_sector(len / 2, len)?;
    let mut log_p = 0.0;
    for _ in 0..steps {
        for parity in [1, 0] {
            for bond in half_step_bonds(len, parity) {
                dist.twirl(bond, policy)?;
            }
        }
        for site in 1..=len {
            if rng.random::<f64>() < p {
                let (_, w) = dist.site_measure(site, None, &mut rng)?;
                log_p += w.ln();
            }
        }
    }
    Ok((dist, log_p))
}

/// Classical counterpart of [`crate::swssb::run_swssb_experiment`].
pub fn run_classical_swssb(
    len: usize,
    p: f64,
    n_traj: usize,
    policy: &TruncationPolicy,
    seed: u64,
    grid_points: usize,
) -> Result<CorrelatorSeries> {
    if n_traj == 0 {
        return Err(Error::EmptyInput("no trajectories requested"));
    }
    let site0 = reference_site(len);
    let distances = distance_grid(len, grid_points);
    let runs: Vec<(Vec<PhiTerm>, usize)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, &[len as u64, p.to_bits(), i as u64]);
            let (dist, log_p) = sample_classical_trajectory(len, p, s, len, policy)?;
            let profile = dist.c2_profile(site0)?;
            let ln_purity = dist.ln_purity()?;
            let terms = distances.iter().map(|&x| PhiTerm { log_p, ln_purity, c2: profile[x - 1] }).collect();
            Ok((terms, dist.peak_bond()))
        })
        .collect::<Result<_>>()?;
    Ok(CorrelatorSeries {
        model: Model::U1,
        len,
        p,
        site0,
        distances,
        peak_bond: runs.iter().map(|r| r.1).max().unwrap_or(0),
        terms: runs.into_iter().map(|r| r.0).collect(),
    })
}
