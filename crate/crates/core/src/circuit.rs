//! Brickwork schedules and measurement records.
//!
//! Bonds and sites are 1-based: bond `b` couples sites `b` and `b + 1`.
//! A layer of the U(1)⋊Z2 model is an odd-bond half-step followed by an
//! even-bond half-step. A layer of the U(1) model adds a third half-step of
//! single-site occupation measurements.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::symmetry::{check_length, ChargeLabel, GateParams, PairOutcome};

pub mod io;

pub use io::{read_records, write_record, write_records, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    /// Nonabelian U(1)⋊Z2 circuits with two-site projective measurements.
    U1xZ2,
    /// Scalar U(1) circuits with single-site occupation measurements.
    U1,
}

impl Model {
    pub fn tag(self) -> &'static str {
        match self {
            Model::U1xZ2 => "u1xz2",
            Model::U1 => "u1",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "u1xz2" => Some(Model::U1xZ2),
            "u1" => Some(Model::U1),
            _ => None,
        }
    }

    /// Half-steps per layer in the hybrid stage.
    pub fn hybrid_half_steps(self) -> usize {
        match self {
            Model::U1xZ2 => 2,
            Model::U1 => 3,
        }
    }
}

/// A U(1)-symmetric two-site gate: phases on `|00⟩`, `|11⟩` and a 2×2 unitary
/// block on `span{|01⟩, |10⟩}` (rows and columns in that order).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct U1GateParams {
    pub alpha: f64,
    pub beta: f64,
    pub block: [[C64; 2]; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlotKind {
    Gate(GateParams),
    Measure(Option<PairOutcome>),
    U1Gate(U1GateParams),
    /// Occupation measurement of a single site; `Some(true)` means occupied.
    SiteMeasure(Option<bool>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slot {
    /// Bond for two-site slots, site for [`SlotKind::SiteMeasure`].
    pub pos: usize,
    pub kind: SlotKind,
}

impl Slot {
    pub fn is_measurement(&self) -> bool {
        matches!(self.kind, SlotKind::Measure(_) | SlotKind::SiteMeasure(_))
    }

    pub fn has_outcome(&self) -> bool {
        matches!(self.kind, SlotKind::Measure(Some(_)) | SlotKind::SiteMeasure(Some(_)))
    }
}

pub type HalfStep = Vec<Slot>;
pub type Layer = Vec<HalfStep>;

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub len: usize,
    pub layers: Vec<Layer>,
}

impl Schedule {
    pub fn empty(len: usize) -> Self {
        Schedule { len, layers: Vec::new() }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn slots(&self) -> impl DoubleEndedIterator<Item = &Slot> + '_ {
        self.layers.iter().flatten().flatten()
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = &mut Slot> + '_ {
        self.layers.iter_mut().flatten().flatten()
    }

    pub fn n_measurements(&self) -> usize {
        self.slots().filter(|s| s.is_measurement()).count()
    }

    /// The first `n` layers.
    pub fn truncated(&self, n: usize) -> Schedule {
        Schedule { len: self.len, layers: self.layers[..n.min(self.layers.len())].to_vec() }
    }
}

/// Bonds of the odd (`parity = 1`) or even (`parity = 0`) half-step.
pub fn half_step_bonds(len: usize, parity: usize) -> impl Iterator<Item = usize> {
    let start = if parity == 1 { 1 } else { 2 };
    (start..len).step_by(2)
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidRate(p));
    }
    Ok(())
}

/// Hybrid brickwork: each slot is independently a measurement with probability `p`.
pub fn sample_schedule<R: Rng + ?Sized>(len: usize, p: f64, n_steps: usize, rng: &mut R) -> Result<Schedule> {
    check_length(len)?;
    check_rate(p)?;
    let layers = (0..n_steps)
        .map(|_| {
            [1, 0]
                .iter()
                .map(|&parity| {
                    half_step_bonds(len, parity)
                        .map(|bond| {
                            let kind = if rng.random::<f64>() < p {
                                SlotKind::Measure(None)
                            } else {
                                SlotKind::Gate(GateParams::sample(rng))
                            };
                            Slot { pos: bond, kind }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(Schedule { len, layers })
}

/// Gate-only brickwork of `n_steps` layers.
pub fn scramble_schedule_steps<R: Rng + ?Sized>(len: usize, n_steps: usize, rng: &mut R) -> Result<Schedule> {
    sample_schedule(len, 0.0, n_steps, rng)
}

/// Gate-only brickwork of `L²` layers.
pub fn scramble_schedule<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Schedule> {
    scramble_schedule_steps(len, len * len, rng)
}

/// A full trajectory: everything needed to replay it on any hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub version: u64,
    pub model: Model,
    pub len: usize,
    pub p: f64,
    pub seed: u64,
    pub label: ChargeLabel,
    pub scramble_steps: usize,
    pub scramble: Schedule,
    pub hybrid: Schedule,
    /// `ln p(m)` of the outcomes, accumulated while sampling them.
    pub log_weight: f64,
}

impl MeasurementRecord {
    /// Copy keeping only the first `n` hybrid layers. The log weight is not recomputed.
    pub fn truncated(&self, n: usize) -> MeasurementRecord {
        MeasurementRecord { hybrid: self.hybrid.truncated(n), ..self.clone() }
    }

    /// Structural checks that deserialized records must pass.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InconsistentRecord(msg));
        if self.len < 2 || self.len % 2 != 0 {
            return bad(format!("L = {} is not an even length >= 2", self.len));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p = {} outside [0, 1]", self.p));
        }
        if !(self.log_weight <= 0.0) {
            return bad(format!("log_weight = {} is not <= 0", self.log_weight));
        }
        if self.scramble.n_layers() != self.scramble_steps {
            return bad(format!(
                "scramble has {} layers but scramble_steps = {}",
                self.scramble.n_layers(),
                self.scramble_steps
            ));
        }
        for (name, sched, half_steps) in [
            ("scramble", &self.scramble, 2),
            ("hybrid", &self.hybrid, self.model.hybrid_half_steps()),
        ] {
            if sched.len != self.len {
                return bad(format!("{name} schedule length {} != L", sched.len));
            }
            for layer in &sched.layers {
                if layer.len() != half_steps {
                    return bad(format!("{name} layer has {} half-steps, expected {half_steps}", layer.len()));
                }
                for (k, half) in layer.iter().enumerate() {
                    self.validate_half_step(name, k, half)?;
                }
            }
        }
        if self.scramble.slots().any(|s| s.is_measurement()) {
            return bad("scramble contains measurement slots".into());
        }
        if self.hybrid.slots().any(|s| s.is_measurement() && !s.has_outcome()) {
            return bad("hybrid measurement slot without outcome".into());
        }
        Ok(())
    }

    fn validate_half_step(&self, name: &str, k: usize, half: &[Slot]) -> Result<()> {
        let bad = |msg: String| Err(Error::InconsistentRecord(msg));
        let gate_ok = |kind: &SlotKind| match (self.model, kind) {
            (Model::U1xZ2, SlotKind::Gate(_) | SlotKind::Measure(_)) => true,
            (Model::U1, SlotKind::U1Gate(_)) => true,
            _ => false,
        };
        if k < 2 {
            let expected: Vec<usize> = half_step_bonds(self.len, 1 - k).collect();
            let found: Vec<usize> = half.iter().map(|s| s.pos).collect();
            if expected != found {
                return bad(format!("{name} half-step {k} covers bonds {found:?}, expected {expected:?}"));
            }
            if let Some(s) = half.iter().find(|s| !gate_ok(&s.kind)) {
                return bad(format!("{name} slot {:?} not allowed for model {}", s.kind, self.model.tag()));
            }
        } else {
            let mut last = 0;
            for s in half {
                if !matches!(s.kind, SlotKind::SiteMeasure(_)) || s.pos <= last || s.pos > self.len {
                    return bad(format!("{name} site-measurement half-step has invalid slot {s:?}"));
                }
                last = s.pos;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn degenerate_rates() {
        let mut rng = stream(1, 0);
        let s = sample_schedule(8, 0.0, 4, &mut rng).unwrap();
        assert!(s.slots().all(|s| matches!(s.kind, SlotKind::Gate(_))));
        let s = sample_schedule(8, 1.0, 4, &mut rng).unwrap();
        assert!(s.slots().all(|s| matches!(s.kind, SlotKind::Measure(None))));
        assert!(matches!(sample_schedule(8, 1.5, 4, &mut rng), Err(Error::InvalidRate(_))));
        assert!(matches!(sample_schedule(8, -0.1, 4, &mut rng), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn measurement_fraction_is_binomial() {
        // 16 layers x 15 bonds = 240 slots; stderr = sqrt(0.3 * 0.7 / 240).
        let mut rng = stream(2024, 0);
        let s = sample_schedule(16, 0.3, 16, &mut rng).unwrap();
        let n = s.slots().count();
        assert_eq!(n, 16 * 15);
        let frac = s.n_measurements() as f64 / n as f64;
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((frac - 0.3).abs() < 3.0 * se, "fraction {frac}");
    }

    #[test]
    fn scramble_counts_and_determinism() {
        let a = scramble_schedule(4, &mut stream(5, 0)).unwrap();
        assert_eq!(a.n_layers(), 16);
        for layer in &a.layers {
            assert_eq!(layer[0].len(), 2);
            assert_eq!(layer[1].len(), 1);
        }
        assert_eq!(a.n_measurements(), 0);
        let b = scramble_schedule(4, &mut stream(5, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brickwork_covers_each_bond_once() {
        let s = sample_schedule(10, 0.5, 3, &mut stream(3, 3)).unwrap();
        for layer in &s.layers {
            let odd: Vec<_> = layer[0].iter().map(|s| s.pos).collect();
            let even: Vec<_> = layer[1].iter().map(|s| s.pos).collect();
            assert_eq!(odd, vec![1, 3, 5, 7, 9]);
            assert_eq!(even, vec![2, 4, 6, 8]);
        }
    }
}
