//! Qubit conventions and the U(1)⋊Z2 symmetry.
//!
//! Basis states are `|0⟩, |1⟩` per site; the charge of a bitstring is its
//! number of ones minus `L/2`, and the Z2 flip is `X` on every site. Two-site
//! operators use the basis order `|00⟩, |01⟩, |10⟩, |11⟩` with the left site
//! as the high bit. Across a whole chain, site 0 is the most significant bit
//! of the amplitude index.

use std::fmt;
use std::ops::{Add, Mul};

use faer::MatRef;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::statevector::PureState;

/// Tolerance for the commutator checks in [`check_strong_symmetry`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A dense 4×4 complex matrix on two qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4(pub [[C64; 4]; 4]);

impl Mat4 {
    pub fn zeros() -> Self {
        Mat4([[C64::new(0.0, 0.0); 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            m.0[i][i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real(rows: [[f64; 4]; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = C64::new(rows[i][j], 0.0);
            }
        }
        m
    }

    /// `|u⟩⟨v|`
    pub fn outer(u: [C64; 4], v: [C64; 4]) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = u[i] * v[j].conj();
            }
        }
        m
    }

    pub fn scale(&self, z: C64) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|x| *x *= z);
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn apply(&self, v: [C64; 4]) -> [C64; 4] {
        let mut out = [C64::new(0.0, 0.0); 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|j| self.0[i][j] * v[j]).sum();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Real parts, panicking if any imaginary part exceeds `1e-15`.
    pub fn to_real(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                assert!(self.0[i][j].im.abs() < 1e-15, "matrix is not real");
                out[i][j] = self.0[i][j].re;
            }
        }
        out
    }

    pub fn as_faer(&self) -> faer::Mat<C64> {
        faer::Mat::from_fn(4, 4, |i, j| self.0[i][j])
    }
}

impl Add for Mat4 {
    type Output = Mat4;
    fn add(self, rhs: Mat4) -> Mat4 {
        let mut m = self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += rhs.0[i][j];
            }
        }
        m
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: Mat4) -> Mat4 {
        let mut m = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        m
    }
}

fn ket(a: f64, b: f64, c: f64, d: f64) -> [C64; 4] {
    [C64::new(a, 0.0), C64::new(b, 0.0), C64::new(c, 0.0), C64::new(d, 0.0)]
}

/// `|s⟩ = (|10⟩ + |01⟩)/√2`
pub fn singlet_sym() -> [C64; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ket(0.0, h, h, 0.0)
}

/// `|a⟩ = (|10⟩ − |01⟩)/√2`
pub fn singlet_anti() -> [C64; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ket(0.0, -h, h, 0.0)
}

/// The three two-site projectors distinguishing the irreps of U(1)⋊Z2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectorSet {
    /// `|00⟩⟨00| + |11⟩⟨11|`
    pub p1: Mat4,
    /// `|s⟩⟨s|`
    pub ps: Mat4,
    /// `|a⟩⟨a|`
    pub pa: Mat4,
}

impl ProjectorSet {
    pub fn get(&self, outcome: PairOutcome) -> &Mat4 {
        match outcome {
            PairOutcome::One => &self.p1,
            PairOutcome::S => &self.ps,
            PairOutcome::A => &self.pa,
        }
    }
}

pub fn projector_set() -> ProjectorSet {
    let p1 = Mat4::outer(ket(1.0, 0.0, 0.0, 0.0), ket(1.0, 0.0, 0.0, 0.0))
        + Mat4::outer(ket(0.0, 0.0, 0.0, 1.0), ket(0.0, 0.0, 0.0, 1.0));
    // Written out rather than via outer products so that the entries are exactly ±1/2.
    let ps = Mat4::from_real([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);
    let pa = Mat4::from_real([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 0.5, -0.5, 0.0],
        [0.0, -0.5, 0.5, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ]);
    ProjectorSet { p1, ps, pa }
}

/// Outcome of a two-site projective measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PairOutcome {
    One,
    S,
    A,
}

impl PairOutcome {
    pub const ALL: [PairOutcome; 3] = [PairOutcome::One, PairOutcome::S, PairOutcome::A];

    pub fn symbol(self) -> &'static str {
        match self {
            PairOutcome::One => "1",
            PairOutcome::S => "s",
            PairOutcome::A => "a",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "1" => Some(PairOutcome::One),
            "s" => Some(PairOutcome::S),
            "a" => Some(PairOutcome::A),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PairOutcome::One => 0,
            PairOutcome::S => 1,
            PairOutcome::A => 2,
        }
    }
}

/// Angles of a symmetric two-site gate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateParams {
    pub theta: f64,
    pub phi: f64,
}

impl GateParams {
    pub fn new(theta: f64, phi: f64) -> Self {
        GateParams { theta, phi }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let tau = std::f64::consts::TAU;
        GateParams { theta: rng.random::<f64>() * tau, phi: rng.random::<f64>() * tau }
    }
}

/// `P¹ + e^{iθ} Pᵃ + e^{iφ} Pˢ`
pub fn sym_gate(params: GateParams) -> Mat4 {
    let set = projector_set();
    set.p1 + set.pa.scale(C64::from_polar(1.0, params.theta)) + set.ps.scale(C64::from_polar(1.0, params.phi))
}

/// The two charge hypotheses of the decoding task.
///
/// `ZeroPlus` is total charge offset 0 with even flip parity. `One` is the
/// parity-even combination of the `q = ±1` doublet; the sign of `q` is never
/// learnable and is not represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChargeLabel {
    ZeroPlus,
    One,
}

impl ChargeLabel {
    pub const BOTH: [ChargeLabel; 2] = [ChargeLabel::ZeroPlus, ChargeLabel::One];

    pub fn other(self) -> Self {
        match self {
            ChargeLabel::ZeroPlus => ChargeLabel::One,
            ChargeLabel::One => ChargeLabel::ZeroPlus,
        }
    }

    /// `|q|` of the label.
    pub fn charge_offset(self) -> i64 {
        match self {
            ChargeLabel::ZeroPlus => 0,
            ChargeLabel::One => 1,
        }
    }

    pub fn sector(self) -> SectorSpec {
        SectorSpec { charge_offset: self.charge_offset(), parity: Parity::Even }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ChargeLabel::ZeroPlus => "0+",
            ChargeLabel::One => "1",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "0+" => Some(ChargeLabel::ZeroPlus),
            "1" => Some(ChargeLabel::One),
            _ => None,
        }
    }
}

impl fmt::Display for ChargeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
    Unresolved,
}

impl Parity {
    fn name(self) -> &'static str {
        match self {
            Parity::Even => "+",
            Parity::Odd => "-",
            Parity::Unresolved => "unresolved",
        }
    }
}

/// A joint charge/parity eigenspace.
///
/// For `q ≠ 0` the flip exchanges `q` and `−q`, so a resolved parity refers
/// to the even or odd combinations within the doublet `V_q ⊕ V_{−q}`. With
/// unresolved parity it names the single sector `V_q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SectorSpec {
    pub charge_offset: i64,
    pub parity: Parity,
}

pub(crate) fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub(crate) fn check_length(len: usize) -> Result<()> {
    if len < 2 || len % 2 != 0 {
        return Err(Error::InvalidLength(len));
    }
    Ok(())
}

pub fn sector_dimension(spec: SectorSpec, len: usize) -> Result<u128> {
    check_length(len)?;
    let half = (len / 2) as i64;
    let empty = || Error::EmptySector {
        charge_offset: spec.charge_offset,
        parity: spec.parity.name(),
        len,
    };
    if spec.charge_offset.abs() > half {
        return Err(empty());
    }
    let ones = (half + spec.charge_offset) as u64;
    let count = binomial(len as u64, ones);
    let dim = match (spec.charge_offset, spec.parity) {
        (_, Parity::Unresolved) => count,
        // No bitstring is its own flip, so flip orbits in sector 0 have size two.
        (0, _) => count / 2,
        (_, _) => count,
    };
    if dim == 0 {
        return Err(empty());
    }
    Ok(dim)
}

/// Definite-charge initial state for `label` on `len` sites.
///
/// `ZeroPlus` is `|s⟩` on every pair `(2j−1, 2j)`; `One` replaces the first
/// pair by `(|00⟩ + |11⟩)/√2`.
pub fn initial_state(label: ChargeLabel, len: usize) -> Result<PureState> {
    check_length(len)?;
    let first = match label {
        ChargeLabel::ZeroPlus => singlet_sym(),
        ChargeLabel::One => {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            ket(h, 0.0, 0.0, h)
        }
    };
    let mut amps = vec![C64::new(1.0, 0.0)];
    for pair in 0..len / 2 {
        let local = if pair == 0 { first } else { singlet_sym() };
        let mut next = Vec::with_capacity(amps.len() * 4);
        for a in &amps {
            next.extend(local.iter().map(|b| a * b));
        }
        amps = next;
    }
    Ok(PureState::from_amplitudes(amps))
}

/// Whether `op` on `k` qubits commutes with the total charge and the global flip.
pub fn check_strong_symmetry(op: MatRef<'_, C64>) -> Result<bool> {
    let (rows, cols) = (op.nrows(), op.ncols());
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if !rows.is_power_of_two() {
        return Err(Error::NotQubitOperator(rows));
    }
    let mask = rows - 1;
    let mut residual: f64 = 0.0;
    for i in 0..rows {
        for j in 0..rows {
            // [op, N]_{ij} = op_ij (n_j - n_i)
            if i.count_ones() != j.count_ones() {
                residual = residual.max(op[(i, j)].norm());
            }
            // [op, X^k]_{ij} = op_{i, ~j} - op_{~i, j}
            residual = residual.max((op[(i, j ^ mask)] - op[(i ^ mask, j)]).norm());
        }
    }
    Ok(residual < SYMMETRY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn is_zero(m: &Mat4) -> bool {
        m.max_abs_diff(&Mat4::zeros()) == 0.0
    }

    #[test]
    fn projectors_complete_and_orthogonal() {
        let set = projector_set();
        assert_eq!(set.p1 + set.ps + set.pa, Mat4::identity());
        assert!(is_zero(&(set.ps * set.pa)));
        assert!(is_zero(&(set.p1 * set.ps)));
        assert!(is_zero(&(set.p1 * set.pa)));
        for p in [set.p1, set.ps, set.pa] {
            assert_eq!(p * p, p);
            assert_eq!(p.adjoint(), p);
        }
        let ket00 = ket(1.0, 0.0, 0.0, 0.0);
        assert_eq!(set.p1.apply(ket00), ket00);
    }

    #[test]
    fn identity_gate_at_zero_angles() {
        assert_eq!(sym_gate(GateParams::new(0.0, 0.0)), Mat4::identity());
    }

    #[test]
    fn gate_is_unitary() {
        let u = sym_gate(GateParams::new(0.7, 1.9));
        assert!((u * u.adjoint()).max_abs_diff(&Mat4::identity()) < 1e-14);
    }

    #[test]
    fn single_qubit_x_breaks_symmetry() {
        let x = faer::Mat::from_fn(2, 2, |i, j| C64::new(if i != j { 1.0 } else { 0.0 }, 0.0));
        assert!(!check_strong_symmetry(x.as_ref()).unwrap());
        let set = projector_set();
        for p in [set.p1, set.ps, set.pa] {
            assert!(check_strong_symmetry(p.as_faer().as_ref()).unwrap());
        }
    }

    #[test]
    fn symmetry_check_rejects_bad_shapes() {
        let m = faer::Mat::<C64>::zeros(2, 3);
        assert!(matches!(check_strong_symmetry(m.as_ref()), Err(Error::NotSquare { .. })));
        let m = faer::Mat::<C64>::zeros(3, 3);
        assert!(matches!(check_strong_symmetry(m.as_ref()), Err(Error::NotQubitOperator(3))));
    }

    #[test]
    fn initial_states_for_two_sites() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let zp = initial_state(ChargeLabel::ZeroPlus, 2).unwrap();
        let one = initial_state(ChargeLabel::One, 2).unwrap();
        let re = |s: &PureState| s.amplitudes().iter().map(|a| a.re).collect::<Vec<_>>();
        assert_eq!(re(&zp), vec![0.0, h, h, 0.0]);
        assert_eq!(re(&one), vec![h, 0.0, 0.0, h]);
        assert!(initial_state(ChargeLabel::One, 3).is_err());
        assert!(initial_state(ChargeLabel::One, 0).is_err());
    }

    #[test]
    fn initial_states_are_flip_even_with_definite_charge() {
        for len in [2, 4, 6, 8] {
            for label in ChargeLabel::BOTH {
                let s = initial_state(label, len).unwrap();
                let amps = s.amplitudes();
                let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
                assert!((norm - 1.0).abs() < 1e-14);
                let mask = amps.len() - 1;
                for (i, a) in amps.iter().enumerate() {
                    assert!((a - amps[i ^ mask]).norm() < 1e-15, "flip parity");
                    if a.norm() > 0.0 {
                        let q = i.count_ones() as i64 - (len / 2) as i64;
                        assert_eq!(q.abs(), label.charge_offset());
                    }
                }
            }
        }
    }

    #[test]
    fn sector_dimensions() {
        let dim = |q, parity, len| sector_dimension(SectorSpec { charge_offset: q, parity }, len).unwrap();
        assert_eq!(dim(0, Parity::Even, 2), 1);
        assert_eq!(dim(0, Parity::Unresolved, 4), 6);
        assert!(sector_dimension(SectorSpec { charge_offset: 3, parity: Parity::Even }, 4).is_err());
    }

    #[test]
    fn parity_even_dimension_by_enumeration() {
        // Count flip-symmetric combinations of half-filling bitstrings directly.
        for len in [2usize, 4, 6, 8] {
            let mask = (1usize << len) - 1;
            let mut seen = std::collections::HashSet::new();
            let mut orbits = 0;
            for b in 0..=mask {
                if b.count_ones() as usize == len / 2 && seen.insert(b) {
                    seen.insert(b ^ mask);
                    orbits += 1;
                }
            }
            let spec = SectorSpec { charge_offset: 0, parity: Parity::Even };
            assert_eq!(sector_dimension(spec, len).unwrap(), orbits as u128);
        }
    }

    #[test]
    fn parities_sum_to_binomial_counts() {
        for len in [2usize, 4, 6, 10] {
            for q in 0..=(len as i64 / 2) {
                let d = |parity| sector_dimension(SectorSpec { charge_offset: q, parity }, len).unwrap();
                let doublet = if q == 0 { 1 } else { 2 };
                assert_eq!(d(Parity::Even) + d(Parity::Odd), doublet * d(Parity::Unresolved));
            }
        }
    }

    proptest! {
        #[test]
        fn gates_are_symmetric_unitaries(theta in 0.0..std::f64::consts::TAU, phi in 0.0..std::f64::consts::TAU) {
            let u = sym_gate(GateParams::new(theta, phi));
            prop_assert!((u * u.adjoint()).max_abs_diff(&Mat4::identity()) < 1e-14);
            prop_assert!(check_strong_symmetry(u.as_faer().as_ref()).unwrap());
            let s = u.apply(singlet_sym());
            let expect = singlet_sym().map(|x| x * C64::from_polar(1.0, phi));
            for k in 0..4 {
                prop_assert!((s[k] - expect[k]).norm() < 1e-14);
            }
        }
    }
}
