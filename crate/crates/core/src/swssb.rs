//! Strong-to-weak symmetry breaking diagnostics: the Rényi-2 fidelity
//! correlator, its system-plus-apparatus aggregate and subsystem charge variance.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::circuit::Model;
use crate::density::{one_site_superop, sample_noisy_trajectory, DensityMps, TRACE_VEC};
use crate::error::{Error, Result};
use crate::mps::{LocalOp, TruncationPolicy};
use crate::rng::derive_seed;
use crate::stats::{compensated_sum, linear_fit, mean, std_err, LinearFit};
use crate::symmetry::ChargeLabel;

/// Correlator values below this are unresolved and reported as missing.
pub const C2_RESOLUTION: f64 = 1e-10;

const LOWER: [[f64; 2]; 2] = [[0.0, 1.0], [0.0, 0.0]];
const RAISE: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 0.0]];

/// Insertions `X ↦ σ⁻ X σ⁺` (reference site) and `X ↦ σ⁺ X σ⁻` (probe site).
pub fn hop_superops() -> &'static (LocalOp, LocalOp) {
    static OPS: OnceLock<(LocalOp, LocalOp)> = OnceLock::new();
    OPS.get_or_init(|| (one_site_superop(&LOWER, &RAISE), one_site_superop(&RAISE, &LOWER)))
}

fn check_positive_trace(dm: &DensityMps) -> Result<f64> {
    let tr = dm.trace();
    if tr.sign <= 0.0 {
        return Err(Error::NonPositiveTrace(tr.value()));
    }
    Ok(tr.ln_abs)
}

/// `C2(x)` for every `x = 1 ..= L-1-site0`.
pub fn renyi2_profile(dm: &DensityMps, site0: usize) -> Result<Vec<f64>> {
    check_positive_trace(dm)?;
    let (op0, opx) = hop_superops();
    dm.two_point_superop(site0, op0, opx)
}

/// `Tr(ρ ρ̂_x)/Tr(ρ²)` with `ρ̂_x = σ⁺_{site0+x} σ⁻_{site0} ρ σ⁺_{site0} σ⁻_{site0+x}`.
pub fn renyi2_corr(dm: &DensityMps, site0: usize, x: usize) -> Result<f64> {
    if x == 0 || site0 + x >= dm.len() {
        return Err(Error::SiteOutOfRange { site: site0 + x, len: dm.len() });
    }
    Ok(renyi2_profile(dm, site0)?[x - 1])
}

/// `ln Tr(σ²)` of the trace-normalized state.
pub fn ln_purity(dm: &DensityMps) -> Result<f64> {
    let ln_tr = check_positive_trace(dm)?;
    Ok(2.0 * (dm.log_scale() - ln_tr))
}

/// One trajectory's contribution to the aggregate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiTerm {
    /// `ln p(m)` of the Born-sampled outcomes.
    pub log_p: f64,
    /// `ln Tr(σ_m²)`.
    pub ln_purity: f64,
    /// `Tr(σ_m σ̂_m)/Tr(σ_m²)`.
    pub c2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiEstimate {
    pub value: f64,
    /// Delta-method standard error of the ratio.
    pub stderr: f64,
}

/// `Σ p_m² Tr(σσ̂)/Σ p_m² Tr(σ²)` estimated from Born-sampled trajectories,
/// so each term carries one extra factor `p_m` in both sums.
pub fn phi_aggregate(terms: &[PhiTerm]) -> Result<PhiEstimate> {
    if terms.is_empty() {
        return Err(Error::EmptyInput("no trajectories to aggregate"));
    }
    let ln_w: Vec<f64> = terms.iter().map(|t| t.log_p + t.ln_purity).collect();
    let top = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::WeightUnderflow);
    }
    let w: Vec<f64> = ln_w.iter().map(|l| (l - top).exp()).collect();
    let den = compensated_sum(w.iter().copied());
    let num = compensated_sum(w.iter().zip(terms).map(|(w, t)| w * t.c2));
    let value = num / den;
    let n = terms.len() as f64;
    let stderr = if terms.len() > 1 {
        let resid = compensated_sum(w.iter().zip(terms).map(|(w, t)| (w * (t.c2 - value)).powi(2)));
        (resid / (n - 1.0) * n).sqrt() / den
    } else {
        0.0
    };
    Ok(PhiEstimate { value, stderr })
}

/// `Var(N_ℓ)` over the leftmost `ell` sites of the normalized state.
pub fn subsystem_charge_variance(dm: &DensityMps, ell: usize) -> Result<f64> {
    let len = dm.len();
    if ell == 0 || ell > len {
        return Err(Error::SiteOutOfRange { site: ell, len });
    }
    let ln_tr = check_positive_trace(dm)?;
    const NUMBER: [f64; 4] = [0.0, 0.0, 0.0, 1.0];
    let expect = |sites: &[usize]| -> Result<f64> {
        let vecs: Vec<Vec<f64>> =
            (0..len).map(|j| if sites.contains(&j) { NUMBER.to_vec() } else { TRACE_VEC.to_vec() }).collect();
        let v = dm.trace_with(&vecs)?;
        Ok(if v.sign == 0.0 { 0.0 } else { v.sign * (v.ln_abs - ln_tr).exp() })
    };
    let singles: Vec<f64> = (0..ell).map(|j| expect(&[j])).collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    for j in 0..ell {
        for k in j + 1..ell {
            pairs.push(expect(&[j, k])?);
        }
    }
    let m1 = compensated_sum(singles.iter().copied());
    // n_j² = n_j
    let m2 = m1 + 2.0 * compensated_sum(pairs);
    Ok(m2 - m1 * m1)
}

/// Log-spaced distances `1 ..= L/2` (deduplicated), probing from `L/4` toward `3L/4`.
pub fn distance_grid(len: usize, points: usize) -> Vec<usize> {
    let top = (len / 2).max(1);
    let mut xs: Vec<usize> = (0..points.max(2))
        .map(|k| {
            let t = k as f64 / (points.max(2) - 1) as f64;
            (top as f64).powf(t).round() as usize
        })
        .collect();
    xs.dedup();
    xs
}

/// Reference site of the correlator.
pub fn reference_site(len: usize) -> usize {
    len / 4
}

/// Per-trajectory correlator values on a common distance grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorSeries {
    pub model: Model,
    pub len: usize,
    pub p: f64,
    pub site0: usize,
    pub distances: Vec<usize>,
    /// One entry per trajectory, aligned with `distances`.
    pub terms: Vec<Vec<PhiTerm>>,
    pub peak_bond: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorRow {
    pub model: Model,
    pub len: usize,
    pub p: f64,
    pub x: usize,
    pub mean_c2: f64,
    pub stderr: f64,
    pub n_traj: usize,
    pub missing: bool,
    /// `exp⟨ln C2⟩` with unresolved values clamped to the resolution.
    pub typical_c2: f64,
    pub phi_c2: f64,
}

impl CorrelatorSeries {
    pub fn n_traj(&self) -> usize {
        self.terms.len()
    }

    fn column(&self, k: usize) -> Vec<f64> {
        self.terms.iter().map(|t| t[k].c2).collect()
    }

    pub fn rows(&self) -> Result<Vec<CorrelatorRow>> {
        self.distances
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let col = self.column(k);
                let mean_c2 = mean(&col);
                let typical = mean(&col.iter().map(|c| c.max(C2_RESOLUTION).ln()).collect::<Vec<_>>()).exp();
                let phi = phi_aggregate(&self.terms.iter().map(|t| t[k]).collect::<Vec<_>>())?;
                Ok(CorrelatorRow {
                    model: self.model,
                    len: self.len,
                    p: self.p,
                    x,
                    mean_c2,
                    stderr: std_err(&col),
                    n_traj: col.len(),
                    missing: !(mean_c2 >= C2_RESOLUTION),
                    typical_c2: typical,
                    phi_c2: phi.value,
                })
            })
            .collect()
    }
}

/// Which functional form describes a decay better, by residual of the
/// straight-line fits of `ln C2` against `ln x` and against `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayComparison {
    pub power_law: LinearFit,
    pub exponential: LinearFit,
}

impl DecayComparison {
    pub fn prefers_power_law(&self) -> bool {
        self.power_law.rss < self.exponential.rss
    }
}

/// Fit the resolved points of a correlator profile; needs at least three.
pub fn compare_decay(rows: &[CorrelatorRow]) -> Result<DecayComparison> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| !r.missing).map(|r| (r.x as f64, r.mean_c2.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateFit("fewer than three resolved correlator points"));
    }
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    Ok(DecayComparison { power_law: linear_fit(&lx, &ys)?, exponential: linear_fit(&xs, &ys)? })
}

/// Correlator terms of one trajectory state on the given distances.
pub fn trajectory_terms(dm: &DensityMps, log_p: f64, site0: usize, distances: &[usize]) -> Result<Vec<PhiTerm>> {
    let profile = renyi2_profile(dm, site0)?;
    let ln_purity = ln_purity(dm)?;
    distances
        .iter()
        .map(|&x| {
            let c2 = *profile.get(x.wrapping_sub(1)).ok_or(Error::SiteOutOfRange { site: site0 + x, len: dm.len() })?;
            Ok(PhiTerm { log_p, ln_purity, c2 })
        })
        .collect()
}

/// `n_traj` dephased trajectories of `t = L` layers from `σ_{0,+}`, with
/// outcomes Born-sampled from the noisy state itself. Trajectory `i` uses seed
/// `derive_seed(seed, [L, p bits, i])`.
pub fn run_swssb_experiment(
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
            let traj = sample_noisy_trajectory(ChargeLabel::ZeroPlus, len, p, s, len, policy)?;
            let terms = trajectory_terms(&traj.state, traj.record.log_weight, site0, &distances)?;
            Ok((terms, traj.peak_bond))
        })
        .collect::<Result<_>>()?;
    let peak_bond = runs.iter().map(|r| r.1).max().unwrap_or(0);
    Ok(CorrelatorSeries {
        model: Model::U1xZ2,
        len,
        p,
        site0,
        distances,
        terms: runs.into_iter().map(|r| r.0).collect(),
        peak_bond,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::channel_scramble;
    use crate::mps::Mps;
    use crate::oracle::DenseOperator;
    use crate::circuit::SlotKind;
    use crate::statevector::run_generation_with;

    fn product_density(diag: &[[f64; 2]]) -> DensityMps {
        let vecs: Vec<Vec<f64>> = diag.iter().map(|d| vec![d[0], 0.0, 0.0, d[1]]).collect();
        DensityMps::from_mps(Mps::product(4, &vecs).unwrap()).unwrap()
    }

    fn dense_of(dm: &DensityMps) -> DenseOperator {
        DenseOperator::from_real(dm.len(), &dm.to_dense_matrix()).unwrap()
    }

    fn evolved_state(len: usize, seed: u64) -> DensityMps {
        let policy = TruncationPolicy::default();
        let (rec, _) = run_generation_with(ChargeLabel::ZeroPlus, len, 0.3, seed, 0).unwrap();
        let mut dm = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, len).unwrap();
        for slot in rec.hybrid.slots() {
            match slot.kind {
                SlotKind::Gate(_) => dm.apply_channel(slot.pos, &policy).unwrap(),
                SlotKind::Measure(Some(o)) => dm.apply_forced_measurement(slot.pos, o, &policy).unwrap(),
                _ => unreachable!(),
            }
        }
        dm
    }

    #[test]
    fn closed_form_anchors() {
        let mixed = DensityMps::identity(6).unwrap();
        for c in renyi2_profile(&mixed, 1).unwrap() {
            assert!((c - 0.25).abs() < 1e-14);
        }
        let empty = product_density(&[[1.0, 0.0]; 6]);
        assert!(renyi2_profile(&empty, 0).unwrap().iter().all(|&c| c == 0.0));
        assert!(renyi2_corr(&mixed, 2, 4).is_err());
        assert!(renyi2_corr(&mixed, 2, 0).is_err());
    }

    #[test]
    fn profile_matches_dense() {
        for (len, seed) in [(4usize, 1u64), (6, 2), (6, 3)] {
            let dm = evolved_state(len, seed);
            if dm.is_null() {
                continue;
            }
            let dense = dense_of(&dm);
            for site0 in 0..len - 1 {
                let got = renyi2_profile(&dm, site0).unwrap();
                for (k, &g) in got.iter().enumerate() {
                    let want = dense.renyi2_corr(site0, k + 1).unwrap();
                    assert!((g - want).abs() < 1e-8, "L={len} site0={site0} x={}: {g} vs {want}", k + 1);
                    assert!((-1e-8..=1.0 + 1e-8).contains(&g));
                }
            }
        }
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let mut dm = evolved_state(6, 4);
        let before = renyi2_profile(&dm, 1).unwrap();
        let mps = dm.mps().clone();
        let mut scaled = mps.clone();
        scaled.scale_by_ln(3.7);
        dm = DensityMps::from_mps(scaled).unwrap();
        let after = renyi2_profile(&dm, 1).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn purity_of_known_states() {
        let mixed = DensityMps::identity(4).unwrap();
        assert!((ln_purity(&mixed).unwrap() + 4.0 * 2f64.ln()).abs() < 1e-12);
        let pure = product_density(&[[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        assert!(ln_purity(&pure).unwrap().abs() < 1e-12);
    }

    #[test]
    fn aggregate_rules() {
        let t = PhiTerm { log_p: -3.0, ln_purity: -1.0, c2: 0.3 };
        let one = phi_aggregate(&[t]).unwrap();
        assert_eq!(one.value, 0.3);
        let many = phi_aggregate(&[t; 17]).unwrap();
        assert!((many.value - 0.3).abs() < 1e-15);
        assert!(many.stderr < 1e-15);
        let heavy = PhiTerm { log_p: -1.0, ln_purity: -1.0, c2: 0.9 };
        let light = PhiTerm { log_p: -1.0 - 2f64.ln(), ln_purity: -1.0, c2: 0.0 };
        assert!((phi_aggregate(&[heavy, light]).unwrap().value - 0.6).abs() < 1e-14);
        let dead = PhiTerm { log_p: f64::NEG_INFINITY, ln_purity: 0.0, c2: 0.1 };
        assert!(matches!(phi_aggregate(&[dead]), Err(Error::WeightUnderflow)));
        assert!(phi_aggregate(&[]).is_err());
        // far below f64 range in linear space
        let tiny = PhiTerm { log_p: -2000.0, ..t };
        assert_eq!(phi_aggregate(&[tiny, tiny]).unwrap().value, 0.3);
    }

    #[test]
    fn charge_variance_anchors() {
        let sigma = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, 6).unwrap();
        assert!(subsystem_charge_variance(&sigma, 6).unwrap().abs() < 1e-12);
        let neel = product_density(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        for ell in 1..=4 {
            assert!(subsystem_charge_variance(&neel, ell).unwrap().abs() < 1e-14);
        }
        let half = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, 4).unwrap();
        assert!((subsystem_charge_variance(&half, 2).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let dm = evolved_state(6, 5);
        let dense = dense_of(&dm);
        for ell in 1..=6 {
            let want = dense.charge_variance(ell).unwrap();
            assert!((subsystem_charge_variance(&dm, ell).unwrap() - want).abs() < 1e-10);
        }
        assert!(subsystem_charge_variance(&dm, 0).is_err());
    }

    #[test]
    fn grid_shape() {
        assert_eq!(distance_grid(24, 6), vec![1, 2, 3, 4, 7, 12]);
        assert_eq!(distance_grid(4, 6), vec![1, 2]);
        assert_eq!(reference_site(24), 6);
        assert!(reference_site(24) + 12 < 24);
    }

    #[test]
    fn decay_forms_are_told_apart() {
        let row = |x: usize, c: f64| CorrelatorRow {
            model: Model::U1xZ2,
            len: 24,
            p: 0.1,
            x,
            mean_c2: c,
            stderr: 0.0,
            n_traj: 1,
            missing: c < C2_RESOLUTION,
            typical_c2: c,
            phi_c2: c,
        };
        let xs = [1usize, 2, 3, 5, 8, 12];
        let power: Vec<_> = xs.iter().map(|&x| row(x, 0.2 * (x as f64).powf(-1.3))).collect();
        assert!(compare_decay(&power).unwrap().prefers_power_law());
        let expo: Vec<_> = xs.iter().map(|&x| row(x, 0.2 * (-0.8 * x as f64).exp())).collect();
        assert!(!compare_decay(&expo).unwrap().prefers_power_law());
        assert!(compare_decay(&expo[..2]).is_err());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let policy = TruncationPolicy::default();
        let a = run_swssb_experiment(6, 0.3, 4, &policy, 11, 4).unwrap();
        let b = run_swssb_experiment(6, 0.3, 4, &policy, 11, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.site0, 1);
        let rows = a.rows().unwrap();
        assert_eq!(rows.len(), a.distances.len());
        assert!(rows.iter().all(|r| r.n_traj == 4 && r.mean_c2 >= -1e-10 && r.mean_c2 <= 1.0));
    }

    #[test]
    fn scrambled_state_is_charge_sharp_overall() {
        let policy = TruncationPolicy::default();
        let mut dm = DensityMps::initial_projector(ChargeLabel::ZeroPlus, 6).unwrap();
        channel_scramble(&mut dm, 4, &policy).unwrap();
        assert!(subsystem_charge_variance(&dm, 6).unwrap().abs() < 1e-10);
    }
}
