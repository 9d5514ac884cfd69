//! Posteriors, accuracy curves, P_corr histograms and the scaling fits built on them.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::circuit::{MeasurementRecord, Model};
use crate::density::{
    channel_scramble, likelihoods_noisy, sample_noisy_trajectory, DensityMps,
};
use crate::error::{Error, Result};
use crate::mps::TruncationPolicy;
use crate::rng::derive_seed;
use crate::statevector::{likelihood_exact, model_initial_state};
use crate::stats::{linear_fit, median};
use crate::symmetry::ChargeLabel;

/// Log likelihoods closer than this are a tie.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Optimal,
    Noisy,
}

impl DecoderKind {
    pub fn tag(self) -> &'static str {
        match self {
            DecoderKind::Optimal => "optimal",
            DecoderKind::Noisy => "noisy",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(DecoderKind::Optimal),
            "noisy" => Some(DecoderKind::Noisy),
            _ => None,
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub truth: ChargeLabel,
    pub loglik_corr: f64,
    pub loglik_wrong: f64,
    /// Posterior probability of the true label.
    pub p_corr: f64,
    /// Label with the larger posterior; meaningless when `tie` is set.
    pub predicted: ChargeLabel,
    pub tie: bool,
}

/// Posterior under a uniform prior.
pub fn posterior(truth: ChargeLabel, loglik_corr: f64, loglik_wrong: f64) -> Result<Posterior> {
    posterior_with_prior(truth, loglik_corr, loglik_wrong, 0.5)
}

/// Posterior with prior probability `prior_corr` on the true label.
pub fn posterior_with_prior(
    truth: ChargeLabel,
    loglik_corr: f64,
    loglik_wrong: f64,
    prior_corr: f64,
) -> Result<Posterior> {
    if loglik_corr.is_nan() || loglik_wrong.is_nan() || !(0.0 < prior_corr && prior_corr < 1.0) {
        return Err(Error::DegeneratePosterior);
    }
    let lc = loglik_corr + prior_corr.ln();
    let lw = loglik_wrong + (1.0 - prior_corr).ln();
    if lc == f64::NEG_INFINITY && lw == f64::NEG_INFINITY {
        return Err(Error::DegeneratePosterior);
    }
    let p_corr = if lw == f64::NEG_INFINITY {
        1.0
    } else if lc == f64::NEG_INFINITY {
        0.0
    } else {
        let d = lw - lc;
        if d > 0.0 {
            let e = (-d).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + d.exp())
        }
    };
    let tie = lc.is_finite() && lw.is_finite() && (lc - lw).abs() <= TIE_TOL;
    let predicted = if p_corr >= 0.5 { truth } else { truth.other() };
    Ok(Posterior { truth, loglik_corr, loglik_wrong, p_corr, predicted, tie })
}

/// Optimal decoder: exact replay of the record on both hypotheses.
pub fn decode_optimal(record: &MeasurementRecord) -> Result<Posterior> {
    let lc = likelihood_exact(record, record.label)?;
    let lw = likelihood_exact(record, record.label.other())?;
    posterior(record.label, lc, lw)
}

/// Noisy decoder: dual evolution of the identity under the dephased dynamics.
pub fn decode_noisy(record: &MeasurementRecord, policy: &TruncationPolicy) -> Result<Posterior> {
    Ok(decode_noisy_with_peak(record, policy)?.0)
}

/// Noisy decoder that also reports the peak bond dimension of the dual evolution.
pub fn decode_noisy_with_peak(record: &MeasurementRecord, policy: &TruncationPolicy) -> Result<(Posterior, usize)> {
    let (ll, peak) = likelihoods_noisy(record, policy)?;
    let idx = |l: ChargeLabel| ChargeLabel::BOTH.iter().position(|&x| x == l).unwrap();
    let post = posterior(record.label, ll[idx(record.label)], ll[idx(record.label.other())])?;
    Ok((post, peak))
}

pub fn decode(record: &MeasurementRecord, kind: DecoderKind, policy: &TruncationPolicy) -> Result<Posterior> {
    match kind {
        DecoderKind::Optimal => decode_optimal(record),
        DecoderKind::Noisy => decode_noisy(record, policy),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracySummary {
    pub decoder: DecoderKind,
    pub len: usize,
    pub p: f64,
    pub n_records: usize,
    pub accuracy: f64,
    pub stderr: f64,
}

/// Fraction of correct predictions; ties are settled by a fair coin from `rng`.
pub fn accuracy<R: Rng + ?Sized>(
    decoder: DecoderKind,
    len: usize,
    p: f64,
    posteriors: &[Posterior],
    rng: &mut R,
) -> Result<AccuracySummary> {
    if posteriors.is_empty() {
        return Err(Error::EmptyInput("no posteriors to score"));
    }
    let correct = posteriors
        .iter()
        .filter(|post| if post.tie { rng.random::<bool>() } else { post.predicted == post.truth })
        .count();
    let n = posteriors.len();
    let acc = correct as f64 / n as f64;
    Ok(AccuracySummary {
        decoder,
        len,
        p,
        n_records: n,
        accuracy: acc,
        stderr: (acc * (1.0 - acc) / n as f64).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges spanning `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Counts normalized to unit integral.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().zip(self.edges.windows(2)).map(|(&c, w)| c as f64 / (n * (w[1] - w[0]))).collect()
    }
}

/// Histogram of `p_corr` over `bins` equal bins of `[0, 1]`; `1` falls in the last bin.
pub fn pcorr_histogram(posteriors: &[Posterior], bins: usize) -> Result<Histogram> {
    if posteriors.is_empty() {
        return Err(Error::EmptyInput("no posteriors to histogram"));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for post in posteriors {
        let b = ((post.p_corr * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Fraction of posteriors with `p_corr > 1/2`.
pub fn mass_above_half(posteriors: &[Posterior]) -> f64 {
    posteriors.iter().filter(|p| p.p_corr > 0.5 && !p.tie).count() as f64 / posteriors.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdFit {
    pub len_small: usize,
    pub len_large: usize,
    pub p_cross: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Where a step from negative to positive best describes `diff`: the split that
/// minimizes the total wrong-signed mass, interpolated linearly inside its interval.
fn crossing_of(ps: &[f64], diff: &[f64]) -> Option<f64> {
    let n = ps.len();
    let mut best: Option<(f64, usize)> = None;
    for k in 0..n - 1 {
        if !(diff[k] < 0.0 && diff[k + 1] >= 0.0) {
            continue;
        }
        let cost: f64 = diff[..=k].iter().map(|d| d.max(0.0)).sum::<f64>()
            + diff[k + 1..].iter().map(|d| (-d).max(0.0)).sum::<f64>();
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, k));
        }
    }
    let (_, k) = best?;
    let t = diff[k] / (diff[k] - diff[k + 1]);
    Some(ps[k] + t * (ps[k + 1] - ps[k]))
}

/// Crossing of two accuracy curves (same `p` grid, ascending). The interval
/// comes from the crossings of the difference shifted by ± its joint standard error.
pub fn threshold_crossing(small: &[AccuracySummary], large: &[AccuracySummary]) -> Result<ThresholdFit> {
    if small.len() != large.len() {
        return Err(Error::LengthMismatch(small.len(), large.len()));
    }
    if small.len() < 2 {
        return Err(Error::DegenerateFit("need at least two rates"));
    }
    let ps: Vec<f64> = small.iter().map(|a| a.p).collect();
    if large.iter().zip(&ps).any(|(a, &p)| a.p != p) || ps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateFit("rate grids differ or are not ascending"));
    }
    let diff: Vec<f64> = small.iter().zip(large).map(|(s, l)| l.accuracy - s.accuracy).collect();
    let se: Vec<f64> = small.iter().zip(large).map(|(s, l)| (s.stderr.powi(2) + l.stderr.powi(2)).sqrt()).collect();
    let p_cross = crossing_of(&ps, &diff).ok_or(Error::DegenerateFit("accuracy curves do not cross"))?;
    let shifted = |sign: f64| {
        let d: Vec<f64> = diff.iter().zip(&se).map(|(d, s)| d + sign * s).collect();
        crossing_of(&ps, &d)
    };
    let early = shifted(1.0).unwrap_or(ps[0]).min(p_cross);
    let late = shifted(-1.0).unwrap_or(ps[ps.len() - 1]).max(p_cross);
    Ok(ThresholdFit { len_small: small[0].len, len_large: large[0].len, p_cross, ci_lo: early, ci_hi: late })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor_ln: f64,
    pub exponent_stderr: f64,
    /// Exponent ± two standard errors.
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Least-squares fit of `ln y = α ln x + c`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateFit("power law needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let f = linear_fit(&lx, &ly)?;
    Ok(PowerLawFit {
        exponent: f.slope,
        prefactor_ln: f.intercept,
        exponent_stderr: f.slope_stderr,
        ci_lo: f.slope - 2.0 * f.slope_stderr,
        ci_hi: f.slope + 2.0 * f.slope_stderr,
    })
}

/// Which run's peak bond dimension is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChiDefinition {
    /// Dual evolution of the identity over a record of `L` layers.
    DualDecode,
    /// `L²` layers of the dephasing channel applied to `|ψ_Q⟩⟨ψ_Q|`.
    ChannelScramble,
}

impl ChiDefinition {
    pub const ALL: [ChiDefinition; 2] = [ChiDefinition::DualDecode, ChiDefinition::ChannelScramble];

    pub fn tag(self) -> &'static str {
        match self {
            ChiDefinition::DualDecode => "dual_decode",
            ChiDefinition::ChannelScramble => "channel_scramble",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.tag() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondScalingRow {
    pub definition: ChiDefinition,
    pub len: usize,
    pub p: f64,
    pub n: usize,
    pub median_chi: f64,
    pub min_chi: usize,
    pub max_chi: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BondScaling {
    pub rows: Vec<BondScalingRow>,
    pub fits: Vec<(ChiDefinition, PowerLawFit)>,
}

impl BondScaling {
    /// The definition whose exponent lies closest to `target`.
    pub fn nearest(&self, target: f64) -> Option<(ChiDefinition, PowerLawFit)> {
        self.fits.iter().copied().min_by(|a, b| (a.1.exponent - target).abs().total_cmp(&(b.1.exponent - target).abs()))
    }
}

/// Peak bond dimensions per length, with their power-law fits.
///
/// Dual-decode records are Born-sampled from the dephased dynamics under
/// `sampler` so that large `L` stays tractable; labels alternate and record
/// `i` at length `L` uses seed `derive_seed(seed, [L, p bits, i])`. The
/// scrambling run is deterministic and done once per label.
pub fn bond_scaling(
    lens: &[usize],
    p: f64,
    n_records: usize,
    policy: &TruncationPolicy,
    sampler: &TruncationPolicy,
    seed: u64,
    definitions: &[ChiDefinition],
) -> Result<BondScaling> {
    if lens.len() < 3 {
        return Err(Error::DegenerateFit("bond scaling needs at least three sizes"));
    }
    if n_records == 0 {
        return Err(Error::EmptyInput("no records per size"));
    }
    let mut rows = Vec::new();
    for &len in lens {
        for &def in definitions {
            let chis: Vec<usize> = match def {
                ChiDefinition::DualDecode => (0..n_records)
                    .into_par_iter()
                    .map(|i| {
                        let label = ChargeLabel::BOTH[i % 2];
                        let s = derive_seed(seed, &[len as u64, p.to_bits(), i as u64]);
                        let traj = sample_noisy_trajectory(label, len, p, s, len, sampler)?;
                        Ok(decode_noisy_with_peak(&traj.record, policy)?.1)
                    })
                    .collect::<Result<_>>()?,
                ChiDefinition::ChannelScramble => ChargeLabel::BOTH
                    .iter()
                    .map(|&label| {
                        let mut dm = DensityMps::initial_projector(label, len)?;
                        channel_scramble(&mut dm, len * len, policy)?;
                        Ok(dm.peak_bond())
                    })
                    .collect::<Result<_>>()?,
            };
            let as_f: Vec<f64> = chis.iter().map(|&c| c as f64).collect();
            rows.push(BondScalingRow {
                definition: def,
                len,
                p,
                n: chis.len(),
                median_chi: median(&as_f),
                min_chi: *chis.iter().min().unwrap(),
                max_chi: *chis.iter().max().unwrap(),
            });
        }
    }
    let mut fits = Vec::new();
    for &def in definitions {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.definition == def).map(|r| (r.len as f64, r.median_chi)).unzip();
        fits.push((def, fit_power_law(&xs, &ys)?));
    }
    Ok(BondScaling { rows, fits })
}

/// `p_corr` after each of the given numbers of hybrid layers.
pub fn posterior_vs_time(
    record: &MeasurementRecord,
    decoder: DecoderKind,
    checkpoints: &[usize],
    policy: &TruncationPolicy,
) -> Result<Vec<(usize, f64)>> {
    let n_layers = record.hybrid.n_layers();
    if let Some(&bad) = checkpoints.iter().find(|&&t| t > n_layers) {
        return Err(Error::InconsistentRecord(format!("checkpoint {bad} exceeds {n_layers} layers")));
    }
    match decoder {
        DecoderKind::Noisy => checkpoints
            .iter()
            .map(|&t| Ok((t, decode_noisy(&record.truncated(t), policy)?.p_corr)))
            .collect(),
        DecoderKind::Optimal => {
            let prepare = |label| -> Result<_> {
                let mut st = model_initial_state(record.model, label, record.len)?;
                st.apply_schedule(&record.scramble)?;
                Ok(st)
            };
            let (mut corr, mut wrong) = (prepare(record.label)?, prepare(record.label.other())?);
            let mut at_layer = Vec::with_capacity(n_layers + 1);
            at_layer.push(posterior(record.label, corr.log_norm(), wrong.log_norm())?.p_corr);
            let last = checkpoints.iter().copied().max().unwrap_or(0);
            for layer in &record.hybrid.layers[..last] {
                for slot in layer.iter().flatten() {
                    corr.apply_slot(slot)?;
                    wrong.apply_slot(slot)?;
                }
                at_layer.push(posterior(record.label, corr.log_norm(), wrong.log_norm())?.p_corr);
            }
            Ok(checkpoints.iter().map(|&t| (t, at_layer[t])).collect())
        }
    }
}

/// First checkpoint with `p_corr > 0.99`.
pub fn sharpening_time(series: &[(usize, f64)]) -> Option<usize> {
    series.iter().find(|(_, p)| *p > 0.99).map(|(t, _)| *t)
}

/// Guard used by pipelines that only handle one model per decoder.
pub fn check_model(record: &MeasurementRecord, decoder: DecoderKind) -> Result<()> {
    if decoder == DecoderKind::Noisy && record.model != Model::U1xZ2 {
        return Err(Error::InconsistentRecord("the noisy decoder handles u1xz2 records; use the u1 decoder".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::statevector::run_generation_with;
    use proptest::prelude::*;

    fn summary(p: f64, acc: f64, se: f64, len: usize) -> AccuracySummary {
        AccuracySummary { decoder: DecoderKind::Optimal, len, p, n_records: 100, accuracy: acc, stderr: se }
    }

    #[test]
    fn posterior_closed_forms() {
        let t = ChargeLabel::ZeroPlus;
        let eq = posterior(t, -3.0, -3.0).unwrap();
        assert_eq!(eq.p_corr, 0.5);
        assert!(eq.tie);
        let sure = posterior(t, -3.0, f64::NEG_INFINITY).unwrap();
        assert_eq!(sure.p_corr, 1.0);
        assert_eq!(sure.predicted, t);
        let wrong = posterior(t, f64::NEG_INFINITY, -1.0).unwrap();
        assert_eq!(wrong.p_corr, 0.0);
        assert_eq!(wrong.predicted, ChargeLabel::One);
        let far = posterior(t, -1000.0, -1010.0).unwrap();
        assert!((far.p_corr - 1.0 / (1.0 + (-10f64).exp())).abs() < 1e-15);
        assert!(matches!(posterior(t, f64::NEG_INFINITY, f64::NEG_INFINITY), Err(Error::DegeneratePosterior)));
    }

    #[test]
    fn decoders_on_trivial_records() {
        let policy = TruncationPolicy::default();
        let (rec, _) = run_generation_with(ChargeLabel::ZeroPlus, 4, 0.0, 1, 16).unwrap();
        for kind in [DecoderKind::Optimal, DecoderKind::Noisy] {
            let post = decode(&rec, kind, &policy).unwrap();
            assert!((post.p_corr - 0.5).abs() < 1e-12, "{kind}: {}", post.p_corr);
        }
        // L = 2, no scramble, every slot measured: the first outcome reveals the label
        let (rec, _) = run_generation_with(ChargeLabel::One, 2, 1.0, 5, 0).unwrap();
        let first = rec.hybrid.slots().next().unwrap();
        assert_eq!(first.kind, crate::circuit::SlotKind::Measure(Some(crate::symmetry::PairOutcome::One)));
        assert_eq!(decode_optimal(&rec).unwrap().p_corr, 1.0);
    }

    #[test]
    fn accuracy_scoring() {
        let sure: Vec<Posterior> = (0..10).map(|_| posterior(ChargeLabel::One, 0.0, f64::NEG_INFINITY).unwrap()).collect();
        let a = accuracy(DecoderKind::Noisy, 4, 0.5, &sure, &mut stream(1, 0)).unwrap();
        assert_eq!(a.accuracy, 1.0);
        assert_eq!(a.stderr, 0.0);
        let ties: Vec<Posterior> = (0..4000).map(|_| posterior(ChargeLabel::One, -2.0, -2.0).unwrap()).collect();
        let a = accuracy(DecoderKind::Noisy, 4, 0.5, &ties, &mut stream(2, 0)).unwrap();
        assert!((a.accuracy - 0.5).abs() < 3.0 * a.stderr);
        assert!(accuracy(DecoderKind::Noisy, 4, 0.5, &[], &mut stream(2, 0)).is_err());
    }

    #[test]
    fn histogram_rules() {
        let ties: Vec<Posterior> = (0..7).map(|_| posterior(ChargeLabel::One, -2.0, -2.0).unwrap()).collect();
        let h = pcorr_histogram(&ties, 20).unwrap();
        assert_eq!(h.total(), 7);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[10], 7);
        let d = h.density();
        assert!((d.iter().sum::<f64>() / 20.0 - 1.0).abs() < 1e-12);
        let sure = [posterior(ChargeLabel::One, 0.0, f64::NEG_INFINITY).unwrap()];
        assert_eq!(pcorr_histogram(&sure, 4).unwrap().counts, vec![0, 0, 0, 1]);
        assert!(pcorr_histogram(&[], 4).is_err());
        assert_eq!(mass_above_half(&ties), 0.0);
    }

    #[test]
    fn crossing_by_interpolation() {
        let ps = [0.1, 0.2, 0.3, 0.4];
        let small: Vec<_> = ps.iter().map(|&p| summary(p, 0.5 + p, 0.01, 8)).collect();
        let large: Vec<_> = ps.iter().map(|&p| summary(p, 0.5 + 2.0 * p - 0.25, 0.01, 12)).collect();
        let fit = threshold_crossing(&small, &large).unwrap();
        assert!((fit.p_cross - 0.25).abs() < 1e-12);
        assert!(fit.ci_lo < 0.25 && fit.ci_hi > 0.25);
        let parallel: Vec<_> = ps.iter().map(|&p| summary(p, 0.6 + p, 0.01, 12)).collect();
        assert!(threshold_crossing(&small, &parallel).is_err());
    }

    #[test]
    fn power_law_fits() {
        let xs = [8.0, 12.0, 16.0, 20.0, 24.0];
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let f = fit_power_law(&xs, &sq).unwrap();
        assert!((f.exponent - 2.0).abs() < 0.01);
        assert!(f.ci_hi - f.ci_lo < 0.02);
        let flat = fit_power_law(&xs, &[5.0; 5]).unwrap();
        assert!(flat.exponent.abs() < 1e-12);
        assert!(fit_power_law(&xs, &[0.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn posterior_series() {
        let policy = TruncationPolicy::default();
        let (rec, _) = run_generation_with(ChargeLabel::One, 6, 0.6, 9, 36).unwrap();
        let checkpoints: Vec<usize> = (0..=6).collect();
        for kind in [DecoderKind::Optimal, DecoderKind::Noisy] {
            let series = posterior_vs_time(&rec, kind, &checkpoints, &policy).unwrap();
            assert!((series[0].1 - 0.5).abs() < 1e-12);
            let last = decode(&rec, kind, &policy).unwrap().p_corr;
            assert!((series[6].1 - last).abs() < 1e-12);
        }
        let (flat, _) = run_generation_with(ChargeLabel::One, 4, 0.0, 9, 16).unwrap();
        let series = posterior_vs_time(&flat, DecoderKind::Optimal, &[0, 2, 4], &policy).unwrap();
        assert!(series.iter().all(|(_, p)| (p - 0.5).abs() < 1e-12));
        assert!(posterior_vs_time(&flat, DecoderKind::Optimal, &[5], &policy).is_err());
        assert_eq!(sharpening_time(&[(0, 0.5), (3, 0.995), (4, 1.0)]), Some(3));
    }

    #[test]
    fn bond_scaling_small() {
        let policy = TruncationPolicy::default();
        let b = bond_scaling(&[4, 6, 8], 0.3, 3, &policy, &policy, 5, &ChiDefinition::ALL).unwrap();
        assert_eq!(b.rows.len(), 6);
        assert!(b.rows.iter().all(|r| r.min_chi >= 1 && r.max_chi <= 4usize.pow(4)));
        let scramble: Vec<_> = b.rows.iter().filter(|r| r.definition == ChiDefinition::ChannelScramble).collect();
        assert!(scramble.windows(2).all(|w| w[1].median_chi >= w[0].median_chi));
        assert_eq!(b.fits.len(), 2);
        assert!(b.nearest(2.5).is_some());
        let again = bond_scaling(&[4, 6, 8], 0.3, 3, &policy, &policy, 5, &ChiDefinition::ALL).unwrap();
        assert_eq!(b, again);
        assert!(bond_scaling(&[4, 6], 0.3, 3, &policy, &policy, 5, &ChiDefinition::ALL).is_err());
    }

    proptest! {
        #[test]
        fn posterior_is_shift_invariant(a in -50.0f64..0.0, b in -50.0f64..0.0, shift in -100.0f64..0.0) {
            let p1 = posterior(ChargeLabel::ZeroPlus, a, b).unwrap();
            let p2 = posterior(ChargeLabel::ZeroPlus, a + shift, b + shift).unwrap();
            prop_assert!((p1.p_corr - p2.p_corr).abs() < 1e-12);
            prop_assert_eq!(p1.predicted, p2.predicted);
        }
    }
}
