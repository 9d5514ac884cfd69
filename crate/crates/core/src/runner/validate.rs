//! Cross-checks of the tensor-network engines against the dense oracle.

use std::io::Write;
use std::path::PathBuf;

use crate::circuit::SlotKind;
use crate::decoders::posterior;
use crate::density::{channel_scramble, likelihoods_noisy, DensityMps};
use crate::error::{Error, Result};
use crate::mps::TruncationPolicy;
use crate::oracle::{dense_classical_likelihood, dense_oracle, DenseOperator, OracleMode};
use crate::statevector::{likelihood_exact, run_generation_with};
use crate::swssb::renyi2_profile;
use crate::symmetry::ChargeLabel;
use crate::u1::{generate_u1_record, likelihood_classical};

use super::{log, write_file, ExperimentConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub n: usize,
    pub max_err: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_err <= self.tol
    }
}

fn check(name: &'static str, tol: f64, errs: impl IntoIterator<Item = f64>) -> Check {
    let (mut n, mut max_err) = (0, 0.0f64);
    for e in errs {
        n += 1;
        // NaN must fail
        max_err = if e.is_nan() { f64::INFINITY } else { max_err.max(e) };
    }
    Check { name, n, max_err, tol }
}

const RATES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn dense_of(dm: &DensityMps) -> Result<DenseOperator> {
    DenseOperator::from_real(dm.len(), &dm.to_dense_matrix())
}

/// Noisy-decoder posteriors against dense density-matrix evolution, `L = 4`.
pub fn noisy_decoder_vs_dense(n: usize, seed: u64) -> Result<Check> {
    let policy = TruncationPolicy::default();
    let mut errs = Vec::with_capacity(n);
    for i in 0..n {
        let label = ChargeLabel::BOTH[i % 2];
        let p = RATES[i % RATES.len()];
        let (rec, _) = run_generation_with(label, 4, p, seed.wrapping_add(i as u64), 16)?;
        let (ll, _) = likelihoods_noisy(&rec, &policy)?;
        let [d0, d1] = ChargeLabel::BOTH.map(|l| dense_oracle(&rec, l, OracleMode::Channel));
        let (d0, d1) = (d0?, d1?);
        let (mps_corr, mps_wrong, dense_corr, dense_wrong) = match label {
            ChargeLabel::ZeroPlus => (ll[0], ll[1], d0, d1),
            ChargeLabel::One => (ll[1], ll[0], d1, d0),
        };
        let a = posterior(label, mps_corr, mps_wrong)?.p_corr;
        let b = posterior(label, dense_corr.ln(), dense_wrong.max(0.0).ln())?.p_corr;
        errs.push((a - b).abs());
    }
    Ok(check("noisy_decoder_vs_dense", 1e-8, errs))
}

/// Exact replay against dense unitary evolution, `L = 4`.
pub fn exact_replay_vs_dense(n: usize, seed: u64) -> Result<Check> {
    let mut errs = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (rec, _) = run_generation_with(ChargeLabel::BOTH[i % 2], 4, RATES[i % 9], seed ^ (i as u64) << 8, 16)?;
        for hyp in ChargeLabel::BOTH {
            let dense = dense_oracle(&rec, hyp, OracleMode::Unitary)?;
            errs.push((likelihood_exact(&rec, hyp)?.exp() - dense).abs());
        }
    }
    Ok(check("exact_replay_vs_dense", 1e-10, errs))
}

/// Sampled log weights against replay of the true label, `L = 6`.
pub fn born_replay(n: usize, seed: u64) -> Result<Check> {
    let errs: Vec<f64> = (0..n)
        .map(|i| {
            let (rec, _) = run_generation_with(ChargeLabel::BOTH[i % 2], 6, RATES[i % 9], seed + 1000 + i as u64, 36)?;
            Ok((likelihood_exact(&rec, rec.label)? - rec.log_weight).abs())
        })
        .collect::<Result<_>>()?;
    Ok(check("born_replay", 1e-10, errs))
}

/// Rényi-2 correlator of channel-evolved states against dense evaluation.
pub fn renyi2_vs_dense(seed: u64) -> Result<Check> {
    let policy = TruncationPolicy::default();
    let mut errs = Vec::new();
    for (k, len) in [4usize, 6, 6].into_iter().enumerate() {
        let (rec, _) = run_generation_with(ChargeLabel::ZeroPlus, len, 0.3, seed + 77 + k as u64, 0)?;
        let mut dm = DensityMps::sector_mixed(ChargeLabel::ZeroPlus, len)?;
        for slot in rec.hybrid.slots() {
            match slot.kind {
                SlotKind::Gate(_) => dm.apply_channel(slot.pos, &policy)?,
                SlotKind::Measure(Some(o)) => dm.apply_forced_measurement(slot.pos, o, &policy)?,
                _ => return Err(Error::InconsistentRecord("unexpected slot".into())),
            }
        }
        if dm.is_null() {
            continue;
        }
        let dense = dense_of(&dm)?;
        for site0 in 0..len - 1 {
            for (x, v) in renyi2_profile(&dm, site0)?.into_iter().enumerate() {
                errs.push((v - dense.renyi2_corr(site0, x + 1)?).abs());
            }
        }
    }
    Ok(check("renyi2_vs_dense", 1e-8, errs))
}

/// Trace preservation, idempotence and strong symmetry of the channel, `L ≤ 6`.
pub fn channel_algebra() -> Result<Vec<Check>> {
    let policy = TruncationPolicy::default();
    let (mut drift, mut idem, mut sym) = (Vec::new(), Vec::new(), Vec::new());
    for len in [4usize, 6] {
        let mut dm = DensityMps::initial_projector(ChargeLabel::ZeroPlus, len)?;
        for _ in 0..len {
            let before = dm.trace().value();
            channel_scramble(&mut dm, 1, &policy)?;
            drift.push((dm.trace().value() - before).abs());
            let dense = dense_of(&dm)?;
            sym.push(dense.symmetry_residual());
        }
        for bond in 1..len {
            let mut once = dm.clone();
            once.apply_channel(bond, &policy)?;
            let mut twice = once.clone();
            twice.apply_channel(bond, &policy)?;
            idem.push(once.hs_distance(&twice)?);
        }
    }
    Ok(vec![
        check("channel_trace_drift", 1e-10, drift),
        check("channel_idempotence", 1e-10, idem),
        check("channel_strong_symmetry", 1e-9, sym),
    ])
}

/// Analytic `σ_Q` against channel scrambling of the pure initial state.
pub fn sector_state_vs_scrambling() -> Result<Check> {
    let policy = TruncationPolicy::default();
    let mut errs = Vec::new();
    for len in [4usize, 6] {
        for label in ChargeLabel::BOTH {
            // the charge-one doublet relaxes more slowly
            let steps = if label == ChargeLabel::One { 2 * len * len } else { len * len };
            let mut dm = DensityMps::initial_projector(label, len)?;
            channel_scramble(&mut dm, steps, &policy)?;
            errs.push(dm.hs_distance(&DensityMps::sector_mixed(label, len)?)?);
        }
    }
    Ok(check("sector_state_vs_scrambling", 1e-6, errs))
}

/// Classical U(1) decoder against dense enumeration, `L = 4`.
pub fn classical_decoder_vs_dense(n: usize, seed: u64) -> Result<Check> {
    let policy = TruncationPolicy::default();
    let mut errs = Vec::new();
    for i in 0..n {
        let (rec, _) = generate_u1_record(ChargeLabel::BOTH[i % 2], 4, RATES[i % 9], seed + 500 + i as u64, 16)?;
        for hyp in ChargeLabel::BOTH {
            let mps = likelihood_classical(&rec, hyp, &policy)?.exp();
            errs.push((mps - dense_classical_likelihood(&rec, hyp)?).abs());
        }
    }
    Ok(check("classical_decoder_vs_dense", 1e-10, errs))
}

/// Every check, in a fixed order.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let mut out = vec![
        noisy_decoder_vs_dense(50, seed)?,
        exact_replay_vs_dense(20, seed)?,
        born_replay(100, seed)?,
        renyi2_vs_dense(seed)?,
        sector_state_vs_scrambling()?,
        classical_decoder_vs_dense(20, seed)?,
    ];
    out.extend(channel_algebra()?);
    Ok(out)
}

/// Run the suite and write `validate.csv`; fails if any check fails.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let checks = run_all(cfg.seed)?;
    let path = cfg.out_dir.join("validate.csv");
    write_file(&path, |w| {
        writeln!(w, "check,n,max_err,tol,pass")?;
        for c in &checks {
            writeln!(w, "{},{},{:e},{:e},{}", c.name, c.n, c.max_err, c.tol, c.passed())?;
        }
        Ok(())
    })?;
    for c in &checks {
        log::event("validate", &[
            ("check", c.name.into()),
            ("n", c.n.into()),
            ("max_err", c.max_err.into()),
            ("pass", c.passed().into()),
        ]);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    if !failed.is_empty() {
        return Err(Error::Validation(failed.join(", ")));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in run_all(3).unwrap() {
            assert!(c.passed(), "{c:?}");
            assert!(c.n > 0, "{c:?}");
        }
    }

    #[test]
    fn nan_fails() {
        assert!(!check("x", 1.0, [0.0, f64::NAN]).passed());
    }
}
