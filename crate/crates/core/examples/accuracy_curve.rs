//! Decoding accuracy against measurement rate for two sizes, and where the
//! curves cross.

use chargelab::decoders::{accuracy, decode, threshold_crossing, DecoderKind};
use chargelab::mps::TruncationPolicy;
use chargelab::rng::{derive_seed, stream};
use chargelab::statevector::run_generation;
use chargelab::symmetry::ChargeLabel;
use rayon::prelude::*;

const N: usize = 200;

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::default();
    let rates: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
    for kind in [DecoderKind::Optimal, DecoderKind::Noisy] {
        let mut curves = Vec::new();
        for len in [6usize, 10] {
            let mut curve = Vec::new();
            for &p in &rates {
                let posts = (0..N)
                    .into_par_iter()
                    .map(|i| {
                        let seed = derive_seed(7, &[len as u64, p.to_bits(), i as u64]);
                        let (rec, _) = run_generation(ChargeLabel::BOTH[i % 2], len, p, seed)?;
                        decode(&rec, kind, &policy)
                    })
                    .collect::<chargelab::Result<Vec<_>>>()?;
                let mut coin = stream(derive_seed(7, &[len as u64, p.to_bits()]), 1);
                curve.push(accuracy(kind, len, p, &posts, &mut coin)?);
            }
            let line: Vec<String> = curve.iter().map(|a| format!("{:.3}", a.accuracy)).collect();
            println!("{kind:>8} L={len:<3} {}", line.join(" "));
            curves.push(curve);
        }
        match threshold_crossing(&curves[0], &curves[1]) {
            Ok(fit) => println!("{kind:>8} crossing p = {:.3} [{:.3}, {:.3}]", fit.p_cross, fit.ci_lo, fit.ci_hi),
            Err(e) => println!("{kind:>8} no crossing: {e}"),
        }
    }
    Ok(())
}
