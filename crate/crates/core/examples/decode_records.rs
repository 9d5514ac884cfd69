//! Optimal and noisy posteriors of the same records side by side.

use chargelab::decoders::{decode_noisy_with_peak, decode_optimal};
use chargelab::mps::TruncationPolicy;
use chargelab::statevector::run_generation;
use chargelab::symmetry::ChargeLabel;

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::default();
    let len = 10;
    println!("{:>4} {:>5} {:>10} {:>10} {:>5}", "p", "label", "optimal", "noisy", "chi");
    for (k, p) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        for i in 0..4 {
            let (rec, _) = run_generation(ChargeLabel::BOTH[i % 2], len, p, 1000 * k as u64 + i as u64)?;
            let opt = decode_optimal(&rec)?;
            let (noisy, chi) = decode_noisy_with_peak(&rec, &policy)?;
            println!("{p:>4} {:>5} {:>10.4} {:>10.4} {chi:>5}", rec.label.symbol(), opt.p_corr, noisy.p_corr);
        }
    }
    Ok(())
}
