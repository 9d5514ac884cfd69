//! Generate monitored trajectories, store them as JSONL, read them back and
//! replay each one on both charge hypotheses.
//!
//! ```text
//! cargo run --release --example generate_and_replay
//! ```

use chargelab::circuit::{read_records, write_records};
use chargelab::statevector::{likelihood_exact, run_generation};
use chargelab::symmetry::ChargeLabel;

fn main() -> chargelab::Result<()> {
    let (len, p) = (8, 0.3);
    let recs = (0..6)
        .map(|i| run_generation(ChargeLabel::BOTH[i % 2], len, p, 100 + i as u64).map(|(r, _)| r))
        .collect::<chargelab::Result<Vec<_>>>()?;

    let mut buf = Vec::new();
    write_records(&mut buf, &recs)?;
    let back = read_records(buf.as_slice())?;
    assert_eq!(back, recs);
    println!("{} records, {} bytes of JSONL", back.len(), buf.len());

    println!("{:>5} {:>4} {:>12} {:>12} {:>12}", "label", "meas", "ln w", "ln P(0,+)", "ln P(1)");
    for rec in &back {
        let l0 = likelihood_exact(rec, ChargeLabel::ZeroPlus)?;
        let l1 = likelihood_exact(rec, ChargeLabel::One)?;
        println!(
            "{:>5} {:>4} {:>12.6} {:>12.6} {:>12.6}",
            rec.label.symbol(),
            rec.hybrid.n_measurements(),
            rec.log_weight,
            l0,
            l1
        );
    }
    Ok(())
}
