//! The U(1) model: exact trajectories decoded by a classical Markov-chain
//! tensor network, plus the classical Rényi-2 correlator.

use chargelab::mps::TruncationPolicy;
use chargelab::swssb::compare_decay;
use chargelab::u1::{run_classical_swssb, u1_generate_and_decode};
use chargelab::symmetry::ChargeLabel;

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::default();
    let len = 10;
    for p in [0.1, 0.3, 0.6] {
        let posts = (0..40)
            .map(|i| u1_generate_and_decode(ChargeLabel::BOTH[i % 2], len, p, 40 + i as u64, len * len, &policy))
            .collect::<chargelab::Result<Vec<_>>>()?;
        let right = posts.iter().filter(|q| q.predicted == q.truth).count();
        let mean_pc = posts.iter().map(|q| q.p_corr).sum::<f64>() / posts.len() as f64;
        println!("p = {p}: {right}/{} correct, mean p_corr {mean_pc:.3}", posts.len());
    }

    let series = run_classical_swssb(16, 0.2, 30, &policy, 3, 6)?;
    let rows = series.rows()?;
    for r in &rows {
        println!("x = {:>2}  C2 = {:.4e}", r.x, r.mean_c2);
    }
    if let Ok(d) = compare_decay(&rows) {
        println!("prefers power law: {}", d.prefers_power_law());
    }
    Ok(())
}
