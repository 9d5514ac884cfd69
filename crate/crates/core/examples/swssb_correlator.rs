//! Rényi-2 correlator of the dephased, monitored dynamics at a few rates,
//! with power-law and exponential fits of its decay.

use chargelab::mps::TruncationPolicy;
use chargelab::swssb::{compare_decay, run_swssb_experiment};

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::capped(128);
    let len = 12;
    for p in [0.1, 0.3] {
        let series = run_swssb_experiment(len, p, 40, &policy, 11, 6)?;
        println!("p = {p}, site0 = {}, peak chi = {}", series.site0, series.peak_bond);
        println!("{:>3} {:>12} {:>10} {:>12} {:>12}", "x", "mean C2", "stderr", "typical", "ratio");
        let rows = series.rows()?;
        for r in &rows {
            println!("{:>3} {:>12.4e} {:>10.2e} {:>12.4e} {:>12.4e}", r.x, r.mean_c2, r.stderr, r.typical_c2, r.phi_c2);
        }
        match compare_decay(&rows) {
            Ok(d) => println!(
                "rss power law {:.3e}, exponential {:.3e}, prefers power law: {}\n",
                d.power_law.rss,
                d.exponential.rss,
                d.prefers_power_law()
            ),
            Err(e) => println!("decay fit skipped: {e}\n"),
        }
    }
    Ok(())
}
