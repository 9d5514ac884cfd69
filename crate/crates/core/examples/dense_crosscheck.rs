//! Run the dense-oracle cross-check suite and print one line per check.

use chargelab::runner::validate::run_all;

fn main() -> chargelab::Result<()> {
    for c in run_all(1)? {
        let status = if c.passed() { "ok" } else { "FAIL" };
        println!("{:<28} n={:<4} max_err={:<10.2e} tol={:<8.0e} {status}", c.name, c.n, c.max_err, c.tol);
    }
    Ok(())
}
