//! Peak bond dimension of the noisy decoder against chain length.

use chargelab::decoders::{bond_scaling, ChiDefinition};
use chargelab::mps::TruncationPolicy;

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::default();
    let sampler = TruncationPolicy::capped(256);
    let scaling = bond_scaling(&[6, 8, 10, 12], 0.3, 8, &policy, &sampler, 5, &ChiDefinition::ALL)?;
    for r in &scaling.rows {
        println!("{:<16} L={:<3} median {:>6.1} range [{}, {}]", r.definition.tag(), r.len, r.median_chi, r.min_chi, r.max_chi);
    }
    for (def, fit) in &scaling.fits {
        println!("{:<16} chi ~ L^{:.2} (+/- {:.2})", def.tag(), fit.exponent, fit.exponent_stderr);
    }
    if let Some((def, fit)) = scaling.nearest(2.5) {
        println!("closest to 2.5: {} with {:.2}", def.tag(), fit.exponent);
    }
    Ok(())
}
