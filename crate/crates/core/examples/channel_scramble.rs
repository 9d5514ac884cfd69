//! Scramble the pure initial states with the symmetric channel and watch
//! them relax to the sector-mixed states. The result is checkpointed and
//! restored.

use chargelab::density::{channel_scramble, DensityMps};
use chargelab::mps::TruncationPolicy;
use chargelab::swssb::subsystem_charge_variance;
use chargelab::symmetry::ChargeLabel;

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::default();
    let len = 8;
    for label in ChargeLabel::BOTH {
        let target = DensityMps::sector_mixed(label, len)?;
        let mut dm = DensityMps::initial_projector(label, len)?;
        let mut done = 0;
        for steps in [len, len * len / 2, len * len, 2 * len * len] {
            channel_scramble(&mut dm, steps - done, &policy)?;
            done = steps;
            println!(
                "{:>3} steps={:<4} |rho - sigma| = {:.3e}  chi = {}",
                label.symbol(),
                steps,
                dm.hs_distance(&target)?,
                dm.max_bond()
            );
        }
        println!("    subsystem charge variance (l = L/2): {:.4}", subsystem_charge_variance(&dm, len / 2)?);

        let mut buf = Vec::new();
        dm.write_checkpoint(&mut buf)?;
        let back = DensityMps::read_checkpoint(buf.as_slice())?;
        println!("    checkpoint {} bytes, restored distance {:.1e}", buf.len(), back.hs_distance(&dm)?);
    }
    Ok(())
}
