//! How quickly the posterior of the true charge sharpens with circuit depth.

use chargelab::decoders::{posterior_vs_time, sharpening_time, DecoderKind};
use chargelab::mps::TruncationPolicy;
use chargelab::statevector::run_generation;
use chargelab::symmetry::ChargeLabel;

fn main() -> chargelab::Result<()> {
    let policy = TruncationPolicy::default();
    let len = 10;
    let checkpoints: Vec<usize> = (0..=len).collect();
    for p in [0.2, 0.5] {
        let (rec, _) = run_generation(ChargeLabel::One, len, p, 21)?;
        for kind in [DecoderKind::Optimal, DecoderKind::Noisy] {
            let series = posterior_vs_time(&rec, kind, &checkpoints, &policy)?;
            let line: Vec<String> = series.iter().map(|(_, pc)| format!("{pc:.2}")).collect();
            let t = sharpening_time(&series).map_or("-".into(), |t| t.to_string());
            println!("p={p} {kind:>8} t*={t:>2}  {}", line.join(" "));
        }
    }
    Ok(())
}
