//! Photon-counting run: DE estimated from registered counts against the model.

use snspd::detector::{simulate_counts, CountingOptions, DetectorChannelModel};

fn main() -> snspd::Result<()> {
    let model = DetectorChannelModel::from_json(include_str!("../data/systems/ch1.json"))?;
    for flux in [1e4, 1e6, 1e7, 3e7] {
        let r = simulate_counts(&model, &CountingOptions::new(flux, 1.0, 1550e-9, 0.98, 7))?;
        println!(
            "flux {flux:>8.0e}/s  counts {:>9}  DE est {:.4}  model {:.4}{}",
            r.registered_counts,
            r.estimated_de.unwrap_or(f64::NAN),
            r.true_de,
            if r.saturated { "  (saturated)" } else { "" }
        );
    }
    Ok(())
}
