//! BB84 sifted rate and QBER versus fiber loss, and the gain from doubling
//! every channel's coupling.

use std::path::Path;

use snspd::system::{bb84_budget, compare_generations, LinkParams, SystemConfig};

fn main() -> snspd::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/systems/four_channel.json");
    let system = SystemConfig::load(&path)?;
    let link = LinkParams::default();

    let b = bb84_budget(&system, &link)?;
    println!("10 dB: sifted {:.4e} Hz, QBER {:.4}", b.sifted_rate, b.qber);
    for c in &b.channels {
        println!(
            "  {} bias {:.4} DE {:.3} DCR {:.0} Hz",
            c.channel_id, c.bias, c.de, c.dcr
        );
    }

    let older = system.with_scaled_coupling(0.5)?;
    let table = compare_generations(&older, &system, &link, &[0.0, 10.0, 20.0, 30.0, 40.0])?;
    print!("{}", table.to_aligned_text());
    Ok(())
}
