//! DE at 100 Hz and 2 kHz dark rate for the bundled four-channel system.

use std::path::Path;

use snspd::system::{channel_report, SystemConfig};

fn main() -> snspd::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/systems/four_channel.json");
    let system = SystemConfig::load(&path)?;
    println!("{} at {} K", system.name, system.base_temperature);
    print!(
        "{}",
        channel_report(&system, 1550e-9, None).to_aligned_text()
    );
    Ok(())
}
