//! Absorptance spectrum of the cavity-backed meander next to the bare film.

use snspd::materials::MaterialDb;
use snspd::thinfilm::{absorptance_spectrum, wavelength_grid, LayerStack, Polarization};

fn main() -> snspd::Result<()> {
    let db = MaterialDb::from_env()?;
    let grid = wavelength_grid(1300e-9, 1600e-9, 7)?;
    let cavity = absorptance_spectrum(
        &LayerStack::reference_device(),
        &db,
        &grid,
        0.0,
        Polarization::TE,
    )?;
    let bare = absorptance_spectrum(
        &LayerStack::bare_meander(),
        &db,
        &grid,
        0.0,
        Polarization::TE,
    )?;
    println!("{:>8}  {:>8}  {:>8}", "nm", "cavity", "bare");
    for (c, b) in cavity.rows.iter().zip(&bare.rows) {
        println!("{:>8.0}  {:>8.4}  {:>8.4}", c[0], c[3], b[3]);
    }
    Ok(())
}
