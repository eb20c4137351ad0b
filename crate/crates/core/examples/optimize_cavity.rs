//! Dielectric spacer thickness maximising meander absorptance over 1300-1600 nm.

use snspd::designopt::{band_average, optimize_cavity, CavityDesignProblem};
use snspd::materials::MaterialDb;
use snspd::thinfilm::LayerStack;

fn main() -> snspd::Result<()> {
    let db = MaterialDb::bundled();
    let problem = CavityDesignProblem::reference();
    let design = optimize_cavity(&problem, &db)?;
    println!(
        "spacer {:.1} nm -> band-averaged A {:.4}",
        design.thicknesses[0] * 1e9,
        design.objective
    );

    let nominal = band_average(
        &LayerStack::reference_device(),
        &db,
        problem.band,
        problem.points,
    )?;
    let bare = band_average(
        &LayerStack::bare_meander(),
        &db,
        problem.band,
        problem.points,
    )?;
    println!("as-built 250 nm spacer  {nominal:.4}");
    println!(
        "no cavity               {bare:.4}  (ratio {:.2})",
        nominal / bare
    );
    Ok(())
}
