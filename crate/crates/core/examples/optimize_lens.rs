//! Designs the two-segment GRIN train for the standard 400 µm MgO package and
//! for a 50 µm thinned substrate.

use snspd::designopt::{optimize_lens_train, LensDesignProblem};
use snspd::materials::MaterialDb;

fn main() -> snspd::Result<()> {
    let db = MaterialDb::bundled();
    for substrate in [400e-6, 50e-6] {
        let problem = LensDesignProblem::reference(substrate);
        let t = std::time::Instant::now();
        let design = optimize_lens_train(&problem, &db)?;
        println!("MgO {:.0} um ({:.2?})", substrate * 1e6, t.elapsed());
        print!("{}", design.summary());
        println!(
            "coupling into 15 um square  {:.4}\n",
            design.coupling(15e-6)
        );
    }
    Ok(())
}
