//! Spot radius along the bare-fiber package and along a designed lens train.

use snspd::beamtrain::{
    propagate, square_aperture_coupling, BeamTrain, InputMode, PackagingGeometry,
};
use snspd::designopt::{optimize_lens_train, LensDesignProblem};
use snspd::materials::MaterialDb;

fn main() -> snspd::Result<()> {
    let db = MaterialDb::bundled();
    let wl = 1550e-9;
    let bare = BeamTrain::packaged(
        wl,
        InputMode::smf(wl),
        None,
        &[],
        &PackagingGeometry::default(),
    );
    let lensed = optimize_lens_train(&LensDesignProblem::reference(400e-6), &db)?.train;

    for (label, train) in [("bare fiber", bare), ("GRIN pair", lensed)] {
        let profile = propagate(&train, &db, Some(100e-6))?;
        println!("{label}");
        for s in &profile.samples {
            println!(
                "  z {:>8.1} um   w {:>7.2} um   n {:.3}",
                s.z * 1e6,
                s.w * 1e6,
                s.medium_index
            );
        }
        let w = profile.end.w;
        println!(
            "  end w {:.2} um, coupling {:.4}\n",
            w * 1e6,
            square_aperture_coupling(w, 7.5e-6)
        );
    }
    Ok(())
}
