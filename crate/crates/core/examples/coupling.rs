//! Fraction of a centred Gaussian spot landing on a 15 um square, and the
//! effect of a lateral offset.

use snspd::beamtrain::{square_aperture_coupling, square_aperture_coupling_offset};

fn main() {
    println!("{:>6}  {:>8}  {:>12}", "w_um", "centred", "3 um offset");
    for w in [2.0, 4.6, 7.5, 10.0, 15.0, 24.6] {
        let w = w * 1e-6;
        println!(
            "{:>6.1}  {:>8.4}  {:>12.4}",
            w * 1e6,
            square_aperture_coupling(w, 7.5e-6),
            square_aperture_coupling_offset(w, 7.5e-6, 3e-6, 0.0)
        );
    }
}
