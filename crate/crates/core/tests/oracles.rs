mod common;

use snspd::beamtrain::{
    propagate, square_aperture_coupling, square_aperture_coupling_offset, BeamTrain, InputMode,
    PackagingGeometry,
};
use snspd::designopt::{optimize_lens_train, LensDesignProblem};
use snspd::materials::MaterialDb;
use snspd::thinfilm::{stack_response, Layer, LayerStack, Polarization};

#[test]
fn tmm_matches_field_integration_for_device_stacks() {
    let db = MaterialDb::bundled();
    for stack in [LayerStack::reference_device(), LayerStack::bare_meander()] {
        for wl in [1300e-9, 1450e-9, 1550e-9, 1600e-9] {
            for deg in [0.0, 20.0, 35.0] {
                let angle = f64::to_radians(deg);
                let resolved = stack.resolve(&db, wl).unwrap();
                let oracle = common::integrate_te(&resolved, wl, angle, 0.02e-9);
                let tmm = stack_response(&stack, &db, wl, angle, Polarization::TE).unwrap();
                assert!(
                    (tmm.reflectance - oracle.reflectance).abs() < 1e-8,
                    "R {wl} {deg}"
                );
                assert!(
                    (tmm.transmittance - oracle.transmittance).abs() < 1e-8,
                    "T {wl} {deg}"
                );
                for (a, b) in tmm.absorptance.iter().zip(&oracle.absorptance) {
                    assert!((a - b).abs() < 1e-8, "A {a} vs {b} at {wl} {deg}");
                }
            }
        }
    }
}

#[test]
fn tmm_matches_field_integration_for_thick_dielectric_stack() {
    let db = MaterialDb::bundled();
    let stack = LayerStack::new(
        "vacuum",
        vec![
            Layer::new("SiO", 731e-9).unwrap(),
            Layer::new("MgO", 1210e-9).unwrap(),
            Layer::new("NbN", 7e-9).unwrap(),
            Layer::new("SiO", 95e-9).unwrap(),
        ],
        "MgO",
    )
    .unwrap();
    let wl = 1310e-9;
    let resolved = stack.resolve(&db, wl).unwrap();
    let oracle = common::integrate_te(&resolved, wl, 0.3, 0.05e-9);
    let tmm = stack_response(&stack, &db, wl, 0.3, Polarization::TE).unwrap();
    assert!((tmm.reflectance - oracle.reflectance).abs() < 1e-8);
    assert!((tmm.absorptance[2] - oracle.absorptance[2]).abs() < 1e-8);
}

#[test]
fn abcd_matches_angular_spectrum_for_bare_fiber() {
    let db = MaterialDb::bundled();
    let train = BeamTrain::packaged(
        1550e-9,
        InputMode::smf(1550e-9),
        None,
        &[],
        &PackagingGeometry::default(),
    );
    let abcd = propagate(&train, &db, None).unwrap().end;
    let oracle = common::bpm(&train.resolve(&db).unwrap(), 400e-6, 4096, 1e-6, 0.0, true);
    let rel = (oracle.end_w / abcd.w - 1.0).abs();
    assert!(rel < 0.01, "BPM {} vs ABCD {}", oracle.end_w, abcd.w);
}

#[test]
fn abcd_matches_angular_spectrum_through_grin_pair() {
    let db = MaterialDb::bundled();
    let design = optimize_lens_train(&LensDesignProblem::reference(50e-6), &db).unwrap();
    let end = propagate(&design.train, &db, None).unwrap().end;
    let resolved = design.train.resolve(&db).unwrap();
    let oracle = common::bpm(&resolved, 300e-6, 4096, 0.5e-6, 40e-6, true);
    let exact = common::bpm(&resolved, 300e-6, 4096, 0.5e-6, 40e-6, false);
    eprintln!("ABCD end {:.4e} waist {:.4e} | paraxial {:.4e} {:.4e} @{:.2e} | exact {:.4e} {:.4e} @{:.2e}", end.w, end.waist_radius, oracle.end_w, oracle.waist_w, oracle.waist_z, exact.end_w, exact.waist_w, exact.waist_z);
    assert!(
        (oracle.end_w / end.w - 1.0).abs() < 0.02,
        "end {} vs {}",
        oracle.end_w,
        end.w
    );
    assert!((oracle.waist_w / end.waist_radius - 1.0).abs() < 0.02);
}

#[test]
fn square_coupling_matches_monte_carlo() {
    for (w, a) in [(4.6e-6, 7.5e-6), (10e-6, 7.5e-6), (24.5e-6, 7.5e-6)] {
        let n = 400_000;
        let mc = common::monte_carlo_coupling(w, a, n, 11);
        let exact = square_aperture_coupling(w, a);
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt().max(1e-6);
        assert!(
            (mc - exact).abs() < 4.0 * sigma,
            "w {w}: mc {mc} vs {exact}"
        );
    }
}

#[test]
fn offset_coupling_hand_values() {
    // no offset reduces to the centred formula; a huge offset to zero
    let c = square_aperture_coupling_offset(8e-6, 7.5e-6, 0.0, 0.0);
    assert!((c - square_aperture_coupling(8e-6, 7.5e-6)).abs() < 1e-15);
    assert!(square_aperture_coupling_offset(2e-6, 7.5e-6, 40e-6, 0.0) < 1e-30);
    // erf(√2·a/w)² with a/w = 1/√2 gives erf(1)² = 0.710113...
    let c = square_aperture_coupling(1.0, 1.0 / 2f64.sqrt());
    assert!((c - 0.842_700_792_949_714_9f64.powi(2)).abs() < 1e-10);
}
