//! Recovers channel parameters from synthetic observations of a known model.

use snspd::detector::fit::Param;
use snspd::detector::{
    dark_rate, fit_channel, system_de, DetectorChannelModel, FitOptions, ObservationPoint,
};

fn main() -> snspd::Result<()> {
    let truth = DetectorChannelModel::from_json(include_str!("../data/systems/ch2.json"))?;
    let wl = 1550e-9;
    let obs = [0.95, 0.97, 0.98, 0.99]
        .iter()
        .map(|&b| {
            Ok(ObservationPoint::at_bias(
                b,
                Some(system_de(&truth, wl, b)?),
                Some(dark_rate(&truth, b)?),
                wl,
            ))
        })
        .collect::<snspd::Result<Vec<_>>>()?;

    let start = DetectorChannelModel {
        coupling_efficiency: 0.5,
        registering_midpoint: 0.93,
        dark_prefactor: truth.dark_prefactor * 1e3,
        dark_exponent: truth.dark_exponent * 0.9,
        ..truth.clone()
    };
    let free = [
        Param::Coupling,
        Param::Midpoint,
        Param::DarkPrefactor,
        Param::DarkExponent,
    ];
    let report = fit_channel(&start, &obs, &FitOptions::only(&free))?;
    println!(
        "{} iterations, residual {:.2e}",
        report.iterations, report.residual_norm
    );
    let m = &report.model;
    println!(
        "coupling  {:.5} (true {:.5})",
        m.coupling_efficiency, truth.coupling_efficiency
    );
    println!(
        "midpoint  {:.5} (true {:.5})",
        m.registering_midpoint, truth.registering_midpoint
    );
    println!(
        "k         {:.3} (true {:.3})",
        m.dark_exponent, truth.dark_exponent
    );
    Ok(())
}
