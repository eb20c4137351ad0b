//! Monte Carlo photon counting with non-paralyzable dead time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::{dark_rate, system_de, DetectorChannelModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingOptions {
    pub photon_flux: f64,
    pub duration: f64,
    pub wavelength: f64,
    pub bias: f64,
    pub seed: u64,
    /// subtract the model dark rate before dividing by the flux
    pub subtract_dark: bool,
    /// overrides the model's dead time when set
    pub dead_time: Option<f64>,
}

impl CountingOptions {
    pub fn new(photon_flux: f64, duration: f64, wavelength: f64, bias: f64, seed: u64) -> Self {
        Self {
            photon_flux,
            duration,
            wavelength,
            bias,
            seed,
            subtract_dark: true,
            dead_time: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountResult {
    pub registered_counts: u64,
    /// photon-origin plus dark events before dead-time losses
    pub raw_events: u64,
    /// `None` when the photon flux is zero
    pub estimated_de: Option<f64>,
    pub true_de: f64,
    pub dark_rate: f64,
    /// set when `flux · DE · τ ≥ 1`
    pub saturated: bool,
}

/// Draws photon arrivals at `photon_flux`, keeps each with probability DE,
/// merges the survivors with dark events and applies dead time.
/// Identical options give identical results.
pub fn simulate_counts(
    model: &DetectorChannelModel,
    opts: &CountingOptions,
) -> Result<CountResult> {
    if !(opts.photon_flux >= 0.0) || !opts.photon_flux.is_finite() {
        return Err(Error::Domain(format!(
            "photon flux must be >= 0, got {}",
            opts.photon_flux
        )));
    }
    if !(opts.duration > 0.0) || !opts.duration.is_finite() {
        return Err(Error::Domain(format!(
            "duration must be > 0, got {}",
            opts.duration
        )));
    }
    let tau = opts.dead_time.unwrap_or(model.dead_time);
    if !(tau >= 0.0) {
        return Err(Error::Domain("dead time must be >= 0".into()));
    }
    let de = system_de(model, opts.wavelength, opts.bias)?;
    let dcr = dark_rate(model, opts.bias)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut photons = Stream::new(opts.photon_flux)?;
    let mut darks = Stream::new(dcr)?;
    let mut next_photon = photons.next(&mut rng);
    let mut next_dark = darks.next(&mut rng);
    let mut last_registered = f64::NEG_INFINITY;
    let (mut registered, mut raw) = (0u64, 0u64);
    loop {
        let t = if next_photon <= next_dark {
            let t = next_photon;
            next_photon = photons.next(&mut rng);
            if t >= opts.duration {
                break;
            }
            if rand::Rng::random::<f64>(&mut rng) >= de {
                continue;
            }
            t
        } else {
            let t = next_dark;
            next_dark = darks.next(&mut rng);
            t
        };
        if t >= opts.duration {
            break;
        }
        raw += 1;
        if t - last_registered >= tau {
            registered += 1;
            last_registered = t;
        }
    }

    let rate = registered as f64 / opts.duration;
    let estimated_de = (opts.photon_flux > 0.0).then(|| {
        let signal = if opts.subtract_dark { rate - dcr } else { rate };
        signal / opts.photon_flux
    });
    Ok(CountResult {
        registered_counts: registered,
        raw_events: raw,
        estimated_de,
        true_de: de,
        dark_rate: dcr,
        saturated: opts.photon_flux * de * tau >= 1.0,
    })
}

/// Arrival times of a homogeneous Poisson process.
struct Stream {
    clock: f64,
    exp: Option<Exp<f64>>,
}

impl Stream {
    fn new(rate: f64) -> Result<Self> {
        let exp = if rate > 0.0 {
            Some(Exp::new(rate).map_err(|e| Error::Domain(format!("rate {rate}: {e}")))?)
        } else {
            None
        };
        Ok(Self { clock: 0.0, exp })
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.exp {
            Some(e) => {
                self.clock += e.sample(rng);
                self.clock
            }
            None => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DEFAULT_DEAD_TIME;

    fn model(de_amp: f64, r0: f64) -> DetectorChannelModel {
        DetectorChannelModel {
            channel_id: "c".into(),
            coupling_efficiency: de_amp,
            absorptance: vec![(1.55e-6, 1.0)],
            registering_midpoint: 0.5,
            registering_steepness: 0.01,
            dark_prefactor: r0,
            dark_exponent: 1.0,
            dead_time: DEFAULT_DEAD_TIME,
            critical_current: 17.6e-6,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = model(0.3, 10.0);
        let o = CountingOptions::new(1e5, 0.5, 1.55e-6, 0.99, 7);
        assert_eq!(
            simulate_counts(&m, &o).unwrap(),
            simulate_counts(&m, &o).unwrap()
        );
        let o2 = CountingOptions { seed: 8, ..o };
        assert_ne!(
            simulate_counts(&m, &o).unwrap().registered_counts,
            simulate_counts(&m, &o2).unwrap().registered_counts
        );
    }

    #[test]
    fn zero_flux_counts_only_darks() {
        let m = model(0.3, 1000.0 / 1f64.exp());
        let r = simulate_counts(&m, &CountingOptions::new(0.0, 2.0, 1.55e-6, 1.0, 1)).unwrap();
        assert!(r.estimated_de.is_none());
        let expect = 2000.0;
        assert!((r.registered_counts as f64 - expect).abs() < 5.0 * expect.sqrt());
    }

    #[test]
    fn dead_time_throughput() {
        // DE ≈ 1 and no dark counts: registered rate must follow r/(1 + rτ)
        let m = model(1.0, 0.0);
        let r_in = 1e7;
        let o = CountingOptions::new(r_in, 0.02, 1.55e-6, 1.0, 3);
        let res = simulate_counts(&m, &o).unwrap();
        let de = res.true_de;
        let rate = r_in * de;
        let expect = rate / (1.0 + rate * DEFAULT_DEAD_TIME);
        let got = res.registered_counts as f64 / 0.02;
        assert!(((got - expect) / expect).abs() < 0.01, "{got} vs {expect}");
        assert!(!res.saturated);
        let hot = CountingOptions {
            photon_flux: 3e7,
            duration: 1e-4,
            ..o
        };
        assert!(simulate_counts(&m, &hot).unwrap().saturated);
    }

    #[test]
    fn invalid_inputs() {
        let m = model(0.3, 1.0);
        assert!(simulate_counts(&m, &CountingOptions::new(-1.0, 1.0, 1.55e-6, 0.9, 0)).is_err());
        assert!(simulate_counts(&m, &CountingOptions::new(1.0, 0.0, 1.55e-6, 0.9, 0)).is_err());
        assert!(simulate_counts(&m, &CountingOptions::new(1.0, 1.0, 1.55e-6, 1.5, 0)).is_err());
    }
}
