//! Detection-efficiency chain, dark counts and photon counting.
//!
//! System detection efficiency is modelled as the product of optical coupling
//! into the active area, meander absorptance and a bias-dependent registering
//! probability:
//!
//! ```text
//! DE(λ, i) = η_c · A(λ) · 1 / (1 + exp(−(i − i0)/s))
//! DCR(i)   = R0 · exp(k·i)
//! ```
//!
//! with `i = I_b / I_c`. Both forms are phenomenological; the coupling and
//! absorptance come from the optics modules and the remaining parameters are
//! calibrated with [`fit::fit_channel`].

pub mod counting;
pub mod fit;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sweep::SweepResult;

pub use counting::{simulate_counts, CountResult, CountingOptions};
pub use fit::{fit_channel, FitOptions, FitReport};

/// Geometry and superconducting parameters of one nanowire device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParameters {
    pub wire_width: f64,
    pub film_thickness: f64,
    pub fill_factor: f64,
    pub active_area_side: f64,
    pub critical_temperature: f64,
    pub critical_current_density: f64,
}

/// Range of critical current density reported for the meanders, A/m².
pub const JC_RANGE: (f64, f64) = (4e10, 7e10);

impl DeviceParameters {
    /// 80 nm wide, 4 nm thick NbN meander over 15 × 15 µm² at 62.5 % fill.
    pub fn reference() -> Self {
        Self {
            wire_width: 80e-9,
            film_thickness: 4e-9,
            fill_factor: 0.625,
            active_area_side: 15e-6,
            critical_temperature: 10.35,
            critical_current_density: 5.5e10,
        }
    }

    pub fn critical_current(&self) -> f64 {
        self.critical_current_density * self.wire_width * self.film_thickness
    }

    /// Critical-current span implied by [`JC_RANGE`] for this cross-section.
    pub fn critical_current_bounds(&self) -> (f64, f64) {
        let area = self.wire_width * self.film_thickness;
        (JC_RANGE.0 * area, JC_RANGE.1 * area)
    }

    /// Rejects a configured `Ic` outside [`critical_current_bounds`](Self::critical_current_bounds).
    pub fn validate_critical_current(&self, ic: f64) -> Result<()> {
        let (lo, hi) = self.critical_current_bounds();
        // relative slack for decimal round-off in config files
        let tol = 1e-9 * hi;
        if ic < lo - tol || ic > hi + tol {
            return Err(Error::Range(format!(
                "critical current {:.3} uA outside [{:.1}, {:.1}] uA allowed by Jc and wire cross-section",
                ic * 1e6,
                lo * 1e6,
                hi * 1e6
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.wire_width,
            self.film_thickness,
            self.active_area_side,
            self.critical_temperature,
            self.critical_current_density,
        ];
        if positive.iter().any(|v| !(*v > 0.0))
            || !(self.fill_factor > 0.0 && self.fill_factor <= 1.0)
        {
            return Err(Error::Domain(format!("invalid device parameters {self:?}")));
        }
        Ok(())
    }
}

/// Per-channel efficiency chain and dark-count parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorChannelModel {
    pub channel_id: String,
    /// η_c, fraction of fiber power landing on the active area
    pub coupling_efficiency: f64,
    /// `(wavelength [m], meander absorptance)` sorted by wavelength
    pub absorptance: Vec<(f64, f64)>,
    pub registering_midpoint: f64,
    pub registering_steepness: f64,
    /// Hz
    pub dark_prefactor: f64,
    pub dark_exponent: f64,
    /// seconds
    pub dead_time: f64,
    /// amperes
    pub critical_current: f64,
}

/// Non-paralyzable dead time used when none is configured.
pub const DEFAULT_DEAD_TIME: f64 = 40e-9;

impl DetectorChannelModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::Domain(format!(
                "channel `{}`: {what}",
                self.channel_id
            )))
        };
        if !(0.0..=1.0).contains(&self.coupling_efficiency) {
            return bad(&format!(
                "coupling efficiency {} not in [0, 1]",
                self.coupling_efficiency
            ));
        }
        if self.absorptance.is_empty() {
            return bad("absorptance map is empty");
        }
        for w in self.absorptance.windows(2) {
            if !(w[1].0 > w[0].0) {
                return bad("absorptance map wavelengths must be strictly ascending");
            }
        }
        if self
            .absorptance
            .iter()
            .any(|(wl, a)| !(*wl > 0.0) || !(0.0..=1.0).contains(a))
        {
            return bad("absorptance values must lie in [0, 1]");
        }
        if !(self.registering_midpoint > 0.0 && self.registering_midpoint < 1.0) {
            return bad(&format!(
                "registering midpoint {} not in (0, 1)",
                self.registering_midpoint
            ));
        }
        if !(self.registering_steepness > 0.0) {
            return bad("registering steepness must be > 0");
        }
        if !(self.dark_prefactor >= 0.0) || !(self.dark_exponent > 0.0) {
            return bad("dark prefactor must be >= 0 and exponent > 0");
        }
        if !(self.dead_time >= 0.0) || !(self.critical_current > 0.0) {
            return bad("dead time must be >= 0 and critical current > 0");
        }
        // channel files carry no wire geometry; the reference cross-section applies
        DeviceParameters::reference().validate_critical_current(self.critical_current)
    }

    /// Meander absorptance at `wavelength`, linearly interpolated.
    pub fn absorptance_at(&self, wavelength: f64) -> Result<f64> {
        let map = &self.absorptance;
        let (first, last) = (map[0].0, map[map.len() - 1].0);
        let tol = 1e-9 * last;
        if wavelength < first - tol || wavelength > last + tol {
            return Err(Error::Range(format!(
                "channel `{}` has no absorptance at {:.1} nm (calibrated {:.1}-{:.1} nm)",
                self.channel_id,
                wavelength * 1e9,
                first * 1e9,
                last * 1e9
            )));
        }
        if map.len() == 1 {
            return Ok(map[0].1);
        }
        let j = map
            .partition_point(|(wl, _)| *wl < wavelength)
            .clamp(1, map.len() - 1);
        let ((w0, a0), (w1, a1)) = (map[j - 1], map[j]);
        if (wavelength - w1).abs() <= tol {
            return Ok(a1);
        }
        if (wavelength - w0).abs() <= tol {
            return Ok(a0);
        }
        Ok(a0 + (wavelength - w0) / (w1 - w0) * (a1 - a0))
    }

    /// `η_c · A(λ)`, the ceiling of the system DE at this wavelength.
    pub fn optical_amplitude(&self, wavelength: f64) -> Result<f64> {
        Ok(self.coupling_efficiency * self.absorptance_at(wavelength)?)
    }

    pub fn registering_probability(&self, bias: f64) -> f64 {
        logistic((bias - self.registering_midpoint) / self.registering_steepness)
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        Self {
            coupling_efficiency: coupling,
            ..self.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_bias(bias: f64) -> Result<()> {
    if !(bias > 0.0 && bias <= 1.0) {
        return Err(Error::Domain(format!(
            "normalised bias must lie in (0, 1], got {bias}"
        )));
    }
    Ok(())
}

/// System detection efficiency at normalised bias `bias`.
pub fn system_de(model: &DetectorChannelModel, wavelength: f64, bias: f64) -> Result<f64> {
    check_bias(bias)?;
    Ok(model.optical_amplitude(wavelength)? * model.registering_probability(bias))
}

/// Dark-count rate in Hz at normalised bias `bias`.
pub fn dark_rate(model: &DetectorChannelModel, bias: f64) -> Result<f64> {
    check_bias(bias)?;
    Ok(dark_rate_unchecked(model, bias))
}

pub(crate) fn dark_rate_unchecked(model: &DetectorChannelModel, bias: f64) -> f64 {
    if model.dark_prefactor == 0.0 {
        0.0
    } else {
        (model.dark_prefactor.ln() + model.dark_exponent * bias).exp()
    }
}

/// Bias grid used by reports: 0.700 to 0.990 in steps of 0.001.
pub fn default_bias_grid() -> Vec<f64> {
    (700..=990).map(|m| m as f64 / 1000.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub bias: f64,
    pub de: f64,
    pub dcr: f64,
}

/// DE and DCR along a bias sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DeDcrCurve {
    pub wavelength: f64,
    pub points: Vec<CurvePoint>,
}

pub fn de_vs_dcr_curve(
    model: &DetectorChannelModel,
    wavelength: f64,
    bias_grid: &[f64],
) -> Result<DeDcrCurve> {
    if bias_grid.is_empty() {
        return Err(Error::Domain("bias grid is empty".into()));
    }
    for w in bias_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain("bias grid must be strictly ascending".into()));
        }
    }
    let amp = model.optical_amplitude(wavelength)?;
    let points = bias_grid
        .iter()
        .map(|&i| {
            check_bias(i)?;
            Ok(CurvePoint {
                bias: i,
                de: amp * model.registering_probability(i),
                dcr: dark_rate_unchecked(model, i),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DeDcrCurve { wavelength, points })
}

impl DeDcrCurve {
    /// DE and bias at a target dark-count rate, interpolated linearly in
    /// `ln DCR` between bracketing rows.
    pub fn de_at_dcr(&self, target_dcr: f64) -> Result<(f64, f64)> {
        let pts = &self.points;
        let (lo, hi) = (pts[0].dcr, pts[pts.len() - 1].dcr);
        if !(target_dcr > 0.0) || !(lo > 0.0) || target_dcr < lo || target_dcr > hi {
            return Err(Error::Range(format!(
                "target DCR {target_dcr} Hz outside the curve's span [{lo:.3e}, {hi:.3e}] Hz (no extrapolation)"
            )));
        }
        let j = pts.partition_point(|p| p.dcr < target_dcr);
        if j == 0 || pts[j].dcr == target_dcr {
            return Ok((pts[j].de, pts[j].bias));
        }
        let (a, b) = (&pts[j - 1], &pts[j]);
        let t = (target_dcr.ln() - a.dcr.ln()) / (b.dcr.ln() - a.dcr.ln());
        Ok((a.de + t * (b.de - a.de), a.bias + t * (b.bias - a.bias)))
    }

    /// Last row (highest bias).
    pub fn max_point(&self) -> CurvePoint {
        self.points[self.points.len() - 1]
    }

    pub fn to_sweep(&self) -> SweepResult {
        let mut s = SweepResult::new(["bias_norm", "de", "dcr_hz"]);
        for p in &self.points {
            s.push(vec![p.bias, p.de, p.dcr]);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Observations

/// One calibration anchor. A row with no bias but both DE and DCR encodes
/// "DE measured at this dark-count rate".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationPoint {
    pub bias: Option<f64>,
    pub de: Option<f64>,
    pub dcr: Option<f64>,
    pub wavelength: f64,
}

impl ObservationPoint {
    pub fn at_bias(bias: f64, de: Option<f64>, dcr: Option<f64>, wavelength: f64) -> Self {
        Self {
            bias: Some(bias),
            de,
            dcr,
            wavelength,
        }
    }

    pub fn de_at_dcr(de: f64, dcr: f64, wavelength: f64) -> Self {
        Self {
            bias: None,
            de: Some(de),
            dcr: Some(dcr),
            wavelength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.de.is_none() && self.dcr.is_none() {
            return Err(Error::Domain(
                "observation needs a DE or a DCR value".into(),
            ));
        }
        if self.bias.is_none() && (self.de.is_none() || self.dcr.is_none()) {
            return Err(Error::Domain(
                "observation without bias needs both DE and DCR".into(),
            ));
        }
        if let Some(b) = self.bias {
            check_bias(b)?;
        }
        if self.de.is_some_and(|d| !(d > 0.0 && d <= 1.0)) {
            return Err(Error::Domain(format!(
                "observed DE {:?} not in (0, 1]",
                self.de
            )));
        }
        if self.dcr.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Domain(format!(
                "observed DCR {:?} must be > 0",
                self.dcr
            )));
        }
        Ok(())
    }
}

/// Parses `bias_norm,de,dcr_hz,wavelength_nm` with empty cells for absent
/// values and `#` comments.
pub fn parse_observations(text: &str, source: &str) -> Result<Vec<ObservationPoint>> {
    let mut out = Vec::new();
    let mut header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header {
            if cells != ["bias_norm", "de", "dcr_hz", "wavelength_nm"] {
                return Err(Error::parse(
                    source,
                    format!("expected header `bias_norm,de,dcr_hz,wavelength_nm`, found `{line}`"),
                ));
            }
            header = true;
            continue;
        }
        if cells.len() != 4 {
            return Err(Error::parse(
                source,
                format!("line {}: expected 4 cells", lineno + 1),
            ));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::parse(source, format!("line {}: `{s}`: {e}", lineno + 1)))
            }
        };
        let wavelength = opt(cells[3])?.ok_or_else(|| {
            Error::parse(
                source,
                format!("line {}: wavelength is required", lineno + 1),
            )
        })? * 1e-9;
        let obs = ObservationPoint {
            bias: opt(cells[0])?,
            de: opt(cells[1])?,
            dcr: opt(cells[2])?,
            wavelength,
        };
        obs.validate()
            .map_err(|e| Error::parse(source, format!("line {}: {e}", lineno + 1)))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn load_observations(path: &std::path::Path) -> Result<Vec<ObservationPoint>> {
    parse_observations(&std::fs::read_to_string(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn model() -> DetectorChannelModel {
        DetectorChannelModel {
            channel_id: "t".into(),
            coupling_efficiency: 0.95,
            absorptance: vec![(1.3e-6, 0.7), (1.6e-6, 0.6)],
            registering_midpoint: 0.93,
            registering_steepness: 0.025,
            dark_prefactor: 1e-60,
            dark_exponent: 150.0,
            dead_time: DEFAULT_DEAD_TIME,
            critical_current: 17.6e-6,
        }
    }

    #[test]
    fn zero_coupling_gives_zero_de() {
        let m = model().with_coupling(0.0);
        for i in [0.1, 0.5, 0.99, 1.0] {
            assert_eq!(system_de(&m, 1.55e-6, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn de_bounded_by_optical_amplitude() {
        let m = model();
        let amp = m.optical_amplitude(1.55e-6).unwrap();
        let mut prev = 0.0;
        for i in default_bias_grid() {
            let de = system_de(&m, 1.55e-6, i).unwrap();
            assert!(de >= prev && de <= amp);
            prev = de;
        }
    }

    #[test]
    fn wavelength_outside_map_is_range_error() {
        assert!(matches!(
            system_de(&model(), 1.7e-6, 0.9),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            system_de(&model(), 1.55e-6, 1.2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_prefactor_means_no_dark_counts() {
        let mut m = model();
        m.dark_prefactor = 0.0;
        assert_eq!(dark_rate(&m, 0.99).unwrap(), 0.0);
        assert_eq!(dark_rate(&m, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn single_point_curve_is_consistent() {
        let m = model();
        let c = de_vs_dcr_curve(&m, 1.55e-6, &[0.95]).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.points[0].de, system_de(&m, 1.55e-6, 0.95).unwrap());
        assert_eq!(c.points[0].dcr, dark_rate(&m, 0.95).unwrap());
    }

    #[test]
    fn de_at_dcr_interpolates_and_refuses_extrapolation() {
        let m = model();
        let c = de_vs_dcr_curve(&m, 1.55e-6, &default_bias_grid()).unwrap();
        // ln DCR is linear in bias, so the interpolated bias is exact
        let target: f64 = 100.0;
        let i_exact = (target.ln() - m.dark_prefactor.ln()) / m.dark_exponent;
        let (de, bias) = c.de_at_dcr(target).unwrap();
        assert!((bias - i_exact).abs() < 1e-12);
        assert!((de - system_de(&m, 1.55e-6, i_exact).unwrap()).abs() < 1e-4);
        assert!(c.de_at_dcr(1e12).is_err());
        assert!(c.de_at_dcr(1e-40).is_err());
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(de_vs_dcr_curve(&model(), 1.55e-6, &[0.9, 0.8]).is_err());
        assert!(de_vs_dcr_curve(&model(), 1.55e-6, &[]).is_err());
    }

    #[test]
    fn critical_current_bounds() {
        let dev = DeviceParameters::reference();
        let (lo, hi) = dev.critical_current_bounds();
        assert!((lo - 12.8e-6).abs() < 1e-12 && (hi - 22.4e-6).abs() < 1e-12);
        assert!(dev.validate_critical_current(17.6e-6).is_ok());
        assert!(dev.validate_critical_current(25e-6).is_err());
        assert!(dev.validate_critical_current(10e-6).is_err());
        assert!((dev.critical_current() - 17.6e-6).abs() < 1e-15);
    }

    #[test]
    fn observation_csv() {
        let text = "# anchors\nbias_norm,de,dcr_hz,wavelength_nm\n0.99,0.28,3000,1550\n,0.21,100,1550\n0.9,,12,1310\n";
        let obs = parse_observations(text, "t").unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[1].bias, None);
        assert_eq!(obs[2].de, None);
        assert!((obs[2].wavelength - 1.31e-6).abs() < 1e-18);
        assert!(
            parse_observations("bias_norm,de,dcr_hz,wavelength_nm\n,0.2,,1550\n", "t").is_err()
        );
        assert!(parse_observations("bias,de\n", "t").is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = model();
        assert_eq!(DetectorChannelModel::from_json(&m.to_json()).unwrap(), m);
        let mut bad = m.clone();
        bad.coupling_efficiency = 1.2;
        assert!(DetectorChannelModel::from_json(&bad.to_json()).is_err());
    }
}
