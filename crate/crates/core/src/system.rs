//! Multi-channel receiver: per-channel reports and a first-order BB84 link
//! budget for a four-detector passive-basis receiver.
//!
//! The budget uses weak-coherent-pulse accounting without decoy states or
//! finite-key effects. Double clicks are not modelled separately.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{de_vs_dcr_curve, default_bias_grid, system_de, DetectorChannelModel};
use crate::error::{Error, Result};
use crate::sweep::SweepResult;

pub const MAX_CHANNELS: usize = 6;
pub const BB84_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub name: String,
    pub channels: Vec<DetectorChannelModel>,
    /// channel ids used by the BB84 receiver
    pub active_set: Vec<String>,
    /// kelvin
    pub base_temperature: f64,
    /// kelvin, peak deviation (informational)
    pub temperature_stability: f64,
}

/// On-disk form; channel models are referenced by path relative to the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SystemFile {
    name: String,
    #[serde(default = "default_temperature")]
    base_temperature_k: f64,
    #[serde(default = "default_stability")]
    temperature_stability_k: f64,
    channels: Vec<PathBuf>,
    #[serde(default)]
    active_set: Vec<String>,
}

fn default_temperature() -> f64 {
    2.9
}

fn default_stability() -> f64 {
    0.010
}

impl SystemConfig {
    /// Cryocooler at 2.9 K ± 10 mK with all given channels; the first four
    /// (by id) form the active set.
    pub fn new(name: impl Into<String>, channels: Vec<DetectorChannelModel>) -> Result<Self> {
        let mut ids: Vec<String> = channels.iter().map(|c| c.channel_id.clone()).collect();
        ids.sort();
        ids.truncate(BB84_CHANNELS);
        let s = Self {
            name: name.into(),
            channels,
            active_set: ids,
            base_temperature: default_temperature(),
            temperature_stability: default_stability(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() > MAX_CHANNELS {
            return Err(Error::Config(format!(
                "a system holds 1 to {MAX_CHANNELS} channels, got {}",
                self.channels.len()
            )));
        }
        let mut ids: Vec<&str> = self
            .channels
            .iter()
            .map(|c| c.channel_id.as_str())
            .collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("channel ids must be unique".into()));
        }
        for c in &self.channels {
            c.validate()?;
        }
        for a in &self.active_set {
            if !ids.contains(&a.as_str()) {
                return Err(Error::Config(format!(
                    "active channel `{a}` is not in the system"
                )));
            }
        }
        if !(self.base_temperature > 0.0) {
            return Err(Error::Domain("base temperature must be > 0".into()));
        }
        Ok(())
    }

    pub fn channel(&self, id: &str) -> Option<&DetectorChannelModel> {
        self.channels.iter().find(|c| c.channel_id == id)
    }

    /// The four active channels, or a configuration error.
    pub fn active_channels(&self) -> Result<Vec<&DetectorChannelModel>> {
        if self.active_set.len() != BB84_CHANNELS {
            return Err(Error::Config(format!(
                "BB84 needs exactly {BB84_CHANNELS} active channels, got {}",
                self.active_set.len()
            )));
        }
        self.active_set
            .iter()
            .map(|id| {
                self.channel(id).ok_or_else(|| {
                    Error::Config(format!("active channel `{id}` is not in the system"))
                })
            })
            .collect()
    }

    /// Copy with every channel's coupling efficiency multiplied by `factor`.
    pub fn with_scaled_coupling(&self, factor: f64) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|c| c.with_coupling(c.coupling_efficiency * factor))
            .collect();
        let s = Self {
            channels,
            ..self.clone()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SystemFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let channels = file
            .channels
            .iter()
            .map(|p| DetectorChannelModel::load(&base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let mut s = Self::new(file.name, channels)?;
        if !file.active_set.is_empty() {
            s.active_set = file.active_set;
        }
        s.base_temperature = file.base_temperature_k;
        s.temperature_stability = file.temperature_stability_k;
        s.validate()?;
        Ok(s)
    }
}

// ---------------------------------------------------------------------------
// Channel report

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelFigures {
    pub de_at_100hz: f64,
    pub bias_at_100hz: f64,
    pub de_at_2khz: f64,
    pub bias_at_2khz: f64,
    pub max_de: f64,
    pub bias_at_max: f64,
    pub dcr_at_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReportRow {
    pub channel_id: String,
    pub figures: std::result::Result<ChannelFigures, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub wavelength: f64,
    pub rows: Vec<ChannelReportRow>,
}

pub fn channel_figures(
    model: &DetectorChannelModel,
    wavelength: f64,
    bias_grid: &[f64],
) -> Result<ChannelFigures> {
    let curve = de_vs_dcr_curve(model, wavelength, bias_grid)?;
    let (de_at_100hz, bias_at_100hz) = curve.de_at_dcr(100.0)?;
    let (de_at_2khz, bias_at_2khz) = curve.de_at_dcr(2000.0)?;
    let top = curve
        .points
        .iter()
        .copied()
        .fold(curve.points[0], |a, p| if p.de > a.de { p } else { a });
    Ok(ChannelFigures {
        de_at_100hz,
        bias_at_100hz,
        de_at_2khz,
        bias_at_2khz,
        max_de: top.de,
        bias_at_max: top.bias,
        dcr_at_max: top.dcr,
    })
}

/// DE at 100 Hz and 2 kHz dark rate and at the top of the bias grid, per
/// channel, sorted by channel id. A channel that cannot be evaluated gets an
/// error entry; the others are still reported.
pub fn channel_report(
    system: &SystemConfig,
    wavelength: f64,
    bias_grid: Option<&[f64]>,
) -> ChannelReport {
    let default_grid;
    let grid = match bias_grid {
        Some(g) => g,
        None => {
            default_grid = default_bias_grid();
            &default_grid
        }
    };
    let mut rows: Vec<ChannelReportRow> = system
        .channels
        .iter()
        .map(|c| ChannelReportRow {
            channel_id: c.channel_id.clone(),
            figures: channel_figures(c, wavelength, grid).map_err(|e| e.to_string()),
        })
        .collect();
    rows.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
    ChannelReport { wavelength, rows }
}

const REPORT_COLUMNS: [&str; 9] = [
    "channel_id",
    "de_at_100hz",
    "bias_at_100hz",
    "de_at_2khz",
    "bias_at_2khz",
    "max_de",
    "bias_at_max",
    "dcr_at_max_hz",
    "error",
];

impl ChannelReport {
    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut row = vec![r.channel_id.clone()];
                match &r.figures {
                    Ok(f) => {
                        for v in [
                            f.de_at_100hz,
                            f.bias_at_100hz,
                            f.de_at_2khz,
                            f.bias_at_2khz,
                            f.max_de,
                            f.bias_at_max,
                            f.dcr_at_max,
                        ] {
                            row.push(format!("{v}"));
                        }
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(std::iter::repeat_n(String::new(), 7));
                        row.push(format!("\"{}\"", e.replace('"', "'")));
                    }
                }
                row
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for row in self.cells() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_aligned_text(&self) -> String {
        let mut out = format!(
            "{:<10}{:>12}{:>10}{:>12}{:>10}{:>10}{:>8}{:>12}\n",
            "channel", "DE@100Hz", "bias", "DE@2kHz", "bias", "maxDE", "bias", "DCR@max"
        );
        for r in &self.rows {
            match &r.figures {
                Ok(f) => {
                    let _ = writeln!(
                        out,
                        "{:<10}{:>12.4}{:>10.4}{:>12.4}{:>10.4}{:>10.4}{:>8.3}{:>12.1}",
                        r.channel_id,
                        f.de_at_100hz,
                        f.bias_at_100hz,
                        f.de_at_2khz,
                        f.bias_at_2khz,
                        f.max_de,
                        f.bias_at_max,
                        f.dcr_at_max
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "{:<10}error: {e}", r.channel_id);
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// BB84 budget

/// Where each channel is biased for the link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingPoint {
    /// normalised bias current
    Bias(f64),
    /// bias chosen so the channel's dark rate equals this value, Hz
    DarkRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub mean_photon_number: f64,
    pub channel_loss_db: f64,
    pub internal_loss_db: f64,
    /// Hz
    pub pulse_rate: f64,
    /// 1 for free-running detectors
    pub gate_fraction: f64,
    /// effective coincidence window per pulse, seconds
    pub detection_window: f64,
    pub intrinsic_error: f64,
    /// metres
    pub wavelength: f64,
    pub operating_point: OperatingPoint,
}

impl Default for LinkParams {
    /// µ = 0.1, 1 GHz, free running, 1 ns window, 1 % intrinsic error,
    /// 1550 nm, channels biased at 100 Hz dark rate.
    fn default() -> Self {
        Self {
            mean_photon_number: 0.1,
            channel_loss_db: 10.0,
            internal_loss_db: 0.0,
            pulse_rate: 1e9,
            gate_fraction: 1.0,
            detection_window: 1e-9,
            intrinsic_error: 0.01,
            wavelength: 1550e-9,
            operating_point: OperatingPoint::DarkRate(100.0),
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mean_photon_number > 0.0
            && self.channel_loss_db >= 0.0
            && self.internal_loss_db >= 0.0
            && self.pulse_rate > 0.0
            && self.gate_fraction > 0.0
            && self.gate_fraction <= 1.0
            && self.detection_window >= 0.0
            && (0.0..=0.5).contains(&self.intrinsic_error)
            && self.wavelength > 0.0;
        if !ok {
            return Err(Error::Domain(format!("invalid link parameters {self:?}")));
        }
        if let OperatingPoint::DarkRate(r) = self.operating_point {
            if !(r > 0.0) {
                return Err(Error::Domain("operating dark rate must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn with_loss(&self, loss_db: f64) -> Self {
        Self {
            channel_loss_db: loss_db,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelClicks {
    pub channel_id: String,
    pub bias: f64,
    pub de: f64,
    pub dcr: f64,
    pub p_signal: f64,
    pub p_dark: f64,
    /// Hz
    pub click_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bb84Budget {
    /// Hz
    pub sifted_rate: f64,
    pub qber: f64,
    /// per-pulse probability of a signal click
    pub p_signal: f64,
    /// per-pulse probability of a dark click in any active channel
    pub p_dark: f64,
    pub channels: Vec<ChannelClicks>,
}

/// DE and DCR of one channel at the link's operating point.
fn operating_de_dcr(model: &DetectorChannelModel, link: &LinkParams) -> Result<(f64, f64, f64)> {
    let bias = match link.operating_point {
        OperatingPoint::Bias(b) => b,
        OperatingPoint::DarkRate(r) => {
            if model.dark_prefactor == 0.0 {
                return Err(Error::Domain(format!(
                    "channel `{}` has no dark counts; choose a bias operating point",
                    model.channel_id
                )));
            }
            (r.ln() - model.dark_prefactor.ln()) / model.dark_exponent
        }
    };
    let de = system_de(model, link.wavelength, bias)?;
    let dcr = crate::detector::dark_rate(model, bias)?;
    Ok((bias, de, dcr))
}

/// Budget from per-channel (DE, DCR) pairs. Each signal photon reaches one of
/// the four detectors with equal probability; every detector can dark-click.
///
/// ```text
/// p_sig,ch  = 1 − exp(−µ·η·DE_ch),   η = 10^(−(loss + internal)/10)
/// p_dark,ch = 1 − exp(−DCR_ch·window)
/// P_s = ¼ Σ p_sig,ch,  P_d = Σ p_dark,ch
/// sifted = ½ · f · gate · (P_s + P_d)
/// QBER   = (e_det·P_s + ½·P_d) / (P_s + P_d)
/// ```
pub fn bb84_from_rates(
    ids: &[String],
    de_dcr: &[(f64, f64, f64)],
    link: &LinkParams,
) -> Result<Bb84Budget> {
    link.validate()?;
    if de_dcr.len() != BB84_CHANNELS || ids.len() != BB84_CHANNELS {
        return Err(Error::Config(format!(
            "BB84 needs exactly {BB84_CHANNELS} channels"
        )));
    }
    let eta = 10f64.powf(-(link.channel_loss_db + link.internal_loss_db) / 10.0);
    let pulses = link.pulse_rate * link.gate_fraction;
    let mut channels = Vec::with_capacity(BB84_CHANNELS);
    let (mut p_s, mut p_d) = (0.0, 0.0);
    for (id, &(bias, de, dcr)) in ids.iter().zip(de_dcr) {
        let p_signal = -(-link.mean_photon_number * eta * de).exp_m1();
        let p_dark = -(-dcr * link.detection_window).exp_m1();
        p_s += p_signal / BB84_CHANNELS as f64;
        p_d += p_dark;
        channels.push(ChannelClicks {
            channel_id: id.clone(),
            bias,
            de,
            dcr,
            p_signal,
            p_dark,
            click_rate: pulses * (p_signal / BB84_CHANNELS as f64 + p_dark),
        });
    }
    let total = p_s + p_d;
    let qber = if total > 0.0 {
        let (ws, wd) = (p_s / total, p_d / total);
        link.intrinsic_error * ws + 0.5 * wd
    } else {
        0.5
    };
    Ok(Bb84Budget {
        sifted_rate: 0.5 * pulses * total,
        qber,
        p_signal: p_s,
        p_dark: p_d,
        channels,
    })
}

pub fn bb84_budget(system: &SystemConfig, link: &LinkParams) -> Result<Bb84Budget> {
    let active = system.active_channels()?;
    let rates = active
        .iter()
        .map(|m| operating_de_dcr(m, link))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = active.iter().map(|m| m.channel_id.clone()).collect();
    bb84_from_rates(&ids, &rates, link)
}

/// Sifted rate and QBER of two systems over a channel-loss sweep.
pub fn compare_generations(
    a: &SystemConfig,
    b: &SystemConfig,
    link: &LinkParams,
    losses_db: &[f64],
) -> Result<SweepResult> {
    if losses_db.is_empty() {
        return Err(Error::Domain("loss grid is empty".into()));
    }
    let mut out = SweepResult::new([
        "loss_db",
        "sifted_a_hz",
        "qber_a",
        "sifted_b_hz",
        "qber_b",
        "sifted_ratio_b_over_a",
    ]);
    for &loss in losses_db {
        let l = link.with_loss(loss);
        let ra = bb84_budget(a, &l)?;
        let rb = bb84_budget(b, &l)?;
        let ratio = if ra.sifted_rate > 0.0 {
            rb.sifted_rate / ra.sifted_rate
        } else {
            f64::NAN
        };
        out.push(vec![
            loss,
            ra.sifted_rate,
            ra.qber,
            rb.sifted_rate,
            rb.qber,
            ratio,
        ]);
    }
    Ok(out)
}

/// QBER and sifted rate of one system over a channel-loss sweep.
pub fn loss_sweep(
    system: &SystemConfig,
    link: &LinkParams,
    losses_db: &[f64],
) -> Result<SweepResult> {
    if losses_db.is_empty() {
        return Err(Error::Domain("loss grid is empty".into()));
    }
    let mut out = SweepResult::new(["loss_db", "sifted_rate_hz", "qber", "p_signal", "p_dark"]);
    for &loss in losses_db {
        let r = bb84_budget(system, &link.with_loss(loss))?;
        out.push(vec![loss, r.sifted_rate, r.qber, r.p_signal, r.p_dark]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DEFAULT_DEAD_TIME;

    fn channel(id: &str, eta: f64, r0: f64) -> DetectorChannelModel {
        DetectorChannelModel {
            channel_id: id.into(),
            coupling_efficiency: eta,
            absorptance: vec![(1.3e-6, 0.65), (1.6e-6, 0.65)],
            registering_midpoint: 0.95,
            registering_steepness: 0.02,
            dark_prefactor: r0,
            dark_exponent: 250.0,
            dead_time: DEFAULT_DEAD_TIME,
            critical_current: 17.6e-6,
        }
    }

    fn system(eta: f64, r0: f64) -> SystemConfig {
        SystemConfig::new(
            "t",
            (1..=4)
                .map(|i| channel(&format!("ch{i}"), eta, r0))
                .collect(),
        )
        .unwrap()
    }

    const IDS: fn() -> Vec<String> = || (1..=4).map(|i| format!("ch{i}")).collect();

    #[test]
    fn hand_evaluated_anchor() {
        // µ 0.1, 10 dB, DE 0.20, DCR 100 Hz, 1 ns, e_det 0.01, 1 GHz
        let link = LinkParams::default();
        let r = bb84_from_rates(&IDS(), &[(0.9, 0.2, 100.0); 4], &link).unwrap();
        let p_s = 1.0 - (-0.002f64).exp();
        let p_d = 4.0 * (1.0 - (-1e-7f64).exp());
        assert!((r.p_signal - p_s).abs() < 1e-15);
        assert!((r.sifted_rate - 0.5e9 * (p_s + p_d)).abs() < 1e-4);
        assert!((r.qber - (0.01 * p_s + 0.5 * p_d) / (p_s + p_d)).abs() < 1e-12);
        assert!(
            (r.sifted_rate - 999_200.666_323).abs() < 1e-4,
            "{}",
            r.sifted_rate
        );
        assert!((r.qber - 0.010_098_078_392).abs() < 1e-11, "{}", r.qber);
    }

    #[test]
    fn limits_are_exact() {
        let link = LinkParams::default();
        let dark_free = bb84_from_rates(&IDS(), &[(0.9, 0.2, 0.0); 4], &link).unwrap();
        assert_eq!(dark_free.qber, link.intrinsic_error);
        let blind = bb84_from_rates(&IDS(), &[(0.9, 0.0, 100.0); 4], &link).unwrap();
        assert_eq!(blind.qber, 0.5);
        let nothing = bb84_from_rates(&IDS(), &[(0.9, 0.0, 0.0); 4], &link).unwrap();
        assert_eq!(nothing.qber, 0.5);
        assert_eq!(nothing.sifted_rate, 0.0);
    }

    #[test]
    fn active_set_must_have_four() {
        let mut s = system(0.9, 1e-100);
        s.active_set.pop();
        assert!(matches!(
            bb84_budget(&s, &LinkParams::default()),
            Err(Error::Config(_))
        ));
        let five = SystemConfig::new(
            "t",
            (1..=7)
                .map(|i| channel(&format!("c{i}"), 0.9, 1.0))
                .collect(),
        );
        assert!(five.is_err());
    }

    #[test]
    fn single_channel_report_matches_direct() {
        let c = channel("only", 0.9, 1e-100);
        let s = SystemConfig::new("one", vec![c.clone()]).unwrap();
        let r = channel_report(&s, 1550e-9, None);
        assert_eq!(r.rows.len(), 1);
        let curve = de_vs_dcr_curve(&c, 1550e-9, &default_bias_grid()).unwrap();
        let f = r.rows[0].figures.as_ref().unwrap();
        assert_eq!(f.de_at_100hz, curve.de_at_dcr(100.0).unwrap().0);
    }

    #[test]
    fn report_keeps_going_after_a_bad_channel() {
        let mut bad = channel("b", 0.9, 1e-100);
        bad.absorptance = vec![(1.3e-6, 0.6)];
        let s = SystemConfig::new("t", vec![channel("a", 0.9, 1e-100), bad]).unwrap();
        let r = channel_report(&s, 1550e-9, None);
        assert!(r.rows[0].figures.is_ok() && r.rows[1].figures.is_err());
        assert!(r.to_csv().lines().count() == 3);
    }

    #[test]
    fn identical_systems_give_identical_columns() {
        let s = system(0.9, 1e-100);
        let sw = compare_generations(&s, &s, &LinkParams::default(), &[0.0, 10.0, 20.0]).unwrap();
        assert_eq!(
            sw.column("sifted_a_hz").unwrap(),
            sw.column("sifted_b_hz").unwrap()
        );
        assert_eq!(sw.column("qber_a").unwrap(), sw.column("qber_b").unwrap());
    }
}
