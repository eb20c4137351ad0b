//! Characteristic-matrix (transfer-matrix) solver for planar multilayers.
//!
//! Conventions: time dependence `exp(-iωt)`, complex index `N = n + ik` with
//! `k >= 0`, admittances in units of the free-space admittance. A layer of
//! phase thickness `δ = 2π N d cosθ / λ` and tilted admittance `η`
//! (`N cosθ` for TE, `N / cosθ` for TM) maps the tangential fields at its
//! lower boundary to those at its upper boundary through
//!
//! ```text
//! | cos δ        -i sin δ / η |
//! | -i η sin δ    cos δ       |
//! ```
//!
//! Light arrives from the semi-infinite incidence medium (the substrate for a
//! rear-illuminated detector). Per-layer absorptance is the drop of the normal
//! Poynting flux across each layer, with fields carried back from the exit
//! medium one layer at a time.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{effective_meander_index, MaterialDb, MixingRule};
use crate::sweep::SweepResult;

/// Wire fill factor of the reference meander (80 nm wires, 62.5 % coverage).
pub const DEFAULT_FILL_FACTOR: f64 = 0.625;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    #[serde(alias = "te", alias = "s")]
    TE,
    #[serde(alias = "tm", alias = "p")]
    TM,
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarization::TE => "TE",
            Polarization::TM => "TM",
        })
    }
}

/// 2×2 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn identity() -> Self {
        let o = Complex64::new(1.0, 0.0);
        let z = Complex64::new(0.0, 0.0);
        Mat2([[o, z], [z, o]])
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    pub fn det(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Complex `cos θ` inside a medium of index `index`, given the conserved
/// tangential component `n0·sinθ0`. The branch keeps the wave decaying (or
/// propagating) away from the incidence side.
pub fn cos_theta_in(index: Complex64, tangential: f64) -> Complex64 {
    let s = Complex64::new(tangential, 0.0) / index;
    let mut c = (Complex64::new(1.0, 0.0) - s * s).sqrt();
    let kz = index * c;
    if kz.im < 0.0 || (kz.im.abs() <= 1e-15 * kz.norm() && kz.re < 0.0) {
        c = -c;
    }
    c
}

pub fn tilted_admittance(index: Complex64, cos_theta: Complex64, pol: Polarization) -> Complex64 {
    match pol {
        Polarization::TE => index * cos_theta,
        Polarization::TM => index / cos_theta,
    }
}

/// Characteristic matrix of a homogeneous layer.
pub fn layer_matrix(
    index: Complex64,
    thickness: f64,
    wavelength: f64,
    cos_theta: Complex64,
    pol: Polarization,
) -> Mat2 {
    let delta = 2.0 * std::f64::consts::PI * index * thickness * cos_theta / wavelength;
    let eta = tilted_admittance(index, cos_theta, pol);
    let (c, s) = (delta.cos(), delta.sin());
    let mi = Complex64::new(0.0, -1.0);
    Mat2([[c, mi * s / eta], [mi * eta * s, c]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub material: String,
    /// metres
    pub thickness: f64,
    pub is_meander: bool,
}

impl Layer {
    pub fn new(material: impl Into<String>, thickness: f64) -> Result<Self> {
        if !(thickness > 0.0) || !thickness.is_finite() {
            return Err(Error::Domain(format!(
                "layer thickness must be > 0, got {thickness}"
            )));
        }
        Ok(Self {
            material: material.into(),
            thickness,
            is_meander: false,
        })
    }

    pub fn meander(material: impl Into<String>, thickness: f64) -> Result<Self> {
        let mut l = Self::new(material, thickness)?;
        l.is_meander = true;
        Ok(l)
    }
}

/// How the meander layer is homogenised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanderSpec {
    pub fill_factor: f64,
    /// Gap filler between wires; defaults to the material of the next layer
    /// (or the exit medium).
    #[serde(default)]
    pub ambient: Option<String>,
    #[serde(default)]
    pub mixing: MixingRule,
}

impl Default for MeanderSpec {
    fn default() -> Self {
        Self {
            fill_factor: DEFAULT_FILL_FACTOR,
            ambient: None,
            mixing: MixingRule::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub incidence: String,
    pub layers: Vec<Layer>,
    pub exit: String,
    pub meander: MeanderSpec,
}

impl LayerStack {
    pub fn new(
        incidence: impl Into<String>,
        layers: Vec<Layer>,
        exit: impl Into<String>,
    ) -> Result<Self> {
        let stack = Self {
            incidence: incidence.into(),
            layers,
            exit: exit.into(),
            meander: MeanderSpec::default(),
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn with_meander(mut self, meander: MeanderSpec) -> Result<Self> {
        self.meander = meander;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.iter().filter(|l| l.is_meander).count() > 1 {
            return Err(Error::Config("at most one meander layer per stack".into()));
        }
        for l in &self.layers {
            if !(l.thickness > 0.0) || !l.thickness.is_finite() {
                return Err(Error::Domain(format!(
                    "layer `{}` thickness must be > 0, got {}",
                    l.material, l.thickness
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.meander.fill_factor) {
            return Err(Error::Domain(format!(
                "fill factor must lie in [0, 1], got {}",
                self.meander.fill_factor
            )));
        }
        Ok(())
    }

    /// Rear-illuminated OC-SNSPD: MgO | NbN meander 4 nm | SiO 250 nm | Au 100 nm | vacuum.
    pub fn reference_device() -> Self {
        Self::new(
            "MgO",
            vec![
                Layer::meander("NbN", 4e-9).unwrap(),
                Layer::new("SiO", 250e-9).unwrap(),
                Layer::new("Au", 100e-9).unwrap(),
            ],
            "vacuum",
        )
        .unwrap()
    }

    /// Same meander with no cavity: MgO | NbN meander 4 nm | vacuum.
    pub fn bare_meander() -> Self {
        Self::new("MgO", vec![Layer::meander("NbN", 4e-9).unwrap()], "vacuum").unwrap()
    }

    pub fn meander_position(&self) -> Option<usize> {
        self.layers.iter().position(|l| l.is_meander)
    }

    /// Replaces the thickness of layer `i`.
    pub fn with_thickness(&self, i: usize, thickness: f64) -> Result<Self> {
        let mut s = self.clone();
        let layer = s
            .layers
            .get_mut(i)
            .ok_or_else(|| Error::Config(format!("no layer {i}")))?;
        layer.thickness = thickness;
        s.validate()?;
        Ok(s)
    }

    /// Numeric indices at one wavelength.
    pub fn resolve(&self, db: &MaterialDb, wavelength: f64) -> Result<ResolvedStack> {
        let incidence = db.index(&self.incidence, wavelength)?;
        if !incidence.is_lossless() {
            return Err(Error::Domain(format!(
                "incidence medium `{}` must be lossless (k = 0), has k = {}",
                self.incidence, incidence.k
            )));
        }
        let exit = db.index(&self.exit, wavelength)?.to_complex();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let raw = db.index(&l.material, wavelength)?;
            let idx = if l.is_meander {
                let ambient_id = match &self.meander.ambient {
                    Some(a) => a.as_str(),
                    None => self
                        .layers
                        .get(i + 1)
                        .map(|n| n.material.as_str())
                        .unwrap_or(&self.exit),
                };
                let ambient = db.index(ambient_id, wavelength)?;
                effective_meander_index(
                    raw,
                    ambient,
                    self.meander.fill_factor,
                    self.meander.mixing,
                )?
            } else {
                raw
            };
            layers.push((idx.to_complex(), l.thickness));
        }
        Ok(ResolvedStack {
            incidence: incidence.n,
            layers,
            exit,
        })
    }
}

/// Stack with indices fixed at one wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedStack {
    /// real index of the (lossless) incidence medium
    pub incidence: f64,
    /// (index, thickness in metres)
    pub layers: Vec<(Complex64, f64)>,
    pub exit: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackResponse {
    pub reflectance: f64,
    pub transmittance: f64,
    /// aligned with the stack's layers
    pub absorptance: Vec<f64>,
}

impl StackResponse {
    pub fn energy_residual(&self) -> f64 {
        self.reflectance + self.transmittance + self.absorptance.iter().sum::<f64>() - 1.0
    }

    pub fn total_absorptance(&self) -> f64 {
        self.absorptance.iter().sum()
    }
}

impl ResolvedStack {
    pub fn response(
        &self,
        wavelength: f64,
        angle: f64,
        pol: Polarization,
    ) -> Result<StackResponse> {
        if !(wavelength > 0.0) {
            return Err(Error::Domain(format!(
                "wavelength must be > 0, got {wavelength}"
            )));
        }
        let n0 = self.incidence;
        let tangential = n0 * angle.sin();
        let eta0 = tilted_admittance(
            Complex64::new(n0, 0.0),
            Complex64::new(angle.cos(), 0.0),
            pol,
        )
        .re;

        let cos_exit = cos_theta_in(self.exit, tangential);
        let eta_exit = tilted_admittance(self.exit, cos_exit, pol);

        // Fields at each boundary, from the exit side upwards (E = 1 at exit).
        let mut field = [Complex64::new(1.0, 0.0), eta_exit];
        let mut fluxes = Vec::with_capacity(self.layers.len() + 1);
        fluxes.push((field[0] * field[1].conj()).re);
        for &(idx, d) in self.layers.iter().rev() {
            let c = cos_theta_in(idx, tangential);
            field = layer_matrix(idx, d, wavelength, c, pol).apply(field);
            fluxes.push((field[0] * field[1].conj()).re);
        }
        fluxes.reverse();

        let (b, c) = (field[0], field[1]);
        let denom = b * eta0 + c;
        let incident = denom.norm_sqr() / (4.0 * eta0);
        if !(incident.is_finite() && incident > 0.0) || !fluxes.iter().all(|f| f.is_finite()) {
            return Err(Error::Computation(format!(
                "singular stack matrix at {:.3} nm (B = {b}, C = {c})",
                wavelength * 1e9
            )));
        }
        let r = (b * eta0 - c) / denom;
        let absorptance = fluxes
            .windows(2)
            .map(|w| ((w[0] - w[1]) / incident).clamp(0.0, 1.0))
            .collect();
        Ok(StackResponse {
            reflectance: r.norm_sqr(),
            transmittance: fluxes[fluxes.len() - 1] / incident,
            absorptance,
        })
    }
}

/// Reflectance, transmittance and per-layer absorptance of `stack`.
pub fn stack_response(
    stack: &LayerStack,
    db: &MaterialDb,
    wavelength: f64,
    angle: f64,
    pol: Polarization,
) -> Result<StackResponse> {
    stack
        .resolve(db, wavelength)?
        .response(wavelength, angle, pol)
}

/// TE/TM average, for unpolarised light.
pub fn stack_response_unpolarized(
    stack: &LayerStack,
    db: &MaterialDb,
    wavelength: f64,
    angle: f64,
) -> Result<StackResponse> {
    let resolved = stack.resolve(db, wavelength)?;
    let te = resolved.response(wavelength, angle, Polarization::TE)?;
    let tm = resolved.response(wavelength, angle, Polarization::TM)?;
    Ok(StackResponse {
        reflectance: 0.5 * (te.reflectance + tm.reflectance),
        transmittance: 0.5 * (te.transmittance + tm.transmittance),
        absorptance: te
            .absorptance
            .iter()
            .zip(&tm.absorptance)
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    })
}

pub const SPECTRUM_COLUMNS: [&str; 6] = ["wavelength_nm", "R", "T", "A_nbn", "A_au", "A_other"];

/// Absorptance grouped into (meander/NbN, Au, other) for one response.
pub fn grouped_absorptance(stack: &LayerStack, resp: &StackResponse) -> (f64, f64, f64) {
    let (mut nbn, mut au, mut other) = (0.0, 0.0, 0.0);
    for (layer, a) in stack.layers.iter().zip(&resp.absorptance) {
        if layer.is_meander || layer.material == "NbN" {
            nbn += a;
        } else if layer.material == "Au" {
            au += a;
        } else {
            other += a;
        }
    }
    (nbn, au, other)
}

/// Meander absorptance (sum over NbN layers) at one wavelength.
pub fn meander_absorptance(
    stack: &LayerStack,
    db: &MaterialDb,
    wavelength: f64,
    angle: f64,
    pol: Polarization,
) -> Result<f64> {
    let resp = stack_response(stack, db, wavelength, angle, pol)?;
    Ok(grouped_absorptance(stack, &resp).0)
}

/// One row `(λ, R, T, A_nbn, A_au, A_other)` per wavelength.
pub fn absorptance_spectrum(
    stack: &LayerStack,
    db: &MaterialDb,
    wavelengths: &[f64],
    angle: f64,
    pol: Polarization,
) -> Result<SweepResult> {
    if wavelengths.is_empty() {
        return Err(Error::Domain("wavelength list is empty".into()));
    }
    let mut out = SweepResult::new(SPECTRUM_COLUMNS);
    for &wl in wavelengths {
        let resp = stack_response(stack, db, wl, angle, pol)?;
        let (nbn, au, other) = grouped_absorptance(stack, &resp);
        out.push(vec![
            wl * 1e9,
            resp.reflectance,
            resp.transmittance,
            nbn,
            au,
            other,
        ]);
    }
    Ok(out)
}

/// Uniform grid of `points` wavelengths over `[min, max]` (metres).
pub fn wavelength_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(max >= min) || !(min > 0.0) {
        return Err(Error::Domain(format!(
            "invalid wavelength grid [{min}, {max}] with {points} points"
        )));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                max
            } else {
                min + step * i as f64
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// JSON stack files

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StackFile {
    incidence: String,
    exit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meander: Option<MeanderSpec>,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerEntry {
    material: String,
    thickness_nm: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    meander: bool,
}

impl LayerStack {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: StackFile = serde_json::from_str(text)?;
        let layers = file
            .layers
            .into_iter()
            .map(|e| {
                let l = Layer::new(e.material, e.thickness_nm * 1e-9)?;
                Ok(Layer {
                    is_meander: e.meander,
                    ..l
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let stack = Self::new(file.incidence, layers, file.exit)?;
        match file.meander {
            Some(m) => stack.with_meander(m),
            None => Ok(stack),
        }
    }

    pub fn to_json(&self) -> String {
        let file = StackFile {
            incidence: self.incidence.clone(),
            exit: self.exit.clone(),
            meander: Some(self.meander.clone()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerEntry {
                    material: l.material.clone(),
                    thickness_nm: l.thickness * 1e9,
                    meander: l.is_meander,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("stack serialises")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
