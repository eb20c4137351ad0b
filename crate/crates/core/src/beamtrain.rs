//! Gaussian-beam propagation from the fiber, through fusion-spliced GRIN
//! lenses, the cold gap and the substrate, to the meander plane.
//!
//! Convention: the complex beam parameter `q` is carried in physical units
//! inside each medium, `1/q = 1/R − iλ/(π n w²)`. Ray vectors are
//! `(height, physical angle)`, so refraction at a flat boundary is the
//! explicit matrix `[[1, 0], [0, n1/n2]]` and free space in any medium is
//! `[[1, d], [0, 1]]`. Inside a parabolic GRIN medium `n(r) = n0(1 − g²r²/2)`
//! the segment matrix is `[[cos gL, sin gL / g], [−g sin gL, cos gL]]`;
//! [`GrinParams::in_air_abcd`] gives the familiar lens-in-air form that folds
//! in the two end faces.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::materials::MaterialDb;

/// Default fiber lens diameter (equal to the fiber cladding).
pub const GRIN_DIAMETER: f64 = 125e-6;
/// Standard single-mode fiber mode-field diameter at 1550 nm.
pub const SMF_MFD_1550: f64 = 10.4e-6;
/// Standard single-mode fiber mode-field diameter at 1310 nm.
pub const SMF_MFD_1310: f64 = 9.2e-6;

/// Complex beam parameter at a waist of radius `w0` in a medium of index `n`.
pub fn q_from_waist(w0: f64, wavelength: f64, n: f64) -> Complex64 {
    Complex64::new(0.0, PI * w0 * w0 * n / wavelength)
}

/// Spot radius `w` and wavefront radius `R` for `q` in a medium of index `n`.
/// `R` is infinite at a waist.
pub fn spot_from_q(q: Complex64, wavelength: f64, n: f64) -> (f64, f64) {
    let inv = q.inv();
    let w = (-wavelength / (PI * n * inv.im)).sqrt();
    let r = if inv.re == 0.0 {
        f64::INFINITY
    } else {
        1.0 / inv.re
    };
    (w, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub waist_radius: f64,
    pub wavelength: f64,
    pub medium_index: f64,
}

impl GaussianMode {
    pub fn q(&self) -> Complex64 {
        q_from_waist(self.waist_radius, self.wavelength, self.medium_index)
    }

    pub fn rayleigh_range(&self) -> f64 {
        self.q().im
    }
}

/// Real 2×2 ray-transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Abcd {
    pub const IDENTITY: Abcd = Abcd {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn free_space(length: f64) -> Self {
        Abcd {
            a: 1.0,
            b: length,
            c: 0.0,
            d: 1.0,
        }
    }

    pub fn interface(n1: f64, n2: f64) -> Self {
        Abcd {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: n1 / n2,
        }
    }

    pub fn grin(gradient: f64, length: f64) -> Self {
        let (s, c) = (gradient * length).sin_cos();
        Abcd {
            a: c,
            b: s / gradient,
            c: -gradient * s,
            d: c,
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Abcd) -> Abcd {
        Abcd {
            a: self.a * first.a + self.b * first.c,
            b: self.a * first.b + self.b * first.d,
            c: self.c * first.a + self.d * first.c,
            d: self.c * first.b + self.d * first.d,
        }
    }

    pub fn transform(&self, q: Complex64) -> Complex64 {
        (q * self.a + self.b) / (q * self.c + self.d)
    }
}

/// A propagation medium: a material from the database or a fixed index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Medium {
    Index(f64),
    Material(String),
}

impl Medium {
    pub fn material(id: impl Into<String>) -> Self {
        Medium::Material(id.into())
    }

    pub fn resolve(&self, db: &MaterialDb, wavelength: f64) -> Result<f64> {
        match self {
            Medium::Index(n) if *n > 0.0 => Ok(*n),
            Medium::Index(n) => Err(Error::Domain(format!("medium index must be > 0, got {n}"))),
            Medium::Material(id) => {
                let idx = db.index(id, wavelength)?;
                if !idx.is_lossless() {
                    return Err(Error::Domain(format!(
                        "beam train medium `{id}` is absorbing (k = {})",
                        idx.k
                    )));
                }
                Ok(idx.n)
            }
        }
    }

    fn same_as(&self, other: &Medium) -> bool {
        match (self, other) {
            (Medium::Index(a), Medium::Index(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
            (Medium::Material(a), Medium::Material(b)) => a == b,
            _ => false,
        }
    }
}

impl std::fmt::Display for Medium {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Medium::Index(n) => write!(f, "n={n}"),
            Medium::Material(id) => f.write_str(id),
        }
    }
}

/// Parabolic-profile GRIN lens segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrinParams {
    /// on-axis index
    pub n0: f64,
    /// gradient constant g, 1/m
    pub gradient: f64,
    /// metres
    pub length: f64,
    /// metres
    pub diameter: f64,
}

impl GrinParams {
    pub fn new(n0: f64, gradient: f64, length: f64) -> Self {
        Self {
            n0,
            gradient,
            length,
            diameter: GRIN_DIAMETER,
        }
    }

    /// Pitch fraction `gL / 2π`.
    pub fn pitch(&self) -> f64 {
        self.gradient * self.length / (2.0 * PI)
    }

    /// Paraxial numerical aperture `n0·g·(D/2)` of the graded region.
    pub fn numerical_aperture(&self) -> f64 {
        self.n0 * self.gradient * self.diameter / 2.0
    }

    /// Lens-in-air matrix including entry and exit faces:
    /// `[[cos gL, sin gL/(n0 g)], [−n0 g sin gL, cos gL]]`.
    pub fn in_air_abcd(&self) -> Abcd {
        let (s, c) = (self.gradient * self.length).sin_cos();
        let ng = self.n0 * self.gradient;
        Abcd {
            a: c,
            b: s / ng,
            c: -ng * s,
            d: c,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gradient > 0.0) {
            return Err(Error::Domain(format!(
                "GRIN gradient g must be > 0, got {}",
                self.gradient
            )));
        }
        if !(self.n0 > 0.0) || !(self.length >= 0.0) || !(self.diameter > 0.0) {
            return Err(Error::Domain(format!("invalid GRIN segment {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainElement {
    FreeSpace { length: f64, medium: Medium },
    GrinSegment(GrinParams),
    FlatInterface { from: Medium, to: Medium },
}

impl TrainElement {
    pub fn free_space(length: f64, medium: impl Into<String>) -> Self {
        TrainElement::FreeSpace {
            length,
            medium: Medium::material(medium),
        }
    }

    pub fn interface(from: Medium, to: Medium) -> Self {
        TrainElement::FlatInterface { from, to }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TrainElement::FreeSpace { length, .. } if !(*length >= 0.0) || !length.is_finite() => {
                Err(Error::Domain(format!(
                    "free-space length must be >= 0, got {length}"
                )))
            }
            TrainElement::GrinSegment(g) => g.validate(),
            _ => Ok(()),
        }
    }

    /// Medium the element leaves the beam in.
    fn exit_medium(&self) -> Medium {
        match self {
            TrainElement::FreeSpace { medium, .. } => medium.clone(),
            TrainElement::GrinSegment(g) => Medium::Index(g.n0),
            TrainElement::FlatInterface { to, .. } => to.clone(),
        }
    }

    fn entry_medium(&self) -> Medium {
        match self {
            TrainElement::FreeSpace { medium, .. } => medium.clone(),
            TrainElement::GrinSegment(g) => Medium::Index(g.n0),
            TrainElement::FlatInterface { from, .. } => from.clone(),
        }
    }

    fn resolve(&self, db: &MaterialDb, wavelength: f64) -> Result<ResolvedElement> {
        self.validate()?;
        Ok(match self {
            TrainElement::FreeSpace { length, medium } => ResolvedElement::FreeSpace {
                length: *length,
                n: medium.resolve(db, wavelength)?,
            },
            TrainElement::GrinSegment(g) => ResolvedElement::Grin(*g),
            TrainElement::FlatInterface { from, to } => ResolvedElement::Interface {
                n1: from.resolve(db, wavelength)?,
                n2: to.resolve(db, wavelength)?,
            },
        })
    }
}

/// Element with numeric indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedElement {
    FreeSpace { length: f64, n: f64 },
    Grin(GrinParams),
    Interface { n1: f64, n2: f64 },
}

impl ResolvedElement {
    pub fn length(&self) -> f64 {
        match self {
            ResolvedElement::FreeSpace { length, .. } => *length,
            ResolvedElement::Grin(g) => g.length,
            ResolvedElement::Interface { .. } => 0.0,
        }
    }

    /// Matrix for the first `length` of the element (the whole element for
    /// an interface).
    fn partial_abcd(&self, length: f64) -> Abcd {
        match self {
            ResolvedElement::FreeSpace { .. } => Abcd::free_space(length),
            ResolvedElement::Grin(g) => Abcd::grin(g.gradient, length),
            ResolvedElement::Interface { n1, n2 } => Abcd::interface(*n1, *n2),
        }
    }
}

/// Ray-transfer matrix of a resolved element. Its determinant equals
/// `n_in / n_out`.
pub fn element_abcd(element: &ResolvedElement) -> Abcd {
    element.partial_abcd(element.length())
}

/// Checks preconditions and returns the matrix for an unresolved element.
pub fn train_element_abcd(
    element: &TrainElement,
    db: &MaterialDb,
    wavelength: f64,
) -> Result<Abcd> {
    Ok(element_abcd(&element.resolve(db, wavelength)?))
}

/// Fiber mode entering the train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputMode {
    pub waist_radius: f64,
    pub medium: Medium,
}

impl InputMode {
    /// Standard single-mode fiber at `wavelength`: MFD interpolated linearly
    /// between the 1310 nm and 1550 nm values.
    pub fn smf(wavelength: f64) -> Self {
        let t = (wavelength - 1310e-9) / (1550e-9 - 1310e-9);
        let mfd = SMF_MFD_1310 + t * (SMF_MFD_1550 - SMF_MFD_1310);
        Self {
            waist_radius: mfd / 2.0,
            medium: Medium::material("fiber_core"),
        }
    }

    pub fn with_mfd(mfd: f64) -> Self {
        Self {
            waist_radius: mfd / 2.0,
            medium: Medium::material("fiber_core"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamTrain {
    pub wavelength: f64,
    pub input: InputMode,
    pub elements: Vec<TrainElement>,
}

/// Mechanical layout between the fiber end and the meander.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackagingGeometry {
    /// fiber exit face to substrate rear face, metres
    pub gap: f64,
    pub gap_medium: String,
    pub substrate_thickness: f64,
    pub substrate: String,
}

impl Default for PackagingGeometry {
    fn default() -> Self {
        Self {
            gap: 20e-6,
            gap_medium: "vacuum".into(),
            substrate_thickness: 400e-6,
            substrate: "MgO".into(),
        }
    }
}

impl PackagingGeometry {
    pub fn with_substrate_thickness(mut self, t: f64) -> Self {
        self.substrate_thickness = t;
        self
    }
}

impl BeamTrain {
    /// Fiber, optional coreless spacer, GRIN segments in order, then the gap
    /// and substrate. With no lenses this is the bare-fiber package.
    pub fn packaged(
        wavelength: f64,
        input: InputMode,
        spacer: Option<f64>,
        lenses: &[GrinParams],
        geometry: &PackagingGeometry,
    ) -> Self {
        let mut elements = Vec::new();
        let mut current = input.medium.clone();
        if let Some(len) = spacer {
            elements.push(TrainElement::FreeSpace {
                length: len,
                medium: current.clone(),
            });
        }
        for lens in lenses {
            let to = Medium::Index(lens.n0);
            elements.push(TrainElement::interface(current.clone(), to.clone()));
            elements.push(TrainElement::GrinSegment(*lens));
            current = to;
        }
        let gap = Medium::material(geometry.gap_medium.clone());
        let sub = Medium::material(geometry.substrate.clone());
        elements.push(TrainElement::interface(current, gap.clone()));
        elements.push(TrainElement::FreeSpace {
            length: geometry.gap,
            medium: gap.clone(),
        });
        elements.push(TrainElement::interface(gap, sub.clone()));
        elements.push(TrainElement::FreeSpace {
            length: geometry.substrate_thickness,
            medium: sub,
        });
        Self {
            wavelength,
            input,
            elements,
        }
    }

    /// Lens segments in order.
    pub fn lenses(&self) -> Vec<GrinParams> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                TrainElement::GrinSegment(g) => Some(*g),
                _ => None,
            })
            .collect()
    }

    pub fn with_wavelength(&self, wavelength: f64) -> Self {
        Self {
            wavelength,
            ..self.clone()
        }
    }

    /// Checks that adjacent media agree and resolves indices.
    pub fn resolve(&self, db: &MaterialDb) -> Result<ResolvedTrain> {
        if !(self.wavelength > 0.0) || !(self.input.waist_radius > 0.0) {
            return Err(Error::Domain(
                "beam train needs positive wavelength and input waist".into(),
            ));
        }
        let mut current = self.input.medium.clone();
        let mut elements = Vec::with_capacity(self.elements.len());
        for (i, el) in self.elements.iter().enumerate() {
            let entry = el.entry_medium();
            if !entry.same_as(&current) {
                return Err(Error::Config(format!(
                    "element {i} expects medium {entry} but the beam is in {current}"
                )));
            }
            elements.push(el.resolve(db, self.wavelength)?);
            current = el.exit_medium();
        }
        let input_index = self.input.medium.resolve(db, self.wavelength)?;
        Ok(ResolvedTrain {
            wavelength: self.wavelength,
            input: GaussianMode {
                waist_radius: self.input.waist_radius,
                wavelength: self.wavelength,
                medium_index: input_index,
            },
            elements,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamSample {
    /// cumulative physical position along the train, metres
    pub z: f64,
    pub w: f64,
    /// wavefront radius of curvature; infinite at a waist
    pub radius: f64,
    pub medium_index: f64,
}

/// Beam state at the end of the train (the meander plane).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalSpot {
    pub q: Complex64,
    pub medium_index: f64,
    pub w: f64,
    pub radius: f64,
    /// radius of the beam's own waist
    pub waist_radius: f64,
    /// signed distance from the end plane to the waist (positive: beyond)
    pub waist_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamProfile {
    pub samples: Vec<BeamSample>,
    pub end: FinalSpot,
    /// largest spot radius inside each GRIN segment, in order
    pub grin_max_radius: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTrain {
    pub wavelength: f64,
    pub input: GaussianMode,
    pub elements: Vec<ResolvedElement>,
}

/// Largest spot radius reached over `[0, length]` inside a GRIN medium of
/// gradient `g`, starting from `q` (local medium index `n`).
///
/// Inside the segment `w(t)² = w_in²·|cos gt + sin gt /(g q)|²`, a constant
/// plus a single harmonic in `2gt`, so the maximum is found in closed form.
pub fn grin_max_radius(q: Complex64, g: f64, length: f64, wavelength: f64, n: f64) -> f64 {
    let (w_in, _) = spot_from_q(q, wavelength, n);
    let u = (q * g).inv();
    let u2 = u.norm_sqr();
    let mean = 0.5 * (1.0 + u2);
    let ca = 0.5 * (1.0 - u2);
    let sa = u.re;
    let amp = ca.hypot(sa);
    let f = |phase: f64| mean + ca * phase.cos() + sa * phase.sin();
    let span = 2.0 * g * length;
    let mut best = f(0.0).max(f(span));
    if span >= 2.0 * PI {
        best = mean + amp;
    } else {
        let peak = sa.atan2(ca).rem_euclid(2.0 * PI);
        if peak <= span {
            best = best.max(mean + amp);
        }
    }
    w_in * best.max(0.0).sqrt()
}

impl ResolvedTrain {
    /// Propagates the input mode to the end plane. With `step`, spot samples
    /// are also taken every `step` metres inside each element.
    pub fn propagate(&self, step: Option<f64>) -> Result<BeamProfile> {
        let wl = self.wavelength;
        let mut q = self.input.q();
        let mut n = self.input.medium_index;
        let mut z = 0.0;
        let mut samples = Vec::new();
        let mut grin_max = Vec::new();
        let mut warnings = Vec::new();
        let push = |samples: &mut Vec<BeamSample>, q: Complex64, n: f64, z: f64| {
            let (w, radius) = spot_from_q(q, wl, n);
            samples.push(BeamSample {
                z,
                w,
                radius,
                medium_index: n,
            });
        };
        push(&mut samples, q, n, z);

        for (i, el) in self.elements.iter().enumerate() {
            let len = el.length();
            let n_out = match el {
                ResolvedElement::FreeSpace { n, .. } => *n,
                ResolvedElement::Grin(g) => g.n0,
                ResolvedElement::Interface { n2, .. } => *n2,
            };
            if let ResolvedElement::Grin(g) = el {
                let wmax = grin_max_radius(q, g.gradient, g.length, wl, n_out);
                if wmax > g.diameter / 4.0 {
                    warnings.push(format!(
                        "element {i}: spot radius {:.2} um exceeds a quarter of the {:.0} um GRIN aperture",
                        wmax * 1e6,
                        g.diameter * 1e6
                    ));
                }
                grin_max.push(wmax);
            }
            if let (Some(step), true) = (step, len > 0.0) {
                if step > 0.0 {
                    let count = (len / step).ceil() as usize;
                    for k in 1..count {
                        let t = step * k as f64;
                        let qk = el.partial_abcd(t).transform(q);
                        check_q(qk, i)?;
                        push(&mut samples, qk, n_out, z + t);
                    }
                }
            }
            q = element_abcd(el).transform(q);
            check_q(q, i)?;
            n = n_out;
            z += len;
            push(&mut samples, q, n, z);
        }

        let (w, radius) = spot_from_q(q, wl, n);
        let end = FinalSpot {
            q,
            medium_index: n,
            w,
            radius,
            waist_radius: (wl * q.im / (PI * n)).sqrt(),
            waist_offset: -q.re,
        };
        Ok(BeamProfile {
            samples,
            end,
            grin_max_radius: grin_max,
            warnings,
        })
    }

    /// End-plane beam and the largest spot radius inside each GRIN segment;
    /// cheaper than [`propagate`](Self::propagate).
    pub fn end_spot(&self) -> Result<(FinalSpot, Vec<f64>)> {
        let wl = self.wavelength;
        let mut q = self.input.q();
        let mut n = self.input.medium_index;
        let mut grin_max = Vec::new();
        for (i, el) in self.elements.iter().enumerate() {
            if let ResolvedElement::Grin(g) = el {
                grin_max.push(grin_max_radius(q, g.gradient, g.length, wl, g.n0));
            }
            q = element_abcd(el).transform(q);
            check_q(q, i)?;
            n = match el {
                ResolvedElement::FreeSpace { n, .. } => *n,
                ResolvedElement::Grin(g) => g.n0,
                ResolvedElement::Interface { n2, .. } => *n2,
            };
        }
        let (w, radius) = spot_from_q(q, wl, n);
        Ok((
            FinalSpot {
                q,
                medium_index: n,
                w,
                radius,
                waist_radius: (wl * q.im / (PI * n)).sqrt(),
                waist_offset: -q.re,
            },
            grin_max,
        ))
    }
}

fn check_q(q: Complex64, element: usize) -> Result<()> {
    if !(q.im > 0.0) || !q.re.is_finite() {
        return Err(Error::Consistency(format!(
            "beam parameter lost Im(q) > 0 after element {element} (q = {q})"
        )));
    }
    Ok(())
}

/// Propagates `train` and samples every `step` metres inside elements.
pub fn propagate(train: &BeamTrain, db: &MaterialDb, step: Option<f64>) -> Result<BeamProfile> {
    train.resolve(db)?.propagate(step)
}

/// Fraction of a centred Gaussian beam of spot radius `w` falling inside the
/// square `|x|, |y| <= half_side`: `erf(√2·a/w)²`.
pub fn square_aperture_coupling(w: f64, half_side: f64) -> f64 {
    square_aperture_coupling_offset(w, half_side, 0.0, 0.0)
}

/// As [`square_aperture_coupling`] with the beam centre displaced by
/// `(dx, dy)`.
pub fn square_aperture_coupling_offset(w: f64, half_side: f64, dx: f64, dy: f64) -> f64 {
    if half_side.is_infinite() {
        return 1.0;
    }
    let s = std::f64::consts::SQRT_2 / w;
    let axis = |d: f64| 0.5 * (erf(s * (half_side - d)) + erf(s * (half_side + d)));
    (axis(dx) * axis(dy)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// JSON train files (lengths in µm)

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainFile {
    wavelength_nm: f64,
    input: InputFile,
    elements: Vec<ElementFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InputFile {
    mfd_um: f64,
    medium: Medium,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ElementFile {
    FreeSpace {
        length_um: f64,
        medium: Medium,
    },
    Grin {
        n0: f64,
        g_per_mm: f64,
        length_um: f64,
        #[serde(default = "default_diameter_um")]
        diameter_um: f64,
    },
    Interface {
        from: Medium,
        to: Medium,
    },
}

fn default_diameter_um() -> f64 {
    GRIN_DIAMETER * 1e6
}

impl BeamTrain {
    pub fn from_json(text: &str) -> Result<Self> {
        let f: TrainFile = serde_json::from_str(text)?;
        let elements = f
            .elements
            .into_iter()
            .map(|e| match e {
                ElementFile::FreeSpace { length_um, medium } => TrainElement::FreeSpace {
                    length: length_um * 1e-6,
                    medium,
                },
                ElementFile::Grin {
                    n0,
                    g_per_mm,
                    length_um,
                    diameter_um,
                } => TrainElement::GrinSegment(GrinParams {
                    n0,
                    gradient: g_per_mm * 1e3,
                    length: length_um * 1e-6,
                    diameter: diameter_um * 1e-6,
                }),
                ElementFile::Interface { from, to } => TrainElement::FlatInterface { from, to },
            })
            .collect();
        Ok(Self {
            wavelength: f.wavelength_nm * 1e-9,
            input: InputMode {
                waist_radius: f.input.mfd_um * 1e-6 / 2.0,
                medium: f.input.medium,
            },
            elements,
        })
    }

    pub fn to_json(&self) -> String {
        let f = TrainFile {
            wavelength_nm: self.wavelength * 1e9,
            input: InputFile {
                mfd_um: self.input.waist_radius * 2e6,
                medium: self.input.medium.clone(),
            },
            elements: self
                .elements
                .iter()
                .map(|e| match e {
                    TrainElement::FreeSpace { length, medium } => ElementFile::FreeSpace {
                        length_um: length * 1e6,
                        medium: medium.clone(),
                    },
                    TrainElement::GrinSegment(g) => ElementFile::Grin {
                        n0: g.n0,
                        g_per_mm: g.gradient * 1e-3,
                        length_um: g.length * 1e6,
                        diameter_um: g.diameter * 1e6,
                    },
                    TrainElement::FlatInterface { from, to } => ElementFile::Interface {
                        from: from.clone(),
                        to: to.clone(),
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&f).expect("train serialises")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
