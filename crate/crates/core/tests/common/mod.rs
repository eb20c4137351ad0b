//! Independent reference solvers used to cross-check the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use snspd::beamtrain::{ResolvedElement, ResolvedTrain};
use snspd::thinfilm::ResolvedStack;

// ---------------------------------------------------------------------------
// Angular-spectrum / split-step beam propagation

/// Scalar field on a 1-D transverse grid. A circular Gaussian in a parabolic
/// index profile separates into identical x and y factors, so one transverse
/// axis carries the full spot-size evolution.
pub struct Field1d {
    pub x: Vec<f64>,
    pub e: Vec<Complex64>,
    kx: Vec<f64>,
    wavelength: f64,
}

impl Field1d {
    pub fn gaussian(w0: f64, wavelength: f64, width: f64, n: usize) -> Self {
        let dx = width / n as f64;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * dx).collect();
        let e = x
            .iter()
            .map(|&x| Complex64::new((-(x * x) / (w0 * w0)).exp(), 0.0))
            .collect();
        let kx = (0..n)
            .map(|i| {
                let m = if i < n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                };
                2.0 * PI * m / width
            })
            .collect();
        Self {
            x,
            e,
            kx,
            wavelength,
        }
    }

    /// 1/e² intensity radius from the second moment: `w = 2·sqrt(<x²>)`.
    pub fn radius(&self) -> f64 {
        let (mut s0, mut s2) = (0.0, 0.0);
        for (x, e) in self.x.iter().zip(&self.e) {
            let p = e.norm_sqr();
            s0 += p;
            s2 += p * x * x;
        }
        2.0 * (s2 / s0).sqrt()
    }

    /// Exact angular-spectrum step through a homogeneous medium (may be negative).
    pub fn free_space(&mut self, planner: &mut FftPlanner<f64>, length: f64, n: f64) {
        let k = 2.0 * PI * n / self.wavelength;
        let kx = self.kx.clone();
        self.in_k_space(planner, |i, a| {
            let kz = Complex64::new(k * k - kx[i] * kx[i], 0.0).sqrt();
            *a *= (Complex64::i() * (kz - k) * length).exp();
        });
    }

    fn in_k_space(
        &mut self,
        planner: &mut FftPlanner<f64>,
        mut f: impl FnMut(usize, &mut Complex64),
    ) {
        let n = self.e.len();
        planner.plan_fft_forward(n).process(&mut self.e);
        for (i, a) in self.e.iter_mut().enumerate() {
            f(i, a);
        }
        planner.plan_fft_inverse(n).process(&mut self.e);
        let scale = 1.0 / n as f64;
        self.e.iter_mut().for_each(|a| *a *= scale);
    }

    /// Fresnel (paraxial) transfer function `exp(−i kx² L / 2k)`.
    pub fn fresnel(&mut self, planner: &mut FftPlanner<f64>, length: f64, n: f64) {
        let k = 2.0 * PI * n / self.wavelength;
        let kx = self.kx.clone();
        self.in_k_space(planner, |i, a| {
            *a *= (Complex64::i() * (-kx[i] * kx[i] / (2.0 * k)) * length).exp();
        });
    }

    /// Strang split-step through `n(x) = n0 (1 − g²x²/2)`. With `paraxial`
    /// the diffraction steps use the Fresnel kernel, matching the order of
    /// approximation of the parabolic profile itself.
    pub fn grin(
        &mut self,
        planner: &mut FftPlanner<f64>,
        n0: f64,
        g: f64,
        length: f64,
        dz: f64,
        paraxial: bool,
    ) {
        let steps = (length / dz).ceil().max(1.0) as usize;
        let h = length / steps as f64;
        let k0 = 2.0 * PI / self.wavelength;
        let phase: Vec<Complex64> = self
            .x
            .iter()
            .map(|&x| (Complex64::i() * (-k0 * n0 * g * g * x * x / 2.0) * h).exp())
            .collect();
        let diffract = |f: &mut Self, planner: &mut FftPlanner<f64>, len: f64| {
            if paraxial {
                f.fresnel(planner, len, n0)
            } else {
                f.free_space(planner, len, n0)
            }
        };
        diffract(self, planner, h / 2.0);
        for s in 0..steps {
            self.e.iter_mut().zip(&phase).for_each(|(e, p)| *e *= p);
            diffract(self, planner, if s + 1 == steps { h / 2.0 } else { h });
        }
    }
}

pub struct BpmResult {
    /// spot radius at the end plane
    pub end_w: f64,
    /// smallest radius found scanning the final medium around the end plane
    pub waist_w: f64,
    /// signed position of that minimum relative to the end plane
    pub waist_z: f64,
}

/// Propagates the train's input mode with the angular-spectrum method and a
/// split-step treatment of GRIN segments. Flat interfaces keep the transverse
/// field (paraxial, Fresnel amplitude ignored).
pub fn bpm(
    train: &ResolvedTrain,
    width: f64,
    points: usize,
    dz: f64,
    scan: f64,
    paraxial_grin: bool,
) -> BpmResult {
    let mut planner = FftPlanner::new();
    let mut f = Field1d::gaussian(train.input.waist_radius, train.wavelength, width, points);
    let mut n_last = train.input.medium_index;
    for el in &train.elements {
        match *el {
            ResolvedElement::FreeSpace { length, n } => {
                f.free_space(&mut planner, length, n);
                n_last = n;
            }
            ResolvedElement::Grin(g) => {
                f.grin(&mut planner, g.n0, g.gradient, g.length, dz, paraxial_grin);
                n_last = g.n0;
            }
            ResolvedElement::Interface { n2, .. } => n_last = n2,
        }
    }
    let end_w = f.radius();
    let mut best = (end_w, 0.0);
    let step = scan / 100.0;
    if scan > 0.0 {
        let base = f.e.clone();
        for k in -100..=100 {
            let z = k as f64 * step;
            f.e.clone_from(&base);
            f.free_space(&mut planner, z, n_last);
            let w = f.radius();
            if w < best.0 {
                best = (w, z);
            }
        }
    }
    BpmResult {
        end_w,
        waist_w: best.0,
        waist_z: best.1,
    }
}

// ---------------------------------------------------------------------------
// Thin films by direct integration of the wave equation

pub struct FieldIntegration {
    pub reflectance: f64,
    pub transmittance: f64,
    pub absorptance: Vec<f64>,
}

fn kz(n: Complex64, kt: f64, k0: f64) -> Complex64 {
    let v = (n * n * k0 * k0 - kt * kt).sqrt();
    if v.im < 0.0 {
        -v
    } else {
        v
    }
}

/// TE (s) response of a stack by RK4 integration of `E'' = −kz²E` from the
/// exit side back to the incidence side. Layer absorptance is the drop of
/// `Im(E*·E')` across the layer.
pub fn integrate_te(
    stack: &ResolvedStack,
    wavelength: f64,
    angle: f64,
    step: f64,
) -> FieldIntegration {
    let k0 = 2.0 * PI / wavelength;
    let n0 = Complex64::new(stack.incidence, 0.0);
    let kt = stack.incidence * angle.sin() * k0;
    let kz0 = kz(n0, kt, k0);
    let kze = kz(stack.exit, kt, k0);
    // exit side: a single outgoing (or decaying) wave with unit amplitude
    let mut e = Complex64::new(1.0, 0.0);
    let mut de = Complex64::i() * kze;
    let flux = |e: Complex64, de: Complex64| (e.conj() * de).im;
    let mut fluxes = vec![flux(e, de)];
    for &(n, d) in stack.layers.iter().rev() {
        let kz2 = kz(n, kt, k0).powi(2);
        let steps = (d / step).ceil().max(1.0) as usize;
        let h = -d / steps as f64;
        // y = (E, E'); y' = (E', −kz²E)
        let f = |y: (Complex64, Complex64)| (y.1, -kz2 * y.0);
        for _ in 0..steps {
            let y = (e, de);
            let a = f(y);
            let b = f((y.0 + a.0 * (h / 2.0), y.1 + a.1 * (h / 2.0)));
            let c = f((y.0 + b.0 * (h / 2.0), y.1 + b.1 * (h / 2.0)));
            let dd = f((y.0 + c.0 * h, y.1 + c.1 * h));
            e = y.0 + (a.0 + b.0 * 2.0 + c.0 * 2.0 + dd.0) * (h / 6.0);
            de = y.1 + (a.1 + b.1 * 2.0 + c.1 * 2.0 + dd.1) * (h / 6.0);
        }
        fluxes.push(flux(e, de));
    }
    let fwd = (e + de / (Complex64::i() * kz0)) / 2.0;
    let back = (e - de / (Complex64::i() * kz0)) / 2.0;
    let incident = kz0.re * fwd.norm_sqr();
    fluxes.reverse();
    let absorptance = fluxes
        .windows(2)
        .map(|w| (w[0] - w[1]) / incident)
        .collect();
    FieldIntegration {
        reflectance: (back / fwd).norm_sqr(),
        transmittance: fluxes[fluxes.len() - 1] / incident,
        absorptance,
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo and closed forms

/// Fraction of `samples` Gaussian-distributed points (intensity 1/e² radius
/// `w`) landing in the centred square of half-side `a`.
pub fn monte_carlo_coupling(w: f64, a: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, w / 2.0).unwrap();
    let hits = (0..samples)
        .filter(|_| {
            let x: f64 = rng.sample(normal);
            let y: f64 = rng.sample(normal);
            x.abs() <= a && y.abs() <= a
        })
        .count();
    hits as f64 / samples as f64
}

/// Normal-incidence Fresnel reflectance between real indices.
pub fn fresnel_r(n1: f64, n2: f64) -> f64 {
    ((n1 - n2) / (n1 + n2)).powi(2)
}
