//! Cavity and lens-train design, plus parameter sweeps over registered
//! pipelines.

pub mod cavity;
pub mod lens;
pub mod search;

pub use cavity::{band_average, optimize_cavity, CavityDesign, CavityDesignProblem};
pub use lens::{
    evaluate_lenses, optimize_lens_from_catalog, optimize_lens_train, parse_catalog,
    substrate_sweep, CatalogDesign, CatalogLens, LensBounds, LensDesign, LensDesignProblem,
    LensEvaluation, DEFAULT_MAX_NA,
};

use crate::beamtrain::{propagate, square_aperture_coupling, BeamTrain};
use crate::detector::{dark_rate, system_de, DetectorChannelModel};
use crate::error::{Error, Result};
use crate::materials::MaterialDb;
use crate::sweep::SweepResult;
use crate::thinfilm::{grouped_absorptance, stack_response, LayerStack, Polarization};

/// Registered computations a sweep can drive.
pub const PIPELINES: [&str; 3] = ["stack-spectrum", "beam-profile", "de-curve"];

/// `variable` names accepted per pipeline:
///
/// * `stack-spectrum`: `wavelength_nm`, or `thickness_nm:<layer>` at the
///   context wavelength
/// * `beam-profile`: `wavelength_nm`, or `substrate_thickness_um` (lenses
///   re-optimised per point when a lens problem is supplied)
/// * `de-curve`: `bias_norm`, or `wavelength_nm` at the context bias
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: String,
    pub grid: Vec<f64>,
    pub pipeline: String,
}

/// Inputs shared by all rows of a sweep.
#[derive(Debug, Clone, Default)]
pub struct SweepContext {
    pub stack: Option<LayerStack>,
    pub train: Option<BeamTrain>,
    pub lens_problem: Option<LensDesignProblem>,
    pub model: Option<DetectorChannelModel>,
    /// metres
    pub wavelength: Option<f64>,
    pub bias: Option<f64>,
    /// active-area side for the coupling column, metres
    pub active_side: Option<f64>,
}

fn need<'a, T>(v: &'a Option<T>, what: &str, pipeline: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("pipeline `{pipeline}` needs {what}")))
}

/// One row per grid value, in grid order.
pub fn sweep(spec: &SweepSpec, ctx: &SweepContext, db: &MaterialDb) -> Result<SweepResult> {
    if !PIPELINES.contains(&spec.pipeline.as_str()) {
        return Err(Error::Config(format!(
            "unknown pipeline `{}`; expected one of {}",
            spec.pipeline,
            PIPELINES.join(", ")
        )));
    }
    if spec.grid.is_empty() {
        return Err(Error::Domain("sweep grid is empty".into()));
    }
    let pipe = spec.pipeline.as_str();
    let var = spec.variable.as_str();
    let bad_var = || {
        Error::Config(format!(
            "variable `{var}` is not supported by pipeline `{pipe}`"
        ))
    };
    match pipe {
        "stack-spectrum" => {
            let stack = need(&ctx.stack, "a layer stack", pipe)?;
            let layer = match var.strip_prefix("thickness_nm:") {
                Some(i) => Some(i.parse::<usize>().map_err(|_| bad_var())?),
                None if var == "wavelength_nm" => None,
                None => return Err(bad_var()),
            };
            let mut out = SweepResult::new([var, "R", "T", "A_nbn", "A_au", "A_other"]);
            for &x in &spec.grid {
                let (s, wl) = match layer {
                    Some(i) => (
                        stack.with_thickness(i, x * 1e-9)?,
                        *need(&ctx.wavelength, "a wavelength", pipe)?,
                    ),
                    None => (stack.clone(), x * 1e-9),
                };
                let r = stack_response(&s, db, wl, 0.0, Polarization::TE)?;
                let (nbn, au, other) = grouped_absorptance(&s, &r);
                out.push(vec![x, r.reflectance, r.transmittance, nbn, au, other]);
            }
            Ok(out)
        }
        "beam-profile" => {
            let side = ctx.active_side.unwrap_or(15e-6);
            let mut out =
                SweepResult::new([var, "w_um", "two_w_um", "waist_offset_um", "coupling"]);
            match var {
                "wavelength_nm" => {
                    let train = need(&ctx.train, "a beam train", pipe)?;
                    for &x in &spec.grid {
                        let end = propagate(&train.with_wavelength(x * 1e-9), db, None)?.end;
                        out.push(vec![
                            x,
                            end.w * 1e6,
                            2.0 * end.w * 1e6,
                            end.waist_offset * 1e6,
                            square_aperture_coupling(end.w, side / 2.0),
                        ]);
                    }
                }
                "substrate_thickness_um" => {
                    if let Some(problem) = &ctx.lens_problem {
                        let grid: Vec<f64> = spec.grid.iter().map(|t| t * 1e-6).collect();
                        let s = substrate_sweep(problem, &grid, db)?;
                        for row in s.rows {
                            let w = row[1] / 2.0;
                            out.push(vec![
                                row[0],
                                w,
                                row[1],
                                row[2],
                                square_aperture_coupling(w * 1e-6, side / 2.0),
                            ]);
                        }
                    } else {
                        let train = need(&ctx.train, "a beam train or lens problem", pipe)?;
                        let lenses = train.lenses();
                        for &x in &spec.grid {
                            let geometry = crate::beamtrain::PackagingGeometry::default()
                                .with_substrate_thickness(x * 1e-6);
                            let t = BeamTrain::packaged(
                                train.wavelength,
                                train.input.clone(),
                                None,
                                &lenses,
                                &geometry,
                            );
                            let end = propagate(&t, db, None)?.end;
                            out.push(vec![
                                x,
                                end.w * 1e6,
                                2.0 * end.w * 1e6,
                                end.waist_offset * 1e6,
                                square_aperture_coupling(end.w, side / 2.0),
                            ]);
                        }
                    }
                }
                _ => return Err(bad_var()),
            }
            Ok(out)
        }
        _ => {
            let model = need(&ctx.model, "a detector model", pipe)?;
            let mut out = SweepResult::new([var, "de", "dcr_hz"]);
            for &x in &spec.grid {
                let (wl, bias) = match var {
                    "bias_norm" => (*need(&ctx.wavelength, "a wavelength", pipe)?, x),
                    "wavelength_nm" => (x * 1e-9, *need(&ctx.bias, "a bias", pipe)?),
                    _ => return Err(bad_var()),
                };
                out.push(vec![
                    x,
                    system_de(model, wl, bias)?,
                    dark_rate(model, bias)?,
                ]);
            }
            Ok(out)
        }
    }
}
