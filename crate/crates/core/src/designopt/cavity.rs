//! Spacer/mirror thickness design for band-averaged meander absorptance.

use crate::designopt::search::{
    from_box, golden_section_max, nelder_mead, to_box, NelderMeadOptions,
};
use crate::error::{Error, Result};
use crate::materials::MaterialDb;
use crate::sweep::SweepResult;
use crate::thinfilm::{
    grouped_absorptance, wavelength_grid, LayerStack, Polarization, ResolvedStack,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CavityDesignProblem {
    pub stack: LayerStack,
    /// indices into `stack.layers` whose thickness is free (one or two)
    pub variable_layers: Vec<usize>,
    /// metres
    pub bounds: (f64, f64),
    /// metres
    pub band: (f64, f64),
    pub points: usize,
    /// per-wavelength weights; uniform when `None`
    pub weights: Option<Vec<f64>>,
    /// coarse-scan spacing, metres
    pub grid_step: f64,
}

impl CavityDesignProblem {
    /// Free thickness of layer `layer` in `stack`, 10–600 nm, over 1300–1600 nm.
    pub fn new(stack: LayerStack, variable_layers: Vec<usize>) -> Self {
        Self {
            stack,
            variable_layers,
            bounds: (10e-9, 600e-9),
            band: (1300e-9, 1600e-9),
            points: 31,
            weights: None,
            grid_step: 2e-9,
        }
    }

    /// Reference device with the SiO spacer free.
    pub fn reference() -> Self {
        let stack = LayerStack::reference_device();
        let spacer = stack
            .layers
            .iter()
            .position(|l| l.material == "SiO")
            .expect("spacer layer");
        Self::new(stack, vec![spacer])
    }

    fn validate(&self) -> Result<()> {
        if self.variable_layers.is_empty() || self.variable_layers.len() > 2 {
            return Err(Error::Config(format!(
                "cavity design supports one or two variable layers, got {}",
                self.variable_layers.len()
            )));
        }
        for &i in &self.variable_layers {
            if i >= self.stack.layers.len() {
                return Err(Error::Config(format!("variable layer {i} does not exist")));
            }
        }
        if self.variable_layers.len() == 2 && self.variable_layers[0] == self.variable_layers[1] {
            return Err(Error::Config("variable layers must differ".into()));
        }
        let (lo, hi) = self.bounds;
        if !(lo > 0.0 && hi >= lo) || !(self.grid_step > 0.0) {
            return Err(Error::Domain(format!(
                "invalid thickness bounds [{lo}, {hi}] / step"
            )));
        }
        if !(self.band.1 >= self.band.0) || !(self.band.0 > 0.0) || self.points == 0 {
            return Err(Error::Domain("wavelength band is empty".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.points
                || w.iter().any(|v| !(*v >= 0.0))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::Config(format!(
                    "weights must be {} non-negative values with a positive sum",
                    self.points
                )));
            }
        }
        Ok(())
    }

    fn thickness_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds;
        let steps = ((hi - lo) / self.grid_step + 1e-9).floor() as usize;
        (0..=steps)
            .map(|k| lo + k as f64 * self.grid_step)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityDesign {
    /// optimal thickness per variable layer, metres
    pub thicknesses: Vec<f64>,
    pub objective: f64,
    pub grid_best: (Vec<f64>, f64),
    /// full coarse scan: `thickness_nm` (and `thickness2_nm`), `mean_A_nbn`
    pub curve: SweepResult,
    pub stack: LayerStack,
}

/// Band-averaged meander absorptance with indices resolved once per wavelength.
struct BandObjective<'a> {
    problem: &'a CavityDesignProblem,
    resolved: Vec<(f64, ResolvedStack)>,
    weights: Vec<f64>,
}

impl<'a> BandObjective<'a> {
    fn new(problem: &'a CavityDesignProblem, db: &MaterialDb) -> Result<Self> {
        let grid = wavelength_grid(problem.band.0, problem.band.1, problem.points)?;
        let resolved = grid
            .iter()
            .map(|&wl| Ok((wl, problem.stack.resolve(db, wl)?)))
            .collect::<Result<Vec<_>>>()?;
        let weights = problem
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0; problem.points]);
        Ok(Self {
            problem,
            resolved,
            weights,
        })
    }

    fn eval(&self, thicknesses: &[f64]) -> Result<f64> {
        let (mut acc, mut norm) = (0.0, 0.0);
        for ((wl, rs), w) in self.resolved.iter().zip(&self.weights) {
            let mut rs = rs.clone();
            for (&i, &t) in self.problem.variable_layers.iter().zip(thicknesses) {
                rs.layers[i].1 = t;
            }
            let resp = rs.response(*wl, 0.0, Polarization::TE)?;
            acc += w * grouped_absorptance(&self.problem.stack, &resp).0;
            norm += w;
        }
        let v = acc / norm;
        if !v.is_finite() {
            let nm: Vec<String> = thicknesses
                .iter()
                .map(|t| format!("{:.3} nm", t * 1e9))
                .collect();
            return Err(Error::Computation(format!(
                "band objective is not finite at thickness {}",
                nm.join(", ")
            )));
        }
        Ok(v)
    }
}

/// Coarse scan plus local refinement. The returned objective is never below
/// the best coarse-grid value.
pub fn optimize_cavity(problem: &CavityDesignProblem, db: &MaterialDb) -> Result<CavityDesign> {
    problem.validate()?;
    let obj = BandObjective::new(problem, db)?;
    let grid = problem.thickness_grid();
    let (lo, hi) = problem.bounds;
    let step = problem.grid_step;

    let (grid_best, curve) = if problem.variable_layers.len() == 1 {
        let mut curve = SweepResult::new(["thickness_nm", "mean_A_nbn"]);
        let mut best = (vec![grid[0]], f64::NEG_INFINITY);
        for &t in &grid {
            let v = obj.eval(&[t])?;
            curve.push(vec![t * 1e9, v]);
            if v > best.1 {
                best = (vec![t], v);
            }
        }
        (best, curve)
    } else {
        let mut curve = SweepResult::new(["thickness_nm", "thickness2_nm", "mean_A_nbn"]);
        let mut best = (vec![grid[0], grid[0]], f64::NEG_INFINITY);
        for &t1 in &grid {
            for &t2 in &grid {
                let v = obj.eval(&[t1, t2])?;
                curve.push(vec![t1 * 1e9, t2 * 1e9, v]);
                if v > best.1 {
                    best = (vec![t1, t2], v);
                }
            }
        }
        (best, curve)
    };

    let bracket = |t: f64| ((t - step).max(lo), (t + step).min(hi));
    let refined: (Vec<f64>, f64) = if problem.variable_layers.len() == 1 {
        let (a, b) = bracket(grid_best.0[0]);
        let (x, v) =
            golden_section_max(|t| obj.eval(&[t]).unwrap_or(f64::NEG_INFINITY), a, b, 1e-13);
        (vec![x], v)
    } else {
        let boxes: Vec<(f64, f64)> = grid_best.0.iter().map(|&t| bracket(t)).collect();
        let u0: Vec<f64> = grid_best
            .0
            .iter()
            .zip(&boxes)
            .map(|(&t, &(a, b))| from_box(t, a, b))
            .collect();
        let map = |u: &[f64]| -> Vec<f64> {
            u.iter()
                .zip(&boxes)
                .map(|(&u, &(a, b))| to_box(u, a, b))
                .collect()
        };
        let m = nelder_mead(
            |u| -obj.eval(&map(u)).unwrap_or(f64::NEG_INFINITY),
            &u0,
            &NelderMeadOptions {
                initial_step: 0.3,
                ..Default::default()
            },
        );
        (map(&m.x), -m.value)
    };
    let (thicknesses, objective) = if refined.1 >= grid_best.1 {
        refined
    } else {
        grid_best.clone()
    };

    let mut stack = problem.stack.clone();
    for (&i, &t) in problem.variable_layers.iter().zip(&thicknesses) {
        stack = stack.with_thickness(i, t)?;
    }
    Ok(CavityDesign {
        thicknesses,
        objective,
        grid_best,
        curve,
        stack,
    })
}

/// Band-averaged meander absorptance of `stack` as configured.
pub fn band_average(
    stack: &LayerStack,
    db: &MaterialDb,
    band: (f64, f64),
    points: usize,
) -> Result<f64> {
    let problem = CavityDesignProblem {
        band,
        points,
        ..CavityDesignProblem::new(stack.clone(), vec![])
    };
    let obj = BandObjective::new(&problem, db)?;
    obj.eval(&[])
}
