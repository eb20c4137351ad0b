//! GRIN lens-train design: smallest spot on the meander with the waist on
//! the meander plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beamtrain::{
    square_aperture_coupling, BeamTrain, GaussianMode, GrinParams, InputMode, PackagingGeometry,
    ResolvedElement, ResolvedTrain, GRIN_DIAMETER,
};
use crate::designopt::search::{from_box, nelder_mead, to_box, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::materials::MaterialDb;
use crate::sweep::SweepResult;

/// Search box for one GRIN segment. SI units (`gradient` in 1/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensBounds {
    pub n0: (f64, f64),
    pub gradient: (f64, f64),
    pub length: (f64, f64),
    pub diameter: f64,
}

impl Default for LensBounds {
    /// n0 1.5–1.8, g 1–12 mm⁻¹, L 0.1–3 mm, 125 µm diameter.
    fn default() -> Self {
        Self {
            n0: (1.5, 1.8),
            gradient: (1e3, 12e3),
            length: (0.1e-3, 3e-3),
            diameter: GRIN_DIAMETER,
        }
    }
}

impl LensBounds {
    /// Box collapsed onto one lens.
    pub fn pinned(lens: &GrinParams) -> Self {
        Self {
            n0: (lens.n0, lens.n0),
            gradient: (lens.gradient, lens.gradient),
            length: (lens.length, lens.length),
            diameter: lens.diameter,
        }
    }

    fn ranges(&self) -> [(f64, f64); 3] {
        [self.n0, self.gradient, self.length]
    }

    fn validate(&self) -> Result<()> {
        for (lo, hi) in self.ranges() {
            if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                return Err(Error::Domain(format!("invalid lens bounds {self:?}")));
            }
        }
        if !(self.diameter > 0.0) {
            return Err(Error::Domain("lens diameter must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LensDesignProblem {
    pub wavelength: f64,
    pub input: InputMode,
    pub geometry: PackagingGeometry,
    /// one box per GRIN segment, fiber side first
    pub lenses: Vec<LensBounds>,
    /// allowed |waist position error|, metres
    pub focus_tolerance: f64,
    /// upper limit on each segment's `n0·g·D/2`
    pub max_numerical_aperture: f64,
    /// spot radius inside a segment may not exceed this fraction of its diameter
    pub clip_fraction: f64,
    pub starts: usize,
    pub seed: u64,
    /// extra start evaluated after the random ones
    #[serde(default)]
    pub warm_start: Option<Vec<GrinParams>>,
}

/// Commercial GRIN rods rarely exceed this NA.
pub const DEFAULT_MAX_NA: f64 = 0.46;

impl LensDesignProblem {
    /// Two segments, 1550 nm SMF input, 20 µm vacuum gap, MgO of the given thickness.
    pub fn reference(substrate_thickness: f64) -> Self {
        Self {
            wavelength: 1550e-9,
            input: InputMode::smf(1550e-9),
            geometry: PackagingGeometry::default().with_substrate_thickness(substrate_thickness),
            lenses: vec![LensBounds::default(); 2],
            focus_tolerance: 5e-6,
            max_numerical_aperture: DEFAULT_MAX_NA,
            clip_fraction: 0.25,
            starts: 32,
            seed: 0,
            warm_start: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lenses.is_empty() {
            return Err(Error::Config(
                "lens design needs at least one GRIN segment".into(),
            ));
        }
        for b in &self.lenses {
            b.validate()?;
        }
        let positive = [
            self.wavelength,
            self.focus_tolerance,
            self.max_numerical_aperture,
            self.clip_fraction,
            self.geometry.substrate_thickness,
            self.input.waist_radius,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.geometry.gap >= 0.0) {
            return Err(Error::Domain(
                "lens design parameters must be positive".into(),
            ));
        }
        if self.starts == 0 {
            return Err(Error::Config("at least one start is required".into()));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != self.lenses.len() {
                return Err(Error::Config(
                    "warm start has the wrong number of lenses".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn train(&self, lenses: &[GrinParams]) -> BeamTrain {
        BeamTrain::packaged(
            self.wavelength,
            self.input.clone(),
            None,
            lenses,
            &self.geometry,
        )
    }
}

/// Figures of merit for one candidate train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LensEvaluation {
    /// spot diameter 2w on the meander plane, metres
    pub full_width: f64,
    pub waist_radius: f64,
    /// signed distance from the meander plane to the waist
    pub position_error: f64,
    pub max_grin_radius: f64,
    pub max_numerical_aperture: f64,
    /// penalised objective in micrometres
    pub objective: f64,
    /// normalised constraint violation; zero when feasible
    pub violation: f64,
}

impl LensEvaluation {
    pub fn feasible(&self) -> bool {
        self.violation <= 1e-9
    }
}

/// Candidate evaluator with the fixed part of the train resolved once.
struct Evaluator<'a> {
    problem: &'a LensDesignProblem,
    input: GaussianMode,
    n_gap: f64,
    n_sub: f64,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a LensDesignProblem, db: &MaterialDb) -> Result<Self> {
        let wl = problem.wavelength;
        Ok(Self {
            problem,
            input: GaussianMode {
                waist_radius: problem.input.waist_radius,
                wavelength: wl,
                medium_index: problem.input.medium.resolve(db, wl)?,
            },
            n_gap: db.index(&problem.geometry.gap_medium, wl)?.real_checked()?,
            n_sub: db.index(&problem.geometry.substrate, wl)?.real_checked()?,
        })
    }

    fn resolved(&self, lenses: &[GrinParams]) -> ResolvedTrain {
        let g = &self.problem.geometry;
        let mut elements = Vec::with_capacity(2 * lenses.len() + 4);
        let mut n = self.input.medium_index;
        for lens in lenses {
            elements.push(ResolvedElement::Interface { n1: n, n2: lens.n0 });
            elements.push(ResolvedElement::Grin(*lens));
            n = lens.n0;
        }
        elements.push(ResolvedElement::Interface {
            n1: n,
            n2: self.n_gap,
        });
        elements.push(ResolvedElement::FreeSpace {
            length: g.gap,
            n: self.n_gap,
        });
        elements.push(ResolvedElement::Interface {
            n1: self.n_gap,
            n2: self.n_sub,
        });
        elements.push(ResolvedElement::FreeSpace {
            length: g.substrate_thickness,
            n: self.n_sub,
        });
        ResolvedTrain {
            wavelength: self.problem.wavelength,
            input: self.input,
            elements,
        }
    }

    fn evaluate(&self, lenses: &[GrinParams]) -> Result<LensEvaluation> {
        let p = self.problem;
        let (spot, profile_max) = self.resolved(lenses).end_spot()?;
        let mut clip_excess = 0.0;
        let mut clip_violation = 0.0;
        let mut na_excess = 0.0;
        let mut na_max: f64 = 0.0;
        let mut grin_max: f64 = 0.0;
        for (lens, &wmax) in lenses.iter().zip(&profile_max) {
            let limit = p.clip_fraction * lens.diameter;
            clip_excess += (wmax - limit).max(0.0);
            clip_violation += (wmax - limit).max(0.0) / limit;
            let na = lens.numerical_aperture();
            na_excess += (na - p.max_numerical_aperture).max(0.0);
            na_max = na_max.max(na);
            grin_max = grin_max.max(wmax);
        }
        let dz = spot.waist_offset;
        let um = 1e6;
        let objective =
            2.0 * spot.w * um + dz.abs() * um + 10.0 * clip_excess * um + 1e3 * na_excess;
        let violation = ((dz.abs() - p.focus_tolerance).max(0.0) / p.focus_tolerance)
            + clip_violation
            + na_excess / p.max_numerical_aperture;
        Ok(LensEvaluation {
            full_width: 2.0 * spot.w,
            waist_radius: spot.waist_radius,
            position_error: dz,
            max_grin_radius: grin_max,
            max_numerical_aperture: na_max,
            objective,
            violation,
        })
    }
}

trait RealChecked {
    fn real_checked(self) -> Result<f64>;
}

impl RealChecked for crate::materials::ComplexIndex {
    fn real_checked(self) -> Result<f64> {
        if self.is_lossless() {
            Ok(self.n)
        } else {
            Err(Error::Domain(format!(
                "beam medium must be lossless, k = {}",
                self.k
            )))
        }
    }
}

/// Free coordinates of the search and the map back to lens parameters.
struct Space {
    fixed: Vec<[f64; 3]>,
    diameters: Vec<f64>,
    /// (lens, parameter, lo, hi) of each free coordinate
    free: Vec<(usize, usize, f64, f64)>,
}

impl Space {
    fn new(bounds: &[LensBounds]) -> Self {
        let mut fixed = Vec::new();
        let mut free = Vec::new();
        for (i, b) in bounds.iter().enumerate() {
            let r = b.ranges();
            fixed.push([r[0].0, r[1].0, r[2].0]);
            for (j, (lo, hi)) in r.into_iter().enumerate() {
                if hi > lo {
                    free.push((i, j, lo, hi));
                }
            }
        }
        Self {
            fixed,
            diameters: bounds.iter().map(|b| b.diameter).collect(),
            free,
        }
    }

    fn lenses(&self, u: &[f64]) -> Vec<GrinParams> {
        let mut vals = self.fixed.clone();
        for (&(i, j, lo, hi), &ui) in self.free.iter().zip(u) {
            vals[i][j] = to_box(ui, lo, hi);
        }
        vals.iter()
            .zip(&self.diameters)
            .map(|(v, &d)| GrinParams {
                n0: v[0],
                gradient: v[1],
                length: v[2],
                diameter: d,
            })
            .collect()
    }

    fn coords(&self, lenses: &[GrinParams]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&(i, j, lo, hi)| {
                let l = &lenses[i];
                from_box([l.n0, l.gradient, l.length][j], lo, hi)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartOutcome {
    pub index: usize,
    pub objective: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LensDesign {
    pub lenses: Vec<GrinParams>,
    pub evaluation: LensEvaluation,
    pub train: BeamTrain,
    pub starts: Vec<StartOutcome>,
}

impl LensDesign {
    pub fn full_width(&self) -> f64 {
        self.evaluation.full_width
    }

    /// Fraction of the spot inside a square active area of side `side`.
    pub fn coupling(&self, side: f64) -> f64 {
        square_aperture_coupling(self.evaluation.full_width / 2.0, side / 2.0)
    }

    pub fn summary(&self) -> String {
        let e = &self.evaluation;
        let mut s = format!(
            "2w on meander     {:.3} um\nwaist radius      {:.3} um\nwaist offset      {:+.3} um\nmax spot in GRIN  {:.2} um\nmax NA            {:.3}\n",
            e.full_width * 1e6,
            e.waist_radius * 1e6,
            e.position_error * 1e6,
            e.max_grin_radius * 1e6,
            e.max_numerical_aperture
        );
        for (i, l) in self.lenses.iter().enumerate() {
            s.push_str(&format!(
                "lens {}            n0 {:.4}  g {:.4} /mm  L {:.4} mm  pitch {:.4}\n",
                i + 1,
                l.n0,
                l.gradient * 1e-3,
                l.length * 1e3,
                l.pitch()
            ));
        }
        s
    }
}

/// Evaluates one fixed lens set against the problem's constraints.
pub fn evaluate_lenses(
    problem: &LensDesignProblem,
    db: &MaterialDb,
    lenses: &[GrinParams],
) -> Result<LensEvaluation> {
    problem.validate()?;
    Evaluator::new(problem, db)?.evaluate(lenses)
}

/// Multi-start simplex search. Starts are drawn from a ChaCha stream seeded
/// with `problem.seed`, run concurrently and reduced by start index, so the
/// result is bit-identical for identical inputs.
pub fn optimize_lens_train(problem: &LensDesignProblem, db: &MaterialDb) -> Result<LensDesign> {
    problem.validate()?;
    let evaluator = Evaluator::new(problem, db)?;
    let space = Space::new(&problem.lenses);
    let dim = space.free.len();

    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut seeds: Vec<Vec<f64>> = (0..problem.starts)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-half_pi..half_pi))
                .collect()
        })
        .collect();
    if let Some(w) = &problem.warm_start {
        seeds.push(space.coords(w));
    }

    let objective = |u: &[f64]| match evaluator.evaluate(&space.lenses(u)) {
        Ok(e) => e.objective,
        Err(_) => f64::INFINITY,
    };
    let run = |u0: &Vec<f64>| -> Vec<f64> {
        let opts = NelderMeadOptions {
            max_evaluations: 1500 * dim.max(1),
            initial_step: 0.25,
            ..Default::default()
        };
        let first = nelder_mead(objective, u0, &opts);
        // restart from the converged point to escape simplex collapse
        let second = nelder_mead(
            objective,
            &first.x,
            &NelderMeadOptions {
                initial_step: 0.05,
                ..opts
            },
        );
        if second.value <= first.value {
            second.x
        } else {
            first.x
        }
    };

    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(seeds.len());
    let mut results: Vec<Option<Vec<f64>>> = vec![None; seeds.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let seeds = &seeds;
                let run = &run;
                scope.spawn(move || {
                    (w..seeds.len())
                        .step_by(workers)
                        .map(|k| (k, run(&seeds[k])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (k, x) in h.join().expect("lens search worker panicked") {
                results[k] = Some(x);
            }
        }
    });

    let mut outcomes = Vec::with_capacity(results.len());
    let mut best_feasible: Option<(Vec<GrinParams>, LensEvaluation)> = None;
    let mut best_any: Option<(Vec<GrinParams>, LensEvaluation)> = None;
    for (k, u) in results.into_iter().enumerate() {
        let lenses = space.lenses(&u.expect("every start ran"));
        let Ok(eval) = evaluator.evaluate(&lenses) else {
            continue;
        };
        outcomes.push(StartOutcome {
            index: k,
            objective: eval.objective,
            feasible: eval.feasible(),
        });
        let better = |cur: &Option<(Vec<GrinParams>, LensEvaluation)>| {
            cur.as_ref()
                .is_none_or(|(_, e)| eval.objective < e.objective)
        };
        if eval.feasible() && better(&best_feasible) {
            best_feasible = Some((lenses.clone(), eval));
        }
        if best_any
            .as_ref()
            .is_none_or(|(_, e)| eval.violation < e.violation)
        {
            best_any = Some((lenses, eval));
        }
    }

    match best_feasible {
        Some((lenses, evaluation)) => Ok(LensDesign {
            train: problem.train(&lenses),
            lenses,
            evaluation,
            starts: outcomes,
        }),
        None => {
            let (lenses, eval) = best_any
                .ok_or_else(|| Error::Computation("no start produced a valid beam".into()))?;
            let mut best = Vec::new();
            for (i, l) in lenses.iter().enumerate() {
                best.push((format!("lens{}_n0", i + 1), l.n0));
                best.push((format!("lens{}_g_per_mm", i + 1), l.gradient * 1e-3));
                best.push((format!("lens{}_length_mm", i + 1), l.length * 1e3));
            }
            best.push(("two_w_um".into(), eval.full_width * 1e6));
            best.push(("waist_offset_um".into(), eval.position_error * 1e6));
            Err(Error::InfeasibleWithCandidate {
                message: format!("no start met the constraints ({} starts)", outcomes.len()),
                best,
                violation: eval.violation,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog mode

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogLens {
    pub name: String,
    pub n0: f64,
    /// 1/m
    pub gradient: f64,
    /// metres
    pub length: f64,
    pub diameter: f64,
}

/// Parses `name,n0,g_per_mm,length_mm,diameter_um` with `#` comments.
pub fn parse_catalog(text: &str, source: &str) -> Result<Vec<CatalogLens>> {
    let mut out = Vec::new();
    let mut header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header {
            if cells != ["name", "n0", "g_per_mm", "length_mm", "diameter_um"] {
                return Err(Error::parse(source, format!("unexpected header `{line}`")));
            }
            header = true;
            continue;
        }
        if cells.len() != 5 {
            return Err(Error::parse(
                source,
                format!("line {}: expected 5 cells", lineno + 1),
            ));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(source, format!("line {}: `{s}`: {e}", lineno + 1)))
        };
        let lens = CatalogLens {
            name: cells[0].to_string(),
            n0: num(cells[1])?,
            gradient: num(cells[2])? * 1e3,
            length: num(cells[3])? * 1e-3,
            diameter: num(cells[4])? * 1e-6,
        };
        if !(lens.n0 > 0.0 && lens.gradient > 0.0 && lens.length > 0.0 && lens.diameter > 0.0) {
            return Err(Error::parse(
                source,
                format!("line {}: values must be positive", lineno + 1),
            ));
        }
        out.push(lens);
    }
    if out.is_empty() {
        return Err(Error::parse(source, "catalog has no lenses"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogDesign {
    pub names: Vec<String>,
    pub design: LensDesign,
    /// every combination tried: names, 2w [m] (NaN when infeasible)
    pub table: Vec<(Vec<String>, f64)>,
}

/// Picks catalog rods for each segment. Index and gradient are taken from the
/// catalog; each rod may be polished down from its catalog length to the
/// problem's lower length bound.
pub fn optimize_lens_from_catalog(
    problem: &LensDesignProblem,
    catalog: &[CatalogLens],
    db: &MaterialDb,
) -> Result<CatalogDesign> {
    problem.validate()?;
    let segments = problem.lenses.len();
    let mut combos: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..segments {
        combos = combos
            .into_iter()
            .flat_map(|c| (0..catalog.len()).map(move |i| [c.clone(), vec![i]].concat()))
            .collect();
    }
    let mut table = Vec::new();
    let mut best: Option<(Vec<String>, LensDesign)> = None;
    for combo in combos {
        let names: Vec<String> = combo.iter().map(|&i| catalog[i].name.clone()).collect();
        let lenses: Vec<LensBounds> = combo
            .iter()
            .zip(&problem.lenses)
            .map(|(&i, b)| {
                let c = &catalog[i];
                LensBounds {
                    n0: (c.n0, c.n0),
                    gradient: (c.gradient, c.gradient),
                    length: (b.length.0.min(c.length), c.length),
                    diameter: c.diameter,
                }
            })
            .collect();
        let sub = LensDesignProblem {
            lenses,
            starts: problem.starts.min(8),
            warm_start: None,
            ..problem.clone()
        };
        match optimize_lens_train(&sub, db) {
            Ok(d) => {
                table.push((names.clone(), d.full_width()));
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| d.evaluation.objective < b.evaluation.objective)
                {
                    best = Some((names, d));
                }
            }
            Err(Error::InfeasibleWithCandidate { .. }) => table.push((names, f64::NAN)),
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((names, design)) => Ok(CatalogDesign {
            names,
            design,
            table,
        }),
        None => Err(Error::Infeasible(format!(
            "no combination of {} catalog lenses meets the constraints",
            catalog.len()
        ))),
    }
}

/// Re-optimises the lenses for each substrate thickness. Each point also
/// starts from the previous point's design.
pub fn substrate_sweep(
    problem: &LensDesignProblem,
    thicknesses: &[f64],
    db: &MaterialDb,
) -> Result<SweepResult> {
    if thicknesses.is_empty() {
        return Err(Error::Domain("substrate thickness grid is empty".into()));
    }
    let mut out = SweepResult::new([
        "substrate_thickness_um",
        "two_w_um",
        "waist_offset_um",
        "coupling_15um",
    ]);
    let mut previous: Option<Vec<GrinParams>> = None;
    for &t in thicknesses {
        let p = LensDesignProblem {
            geometry: problem.geometry.clone().with_substrate_thickness(t),
            warm_start: previous.clone().or_else(|| problem.warm_start.clone()),
            ..problem.clone()
        };
        let d = optimize_lens_train(&p, db)?;
        out.push(vec![
            t * 1e6,
            d.full_width() * 1e6,
            d.evaluation.position_error * 1e6,
            d.coupling(15e-6),
        ]);
        previous = Some(d.lenses);
    }
    Ok(out)
}
