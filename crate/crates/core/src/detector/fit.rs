//! Calibration of a channel model against measured anchors.
//!
//! Levenberg–Marquardt on `(ln η_c, i0, ln s, ln R0, ln k)` with analytic
//! derivatives. DE residuals are relative (`model/obs − 1`), DCR residuals are
//! log-ratios, which are relative to first order and keep the exponential
//! dark-count law well conditioned far from the solution.

use serde::Serialize;

use super::{logistic, DetectorChannelModel, ObservationPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Param {
    Coupling,
    Midpoint,
    Steepness,
    DarkPrefactor,
    DarkExponent,
}

impl Param {
    pub const ALL: [Param; 5] = [
        Param::Coupling,
        Param::Midpoint,
        Param::Steepness,
        Param::DarkPrefactor,
        Param::DarkExponent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Coupling => "coupling_efficiency",
            Param::Midpoint => "registering_midpoint",
            Param::Steepness => "registering_steepness",
            Param::DarkPrefactor => "dark_prefactor",
            Param::DarkExponent => "dark_exponent",
        }
    }
}

/// Which parameters the fit may move. Fixed parameters keep the value of the
/// template model passed to [`fit_channel`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    free: [bool; 5],
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self::all_free()
    }
}

impl FitOptions {
    pub fn all_free() -> Self {
        Self {
            free: [true; 5],
            max_iterations: 500,
        }
    }

    /// Only the listed parameters are free.
    pub fn only(params: &[Param]) -> Self {
        let mut free = [false; 5];
        for p in params {
            free[*p as usize] = true;
        }
        Self {
            free,
            max_iterations: 500,
        }
    }

    pub fn fix(mut self, p: Param) -> Self {
        self.free[p as usize] = false;
        self
    }

    pub fn is_free(&self, p: Param) -> bool {
        self.free[p as usize]
    }

    pub fn free_params(&self) -> Vec<Param> {
        Param::ALL
            .into_iter()
            .filter(|p| self.is_free(*p))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: DetectorChannelModel,
    pub free: Vec<Param>,
    /// one entry per scalar constraint, in observation order
    pub residuals: Vec<f64>,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub iterations: usize,
}

type Theta = [f64; 5];

fn theta_of(m: &DetectorChannelModel) -> Theta {
    [
        m.coupling_efficiency.max(1e-300).ln(),
        m.registering_midpoint,
        m.registering_steepness.ln(),
        m.dark_prefactor.max(1e-300).ln(),
        m.dark_exponent.ln(),
    ]
}

fn model_of(template: &DetectorChannelModel, t: &Theta) -> DetectorChannelModel {
    DetectorChannelModel {
        coupling_efficiency: t[0].exp(),
        registering_midpoint: t[1],
        registering_steepness: t[2].exp(),
        dark_prefactor: t[3].exp(),
        dark_exponent: t[4].exp(),
        ..template.clone()
    }
}

/// One scalar constraint with precomputed optical absorptance.
#[derive(Debug, Clone, Copy)]
enum Constraint {
    DeAtBias {
        bias: f64,
        de: f64,
        absorptance: f64,
    },
    DcrAtBias {
        bias: f64,
        dcr: f64,
    },
    DeAtDcr {
        de: f64,
        ln_dcr: f64,
        absorptance: f64,
    },
}

impl Constraint {
    fn uses_de(&self) -> bool {
        !matches!(self, Constraint::DcrAtBias { .. })
    }

    fn uses_dcr(&self) -> bool {
        !matches!(self, Constraint::DeAtBias { .. })
    }

    /// Residual and its gradient with respect to the full θ.
    fn eval(&self, t: &Theta) -> (f64, Theta) {
        let (eta, i0, s, ln_r0, k) = (t[0].exp(), t[1], t[2].exp(), t[3], t[4].exp());
        // DE at bias `i` with dDE/di, plus the gradient w.r.t. (ln η, i0, ln s)
        let de_terms = |i: f64, a: f64| {
            let x = (i - i0) / s;
            let p = logistic(x);
            let de = eta * a * p;
            let dp = eta * a * p * (1.0 - p);
            (de, dp / s, [de, -dp / s, -dp * x])
        };
        match *self {
            Constraint::DeAtBias {
                bias,
                de,
                absorptance,
            } => {
                let (m, _, g) = de_terms(bias, absorptance);
                (m / de - 1.0, [g[0] / de, g[1] / de, g[2] / de, 0.0, 0.0])
            }
            Constraint::DcrAtBias { bias, dcr } => {
                (ln_r0 + k * bias - dcr.ln(), [0.0, 0.0, 0.0, 1.0, k * bias])
            }
            Constraint::DeAtDcr {
                de,
                ln_dcr,
                absorptance,
            } => {
                let i_star = (ln_dcr - ln_r0) / k;
                let (m, dde_di, g) = de_terms(i_star, absorptance);
                (
                    m / de - 1.0,
                    [
                        g[0] / de,
                        g[1] / de,
                        g[2] / de,
                        dde_di * (-1.0 / k) / de,
                        dde_di * (-i_star) / de,
                    ],
                )
            }
        }
    }
}

fn build_constraints(
    template: &DetectorChannelModel,
    obs: &[ObservationPoint],
) -> Result<Vec<Constraint>> {
    let mut out = Vec::new();
    for o in obs {
        o.validate()?;
        match o.bias {
            Some(bias) => {
                if let Some(de) = o.de {
                    let absorptance = template.absorptance_at(o.wavelength)?;
                    out.push(Constraint::DeAtBias {
                        bias,
                        de,
                        absorptance,
                    });
                }
                if let Some(dcr) = o.dcr {
                    out.push(Constraint::DcrAtBias { bias, dcr });
                }
            }
            None => {
                let absorptance = template.absorptance_at(o.wavelength)?;
                out.push(Constraint::DeAtDcr {
                    de: o.de.expect("validated"),
                    ln_dcr: o.dcr.expect("validated").ln(),
                    absorptance,
                });
            }
        }
    }
    Ok(out)
}

fn check_identifiable(constraints: &[Constraint], opts: &FitOptions) -> Result<()> {
    let free = opts.free_params();
    if free.is_empty() {
        return Err(Error::Fit("no free parameters".into()));
    }
    if constraints.len() < free.len() {
        let names: Vec<_> = free.iter().map(|p| p.name()).collect();
        return Err(Error::Fit(format!(
            "under-determined: {} constraint(s) for {} free parameter(s) [{}]; fix {} of them or add observations",
            constraints.len(),
            free.len(),
            names.join(", "),
            free.len() - constraints.len()
        )));
    }
    let de_free = [Param::Coupling, Param::Midpoint, Param::Steepness]
        .iter()
        .any(|p| opts.is_free(*p));
    if de_free && !constraints.iter().any(Constraint::uses_de) {
        return Err(Error::Fit(
            "registering/coupling parameters are free but no DE was observed".into(),
        ));
    }
    let dark_free = opts.is_free(Param::DarkPrefactor) || opts.is_free(Param::DarkExponent);
    if dark_free && !constraints.iter().any(Constraint::uses_dcr) {
        return Err(Error::Fit(
            "dark-count parameters are free but no DCR was observed".into(),
        ));
    }
    Ok(())
}

/// Starting point: template values, with free parameters replaced by
/// data-driven guesses where the data allow one.
fn initial_theta(
    template: &DetectorChannelModel,
    obs: &[ObservationPoint],
    constraints: &[Constraint],
    opts: &FitOptions,
) -> Theta {
    let mut t = theta_of(template);
    if opts.is_free(Param::Midpoint) {
        t[1] = 0.9;
    }
    if opts.is_free(Param::Steepness) {
        t[2] = 0.03f64.ln();
    }
    if opts.is_free(Param::Coupling) {
        let eta = constraints
            .iter()
            .filter_map(|c| match *c {
                Constraint::DeAtBias {
                    de, absorptance, ..
                }
                | Constraint::DeAtDcr {
                    de, absorptance, ..
                } => Some(de / absorptance.max(1e-12)),
                _ => None,
            })
            .fold(0.0f64, f64::max);
        t[0] = (eta * 1.2).clamp(1e-6, 1.0).ln();
    }
    let mut dark: Vec<(f64, f64)> = obs.iter().filter_map(|o| Some((o.bias?, o.dcr?))).collect();
    dark.sort_by(|a, b| a.0.total_cmp(&b.0));
    if opts.is_free(Param::DarkExponent) && dark.len() >= 2 {
        let (a, b) = (dark[0], dark[dark.len() - 1]);
        if b.0 > a.0 && b.1 > a.1 {
            t[4] = ((b.1.ln() - a.1.ln()) / (b.0 - a.0)).ln();
        }
    }
    if opts.is_free(Param::DarkPrefactor) && !dark.is_empty() {
        let (i, d) = dark[dark.len() - 1];
        t[3] = d.ln() - t[4].exp() * i;
    }
    t
}

fn cost_of(constraints: &[Constraint], t: &Theta) -> (f64, Vec<f64>) {
    let r: Vec<f64> = constraints.iter().map(|c| c.eval(t).0).collect();
    (r.iter().map(|v| v * v).sum(), r)
}

/// Solves `a x = b` for a small dense system by Gaussian elimination with
/// partial pivoting. Returns `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(row);
            for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Fits the free parameters of `template` to `observations`.
///
/// Fails with [`Error::Fit`] when the problem is under-determined and with
/// [`Error::FitNotConverged`] (carrying the best parameters seen) when the
/// iteration cap is reached.
pub fn fit_channel(
    template: &DetectorChannelModel,
    observations: &[ObservationPoint],
    opts: &FitOptions,
) -> Result<FitReport> {
    template.validate()?;
    let constraints = build_constraints(template, observations)?;
    check_identifiable(&constraints, opts)?;
    let free: Vec<usize> = opts.free_params().iter().map(|p| *p as usize).collect();
    let n = free.len();

    let mut t = initial_theta(template, observations, &constraints, opts);
    let (mut cost, _) = cost_of(&constraints, &t);
    let initial_norm = cost.sqrt();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost < 1e-30 {
            converged = true;
            break;
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for c in &constraints {
            let (r, g) = c.eval(&t);
            for (a, &fa) in free.iter().enumerate() {
                jtr[a] += g[fa] * r;
                for (b, &fb) in free.iter().enumerate() {
                    jtj[a][b] += g[fa] * g[fb];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for (d, row) in a.iter_mut().enumerate() {
                row[d] += lambda * jtj[d][d].max(1e-12);
            }
            let Some(step) = solve_dense(a, jtr.iter().map(|v| -v).collect()) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = t;
            for (a, &f) in free.iter().enumerate() {
                trial[f] += step[a];
            }
            let (c_trial, _) = cost_of(&constraints, &trial);
            if c_trial.is_finite() && c_trial < cost {
                let small_step = step
                    .iter()
                    .zip(&free)
                    .all(|(s, &f)| s.abs() <= 1e-13 * (1.0 + trial[f].abs()));
                let small_gain = cost - c_trial <= 1e-15 * cost;
                t = trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent direction at working precision: stationary point
            converged = true;
        }
        if converged {
            break;
        }
    }

    let model = model_of(template, &t);
    let (_, residuals) = cost_of(&constraints, &t);
    if !converged {
        return Err(Error::FitNotConverged {
            iterations,
            residual_norm: cost.sqrt(),
            best: named_params(&model),
        });
    }
    model.validate().map_err(|e| {
        Error::Fit(format!(
            "fitted parameters are unphysical ({e}); best {:?}",
            named_params(&model)
        ))
    })?;
    Ok(FitReport {
        model,
        free: opts.free_params(),
        residual_norm: cost.sqrt(),
        residuals,
        initial_residual_norm: initial_norm,
        iterations,
    })
}

fn named_params(m: &DetectorChannelModel) -> Vec<(String, f64)> {
    vec![
        (Param::Coupling.name().into(), m.coupling_efficiency),
        (Param::Midpoint.name().into(), m.registering_midpoint),
        (Param::Steepness.name().into(), m.registering_steepness),
        (Param::DarkPrefactor.name().into(), m.dark_prefactor),
        (Param::DarkExponent.name().into(), m.dark_exponent),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{dark_rate, system_de, DEFAULT_DEAD_TIME};

    fn truth() -> DetectorChannelModel {
        DetectorChannelModel {
            channel_id: "c".into(),
            coupling_efficiency: 0.9,
            absorptance: vec![(1.31e-6, 0.7), (1.55e-6, 0.65)],
            registering_midpoint: 0.95,
            registering_steepness: 0.02,
            dark_prefactor: 3e-100,
            dark_exponent: 240.0,
            dead_time: DEFAULT_DEAD_TIME,
            critical_current: 17.6e-6,
        }
    }

    fn noiseless(m: &DetectorChannelModel) -> Vec<ObservationPoint> {
        [0.90, 0.93, 0.95, 0.97, 0.99]
            .iter()
            .map(|&i| {
                ObservationPoint::at_bias(
                    i,
                    Some(system_de(m, 1.55e-6, i).unwrap()),
                    Some(dark_rate(m, i).unwrap()),
                    1.55e-6,
                )
            })
            .collect()
    }

    fn template() -> DetectorChannelModel {
        DetectorChannelModel {
            coupling_efficiency: 0.5,
            registering_midpoint: 0.8,
            registering_steepness: 0.05,
            dark_prefactor: 1e-50,
            dark_exponent: 100.0,
            ..truth()
        }
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let m = truth();
        let r = fit_channel(&template(), &noiseless(&m), &FitOptions::all_free()).unwrap();
        let f = &r.model;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(
            rel(f.coupling_efficiency, m.coupling_efficiency) < 1e-6,
            "{f:?}"
        );
        assert!(rel(f.registering_midpoint, m.registering_midpoint) < 1e-6);
        assert!(rel(f.registering_steepness, m.registering_steepness) < 1e-6);
        assert!(rel(f.dark_exponent, m.dark_exponent) < 1e-6);
        assert!(rel(f.dark_prefactor.ln(), m.dark_prefactor.ln()) < 1e-6);
        assert!(r.residual_norm < 1e-8);
    }

    #[test]
    fn fixed_parameters_are_untouched() {
        let m = truth();
        let mut tpl = template();
        tpl.coupling_efficiency = m.coupling_efficiency;
        let r = fit_channel(
            &tpl,
            &noiseless(&m),
            &FitOptions::all_free().fix(Param::Coupling),
        )
        .unwrap();
        assert_eq!(r.model.coupling_efficiency, m.coupling_efficiency);
        assert!((r.model.registering_midpoint - m.registering_midpoint).abs() < 1e-8);
    }

    #[test]
    fn under_determined_is_reported() {
        let m = truth();
        let obs = &noiseless(&m)[..1]; // two constraints, five unknowns
        match fit_channel(&template(), obs, &FitOptions::all_free()) {
            Err(Error::Fit(msg)) => assert!(msg.contains("under-determined"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let de_only: Vec<_> = noiseless(&m)
            .iter()
            .map(|o| ObservationPoint { dcr: None, ..*o })
            .collect();
        assert!(matches!(
            fit_channel(&template(), &de_only, &FitOptions::all_free()),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn de_at_dcr_anchor_constrains_midpoint() {
        let m = truth();
        // dark law known; one DE@DCR anchor and one DE at bias pin i0 and s
        let i100 = (100f64.ln() - m.dark_prefactor.ln()) / m.dark_exponent;
        let obs = vec![
            ObservationPoint::de_at_dcr(system_de(&m, 1.55e-6, i100).unwrap(), 100.0, 1.55e-6),
            ObservationPoint::at_bias(
                0.99,
                Some(system_de(&m, 1.55e-6, 0.99).unwrap()),
                None,
                1.55e-6,
            ),
        ];
        let mut tpl = template();
        tpl.coupling_efficiency = m.coupling_efficiency;
        tpl.dark_prefactor = m.dark_prefactor;
        tpl.dark_exponent = m.dark_exponent;
        let r = fit_channel(
            &tpl,
            &obs,
            &FitOptions::only(&[Param::Midpoint, Param::Steepness]),
        )
        .unwrap();
        assert!((r.model.registering_midpoint - m.registering_midpoint).abs() < 1e-7);
        assert!((r.model.registering_steepness - m.registering_steepness).abs() < 1e-7);
    }

    #[test]
    fn iteration_cap_reports_best_parameters() {
        let m = truth();
        let opts = FitOptions {
            max_iterations: 1,
            ..FitOptions::all_free()
        };
        match fit_channel(&template(), &noiseless(&m), &opts) {
            Err(Error::FitNotConverged {
                best, iterations, ..
            }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.len(), 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dense_solver() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_none());
    }
}
