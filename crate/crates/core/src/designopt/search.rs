//! Derivative-free minimisers.

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
/// Returns `(x, f(x))`.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a.min(b), a.max(b));
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// stop when the simplex's value spread falls below this, relative
    pub f_tolerance: f64,
    /// and its vertices are this close, relative to their magnitude
    pub x_tolerance: f64,
    /// initial simplex edge, in the same units as `x0`
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 20_000,
            f_tolerance: 1e-10,
            x_tolerance: 1e-10,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Unconstrained Nelder–Mead with adaptive coefficients for dimension `n`
/// (Gao & Han). Non-finite objective values are treated as `+∞`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let mut eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let v = eval(x0);
        return Minimum {
            x: Vec::new(),
            value: v,
            evaluations: 1,
            converged: true,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) =
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += if x[i] != 0.0 {
            opts.initial_step * x[i].abs().max(1.0)
        } else {
            opts.initial_step
        };
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let f_spread = (worst - best).abs();
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
            })
            .fold(0.0, f64::max);
        if f_spread <= opts.f_tolerance * (1.0 + best.abs()) && x_spread <= opts.x_tolerance {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_evaluations {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(beta);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        // outside contraction if the reflection helped at all, else inside
        let xc = along(if fr < simplex[n].1 { gamma } else { -gamma });
        let fc = eval(&xc);
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink towards the best vertex
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (v, b) in vertex.0.iter_mut().zip(&x_best) {
                *v = b + delta * (*v - b);
            }
            vertex.1 = eval(&vertex.0);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evaluations: evals.get(),
        converged,
    }
}

/// Maps an unconstrained coordinate onto `[lo, hi]` via `lo + (hi−lo)(1 + sin u)/2`.
pub fn to_box(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * 0.5 * (1.0 + u.sin())
}

/// Inverse of [`to_box`] on the principal branch.
pub fn from_box(x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_section_max(|x| -(x - 1.234).powi(2) + 3.0, 0.0, 5.0, 1e-10);
        assert!((x - 1.234).abs() < 1e-7);
        assert!((v - 3.0).abs() < 1e-14);
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(rosen, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4,
            "{m:?}"
        );
    }

    #[test]
    fn nelder_mead_quadratic_6d() {
        let target = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let f = |x: &[f64]| {
            x.iter()
                .zip(&target)
                .enumerate()
                .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                .sum()
        };
        let m = nelder_mead(f, &[0.0; 6], &NelderMeadOptions::default());
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_dimensional_is_a_single_evaluation() {
        let m = nelder_mead(|_| 4.0, &[], &NelderMeadOptions::default());
        assert_eq!((m.value, m.evaluations), (4.0, 1));
    }

    #[test]
    fn box_round_trip() {
        for x in [0.1, 0.5, 2.9] {
            let u = from_box(x, 0.1, 3.0);
            assert!((to_box(u, 0.1, 3.0) - x).abs() < 1e-12);
        }
    }
}
