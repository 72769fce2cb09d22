//! Bounded derivative-free minimization.
//!
//! Nelder-Mead with box projection and multi-start. All objectives in this
//! toolkit are cheap, smooth, and low-dimensional (2-4 variables), so a
//! simplex search with a handful of deterministic restarts is sufficient and
//! keeps every caller free of gradient code.

use crate::error::{Error, Result};

/// Standard Nelder-Mead coefficients: reflection, expansion, contraction, shrink.
const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

/// A bounded minimization problem.
pub struct OptProblem<'a, F: Fn(&[f64]) -> f64> {
    /// Objective to minimize. Must be finite inside the bounds.
    pub objective: F,
    /// Closed `[lo, hi]` interval per dimension.
    pub bounds: &'a [(f64, f64)],
    /// Initial points; each one seeds an independent simplex search.
    pub starts: &'a [Vec<f64>],
    /// Convergence tolerance on the simplex diameter.
    pub tol_x: f64,
    /// Convergence tolerance on the objective spread across the simplex.
    pub tol_f: f64,
    /// Evaluation budget per start.
    pub max_evals: usize,
}

/// Result of a minimization.
#[derive(Debug, Clone)]
pub struct OptResult {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn clamp_to(bounds: &[(f64, f64)], x: &mut [f64]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimize `p.objective` over the box, taking the best outcome across all starts.
///
/// Deterministic: identical problems produce identical results. Starts where
/// the objective is non-finite are skipped; if every start is skipped an
/// `OptimizationFailed` error is returned.
pub fn minimize<F: Fn(&[f64]) -> f64>(p: &OptProblem<'_, F>) -> Result<OptResult> {
    if p.starts.is_empty() {
        return Err(Error::OptimizationFailed("no start points".into()));
    }
    let dim = p.bounds.len();
    for (lo, hi) in p.bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "optimizer bounds [{lo}, {hi}] are not a finite interval"
            )));
        }
    }

    let mut best: Option<OptResult> = None;
    let mut total_evals = 0usize;
    for start in p.starts {
        assert_eq!(start.len(), dim, "start dimension mismatch");
        let mut x0 = start.clone();
        clamp_to(p.bounds, &mut x0);
        let f0 = (p.objective)(&x0);
        total_evals += 1;
        if !f0.is_finite() {
            continue;
        }
        let run = nelder_mead(p, x0, f0);
        total_evals += run.evaluations;
        match &best {
            Some(b) if b.value <= run.value => {}
            _ => best = Some(run),
        }
    }

    match best {
        Some(mut r) => {
            r.evaluations = total_evals;
            Ok(r)
        }
        None => Err(Error::OptimizationFailed(
            "objective was non-finite at every start".into(),
        )),
    }
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    p: &OptProblem<'_, F>,
    x0: Vec<f64>,
    f0: f64,
) -> OptResult {
    let dim = x0.len();
    let eval = |x: &[f64]| -> f64 {
        let v = (p.objective)(x);
        // Treat non-finite interior values as very bad rather than poisoning
        // the simplex ordering.
        if v.is_finite() {
            v
        } else {
            f64::MAX
        }
    };

    // Initial simplex: perturb each coordinate by 10% of its box width,
    // flipping direction when the step would leave the box.
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(dim + 1);
    simplex.push((f0, x0.clone()));
    let mut evals = 0usize;
    for i in 0..dim {
        let (lo, hi) = p.bounds[i];
        let width = hi - lo;
        let step = if width > 0.0 { 0.1 * width } else { 0.0 };
        let mut v = x0.clone();
        if v[i] + step <= hi {
            v[i] += step;
        } else {
            v[i] -= step;
        }
        clamp_to(p.bounds, &mut v);
        let fv = eval(&v);
        evals += 1;
        simplex.push((fv, v));
    }
    sort_simplex(&mut simplex);

    // Scratch buffers reused across iterations; the candidate-evaluation
    // loop stays allocation-free.
    let mut centroid = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut second = vec![0.0; dim];

    let mut converged = false;
    while evals < p.max_evals {
        let spread = simplex[dim].0 - simplex[0].0;
        let diameter = simplex_diameter(&simplex);
        if spread.abs() <= p.tol_f * (1.0 + simplex[0].0.abs()) && diameter <= p.tol_x {
            converged = true;
            break;
        }

        for c in centroid.iter_mut() {
            *c = 0.0;
        }
        for entry in simplex.iter().take(dim) {
            for (c, x) in centroid.iter_mut().zip(&entry.1) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let f_best = simplex[0].0;
        let f_second_worst = simplex[dim - 1].0;
        let f_worst = simplex[dim].0;

        // trial = centroid + t (centroid - worst), projected onto the box.
        let make = |t: f64, out: &mut [f64], simplex: &[(f64, Vec<f64>)]| {
            let worst = &simplex[dim].1;
            for i in 0..dim {
                out[i] = centroid[i] + t * (centroid[i] - worst[i]);
            }
            clamp_to(p.bounds, out);
        };

        make(ALPHA, &mut trial, &simplex);
        let f_reflected = eval(&trial);
        evals += 1;

        if f_reflected < f_best {
            make(GAMMA, &mut second, &simplex);
            let f_expanded = eval(&second);
            evals += 1;
            if f_expanded < f_reflected {
                simplex[dim].0 = f_expanded;
                simplex[dim].1.copy_from_slice(&second);
            } else {
                simplex[dim].0 = f_reflected;
                simplex[dim].1.copy_from_slice(&trial);
            }
        } else if f_reflected < f_second_worst {
            simplex[dim].0 = f_reflected;
            simplex[dim].1.copy_from_slice(&trial);
        } else {
            let accepted = if f_reflected < f_worst {
                // Outside contraction.
                make(RHO * ALPHA, &mut second, &simplex);
                let fc = eval(&second);
                evals += 1;
                if fc <= f_reflected {
                    simplex[dim].0 = fc;
                    simplex[dim].1.copy_from_slice(&second);
                    true
                } else {
                    false
                }
            } else {
                // Inside contraction.
                make(-RHO, &mut second, &simplex);
                let fc = eval(&second);
                evals += 1;
                if fc < f_worst {
                    simplex[dim].0 = fc;
                    simplex[dim].1.copy_from_slice(&second);
                    true
                } else {
                    false
                }
            };
            if !accepted {
                // Shrink toward the best vertex.
                second.copy_from_slice(&simplex[0].1);
                for entry in simplex.iter_mut().skip(1) {
                    for (v, b) in entry.1.iter_mut().zip(&second) {
                        *v = b + SIGMA * (*v - b);
                    }
                    clamp_to(p.bounds, &mut entry.1);
                    entry.0 = eval(&entry.1);
                    evals += 1;
                }
            }
        }
        sort_simplex(&mut simplex);
    }

    OptResult {
        argmin: simplex[0].1.clone(),
        value: simplex[0].0,
        evaluations: evals,
        converged,
    }
}

fn sort_simplex(simplex: &mut [(f64, Vec<f64>)]) {
    simplex.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
}

fn simplex_diameter(simplex: &[(f64, Vec<f64>)]) -> f64 {
    let best = &simplex[0].1;
    simplex
        .iter()
        .skip(1)
        .map(|(_, x)| {
            x.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
