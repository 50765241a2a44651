//! Small nonlinear least-squares toolbox: Levenberg–Marquardt with a
//! finite-difference Jacobian, and a Nelder–Mead simplex as the
//! derivative-free fallback. Parameters are expected to be of order one;
//! callers rescale before fitting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative change of the cost below which the fit is converged.
    pub ftol: f64,
    /// Relative step size below which the fit is converged.
    pub xtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            ftol: 1e-14,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn clamp_into(x: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (v, (lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

fn outcome(params: Vec<f64>, r: &[f64], iterations: usize, converged: bool) -> FitOutcome {
    let cost = cost_of(r);
    FitOutcome {
        params,
        cost,
        residual_rms: (cost / r.len().max(1) as f64).sqrt(),
        iterations,
        converged,
    }
}

fn jacobian<F>(f: &F, x: &[f64], bounds: Option<&[(f64, f64)]>, m: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 6e-6 * x[j].abs().max(1.0);
        let (mut lo, mut hi) = (x[j] - h, x[j] + h);
        if let Some(b) = bounds {
            lo = lo.max(b[j].0);
            hi = hi.min(b[j].1);
        }
        if hi <= lo {
            continue;
        }
        xp[j] = hi;
        let rp = f(&xp);
        xp[j] = lo;
        let rm = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (hi - lo);
        }
    }
    jac
}

/// Minimizes Σ rᵢ(x)² by Levenberg–Marquardt with Marquardt scaling.
/// Trial points are projected into `bounds`.
pub fn levenberg_marquardt<F>(
    f: F,
    x0: &[f64],
    bounds: Option<&[(f64, f64)]>,
    opts: &FitOptions,
) -> FitOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    clamp_into(&mut x, bounds);
    let mut r = f(&x);
    let m = r.len();
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return outcome(x, &r, 0, false);
    }
    let mut lambda = 1e-3;
    let n = x.len();

    for iter in 1..=opts.max_iter {
        let jac = jacobian(&f, &x, bounds, m);
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        if g.amax() <= 1e-15 * cost.max(1e-300).sqrt() {
            return outcome(x, &r, iter, true);
        }

        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp_into(&mut xt, bounds);
            let rt = f(&xt);
            let ct = cost_of(&rt);
            if ct.is_finite() && ct < cost {
                let dx: f64 = xt.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let rel_drop = (cost - ct) / cost;
                x = xt;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_drop < opts.ftol || dx < opts.xtol * (xn + opts.xtol) || cost == 0.0 {
                    return outcome(x, &r, iter, true);
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // no descent direction left at this resolution: a (local) minimum
            return outcome(x, &r, iter, true);
        }
    }
    outcome(x, &r, opts.max_iter, false)
}

/// Minimizes `f` with the Nelder–Mead simplex method, starting from a simplex
/// spanned by `x0` and `x0 + scale_i e_i`.
pub fn nelder_mead<G>(
    f: G,
    x0: &[f64],
    scale: &[f64],
    bounds: Option<&[(f64, f64)]>,
    opts: &FitOptions,
) -> (Vec<f64>, f64, usize)
where
    G: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &mut Vec<f64>| {
        clamp_into(x, bounds);
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let v0 = eval(&mut start);
    simplex.push((start, v0));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if scale[i] != 0.0 { scale[i] } else { 0.05 };
        let v = eval(&mut p);
        simplex.push((p, v));
    }

    let mut iters = 0;
    while iters < opts.max_iter * 10 {
        iters += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= opts.ftol * (best.abs() + worst.abs()) + 1e-300 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();
        let towards = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j]))
                .collect()
        };
        let mut xr = towards(-1.0);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = towards(-2.0);
            let fe = eval(&mut xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let t = if fr < simplex[n].1 { -0.5 } else { 0.5 };
            let mut xc = towards(t);
            let fc = eval(&mut xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let mut xs: Vec<f64> = (0..n).map(|j| best_x[j] + 0.5 * (p.0[j] - best_x[j])).collect();
                    let v = eval(&mut xs);
                    *p = (xs, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (x, v, iters)
}

/// Levenberg–Marquardt first; if it stalls, a Nelder–Mead pass followed by
/// a second Levenberg–Marquardt polish.
pub fn least_squares<F>(
    f: F,
    x0: &[f64],
    bounds: Option<&[(f64, f64)]>,
    opts: &FitOptions,
) -> Result<FitOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let first = levenberg_marquardt(&f, x0, bounds, opts);
    let best = if first.converged && first.cost.is_finite() {
        first
    } else {
        let scale: Vec<f64> = first.params.iter().map(|v| 0.1 * v.abs().max(0.1)).collect();
        let (xn, _, nm_iters) = nelder_mead(|x| cost_of(&f(x)), &first.params, &scale, bounds, opts);
        let mut polished = levenberg_marquardt(&f, &xn, bounds, opts);
        polished.iterations += first.iterations + nm_iters;
        if polished.cost <= first.cost || !first.cost.is_finite() {
            polished
        } else {
            first
        }
    };
    if !best.cost.is_finite() {
        return Err(Error::fit_failed("non-finite residuals", best.residual_rms, best.iterations));
    }
    Ok(best)
}
