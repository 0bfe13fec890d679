//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The crate's losses are smooth (away from measure-zero Schmidt
//! degeneracies), moderately sized (up to a few thousand parameters), and
//! expensive enough per evaluation that a quasi-Newton method with history 10
//! is the right tool. The implementation follows the standard two-loop
//! recursion with the bracket/zoom strong-Wolfe search of Nocedal & Wright
//! (algorithms 3.5/3.6); every accepted step satisfies the Armijo condition,
//! so the sequence of accepted objective values is non-increasing, a property
//! downstream monotonicity guarantees lean on.
//!
//! The optimiser never takes a step it cannot certify: if the line search
//! fails to find an acceptable point, it records the event, and the best
//! iterate seen so far is returned. When the initial gradient is already
//! below tolerance the routine exits without stepping at all.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    /// Maximum accepted iterations.
    pub max_iter: usize,
    /// Terminate once the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Armijo (sufficient decrease) constant.
    pub c1: f64,
    /// Curvature constant for the strong Wolfe condition.
    pub c2: f64,
    /// Maximum objective evaluations per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iter: 200,
            grad_tol: 1e-8,
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    /// Best point seen.
    pub x: Vec<f64>,
    /// Objective at `x`.
    pub fx: f64,
    /// Gradient norm at the final iterate.
    pub grad_norm: f64,
    /// Accepted iterations.
    pub iterations: usize,
    /// Total objective/gradient evaluations.
    pub n_evals: usize,
    /// Whether the gradient tolerance was reached.
    pub converged: bool,
    /// Whether any line search gave up.
    pub line_search_failed: bool,
    /// Objective value after each accepted step, starting with the initial
    /// value; non-increasing by construction.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimise `f` (returning value and gradient) from `x0`.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut gx) = f(&x);
    let mut n_evals = 1usize;
    let mut trace = vec![fx];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, rho)
    let mut line_search_failed = false;
    let mut iterations = 0usize;

    let mut best_x = x.clone();
    let mut best_fx = fx;

    while iterations < opts.max_iter {
        let gnorm = norm(&gx);
        if gnorm <= opts.grad_tol {
            return LbfgsOutcome {
                x: best_x,
                fx: best_fx,
                grad_norm: gnorm,
                iterations,
                n_evals,
                converged: true,
                line_search_failed,
                trace,
            };
        }

        // two-loop recursion for the search direction
        let mut q = gx.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y).max(1e-300);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut dg = dot(&dir, &gx);
        if dg >= 0.0 {
            // not a descent direction (stale curvature); reset to steepest
            dir = gx.iter().map(|v| -v).collect();
            dg = -gnorm * gnorm;
            history.clear();
        }

        match strong_wolfe(&mut f, &x, fx, &gx, &dir, dg, opts, &mut n_evals) {
            Some((alpha, fnew, gnew)) => {
                let mut s = vec![0.0; n];
                let mut xnew = x.clone();
                for i in 0..n {
                    s[i] = alpha * dir[i];
                    xnew[i] += s[i];
                }
                let y: Vec<f64> = gnew.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * norm(&s) * norm(&y) {
                    let rho = 1.0 / sy;
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, rho));
                }
                x = xnew;
                fx = fnew;
                gx = gnew;
                iterations += 1;
                trace.push(fx);
                if fx < best_fx {
                    best_fx = fx;
                    best_x = x.clone();
                }
            }
            None => {
                line_search_failed = true;
                break;
            }
        }
    }

    let grad_norm = norm(&gx);
    LbfgsOutcome {
        x: best_x,
        fx: best_fx,
        grad_norm,
        iterations,
        n_evals,
        converged: grad_norm <= opts.grad_tol,
        line_search_failed,
        trace,
    }
}

/// Bracket/zoom strong-Wolfe search along `dir` from `x`. Returns
/// `(alpha, f(x + alpha dir), grad)` or `None` if no acceptable step was
/// found within the evaluation budget.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    _g0: &[f64],
    dir: &[f64],
    dg0: f64,
    opts: &LbfgsOptions,
    n_evals: &mut usize,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let eval = |f: &mut F, alpha: f64, n_evals: &mut usize| -> (f64, Vec<f64>, f64) {
        let xt: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        let (ft, gt) = f(&xt);
        *n_evals += 1;
        let dgt = dot(&gt, dir);
        (ft, gt, dgt)
    };

    let mut alpha_prev = 0.0f64;
    let mut f_prev = f0;
    let mut dg_prev = dg0;
    let mut alpha = 1.0f64;
    let mut budget = opts.max_line_search;

    for iter in 0.. {
        if budget == 0 {
            return None;
        }
        budget -= 1;
        let (ft, gt, dgt) = eval(f, alpha, n_evals);
        if ft > f0 + opts.c1 * alpha * dg0 || (iter > 0 && ft >= f_prev) {
            return zoom(
                f, x, f0, dg0, dir, alpha_prev, f_prev, dg_prev, alpha, ft, dgt, opts, budget,
                n_evals,
            );
        }
        if dgt.abs() <= -opts.c2 * dg0 {
            return Some((alpha, ft, gt));
        }
        if dgt >= 0.0 {
            return zoom(
                f, x, f0, dg0, dir, alpha, ft, dgt, alpha_prev, f_prev, dg_prev, opts, budget,
                n_evals,
            );
        }
        alpha_prev = alpha;
        f_prev = ft;
        dg_prev = dgt;
        alpha *= 2.0;
        if alpha > 1e10 {
            return None;
        }
    }
    unreachable!()
}

/// Zoom phase: shrink `[lo, hi]` (function values and slopes carried along)
/// with safeguarded quadratic interpolation until a strong-Wolfe point
/// appears or the budget runs out.
#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    dg0: f64,
    dir: &[f64],
    mut alpha_lo: f64,
    mut f_lo: f64,
    mut dg_lo: f64,
    mut alpha_hi: f64,
    mut f_hi: f64,
    mut _dg_hi: f64,
    opts: &LbfgsOptions,
    mut budget: usize,
    n_evals: &mut usize,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    while budget > 0 {
        budget -= 1;
        // quadratic interpolation using (alpha_lo, f_lo, dg_lo) and
        // (alpha_hi, f_hi); fall back to bisection if it lands too close to
        // an endpoint
        let d = alpha_hi - alpha_lo;
        let mut alpha = alpha_lo
            - 0.5 * dg_lo * d * d / ((f_hi - f_lo - dg_lo * d).max(1e-300) * 2.0 / 2.0).max(1e-300);
        let lo = alpha_lo.min(alpha_hi);
        let hi = alpha_lo.max(alpha_hi);
        let margin = 0.1 * (hi - lo);
        if !(alpha.is_finite()) || alpha < lo + margin || alpha > hi - margin {
            alpha = 0.5 * (alpha_lo + alpha_hi);
        }
        let xt: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        let (ft, gt) = f(&xt);
        *n_evals += 1;
        let dgt = dot(&gt, dir);
        if ft > f0 + opts.c1 * alpha * dg0 || ft >= f_lo {
            alpha_hi = alpha;
            f_hi = ft;
            _dg_hi = dgt;
        } else {
            if dgt.abs() <= -opts.c2 * dg0 {
                return Some((alpha, ft, gt));
            }
            if dgt * (alpha_hi - alpha_lo) >= 0.0 {
                alpha_hi = alpha_lo;
                f_hi = f_lo;
                _dg_hi = dg_lo;
            }
            alpha_lo = alpha;
            f_lo = ft;
            dg_lo = dgt;
        }
        if (alpha_hi - alpha_lo).abs() < 1e-16 {
            break;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_to_exact_minimum() {
        // f = sum (x_i - i)^2
        let f = |x: &[f64]| {
            let mut fx = 0.0;
            let mut g = vec![0.0; x.len()];
            for (i, xi) in x.iter().enumerate() {
                let d = xi - i as f64;
                fx += d * d;
                g[i] = 2.0 * d;
            }
            (fx, g)
        };
        let out = lbfgs(f, vec![10.0; 5], &LbfgsOptions::default());
        assert!(out.converged, "grad norm {:.3e}", out.grad_norm);
        for (i, xi) in out.x.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-7, "x[{i}] = {xi}");
        }
    }

    #[test]
    fn rosenbrock_2d_converges() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let fx = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (fx, g)
        };
        let opts = LbfgsOptions { max_iter: 500, ..Default::default() };
        let out = lbfgs(f, vec![-1.2, 1.0], &opts);
        assert!(out.fx < 1e-12, "f = {}", out.fx);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trace_is_monotone_nonincreasing() {
        let f = |x: &[f64]| {
            let fx: f64 = x.iter().map(|v| v.cosh().ln()).sum();
            let g: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
            (fx, g)
        };
        let out = lbfgs(f, vec![3.0, -2.0, 0.5, 4.0], &LbfgsOptions::default());
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "trace increased: {} -> {}", w[0], w[1]);
        }
        assert!(out.converged);
    }

    #[test]
    fn immediate_exit_at_a_stationary_point() {
        let f = |x: &[f64]| {
            let fx: f64 = x.iter().map(|v| v * v).sum();
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            (fx, g)
        };
        let out = lbfgs(f, vec![0.0; 8], &LbfgsOptions::default());
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.n_evals, 1);
    }

    #[test]
    fn best_point_is_returned_even_with_tight_budget() {
        let f = |x: &[f64]| {
            let fx: f64 = x.iter().map(|v| (v - 2.0) * (v - 2.0)).sum();
            let g: Vec<f64> = x.iter().map(|v| 2.0 * (v - 2.0)).collect();
            (fx, g)
        };
        let opts = LbfgsOptions { max_iter: 2, ..Default::default() };
        let out = lbfgs(f, vec![40.0; 3], &opts);
        let f0: f64 = 3.0 * (40.0 - 2.0) * (40.0 - 2.0);
        assert!(out.fx < 1e-10 * f0, "f = {}", out.fx);
        assert!(out.iterations <= 2);
    }
}
