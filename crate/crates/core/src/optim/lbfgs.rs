//! Limited-memory BFGS with a backtracking (Armijo) line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    /// Number of curvature pairs kept.
    pub memory: usize,
    /// Stop once the Euclidean norm of the gradient drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            tolerance: 1e-6,
            max_iterations: 500,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start point, then the running value after each
    /// accepted step (start value plus accumulated changes).
    pub trace: Vec<f64>,
}

/// A smooth objective for [`minimize`].
pub trait Objective {
    /// Returns `f(x)` and writes the gradient into `grad`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// `f(to) - f(from)`. Objectives that can evaluate the change without
    /// cancellation should override this: near the optimum the decrease is
    /// far below the rounding error of `f` itself.
    fn change(&self, from: &[f64], f_from: f64, to: &[f64], f_to: f64) -> f64 {
        let _ = (from, to);
        f_to - f_from
    }
}

impl<F> Objective for F
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g` for the implicit inverse Hessian `H`.
fn direction(grad: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in history.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes a smooth function. Every accepted step has a non-positive
/// objective change as reported by [`Objective::change`]; the trace
/// accumulates those changes from the starting value.
pub fn minimize<O: Objective + ?Sized>(objective: &O, x0: Vec<f64>, opts: &LbfgsOptions) -> Minimum {
    let dim = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; dim];
    let mut f_x = objective.value_and_gradient(&x, &mut grad);
    let mut value = f_x;
    let mut gnorm = norm(&grad);
    let mut trace = vec![value];
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);

    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut iterations = 0;

    while gnorm >= opts.tolerance && iterations < opts.max_iterations && f_x.is_finite() {
        let mut dir = direction(&grad, &history);
        let mut slope = dot(&grad, &dir);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        // Without curvature information, scale the first step to unit length.
        let mut step = if history.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            for ((xn, xi), di) in x_new.iter_mut().zip(&x).zip(&dir) {
                *xn = xi + step * di;
            }
            let f_new = objective.value_and_gradient(&x_new, &mut g_new);
            if f_new.is_finite() {
                let delta = objective.change(&x, f_x, &x_new, f_new);
                let sufficient = delta <= opts.armijo * step * slope;
                // Exact stationarity along the line: no measurable change but
                // a smaller gradient.
                let flat = delta <= 0.0 && norm(&g_new) < gnorm;
                if sufficient || flat {
                    accepted = Some((f_new, delta));
                    break;
                }
            }
            step *= 0.5;
        }

        let Some((f_new, delta)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut grad, &mut g_new);
        f_x = f_new;
        value += delta;
        gnorm = norm(&grad);
        trace.push(value);
        iterations += 1;
    }

    Minimum {
        x,
        value: f_x,
        gradient_norm: gnorm,
        iterations,
        converged: gnorm < opts.tolerance,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_quadratic() {
        // f = sum_i (i+1) (x_i - i)^2
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for (i, xi) in x.iter().enumerate() {
                let a = (i + 1) as f64;
                let r = xi - i as f64;
                v += a * r * r;
                g[i] = 2.0 * a * r;
            }
            v
        };
        let m = minimize(&f, vec![10.0; 6], &LbfgsOptions::default());
        assert!(m.converged);
        for (i, xi) in m.x.iter().enumerate() {
            assert!((xi - i as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn rosenbrock_trace_is_monotone() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize(&f, vec![-1.2, 1.0], &LbfgsOptions::default());
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn already_optimal_start_stops_immediately() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            x[0] * x[0]
        };
        let m = minimize(&f, vec![0.0], &LbfgsOptions::default());
        assert_eq!(m.iterations, 0);
        assert!(m.converged);
    }
}
