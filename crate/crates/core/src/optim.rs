//! Limited-memory BFGS with central-difference gradients.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Stop once the accepted step moves every parameter by less than this.
    pub x_tol: f64,
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 8, max_iters: 200, fd_step: 1e-6, x_tol: 1e-8, grad_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0`. The returned point is never worse than `x0`.
pub fn lbfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], cfg: &LbfgsConfig) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1;
    let mut g = numerical_gradient(&f, &x, cfg.fd_step);
    evals += 2 * n;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        iters += 1;
        if g.iter().map(|v| v.abs()).fold(0.0, f64::max) < cfg.grad_tol {
            converged = true;
            break;
        }
        // Two-loop recursion for d = −H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = hist.back().map(|(s, y, _)| dot(s, y) / dot(y, y)).unwrap_or(1.0);
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        // Backtracking line search with the Armijo condition.
        let mut t = if hist.is_empty() { 1.0 / g.iter().map(|v| v.abs()).fold(1.0, f64::max) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let ft = f(&trial);
            evals += 1;
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            converged = true;
            break;
        };
        let gn = numerical_gradient(&f, &xn, cfg.fd_step);
        evals += 2 * n;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let step = s.iter().map(|v| v.abs()).fold(0.0, f64::max);
        x = xn;
        fx = fxn;
        g = gn;
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > cfg.memory {
                hist.pop_front();
            }
        }
        if step < cfg.x_tol {
            converged = true;
            break;
        }
    }
    Minimum { x, value: fx, iterations: iters, evaluations: evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = lbfgs(f, &[-1.2, 1.0], &LbfgsConfig { max_iters: 500, ..Default::default() });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn gradient_of_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] - x[1];
        let g = numerical_gradient(&f, &[2.0, 5.0], 1e-6);
        assert!((g[0] - 12.0).abs() < 1e-6 && (g[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn never_returns_worse_point() {
        let f = |x: &[f64]| x[0].sin() * 3.0 + x[1].cos();
        let x0 = [0.3, -2.0];
        let m = lbfgs(f, &x0, &LbfgsConfig::default());
        assert!(m.value <= f(&x0));
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let m = lbfgs(|x: &[f64]| x[0] * x[0], &[0.0], &LbfgsConfig::default());
        assert!(m.converged);
        assert_eq!(m.x, vec![0.0]);
    }
}
