//! Limited-memory BFGS with a weak-Wolfe bisection line search.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsParams {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `|f_prev - f| / max(|f_prev|, |f|, 1)` falls below this.
    pub rel_tolerance: f64,
    /// Stop when the gradient infinity norm falls below this.
    pub grad_tolerance: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            rel_tolerance: 1e-5,
            grad_tolerance: 1e-4,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientNorm,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub final_loss: f64,
    pub grad_inf_norm: f64,
    /// Objective after each accepted iteration, starting with the initial point.
    pub loss_history: Vec<f64>,
}

impl LbfgsReport {
    pub fn converged(&self) -> bool {
        matches!(self.stop, StopReason::GradientNorm | StopReason::RelativeChange)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective.
pub fn minimize<F>(mut f: F, mut x: Vec<f64>, params: &LbfgsParams) -> (Vec<f64>, LbfgsReport)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let stop = loop {
        if inf_norm(&g) < params.grad_tolerance {
            break StopReason::GradientNorm;
        }
        if iterations >= params.max_iterations {
            break StopReason::MaxIterations;
        }

        // Two-loop recursion: d = -H g.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let beta = rho_hist[i] * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        let mut dg = dot(&d, &g);
        if dg >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = g.iter().map(|v| -v).collect();
            dg = dot(&d, &g);
        }

        let mut t = if k == 0 { 1.0 / dot(&g, &g).sqrt().max(1e-12) } else { 1.0 };
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut accepted = None;
        for _ in 0..params.max_line_search {
            for i in 0..n {
                x_new[i] = x[i] + t * d[i];
            }
            let f_t = f(&x_new, &mut g_new);
            evaluations += 1;
            if !f_t.is_finite() || f_t > fx + C1 * t * dg {
                hi = t;
            } else if dot(&g_new, &d) < C2 * dg {
                lo = t;
            } else {
                accepted = Some(f_t);
                break;
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        }
        let Some(f_t) = accepted else {
            break StopReason::LineSearchFailed;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if s_hist.len() == params.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        let f_prev = fx;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_t;
        iterations += 1;
        history.push(fx);
        if (f_prev - fx).abs() / f_prev.abs().max(fx.abs()).max(1.0) < params.rel_tolerance {
            break StopReason::RelativeChange;
        }
    };
    let report = LbfgsReport {
        iterations,
        evaluations,
        stop,
        final_loss: fx,
        grad_inf_norm: inf_norm(&g),
        loss_history: history,
    };
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn minimizes_rosenbrock() {
        let params = LbfgsParams { rel_tolerance: 0.0, grad_tolerance: 1e-8, ..Default::default() };
        let (x, report) = minimize(rosenbrock, vec![-1.2, 1.0], &params);
        assert!(report.converged(), "{report:?}");
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn accepted_losses_never_increase() {
        let (_, report) = minimize(rosenbrock, vec![-1.2, 1.0], &LbfgsParams::default());
        assert!(report.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let diag = [1.0, 10.0, 100.0];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                g[i] = diag[i] * (x[i] - 1.0);
                v += 0.5 * diag[i] * (x[i] - 1.0).powi(2);
            }
            v
        };
        let params = LbfgsParams { rel_tolerance: 0.0, grad_tolerance: 1e-10, ..Default::default() };
        let (x, report) = minimize(f, vec![0.0; 3], &params);
        assert!(report.iterations < 30);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let params = LbfgsParams { max_iterations: 2, rel_tolerance: 0.0, grad_tolerance: 0.0, ..Default::default() };
        let (_, report) = minimize(rosenbrock, vec![-1.2, 1.0], &params);
        assert_eq!(report.stop, StopReason::MaxIterations);
        assert!(!report.converged());
        assert!(report.grad_inf_norm > 0.0);
    }
}
