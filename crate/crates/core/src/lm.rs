//! Levenberg–Marquardt for small nonlinear least-squares problems, with
//! Marquardt's diagonal scaling and Nielsen's damping update.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{Cholesky, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Convergence when every scaled gradient component is below this.
    pub gradient_tol: f64,
    /// Convergence when the step is below this relative to the parameters.
    pub step_tol: f64,
    /// Convergence when both the actual and the predicted relative reduction
    /// of the residual sum of squares fall below this (MINPACK's `ftol`).
    /// Catches fits drifting along a ridge towards an MLE at infinity.
    pub reduction_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 500,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            reduction_tol: 1.49e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// A least-squares problem: `eval(x, r, j)` fills residuals `r` and the
/// row-major Jacobian `j` (`r.len() × x.len()`) and returns `false` when `x`
/// is outside the parameter domain.
#[allow(clippy::len_without_is_empty)]
pub trait Residuals {
    fn len(&self) -> usize;
    fn eval(&mut self, x: &[f64], r: &mut [f64], j: &mut [f64]) -> bool;
}

struct State {
    r: Vec<f64>,
    j: Vec<f64>,
    rss: f64,
}

fn evaluate<P: Residuals>(problem: &mut P, x: &[f64], st: &mut State) -> bool {
    if !problem.eval(x, &mut st.r, &mut st.j) {
        return false;
    }
    st.rss = st.r.iter().map(|v| v * v).sum();
    st.rss.is_finite() && st.j.iter().all(|v| v.is_finite())
}

/// `JᵀJ` and `Jᵀr`.
fn normal_equations(st: &State, n: usize) -> (SymMatrix, Vec<f64>) {
    let mut jtj = SymMatrix::zeros(n);
    let mut g = vec![0.0; n];
    for (row, ri) in st.j.chunks_exact(n).zip(&st.r) {
        jtj.add_outer(1.0, row);
        for k in 0..n {
            g[k] += row[k] * ri;
        }
    }
    (jtj, g)
}

pub fn minimize<P: Residuals>(problem: &mut P, x0: &[f64], cfg: &LmConfig) -> LmOutcome {
    let n = x0.len();
    let m = problem.len();
    let mut x = x0.to_vec();
    let mut cur = State {
        r: vec![0.0; m],
        j: vec![0.0; m * n],
        rss: f64::INFINITY,
    };
    let mut trial = State {
        r: vec![0.0; m],
        j: vec![0.0; m * n],
        rss: f64::INFINITY,
    };
    let failed = |x: Vec<f64>, rss: f64, it: usize| LmOutcome {
        x,
        rss,
        converged: false,
        iterations: it,
    };
    if !evaluate(problem, &x, &mut cur) {
        return failed(x, f64::INFINITY, 0);
    }
    let (mut jtj, mut g) = normal_equations(&cur, n);
    let max_diag = (0..n).map(|k| jtj.get(k, k)).fold(0.0, f64::max);
    let mut lambda = 1e-3 * max_diag.max(1e-300);
    let mut nu = 2.0;
    for it in 0..cfg.max_iterations {
        if cur.rss == 0.0 || gradient_small(&jtj, &g, cur.rss, cfg.gradient_tol) {
            return LmOutcome {
                x,
                rss: cur.rss,
                converged: true,
                iterations: it,
            };
        }
        let floor = 1e-12 * (0..n).map(|k| jtj.get(k, k)).fold(0.0, f64::max).max(1e-300);
        let mut a = jtj.clone();
        for k in 0..n {
            a.set(k, k, jtj.get(k, k) + lambda * jtj.get(k, k).max(floor));
        }
        let Some(chol) = Cholesky::new(&a) else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = chol.solve(&neg);
        let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step_norm: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm <= cfg.step_tol * (x_norm + cfg.step_tol) {
            return LmOutcome {
                x,
                rss: cur.rss,
                converged: true,
                iterations: it,
            };
        }
        let candidate: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let ok = evaluate(problem, &candidate, &mut trial);
        // predicted reduction of the linearized model (times 2)
        let predicted: f64 = (0..n)
            .map(|k| step[k] * (lambda * jtj.get(k, k).max(floor) * step[k] - g[k]))
            .sum();
        let rho = if ok && predicted > 0.0 {
            (cur.rss - trial.rss) / predicted
        } else {
            -1.0
        };
        let stalled = ok
            && (cur.rss - trial.rss).abs() <= cfg.reduction_tol * cur.rss
            && predicted <= cfg.reduction_tol * cur.rss
            && rho <= 2.0;
        if rho > 0.0 {
            x = candidate;
            core::mem::swap(&mut cur, &mut trial);
            (jtj, g) = normal_equations(&cur, n);
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            lambda *= nu;
            nu *= 2.0;
        }
        if stalled {
            return LmOutcome {
                x,
                rss: cur.rss,
                converged: true,
                iterations: it + 1,
            };
        }
        if !lambda.is_finite() {
            return failed(x, cur.rss, it + 1);
        }
    }
    failed(x, cur.rss, cfg.max_iterations)
}

/// Cosine between each Jacobian column and the residual vector, which makes
/// the test independent of parameter and response scales.
fn gradient_small(jtj: &SymMatrix, g: &[f64], rss: f64, tol: f64) -> bool {
    let rn = rss.sqrt();
    g.iter().enumerate().all(|(k, gk)| {
        let cn = jtj.get(k, k).sqrt();
        cn * rn == 0.0 || gk.abs() <= tol * cn * rn
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y = a·exp(b·t)` on fixed abscissae.
    struct ExpFit {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl Residuals for ExpFit {
        fn len(&self) -> usize {
            self.t.len()
        }
        fn eval(&mut self, x: &[f64], r: &mut [f64], j: &mut [f64]) -> bool {
            for (i, (&t, &y)) in self.t.iter().zip(&self.y).enumerate() {
                let e = (x[1] * t).exp();
                r[i] = x[0] * e - y;
                j[2 * i] = e;
                j[2 * i + 1] = x[0] * t * e;
            }
            true
        }
    }

    #[test]
    fn recovers_exact_exponential() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y = t.iter().map(|t| 2.5 * (-0.7 * t).exp()).collect();
        let mut p = ExpFit { t, y };
        let out = minimize(&mut p, &[1.0, 0.0], &LmConfig::default());
        assert!(out.converged);
        assert!((out.x[0] - 2.5).abs() < 1e-8 && (out.x[1] + 0.7).abs() < 1e-8, "{:?}", out.x);
    }

    #[test]
    fn rosenbrock_residuals() {
        struct Rosen;
        impl Residuals for Rosen {
            fn len(&self) -> usize {
                2
            }
            fn eval(&mut self, x: &[f64], r: &mut [f64], j: &mut [f64]) -> bool {
                r[0] = 10.0 * (x[1] - x[0] * x[0]);
                r[1] = 1.0 - x[0];
                j.copy_from_slice(&[-20.0 * x[0], 10.0, -1.0, 0.0]);
                true
            }
        }
        let out = minimize(&mut Rosen, &[-1.2, 1.0], &LmConfig::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn noisy_fit_matches_closed_form_least_squares() {
        // linear model y = a + b t fitted by LM equals the normal-equation solution
        struct Line {
            t: Vec<f64>,
            y: Vec<f64>,
        }
        impl Residuals for Line {
            fn len(&self) -> usize {
                self.t.len()
            }
            fn eval(&mut self, x: &[f64], r: &mut [f64], j: &mut [f64]) -> bool {
                for i in 0..self.t.len() {
                    r[i] = x[0] + x[1] * self.t[i] - self.y[i];
                    j[2 * i] = 1.0;
                    j[2 * i + 1] = self.t[i];
                }
                true
            }
        }
        let t = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let y = vec![1.1, 2.9, 5.2, 7.1, 8.8];
        let n = t.len() as f64;
        let (st, sy) = (t.iter().sum::<f64>(), y.iter().sum::<f64>());
        let stt: f64 = t.iter().map(|v| v * v).sum();
        let sty: f64 = t.iter().zip(&y).map(|(a, b)| a * b).sum();
        let b = (n * sty - st * sy) / (n * stt - st * st);
        let a = (sy - b * st) / n;
        let out = minimize(&mut Line { t, y }, &[0.0, 0.0], &LmConfig::default());
        assert!(out.converged);
        // the 1e-8 cosine stopping rule leaves errors of order 1e-8 times the residual scale
        assert!((out.x[0] - a).abs() < 1e-7 && (out.x[1] - b).abs() < 1e-7, "{:?} {a} {b}", out.x);
    }

    #[test]
    fn domain_violation_at_start_fails() {
        struct Never;
        impl Residuals for Never {
            fn len(&self) -> usize {
                1
            }
            fn eval(&mut self, _: &[f64], _: &mut [f64], _: &mut [f64]) -> bool {
                false
            }
        }
        assert!(!minimize(&mut Never, &[1.0], &LmConfig::default()).converged);
    }
}
