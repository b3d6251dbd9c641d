//! Box-constrained Nelder–Mead simplex search.
//!
//! Trial points are clamped into the box, which keeps the method simple and
//! is adequate for polishing a good starting point.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop when the simplex value spread is below `f_tol * (1 + |f_best|)`.
    pub f_tol: f64,
    /// Stop when every vertex is within `x_tol` (per coordinate, relative to the step).
    pub x_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_evals: 400,
            f_tol: 1e-14,
            x_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimizes `f` over the box `[lo, hi]` from `x0` with initial edge lengths `step`.
pub fn minimize<F>(mut f: F, x0: &[f64], step: &[f64], lo: &[f64], hi: &[f64], cfg: &NelderMeadConfig) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lo, hi);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = start.clone();
        v[i] += step[i];
        if v[i] > hi[i] {
            v[i] = start[i] - step[i];
        }
        clamp_into(&mut v, lo, hi);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    while evals < cfg.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let sorted_s: Vec<Vec<f64>> = order.iter().map(|&k| simplex[k].clone()).collect();
        let sorted_v: Vec<f64> = order.iter().map(|&k| values[k]).collect();
        simplex = sorted_s;
        values = sorted_v;
        let best = values[0];
        let worst = values[n];
        let spread_ok = (worst - best).abs() <= cfg.f_tol * (1.0 + best.abs());
        let size_ok = (1..=n).all(|k| {
            (0..n).all(|i| (simplex[k][i] - simplex[0][i]).abs() <= cfg.x_tol * step[i].abs().max(1e-300))
        });
        if spread_ok || size_ok {
            break;
        }
        for i in 0..n {
            centroid[i] = simplex[..n].iter().map(|v| v[i]).sum::<f64>() / n as f64;
        }
        for i in 0..n {
            trial[i] = centroid[i] + (centroid[i] - simplex[n][i]);
        }
        clamp_into(&mut trial, lo, hi);
        let fr = eval(&trial, &mut evals);
        if fr < values[0] {
            for i in 0..n {
                trial2[i] = centroid[i] + 2.0 * (centroid[i] - simplex[n][i]);
            }
            clamp_into(&mut trial2, lo, hi);
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        let outside = fr < values[n];
        for i in 0..n {
            trial2[i] = if outside {
                centroid[i] + 0.5 * (trial[i] - centroid[i])
            } else {
                centroid[i] + 0.5 * (simplex[n][i] - centroid[i])
            };
        }
        clamp_into(&mut trial2, lo, hi);
        let fc = eval(&trial2, &mut evals);
        if fc < fr.min(values[n]) {
            simplex[n].copy_from_slice(&trial2);
            values[n] = fc;
            continue;
        }
        for k in 1..=n {
            for i in 0..n {
                simplex[k][i] = simplex[0][i] + 0.5 * (simplex[k][i] - simplex[0][i]);
            }
            values[k] = eval(&simplex[k], &mut evals);
        }
    }
    let (k, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    Minimum {
        x: simplex[k].clone(),
        value: values[k],
        evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = NelderMeadConfig {
            max_evals: 5000,
            ..Default::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &[0.5, 0.5], &[-5.0, -5.0], &[5.0, 5.0], &cfg);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn respects_box() {
        let f = |x: &[f64]| -(x[0] + x[1]);
        let m = minimize(f, &[0.2, 0.3], &[0.1, 0.1], &[0.0, 0.0], &[1.0, 2.0], &Default::default());
        assert!((m.x[0] - 1.0).abs() < 1e-8 && (m.x[1] - 2.0).abs() < 1e-8);
    }
}
