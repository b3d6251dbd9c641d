//! Approximate and exact designs, information matrices and predictive variance.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{GeneralizedInverse, SymMatrix};
use crate::model::{DesignRegion, DoseCombination, SurfaceModel};
use crate::normal;

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Support points closer than this are considered identical.
pub const DISTINCT_TOL: f64 = 1e-9;

/// Finite probability measure over dose combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    points: Vec<DoseCombination>,
    weights: Vec<f64>,
}

impl Design {
    pub fn new(points: Vec<DoseCombination>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::design("a design needs at least one support point"));
        }
        if points.len() != weights.len() {
            return Err(Error::design(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        for (i, w) in weights.iter().enumerate() {
            if !(*w > 0.0 && w.is_finite()) {
                return Err(Error::design(format!("weight {i} must be positive, got {w}")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::design(format!("weights sum to {total}, not 1")));
        }
        for (i, x) in points.iter().enumerate() {
            if !x.is_valid() {
                return Err(Error::design(format!(
                    "point {i} ({}, {}) has a negative or non-finite dose",
                    x.c, x.d
                )));
            }
            for (j, y) in points[..i].iter().enumerate() {
                if x.distance(y) <= DISTINCT_TOL {
                    return Err(Error::design(format!("points {j} and {i} coincide")));
                }
            }
        }
        Ok(Design { points, weights })
    }

    /// Rescales positive weights to sum to one.
    pub fn normalized(points: Vec<DoseCombination>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::design("weights must have a positive finite sum"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Design::new(points, weights)
    }

    /// Merges points within `tol` (weighted centroid, summed weight), then normalizes.
    pub fn merged(points: Vec<DoseCombination>, weights: Vec<f64>, tol: f64) -> Result<Self> {
        let (p, w) = merge_points(&points, &weights, tol.max(DISTINCT_TOL));
        Design::normalized(p, w)
    }

    pub fn uniform(points: Vec<DoseCombination>) -> Result<Self> {
        let n = points.len();
        Design::new(points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DoseCombination] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (DoseCombination, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn check_region(&self, region: &DesignRegion) -> Result<()> {
        match self.points.iter().position(|x| !region.contains(x)) {
            None => Ok(()),
            Some(i) => Err(Error::design(format!(
                "point {i} ({}, {}) lies outside [0, {}] x [0, {}]",
                self.points[i].c,
                self.points[i].d,
                region.c_max(),
                region.d_max()
            ))),
        }
    }

    pub fn transposed(&self) -> Self {
        Design {
            points: self.points.iter().map(|x| x.transposed()).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Greedy single-linkage merge in input order.
pub(crate) fn merge_points(
    points: &[DoseCombination],
    weights: &[f64],
    tol: f64,
) -> (Vec<DoseCombination>, Vec<f64>) {
    let mut out_p: Vec<DoseCombination> = Vec::new();
    let mut out_w: Vec<f64> = Vec::new();
    for (x, &w) in points.iter().zip(weights) {
        match out_p.iter().position(|y| y.distance(x) <= tol) {
            Some(k) => {
                let total = out_w[k] + w;
                let y = out_p[k];
                out_p[k] = DoseCombination::new(
                    (y.c * out_w[k] + x.c * w) / total,
                    (y.d * out_w[k] + x.d * w) / total,
                );
                out_w[k] = total;
            }
            None => {
                out_p.push(*x);
                out_w.push(w);
            }
        }
    }
    (out_p, out_w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactDesign {
    points: Vec<DoseCombination>,
    counts: Vec<usize>,
    total: usize,
}

impl ExactDesign {
    pub fn new(points: Vec<DoseCombination>, counts: Vec<usize>) -> Result<Self> {
        if points.len() != counts.len() || points.is_empty() {
            return Err(Error::design("exact design needs matching non-empty points and counts"));
        }
        if counts.contains(&0) {
            return Err(Error::design("exact design counts must be at least 1"));
        }
        if let Some(x) = points.iter().find(|x| !x.is_valid()) {
            return Err(Error::design(format!("invalid dose ({}, {})", x.c, x.d)));
        }
        let total = counts.iter().sum();
        Ok(ExactDesign {
            points,
            counts,
            total,
        })
    }

    pub fn points(&self) -> &[DoseCombination] {
        &self.points
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn to_design(&self) -> Result<Design> {
        let n = self.total as f64;
        Design::new(
            self.points.clone(),
            self.counts.iter().map(|&r| r as f64 / n).collect(),
        )
    }
}

/// Efficient rounding of an approximate design to `n_total` observations.
///
/// Starts from `ceil((N - n/2) w_i)`, then increments the point with the
/// smallest `r_i / w_i` or decrements the one with the largest
/// `(r_i - 1) / w_i` until the counts sum to `N`. Ties go to the lowest index.
pub fn round_exact(design: &Design, n_total: usize) -> Result<ExactDesign> {
    let n = design.len();
    if n_total < n {
        return Err(Error::TooFewObservations {
            total: n_total,
            support: n,
        });
    }
    let w = design.weights();
    let base = n_total as f64 - 0.5 * n as f64;
    let mut r: Vec<usize> = w
        .iter()
        .map(|&wi| ((base * wi).ceil() as usize).max(1))
        .collect();
    loop {
        let sum: usize = r.iter().sum();
        if sum == n_total {
            break;
        }
        if sum < n_total {
            let mut best = 0;
            for i in 1..n {
                if (r[i] as f64) / w[i] < (r[best] as f64) / w[best] {
                    best = i;
                }
            }
            r[best] += 1;
        } else {
            let mut best = None;
            for i in 0..n {
                if r[i] <= 1 {
                    continue;
                }
                let v = (r[i] - 1) as f64 / w[i];
                match best {
                    Some((_, bv)) if v <= bv => {}
                    _ => best = Some((i, v)),
                }
            }
            let (i, _) = best.expect("counts exceed total with every count at 1");
            r[i] -= 1;
        }
    }
    ExactDesign::new(design.points().to_vec(), r)
}

/// Fisher information `M(ξ, θ) = Σ ω_i g(x_i) g(x_i)^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    matrix: SymMatrix,
}

impl InfoMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> InfoInverse {
        InfoInverse {
            ginv: GeneralizedInverse::new(&self.matrix),
        }
    }
}

pub fn information_matrix(design: &Design, model: &SurfaceModel) -> Result<InfoMatrix> {
    let m = model.param_count();
    let mut matrix = SymMatrix::zeros(m);
    let mut g = vec![0.0; m];
    for (x, w) in design.iter() {
        if !x.is_valid() {
            return Err(Error::InvalidDose(x.c.min(x.d)));
        }
        model.gradient_into(x, &mut g);
        matrix.add_outer(w, &g);
    }
    Ok(InfoMatrix { matrix })
}

/// Generalized inverse of an information matrix with range checking.
#[derive(Debug, Clone)]
pub struct InfoInverse {
    ginv: GeneralizedInverse,
}

impl InfoInverse {
    pub fn generalized(&self) -> &GeneralizedInverse {
        &self.ginv
    }

    pub fn is_nonsingular(&self) -> bool {
        self.ginv.is_full_rank()
    }

    /// `g^T M^- g`, or a range error at `x`.
    pub fn variance(&self, g: &[f64], x: DoseCombination) -> Result<f64> {
        let residual = self.ginv.range_residual(g);
        if residual > crate::linalg::RANGE_TOL {
            return Err(Error::Range {
                c: x.c,
                d: x.d,
                residual,
            });
        }
        Ok(self.ginv.quad(g).max(0.0))
    }
}

/// Asymptotic variance `g(x0)^T M^- g(x0)` of the fitted response at `x0`.
pub fn predictive_variance(x0: DoseCombination, design: &Design, model: &SurfaceModel) -> Result<f64> {
    let g0 = model.gradient(x0)?;
    information_matrix(design, model)?.inverse().variance(&g0, x0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceConfig {
    pub alpha: f64,
    pub sigma_hat: f64,
    pub n_total: usize,
}

impl ConfidenceConfig {
    pub fn new(alpha: f64, sigma_hat: f64, n_total: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
            return Err(Error::param(format!("sigma_hat must be positive, got {sigma_hat}")));
        }
        if n_total == 0 {
            return Err(Error::param("n_total must be positive"));
        }
        Ok(ConfidenceConfig {
            alpha,
            sigma_hat,
            n_total,
        })
    }

    pub fn z(&self) -> f64 {
        normal::quantile(1.0 - 0.5 * self.alpha)
    }
}

/// Half-width `z_{1-α/2} σ̂ / √N · φ^{1/2}` of the pointwise confidence interval.
pub fn confidence_halfwidth(
    x0: DoseCombination,
    design: &Design,
    model: &SurfaceModel,
    conf: &ConfidenceConfig,
) -> Result<f64> {
    let phi = predictive_variance(x0, design, model)?;
    Ok(conf.z() * conf.sigma_hat / (conf.n_total as f64).sqrt() * phi.sqrt())
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::model::MonoModel;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn p(c: f64, d: f64) -> DoseCombination {
        DoseCombination::new(c, d)
    }

    fn case_study() -> SurfaceModel {
        SurfaceModel::new(
            19.05,
            MonoModel::sigmoid_emax(111.10, 5.83, 2.86).unwrap(),
            MonoModel::sigmoid_emax(410.82, 20.0, 0.78).unwrap(),
            -0.0075,
        )
        .unwrap()
    }

    fn med_10_50() -> Design {
        Design::new(
            vec![
                p(0.0, 0.0),
                p(0.0, 0.3),
                p(0.0, 7.0),
                p(0.0, 2.61),
                p(3.14, 0.0),
                p(3.59, 1.99),
                p(3.67, 0.48),
                p(6.18, 0.38),
                p(6.86, 0.0),
                p(20.0, 0.0),
                p(20.0, 7.0),
            ],
            vec![0.049, 0.178, 0.012, 0.175, 0.107, 0.125, 0.107, 0.109, 0.115, 0.013, 0.010],
        )
        .unwrap()
    }

    fn fd_gradient(model: &SurfaceModel, x: DoseCombination) -> Vec<f64> {
        let th = model.params();
        (0..th.len())
            .map(|i| {
                let h = 1e-6 * th[i].abs().max(1.0);
                let mut up = th.clone();
                let mut dn = th.clone();
                up[i] += h;
                dn[i] -= h;
                (model.with_params(&up).unwrap().eval(x).unwrap()
                    - model.with_params(&dn).unwrap().eval(x).unwrap())
                    / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn design_invariants() {
        assert!(Design::new(vec![p(0.0, 0.0)], vec![0.9]).is_err());
        assert!(Design::new(vec![p(0.0, 0.0), p(0.0, 0.0)], vec![0.5, 0.5]).is_err());
        assert!(Design::new(vec![p(-1.0, 0.0)], vec![1.0]).is_err());
        assert!(Design::new(vec![p(0.0, 0.0)], vec![1.0]).is_ok());
        let region = DesignRegion::new(1.0, 1.0).unwrap();
        assert!(Design::new(vec![p(2.0, 0.0)], vec![1.0]).unwrap().check_region(&region).is_err());
    }

    #[test]
    fn merged_sums_coincident_weights() {
        let d = Design::merged(vec![p(1.0, 1.0), p(1.0, 1.0)], vec![0.3, 0.2], 1e-6).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn one_point_information_is_rank_one() {
        let m = case_study();
        let x = p(5.0, 2.0);
        let d = Design::new(vec![x], vec![1.0]).unwrap();
        let info = information_matrix(&d, &m).unwrap();
        let g = m.gradient(x).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(info.get(i, j), g[i] * g[j]);
            }
        }
        let inv = info.inverse();
        assert_eq!(inv.generalized().rank(), 1);
        assert!((predictive_variance(x, &d, &m).unwrap() - 1.0).abs() < 1e-9);
        assert!(predictive_variance(p(1.0, 6.0), &d, &m).unwrap_err().is_range());
    }

    #[test]
    fn two_point_information_is_average() {
        let m = case_study();
        let (a, b) = (p(5.0, 2.0), p(10.0, 1.0));
        let two = information_matrix(&Design::uniform(vec![a, b]).unwrap(), &m).unwrap();
        let ia = information_matrix(&Design::new(vec![a], vec![1.0]).unwrap(), &m).unwrap();
        let ib = information_matrix(&Design::new(vec![b], vec![1.0]).unwrap(), &m).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let avg = 0.5 * (ia.get(i, j) + ib.get(i, j));
                assert!((two.get(i, j) - avg).abs() <= 1e-12 * avg.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn tabulated_information_matches_finite_difference_sum() {
        let m = case_study();
        let d = med_10_50();
        let info = information_matrix(&d, &m).unwrap();
        let mut oracle = [[0.0f64; 8]; 8];
        for (x, w) in d.iter() {
            let g = fd_gradient(&m, x);
            for i in 0..8 {
                for j in 0..8 {
                    oracle[i][j] += w * g[i] * g[j];
                }
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                let r = oracle[i][j];
                let err = (info.get(i, j) - r).abs() / r.abs().max(1e-12);
                assert!(err <= 1e-5, "({i},{j}) {} vs {r}", info.get(i, j));
            }
        }
        assert!(info.matrix().max_asymmetry() <= 1e-12);
        let e = crate::linalg::jacobi_eigen(info.matrix());
        assert!(*e.values.last().unwrap() >= -1e-10 * e.values[0]);
    }

    #[test]
    fn nonsingular_variance_matches_linear_solve() {
        let m = case_study();
        let d = med_10_50();
        let info = information_matrix(&d, &m).unwrap();
        let mn = DMatrix::from_row_slice(8, 8, info.matrix().as_slice());
        for x0 in [p(3.0, 1.0), p(12.0, 5.0), p(0.5, 6.5)] {
            let g = m.gradient(x0).unwrap();
            let gv = DVector::from_vec(g.clone());
            let v = mn.clone().lu().solve(&gv).unwrap();
            let oracle = gv.dot(&v);
            let phi = predictive_variance(x0, &d, &m).unwrap();
            assert!((phi - oracle).abs() <= 1e-10 * oracle.abs() * 1e3, "{phi} vs {oracle}");
        }
    }

    #[test]
    fn confidence_halfwidth_composes() {
        let m = case_study();
        let d = med_10_50();
        let conf = ConfidenceConfig::new(0.05, 24.0, 27).unwrap();
        assert!((conf.z() - 1.959964).abs() < 5e-7);
        let x = p(3.59, 1.99);
        let phi = predictive_variance(x, &d, &m).unwrap();
        let hw = confidence_halfwidth(x, &d, &m, &conf).unwrap();
        assert!((hw - conf.z() * 24.0 / 27f64.sqrt() * phi.sqrt()).abs() < 1e-12 * hw);
        let origin = p(0.0, 0.0);
        let point = Design::new(vec![p(3.0, 2.0)], vec![1.0]).unwrap();
        let zero = Design::new(vec![origin], vec![1.0]).unwrap();
        assert!(confidence_halfwidth(origin, &zero, &m, &conf).unwrap() > 0.0);
        assert!(confidence_halfwidth(origin, &point, &m, &conf).is_err());
    }

    #[test]
    fn rounding_examples() {
        let d = Design::new(vec![p(0.0, 0.0), p(1.0, 0.0)], vec![0.7, 0.3]).unwrap();
        assert_eq!(round_exact(&d, 10).unwrap().counts(), &[7, 3]);
        let d = Design::uniform(vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]).unwrap();
        assert_eq!(round_exact(&d, 6).unwrap().counts(), &[2, 2, 2]);
        let d = Design::uniform(vec![p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        let mut r = round_exact(&d, 3).unwrap().counts().to_vec();
        r.sort();
        assert_eq!(r, vec![1, 2]);
        assert!(round_exact(&d, 1).is_err());
    }

    /// Enumerates every allocation and checks the rounding attains the best
    /// efficiency bound `min_i r_i / (N w_i)`.
    #[test]
    fn rounding_maximizes_efficiency_bound() {
        let d = Design::uniform(vec![p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        let bound = |r: &[usize]| {
            r.iter()
                .zip(d.weights())
                .map(|(&ri, &wi)| ri as f64 / (3.0 * wi))
                .fold(f64::INFINITY, f64::min)
        };
        let got = round_exact(&d, 3).unwrap();
        let best = (1..3)
            .map(|a| bound(&[a, 3 - a]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(bound(got.counts()), best);
    }

    proptest! {
        #[test]
        fn rounding_sums_to_total(
            raw in proptest::collection::vec(0.01f64..1.0, 1..12),
            extra in 0usize..60,
        ) {
            let n = raw.len();
            let pts = (0..n).map(|i| p(i as f64, 0.0)).collect();
            let d = Design::normalized(pts, raw).unwrap();
            let e = round_exact(&d, n + extra).unwrap();
            prop_assert_eq!(e.total(), n + extra);
            prop_assert!(e.counts().iter().all(|&r| r >= 1));
        }

        #[test]
        fn rounding_reproduces_exact_multiples(
            counts in proptest::collection::vec(1usize..10, 1..10),
        ) {
            let total: usize = counts.iter().sum();
            let pts = (0..counts.len()).map(|i| p(i as f64, 0.0)).collect();
            let w = counts.iter().map(|&c| c as f64).collect();
            let d = Design::normalized(pts, w).unwrap();
            let e = round_exact(&d, total).unwrap();
            prop_assert_eq!(e.counts(), &counts[..]);
        }

        #[test]
        fn variance_independent_of_generalized_inverse(
            r in proptest::collection::vec(-1.0f64..1.0, 64),
            pick in 0usize..6,
        ) {
            let m = case_study();
            let pts = [p(0.0, 0.0), p(5.0, 0.0), p(10.0, 0.0), p(0.0, 3.0), p(0.0, 7.0), p(20.0, 7.0)];
            let d = Design::uniform(pts.to_vec()).unwrap();
            let info = information_matrix(&d, &m).unwrap();
            let inv = info.inverse();
            prop_assert!(!inv.is_nonsingular());
            let mn = DMatrix::from_row_slice(8, 8, info.matrix().as_slice());
            let gn = DMatrix::from_row_slice(8, 8, inv.generalized().matrix().as_slice());
            // R on the same scale as M^-, so the check is not swamped by rounding
            let rn = DMatrix::from_fn(8, 8, |i, j| {
                r[i * 8 + j] / (info.get(i, i) * info.get(j, j)).sqrt()
            });
            let other = &gn + (DMatrix::identity(8, 8) - &gn * &mn) * rn;
            let x = pts[pick];
            let g = DVector::from_vec(m.gradient(x).unwrap());
            let phi = inv.variance(g.as_slice(), x).unwrap();
            let alt = g.dot(&(&other * &g));
            prop_assert!((phi - alt).abs() <= 1e-8 * phi.abs().max(1.0));
        }
    }
}
