//! Small dense symmetric linear algebra.
//!
//! Information matrices of the response models here have at most a dozen
//! rows but are badly scaled (condition numbers around 1e13 are routine),
//! so inversion always goes through a diagonally equilibrated copy.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

/// Dense symmetric matrix, row-major full storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    /// Builds from row-major data, symmetrizing `(a + a^T) / 2`.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), dim * dim, "row data has wrong length");
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = 0.5 * (rows[i * dim + j] + rows[j * dim + i]);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self += w * g g^T`
    pub fn add_outer(&mut self, w: f64, g: &[f64]) {
        let n = self.dim;
        debug_assert_eq!(g.len(), n);
        for i in 0..n {
            let wi = w * g[i];
            for j in i..n {
                let v = wi * g[j];
                self.data[i * n + j] += v;
            }
        }
        for i in 0..n {
            for j in 0..i {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn add_scaled(&mut self, w: f64, other: &SymMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += w * b;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out[i] = dot(row, x);
        }
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            s += x[i] * dot(row, y);
        }
        s
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    dim: usize,
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Eigenvector `k` occupies `vectors[k * dim..(k + 1) * dim]`.
    vectors: Vec<f64>,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Cyclic Jacobi eigenvalue iteration.
pub fn jacobi_eigen(a: &SymMatrix) -> SymEigen {
    let n = a.dim;
    let mut m = a.data.clone();
    // v[i * n + k]: component i of eigenvector k
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[p * n + q] * m[p * n + q];
                }
            }
            if off.sqrt() <= 1e-17 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[p * n + q];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        m[k * n + p] = c * akp - s * akq;
                        m[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[p * n + k];
                        let aqk = m[q * n + k];
                        m[p * n + k] = c * apk - s * aqk;
                        m[q * n + k] = s * apk + c * aqk;
                    }
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&k| m[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (slot, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[slot * n + i] = v[i * n + k];
        }
    }
    SymEigen {
        dim: n,
        values,
        vectors,
    }
}

/// Relative eigenvalue cutoff for the pseudoinverse of the equilibrated matrix.
pub const RANK_TOL: f64 = 1e-10;
/// Relative residual allowed when testing `g ∈ range(M)`.
pub const RANGE_TOL: f64 = 1e-8;

/// Equilibrated pseudoinverse `G = S pinv(S M S) S`, `S = diag(M_ii^{-1/2})`.
///
/// `G` is a symmetric generalized inverse of `M` (`M G M = M`) and reflexive
/// (`G M G = G`); for nonsingular `M` it is the inverse.
#[derive(Debug, Clone)]
pub struct GeneralizedInverse {
    dim: usize,
    scale: Vec<f64>,
    eigen: SymEigen,
    rank: usize,
    ginv: SymMatrix,
}

impl GeneralizedInverse {
    pub fn new(m: &SymMatrix) -> Self {
        Self::with_tolerance(m, RANK_TOL)
    }

    pub fn with_tolerance(m: &SymMatrix, rel_tol: f64) -> Self {
        let n = m.dim;
        let scale: Vec<f64> = (0..n)
            .map(|i| {
                let d = m.get(i, i);
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut scaled = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                scaled.data[i * n + j] = scale[i] * m.get(i, j) * scale[j];
            }
        }
        let eigen = jacobi_eigen(&scaled);
        let top = eigen.values.first().copied().unwrap_or(0.0).max(0.0);
        let cutoff = rel_tol * top;
        let rank = eigen
            .values
            .iter()
            .take_while(|&&l| top > 0.0 && l > cutoff)
            .count();
        let mut ginv = SymMatrix::zeros(n);
        for k in 0..rank {
            let vk = eigen.vector(k);
            let inv = 1.0 / eigen.values[k];
            for i in 0..n {
                let a = inv * vk[i] * scale[i];
                for j in 0..n {
                    ginv.data[i * n + j] += a * vk[j] * scale[j];
                }
            }
        }
        GeneralizedInverse {
            dim: n,
            scale,
            eigen,
            rank,
            ginv,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.ginv
    }

    /// Eigenvalues of the equilibrated matrix, descending.
    pub fn scaled_eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// Condition number of the equilibrated matrix on its retained range.
    pub fn scaled_condition(&self) -> f64 {
        if self.rank == 0 {
            return f64::INFINITY;
        }
        self.eigen.values[0] / self.eigen.values[self.rank - 1]
    }

    /// Relative distance of `g` from `range(M)`, measured in equilibrated
    /// coordinates. Zero for full rank.
    pub fn range_residual(&self, g: &[f64]) -> f64 {
        if self.is_full_rank() {
            return 0.0;
        }
        let n = self.dim;
        let u: Vec<f64> = (0..n).map(|i| self.scale[i] * g[i]).collect();
        let un = norm(&u);
        if un == 0.0 {
            return 0.0;
        }
        let mut resid = u.clone();
        for k in 0..self.rank {
            let vk = self.eigen.vector(k);
            let c = dot(vk, &u);
            for i in 0..n {
                resid[i] -= c * vk[i];
            }
        }
        norm(&resid) / un
    }

    pub fn in_range(&self, g: &[f64]) -> bool {
        self.range_residual(g) <= RANGE_TOL
    }

    /// `G g`
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.ginv.mul_vec(g)
    }

    /// `g^T G g`
    pub fn quad(&self, g: &[f64]) -> f64 {
        self.ginv.quad_form(g)
    }

    /// `log det M`, or `None` when `M` is rank deficient.
    pub fn log_det(&self) -> Option<f64> {
        if !self.is_full_rank() {
            return None;
        }
        let scaled: f64 = self.eigen.values.iter().map(|l| l.ln()).sum();
        let s: f64 = self.scale.iter().map(|s| s.ln()).sum();
        Some(scaled - 2.0 * s)
    }
}

/// Cholesky factor `A = L L^T` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails when a pivot is not strictly positive.
    pub fn new(a: &SymMatrix) -> Option<Self> {
        let n = a.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(Cholesky { dim: n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn random_psd(n: usize, rank: usize, seed: &[f64]) -> SymMatrix {
        let mut m = SymMatrix::zeros(n);
        for r in 0..rank {
            let g: Vec<f64> = (0..n)
                .map(|i| seed[(r * n + i) % seed.len()] * (1.0 + i as f64))
                .collect();
            m.add_outer(1.0 + r as f64, &g);
        }
        m
    }

    fn to_na(m: &SymMatrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
    }

    #[test]
    fn jacobi_matches_reference_eigenvalues() {
        let a = SymMatrix::from_rows(3, &[4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0]);
        let e = jacobi_eigen(&a);
        let mut reference: Vec<f64> = to_na(&a).symmetric_eigenvalues().iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in e.values.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        for k in 0..3 {
            let v = e.vector(k);
            let av = a.mul_vec(v);
            for i in 0..3 {
                assert!((av[i] - e.values[k] * v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_matches_explicit_inverse_on_badly_scaled_matrix() {
        let s = [1.0, 1e-4, 1e3, 2.0];
        let base = SymMatrix::from_rows(
            4,
            &[
                4.0, 1.0, 0.5, 0.2, 1.0, 3.0, 0.1, 0.4, 0.5, 0.1, 2.0, 0.3, 0.2, 0.4, 0.3, 1.5,
            ],
        );
        let mut m = SymMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                m.set(i, j, s[i] * base.get(i, j) * s[j]);
            }
        }
        let g = GeneralizedInverse::new(&m);
        assert!(g.is_full_rank());
        let inv = to_na(&m).try_inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let r = inv[(i, j)];
                assert!((g.matrix().get(i, j) - r).abs() <= 1e-10 * r.abs().max(1e-300));
            }
        }
        let ld = to_na(&m).determinant().ln();
        assert!((g.log_det().unwrap() - ld).abs() < 1e-10);
    }

    #[test]
    fn rank_deficient_generalized_inverse_properties() {
        let m = random_psd(5, 3, &[0.3, -1.2, 0.7, 2.0, -0.4, 1.1, 0.9, -0.8]);
        let g = GeneralizedInverse::new(&m);
        assert_eq!(g.rank(), 3);
        let mn = to_na(&m);
        let gn = to_na(g.matrix());
        let mgm = &mn * &gn * &mn;
        let gmg = &gn * &mn * &gn;
        assert!((mgm - &mn).abs().max() <= 1e-9 * mn.abs().max());
        assert!((gmg - &gn).abs().max() <= 1e-9 * gn.abs().max());
        let inside = m.mul_vec(&[1.0, 0.0, 2.0, 0.0, -1.0]);
        assert!(g.in_range(&inside));
        assert!(g.log_det().is_none());
    }

    #[test]
    fn vector_outside_range_is_detected() {
        let mut m = SymMatrix::zeros(2);
        m.add_outer(1.0, &[1.0, 1.0]);
        let g = GeneralizedInverse::new(&m);
        assert_eq!(g.rank(), 1);
        assert!(g.in_range(&[2.0, 2.0]));
        assert!(!g.in_range(&[1.0, 0.0]));
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let g = GeneralizedInverse::new(&SymMatrix::zeros(3));
        assert_eq!(g.rank(), 0);
        assert_eq!(g.quad(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = SymMatrix::from_rows(3, &[4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0]);
        let ch = Cholesky::new(&a).unwrap();
        let x = ch.solve(&[1.0, 2.0, 3.0]);
        let ax = a.mul_vec(&x);
        for (u, v) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(Cholesky::new(&SymMatrix::zeros(2)).is_none());
    }

    proptest! {
        #[test]
        fn pinv_is_generalized_inverse(
            entries in proptest::collection::vec(-3.0f64..3.0, 24),
            rank in 1usize..=6,
        ) {
            let m = random_psd(6, rank, &entries);
            let g = GeneralizedInverse::new(&m);
            let mn = to_na(&m);
            let gn = to_na(g.matrix());
            let mgm = &mn * &gn * &mn;
            let scale = mn.abs().max().max(1e-300);
            prop_assert!((mgm - &mn).abs().max() <= 1e-7 * scale);
            prop_assert!(g.rank() <= rank);
        }
    }
}
