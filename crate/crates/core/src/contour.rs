//! Response range over the region, effective-dose contours and the discrete
//! contour measure.
//!
//! A contour at level `p` is the set where the normalized effect
//! `(η(x) - min) / R_max` equals `p / 100`. Contours are traced with marching
//! squares on a rectangular grid; each edge crossing is then refined on the
//! true surface so that vertices lie on the level to near machine precision.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{DesignRegion, DoseCombination, MonoModel, SurfaceModel};
use crate::nelder_mead::{self, NelderMeadConfig};

/// Surfaces whose range over the region is at most this are rejected.
pub const DEGENERATE_RANGE: f64 = 1e-12;
/// Default atoms per level of the contour measure.
pub const DEFAULT_ATOMS_PER_LEVEL: usize = 100;

/// Rectangular evaluation grid, boundary included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    nc: usize,
    nd: usize,
}

impl GridSpec {
    pub const CONTOUR: GridSpec = GridSpec { nc: 201, nd: 201 };
    pub const VERIFICATION: GridSpec = GridSpec { nc: 101, nd: 101 };

    pub fn new(nc: usize, nd: usize) -> Result<Self> {
        if nc < 2 || nd < 2 {
            return Err(Error::param(format!("grid needs at least 2x2 nodes, got {nc}x{nd}")));
        }
        Ok(GridSpec { nc, nd })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn nc(&self) -> usize {
        self.nc
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    pub fn len(&self) -> usize {
        self.nc * self.nd
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node `(i, j)`; `i` runs along c.
    #[inline]
    pub fn node(&self, region: &DesignRegion, i: usize, j: usize) -> DoseCombination {
        let c = if i + 1 == self.nc {
            region.c_max()
        } else {
            region.c_max() * i as f64 / (self.nc - 1) as f64
        };
        let d = if j + 1 == self.nd {
            region.d_max()
        } else {
            region.d_max() * j as f64 / (self.nd - 1) as f64
        };
        DoseCombination::new(c, d)
    }

    /// All nodes, c-major.
    pub fn nodes(&self, region: &DesignRegion) -> Vec<DoseCombination> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.nc {
            for j in 0..self.nd {
                out.push(self.node(region, i, j));
            }
        }
        out
    }

    pub fn cell_diagonal(&self, region: &DesignRegion) -> f64 {
        (region.c_max() / (self.nc - 1) as f64).hypot(region.d_max() / (self.nd - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrema {
    pub min: f64,
    pub max: f64,
    pub argmin: DoseCombination,
    pub argmax: DoseCombination,
    pub r_max: f64,
}

/// Set of dose combinations attaining `level` percent of the maximal effect.
#[derive(Debug, Clone, PartialEq)]
pub struct MedSet {
    pub level: f64,
    /// Open polylines run between region edges; closed ones repeat their first vertex.
    pub polylines: Vec<Vec<DoseCombination>>,
}

impl MedSet {
    pub fn points(&self) -> Vec<DoseCombination> {
        self.polylines.iter().flatten().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.polylines.iter().map(|p| polyline_length(p)).sum()
    }
}

fn polyline_length(p: &[DoseCombination]) -> f64 {
    p.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub x: DoseCombination,
    pub mass: f64,
    /// Index into `ContourMeasure::levels`.
    pub level: usize,
}

/// Uniform discrete measure on the union of effective-dose contours.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourMeasure {
    atoms: Vec<Atom>,
    levels: Vec<f64>,
}

impl ContourMeasure {
    /// Builds a measure from explicit atoms (each of positive mass).
    pub fn from_atoms(atoms: Vec<Atom>, levels: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyContour);
        }
        if let Some(a) = atoms.iter().find(|a| !(a.mass > 0.0) || a.level >= levels.len() || !a.x.is_valid()) {
            return Err(Error::param(format!(
                "invalid atom at ({}, {}) with mass {}",
                a.x.c, a.x.d, a.mass
            )));
        }
        Ok(ContourMeasure { atoms, levels })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `l_C`, the total mass.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = DoseCombination> + '_ {
        self.atoms.iter().map(|a| a.x)
    }

    pub fn level_count(&self, level: usize) -> usize {
        self.atoms.iter().filter(|a| a.level == level).count()
    }
}

/// A surface evaluated once on a grid, with its range over the region.
#[derive(Debug, Clone)]
pub struct ContourMap {
    model: SurfaceModel,
    region: DesignRegion,
    grid: GridSpec,
    /// `values[i * nd + j]` at node `(i, j)`.
    values: Vec<f64>,
    extrema: Extrema,
}

impl ContourMap {
    pub fn new(model: &SurfaceModel, region: &DesignRegion, grid: GridSpec) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nc {
            for j in 0..grid.nd {
                values.push(model.value(grid.node(region, i, j)));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("surface evaluates to {v} inside the region")));
        }
        let extrema = polished_extrema(model, region, grid, &values);
        if !(extrema.r_max > DEGENERATE_RANGE) {
            return Err(Error::DegenerateSurface(extrema.r_max));
        }
        Ok(ContourMap {
            model: *model,
            region: *region,
            grid,
            values,
            extrema,
        })
    }

    pub fn model(&self) -> &SurfaceModel {
        &self.model
    }

    pub fn region(&self) -> &DesignRegion {
        &self.region
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn extrema(&self) -> &Extrema {
        &self.extrema
    }

    /// `(η(x) - min) / R_max`
    pub fn normalized(&self, x: DoseCombination) -> f64 {
        (self.model.value(x) - self.extrema.min) / self.extrema.r_max
    }

    /// Response value at level `p` percent.
    pub fn target(&self, p: f64) -> f64 {
        self.extrema.min + p / 100.0 * self.extrema.r_max
    }

    pub fn med_set(&self, p: f64) -> Result<MedSet> {
        check_level(p)?;
        let t = self.target(p);
        Ok(MedSet {
            level: p,
            polylines: self.trace(t),
        })
    }

    /// Atoms spread uniformly by arc length over the union of the level sets,
    /// `atoms_per_level * levels.len()` in total.
    pub fn measure(&self, levels: &[f64], atoms_per_level: usize) -> Result<ContourMeasure> {
        if levels.is_empty() {
            return Err(Error::param("at least one contour level is required"));
        }
        if atoms_per_level == 0 {
            return Err(Error::param("atoms_per_level must be positive"));
        }
        let sets = levels
            .iter()
            .map(|&p| self.med_set(p))
            .collect::<Result<Vec<_>>>()?;
        let atoms = resample_union(&sets, atoms_per_level * levels.len());
        ContourMeasure::from_atoms(atoms, levels.to_vec())
    }

    fn value_at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.nd + j]
    }

    fn trace(&self, t: f64) -> Vec<Vec<DoseCombination>> {
        let nc = self.grid.nc;
        let nd = self.grid.nd;
        let h_count = (nc - 1) * nd;
        let edge_count = h_count + nc * (nd - 1);
        let h_edge = |i: usize, j: usize| j * (nc - 1) + i;
        let v_edge = |i: usize, j: usize| h_count + i * (nd - 1) + j;
        let above = |v: f64| v >= t;

        let mut segments: Vec<(usize, usize)> = Vec::new();
        for i in 0..nc - 1 {
            for j in 0..nd - 1 {
                let v = [
                    self.value_at(i, j),
                    self.value_at(i + 1, j),
                    self.value_at(i + 1, j + 1),
                    self.value_at(i, j + 1),
                ];
                let a = [above(v[0]), above(v[1]), above(v[2]), above(v[3])];
                let e = [h_edge(i, j), v_edge(i + 1, j), h_edge(i, j + 1), v_edge(i, j)];
                let cross = [a[0] != a[1], a[1] != a[2], a[3] != a[2], a[0] != a[3]];
                let n_cross = cross.iter().filter(|&&c| c).count();
                if n_cross == 2 {
                    let mut it = (0..4).filter(|&k| cross[k]);
                    let (k1, k2) = (it.next().unwrap(), it.next().unwrap());
                    segments.push((e[k1], e[k2]));
                } else if n_cross == 4 {
                    let center = above(0.25 * (v[0] + v[1] + v[2] + v[3]));
                    // corner k sits between edges CORNER_EDGES[k]
                    const CORNER_EDGES: [(usize, usize); 4] = [(0, 3), (0, 1), (1, 2), (2, 3)];
                    for k in 0..4 {
                        if a[k] != center {
                            let (x, y) = CORNER_EDGES[k];
                            segments.push((e[x], e[y]));
                        }
                    }
                }
            }
        }
        if segments.is_empty() {
            return Vec::new();
        }

        // crossing point per edge, refined on the true surface
        const NONE: u32 = u32::MAX;
        let mut point_of_edge = vec![NONE; edge_count];
        let mut points: Vec<DoseCombination> = Vec::new();
        let edge_nodes = |edge: usize| -> (usize, usize, usize, usize) {
            if edge < h_count {
                let j = edge / (nc - 1);
                let i = edge % (nc - 1);
                (i, j, i + 1, j)
            } else {
                let k = edge - h_count;
                let i = k / (nd - 1);
                let j = k % (nd - 1);
                (i, j, i, j + 1)
            }
        };
        let mut link: Vec<[u32; 2]> = Vec::new();
        let mut seg_points: Vec<(u32, u32)> = Vec::with_capacity(segments.len());
        for &(ea, eb) in &segments {
            let mut ids = [0u32; 2];
            for (slot, &edge) in [ea, eb].iter().enumerate() {
                if point_of_edge[edge] == NONE {
                    let (i0, j0, i1, j1) = edge_nodes(edge);
                    let x = self.refine_crossing(i0, j0, i1, j1, t);
                    point_of_edge[edge] = points.len() as u32;
                    points.push(x);
                    link.push([NONE, NONE]);
                }
                ids[slot] = point_of_edge[edge];
            }
            let s = seg_points.len() as u32;
            for &id in &ids {
                let l = &mut link[id as usize];
                if l[0] == NONE {
                    l[0] = s;
                } else {
                    l[1] = s;
                }
            }
            seg_points.push((ids[0], ids[1]));
        }

        let mut used = vec![false; seg_points.len()];
        let mut polylines = Vec::new();
        let walk = |start: u32, used: &mut Vec<bool>| -> Vec<DoseCombination> {
            let mut line = vec![points[start as usize]];
            let mut cur = start;
            loop {
                let next_seg = link[cur as usize]
                    .iter()
                    .copied()
                    .find(|&s| s != NONE && !used[s as usize]);
                let Some(s) = next_seg else { break };
                used[s as usize] = true;
                let (a, b) = seg_points[s as usize];
                cur = if a == cur { b } else { a };
                line.push(points[cur as usize]);
            }
            line
        };
        // open chains start at points with a single segment
        for p in 0..points.len() as u32 {
            let l = link[p as usize];
            let degree = (l[0] != NONE) as usize + (l[1] != NONE) as usize;
            if degree == 1 && !used[l[0] as usize] {
                polylines.push(walk(p, &mut used));
            }
        }
        for s in 0..seg_points.len() {
            if !used[s] {
                let start = seg_points[s].0;
                polylines.push(walk(start, &mut used));
            }
        }
        polylines
    }

    /// Root of `η - t` on the grid edge between two nodes (Illinois regula falsi).
    fn refine_crossing(&self, i0: usize, j0: usize, i1: usize, j1: usize, t: f64) -> DoseCombination {
        let a = self.grid.node(&self.region, i0, j0);
        let b = self.grid.node(&self.region, i1, j1);
        let at = |s: f64| DoseCombination::new(a.c + s * (b.c - a.c), a.d + s * (b.d - a.d));
        let (mut s0, mut s1) = (0.0f64, 1.0f64);
        let mut f0 = self.value_at(i0, j0) - t;
        let mut f1 = self.value_at(i1, j1) - t;
        if f0 == 0.0 {
            return a;
        }
        if f1 == 0.0 {
            return b;
        }
        let tol = 1e-13 * self.extrema.r_max;
        let mut side = 0i8;
        let mut s = s0 - f0 * (s1 - s0) / (f1 - f0);
        for _ in 0..100 {
            s = s0 - f0 * (s1 - s0) / (f1 - f0);
            let fs = self.model.value(at(s)) - t;
            if fs.abs() <= tol || (s1 - s0).abs() <= 1e-15 {
                break;
            }
            if (fs > 0.0) == (f1 > 0.0) {
                s1 = s;
                f1 = fs;
                if side == 1 {
                    f0 *= 0.5;
                }
                side = 1;
            } else {
                s0 = s;
                f0 = fs;
                if side == -1 {
                    f1 *= 0.5;
                }
                side = -1;
            }
        }
        self.region.clamp(at(s))
    }
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 100.0 {
        Ok(())
    } else {
        Err(Error::param(format!("contour level must lie in (0, 100), got {p}")))
    }
}

fn polished_extrema(model: &SurfaceModel, region: &DesignRegion, grid: GridSpec, values: &[f64]) -> Extrema {
    let mut kmin = 0;
    let mut kmax = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[kmin] {
            kmin = k;
        }
        if v > values[kmax] {
            kmax = k;
        }
    }
    let node = |k: usize| grid.node(region, k / grid.nd, k % grid.nd);
    let lo = [0.0, 0.0];
    let hi = [region.c_max(), region.d_max()];
    let step = [
        region.c_max() / (grid.nc - 1) as f64,
        region.d_max() / (grid.nd - 1) as f64,
    ];
    let cfg = NelderMeadConfig {
        max_evals: 300,
        f_tol: 1e-15,
        x_tol: 1e-9,
    };
    let polish = |start: DoseCombination, sign: f64| -> (DoseCombination, f64) {
        let f = |x: &[f64]| sign * model.value(DoseCombination::new(x[0], x[1]));
        let m = nelder_mead::minimize(f, &[start.c, start.d], &step, &lo, &hi, &cfg);
        let x = DoseCombination::new(m.x[0], m.x[1]);
        let v = model.value(x);
        let v0 = model.value(start);
        if sign * v < sign * v0 {
            (x, v)
        } else {
            (start, v0)
        }
    };
    let (argmin, min) = polish(node(kmin), 1.0);
    let (argmax, max) = polish(node(kmax), -1.0);
    Extrema {
        min,
        max,
        argmin,
        argmax,
        r_max: max - min,
    }
}

/// Spreads `count` equal-mass atoms at midpoints of equal arc-length bins
/// along the concatenated polylines of all sets.
fn resample_union(sets: &[MedSet], count: usize) -> Vec<Atom> {
    let total: f64 = sets.iter().map(|s| s.length()).sum();
    let mut atoms = Vec::with_capacity(count);
    if !(total > 0.0) {
        // contours collapsed to isolated points
        for (level, set) in sets.iter().enumerate() {
            for x in set.points() {
                atoms.push(Atom { x, mass: 1.0, level });
            }
        }
        return atoms;
    }
    let spacing = total / count as f64;
    let mut next = 0.5 * spacing;
    let mut walked = 0.0;
    for (level, set) in sets.iter().enumerate() {
        for line in &set.polylines {
            for w in line.windows(2) {
                let len = w[0].distance(&w[1]);
                while atoms.len() < count && next <= walked + len {
                    let s = if len > 0.0 { (next - walked) / len } else { 0.0 };
                    let x = DoseCombination::new(
                        w[0].c + s * (w[1].c - w[0].c),
                        w[0].d + s * (w[1].d - w[0].d),
                    );
                    atoms.push(Atom { x, mass: 1.0, level });
                    next += spacing;
                }
                walked += len;
            }
        }
    }
    // rounding can leave the last bin short by an ulp
    while atoms.len() < count {
        let (level, line) = sets
            .iter()
            .enumerate()
            .rev()
            .find_map(|(k, s)| s.polylines.last().map(|l| (k, l)))
            .expect("positive length implies a polyline");
        atoms.push(Atom {
            x: *line.last().unwrap(),
            mass: 1.0,
            level,
        });
    }
    atoms
}

/// Minimum and maximum of the surface over the region, with `R_max`.
pub fn response_extrema(model: &SurfaceModel, region: &DesignRegion, grid: GridSpec) -> Result<Extrema> {
    Ok(*ContourMap::new(model, region, grid)?.extrema())
}

/// Smallest dose in `(0, dose_max]` where the curve reaches `p` percent of
/// its rise over `[0, dose_max]`.
pub fn ed_p_1d(model: &MonoModel, theta0: f64, dose_max: f64, p: f64) -> Result<f64> {
    check_level(p)?;
    if !(dose_max > 0.0 && dose_max.is_finite()) {
        return Err(Error::param(format!("dose_max must be positive, got {dose_max}")));
    }
    let f0 = theta0 + model.value(0.0);
    let rise = theta0 + model.value(dose_max) - f0;
    if rise == 0.0 || !rise.is_finite() {
        return Err(Error::NoSolution);
    }
    let target = p / 100.0;
    let r = |x: f64| (theta0 + model.value(x) - f0) / rise - target;
    const SCAN: usize = 1001;
    let tol = 1e-9 * dose_max;
    let mut prev_x = 0.0;
    let mut prev = r(0.0);
    for k in 1..SCAN {
        let x = dose_max * k as f64 / (SCAN - 1) as f64;
        let v = r(x);
        if v == 0.0 {
            return Ok(x);
        }
        if (v > 0.0) != (prev > 0.0) {
            let (mut lo, mut hi) = (prev_x, x);
            let lo_positive = prev > 0.0;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if (r(mid) > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev_x = x;
        prev = v;
    }
    Err(Error::NoSolution)
}

/// The contour at level `p` percent traced on `grid`.
pub fn extract_med_set(model: &SurfaceModel, region: &DesignRegion, grid: GridSpec, p: f64) -> Result<MedSet> {
    check_level(p)?;
    ContourMap::new(model, region, grid)?.med_set(p)
}

/// Uniform contour measure over the union of the requested level sets.
pub fn build_contour_measure(
    model: &SurfaceModel,
    region: &DesignRegion,
    grid: GridSpec,
    levels: &[f64],
    atoms_per_level: usize,
) -> Result<ContourMeasure> {
    for &p in levels {
        check_level(p)?;
    }
    ContourMap::new(model, region, grid)?.measure(levels, atoms_per_level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case_study() -> SurfaceModel {
        SurfaceModel::new(
            19.05,
            MonoModel::sigmoid_emax(111.10, 5.83, 2.86).unwrap(),
            MonoModel::sigmoid_emax(410.82, 20.0, 0.78).unwrap(),
            -0.0075,
        )
        .unwrap()
    }

    fn scenario2() -> SurfaceModel {
        SurfaceModel::new(
            0.0,
            MonoModel::emax(80.0, 3.0).unwrap(),
            MonoModel::emax(120.0, 10.0).unwrap(),
            0.02,
        )
        .unwrap()
    }

    fn scenario3() -> SurfaceModel {
        SurfaceModel::new(
            0.0,
            MonoModel::sigmoid_emax(80.0, 3.0, 1.5).unwrap(),
            MonoModel::emax(120.0, 10.0).unwrap(),
            -0.02,
        )
        .unwrap()
    }

    fn plane() -> SurfaceModel {
        SurfaceModel::new(0.0, MonoModel::linear(1.0).unwrap(), MonoModel::linear(1.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn monotone_surface_extrema_at_corners() {
        let region = DesignRegion::new(10.0, 12.0).unwrap();
        let e = response_extrema(&scenario2(), &region, GridSpec::VERIFICATION).unwrap();
        assert_eq!(e.argmin, DoseCombination::new(0.0, 0.0));
        assert_eq!(e.min, 0.0);
        assert_eq!(e.argmax, DoseCombination::new(10.0, 12.0));
    }

    #[test]
    fn flat_surface_is_degenerate() {
        let flat = SurfaceModel::new(3.0, MonoModel::linear(0.0).unwrap(), MonoModel::linear(0.0).unwrap(), 0.0)
            .unwrap();
        let region = DesignRegion::new(1.0, 1.0).unwrap();
        assert!(matches!(
            response_extrema(&flat, &region, GridSpec::VERIFICATION),
            Err(Error::DegenerateSurface(_))
        ));
    }

    #[test]
    fn case_study_range_matches_fine_scan() {
        let m = case_study();
        let region = DesignRegion::new(20.0, 7.0).unwrap();
        let e = response_extrema(&m, &region, GridSpec::CONTOUR).unwrap();
        let fine = GridSpec::square(1001).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in fine.nodes(&region) {
            let v = m.eval(x).unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        assert!(((e.r_max - (hi - lo)) / (hi - lo)).abs() <= 1e-3);
    }

    #[test]
    fn non_monotone_scenario_polishes_interior_maximum() {
        let region = DesignRegion::new(10.0, 12.0).unwrap();
        let m = scenario3();
        let e = response_extrema(&m, &region, GridSpec::square(21).unwrap()).unwrap();
        let fine = GridSpec::square(801).unwrap();
        let hi = fine.nodes(&region).into_iter().map(|x| m.eval(x).unwrap()).fold(f64::NEG_INFINITY, f64::max);
        assert!(e.max >= hi - 1e-9);
    }

    #[test]
    fn ed_p_examples() {
        let lin = MonoModel::linear(1.0).unwrap();
        assert!((ed_p_1d(&lin, 0.0, 10.0, 30.0).unwrap() - 3.0).abs() < 1e-8);
        let e = MonoModel::emax(80.0, 3.0).unwrap();
        let b = 40.0;
        let x = ed_p_1d(&e, 5.0, b, 50.0).unwrap();
        let target = 0.5 * b / (3.0 + b);
        // x / (3 + x) = target
        let closed = 3.0 * target / (1.0 - target);
        assert!((x - closed).abs() < 1e-7);
        let s = MonoModel::sigmoid_emax(80.0, 3.0, 2.86).unwrap();
        let x = ed_p_1d(&s, 0.0, 20.0, 50.0).unwrap();
        let half = 0.5 * s.eval(20.0).unwrap();
        let mut prev = 0.0;
        let mut oracle = f64::NAN;
        for k in 1..=200_000 {
            let z = 20.0 * k as f64 / 200_000.0;
            if s.eval(z).unwrap() >= half {
                let (mut a, mut bb) = (prev, z);
                for _ in 0..100 {
                    let mid = 0.5 * (a + bb);
                    if s.eval(mid).unwrap() >= half {
                        bb = mid;
                    } else {
                        a = mid;
                    }
                }
                oracle = 0.5 * (a + bb);
                break;
            }
            prev = z;
        }
        assert!((x - oracle).abs() < 1e-6);
        let flat = MonoModel::linear(0.0).unwrap();
        assert!(matches!(ed_p_1d(&flat, 0.0, 1.0, 50.0), Err(Error::NoSolution)));
    }

    #[test]
    fn plane_contour_is_the_diagonal() {
        let region = DesignRegion::new(1.0, 1.0).unwrap();
        let grid = GridSpec::VERIFICATION;
        let set = extract_med_set(&plane(), &region, grid, 50.0).unwrap();
        assert_eq!(set.polylines.len(), 1);
        for x in set.points() {
            assert!((x.c + x.d - 1.0).abs() <= 2.0 / 101.0);
        }
        assert!((set.length() - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn vertices_lie_on_the_level() {
        let region = DesignRegion::new(20.0, 7.0).unwrap();
        let map = ContourMap::new(&case_study(), &region, GridSpec::CONTOUR).unwrap();
        for p in [10.0, 50.0, 20.0, 80.0] {
            let set = map.med_set(p).unwrap();
            assert!(!set.is_empty());
            for x in set.points() {
                assert!(region.contains(&x));
                assert!((map.normalized(x) - p / 100.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn scenario2_levels_are_single_curves() {
        let region = DesignRegion::new(10.0, 12.0).unwrap();
        let map = ContourMap::new(&scenario2(), &region, GridSpec::CONTOUR).unwrap();
        for p in [80.0, 90.0] {
            let set = map.med_set(p).unwrap();
            assert_eq!(set.polylines.len(), 1);
            let line = &set.polylines[0];
            let on_edge = |x: &DoseCombination| {
                x.c.abs() < 1e-9 || x.d.abs() < 1e-9 || (x.c - 10.0).abs() < 1e-9 || (x.d - 12.0).abs() < 1e-9
            };
            assert!(on_edge(&line[0]) && on_edge(line.last().unwrap()));
        }
    }

    #[test]
    fn contour_shrinks_near_the_maximum() {
        let region = DesignRegion::new(10.0, 12.0).unwrap();
        let map = ContourMap::new(&scenario2(), &region, GridSpec::square(51).unwrap()).unwrap();
        let mut prev = usize::MAX;
        for eps in [5.0, 2.0, 1.0, 0.5, 0.1] {
            let n = map.med_set(100.0 - eps).unwrap().points().len();
            assert!(n <= prev, "eps {eps}: {n} > {prev}");
            prev = n;
        }
    }

    #[test]
    fn saddle_cells_are_resolved() {
        // η = (c - 1/2)(d - 1/2) has a saddle at the center
        let region = DesignRegion::new(1.0, 1.0).unwrap();
        let m = SurfaceModel::new(0.25, MonoModel::linear(-0.5).unwrap(), MonoModel::linear(-0.5).unwrap(), 4.0)
            .unwrap();
        let map = ContourMap::new(&m, &region, GridSpec::square(2).unwrap()).unwrap();
        // the single cell has corners above (0,0),(1,1) and below (1,0),(0,1)
        let set = map.med_set(50.0).unwrap();
        assert_eq!(set.polylines.len(), 2);
        assert!(set.polylines.iter().all(|l| l.len() == 2));
    }

    #[test]
    fn measure_counts_and_levels() {
        let region = DesignRegion::new(20.0, 7.0).unwrap();
        let map = ContourMap::new(&case_study(), &region, GridSpec::CONTOUR).unwrap();
        let mu = map.measure(&[10.0, 50.0], 100).unwrap();
        assert_eq!(mu.len(), 200);
        assert_eq!(mu.total_mass(), 200.0);
        assert_eq!(mu.level_count(0) + mu.level_count(1), 200);
        for a in mu.atoms() {
            let p = mu.levels()[a.level];
            assert!((map.normalized(a.x) - p / 100.0).abs() <= 0.005);
        }
        let single = map.measure(&[50.0], 200).unwrap();
        assert_eq!(single.len(), 200);
        assert!(matches!(map.measure(&[50.0], 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn refined_grid_contour_is_close() {
        let region = DesignRegion::new(20.0, 7.0).unwrap();
        let coarse = ContourMap::new(&case_study(), &region, GridSpec::VERIFICATION).unwrap();
        let fine = ContourMap::new(&case_study(), &region, GridSpec::CONTOUR).unwrap();
        let diag = GridSpec::VERIFICATION.cell_diagonal(&region);
        for p in [10.0, 50.0] {
            let a = coarse.med_set(p).unwrap().points();
            let b = fine.med_set(p).unwrap().points();
            let directed = |u: &[DoseCombination], v: &[DoseCombination]| {
                u.iter()
                    .map(|x| v.iter().map(|y| x.distance(y)).fold(f64::INFINITY, f64::min))
                    .fold(0.0, f64::max)
            };
            let h = directed(&a, &b).max(directed(&b, &a));
            assert!(h <= diag, "level {p}: {h} > {diag}");
        }
    }
}
