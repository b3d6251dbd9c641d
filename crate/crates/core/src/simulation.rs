//! Standard design families, synthetic data, refitting and the contour RMSE
//! replication study.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::contour::{response_extrema, ContourMap, Extrema, GridSpec, DEFAULT_ATOMS_PER_LEVEL};
use crate::design::{round_exact, Design, ExactDesign};
use crate::error::{Error, Result};
use crate::lm::{self, LmConfig, Residuals};
use crate::model::{DesignRegion, DoseCombination, MonoModel, SurfaceModel};
use crate::seed;

/// Fits whose response range falls below this are rejected.
pub const DEGENERATE_FIT_RANGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model: SurfaceModel,
    pub region: DesignRegion,
    pub levels: Vec<f64>,
    pub sigma: f64,
}

impl Scenario {
    pub fn new(name: impl Into<String>, model: SurfaceModel, region: DesignRegion, levels: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        if levels.is_empty() || levels.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
            return Err(Error::param("levels must be a non-empty list of percentages in (0, 100)"));
        }
        Ok(Scenario {
            name: name.into(),
            model,
            region,
            levels,
            sigma,
        })
    }

    /// Case-study surface: two sigmoid Emax models, slight antagonism.
    pub fn scenario1() -> Self {
        let model = SurfaceModel::new(
            19.05,
            MonoModel::sigmoid_emax(111.10, 5.83, 2.86).unwrap(),
            MonoModel::sigmoid_emax(410.82, 20.0, 0.78).unwrap(),
            -0.0075,
        )
        .unwrap();
        Scenario::new("scenario1", model, DesignRegion::new(20.0, 7.0).unwrap(), vec![10.0, 50.0], 24.0).unwrap()
    }

    /// Two Emax models with positive interaction.
    pub fn scenario2() -> Self {
        Self::scenario2_with_gamma(0.02)
    }

    /// Scenario 2 with another interaction value (robustness settings).
    pub fn scenario2_with_gamma(gamma: f64) -> Self {
        let model = SurfaceModel::new(
            0.0,
            MonoModel::emax(80.0, 3.0).unwrap(),
            MonoModel::emax(120.0, 10.0).unwrap(),
            gamma,
        )
        .unwrap();
        Scenario::new("scenario2", model, DesignRegion::new(10.0, 12.0).unwrap(), vec![80.0, 90.0], 30.0).unwrap()
    }

    /// Sigmoid Emax and Emax with negative interaction.
    pub fn scenario3() -> Self {
        let model = SurfaceModel::new(
            0.0,
            MonoModel::sigmoid_emax(80.0, 3.0, 1.5).unwrap(),
            MonoModel::emax(120.0, 10.0).unwrap(),
            -0.02,
        )
        .unwrap();
        Scenario::new("scenario3", model, DesignRegion::new(10.0, 12.0).unwrap(), vec![50.0, 80.0], 11.0).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_totals: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub fit_grid: GridSpec,
}

impl SimConfig {
    pub fn new(n_totals: Vec<usize>, reps: usize, seed: u64) -> Result<Self> {
        if reps == 0 {
            return Err(Error::param("reps must be at least 1"));
        }
        if n_totals.is_empty() {
            return Err(Error::param("at least one total sample size is needed"));
        }
        Ok(SimConfig {
            n_totals,
            reps,
            seed,
            fit_grid: GridSpec::CONTOUR,
        })
    }
}

/// `r × s` grid of equally spaced levels including 0 and the maximum.
pub fn factorial_design(region: &DesignRegion, r: usize, s: usize) -> Result<Design> {
    if r < 2 || s < 2 {
        return Err(Error::param(format!("factorial levels must be at least 2, got {r}x{s}")));
    }
    let grid = GridSpec::new(r, s)?;
    Design::uniform(grid.nodes(region))
}

/// Ray `a/b`: `a` equally spaced levels on each axis (shared placebo) and
/// `b` equally spaced levels along the diagonal ray to `(c_max, d_max)`.
pub fn ray_design(region: &DesignRegion, mono_levels: usize, combo_levels: usize) -> Result<Design> {
    if !matches!((mono_levels, combo_levels), (3, 2) | (3, 3) | (4, 2) | (4, 4)) {
        return Err(Error::UnsupportedRay {
            mono: mono_levels,
            combo: combo_levels,
        });
    }
    let a = (mono_levels - 1) as f64;
    let b = (combo_levels - 1) as f64;
    let mut points = Vec::new();
    for k in 0..mono_levels {
        points.push(DoseCombination::new(0.0, region.d_max() * k as f64 / a));
    }
    for k in 1..mono_levels {
        points.push(DoseCombination::new(region.c_max() * k as f64 / a, 0.0));
    }
    for k in 1..combo_levels {
        let t = k as f64 / b;
        points.push(DoseCombination::new(region.c_max() * t, region.d_max() * t));
    }
    Design::uniform(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: DoseCombination,
    pub y: f64,
}

/// `r_i` independent draws of `η(x_i) + ε` at each support point.
pub fn simulate_response<R: Rng + ?Sized>(exact: &ExactDesign, truth: &SurfaceModel, sigma: f64, rng: &mut R) -> Result<Vec<Observation>> {
    let noise = Normal::new(0.0, sigma).map_err(|_| Error::param(format!("sigma must be positive, got {sigma}")))?;
    let mut out = Vec::with_capacity(exact.total());
    for (x, &r) in exact.points().iter().zip(exact.counts()) {
        let mean = truth.eval(*x)?;
        for _ in 0..r {
            out.push(Observation {
                x: *x,
                y: mean + noise.sample(rng),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum FitFailure {
    #[error("{support} distinct doses cannot identify {params} parameters")]
    Underdetermined { support: usize, params: usize },
    #[error("no start converged")]
    NoConvergence,
    #[error("fitted surface is flat over the region")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub lm: LmConfig,
    pub random_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lm: LmConfig::default(),
            random_starts: 5,
        }
    }
}

struct SurfaceResiduals<'a> {
    template: SurfaceModel,
    data: &'a [Observation],
}

impl Residuals for SurfaceResiduals<'_> {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn eval(&mut self, x: &[f64], r: &mut [f64], j: &mut [f64]) -> bool {
        let Ok(model) = self.template.with_params(x) else {
            return false;
        };
        let m = x.len();
        for (i, obs) in self.data.iter().enumerate() {
            r[i] = model.value(obs.x) - obs.y;
            model.gradient_into(obs.x, &mut j[i * m..(i + 1) * m]);
        }
        true
    }
}

/// Starting points: the hint, the hint with each parameter halved and
/// doubled, and random draws (log-uniform over a factor of 10 either way
/// for positive parameters, uniform over `h ± (2|h| + 0.01)` otherwise).
fn starts<R: Rng + ?Sized>(hint: &SurfaceModel, random: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let base = hint.params();
    let positive = hint.positive_params();
    let mut out = vec![base.clone()];
    for k in 0..base.len() {
        for f in [0.5, 2.0] {
            let mut x = base.clone();
            x[k] *= f;
            if x != base {
                out.push(x);
            }
        }
    }
    for _ in 0..random {
        let x = base
            .iter()
            .enumerate()
            .map(|(k, &h)| {
                if positive.contains(&k) {
                    h * (rng.random_range(-1.0f64..1.0) * core::f64::consts::LN_10).exp()
                } else {
                    let w = 2.0 * h.abs() + 0.01;
                    h + rng.random_range(-w..w)
                }
            })
            .collect();
        out.push(x);
    }
    out
}

/// Gaussian maximum likelihood (least squares) with the model shape of
/// `hint`, multistarted around it. The best converged fit by residual sum
/// of squares is returned.
pub fn fit_mle<R: Rng + ?Sized>(
    data: &[Observation],
    hint: &SurfaceModel,
    region: &DesignRegion,
    cfg: &FitConfig,
    rng: &mut R,
) -> core::result::Result<SurfaceModel, FitFailure> {
    let m = hint.param_count();
    let mut distinct: Vec<DoseCombination> = Vec::new();
    for obs in data {
        if !distinct.iter().any(|x| x.distance(&obs.x) <= crate::design::DISTINCT_TOL) {
            distinct.push(obs.x);
        }
    }
    if distinct.len() < m || data.len() < m {
        return Err(FitFailure::Underdetermined {
            support: distinct.len(),
            params: m,
        });
    }
    let mut problem = SurfaceResiduals { template: *hint, data };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in starts(hint, cfg.random_starts, rng) {
        let out = lm::minimize(&mut problem, &x0, &cfg.lm);
        if out.converged && best.as_ref().is_none_or(|b| out.rss < b.1) {
            best = Some((out.x, out.rss));
        }
    }
    let (x, _) = best.ok_or(FitFailure::NoConvergence)?;
    let fitted = hint.with_params(&x).map_err(|_| FitFailure::NoConvergence)?;
    match response_extrema(&fitted, region, GridSpec::square(21).unwrap()) {
        Ok(e) if e.r_max > DEGENERATE_FIT_RANGE => Ok(fitted),
        _ => Err(FitFailure::Degenerate),
    }
}

/// Average over levels of the RMS distance, on the true normalized scale,
/// between each fitted contour and its nominal level.
pub fn rmse_contours(fitted: &SurfaceModel, truth: &SurfaceModel, region: &DesignRegion, grid: GridSpec, levels: &[f64]) -> Result<f64> {
    let extrema = response_extrema(truth, region, grid)?;
    rmse_with_extrema(fitted, truth, &extrema, region, grid, levels)
}

fn rmse_with_extrema(
    fitted: &SurfaceModel,
    truth: &SurfaceModel,
    truth_extrema: &Extrema,
    region: &DesignRegion,
    grid: GridSpec,
    levels: &[f64],
) -> Result<f64> {
    let map = ContourMap::new(fitted, region, grid)?;
    let mut total = 0.0;
    for &p in levels {
        let measure = map.measure(&[p], DEFAULT_ATOMS_PER_LEVEL)?;
        let sq: f64 = measure
            .points()
            .map(|x| {
                let normalized = 100.0 * (truth.value(x) - truth_extrema.min) / truth_extrema.r_max;
                (p - normalized).powi(2)
            })
            .sum();
        total += (sq / measure.len() as f64).sqrt();
    }
    Ok(total / levels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepStatus {
    Ok,
    FitFailure,
    ContourFailure,
}

impl RepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RepStatus::Ok => "ok",
            RepStatus::FitFailure => "fit_failure",
            RepStatus::ContourFailure => "contour_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub design: usize,
    pub n_total: usize,
    pub rep: usize,
    /// `NaN` unless the status is `Ok`.
    pub rmse: f64,
    pub status: RepStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub successes: usize,
    pub fit_failures: usize,
    pub contour_failures: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub design_names: Vec<String>,
    pub n_totals: Vec<usize>,
    pub reps: usize,
    /// Ordered by design, then total sample size, then replicate.
    pub records: Vec<RepRecord>,
}

impl SimResult {
    pub fn records_for(&self, design: usize, n_total: usize) -> impl Iterator<Item = &RepRecord> {
        self.records
            .iter()
            .filter(move |r| r.design == design && r.n_total == n_total)
    }

    pub fn design_index(&self, name: &str) -> Option<usize> {
        self.design_names.iter().position(|n| n == name)
    }

    /// Replicate values of the successful runs, in replicate order.
    pub fn rmse_values(&self, design: usize, n_total: usize) -> Vec<f64> {
        self.records_for(design, n_total)
            .filter(|r| r.status == RepStatus::Ok)
            .map(|r| r.rmse)
            .collect()
    }

    pub fn summary(&self, design: usize, n_total: usize) -> Summary {
        let mut values = self.rmse_values(design, n_total);
        values.sort_by(f64::total_cmp);
        let count = |s: RepStatus| self.records_for(design, n_total).filter(|r| r.status == s).count();
        Summary {
            successes: values.len(),
            fit_failures: count(RepStatus::FitFailure),
            contour_failures: count(RepStatus::ContourFailure),
            median: quantile(&values, 0.5),
            q25: quantile(&values, 0.25),
            q75: quantile(&values, 0.75),
        }
    }
}

/// Linearly interpolated sample quantile of sorted data; `NaN` when empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = p * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Runs independent replicate jobs `0..count`; results in job order.
pub trait Executor {
    fn run(&self, count: usize, job: &(dyn Fn(usize) -> RepRecord + Sync)) -> Vec<RepRecord>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run(&self, count: usize, job: &(dyn Fn(usize) -> RepRecord + Sync)) -> Vec<RepRecord> {
        (0..count).map(job).collect()
    }
}

/// Seed of one replicate: a hash of the master seed, design name, sample
/// size and replicate index.
pub fn replicate_seed(master: u64, design_name: &str, n_total: usize, rep: usize) -> u64 {
    seed::mix(&[master, seed::fnv1a(design_name.as_bytes()), n_total as u64, rep as u64])
}

struct Study<'a> {
    scenario: &'a Scenario,
    truth_extrema: Extrema,
    grid: GridSpec,
    fit: FitConfig,
}

impl Study<'_> {
    fn replicate(&self, exact: &ExactDesign, rng: &mut ChaCha8Rng) -> (f64, RepStatus) {
        let s = self.scenario;
        let data = match simulate_response(exact, &s.model, s.sigma, rng) {
            Ok(d) => d,
            Err(_) => return (f64::NAN, RepStatus::FitFailure),
        };
        let fitted = match fit_mle(&data, &s.model, &s.region, &self.fit, rng) {
            Ok(f) => f,
            Err(_) => return (f64::NAN, RepStatus::FitFailure),
        };
        match rmse_with_extrema(&fitted, &s.model, &self.truth_extrema, &s.region, self.grid, &s.levels) {
            Ok(v) => (v, RepStatus::Ok),
            Err(Error::DegenerateSurface(_)) => (f64::NAN, RepStatus::FitFailure),
            Err(_) => (f64::NAN, RepStatus::ContourFailure),
        }
    }
}

/// One seeded replicate: simulate, refit, score.
pub fn run_replicate(scenario: &Scenario, exact: &ExactDesign, seed: u64, grid: GridSpec) -> Result<(f64, RepStatus)> {
    let study = Study {
        scenario,
        truth_extrema: response_extrema(&scenario.model, &scenario.region, grid)?,
        grid,
        fit: FitConfig::default(),
    };
    Ok(study.replicate(exact, &mut seed::stream(seed)))
}

pub fn run_study(scenario: &Scenario, designs: &[(String, Design)], cfg: &SimConfig) -> Result<SimResult> {
    run_study_with(scenario, designs, cfg, &Sequential)
}

pub fn run_study_with<E: Executor>(scenario: &Scenario, designs: &[(String, Design)], cfg: &SimConfig, executor: &E) -> Result<SimResult> {
    if cfg.reps == 0 {
        return Err(Error::param("reps must be at least 1"));
    }
    for (name, design) in designs {
        design
            .check_region(&scenario.region)
            .map_err(|e| Error::design(format!("{name}: {e}")))?;
    }
    let mut exact = Vec::with_capacity(designs.len() * cfg.n_totals.len());
    for (_, design) in designs {
        for &n in &cfg.n_totals {
            exact.push(round_exact(design, n)?);
        }
    }
    let study = Study {
        scenario,
        truth_extrema: response_extrema(&scenario.model, &scenario.region, cfg.fit_grid)?,
        grid: cfg.fit_grid,
        fit: FitConfig::default(),
    };
    let per_design = cfg.n_totals.len() * cfg.reps;
    let job = |k: usize| {
        let d = k / per_design;
        let ni = (k % per_design) / cfg.reps;
        let rep = k % cfg.reps;
        let n_total = cfg.n_totals[ni];
        let mut rng = seed::stream(replicate_seed(cfg.seed, &designs[d].0, n_total, rep));
        let (rmse, status) = study.replicate(&exact[d * cfg.n_totals.len() + ni], &mut rng);
        RepRecord {
            design: d,
            n_total,
            rep,
            rmse,
            status,
        }
    };
    let records = executor.run(designs.len() * per_design, &job);
    Ok(SimResult {
        design_names: designs.iter().map(|(n, _)| n.clone()).collect(),
        n_totals: cfg.n_totals.clone(),
        reps: cfg.reps,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;

    fn close(a: DoseCombination, c: f64, d: f64) -> bool {
        (a.c - c).abs() <= 0.005 && (a.d - d).abs() <= 0.005
    }

    #[test]
    fn factorial_examples() {
        let f = factorial_design(&case_region(), 4, 4).unwrap();
        assert_eq!(f.len(), 16);
        let table = [0.0, 6.67, 13.33, 20.0];
        let dtable = [0.0, 2.33, 4.67, 7.0];
        for c in table {
            for d in dtable {
                assert!(f.points().iter().any(|x| close(*x, c, d)), "{c} {d}");
            }
        }
        assert!(f.weights().iter().all(|w| (w - 1.0 / 16.0).abs() < 1e-15));
        let corners = factorial_design(&DesignRegion::new(1.0, 1.0).unwrap(), 2, 2).unwrap();
        assert_eq!(corners.len(), 4);
        let g = factorial_design(&DesignRegion::new(10.0, 12.0).unwrap(), 3, 3).unwrap();
        for c in [0.0, 5.0, 10.0] {
            for d in [0.0, 6.0, 12.0] {
                assert!(g.points().iter().any(|x| close(*x, c, d)));
            }
        }
        assert!(factorial_design(&case_region(), 1, 4).is_err());
    }

    #[test]
    fn ray_examples() {
        let r42 = ray_design(&case_region(), 4, 2).unwrap();
        let table42 = [
            (0.0, 0.0),
            (0.0, 2.33),
            (0.0, 4.67),
            (0.0, 7.0),
            (6.67, 0.0),
            (13.33, 0.0),
            (20.0, 0.0),
            (20.0, 7.0),
        ];
        assert_eq!(r42.len(), 8);
        for (c, d) in table42 {
            assert!(r42.points().iter().any(|x| close(*x, c, d)));
        }
        let r44 = ray_design(&case_region(), 4, 4).unwrap();
        assert_eq!(r44.len(), 10);
        for (c, d) in [(6.67, 2.33), (13.33, 4.67), (20.0, 7.0)] {
            assert!(r44.points().iter().any(|x| close(*x, c, d)));
        }
        let s2 = DesignRegion::new(10.0, 12.0).unwrap();
        assert_eq!(ray_design(&s2, 3, 2).unwrap().len(), 6);
        let r33 = ray_design(&s2, 3, 3).unwrap();
        assert_eq!(r33.len(), 7);
        assert!(r33.points().iter().any(|x| close(*x, 5.0, 6.0)));
        assert_eq!(ray_design(&s2, 5, 1), Err(Error::UnsupportedRay { mono: 5, combo: 1 }));
    }

    #[test]
    fn vanishing_noise_reproduces_the_mean() {
        let truth = case_study();
        let exact = round_exact(&med_10_50(), 27).unwrap();
        let data = simulate_response(&exact, &truth, 1e-12, &mut seed::stream(1)).unwrap();
        assert_eq!(data.len(), 27);
        for o in &data {
            assert!((o.y - truth.eval(o.x).unwrap()).abs() < 1e-10);
        }
        let again = simulate_response(&exact, &truth, 1e-12, &mut seed::stream(1)).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn large_sample_mean_is_close() {
        let truth = case_study();
        let x = DoseCombination::new(5.0, 2.0);
        let exact = ExactDesign::new(vec![x], vec![1000]).unwrap();
        let mean = truth.eval(x).unwrap();
        let mut inside = 0;
        for s in 0..100 {
            let data = simulate_response(&exact, &truth, 24.0, &mut seed::stream(s)).unwrap();
            let m: f64 = data.iter().map(|o| o.y).sum::<f64>() / 1000.0;
            if (m - mean).abs() <= 3.0 * 24.0 / 1000f64.sqrt() {
                inside += 1;
            }
        }
        assert!(inside >= 97, "{inside}");
    }

    #[test]
    fn noise_free_fit_recovers_truth() {
        let truth = case_study();
        let region = case_region();
        let exact = round_exact(&factorial_4x4(), 48).unwrap();
        let data = simulate_response(&exact, &truth, 1e-12, &mut seed::stream(3)).unwrap();
        let fitted = fit_mle(&data, &truth, &region, &FitConfig::default(), &mut seed::stream(4)).unwrap();
        for (a, b) in fitted.params().iter().zip(truth.params()) {
            assert!((a - b).abs() <= 1e-4 * b.abs(), "{a} vs {b}");
        }
        let s2 = Scenario::scenario2();
        let exact = round_exact(&factorial_design(&s2.region, 3, 3).unwrap(), 27).unwrap();
        let data = simulate_response(&exact, &s2.model, 1e-12, &mut seed::stream(3)).unwrap();
        let fitted = fit_mle(&data, &s2.model, &s2.region, &FitConfig::default(), &mut seed::stream(4)).unwrap();
        for (a, b) in fitted.params().iter().zip(s2.model.params()) {
            assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn too_few_points_is_underdetermined() {
        let truth = case_study();
        let exact = round_exact(&ray_design(&case_region(), 3, 2).unwrap(), 30).unwrap();
        let data = simulate_response(&exact, &truth, 1.0, &mut seed::stream(1)).unwrap();
        let r = fit_mle(&data, &truth, &case_region(), &FitConfig::default(), &mut seed::stream(2));
        assert_eq!(r, Err(FitFailure::Underdetermined { support: 6, params: 8 }));
    }

    #[test]
    fn rmse_of_truth_and_shifted_truth_is_small() {
        let s = Scenario::scenario1();
        let grid = GridSpec::CONTOUR;
        let exact = rmse_contours(&s.model, &s.model, &s.region, grid, &s.levels).unwrap();
        assert!(exact <= 0.5, "{exact}");
        let mut p = s.model.params();
        p[0] += 7.0;
        let shifted = s.model.with_params(&p).unwrap();
        let v = rmse_contours(&shifted, &s.model, &s.region, grid, &s.levels).unwrap();
        assert!(v <= 0.5, "{v}");
    }

    #[test]
    fn flipped_interaction_gives_large_rmse() {
        let s = Scenario::scenario3();
        let wrong = s.model.with_gamma(0.02).unwrap();
        let v = rmse_contours(&wrong, &s.model, &s.region, GridSpec::CONTOUR, &s.levels).unwrap();
        assert!(v > 5.0, "{v}");
    }

    #[test]
    fn rmse_is_invariant_to_positive_rescaling() {
        // scaling every response by 3 scales the intercept, the maximal
        // effects and divides the interaction by 3
        let s = Scenario::scenario2();
        let fitted = s.model.with_gamma(0.015).unwrap();
        let scale = |m: &SurfaceModel| {
            let mut p = m.params();
            // (theta0, emax_c, ed50_c, emax_d, ed50_d, gamma)
            for k in [0, 1, 3] {
                p[k] *= 3.0;
            }
            p[5] /= 3.0;
            m.with_params(&p).unwrap()
        };
        let grid = GridSpec::square(101).unwrap();
        let a = rmse_contours(&fitted, &s.model, &s.region, grid, &s.levels).unwrap();
        let b = rmse_contours(&scale(&fitted), &scale(&s.model), &s.region, grid, &s.levels).unwrap();
        assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} {b}");
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn noise_free_study() {
        let mut s = Scenario::scenario1();
        s.sigma = 1e-12;
        let designs = vec![
            (String::from("med"), med_10_50()),
            (String::from("factorial"), factorial_4x4()),
        ];
        let cfg = SimConfig::new(vec![27], 1, 11).unwrap();
        let r = run_study(&s, &designs, &cfg).unwrap();
        assert_eq!(r.records.len(), 2);
        for rec in &r.records {
            assert_eq!(rec.status, RepStatus::Ok);
            assert!(rec.rmse <= 0.5, "{}", rec.rmse);
        }
        let again = run_study(&s, &designs, &cfg).unwrap();
        assert_eq!(r, again);
        let sm = r.summary(0, 27);
        assert_eq!(sm.successes + sm.fit_failures + sm.contour_failures, 1);
    }
}
