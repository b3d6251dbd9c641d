//! Particle swarm search over designs with a fixed maximal support size.
//!
//! A particle holds `n` dose pairs (clamped to the region) followed by `n`
//! weight logits mapped to the simplex by softmax. Particles whose
//! information matrix is singular score `+∞`.
//!
//! Two details keep the swarm from settling on designs with too few points.
//! A slot that lands on another slot of the same particle is freed (its
//! weight folded into the twin, its position redrawn). Restarts are
//! independent searches, so one collapsed swarm does not steer the next.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::contour::GridSpec;
use crate::criteria::{d_efficiency_report, BayesianCriterion, MedCriterion, SensitivityReport};
use crate::design::{merge_points, Design, DISTINCT_TOL};
use crate::error::{Error, Result};
use crate::model::{DesignRegion, DoseCombination, SurfaceModel};
use crate::seed;

/// Logits are kept within `±LOGIT_BOUND`.
const LOGIT_BOUND: f64 = 10.0;
/// Velocity limit as a fraction of each coordinate's range.
const VELOCITY_FRACTION: f64 = 0.2;
/// Attempts to redraw a particle whose starting design is singular.
const REPAIR_ATTEMPTS: usize = 25;
/// Largest relative criterion change accepted from pruning.
const PRUNE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum Objective {
    Med(MedCriterion),
    D { model: SurfaceModel, verification_grid: GridSpec },
    Bayesian(BayesianCriterion),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Med(_) => "med",
            Objective::D { .. } => "d",
            Objective::Bayesian(_) => "bayesian",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Objective::Med(c) => c.model().param_count(),
            Objective::D { model, .. } => model.param_count(),
            Objective::Bayesian(b) => b.components()[0].model().param_count(),
        }
    }

    /// Search score; `+∞` for designs that cannot be scored.
    pub fn score(&self, design: &Design) -> f64 {
        match self {
            Objective::Med(c) => c.objective(design),
            Objective::D { model, .. } => crate::criteria::d_criterion(design, model).unwrap_or(f64::INFINITY),
            Objective::Bayesian(b) => b.objective(design),
        }
    }

    /// Criterion value with full range checking.
    pub fn value(&self, design: &Design) -> Result<f64> {
        match self {
            Objective::Med(c) => c.value(design),
            Objective::D { model, .. } => crate::criteria::d_criterion(design, model),
            Objective::Bayesian(b) => b.value(design),
        }
    }

    pub fn report(&self, design: &Design, region: &DesignRegion) -> Result<SensitivityReport> {
        match self {
            Objective::Med(c) => c.efficiency_lower_bound(design),
            Objective::D {
                model,
                verification_grid,
            } => d_efficiency_report(design, model, region, *verification_grid),
            Objective::Bayesian(b) => b.efficiency_lower_bound(design),
        }
    }

    /// Candidate support points suggested by the problem (contour atoms).
    fn hints(&self) -> Vec<DoseCombination> {
        match self {
            Objective::Med(c) => c.config().measure().points().collect(),
            Objective::D { .. } => Vec::new(),
            Objective::Bayesian(b) => b
                .components()
                .iter()
                .flat_map(|c| c.config().measure().points())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimProblem {
    pub region: DesignRegion,
    pub objective: Objective,
    pub n_points: usize,
}

impl OptimProblem {
    pub fn new(region: DesignRegion, objective: Objective, n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::param("n_points must be at least 1"));
        }
        if let Objective::D { .. } = objective {
            let m = objective.param_count();
            if n_points < m {
                return Err(Error::param(format!(
                    "the D-criterion needs at least {m} support points, got {n_points}"
                )));
            }
        }
        Ok(OptimProblem {
            region,
            objective,
            n_points,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Points closer than this (dose units) are merged after the search.
    pub merge_tol: f64,
    /// Support points lighter than this are dropped after the search.
    pub weight_floor: f64,
    pub certify_threshold: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 60,
            iterations: 500,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 1,
            restarts: 4,
            merge_tol: 1e-2,
            weight_floor: 1e-3,
            certify_threshold: 0.99,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 10 {
            return Err(Error::param(format!("swarm_size must be at least 10, got {}", self.swarm_size)));
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return Err(Error::param(format!("inertia must lie in (0, 1), got {}", self.inertia)));
        }
        for (name, v) in [("cognitive", self.cognitive), ("social", self.social)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts must be at least 1"));
        }
        if !(self.merge_tol >= 0.0) || !(self.weight_floor >= 0.0 && self.weight_floor < 1.0) {
            return Err(Error::param("merge_tol and weight_floor must be non-negative"));
        }
        if !(self.certify_threshold > 0.0 && self.certify_threshold <= 1.0) {
            return Err(Error::param("certify_threshold must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub design: Design,
    pub criterion_value: f64,
    pub report: SensitivityReport,
    /// `(iteration, best score)`; iterations count across restarts.
    pub trace: Vec<(usize, f64)>,
    pub certified: bool,
    pub evaluations: usize,
}

/// Scores a batch of designs; the order of results matches the input.
pub trait Evaluator {
    fn scores(&self, objective: &Objective, designs: &[Design]) -> Vec<f64>;
}

/// Scores designs one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Evaluator for Sequential {
    fn scores(&self, objective: &Objective, designs: &[Design]) -> Vec<f64> {
        designs.iter().map(|d| objective.score(d)).collect()
    }
}

/// Box of the particle coordinates.
struct Layout {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    vmax: Vec<f64>,
}

impl Layout {
    fn new(region: &DesignRegion, n: usize) -> Self {
        let mut lo = Vec::with_capacity(3 * n);
        let mut hi = Vec::with_capacity(3 * n);
        for _ in 0..n {
            lo.extend([0.0, 0.0]);
            hi.extend([region.c_max(), region.d_max()]);
        }
        for _ in 0..n {
            lo.push(-LOGIT_BOUND);
            hi.push(LOGIT_BOUND);
        }
        let vmax = lo.iter().zip(&hi).map(|(a, b)| VELOCITY_FRACTION * (b - a)).collect();
        Layout { n, lo, hi, vmax }
    }

    fn dim(&self) -> usize {
        3 * self.n
    }

    fn clamp(&self, x: &mut [f64]) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }
}

/// Particle position to design: softmax weights, coincident points merged.
pub fn decode(position: &[f64], n: usize) -> Design {
    let logits = &position[2 * n..3 * n];
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let points: Vec<DoseCombination> = (0..n)
        .map(|k| DoseCombination::new(position[2 * k], position[2 * k + 1]))
        .collect();
    let (p, w) = merge_points(&points, &weights, DISTINCT_TOL);
    Design::normalized(p, w).expect("decoded particle is a valid design")
}

/// Folds the weight of a slot that coincides with an earlier one into that
/// slot and sends it to a random location at minimal weight. The decoded
/// design is unchanged up to the negligible weight of the freed slot.
fn free_duplicates(x: &mut [f64], n: usize, tol: f64, region: &DesignRegion, rng: &mut ChaCha8Rng) {
    for k in 1..n {
        let pk = DoseCombination::new(x[2 * k], x[2 * k + 1]);
        let twin = (0..k).find(|&j| DoseCombination::new(x[2 * j], x[2 * j + 1]).distance(&pk) <= tol);
        if let Some(j) = twin {
            let (a, b) = (x[2 * n + j], x[2 * n + k]);
            let top = a.max(b);
            x[2 * n + j] = (top + ((a - top).exp() + (b - top).exp()).ln()).min(LOGIT_BOUND);
            x[2 * n + k] = -LOGIT_BOUND;
            x[2 * k] = rng.random_range(0.0..=region.c_max());
            x[2 * k + 1] = rng.random_range(0.0..=region.d_max());
        }
    }
}

struct Swarm {
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
    best_positions: Vec<Vec<f64>>,
    best_scores: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
}

fn random_position(layout: &Layout, region: &DesignRegion, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = layout.n;
    let mut x = vec![0.0; 3 * n];
    for k in 0..n {
        x[2 * k] = rng.random_range(0.0..=region.c_max());
        x[2 * k + 1] = rng.random_range(0.0..=region.d_max());
    }
    for k in 0..n {
        // log of unit exponentials: softmax gives Dirichlet(1) weights
        let e: f64 = Exp1.sample(rng);
        x[2 * n + k] = e.max(1e-300).ln().max(-LOGIT_BOUND);
    }
    x
}

fn heuristic_position(
    layout: &Layout,
    region: &DesignRegion,
    hints: &[DoseCombination],
    variant: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = layout.n;
    let mut pool: Vec<DoseCombination> = Vec::new();
    if variant % 2 == 1 && !hints.is_empty() {
        pool.extend_from_slice(hints);
        pool.extend(region.corners());
    } else {
        let s = ((n as f64).sqrt().ceil() as usize).max(2);
        let grid = GridSpec::square(s + (variant / 2) % 2).expect("grid size is at least 2");
        pool.extend(grid.nodes(region));
    }
    let mut x = vec![0.0; 3 * n];
    for k in 0..n {
        let pt = pool[rng.random_range(0..pool.len())];
        x[2 * k] = pt.c;
        x[2 * k + 1] = pt.d;
        x[2 * n + k] = 0.0;
    }
    x
}

/// Runs the swarm, prunes the best design and certifies it.
pub fn optimize_design(problem: &OptimProblem, pso: &PsoConfig) -> Result<OptimResult> {
    optimize_design_with(problem, pso, &Sequential)
}

pub fn optimize_design_with<E: Evaluator>(problem: &OptimProblem, pso: &PsoConfig, evaluator: &E) -> Result<OptimResult> {
    pso.validate()?;
    let region = problem.region;
    let layout = Layout::new(&region, problem.n_points);
    let hints = problem.objective.hints();
    let dim = layout.dim();
    let mut trace = Vec::with_capacity(pso.restarts * (pso.iterations + 1));
    let mut global: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0usize;
    let mut step = 0usize;
    let score_all = |positions: &[Vec<f64>], evaluations: &mut usize| -> Vec<f64> {
        let designs: Vec<Design> = positions.iter().map(|x| decode(x, layout.n)).collect();
        *evaluations += designs.len();
        evaluator
            .scores(&problem.objective, &designs)
            .into_iter()
            .map(|v| if v.is_nan() { f64::INFINITY } else { v })
            .collect()
    };

    for restart in 0..pso.restarts {
        let mut rngs: Vec<ChaCha8Rng> = (0..pso.swarm_size)
            .map(|p| seed::stream(seed::mix(&[pso.seed, restart as u64, p as u64])))
            .collect();
        let mut positions: Vec<Vec<f64>> = (0..pso.swarm_size)
            .map(|p| {
                if p < pso.swarm_size / 2 {
                    random_position(&layout, &region, &mut rngs[p])
                } else {
                    heuristic_position(&layout, &region, &hints, p, &mut rngs[p])
                }
            })
            .collect();
        let mut scores = score_all(&positions, &mut evaluations);
        for attempt in 0..REPAIR_ATTEMPTS {
            let bad: Vec<usize> = (0..positions.len()).filter(|&p| scores[p].is_infinite()).collect();
            if bad.is_empty() {
                break;
            }
            for &p in &bad {
                positions[p] = random_position(&layout, &region, &mut rngs[p]);
            }
            let batch: Vec<Vec<f64>> = bad.iter().map(|&p| positions[p].clone()).collect();
            let fresh = score_all(&batch, &mut evaluations);
            for (&p, v) in bad.iter().zip(fresh) {
                scores[p] = v;
            }
            if attempt + 1 == REPAIR_ATTEMPTS && scores.iter().all(|v| v.is_infinite()) && global.is_none() {
                return Err(Error::NoFeasibleDesign);
            }
        }
        if scores.iter().all(|v| v.is_infinite()) && global.is_none() {
            return Err(Error::NoFeasibleDesign);
        }
        let velocities: Vec<Vec<f64>> = rngs
            .iter_mut()
            .map(|rng| {
                (0..dim)
                    .map(|i| rng.random_range(-1.0..1.0) * 0.1 * layout.vmax[i])
                    .collect()
            })
            .collect();
        let mut swarm = Swarm {
            best_positions: positions.clone(),
            best_scores: scores.clone(),
            positions,
            velocities,
            rngs,
        };
        let update_global = |swarm: &Swarm, global: &mut Option<(Vec<f64>, f64)>| {
            for p in 0..swarm.best_scores.len() {
                let v = swarm.best_scores[p];
                let better = match global {
                    Some((_, g)) => v < *g,
                    None => v.is_finite(),
                };
                if better {
                    *global = Some((swarm.best_positions[p].clone(), v));
                }
            }
        };
        // restarts are independent searches; only the reported best is shared
        let mut local: Option<(Vec<f64>, f64)> = None;
        update_global(&swarm, &mut local);
        update_global(&swarm, &mut global);
        trace.push((step, global.as_ref().map_or(f64::INFINITY, |g| g.1)));

        for _ in 0..pso.iterations {
            step += 1;
            let gbest = local.as_ref().map(|g| g.0.clone()).unwrap_or_else(|| swarm.positions[0].clone());
            for p in 0..pso.swarm_size {
                let rng = &mut swarm.rngs[p];
                let x = &mut swarm.positions[p];
                let v = &mut swarm.velocities[p];
                let pb = &swarm.best_positions[p];
                for i in 0..dim {
                    let r1: f64 = rng.random();
                    let r2: f64 = rng.random();
                    let vi = pso.inertia * v[i]
                        + pso.cognitive * r1 * (pb[i] - x[i])
                        + pso.social * r2 * (gbest[i] - x[i]);
                    v[i] = vi.clamp(-layout.vmax[i], layout.vmax[i]);
                    x[i] += v[i];
                }
                layout.clamp(x);
                free_duplicates(x, layout.n, pso.merge_tol.max(DISTINCT_TOL), &region, rng);
            }
            let scores = score_all(&swarm.positions, &mut evaluations);
            for (p, v) in scores.into_iter().enumerate() {
                if v < swarm.best_scores[p] {
                    swarm.best_scores[p] = v;
                    swarm.best_positions[p] = swarm.positions[p].clone();
                }
            }
            update_global(&swarm, &mut local);
            update_global(&swarm, &mut global);
            trace.push((step, global.as_ref().map_or(f64::INFINITY, |g| g.1)));
        }
    }

    let (best, _) = global.ok_or(Error::NoFeasibleDesign)?;
    let raw = decode(&best, layout.n);
    let design = prune_design(&raw, pso.merge_tol, pso.weight_floor, |d| problem.objective.score(d));
    let criterion_value = problem.objective.value(&design)?;
    let report = problem.objective.report(&design, &region)?;
    let certified = report.elb >= pso.certify_threshold;
    Ok(OptimResult {
        design,
        criterion_value,
        report,
        trace,
        certified,
        evaluations,
    })
}

/// Merges close points and drops light ones, undoing any step that moves
/// the criterion by more than 0.1%.
pub fn prune_design<F: Fn(&Design) -> f64>(design: &Design, merge_tol: f64, weight_floor: f64, criterion: F) -> Design {
    let base = criterion(design);
    let acceptable = |candidate: &Design| {
        let v = criterion(candidate);
        if base.is_finite() {
            v.is_finite() && (v - base).abs() <= PRUNE_TOLERANCE * base.abs()
        } else {
            true
        }
    };
    let mut current = design.clone();
    if merge_tol > 0.0 {
        let (p, w) = merge_points(current.points(), current.weights(), merge_tol);
        if p.len() < current.len() {
            if let Ok(candidate) = Design::normalized(p, w) {
                if acceptable(&candidate) {
                    current = candidate;
                }
            }
        }
    }
    if weight_floor > 0.0 && current.weights().iter().any(|&w| w < weight_floor) {
        let keep: Vec<usize> = (0..current.len()).filter(|&i| current.weights()[i] >= weight_floor).collect();
        if !keep.is_empty() {
            let p = keep.iter().map(|&i| current.points()[i]).collect();
            let w = keep.iter().map(|&i| current.weights()[i]).collect();
            if let Ok(candidate) = Design::normalized(p, w) {
                if acceptable(&candidate) {
                    current = candidate;
                }
            }
        }
    }
    current
}
