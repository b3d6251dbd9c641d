//! Problem configuration files.
//!
//! A configuration is a JSON document with a required `model` and `region`
//! block and optional `criterion`, `prior`, `optimizer`, `confidence` and
//! `simulation` blocks. Unknown keys are rejected. Every default that gets
//! filled in is recorded in [`ProblemConfig::defaults`] and logged.

use std::fmt;
use std::path::Path;

use meddesign_core::criteria::MeasureSettings;
use meddesign_core::{
    BayesianCriterion, ConfidenceConfig, DesignRegion, GridSpec, MedCriterion, MonoKind, MonoModel, Objective,
    PsoConfig, Prior, Scenario, SimConfig, SurfaceModel,
};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {reason}")]
pub struct ConfigError {
    /// Dotted path of the offending field, `.` for the whole document.
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, reason: impl fmt::Display) -> Self {
        ConfigError {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    region: RawRegion,
    #[serde(default)]
    criterion: RawCriterion,
    prior: Option<RawPrior>,
    #[serde(default)]
    optimizer: RawOptimizer,
    confidence: Option<RawConfidence>,
    simulation: Option<RawSimulation>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMono {
    kind: String,
    params: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    theta0: f64,
    mono_c: RawMono,
    mono_d: RawMono,
    gamma: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    c_max: f64,
    d_max: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCriterion {
    objective: Option<String>,
    q: Option<f64>,
    levels: Option<Vec<f64>>,
    contour_grid: Option<[usize; 2]>,
    verification_grid: Option<[usize; 2]>,
    atoms_per_level: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    gammas: Option<Vec<f64>>,
    thetas: Option<Vec<Vec<f64>>>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    n_points: Option<usize>,
    swarm_size: Option<usize>,
    iterations: Option<usize>,
    inertia: Option<f64>,
    cognitive: Option<f64>,
    social: Option<f64>,
    seed: Option<u64>,
    restarts: Option<usize>,
    merge_tol: Option<f64>,
    weight_floor: Option<f64>,
    certify_threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfidence {
    alpha: Option<f64>,
    sigma_hat: f64,
    n_total: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    name: Option<String>,
    sigma: f64,
    n_totals: Option<Vec<usize>>,
    reps: Option<usize>,
    seed: Option<u64>,
    fit_grid: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Med,
    D,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::Med => "med",
            ObjectiveKind::D => "d",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSettings {
    pub objective: ObjectiveKind,
    pub q: f64,
    pub levels: Vec<f64>,
    pub measure: MeasureSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub pso: PsoConfig,
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub name: String,
    pub sigma: f64,
    pub n_totals: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub fit_grid: GridSpec,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub model: SurfaceModel,
    pub region: DesignRegion,
    pub criterion: CriterionSettings,
    pub prior: Option<Prior>,
    pub optimizer: OptimizerSettings,
    pub confidence: Option<ConfidenceConfig>,
    pub simulation: Option<SimulationSettings>,
    /// `(field, value)` for every default that was applied.
    pub defaults: Vec<(String, String)>,
}

pub const DEFAULT_N_TOTALS: [usize; 5] = [27, 36, 45, 90, 152];
pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

struct Defaults(Vec<(String, String)>);

impl Defaults {
    fn take<T: fmt::Debug>(&mut self, field: &str, given: Option<T>, default: T) -> T {
        given.unwrap_or_else(|| {
            self.0.push((field.to_string(), format!("{default:?}").trim_matches('"').to_string()));
            default
        })
    }
}

fn mono(raw: &RawMono, path: &str) -> Result<MonoModel, ConfigError> {
    let kind = MonoKind::from_name(&raw.kind).ok_or_else(|| {
        ConfigError::new(
            format!("{path}.kind"),
            format!(
                "unknown kind {:?} (expected linear, exponential, emax or sigmoid_emax)",
                raw.kind
            ),
        )
    })?;
    MonoModel::from_params(kind, &raw.params).map_err(|e| ConfigError::new(format!("{path}.params"), e))
}

fn grid(dims: [usize; 2], path: &str) -> Result<GridSpec, ConfigError> {
    GridSpec::new(dims[0], dims[1]).map_err(|e| ConfigError::new(path, e))
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<ProblemConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(path, e.into_inner())
    })?;
    let mut defaults = Defaults(Vec::new());

    let model_c = mono(&raw.model.mono_c, "model.mono_c")?;
    let model_d = mono(&raw.model.mono_d, "model.mono_d")?;
    let model = SurfaceModel::new(raw.model.theta0, model_c, model_d, raw.model.gamma)
        .map_err(|e| ConfigError::new("model", e))?;
    let region = DesignRegion::new(raw.region.c_max, raw.region.d_max).map_err(|e| ConfigError::new("region", e))?;

    let c = raw.criterion;
    let objective = match defaults.take("criterion.objective", c.objective, "med".to_string()).as_str() {
        "med" => ObjectiveKind::Med,
        "d" => ObjectiveKind::D,
        other => {
            return Err(ConfigError::new(
                "criterion.objective",
                format!("unknown objective {other:?} (expected med or d)"),
            ))
        }
    };
    let q = defaults.take("criterion.q", c.q, 2.0);
    if !(q >= 1.0 && q.is_finite()) {
        return Err(ConfigError::new("criterion.q", format!("q must be finite and at least 1, got {q}")));
    }
    let levels = match c.levels {
        Some(l) => l,
        None if objective == ObjectiveKind::D => Vec::new(),
        None => return Err(ConfigError::new("criterion.levels", "missing field (required for the med objective)")),
    };
    if objective == ObjectiveKind::Med && levels.is_empty() {
        return Err(ConfigError::new("criterion.levels", "at least one level is required"));
    }
    if let Some(p) = levels.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
        return Err(ConfigError::new("criterion.levels", format!("levels must lie in (0, 100), got {p}")));
    }
    let dflt = MeasureSettings::default();
    let measure = MeasureSettings {
        contour_grid: grid(
            defaults.take("criterion.contour_grid", c.contour_grid, [dflt.contour_grid.nc(), dflt.contour_grid.nd()]),
            "criterion.contour_grid",
        )?,
        atoms_per_level: defaults.take("criterion.atoms_per_level", c.atoms_per_level, dflt.atoms_per_level),
        verification_grid: grid(
            defaults.take(
                "criterion.verification_grid",
                c.verification_grid,
                [dflt.verification_grid.nc(), dflt.verification_grid.nd()],
            ),
            "criterion.verification_grid",
        )?,
    };
    if measure.atoms_per_level == 0 {
        return Err(ConfigError::new("criterion.atoms_per_level", "must be positive"));
    }

    let prior = match raw.prior {
        None => None,
        Some(p) => {
            if objective == ObjectiveKind::D {
                return Err(ConfigError::new("prior", "a prior is only supported with the med objective"));
            }
            Some(prior(p, &model, &mut defaults)?)
        }
    };

    let o = raw.optimizer;
    let base = PsoConfig::default();
    let pso = PsoConfig {
        swarm_size: defaults.take("optimizer.swarm_size", o.swarm_size, base.swarm_size),
        iterations: defaults.take("optimizer.iterations", o.iterations, base.iterations),
        inertia: defaults.take("optimizer.inertia", o.inertia, base.inertia),
        cognitive: defaults.take("optimizer.cognitive", o.cognitive, base.cognitive),
        social: defaults.take("optimizer.social", o.social, base.social),
        seed: defaults.take("optimizer.seed", o.seed, base.seed),
        restarts: defaults.take("optimizer.restarts", o.restarts, base.restarts),
        merge_tol: defaults.take("optimizer.merge_tol", o.merge_tol, base.merge_tol),
        weight_floor: defaults.take("optimizer.weight_floor", o.weight_floor, base.weight_floor),
        certify_threshold: defaults.take("optimizer.certify_threshold", o.certify_threshold, base.certify_threshold),
    };
    pso.validate().map_err(|e| ConfigError::new("optimizer", e))?;
    if o.n_points == Some(0) {
        return Err(ConfigError::new("optimizer.n_points", "must be at least 1"));
    }

    let confidence = match raw.confidence {
        None => None,
        Some(cf) => {
            let alpha = defaults.take("confidence.alpha", cf.alpha, DEFAULT_ALPHA);
            Some(ConfidenceConfig::new(alpha, cf.sigma_hat, cf.n_total).map_err(|e| ConfigError::new("confidence", e))?)
        }
    };

    let simulation = match raw.simulation {
        None => None,
        Some(s) => {
            if !(s.sigma > 0.0 && s.sigma.is_finite()) {
                return Err(ConfigError::new("simulation.sigma", format!("must be positive, got {}", s.sigma)));
            }
            if levels.is_empty() {
                return Err(ConfigError::new("criterion.levels", "the simulation scores contours at these levels"));
            }
            let n_totals = defaults.take("simulation.n_totals", s.n_totals, DEFAULT_N_TOTALS.to_vec());
            if n_totals.is_empty() || n_totals.contains(&0) {
                return Err(ConfigError::new("simulation.n_totals", "sample sizes must be positive"));
            }
            let reps = defaults.take("simulation.reps", s.reps, DEFAULT_REPS);
            if reps == 0 {
                return Err(ConfigError::new("simulation.reps", "must be at least 1"));
            }
            Some(SimulationSettings {
                name: defaults.take("simulation.name", s.name, "study".to_string()),
                sigma: s.sigma,
                n_totals,
                reps,
                seed: defaults.take("simulation.seed", s.seed, 1),
                fit_grid: grid(
                    defaults.take("simulation.fit_grid", s.fit_grid, [GridSpec::CONTOUR.nc(), GridSpec::CONTOUR.nd()]),
                    "simulation.fit_grid",
                )?,
            })
        }
    };

    Ok(ProblemConfig {
        model,
        region,
        criterion: CriterionSettings {
            objective,
            q,
            levels,
            measure,
        },
        prior,
        optimizer: OptimizerSettings {
            pso,
            n_points: o.n_points,
        },
        confidence,
        simulation,
        defaults: defaults.0,
    })
}

fn prior(p: RawPrior, model: &SurfaceModel, defaults: &mut Defaults) -> Result<Prior, ConfigError> {
    let models: Vec<SurfaceModel> = match (p.gammas, p.thetas) {
        (Some(g), None) => g
            .iter()
            .enumerate()
            .map(|(i, &g)| model.with_gamma(g).map_err(|e| ConfigError::new(format!("prior.gammas[{i}]"), e)))
            .collect::<Result<_, _>>()?,
        (None, Some(t)) => t
            .iter()
            .enumerate()
            .map(|(i, th)| model.with_params(th).map_err(|e| ConfigError::new(format!("prior.thetas[{i}]"), e)))
            .collect::<Result<_, _>>()?,
        _ => return Err(ConfigError::new("prior", "exactly one of gammas or thetas is required")),
    };
    if models.is_empty() {
        return Err(ConfigError::new("prior", "the prior needs at least one support point"));
    }
    let k = models.len();
    let weights = defaults.take("prior.weights", p.weights, vec![1.0 / k as f64; k]);
    Prior::new(models, weights).map_err(|e| ConfigError::new("prior.weights", e))
}

pub fn parse_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(".", format!("{}: {e}", path.display())))?;
    let cfg = parse_config_str(&text)?;
    for (field, value) in &cfg.defaults {
        log::info!("default {field} = {value}");
    }
    Ok(cfg)
}

impl ProblemConfig {
    /// Search objective: Bayesian when a prior is given.
    pub fn objective(&self) -> meddesign_core::Result<Objective> {
        let c = &self.criterion;
        Ok(match (c.objective, &self.prior) {
            (ObjectiveKind::D, _) => Objective::D {
                model: self.model,
                verification_grid: c.measure.verification_grid,
            },
            (ObjectiveKind::Med, None) => Objective::Med(self.med_criterion()?),
            (ObjectiveKind::Med, Some(p)) => {
                Objective::Bayesian(BayesianCriterion::build(p, &self.region, &c.levels, c.q, &c.measure)?)
            }
        })
    }

    /// Local criterion at the nominal model.
    pub fn med_criterion(&self) -> meddesign_core::Result<MedCriterion> {
        let c = &self.criterion;
        MedCriterion::build(&self.model, &self.region, &c.levels, c.q, &c.measure)
    }

    pub fn scenario(&self) -> Result<(Scenario, SimConfig), ConfigError> {
        let s = self
            .simulation
            .as_ref()
            .ok_or_else(|| ConfigError::new("simulation", "missing block (required by simulate)"))?;
        let scenario = Scenario::new(s.name.clone(), self.model, self.region, self.criterion.levels.clone(), s.sigma)
            .map_err(|e| ConfigError::new("simulation", e))?;
        let mut sim = SimConfig::new(s.n_totals.clone(), s.reps, s.seed).map_err(|e| ConfigError::new("simulation", e))?;
        sim.fit_grid = s.fit_grid;
        Ok((scenario, sim))
    }

    /// Every setting after defaults, for run manifests.
    pub fn resolved(&self) -> Value {
        let mono = |m: &MonoModel| json!({"kind": m.kind().name(), "params": m.params()});
        let grid = |g: GridSpec| json!([g.nc(), g.nd()]);
        let c = &self.criterion;
        let p = &self.optimizer.pso;
        json!({
            "model": {
                "theta0": self.model.theta0,
                "mono_c": mono(&self.model.model_c),
                "mono_d": mono(&self.model.model_d),
                "gamma": self.model.gamma,
            },
            "region": {"c_max": self.region.c_max(), "d_max": self.region.d_max()},
            "criterion": {
                "objective": c.objective.as_str(),
                "q": c.q,
                "levels": c.levels,
                "contour_grid": grid(c.measure.contour_grid),
                "verification_grid": grid(c.measure.verification_grid),
                "atoms_per_level": c.measure.atoms_per_level,
            },
            "prior": self.prior.as_ref().map(|pr| json!({
                "thetas": pr.models().iter().map(|m| m.params()).collect::<Vec<_>>(),
                "weights": pr.weights(),
            })),
            "optimizer": {
                "n_points": self.optimizer.n_points,
                "swarm_size": p.swarm_size,
                "iterations": p.iterations,
                "inertia": p.inertia,
                "cognitive": p.cognitive,
                "social": p.social,
                "seed": p.seed,
                "restarts": p.restarts,
                "merge_tol": p.merge_tol,
                "weight_floor": p.weight_floor,
                "certify_threshold": p.certify_threshold,
            },
            "confidence": self.confidence.map(|cf| json!({
                "alpha": cf.alpha, "sigma_hat": cf.sigma_hat, "n_total": cf.n_total,
            })),
            "simulation": self.simulation.as_ref().map(|s| json!({
                "name": s.name,
                "sigma": s.sigma,
                "n_totals": s.n_totals,
                "reps": s.reps,
                "seed": s.seed,
                "fit_grid": grid(s.fit_grid),
            })),
        })
    }
}
