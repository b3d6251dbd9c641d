//! Contour-variance (MED_q) criterion, its sensitivity function and
//! efficiency bound, the D-criterion and the prior-averaged criterion.
//!
//! For a design ξ with information `M` and the contour measure μ with total
//! mass `l`,
//!
//! ```text
//! φ(x)  = g(x)^T M^- g(x)
//! Φ(ξ)  = ( (1/l) Σ_x μ(x) φ(x)^q )^(1/q)
//! Ψ(x0) = (1/l) Σ_x μ(x) φ(x)^(q-1) α(x0, x)^2 - Φ^q,   α = g(x)^T M^- g(x0)
//! ```
//!
//! `Ψ ≤ 0` on the region certifies optimality, and
//! `1 - max Ψ / Φ^q` bounds the efficiency from below.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::contour::{ContourMap, ContourMeasure, GridSpec};
use crate::design::{information_matrix, Design, InfoInverse};
use crate::error::{Error, Result};
use crate::linalg::{GeneralizedInverse, SymMatrix};
use crate::model::{DesignRegion, DoseCombination, SurfaceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionConfig {
    q: f64,
    measure: ContourMeasure,
    verification_grid: GridSpec,
}

impl CriterionConfig {
    pub fn new(q: f64, measure: ContourMeasure, verification_grid: GridSpec) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::param(format!("q must be a finite number >= 1, got {q}")));
        }
        Ok(CriterionConfig {
            q,
            measure,
            verification_grid,
        })
    }

    /// Builds the contour measure of `model` and wraps it.
    pub fn for_model(
        model: &SurfaceModel,
        region: &DesignRegion,
        levels: &[f64],
        q: f64,
        settings: &MeasureSettings,
    ) -> Result<Self> {
        let map = ContourMap::new(model, region, settings.contour_grid)?;
        let measure = map.measure(levels, settings.atoms_per_level)?;
        Self::new(q, measure, settings.verification_grid)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn levels(&self) -> &[f64] {
        self.measure.levels()
    }

    pub fn measure(&self) -> &ContourMeasure {
        &self.measure
    }

    pub fn verification_grid(&self) -> GridSpec {
        self.verification_grid
    }
}

/// Grid and atom settings used when a contour measure is built from a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureSettings {
    pub contour_grid: GridSpec,
    pub atoms_per_level: usize,
    pub verification_grid: GridSpec,
}

impl Default for MeasureSettings {
    fn default() -> Self {
        MeasureSettings {
            contour_grid: GridSpec::CONTOUR,
            atoms_per_level: crate::contour::DEFAULT_ATOMS_PER_LEVEL,
            verification_grid: GridSpec::VERIFICATION,
        }
    }
}

/// Outcome of an equivalence-theorem check.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub criterion_value: f64,
    /// Largest sensitivity over the verification grid and the support points.
    pub max_psi: f64,
    pub argmax: DoseCombination,
    /// Efficiency lower bound clamped to `[0, 1]`.
    pub elb: f64,
    /// The raw bound was negative and has been clamped.
    pub vacuous: bool,
    /// Sensitivity at each support point, in design order.
    pub support_residuals: Vec<f64>,
    /// The quantity `max_psi` is divided by in the bound.
    pub scale: f64,
}

impl SensitivityReport {
    fn from_scan(criterion_value: f64, scale: f64, max_psi: f64, argmax: DoseCombination, support: Vec<f64>) -> Self {
        let raw = 1.0 - max_psi.max(0.0) / scale;
        SensitivityReport {
            criterion_value,
            max_psi,
            argmax,
            elb: raw.clamp(0.0, 1.0),
            vacuous: raw < 0.0,
            support_residuals: support,
            scale,
        }
    }
}

/// Scans `psi` over the grid then the support; ties keep the first maximizer.
fn scan_max<F: FnMut(DoseCombination) -> f64>(
    region: &DesignRegion,
    grid: GridSpec,
    design: &Design,
    mut psi: F,
) -> (f64, DoseCombination, Vec<f64>) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = DoseCombination::new(0.0, 0.0);
    for i in 0..grid.nc() {
        for j in 0..grid.nd() {
            let x = grid.node(region, i, j);
            let v = psi(x);
            if v > best {
                best = v;
                arg = x;
            }
        }
    }
    let mut support = Vec::with_capacity(design.len());
    for &x in design.points() {
        let v = psi(x);
        if v > best {
            best = v;
            arg = x;
        }
        support.push(v);
    }
    (best, arg, support)
}

/// The MED_q criterion for one parameter value, with atom gradients cached.
#[derive(Debug, Clone)]
pub struct MedCriterion {
    model: SurfaceModel,
    region: DesignRegion,
    cfg: CriterionConfig,
    /// Row `k` holds `g(atom_k)`.
    grads: Vec<f64>,
    masses: Vec<f64>,
    total_mass: f64,
}

/// `Φ` together with the quantities it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub phi: Vec<f64>,
    pub inverse: InfoInverse,
}

impl MedCriterion {
    pub fn new(model: &SurfaceModel, region: &DesignRegion, cfg: CriterionConfig) -> Result<Self> {
        let m = model.param_count();
        let atoms = cfg.measure.atoms();
        let mut grads = vec![0.0; atoms.len() * m];
        for (k, a) in atoms.iter().enumerate() {
            grads[k * m..(k + 1) * m].copy_from_slice(&model.gradient(a.x)?);
        }
        let masses: Vec<f64> = atoms.iter().map(|a| a.mass).collect();
        let total_mass = masses.iter().sum();
        Ok(MedCriterion {
            model: *model,
            region: *region,
            cfg,
            grads,
            masses,
            total_mass,
        })
    }

    /// Builds the measure from the model's own contours.
    pub fn build(
        model: &SurfaceModel,
        region: &DesignRegion,
        levels: &[f64],
        q: f64,
        settings: &MeasureSettings,
    ) -> Result<Self> {
        let cfg = CriterionConfig::for_model(model, region, levels, q, settings)?;
        Self::new(model, region, cfg)
    }

    pub fn model(&self) -> &SurfaceModel {
        &self.model
    }

    pub fn region(&self) -> &DesignRegion {
        &self.region
    }

    pub fn config(&self) -> &CriterionConfig {
        &self.cfg
    }

    pub fn q(&self) -> f64 {
        self.cfg.q
    }

    fn dim(&self) -> usize {
        self.model.param_count()
    }

    fn grad(&self, k: usize) -> &[f64] {
        let m = self.dim();
        &self.grads[k * m..(k + 1) * m]
    }

    fn aggregate(&self, phi: &[f64]) -> f64 {
        let q = self.cfg.q;
        let mut s = 0.0;
        for (p, w) in phi.iter().zip(&self.masses) {
            s += w * if q == 1.0 { *p } else { p.powf(q) };
        }
        let mean = s / self.total_mass;
        if q == 1.0 {
            mean
        } else {
            mean.powf(1.0 / q)
        }
    }

    pub fn evaluate(&self, design: &Design) -> Result<Evaluation> {
        let inverse = information_matrix(design, &self.model)?.inverse();
        let atoms = self.cfg.measure.atoms();
        let mut phi = Vec::with_capacity(atoms.len());
        for (k, a) in atoms.iter().enumerate() {
            phi.push(inverse.variance(self.grad(k), a.x)?);
        }
        let value = self.aggregate(&phi);
        Ok(Evaluation { value, phi, inverse })
    }

    /// `Φ(ξ)`; a range error names the first atom the design cannot estimate.
    pub fn value(&self, design: &Design) -> Result<f64> {
        Ok(self.evaluate(design)?.value)
    }

    /// Search objective: `Φ` for nonsingular information, `+∞` otherwise.
    pub fn objective(&self, design: &Design) -> f64 {
        let Ok(info) = information_matrix(design, &self.model) else {
            return f64::INFINITY;
        };
        let ginv = GeneralizedInverse::new(info.matrix());
        if !ginv.is_full_rank() {
            return f64::INFINITY;
        }
        let n = self.masses.len();
        let mut phi = vec![0.0; n];
        for (k, p) in phi.iter_mut().enumerate() {
            *p = ginv.quad(self.grad(k)).max(0.0);
        }
        let v = self.aggregate(&phi);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    /// `B = (1/l) Σ μ(x) g(x) g(x)^T`, so that `Φ = tr(M^- B)` for `q = 1`.
    pub fn contour_moment(&self) -> SymMatrix {
        let mut b = SymMatrix::zeros(self.dim());
        for (k, w) in self.masses.iter().enumerate() {
            b.add_outer(w / self.total_mass, self.grad(k));
        }
        b
    }

    pub fn sensitivity(&self, design: &Design) -> Result<Sensitivity<'_>> {
        let eval = self.evaluate(design)?;
        let m = self.dim();
        let q = self.cfg.q;
        let mut a = SymMatrix::zeros(m);
        let g = eval.inverse.generalized();
        for (k, w) in self.masses.iter().enumerate() {
            let wk = g.apply(self.grad(k));
            let coef = if q == 1.0 { 1.0 } else { eval.phi[k].powf(q - 1.0) };
            a.add_outer(w * coef / self.total_mass, &wk);
        }
        let phi_q = if q == 1.0 { eval.value } else { eval.value.powf(q) };
        Ok(Sensitivity {
            criterion: self,
            a,
            phi_q,
            value: eval.value,
            scratch: vec![0.0; m],
        })
    }

    /// `Ψ(ξ, x0)`
    pub fn psi(&self, design: &Design, x0: DoseCombination) -> Result<f64> {
        let g0 = self.model.gradient(x0)?;
        Ok(self.sensitivity(design)?.psi_gradient(&g0))
    }

    pub fn efficiency_lower_bound(&self, design: &Design) -> Result<SensitivityReport> {
        let mut s = self.sensitivity(design)?;
        let (value, phi_q) = (s.value, s.phi_q);
        let (max_psi, argmax, support) =
            scan_max(&self.region, self.cfg.verification_grid, design, |x| s.psi(x));
        Ok(SensitivityReport::from_scan(value, phi_q, max_psi, argmax, support))
    }

    /// `Φ(reference) / Φ(candidate)`
    pub fn efficiency_ratio(&self, candidate: &Design, reference: &Design) -> Result<f64> {
        Ok(self.value(reference)? / self.value(candidate)?)
    }
}

/// Sensitivity function of a fixed design, `Ψ(x0) = g0^T A g0 - Φ^q`.
#[derive(Debug, Clone)]
pub struct Sensitivity<'a> {
    criterion: &'a MedCriterion,
    a: SymMatrix,
    phi_q: f64,
    value: f64,
    scratch: Vec<f64>,
}

impl Sensitivity<'_> {
    pub fn criterion_value(&self) -> f64 {
        self.value
    }

    /// `Φ^q`
    pub fn scale(&self) -> f64 {
        self.phi_q
    }

    pub fn psi(&mut self, x0: DoseCombination) -> f64 {
        let mut g = core::mem::take(&mut self.scratch);
        self.criterion.model.gradient_into(x0, &mut g);
        let v = self.psi_gradient(&g);
        self.scratch = g;
        v
    }

    pub fn psi_gradient(&self, g0: &[f64]) -> f64 {
        self.a.quad_form(g0) - self.phi_q
    }
}

/// `-log det M(ξ)`
pub fn d_criterion(design: &Design, model: &SurfaceModel) -> Result<f64> {
    let info = information_matrix(design, model)?;
    GeneralizedInverse::new(info.matrix())
        .log_det()
        .map(|l| -l)
        .ok_or(Error::SingularInformation)
}

/// D-criterion certification: `d(x) = g^T M^{-1} g ≤ m` at the optimum and
/// `m / max d` bounds the D-efficiency. `max_psi` reports `max d - m`.
pub fn d_efficiency_report(
    design: &Design,
    model: &SurfaceModel,
    region: &DesignRegion,
    grid: GridSpec,
) -> Result<SensitivityReport> {
    let info = information_matrix(design, model)?;
    let ginv = GeneralizedInverse::new(info.matrix());
    let log_det = ginv.log_det().ok_or(Error::SingularInformation)?;
    let m = model.param_count() as f64;
    let mut g = vec![0.0; model.param_count()];
    let (max_d, argmax, support) = scan_max(region, grid, design, |x| {
        model.gradient_into(x, &mut g);
        ginv.quad(&g)
    });
    Ok(SensitivityReport {
        criterion_value: -log_det,
        max_psi: max_d - m,
        argmax,
        elb: (m / max_d).clamp(0.0, 1.0),
        vacuous: false,
        support_residuals: support.into_iter().map(|d| d - m).collect(),
        scale: m,
    })
}

/// Discrete prior over parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    models: Vec<SurfaceModel>,
    weights: Vec<f64>,
}

impl Prior {
    pub fn new(models: Vec<SurfaceModel>, weights: Vec<f64>) -> Result<Self> {
        if models.is_empty() || models.len() != weights.len() {
            return Err(Error::param("prior needs matching non-empty models and weights"));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::param(format!("prior weights must be positive, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("prior weights sum to {total}, not 1")));
        }
        if let Some(k) = models.iter().position(|m| !m.same_shape(&models[0])) {
            return Err(Error::param(format!("prior model {k} has a different shape")));
        }
        Ok(Prior { models, weights })
    }

    pub fn point(model: SurfaceModel) -> Self {
        Prior {
            models: vec![model],
            weights: vec![1.0],
        }
    }

    /// Interaction values `gammas` with every other parameter from `base`.
    pub fn gamma_grid(base: &SurfaceModel, gammas: &[f64], weights: &[f64]) -> Result<Self> {
        let models = gammas
            .iter()
            .map(|&g| base.with_gamma(g))
            .collect::<Result<Vec<_>>>()?;
        Prior::new(models, weights.to_vec())
    }

    pub fn models(&self) -> &[SurfaceModel] {
        &self.models
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

fn tag(index: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Prior {
        index,
        source: Box::new(e),
    }
}

/// `Σ_j π_j Φ(ξ, θ_j)`, each term with the contours of its own surface.
#[derive(Debug, Clone)]
pub struct BayesianCriterion {
    components: Vec<MedCriterion>,
    weights: Vec<f64>,
}

impl BayesianCriterion {
    pub fn new(components: Vec<MedCriterion>, weights: Vec<f64>) -> Result<Self> {
        let prior = Prior::new(components.iter().map(|c| *c.model()).collect(), weights)?;
        Ok(BayesianCriterion {
            components,
            weights: prior.weights,
        })
    }

    pub fn build(
        prior: &Prior,
        region: &DesignRegion,
        levels: &[f64],
        q: f64,
        settings: &MeasureSettings,
    ) -> Result<Self> {
        let components = prior
            .models()
            .iter()
            .enumerate()
            .map(|(j, m)| MedCriterion::build(m, region, levels, q, settings).map_err(tag(j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(BayesianCriterion {
            components,
            weights: prior.weights().to_vec(),
        })
    }

    pub fn components(&self) -> &[MedCriterion] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn region(&self) -> &DesignRegion {
        self.components[0].region()
    }

    pub fn value(&self, design: &Design) -> Result<f64> {
        let mut s = 0.0;
        for (j, (c, w)) in self.components.iter().zip(&self.weights).enumerate() {
            s += w * c.value(design).map_err(tag(j))?;
        }
        Ok(s)
    }

    pub fn objective(&self, design: &Design) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.objective(design))
            .sum()
    }

    /// Bound from the directional derivative of the prior average:
    /// `Ψ_B = Σ π_j Φ_j^(1-q) Ψ_j` and `elb = 1 - max Ψ_B / Σ π_j Φ_j`.
    pub fn efficiency_lower_bound(&self, design: &Design) -> Result<SensitivityReport> {
        let mut parts = Vec::with_capacity(self.components.len());
        for (j, c) in self.components.iter().enumerate() {
            parts.push(c.sensitivity(design).map_err(tag(j))?);
        }
        let value: f64 = parts
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * s.criterion_value())
            .sum();
        let coef: Vec<f64> = parts
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| w * s.criterion_value() / s.scale())
            .collect();
        let grid = self.components[0].config().verification_grid();
        let (max_psi, argmax, support) = scan_max(self.region(), grid, design, |x| {
            parts.iter_mut().zip(&coef).map(|(s, c)| c * s.psi(x)).sum()
        });
        Ok(SensitivityReport::from_scan(value, value, max_psi, argmax, support))
    }
}

/// `Φ(ξ)` for `model` under `cfg`.
pub fn med_q_criterion(design: &Design, model: &SurfaceModel, region: &DesignRegion, cfg: &CriterionConfig) -> Result<f64> {
    MedCriterion::new(model, region, cfg.clone())?.value(design)
}

/// `Ψ(ξ, x0)` for `model` under `cfg`.
pub fn sensitivity_psi(
    x0: DoseCombination,
    design: &Design,
    model: &SurfaceModel,
    region: &DesignRegion,
    cfg: &CriterionConfig,
) -> Result<f64> {
    MedCriterion::new(model, region, cfg.clone())?.psi(design, x0)
}

pub fn efficiency_lower_bound(
    design: &Design,
    model: &SurfaceModel,
    region: &DesignRegion,
    cfg: &CriterionConfig,
) -> Result<SensitivityReport> {
    MedCriterion::new(model, region, cfg.clone())?.efficiency_lower_bound(design)
}

pub fn efficiency_ratio(
    candidate: &Design,
    reference: &Design,
    model: &SurfaceModel,
    region: &DesignRegion,
    cfg: &CriterionConfig,
) -> Result<f64> {
    MedCriterion::new(model, region, cfg.clone())?.efficiency_ratio(candidate, reference)
}

/// `Σ_j π_j Φ(ξ, θ_j)` with one configuration per prior support point.
pub fn bayesian_criterion(
    design: &Design,
    prior: &Prior,
    region: &DesignRegion,
    cfgs: &[CriterionConfig],
) -> Result<f64> {
    if cfgs.len() != prior.len() {
        return Err(Error::param(format!(
            "{} criterion configurations for {} prior points",
            cfgs.len(),
            prior.len()
        )));
    }
    let components = prior
        .models()
        .iter()
        .zip(cfgs)
        .enumerate()
        .map(|(j, (m, c))| MedCriterion::new(m, region, c.clone()).map_err(tag(j)))
        .collect::<Result<Vec<_>>>()?;
    BayesianCriterion::new(components, prior.weights().to_vec())?.value(design)
}
