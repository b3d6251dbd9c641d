//! Monotherapy dose-response functions and the two-substance interaction surface
//!
//! `η(c, d) = θ0 + η_C(c) + η_D(d) + γ η_C(c) η_D(d)`
//!
//! Every monotherapy curve vanishes at dose zero; the placebo level lives in
//! `θ0`. Parameters are flattened as `(θ0, θ_C, θ_D, γ)` everywhere.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseCombination {
    pub c: f64,
    pub d: f64,
}

impl DoseCombination {
    pub const fn new(c: f64, d: f64) -> Self {
        DoseCombination { c, d }
    }

    pub fn distance(&self, other: &DoseCombination) -> f64 {
        (self.c - other.c).hypot(self.d - other.d)
    }

    pub fn is_valid(&self) -> bool {
        valid_dose(self.c) && valid_dose(self.d)
    }

    pub fn transposed(&self) -> Self {
        DoseCombination::new(self.d, self.c)
    }
}

fn valid_dose(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// The rectangle `[0, c_max] × [0, d_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRegion {
    c_max: f64,
    d_max: f64,
}

impl DesignRegion {
    pub fn new(c_max: f64, d_max: f64) -> Result<Self> {
        if !(c_max > 0.0 && c_max.is_finite()) || !(d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::param(format!(
                "region bounds must be positive and finite, got ({c_max}, {d_max})"
            )));
        }
        Ok(DesignRegion { c_max, d_max })
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn diagonal(&self) -> f64 {
        self.c_max.hypot(self.d_max)
    }

    pub fn contains(&self, x: &DoseCombination) -> bool {
        let slack_c = 1e-12 * self.c_max;
        let slack_d = 1e-12 * self.d_max;
        x.c >= -slack_c && x.c <= self.c_max + slack_c && x.d >= -slack_d && x.d <= self.d_max + slack_d
    }

    pub fn clamp(&self, x: DoseCombination) -> DoseCombination {
        DoseCombination::new(x.c.clamp(0.0, self.c_max), x.d.clamp(0.0, self.d_max))
    }

    pub fn corners(&self) -> [DoseCombination; 4] {
        [
            DoseCombination::new(0.0, 0.0),
            DoseCombination::new(self.c_max, 0.0),
            DoseCombination::new(0.0, self.d_max),
            DoseCombination::new(self.c_max, self.d_max),
        ]
    }

    pub fn transposed(&self) -> Self {
        DesignRegion {
            c_max: self.d_max,
            d_max: self.c_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MonoKind {
    Linear,
    Exponential,
    Emax,
    SigmoidEmax,
}

impl MonoKind {
    pub const ALL: [MonoKind; 4] = [
        MonoKind::Linear,
        MonoKind::Exponential,
        MonoKind::Emax,
        MonoKind::SigmoidEmax,
    ];

    pub fn param_count(self) -> usize {
        match self {
            MonoKind::Linear => 1,
            MonoKind::Exponential | MonoKind::Emax => 2,
            MonoKind::SigmoidEmax => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MonoKind::Linear => "linear",
            MonoKind::Exponential => "exponential",
            MonoKind::Emax => "emax",
            MonoKind::SigmoidEmax => "sigmoid_emax",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        MonoKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// One-substance dose-response curve with `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonoModel {
    /// `δ d`
    Linear { delta: f64 },
    /// `E1 (exp(d / δ) - 1)`
    Exponential { e1: f64, delta: f64 },
    /// `Emax d / (ED50 + d)`
    Emax { emax: f64, ed50: f64 },
    /// `Emax d^h / (ED50^h + d^h)`
    SigmoidEmax { emax: f64, ed50: f64, hill: f64 },
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be finite, got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive, got {v}")))
    }
}

impl MonoModel {
    pub fn linear(delta: f64) -> Result<Self> {
        finite("delta", delta)?;
        Ok(MonoModel::Linear { delta })
    }

    pub fn exponential(e1: f64, delta: f64) -> Result<Self> {
        finite("e1", e1)?;
        finite("delta", delta)?;
        if delta == 0.0 {
            return Err(Error::param("exponential delta must be non-zero"));
        }
        Ok(MonoModel::Exponential { e1, delta })
    }

    pub fn emax(emax: f64, ed50: f64) -> Result<Self> {
        finite("emax", emax)?;
        positive("ed50", ed50)?;
        Ok(MonoModel::Emax { emax, ed50 })
    }

    pub fn sigmoid_emax(emax: f64, ed50: f64, hill: f64) -> Result<Self> {
        finite("emax", emax)?;
        positive("ed50", ed50)?;
        positive("hill", hill)?;
        Ok(MonoModel::SigmoidEmax { emax, ed50, hill })
    }

    pub fn from_params(kind: MonoKind, params: &[f64]) -> Result<Self> {
        if params.len() != kind.param_count() {
            return Err(Error::param(format!(
                "{} takes {} parameters, got {}",
                kind.name(),
                kind.param_count(),
                params.len()
            )));
        }
        match kind {
            MonoKind::Linear => Self::linear(params[0]),
            MonoKind::Exponential => Self::exponential(params[0], params[1]),
            MonoKind::Emax => Self::emax(params[0], params[1]),
            MonoKind::SigmoidEmax => Self::sigmoid_emax(params[0], params[1], params[2]),
        }
    }

    pub fn kind(&self) -> MonoKind {
        match self {
            MonoModel::Linear { .. } => MonoKind::Linear,
            MonoModel::Exponential { .. } => MonoKind::Exponential,
            MonoModel::Emax { .. } => MonoKind::Emax,
            MonoModel::SigmoidEmax { .. } => MonoKind::SigmoidEmax,
        }
    }

    pub fn param_count(&self) -> usize {
        self.kind().param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            MonoModel::Linear { delta } => vec![delta],
            MonoModel::Exponential { e1, delta } => vec![e1, delta],
            MonoModel::Emax { emax, ed50 } => vec![emax, ed50],
            MonoModel::SigmoidEmax { emax, ed50, hill } => vec![emax, ed50, hill],
        }
    }

    /// Indices (within this model's parameters) that must stay positive.
    pub fn positive_params(&self) -> &'static [usize] {
        match self.kind() {
            MonoKind::Linear | MonoKind::Exponential => &[],
            MonoKind::Emax => &[1],
            MonoKind::SigmoidEmax => &[1, 2],
        }
    }

    pub fn eval(&self, dose: f64) -> Result<f64> {
        if !valid_dose(dose) {
            return Err(Error::InvalidDose(dose));
        }
        Ok(self.value(dose))
    }

    /// Unchecked evaluation; `dose` must be finite and non-negative.
    #[inline]
    pub(crate) fn value(&self, dose: f64) -> f64 {
        match *self {
            MonoModel::Linear { delta } => delta * dose,
            MonoModel::Exponential { e1, delta } => e1 * (dose / delta).exp_m1(),
            MonoModel::Emax { emax, ed50 } => emax * dose / (ed50 + dose),
            MonoModel::SigmoidEmax { emax, ed50, hill } => emax * hill_fraction(dose, ed50, hill),
        }
    }

    /// `∂f/∂θ_f` at `dose`.
    pub fn gradient(&self, dose: f64) -> Result<Vec<f64>> {
        if !valid_dose(dose) {
            return Err(Error::InvalidDose(dose));
        }
        let mut out = vec![0.0; self.param_count()];
        self.gradient_into(dose, &mut out);
        Ok(out)
    }

    /// Unchecked gradient, written to `out[..param_count]`.
    #[inline]
    pub(crate) fn gradient_into(&self, dose: f64, out: &mut [f64]) {
        match *self {
            MonoModel::Linear { .. } => out[0] = dose,
            MonoModel::Exponential { e1, delta } => {
                let z = dose / delta;
                out[0] = z.exp_m1();
                out[1] = -e1 * z.exp() * z / delta;
            }
            MonoModel::Emax { emax, ed50 } => {
                let den = ed50 + dose;
                out[0] = dose / den;
                out[1] = -emax * dose / (den * den);
            }
            MonoModel::SigmoidEmax { emax, ed50, hill } => {
                if dose == 0.0 {
                    out[0] = 0.0;
                    out[1] = 0.0;
                    out[2] = 0.0;
                    return;
                }
                let r = hill_fraction(dose, ed50, hill);
                let rr = r * (1.0 - r);
                out[0] = r;
                out[1] = -emax * rr * hill / ed50;
                out[2] = emax * rr * (dose / ed50).ln();
            }
        }
    }
}

/// `d^h / (e^h + d^h)` evaluated as `1 / (1 + (e/d)^h)`; zero at `d = 0`.
#[inline]
fn hill_fraction(dose: f64, ed50: f64, hill: f64) -> f64 {
    if dose == 0.0 {
        0.0
    } else {
        1.0 / (1.0 + (ed50 / dose).powf(hill))
    }
}

/// The combination response surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceModel {
    pub theta0: f64,
    pub model_c: MonoModel,
    pub model_d: MonoModel,
    pub gamma: f64,
}

impl SurfaceModel {
    pub fn new(theta0: f64, model_c: MonoModel, model_d: MonoModel, gamma: f64) -> Result<Self> {
        finite("theta0", theta0)?;
        finite("gamma", gamma)?;
        Ok(SurfaceModel {
            theta0,
            model_c,
            model_d,
            gamma,
        })
    }

    pub fn param_count(&self) -> usize {
        2 + self.model_c.param_count() + self.model_d.param_count()
    }

    /// Flattened `(θ0, θ_C, θ_D, γ)`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.push(self.theta0);
        p.extend(self.model_c.params());
        p.extend(self.model_d.params());
        p.push(self.gamma);
        p
    }

    /// Same model shape with a new flattened parameter vector.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.param_count() {
            return Err(Error::param(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mc = self.model_c.param_count();
        let md = self.model_d.param_count();
        let model_c = MonoModel::from_params(self.model_c.kind(), &params[1..1 + mc])?;
        let model_d = MonoModel::from_params(self.model_d.kind(), &params[1 + mc..1 + mc + md])?;
        SurfaceModel::new(params[0], model_c, model_d, params[1 + mc + md])
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        SurfaceModel::new(self.theta0, self.model_c, self.model_d, gamma)
    }

    /// Indices into the flattened vector that must stay positive.
    pub fn positive_params(&self) -> Vec<usize> {
        let mc = self.model_c.param_count();
        let mut out: Vec<usize> = self.model_c.positive_params().iter().map(|i| 1 + i).collect();
        out.extend(self.model_d.positive_params().iter().map(|i| 1 + mc + i));
        out
    }

    pub fn same_shape(&self, other: &SurfaceModel) -> bool {
        self.model_c.kind() == other.model_c.kind() && self.model_d.kind() == other.model_d.kind()
    }

    /// Exchanges the roles of the two substances.
    pub fn swapped(&self) -> Self {
        SurfaceModel {
            theta0: self.theta0,
            model_c: self.model_d,
            model_d: self.model_c,
            gamma: self.gamma,
        }
    }

    pub fn eval(&self, x: DoseCombination) -> Result<f64> {
        if !x.is_valid() {
            return Err(Error::InvalidDose(if valid_dose(x.c) { x.d } else { x.c }));
        }
        Ok(self.value(x))
    }

    #[inline]
    pub(crate) fn value(&self, x: DoseCombination) -> f64 {
        let ec = self.model_c.value(x.c);
        let ed = self.model_d.value(x.d);
        self.theta0 + ec + ed + self.gamma * ec * ed
    }

    pub fn gradient(&self, x: DoseCombination) -> Result<Vec<f64>> {
        if !x.is_valid() {
            return Err(Error::InvalidDose(if valid_dose(x.c) { x.d } else { x.c }));
        }
        let mut g = vec![0.0; self.param_count()];
        self.gradient_into(x, &mut g);
        Ok(g)
    }

    /// Unchecked gradient into `out[..param_count]`.
    #[inline]
    pub(crate) fn gradient_into(&self, x: DoseCombination, out: &mut [f64]) {
        let mc = self.model_c.param_count();
        let md = self.model_d.param_count();
        let ec = self.model_c.value(x.c);
        let ed = self.model_d.value(x.d);
        out[0] = 1.0;
        self.model_c.gradient_into(x.c, &mut out[1..1 + mc]);
        let fc = 1.0 + self.gamma * ed;
        for v in &mut out[1..1 + mc] {
            *v *= fc;
        }
        self.model_d.gradient_into(x.d, &mut out[1 + mc..1 + mc + md]);
        let fd = 1.0 + self.gamma * ec;
        for v in &mut out[1 + mc..1 + mc + md] {
            *v *= fd;
        }
        out[1 + mc + md] = ec * ed;
    }
}
