use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::model::ComponentClass;
use crate::tuning::TuningVariant;

/// Penalty weights for one component. The solver applies `a0 * lambda` to the
/// empirical norm and `a0 * rho` to the seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentPenalty {
    pub class: ComponentClass,
    pub lambda: f64,
    pub rho: f64,
    pub w: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanSource {
    /// Produced by the tuning schedules: `lambda = c1 (gamma + nu)`, `rho = lambda w`.
    Tuned(TuningVariant),
    /// Penalties given directly.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPlan {
    pub components: Vec<ComponentPenalty>,
    pub c1: f64,
    pub epsilon: f64,
    pub a0: f64,
    pub q: f64,
    pub b0star: f64,
    pub nu: f64,
    /// `p / epsilon`, recorded to document the log domain of `nu`.
    pub p_over_epsilon: f64,
    pub source: PlanSource,
}

impl PenaltyPlan {
    /// Same `(lambda, rho)` for every component.
    pub fn manual(classes: Vec<ComponentClass>, lambda: f64, rho: f64, a0: f64) -> Result<Self> {
        let p = classes.len();
        Self::manual_per_component(classes, vec![lambda; p], vec![rho; p], a0)
    }

    pub fn manual_per_component(classes: Vec<ComponentClass>, lambdas: Vec<f64>, rhos: Vec<f64>, a0: f64) -> Result<Self> {
        ensure_len("lambdas", classes.len(), lambdas.len())?;
        ensure_len("rhos", classes.len(), rhos.len())?;
        let components = classes
            .into_iter()
            .zip(lambdas.into_iter().zip(rhos))
            .map(|(class, (lambda, rho))| ComponentPenalty {
                class,
                lambda,
                rho,
                w: if lambda > 0.0 { rho / lambda } else { 0.0 },
                gamma: 0.0,
            })
            .collect();
        let plan = Self {
            components,
            c1: 1.0,
            epsilon: 0.0,
            a0,
            q: 0.0,
            b0star: 0.0,
            nu: 0.0,
            p_over_epsilon: 0.0,
            source: PlanSource::Manual,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn classes(&self) -> Vec<ComponentClass> {
        self.components.iter().map(|c| c.class).collect()
    }

    pub fn effective_lambda(&self, j: usize) -> f64 {
        self.a0 * self.components[j].lambda
    }

    pub fn effective_rho(&self, j: usize) -> f64 {
        self.a0 * self.components[j].rho
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0) || !self.a0.is_finite() {
            return Err(invalid(format!("a0 must be positive, got {}", self.a0)));
        }
        for (j, c) in self.components.iter().enumerate() {
            if !(c.lambda >= 0.0 && c.lambda.is_finite()) || !(c.rho >= 0.0 && c.rho.is_finite()) {
                return Err(invalid(format!(
                    "component {j}: penalties must be finite and nonnegative (lambda {}, rho {})",
                    c.lambda, c.rho
                )));
            }
        }
        Ok(())
    }

    /// Largest relative deviation from `lambda = c1 (gamma + nu)` and
    /// `rho = lambda w`; `None` for manual plans.
    pub fn consistency_error(&self) -> Option<f64> {
        if self.source == PlanSource::Manual {
            return None;
        }
        let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        Some(self.components.iter().fold(0.0f64, |acc, c| {
            acc.max(rel(c.lambda, self.c1 * (c.gamma + self.nu)))
                .max(rel(c.rho, c.lambda * c.w))
        }))
    }
}
