//! Serialized model documents.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::model::{evaluate_model, AdditiveFit};

pub const MODEL_FORMAT: &str = "dpam-model/1";

/// A fitted model with everything needed to predict from raw covariates and to
/// reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub columns: Vec<String>,
    pub response: String,
    /// Per-column `(min, max)` used to map raw covariates into `[0, 1]`;
    /// absent when the data were already scaled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescale: Option<Vec<(f64, f64)>>,
    pub kkt_gaps: Vec<f64>,
    /// Resolved run configuration, echoed verbatim.
    pub config: serde_json::Value,
    pub fit: AdditiveFit,
}

impl ModelDocument {
    pub fn new(
        fit: AdditiveFit,
        columns: Vec<String>,
        response: String,
        rescale: Option<Vec<(f64, f64)>>,
        kkt_gaps: Vec<f64>,
        config: serde_json::Value,
    ) -> Result<Self> {
        let doc = Self {
            format: MODEL_FORMAT.to_string(),
            columns,
            response,
            rescale,
            kkt_gaps,
            config,
            fit,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(invalid(format!("unsupported model format '{}'", self.format)));
        }
        let p = self.fit.p();
        ensure_len("model columns", p, self.columns.len())?;
        ensure_len("kkt gaps", p, self.kkt_gaps.len())?;
        if let Some(r) = &self.rescale {
            ensure_len("rescale ranges", p, r.len())?;
        }
        ensure_len("plan components", p, self.fit.plan.p())
    }

    /// Pretty JSON with a trailing newline. Floats use the shortest decimal
    /// form that parses back to the same value.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| invalid(format!("model document: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    /// Maps raw covariates to the fitted scale.
    pub fn scale_row(&self, raw: &[f64]) -> Vec<f64> {
        match &self.rescale {
            None => raw.to_vec(),
            Some(r) => raw
                .iter()
                .zip(r)
                .map(|(&x, &(lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
                .collect(),
        }
    }

    /// Predictions for raw covariate rows (columns in model order).
    pub fn predict(&self, raw: &Array2<f64>) -> Result<Array1<f64>> {
        ensure_len("covariate columns", self.fit.p(), raw.ncols())?;
        raw.rows()
            .into_iter()
            .map(|row| evaluate_model(&self.fit, &self.scale_row(&row.to_vec())))
            .collect::<Result<Vec<f64>>>()
            .map(Array1::from)
    }
}
