//! Data model shared by the solvers: datasets, component classes, fitted
//! components and additive fits, plus the norms the penalty is built from.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::diffop::DiffOp;
use crate::error::{ensure_finite, ensure_len, invalid, Error, Result};
use crate::solver::PenaltyPlan;
use crate::spline::{eval_natural_cubic, natural_cubic_second_derivs, SplinePenalty};

/// Covariates in `[0, 1]` (one column per additive component) and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    column_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let (n, _) = x.dim();
        if n < 2 {
            return Err(invalid(format!("need at least 2 observations, got {n}")));
        }
        ensure_len("response length", n, y.len())?;
        for ((i, j), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(invalid(format!("covariate at row {i}, column {j} is not finite")));
            }
            if !(0.0..=1.0).contains(v) {
                return Err(invalid(format!(
                    "covariate at row {i}, column {j} is {v}, outside [0, 1]"
                )));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("response at row {i} is not finite")));
        }
        Ok(Self {
            x,
            y,
            column_names: None,
        })
    }

    /// Min-max rescales every column onto `[0, 1]` before validating. Constant
    /// columns map to zero. Returns the per-column `(min, max)` used.
    pub fn rescaled(mut x: Array2<f64>, y: Array1<f64>) -> Result<(Self, Vec<(f64, f64)>)> {
        let mut ranges = Vec::with_capacity(x.ncols());
        for mut col in x.columns_mut() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            col.mapv_inplace(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 });
            ranges.push((lo, hi));
        }
        Ok((Self::new(x, y)?, ranges))
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        ensure_len("column names", self.p(), names.len())?;
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.x.column(j)
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassKind {
    BoundedVariation,
    SobolevL2,
}

/// Function class of one component: bounded variation of order `m`
/// (seminorm `TV(g^(m-1))`) or the L2-Sobolev space of order `m`
/// (seminorm `||g^(m)||_L2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ComponentClass {
    pub kind: ClassKind,
    pub m: u32,
}

impl ComponentClass {
    pub fn bounded_variation(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(invalid("bounded-variation order must be at least 1"));
        }
        Ok(Self {
            kind: ClassKind::BoundedVariation,
            m,
        })
    }

    pub fn sobolev(m: u32) -> Result<Self> {
        if !(1..=2).contains(&m) {
            return Err(invalid(format!("Sobolev order must be 1 or 2, got {m}")));
        }
        Ok(Self {
            kind: ClassKind::SobolevL2,
            m,
        })
    }

    /// Shape index: 1 for bounded variation, 2 for L2-Sobolev.
    pub fn r(&self) -> u32 {
        match self.kind {
            ClassKind::BoundedVariation => 1,
            ClassKind::SobolevL2 => 2,
        }
    }

    /// Entropy exponent `1 / m`.
    pub fn beta(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Sup-norm interpolation exponent `1 / (2m + 1 - 2/r)`.
    pub fn tau(&self) -> f64 {
        1.0 / (2.0 * self.m as f64 + 1.0 - 2.0 / self.r() as f64)
    }

    /// Bounded-variation classes of order 3 and above are fitted by trend
    /// filtering, which only approximates the exact spline solution.
    pub fn is_approximate(&self) -> bool {
        self.kind == ClassKind::BoundedVariation && self.m >= 3
    }

    pub fn rule(&self) -> InterpolationRule {
        match (self.kind, self.m) {
            (ClassKind::BoundedVariation, 1) => InterpolationRule::StepRightContinuous,
            (ClassKind::SobolevL2, 2) => InterpolationRule::NaturalSplineCoefficients,
            _ => InterpolationRule::PiecewiseLinear,
        }
    }

    /// Short tag used on the command line and in documents: `bv1`, `bv2`, `sob2`...
    pub fn tag(&self) -> String {
        match self.kind {
            ClassKind::BoundedVariation => format!("bv{}", self.m),
            ClassKind::SobolevL2 => format!("sob{}", self.m),
        }
    }
}

impl std::str::FromStr for ComponentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse_m = |rest: &str| {
            rest.parse::<u32>()
                .map_err(|_| invalid(format!("bad class order in '{s}'")))
        };
        if let Some(rest) = s.strip_prefix("bv") {
            Self::bounded_variation(parse_m(rest)?)
        } else if let Some(rest) = s.strip_prefix("sob") {
            Self::sobolev(parse_m(rest)?)
        } else {
            Err(invalid(format!("unknown component class '{s}' (expected bvM or sobM)")))
        }
    }
}

impl std::fmt::Display for ComponentClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterpolationRule {
    /// Constant on `[t_i, t_{i+1})`, first value to the left of the first knot.
    StepRightContinuous,
    /// Linear between knots, flat outside.
    PiecewiseLinear,
    /// Natural cubic spline, linear outside.
    NaturalSplineCoefficients,
}

/// One fitted component, stored at the distinct sorted design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFit {
    pub class: ComponentClass,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub multiplicities: Vec<u32>,
    pub rule: InterpolationRule,
    /// Knot second derivatives; present only for the natural-spline rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_derivs: Option<Vec<f64>>,
    pub seminorm_value: f64,
    pub empnorm_value: f64,
    pub approximate: bool,
}

impl ComponentFit {
    pub fn new(class: ComponentClass, knots: Vec<f64>, values: Vec<f64>, multiplicities: Vec<u32>) -> Result<Self> {
        ensure_len("component values", knots.len(), values.len())?;
        ensure_len("component multiplicities", knots.len(), multiplicities.len())?;
        if knots.is_empty() {
            return Err(invalid("component needs at least one knot"));
        }
        ensure_finite("knots", &knots)?;
        ensure_finite("values", &values)?;
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("component knots must be strictly increasing"));
        }
        if multiplicities.contains(&0) {
            return Err(invalid("multiplicities must be positive"));
        }
        let rule = class.rule();
        let second_derivs = match rule {
            InterpolationRule::NaturalSplineCoefficients => Some(natural_cubic_second_derivs(&knots, &values)?),
            _ => None,
        };
        let w: Vec<f64> = multiplicities.iter().map(|&m| m as f64).collect();
        let seminorm_value = seminorm(class, &knots, &values)?;
        let empnorm_value = empirical_norm(&values, Some(&w))?;
        Ok(Self {
            class,
            knots,
            values,
            multiplicities,
            rule,
            second_derivs,
            seminorm_value,
            empnorm_value,
            approximate: class.is_approximate(),
        })
    }

    pub fn n(&self) -> u64 {
        self.multiplicities.iter().map(|&m| m as u64).sum()
    }

    pub fn evaluate(&self, xq: f64) -> f64 {
        evaluate_component(self, xq)
    }

    /// Recomputes the stored seminorm and empirical norm from the knot values.
    pub fn recompute_norms(&self) -> Result<(f64, f64)> {
        let w: Vec<f64> = self.multiplicities.iter().map(|&m| m as f64).collect();
        Ok((
            seminorm(self.class, &self.knots, &self.values)?,
            empirical_norm(&self.values, Some(&w))?,
        ))
    }
}

/// Intercept plus one optional component per covariate. `None` components are
/// identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFit {
    pub intercept: f64,
    pub components: Vec<Option<ComponentFit>>,
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub plan: PenaltyPlan,
}

impl AdditiveFit {
    pub fn p(&self) -> usize {
        self.components.len()
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.as_ref().map(|_| j))
            .collect()
    }

    pub fn evaluate(&self, xrow: &[f64]) -> Result<f64> {
        evaluate_model(self, xrow)
    }
}

/// `sqrt(n^-1 sum w_i v_i^2)` with `n = sum w_i` (unit weights by default).
pub fn empirical_norm(values: &[f64], multiplicities: Option<&[f64]>) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("empirical norm of an empty vector"));
    }
    let ss = match multiplicities {
        None => values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64,
        Some(w) => {
            ensure_len("weights", values.len(), w.len())?;
            if w.iter().any(|&x| !(x > 0.0)) {
                return Err(invalid("weights must be positive"));
            }
            let n: f64 = w.iter().sum();
            values.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>() / n
        }
    };
    Ok(ss.sqrt())
}

/// Total variation of the `(m-1)`-th derivative on the piecewise representation:
/// `sum |D(m) values|` with the unequal-spacing divided-difference operator.
/// Inputs with at most `m` knots lie in the null space and give zero. Rows
/// below the rounding level of the values they difference count as zero, so a
/// polynomial on closely spaced knots evaluates to zero rather than to noise.
pub fn tv_seminorm(values: &[f64], knots: &[f64], m: u32) -> Result<f64> {
    ensure_len("seminorm values", knots.len(), values.len())?;
    if m == 0 {
        return Err(invalid("seminorm order must be at least 1"));
    }
    if knots.len() <= m as usize {
        return Ok(0.0);
    }
    let d = DiffOp::new(knots, m as usize);
    let noise = (m + 2) as f64 * f64::EPSILON;
    Ok((0..d.nrows())
        .map(|i| {
            let (v, abs) = d.row(i).iter().zip(&values[i..]).fold((0.0, 0.0), |(v, a), (c, x)| (v + c * x, a + (c * x).abs()));
            if f64::abs(v) <= noise * abs {
                0.0
            } else {
                f64::abs(v)
            }
        })
        .sum())
}

/// `||g^(m)||_L2` of the natural spline of order `2m - 1` through `values`.
pub fn sobolev_seminorm(values: &[f64], knots: &[f64], m: u32) -> Result<f64> {
    ensure_len("seminorm values", knots.len(), values.len())?;
    if knots.len() <= m as usize {
        return Ok(0.0);
    }
    let pen = SplinePenalty::new(knots, m as usize)?;
    let s = pen.roughness(values).sqrt();
    Ok(if s <= pen.seminorm_rounding(values) { 0.0 } else { s })
}

pub fn seminorm(class: ComponentClass, knots: &[f64], values: &[f64]) -> Result<f64> {
    match class.kind {
        ClassKind::BoundedVariation => tv_seminorm(values, knots, class.m),
        ClassKind::SobolevL2 => sobolev_seminorm(values, knots, class.m),
    }
}

pub fn evaluate_component(fit: &ComponentFit, xq: f64) -> f64 {
    let t = &fit.knots;
    let v = &fit.values;
    let k = t.len();
    match fit.rule {
        InterpolationRule::StepRightContinuous => {
            let idx = t.partition_point(|&s| s <= xq);
            v[idx.saturating_sub(1)]
        }
        InterpolationRule::PiecewiseLinear => {
            if xq <= t[0] {
                return v[0];
            }
            if xq >= t[k - 1] {
                return v[k - 1];
            }
            let i = t.partition_point(|&s| s <= xq) - 1;
            if xq == t[i] {
                return v[i];
            }
            let b = (xq - t[i]) / (t[i + 1] - t[i]);
            v[i] + b * (v[i + 1] - v[i])
        }
        InterpolationRule::NaturalSplineCoefficients => match &fit.second_derivs {
            Some(m2) => eval_natural_cubic(t, v, m2, xq),
            None => {
                let m2 = natural_cubic_second_derivs(t, v).unwrap_or_else(|_| vec![0.0; k]);
                eval_natural_cubic(t, v, &m2, xq)
            }
        },
    }
}

pub fn evaluate_model(fit: &AdditiveFit, xrow: &[f64]) -> Result<f64> {
    ensure_len("covariate row", fit.p(), xrow.len())?;
    let mut s = fit.intercept;
    for (c, &x) in fit.components.iter().zip(xrow) {
        if let Some(c) = c {
            s += evaluate_component(c, x);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step_fit(knots: &[f64], values: &[f64]) -> ComponentFit {
        let class = ComponentClass::bounded_variation(1).unwrap();
        ComponentFit::new(class, knots.to_vec(), values.to_vec(), vec![1; knots.len()]).unwrap()
    }

    #[test]
    fn empirical_norm_examples() {
        assert_eq!(empirical_norm(&[0.0, 0.0, 0.0], None).unwrap(), 0.0);
        assert!((empirical_norm(&[-2.5; 4], None).unwrap() - 2.5).abs() < 1e-15);
        let v = empirical_norm(&[3.0, 4.0], Some(&[1.0, 1.0])).unwrap();
        assert!((v - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((v - 3.5355339059327378).abs() < 1e-15);
        assert!(empirical_norm(&[], None).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_seminorm(&[1.0, 3.0, 2.0], &[0.0, 0.5, 1.0], 1).unwrap(), 3.0);
        assert_eq!(tv_seminorm(&[0.0, 1.0, 0.0], &[0.0, 0.5, 1.0], 2).unwrap(), 4.0);
        for m in 1..5 {
            let t = [0.0, 0.1, 0.3, 0.35, 0.6, 0.9];
            assert!(tv_seminorm(&[1.7; 6], &t, m).unwrap() < 1e-10);
        }
        assert!(tv_seminorm(&[1.0, 2.0], &[0.0], 1).is_err());
        // too few knots: null space by convention
        assert_eq!(tv_seminorm(&[0.0, 5.0], &[0.0, 1.0], 2).unwrap(), 0.0);
    }

    #[test]
    fn class_exponents_and_tags() {
        let v1 = ComponentClass::bounded_variation(1).unwrap();
        assert_eq!((v1.beta(), v1.tau()), (1.0, 1.0));
        let s2: ComponentClass = "sob2".parse().unwrap();
        assert_eq!(s2.kind, ClassKind::SobolevL2);
        assert_eq!(s2.tag(), "sob2");
        assert!("sob3".parse::<ComponentClass>().is_err());
        assert!("tv1".parse::<ComponentClass>().is_err());
        assert!("bv3".parse::<ComponentClass>().unwrap().is_approximate());
    }

    #[test]
    fn step_evaluation_extends_flat() {
        let f = step_fit(&[0.2, 0.5], &[1.0, 3.0]);
        assert_eq!(f.evaluate(0.1), 1.0);
        assert_eq!(f.evaluate(0.3), 1.0);
        assert_eq!(f.evaluate(0.5), 3.0);
        assert_eq!(f.evaluate(0.7), 3.0);
    }

    #[test]
    fn linear_evaluation() {
        let class = ComponentClass::bounded_variation(2).unwrap();
        let f = ComponentFit::new(class, vec![0.2, 0.6], vec![1.0, 3.0], vec![1, 1]).unwrap();
        assert_eq!(f.evaluate(0.0), 1.0);
        assert!((f.evaluate(0.4) - 2.0).abs() < 1e-15);
        assert_eq!(f.evaluate(0.9), 3.0);
    }

    #[test]
    fn model_evaluation_sums_components() {
        let plan = PenaltyPlan::manual(vec![ComponentClass::bounded_variation(1).unwrap(); 2], 0.0, 0.0, 1.0).unwrap();
        let mut fit = AdditiveFit {
            intercept: 2.5,
            components: vec![None, None],
            objective_trace: vec![],
            sweeps: 0,
            converged: true,
            plan,
        };
        assert_eq!(fit.evaluate(&[0.3, 0.9]).unwrap(), 2.5);
        fit.intercept = 0.0;
        fit.components[0] = Some(step_fit(&[0.2, 0.5], &[1.0, 3.0]));
        fit.components[1] = Some(step_fit(&[0.2, 0.5], &[-1.0, -1.0]));
        assert_eq!(fit.evaluate(&[0.7, 0.4]).unwrap(), 2.0);
        assert!(matches!(fit.evaluate(&[0.7]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dataset_validation() {
        let x = Array2::from_shape_vec((2, 1), vec![0.1, 1.2]).unwrap();
        assert!(Dataset::new(x.clone(), Array1::from(vec![0.0, 1.0])).is_err());
        let (d, ranges) = Dataset::rescaled(x, Array1::from(vec![0.0, 1.0])).unwrap();
        assert_eq!(d.column(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(ranges, vec![(0.1, 1.2)]);
        let x = Array2::from_shape_vec((1, 1), vec![0.1]).unwrap();
        assert!(Dataset::new(x, Array1::from(vec![0.0])).is_err());
    }

    fn knots_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..1.0, len).prop_map(|gaps| {
            let total: f64 = gaps.iter().sum();
            let mut acc = 0.0;
            gaps.iter()
                .map(|g| {
                    let t = acc / total;
                    acc += g;
                    t
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn empirical_norm_is_homogeneous(v in prop::collection::vec(-10.0f64..10.0, 1..30), c in -5.0f64..5.0) {
            let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
            let a = empirical_norm(&scaled, None).unwrap();
            let b = c.abs() * empirical_norm(&v, None).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn tv_ignores_null_space(
            (t, v) in (3usize..12).prop_flat_map(|k| (knots_strategy(k), prop::collection::vec(-3.0f64..3.0, k))),
            a in -5.0f64..5.0, b in -5.0f64..5.0,
        ) {
            let base1 = tv_seminorm(&v, &t, 1).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + a).collect();
            prop_assert!((tv_seminorm(&shifted, &t, 1).unwrap() - base1).abs() <= 1e-10);
            let base2 = tv_seminorm(&v, &t, 2).unwrap();
            let tilted: Vec<f64> = v.iter().zip(&t).map(|(x, s)| x + a + b * s).collect();
            prop_assert!((tv_seminorm(&tilted, &t, 2).unwrap() - base2).abs() <= 1e-10 * (1.0 + base2));
        }

        #[test]
        fn stored_norms_and_knot_values_round_trip(
            (t, v, w) in (1usize..12).prop_flat_map(|k| (
                knots_strategy(k),
                prop::collection::vec(-3.0f64..3.0, k),
                prop::collection::vec(1u32..4, k),
            )),
            tag in prop::sample::select(vec!["bv1", "bv2", "bv3", "sob1", "sob2"]),
        ) {
            let class: ComponentClass = tag.parse().unwrap();
            let fit = ComponentFit::new(class, t.clone(), v.clone(), w).unwrap();
            let (s, e) = fit.recompute_norms().unwrap();
            prop_assert!((s - fit.seminorm_value).abs() <= 1e-10 * s.max(1e-300));
            prop_assert!((e - fit.empnorm_value).abs() <= 1e-10 * e.max(1e-300));
            if fit.rule != InterpolationRule::NaturalSplineCoefficients {
                for (x, y) in t.iter().zip(&v) {
                    prop_assert_eq!(fit.evaluate(*x), *y);
                }
            }
        }
    }
}
