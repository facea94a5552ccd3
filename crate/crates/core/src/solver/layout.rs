use crate::model::Dataset;

/// Sorted distinct design points of one covariate and the map from
/// observations to them.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub knots: Vec<f64>,
    pub mult: Vec<u32>,
    pub weights: Vec<f64>,
    pub knot_of: Vec<usize>,
}

impl Layout {
    pub fn new(data: &Dataset, j: usize) -> Self {
        let col = data.column(j);
        let n = col.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
        let mut knots: Vec<f64> = Vec::new();
        let mut mult: Vec<u32> = Vec::new();
        let mut knot_of = vec![0usize; n];
        for &i in &order {
            let x = col[i];
            if knots.last() != Some(&x) {
                knots.push(x);
                mult.push(0);
            }
            *mult.last_mut().unwrap() += 1;
            knot_of[i] = knots.len() - 1;
        }
        let weights = mult.iter().map(|&m| m as f64).collect();
        Self {
            knots,
            mult,
            weights,
            knot_of,
        }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    /// Per-knot averages of an observation-level vector.
    pub fn merge(&self, v: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.len()];
        for (i, &k) in self.knot_of.iter().enumerate() {
            s[k] += v[i];
        }
        s.iter_mut().zip(&self.weights).for_each(|(a, w)| *a /= w);
        s
    }

    pub fn spread(&self, values: &[f64]) -> Vec<f64> {
        self.knot_of.iter().map(|&k| values[k]).collect()
    }

    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        let n: f64 = self.weights.iter().sum();
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>() / n
    }
}
