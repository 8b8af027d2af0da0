//! Affine maps and the two training objectives built on them.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

/// `y = x · weights + bias`, with `weights` of shape (inputs, outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearMap {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        x.dot(&self.weights) + &self.bias
    }

    pub fn apply_rows(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Loss value and its gradient with respect to weights and bias.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_weights: Array2<f64>,
    pub d_bias: Array1<f64>,
}

/// Mean squared error over samples and output coordinates.
pub fn mse_loss_grad(map: &LinearMap, x: ArrayView2<f64>, targets: ArrayView2<f64>) -> LossGrad {
    let residual = map.apply_rows(x) - targets;
    let count = residual.len() as f64;
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / count;
    let scale = 2.0 / count;
    LossGrad {
        loss,
        d_weights: x.t().dot(&residual) * scale,
        d_bias: residual.sum_axis(Axis(0)) * scale,
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

/// Mean softmax cross-entropy.
pub fn softmax_xent_loss_grad(map: &LinearMap, x: ArrayView2<f64>, labels: &[usize]) -> LossGrad {
    let logits = map.apply_rows(x);
    let n = labels.len() as f64;
    let mut delta = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = row.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
        loss += log_total - row[y];
        for (j, z) in row.iter().enumerate() {
            delta[[i, j]] = (z - log_total).exp();
        }
        delta[[i, y]] -= 1.0;
    }
    delta /= n;
    LossGrad {
        loss: loss / n,
        d_weights: x.t().dot(&delta),
        d_bias: delta.sum_axis(Axis(0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let p = softmax(array![1000.0, 1001.0, 999.0].view());
        let q = softmax(array![0.0, 1.0, -1.0].view());
        assert!((p.sum() - 1.0).abs() < 1e-15);
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_map_has_uniform_cross_entropy() {
        let map = LinearMap::zeros(3, 4);
        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        let g = softmax_xent_loss_grad(&map, x.view(), &[0, 3]);
        assert!((g.loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mse_of_exact_fit_is_zero() {
        let map = LinearMap {
            weights: array![[2.0], [0.0]],
            bias: array![1.0],
        };
        let x = array![[1.0, 5.0], [3.0, -2.0]];
        let t = array![[3.0], [7.0]];
        let g = mse_loss_grad(&map, x.view(), t.view());
        assert_eq!(g.loss, 0.0);
        assert!(g.d_weights.iter().all(|v| *v == 0.0));
    }
}

/// Flattened row-major form used by the JSON model files.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub(crate) struct FlatMap {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&LinearMap> for FlatMap {
    fn from(m: &LinearMap) -> Self {
        Self {
            inputs: m.inputs(),
            outputs: m.outputs(),
            weights: m.weights.iter().copied().collect(),
            bias: m.bias.to_vec(),
        }
    }
}

impl TryFrom<FlatMap> for LinearMap {
    type Error = String;

    fn try_from(f: FlatMap) -> Result<Self, String> {
        if f.bias.len() != f.outputs {
            return Err(format!("bias has {} entries, expected {}", f.bias.len(), f.outputs));
        }
        let weights = Array2::from_shape_vec((f.inputs, f.outputs), f.weights)
            .map_err(|_| format!("weights do not match dimensions {}x{}", f.inputs, f.outputs))?;
        let map = LinearMap {
            weights,
            bias: Array1::from(f.bias),
        };
        if !map.is_finite() {
            return Err("non-finite parameter".into());
        }
        Ok(map)
    }
}
