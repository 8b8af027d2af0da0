//! Mini-batch gradient descent with inverted input dropout.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{LinearMap, LossGrad};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::arg("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(
                "learning_rate",
                format!("must be positive, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }
}

pub(crate) fn validate_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::arg("dropout_rate", format!("must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// A trained model and the mean training loss of each epoch.
#[derive(Debug, Clone)]
pub struct Fit<M> {
    pub model: M,
    pub epoch_losses: Vec<f64>,
}

/// Runs `cfg.epochs` passes over the rows of `inputs`. `objective` receives
/// the current map, the dropped-out batch inputs and the batch row indices.
pub(crate) fn sgd<F>(
    mut map: LinearMap,
    inputs: ArrayView2<f64>,
    cfg: &TrainConfig,
    dropout_rate: f64,
    objective: F,
) -> Result<Fit<LinearMap>>
where
    F: Fn(&LinearMap, ArrayView2<f64>, &[usize]) -> LossGrad,
{
    cfg.validate()?;
    validate_dropout(dropout_rate)?;
    let n = inputs.nrows();
    let mut rng = rng::stream(&[cfg.seed, 0x7A11]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut xb = inputs.select(Axis(0), batch);
            if dropout_rate > 0.0 {
                for mut row in xb.rows_mut() {
                    rng::apply_dropout(
                        &mut rng,
                        row.as_slice_mut().expect("owned rows are contiguous"),
                        dropout_rate,
                    );
                }
            }
            let g = objective(&map, xb.view(), batch);
            if !g.loss.is_finite() {
                return Err(Error::Divergence { epoch, loss: g.loss });
            }
            total += g.loss * batch.len() as f64;
            map.weights.scaled_add(-cfg.learning_rate, &g.d_weights);
            map.bias.scaled_add(-cfg.learning_rate, &g.d_bias);
        }
        let loss = total / n as f64;
        if !map.is_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }
        epoch_losses.push(loss);
    }
    Ok(Fit {
        model: map,
        epoch_losses,
    })
}
