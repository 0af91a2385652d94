use serde::{Deserialize, Serialize};

use super::{Matrix, Tape, Var};
use crate::error::{contract, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization parameters and running statistics.
///
/// `gamma` and `beta_shift` are trainable. The running statistics are
/// updated as `m ← (1 − momentum)·m + momentum·batch_stat` on every
/// training-mode forward; the running variance uses the unbiased batch
/// variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta_shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Tape handles for the trainable affine part of a batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct BnAffine {
    pub gamma: Var,
    pub beta_shift: Var,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: vec![1.0; features],
            beta_shift: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Puts `gamma` and `beta_shift` on the tape as leaves.
    pub fn bind(&self, tape: &mut Tape) -> BnAffine {
        BnAffine {
            gamma: tape.leaf(Matrix::row_vector(self.gamma.clone())),
            beta_shift: tape.leaf(Matrix::row_vector(self.beta_shift.clone())),
        }
    }

    /// Normalizes `x` (batch × features). Training mode uses the batch
    /// statistics, records them into the running averages, and lets
    /// gradients flow through the mean and variance. Eval mode uses the
    /// running statistics and treats each row independently.
    pub fn forward(&mut self, tape: &mut Tape, x: Var, affine: BnAffine, training: bool) -> Result<Var> {
        let (n, f) = tape.value(x).shape();
        if f != self.features() {
            return Err(contract(format!("batch norm expects {} features, got {f}", self.features())));
        }
        let normalized = if training {
            if n < 2 {
                return Err(contract("batch norm in training mode needs at least 2 rows"));
            }
            let mean = tape.mean_rows(x);
            let neg_mean = tape.neg(mean);
            let centered = tape.add_row(x, neg_mean);
            let sq = tape.square(centered);
            let var = tape.mean_rows(sq);
            let shifted = tape.add_scalar(var, self.epsilon);
            let std = tape.sqrt(shifted)?;
            let inv_std = tape.recip(std)?;

            let m = self.momentum;
            let bessel = n as f64 / (n as f64 - 1.0);
            let (bm, bv) = (tape.value(mean).data().to_vec(), tape.value(var).data().to_vec());
            for j in 0..f {
                self.running_mean[j] = (1.0 - m) * self.running_mean[j] + m * bm[j];
                self.running_var[j] = (1.0 - m) * self.running_var[j] + m * bv[j] * bessel;
            }
            tape.mul_row(centered, inv_std)
        } else {
            let neg_mean = tape.constant(Matrix::row_vector(self.running_mean.iter().map(|m| -m).collect()));
            let inv_std = tape.constant(Matrix::row_vector(
                self.running_var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect(),
            ));
            let centered = tape.add_row(x, neg_mean);
            tape.mul_row(centered, inv_std)
        };
        let scaled = tape.mul_row(normalized, affine.gamma);
        Ok(tape.add_row(scaled, affine.beta_shift))
    }
}

/// Value-only batch normalization of a matrix.
pub fn batch_norm(x: &Matrix, state: &mut BatchNormState, training: bool) -> Result<Matrix> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let affine = state.bind(&mut tape);
    let y = state.forward(&mut tape, xv, affine, training)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_stats(m: &Matrix, j: usize) -> (f64, f64) {
        let c = m.column(j);
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        (mean, c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn training_mode_standardizes_columns() {
        // column 0: mean 5, var 4; column 1: mean 5, var 4
        let x = Matrix::from_rows(&[vec![3.0, 7.0], vec![7.0, 3.0], vec![3.0, 3.0], vec![7.0, 7.0]]);
        let mut st = BatchNormState::new(2);
        st.epsilon = 1e-14;
        let y = batch_norm(&x, &mut st, true).unwrap();
        for j in 0..2 {
            let (m, v) = col_stats(&y, j);
            assert!(m.abs() < 1e-10);
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn eval_mode_with_unit_stats_is_identity() {
        let x = Matrix::from_rows(&[vec![0.3, -2.0, 11.0]]);
        let mut st = BatchNormState::new(3);
        st.epsilon = 1e-300;
        let y = batch_norm(&x, &mut st, false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn running_mean_update() {
        let x = Matrix::from_rows(&[vec![9.0], vec![11.0]]);
        let mut st = BatchNormState::new(1);
        batch_norm(&x, &mut st, true).unwrap();
        assert!((st.running_mean[0] - 1.0).abs() < 1e-15);
        assert!(st.running_var.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn single_row_training_batch_is_rejected() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let mut st = BatchNormState::new(2);
        assert!(batch_norm(&x, &mut st, true).is_err());
        assert!(batch_norm(&x, &mut st, false).is_ok());
    }

    #[test]
    fn feature_mismatch_is_rejected() {
        let x = Matrix::zeros(4, 3);
        let mut st = BatchNormState::new(2);
        assert!(matches!(batch_norm(&x, &mut st, false), Err(crate::Error::Contract(_))));
    }
}
