use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const ADAGRAD_EPS: f64 = 1e-10;

/// Per-parameter accumulators, one vector per tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Adam { m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64 },
    Adagrad { sum_sq: Vec<Vec<f64>> },
}

impl OptimizerState {
    pub fn adam(shapes: &[usize]) -> Self {
        let z: Vec<Vec<f64>> = shapes.iter().map(|&n| vec![0.0; n]).collect();
        OptimizerState::Adam { m: z.clone(), v: z, t: 0 }
    }

    pub fn adagrad(shapes: &[usize]) -> Self {
        OptimizerState::Adagrad { sum_sq: shapes.iter().map(|&n| vec![0.0; n]).collect() }
    }

    fn shapes(&self) -> Vec<usize> {
        let acc = match self {
            OptimizerState::Adam { m, .. } => m,
            OptimizerState::Adagrad { sum_sq } => sum_sq,
        };
        acc.iter().map(Vec::len).collect()
    }
}

fn check_shapes(params: &[&mut [f64]], grads: &[&[f64]], state: &OptimizerState) -> Result<()> {
    let expected = state.shapes();
    let p: Vec<usize> = params.iter().map(|s| s.len()).collect();
    let g: Vec<usize> = grads.iter().map(|s| s.len()).collect();
    if p != expected || g != expected {
        return Err(Error::Shape(format!(
            "optimizer state tracks {} tensors, got {} parameter and {} gradient tensors of mismatched sizes",
            expected.len(),
            p.len(),
            g.len()
        )));
    }
    Ok(())
}

/// One Adam update with bias correction; L2 enters as `g + wd·θ`.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    check_shapes(params, grads, state)?;
    let OptimizerState::Adam { m, v, t } = state else {
        return Err(Error::Contract("adam_step called with adagrad state".into()));
    };
    *t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(*t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(*t as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        for i in 0..p.len() {
            let gi = g[i] + weight_decay * p[i];
            m[k][i] = ADAM_BETA1 * m[k][i] + (1.0 - ADAM_BETA1) * gi;
            v[k][i] = ADAM_BETA2 * v[k][i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mhat = m[k][i] / c1;
            let vhat = v[k][i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// One Adagrad update; L2 enters as `g + wd·θ`.
pub fn adagrad_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    check_shapes(params, grads, state)?;
    let OptimizerState::Adagrad { sum_sq } = state else {
        return Err(Error::Contract("adagrad_step called with adam state".into()));
    };
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        for i in 0..p.len() {
            let gi = g[i] + weight_decay * p[i];
            sum_sq[k][i] += gi * gi;
            p[i] -= lr * gi / (sum_sq[k][i].sqrt() + ADAGRAD_EPS);
        }
    }
    Ok(())
}

/// StepLR: `lr0 · gamma^⌊epoch / every⌋`.
pub fn step_decay(lr0: f64, epoch: usize, gamma: f64, every: usize) -> f64 {
    let every = every.max(1);
    lr0 * gamma.powi((epoch / every) as i32)
}
