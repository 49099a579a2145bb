//! Finite-difference verification of the analytic gradients.

use rayon::prelude::*;
use serde::Serialize;

use super::model::{FusionModel, GradientSet};
use super::network::PassConfig;
use crate::numcore::{finite_diff_grad, Matrix, SeededRng};
use crate::train::cross_entropy;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Denominator floor of the relative error, guarding near-zero gradients.
    pub floor: f64,
    /// A group fails when its max relative error reaches this value.
    pub tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { h: 1e-5, floor: 1e-6, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub size: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Mean cross-entropy of one deterministic pass, as a function of the parameters.
fn batch_loss(model: &FusionModel, text: &Matrix, image: &Matrix, labels: &[usize], pass: PassConfig) -> f64 {
    let mut rng = SeededRng::new(0);
    match model.forward_with(text, image, pass, &mut rng) {
        Ok(out) => cross_entropy(&out.logits, labels).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    }
}

/// Analytic gradients of the mean cross-entropy for a deterministic pass.
pub fn analytic_gradients(
    model: &FusionModel,
    text: &Matrix,
    image: &Matrix,
    labels: &[usize],
    pass: PassConfig,
) -> Result<GradientSet> {
    let pass = PassConfig { dropout: false, ..pass };
    let out = model.forward_with(text, image, pass, &mut SeededRng::new(0))?;
    model.backward(&out.cache, labels)
}

/// Compares `analytic` against central differences, one report per tensor.
///
/// Dropout is always off; `pass.batch_stats` selects batch or frozen
/// batch-norm statistics.
pub fn gradcheck_against(
    model: &FusionModel,
    text: &Matrix,
    image: &Matrix,
    labels: &[usize],
    pass: PassConfig,
    analytic: &GradientSet,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let pass = PassConfig { dropout: false, ..pass };
    let names: Vec<(String, Vec<f64>)> = analytic.tensors().into_iter().map(|(n, g)| (n, g.to_vec())).collect();

    let groups = names
        .par_iter()
        .enumerate()
        .map(|(gi, (name, grad))| -> Result<GroupReport> {
            let mut work = model.clone();
            let theta = work.params.trainable()[gi].1.to_vec();
            let numeric = finite_diff_grad(
                |t: &[f64]| {
                    work.params.trainable_mut()[gi].1.copy_from_slice(t);
                    batch_loss(&work, text, image, labels, pass)
                },
                &theta,
                opts.h,
            )?;
            let mut max_rel: f64 = 0.0;
            let mut max_abs: f64 = 0.0;
            for (a, n) in grad.iter().zip(&numeric) {
                max_rel = max_rel.max(relative_error(*a, *n, opts.floor));
                max_abs = max_abs.max((a - n).abs());
            }
            Ok(GroupReport {
                name: name.clone(),
                size: grad.len(),
                max_rel_err: max_rel,
                max_abs_err: max_abs,
                passed: max_rel < opts.tolerance,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_rel_err = groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max);
    Ok(GradCheckReport { passed: groups.iter().all(|g| g.passed), max_rel_err, groups })
}

pub fn gradcheck(
    model: &FusionModel,
    text: &Matrix,
    image: &Matrix,
    labels: &[usize],
    pass: PassConfig,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(model, text, image, labels, pass)?;
    gradcheck_against(model, text, image, labels, pass, &analytic, opts)
}

/// Moves batch-norm running statistics and affine parameters away from their
/// initial values so frozen-statistics checks exercise every term.
pub fn randomize_batch_norm(model: &mut FusionModel, rng: &mut SeededRng) {
    let p = &mut model.params;
    let bns = [&mut p.text_proj.bn, &mut p.image_proj.bn, &mut p.head.bn1, &mut p.head.bn2];
    for bn in bns {
        for j in 0..bn.gamma.len() {
            bn.gamma[j] = rng.uniform(0.5, 1.5);
            bn.beta[j] = rng.uniform(-0.2, 0.2);
            bn.running_mean[j] = rng.uniform(-0.3, 0.3);
            bn.running_var[j] = rng.uniform(0.5, 2.0);
        }
    }
}
