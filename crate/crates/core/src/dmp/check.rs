//! Finite-difference verification of the training-loss gradients.

use ndarray::Array2;

use super::model::DmpModel;
use super::structure::BatchStructure;
use crate::autodiff::{central_difference, relative_error, Mode, Session};
use crate::error::Result;

/// Worst entry-wise relative error of one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub entries: usize,
    pub worst: f64,
}

/// Mean-squared training loss (batch statistics in every batch norm).
pub fn training_loss(model: &DmpModel, b: &BatchStructure, target: &Array2<f64>) -> Result<f64> {
    let mut s = Session::new(&model.params, &model.bn, Mode::Train);
    let out = model.forward(&mut s, b)?;
    let loss = s.tape.mse(out, target)?;
    Ok(s.value(loss)[[0, 0]])
}

/// Compares reverse-mode gradients of [`training_loss`] with central
/// differences of step `h` for every parameter entry.
///
/// Near-zero gradients are measured against an absolute floor of
/// `1e-6 * max(1, |loss|)`, the size of the rounding error in the difference
/// quotient.
pub fn gradient_check(model: &DmpModel, b: &BatchStructure, target: &Array2<f64>, h: f64) -> Result<Vec<GradCheck>> {
    let mut s = Session::new(&model.params, &model.bn, Mode::Train);
    let out = model.forward(&mut s, b)?;
    let loss = s.tape.mse(out, target)?;
    let f0 = s.value(loss)[[0, 0]];
    let (grads, _) = s.backward(loss)?;
    let floor = 1e-6 * f0.abs().max(1.0);
    let mut work = model.clone();
    let mut report = Vec::with_capacity(grads.len());
    let ids: Vec<_> = model.params.iter().map(|(id, name, _)| (id, name.to_string())).collect();
    for ((id, name), g) in ids.into_iter().zip(grads) {
        let x: Vec<f64> = model.params.get(id).values().iter().copied().collect();
        let shape = model.params.get(id).values().raw_dim();
        let mut failure = None;
        let numeric = central_difference(&x, h, |v| {
            *work.params.get_mut(id).values_mut() = Array2::from_shape_vec(shape, v.to_vec()).expect("same shape");
            match training_loss(&work, b, target) {
                Ok(l) => l,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        *work.params.get_mut(id).values_mut() = model.params.get(id).values().clone();
        let worst = g.iter().zip(&numeric).map(|(a, n)| relative_error(*a, *n, floor)).fold(0.0, f64::max);
        report.push(GradCheck { name, entries: x.len(), worst });
    }
    Ok(report)
}
