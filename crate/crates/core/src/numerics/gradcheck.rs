//! Central-difference gradient verification.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Default finite-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// A scalar function with an analytic gradient.
pub trait Differentiable {
    fn value(&self, x: &Tensor) -> Result<f64>;
    fn gradient(&self, x: &Tensor) -> Result<Tensor>;
}

/// Adapts a pair of closures into a [`Differentiable`].
pub struct FnObjective<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> Differentiable for FnObjective<V, G>
where
    V: Fn(&Tensor) -> Result<f64>,
    G: Fn(&Tensor) -> Result<Tensor>,
{
    fn value(&self, x: &Tensor) -> Result<f64> {
        (self.value)(x)
    }

    fn gradient(&self, x: &Tensor) -> Result<Tensor> {
        (self.gradient)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Flat coordinate at which `max_rel_error` occurred.
    pub worst_index: usize,
    pub checked: usize,
}

/// |a − n| / max(1e-8, |a| + |n|).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every coordinate of `x`.
pub fn grad_check<F: Differentiable + ?Sized>(
    f: &F,
    x: &Tensor,
    epsilon: f64,
) -> Result<GradCheck> {
    let analytic = f.gradient(x)?;
    let coords: Vec<usize> = (0..x.len()).collect();
    compare(|t| f.value(t), x, &analytic, epsilon, &coords)
}

/// Checks only the listed flat coordinates.
pub fn grad_check_coords<F: Differentiable + ?Sized>(
    f: &F,
    x: &Tensor,
    epsilon: f64,
    coords: &[usize],
) -> Result<GradCheck> {
    let analytic = f.gradient(x)?;
    compare(|t| f.value(t), x, &analytic, epsilon, coords)
}

/// Compares a supplied analytic gradient against central differences of `value`.
pub fn compare(
    value: impl Fn(&Tensor) -> Result<f64>,
    x: &Tensor,
    analytic: &Tensor,
    epsilon: f64,
    coords: &[usize],
) -> Result<GradCheck> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Configuration(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if analytic.shape() != x.shape() {
        return Err(Error::dim(
            "analytic gradient vs input",
            analytic.shape(),
            x.shape(),
        ));
    }
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    let mut probe = x.clone();
    for &i in coords {
        if i >= x.len() {
            return Err(Error::dim("gradient-check coordinate", &[i], x.shape()));
        }
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + epsilon;
        let plus = value(&probe)?;
        probe.data_mut()[i] = orig - epsilon;
        let minus = value(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!(
                "objective not finite at coordinate {i} (f+ = {plus}, f- = {minus})"
            )));
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic.data()[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
