use crate::error::{Error, Result};
use crate::numerics::Tensor;

const PROB_FLOOR: f64 = 1e-12;

/// `-ln(max(probs[label], 1e-12))`.
pub fn cross_entropy(probs: &Tensor, label: usize) -> Result<f64> {
    let p = label_prob(probs, label)?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of [`cross_entropy`] with respect to `probs`.
pub fn cross_entropy_grad(probs: &Tensor, label: usize) -> Result<Tensor> {
    let p = label_prob(probs, label)?;
    let mut g = Tensor::zeros(probs.shape());
    g.data_mut()[label] = -1.0 / p.max(PROB_FLOOR);
    Ok(g)
}

fn label_prob(probs: &Tensor, label: usize) -> Result<f64> {
    if probs.rank() != 1 {
        return Err(Error::dim(
            "cross-entropy expects a probability vector",
            probs.shape(),
            &[0],
        ));
    }
    probs.data().get(label).copied().ok_or_else(|| {
        Error::Data(format!(
            "label {label} out of range for {} classes",
            probs.len()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::from_vec(x.to_vec()).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(cross_entropy(&v(&[1.0, 0.0]), 0).unwrap(), 0.0);
        assert!(
            (cross_entropy(&v(&[0.5, 0.5]), 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15
        );
        let uniform = v(&[1.0 / 7.0; 7]);
        for label in 0..7 {
            assert!((cross_entropy(&uniform, label).unwrap() - 7f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_probability_is_clamped() {
        let loss = cross_entropy(&v(&[1.0, 0.0]), 1).unwrap();
        assert!((loss - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(cross_entropy(&v(&[1.0]), 3).is_err());
    }
}
