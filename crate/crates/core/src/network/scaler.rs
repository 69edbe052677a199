//! Per-feature standardisation that can be folded into a dense layer.
//!
//! Frozen extractor features have a large shared offset and small spread,
//! which makes plain SGD on a head crawl. Training on `(x - mean) / scale`
//! and then rewriting the first dense layer as
//! `W'[i][j] = W[i][j] / scale[i]`, `b'[j] = b[j] - Σ_i mean[i] W'[i][j]`
//! gives a head that consumes raw features and is still a plain
//! `classifier_head_*` model.

use serde::{Deserialize, Serialize};

use super::layer::{LayerKind, LayerOp};
use super::model::Model;
use super::train::Sample;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    /// Mean and population standard deviation over `samples[indices]`.
    /// Constant features get scale 1.
    pub fn fit(samples: &[Sample], indices: &[usize]) -> Result<Self> {
        let first = indices
            .first()
            .map(|&i| &samples[i])
            .ok_or_else(|| Error::Data("cannot fit a scaler on zero samples".into()))?;
        let d = first.input.len();
        let n = indices.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in indices {
            let x = samples[i].input.data();
            if x.len() != d {
                return Err(Error::dim("scaler input", &[d], &[x.len()]));
            }
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in indices {
            for ((s, v), m) in var.iter_mut().zip(samples[i].input.data()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.mean.len() {
            return Err(Error::dim("scaler input", &[self.mean.len()], &[x.len()]));
        }
        let data = x
            .data()
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn apply_all(&self, samples: &[Sample]) -> Result<Vec<Sample>> {
        samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    input: self.apply(&s.input)?,
                    label: s.label,
                })
            })
            .collect()
    }

    /// Rewrites the model's first dense layer so it accepts unscaled input.
    /// Only flatten layers may precede it.
    pub fn fold_into(&self, model: &mut Model) -> Result<()> {
        let pos = model
            .layers()
            .iter()
            .position(|l| l.kind() != LayerKind::Flatten)
            .filter(|&i| model.layers()[i].kind() == LayerKind::Dense)
            .ok_or_else(|| {
                Error::Configuration(format!(
                    "{} does not start with a dense layer",
                    model.arch()
                ))
            })?;
        let d = self.mean.len();
        let layer = &mut model.layers_mut()[pos];
        let LayerOp::Dense { kernel, bias } = &mut layer.op else {
            unreachable!("position checked above");
        };
        if kernel.shape()[0] != d {
            return Err(Error::dim(
                "scaler vs dense input",
                &[d],
                &kernel.shape()[..1],
            ));
        }
        let out = kernel.shape()[1];
        let k = kernel.data_mut();
        for i in 0..d {
            for j in 0..out {
                k[i * out + j] /= self.scale[i];
            }
        }
        let b = bias.data_mut();
        for j in 0..out {
            let shift: f64 = (0..d).map(|i| self.mean[i] * k[i * out + j]).sum();
            b[j] -= shift;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_initialized, ArchId};
    use crate::numerics::Rng;

    #[test]
    fn folded_head_matches_scaled_input() {
        let mut rng = Rng::new(4);
        let samples: Vec<Sample> = (0..20)
            .map(|i| Sample {
                input: Tensor::new(
                    vec![1, 1, 512],
                    (0..512).map(|_| 0.3 + 0.02 * rng.normal()).collect(),
                )
                .unwrap(),
                label: i % 7,
            })
            .collect();
        let idx: Vec<usize> = (0..20).collect();
        let scaler = FeatureScaler::fit(&samples, &idx).unwrap();
        let mut head = build_initialized(ArchId::ClassifierHead7, 9).unwrap();
        let scaled = scaler.apply(&samples[3].input).unwrap();
        assert!(scaled.data().iter().all(|v| v.abs() < 10.0));
        let expected = head.infer(&scaled).unwrap();
        scaler.fold_into(&mut head).unwrap();
        let got = head.infer(&samples[3].input).unwrap();
        for (a, b) in expected.data().iter().zip(got.data()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_feature_and_bad_model() {
        let samples: Vec<Sample> = (0..3)
            .map(|i| Sample {
                input: Tensor::new(vec![2], vec![1.0, i as f64]).unwrap(),
                label: 0,
            })
            .collect();
        let s = FeatureScaler::fit(&samples, &[0, 1, 2]).unwrap();
        assert_eq!(s.scale[0], 1.0);
        assert!((s.mean[1] - 1.0).abs() < 1e-15);
        let mut tiny = build_initialized(ArchId::TinyCnn, 1).unwrap();
        assert!(s.fold_into(&mut tiny).is_err());
        assert!(FeatureScaler::fit(&samples, &[]).is_err());
    }
}
