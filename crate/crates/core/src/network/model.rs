use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerCache, LayerKind, LayerOp, PoolRounding};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{Rng, Tensor};

/// Side length of the square RGB patches every architecture consumes.
pub const PATCH_SIZE: usize = 50;
/// Width of the headless VGG16 feature vector.
pub const FEATURE_DIM: usize = 512;
/// Default dropout probability.
pub const DEFAULT_DROPOUT: f64 = 0.5;

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

fn fresh_token() -> u64 {
    NEXT_TOKEN.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchId {
    Vgg16Headless,
    TinyCnn,
    ClassifierHead2,
    ClassifierHead7,
}

impl ArchId {
    pub const ALL: [ArchId; 4] = [
        ArchId::Vgg16Headless,
        ArchId::TinyCnn,
        ArchId::ClassifierHead2,
        ArchId::ClassifierHead7,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchId::Vgg16Headless => "vgg16_headless",
            ArchId::TinyCnn => "tiny_cnn",
            ArchId::ClassifierHead2 => "classifier_head_2",
            ArchId::ClassifierHead7 => "classifier_head_7",
        }
    }

    /// Whether the model ends in a softmax classifier.
    pub fn is_classifier(self) -> bool {
        self != ArchId::Vgg16Headless
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                Error::Configuration(format!(
                    "unknown architecture {s:?}; expected one of vgg16_headless, tiny_cnn, classifier_head_2, classifier_head_7"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Ordered layer stack with validated shapes.
#[derive(Debug, Clone)]
pub struct Model {
    arch: ArchId,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    /// Output shape of each layer.
    shapes: Vec<Vec<usize>>,
    pooling: PoolRounding,
    token: u64,
}

/// Per-layer activations kept by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    token: u64,
    layers: Vec<LayerCache>,
}

/// Gradients for every parameter tensor (in [`Model::parameters`] order)
/// and for the model input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

impl ForwardCache {
    pub(crate) fn layer_caches(&self) -> &[LayerCache] {
        &self.layers
    }
}

impl Model {
    pub fn new(
        arch: ArchId,
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        pooling: PoolRounding,
    ) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut current = input_shape.clone();
        for layer in &layers {
            current = layer.output_shape(&current)?;
            shapes.push(current.clone());
        }
        Ok(Self {
            arch,
            input_shape,
            layers,
            shapes,
            pooling,
            token: fresh_token(),
        })
    }

    pub fn arch(&self) -> ArchId {
        self.arch
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, |s| s)
    }

    /// Invalidates outstanding forward caches.
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        self.token = fresh_token();
        &mut self.layers
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        if i == 0 {
            &self.input_shape
        } else {
            &self.shapes[i - 1]
        }
    }

    pub fn pooling_rounding(&self) -> PoolRounding {
        self.pooling
    }

    pub fn num_classes(&self) -> Option<usize> {
        matches!(
            self.layers.last().map(Layer::kind),
            Some(LayerKind::Softmax)
        )
        .then(|| self.output_shape()[0])
    }

    /// Width of the first flatten layer's output, if any.
    pub fn flatten_width(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.kind() == LayerKind::Flatten)
            .map(|i| self.shapes[i][0])
    }

    /// `(name, tensor)` pairs; names are `<layer>/kernel` and `<layer>/bias`.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Some((k, b)) = layer.params() {
                out.push((format!("{}/kernel", layer.name), k));
                out.push((format!("{}/bias", layer.name), b));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Mutable parameter tensors. Invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.token = fresh_token();
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Some((k, b)) = layer.params_mut() {
                out.push(k);
                out.push(b);
            }
        }
        out
    }

    /// Replaces parameter `index` (in [`Model::parameters`] order).
    pub fn set_parameter(&mut self, index: usize, value: Tensor) -> Result<()> {
        let names: Vec<String> = self.parameters().into_iter().map(|(n, _)| n).collect();
        let mut params = self.parameters_mut();
        let slot = params
            .get_mut(index)
            .ok_or_else(|| Error::Configuration(format!("no parameter #{index}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::dim(
                format!("parameter {}", names[index]),
                slot.shape(),
                value.shape(),
            ));
        }
        **slot = value;
        Ok(())
    }

    /// Kaiming-uniform initialisation: weights ~ U(±sqrt(6 / fan_in)),
    /// biases zero. Values are rounded to `f32` precision so a freshly
    /// initialised model survives a weight-file round trip unchanged.
    pub fn initialize(&mut self, rng: &mut Rng) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let Some((kernel, bias)) = layer.params_mut() else {
                continue;
            };
            let fan_in: usize = kernel.shape()[..kernel.rank() - 1].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut layer_rng = rng.child(i as u64);
            for w in kernel.data_mut() {
                *w = layer_rng.uniform(-bound, bound) as f32 as f64;
            }
            bias.data_mut().fill(0.0);
        }
        self.token = fresh_token();
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in self.parameters_mut() {
            for v in p.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(Error::dim(
                format!("{} input", self.arch),
                &self.input_shape,
                input.shape(),
            ));
        }
        Ok(())
    }

    /// Inference pass (dropout disabled).
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x, false, None, false)?.0;
        }
        Ok(x)
    }

    /// Forward pass. Train mode returns a cache for [`Model::backward`] and
    /// needs `rng` whenever the model contains dropout.
    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Tensor, Option<ForwardCache>)> {
        if mode == Mode::Infer {
            return Ok((self.infer(input)?, None));
        }
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x, true, rng.as_deref_mut(), true)?;
            caches.push(cache.expect("cache requested"));
            x = y;
        }
        Ok((
            x,
            Some(ForwardCache {
                token: self.token,
                layers: caches,
            }),
        ))
    }

    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<Gradients> {
        self.backward_impl(cache, loss_grad, true, None)
    }

    /// Adds this sample's parameter gradients into `acc`, which must be laid
    /// out like [`Model::parameters`]. Skips the gradient with respect to the
    /// model input.
    pub fn accumulate_param_grads(
        &self,
        cache: &ForwardCache,
        loss_grad: &Tensor,
        acc: &mut [Tensor],
    ) -> Result<()> {
        let expected = self.layers.iter().filter(|l| l.params().is_some()).count() * 2;
        if acc.len() != expected {
            return Err(Error::dim(
                "gradient accumulators",
                &[expected],
                &[acc.len()],
            ));
        }
        self.backward_impl(cache, loss_grad, false, Some(acc))
            .map(|_| ())
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        loss_grad: &Tensor,
        want_input: bool,
        mut acc: Option<&mut [Tensor]>,
    ) -> Result<Gradients> {
        if cache.token != self.token || cache.layers.len() != self.layers.len() {
            return Err(Error::State(
                "forward cache is stale: the model changed after the forward pass".into(),
            ));
        }
        if loss_grad.shape() != self.output_shape() {
            return Err(Error::dim(
                "loss gradient",
                self.output_shape(),
                loss_grad.shape(),
            ));
        }
        let mut grad = loss_grad.clone();
        let mut params_rev = Vec::new();
        let mut slot = acc.as_ref().map_or(0, |a| a.len());
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let target = match acc.as_deref_mut() {
                Some(a) if layer.params().is_some() => {
                    slot -= 2;
                    let (k, b) = a[slot..slot + 2].split_at_mut(1);
                    Some((&mut k[0], &mut b[0]))
                }
                _ => None,
            };
            let g = layer.backward_into(lc, &grad, want_input || i > 0, target)?;
            if let Some((dk, db)) = g.params {
                params_rev.push(db);
                params_rev.push(dk);
            }
            grad = g.input;
        }
        params_rev.reverse();
        Ok(Gradients {
            params: params_rev,
            input: grad,
        })
    }
}

/// Builds an architecture with zero-valued parameters.
///
/// - `vgg16_headless`: VGG16 convolutional stack without the dense top,
///   floor pooling (50→25→12→6→3→1), emits 1×1×512.
/// - `tiny_cnn`: two 64-channel convs, pool, one 64-channel conv, pool
///   (ceil: 50→25→13), dropout, flatten (10816), dense 128, dropout,
///   dense 2, softmax.
/// - `classifier_head_2` / `classifier_head_7`: flatten 512, dense 256,
///   dropout, dense 2 or 7, softmax.
///
/// Every convolution and the hidden dense layers are followed by ReLU.
pub fn build_architecture(arch: ArchId) -> Result<Model> {
    build_with_dropout(arch, DEFAULT_DROPOUT)
}

pub fn build_with_dropout(arch: ArchId, dropout: f64) -> Result<Model> {
    let relu = |name: &str| Layer::simple(name, LayerOp::Relu);
    let image_input = vec![PATCH_SIZE, PATCH_SIZE, 3];
    match arch {
        ArchId::Vgg16Headless => {
            let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
            let mut layers = Vec::new();
            let mut cin = 3;
            for (b, &(convs, width)) in blocks.iter().enumerate() {
                for c in 0..convs {
                    let name = format!("block{}_conv{}", b + 1, c + 1);
                    layers.push(Layer::conv2d(&name, cin, width));
                    layers.push(relu(&format!("{name}_relu")));
                    cin = width;
                }
                layers.push(Layer::maxpool(
                    &format!("block{}_pool", b + 1),
                    PoolRounding::Floor,
                ));
            }
            Model::new(arch, image_input, layers, PoolRounding::Floor)
        }
        ArchId::TinyCnn => {
            let layers = vec![
                Layer::conv2d("block1_conv1", 3, 64),
                relu("block1_conv1_relu"),
                Layer::conv2d("block1_conv2", 64, 64),
                relu("block1_conv2_relu"),
                Layer::maxpool("block1_pool", PoolRounding::Ceil),
                Layer::conv2d("block2_conv1", 64, 64),
                relu("block2_conv1_relu"),
                Layer::maxpool("block2_pool", PoolRounding::Ceil),
                Layer::dropout("dropout1", dropout)?,
                Layer::simple("flatten1", LayerOp::Flatten),
                Layer::dense("dense1", 13 * 13 * 64, 128),
                relu("dense1_relu"),
                Layer::dropout("dropout2", dropout)?,
                Layer::dense("dense2", 128, 2),
                Layer::simple("softmax", LayerOp::Softmax),
            ];
            Model::new(arch, image_input, layers, PoolRounding::Ceil)
        }
        ArchId::ClassifierHead2 | ArchId::ClassifierHead7 => {
            let classes = if arch == ArchId::ClassifierHead2 {
                2
            } else {
                7
            };
            let layers = vec![
                Layer::simple("flatten1", LayerOp::Flatten),
                Layer::dense("dense1", FEATURE_DIM, 256),
                relu("dense1_relu"),
                Layer::dropout("dropout1", dropout)?,
                Layer::dense("dense2", 256, classes),
                Layer::simple("softmax", LayerOp::Softmax),
            ];
            Model::new(arch, vec![1, 1, FEATURE_DIM], layers, PoolRounding::Floor)
        }
    }
}

/// Builds `arch` and initialises it from `seed`.
pub fn build_initialized(arch: ArchId, seed: u64) -> Result<Model> {
    let mut m = build_architecture(arch)?;
    m.initialize(&mut Rng::new(seed));
    Ok(m)
}

/// 512-dimensional headless-VGG16 descriptor of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::dim(
                "feature vector",
                &[FEATURE_DIM],
                &[values.len()],
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// As the `1×1×512` tensor the classifier heads consume.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(vec![1, 1, FEATURE_DIM], self.0.clone())
    }
}

/// Runs the headless VGG16 on a 50×50×3 patch.
pub fn extract_features(model: &Model, img: &Image) -> Result<FeatureVector> {
    if model.arch() != ArchId::Vgg16Headless {
        return Err(Error::Configuration(format!(
            "feature extraction needs vgg16_headless, got {}",
            model.arch()
        )));
    }
    let out = model.infer(&img.to_tensor())?;
    FeatureVector::new(out.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vgg_emits_512x1x1() {
        let m = build_architecture(ArchId::Vgg16Headless).unwrap();
        assert_eq!(m.output_shape(), &[1, 1, 512]);
        let out = m.infer(&Tensor::zeros(&[50, 50, 3])).unwrap();
        assert_eq!(out.shape(), &[1, 1, 512]);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(m.pooling_rounding(), PoolRounding::Floor);
        assert_eq!(m.parameters().len(), 26);
    }

    #[test]
    fn tiny_cnn_flatten_width() {
        let m = build_architecture(ArchId::TinyCnn).unwrap();
        assert_eq!(m.flatten_width(), Some(10816));
        assert_eq!(m.num_classes(), Some(2));
        assert_eq!(m.pooling_rounding(), PoolRounding::Ceil);
    }

    #[test]
    fn heads_output_widths() {
        let h2 = build_architecture(ArchId::ClassifierHead2).unwrap();
        let h7 = build_architecture(ArchId::ClassifierHead7).unwrap();
        assert_eq!(h2.output_shape(), &[2]);
        assert_eq!(h7.output_shape(), &[7]);
        assert_eq!(h7.input_shape(), &[1, 1, 512]);
        assert_eq!(h7.flatten_width(), Some(512));
    }

    #[test]
    fn unknown_arch_is_config_error() {
        assert!(matches!(
            "vgg19".parse::<ArchId>(),
            Err(Error::Configuration(_))
        ));
        for a in ArchId::ALL {
            assert_eq!(a.as_str().parse::<ArchId>().unwrap(), a);
        }
    }

    #[test]
    fn mismatched_layer_stack_rejected() {
        let layers = vec![Layer::dense("a", 4, 3), Layer::dense("b", 5, 2)];
        assert!(Model::new(
            ArchId::ClassifierHead2,
            vec![4],
            layers,
            PoolRounding::Floor
        )
        .is_err());
    }

    #[test]
    fn infer_is_deterministic_and_checks_shape() {
        let m = build_initialized(ArchId::ClassifierHead7, 3).unwrap();
        let mut rng = Rng::new(1);
        let x = Tensor::new(vec![1, 1, 512], (0..512).map(|_| rng.next_f64()).collect()).unwrap();
        let a = m.infer(&x).unwrap();
        assert_eq!(a, m.infer(&x).unwrap());
        assert!((a.sum() - 1.0).abs() < 1e-9);
        assert!(m.infer(&Tensor::zeros(&[512])).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = build_initialized(ArchId::ClassifierHead2, 5).unwrap();
        let x = Tensor::filled(&[1, 1, 512], 0.3);
        let (_, cache) = m.forward(&x, Mode::Train, Some(&mut Rng::new(2))).unwrap();
        let g = m.backward(&cache.unwrap(), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(g.params.len(), 4);
        for (p, (_, t)) in g.params.iter().zip(m.parameters()) {
            assert_eq!(p.shape(), t.shape());
            assert!(p.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let mut m = build_initialized(ArchId::ClassifierHead2, 5).unwrap();
        let x = Tensor::filled(&[1, 1, 512], 0.3);
        let (_, cache) = m.forward(&x, Mode::Train, Some(&mut Rng::new(2))).unwrap();
        m.parameters_mut()[0].data_mut()[0] += 1.0;
        assert!(matches!(
            m.backward(&cache.unwrap(), &Tensor::zeros(&[2])),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn train_mode_dropout_needs_rng() {
        let m = build_initialized(ArchId::ClassifierHead2, 5).unwrap();
        let x = Tensor::filled(&[1, 1, 512], 0.3);
        assert!(m.forward(&x, Mode::Train, None).is_err());
    }

    #[test]
    fn features_of_zero_image_with_zero_weights() {
        let m = build_architecture(ArchId::Vgg16Headless).unwrap();
        let img = Image::filled(50, 50, 3, 0.0).unwrap();
        let f = extract_features(&m, &img).unwrap();
        assert_eq!(f.values().len(), 512);
        assert!(f.values().iter().all(|&v| v == 0.0));
        let wrong = Image::filled(40, 50, 3, 0.0).unwrap();
        assert!(matches!(
            extract_features(&m, &wrong),
            Err(Error::Dimension { .. })
        ));
        let tiny = build_architecture(ArchId::TinyCnn).unwrap();
        assert!(extract_features(&tiny, &img).is_err());
    }
}
