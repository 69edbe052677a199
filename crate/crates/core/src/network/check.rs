//! Finite-difference verification of every layer's backward pass.
//!
//! Two families of checks are run. Isolated checks probe one layer at the
//! input it sees during a real forward pass, against the objective
//! `sum(r ⊙ layer(x))` for a fixed random `r`. End-to-end checks probe each
//! parameter tensor (and the input) through the full network's
//! cross-entropy loss. Dropout masks are frozen by reusing one seeded Rng
//! for every evaluation.

use serde::Serialize;

use super::layer::{Layer, LayerCache, LayerKind};
use super::loss::{cross_entropy, cross_entropy_grad};
use super::model::{ForwardCache, Mode, Model};
use crate::error::Result;
use crate::numerics::gradcheck::{compare, DEFAULT_EPSILON};
use crate::numerics::{Rng, Tensor};

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Coordinates probed per tensor; tensors this small are checked fully.
    pub samples_per_tensor: usize,
    pub seed: u64,
    /// Scales every analytic gradient by 1.05 (test hook).
    pub corrupt: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            tolerance: TOLERANCE,
            samples_per_tensor: 24,
            seed: crate::numerics::DEFAULT_SEED,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    /// `layer:<name>/<what>` for isolated checks, `model:<tensor>` for end-to-end.
    pub target: String,
    pub kind: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

/// Runs isolated and end-to-end checks for `model` on one labelled input.
pub fn check_model(
    model: &Model,
    input: &Tensor,
    label: usize,
    cfg: &CheckConfig,
) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let rng = Rng::new(cfg.seed);
    let dropout_rng = rng.child(1);

    // Inputs seen by each layer.
    let mut activations = Vec::with_capacity(model.layers().len() + 1);
    activations.push(input.clone());
    {
        let mut r = dropout_rng.clone();
        for layer in model.layers() {
            let x = activations.last().expect("non-empty");
            let (y, _) = layer.forward(x, true, Some(&mut r), false)?;
            activations.push(y);
        }
    }

    for (i, layer) in model.layers().iter().enumerate() {
        let x = &activations[i];
        let mut layer_rng = rng.child(100 + i as u64);
        let weights = Tensor::new(
            model.layer_output_shape(i).to_vec(),
            (0..model.layer_output_shape(i).iter().product())
                .map(|_| layer_rng.uniform(-1.0, 1.0))
                .collect(),
        )?;
        let mask_rng = layer_rng.child(7);
        rows.extend(check_layer(
            layer,
            x,
            &weights,
            &mask_rng,
            cfg,
            &mut layer_rng,
        )?);
        if layer.kind() == LayerKind::Softmax {
            rows.push(check_softmax_ce(layer, x, label, cfg)?);
        }
    }

    rows.extend(check_end_to_end(
        model,
        input,
        label,
        &dropout_rng,
        cfg,
        &mut rng.child(2),
    )?);
    Ok(rows)
}

fn row(
    target: String,
    kind: &str,
    max_rel_error: f64,
    checked: usize,
    cfg: &CheckConfig,
) -> CheckRow {
    CheckRow {
        target,
        kind: kind.to_string(),
        max_rel_error,
        checked,
        passed: checked > 0 && max_rel_error < cfg.tolerance,
    }
}

fn kind_name(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::Conv2d => "conv2d",
        LayerKind::Maxpool2d => "maxpool2d",
        LayerKind::Dense => "dense",
        LayerKind::Dropout => "dropout",
        LayerKind::Flatten => "flatten",
        LayerKind::Relu => "relu",
        LayerKind::Softmax => "softmax",
    }
}

fn maybe_corrupt(t: Tensor, cfg: &CheckConfig) -> Result<Tensor> {
    if cfg.corrupt {
        t.scale(1.05)
    } else {
        Ok(t)
    }
}

/// Picks up to `n` distinct coordinates satisfying `eligible`.
fn pick_coords(
    len: usize,
    n: usize,
    rng: &mut Rng,
    eligible: impl Fn(usize) -> bool,
) -> Vec<usize> {
    if len <= n {
        return (0..len).filter(|&i| eligible(i)).collect();
    }
    let mut chosen = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    let mut attempts = 0;
    while chosen.len() < n && attempts < 50 * n {
        attempts += 1;
        let i = rng.below(len);
        if seen.insert(i) && eligible(i) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen
}

fn layer_value(layer: &Layer, x: &Tensor, weights: &Tensor, mask_rng: &Rng) -> Result<f64> {
    let mut r = mask_rng.clone();
    let (y, _) = layer.forward(x, true, Some(&mut r), false)?;
    Ok(y.data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum())
}

fn layer_grads(
    layer: &Layer,
    x: &Tensor,
    weights: &Tensor,
    mask_rng: &Rng,
) -> Result<(Tensor, Option<(Tensor, Tensor)>)> {
    let mut r = mask_rng.clone();
    let (_, cache) = layer.forward(x, true, Some(&mut r), true)?;
    let g = layer.backward(&cache.expect("cache"), weights)?;
    Ok((g.input, g.params))
}

/// Whether perturbing `x[i]` by ±eps can change the winner of its pooling window.
fn pool_coord_is_stable(x: &Tensor, i: usize, eps: f64) -> bool {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ch = i % c;
    let pix = i / c;
    let (r, col) = (pix / w, pix % w);
    let (r0, c0) = (r / 2 * 2, col / 2 * 2);
    let v = x.data()[i];
    for rr in r0..(r0 + 2).min(h) {
        for cc in c0..(c0 + 2).min(w) {
            let j = (rr * w + cc) * c + ch;
            if j != i && (x.data()[j] - v).abs() <= 4.0 * eps {
                return false;
            }
        }
    }
    true
}

fn check_layer(
    layer: &Layer,
    x: &Tensor,
    weights: &Tensor,
    mask_rng: &Rng,
    cfg: &CheckConfig,
    rng: &mut Rng,
) -> Result<Vec<CheckRow>> {
    let kind = kind_name(layer.kind());
    let mut rows = Vec::new();
    let (dinput, dparams) = layer_grads(layer, x, weights, mask_rng)?;
    let eps = cfg.epsilon;

    let coords = match layer.kind() {
        LayerKind::Relu => pick_coords(x.len(), cfg.samples_per_tensor, rng, |i| {
            x.data()[i].abs() > 10.0 * eps
        }),
        LayerKind::Maxpool2d => pick_coords(x.len(), cfg.samples_per_tensor, rng, |i| {
            pool_coord_is_stable(x, i, eps)
        }),
        _ => pick_coords(x.len(), cfg.samples_per_tensor, rng, |_| true),
    };
    let objective = |t: &Tensor| layer_value(layer, t, weights, mask_rng);
    let analytic = maybe_corrupt(dinput, cfg)?;
    let r = compare(objective, x, &analytic, eps, &coords)?;
    rows.push(row(
        format!("layer:{}/input", layer.name),
        kind,
        r.max_rel_error,
        r.checked,
        cfg,
    ));

    if let Some((dk, db)) = dparams {
        let (kernel, bias) = layer.params().expect("parametric layer");
        for (what, param, grad, is_kernel) in
            [("kernel", kernel, dk, true), ("bias", bias, db, false)]
        {
            let objective = |t: &Tensor| {
                let mut probe = layer.clone();
                let (k, b) = probe.params_mut().expect("parametric layer");
                if is_kernel {
                    *k = t.clone();
                } else {
                    *b = t.clone();
                }
                layer_value(&probe, x, weights, mask_rng)
            };
            let coords = pick_coords(param.len(), cfg.samples_per_tensor, rng, |_| true);
            let r = compare(objective, param, &maybe_corrupt(grad, cfg)?, eps, &coords)?;
            rows.push(row(
                format!("layer:{}/{what}", layer.name),
                kind,
                r.max_rel_error,
                r.checked,
                cfg,
            ));
        }
    }
    Ok(rows)
}

fn check_softmax_ce(
    layer: &Layer,
    logits: &Tensor,
    label: usize,
    cfg: &CheckConfig,
) -> Result<CheckRow> {
    let value = |t: &Tensor| -> Result<f64> {
        let (p, _) = layer.forward(t, false, None, false)?;
        cross_entropy(&p, label)
    };
    let (p, cache) = layer.forward(logits, true, None, true)?;
    let upstream = cross_entropy_grad(&p, label)?;
    let cache: LayerCache = cache.expect("cache");
    let analytic = maybe_corrupt(layer.backward(&cache, &upstream)?.input, cfg)?;
    let objective = value;
    let coords: Vec<usize> = (0..logits.len()).collect();
    let r = compare(objective, logits, &analytic, cfg.epsilon, &coords)?;
    Ok(row(
        format!("layer:{}/softmax+cross_entropy", layer.name),
        "softmax",
        r.max_rel_error,
        r.checked,
        cfg,
    ))
}

/// ReLU on/off pattern and max-pool winners of a forward pass. Two points
/// with equal signatures lie on the same smooth piece of the loss.
fn kink_signature(cache: &ForwardCache) -> Vec<usize> {
    let mut sig = Vec::new();
    for lc in cache.layer_caches() {
        match lc {
            LayerCache::Relu { output } => sig.extend(output.iter().map(|&v| usize::from(v > 0.0))),
            LayerCache::Pool { argmax, .. } => sig.extend_from_slice(argmax),
            _ => {}
        }
    }
    sig
}

/// End-to-end checks skip coordinates whose ±eps stencil crosses a kink
/// anywhere in the network.
fn check_end_to_end(
    model: &Model,
    input: &Tensor,
    label: usize,
    dropout_rng: &Rng,
    cfg: &CheckConfig,
    rng: &mut Rng,
) -> Result<Vec<CheckRow>> {
    let run = |m: &Model, x: &Tensor| -> Result<(Tensor, ForwardCache)> {
        let mut r = dropout_rng.clone();
        let (p, cache) = m.forward(x, Mode::Train, Some(&mut r))?;
        Ok((p, cache.expect("train cache")))
    };
    let loss_of = |m: &Model, x: &Tensor| -> Result<f64> { cross_entropy(&run(m, x)?.0, label) };
    let (probs, cache) = run(model, input)?;
    let base = kink_signature(&cache);
    let grads = model.backward(&cache, &cross_entropy_grad(&probs, label)?)?;
    let eps = cfg.epsilon;
    // Signature of `f(t)` with `t[i]` nudged by ±eps matches the base one.
    let smooth_at = |probe: &dyn Fn(&Tensor) -> Result<Vec<usize>>, t: &Tensor, i: usize| -> bool {
        [eps, -eps].iter().all(|&d| {
            let mut p = t.clone();
            p.data_mut()[i] += d;
            probe(&p).map(|s| s == base).unwrap_or(false)
        })
    };

    let mut rows = Vec::new();
    let names: Vec<(String, Tensor)> = model
        .parameters()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    for (k, ((name, param), grad)) in names.iter().zip(grads.params).enumerate() {
        let with_param = |t: &Tensor| -> Result<Model> {
            let mut m = model.clone();
            m.set_parameter(k, t.clone())?;
            Ok(m)
        };
        let objective = |t: &Tensor| loss_of(&with_param(t)?, input);
        let signature = |t: &Tensor| -> Result<Vec<usize>> {
            Ok(kink_signature(&run(&with_param(t)?, input)?.1))
        };
        let coords = pick_coords(param.len(), cfg.samples_per_tensor, rng, |i| {
            smooth_at(&signature, param, i)
        });
        let res = compare(objective, param, &maybe_corrupt(grad, cfg)?, eps, &coords)?;
        rows.push(row(
            format!("model:{name}"),
            "end-to-end",
            res.max_rel_error,
            res.checked,
            cfg,
        ));
    }
    let objective = |t: &Tensor| loss_of(model, t);
    let signature = |t: &Tensor| -> Result<Vec<usize>> { Ok(kink_signature(&run(model, t)?.1)) };
    let coords = pick_coords(input.len(), cfg.samples_per_tensor, rng, |i| {
        smooth_at(&signature, input, i)
    });
    let res = compare(
        objective,
        input,
        &maybe_corrupt(grads.input, cfg)?,
        eps,
        &coords,
    )?;
    rows.push(row(
        "model:input".into(),
        "end-to-end",
        res.max_rel_error,
        res.checked,
        cfg,
    ));
    Ok(rows)
}
