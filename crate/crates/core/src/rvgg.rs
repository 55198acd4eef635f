//! The reduced-VGG classifier: seven 3x3 convolutions in three pooled blocks,
//! two hidden fully-connected layers with 50% dropout, and a 2-way head —
//! optionally prefixed by the spatial attention layer so the input montage
//! may vary per sample.

use crate::attention::{
    forward_with_table, spatial_attention_backward, DropRegion, ForwardCache, ScoreTable,
    SpatialAttentionParams,
};
use crate::error::{Error, Result};
use crate::nn;
use crate::rng;
use crate::tensor::Tensor;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Unscaled layer plan: filter counts and hidden units of the trunk.
const CONV_FILTERS: [usize; 7] = [16, 16, 32, 32, 64, 64, 64];
const HIDDEN_UNITS: usize = 1024;
const CLASSES: usize = 2;

/// Structural description of a model; everything needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Channel-axis extent of the single input plane the trunk sees. Equals
    /// `d1` when attention is enabled, otherwise the montage channel count.
    pub input_channels: usize,
    /// Time-axis extent of the input plane.
    pub input_time: usize,
    /// Divisor applied to filter and hidden-unit counts for desk-scale runs.
    pub scale: usize,
    pub use_attention: bool,
    pub d1: usize,
    pub k: usize,
    pub mix_bias: bool,
}

impl ModelSpec {
    /// Plain trunk on a fixed `[channels, time]` input.
    pub fn rvgg(input_channels: usize, input_time: usize, scale: usize) -> ModelSpec {
        ModelSpec {
            input_channels,
            input_time,
            scale,
            use_attention: false,
            d1: 0,
            k: 0,
            mix_bias: true,
        }
    }

    /// Attention-harmonized model: any montage in, `d1` channels into the trunk.
    pub fn with_attention(d1: usize, k: usize, input_time: usize, scale: usize) -> ModelSpec {
        ModelSpec {
            input_channels: d1,
            input_time,
            scale,
            use_attention: true,
            d1,
            k,
            mix_bias: true,
        }
    }

    fn scaled(&self, count: usize) -> Result<usize> {
        let v = count / self.scale;
        if v < 1 {
            return Err(Error::Config(format!(
                "scale {} reduces a layer of {count} units below 1",
                self.scale
            )));
        }
        Ok(v)
    }
}

/// One trunk layer with its parameters, if any.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv { w: Tensor, b: Tensor },
    Relu,
    Pool,
    Flatten,
    Dense { w: Tensor, b: Tensor },
    Dropout,
}

/// Per-layer forward state kept for the backward pass.
pub enum LayerCache {
    Conv { input: Tensor },
    Relu { input: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { input_shape: Vec<usize> },
    Dense { input: Tensor },
    Dropout { mask: nn::DropoutMask },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub attention: Option<SpatialAttentionParams>,
    pub layers: Vec<Layer>,
}

fn he_tensor<Rng: rand::Rng>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = dist.sample(rng);
    }
    t
}

/// Build the trunk of `spec` with He-initialized weights and zero biases.
/// At scale 1 on a `[23, 256]` input this is exactly the published layer
/// plan with 7,452,850 trainable parameters; the flattened size relies on
/// ceil-mode pooling (23 -> 12 -> 6 -> 3).
pub fn build_rvgg(spec: &ModelSpec, seed: u64) -> Result<Model> {
    if spec.input_channels < 1 || spec.input_time < 1 {
        return Err(Error::Config("input extents must be >= 1".to_string()));
    }
    if spec.scale < 1 {
        return Err(Error::Config("scale must be >= 1".to_string()));
    }
    let mut rng = rng::stream(seed, "model-init", &[]);
    let mut layers = Vec::new();
    let mut channels = 1usize;
    let mut h = spec.input_channels;
    let mut w = spec.input_time;
    for (idx, &filters) in CONV_FILTERS.iter().enumerate() {
        let cout = spec.scaled(filters)?;
        let fan_in = channels * 9;
        layers.push(Layer::Conv {
            w: he_tensor(&[cout, channels, 3, 3], fan_in, &mut rng),
            b: Tensor::zeros(&[cout]),
        });
        layers.push(Layer::Relu);
        channels = cout;
        // pools come after conv pairs 2 and 4 and the final triple
        if idx == 1 || idx == 3 || idx == 6 {
            layers.push(Layer::Pool);
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
    }
    layers.push(Layer::Flatten);
    let mut features = channels * h * w;
    let hidden = spec.scaled(HIDDEN_UNITS)?;
    for _ in 0..2 {
        layers.push(Layer::Dense {
            w: he_tensor(&[hidden, features], features, &mut rng),
            b: Tensor::zeros(&[hidden]),
        });
        layers.push(Layer::Relu);
        layers.push(Layer::Dropout);
        features = hidden;
    }
    layers.push(Layer::Dense {
        w: he_tensor(&[CLASSES, features], features, &mut rng),
        b: Tensor::zeros(&[CLASSES]),
    });

    let attention = if spec.use_attention {
        if spec.d1 < 1 || spec.k < 1 {
            return Err(Error::Config("attention needs d1 >= 1 and k >= 1".to_string()));
        }
        if spec.d1 != spec.input_channels {
            return Err(Error::Config(
                "attention output count must match trunk input channels".to_string(),
            ));
        }
        let mut arng = rng::stream(seed, "attention-init", &[]);
        Some(SpatialAttentionParams::init(
            spec.d1,
            spec.k,
            spec.mix_bias,
            &mut arng,
        ))
    } else {
        None
    };

    Ok(Model {
        spec: spec.clone(),
        attention,
        layers,
    })
}

/// Sum of all trainable tensor extents.
pub fn count_parameters(model: &Model) -> usize {
    model
        .param_views()
        .iter()
        .map(|(_, t)| t.len())
        .sum()
}

pub struct SampleCache {
    pub attention: Option<ForwardCache>,
    pub trunk: Vec<LayerCache>,
}

/// Gradients for every parameter tensor, aligned with [`Model::param_views`].
pub struct GradSet {
    pub tensors: Vec<Tensor>,
}

impl GradSet {
    pub fn zeros_like(model: &Model) -> GradSet {
        GradSet {
            tensors: model
                .param_views()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    /// Elementwise accumulate; used for the ordered batch reduction.
    pub fn add_assign(&mut self, other: &GradSet) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}

impl Model {
    /// Named views of every trainable tensor, in a fixed registry order:
    /// attention parameters first (when present), then trunk layers.
    pub fn param_views(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(a) = &self.attention {
            out.push(("attention.re".to_string(), &a.re));
            out.push(("attention.im".to_string(), &a.im));
            out.push(("attention.mix_w".to_string(), &a.mix_w));
            if a.mix_bias {
                out.push(("attention.mix_b".to_string(), &a.mix_b));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { w, b } | Layer::Dense { w, b } => {
                    out.push((format!("layer{i}.weight"), w));
                    out.push((format!("layer{i}.bias"), b));
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable counterpart of [`Model::param_views`], same order.
    pub fn param_views_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(a) = &mut self.attention {
            out.push(("attention.re".to_string(), &mut a.re));
            out.push(("attention.im".to_string(), &mut a.im));
            out.push(("attention.mix_w".to_string(), &mut a.mix_w));
            if a.mix_bias {
                out.push(("attention.mix_b".to_string(), &mut a.mix_b));
            }
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv { w, b } | Layer::Dense { w, b } => {
                    out.push((format!("layer{i}.weight"), w));
                    out.push((format!("layer{i}.bias"), b));
                }
                _ => {}
            }
        }
        out
    }

    /// Trunk forward on a `[1, H, W]` plane. `rng` drives the dropout masks
    /// and is only consulted in training mode.
    pub fn forward_trunk<R: rand::Rng>(
        &self,
        plane: Tensor,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = plane;
        for layer in &self.layers {
            match layer {
                Layer::Conv { w, b } => {
                    let out = nn::conv2d_3x3(&x, w, b)?;
                    caches.push(LayerCache::Conv { input: x });
                    x = out;
                }
                Layer::Relu => {
                    let out = nn::relu(&x);
                    caches.push(LayerCache::Relu { input: x });
                    x = out;
                }
                Layer::Pool => {
                    let shape = x.shape().to_vec();
                    let (out, argmax) = nn::maxpool2x2_ceil(&x)?;
                    caches.push(LayerCache::Pool {
                        input_shape: shape,
                        argmax,
                    });
                    x = out;
                }
                Layer::Flatten => {
                    let shape = x.shape().to_vec();
                    let n = x.len();
                    x = x.reshape(&[n])?;
                    caches.push(LayerCache::Flatten { input_shape: shape });
                }
                Layer::Dense { w, b } => {
                    let out = nn::dense(&x, w, b)?;
                    caches.push(LayerCache::Dense { input: x });
                    x = out;
                }
                Layer::Dropout => {
                    let (out, mask) = nn::dropout50(&x, rng, mode == Mode::Train);
                    caches.push(LayerCache::Dropout { mask });
                    x = out;
                }
            }
        }
        Ok((x, caches))
    }

    /// Trunk backward; returns per-layer parameter gradients (in registry
    /// order, trunk part) and the gradient with respect to the input plane.
    pub fn backward_trunk(
        &self,
        caches: &[LayerCache],
        dlogits: &Tensor,
        mode: Mode,
    ) -> Result<(Vec<Tensor>, Tensor)> {
        let mut grads_rev: Vec<Tensor> = Vec::new();
        let mut d = dlogits.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            match (layer, cache) {
                (Layer::Conv { w, .. }, LayerCache::Conv { input }) => {
                    let (din, dw, db) = nn::conv2d_3x3_backward(input, w, &d)?;
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    d = din;
                }
                (Layer::Relu, LayerCache::Relu { input }) => {
                    d = nn::relu_backward(input, &d)?;
                }
                (Layer::Pool, LayerCache::Pool { input_shape, argmax }) => {
                    d = nn::maxpool2x2_ceil_backward(input_shape, argmax, &d)?;
                }
                (Layer::Flatten, LayerCache::Flatten { input_shape }) => {
                    d = d.reshape(input_shape)?;
                }
                (Layer::Dense { w, .. }, LayerCache::Dense { input }) => {
                    let (din, dw, db) = nn::dense_backward(input, w, &d)?;
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    d = din;
                }
                (Layer::Dropout, LayerCache::Dropout { mask }) => {
                    d = nn::dropout50_backward(mask, &d, mode == Mode::Train)?;
                }
                _ => return Err(Error::Shape("trunk cache out of sync".to_string())),
            }
        }
        grads_rev.reverse();
        Ok((grads_rev, d))
    }

    /// Full forward for one sample.
    ///
    /// With attention: `x` is `[C, T]` and `table` must be the score table of
    /// the sample's montage. Without: `x` must be `[input_channels, time]`
    /// and is presented to the trunk as a single plane.
    pub fn forward_sample<R: rand::Rng>(
        &self,
        x: &Tensor,
        table: Option<&Arc<ScoreTable>>,
        drops: &[DropRegion],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Tensor, SampleCache)> {
        match &self.attention {
            Some(params) => {
                let table = table.ok_or_else(|| {
                    Error::Config("attention model needs a montage score table".to_string())
                })?;
                let (y, cache) = forward_with_table(params, table, x, drops)?;
                let t = y.shape()[1];
                let plane = y.reshape(&[1, self.spec.d1, t])?;
                let (logits, trunk) = self.forward_trunk(plane, mode, rng)?;
                Ok((
                    logits,
                    SampleCache {
                        attention: Some(cache),
                        trunk,
                    },
                ))
            }
            None => {
                let xs = x.shape();
                if xs.len() != 2 || xs[0] != self.spec.input_channels {
                    return Err(Error::Shape(format!(
                        "model expects [{}, {}] input, got {xs:?}",
                        self.spec.input_channels, self.spec.input_time
                    )));
                }
                let plane = x.clone().reshape(&[1, xs[0], xs[1]])?;
                let (logits, trunk) = self.forward_trunk(plane, mode, rng)?;
                Ok((
                    logits,
                    SampleCache {
                        attention: None,
                        trunk,
                    },
                ))
            }
        }
    }

    /// Full backward for one sample; gradients in registry order.
    pub fn backward_sample(
        &self,
        cache: &SampleCache,
        dlogits: &Tensor,
        mode: Mode,
    ) -> Result<GradSet> {
        let (trunk_grads, dplane) = self.backward_trunk(&cache.trunk, dlogits, mode)?;
        let mut tensors = Vec::new();
        if let Some(params) = &self.attention {
            let acache = cache
                .attention
                .as_ref()
                .ok_or_else(|| Error::Shape("missing attention cache".to_string()))?;
            let t = dplane.len() / self.spec.d1;
            let dy = dplane.reshape(&[self.spec.d1, t])?;
            let g = spatial_attention_backward(acache, &dy)?;
            tensors.push(g.d_re);
            tensors.push(g.d_im);
            tensors.push(g.d_mix_w);
            if params.mix_bias {
                tensors.push(g.d_mix_b);
            }
        }
        tensors.extend(trunk_grads);
        Ok(GradSet { tensors })
    }
}
