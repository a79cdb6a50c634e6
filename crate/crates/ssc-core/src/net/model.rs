//! Forward pass and hand-written backward pass.
//!
//! Intermediate values needed by the backward pass are recorded in an
//! [`ActivationCache`] keyed by layer name: `<layer>.in` for convolution
//! inputs, `<point>.pre` for activation inputs, and a handful of branch
//! values (`ga.gate`, `head.q`, block sums). Backward walks the same
//! structure in reverse, so a missing key is a hard error rather than a
//! silently wrong gradient.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::config::NetworkConfig;
use super::params::{NormState, ParameterSet};
use super::plan::{layers_of, ConvLayer};
use crate::error::{CoreError, Result};
use crate::fmath;
use crate::ops;
use crate::tensor::{ConvSpec, Scalar, Tensor};

/// Intermediate tensors recorded during a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ActivationCache<S: Scalar> {
    entries: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Default for ActivationCache<S> {
    fn default() -> Self {
        ActivationCache {
            entries: BTreeMap::new(),
        }
    }
}

impl<S: Scalar> ActivationCache<S> {
    pub fn put(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.entries
            .get(name)
            .ok_or_else(|| CoreError::MissingEntry(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub struct EncoderOut<S: Scalar> {
    pub low_level: Tensor<S>,
    pub stages: [Tensor<S>; 3],
}

pub struct HeadOut<S: Scalar> {
    pub occ_logits: Tensor<S>,
    pub sem_logits: Tensor<S>,
}

pub struct ForwardOut<S: Scalar> {
    pub occ_logits: Tensor<S>,
    pub sem_logits: Tensor<S>,
    /// Present iff the forward ran with `training = true`.
    pub cache: Option<ActivationCache<S>>,
}

pub struct BackwardOut<S: Scalar> {
    pub grads: ParameterSet<S>,
    pub grad_input: Tensor<S>,
}

/// Layer table shared by the forward and backward walks.
struct Ctx<'a, S: Scalar> {
    params: &'a ParameterSet<S>,
    specs: BTreeMap<String, (ConvSpec, bool)>,
    norm: Option<&'a NormState>,
}

impl<'a, S: Scalar> Ctx<'a, S> {
    fn new(
        config: &NetworkConfig,
        params: &'a ParameterSet<S>,
        norm: Option<&'a NormState>,
    ) -> Result<Self> {
        let mut specs = BTreeMap::new();
        for ConvLayer {
            name,
            spec,
            normalized,
        } in layers_of(config)?
        {
            specs.insert(name, (spec, normalized));
        }
        Ok(Ctx {
            params,
            specs,
            norm,
        })
    }

    fn spec(&self, layer: &str) -> Result<&(ConvSpec, bool)> {
        self.specs
            .get(layer)
            .ok_or_else(|| CoreError::MissingEntry(layer.to_string()))
    }

    /// Convolution (+ optional normalization), caching what backward needs.
    fn conv(
        &self,
        layer: &str,
        x: &Tensor<S>,
        cache: &mut Option<ActivationCache<S>>,
    ) -> Result<Tensor<S>> {
        let &(spec, normalized) = self.spec(layer)?;
        if let Some(c) = cache.as_mut() {
            c.put(format!("{layer}.in"), x.clone());
        }
        let (w, b) = self.params.conv(layer)?;
        let mut y = ops::conv3d(x, w, b, &spec)?;
        if normalized {
            if let Some(norm) = self.norm {
                if let Some(c) = cache.as_mut() {
                    c.put(format!("{layer}.raw"), y.clone());
                }
                let (mean, var) = norm.stats(layer).ok_or_else(|| {
                    CoreError::MissingEntry(format!("norm stats for `{layer}`"))
                })?;
                normalize_channels(&mut y, mean, var, norm.epsilon);
            }
        }
        Ok(y)
    }

    /// Backward of [`Ctx::conv`]: accumulates weight/bias gradients and
    /// returns the gradient with respect to the layer input.
    fn conv_backward(
        &self,
        layer: &str,
        grad_out: &Tensor<S>,
        cache: &ActivationCache<S>,
        grads: &mut ParameterSet<S>,
    ) -> Result<Tensor<S>> {
        let &(spec, normalized) = self.spec(layer)?;
        let mut grad_out = grad_out;
        let scaled;
        if normalized {
            if let Some(norm) = self.norm {
                let (_, var) = norm.stats(layer).ok_or_else(|| {
                    CoreError::MissingEntry(format!("norm stats for `{layer}`"))
                })?;
                scaled = scale_grad_by_inv_std(grad_out, var, norm.epsilon)?;
                grad_out = &scaled;
            }
        }
        let input = cache.get(&format!("{layer}.in"))?;
        let (w, _) = self.params.conv(layer)?;
        let g = ops::conv3d_backward(grad_out, input, w, &spec)?;
        add_into(grads.get_mut(&format!("{layer}.weight"))?, &g.grad_weights)?;
        add_into(grads.get_mut(&format!("{layer}.bias"))?, &g.grad_bias)?;
        Ok(g.grad_input)
    }
}

/// Standardizes each channel with the given running statistics.
fn normalize_channels<S: Scalar>(y: &mut Tensor<S>, mean: &[f64], var: &[f64], eps: f64) {
    let spatial = y.len() / mean.len();
    for (ch, chunk) in y.data_mut().chunks_mut(spatial).enumerate() {
        let m = mean[ch];
        let inv = 1.0 / fmath::sqrt(var[ch] + eps);
        for v in chunk {
            *v = S::from_f64((v.to_f64() - m) * inv);
        }
    }
}

/// The statistics are constants in the backward pass, so the gradient is
/// scaled by `1/sqrt(var + eps)` per channel.
fn scale_grad_by_inv_std<S: Scalar>(grad: &Tensor<S>, var: &[f64], eps: f64) -> Result<Tensor<S>> {
    let mut out = grad.clone();
    let spatial = grad.len() / var.len();
    for (ch, chunk) in out.data_mut().chunks_mut(spatial).enumerate() {
        let inv = 1.0 / fmath::sqrt(var[ch] + eps);
        for v in chunk {
            *v = S::from_f64(v.to_f64() * inv);
        }
    }
    Ok(out)
}

fn add_into<S: Scalar>(dst: &mut Tensor<S>, src: &Tensor<S>) -> Result<()> {
    dst.check_same_shape(src, "grad accumulate")?;
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d = S::from_f64(d.to_f64() + s.to_f64());
    }
    Ok(())
}

fn relu_point<S: Scalar>(
    point: &str,
    y: Tensor<S>,
    cache: &mut Option<ActivationCache<S>>,
) -> Tensor<S> {
    if let Some(c) = cache.as_mut() {
        c.put(format!("{point}.pre"), y.clone());
    }
    ops::relu(&y)
}

/// Stem, downsampling convolutions and the three residual stages.
/// Returns the full-resolution low-level features and the three stage
/// outputs at the downsampled resolution.
pub fn encoder_forward<S: Scalar>(
    input: &Tensor<S>,
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    norm: Option<&NormState>,
    cache: &mut Option<ActivationCache<S>>,
) -> Result<EncoderOut<S>> {
    let (c, d, h, w) = input.dims4("encoder_forward")?;
    if c != 1 {
        return Err(CoreError::ShapeMismatch {
            op: "encoder_forward",
            detail: format!("input channel axis: expected 1, got {c}"),
        });
    }
    config.check_input_dims([d, h, w])?;
    let ctx = Ctx::new(config, params, norm)?;

    let y = ctx.conv("stem.conv1", input, cache)?;
    let x = relu_point("stem.conv1", y, cache);
    let y = ctx.conv("stem.conv2", &x, cache)?;
    let low_level = relu_point("stem.conv2", y, cache);

    let mut x = low_level.clone();
    for i in 0..config.num_down_convs() {
        let name = format!("down.conv{}", i + 1);
        let y = ctx.conv(&name, &x, cache)?;
        x = relu_point(&name, y, cache);
    }

    let mut stages: Vec<Tensor<S>> = Vec::with_capacity(3);
    for (s, &channels) in config.stage_channels.iter().enumerate() {
        let proj = format!("stage{}.proj", s + 1);
        if ctx.specs.contains_key(&proj) {
            x = ctx.conv(&proj, &x, cache)?;
        }
        debug_assert_eq!(x.shape()[0], channels);
        for b in 0..config.blocks_per_stage[s] {
            let blk = format!("stage{}.block{}", s + 1, b);
            let u = ctx.conv(&format!("{blk}.conv1"), &x, cache)?;
            let ur = relu_point(&format!("{blk}.conv1"), u, cache);
            let v = ctx.conv(&format!("{blk}.conv2"), &ur, cache)?;
            let sum = ops::add(&x, &v)?;
            x = relu_point(&format!("{blk}.sum"), sum, cache);
        }
        stages.push(x.clone());
    }
    let [s1, s2, s3]: [Tensor<S>; 3] = stages.try_into().expect("three stages");
    Ok(EncoderOut {
        low_level,
        stages: [s1, s2, s3],
    })
}

/// Channel attention gate: global average pooling, a two-layer
/// bottleneck, and a sigmoid that rescales the input channels.
pub fn ga_module<S: Scalar>(
    x: &Tensor<S>,
    params: &ParameterSet<S>,
    cache: &mut Option<ActivationCache<S>>,
) -> Result<Tensor<S>> {
    let (c, _, _, _) = x.dims4("ga_module")?;
    let (w1, _) = params.conv("ga.fc1")?;
    let mid = w1.shape()[0];
    let fc1 = ConvSpec::isotropic(c, mid, 1, 1, 1, 0);
    let fc2 = ConvSpec::isotropic(mid, c, 1, 1, 1, 0);

    if let Some(cc) = cache.as_mut() {
        cc.put("ga.in", x.clone());
    }
    let pooled = ops::global_avg_pool3d(x)?;
    if let Some(cc) = cache.as_mut() {
        cc.put("ga.fc1.in", pooled.clone());
    }
    let (w1, b1) = params.conv("ga.fc1")?;
    let z = ops::conv3d(&pooled, w1, b1, &fc1)?;
    let zr = relu_point("ga.fc1", z, cache);
    if let Some(cc) = cache.as_mut() {
        cc.put("ga.fc2.in", zr.clone());
    }
    let (w2, b2) = params.conv("ga.fc2")?;
    let gate_pre = ops::conv3d(&zr, w2, b2, &fc2)?;
    let gate = ops::sigmoid(&gate_pre);
    if let Some(cc) = cache.as_mut() {
        cc.put("ga.gate", gate.clone());
    }
    let scale = Tensor::from_vec(&[c], gate.data().to_vec())?;
    ops::scale_per_channel(x, &scale)
}

fn ga_backward<S: Scalar>(
    grad: &Tensor<S>,
    params: &ParameterSet<S>,
    cache: &ActivationCache<S>,
    grads: &mut ParameterSet<S>,
) -> Result<Tensor<S>> {
    let x = cache.get("ga.in")?;
    let gate = cache.get("ga.gate")?;
    let (c, _, _, _) = x.dims4("ga_backward")?;
    let scale = Tensor::from_vec(&[c], gate.data().to_vec())?;
    let (mut grad_x, grad_scale) = ops::scale_per_channel_backward(grad, x, &scale)?;
    let grad_gate = Tensor::from_vec(&[c, 1, 1, 1], grad_scale.into_data())?;
    let grad_gate_pre = ops::sigmoid_backward(&grad_gate, gate)?;

    let (w2, _) = params.conv("ga.fc2")?;
    let mid = w2.shape()[1];
    let fc1 = ConvSpec::isotropic(c, mid, 1, 1, 1, 0);
    let fc2 = ConvSpec::isotropic(mid, c, 1, 1, 1, 0);

    let zr = cache.get("ga.fc2.in")?;
    let g2 = ops::conv3d_backward(&grad_gate_pre, zr, w2, &fc2)?;
    add_into(grads.get_mut("ga.fc2.weight")?, &g2.grad_weights)?;
    add_into(grads.get_mut("ga.fc2.bias")?, &g2.grad_bias)?;
    let grad_z = ops::relu_backward(&g2.grad_input, cache.get("ga.fc1.pre")?)?;

    let pooled = cache.get("ga.fc1.in")?;
    let (w1, _) = params.conv("ga.fc1")?;
    let g1 = ops::conv3d_backward(&grad_z, pooled, w1, &fc1)?;
    add_into(grads.get_mut("ga.fc1.weight")?, &g1.grad_weights)?;
    add_into(grads.get_mut("ga.fc1.bias")?, &g1.grad_bias)?;

    let grad_pool = ops::global_avg_pool3d_backward(&g1.grad_input, x.shape())?;
    add_into(&mut grad_x, &grad_pool)?;
    Ok(grad_x)
}

/// Multi-level feature aggregation. On the full path the three stage
/// outputs are concatenated, reduced, gated, upsampled and fused with the
/// low-level features; with `use_feature_agg` off only the last stage is
/// upsampled and reduced.
pub fn aggregate<S: Scalar>(
    low_level: &Tensor<S>,
    stages: &[Tensor<S>; 3],
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    cache: &mut Option<ActivationCache<S>>,
) -> Result<Tensor<S>> {
    let factor = [config.downsample_factor; 3];
    if config.use_feature_agg {
        let cat = ops::concat_channels(&[&stages[0], &stages[1], &stages[2]])?;
        let reduced = ctx_free_conv(params, config, "agg.reduce", &cat, cache)?;
        let gated = if config.use_ga {
            ga_module(&reduced, params, cache)?
        } else {
            reduced
        };
        if let Some(c) = cache.as_mut() {
            c.put("agg.up.in", gated.clone());
        }
        let up = ops::upsample3d(&gated, factor)?;
        let cat2 = ops::concat_channels(&[&up, low_level])?;
        let fused = ctx_free_conv(params, config, "agg.fuse", &cat2, cache)?;
        Ok(relu_point("agg.fuse", fused, cache))
    } else {
        let gated = if config.use_ga {
            ga_module(&stages[2], params, cache)?
        } else {
            stages[2].clone()
        };
        if let Some(c) = cache.as_mut() {
            c.put("agg.up.in", gated.clone());
        }
        let up = ops::upsample3d(&gated, factor)?;
        let fused = ctx_free_conv(params, config, "agg.direct", &up, cache)?;
        Ok(relu_point("agg.direct", fused, cache))
    }
}

/// Convolution by layer name without building a full `Ctx` (aggregation
/// and head layers are never normalized).
fn ctx_free_conv<S: Scalar>(
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    layer: &str,
    x: &Tensor<S>,
    cache: &mut Option<ActivationCache<S>>,
) -> Result<Tensor<S>> {
    let layers = layers_of(config)?;
    let spec = layers
        .iter()
        .find(|l| l.name == layer)
        .map(|l| l.spec)
        .ok_or_else(|| CoreError::MissingEntry(layer.to_string()))?;
    if let Some(c) = cache.as_mut() {
        c.put(format!("{layer}.in"), x.clone());
    }
    let (w, b) = params.conv(layer)?;
    ops::conv3d(x, w, b, &spec)
}

/// Two-step prediction: binary occupancy first, then semantics from the
/// feature map concatenated with the softmax-normalized occupancy (the
/// concatenation is skipped when `use_condition` is off, but the
/// occupancy logits are produced either way).
pub fn conditioned_head<S: Scalar>(
    feature: &Tensor<S>,
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    cache: &mut Option<ActivationCache<S>>,
) -> Result<HeadOut<S>> {
    let occ_logits = ctx_free_conv(params, config, "head.occ", feature, cache)?;
    let sem_logits = if config.use_condition {
        let q = ops::softmax_channels(&occ_logits)?;
        if let Some(c) = cache.as_mut() {
            c.put("head.q", q.clone());
        }
        let cat = ops::concat_channels(&[feature, &q])?;
        ctx_free_conv(params, config, "head.sem", &cat, cache)?
    } else {
        ctx_free_conv(params, config, "head.sem", feature, cache)?
    };
    Ok(HeadOut {
        occ_logits,
        sem_logits,
    })
}

/// Whole-network forward pass. The cache is returned iff `training`.
pub fn forward<S: Scalar>(
    input: &Tensor<S>,
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    norm: Option<&NormState>,
    training: bool,
) -> Result<ForwardOut<S>> {
    let mut cache = if training {
        Some(ActivationCache::default())
    } else {
        None
    };
    let enc = encoder_forward(input, params, config, norm, &mut cache)?;
    let feature = aggregate(&enc.low_level, &enc.stages, params, config, &mut cache)?;
    let head = conditioned_head(&feature, params, config, &mut cache)?;
    Ok(ForwardOut {
        occ_logits: head.occ_logits,
        sem_logits: head.sem_logits,
        cache,
    })
}

fn head_backward<S: Scalar>(
    grad_occ: &Tensor<S>,
    grad_sem: &Tensor<S>,
    ctx: &Ctx<'_, S>,
    config: &NetworkConfig,
    cache: &ActivationCache<S>,
    grads: &mut ParameterSet<S>,
) -> Result<Tensor<S>> {
    let grad_sem_in = ctx.conv_backward("head.sem", grad_sem, cache, grads)?;
    let (grad_feature_sem, grad_occ_total) = if config.use_condition {
        let parts =
            ops::concat_channels_backward(&grad_sem_in, &[config.agg_channels, 2])?;
        let mut it = parts.into_iter();
        let grad_feature = it.next().expect("feature slice");
        let grad_q = it.next().expect("occupancy slice");
        let q = cache.get("head.q")?;
        let grad_from_sem = ops::softmax_backward(q, &grad_q)?;
        let total = ops::add(grad_occ, &grad_from_sem)?;
        (grad_feature, total)
    } else {
        (grad_sem_in, grad_occ.clone())
    };
    let grad_feature_occ = ctx.conv_backward("head.occ", &grad_occ_total, cache, grads)?;
    ops::add(&grad_feature_sem, &grad_feature_occ)
}

#[allow(clippy::type_complexity)]
fn aggregate_backward<S: Scalar>(
    grad_feature: &Tensor<S>,
    ctx: &Ctx<'_, S>,
    config: &NetworkConfig,
    cache: &ActivationCache<S>,
    grads: &mut ParameterSet<S>,
    stage_shapes: &[Vec<usize>; 3],
    low_shape: &[usize],
) -> Result<(Tensor<S>, [Tensor<S>; 3])> {
    let factor = [config.downsample_factor; 3];
    if config.use_feature_agg {
        let g = ops::relu_backward(grad_feature, cache.get("agg.fuse.pre")?)?;
        let g_cat2 = ctx.conv_backward("agg.fuse", &g, cache, grads)?;
        let parts = ops::concat_channels_backward(
            &g_cat2,
            &[config.agg_channels, config.stem_channels],
        )?;
        let mut it = parts.into_iter();
        let g_up = it.next().expect("upsampled slice");
        let grad_low = it.next().expect("low-level slice");
        let up_in_shape = cache.get("agg.up.in")?.shape().to_vec();
        let g_gated = ops::upsample3d_backward(&g_up, &up_in_shape, factor)?;
        let g_reduced = if config.use_ga {
            ga_backward(&g_gated, ctx.params, cache, grads)?
        } else {
            g_gated
        };
        let g_cat = ctx.conv_backward("agg.reduce", &g_reduced, cache, grads)?;
        let parts = ops::concat_channels_backward(&g_cat, &config.stage_channels)?;
        let mut it = parts.into_iter();
        let g1 = it.next().expect("stage 1 slice");
        let g2 = it.next().expect("stage 2 slice");
        let g3 = it.next().expect("stage 3 slice");
        Ok((grad_low, [g1, g2, g3]))
    } else {
        let g = ops::relu_backward(grad_feature, cache.get("agg.direct.pre")?)?;
        let g_up = ctx.conv_backward("agg.direct", &g, cache, grads)?;
        let up_in_shape = cache.get("agg.up.in")?.shape().to_vec();
        let g_gated = ops::upsample3d_backward(&g_up, &up_in_shape, factor)?;
        let g3 = if config.use_ga {
            ga_backward(&g_gated, ctx.params, cache, grads)?
        } else {
            g_gated
        };
        Ok((
            Tensor::zeros(low_shape),
            [
                Tensor::zeros(&stage_shapes[0]),
                Tensor::zeros(&stage_shapes[1]),
                g3,
            ],
        ))
    }
}

fn encoder_backward_inner<S: Scalar>(
    grad_low: &Tensor<S>,
    grad_stages: &[Tensor<S>; 3],
    ctx: &Ctx<'_, S>,
    config: &NetworkConfig,
    cache: &ActivationCache<S>,
    grads: &mut ParameterSet<S>,
) -> Result<Tensor<S>> {
    // Stage blocks in reverse; stage outputs feed both the next stage and
    // the aggregation branch, so stage gradients join at stage boundaries.
    let mut g = grad_stages[2].clone();
    for s in (0..3).rev() {
        for b in (0..config.blocks_per_stage[s]).rev() {
            let blk = format!("stage{}.block{}", s + 1, b);
            let g_sum = ops::relu_backward(&g, cache.get(&format!("{blk}.sum.pre"))?)?;
            let g_ur = ctx.conv_backward(&format!("{blk}.conv2"), &g_sum, cache, grads)?;
            let g_u = ops::relu_backward(&g_ur, cache.get(&format!("{blk}.conv1.pre"))?)?;
            let g_x = ctx.conv_backward(&format!("{blk}.conv1"), &g_u, cache, grads)?;
            g = ops::add(&g_sum, &g_x)?;
        }
        let proj = format!("stage{}.proj", s + 1);
        if ctx.specs.contains_key(&proj) {
            g = ctx.conv_backward(&proj, &g, cache, grads)?;
        }
        if s > 0 {
            g = ops::add(&g, &grad_stages[s - 1])?;
        }
    }

    for i in (0..config.num_down_convs()).rev() {
        let name = format!("down.conv{}", i + 1);
        let g_pre = ops::relu_backward(&g, cache.get(&format!("{name}.pre"))?)?;
        g = ctx.conv_backward(&name, &g_pre, cache, grads)?;
    }

    // The low-level features feed both the trunk and the fuse concat.
    g = ops::add(&g, grad_low)?;
    let g_pre = ops::relu_backward(&g, cache.get("stem.conv2.pre")?)?;
    g = ctx.conv_backward("stem.conv2", &g_pre, cache, grads)?;
    let g_pre = ops::relu_backward(&g, cache.get("stem.conv1.pre")?)?;
    ctx.conv_backward("stem.conv1", &g_pre, cache, grads)
}

/// Backward through the encoder alone, from gradients on the low-level
/// features and the three stage outputs (used directly by the
/// receptive-field probe).
pub fn encoder_backward<S: Scalar>(
    grad_low: &Tensor<S>,
    grad_stages: &[Tensor<S>; 3],
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    norm: Option<&NormState>,
    cache: &ActivationCache<S>,
) -> Result<BackwardOut<S>> {
    let ctx = Ctx::new(config, params, norm)?;
    let mut grads = params.zeros_like();
    let grad_input =
        encoder_backward_inner(grad_low, grad_stages, &ctx, config, cache, &mut grads)?;
    Ok(BackwardOut { grads, grad_input })
}

/// Whole-network backward pass from gradients on both logit volumes.
pub fn backward<S: Scalar>(
    grad_occ: &Tensor<S>,
    grad_sem: &Tensor<S>,
    params: &ParameterSet<S>,
    config: &NetworkConfig,
    norm: Option<&NormState>,
    cache: &ActivationCache<S>,
) -> Result<BackwardOut<S>> {
    let ctx = Ctx::new(config, params, norm)?;
    let mut grads = params.zeros_like();
    let grad_feature = head_backward(grad_occ, grad_sem, &ctx, config, cache, &mut grads)?;

    // Stage shapes follow from the stem output extents and the factor.
    let low_shape: Vec<usize> = cache.get("stem.conv2.pre")?.shape().to_vec();
    let f = config.downsample_factor;
    let stage_spatial = [low_shape[1] / f, low_shape[2] / f, low_shape[3] / f];
    let stage_shapes: [Vec<usize>; 3] = [0, 1, 2].map(|s| {
        alloc::vec![
            config.stage_channels[s],
            stage_spatial[0],
            stage_spatial[1],
            stage_spatial[2],
        ]
    });
    let (grad_low, grad_stages) = aggregate_backward(
        &grad_feature,
        &ctx,
        config,
        cache,
        &mut grads,
        &stage_shapes,
        &low_shape,
    )?;
    let grad_input =
        encoder_backward_inner(&grad_low, &grad_stages, &ctx, config, cache, &mut grads)?;
    Ok(BackwardOut { grads, grad_input })
}
