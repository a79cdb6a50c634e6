//! Ordered enumeration of the network's layers.
//!
//! The plan is the single source of truth for parameter shapes and cost
//! accounting; the composition tests pin it against the actual forward
//! pass.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::NetworkConfig;
use crate::error::Result;
use crate::tensor::ConvSpec;

/// One parameterized convolution in forward order.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub name: String,
    pub spec: ConvSpec,
    /// Whether running-statistic normalization applies after this conv
    /// when the config flag is on.
    pub normalized: bool,
}

fn conv3x3(cin: usize, cout: usize, stride: usize, dilation: usize) -> ConvSpec {
    // Padding equals the dilation so stride-1 blocks preserve extents.
    ConvSpec::isotropic(cin, cout, 3, stride, dilation, dilation)
}

fn conv1x1(cin: usize, cout: usize) -> ConvSpec {
    ConvSpec::isotropic(cin, cout, 1, 1, 1, 0)
}

/// All parameterized layers of the architecture implied by `config`, in
/// the order the forward pass applies them.
pub fn conv_layers(config: &NetworkConfig) -> Result<Vec<ConvLayer>> {
    config.validate()?;
    let mut layers = Vec::new();
    let mut push = |name: String, spec: ConvSpec, normalized: bool| {
        layers.push(ConvLayer {
            name,
            spec,
            normalized,
        });
    };

    let stem = config.stem_channels;
    push("stem.conv1".into(), conv3x3(1, stem, 1, 1), true);
    push("stem.conv2".into(), conv3x3(stem, stem, 1, 1), true);

    let mut width = stem;
    for i in 0..config.num_down_convs() {
        let out = config.stage_channels[0];
        push(
            format!("down.conv{}", i + 1),
            conv3x3(width, out, 2, 1),
            true,
        );
        width = out;
    }

    let mut block_index = 0usize;
    for (s, &channels) in config.stage_channels.iter().enumerate() {
        if channels != width {
            push(
                format!("stage{}.proj", s + 1),
                conv1x1(width, channels),
                false,
            );
            width = channels;
        }
        for b in 0..config.blocks_per_stage[s] {
            let d = config.block_dilation(block_index);
            block_index += 1;
            push(
                format!("stage{}.block{}.conv1", s + 1, b),
                conv3x3(channels, channels, 1, d),
                true,
            );
            push(
                format!("stage{}.block{}.conv2", s + 1, b),
                conv3x3(channels, channels, 1, d),
                true,
            );
        }
    }

    let agg = config.agg_channels;
    if config.use_feature_agg {
        let cat: usize = config.stage_channels.iter().sum();
        push("agg.reduce".into(), conv1x1(cat, agg), false);
    }
    if config.use_ga {
        let c = config.ga_width();
        let mid = c / config.attention_reduction;
        push("ga.fc1".into(), conv1x1(c, mid), false);
        push("ga.fc2".into(), conv1x1(mid, c), false);
    }
    if config.use_feature_agg {
        push("agg.fuse".into(), conv1x1(agg + stem, agg), false);
    } else {
        push(
            "agg.direct".into(),
            conv1x1(config.stage_channels[2], agg),
            false,
        );
    }

    push("head.occ".into(), conv1x1(agg, 2), false);
    let sem_in = if config.use_condition { agg + 2 } else { agg };
    push("head.sem".into(), conv1x1(sem_in, config.sem_channels()), false);

    Ok(layers)
}

/// Cost category of one planned operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpKind {
    /// Parameterized convolution; MACs = out_voxels * Cout * Cin * k^3
    /// (zero-padded taps included).
    Conv { spec: ConvSpec, in_dims: [usize; 3] },
    /// Elementwise ops counted at one op per output element.
    Relu,
    Sigmoid,
    Add,
    ScalePerChannel,
    /// Counted at one op per input element (the adds of the mean).
    GlobalAvgPool { in_elements: u64 },
    /// Counted at one op per output element.
    Upsample,
    Softmax,
}

/// One step of the forward pass with its element counts.
#[derive(Debug, Clone)]
pub struct PlannedOp {
    pub name: String,
    pub kind: OpKind,
    /// Elements of the op's output tensor.
    pub out_elements: u64,
    /// Multiply-accumulates attributed to this op.
    pub macs: u64,
    /// Parameter elements (weights + bias) owned by this op.
    pub params: u64,
}

fn elementwise(name: &str, kind: OpKind, elems: u64) -> PlannedOp {
    PlannedOp {
        name: name.into(),
        kind,
        out_elements: elems,
        macs: elems,
        params: 0,
    }
}

fn find_layer<'a>(layers: &'a [ConvLayer], name: &str) -> &'a ConvLayer {
    layers
        .iter()
        .find(|l| l.name == name)
        .expect("layer present in plan")
}

fn push_conv(ops: &mut Vec<PlannedOp>, l: &ConvLayer, in_dims: [usize; 3]) -> Result<[usize; 3]> {
    let out = l.spec.out_dims(in_dims)?;
    let voxels = (out[0] * out[1] * out[2]) as u64;
    let k = l.spec.kernel;
    let macs = voxels
        * l.spec.out_channels as u64
        * l.spec.in_channels as u64
        * (k[0] * k[1] * k[2]) as u64;
    ops.push(PlannedOp {
        name: l.name.clone(),
        kind: OpKind::Conv {
            spec: l.spec,
            in_dims,
        },
        out_elements: voxels * l.spec.out_channels as u64,
        macs,
        params: l.spec.param_count() as u64,
    });
    Ok(out)
}

fn push_ga(
    ops: &mut Vec<PlannedOp>,
    layers: &[ConvLayer],
    config: &NetworkConfig,
    stage_voxels: u64,
) -> Result<()> {
    let c = config.ga_width() as u64;
    let mid = (config.ga_width() / config.attention_reduction) as u64;
    ops.push(PlannedOp {
        name: "ga.pool".into(),
        kind: OpKind::GlobalAvgPool {
            in_elements: c * stage_voxels,
        },
        out_elements: c,
        macs: c * stage_voxels,
        params: 0,
    });
    push_conv(ops, find_layer(layers, "ga.fc1"), [1, 1, 1])?;
    ops.push(elementwise("ga.fc1.relu", OpKind::Relu, mid));
    push_conv(ops, find_layer(layers, "ga.fc2"), [1, 1, 1])?;
    ops.push(elementwise("ga.gate.sigmoid", OpKind::Sigmoid, c));
    ops.push(elementwise(
        "ga.scale",
        OpKind::ScalePerChannel,
        c * stage_voxels,
    ));
    Ok(())
}

/// Full forward pass as a flat op list for an input of spatial extents
/// `dims`, mirroring the order of `model::forward`.
pub fn plan_ops(config: &NetworkConfig, dims: [usize; 3]) -> Result<Vec<PlannedOp>> {
    config.check_input_dims(dims)?;
    let layers = conv_layers(config)?;
    let mut ops: Vec<PlannedOp> = Vec::new();

    let full = dims;
    let stem = config.stem_channels;

    let mut cur = push_conv(&mut ops, find_layer(&layers, "stem.conv1"), full)?;
    ops.push(elementwise(
        "stem.conv1.relu",
        OpKind::Relu,
        (stem * cur[0] * cur[1] * cur[2]) as u64,
    ));
    cur = push_conv(&mut ops, find_layer(&layers, "stem.conv2"), cur)?;
    ops.push(elementwise(
        "stem.conv2.relu",
        OpKind::Relu,
        (stem * cur[0] * cur[1] * cur[2]) as u64,
    ));

    for i in 0..config.num_down_convs() {
        let name = format!("down.conv{}", i + 1);
        let l = find_layer(&layers, &name);
        let cout = l.spec.out_channels;
        cur = push_conv(&mut ops, l, cur)?;
        ops.push(elementwise(
            &format!("{name}.relu"),
            OpKind::Relu,
            (cout * cur[0] * cur[1] * cur[2]) as u64,
        ));
    }
    let low_dims = full;
    let stage_dims = cur;
    let stage_voxels = (cur[0] * cur[1] * cur[2]) as u64;

    for (s, &channels) in config.stage_channels.iter().enumerate() {
        let proj = format!("stage{}.proj", s + 1);
        if layers.iter().any(|l| l.name == proj) {
            push_conv(&mut ops, find_layer(&layers, &proj), stage_dims)?;
        }
        let elems = channels as u64 * stage_voxels;
        for b in 0..config.blocks_per_stage[s] {
            let blk = format!("stage{}.block{}", s + 1, b);
            push_conv(&mut ops, find_layer(&layers, &format!("{blk}.conv1")), stage_dims)?;
            ops.push(elementwise(&format!("{blk}.relu1"), OpKind::Relu, elems));
            push_conv(&mut ops, find_layer(&layers, &format!("{blk}.conv2")), stage_dims)?;
            ops.push(elementwise(&format!("{blk}.add"), OpKind::Add, elems));
            ops.push(elementwise(&format!("{blk}.relu2"), OpKind::Relu, elems));
        }
    }

    let agg = config.agg_channels as u64;
    let full_voxels = (full[0] * full[1] * full[2]) as u64;
    if config.use_feature_agg {
        push_conv(&mut ops, find_layer(&layers, "agg.reduce"), stage_dims)?;
        if config.use_ga {
            push_ga(&mut ops, &layers, config, stage_voxels)?;
        }
        ops.push(elementwise(
            "agg.upsample",
            OpKind::Upsample,
            agg * full_voxels,
        ));
        push_conv(&mut ops, find_layer(&layers, "agg.fuse"), low_dims)?;
        ops.push(elementwise("agg.fuse.relu", OpKind::Relu, agg * full_voxels));
    } else {
        if config.use_ga {
            push_ga(&mut ops, &layers, config, stage_voxels)?;
        }
        ops.push(elementwise(
            "agg.upsample",
            OpKind::Upsample,
            config.stage_channels[2] as u64 * full_voxels,
        ));
        push_conv(&mut ops, find_layer(&layers, "agg.direct"), low_dims)?;
        ops.push(elementwise(
            "agg.direct.relu",
            OpKind::Relu,
            agg * full_voxels,
        ));
    }

    push_conv(&mut ops, find_layer(&layers, "head.occ"), low_dims)?;
    if config.use_condition {
        ops.push(elementwise("head.softmax", OpKind::Softmax, 2 * full_voxels));
    }
    push_conv(&mut ops, find_layer(&layers, "head.sem"), low_dims)?;

    Ok(ops)
}

pub(crate) use conv_layers as layers_of;
