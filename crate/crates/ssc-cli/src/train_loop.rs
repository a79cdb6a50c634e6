//! Deterministic mini-batch training.
//!
//! Samples are visited in a fixed cyclic order; per-sample gradients may
//! be computed in parallel but are reduced in sample order, so runs are
//! bit-identical for any thread count.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use ssc_core::net::{backward, forward, init_params, NetworkConfig, NormState, ParameterSet};
use ssc_core::optim::{frustum_masked_labels, joint_loss, OptimState, SgdHyper};
use ssc_core::voxel::{LabelVolume, SceneSample, UNLABELED};
use ssc_core::Tensor;

use crate::config::TrainConfig;

#[derive(Debug, Clone, Copy)]
pub struct HistoryRow {
    pub iter: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_sem: f64,
    pub loss_occ: f64,
}

pub struct TrainOutcome {
    pub params: ParameterSet<f32>,
    pub norm: Option<NormState>,
    pub history: Vec<HistoryRow>,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iter,lr,loss_total,loss_sem,loss_occ\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.8},{:.8},{:.8},{:.8}\n",
            r.iter, r.lr, r.loss_total, r.loss_sem, r.loss_occ
        ));
    }
    out
}

struct Prepared {
    input: Tensor<f32>,
    labels: LabelVolume,
}

fn prepare(samples: &[SceneSample], num_classes: usize) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if let Some(&bad) = s
                .labels
                .labels()
                .iter()
                .find(|&&c| c != UNLABELED && c as usize > num_classes)
            {
                bail!(
                    "scene {i}: label {bad} exceeds num_classes {num_classes}"
                );
            }
            Ok(Prepared {
                input: s.tsdf.to_tensor::<f32>(),
                labels: frustum_masked_labels(&s.labels, &s.visibility)?,
            })
        })
        .collect()
}

/// Per-channel statistics of the raw (pre-normalization) conv outputs,
/// folded into the running state after each sample.
fn update_norm_stats(
    norm: &mut NormState,
    cache: &ssc_core::net::ActivationCache<f32>,
) -> Result<()> {
    let layers: Vec<String> = norm.iter().map(|(n, _, _)| n.to_string()).collect();
    for layer in layers {
        let raw = cache.get(&format!("{layer}.raw"))?;
        let c = raw.shape()[0];
        let spatial = raw.len() / c;
        let mut mean = vec![0.0f64; c];
        let mut var = vec![0.0f64; c];
        for ch in 0..c {
            let slice = &raw.data()[ch * spatial..(ch + 1) * spatial];
            let m: f64 = slice.iter().map(|&v| v as f64).sum::<f64>() / spatial as f64;
            let v: f64 = slice
                .iter()
                .map(|&v| (v as f64 - m) * (v as f64 - m))
                .sum::<f64>()
                / spatial as f64;
            mean[ch] = m;
            var[ch] = v;
        }
        norm.update(&layer, &mean, &var)?;
    }
    Ok(())
}

/// Runs the full schedule. `progress` sees every history row together
/// with the live parameters, so callers can evaluate at any cadence.
pub fn train(
    samples: &[SceneSample],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    mut progress: impl FnMut(&HistoryRow, &ParameterSet<f32>, Option<&NormState>),
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        bail!("training requires at least one sample");
    }
    net_cfg.validate()?;
    let prepared = prepare(samples, net_cfg.num_classes)?;
    let n = prepared.len();
    let batch = train_cfg.batch_size;
    let iters_per_epoch = n.div_ceil(batch);
    let max_iter = (train_cfg.epochs * iters_per_epoch) as u64;

    let mut params = init_params::<f32>(net_cfg, train_cfg.seed)?;
    let mut norm = if net_cfg.normalization {
        Some(NormState::new(net_cfg)?)
    } else {
        None
    };
    let mut opt = OptimState::new(
        &params,
        SgdHyper {
            lr0: train_cfg.lr0,
            momentum: train_cfg.momentum,
            weight_decay: train_cfg.weight_decay,
            max_iter,
        },
    );

    let mut history = Vec::with_capacity(max_iter as usize);
    for iter in 0..max_iter {
        let indices: Vec<usize> = (0..batch)
            .map(|k| ((iter as usize * batch) + k) % n)
            .collect();

        let step = |idx: usize,
                    norm: Option<&NormState>|
         -> Result<(ssc_core::net::BackwardOut<f32>, f64, f64, f64, Option<ssc_core::net::ActivationCache<f32>>)> {
            let p = &prepared[idx];
            let out = forward(&p.input, &params, net_cfg, norm, true)?;
            let cache = out.cache.context("training forward must cache")?;
            let loss = joint_loss(
                &out.occ_logits,
                &out.sem_logits,
                &p.labels,
                net_cfg.use_condition,
            )?;
            let grads = backward(&loss.grad_occ, &loss.grad_sem, &params, net_cfg, norm, &cache)?;
            let keep_cache = norm.is_some();
            Ok((
                grads,
                loss.total,
                loss.sem,
                loss.occ,
                keep_cache.then_some(cache),
            ))
        };

        // Parallel per-sample forward/backward; reduction in index order.
        let results: Vec<_> = if batch > 1 {
            indices
                .par_iter()
                .map(|&idx| step(idx, norm.as_ref()))
                .collect::<Result<_>>()?
        } else {
            indices
                .iter()
                .map(|&idx| step(idx, norm.as_ref()))
                .collect::<Result<_>>()?
        };

        let mut grads = params.zeros_like();
        let (mut total, mut sem, mut occ) = (0.0, 0.0, 0.0);
        for (g, t, s, o, cache) in results {
            grads.accumulate(&g.grads)?;
            total += t;
            sem += s;
            occ += o;
            if let (Some(norm), Some(cache)) = (norm.as_mut(), cache) {
                update_norm_stats(norm, &cache)?;
            }
        }
        let inv = 1.0 / batch as f64;
        grads.scale(inv);

        let lr = opt.step(&mut params, &grads)?;
        let row = HistoryRow {
            iter,
            lr,
            loss_total: total * inv,
            loss_sem: sem * inv,
            loss_occ: occ * inv,
        };
        progress(&row, &params, norm.as_ref());
        history.push(row);
    }

    Ok(TrainOutcome {
        params,
        norm,
        history,
    })
}
