//! Joint loss, the poly learning-rate schedule, and SGD with momentum.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::net::ParameterSet;
use crate::ops::cross_entropy_with_grad;
use crate::tensor::{Scalar, Tensor};
use crate::voxel::{binary_occupancy_labels, LabelVolume, VisibilityVolume, VoxelState, UNLABELED};

/// Joint loss value and the gradients on both logit volumes.
#[derive(Debug, Clone)]
pub struct JointLoss<S: Scalar> {
    pub total: f64,
    pub sem: f64,
    pub occ: f64,
    pub grad_occ: Tensor<S>,
    pub grad_sem: Tensor<S>,
}

/// Sum of the semantic cross entropy and the binary-occupancy cross
/// entropy, both masked by the unlabeled sentinel. With
/// `use_condition = false` only the semantic term applies and the
/// occupancy gradient is zero.
pub fn joint_loss<S: Scalar>(
    occ_logits: &Tensor<S>,
    sem_logits: &Tensor<S>,
    labels: &LabelVolume,
    use_condition: bool,
) -> Result<JointLoss<S>> {
    let ignore: Vec<bool> = labels.labels().iter().map(|&c| c == UNLABELED).collect();
    let sem = cross_entropy_with_grad(sem_logits, labels.labels(), &ignore)?;
    if use_condition {
        let binary = binary_occupancy_labels(labels);
        let occ = cross_entropy_with_grad(occ_logits, binary.labels(), &ignore)?;
        Ok(JointLoss {
            total: sem.loss + occ.loss,
            sem: sem.loss,
            occ: occ.loss,
            grad_occ: occ.grad_logits,
            grad_sem: sem.grad_logits,
        })
    } else {
        Ok(JointLoss {
            total: sem.loss,
            sem: sem.loss,
            occ: 0.0,
            grad_occ: Tensor::zeros(occ_logits.shape()),
            grad_sem: sem.grad_logits,
        })
    }
}

/// Replaces labels of out-of-frustum voxels with the unlabeled sentinel,
/// so they are excluded from both loss terms.
pub fn frustum_masked_labels(
    labels: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<LabelVolume> {
    labels.grid.check_same(&visibility.grid, "frustum_mask")?;
    let masked: Vec<u8> = labels
        .labels()
        .iter()
        .zip(visibility.states())
        .map(|(&c, &s)| {
            if s == VoxelState::OutsideFrustum {
                UNLABELED
            } else {
                c
            }
        })
        .collect();
    LabelVolume::new(labels.grid.clone(), masked)
}

/// `lr0 * (1 - iter/max_iter)^0.9`; strictly decreasing from `lr0` to 0.
pub fn poly_lr(iter: u64, max_iter: u64, lr0: f64) -> Result<f64> {
    if max_iter == 0 || iter > max_iter {
        return Err(CoreError::InvalidConfig(format!(
            "poly_lr requires 0 <= iter <= max_iter, got {iter}/{max_iter}"
        )));
    }
    if iter == 0 {
        return Ok(lr0);
    }
    if iter == max_iter {
        return Ok(0.0);
    }
    let frac = 1.0 - iter as f64 / max_iter as f64;
    Ok(lr0 * fmath::powf(frac, 0.9))
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_iter: u64,
}

impl Default for SgdHyper {
    fn default() -> Self {
        SgdHyper {
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            max_iter: 1,
        }
    }
}

/// Per-parameter velocities plus the iteration counter.
#[derive(Debug, Clone)]
pub struct OptimState<S: Scalar> {
    pub velocity: ParameterSet<S>,
    pub iteration: u64,
    pub hyper: SgdHyper,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(params: &ParameterSet<S>, hyper: SgdHyper) -> Self {
        OptimState {
            velocity: params.zeros_like(),
            iteration: 0,
            hyper,
        }
    }

    /// One scheduled step: applies the poly learning rate at the current
    /// iteration, then advances the counter.
    pub fn step(&mut self, params: &mut ParameterSet<S>, grads: &ParameterSet<S>) -> Result<f64> {
        let lr = poly_lr(self.iteration, self.hyper.max_iter, self.hyper.lr0)?;
        sgd_step(
            params,
            grads,
            &mut self.velocity,
            lr,
            self.hyper.momentum,
            self.hyper.weight_decay,
        )?;
        self.iteration += 1;
        Ok(lr)
    }
}

/// Momentum SGD with coupled L2 weight decay:
/// `g' = g + wd * p; v = momentum * v + g'; p = p - lr * v`.
pub fn sgd_step<S: Scalar>(
    params: &mut ParameterSet<S>,
    grads: &ParameterSet<S>,
    velocity: &mut ParameterSet<S>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    for ((pn, p), ((gn, g), (vn, v))) in params
        .iter_mut()
        .zip(grads.iter().zip(velocity.iter_mut()))
    {
        if pn != gn || pn != vn {
            return Err(CoreError::MissingEntry(alloc::string::String::from(pn)));
        }
        p.check_same_shape(g, "sgd_step")?;
        for ((pv, &gv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(v.data_mut().iter_mut())
        {
            let decayed = gv.to_f64() + weight_decay * pv.to_f64();
            let vel = momentum * vv.to_f64() + decayed;
            *vv = S::from_f64(vel);
            *pv = S::from_f64(pv.to_f64() - lr * vel);
        }
    }
    Ok(())
}
